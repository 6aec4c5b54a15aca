use std::collections::BTreeMap;

/// Every template key and the placeholders it may use.
pub const TEMPLATE_KEYS: [(&str, &[&str]); 15] = [
    ("instruction.move", &["type", "color"]),
    ("instruction.move_back", &["type", "color"]),
    ("instruction.pickup", &["bike"]),
    ("elaboration", &["type", "color"]),
    ("target.bike", &["bike"]),
    ("target.base", &[]),
    ("pretarget.bike", &["bike"]),
    ("pretarget.base", &[]),
    ("inefficiency.responsive", &[]),
    ("inefficiency.predictive", &[]),
    ("initiative", &[]),
    ("ack.pickup", &["bike"]),
    ("ack.wrong_way", &[]),
    ("ack.initiative", &[]),
    ("ack.done", &[]),
];

pub const DEFAULT_TEMPLATES: &str = include_str!("templates.txt");

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TemplateError {
    #[error("line {0}: expected `key = format`")]
    Syntax(usize),
    #[error("line {line}: unknown template key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: `{key}` defined twice")]
    Duplicate { line: usize, key: String },
    #[error("template `{0}` is missing")]
    Missing(String),
    #[error("template `{key}` uses placeholder {{{placeholder}}} which it cannot fill")]
    Placeholder { key: String, placeholder: String },
    #[error("template `{0}` has an unbalanced brace")]
    Brace(String),
}

/// Validated utterance wording.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Templates {
    formats: BTreeMap<&'static str, String>,
}

impl Default for Templates {
    fn default() -> Self {
        Templates::parse(DEFAULT_TEMPLATES).expect("built-in templates are valid")
    }
}

fn placeholders(format: &str) -> Option<Vec<&str>> {
    let mut out = Vec::new();
    let mut rest = format;
    while let Some(open) = rest.find(['{', '}']) {
        if rest.as_bytes()[open] == b'}' {
            return None;
        }
        let close = rest[open..].find('}')? + open;
        let name = &rest[open + 1..close];
        if name.contains('{') {
            return None;
        }
        out.push(name);
        rest = &rest[close + 1..];
    }
    Some(out)
}

impl Templates {
    pub fn parse(text: &str) -> Result<Templates, TemplateError> {
        let mut formats = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, format) = line.split_once('=').ok_or(TemplateError::Syntax(i + 1))?;
            let key = key.trim();
            let Some(&(known, allowed)) = TEMPLATE_KEYS.iter().find(|(k, _)| *k == key) else {
                return Err(TemplateError::UnknownKey { line: i + 1, key: key.into() });
            };
            let format = format.trim().to_string();
            let names = placeholders(&format).ok_or_else(|| TemplateError::Brace(key.into()))?;
            if let Some(bad) = names.iter().find(|n| !allowed.contains(n)) {
                return Err(TemplateError::Placeholder { key: key.into(), placeholder: bad.to_string() });
            }
            if formats.insert(known, format).is_some() {
                return Err(TemplateError::Duplicate { line: i + 1, key: key.into() });
            }
        }
        if let Some((missing, _)) = TEMPLATE_KEYS.iter().find(|(k, _)| !formats.contains_key(k)) {
            return Err(TemplateError::Missing(missing.to_string()));
        }
        Ok(Templates { formats })
    }

    /// Fills `key` with `values`. Unknown keys are a programming error.
    pub fn render(&self, key: &str, values: &[(&str, &str)]) -> String {
        let mut out = self.formats.get(key).unwrap_or_else(|| panic!("no template `{key}`")).clone();
        for (name, value) in values {
            out = out.replace(&format!("{{{name}}}"), value);
        }
        out
    }

    /// The file form, which parses back to the same templates.
    pub fn to_text(&self) -> String {
        TEMPLATE_KEYS.iter().map(|(k, _)| format!("{k} = {}\n", self.formats[k])).collect()
    }
}
