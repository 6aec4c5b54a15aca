use std::sync::Arc;

use super::{AgentProfile, ClientMessage, LogEvent, LogRecord, Session};
use crate::belief::{ExecError, PolicyError};
use crate::dialogue::{TemplateError, Templates, UtteranceKind};
use crate::domain::{MapError, MapSpec, TaskModel};

#[derive(Debug, thiserror::Error)]
pub enum ReplayError {
    #[error("the log does not begin with a session-start record")]
    NoStart,
    #[error("map `{0}` is neither embedded in the log nor available")]
    UnknownMap(String),
    #[error("embedded map: {0}")]
    Map(#[from] MapError),
    #[error("embedded templates: {0}")]
    Templates(#[from] TemplateError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("session could not start: {0}")]
    Start(#[from] ExecError),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UtteranceDiff {
    /// Position among the utterances.
    pub index: usize,
    pub logged: Option<(u64, UtteranceKind, String)>,
    pub replayed: Option<(u64, UtteranceKind, String)>,
}

#[derive(Debug)]
pub struct ReplayReport {
    pub utterances: usize,
    pub diffs: Vec<UtteranceDiff>,
    /// Whether every record, not only the utterances, came out the same.
    pub identical: bool,
    pub log: Vec<LogRecord>,
}

impl ReplayReport {
    pub fn matches(&self) -> bool {
        self.diffs.is_empty()
    }
}

fn utterances(log: &[LogRecord]) -> Vec<(u64, UtteranceKind, String)> {
    log.iter()
        .filter_map(|r| match &r.event {
            LogEvent::Utterance { utterance, .. } => Some((r.timestamp_ms, utterance.kind, utterance.text.clone())),
            _ => None,
        })
        .collect()
}

/// Re-runs a logged session: user events are fed back at their timestamps and
/// timers are ticked at theirs. `maps` is asked for the map when the log does
/// not carry one.
pub fn replay(log: &[LogRecord], maps: impl Fn(&str) -> Option<MapSpec>) -> Result<ReplayReport, ReplayError> {
    let Some(LogRecord { timestamp_ms: t0, event: LogEvent::SessionStart(start) }) = log.first() else {
        return Err(ReplayError::NoStart);
    };
    let map = match &start.map {
        Some(doc) => MapSpec::from_toml(doc)?,
        None => maps(&start.map_name).ok_or_else(|| ReplayError::UnknownMap(start.map_name.clone()))?,
    };
    let templates = match &start.templates {
        Some(text) => Templates::parse(text)?,
        None => Templates::default(),
    };
    let task = Arc::new(TaskModel::compile(&map));
    let profile = Arc::new(AgentProfile::new(task, start.settings.clone(), Arc::new(templates))?);
    let (mut session, _) = Session::start(&start.session, profile, start.map.clone(), *t0)?;
    let mut seq = 0;
    for record in &log[1..] {
        match &record.event {
            LogEvent::UserEvent(event) => {
                seq += 1;
                session.handle(ClientMessage { seq, event: event.clone() }, record.timestamp_ms);
            }
            LogEvent::Timer { .. } => {
                session.tick(record.timestamp_ms);
            }
            _ => {}
        }
    }
    let before = utterances(log);
    let after = utterances(session.log());
    let diffs = (0..before.len().max(after.len()))
        .filter(|&i| before.get(i) != after.get(i))
        .map(|i| UtteranceDiff { index: i, logged: before.get(i).cloned(), replayed: after.get(i).cloned() })
        .collect();
    Ok(ReplayReport { utterances: before.len(), diffs, identical: session.log() == log, log: session.log().to_vec() })
}
