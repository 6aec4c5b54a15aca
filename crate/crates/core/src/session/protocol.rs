use serde::{Deserialize, Serialize};

use super::AgentSettings;
use crate::belief::ReplanCause;
use crate::dialogue::Utterance;
use crate::planning::ActionLabel;

pub const PROTOCOL_VERSION: u32 = 1;
pub const LOG_FORMAT_VERSION: u32 = 1;

/// What a client may do inside a running session.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum ClientEvent {
    MoveTo { landmark: String },
    /// Picks up a bike at the current landmark; the lowest-numbered one when
    /// no bike is named.
    Pickup {
        #[serde(default)]
        bike: Option<String>,
    },
    Heartbeat,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientMessage {
    pub seq: u64,
    #[serde(flatten)]
    pub event: ClientEvent,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MapState {
    pub position: String,
    pub collected: Vec<String>,
    pub steps: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum ServerMessage {
    Utterance(Utterance),
    MapState(MapState),
    SessionEnd { reason: String },
    /// A well-formed event the rules do not allow. Nothing changed.
    Rejected { reason: String },
    /// A message that could not be processed at all. Nothing changed.
    Error { message: String },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServerEnvelope {
    pub seq: u64,
    pub timestamp_ms: u64,
    #[serde(flatten)]
    pub message: ServerMessage,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionStart {
    pub session: String,
    pub map_name: String,
    /// The map document, when the log should stand on its own.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub map: Option<String>,
    pub settings: AgentSettings,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub templates: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SensingRecord {
    pub bike: String,
    pub landmark: String,
    pub present: bool,
}

/// Payload of one log line.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "kebab-case")]
pub enum LogEvent {
    SessionStart(SessionStart),
    /// A client event as received, before validation.
    UserEvent(ClientEvent),
    Accepted { action: ActionLabel, complied: bool },
    Rejected { reason: String },
    Timer { timer: u8 },
    Utterance {
        #[serde(flatten)]
        utterance: Utterance,
        /// Size of the similar set of an instructed move.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        similars: Option<usize>,
    },
    Sensing(SensingRecord),
    Replan { cause: ReplanCause },
    SessionEnd { reason: String },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogRecord {
    pub timestamp_ms: u64,
    #[serde(flatten)]
    pub event: LogEvent,
}

#[derive(Debug, thiserror::Error)]
#[error("log line {line}: {message}")]
pub struct LogParseError {
    pub line: usize,
    pub message: String,
}

/// One JSON object per line.
pub fn write_log(records: &[LogRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("log records serialize"));
        out.push('\n');
    }
    out
}

pub fn parse_log(text: &str) -> Result<Vec<LogRecord>, LogParseError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| LogParseError { line: i + 1, message: e.to_string() }))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dialogue::{AgentKind, TargetKind, UtteranceKind};

    #[test]
    fn log_lines_have_timestamp_kind_payload() {
        let rec = LogRecord { timestamp_ms: 2000, event: LogEvent::Timer { timer: 1 } };
        let line = serde_json::to_string(&rec).unwrap();
        assert_eq!(line, r#"{"timestamp_ms":2000,"kind":"timer","payload":{"timer":1}}"#);
    }

    #[test]
    fn log_round_trips() {
        let records = vec![
            LogRecord {
                timestamp_ms: 0,
                event: LogEvent::SessionStart(SessionStart {
                    session: "s1".into(),
                    map_name: "fig1".into(),
                    map: None,
                    settings: AgentSettings::new(AgentKind::Responsive),
                    templates: None,
                }),
            },
            LogRecord {
                timestamp_ms: 0,
                event: LogEvent::Utterance {
                    utterance: Utterance {
                        kind: UtteranceKind::PreTarget,
                        text: "Next is the Western bike.".into(),
                        subject: Some("bike1".into()),
                        target: Some(TargetKind::KnowledgeGain),
                    },
                    similars: None,
                },
            },
            LogRecord { timestamp_ms: 10, event: LogEvent::UserEvent(ClientEvent::Pickup { bike: None }) },
            LogRecord {
                timestamp_ms: 10,
                event: LogEvent::Accepted { action: "move(X,M)".parse().unwrap(), complied: true },
            },
        ];
        let text = write_log(&records);
        assert_eq!(parse_log(&text).unwrap(), records);
        assert!(parse_log("{\"timestamp_ms\":1}\n").is_err());
    }

    #[test]
    fn client_messages_parse() {
        let m: ClientMessage = serde_json::from_str(r#"{"seq":3,"type":"move-to","landmark":"Y"}"#).unwrap();
        assert_eq!(m.event, ClientEvent::MoveTo { landmark: "Y".into() });
        let m: ClientMessage = serde_json::from_str(r#"{"seq":4,"type":"pickup"}"#).unwrap();
        assert_eq!(m.event, ClientEvent::Pickup { bike: None });
        assert!(serde_json::from_str::<ClientMessage>(r#"{"seq":4,"type":"fly"}"#).is_err());
    }
}
