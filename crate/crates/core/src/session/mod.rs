//! Live sessions: a sans-io state machine, its wire protocol and log,
//! replay of logs, and an HTTP/WebSocket service around it.

mod engine;
mod profile;
mod protocol;
mod replay;
pub mod service;

pub use engine::Session;
pub use profile::{AgentProfile, AgentSettings, GuidanceSpec, TimerConfig, WindowSpec};
pub use protocol::{
    parse_log, write_log, ClientEvent, ClientMessage, LogEvent, LogParseError, LogRecord, MapState, SensingRecord,
    ServerEnvelope, ServerMessage, SessionStart, LOG_FORMAT_VERSION, PROTOCOL_VERSION,
};
pub use replay::{replay, ReplayError, ReplayReport, UtteranceDiff};
