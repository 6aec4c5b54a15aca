//! What each agent says over one session, driven in virtual time: the user
//! waits out the follow-up timer before every step.

use std::sync::Arc;

use mapguide::belief::compliant;
use mapguide::dialogue::{AgentKind, Templates};
use mapguide::domain::{bundled, Act, TaskModel};
use mapguide::planning::Cost;
use mapguide::session::{AgentProfile, AgentSettings, ClientEvent, ClientMessage, ServerEnvelope, ServerMessage, Session};

fn show(out: &[ServerEnvelope]) {
    for m in out {
        if let ServerMessage::Utterance(u) = &m.message {
            println!("  {:>6} ms  {:<20} {}", m.timestamp_ms, format!("{:?}", u.kind), u.text);
        }
    }
}

fn main() {
    let task = Arc::new(TaskModel::compile(&bundled::fig3()));
    for agent in [AgentKind::Responsive, AgentKind::Predictive { delta: Cost::units(1) }] {
        println!("{}", agent.name());
        let profile = Arc::new(AgentProfile::new(task.clone(), AgentSettings::new(agent), Arc::new(Templates::default())).unwrap());
        let (mut s, out) = Session::start("demo", profile, None, 0).unwrap();
        show(&out);
        let mut seq = 0;
        while !s.ended() {
            let deadline = s.deadline().unwrap();
            show(&s.tick(deadline));
            let event = match compliant(s.execution()) {
                Act::Move { to, .. } => ClientEvent::MoveTo { landmark: task.landmark_id(to).into() },
                _ => ClientEvent::Pickup { bike: None },
            };
            seq += 1;
            show(&s.handle(ClientMessage { seq, event }, deadline + 500));
        }
    }
}
