use std::sync::Arc;

use super::protocol::{
    ClientEvent, ClientMessage, LogEvent, LogRecord, MapState, SensingRecord, ServerEnvelope, ServerMessage,
    SessionStart,
};
use super::AgentProfile;
use crate::ambiguity::similar_moves;
use crate::belief::{ExecError, Execution, Guidance, ReplanCause};
use crate::dialogue::{DialogueAgent, Templates, Utterance, UtteranceKind};
use crate::domain::Act;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Timer {
    deadline: u64,
    which: u8,
}

/// A live run of one agent with one user. Pure state machine: time comes in
/// as an argument and everything that happens is returned and logged.
pub struct Session {
    id: String,
    profile: Arc<AgentProfile>,
    agent: DialogueAgent,
    exec: Execution,
    timer: Option<Timer>,
    log: Vec<LogRecord>,
    outbox: Vec<ServerEnvelope>,
    server_seq: u64,
    client_seq: u64,
    offered: Option<Act>,
    ended: bool,
    now: u64,
}

impl Session {
    /// Starts at the base, says the first instruction and arms the timer.
    /// `map_document` is copied into the log so it can be replayed alone.
    pub fn start(
        id: &str,
        profile: Arc<AgentProfile>,
        map_document: Option<String>,
        now: u64,
    ) -> Result<(Session, Vec<ServerEnvelope>), ExecError> {
        let guidance = match &profile.policy {
            Some(p) => Guidance::Policy(p.clone()),
            None => Guidance::Planner,
        };
        let (exec, observations) = Execution::start(profile.planner.clone(), guidance)?;
        let agent = DialogueAgent::new(
            profile.settings.agent,
            profile.templates.clone(),
            profile.analyzer.clone(),
            profile.settings.window.into(),
        );
        // custom wording goes into the log so replay can reproduce it
        let templates = (*profile.templates != Templates::default()).then(|| profile.templates.to_text());
        let mut s = Session {
            id: id.to_string(),
            agent,
            exec,
            timer: None,
            log: Vec::new(),
            outbox: Vec::new(),
            server_seq: 0,
            client_seq: 0,
            offered: None,
            ended: false,
            now,
            profile: profile.clone(),
        };
        s.record(LogEvent::SessionStart(SessionStart {
            session: id.to_string(),
            map_name: profile.task.map.name.clone(),
            map: map_document,
            settings: profile.settings.clone(),
            templates,
        }));
        s.log_observations(&observations);
        if s.exec.done() {
            s.finish();
        } else {
            s.record(LogEvent::Replan { cause: ReplanCause::Initial });
            s.send(ServerMessage::MapState(s.map_state()));
            s.dialogue_action_1();
        }
        let out = std::mem::take(&mut s.outbox);
        Ok((s, out))
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn profile(&self) -> &Arc<AgentProfile> {
        &self.profile
    }

    pub fn execution(&self) -> &Execution {
        &self.exec
    }

    pub fn log(&self) -> &[LogRecord] {
        &self.log
    }

    pub fn ended(&self) -> bool {
        self.ended
    }

    /// When the armed timer fires, if one is armed.
    pub fn deadline(&self) -> Option<u64> {
        self.timer.map(|t| t.deadline)
    }

    /// The move an initiative offer for the current step allows.
    pub fn offered_move(&self) -> Option<Act> {
        self.offered
    }

    pub fn last_client_seq(&self) -> u64 {
        self.client_seq
    }

    fn record(&mut self, event: LogEvent) {
        self.log.push(LogRecord { timestamp_ms: self.now, event });
    }

    fn send(&mut self, message: ServerMessage) {
        self.server_seq += 1;
        self.outbox.push(ServerEnvelope { seq: self.server_seq, timestamp_ms: self.now, message });
    }

    fn say(&mut self, u: Utterance, similars: Option<usize>) {
        self.record(LogEvent::Utterance { utterance: u.clone(), similars });
        self.send(ServerMessage::Utterance(u));
    }

    fn map_state(&self) -> MapState {
        let task = self.exec.task();
        let b = self.exec.belief();
        MapState {
            position: task.landmark_id(b.position).to_string(),
            collected: b.collected.iter().map(|&i| task.bike_id(i).to_string()).collect(),
            steps: self.exec.ctx.history.len(),
        }
    }

    fn log_observations(&mut self, observations: &[crate::belief::Observation]) {
        for o in observations {
            let task = self.exec.task().clone();
            self.record(LogEvent::Sensing(SensingRecord {
                bike: task.bike_id(o.bike).into(),
                landmark: task.landmark_id(o.landmark).into(),
                present: o.present,
            }));
        }
    }

    fn dialogue_action_1(&mut self) {
        self.offered = None;
        let a0 = self.exec.next();
        for u in self.agent.action1(&self.exec.ctx) {
            let similars = match (u.kind, a0) {
                (UtteranceKind::Instruction, Some(a)) => Some(similar_moves(self.exec.task(), a).len()),
                _ => None,
            };
            self.say(u, similars);
        }
        self.timer = Some(Timer { deadline: self.now + self.profile.settings.timers.first_ms, which: 1 });
    }

    fn fire(&mut self, timer: Timer) {
        self.now = timer.deadline;
        self.record(LogEvent::Timer { timer: timer.which });
        let task = self.exec.task().clone();
        for u in self.agent.action2(&self.exec.ctx) {
            if u.kind == UtteranceKind::InitiativeOffer {
                self.offered = u.subject.as_deref().and_then(|s| s.parse().ok()).and_then(|l| task.classify(&l));
            }
            self.say(u, None);
        }
        let t = self.profile.settings.timers;
        self.timer = t.repeat.then(|| Timer { deadline: timer.deadline + t.repeat_ms, which: 2 });
    }

    /// Fires every timer due at `now`.
    pub fn tick(&mut self, now: u64) -> Vec<ServerEnvelope> {
        self.fire_due(now, true);
        self.now = self.now.max(now);
        std::mem::take(&mut self.outbox)
    }

    fn fire_due(&mut self, now: u64, inclusive: bool) {
        while let Some(t) = self.timer {
            if t.deadline > now || (!inclusive && t.deadline == now) || self.ended {
                break;
            }
            self.fire(t);
        }
    }

    fn finish(&mut self) {
        let done = self.agent.acknowledge_done();
        self.say(done, None);
        self.timer = None;
        self.ended = true;
        self.record(LogEvent::SessionEnd { reason: "goal".into() });
        self.send(ServerMessage::SessionEnd { reason: "goal".into() });
    }

    fn reject(&mut self, reason: String) {
        self.record(LogEvent::Rejected { reason: reason.clone() });
        self.send(ServerMessage::Rejected { reason });
    }

    /// Processes one client message. Timers due strictly before `now` fire
    /// first; a user event at exactly a deadline beats the timer.
    pub fn handle(&mut self, msg: ClientMessage, now: u64) -> Vec<ServerEnvelope> {
        self.fire_due(now, false);
        self.now = self.now.max(now);
        if msg.seq <= self.client_seq {
            self.send(ServerMessage::Error {
                message: format!("sequence number {} is not above {}", msg.seq, self.client_seq),
            });
            return std::mem::take(&mut self.outbox);
        }
        self.client_seq = msg.seq;
        if matches!(msg.event, ClientEvent::Heartbeat) {
            return std::mem::take(&mut self.outbox);
        }
        self.record(LogEvent::UserEvent(msg.event.clone()));
        if self.ended {
            self.reject("the session is over".into());
            return std::mem::take(&mut self.outbox);
        }
        if let Err(reason) = self.user_event(&msg.event) {
            self.reject(reason);
        }
        std::mem::take(&mut self.outbox)
    }

    fn resolve(&self, event: &ClientEvent) -> Result<Act, String> {
        let task = self.exec.task();
        let here = self.exec.belief().position;
        match event {
            ClientEvent::MoveTo { landmark } => {
                let to = task.landmark(landmark).ok_or_else(|| format!("unknown landmark `{landmark}`"))?;
                if !task.adjacent(here, to) {
                    return Err(format!(
                        "no road from {} to {landmark}; you can go to {}",
                        task.landmark_id(here),
                        task.adjacency[here].iter().map(|&n| task.landmark_id(n)).collect::<Vec<_>>().join(", ")
                    ));
                }
                Ok(Act::Move { from: here, to })
            }
            ClientEvent::Pickup { bike } => {
                let options = self.exec.options();
                let found = options.iter().copied().find(|a| match (a, bike) {
                    (Act::Pickup { bike: b, .. }, Some(id)) => task.bike_id(*b) == id,
                    (Act::Pickup { .. }, None) => true,
                    _ => false,
                });
                found.ok_or_else(|| "there is no bike to pick up here".to_string())
            }
            ClientEvent::Heartbeat => unreachable!("handled before"),
        }
    }

    fn user_event(&mut self, event: &ClientEvent) -> Result<(), String> {
        let act = self.resolve(event)?;
        let instructed = self.exec.next();
        let initiative = self.offered == Some(act);
        let report = self.exec.step(act).map_err(|e| e.to_string())?;
        self.timer = None;
        let task = self.exec.task().clone();
        self.record(LogEvent::Accepted { action: task.label(act), complied: report.complied });
        self.log_observations(&report.observations);
        if let Some(cause) = report.replan {
            self.record(LogEvent::Replan { cause });
        }
        self.send(ServerMessage::MapState(self.map_state()));
        if let Some(b) = report.picked {
            let ack = self.agent.acknowledge_pickup(b);
            self.say(ack, None);
        } else if initiative {
            let ack = self.agent.acknowledge_initiative();
            self.say(ack, None);
        } else if !report.complied && matches!(act, Act::Move { .. }) && instructed.is_some() {
            let ack = self.agent.acknowledge_wrong_way();
            self.say(ack, None);
        }
        if self.exec.done() {
            self.finish();
        } else {
            self.dialogue_action_1();
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dialogue::AgentKind;
    use crate::domain::{bundled, MapSpec, TaskModel};
    use crate::planning::Cost;
    use crate::session::{AgentSettings, LogEvent};

    fn session(map: MapSpec, agent: AgentKind) -> (Session, Vec<ServerEnvelope>) {
        let task = Arc::new(TaskModel::compile(&map));
        let profile = AgentProfile::new(task, AgentSettings::new(agent), Arc::new(Templates::default())).unwrap();
        Session::start("s", Arc::new(profile), None, 0).unwrap()
    }

    fn texts(out: &[ServerEnvelope]) -> Vec<String> {
        out.iter()
            .filter_map(|e| match &e.message {
                ServerMessage::Utterance(u) => Some(u.text.clone()),
                _ => None,
            })
            .collect()
    }

    fn kinds(out: &[ServerEnvelope]) -> Vec<UtteranceKind> {
        out.iter()
            .filter_map(|e| match &e.message {
                ServerMessage::Utterance(u) => Some(u.kind),
                _ => None,
            })
            .collect()
    }

    fn msg(seq: u64, event: ClientEvent) -> ClientMessage {
        ClientMessage { seq, event }
    }

    #[test]
    fn responsive_opens_with_an_instruction() {
        let (_, out) = session(bundled::fig2(), AgentKind::Responsive);
        assert_eq!(kinds(&out), vec![UtteranceKind::Instruction]);
    }

    #[test]
    fn predictive_opens_with_a_target() {
        let (_, out) = session(bundled::fig1(), AgentKind::Predictive { delta: Cost::units(1) });
        assert_eq!(kinds(&out), vec![UtteranceKind::PreTarget, UtteranceKind::Instruction]);
        assert_eq!(texts(&out)[0], "Next is the Western bike.");
    }

    #[test]
    fn inaction_elaborates_then_repeats() {
        let (mut s, _) = session(bundled::fig2(), AgentKind::Responsive);
        assert!(s.tick(1999).is_empty());
        let at2 = s.tick(2000);
        assert_eq!(kinds(&at2), vec![UtteranceKind::Elaboration]);
        assert_eq!(at2[0].timestamp_ms, 2000);
        assert!(s.tick(6999).is_empty());
        assert_eq!(kinds(&s.tick(7000)), vec![UtteranceKind::Elaboration]);
        assert_eq!(s.deadline(), Some(12000));
    }

    #[test]
    fn acting_at_the_deadline_beats_the_timer() {
        let (mut s, _) = session(bundled::fig2(), AgentKind::Responsive);
        let a0 = s.execution().next().unwrap();
        let Act::Move { to, .. } = a0 else { panic!() };
        let landmark = s.execution().task().landmark_id(to).to_string();
        let out = s.handle(msg(1, ClientEvent::MoveTo { landmark }), 2000);
        assert!(!kinds(&out).contains(&UtteranceKind::Elaboration));
        assert!(!s.log().iter().any(|r| matches!(r.event, LogEvent::Timer { .. })));
    }

    #[test]
    fn late_action_sees_the_elaboration_first() {
        let (mut s, _) = session(bundled::fig2(), AgentKind::Responsive);
        let out = s.handle(msg(1, ClientEvent::Heartbeat), 2500);
        assert_eq!(kinds(&out), vec![UtteranceKind::Elaboration]);
        assert_eq!(out[0].timestamp_ms, 2000);
    }

    #[test]
    fn non_adjacent_move_is_rejected() {
        let (mut s, _) = session(bundled::fig3(), AgentKind::Responsive);
        let before = s.execution().ctx.history.len();
        let out = s.handle(msg(1, ClientEvent::MoveTo { landmark: "D".into() }), 500);
        assert!(matches!(&out[0].message, ServerMessage::Rejected { reason } if reason.contains("no road")));
        assert_eq!(s.execution().ctx.history.len(), before);
        let out = s.handle(msg(2, ClientEvent::Pickup { bike: None }), 600);
        assert!(matches!(&out[0].message, ServerMessage::Rejected { .. }));
    }

    #[test]
    fn stale_sequence_numbers_are_errors() {
        let (mut s, _) = session(bundled::fig3(), AgentKind::Responsive);
        s.handle(msg(5, ClientEvent::Heartbeat), 10);
        let out = s.handle(msg(5, ClientEvent::Heartbeat), 20);
        assert!(matches!(out[0].message, ServerMessage::Error { .. }));
    }

    #[test]
    fn wrong_way_is_acknowledged_and_repaired() {
        let (mut s, _) = session(bundled::fig3(), AgentKind::Responsive);
        let task = s.execution().task().clone();
        let a0 = s.execution().next().unwrap();
        let wrong = s.execution().options().into_iter().find(|&a| a != a0).unwrap();
        let Act::Move { to, .. } = wrong else { panic!() };
        let out = s.handle(msg(1, ClientEvent::MoveTo { landmark: task.landmark_id(to).into() }), 800);
        let t = texts(&out);
        assert_eq!(t[0], "That's not where I meant. Let me find another way.");
        assert!(s.log().iter().any(|r| matches!(r.event, LogEvent::Replan { cause: ReplanCause::Recovery })));
    }

    #[test]
    fn full_session_ends_with_session_end() {
        let (mut s, _) = session(bundled::fig1(), AgentKind::Responsive);
        let task = s.execution().task().clone();
        let mut seq = 0;
        let mut now = 0;
        while !s.ended() {
            seq += 1;
            now += 1000;
            let ev = match s.execution().next().unwrap() {
                Act::Move { to, .. } => ClientEvent::MoveTo { landmark: task.landmark_id(to).into() },
                Act::Pickup { bike, .. } => ClientEvent::Pickup { bike: Some(task.bike_id(bike).into()) },
                Act::Find { .. } => unreachable!(),
            };
            s.handle(msg(seq, ev), now);
        }
        assert!(matches!(s.log().last().unwrap().event, LogEvent::SessionEnd { .. }));
        let ts: Vec<u64> = s.log().iter().map(|r| r.timestamp_ms).collect();
        assert!(ts.windows(2).all(|w| w[0] <= w[1]));
    }
}
