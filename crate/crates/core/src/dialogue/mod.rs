//! Turning plans into instructions and explanations: targets, templates,
//! local inefficiency and the two agents.

mod inefficiency;
mod templates;

use std::collections::BTreeSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::ambiguity::similar_moves;
use crate::belief::{BeliefState, ExecutionContext};
use crate::domain::{Act, TaskModel};
use crate::planning::Cost;

pub use inefficiency::{InefficiencyAnalyzer, InefficiencyConfig, Witness};
pub use templates::{TemplateError, Templates, DEFAULT_TEMPLATES, TEMPLATE_KEYS};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum UtteranceKind {
    Instruction,
    Elaboration,
    PreTarget,
    TargetJustification,
    PositionTarget,
    InefficiencyJustification,
    InitiativeOffer,
    Acknowledgement,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetKind {
    /// Visiting the step's landmark narrows down where some bike can be.
    KnowledgeGain,
    /// The step achieves a goal fact that the rest of the plan keeps.
    SubgoalAchievement,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetSubject {
    Bike(usize),
    Base,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct TargetDescriptor {
    pub kind: TargetKind,
    pub subject: TargetSubject,
    /// Index into the intention of the achieving step.
    pub step: usize,
}

impl TargetDescriptor {
    pub fn identity(&self) -> (TargetKind, TargetSubject) {
        (self.kind, self.subject)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utterance {
    pub kind: UtteranceKind,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subject: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<TargetKind>,
}

/// Earliest step of `intention` that either visits a candidate location of a
/// bike still in doubt or achieves a goal fact for good.
pub fn extract_target(task: &TaskModel, intention: &[Act], belief: &BeliefState) -> Option<TargetDescriptor> {
    let mut cands: Vec<BTreeSet<usize>> = belief.candidates.clone();
    let last_move = intention.iter().rposition(|a| matches!(a, Act::Move { .. }));
    for (step, &act) in intention.iter().enumerate() {
        match act {
            Act::Move { to, .. } => {
                let doubtful: Vec<usize> = (0..task.bike_count())
                    .filter(|b| !belief.collected.contains(b) && cands[*b].len() > 1 && cands[*b].contains(&to))
                    .collect();
                if let Some(&first) = doubtful.first() {
                    let assumed = intention[step..].iter().find_map(|a| match *a {
                        Act::Find { bike, at } if at == to && doubtful.contains(&bike) => Some(bike),
                        _ => None,
                    });
                    let bike = assumed.unwrap_or(first);
                    return Some(TargetDescriptor { kind: TargetKind::KnowledgeGain, subject: TargetSubject::Bike(bike), step });
                }
                if to == task.base && Some(step) == last_move {
                    return Some(TargetDescriptor {
                        kind: TargetKind::SubgoalAchievement,
                        subject: TargetSubject::Base,
                        step,
                    });
                }
            }
            Act::Find { bike, at } => cands[bike] = BTreeSet::from([at]),
            Act::Pickup { bike, .. } => {
                return Some(TargetDescriptor {
                    kind: TargetKind::SubgoalAchievement,
                    subject: TargetSubject::Bike(bike),
                    step,
                })
            }
        }
    }
    None
}

/// The move an initiative switch would allow: an applicable move other than
/// the instructed one, to a landmark holding a bike the user can see from
/// here and the agent has not located.
pub fn ku_shortcut(task: &TaskModel, belief: &BeliefState, a0: Act) -> Option<Act> {
    let here = belief.position;
    let dest = match a0 {
        Act::Move { to, .. } => Some(to),
        _ => None,
    };
    task.adjacency[here].iter().find_map(|&n| {
        if Some(n) == dest {
            return None;
        }
        let seen = task.visible[here]
            .iter()
            .any(|&b| task.truth[b] == n && !belief.collected.contains(&b) && belief.is_unknown(b));
        seen.then_some(Act::Move { from: here, to: n })
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum AgentKind {
    /// Plans under declared costs and explains only when the user hesitates.
    Responsive,
    /// Plans around ambiguous instructions, announces targets and offers the
    /// initiative.
    Predictive { delta: Cost },
}

impl AgentKind {
    pub fn name(&self) -> String {
        match self {
            AgentKind::Responsive => "responsive".into(),
            AgentKind::Predictive { delta } => format!("predictive(delta={delta})"),
        }
    }
}

/// One agent's utterance generator. Predictive agents remember the last
/// target they talked about, so each session needs its own instance.
pub struct DialogueAgent {
    task: Arc<TaskModel>,
    kind: AgentKind,
    templates: Arc<Templates>,
    analyzer: Arc<InefficiencyAnalyzer>,
    inefficiency: InefficiencyConfig,
    last_target: Option<(TargetKind, TargetSubject)>,
}

impl DialogueAgent {
    pub fn new(
        kind: AgentKind,
        templates: Arc<Templates>,
        analyzer: Arc<InefficiencyAnalyzer>,
        inefficiency: InefficiencyConfig,
    ) -> DialogueAgent {
        let task = analyzer.task().clone();
        DialogueAgent { task, kind, templates, analyzer, inefficiency, last_target: None }
    }

    pub fn kind(&self) -> AgentKind {
        self.kind
    }

    fn say(&self, kind: UtteranceKind, key: &str, values: &[(&str, &str)], subject: Option<String>) -> Utterance {
        Utterance { kind, text: self.templates.render(key, values), subject, target: None }
    }

    fn instruction(&self, ctx: &ExecutionContext, a0: Act) -> Utterance {
        let task = &self.task;
        let label = Some(task.label(a0).to_string());
        match a0 {
            Act::Move { to, .. } => {
                let key = if ctx.belief.visited.contains(&to) { "instruction.move_back" } else { "instruction.move" };
                self.say(UtteranceKind::Instruction, key, &[("type", task.kind_of(to)), ("color", task.color_of(to))], label)
            }
            Act::Pickup { bike, .. } => {
                self.say(UtteranceKind::Instruction, "instruction.pickup", &[("bike", &task.bike_name(bike))], label)
            }
            Act::Find { .. } => unreachable!("assumptions are never instructed"),
        }
    }

    fn target(&self, kind: UtteranceKind, t: TargetDescriptor) -> Utterance {
        let prefix = if kind == UtteranceKind::PreTarget { "pretarget" } else { "target" };
        let mut u = match t.subject {
            TargetSubject::Bike(b) => {
                let name = self.task.bike_name(b);
                self.say(kind, &format!("{prefix}.bike"), &[("bike", &name)], Some(self.task.bike_id(b).to_string()))
            }
            TargetSubject::Base => self.say(kind, &format!("{prefix}.base"), &[], Some("base".into())),
        };
        u.target = Some(t.kind);
        u
    }

    /// What to say when a new step begins.
    pub fn action1(&mut self, ctx: &ExecutionContext) -> Vec<Utterance> {
        let Some(a0) = ctx.next() else { return Vec::new() };
        let mut out = Vec::new();
        if let AgentKind::Predictive { .. } = self.kind {
            let target = extract_target(&self.task, &ctx.intention, &ctx.belief);
            let id = target.map(|t| t.identity());
            if let Some(t) = target.filter(|_| id != self.last_target) {
                out.push(self.target(UtteranceKind::PreTarget, t));
            }
            self.last_target = id;
        }
        out.push(self.instruction(ctx, a0));
        out
    }

    /// What to say when the user has not acted on the instruction in time.
    pub fn action2(&self, ctx: &ExecutionContext) -> Vec<Utterance> {
        let Some(a0) = ctx.next() else { return Vec::new() };
        let task = &self.task;
        if let Act::Move { to, .. } = a0 {
            if !similar_moves(task, a0).is_empty() {
                let values = [("type", task.kind_of(to)), ("color", task.color_of(to))];
                return vec![self.say(UtteranceKind::Elaboration, "elaboration", &values, Some(task.label(a0).to_string()))];
            }
        }
        let mut out = Vec::new();
        let inefficient = || self.analyzer.detect_in_context(ctx, self.inefficiency).is_some();
        match self.kind {
            AgentKind::Responsive => {
                if inefficient() {
                    out.push(self.say(UtteranceKind::InefficiencyJustification, "inefficiency.responsive", &[], None));
                }
            }
            AgentKind::Predictive { .. } => {
                if let Some(m) = ku_shortcut(task, &ctx.belief, a0) {
                    out.push(self.say(UtteranceKind::InitiativeOffer, "initiative", &[], Some(task.label(m).to_string())));
                } else if inefficient() {
                    out.push(self.say(UtteranceKind::InefficiencyJustification, "inefficiency.predictive", &[], None));
                }
            }
        }
        if let Some(t) = extract_target(task, &ctx.intention, &ctx.belief) {
            let kind = match t.kind {
                TargetKind::KnowledgeGain => UtteranceKind::TargetJustification,
                TargetKind::SubgoalAchievement => UtteranceKind::PositionTarget,
            };
            out.push(self.target(kind, t));
        }
        out
    }

    pub fn acknowledge_pickup(&self, bike: usize) -> Utterance {
        let name = self.task.bike_name(bike);
        self.say(UtteranceKind::Acknowledgement, "ack.pickup", &[("bike", &name)], Some(self.task.bike_id(bike).into()))
    }

    pub fn acknowledge_wrong_way(&self) -> Utterance {
        self.say(UtteranceKind::Acknowledgement, "ack.wrong_way", &[], None)
    }

    pub fn acknowledge_initiative(&self) -> Utterance {
        self.say(UtteranceKind::Acknowledgement, "ack.initiative", &[], None)
    }

    pub fn acknowledge_done(&self) -> Utterance {
        self.say(UtteranceKind::Acknowledgement, "ack.done", &[], None)
    }
}
