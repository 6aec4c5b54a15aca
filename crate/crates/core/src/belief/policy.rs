use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use super::exec::{advance, decide, physical_options};
use super::{BeliefKey, BeliefState, ExecError, Planner};
use crate::ambiguity::similar_moves;
use crate::dialogue::ku_shortcut;
use crate::domain::{Act, TaskModel};
use crate::planning::ActionLabel;

pub const POLICY_FORMAT_VERSION: u32 = 1;
const POLICY_FORMAT: &str = "mapguide-policy";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PolicyConfig {
    /// Arbitrary user deviations allowed along any branch.
    pub budget: usize,
    /// Expand the other actions an ambiguous instruction could be taken for.
    pub ambiguity_alternatives: bool,
    /// Expand the move offered by an initiative switch.
    pub initiative: bool,
    pub max_nodes: usize,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig { budget: 2, ambiguity_alternatives: true, initiative: false, max_nodes: 500_000 }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PolicyNode {
    /// Deviations still allowed below this node.
    pub budget: usize,
    /// Plan in force at this belief; its first physical step is the action.
    pub intention: Vec<Act>,
}

impl PolicyNode {
    pub fn action(&self) -> Option<Act> {
        self.intention.iter().copied().find(|a| a.is_physical())
    }
}

/// Belief-to-plan table covering every belief reachable from the start with
/// at most `budget` deviations.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Policy {
    pub map: String,
    pub agent: String,
    pub budget: usize,
    nodes: BTreeMap<BeliefKey, PolicyNode>,
}

#[derive(Debug, thiserror::Error)]
pub enum PolicyError {
    #[error(transparent)]
    Exec(#[from] ExecError),
    #[error("policy exceeds {0} nodes")]
    TooLarge(usize),
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("policy was built for {found}, not {wanted}")]
    Mismatch { found: String, wanted: String },
}

/// First line of a policy file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyHeader {
    pub format: String,
    pub version: u32,
    pub map: String,
    pub agent: String,
    pub budget: usize,
    pub nodes: usize,
}

#[derive(Serialize, Deserialize)]
struct Record {
    belief: BeliefKey,
    budget: usize,
    action: Option<ActionLabel>,
    intention: Vec<ActionLabel>,
}

impl Policy {
    pub fn get(&self, key: &BeliefKey) -> Option<&PolicyNode> {
        self.nodes.get(key)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes that prescribe an action, i.e. all but goal beliefs.
    pub fn decision_count(&self) -> usize {
        self.nodes.values().filter(|n| n.action().is_some()).count()
    }

    pub fn nodes(&self) -> impl Iterator<Item = (&BeliefKey, &PolicyNode)> {
        self.nodes.iter()
    }

    /// Line-delimited JSON: one header record, then one record per belief in
    /// key order.
    pub fn to_ndjson(&self, task: &TaskModel) -> String {
        let header = PolicyHeader {
            format: POLICY_FORMAT.into(),
            version: POLICY_FORMAT_VERSION,
            map: self.map.clone(),
            agent: self.agent.clone(),
            budget: self.budget,
            nodes: self.nodes.len(),
        };
        let mut out = serde_json::to_string(&header).expect("serializable");
        out.push('\n');
        for (key, node) in &self.nodes {
            let rec = Record {
                belief: key.clone(),
                budget: node.budget,
                action: node.action().map(|a| task.label(a)),
                intention: node.intention.iter().map(|&a| task.label(a)).collect(),
            };
            out.push_str(&serde_json::to_string(&rec).expect("serializable"));
            out.push('\n');
        }
        out
    }

    /// Reads only the header, e.g. to find the map a file belongs to.
    pub fn header(text: &str) -> Result<PolicyHeader, PolicyError> {
        let err = |message: String| PolicyError::Format { line: 1, message };
        let first = text.lines().find(|l| !l.trim().is_empty()).ok_or_else(|| err("empty policy file".into()))?;
        let header: PolicyHeader = serde_json::from_str(first).map_err(|e| err(e.to_string()))?;
        if header.format != POLICY_FORMAT || header.version != POLICY_FORMAT_VERSION {
            return Err(err(format!("unsupported policy format {} v{}", header.format, header.version)));
        }
        Ok(header)
    }

    pub fn from_ndjson(task: &TaskModel, text: &str) -> Result<Policy, PolicyError> {
        let err = |line: usize, message: String| PolicyError::Format { line, message };
        let header = Policy::header(text)?;
        if header.map != task.map.name {
            return Err(PolicyError::Mismatch { found: format!("map {}", header.map), wanted: format!("map {}", task.map.name) });
        }
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        lines.next();
        let mut nodes = BTreeMap::new();
        for (i, line) in lines {
            let rec: Record = serde_json::from_str(line).map_err(|e| err(i + 1, e.to_string()))?;
            let intention = rec
                .intention
                .iter()
                .map(|l| task.classify(l).ok_or_else(|| err(i + 1, format!("unknown action {l}"))))
                .collect::<Result<Vec<_>, _>>()?;
            let node = PolicyNode { budget: rec.budget, intention };
            if node.action().map(|a| task.label(a)) != rec.action {
                return Err(err(i + 1, "action does not match the intention".into()));
            }
            nodes.insert(rec.belief, node);
        }
        if nodes.len() != header.nodes {
            return Err(err(1, format!("header announces {} nodes, found {}", header.nodes, nodes.len())));
        }
        Ok(Policy { map: header.map, agent: header.agent, budget: header.budget, nodes })
    }
}

/// Breadth-first expansion of the agent's executions into a policy.
///
/// Each node is expanded for the intended action, for budget-free
/// alternatives (the moves an ambiguous instruction could be mistaken for and,
/// when enabled, an offered initiative move) and, while budget remains, for
/// every other applicable action at the price of one unit. A belief reached
/// again with more budget left is expanded again; its plan stays the one
/// recorded first.
pub fn build_policy(planner: &Planner, agent: &str, config: PolicyConfig) -> Result<Policy, PolicyError> {
    let task = planner.task().clone();
    let mut root = BeliefState::initial(&task);
    root.sense_at(&task, &root.true_state(&task), &task.problem.sensing).map_err(ExecError::from)?;
    let root_plan = if root.goal_reached(&task) { Vec::new() } else { planner.plan(&root)?.to_vec() };

    let mut nodes = BTreeMap::new();
    nodes.insert(root.key(&task), PolicyNode { budget: config.budget, intention: root_plan.clone() });
    let mut queue = VecDeque::from([(root, root_plan, config.budget)]);

    while let Some((belief, intention, budget)) = queue.pop_front() {
        let Some(a0) = intention.iter().copied().find(|a| a.is_physical()) else { continue };
        let mut children = vec![(a0, 0)];
        if config.ambiguity_alternatives {
            children.extend(similar_moves(&task, a0).into_iter().map(|m| (m, 0)));
        }
        if config.initiative {
            if let Some(m) = ku_shortcut(&task, &belief, a0) {
                children.push((m, 0));
            }
        }
        if budget > 0 {
            for opt in physical_options(&task, &belief) {
                if !children.iter().any(|&(c, _)| c == opt) {
                    children.push((opt, 1));
                }
            }
        }
        for (act, spend) in children {
            let (next, observations, expected, complied) = advance(&task, &belief, &intention, act)?;
            let left = budget - spend;
            let key = next.key(&task);
            match nodes.get_mut(&key) {
                None => {
                    let (plan, _) = decide(planner, &next, expected, complied, !observations.is_empty())?;
                    nodes.insert(key, PolicyNode { budget: left, intention: plan.clone() });
                    queue.push_back((next, plan, left));
                    if nodes.len() > config.max_nodes {
                        return Err(PolicyError::TooLarge(config.max_nodes));
                    }
                }
                Some(node) if node.budget < left => {
                    node.budget = left;
                    queue.push_back((next, node.intention.clone(), left));
                }
                Some(_) => {}
            }
        }
    }
    Ok(Policy { map: task.map.name.clone(), agent: agent.to_string(), budget: config.budget, nodes })
}
