use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::ambiguity::AmbiguityCost;
use crate::belief::{build_policy, Planner, Policy, PolicyConfig, PolicyError};
use crate::dialogue::{AgentKind, InefficiencyAnalyzer, InefficiencyConfig, Templates};
use crate::domain::TaskModel;
use crate::planning::{BaseCost, CostFn};

/// How the agent decides what to do next.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum GuidanceSpec {
    /// Replan online whenever the plan breaks.
    #[default]
    Planner,
    /// Look actions up in a precomputed policy, replanning only on a miss.
    Policy { budget: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimerConfig {
    /// Inaction before the follow-up utterance.
    pub first_ms: u64,
    /// Interval between repeats of the follow-up.
    pub repeat_ms: u64,
    pub repeat: bool,
}

impl Default for TimerConfig {
    fn default() -> Self {
        TimerConfig { first_ms: 2000, repeat_ms: 5000, repeat: true }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub look_back: usize,
    pub look_ahead: usize,
}

impl From<InefficiencyConfig> for WindowSpec {
    fn from(c: InefficiencyConfig) -> Self {
        WindowSpec { look_back: c.look_back, look_ahead: c.look_ahead }
    }
}

impl From<WindowSpec> for InefficiencyConfig {
    fn from(w: WindowSpec) -> Self {
        InefficiencyConfig { look_back: w.look_back, look_ahead: w.look_ahead }
    }
}

/// Everything that configures an agent, as recorded at session start.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentSettings {
    pub agent: AgentKind,
    #[serde(default)]
    pub guidance: GuidanceSpec,
    #[serde(default)]
    pub timers: TimerConfig,
    #[serde(default = "default_window")]
    pub window: WindowSpec,
}

fn default_window() -> WindowSpec {
    InefficiencyConfig::default().into()
}

impl AgentSettings {
    pub fn new(agent: AgentKind) -> AgentSettings {
        AgentSettings { agent, guidance: GuidanceSpec::default(), timers: TimerConfig::default(), window: default_window() }
    }
}

/// Per map and agent resources shared by every session and episode: the
/// planner with its cache, the optional policy and the inefficiency analyzer.
pub struct AgentProfile {
    pub task: Arc<TaskModel>,
    pub settings: AgentSettings,
    pub planner: Arc<Planner>,
    pub policy: Option<Arc<Policy>>,
    pub analyzer: Arc<InefficiencyAnalyzer>,
    pub templates: Arc<Templates>,
}

impl AgentProfile {
    pub fn new(task: Arc<TaskModel>, settings: AgentSettings, templates: Arc<Templates>) -> Result<AgentProfile, PolicyError> {
        AgentProfile::build(task, settings, templates, None)
    }

    /// Like [`AgentProfile::new`] but with a policy read from a file instead
    /// of one expanded here. It must match the map, agent and budget.
    pub fn with_policy(
        task: Arc<TaskModel>,
        settings: AgentSettings,
        templates: Arc<Templates>,
        policy: Arc<Policy>,
    ) -> Result<AgentProfile, PolicyError> {
        let found = format!("{} {} budget {}", policy.map, policy.agent, policy.budget);
        let wanted = match settings.guidance {
            GuidanceSpec::Policy { budget } => format!("{} {} budget {budget}", task.map.name, settings.agent.name()),
            GuidanceSpec::Planner => "online planning".into(),
        };
        if found != wanted {
            return Err(PolicyError::Mismatch { found, wanted });
        }
        AgentProfile::build(task, settings, templates, Some(policy))
    }

    fn build(
        task: Arc<TaskModel>,
        settings: AgentSettings,
        templates: Arc<Templates>,
        preset: Option<Arc<Policy>>,
    ) -> Result<AgentProfile, PolicyError> {
        let costs: Arc<dyn CostFn> = match settings.agent {
            AgentKind::Responsive => Arc::new(BaseCost),
            AgentKind::Predictive { delta } => Arc::new(AmbiguityCost::new(&task, delta)),
        };
        let planner = Arc::new(Planner::new(task.clone(), costs));
        let policy = match settings.guidance {
            GuidanceSpec::Planner => None,
            GuidanceSpec::Policy { .. } if preset.is_some() => preset,
            GuidanceSpec::Policy { budget } => {
                let config = PolicyConfig {
                    budget,
                    initiative: matches!(settings.agent, AgentKind::Predictive { .. }),
                    ..Default::default()
                };
                Some(Arc::new(build_policy(&planner, &settings.agent.name(), config)?))
            }
        };
        let analyzer = Arc::new(InefficiencyAnalyzer::new(task.clone()));
        Ok(AgentProfile { task, settings, planner, policy, analyzer, templates })
    }
}
