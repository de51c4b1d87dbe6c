//! Scenario configuration: the JSON schema the simulator and CLI consume,
//! default values, and validation.

use serde::{Deserialize, Serialize};

use crate::model::{CapabilitySet, NodeId, Position, TaskId, DEFAULT_UNIVERSE};
use crate::similarity::SimilarityThreshold;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub area: Area,
    #[serde(default = "default_universe")]
    pub universe: Vec<String>,
    pub nodes: NodesSpec,
    #[serde(default)]
    pub radio: RadioConfig,
    #[serde(default)]
    pub protocol: ProtocolConfig,
    #[serde(default)]
    pub tasks: TasksSpec,
    /// Simulation horizon in seconds.
    #[serde(default = "default_horizon")]
    pub horizon_s: f64,
    /// Safety cap on total scheduled events; a run exceeding it aborts.
    #[serde(default = "default_max_events")]
    pub max_events: u64,
}

fn default_universe() -> Vec<String> {
    DEFAULT_UNIVERSE.iter().map(|s| s.to_string()).collect()
}

fn default_horizon() -> f64 {
    800.0
}

fn default_max_events() -> u64 {
    10_000_000
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Area {
    pub width: f64,
    pub height: f64,
}

impl Default for Area {
    fn default() -> Self {
        Area {
            width: 200.0,
            height: 200.0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NodesSpec {
    Explicit(Vec<NodeSpec>),
    Generated(GeneratedNodes),
}

impl NodesSpec {
    pub fn count(&self) -> usize {
        match self {
            NodesSpec::Explicit(list) => list.len(),
            NodesSpec::Generated(g) => g.count,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    pub id: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pos: Option<Position>,
    pub capabilities: Vec<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratedNodes {
    pub count: usize,
    pub capability_assignment: CapabilityAssignment,
    #[serde(default)]
    pub placement: PlacementStrategy,
    /// Bounds on the size of each randomly assigned capability set.
    #[serde(default = "default_min_caps")]
    pub min_capabilities: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_capabilities: Option<usize>,
}

fn default_min_caps() -> usize {
    1
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CapabilityAssignment {
    /// Each node draws a uniformly sized random subset of the universe.
    Random,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlacementStrategy {
    /// Lattice with equal margins; matches "evenly distributed".
    #[default]
    Grid,
    UniformRandom,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RadioConfig {
    /// Unit-disk radius in meters.
    pub range_m: f64,
    /// One-hop delay in milliseconds.
    pub delay_ms: f64,
    /// Independent per-recipient Bernoulli loss probability.
    pub loss_prob: f64,
    /// Loss probability on AP links; these bypass the unit-disk check.
    #[serde(default)]
    pub ap_loss_prob: f64,
}

impl Default for RadioConfig {
    fn default() -> Self {
        RadioConfig {
            range_m: 50.0,
            delay_ms: 2.0,
            loss_prob: 0.0,
            ap_loss_prob: 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProtocolConfig {
    pub similarity_threshold: SimilarityThreshold,
    /// Capability dissemination rounds during warm-up.
    pub capability_rounds: u32,
    /// Upper bound of the uniform jitter added to each dissemination round.
    pub jitter_max_ms: f64,
    /// Upper bound of the uniform jitter a leader waits before answering a
    /// TaskDispatch, staggering otherwise-simultaneous replies.
    pub response_jitter_max_ms: f64,
    /// How long the AP counts accepts after each dispatch.
    pub confirmation_window_ms: f64,
    /// Warm-up window; dissemination rounds are spread across it and leader
    /// registration happens before it ends.
    pub warmup_s: f64,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            similarity_threshold: SimilarityThreshold::DEFAULT,
            capability_rounds: 3,
            jitter_max_ms: 1000.0,
            response_jitter_max_ms: 25.0,
            confirmation_window_ms: 5000.0,
            warmup_s: 150.0,
        }
    }
}

impl ProtocolConfig {
    /// Spacing between dissemination rounds. Rounds fire at
    /// `r * round_period + jitter` for `r` in `0..capability_rounds`, and the
    /// leader evaluation timer fires one period after the last round, still
    /// inside the warm-up window.
    pub fn round_period_s(&self) -> f64 {
        self.warmup_s / (self.capability_rounds as f64 + 1.0)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TasksSpec {
    Explicit(Vec<TaskSpec>),
    Generated(GeneratedTasks),
}

impl Default for TasksSpec {
    fn default() -> Self {
        TasksSpec::Explicit(Vec::new())
    }
}

impl TasksSpec {
    pub fn count(&self) -> usize {
        match self {
            TasksSpec::Explicit(list) => list.len(),
            TasksSpec::Generated(g) => g.count,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub id: u64,
    pub required: Vec<String>,
    pub duration_s: f64,
    #[serde(default = "default_quorum")]
    pub quorum: usize,
}

fn default_quorum() -> usize {
    1
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratedTasks {
    pub count: usize,
    #[serde(default)]
    pub schedule: TaskSchedule,
    pub generator: TaskGenerator,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TaskSchedule {
    pub start_s: f64,
    pub interval_s: f64,
}

impl Default for TaskSchedule {
    fn default() -> Self {
        TaskSchedule {
            start_s: 150.0,
            interval_s: 60.0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskGenerator {
    /// Capabilities every generated task requires.
    pub base_required: Vec<String>,
    /// Pool the extra requirements are drawn from, without replacement.
    pub extra_pool: Vec<String>,
    /// Each task adds a uniform 0..=max_extra draw from the pool.
    pub max_extra: usize,
    #[serde(default = "default_task_duration")]
    pub duration_s: f64,
    #[serde(default = "default_quorum")]
    pub quorum: usize,
}

fn default_task_duration() -> f64 {
    60.0
}

#[derive(Clone, PartialEq, Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("empty network: at least one node is required")]
    EmptyNetwork,
    #[error("duplicate node id {0}")]
    DuplicateNodeId(NodeId),
    #[error("node {node} has no capabilities")]
    EmptyCapabilitySet { node: NodeId },
    #[error("node {node}: capability \"{capability}\" outside universe")]
    NodeCapabilityOutsideUniverse { node: NodeId, capability: String },
    #[error("node {node}: position ({x}, {y}) outside area")]
    PositionOutsideArea { node: NodeId, x: f64, y: f64 },
    #[error("task {task}: capability \"{capability}\" outside universe")]
    TaskCapabilityOutsideUniverse { task: TaskId, capability: String },
    #[error("task generator: capability \"{capability}\" outside universe")]
    GeneratorCapabilityOutsideUniverse { capability: String },
    #[error("duplicate task id {0}")]
    DuplicateTaskId(TaskId),
    #[error("task {task}: non-positive duration")]
    NonPositiveDuration { task: TaskId },
    #[error("task {task}: quorum must be >= 1")]
    ZeroQuorum { task: TaskId },
    #[error("task {task}: empty required capability set")]
    EmptyRequiredSet { task: TaskId },
    #[error("similarity threshold {0} outside [0, 1]")]
    ThresholdOutOfRange(f64),
    #[error("loss probability {0} outside [0, 1]")]
    LossProbOutOfRange(f64),
    #[error("radio range must be positive, got {0}")]
    NonPositiveRange(f64),
    #[error("radio delay must be positive, got {0}")]
    NonPositiveDelay(f64),
    #[error("area dimensions must be positive")]
    NonPositiveArea,
    #[error("capability_rounds must be >= 1")]
    ZeroCapabilityRounds,
    #[error("{field} must be non-negative")]
    NegativeField { field: &'static str },
    #[error("node capability size bounds invalid: min {min}, max {max}, universe {universe}")]
    BadCapabilitySizeBounds {
        min: usize,
        max: usize,
        universe: usize,
    },
    #[error("task generator: max_extra {max_extra} exceeds extra pool size {pool}")]
    MaxExtraExceedsPool { max_extra: usize, pool: usize },
}

/// Checks every structural invariant of a parsed scenario. Returns the
/// config unchanged on success (defaults are filled at parse time) or the
/// full list of violations.
pub fn validate_scenario(config: ScenarioConfig) -> Result<ScenarioConfig, Vec<ScenarioError>> {
    let mut errors = Vec::new();
    let universe: CapabilitySet = CapabilitySet::from_names(config.universe.iter().cloned());

    if config.area.width <= 0.0 || config.area.height <= 0.0 {
        errors.push(ScenarioError::NonPositiveArea);
    }

    match &config.nodes {
        NodesSpec::Explicit(list) => {
            if list.is_empty() {
                errors.push(ScenarioError::EmptyNetwork);
            }
            let mut seen = std::collections::BTreeSet::new();
            for node in list {
                let id = NodeId(node.id);
                if !seen.insert(node.id) {
                    errors.push(ScenarioError::DuplicateNodeId(id));
                }
                if node.capabilities.is_empty() {
                    errors.push(ScenarioError::EmptyCapabilitySet { node: id });
                }
                for cap in &node.capabilities {
                    if !universe.contains(&crate::model::Capability::new(cap.clone())) {
                        errors.push(ScenarioError::NodeCapabilityOutsideUniverse {
                            node: id,
                            capability: cap.clone(),
                        });
                    }
                }
                if let Some(pos) = node.pos {
                    let inside = (0.0..=config.area.width).contains(&pos.x)
                        && (0.0..=config.area.height).contains(&pos.y);
                    if !inside {
                        errors.push(ScenarioError::PositionOutsideArea {
                            node: id,
                            x: pos.x,
                            y: pos.y,
                        });
                    }
                }
            }
        }
        NodesSpec::Generated(gen) => {
            if gen.count == 0 {
                errors.push(ScenarioError::EmptyNetwork);
            }
            let max = gen.max_capabilities.unwrap_or(universe.len());
            if gen.min_capabilities < 1 || gen.min_capabilities > max || max > universe.len() {
                errors.push(ScenarioError::BadCapabilitySizeBounds {
                    min: gen.min_capabilities,
                    max,
                    universe: universe.len(),
                });
            }
        }
    }

    match &config.tasks {
        TasksSpec::Explicit(list) => {
            let mut seen = std::collections::BTreeSet::new();
            for task in list {
                let id = TaskId(task.id);
                if !seen.insert(task.id) {
                    errors.push(ScenarioError::DuplicateTaskId(id));
                }
                if task.duration_s <= 0.0 {
                    errors.push(ScenarioError::NonPositiveDuration { task: id });
                }
                if task.quorum == 0 {
                    errors.push(ScenarioError::ZeroQuorum { task: id });
                }
                if task.required.is_empty() {
                    errors.push(ScenarioError::EmptyRequiredSet { task: id });
                }
                for cap in &task.required {
                    if !universe.contains(&crate::model::Capability::new(cap.clone())) {
                        errors.push(ScenarioError::TaskCapabilityOutsideUniverse {
                            task: id,
                            capability: cap.clone(),
                        });
                    }
                }
            }
        }
        TasksSpec::Generated(gen) => {
            if gen.generator.duration_s <= 0.0 {
                errors.push(ScenarioError::NonPositiveDuration { task: TaskId(0) });
            }
            if gen.generator.quorum == 0 {
                errors.push(ScenarioError::ZeroQuorum { task: TaskId(0) });
            }
            if gen.generator.base_required.is_empty() && gen.generator.max_extra == 0 {
                errors.push(ScenarioError::EmptyRequiredSet { task: TaskId(0) });
            }
            if gen.generator.max_extra > gen.generator.extra_pool.len() {
                errors.push(ScenarioError::MaxExtraExceedsPool {
                    max_extra: gen.generator.max_extra,
                    pool: gen.generator.extra_pool.len(),
                });
            }
            for cap in gen
                .generator
                .base_required
                .iter()
                .chain(gen.generator.extra_pool.iter())
            {
                if !universe.contains(&crate::model::Capability::new(cap.clone())) {
                    errors.push(ScenarioError::GeneratorCapabilityOutsideUniverse {
                        capability: cap.clone(),
                    });
                }
            }
            if gen.schedule.interval_s <= 0.0 {
                errors.push(ScenarioError::NegativeField {
                    field: "tasks.schedule.interval_s",
                });
            }
            if gen.schedule.start_s < 0.0 {
                errors.push(ScenarioError::NegativeField {
                    field: "tasks.schedule.start_s",
                });
            }
        }
    }

    if !config.protocol.similarity_threshold.is_valid() {
        errors.push(ScenarioError::ThresholdOutOfRange(
            config.protocol.similarity_threshold.0,
        ));
    }
    if config.protocol.capability_rounds == 0 {
        errors.push(ScenarioError::ZeroCapabilityRounds);
    }
    if config.protocol.jitter_max_ms < 0.0 {
        errors.push(ScenarioError::NegativeField {
            field: "protocol.jitter_max_ms",
        });
    }
    if config.protocol.response_jitter_max_ms < 0.0 {
        errors.push(ScenarioError::NegativeField {
            field: "protocol.response_jitter_max_ms",
        });
    }
    if config.protocol.confirmation_window_ms < 0.0 {
        errors.push(ScenarioError::NegativeField {
            field: "protocol.confirmation_window_ms",
        });
    }
    if config.protocol.warmup_s < 0.0 {
        errors.push(ScenarioError::NegativeField {
            field: "protocol.warmup_s",
        });
    }
    if config.horizon_s < 0.0 {
        errors.push(ScenarioError::NegativeField { field: "horizon_s" });
    }
    if !(0.0..=1.0).contains(&config.radio.loss_prob) {
        errors.push(ScenarioError::LossProbOutOfRange(config.radio.loss_prob));
    }
    if !(0.0..=1.0).contains(&config.radio.ap_loss_prob) {
        errors.push(ScenarioError::LossProbOutOfRange(config.radio.ap_loss_prob));
    }
    if config.radio.range_m <= 0.0 {
        errors.push(ScenarioError::NonPositiveRange(config.radio.range_m));
    }
    if config.radio.delay_ms <= 0.0 {
        errors.push(ScenarioError::NonPositiveDelay(config.radio.delay_ms));
    }

    if errors.is_empty() {
        Ok(config)
    } else {
        Err(errors)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ScenarioParseError {
    #[error("invalid scenario JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid scenario:\n{}", .0.iter().map(|e| format!("  - {e}")).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<ScenarioError>),
}

/// Parse and validate a scenario from JSON text.
pub fn parse_scenario(json: &str) -> Result<ScenarioConfig, ScenarioParseError> {
    let config: ScenarioConfig = serde_json::from_str(json)?;
    validate_scenario(config).map_err(ScenarioParseError::Invalid)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig2_config() -> ScenarioConfig {
        let json = r#"{
            "universe": ["c1", "c2", "c3"],
            "nodes": [
                {"id": 0, "pos": {"x": 100.0, "y": 55.0}, "capabilities": ["c1", "c2"]},
                {"id": 1, "pos": {"x": 100.0, "y": 100.0}, "capabilities": ["c1", "c2", "c3"]},
                {"id": 2, "pos": {"x": 120.0, "y": 125.0}, "capabilities": ["c1", "c2"]},
                {"id": 3, "pos": {"x": 80.0, "y": 125.0}, "capabilities": ["c1", "c2"]}
            ]
        }"#;
        serde_json::from_str(json).unwrap()
    }

    #[test]
    fn four_node_worked_example_is_valid() {
        let config = fig2_config();
        assert!(validate_scenario(config).is_ok());
    }

    #[test]
    fn zero_duration_task_is_rejected() {
        let mut config = fig2_config();
        config.tasks = TasksSpec::Explicit(vec![TaskSpec {
            id: 1,
            required: vec!["c1".into()],
            duration_s: 0.0,
            quorum: 1,
        }]);
        let errors = validate_scenario(config).unwrap_err();
        assert!(errors
            .iter()
            .any(|e| matches!(e, ScenarioError::NonPositiveDuration { .. })));
    }

    #[test]
    fn capability_outside_universe_is_rejected() {
        let mut config = fig2_config();
        if let NodesSpec::Explicit(ref mut nodes) = config.nodes {
            nodes[0].capabilities.push("vibration".into());
        }
        let errors = validate_scenario(config).unwrap_err();
        assert!(errors.iter().any(|e| matches!(
            e,
            ScenarioError::NodeCapabilityOutsideUniverse { capability, .. }
                if capability == "vibration"
        )));
    }

    #[test]
    fn empty_network_is_rejected() {
        let mut config = fig2_config();
        config.nodes = NodesSpec::Explicit(vec![]);
        let errors = validate_scenario(config).unwrap_err();
        assert!(errors.contains(&ScenarioError::EmptyNetwork));
    }

    #[test]
    fn duplicate_node_id_is_rejected() {
        let mut config = fig2_config();
        if let NodesSpec::Explicit(ref mut nodes) = config.nodes {
            nodes[1].id = 0;
        }
        let errors = validate_scenario(config).unwrap_err();
        assert!(errors.contains(&ScenarioError::DuplicateNodeId(NodeId(0))));
    }

    #[test]
    fn defaults_fill_in() {
        let config = fig2_config();
        assert_eq!(config.radio.range_m, 50.0);
        assert_eq!(config.radio.delay_ms, 2.0);
        assert_eq!(config.protocol.similarity_threshold.0, 0.65);
        assert_eq!(config.protocol.capability_rounds, 3);
        assert_eq!(config.horizon_s, 800.0);
        assert_eq!(config.universe.len(), 3);
    }
}
