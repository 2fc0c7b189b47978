//! Domain types shared by every module, and the goal-parameterized reward
//! functions.
//!
//! An episode produces an [`Experiment`]: the context the policy started
//! from, the policy parameters, and the outcome vector summarizing what every
//! object did. Goals are points in one of the registered outcome spaces; the
//! reward for a goal is the negated distance between the goal and the
//! matching outcome slice, normalized by the space diameter so rewards are
//! comparable across spaces.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Identifier of one goal/outcome space.
pub type SpaceId = usize;

#[derive(Debug, Error, PartialEq)]
pub enum CoreError {
    #[error("unknown goal space id {0}")]
    UnknownSpace(SpaceId),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("component {index} = {value} outside [-1, 1]")]
    OutOfBounds { index: usize, value: f64 },
    #[error("invalid reward weights alpha={alpha} beta={beta}: need alpha >= 0, beta >= 0, alpha + beta <= 1")]
    InvalidWeights { alpha: f64, beta: f64 },
    #[error("goal space slices do not partition the outcome vector: {0}")]
    BadPartition(String),
    #[error("trajectory has {states} states for {actions} actions")]
    MisalignedTrajectory { states: usize, actions: usize },
}

fn check_bounds(values: &[f64]) -> Result<(), CoreError> {
    for (index, &value) in values.iter().enumerate() {
        if !(-1.0..=1.0).contains(&value) || value.is_nan() {
            return Err(CoreError::OutOfBounds { index, value });
        }
    }
    Ok(())
}

/// Environment state observed before a rollout, each component in [-1, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Context {
    values: Vec<f64>,
}

impl Context {
    pub fn new(values: Vec<f64>) -> Result<Self, CoreError> {
        check_bounds(&values)?;
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// Euclidean distance to another context.
    pub fn distance(&self, other: &Context) -> f64 {
        euclidean(&self.values, &other.values)
    }
}

/// Low-level policy parameters, each component in [-1, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    values: Vec<f64>,
}

impl PolicyParams {
    pub fn new(values: Vec<f64>) -> Result<Self, CoreError> {
        check_bounds(&values)?;
        Ok(Self { values })
    }

    /// Builds params from arbitrary reals, clipping each component into
    /// [-1, 1].
    pub fn clipped(values: Vec<f64>) -> Self {
        Self {
            values: values.into_iter().map(|v| v.clamp(-1.0, 1.0)).collect(),
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Full state/action record of one rollout. `states[t]` is the environment
/// state at the moment action `t` is issued, so the first state carries the
/// starting context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    states: Vec<Vec<f64>>,
    actions: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn new(states: Vec<Vec<f64>>, actions: Vec<Vec<f64>>) -> Result<Self, CoreError> {
        if states.len() != actions.len() {
            return Err(CoreError::MisalignedTrajectory {
                states: states.len(),
                actions: actions.len(),
            });
        }
        Ok(Self { states, actions })
    }

    pub fn states(&self) -> &[Vec<f64>] {
        &self.states
    }

    pub fn actions(&self) -> &[Vec<f64>] {
        &self.actions
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Concatenated per-object outcome features of one rollout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    full: Vec<f64>,
}

impl Outcome {
    pub fn new(full: Vec<f64>) -> Self {
        Self { full }
    }

    pub fn full(&self) -> &[f64] {
        &self.full
    }

    pub fn dim(&self) -> usize {
        self.full.len()
    }
}

/// A goal: a target point in one outcome space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Problem {
    pub space_id: SpaceId,
    pub target: Vec<f64>,
}

impl Problem {
    pub fn new(space_id: SpaceId, target: Vec<f64>) -> Self {
        Self { space_id, target }
    }
}

/// How a space's samples are projected and binned for the coverage measure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverageRule {
    /// Number of physical variables per time sample (slice dim / samples).
    pub vars_per_sample: usize,
    /// Bins per axis of the projected variable space.
    pub bins_per_axis: usize,
}

/// Descriptor of one outcome/goal space: where its slice lives inside the
/// full outcome vector and how distances in it are normalized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalSpaceSpec {
    pub id: SpaceId,
    pub name: String,
    pub dim: usize,
    /// Start of this space's slice in the full outcome vector.
    pub offset: usize,
    /// Diameter used to normalize the space norm; positive.
    pub max_distance: f64,
    pub coverage: CoverageRule,
}

impl GoalSpaceSpec {
    /// Spec for a space bounded by the hyper-box [-1, 1]^dim, normalized by
    /// the box diagonal `2 * sqrt(dim)`.
    pub fn boxed(
        id: SpaceId,
        name: &str,
        dim: usize,
        offset: usize,
        coverage: CoverageRule,
    ) -> Self {
        Self {
            id,
            name: name.to_string(),
            dim,
            offset,
            max_distance: 2.0 * (dim as f64).sqrt(),
            coverage,
        }
    }

    pub fn slice<'a>(&self, outcome: &'a Outcome) -> Result<&'a [f64], CoreError> {
        let end = self.offset + self.dim;
        if end > outcome.dim() {
            return Err(CoreError::DimensionMismatch {
                expected: end,
                got: outcome.dim(),
            });
        }
        Ok(&outcome.full()[self.offset..end])
    }
}

/// Ordered collection of goal-space specs whose slices partition the full
/// outcome vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalSpaceRegistry {
    specs: Vec<GoalSpaceSpec>,
    total_dim: usize,
}

impl GoalSpaceRegistry {
    pub fn new(specs: Vec<GoalSpaceSpec>) -> Result<Self, CoreError> {
        let mut cursor = 0;
        for spec in &specs {
            if spec.offset != cursor {
                return Err(CoreError::BadPartition(format!(
                    "space {} starts at {} but previous slices end at {}",
                    spec.id, spec.offset, cursor
                )));
            }
            if spec.dim == 0 {
                return Err(CoreError::BadPartition(format!(
                    "space {} has zero dimension",
                    spec.id
                )));
            }
            if !(spec.max_distance > 0.0) {
                return Err(CoreError::BadPartition(format!(
                    "space {} has non-positive max_distance",
                    spec.id
                )));
            }
            cursor += spec.dim;
        }
        Ok(Self {
            specs,
            total_dim: cursor,
        })
    }

    pub fn get(&self, id: SpaceId) -> Result<&GoalSpaceSpec, CoreError> {
        self.specs
            .iter()
            .find(|s| s.id == id)
            .ok_or(CoreError::UnknownSpace(id))
    }

    pub fn by_name(&self, name: &str) -> Option<&GoalSpaceSpec> {
        self.specs.iter().find(|s| s.name == name)
    }

    pub fn specs(&self) -> &[GoalSpaceSpec] {
        &self.specs
    }

    pub fn total_dim(&self) -> usize {
        self.total_dim
    }

    /// The slice of `outcome` belonging to space `id`.
    pub fn slice<'a>(&self, outcome: &'a Outcome, id: SpaceId) -> Result<&'a [f64], CoreError> {
        let spec = self.get(id)?;
        if outcome.dim() != self.total_dim {
            return Err(CoreError::DimensionMismatch {
                expected: self.total_dim,
                got: outcome.dim(),
            });
        }
        spec.slice(outcome)
    }
}

/// One unit of experience: the atom of the knowledge base.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Experiment {
    pub context: Context,
    pub theta: PolicyParams,
    pub outcome: Outcome,
    /// Dropped after outcome extraction unless a run keeps trajectories.
    pub trajectory: Option<Trajectory>,
    pub iteration: usize,
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Reward of outcome `o` for goal `p`: minus the Euclidean distance between
/// the goal and the matching outcome slice, divided by the space's maximal
/// distance. Zero iff the slice equals the target; in [-1, 0] whenever both
/// lie in the space's bounding box.
pub fn modular_reward(
    p: &Problem,
    o: &Outcome,
    spaces: &GoalSpaceRegistry,
) -> Result<f64, CoreError> {
    let spec = spaces.get(p.space_id)?;
    if p.target.len() != spec.dim {
        return Err(CoreError::DimensionMismatch {
            expected: spec.dim,
            got: p.target.len(),
        });
    }
    let slice = spaces.slice(o, p.space_id)?;
    Ok(-(euclidean(&p.target, slice) / spec.max_distance))
}

/// Goal of the ball-pusher example: reach ball translation `translation`
/// while trading off wall clearance and energy with weights `alpha`/`beta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallPusherGoal {
    pub translation: [f64; 2],
    pub alpha: f64,
    pub beta: f64,
}

/// Episode descriptors of the ball-pusher example environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallPusherOutcome {
    /// Ball translation over the rollout.
    pub translation: [f64; 2],
    /// Minimal distance to any wall over the rollout.
    pub min_wall_distance: f64,
    /// Motor energy spent over the rollout.
    pub energy: f64,
}

/// Three-term weighted reward of the parameterized ball-pushing problem:
/// `alpha * exp(-|d_g - d1|^2) + beta * d2 + (1 - alpha - beta) * exp(-d3^2)`.
pub fn ball_pusher_reward(
    goal: &BallPusherGoal,
    _context: &Context,
    outcome: &BallPusherOutcome,
) -> Result<f64, CoreError> {
    if goal.alpha < 0.0 || goal.beta < 0.0 || goal.alpha + goal.beta > 1.0 {
        return Err(CoreError::InvalidWeights {
            alpha: goal.alpha,
            beta: goal.beta,
        });
    }
    let dx = goal.translation[0] - outcome.translation[0];
    let dy = goal.translation[1] - outcome.translation[1];
    let translation_term = (-(dx * dx + dy * dy)).exp();
    let energy_term = (-(outcome.energy * outcome.energy)).exp();
    Ok(goal.alpha * translation_term
        + goal.beta * outcome.min_wall_distance
        + (1.0 - goal.alpha - goal.beta) * energy_term)
}

/// The reward function one stored experiment induces over all goals: a
/// closure that scores any goal against the recorded outcome without
/// touching the experiment.
pub fn partial_reward_function<'a>(
    _context: &'a Context,
    _theta: &'a PolicyParams,
    outcome: &'a Outcome,
    spaces: &'a GoalSpaceRegistry,
) -> impl Fn(&Problem) -> Result<f64, CoreError> + 'a {
    move |p| modular_reward(p, outcome, spaces)
}
