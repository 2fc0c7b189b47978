//! The knowledge base of past experiments and the memory-based meta-policies
//! over it.
//!
//! The archive is append-only. For every goal space it maintains a kd-tree
//! over points that concatenate the normalized outcome slice with the
//! (weighted, diameter-normalized) context, so that the nearest stored point
//! under squared Euclidean distance is exactly the experiment minimizing
//! `R_p(c', theta, o)^2 + w * (|c - c'| / diam(C))^2`. Both terms then live
//! in [0, 1], so the configured weight compares like with like. Queries are
//! exact and tie-break on the lowest experiment index, which makes every
//! answer reproducible and equal to an exhaustive scan.

pub mod kdtree;
pub mod surrogate;

use std::io::{BufRead, Write};
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::MemorySettings;
use crate::core::{
    modular_reward, Context, CoreError, Experiment, GoalSpaceRegistry, GoalSpaceSpec, Outcome,
    PolicyParams, Problem, SpaceId,
};
use kdtree::KdTree;

#[derive(Debug, Error)]
pub enum MemoryError {
    #[error("archive is empty: bootstrap with random policies required")]
    EmptyArchive,
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("archive io: {0}")]
    Io(#[from] std::io::Error),
    #[error("archive format: {0}")]
    Format(String),
    #[error("archive json: {0}")]
    Json(#[from] serde_json::Error),
}

const ARCHIVE_SCHEMA: &str = "imgep.archive";
const ARCHIVE_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct ArchiveHeader {
    schema: String,
    version: u32,
    context_dim: usize,
    outcome_dim: usize,
}

/// Append-only experiment store with per-space exact nearest-neighbor
/// indexes.
#[derive(Debug, Clone)]
pub struct MetaPolicyArchive {
    registry: Arc<GoalSpaceRegistry>,
    experiments: Vec<Experiment>,
    trees: Vec<KdTree>,
    context_dim: usize,
    /// Std dev of the per-component exploration noise.
    sigma: f64,
    /// Square root of the context weight in the query metric.
    context_scale: f64,
}

impl MetaPolicyArchive {
    pub fn new(
        registry: Arc<GoalSpaceRegistry>,
        context_dim: usize,
        settings: &MemorySettings,
    ) -> Self {
        let trees = registry
            .specs()
            .iter()
            .map(|spec| KdTree::new(spec.dim + context_dim, settings.rebuild_every))
            .collect();
        let context_diameter = 2.0 * (context_dim as f64).sqrt();
        Self {
            registry,
            experiments: Vec::new(),
            trees,
            context_dim,
            sigma: settings.exploration_variance.sqrt(),
            context_scale: settings.context_weight.sqrt() / context_diameter,
        }
    }

    pub fn len(&self) -> usize {
        self.experiments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.experiments.is_empty()
    }

    pub fn experiments(&self) -> &[Experiment] {
        &self.experiments
    }

    pub fn registry(&self) -> &GoalSpaceRegistry {
        &self.registry
    }

    /// The index-space point of a (target, context) pair in space `spec`:
    /// the target scaled by the space diameter, then the context scaled by
    /// the weighted context diameter. Exposed so scan oracles share the
    /// arithmetic.
    pub fn query_point(&self, spec: &GoalSpaceSpec, target: &[f64], context: &Context) -> Vec<f64> {
        let mut point = Vec::with_capacity(spec.dim + self.context_dim);
        for &v in target {
            point.push(v / spec.max_distance);
        }
        for &c in context.values() {
            point.push(c * self.context_scale);
        }
        point
    }

    /// Appends one experiment and indexes it in every goal space.
    pub fn update_archive(&mut self, experiment: Experiment) -> Result<(), MemoryError> {
        if experiment.context.dim() != self.context_dim {
            return Err(CoreError::DimensionMismatch {
                expected: self.context_dim,
                got: experiment.context.dim(),
            }
            .into());
        }
        let item = self.experiments.len() as u32;
        for (spec, tree) in self.registry.specs().iter().zip(&mut self.trees) {
            let slice = self.registry.slice(&experiment.outcome, spec.id)?;
            let point = {
                let mut p = Vec::with_capacity(spec.dim + self.context_dim);
                for &v in slice {
                    p.push(v / spec.max_distance);
                }
                for &c in experiment.context.values() {
                    p.push(c * self.context_scale);
                }
                p
            };
            tree.insert(point, item);
        }
        self.experiments.push(experiment);
        Ok(())
    }

    fn tree_for(&self, space: SpaceId) -> Result<(&GoalSpaceSpec, &KdTree), MemoryError> {
        let pos = self
            .registry
            .specs()
            .iter()
            .position(|s| s.id == space)
            .ok_or(CoreError::UnknownSpace(space))?;
        Ok((&self.registry.specs()[pos], &self.trees[pos]))
    }

    /// The stored experiment minimizing
    /// `R_p(c', theta, o)^2 + w |c - c'|^2`, ties broken by the lowest
    /// experiment index. Returns the experiment and the objective value.
    pub fn query_best(
        &self,
        p: &Problem,
        c: &Context,
    ) -> Result<(&Experiment, f64), MemoryError> {
        if self.experiments.is_empty() {
            return Err(MemoryError::EmptyArchive);
        }
        let (spec, tree) = self.tree_for(p.space_id)?;
        if p.target.len() != spec.dim {
            return Err(CoreError::DimensionMismatch {
                expected: spec.dim,
                got: p.target.len(),
            }
            .into());
        }
        let query = self.query_point(spec, &p.target, c);
        let (item, objective) = tree.nearest(&query).expect("tree tracks experiments");
        Ok((&self.experiments[item as usize], objective))
    }

    /// The target meta-policy: policy parameters of the best stored match.
    pub fn sample_meta_policy(&self, p: &Problem, c: &Context) -> Result<PolicyParams, MemoryError> {
        Ok(self.query_best(p, c)?.0.theta.clone())
    }

    /// The exploration meta-policy: the target answer plus per-component
    /// Gaussian noise, clipped back into [-1, 1].
    pub fn sample_exploration_meta_policy<R: Rng>(
        &self,
        p: &Problem,
        c: &Context,
        rng: &mut R,
    ) -> Result<PolicyParams, MemoryError> {
        let base = self.sample_meta_policy(p, c)?;
        let noise = exploration_noise(base.dim(), self.sigma, rng);
        let values = base
            .values()
            .iter()
            .zip(noise)
            .map(|(v, n)| v + n)
            .collect();
        Ok(PolicyParams::clipped(values))
    }

    /// An immutable copy of the archive usable for evaluation while
    /// exploration keeps writing.
    pub fn snapshot(&self) -> Result<ArchiveSnapshot, MemoryError> {
        if self.experiments.is_empty() {
            return Err(MemoryError::EmptyArchive);
        }
        Ok(ArchiveSnapshot {
            inner: self.clone(),
        })
    }

    /// Writes the archive as one header line plus one record per line.
    /// Round-trips policy parameters, contexts, and outcomes exactly.
    pub fn dump<W: Write>(&self, mut writer: W) -> Result<(), MemoryError> {
        let header = ArchiveHeader {
            schema: ARCHIVE_SCHEMA.to_string(),
            version: ARCHIVE_VERSION,
            context_dim: self.context_dim,
            outcome_dim: self.registry.total_dim(),
        };
        serde_json::to_writer(&mut writer, &header)?;
        writer.write_all(b"\n")?;
        for experiment in &self.experiments {
            serde_json::to_writer(&mut writer, experiment)?;
            writer.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Reads an archive written by [`Self::dump`], rebuilding the indexes.
    pub fn load<R: BufRead>(
        reader: R,
        registry: Arc<GoalSpaceRegistry>,
        settings: &MemorySettings,
    ) -> Result<Self, MemoryError> {
        let mut lines = reader.lines();
        let header_line = lines
            .next()
            .ok_or_else(|| MemoryError::Format("missing header line".into()))??;
        let header: ArchiveHeader = serde_json::from_str(&header_line)?;
        if header.schema != ARCHIVE_SCHEMA {
            return Err(MemoryError::Format(format!(
                "unexpected schema {:?}",
                header.schema
            )));
        }
        if header.version != ARCHIVE_VERSION {
            return Err(MemoryError::Format(format!(
                "unsupported archive version {} (expected {})",
                header.version, ARCHIVE_VERSION
            )));
        }
        if header.outcome_dim != registry.total_dim() {
            return Err(MemoryError::Format(format!(
                "archive outcome dim {} does not match registry dim {}",
                header.outcome_dim,
                registry.total_dim()
            )));
        }
        let mut archive = Self::new(registry, header.context_dim, settings);
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let experiment: Experiment = serde_json::from_str(&line)?;
            archive.update_archive(experiment)?;
        }
        Ok(archive)
    }
}

/// Zero-mean Gaussian noise vector with per-component std dev `sigma`.
pub fn exploration_noise<R: Rng>(dim: usize, sigma: f64, rng: &mut R) -> Vec<f64> {
    let normal = Normal::new(0.0, sigma).expect("valid std dev");
    (0..dim).map(|_| normal.sample(rng)).collect()
}

/// Frozen archive copy. Answers never change after the snapshot is taken.
#[derive(Debug, Clone)]
pub struct ArchiveSnapshot {
    inner: MetaPolicyArchive,
}

impl ArchiveSnapshot {
    pub fn len(&self) -> usize {
        self.inner.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inner.is_empty()
    }

    pub fn registry(&self) -> &GoalSpaceRegistry {
        self.inner.registry()
    }

    pub fn experiments(&self) -> &[Experiment] {
        self.inner.experiments()
    }

    pub fn query_best(&self, p: &Problem, c: &Context) -> Result<(&Experiment, f64), MemoryError> {
        self.inner.query_best(p, c)
    }

    pub fn sample_meta_policy(&self, p: &Problem, c: &Context) -> Result<PolicyParams, MemoryError> {
        self.inner.sample_meta_policy(p, c)
    }
}

/// Greedy coordinate pattern search with shrinking step, maximizing `f`.
/// Consumes at most `budget` evaluations, including the one on `start`.
fn pattern_search<F>(
    start: Vec<f64>,
    budget: usize,
    initial_step: f64,
    min_step: f64,
    mut f: F,
) -> (Vec<f64>, f64)
where
    F: FnMut(&[f64]) -> f64,
{
    debug_assert!(budget > 0);
    let mut evals = 0usize;
    let mut incumbent = start;
    let mut best = f(&incumbent);
    evals += 1;
    let mut step = initial_step;
    while step >= min_step && evals < budget {
        let mut improved = false;
        'sweep: for i in 0..incumbent.len() {
            for delta in [step, -step] {
                if evals >= budget {
                    break 'sweep;
                }
                let mut candidate = incumbent.clone();
                candidate[i] = (candidate[i] + delta).clamp(-1.0, 1.0);
                if candidate[i] == incumbent[i] {
                    continue;
                }
                let value = f(&candidate);
                evals += 1;
                if value > best {
                    incumbent = candidate;
                    best = value;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    (incumbent, best)
}

/// Refines the memory-based answer by maximizing a locally weighted
/// regression surrogate of the reward, never executing the environment.
/// Falls back to the plain memory-based answer when the archive is smaller
/// than the surrogate neighborhood or the budget is zero.
pub fn optimize_with_surrogate(
    archive: &MetaPolicyArchive,
    p: &Problem,
    c: &Context,
    budget: usize,
    settings: &MemorySettings,
) -> Result<PolicyParams, MemoryError> {
    let theta0 = archive.sample_meta_policy(p, c)?;
    if budget == 0 || archive.len() < settings.surrogate_neighbors {
        return Ok(theta0);
    }
    let mut points = Vec::with_capacity(archive.len());
    let mut rewards = Vec::with_capacity(archive.len());
    for e in archive.experiments() {
        let mut z = Vec::with_capacity(c.dim() + e.theta.dim());
        z.extend_from_slice(e.context.values());
        z.extend_from_slice(e.theta.values());
        points.push(z);
        rewards.push(modular_reward(p, &e.outcome, archive.registry())?);
    }
    let k = settings.surrogate_neighbors;
    let ridge = settings.surrogate_ridge;
    let context_values = c.values().to_vec();
    let objective = |theta: &[f64]| {
        let mut z = Vec::with_capacity(context_values.len() + theta.len());
        z.extend_from_slice(&context_values);
        z.extend_from_slice(theta);
        surrogate::lwr_predict(&points, &rewards, &z, k, ridge)
    };
    let (best, _) = pattern_search(
        theta0.values().to_vec(),
        budget,
        settings.pattern_initial_step,
        settings.pattern_min_step,
        objective,
    );
    Ok(PolicyParams::clipped(best))
}

/// Why a direct optimization run stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DirectStop {
    /// The rollout budget was exhausted.
    Budget,
    /// The goal reward crossed the configured threshold.
    RewardThreshold,
    /// The environment context drifted too far from the starting context.
    ContextDrift,
}

#[derive(Debug, Clone)]
pub struct DirectSearchResult {
    pub best_theta: PolicyParams,
    pub best_reward: f64,
    pub rollouts_used: usize,
    pub stop: DirectStop,
}

/// Direct policy optimization against the live environment: pattern search
/// around the memory-based answer where every candidate is actually rolled
/// out. Every rollout is archived, so nothing the search learns is lost.
///
/// `rollout` observes the environment context at execution time and returns
/// it with the outcome; the search stops when the budget runs out, the goal
/// reward exceeds the configured threshold, or the observed context drifts
/// beyond the configured distance from `start_context`.
pub fn optimize_direct<F>(
    archive: &mut MetaPolicyArchive,
    goal: &Problem,
    start_context: &Context,
    budget: usize,
    settings: &MemorySettings,
    mut rollout: F,
) -> Result<DirectSearchResult, MemoryError>
where
    F: FnMut(&PolicyParams) -> (Context, Outcome),
{
    let theta0 = archive.sample_meta_policy(goal, start_context)?;
    let mut rollouts = 0usize;
    let mut stop = DirectStop::Budget;

    let mut evaluate = |theta: &PolicyParams,
                        archive: &mut MetaPolicyArchive,
                        rollouts: &mut usize|
     -> Result<(f64, Option<DirectStop>), MemoryError> {
        let (observed_context, outcome) = rollout(theta);
        let reward = modular_reward(goal, &outcome, archive.registry())?;
        let drift = start_context.distance(&observed_context);
        let iteration = archive.len();
        archive.update_archive(Experiment {
            context: observed_context,
            theta: theta.clone(),
            outcome,
            trajectory: None,
            iteration,
        })?;
        *rollouts += 1;
        let stop = if reward > settings.direct_reward_threshold {
            Some(DirectStop::RewardThreshold)
        } else if drift > settings.direct_context_drift {
            Some(DirectStop::ContextDrift)
        } else {
            None
        };
        Ok((reward, stop))
    };

    let mut best_theta = theta0.clone();
    let mut step = settings.pattern_initial_step;

    let (r0, s0) = evaluate(&theta0, archive, &mut rollouts)?;
    let mut best_reward = r0;
    if let Some(s) = s0 {
        stop = s;
    } else {
        'outer: while step >= settings.pattern_min_step && rollouts < budget {
            let mut improved = false;
            for i in 0..best_theta.dim() {
                for delta in [step, -step] {
                    if rollouts >= budget {
                        break 'outer;
                    }
                    let mut candidate = best_theta.values().to_vec();
                    candidate[i] = (candidate[i] + delta).clamp(-1.0, 1.0);
                    let candidate = PolicyParams::clipped(candidate);
                    if candidate.values()[i] == best_theta.values()[i] {
                        continue;
                    }
                    let (reward, s) = evaluate(&candidate, archive, &mut rollouts)?;
                    if reward > best_reward {
                        best_theta = candidate;
                        best_reward = reward;
                        improved = true;
                    }
                    if let Some(s) = s {
                        stop = s;
                        break 'outer;
                    }
                }
            }
            if !improved {
                step *= 0.5;
            }
        }
    }

    Ok(DirectSearchResult {
        best_theta,
        best_reward,
        rollouts_used: rollouts,
        stop,
    })
}
