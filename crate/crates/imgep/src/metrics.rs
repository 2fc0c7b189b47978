//! Exploration measures and evaluation of learned meta-policies.
//!
//! Coverage counts occupied cells in a fixed discretization of each outcome
//! space's physical variables. Transfer statistics count how often goals in
//! one space moved another object. The loss estimator Monte-Carlo samples
//! goals and contexts, replays the snapshot's answers in the environment,
//! and averages the negated rewards. All of it recomputes from episode logs
//! alone.

use std::collections::BTreeSet;

use rand::Rng;
use thiserror::Error;

use crate::core::{
    modular_reward, Context, CoreError, GoalSpaceRegistry, GoalSpaceSpec, SpaceId,
};
use crate::envs::{EnvError, ToolUseEnv};
use crate::memory::{ArchiveSnapshot, MemoryError};
use crate::motivation::sample_goal;
use crate::records::EpisodeRecord;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error("evaluation needs at least one test sample")]
    NoTestSamples,
    #[error("log value out of expected range: {0}")]
    BadLog(String),
}

/// Occupancy grid over one space's projected physical variables. Each
/// outcome slice contributes its 10 time samples; occupancy only grows.
#[derive(Debug, Clone)]
pub struct CoverageGrid {
    space: SpaceId,
    vars: usize,
    bins: usize,
    slice_dim: usize,
    occupied: BTreeSet<Vec<u16>>,
}

impl CoverageGrid {
    pub fn new(spec: &GoalSpaceSpec) -> Self {
        Self {
            space: spec.id,
            vars: spec.coverage.vars_per_sample,
            bins: spec.coverage.bins_per_axis,
            slice_dim: spec.dim,
            occupied: BTreeSet::new(),
        }
    }

    pub fn space(&self) -> SpaceId {
        self.space
    }

    pub fn total_cells(&self) -> usize {
        self.bins.pow(self.vars as u32)
    }

    pub fn occupied_cells(&self) -> usize {
        self.occupied.len()
    }

    /// Occupancy as a percentage of all cells.
    pub fn percentage(&self) -> f64 {
        100.0 * self.occupied.len() as f64 / self.total_cells() as f64
    }

    fn bin(&self, v: f64) -> u16 {
        let clamped = v.clamp(-1.0, 1.0);
        let b = ((clamped + 1.0) / 2.0 * self.bins as f64) as usize;
        b.min(self.bins - 1) as u16
    }

    /// Bins every time sample of one outcome slice; returns the occupied
    /// cell count afterwards.
    pub fn update(&mut self, slice: &[f64]) -> Result<usize, MetricsError> {
        if slice.len() != self.slice_dim {
            return Err(CoreError::DimensionMismatch {
                expected: self.slice_dim,
                got: slice.len(),
            }
            .into());
        }
        for sample in slice.chunks(self.vars) {
            let cell: Vec<u16> = sample.iter().map(|&v| self.bin(v)).collect();
            self.occupied.insert(cell);
        }
        Ok(self.occupied.len())
    }
}

/// Final per-space coverage recomputed from an episode log.
pub fn coverage_from_records(
    registry: &GoalSpaceRegistry,
    records: &[EpisodeRecord],
) -> Result<Vec<CoverageGrid>, MetricsError> {
    let mut grids: Vec<CoverageGrid> = registry.specs().iter().map(CoverageGrid::new).collect();
    for r in records {
        if r.outcome.len() != registry.total_dim() {
            return Err(MetricsError::BadLog(format!(
                "outcome of iteration {} has {} dims",
                r.iteration,
                r.outcome.len()
            )));
        }
        for (grid, spec) in grids.iter_mut().zip(registry.specs()) {
            grid.update(&r.outcome[spec.offset..spec.offset + spec.dim])?;
        }
    }
    Ok(grids)
}

/// Whether an object's outcome slice shows movement: any time sample
/// deviating from the first sample beyond the threshold in any variable.
pub fn slice_moved(slice: &[f64], vars: usize, threshold: f64) -> bool {
    let first = &slice[..vars];
    slice
        .chunks(vars)
        .any(|s| s.iter().zip(first).any(|(a, b)| (a - b).abs() > threshold))
}

/// Transfer matrix: for every goal space (plus the random-policy bucket),
/// the fraction of its episodes that moved each object.
#[derive(Debug, Clone)]
pub struct TransferStats {
    /// Row labels: goal-space ids, `None` for the random bucket.
    pub rows: Vec<Option<SpaceId>>,
    /// Column labels: object space ids.
    pub columns: Vec<SpaceId>,
    /// `proportions[row][column]` in [0, 1].
    pub proportions: Vec<Vec<f64>>,
    /// Episodes aggregated per row.
    pub row_counts: Vec<usize>,
}

impl TransferStats {
    pub fn proportion(&self, row: Option<SpaceId>, column: SpaceId) -> Option<f64> {
        let r = self.rows.iter().position(|&x| x == row)?;
        let c = self.columns.iter().position(|&x| x == column)?;
        Some(self.proportions[r][c])
    }
}

/// Computes the transfer matrix from an episode log.
pub fn transfer_stats(
    registry: &GoalSpaceRegistry,
    records: &[EpisodeRecord],
    threshold: f64,
) -> Result<TransferStats, MetricsError> {
    let columns: Vec<SpaceId> = registry.specs().iter().map(|s| s.id).collect();
    let mut rows: Vec<Option<SpaceId>> = registry.specs().iter().map(|s| Some(s.id)).collect();
    rows.push(None);

    let mut moved_counts = vec![vec![0usize; columns.len()]; rows.len()];
    let mut row_counts = vec![0usize; rows.len()];

    for r in records {
        if r.outcome.len() != registry.total_dim() {
            return Err(MetricsError::BadLog(format!(
                "outcome of iteration {} has {} dims",
                r.iteration,
                r.outcome.len()
            )));
        }
        let row = match r.space {
            Some(k) => rows.iter().position(|&x| x == Some(k)).ok_or_else(|| {
                MetricsError::BadLog(format!("unknown space {k} at iteration {}", r.iteration))
            })?,
            None => rows.len() - 1,
        };
        row_counts[row] += 1;
        for (c, spec) in registry.specs().iter().enumerate() {
            let slice = &r.outcome[spec.offset..spec.offset + spec.dim];
            if slice_moved(slice, spec.coverage.vars_per_sample, threshold) {
                moved_counts[row][c] += 1;
            }
        }
    }

    let proportions = moved_counts
        .iter()
        .zip(&row_counts)
        .map(|(row, &n)| {
            row.iter()
                .map(|&m| if n == 0 { 0.0 } else { m as f64 / n as f64 })
                .collect()
        })
        .collect();
    Ok(TransferStats {
        rows,
        columns,
        proportions,
        row_counts,
    })
}

/// Monte-Carlo estimate of the meta-policy loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossEstimate {
    /// Negated mean reward over the test samples.
    pub loss: f64,
    pub std_error: f64,
    pub samples: usize,
}

/// Estimates the loss of a frozen meta-policy on uniformly sampled goals
/// and contexts. `space` restricts goals to one space; `None` samples the
/// goal space uniformly as well. Each sample forces the environment into
/// the drawn context, executes the snapshot's noise-free answer, and scores
/// the produced outcome against the goal.
pub fn evaluate_loss<R: Rng>(
    snapshot: &ArchiveSnapshot,
    env: &mut ToolUseEnv,
    space: Option<SpaceId>,
    samples: usize,
    rng: &mut R,
) -> Result<LossEstimate, MetricsError> {
    if samples == 0 {
        return Err(MetricsError::NoTestSamples);
    }
    let registry = snapshot.registry();
    let space_ids: Vec<SpaceId> = registry.specs().iter().map(|s| s.id).collect();
    let mut rewards = Vec::with_capacity(samples);
    for _ in 0..samples {
        let k = match space {
            Some(k) => k,
            None => space_ids[rng.random_range(0..space_ids.len())],
        };
        let goal = sample_goal(registry, k, rng)?;
        let context = Context::new(vec![
            rng.random_range(-1.0..=1.0),
            rng.random_range(-1.0..=1.0),
        ])
        .expect("uniform draw in bounds");
        env.set_state(&context)?;
        let theta = snapshot.sample_meta_policy(&goal, &context)?;
        let (_, outcome) = env.rollout(&theta, rng)?;
        rewards.push(modular_reward(&goal, &outcome, registry)?);
    }
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let variance = rewards.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
    Ok(LossEstimate {
        loss: -mean,
        std_error: (variance / n).sqrt(),
        samples,
    })
}

/// Per-episode bandit running averages extracted from a log, for plotting.
/// Returns `(iterations, series)` where `series[i]` is aligned with the
/// log header's selectable spaces.
pub fn progress_curves(records: &[EpisodeRecord]) -> (Vec<usize>, Vec<Vec<f64>>) {
    let iterations = records.iter().map(|r| r.iteration).collect();
    let series = records.iter().map(|r| r.bandit_averages.clone()).collect();
    (iterations, series)
}

/// Recomputes the running averages from the logged per-episode intrinsic
/// rewards with a windowed mean; the oracle for the logged series.
pub fn recompute_progress_curves(
    records: &[EpisodeRecord],
    selectable: &[SpaceId],
    window: usize,
) -> Vec<Vec<f64>> {
    let mut windows: Vec<crate::motivation::RunningWindow> = selectable
        .iter()
        .map(|_| crate::motivation::RunningWindow::new(window))
        .collect();
    let mut out = Vec::with_capacity(records.len());
    let mut current: Vec<f64> = vec![0.0; selectable.len()];
    for r in records {
        if let (Some(k), Some(r_i)) = (r.space, r.intrinsic_reward) {
            if let Some(i) = selectable.iter().position(|&s| s == k) {
                windows[i].push(r_i);
                current[i] = windows[i].mean();
            }
        }
        out.push(current.clone());
    }
    out
}
