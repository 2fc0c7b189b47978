//! Learning-progress intrinsic rewards and the goal-space bandit.
//!
//! Every time the agent exploits a goal, the achieved reward is compared to
//! the reward the most similar past attempt would get on the current goal;
//! the difference is the intrinsic reward, and its per-space running average
//! feeds a non-stationary bandit that decides which goal space to explore
//! next: a uniform draw with fixed probability, otherwise a soft
//! maximization over the spaces with positive average progress.

use std::collections::BTreeMap;
use std::collections::VecDeque;

use rand::Rng;

use crate::config::{IntrinsicRewardMode, MotivationSettings};
use crate::core::{euclidean, Context, CoreError, GoalSpaceRegistry, Problem, SpaceId};
use crate::memory::kdtree::KdTree;

/// Fixed-capacity window of the most recent values. The mean is summed
/// fresh from the contents, so it always equals a recomputation from the
/// raw history exactly.
#[derive(Debug, Clone)]
pub struct RunningWindow {
    values: VecDeque<f64>,
    capacity: usize,
}

impl RunningWindow {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0);
        Self {
            values: VecDeque::with_capacity(capacity),
            capacity,
        }
    }

    pub fn push(&mut self, value: f64) {
        if self.values.len() == self.capacity {
            self.values.pop_front();
        }
        self.values.push_back(value);
    }

    pub fn mean(&self) -> f64 {
        if self.values.is_empty() {
            0.0
        } else {
            self.values.iter().sum::<f64>() / self.values.len() as f64
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.values.iter()
    }
}

#[derive(Debug, Clone)]
struct HistoryEntry {
    #[allow(dead_code)]
    goal: Vec<f64>,
    #[allow(dead_code)]
    context: Vec<f64>,
    outcome_slice: Vec<f64>,
    reward: f64,
}

#[derive(Debug, Clone)]
struct SpaceHistory {
    entries: Vec<HistoryEntry>,
    index: KdTree,
    window: RunningWindow,
}

/// Per-space history of exploited goals and running-average intrinsic
/// rewards.
#[derive(Debug, Clone)]
pub struct ProgressTracker {
    spaces: BTreeMap<SpaceId, SpaceHistory>,
    mode: IntrinsicRewardMode,
    window: usize,
}

impl ProgressTracker {
    pub fn new(registry: &GoalSpaceRegistry, settings: &MotivationSettings) -> Self {
        let mut spaces = BTreeMap::new();
        for spec in registry.specs() {
            spaces.insert(
                spec.id,
                SpaceHistory {
                    entries: Vec::new(),
                    // Goal and context concatenated. Equidistant baselines
                    // resolve to the most recent attempt, so repeating a goal
                    // measures progress against the last try, not the first.
                    index: KdTree::with_tie_break(
                        spec.dim + 2,
                        500,
                        crate::memory::kdtree::TieBreak::HighestItem,
                    ),
                    window: RunningWindow::new(settings.progress_window),
                },
            );
        }
        Self {
            spaces,
            mode: settings.intrinsic_mode,
            window: settings.progress_window,
        }
    }

    /// Intrinsic reward of achieving `r_achieved` on `goal` in `context`:
    /// the improvement over the most similar past attempt, re-scored against
    /// the current goal. Records the attempt (outcome slice included) as a
    /// baseline for future comparisons and updates the running average.
    ///
    /// The first attempt in a space has no baseline and scores zero.
    pub fn intrinsic_reward(
        &mut self,
        registry: &GoalSpaceRegistry,
        space: SpaceId,
        goal: &[f64],
        context: &Context,
        outcome_slice: &[f64],
        r_achieved: f64,
    ) -> Result<f64, CoreError> {
        let spec = registry.get(space)?;
        if goal.len() != spec.dim || outcome_slice.len() != spec.dim {
            return Err(CoreError::DimensionMismatch {
                expected: spec.dim,
                got: goal.len().max(outcome_slice.len()),
            });
        }
        let history = self
            .spaces
            .get_mut(&space)
            .ok_or(CoreError::UnknownSpace(space))?;

        let mut query = Vec::with_capacity(spec.dim + context.dim());
        query.extend_from_slice(goal);
        query.extend_from_slice(context.values());

        let r_i = match history.index.nearest(&query) {
            None => 0.0,
            Some((item, _)) => {
                let previous = &history.entries[item as usize];
                let r_old = match self.mode {
                    IntrinsicRewardMode::Reevaluate => {
                        -(euclidean(goal, &previous.outcome_slice) / spec.max_distance)
                    }
                    IntrinsicRewardMode::Stored => previous.reward,
                };
                r_achieved - r_old
            }
        };

        let item = history.entries.len() as u32;
        history.index.insert(query, item);
        history.entries.push(HistoryEntry {
            goal: goal.to_vec(),
            context: context.values().to_vec(),
            outcome_slice: outcome_slice.to_vec(),
            reward: r_achieved,
        });
        history.window.push(r_i);
        Ok(r_i)
    }

    /// Current running-average intrinsic reward of a space.
    pub fn average(&self, space: SpaceId) -> f64 {
        self.spaces.get(&space).map_or(0.0, |h| h.window.mean())
    }

    /// Recomputes the running average from the raw window contents; equals
    /// [`Self::average`] by construction and is used as an oracle in tests.
    pub fn average_recomputed(&self, space: SpaceId) -> f64 {
        self.spaces.get(&space).map_or(0.0, |h| {
            if h.window.is_empty() {
                0.0
            } else {
                h.window.values().sum::<f64>() / h.window.len() as f64
            }
        })
    }

    pub fn attempts(&self, space: SpaceId) -> usize {
        self.spaces.get(&space).map_or(0, |h| h.entries.len())
    }

    pub fn window_capacity(&self) -> usize {
        self.window
    }
}

/// Which branch of the bandit produced a selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectionBranch {
    /// The fixed-probability uniform draw.
    Uniform,
    /// The soft maximization over positive running averages.
    SoftMax,
}

/// Non-stationary bandit over goal spaces: with probability
/// `epsilon_random` a uniform space, otherwise proportional to
/// `exp(r_k / sum of positive r)` over spaces with positive running average
/// (uniform again if no space qualifies).
#[derive(Debug, Clone)]
pub struct BanditState {
    space_ids: Vec<SpaceId>,
    averages: Vec<f64>,
    epsilon_random: f64,
}

impl BanditState {
    pub fn new(space_ids: Vec<SpaceId>, settings: &MotivationSettings) -> Self {
        assert!(!space_ids.is_empty());
        let n = space_ids.len();
        Self {
            space_ids,
            averages: vec![0.0; n],
            epsilon_random: settings.epsilon_random,
        }
    }

    pub fn space_ids(&self) -> &[SpaceId] {
        &self.space_ids
    }

    pub fn averages(&self) -> &[f64] {
        &self.averages
    }

    /// Records the latest running average for a space.
    pub fn update(&mut self, space: SpaceId, average: f64) {
        if let Some(i) = self.space_ids.iter().position(|&s| s == space) {
            self.averages[i] = average;
        }
    }

    /// Mass each space gets inside the soft-maximization branch.
    fn softmax_masses(&self) -> Option<Vec<f64>> {
        let positive_sum: f64 = self.averages.iter().filter(|&&r| r > 0.0).sum();
        if positive_sum <= 0.0 {
            return None;
        }
        let weights: Vec<f64> = self
            .averages
            .iter()
            .map(|&r| if r > 0.0 { (r / positive_sum).exp() } else { 0.0 })
            .collect();
        let total: f64 = weights.iter().sum();
        Some(weights.into_iter().map(|w| w / total).collect())
    }

    /// Closed-form selection probabilities (uniform branch included).
    pub fn selection_probabilities(&self) -> Vec<f64> {
        let n = self.space_ids.len() as f64;
        let uniform = 1.0 / n;
        match self.softmax_masses() {
            None => vec![uniform; self.space_ids.len()],
            Some(masses) => masses
                .iter()
                .map(|m| self.epsilon_random * uniform + (1.0 - self.epsilon_random) * m)
                .collect(),
        }
    }

    pub fn select<R: Rng>(&self, rng: &mut R) -> SpaceId {
        self.select_traced(rng).0
    }

    /// Selection plus which branch produced it.
    pub fn select_traced<R: Rng>(&self, rng: &mut R) -> (SpaceId, SelectionBranch) {
        let uniform_pick =
            |rng: &mut R| self.space_ids[rng.random_range(0..self.space_ids.len())];
        if rng.random_range(0.0..1.0) < self.epsilon_random {
            return (uniform_pick(rng), SelectionBranch::Uniform);
        }
        match self.softmax_masses() {
            // No space with positive progress: the soft branch has no mass
            // anywhere, fall back to uniform.
            None => (uniform_pick(rng), SelectionBranch::SoftMax),
            Some(masses) => {
                let mut u = rng.random_range(0.0..1.0);
                for (i, m) in masses.iter().enumerate() {
                    if u < *m {
                        return (self.space_ids[i], SelectionBranch::SoftMax);
                    }
                    u -= m;
                }
                (
                    *self.space_ids.last().expect("non-empty"),
                    SelectionBranch::SoftMax,
                )
            }
        }
    }
}

/// Uniform goal draw in the hyper-box of one space.
pub fn sample_goal<R: Rng>(
    registry: &GoalSpaceRegistry,
    space: SpaceId,
    rng: &mut R,
) -> Result<Problem, CoreError> {
    let spec = registry.get(space)?;
    let target = (0..spec.dim).map(|_| rng.random_range(-1.0..=1.0)).collect();
    Ok(Problem::new(space, target))
}

// ── Synthetic learning-curve demo ───────────────────────────────────────────

/// Scripted competence curve of one imaginary problem, as a function of the
/// number of times it has been trained.
#[derive(Debug, Clone)]
pub enum LearningCurve {
    /// Saturating competence: nothing before `delay` trainings, then an
    /// exponential rise to `plateau` with time constant `tau`.
    Saturating { plateau: f64, delay: f64, tau: f64 },
    /// Constant competence; no progress is ever made.
    Flat { level: f64 },
    /// Constant competence plus observation noise; estimated progress is
    /// noisy but averages to zero.
    NoisyFlat { level: f64, noise: f64 },
}

impl LearningCurve {
    fn competence<R: Rng>(&self, trainings: f64, rng: &mut R) -> f64 {
        match self {
            LearningCurve::Saturating {
                plateau,
                delay,
                tau,
            } => {
                let t = (trainings - delay).max(0.0);
                plateau * (1.0 - (-t / tau).exp())
            }
            LearningCurve::Flat { level } => *level,
            LearningCurve::NoisyFlat { level, noise } => {
                level + rng.random_range(-*noise..=*noise)
            }
        }
    }
}

/// The five curves used by the demo: three staggered learnable problems, one
/// flat, one noisy-flat.
pub fn demo_curves() -> Vec<LearningCurve> {
    vec![
        LearningCurve::Saturating {
            plateau: 0.9,
            delay: 0.0,
            tau: 40.0,
        },
        LearningCurve::Saturating {
            plateau: 0.9,
            delay: 30.0,
            tau: 40.0,
        },
        LearningCurve::Saturating {
            plateau: 0.9,
            delay: 80.0,
            tau: 40.0,
        },
        LearningCurve::Flat { level: 0.5 },
        LearningCurve::NoisyFlat {
            level: 0.5,
            noise: 0.05,
        },
    ]
}

/// One step of the demo trace.
#[derive(Debug, Clone)]
pub struct DemoStep {
    pub step: usize,
    pub arm: usize,
    pub branch: SelectionBranch,
    pub intrinsic_reward: f64,
    pub averages: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct DemoTrace {
    pub steps: Vec<DemoStep>,
    pub n_arms: usize,
}

impl DemoTrace {
    /// Selection counts per arm within `[from, to)`.
    pub fn selection_counts(&self, from: usize, to: usize) -> Vec<usize> {
        let mut counts = vec![0; self.n_arms];
        for s in &self.steps {
            if s.step >= from && s.step < to {
                counts[s.arm] += 1;
            }
        }
        counts
    }

    /// Index of the window (of `window` steps) where the arm's selection
    /// frequency peaks.
    pub fn peak_window(&self, arm: usize, window: usize) -> usize {
        let n_windows = self.steps.len().div_ceil(window);
        let mut best = (0usize, 0usize);
        for w in 0..n_windows {
            let count = self.selection_counts(w * window, (w + 1) * window)[arm];
            if count > best.1 {
                best = (w, count);
            }
        }
        best.0
    }

    /// Fraction of soft-branch selections going to `arm` from step `from`.
    pub fn softmax_share(&self, arm: usize, from: usize) -> f64 {
        let mut total = 0usize;
        let mut hits = 0usize;
        for s in &self.steps {
            if s.step >= from && s.branch == SelectionBranch::SoftMax {
                total += 1;
                if s.arm == arm {
                    hits += 1;
                }
            }
        }
        if total == 0 {
            0.0
        } else {
            hits as f64 / total as f64
        }
    }
}

/// Runs the bandit against scripted learning curves: each selection trains
/// the chosen problem once, the measured progress is the competence delta,
/// and the bandit sees its windowed running average. Returns the full
/// selection trace.
pub fn synthetic_progress_demo<R: Rng>(
    curves: &[LearningCurve],
    steps: usize,
    settings: &MotivationSettings,
    rng: &mut R,
) -> DemoTrace {
    let n = curves.len();
    let mut bandit = BanditState::new((0..n).collect(), settings);
    let mut windows: Vec<RunningWindow> = (0..n)
        .map(|_| RunningWindow::new(settings.progress_window))
        .collect();
    let mut trainings = vec![0usize; n];
    let mut last_competence: Vec<Option<f64>> = vec![None; n];
    let mut trace = Vec::with_capacity(steps);

    for step in 0..steps {
        let (arm, branch) = bandit.select_traced(rng);
        trainings[arm] += 1;
        let competence = curves[arm].competence(trainings[arm] as f64, rng);
        let r_i = match last_competence[arm] {
            None => 0.0,
            Some(previous) => competence - previous,
        };
        last_competence[arm] = Some(competence);
        windows[arm].push(r_i);
        bandit.update(arm, windows[arm].mean());
        trace.push(DemoStep {
            step,
            arm,
            branch,
            intrinsic_reward: r_i,
            averages: bandit.averages().to_vec(),
        });
    }
    DemoTrace {
        steps: trace,
        n_arms: n,
    }
}
