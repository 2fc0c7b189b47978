//! The exploration loop: one agent, one environment, one condition.
//!
//! Every iteration observes the context, picks a goal space and goal
//! (condition-dependent), asks the memory-based meta-policy for policy
//! parameters (with exploration noise, without it on exploitation episodes,
//! or uniformly at random for babbling), executes the rollout, scores it,
//! and folds the experience back into the archive, the progress tracker,
//! and the bandit.
//!
//! Conditions:
//! - `RANDOM`: a uniformly random policy every iteration, no goals at all;
//! - `RMB`: random model babbling, uniform over goal spaces and goals;
//! - `SGS`: single goal space, always the ball;
//! - `FC`: a fixed hand-designed curriculum over the seven object spaces;
//! - `AMB`: active model babbling, spaces chosen by learning progress.

use std::fmt;
use std::io::Write as IoWrite;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{Config, ConfigError, SelectableSpaces};
use crate::core::{
    modular_reward, CoreError, Experiment, GoalSpaceRegistry, PolicyParams, Problem, SpaceId,
};
use crate::envs::{spaces, EnvError, ToolUseEnv};
use crate::memory::{ArchiveSnapshot, MemoryError, MetaPolicyArchive};
use crate::metrics::CoverageGrid;
use crate::motivation::{sample_goal, BanditState, ProgressTracker};
use crate::records::{EpisodeRecord, LogHeader, LogWriter, RecordError};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error(transparent)]
    Record(#[from] RecordError),
    #[error(transparent)]
    Metrics(#[from] crate::metrics::MetricsError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("run io: {0}")]
    Io(#[from] std::io::Error),
    #[error("unknown environment {0:?} (expected \"tool_use\")")]
    UnknownEnvironment(String),
    #[error("unknown condition {0:?}")]
    UnknownCondition(String),
}

/// Experimental condition of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Condition {
    #[serde(rename = "RANDOM")]
    Random,
    #[serde(rename = "RMB")]
    Rmb,
    #[serde(rename = "SGS")]
    Sgs,
    #[serde(rename = "FC")]
    Fc,
    #[serde(rename = "AMB")]
    Amb,
}

impl Condition {
    pub const ALL: [Condition; 5] = [
        Condition::Random,
        Condition::Rmb,
        Condition::Sgs,
        Condition::Fc,
        Condition::Amb,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Condition::Random => "RANDOM",
            Condition::Rmb => "RMB",
            Condition::Sgs => "SGS",
            Condition::Fc => "FC",
            Condition::Amb => "AMB",
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Condition {
    type Err = RunError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "RANDOM" => Ok(Condition::Random),
            "RMB" => Ok(Condition::Rmb),
            "SGS" => Ok(Condition::Sgs),
            "FC" => Ok(Condition::Fc),
            "AMB" => Ok(Condition::Amb),
            other => Err(RunError::UnknownCondition(other.to_string())),
        }
    }
}

/// Per-run parameters; everything else lives in [`Config`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSettings {
    pub condition: Condition,
    pub iterations: usize,
    pub seed: u64,
    pub env: String,
    /// Archive snapshot cadence in episodes; zero writes only the final one.
    pub snapshot_every: usize,
}

impl RunSettings {
    pub fn new(condition: Condition, iterations: usize, seed: u64) -> Self {
        Self {
            condition,
            iterations,
            seed,
            env: "tool_use".to_string(),
            snapshot_every: 0,
        }
    }
}

/// Copy of the full configuration persisted into every artifact directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run: RunSettings,
    pub config: Config,
}

/// The exploration loop state.
pub struct Explorer {
    env: ToolUseEnv,
    archive: MetaPolicyArchive,
    tracker: ProgressTracker,
    bandit: BanditState,
    registry: std::sync::Arc<GoalSpaceRegistry>,
    condition: Condition,
    total_iterations: usize,
    selectable: Vec<SpaceId>,
    config: Config,
    rng: ChaCha8Rng,
    iteration: usize,
}

impl Explorer {
    pub fn new(config: &Config, run: &RunSettings) -> Result<Self, RunError> {
        if run.env != "tool_use" {
            return Err(RunError::UnknownEnvironment(run.env.clone()));
        }
        config.validate()?;
        let env = ToolUseEnv::new(config);
        let registry = env.registry();
        let selectable: Vec<SpaceId> = match config.engine.selectable_spaces {
            SelectableSpaces::All => spaces::ALL.to_vec(),
            SelectableSpaces::Curriculum => spaces::CURRICULUM.to_vec(),
        };
        let archive = MetaPolicyArchive::new(registry.clone(), env.context_dim(), &config.memory);
        let tracker = ProgressTracker::new(&registry, &config.motivation);
        let bandit = BanditState::new(selectable.clone(), &config.motivation);
        Ok(Self {
            env,
            archive,
            tracker,
            bandit,
            registry,
            condition: run.condition,
            total_iterations: run.iterations,
            selectable,
            config: config.clone(),
            rng: ChaCha8Rng::seed_from_u64(run.seed),
            iteration: 0,
        })
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn archive(&self) -> &MetaPolicyArchive {
        &self.archive
    }

    pub fn registry(&self) -> &GoalSpaceRegistry {
        &self.registry
    }

    pub fn selectable_spaces(&self) -> &[SpaceId] {
        &self.selectable
    }

    /// An immutable meta-policy snapshot for concurrent evaluation.
    pub fn snapshot(&self) -> Result<ArchiveSnapshot, MemoryError> {
        self.archive.snapshot()
    }

    fn random_theta(&mut self) -> PolicyParams {
        let dim = self.env.theta_dim();
        PolicyParams::new(
            (0..dim)
                .map(|_| self.rng.random_range(-1.0..=1.0))
                .collect(),
        )
        .expect("uniform draw is in bounds")
    }

    fn choose_space(&mut self) -> SpaceId {
        match self.condition {
            Condition::Random => unreachable!("RANDOM never chooses a space"),
            Condition::Rmb => self.selectable[self.rng.random_range(0..self.selectable.len())],
            Condition::Sgs => spaces::BALL,
            Condition::Fc => {
                let schedule = spaces::CURRICULUM;
                let phase =
                    (schedule.len() * self.iteration / self.total_iterations).min(schedule.len() - 1);
                schedule[phase]
            }
            Condition::Amb => self.bandit.select(&mut self.rng),
        }
    }

    /// Executes one full iteration and returns its record.
    pub fn run_episode(&mut self) -> Result<EpisodeRecord, RunError> {
        let context = self.env.sample_context();

        // Decide how the policy is produced this episode.
        let bootstrap = self.condition != Condition::Random
            && self.iteration < self.config.engine.bootstrap_episodes;
        let babble = match self.condition {
            Condition::Random => true,
            _ if bootstrap => true,
            _ => self.rng.random_range(0.0..1.0) < self.config.engine.random_babble_fraction,
        };

        let mut space = None;
        let mut goal: Option<Problem> = None;
        let mut exploit = false;
        let theta = if babble {
            self.random_theta()
        } else {
            let k = self.choose_space();
            let g = sample_goal(&self.registry, k, &mut self.rng)?;
            space = Some(k);
            exploit = self.condition == Condition::Amb
                && self.rng.random_range(0.0..1.0) < self.config.engine.exploit_fraction;
            let picked = if exploit {
                self.archive.sample_meta_policy(&g, &context)
            } else {
                self.archive
                    .sample_exploration_meta_policy(&g, &context, &mut self.rng)
            };
            goal = Some(g);
            match picked {
                Ok(theta) => theta,
                // Empty archive: fall back to a random policy.
                Err(MemoryError::EmptyArchive) => self.random_theta(),
                Err(other) => return Err(other.into()),
            }
        };

        let (trajectory, outcome) = self.env.rollout(&theta, &mut self.rng)?;

        let reward = match &goal {
            Some(g) => Some(modular_reward(g, &outcome, &self.registry)?),
            None => None,
        };

        // Only noise-free episodes update the progress estimate.
        let mut intrinsic_reward = None;
        if exploit {
            let g = goal.as_ref().expect("exploit implies a goal");
            let k = g.space_id;
            let slice = self.registry.slice(&outcome, k)?;
            let r_i = self.tracker.intrinsic_reward(
                &self.registry,
                k,
                &g.target,
                &context,
                slice,
                reward.expect("goal implies a reward"),
            )?;
            self.bandit.update(k, self.tracker.average(k));
            intrinsic_reward = Some(r_i);
        }

        let record = EpisodeRecord {
            iteration: self.iteration,
            condition: self.condition.name().to_string(),
            random_babble: babble,
            bootstrap,
            space,
            goal: goal.as_ref().map(|g| g.target.clone()),
            exploit,
            theta: theta.values().to_vec(),
            context: context.values().to_vec(),
            outcome: outcome.full().to_vec(),
            reward,
            intrinsic_reward,
            bandit_averages: self.bandit.averages().to_vec(),
        };

        self.archive.update_archive(Experiment {
            context,
            theta,
            outcome,
            trajectory: self.config.engine.keep_trajectories.then_some(trajectory),
            iteration: self.iteration,
        })?;
        self.iteration += 1;
        Ok(record)
    }

    /// Runs all remaining episodes, handing each record to `sink`.
    pub fn run_to_completion<F>(&mut self, mut sink: F) -> Result<(), RunError>
    where
        F: FnMut(&EpisodeRecord) -> Result<(), RunError>,
    {
        while self.iteration < self.total_iterations {
            let record = self.run_episode()?;
            sink(&record)?;
        }
        Ok(())
    }

    /// Direct environment access for evaluation plumbing.
    pub fn env_mut(&mut self) -> &mut ToolUseEnv {
        &mut self.env
    }
}

/// Paths produced by a persisted run.
#[derive(Debug, Clone)]
pub struct RunArtifact {
    pub dir: PathBuf,
    pub log: PathBuf,
    pub final_archive: PathBuf,
    pub episodes: usize,
}

pub const LOG_FILE: &str = "episodes.ndjson";
pub const MANIFEST_FILE: &str = "config.toml";
pub const SNAPSHOT_DIR: &str = "snapshots";
pub const METRICS_DIR: &str = "metrics";
pub const FINAL_ARCHIVE: &str = "archive_final.ndjson";

/// Runs a full experiment and persists its artifacts: the manifest, the
/// episode log, periodic archive snapshots, and per-space coverage
/// timelines. Fully deterministic given the manifest.
pub fn run_experiment(
    config: &Config,
    run: &RunSettings,
    out_dir: &Path,
) -> Result<RunArtifact, RunError> {
    let mut explorer = Explorer::new(config, run)?;
    std::fs::create_dir_all(out_dir)?;
    let snapshot_dir = out_dir.join(SNAPSHOT_DIR);
    let metrics_dir = out_dir.join(METRICS_DIR);
    std::fs::create_dir_all(&snapshot_dir)?;
    std::fs::create_dir_all(&metrics_dir)?;

    let manifest = RunManifest {
        run: run.clone(),
        config: config.clone(),
    };
    std::fs::write(
        out_dir.join(MANIFEST_FILE),
        toml::to_string_pretty(&manifest).expect("manifest serializes"),
    )?;

    let log_path = out_dir.join(LOG_FILE);
    let header = LogHeader::new(
        run.condition.name(),
        run.seed,
        run.iterations,
        explorer.selectable_spaces().to_vec(),
    );
    let file = std::fs::File::create(&log_path)?;
    let mut log = LogWriter::new(std::io::BufWriter::new(file), &header)?;

    let registry = explorer.registry().clone();
    let mut grids: Vec<CoverageGrid> = registry
        .specs()
        .iter()
        .map(CoverageGrid::new)
        .collect();
    // Timeline rows: iteration then one percentage column per space.
    let mut timeline: Vec<Vec<String>> = Vec::new();
    let coverage_every = config.metrics.coverage_log_every;

    for i in 0..run.iterations {
        let record = explorer.run_episode()?;
        log.append(&record)?;
        for (grid, spec) in grids.iter_mut().zip(registry.specs()) {
            let slice = &record.outcome[spec.offset..spec.offset + spec.dim];
            grid.update(slice)?;
        }
        let episode_number = i + 1;
        if episode_number % coverage_every == 0 || episode_number == run.iterations {
            let mut row = vec![episode_number.to_string()];
            row.extend(grids.iter().map(|g| format!("{:.6}", g.percentage())));
            timeline.push(row);
        }
        if run.snapshot_every > 0 && episode_number % run.snapshot_every == 0 {
            let path = snapshot_dir.join(format!("archive_{episode_number:08}.ndjson"));
            dump_archive(explorer.archive(), &path)?;
        }
    }

    let final_archive = snapshot_dir.join(FINAL_ARCHIVE);
    dump_archive(explorer.archive(), &final_archive)?;

    let mut columns: Vec<String> = vec!["episode".to_string()];
    columns.extend(registry.specs().iter().map(|s| s.name.clone()));
    let column_refs: Vec<&str> = columns.iter().map(|s| s.as_str()).collect();
    crate::records::write_csv(
        &metrics_dir.join("coverage_timeline.csv"),
        "imgep.coverage",
        &column_refs,
        &timeline,
    )?;

    Ok(RunArtifact {
        dir: out_dir.to_path_buf(),
        log: log_path,
        final_archive,
        episodes: run.iterations,
    })
}

fn dump_archive(archive: &MetaPolicyArchive, path: &Path) -> Result<(), RunError> {
    let file = std::fs::File::create(path)?;
    let mut writer = std::io::BufWriter::new(file);
    archive.dump(&mut writer)?;
    writer.flush()?;
    Ok(())
}

/// Loads the manifest of a persisted run.
pub fn read_manifest(dir: &Path) -> Result<RunManifest, RunError> {
    let text = std::fs::read_to_string(dir.join(MANIFEST_FILE))?;
    let manifest: RunManifest =
        toml::from_str(&text).map_err(|e| RunError::Config(ConfigError::Parse(e)))?;
    manifest.config.validate()?;
    Ok(manifest)
}
