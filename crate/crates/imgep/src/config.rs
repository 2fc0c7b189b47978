//! Consolidated run configuration: every physics, search, and scheduling
//! constant lives here so experiments can be tuned without code changes.
//!
//! The file format is TOML. [`Config::default`] is the reference parameter
//! set; a config file may override any subset of fields and is validated on
//! load.

use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("failed to read config file: {0}")]
    Io(#[from] std::io::Error),
    #[error("failed to parse config file: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Dynamical movement primitive constants (one spring-damper per joint).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct DmpSettings {
    /// Number of Gaussian basis functions per joint.
    pub n_basis: usize,
    /// Output trajectory length in steps.
    pub n_steps: usize,
    /// Internal Euler substeps per output step.
    pub substeps: usize,
    /// Simulated rollout duration in seconds (metadata; integration runs in
    /// unit canonical time so that the canonical state decays to e^{-alpha_x}).
    pub duration: f64,
    /// Spring gain.
    pub alpha_y: f64,
    /// Damping gain; critical damping requires `beta_y = alpha_y / 4`.
    pub beta_y: f64,
    /// Canonical system decay rate.
    pub alpha_x: f64,
    /// Gain applied to raw basis weights in [-1, 1] before the forcing term.
    pub weight_gain: f64,
    /// Joint start position (rest).
    pub y0: f64,
}

impl Default for DmpSettings {
    fn default() -> Self {
        Self {
            n_basis: 7,
            n_steps: 30,
            substeps: 10,
            duration: 5.0,
            alpha_y: 25.0,
            beta_y: 6.25,
            alpha_x: 5.0,
            weight_gain: 2.0,
            y0: 0.0,
        }
    }
}

/// Arm kinematics: a 4-joint serial chain.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ArmSettings {
    /// Link lengths, shoulder to hand.
    pub link_lengths: [f64; 4],
    /// Joint value 1.0 maps to this angle in radians.
    pub joint_angle_range: f64,
}

impl Default for ArmSettings {
    fn default() -> Self {
        Self {
            link_lengths: [0.5, 0.4, 0.3, 0.2],
            joint_angle_range: std::f64::consts::FRAC_PI_2,
        }
    }
}

/// Joystick contact model.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct JoystickSettings {
    /// Base of the left joystick in normalized hand coordinates.
    pub left_base: [f64; 3],
    /// Base of the right joystick in normalized hand coordinates.
    pub right_base: [f64; 3],
    /// Hand-to-base distance below which the left stick follows the hand.
    pub left_radius: f64,
    /// Hand-to-base distance below which the right stick follows the hand.
    pub right_radius: f64,
    /// Per-step multiplicative return-to-center factor when released.
    pub spring_return: f64,
}

impl Default for JoystickSettings {
    fn default() -> Self {
        Self {
            left_base: [0.45, 0.20, -0.80],
            right_base: [0.60, 0.30, -0.20],
            left_radius: 0.15,
            right_radius: 0.17,
            spring_return: 0.5,
        }
    }
}

/// Rotating-arm toy controlled by the right joystick.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ErgoSettings {
    /// Rotation speed in rad/step per unit of joystick x deflection.
    pub rotation_gain: f64,
    /// Per-step multiplicative extension decay when the stick is released.
    pub extension_return: f64,
    /// Rotation is reset to zero after this many episodes.
    pub reset_period: usize,
}

impl Default for ErgoSettings {
    fn default() -> Self {
        Self {
            rotation_gain: 0.25,
            extension_return: 0.5,
            reset_period: 40,
        }
    }
}

/// Ball dynamics in the polar arena.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct BallSettings {
    /// Radius the sloped arena pulls the ball back to.
    pub equilibrium_extension: f64,
    /// Per-step fraction of the gap to the equilibrium closed by the slope.
    pub slope_rate: f64,
    /// Toy tip radius at zero extension.
    pub tip_base_radius: f64,
    /// Additional tip radius per unit extension.
    pub tip_extension_gain: f64,
    /// Radial clearance beyond the toy tip within which the ball is driven.
    pub contact_radius: f64,
    /// Angular half-width of the toy arm's contact face, radians.
    pub contact_angle: f64,
    /// Per-step fraction of the gap between the ball's spin and the toy's
    /// speed closed during contact; the ball is massy and needs a sustained
    /// drive to reach full speed.
    pub spin_response: f64,
    /// Outward drift per unit squared angular speed.
    pub centrifugal_gain: f64,
    /// Per-step multiplicative decay of the ball's angular speed.
    pub spin_friction: f64,
}

impl Default for BallSettings {
    fn default() -> Self {
        Self {
            equilibrium_extension: 0.35,
            slope_rate: 0.02,
            tip_base_radius: 0.08,
            tip_extension_gain: 0.70,
            contact_radius: 0.1,
            contact_angle: 0.6,
            spin_response: 0.10,
            centrifugal_gain: 2.0,
            spin_friction: 0.95,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct LightSettings {
    /// Ball angular speed (rad/step) above which the light turns on.
    pub speed_threshold: f64,
    /// Angular speed mapping to full intensity.
    pub speed_scale: f64,
    /// Per-step multiplicative decay when the ball is slow.
    pub decay: f64,
}

impl Default for LightSettings {
    fn default() -> Self {
        Self {
            speed_threshold: 0.16,
            speed_scale: 0.3,
            decay: 0.5,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct SoundSettings {
    /// Ball extension at which the border is hit and a sound plays.
    pub border_extension: f64,
}

impl Default for SoundSettings {
    fn default() -> Self {
        Self {
            border_extension: 0.85,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct DistractorSettings {
    /// Per-component per-step uniform noise amplitude.
    pub noise_amplitude: f64,
    /// Rest positions the two distractors are reset to after each rollout.
    pub rest_positions: [[f64; 2]; 2],
}

impl Default for DistractorSettings {
    fn default() -> Self {
        Self {
            noise_amplitude: 0.05,
            rest_positions: [[0.3, -0.4], [-0.6, 0.2]],
        }
    }
}

/// Fixed positions of the six immovable scene objects.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct StaticObjectSettings {
    pub right_hand: [f64; 3],
    pub camera: [f64; 3],
    pub arena: [f64; 2],
    pub toy: [f64; 2],
    pub button: [f64; 2],
    pub lamp: [f64; 2],
}

impl Default for StaticObjectSettings {
    fn default() -> Self {
        Self {
            right_hand: [0.6, -0.2, -0.5],
            camera: [0.0, 0.8, 0.5],
            arena: [0.0, 0.0],
            toy: [0.9, 0.9],
            button: [-0.9, 0.9],
            lamp: [0.7, -0.7],
        }
    }
}

/// Archive, meta-policy, and policy-search constants.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct MemorySettings {
    /// Per-component variance of the exploration noise added by the
    /// exploration meta-policy.
    pub exploration_variance: f64,
    /// Spatial indexes are rebuilt balanced after this many insertions.
    pub rebuild_every: usize,
    /// Weight on the squared context distance in the meta-policy objective.
    pub context_weight: f64,
    /// Neighborhood size for the locally weighted reward surrogate.
    pub surrogate_neighbors: usize,
    /// Ridge term stabilizing the weighted least-squares fit.
    pub surrogate_ridge: f64,
    /// Initial coordinate step of the pattern search.
    pub pattern_initial_step: f64,
    /// Pattern search stops when the step shrinks below this.
    pub pattern_min_step: f64,
    /// Direct optimization stops once the goal reward exceeds this.
    pub direct_reward_threshold: f64,
    /// Direct optimization stops once the context drifts farther than this.
    pub direct_context_drift: f64,
}

impl Default for MemorySettings {
    fn default() -> Self {
        Self {
            exploration_variance: 0.05,
            rebuild_every: 500,
            context_weight: 1.0,
            surrogate_neighbors: 20,
            surrogate_ridge: 1e-8,
            pattern_initial_step: 0.2,
            pattern_min_step: 1e-3,
            direct_reward_threshold: -0.01,
            direct_context_drift: 0.2,
        }
    }
}

/// How the history entry used as the progress baseline is re-scored.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum IntrinsicRewardMode {
    /// Re-evaluate the stored outcome against the current goal (default).
    Reevaluate,
    /// Use the reward the old experiment achieved on its own goal.
    Stored,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct MotivationSettings {
    /// Window length of the per-space running average of intrinsic rewards.
    pub progress_window: usize,
    /// Probability of the bandit's uniform branch.
    pub epsilon_random: f64,
    pub intrinsic_mode: IntrinsicRewardMode,
}

impl Default for MotivationSettings {
    fn default() -> Self {
        Self {
            progress_window: 50,
            epsilon_random: 0.2,
            intrinsic_mode: IntrinsicRewardMode::Reevaluate,
        }
    }
}

/// Which goal spaces the space-selection policies may choose from.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum SelectableSpaces {
    /// All declared outcome spaces, including distractors and static objects.
    All,
    /// Only the seven controllable-object spaces (hand through sound).
    Curriculum,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct EngineSettings {
    /// Fraction of iterations executed with a uniformly random policy.
    pub random_babble_fraction: f64,
    /// Number of initial random-policy episodes seeding the archive.
    pub bootstrap_episodes: usize,
    /// Fraction of goal-directed episodes run without exploration noise
    /// (these are the episodes that update the progress estimate).
    pub exploit_fraction: f64,
    pub selectable_spaces: SelectableSpaces,
    /// Keep full trajectories in the archive instead of dropping them after
    /// outcome extraction.
    pub keep_trajectories: bool,
}

impl Default for EngineSettings {
    fn default() -> Self {
        Self {
            random_babble_fraction: 0.1,
            bootstrap_episodes: 30,
            exploit_fraction: 0.2,
            selectable_spaces: SelectableSpaces::All,
            keep_trajectories: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsSettings {
    /// Outcome-slice deviation above which an object counts as moved.
    pub moved_threshold: f64,
    /// Coverage is appended to the run timeline every this many episodes.
    pub coverage_log_every: usize,
}

impl Default for MetricsSettings {
    fn default() -> Self {
        Self {
            moved_threshold: 0.02,
            coverage_log_every: 50,
        }
    }
}

/// The complete parameter set for one experiment.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub dmp: DmpSettings,
    pub arm: ArmSettings,
    pub joysticks: JoystickSettings,
    pub ergo: ErgoSettings,
    pub ball: BallSettings,
    pub light: LightSettings,
    pub sound: SoundSettings,
    pub distractors: DistractorSettings,
    pub statics: StaticObjectSettings,
    pub memory: MemorySettings,
    pub motivation: MotivationSettings,
    pub engine: EngineSettings,
    pub metrics: MetricsSettings,
}

impl Config {
    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Config = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        fn check(ok: bool, msg: &str) -> Result<(), ConfigError> {
            if ok {
                Ok(())
            } else {
                Err(ConfigError::Invalid(msg.to_string()))
            }
        }
        check(self.dmp.n_basis >= 2, "dmp.n_basis must be at least 2")?;
        check(self.dmp.n_steps > 0, "dmp.n_steps must be positive")?;
        check(self.dmp.substeps > 0, "dmp.substeps must be positive")?;
        check(self.dmp.alpha_y > 0.0, "dmp.alpha_y must be positive")?;
        check(self.dmp.beta_y > 0.0, "dmp.beta_y must be positive")?;
        check(self.dmp.alpha_x > 0.0, "dmp.alpha_x must be positive")?;
        check(
            self.joysticks.left_radius > 0.0 && self.joysticks.right_radius > 0.0,
            "joystick interaction radii must be positive",
        )?;
        check(
            self.memory.exploration_variance >= 0.0,
            "memory.exploration_variance must be non-negative",
        )?;
        check(
            self.memory.rebuild_every > 0,
            "memory.rebuild_every must be positive",
        )?;
        check(
            self.memory.surrogate_neighbors >= 2,
            "memory.surrogate_neighbors must be at least 2",
        )?;
        check(
            self.motivation.progress_window > 0,
            "motivation.progress_window must be positive",
        )?;
        check(
            (0.0..=1.0).contains(&self.motivation.epsilon_random),
            "motivation.epsilon_random must be in [0, 1]",
        )?;
        check(
            (0.0..=1.0).contains(&self.engine.random_babble_fraction),
            "engine.random_babble_fraction must be in [0, 1]",
        )?;
        check(
            (0.0..=1.0).contains(&self.engine.exploit_fraction),
            "engine.exploit_fraction must be in [0, 1]",
        )?;
        check(
            self.metrics.moved_threshold > 0.0,
            "metrics.moved_threshold must be positive",
        )?;
        check(
            self.metrics.coverage_log_every > 0,
            "metrics.coverage_log_every must be positive",
        )?;
        check(self.ergo.reset_period > 0, "ergo.reset_period must be positive")?;
        Ok(())
    }
}
