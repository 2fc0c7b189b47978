//! Intrinsically motivated goal exploration processes (IMGEP).
//!
//! An agent explores an environment by sampling its own goals in several
//! outcome spaces, reusing everything it has ever observed through a
//! memory-based inverse model, and allocating its attention across goal
//! spaces with a learning-progress bandit. The crate bundles:
//!
//! - [`core`]: domain types and goal-parameterized rewards;
//! - [`dmp`]: dynamical movement primitives turning 32 parameters into
//!   smooth 30-step arm trajectories;
//! - [`envs`]: a deterministic simulated tool-use environment (arm,
//!   joysticks, rotating toy, ball, light, sound, distractors) and a small
//!   ball-pusher example;
//! - [`memory`]: the experiment archive with exact nearest-neighbor
//!   meta-policies and alternate surrogate/direct policy searches;
//! - [`motivation`]: learning-progress intrinsic rewards and the goal-space
//!   bandit;
//! - [`engine`]: the exploration loop under the RANDOM / RMB / SGS / FC /
//!   AMB conditions;
//! - [`metrics`]: exploration coverage, transfer statistics, loss
//!   estimation, and progress curves;
//! - [`records`]: episode-log and artifact persistence;
//! - [`config`]: every tunable constant in one validated file.

pub mod config;
pub mod core;
pub mod dmp;
pub mod engine;
pub mod envs;
pub mod memory;
pub mod metrics;
pub mod motivation;
pub mod records;
