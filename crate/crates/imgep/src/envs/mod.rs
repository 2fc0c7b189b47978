//! Deterministic seeded environments implementing the interaction contract:
//! observe a context, roll a parameterized policy out, get back a trajectory
//! and an outcome vector.

pub mod ball_pusher;
pub mod tool_use;

use thiserror::Error;

use crate::core::CoreError;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("context has {got} components, environment expects {expected}")]
    ContextDimension { expected: usize, got: usize },
}

pub use ball_pusher::BallPusherEnv;
pub use tool_use::{spaces, ToolUseEnv};
