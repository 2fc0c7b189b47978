//! Wheeled-robot ball-pushing environment for the parameterized-problem
//! reward example: a differential-drive robot in a square walled arena can
//! push a ball around. An episode is described by the ball translation, the
//! minimal wall clearance, and the motor energy spent.
//!
//! The policy is a linear sensor-to-motor map: theta, reshaped to a 2 x 7
//! matrix, maps [1, ball offset (2), heading (2), position (2)] through tanh
//! to the two wheel speeds.

use crate::core::{BallPusherOutcome, Context, CoreError, PolicyParams};
use crate::envs::EnvError;

/// Sensor vector length of the closed-loop controller.
pub const N_SENSORS: usize = 7;
/// Policy dimensionality: one weight row per motor.
pub const THETA_DIM: usize = 2 * N_SENSORS;
/// Context dimensionality: robot position then ball position.
pub const CONTEXT_DIM: usize = 4;

/// Everything one rollout produced; the trajectory is kept so descriptors
/// can be recomputed from it.
#[derive(Debug, Clone)]
pub struct BallPusherRollout {
    pub outcome: BallPusherOutcome,
    pub robot_path: Vec<[f64; 2]>,
    pub ball_path: Vec<[f64; 2]>,
    pub motor_history: Vec<[f64; 2]>,
}

#[derive(Debug, Clone)]
pub struct BallPusherEnv {
    pub n_steps: usize,
    pub dt: f64,
    pub speed_gain: f64,
    pub turn_gain: f64,
    pub push_radius: f64,
}

impl Default for BallPusherEnv {
    fn default() -> Self {
        Self {
            n_steps: 50,
            dt: 0.1,
            speed_gain: 1.0,
            turn_gain: 2.0,
            push_radius: 0.15,
        }
    }
}

impl BallPusherEnv {
    /// Distance from a point to the closest of the four walls at +-1.
    pub fn wall_distance(p: &[f64; 2]) -> f64 {
        let dx = (1.0 - p[0]).min(1.0 + p[0]);
        let dy = (1.0 - p[1]).min(1.0 + p[1]);
        dx.min(dy).max(0.0)
    }

    /// Runs the closed-loop controller from the given context (robot x, y,
    /// ball x, y; heading starts at zero).
    pub fn rollout(
        &self,
        theta: &PolicyParams,
        context: &Context,
    ) -> Result<BallPusherRollout, EnvError> {
        if theta.dim() != THETA_DIM {
            return Err(CoreError::DimensionMismatch {
                expected: THETA_DIM,
                got: theta.dim(),
            }
            .into());
        }
        if context.dim() != CONTEXT_DIM {
            return Err(EnvError::ContextDimension {
                expected: CONTEXT_DIM,
                got: context.dim(),
            });
        }
        let w = theta.values();
        let c = context.values();
        let mut robot = [c[0], c[1]];
        let mut ball = [c[2], c[3]];
        let ball_start = ball;
        let mut heading: f64 = 0.0;

        let mut robot_path = vec![robot];
        let mut ball_path = vec![ball];
        let mut motor_history = Vec::with_capacity(self.n_steps);
        let mut min_wall = Self::wall_distance(&robot);
        let mut energy = 0.0;

        for _ in 0..self.n_steps {
            let sensors = [
                1.0,
                ball[0] - robot[0],
                ball[1] - robot[1],
                heading.cos(),
                heading.sin(),
                robot[0],
                robot[1],
            ];
            let mut motors = [0.0; 2];
            for (m, motor) in motors.iter_mut().enumerate() {
                let row = &w[m * N_SENSORS..(m + 1) * N_SENSORS];
                let sum: f64 = row.iter().zip(&sensors).map(|(a, b)| a * b).sum();
                *motor = sum.tanh();
            }
            let forward = 0.5 * (motors[0] + motors[1]) * self.speed_gain;
            heading += (motors[1] - motors[0]) * self.turn_gain * self.dt;
            robot[0] = (robot[0] + forward * heading.cos() * self.dt).clamp(-1.0, 1.0);
            robot[1] = (robot[1] + forward * heading.sin() * self.dt).clamp(-1.0, 1.0);

            // Contact pushes the ball straight away from the robot until it
            // clears the push radius.
            let dx = ball[0] - robot[0];
            let dy = ball[1] - robot[1];
            let dist = (dx * dx + dy * dy).sqrt();
            if dist < self.push_radius {
                let (nx, ny) = if dist > 1e-12 {
                    (dx / dist, dy / dist)
                } else {
                    (heading.cos(), heading.sin())
                };
                ball[0] = (robot[0] + nx * self.push_radius).clamp(-1.0, 1.0);
                ball[1] = (robot[1] + ny * self.push_radius).clamp(-1.0, 1.0);
            }

            energy += (motors[0] * motors[0] + motors[1] * motors[1]) * self.dt;
            min_wall = min_wall.min(Self::wall_distance(&robot));
            robot_path.push(robot);
            ball_path.push(ball);
            motor_history.push(motors);
        }

        Ok(BallPusherRollout {
            outcome: BallPusherOutcome {
                translation: [ball[0] - ball_start[0], ball[1] - ball_start[1]],
                min_wall_distance: min_wall,
                energy,
            },
            robot_path,
            ball_path,
            motor_history,
        })
    }
}
