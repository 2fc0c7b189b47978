//! Dynamical movement primitives: 8 parameters per joint become a smooth
//! 30-step joint trajectory.
//!
//! Each joint runs a critically damped spring `y'' = a_y (b_y (g - y) - y')`
//! toward its end position `g`, perturbed by a forcing term
//! `f(x) = (sum_i psi_i(x) w_i / sum_i psi_i(x)) * x * (g - y0)` built from
//! Gaussian bases over the canonical coordinate `x`, which itself decays as
//! `x' = -a_x x` from `x = 1`. Because `f` is scaled by `x`, perturbations
//! fade over the course of the movement and the joint settles at `g`.
//!
//! Integration is explicit Euler over unit canonical time with a fixed number
//! of substeps per output step, so identical inputs give bit-identical
//! trajectories.

use crate::config::DmpSettings;
use crate::core::{CoreError, PolicyParams};

/// Per-joint rollout configuration with precomputed basis layout.
#[derive(Debug, Clone, PartialEq)]
pub struct DmpConfig {
    pub settings: DmpSettings,
    /// Basis centers in the canonical coordinate, strictly decreasing from 1.
    basis_centers: Vec<f64>,
    /// Basis widths, chosen so adjacent bases cross near half height.
    basis_widths: Vec<f64>,
}

impl DmpConfig {
    pub fn new(settings: DmpSettings) -> Self {
        let n = settings.n_basis;
        // Centers equally spaced in time, mapped through the canonical decay.
        let centers: Vec<f64> = (0..n)
            .map(|i| {
                let t = i as f64 / (n - 1) as f64;
                (-settings.alpha_x * t).exp()
            })
            .collect();
        let mut widths = Vec::with_capacity(n);
        for i in 0..n {
            let gap = if i + 1 < n {
                centers[i] - centers[i + 1]
            } else {
                centers[n - 2] - centers[n - 1]
            };
            widths.push(4.0 * std::f64::consts::LN_2 / (gap * gap));
        }
        Self {
            settings,
            basis_centers: centers,
            basis_widths: widths,
        }
    }

    pub fn basis_centers(&self) -> &[f64] {
        &self.basis_centers
    }

    /// Forcing term at canonical coordinate `x` for scaled weights `weights`.
    fn forcing(&self, x: f64, weights: &[f64], end_position: f64) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for ((&c, &h), &w) in self
            .basis_centers
            .iter()
            .zip(&self.basis_widths)
            .zip(weights)
        {
            let psi = (-h * (x - c) * (x - c)).exp();
            num += psi * w;
            den += psi;
        }
        (num / den) * x * (end_position - self.settings.y0)
    }
}

impl Default for DmpConfig {
    fn default() -> Self {
        Self::new(DmpSettings::default())
    }
}

/// The 8 raw parameters of one joint: 7 basis weights plus the end position.
#[derive(Debug, Clone, PartialEq)]
pub struct JointDmpParams {
    pub weights: Vec<f64>,
    pub end_position: f64,
}

impl JointDmpParams {
    pub fn new(weights: Vec<f64>, end_position: f64) -> Result<Self, CoreError> {
        for (index, &w) in weights.iter().enumerate() {
            if !(-1.0..=1.0).contains(&w) {
                return Err(CoreError::OutOfBounds { index, value: w });
            }
        }
        if !(-1.0..=1.0).contains(&end_position) {
            return Err(CoreError::OutOfBounds {
                index: weights.len(),
                value: end_position,
            });
        }
        Ok(Self {
            weights,
            end_position,
        })
    }
}

/// Rolls one joint's spring-damper system out to `n_steps` positions clipped
/// to [-1, 1].
pub fn rollout_joint(params: &JointDmpParams, cfg: &DmpConfig) -> Vec<f64> {
    let s = &cfg.settings;
    let scaled: Vec<f64> = params.weights.iter().map(|w| w * s.weight_gain).collect();
    let g = params.end_position;
    let ds = 1.0 / (s.n_steps * s.substeps) as f64;

    let mut y = s.y0;
    let mut yd = 0.0;
    let mut x = 1.0;
    let mut out = Vec::with_capacity(s.n_steps);
    for _ in 0..s.n_steps {
        for _ in 0..s.substeps {
            let f = cfg.forcing(x, &scaled, g);
            let ydd = s.alpha_y * (s.beta_y * (g - y) - yd) + f;
            let y_next = y + yd * ds;
            let yd_next = yd + ydd * ds;
            let x_next = x - s.alpha_x * x * ds;
            y = y_next;
            yd = yd_next;
            x = x_next;
        }
        out.push(y.clamp(-1.0, 1.0));
    }
    out
}

/// Number of parameters per joint (7 basis weights + end position).
pub const PARAMS_PER_JOINT: usize = 8;
/// Joints of the arm, in block order.
pub const N_JOINTS: usize = 4;
/// Full policy dimensionality of the arm.
pub const ARM_THETA_DIM: usize = N_JOINTS * PARAMS_PER_JOINT;

/// Splits a 32-dim policy into 4 blocks of 8 and rolls each joint out,
/// returning one action row (4 joint positions) per step.
pub fn rollout_arm(theta: &PolicyParams, cfg: &DmpConfig) -> Result<Vec<[f64; N_JOINTS]>, CoreError> {
    let values = theta.values();
    if values.len() != ARM_THETA_DIM {
        return Err(CoreError::DimensionMismatch {
            expected: ARM_THETA_DIM,
            got: values.len(),
        });
    }
    let mut joints = Vec::with_capacity(N_JOINTS);
    for j in 0..N_JOINTS {
        let block = &values[j * PARAMS_PER_JOINT..(j + 1) * PARAMS_PER_JOINT];
        let params = JointDmpParams {
            weights: block[..PARAMS_PER_JOINT - 1].to_vec(),
            end_position: block[PARAMS_PER_JOINT - 1],
        };
        joints.push(rollout_joint(&params, cfg));
    }
    let mut actions = Vec::with_capacity(cfg.settings.n_steps);
    for t in 0..cfg.settings.n_steps {
        actions.push([joints[0][t], joints[1][t], joints[2][t], joints[3][t]]);
    }
    Ok(actions)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zero_params() -> JointDmpParams {
        JointDmpParams::new(vec![0.0; 7], 0.0).unwrap()
    }

    #[test]
    fn no_forcing_no_displacement_stays_at_rest() {
        let cfg = DmpConfig::default();
        let traj = rollout_joint(&zero_params(), &cfg);
        assert_eq!(traj, vec![0.0; 30]);
    }

    #[test]
    fn unforced_spring_converges_to_end_position() {
        let cfg = DmpConfig::default();
        for &g in &[0.8, -0.6, 0.25, 1.0] {
            let params = JointDmpParams::new(vec![0.0; 7], g).unwrap();
            let traj = rollout_joint(&params, &cfg);
            let err = (traj[traj.len() - 1] - g).abs();
            assert!(err < 1e-2, "g = {g}, final error = {err}");
        }
    }

    #[test]
    fn canonical_coordinate_decays_strictly_and_stays_positive() {
        let cfg = DmpConfig::default();
        let s = &cfg.settings;
        let ds = 1.0 / (s.n_steps * s.substeps) as f64;
        let mut x = 1.0;
        let mut prev = x;
        for _ in 0..s.n_steps * s.substeps {
            x -= s.alpha_x * x * ds;
            assert!(x > 0.0 && x < prev);
            prev = x;
        }
        // Late-movement perturbations are negligible by the end.
        assert!((x - (-s.alpha_x).exp()).abs() < 2e-2);
    }

    #[test]
    fn basis_centers_strictly_decreasing() {
        let cfg = DmpConfig::default();
        let centers = cfg.basis_centers();
        assert_eq!(centers.len(), 7);
        assert_eq!(centers[0], 1.0);
        for w in centers.windows(2) {
            assert!(w[0] > w[1]);
        }
    }

    #[test]
    fn identical_inputs_give_bit_identical_outputs() {
        let cfg = DmpConfig::default();
        let params = JointDmpParams::new(
            vec![1.0, 0.760, -0.03, 0.641, 0.274, 0.187, -0.77],
            0.164,
        )
        .unwrap();
        let a = rollout_joint(&params, &cfg);
        let b = rollout_joint(&params, &cfg);
        assert_eq!(a, b);
    }

    #[test]
    fn zero_theta_gives_all_zero_actions() {
        let cfg = DmpConfig::default();
        let theta = PolicyParams::new(vec![0.0; ARM_THETA_DIM]).unwrap();
        let actions = rollout_arm(&theta, &cfg).unwrap();
        assert_eq!(actions.len(), 30);
        assert!(actions.iter().all(|a| a.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn wrong_theta_dimension_is_rejected() {
        let cfg = DmpConfig::default();
        let theta = PolicyParams::new(vec![0.0; 30]).unwrap();
        assert!(matches!(
            rollout_arm(&theta, &cfg),
            Err(CoreError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn joint_blocks_are_independent_and_permutable() {
        let cfg = DmpConfig::default();
        let mut values = Vec::new();
        for j in 0..N_JOINTS {
            for i in 0..PARAMS_PER_JOINT {
                values.push(((j * PARAMS_PER_JOINT + i) as f64 / 40.0).sin() * 0.9);
            }
        }
        let theta = PolicyParams::new(values.clone()).unwrap();
        let base = rollout_arm(&theta, &cfg).unwrap();

        // Swap blocks 1 and 3; columns 1 and 3 of the output swap with them.
        let mut swapped = values.clone();
        for i in 0..PARAMS_PER_JOINT {
            swapped.swap(PARAMS_PER_JOINT + i, 3 * PARAMS_PER_JOINT + i);
        }
        let theta_swapped = PolicyParams::new(swapped).unwrap();
        let permuted = rollout_arm(&theta_swapped, &cfg).unwrap();
        for t in 0..30 {
            assert_eq!(permuted[t][0], base[t][0]);
            assert_eq!(permuted[t][1], base[t][3]);
            assert_eq!(permuted[t][2], base[t][2]);
            assert_eq!(permuted[t][3], base[t][1]);
        }
    }

    #[test]
    fn per_step_position_delta_is_bounded() {
        use rand::{Rng, SeedableRng};
        let cfg = DmpConfig::default();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let values: Vec<f64> = (0..ARM_THETA_DIM)
                .map(|_| rng.random_range(-1.0..=1.0))
                .collect();
            let theta = PolicyParams::new(values).unwrap();
            let actions = rollout_arm(&theta, &cfg).unwrap();
            for t in 1..actions.len() {
                for j in 0..N_JOINTS {
                    let delta = (actions[t][j] - actions[t - 1][j]).abs();
                    assert!(delta <= 0.5, "step {t} joint {j} delta {delta}");
                }
            }
        }
    }
}
