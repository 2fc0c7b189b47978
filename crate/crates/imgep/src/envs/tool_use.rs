//! Simulated multi-object tool-use environment.
//!
//! A 4-joint arm in front of two joysticks: the right joystick drives a
//! rotating toy arm in a sloped polar arena, the toy can whack a ball, the
//! ball's speed lights a lamp and hitting the border plays a sound whose
//! pitch follows the ball angle. Two distractor objects random-walk and six
//! objects never move. The scene state is the concatenation of all 15 object
//! states (31 variables, each in [-1, 1]); an episode is 30 steps and its
//! outcome samples every object's trajectory 10 times (310 features).
//!
//! Only the toy and ball survive an episode: everything else is reset after
//! each rollout, so the observable context is the pair of persisted rotation
//! angles. The toy rotation is additionally reset to zero every fixed number
//! of episodes.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::Rng;

use crate::config::Config;
use crate::core::{
    Context, CoverageRule, GoalSpaceRegistry, GoalSpaceSpec, Outcome, PolicyParams, Trajectory,
};
use crate::dmp::{self, DmpConfig};
use crate::envs::EnvError;

/// Goal-space ids of the tool-use environment, in declaration order.
pub mod spaces {
    use crate::core::SpaceId;

    pub const HAND: SpaceId = 1;
    pub const LEFT_JOYSTICK: SpaceId = 2;
    pub const RIGHT_JOYSTICK: SpaceId = 3;
    pub const ERGO: SpaceId = 4;
    pub const BALL: SpaceId = 5;
    pub const LIGHT: SpaceId = 6;
    pub const SOUND: SpaceId = 7;
    pub const DISTRACTOR_1: SpaceId = 8;
    pub const DISTRACTOR_2: SpaceId = 9;
    pub const STATIC_RIGHT_HAND: SpaceId = 10;
    pub const STATIC_CAMERA: SpaceId = 11;
    pub const STATIC_ARENA: SpaceId = 12;
    pub const STATIC_TOY: SpaceId = 13;
    pub const STATIC_BUTTON: SpaceId = 14;
    pub const STATIC_LAMP: SpaceId = 15;

    /// The seven controllable-object spaces, easiest first.
    pub const CURRICULUM: [SpaceId; 7] = [
        HAND,
        LEFT_JOYSTICK,
        RIGHT_JOYSTICK,
        ERGO,
        BALL,
        LIGHT,
        SOUND,
    ];

    /// All declared spaces.
    pub const ALL: [SpaceId; 15] = [
        HAND,
        LEFT_JOYSTICK,
        RIGHT_JOYSTICK,
        ERGO,
        BALL,
        LIGHT,
        SOUND,
        DISTRACTOR_1,
        DISTRACTOR_2,
        STATIC_RIGHT_HAND,
        STATIC_CAMERA,
        STATIC_ARENA,
        STATIC_TOY,
        STATIC_BUTTON,
        STATIC_LAMP,
    ];
}

/// Per-object variable counts in the scene state vector, in object order.
const OBJECT_VARS: [usize; 15] = [3, 2, 2, 2, 2, 1, 1, 2, 2, 3, 3, 2, 2, 2, 2];
/// Scene state dimensionality.
pub const STATE_DIM: usize = 31;
/// Trajectory samples per object in the outcome.
pub const SAMPLES_PER_OBJECT: usize = 10;
/// Full outcome dimensionality.
pub const OUTCOME_DIM: usize = 310;
/// Episode length in steps.
pub const N_STEPS: usize = 30;
/// Context dimensionality (toy rotation, ball rotation).
pub const CONTEXT_DIM: usize = 2;

fn wrap_angle(a: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let mut r = (a + PI) % two_pi;
    if r < 0.0 {
        r += two_pi;
    }
    r - PI
}


// ── 3D helpers for the arm chain ───────────────────────────────────────────

type Mat3 = [[f64; 3]; 3];

fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut m = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            m[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
        }
    }
    m
}

fn mat_vec(a: &Mat3, v: &[f64; 3]) -> [f64; 3] {
    [
        a[0][0] * v[0] + a[0][1] * v[1] + a[0][2] * v[2],
        a[1][0] * v[0] + a[1][1] * v[1] + a[1][2] * v[2],
        a[2][0] * v[0] + a[2][1] * v[1] + a[2][2] * v[2],
    ]
}

fn rot_x(a: f64) -> Mat3 {
    let (s, c) = a.sin_cos();
    [[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]]
}

fn rot_y(a: f64) -> Mat3 {
    let (s, c) = a.sin_cos();
    [[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]]
}

fn rot_z(a: f64) -> Mat3 {
    let (s, c) = a.sin_cos();
    [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]
}

/// End-effector position of the 4-joint chain, normalized by total reach so
/// every coordinate stays within the unit box for reasonable poses.
fn forward_kinematics(joints: &[f64; 4], cfg: &Config) -> [f64; 3] {
    let gain = cfg.arm.joint_angle_range;
    let lengths = cfg.arm.link_lengths;
    let down = [0.0, 0.0, -1.0];
    let axes = [
        rot_y(joints[0] * gain),
        rot_x(joints[1] * gain),
        rot_z(joints[2] * gain),
        rot_y(joints[3] * gain),
    ];
    let mut rotation = axes[0];
    let mut position = [0.0; 3];
    for (i, length) in lengths.iter().enumerate() {
        if i > 0 {
            rotation = mat_mul(&rotation, &axes[i]);
        }
        let dir = mat_vec(&rotation, &down);
        for d in 0..3 {
            position[d] += dir[d] * length;
        }
    }
    let reach: f64 = lengths.iter().sum();
    [
        (position[0] / reach).clamp(-1.0, 1.0),
        (position[1] / reach).clamp(-1.0, 1.0),
        (position[2] / reach).clamp(-1.0, 1.0),
    ]
}

// ── Scene simulation ────────────────────────────────────────────────────────

/// Mutable per-episode scene state.
#[derive(Debug, Clone)]
struct SimState {
    hand: [f64; 3],
    left_joy: [f64; 2],
    right_joy: [f64; 2],
    ergo_rot: f64,
    ergo_ext: f64,
    ball_rot: f64,
    ball_ext: f64,
    ball_omega: f64,
    light: f64,
    sound: f64,
    distractors: [[f64; 2]; 2],
}

/// One simulation step: the hand moves to `hand`, then effects propagate
/// down the interaction chain (hand -> joysticks -> toy -> ball -> light and
/// sound), and the distractors random-walk.
fn step_sim<R: Rng>(sim: &mut SimState, hand: [f64; 3], cfg: &Config, rng: &mut R) {
    sim.hand = hand;

    // Joysticks follow the hand while it is close, spring back otherwise.
    for (deflection, base, radius) in [
        (
            &mut sim.left_joy,
            &cfg.joysticks.left_base,
            cfg.joysticks.left_radius,
        ),
        (
            &mut sim.right_joy,
            &cfg.joysticks.right_base,
            cfg.joysticks.right_radius,
        ),
    ] {
        let dist = ((sim.hand[0] - base[0]).powi(2)
            + (sim.hand[1] - base[1]).powi(2)
            + (sim.hand[2] - base[2]).powi(2))
        .sqrt();
        if dist <= radius {
            deflection[0] = ((sim.hand[0] - base[0]) / radius).clamp(-1.0, 1.0);
            deflection[1] = ((sim.hand[1] - base[1]) / radius).clamp(-1.0, 1.0);
        } else {
            deflection[0] *= cfg.joysticks.spring_return;
            deflection[1] *= cfg.joysticks.spring_return;
        }
    }

    // Right joystick drives the toy: x controls rotation speed, y > 0 its
    // extension; the extension springs back when the stick is released.
    let tip_omega = sim.right_joy[0] * cfg.ergo.rotation_gain;
    sim.ergo_rot = wrap_angle(sim.ergo_rot + tip_omega);
    if sim.right_joy[1] > 0.0 {
        sim.ergo_ext = sim.right_joy[1].min(1.0);
    } else {
        sim.ergo_ext *= cfg.ergo.extension_return;
    }

    // Ball: the toy arm reaches from the arena center out to its tip; a
    // ball within the arm's radial reach and angular face is carried along
    // and spun up (it is massy, so speed builds over sustained contact).
    // Free, it coasts against friction. Speed throws it outward; the sloped
    // arena pulls it back in.
    let tip_radius = cfg.ball.tip_base_radius + cfg.ball.tip_extension_gain * sim.ergo_ext;
    let radial_gap = sim.ball_ext - tip_radius;
    let angular_gap = wrap_angle(sim.ball_rot - sim.ergo_rot);
    let contact =
        radial_gap <= cfg.ball.contact_radius && angular_gap.abs() <= cfg.ball.contact_angle;
    if contact {
        sim.ball_omega += cfg.ball.spin_response * (tip_omega - sim.ball_omega);
        // The arm face carries the ball with it.
        sim.ball_rot = sim.ergo_rot;
    } else {
        sim.ball_omega *= cfg.ball.spin_friction;
        sim.ball_rot = wrap_angle(sim.ball_rot + sim.ball_omega);
    }
    sim.ball_ext += cfg.ball.centrifugal_gain * sim.ball_omega * sim.ball_omega;
    sim.ball_ext += cfg.ball.slope_rate * (cfg.ball.equilibrium_extension - sim.ball_ext);
    sim.ball_ext = sim.ball_ext.clamp(0.0, 1.0);

    // Light follows the ball's angular speed above a threshold.
    let speed = sim.ball_omega.abs();
    if speed > cfg.light.speed_threshold {
        sim.light = (speed / cfg.light.speed_scale).clamp(0.0, 1.0);
    } else {
        sim.light *= cfg.light.decay;
    }

    // Border contact plays a sound pitched by the ball angle.
    sim.sound = if sim.ball_ext >= cfg.sound.border_extension {
        sim.ball_rot / PI
    } else {
        0.0
    };

    // Distractors random-walk regardless of everything above.
    let amp = cfg.distractors.noise_amplitude;
    for d in &mut sim.distractors {
        for v in d.iter_mut() {
            *v = (*v + rng.random_range(-amp..=amp)).clamp(-1.0, 1.0);
        }
    }
}

fn export_state(sim: &SimState, cfg: &Config) -> Vec<f64> {
    let mut s = Vec::with_capacity(STATE_DIM);
    s.extend_from_slice(&sim.hand);
    s.extend_from_slice(&sim.left_joy);
    s.extend_from_slice(&sim.right_joy);
    s.push(sim.ergo_rot / PI);
    s.push(sim.ergo_ext);
    s.push(sim.ball_rot / PI);
    s.push(sim.ball_ext);
    s.push(sim.light);
    s.push(sim.sound);
    s.extend_from_slice(&sim.distractors[0]);
    s.extend_from_slice(&sim.distractors[1]);
    s.extend_from_slice(&cfg.statics.right_hand);
    s.extend_from_slice(&cfg.statics.camera);
    s.extend_from_slice(&cfg.statics.arena);
    s.extend_from_slice(&cfg.statics.toy);
    s.extend_from_slice(&cfg.statics.button);
    s.extend_from_slice(&cfg.statics.lamp);
    debug_assert_eq!(s.len(), STATE_DIM);
    s
}

/// Builds the 15-space goal registry matching the scene layout: 10 samples
/// of each object's variables, hyper-box normalization, and the coverage
/// rules (20 bins per axis in 3D, 10 in 2D, 100 in 1D).
pub fn tool_use_registry() -> GoalSpaceRegistry {
    let names = [
        "hand",
        "left_joystick",
        "right_joystick",
        "ergo",
        "ball",
        "light",
        "sound",
        "distractor_1",
        "distractor_2",
        "static_right_hand",
        "static_camera",
        "static_arena",
        "static_toy",
        "static_button",
        "static_lamp",
    ];
    let mut specs = Vec::with_capacity(15);
    let mut offset = 0;
    for (i, (&vars, name)) in OBJECT_VARS.iter().zip(names).enumerate() {
        let dim = vars * SAMPLES_PER_OBJECT;
        let bins = match vars {
            3 => 20,
            2 => 10,
            _ => 100,
        };
        specs.push(GoalSpaceSpec::boxed(
            i + 1,
            name,
            dim,
            offset,
            CoverageRule {
                vars_per_sample: vars,
                bins_per_axis: bins,
            },
        ));
        offset += dim;
    }
    debug_assert_eq!(offset, OUTCOME_DIM);
    GoalSpaceRegistry::new(specs).expect("layout partitions the outcome vector")
}

/// The simulated environment. One instance is a single mutable state
/// machine: a rollout needs exclusive access, independent instances may run
/// in parallel.
#[derive(Debug, Clone)]
pub struct ToolUseEnv {
    config: Config,
    dmp: DmpConfig,
    registry: Arc<GoalSpaceRegistry>,
    ergo_rot: f64,
    ergo_ext: f64,
    ball_rot: f64,
    ball_ext: f64,
    ball_omega: f64,
    episodes_done: usize,
}

impl ToolUseEnv {
    pub fn new(config: &Config) -> Self {
        Self {
            config: config.clone(),
            dmp: DmpConfig::new(config.dmp.clone()),
            registry: Arc::new(tool_use_registry()),
            ergo_rot: 0.0,
            ergo_ext: 0.0,
            ball_rot: 0.0,
            ball_ext: config.ball.equilibrium_extension,
            ball_omega: 0.0,
            episodes_done: 0,
        }
    }

    pub fn registry(&self) -> Arc<GoalSpaceRegistry> {
        Arc::clone(&self.registry)
    }

    pub fn context_dim(&self) -> usize {
        CONTEXT_DIM
    }

    pub fn theta_dim(&self) -> usize {
        dmp::ARM_THETA_DIM
    }

    pub fn n_steps(&self) -> usize {
        N_STEPS
    }

    /// The observable context: the persisted toy and ball rotation angles,
    /// normalized. Not an i.i.d. draw; the distribution emerges from what
    /// past episodes left behind.
    pub fn sample_context(&self) -> Context {
        Context::new(vec![self.ergo_rot / PI, self.ball_rot / PI])
            .expect("persisted state stays in bounds")
    }

    /// Forces the persisted polar positions to the given context and resets
    /// everything else to rest. Used by evaluation to realize arbitrary
    /// test contexts.
    pub fn set_state(&mut self, context: &Context) -> Result<(), EnvError> {
        if context.dim() != CONTEXT_DIM {
            return Err(EnvError::ContextDimension {
                expected: CONTEXT_DIM,
                got: context.dim(),
            });
        }
        self.ergo_rot = context.values()[0] * PI;
        self.ball_rot = context.values()[1] * PI;
        self.ergo_ext = 0.0;
        self.ball_ext = self.config.ball.equilibrium_extension;
        self.ball_omega = 0.0;
        Ok(())
    }

    /// Executes one 30-step episode. States are recorded at the moment each
    /// action is issued, so the first state carries the starting context;
    /// the outcome samples each object's recorded trajectory 10 times. The
    /// arm, joysticks, light, sound, and distractors reset afterwards; the
    /// toy and ball persist.
    pub fn rollout<R: Rng>(
        &mut self,
        theta: &PolicyParams,
        rng: &mut R,
    ) -> Result<(Trajectory, Outcome), EnvError> {
        let actions = dmp::rollout_arm(theta, &self.dmp)?;
        let mut sim = SimState {
            hand: forward_kinematics(&[0.0; 4], &self.config),
            left_joy: [0.0; 2],
            right_joy: [0.0; 2],
            ergo_rot: self.ergo_rot,
            ergo_ext: self.ergo_ext,
            ball_rot: self.ball_rot,
            ball_ext: self.ball_ext,
            ball_omega: self.ball_omega,
            light: 0.0,
            sound: 0.0,
            distractors: self.config.distractors.rest_positions,
        };
        let mut states = Vec::with_capacity(N_STEPS);
        for action in &actions {
            states.push(export_state(&sim, &self.config));
            let hand = forward_kinematics(action, &self.config);
            step_sim(&mut sim, hand, &self.config, rng);
        }

        // Positions persist across episodes; the ball's spin does not (the
        // scene settles between rollouts).
        self.ergo_rot = sim.ergo_rot;
        self.ergo_ext = sim.ergo_ext;
        self.ball_rot = sim.ball_rot;
        self.ball_ext = sim.ball_ext;
        self.ball_omega = 0.0;
        self.episodes_done += 1;
        if self.episodes_done % self.config.ergo.reset_period == 0 {
            self.ergo_rot = 0.0;
        }

        let outcome = extract_outcome(&states);
        let actions_vec: Vec<Vec<f64>> = actions.iter().map(|a| a.to_vec()).collect();
        let trajectory = Trajectory::new(states, actions_vec)?;
        Ok((trajectory, outcome))
    }
}

/// Sample step indices: 10 evenly spaced over the 30 recorded states,
/// ending on the last one.
fn sample_indices() -> [usize; SAMPLES_PER_OBJECT] {
    let mut idx = [0; SAMPLES_PER_OBJECT];
    for (i, v) in idx.iter_mut().enumerate() {
        *v = i * 3 + 2;
    }
    idx
}

/// Concatenates, object by object, 10 samples of the object's state
/// variables over the episode.
pub fn extract_outcome(states: &[Vec<f64>]) -> Outcome {
    debug_assert_eq!(states.len(), N_STEPS);
    let mut full = Vec::with_capacity(OUTCOME_DIM);
    let mut var_offset = 0;
    for vars in OBJECT_VARS {
        for t in sample_indices() {
            full.extend_from_slice(&states[t][var_offset..var_offset + vars]);
        }
        var_offset += vars;
    }
    debug_assert_eq!(full.len(), OUTCOME_DIM);
    Outcome::new(full)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn env() -> ToolUseEnv {
        ToolUseEnv::new(&Config::default())
    }

    fn zero_theta() -> PolicyParams {
        PolicyParams::new(vec![0.0; dmp::ARM_THETA_DIM]).unwrap()
    }

    fn random_theta(rng: &mut ChaCha8Rng) -> PolicyParams {
        PolicyParams::new(
            (0..dmp::ARM_THETA_DIM)
                .map(|_| rng.random_range(-1.0..=1.0))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn registry_partitions_310_dims() {
        let reg = tool_use_registry();
        assert_eq!(reg.total_dim(), OUTCOME_DIM);
        assert_eq!(reg.specs().len(), 15);
        assert_eq!(reg.get(spaces::HAND).unwrap().dim, 30);
        assert_eq!(reg.get(spaces::BALL).unwrap().dim, 20);
        assert_eq!(reg.get(spaces::LIGHT).unwrap().dim, 10);
        assert_eq!(reg.get(spaces::STATIC_CAMERA).unwrap().dim, 30);
    }

    #[test]
    fn fresh_environment_context_is_origin() {
        assert_eq!(env().sample_context().values(), &[0.0, 0.0]);
    }

    #[test]
    fn rotated_toy_shows_up_normalized_in_context() {
        let mut e = env();
        e.ergo_rot = PI / 2.0;
        assert!((e.sample_context().values()[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn ergo_rotation_resets_after_the_configured_period() {
        let mut e = env();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        e.ergo_rot = 1.0;
        for episode in 1..=40 {
            e.rollout(&zero_theta(), &mut rng).unwrap();
            if episode < 40 {
                assert!(e.sample_context().values()[0] != 0.0, "episode {episode}");
            }
        }
        // The 41st episode starts from a reset toy rotation.
        assert_eq!(e.sample_context().values()[0], 0.0);
    }

    #[test]
    fn set_state_round_trips_and_validates() {
        let mut e = env();
        for ctx in [[0.0, 0.0], [0.5, -0.3]] {
            let c = Context::new(ctx.to_vec()).unwrap();
            e.set_state(&c).unwrap();
            let got = e.sample_context();
            assert!((got.values()[0] - ctx[0]).abs() < 1e-12);
            assert!((got.values()[1] - ctx[1]).abs() < 1e-12);
        }
        let bad = Context::new(vec![0.0]).unwrap();
        assert!(matches!(
            e.set_state(&bad),
            Err(EnvError::ContextDimension { .. })
        ));
    }

    #[test]
    fn displaced_ball_relaxes_toward_the_arena_center() {
        let mut e = env();
        e.ball_ext = 0.6;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        e.rollout(&zero_theta(), &mut rng).unwrap();
        let eq = e.config.ball.equilibrium_extension;
        assert!(e.ball_ext < 0.6 && e.ball_ext > eq);
        // Independent application of the slope rule over the same steps.
        let mut expected = 0.6;
        for _ in 0..N_STEPS {
            expected += e.config.ball.slope_rate * (eq - expected);
        }
        assert!((e.ball_ext - expected).abs() < 1e-12);
    }

    #[test]
    fn null_policy_leaves_tools_and_toys_at_rest() {
        let mut e = env();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (_, outcome) = e.rollout(&zero_theta(), &mut rng).unwrap();
        let reg = e.registry();
        for space in [
            spaces::LEFT_JOYSTICK,
            spaces::RIGHT_JOYSTICK,
            spaces::LIGHT,
            spaces::SOUND,
        ] {
            let slice = reg.slice(&outcome, space).unwrap();
            assert!(slice.iter().all(|&v| v == 0.0), "space {space}");
        }
        let ergo = reg.slice(&outcome, spaces::ERGO).unwrap();
        for pair in ergo.chunks(2) {
            assert_eq!(pair, &[0.0, 0.0]);
        }
        let ball = reg.slice(&outcome, spaces::BALL).unwrap();
        let eq = e.config.ball.equilibrium_extension;
        for pair in ball.chunks(2) {
            assert_eq!(pair[0], 0.0);
            assert!((pair[1] - eq).abs() < 1e-12);
        }
        // The hand stays at its rest pose under a zero policy.
        let hand = reg.slice(&outcome, spaces::HAND).unwrap();
        let rest = forward_kinematics(&[0.0; 4], &e.config);
        for triple in hand.chunks(3) {
            assert_eq!(triple, &rest);
        }
        // Distractor slices do vary.
        let d1 = reg.slice(&outcome, spaces::DISTRACTOR_1).unwrap();
        assert!(d1.windows(2).any(|w| w[0] != w[1]));
    }

    #[test]
    fn outcome_always_310_dims_and_in_bounds() {
        let mut e = env();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let theta = random_theta(&mut rng);
            let (traj, outcome) = e.rollout(&theta, &mut rng).unwrap();
            assert_eq!(outcome.dim(), OUTCOME_DIM);
            assert_eq!(traj.len(), N_STEPS);
            assert!(outcome
                .full()
                .iter()
                .all(|v| (-1.0..=1.0).contains(v)));
            for state in traj.states() {
                assert_eq!(state.len(), STATE_DIM);
                assert!(state.iter().all(|v| (-1.0..=1.0).contains(v)));
            }
        }
    }

    #[test]
    fn first_state_carries_the_starting_context() {
        let mut e = env();
        e.ergo_rot = 0.4 * PI;
        e.ball_rot = -0.2 * PI;
        let ctx = e.sample_context();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (traj, _) = e.rollout(&zero_theta(), &mut rng).unwrap();
        let s0 = &traj.states()[0];
        assert!((s0[7] - ctx.values()[0]).abs() < 1e-15);
        assert!((s0[9] - ctx.values()[1]).abs() < 1e-15);
    }

    #[test]
    fn static_objects_never_move() {
        let mut e = env();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let reg = e.registry();
        let mut reference: Option<Vec<Vec<f64>>> = None;
        for _ in 0..10 {
            let theta = random_theta(&mut rng);
            let (_, outcome) = e.rollout(&theta, &mut rng).unwrap();
            let slices: Vec<Vec<f64>> = (spaces::STATIC_RIGHT_HAND..=spaces::STATIC_LAMP)
                .map(|k| reg.slice(&outcome, k).unwrap().to_vec())
                .collect();
            match &reference {
                None => reference = Some(slices),
                Some(r) => assert_eq!(&slices, r),
            }
        }
    }

    #[test]
    fn rollouts_are_deterministic_under_fixed_seed() {
        let e0 = env();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let theta = random_theta(&mut rng);

        let mut a = e0.clone();
        let mut b = e0.clone();
        let (ta, oa) = a
            .rollout(&theta, &mut ChaCha8Rng::seed_from_u64(99))
            .unwrap();
        let (tb, ob) = b
            .rollout(&theta, &mut ChaCha8Rng::seed_from_u64(99))
            .unwrap();
        assert_eq!(oa, ob);
        assert_eq!(ta, tb);
    }

    #[test]
    fn distractors_random_walk_independent_of_theta() {
        let mut e = env();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let reg = e.registry();
        let mut drifts = Vec::new();
        let mut theta_sums = Vec::new();
        for _ in 0..100 {
            let theta = random_theta(&mut rng);
            let (_, outcome) = e.rollout(&theta, &mut rng).unwrap();
            let d1 = reg.slice(&outcome, spaces::DISTRACTOR_1).unwrap();
            let rest = e.config.distractors.rest_positions[0];
            let drift: f64 = d1
                .chunks(2)
                .map(|p| ((p[0] - rest[0]).powi(2) + (p[1] - rest[1]).powi(2)).sqrt())
                .sum();
            drifts.push(drift);
            theta_sums.push(theta.values().iter().sum::<f64>());
        }
        let var: f64 = {
            let mean = drifts.iter().sum::<f64>() / drifts.len() as f64;
            drifts.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / drifts.len() as f64
        };
        assert!(var > 0.0);
        // Sample correlation between policy magnitude and distractor drift
        // stays within statistical noise of zero.
        let corr = correlation(&theta_sums, &drifts);
        assert!(corr.abs() < 0.35, "corr = {corr}");
    }

    fn correlation(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let ma = a.iter().sum::<f64>() / n;
        let mb = b.iter().sum::<f64>() / n;
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / n;
        let va: f64 = a.iter().map(|x| (x - ma) * (x - ma)).sum::<f64>() / n;
        let vb: f64 = b.iter().map(|y| (y - mb) * (y - mb)).sum::<f64>() / n;
        cov / (va * vb).sqrt()
    }

    /// The interaction chain only fires in order: joystick needs the hand,
    /// the toy needs the right joystick, the ball needs the toy, and light
    /// and sound need the ball.
    #[test]
    fn causality_chain_holds_over_random_episodes() {
        let mut e = env();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let reg = e.registry();
        let cfg = Config::default();
        for _ in 0..300 {
            let start_ctx = e.sample_context();
            let theta = random_theta(&mut rng);
            let (traj, outcome) = e.rollout(&theta, &mut rng).unwrap();

            let nonzero = |space| {
                reg.slice(&outcome, space)
                    .unwrap()
                    .iter()
                    .any(|&v| v.abs() > 1e-12)
            };
            let hand_near_left = traj.states().iter().any(|s| {
                let b = cfg.joysticks.left_base;
                ((s[0] - b[0]).powi(2) + (s[1] - b[1]).powi(2) + (s[2] - b[2]).powi(2)).sqrt()
                    <= cfg.joysticks.left_radius
            });
            if nonzero(spaces::LEFT_JOYSTICK) {
                assert!(hand_near_left, "left joystick moved without hand contact");
            }
            // Toy rotation moves only under a deflected right joystick
            // (extension carryover decays on its own, so rotation is the
            // causal signal).
            let ergo = reg.slice(&outcome, spaces::ERGO).unwrap();
            let ergo_rotated = ergo
                .chunks(2)
                .any(|p| (p[0] - start_ctx.values()[0]).abs() > 1e-9);
            if ergo_rotated {
                assert!(
                    nonzero(spaces::RIGHT_JOYSTICK),
                    "toy rotated without the right joystick moving"
                );
            }
            let ball = reg.slice(&outcome, spaces::BALL).unwrap();
            let ball_rotated = ball
                .chunks(2)
                .any(|p| (p[0] - start_ctx.values()[1]).abs() > 1e-9);
            if ball_rotated {
                assert!(ergo_rotated, "ball rotated without the toy rotating");
            }
            let light = reg.slice(&outcome, spaces::LIGHT).unwrap();
            if light.iter().any(|&v| v != 0.0) {
                assert!(ball_rotated, "light without ball movement");
            }
            // Sound needs the ball at the border: either it was driven there
            // this episode, or it was left resting against it by the last one.
            let sound = reg.slice(&outcome, spaces::SOUND).unwrap();
            if sound.iter().any(|&v| v != 0.0) {
                let near_border = ball
                    .chunks(2)
                    .any(|p| p[1] >= cfg.sound.border_extension - 1e-9);
                assert!(
                    ball_rotated || near_border,
                    "sound without the ball reaching the border"
                );
            }
        }
    }

    /// Geometry probe used when tuning joystick placement; run explicitly
    /// with `cargo test -p imgep calibration_probe -- --ignored --nocapture`.
    #[test]
    #[ignore]
    fn calibration_probe() {
        let cfg = Config::default();
        let episodes = 3000;
        for seed in [12345u64, 999, 31337, 4242, 77] {
            let mut e = ToolUseEnv::new(&cfg);
            let reg = e.registry();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut touched = [0usize; 6];
            for _ in 0..episodes {
                let theta = random_theta(&mut rng);
                let start_ctx = e.sample_context();
                let (_, outcome) = e.rollout(&theta, &mut rng).unwrap();
                let nonzero = |space| {
                    reg.slice(&outcome, space)
                        .unwrap()
                        .iter()
                        .any(|&v| v.abs() > 1e-12)
                };
                let ergo = reg.slice(&outcome, spaces::ERGO).unwrap();
                let ergo_rotated = ergo
                    .chunks(2)
                    .any(|p| (p[0] - start_ctx.values()[0]).abs() > 1e-9);
                let ball = reg.slice(&outcome, spaces::BALL).unwrap();
                let ball_rotated = ball
                    .chunks(2)
                    .any(|p| (p[0] - start_ctx.values()[1]).abs() > 1e-9);
                let light = reg.slice(&outcome, spaces::LIGHT).unwrap();
                let sound = reg.slice(&outcome, spaces::SOUND).unwrap();
                for (i, hit) in [
                    nonzero(spaces::LEFT_JOYSTICK),
                    nonzero(spaces::RIGHT_JOYSTICK),
                    ergo_rotated,
                    ball_rotated,
                    light.iter().any(|&v| v != 0.0),
                    sound.iter().any(|&v| v != 0.0),
                ]
                .iter()
                .enumerate()
                {
                    if *hit {
                        touched[i] += 1;
                    }
                }
            }
            println!(
                "seed {seed}: ljoy {} rjoy {} ergo {} ball {} light {} sound {}",
                touched[0], touched[1], touched[2], touched[3], touched[4], touched[5]
            );
        }
    }

    /// Placement probe: per-episode touch probability for a grid of
    /// candidate joystick bases, plus noise-spillover rates between a
    /// chosen pair. Run explicitly when retuning the geometry.
    #[test]
    #[ignore]
    fn placement_grid_probe() {
        let cfg = Config::default();
        let mut e = ToolUseEnv::new(&cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(777);
        let episodes = 4000;
        let radius = cfg.joysticks.left_radius;
        let mut episode_hands: Vec<Vec<[f64; 3]>> = Vec::with_capacity(episodes);
        let mut thetas: Vec<PolicyParams> = Vec::with_capacity(episodes);
        for _ in 0..episodes {
            let theta = random_theta(&mut rng);
            let (traj, _) = e.rollout(&theta, &mut rng).unwrap();
            episode_hands.push(traj.states().iter().map(|s| [s[0], s[1], s[2]]).collect());
            thetas.push(theta);
        }
        let touch_rate = |base: [f64; 3]| {
            let hits = episode_hands
                .iter()
                .filter(|hands| {
                    hands.iter().any(|h| {
                        ((h[0] - base[0]).powi(2)
                            + (h[1] - base[1]).powi(2)
                            + (h[2] - base[2]).powi(2))
                        .sqrt()
                            <= radius
                    })
                })
                .count();
            hits as f64 / episodes as f64
        };
        println!("touch rates over {episodes} random episodes:");
        for x in [0.3, 0.45, 0.6, 0.75, 0.9] {
            for y in [0.2, 0.4, 0.6] {
                for z in [-0.8, -0.6, -0.4, -0.2, 0.0, 0.2] {
                    let r = touch_rate([x, y, z]);
                    if r > 0.0 {
                        println!("  [{x:.2}, {y:.2}, {z:.2}] -> {:.2}%", 100.0 * r);
                    }
                }
            }
        }
        let left = cfg.joysticks.left_base;
        let right = cfg.joysticks.right_base;
        println!(
            "configured left {:?} -> {:.2}%, right {:?} -> {:.3}%",
            left,
            100.0 * touch_rate(left),
            right,
            100.0 * touch_rate(right)
        );

        // Spillover: perturb left-touching policies with exploration noise
        // and count right-joystick touches among the perturbed episodes.
        let sigma = cfg.memory.exploration_variance.sqrt();
        let left_touchers: Vec<&PolicyParams> = thetas
            .iter()
            .zip(&episode_hands)
            .filter(|(_, hands)| {
                hands.iter().any(|h| {
                    ((h[0] - left[0]).powi(2)
                        + (h[1] - left[1]).powi(2)
                        + (h[2] - left[2]).powi(2))
                    .sqrt()
                        <= radius
                })
            })
            .map(|(t, _)| t)
            .collect();
        println!("left-touching policies: {}", left_touchers.len());
        if !left_touchers.is_empty() {
            // (base, radius) candidates for the right joystick.
            let candidates = [
                (right, cfg.joysticks.right_radius),
                ([0.65, 0.25, -0.25], 0.20),
                ([0.70, 0.20, -0.20], 0.20),
                ([0.60, 0.30, -0.20], 0.20),
                ([0.75, 0.20, -0.25], 0.20),
                ([0.70, 0.30, -0.20], 0.22),
                ([0.72, 0.25, -0.15], 0.22),
            ];
            let sphere_rate = |base: [f64; 3], r: f64| {
                let hits = episode_hands
                    .iter()
                    .filter(|hands| {
                        hands.iter().any(|h| {
                            ((h[0] - base[0]).powi(2)
                                + (h[1] - base[1]).powi(2)
                                + (h[2] - base[2]).powi(2))
                            .sqrt()
                                <= r
                        })
                    })
                    .count();
                hits as f64 / episodes as f64
            };
            let trials = 2000;
            let mut hits = vec![0usize; candidates.len()];
            for i in 0..trials {
                let base = left_touchers[i % left_touchers.len()];
                let noise = crate::memory::exploration_noise(base.dim(), sigma, &mut rng);
                let values = base
                    .values()
                    .iter()
                    .zip(noise)
                    .map(|(v, n)| v + n)
                    .collect();
                let theta = PolicyParams::clipped(values);
                let (traj, _) = e.rollout(&theta, &mut rng).unwrap();
                for (ci, (cand, r)) in candidates.iter().enumerate() {
                    if traj.states().iter().any(|s| {
                        ((s[0] - cand[0]).powi(2)
                            + (s[1] - cand[1]).powi(2)
                            + (s[2] - cand[2]).powi(2))
                        .sqrt()
                            <= *r
                    }) {
                        hits[ci] += 1;
                    }
                }
            }
            for (ci, (cand, r)) in candidates.iter().enumerate() {
                println!(
                    "right candidate {:?} r={r}: random {:.3}%, spillover {:.2}%",
                    cand,
                    100.0 * sphere_rate(*cand, *r),
                    100.0 * hits[ci] as f64 / trials as f64
                );
            }
        }
    }

    fn rest_sim(cfg: &Config) -> SimState {
        SimState {
            hand: forward_kinematics(&[0.0; 4], cfg),
            left_joy: [0.0; 2],
            right_joy: [0.0; 2],
            ergo_rot: 0.0,
            ergo_ext: 0.0,
            ball_rot: 0.0,
            ball_ext: cfg.ball.equilibrium_extension,
            ball_omega: 0.0,
            light: 0.0,
            sound: 0.0,
            distractors: cfg.distractors.rest_positions,
        }
    }

    /// Step oracle: a hand held off-center inside the right joystick's
    /// interaction radius deflects it, which rotates the toy by the
    /// configured gain per step.
    #[test]
    fn held_right_joystick_rotates_the_toy() {
        let cfg = Config::default();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut sim = rest_sim(&cfg);
        let mut hand = cfg.joysticks.right_base;
        hand[0] += 0.5 * cfg.joysticks.right_radius;
        for step in 1..=10 {
            step_sim(&mut sim, hand, &cfg, &mut rng);
            assert!((sim.right_joy[0] - 0.5).abs() < 1e-12);
            let expected = 0.5 * cfg.ergo.rotation_gain * step as f64;
            assert!((sim.ergo_rot - expected).abs() < 1e-12, "step {step}");
        }
    }

    /// A brief graze can nudge the ball but cannot spin it up to the light
    /// threshold: the massy ball needs a sustained drive.
    #[test]
    fn brief_graze_never_lights_the_lamp() {
        let cfg = Config::default();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut sim = rest_sim(&cfg);
        // Strong lateral deflection with slight extension for two steps.
        let mut hand = cfg.joysticks.right_base;
        hand[0] += 0.9 * cfg.joysticks.right_radius;
        hand[1] += 0.2 * cfg.joysticks.right_radius;
        for _ in 0..2 {
            step_sim(&mut sim, hand, &cfg, &mut rng);
        }
        let far = [0.0, 0.0, 1.0];
        for _ in 0..28 {
            step_sim(&mut sim, far, &cfg, &mut rng);
            assert_eq!(sim.light, 0.0);
        }
        assert!(sim.ball_omega.abs() < cfg.light.speed_threshold);
    }

    /// Step oracle: releasing a joystick springs it back toward center at
    /// the configured rate.
    #[test]
    fn released_joystick_springs_back() {
        let cfg = Config::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut sim = rest_sim(&cfg);
        sim.left_joy = [0.8, -0.4];
        let far_hand = [0.0, 0.0, 1.0];
        step_sim(&mut sim, far_hand, &cfg, &mut rng);
        assert!((sim.left_joy[0] - 0.8 * cfg.joysticks.spring_return).abs() < 1e-12);
        assert!((sim.left_joy[1] + 0.4 * cfg.joysticks.spring_return).abs() < 1e-12);
    }

    /// Step oracle: an extended, spinning toy tip in contact with the ball
    /// transfers its angular speed; the spinning ball drifts outward and the
    /// lamp lights up; reaching the border plays a pitched sound.
    #[test]
    fn toy_contact_drives_ball_light_and_sound() {
        let cfg = Config::default();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut sim = rest_sim(&cfg);
        // Hold the right joystick hard right and forward via a fixed hand
        // kept inside the interaction radius.
        let mut hand = cfg.joysticks.right_base;
        hand[0] += cfg.joysticks.right_radius * 0.85;
        hand[1] += cfg.joysticks.right_radius * 0.50;
        let mut lit = false;
        let mut heard = false;
        for _ in 0..60 {
            step_sim(&mut sim, hand, &cfg, &mut rng);
            lit |= sim.light > 0.0;
            heard |= sim.sound != 0.0;
        }
        assert!(sim.ball_rot != 0.0, "ball never rotated");
        assert!(lit, "light never turned on");
        assert!(heard, "sound never played");
        assert!(sim.ball_ext > cfg.ball.equilibrium_extension);
    }
}
