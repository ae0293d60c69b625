//! Training phases, episode generation and domain randomization.
//!
//! Episodes are pure functions of `(config, seed)`: every random draw comes
//! from a ChaCha stream keyed by the seed and a fixed stream id, so adding a
//! draw to one stage never shifts the draws of another.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::commands::{uniform, CommandRanges, PayloadCommand, SYNC_HORIZON};
use crate::error::{PlmError, Result};
use crate::geometry::{Pose, Vec3};
use crate::rewards::Phase;
use crate::world::{
    standard_arrangement, force_closure_check, BaseDynamics, ForcePulse, PayloadBody, PayloadShape,
    PhysicsParams, RobotInit, SceneSpec, DEFAULT_CONTACT_HEIGHT,
};

/// Independent random streams of one episode.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    ContactFrames = 1,
    Domain = 2,
    Placement = 3,
    Command = 4,
    ObservationNoise = 5,
    ActionNoise = 6,
}

pub fn episode_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Distribution of team commands for a phase. Each component is drawn from
/// its range, then independently zeroed with `zero_probability`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommandPool {
    pub ranges: CommandRanges,
    pub zero_probability: f64,
}

impl CommandPool {
    pub fn zero() -> Self {
        Self {
            ranges: CommandRanges::zero(),
            zero_probability: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.ranges.validate()?;
        if !(0.0..=1.0).contains(&self.zero_probability) {
            return Err(PlmError::Config(format!(
                "zero_probability must lie in [0, 1], got {}",
                self.zero_probability
            )));
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> PayloadCommand {
        let r = &self.ranges;
        let mut draw = |range: [f64; 2]| {
            let v = uniform(rng, range);
            let zero = self.zero_probability > 0.0 && rng.random::<f64>() < self.zero_probability;
            if zero {
                0.0
            } else {
                v
            }
        };
        let vx = draw(r.vx);
        let vy = draw(r.vy);
        let omega = draw(r.omega);
        let h = draw(r.h);
        PayloadCommand::new(vx, vy, omega, h)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseConfig {
    pub phase: Phase,
    pub episode_length: f64,
    pub command_pool: CommandPool,
    /// Uniform payload mass range (kg).
    pub payload_mass: [f64; 2],
    pub leg_motion_penalty_active: bool,
}

impl PhaseConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.episode_length > SYNC_HORIZON || self.phase == Phase::Pinch && self.episode_length > 0.0) {
            return Err(PlmError::Config(format!(
                "episode_length {} too short for phase {:?}",
                self.episode_length, self.phase
            )));
        }
        let [lo, hi] = self.payload_mass;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(PlmError::Config(format!("payload mass range {:?} invalid", self.payload_mass)));
        }
        self.command_pool.validate()
    }
}

/// The three training phases: pinch, pinch-lift, and full transport.
pub fn make_phase_config(phase: u8) -> Result<PhaseConfig> {
    let phase = Phase::from_index(phase)?;
    Ok(match phase {
        Phase::Pinch => PhaseConfig {
            phase,
            episode_length: 7.0,
            command_pool: CommandPool::zero(),
            payload_mass: [100.0, 100.0],
            leg_motion_penalty_active: true,
        },
        Phase::PinchLift => PhaseConfig {
            phase,
            episode_length: 14.0,
            command_pool: CommandPool {
                ranges: CommandRanges {
                    h: CommandRanges::default().h,
                    ..CommandRanges::zero()
                },
                zero_probability: 0.25,
            },
            payload_mass: [0.1, 2.0],
            leg_motion_penalty_active: true,
        },
        Phase::FullTransport => PhaseConfig {
            phase,
            episode_length: 14.0,
            command_pool: CommandPool {
                ranges: CommandRanges::default(),
                zero_probability: 0.25,
            },
            payload_mass: [0.1, 2.0],
            leg_motion_penalty_active: false,
        },
    })
}

/// Gaussian noise standard deviations per observation channel.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObservationNoise {
    pub position: f64,
    pub orientation: f64,
    pub linear_velocity: f64,
    pub angular_velocity: f64,
    pub force: f64,
    pub t_sync: f64,
}

impl Default for ObservationNoise {
    // Desk-scale guesses; the magnitudes are not published.
    fn default() -> Self {
        Self {
            position: 0.005,
            orientation: 0.01,
            linear_velocity: 0.02,
            angular_velocity: 0.02,
            force: 0.5,
            t_sync: 0.01,
        }
    }
}

impl ObservationNoise {
    pub fn zero() -> Self {
        Self {
            position: 0.0,
            orientation: 0.0,
            linear_velocity: 0.0,
            angular_velocity: 0.0,
            force: 0.0,
            t_sync: 0.0,
        }
    }

    fn values(&self) -> [f64; 6] {
        [
            self.position,
            self.orientation,
            self.linear_velocity,
            self.angular_velocity,
            self.force,
            self.t_sync,
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RandomizationConfig {
    /// Overrides the phase mass range when set (kg).
    pub mass_range: Option<[f64; 2]>,
    pub friction_range: [f64; 2],
    pub base_tau_range: [f64; 2],
    pub base_accel_range: [f64; 2],
    /// Base placement offsets (m, rad).
    pub position_noise: f64,
    pub yaw_noise: f64,
    pub observation_noise: ObservationNoise,
    /// Gaussian noise on the executed action, in action units.
    pub action_noise: f64,
    /// Chance of one horizontal push on the payload after lift.
    pub pulse_probability: f64,
    pub pulse_force_range: [f64; 2],
    pub pulse_duration: f64,
}

impl Default for RandomizationConfig {
    fn default() -> Self {
        Self {
            mass_range: None,
            friction_range: [0.5, 1.0],
            base_tau_range: [0.12, 0.18],
            base_accel_range: [1.8, 2.2],
            position_noise: 0.05,
            yaw_noise: 0.1,
            observation_noise: ObservationNoise::default(),
            action_noise: 0.005,
            pulse_probability: 0.2,
            pulse_force_range: [0.0, 3.0],
            pulse_duration: 0.2,
        }
    }
}

impl RandomizationConfig {
    /// No randomization at all: nominal physics, exact placement, no noise.
    pub fn none() -> Self {
        Self {
            mass_range: None,
            friction_range: [0.8, 0.8],
            base_tau_range: [0.15, 0.15],
            base_accel_range: [2.0, 2.0],
            position_noise: 0.0,
            yaw_noise: 0.0,
            observation_noise: ObservationNoise::zero(),
            action_noise: 0.0,
            pulse_probability: 0.0,
            pulse_force_range: [0.0, 0.0],
            pulse_duration: 0.2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut ranges = vec![
            ("friction_range", self.friction_range),
            ("base_tau_range", self.base_tau_range),
            ("base_accel_range", self.base_accel_range),
            ("pulse_force_range", self.pulse_force_range),
        ];
        if let Some(m) = self.mass_range {
            ranges.push(("mass_range", m));
        }
        for (name, r) in ranges {
            if !(r[0].is_finite() && r[1].is_finite() && r[0] <= r[1] && r[0] >= 0.0) {
                return Err(PlmError::Config(format!("randomization.{name} = {r:?} is invalid")));
            }
        }
        if self.mass_range.is_some_and(|m| m[0] <= 0.0)
            || self.base_tau_range[0] <= 0.0
            || self.base_accel_range[0] <= 0.0
        {
            return Err(PlmError::Config("mass, base lag and acceleration must be positive".into()));
        }
        let sigmas = [self.position_noise, self.yaw_noise, self.action_noise, self.pulse_duration];
        if sigmas
            .iter()
            .chain(self.observation_noise.values().iter())
            .any(|s| !(*s >= 0.0 && s.is_finite()))
        {
            return Err(PlmError::Config("noise levels must be finite and >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.pulse_probability) {
            return Err(PlmError::Config("pulse_probability must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Concrete per-episode physical parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainDraw {
    pub mass: f64,
    pub friction: f64,
    pub base_dynamics: Vec<BaseDynamics>,
    pub pulses: Vec<ForcePulse>,
}

pub fn randomize_domain<R: Rng + ?Sized>(
    cfg: &RandomizationConfig,
    mass_range: [f64; 2],
    n_robots: usize,
    episode_length: f64,
    rng: &mut R,
) -> DomainDraw {
    let mass = uniform(rng, cfg.mass_range.unwrap_or(mass_range));
    let friction = uniform(rng, cfg.friction_range);
    let base_dynamics = (0..n_robots)
        .map(|_| BaseDynamics {
            tau: uniform(rng, cfg.base_tau_range),
            accel_limit: uniform(rng, cfg.base_accel_range),
        })
        .collect();
    let mut pulses = Vec::new();
    let latest = episode_length - cfg.pulse_duration - 1.0;
    if cfg.pulse_probability > 0.0 && latest > SYNC_HORIZON + 1.0 && rng.random::<f64>() < cfg.pulse_probability {
        let start = uniform(rng, [SYNC_HORIZON + 1.0, latest]);
        let magnitude = uniform(rng, cfg.pulse_force_range);
        let dir = uniform(rng, [0.0, std::f64::consts::TAU]);
        pulses.push(ForcePulse {
            start,
            duration: cfg.pulse_duration,
            force: magnitude * Vec3::new(dir.cos(), dir.sin(), 0.0),
        });
    }
    DomainDraw {
        mass,
        friction,
        base_dynamics,
        pulses,
    }
}

/// How contact-frame poses reach the policy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CfMode {
    /// Fresh pose every tick.
    CfPlus,
    /// Pose for the first 2 s only (once fully annealed).
    CfInit,
}

/// Update rate of the contact-frame pose in `cf_init` training.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnnealStage {
    Hz50,
    Hz25,
    Hz5,
    Hz0_25,
    Hz0,
}

impl AnnealStage {
    pub const SEQUENCE: [AnnealStage; 5] = [Self::Hz50, Self::Hz25, Self::Hz5, Self::Hz0_25, Self::Hz0];

    pub fn rate_hz(self) -> f64 {
        match self {
            Self::Hz50 => 50.0,
            Self::Hz25 => 25.0,
            Self::Hz5 => 5.0,
            Self::Hz0_25 => 0.25,
            Self::Hz0 => 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservabilityMode {
    pub mode: CfMode,
    pub anneal_stage: AnnealStage,
}

impl ObservabilityMode {
    pub fn cf_plus() -> Self {
        Self {
            mode: CfMode::CfPlus,
            anneal_stage: AnnealStage::Hz50,
        }
    }

    /// Fully annealed: pose only during the first 2 s.
    pub fn cf_init() -> Self {
        Self {
            mode: CfMode::CfInit,
            anneal_stage: AnnealStage::Hz0,
        }
    }
}

/// Window at the start of an episode during which the pose is always sent (s).
pub const CF_INIT_WINDOW: f64 = 2.0;
/// Control rate the update grid is measured against (Hz).
pub const CONTROL_RATE: f64 = 50.0;

/// Whether the contact-frame pose observation refreshes at this tick.
pub fn cf_pose_update_due(mode: &ObservabilityMode, t: f64, tick: u64) -> bool {
    match mode.mode {
        CfMode::CfPlus => true,
        CfMode::CfInit => {
            if t < CF_INIT_WINDOW - 1e-9 {
                return true;
            }
            let rate = mode.anneal_stage.rate_hz();
            if rate <= 0.0 {
                return false;
            }
            let period = (CONTROL_RATE / rate).round().max(1.0) as u64;
            tick.is_multiple_of(period)
        }
    }
}

/// Lateral contact heights a pad can reach from its base without moving (m).
pub fn reachable_heights(shape: &PayloadShape, params: &PhysicsParams) -> [f64; 2] {
    let margin = params.pad_half_size + 0.02;
    let lo = (params.base_height + params.reach.z[0] + margin).max(margin);
    let hi = (params.base_height + params.reach.z[1] - margin).min(shape.height() - margin);
    [lo, hi]
}

const CONTACT_SAMPLE_ATTEMPTS: usize = 100;

/// Random lateral contact frames passing force closure and leaving room for
/// every base. Frames are in the payload frame.
pub fn sample_contact_frames<R: Rng + ?Sized>(
    payload: &PayloadBody,
    n: usize,
    mu: f64,
    params: &PhysicsParams,
    rng: &mut R,
) -> Result<Vec<Pose>> {
    if n < 2 {
        return Err(PlmError::InvalidArgument(format!("need at least 2 contact frames, got {n}")));
    }
    let heights = reachable_heights(&payload.shape, params);
    if heights[0] > heights[1] {
        return Err(PlmError::InfeasibleScene("payload too short for the pad reach".into()));
    }
    for _ in 0..CONTACT_SAMPLE_ATTEMPTS {
        let frames: Vec<Pose> = (0..n)
            .map(|_| surface_frame(&payload.shape, uniform(rng, heights), params.pad_half_size + 0.05, rng))
            .collect();
        let wrench_frames: Vec<(Vec3, Vec3)> = frames
            .iter()
            .map(|f| (f.position, f.transform_vector(&Vec3::x())))
            .collect();
        if !force_closure_check(&wrench_frames, mu) {
            continue;
        }
        let bases: Vec<Vec3> = frames
            .iter()
            .map(|f| RobotInit::facing(&payload.pose.compose(f), params).base_pose.position)
            .collect();
        let clear = bases.iter().enumerate().all(|(i, a)| {
            bases[i + 1..]
                .iter()
                .all(|b| (a - b).xy().norm() >= 2.0 * params.base_radius + 0.05)
        });
        if clear {
            return Ok(frames);
        }
    }
    Err(PlmError::NoFeasibleContacts {
        attempts: CONTACT_SAMPLE_ATTEMPTS,
    })
}

/// Uniform point on the lateral surface at height `z`, `margin` away from
/// vertical edges.
fn surface_frame<R: Rng + ?Sized>(shape: &PayloadShape, z: f64, margin: f64, rng: &mut R) -> Pose {
    match *shape {
        PayloadShape::Cylinder { radius, .. } => {
            let a = uniform(rng, [0.0, std::f64::consts::TAU]);
            let out = Vec3::new(a.cos(), a.sin(), 0.0);
            crate::world::cf_on_surface(radius * out + z * Vec3::z(), out)
        }
        PayloadShape::Box { l, w, .. } => {
            let usable = |len: f64| (len - 2.0 * margin).max(0.0);
            let (ux, uy) = (usable(l), usable(w));
            // pick a face proportionally to its usable length
            let s = uniform(rng, [0.0, 2.0 * (ux + uy)]);
            let (out, along, offset) = if s < uy {
                (Vec3::x(), Vec3::y(), s - uy / 2.0)
            } else if s < uy + ux {
                (-Vec3::y(), Vec3::x(), s - uy - ux / 2.0)
            } else if s < 2.0 * uy + ux {
                (-Vec3::x(), Vec3::y(), s - uy - ux - uy / 2.0)
            } else {
                (Vec3::y(), Vec3::x(), s - 2.0 * uy - ux - ux / 2.0)
            };
            let center = Vec3::new(out.x * l / 2.0, out.y * w / 2.0, z);
            crate::world::cf_on_surface(center + offset * along, out)
        }
    }
}

/// How contact frames are assigned in an episode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arrangement {
    /// Standard evaluation layout around the payload.
    Standard,
    /// Random force-closure frames.
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpisodeConfig {
    pub phase: PhaseConfig,
    pub shape: PayloadShape,
    /// Fixed payload mass (kg); overrides every mass range.
    #[serde(default)]
    pub mass: Option<f64>,
    pub n_robots: usize,
    pub arrangement: Arrangement,
    #[serde(default = "default_contact_height")]
    pub contact_height: f64,
    #[serde(default)]
    pub randomization: RandomizationConfig,
    pub observability: ObservabilityMode,
    #[serde(default)]
    pub physics: PhysicsParams,
}

fn default_contact_height() -> f64 {
    DEFAULT_CONTACT_HEIGHT
}

impl EpisodeConfig {
    /// Training defaults for a phase with the standard box and layout.
    pub fn for_phase(phase: u8, shape: PayloadShape, n_robots: usize) -> Result<Self> {
        Ok(Self {
            phase: make_phase_config(phase)?,
            shape,
            mass: None,
            n_robots,
            arrangement: Arrangement::Standard,
            contact_height: DEFAULT_CONTACT_HEIGHT,
            randomization: RandomizationConfig::default(),
            observability: ObservabilityMode::cf_plus(),
            physics: PhysicsParams::default(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_robots < 2 {
            return Err(PlmError::Config(format!("team size must be >= 2, got {}", self.n_robots)));
        }
        if let Some(m) = self.mass {
            if !(m > 0.0 && m.is_finite()) {
                return Err(PlmError::Config(format!("payload mass must be positive, got {m}")));
            }
        }
        self.shape.validate()?;
        self.phase.validate()?;
        self.randomization.validate()?;
        self.physics.validate()
    }
}

/// A fully resolved episode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub seed: u64,
    pub phase: Phase,
    pub episode_length: f64,
    pub command: PayloadCommand,
    pub draws: DomainDraw,
    pub scene: SceneSpec,
    pub observability: ObservabilityMode,
}

pub fn generate_episode(cfg: &EpisodeConfig, seed: u64) -> Result<Episode> {
    cfg.validate()?;
    let mut domain_rng = episode_rng(seed, Stream::Domain);
    let mut draws = randomize_domain(
        &cfg.randomization,
        cfg.phase.payload_mass,
        cfg.n_robots,
        cfg.phase.episode_length,
        &mut domain_rng,
    );
    if let Some(m) = cfg.mass {
        draws.mass = m;
    }
    let mut params = cfg.physics.clone();
    params.friction = draws.friction;

    let contact_frames = match cfg.arrangement {
        Arrangement::Standard => standard_arrangement(&cfg.shape, cfg.n_robots, cfg.contact_height)?,
        Arrangement::Random => {
            let payload = PayloadBody::new(cfg.shape, draws.mass, Pose::identity())?;
            let mut rng = episode_rng(seed, Stream::ContactFrames);
            sample_contact_frames(&payload, cfg.n_robots, draws.friction, &params, &mut rng)?
        }
    };
    let command = cfg.phase.command_pool.sample(&mut episode_rng(seed, Stream::Command));
    let scene = SceneSpec {
        shape: cfg.shape,
        mass: draws.mass,
        payload_pose: Pose::identity(),
        contact_frames,
        position_noise: cfg.randomization.position_noise,
        yaw_noise: cfg.randomization.yaw_noise,
        dynamics: draws.base_dynamics.clone(),
        params,
    };
    Ok(Episode {
        seed,
        phase: cfg.phase.phase,
        episode_length: cfg.phase.episode_length,
        command,
        draws,
        scene,
        observability: cfg.observability,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phase_table() {
        let p1 = make_phase_config(1).unwrap();
        assert_eq!(p1.episode_length, 7.0);
        assert_eq!(p1.payload_mass, [100.0, 100.0]);
        assert!(p1.leg_motion_penalty_active);
        let c = p1.command_pool.sample(&mut episode_rng(3, Stream::Command));
        assert_eq!(c, PayloadCommand::new(0.0, 0.0, 0.0, 0.0));

        let p2 = make_phase_config(2).unwrap();
        assert_eq!(p2.episode_length, 14.0);
        assert_eq!(p2.payload_mass, [0.1, 2.0]);
        let mut rng = episode_rng(4, Stream::Command);
        for _ in 0..200 {
            let c = p2.command_pool.sample(&mut rng);
            assert_eq!((c.v_pl, c.omega_pl), ([0.0, 0.0], 0.0));
            assert!(c.h_pl >= 0.0);
        }

        let p3 = make_phase_config(3).unwrap();
        assert!(!p3.leg_motion_penalty_active);
        assert_eq!(p3.episode_length, 14.0);
        assert!(make_phase_config(0).is_err());
        assert!(make_phase_config(4).is_err());
    }

    #[test]
    fn zero_width_ranges_give_point_values() {
        let mut cfg = RandomizationConfig::none();
        cfg.friction_range = [0.7, 0.7];
        let d = randomize_domain(&cfg, [1.5, 1.5], 3, 14.0, &mut episode_rng(0, Stream::Domain));
        assert_eq!(d.mass, 1.5);
        assert_eq!(d.friction, 0.7);
        assert!(d.base_dynamics.iter().all(|b| b.tau == 0.15 && b.accel_limit == 2.0));
        assert!(d.pulses.is_empty());
    }

    #[test]
    fn mass_draws_uniform_ks() {
        let cfg = RandomizationConfig::default();
        let mut rng = episode_rng(11, Stream::Domain);
        let mut m: Vec<f64> = (0..10_000)
            .map(|_| randomize_domain(&cfg, [0.1, 2.0], 2, 14.0, &mut rng).mass)
            .collect();
        m.sort_by(f64::total_cmp);
        assert!(m[0] >= 0.1 && m[m.len() - 1] <= 2.0);
        let n = m.len() as f64;
        let ks = m
            .iter()
            .enumerate()
            .map(|(i, x)| {
                let cdf = (x - 0.1) / 1.9;
                (cdf - i as f64 / n).abs().max((cdf - (i + 1) as f64 / n).abs())
            })
            .fold(0.0, f64::max);
        assert!(ks < 0.02, "KS {ks}");
    }

    #[test]
    fn update_schedule() {
        let plus = ObservabilityMode::cf_plus();
        let init = ObservabilityMode::cf_init();
        assert!(cf_pose_update_due(&plus, 9.3, 465));
        assert!(cf_pose_update_due(&init, 1.0, 50));
        assert!(!cf_pose_update_due(&init, 3.0, 150));
        let five = ObservabilityMode {
            mode: CfMode::CfInit,
            anneal_stage: AnnealStage::Hz5,
        };
        assert!(cf_pose_update_due(&five, 3.0, 150));
        assert!(!cf_pose_update_due(&five, 3.02, 151));
        let slow = ObservabilityMode {
            mode: CfMode::CfInit,
            anneal_stage: AnnealStage::Hz0_25,
        };
        let due: Vec<u64> = (100..1000).filter(|k| cf_pose_update_due(&slow, *k as f64 * 0.02, *k)).collect();
        assert_eq!(due, vec![200, 400, 600, 800]);
    }

    fn default_payload() -> PayloadBody {
        PayloadBody::new(PayloadShape::default_box(), 2.0, Pose::identity()).unwrap()
    }

    #[test]
    fn sampled_frames_close_and_lie_on_surface() {
        let params = PhysicsParams::default();
        let payload = default_payload();
        let mut rng = episode_rng(5, Stream::ContactFrames);
        for n in 2..=5 {
            let frames = sample_contact_frames(&payload, n, 0.8, &params, &mut rng).unwrap();
            let wf: Vec<_> = frames.iter().map(|f| (f.position, f.transform_vector(&Vec3::x()))).collect();
            assert!(force_closure_check(&wf, 0.8));
            for f in &frames {
                let p = f.position;
                let on_x = (p.x.abs() - 0.5).abs() < 1e-12 && p.y.abs() <= 0.75;
                let on_y = (p.y.abs() - 0.75).abs() < 1e-12 && p.x.abs() <= 0.5;
                assert!(on_x || on_y);
                // the inward normal points back toward the box axis
                let n_in = f.transform_vector(&Vec3::x());
                assert!(n_in.dot(&Vec3::new(p.x, p.y, 0.0)) < 0.0);
            }
        }
    }

    #[test]
    fn single_frame_rejected() {
        let params = PhysicsParams::default();
        assert!(sample_contact_frames(&default_payload(), 1, 0.8, &params, &mut episode_rng(0, Stream::ContactFrames)).is_err());
    }

    /// Raw candidate pairs versus accepted pairs: accepted pairs sit on
    /// opposing faces far more often than uniform placement would.
    #[test]
    fn opposing_faces_dominate_accepted_pairs() {
        let params = PhysicsParams::default();
        let payload = default_payload();
        let mut rng = episode_rng(8, Stream::ContactFrames);
        let mut opposing = 0;
        let trials = 300;
        for _ in 0..trials {
            let f = sample_contact_frames(&payload, 2, 0.8, &params, &mut rng).unwrap();
            let a = f[0].transform_vector(&Vec3::x());
            let b = f[1].transform_vector(&Vec3::x());
            if a.dot(&b) < -0.99 {
                opposing += 1;
            }
        }
        assert!(opposing as f64 / trials as f64 > 0.9, "{opposing}/{trials}");
    }

    #[test]
    fn episodes_reproducible() {
        let mut cfg = EpisodeConfig::for_phase(3, PayloadShape::default_box(), 3).unwrap();
        cfg.arrangement = Arrangement::Random;
        let a = generate_episode(&cfg, 42).unwrap();
        let b = generate_episode(&cfg, 42).unwrap();
        assert_eq!(a, b);
        let c = generate_episode(&cfg, 43).unwrap();
        assert_ne!(a.command, c.command);
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut cfg = EpisodeConfig::for_phase(2, PayloadShape::default_box(), 2).unwrap();
        cfg.n_robots = 1;
        assert!(generate_episode(&cfg, 0).is_err());
        let mut cfg = EpisodeConfig::for_phase(2, PayloadShape::default_box(), 2).unwrap();
        cfg.randomization.friction_range = [1.0, 0.5];
        assert!(cfg.validate().is_err());
        let mut cfg = EpisodeConfig::for_phase(2, PayloadShape::default_box(), 2).unwrap();
        cfg.randomization.observation_noise.force = -1.0;
        assert!(cfg.validate().is_err());
    }
}
