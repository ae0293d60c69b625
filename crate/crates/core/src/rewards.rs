//! Per-robot reward terms, their activation schedule and the weighted total.
//!
//! Tracking terms are rewards (`≥ 0` for the kernels, `≤ 0` for the
//! constellation distances); regularization terms are penalties `≤ 0`.
//! Weights are positive scales, so every breakdown entry keeps its sign.

use serde::{Deserialize, Serialize};

use crate::commands::{TargetFrame, SYNC_HORIZON};
use crate::error::{PlmError, Result};
use crate::geometry::{
    constellation_distance, make_base_constellation, make_cf_constellation, make_pad_constellation,
    AnchorFrame, Constellation, Pose, Vec3,
};
use crate::world::ContactRecord;

/// Every reward term, in breakdown order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardTerm {
    ContactConstellation,
    BaseTracking,
    BinaryContact,
    HeightTracking,
    VelocityTracking,
    TorqueJointMotion,
    ActionSmoothness,
    LegMotion,
    Levelness,
    PayloadAcceleration,
    OutsideRange,
}

impl RewardTerm {
    pub const ALL: [RewardTerm; 11] = [
        Self::ContactConstellation,
        Self::BaseTracking,
        Self::BinaryContact,
        Self::HeightTracking,
        Self::VelocityTracking,
        Self::TorqueJointMotion,
        Self::ActionSmoothness,
        Self::LegMotion,
        Self::Levelness,
        Self::PayloadAcceleration,
        Self::OutsideRange,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::ContactConstellation => "contact_constellation",
            Self::BaseTracking => "base_tracking",
            Self::BinaryContact => "binary_contact",
            Self::HeightTracking => "height_tracking",
            Self::VelocityTracking => "velocity_tracking",
            Self::TorqueJointMotion => "torque_joint_motion",
            Self::ActionSmoothness => "action_smoothness",
            Self::LegMotion => "leg_motion",
            Self::Levelness => "levelness",
            Self::PayloadAcceleration => "payload_acceleration",
            Self::OutsideRange => "outside_range",
        }
    }
}

/// One scalar per reward term. Used both for weights and for raw values.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardTerms {
    pub contact_constellation: f64,
    pub base_tracking: f64,
    pub binary_contact: f64,
    pub height_tracking: f64,
    pub velocity_tracking: f64,
    pub torque_joint_motion: f64,
    pub action_smoothness: f64,
    pub leg_motion: f64,
    pub levelness: f64,
    pub payload_acceleration: f64,
    pub outside_range: f64,
}

pub type RewardWeights = RewardTerms;

impl RewardTerms {
    pub fn get(&self, term: RewardTerm) -> f64 {
        match term {
            RewardTerm::ContactConstellation => self.contact_constellation,
            RewardTerm::BaseTracking => self.base_tracking,
            RewardTerm::BinaryContact => self.binary_contact,
            RewardTerm::HeightTracking => self.height_tracking,
            RewardTerm::VelocityTracking => self.velocity_tracking,
            RewardTerm::TorqueJointMotion => self.torque_joint_motion,
            RewardTerm::ActionSmoothness => self.action_smoothness,
            RewardTerm::LegMotion => self.leg_motion,
            RewardTerm::Levelness => self.levelness,
            RewardTerm::PayloadAcceleration => self.payload_acceleration,
            RewardTerm::OutsideRange => self.outside_range,
        }
    }

    pub fn get_mut(&mut self, term: RewardTerm) -> &mut f64 {
        match term {
            RewardTerm::ContactConstellation => &mut self.contact_constellation,
            RewardTerm::BaseTracking => &mut self.base_tracking,
            RewardTerm::BinaryContact => &mut self.binary_contact,
            RewardTerm::HeightTracking => &mut self.height_tracking,
            RewardTerm::VelocityTracking => &mut self.velocity_tracking,
            RewardTerm::TorqueJointMotion => &mut self.torque_joint_motion,
            RewardTerm::ActionSmoothness => &mut self.action_smoothness,
            RewardTerm::LegMotion => &mut self.leg_motion,
            RewardTerm::Levelness => &mut self.levelness,
            RewardTerm::PayloadAcceleration => &mut self.payload_acceleration,
            RewardTerm::OutsideRange => &mut self.outside_range,
        }
    }

    pub fn default_weights() -> Self {
        Self {
            contact_constellation: 2.0,
            base_tracking: 2.0,
            binary_contact: 0.5,
            height_tracking: 1.0,
            velocity_tracking: 1.5,
            torque_joint_motion: 0.05,
            action_smoothness: 0.1,
            leg_motion: 0.1,
            levelness: 0.1,
            payload_acceleration: 0.01,
            outside_range: 0.1,
        }
    }

    pub fn validate_weights(&self) -> Result<()> {
        for term in RewardTerm::ALL {
            let w = self.get(term);
            if !(w.is_finite() && w >= 0.0) {
                return Err(PlmError::Config(format!(
                    "reward weight {} must be finite and >= 0, got {w}",
                    term.name()
                )));
            }
        }
        Ok(())
    }
}

/// Curriculum phase; fixed for the duration of an episode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Pinch,
    PinchLift,
    FullTransport,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::Pinch, Phase::PinchLift, Phase::FullTransport];

    pub fn index(self) -> u8 {
        match self {
            Phase::Pinch => 1,
            Phase::PinchLift => 2,
            Phase::FullTransport => 3,
        }
    }

    pub fn from_index(i: u8) -> Result<Self> {
        match i {
            1 => Ok(Phase::Pinch),
            2 => Ok(Phase::PinchLift),
            3 => Ok(Phase::FullTransport),
            _ => Err(PlmError::InvalidArgument(format!("phase must be 1, 2 or 3, got {i}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleState {
    pub phase: Phase,
    pub episode_time: f64,
}

/// Half-open episode-time interval `[start, end)`; no `end` means open.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Window {
    pub start: f64,
    #[serde(default)]
    pub end: Option<f64>,
}

impl Window {
    pub const ALWAYS: Window = Window { start: 0.0, end: None };

    pub fn from(start: f64) -> Self {
        Self { start, end: None }
    }

    pub fn until(end: f64) -> Self {
        Self { start: 0.0, end: Some(end) }
    }

    /// Membership with a 1 ns tolerance so tick times like `250·0.02`
    /// land on the intended side of a boundary.
    pub fn contains(&self, t: f64) -> bool {
        const EPS: f64 = 1e-9;
        t >= self.start - EPS && self.end.is_none_or(|e| t < e - EPS)
    }
}

/// When a term is active in each phase; `None` means never.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermActivation {
    #[serde(default)]
    pub pinch: Option<Window>,
    #[serde(default)]
    pub pinch_lift: Option<Window>,
    #[serde(default)]
    pub full_transport: Option<Window>,
}

impl TermActivation {
    fn every_phase(w: Window) -> Self {
        Self {
            pinch: Some(w),
            pinch_lift: Some(w),
            full_transport: Some(w),
        }
    }

    pub fn window(&self, phase: Phase) -> Option<Window> {
        match phase {
            Phase::Pinch => self.pinch,
            Phase::PinchLift => self.pinch_lift,
            Phase::FullTransport => self.full_transport,
        }
    }
}

/// Activation table, one row per term.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardSchedule {
    pub contact_constellation: TermActivation,
    pub base_tracking: TermActivation,
    pub binary_contact: TermActivation,
    pub height_tracking: TermActivation,
    pub velocity_tracking: TermActivation,
    pub torque_joint_motion: TermActivation,
    pub action_smoothness: TermActivation,
    pub leg_motion: TermActivation,
    pub levelness: TermActivation,
    pub payload_acceleration: TermActivation,
    pub outside_range: TermActivation,
}

impl Default for RewardSchedule {
    fn default() -> Self {
        let always = TermActivation::every_phase(Window::ALWAYS);
        let after_lift = Window::from(SYNC_HORIZON);
        let lift_and_move = TermActivation {
            pinch: None,
            pinch_lift: Some(after_lift),
            full_transport: Some(after_lift),
        };
        let move_only = TermActivation {
            pinch: None,
            pinch_lift: None,
            full_transport: Some(after_lift),
        };
        Self {
            contact_constellation: always,
            base_tracking: move_only,
            binary_contact: always,
            height_tracking: lift_and_move,
            velocity_tracking: move_only,
            torque_joint_motion: always,
            action_smoothness: always,
            leg_motion: TermActivation {
                pinch: Some(Window::until(4.0)),
                pinch_lift: Some(Window::until(4.0)),
                full_transport: None,
            },
            levelness: lift_and_move,
            payload_acceleration: move_only,
            outside_range: always,
        }
    }
}

impl RewardSchedule {
    pub fn row(&self, term: RewardTerm) -> &TermActivation {
        match term {
            RewardTerm::ContactConstellation => &self.contact_constellation,
            RewardTerm::BaseTracking => &self.base_tracking,
            RewardTerm::BinaryContact => &self.binary_contact,
            RewardTerm::HeightTracking => &self.height_tracking,
            RewardTerm::VelocityTracking => &self.velocity_tracking,
            RewardTerm::TorqueJointMotion => &self.torque_joint_motion,
            RewardTerm::ActionSmoothness => &self.action_smoothness,
            RewardTerm::LegMotion => &self.leg_motion,
            RewardTerm::Levelness => &self.levelness,
            RewardTerm::PayloadAcceleration => &self.payload_acceleration,
            RewardTerm::OutsideRange => &self.outside_range,
        }
    }

    pub fn is_active(&self, term: RewardTerm, s: &ScheduleState) -> bool {
        self.row(term)
            .window(s.phase)
            .is_some_and(|w| w.contains(s.episode_time))
    }
}

/// Kernel widths and thresholds of the shaped terms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardShaping {
    pub velocity_sigma: f64,
    pub height_sigma: f64,
    /// Normal force above which a contact counts as engaged (N).
    pub binary_contact_threshold: f64,
    /// Radius of the allowed pad region around the contact frame (m).
    pub outside_range_radius: f64,
    /// Servo force used to normalize the effort penalty (N).
    pub force_scale: f64,
}

impl Default for RewardShaping {
    fn default() -> Self {
        Self {
            velocity_sigma: 0.25,
            height_sigma: 0.1,
            binary_contact_threshold: 1.0,
            outside_range_radius: 0.2,
            force_scale: 60.0,
        }
    }
}

impl RewardShaping {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("velocity_sigma", self.velocity_sigma),
            ("height_sigma", self.height_sigma),
            ("force_scale", self.force_scale),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(PlmError::Config(format!("rewards.{name} must be positive, got {v}")));
            }
        }
        if !(self.binary_contact_threshold >= 0.0 && self.outside_range_radius >= 0.0) {
            return Err(PlmError::Config("reward thresholds must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Everything reward-related in an experiment config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    pub weights: RewardWeights,
    pub shaping: RewardShaping,
    pub schedule: RewardSchedule,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            weights: RewardTerms::default_weights(),
            shaping: RewardShaping::default(),
            schedule: RewardSchedule::default(),
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        self.weights.validate_weights()?;
        self.shaping.validate()
    }
}

/// `−d_con` between the pad and contact-frame constellations.
pub fn r_contact(pad_pose: &Pose, cf_pose: &Pose) -> f64 {
    -constellation_distance(&make_pad_constellation(pad_pose), &make_cf_constellation(cf_pose))
        .expect("pad and contact constellations share a size")
}

/// `−d_con` between the base constellation and its rigid-attachment targets.
pub fn r_track(base_pose: &Pose, rigid_targets: &Constellation) -> Result<f64> {
    Ok(-constellation_distance(&make_base_constellation(base_pose), rigid_targets)?)
}

pub fn r_constellation(pad_pose: &Pose, cf_pose: &Pose, base_pose: &Pose, rigid_targets: &Constellation) -> Result<f64> {
    Ok(r_contact(pad_pose, cf_pose) + r_track(base_pose, rigid_targets)?)
}

/// Where the base constellation should be if the robot were rigidly attached
/// to the target frame with the base-to-payload offset fixed at lift time.
pub fn rigid_base_targets(tf: &TargetFrame, base_offset: &Pose) -> Constellation {
    make_base_constellation(&tf.pose.compose(base_offset)).with_anchor(AnchorFrame::RigidTarget)
}

/// `exp(−e²/σ²)`.
pub fn exp_tracking_reward(error: f64, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(PlmError::Config(format!("kernel width must be positive, got {sigma}")));
    }
    Ok((-(error * error) / (sigma * sigma)).exp())
}

/// 1 when the pad touches with more than `threshold` newtons, else 0.
pub fn binary_contact_reward(c: &ContactRecord, threshold: f64) -> f64 {
    if c.in_contact && c.normal_force > threshold {
        1.0
    } else {
        0.0
    }
}

/// Per-robot quantities the penalties depend on.
#[derive(Clone, Debug, PartialEq)]
pub struct PenaltyInputs {
    /// Pad servo force (N).
    pub servo_force: Vec3,
    /// Pad velocity relative to the base (m/s).
    pub pad_velocity: Vec3,
    pub action: Vec<f64>,
    pub prev_action: Vec<f64>,
    pub base_linear_speed: f64,
    pub base_yaw_rate: f64,
    pub payload_roll: f64,
    pub payload_pitch: f64,
    pub payload_acceleration: Vec3,
    /// Distance from the pad to its assigned contact frame (m).
    pub pad_to_cf: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Penalties {
    pub torque_joint_motion: f64,
    pub action_smoothness: f64,
    pub leg_motion: f64,
    pub levelness: f64,
    pub payload_acceleration: f64,
    pub outside_range: f64,
}

/// Quadratic penalties, each `≤ 0` and zero at rest.
pub fn regularization_penalties(x: &PenaltyInputs, shaping: &RewardShaping) -> Penalties {
    let force = x.servo_force.norm() / shaping.force_scale;
    let delta: f64 = x
        .action
        .iter()
        .zip(&x.prev_action)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let outside = (x.pad_to_cf - shaping.outside_range_radius).max(0.0);
    Penalties {
        torque_joint_motion: -(force * force + x.pad_velocity.norm_squared()),
        action_smoothness: -delta,
        leg_motion: -(x.base_linear_speed * x.base_linear_speed + x.base_yaw_rate * x.base_yaw_rate),
        levelness: -(x.payload_roll * x.payload_roll + x.payload_pitch * x.payload_pitch),
        payload_acceleration: -x.payload_acceleration.norm_squared(),
        outside_range: -outside * outside,
    }
}

/// Masks `base` to the terms active at `s`.
pub fn schedule_weights(s: &ScheduleState, base: &RewardWeights, schedule: &RewardSchedule) -> RewardWeights {
    let mut out = RewardTerms::default();
    for term in RewardTerm::ALL {
        if schedule.is_active(term, s) {
            *out.get_mut(term) = base.get(term);
        }
    }
    out
}

/// Per-robot inputs of the full reward.
#[derive(Clone, Debug, PartialEq)]
pub struct RewardInputs {
    pub pad_pose: Pose,
    pub cf_pose: Pose,
    pub base_pose: Pose,
    /// Rigid-attachment base targets; absent before the target frame exists.
    pub rigid_targets: Option<Constellation>,
    pub contact: ContactRecord,
    pub height_error: f64,
    /// Planar velocity error (m/s) and yaw-rate error (rad/s) of the payload.
    pub velocity_error: [f64; 2],
    pub yaw_rate_error: f64,
    pub penalties: PenaltyInputs,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub robot_id: usize,
    /// Raw term values before weighting.
    pub terms: RewardTerms,
    /// Scheduled weights applied to `terms`.
    pub weights: RewardWeights,
    pub total: f64,
}

impl RewardBreakdown {
    /// Weighted sum of `terms` under `weights`.
    pub fn from_terms(robot_id: usize, terms: RewardTerms, weights: RewardWeights) -> Self {
        let total = RewardTerm::ALL
            .iter()
            .map(|t| weights.get(*t) * terms.get(*t))
            .sum();
        Self { robot_id, terms, weights, total }
    }
}

/// Raw values of every term for one robot.
pub fn reward_terms(x: &RewardInputs, shaping: &RewardShaping) -> Result<RewardTerms> {
    let p = regularization_penalties(&x.penalties, shaping);
    let [ex, ey] = x.velocity_error;
    let v_err = (ex * ex + ey * ey + x.yaw_rate_error * x.yaw_rate_error).sqrt();
    Ok(RewardTerms {
        contact_constellation: r_contact(&x.pad_pose, &x.cf_pose),
        base_tracking: match &x.rigid_targets {
            Some(targets) => r_track(&x.base_pose, targets)?,
            None => 0.0,
        },
        binary_contact: binary_contact_reward(&x.contact, shaping.binary_contact_threshold),
        height_tracking: exp_tracking_reward(x.height_error, shaping.height_sigma)?,
        velocity_tracking: exp_tracking_reward(v_err, shaping.velocity_sigma)?,
        torque_joint_motion: p.torque_joint_motion,
        action_smoothness: p.action_smoothness,
        leg_motion: p.leg_motion,
        levelness: p.levelness,
        payload_acceleration: p.payload_acceleration,
        outside_range: p.outside_range,
    })
}

/// Full per-robot breakdown with the schedule applied.
pub fn total_reward(
    robot_id: usize,
    x: &RewardInputs,
    s: &ScheduleState,
    cfg: &RewardConfig,
) -> Result<RewardBreakdown> {
    let terms = reward_terms(x, &cfg.shaping)?;
    let weights = schedule_weights(s, &cfg.weights, &cfg.schedule);
    Ok(RewardBreakdown::from_terms(robot_id, terms, weights))
}
