use nalgebra::UnitQuaternion;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::commands::{decompose_command, sync_signal, ContactOffset, PayloadCommand};
use crate::curriculum::{cf_pose_update_due, ObservabilityMode, ObservationNoise};
use crate::error::{PlmError, Result};
use crate::geometry::{rotate_planar, wrap_angle, Pose, Vec3};
use crate::world::{BaseCommand, ReachBox, RobotAction, WorldState};

pub const OBS_DIM: usize = 38;
pub const ACTION_DIM: usize = 9;
/// Version of the observation layout; stored with saved parameters.
pub const FEATURE_VERSION: u32 = 1;

/// What one robot senses at one tick. Everything is in the robot's own
/// base frame except the command, which is in contact-frame axes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    /// `[vx, vy, yaw rate]` of the base, base frame.
    pub base_twist: [f64; 3],
    pub base_height: f64,
    pub pad_pose: [f64; 7],
    /// Pad servo force, base frame (N).
    pub servo_force: [f64; 3],
    /// Contact-frame pose as last received, in the base frame of that moment.
    pub cf_pose: [f64; 7],
    /// Base motion since `cf_pose` was received: `[dx, dy, dyaw]`.
    pub odometry: [f64; 3],
    /// `[v_cf,x, v_cf,y, ω_cf, h_cf]`, velocity in contact-frame axes.
    pub cf_command: [f64; 4],
    pub t_sync: f64,
    pub prev_action: [f64; ACTION_DIM],
}

impl Observation {
    /// Flat vector in field order.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(OBS_DIM);
        v.extend_from_slice(&self.base_twist);
        v.push(self.base_height);
        v.extend_from_slice(&self.pad_pose);
        v.extend_from_slice(&self.servo_force);
        v.extend_from_slice(&self.cf_pose);
        v.extend_from_slice(&self.odometry);
        v.extend_from_slice(&self.cf_command);
        v.push(self.t_sync);
        v.extend_from_slice(&self.prev_action);
        v
    }

    /// Network input: the flat vector with forces and time brought to unit scale.
    pub fn to_features(&self) -> Vec<f64> {
        let mut v = self.to_vec();
        for f in &mut v[11..14] {
            *f /= 50.0;
        }
        v[28] /= 5.0;
        v
    }

    pub fn pad(&self) -> Pose {
        Pose::from_array(self.pad_pose)
    }

    /// Best estimate of the contact frame in the current base frame.
    pub fn cf_estimate(&self) -> Pose {
        let [dx, dy, dyaw] = self.odometry;
        Pose::from_yaw(Vec3::new(dx, dy, 0.0), dyaw)
            .inverse()
            .compose(&Pose::from_array(self.cf_pose))
    }
}

/// Per-tick action of one robot.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Action {
    /// `[dx, dy, dz, rx, ry, rz]` change of the pad setpoint, base frame.
    pub pad_delta: [f64; 6],
    /// `[vx, vy, ω]` base velocity command, base frame.
    pub base_cmd: [f64; 3],
}

impl Action {
    pub fn to_vec(&self) -> [f64; ACTION_DIM] {
        let mut a = [0.0; ACTION_DIM];
        a[..6].copy_from_slice(&self.pad_delta);
        a[6..].copy_from_slice(&self.base_cmd);
        a
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        if v.len() != ACTION_DIM {
            return Err(PlmError::DimensionMismatch {
                expected: ACTION_DIM,
                got: v.len(),
            });
        }
        let mut a = Action::default();
        a.pad_delta.copy_from_slice(&v[..6]);
        a.base_cmd.copy_from_slice(&v[6..]);
        Ok(a)
    }

    pub fn is_finite(&self) -> bool {
        self.to_vec().iter().all(|v| v.is_finite())
    }
}

/// Componentwise action limits.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ActionBounds {
    /// Pad translation per tick (m).
    pub pad_step: f64,
    /// Pad rotation per tick (rad).
    pub pad_turn: f64,
    /// Base linear speed per axis (m/s).
    pub base_speed: f64,
    /// Base yaw rate (rad/s).
    pub base_yaw_rate: f64,
}

impl Default for ActionBounds {
    fn default() -> Self {
        Self {
            pad_step: 0.02,
            pad_turn: 0.05,
            base_speed: 1.0,
            base_yaw_rate: 0.6,
        }
    }
}

impl ActionBounds {
    /// Half-width of each action component.
    pub fn scale(&self) -> [f64; ACTION_DIM] {
        [
            self.pad_step,
            self.pad_step,
            self.pad_step,
            self.pad_turn,
            self.pad_turn,
            self.pad_turn,
            self.base_speed,
            self.base_speed,
            self.base_yaw_rate,
        ]
    }

    pub fn clip(&self, a: &Action) -> Action {
        let s = self.scale();
        let mut v = a.to_vec();
        for (x, lim) in v.iter_mut().zip(s) {
            *x = x.clamp(-lim, lim);
        }
        Action::from_slice(&v).expect("fixed length")
    }

    pub fn validate(&self) -> Result<()> {
        if self.scale().iter().all(|s| *s > 0.0 && s.is_finite()) {
            Ok(())
        } else {
            Err(PlmError::Config("action bounds must be positive".into()))
        }
    }
}

/// Applies a clipped action to the current pad setpoint.
pub fn apply_action(pad_target: &Pose, a: &Action, reach: &ReachBox) -> RobotAction {
    let d = &a.pad_delta;
    let turn = UnitQuaternion::from_scaled_axis(Vec3::new(d[3], d[4], d[5]));
    let position = reach.clamp(&(pad_target.position + Vec3::new(d[0], d[1], d[2])));
    RobotAction {
        pad_target: Pose::new(position, turn * pad_target.orientation),
        base_cmd: BaseCommand::new(a.base_cmd[0], a.base_cmd[1], a.base_cmd[2]),
    }
}

/// Sensor-side state for the contact-frame pose of one robot: the last
/// received pose and the base pose at that moment.
#[derive(Clone, Debug, PartialEq)]
pub struct CfTracker {
    held: Pose,
    base_at_refresh: Pose,
    updates: u64,
    last_update_t: Option<f64>,
}

impl Default for CfTracker {
    fn default() -> Self {
        Self::new()
    }
}

impl CfTracker {
    pub fn new() -> Self {
        Self {
            held: Pose::identity(),
            base_at_refresh: Pose::identity(),
            updates: 0,
            last_update_t: None,
        }
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn last_update_t(&self) -> Option<f64> {
        self.last_update_t
    }
}

fn gaussian<R: Rng + ?Sized>(rng: &mut R, sigma: f64) -> f64 {
    if sigma > 0.0 {
        Normal::new(0.0, sigma).expect("finite sigma").sample(rng)
    } else {
        0.0
    }
}

fn noisy_vec<R: Rng + ?Sized>(rng: &mut R, v: Vec3, sigma: f64) -> Vec3 {
    v + Vec3::new(gaussian(rng, sigma), gaussian(rng, sigma), gaussian(rng, sigma))
}

fn noisy_pose<R: Rng + ?Sized>(rng: &mut R, p: &Pose, noise: &ObservationNoise) -> Pose {
    let pos = noisy_vec(rng, p.position, noise.position);
    let turn = noisy_vec(rng, Vec3::zeros(), noise.orientation);
    Pose::new(pos, UnitQuaternion::from_scaled_axis(turn) * p.orientation)
}

/// Inputs of [`build_observation`] besides the world.
pub struct ObservationContext<'a> {
    pub mode: &'a ObservabilityMode,
    /// Assigned contact frame, payload frame.
    pub cf_offset: &'a Pose,
    /// Command visible to the team at this tick.
    pub command: &'a PayloadCommand,
    pub t: f64,
    pub tick: u64,
    pub prev_action: &'a Action,
    pub noise: &'a ObservationNoise,
}

/// Robot `r`'s local observation. Reads only robot `r`'s body, the pose of
/// its own contact frame (when an update is due) and the shared command.
pub fn build_observation<R: Rng + ?Sized>(
    r: usize,
    world: &WorldState,
    ctx: &ObservationContext,
    tracker: &mut CfTracker,
    rng: &mut R,
) -> Result<Observation> {
    let robot = world.robots.get(r).ok_or_else(|| {
        PlmError::InvalidArgument(format!("robot {r} out of range ({} robots)", world.robots.len()))
    })?;
    let noise = ctx.noise;
    let base = robot.base_pose;
    let base_inv = base.inverse();

    if cf_pose_update_due(ctx.mode, ctx.t, ctx.tick) {
        let cf_world = world.payload.pose.compose(ctx.cf_offset);
        tracker.held = noisy_pose(rng, &base_inv.compose(&cf_world), noise);
        tracker.base_at_refresh = base;
        tracker.updates += 1;
        tracker.last_update_t = Some(ctx.t);
    }

    let v_local = base_inv.transform_vector(&robot.base_twist.linear);
    let v = noisy_vec(rng, v_local, noise.linear_velocity);
    let yaw_rate = robot.base_twist.angular.z + gaussian(rng, noise.angular_velocity);
    let height = base.position.z + gaussian(rng, noise.position);
    let pad = noisy_pose(rng, &robot.pad_in_base(), noise);
    let force = noisy_vec(rng, base_inv.transform_vector(&robot.servo_force), noise.force);

    let delta = tracker.base_at_refresh.inverse().compose(&base);
    let odometry = [
        delta.position.x + gaussian(rng, noise.position),
        delta.position.y + gaussian(rng, noise.position),
        wrap_angle(delta.yaw() + gaussian(rng, noise.orientation)),
    ];

    let cmd = decompose_command(ctx.command, &ContactOffset(ctx.cf_offset.position));
    let v_cf = rotate_planar(cmd.v_cf, -ctx.cf_offset.yaw());
    let t_sync = (sync_signal(ctx.t)? + gaussian(rng, noise.t_sync)).max(0.0);

    Ok(Observation {
        base_twist: [v.x, v.y, yaw_rate],
        base_height: height,
        pad_pose: pad.to_array(),
        servo_force: [force.x, force.y, force.z],
        cf_pose: tracker.held.to_array(),
        odometry,
        cf_command: [v_cf[0], v_cf[1], cmd.omega_cf, cmd.h_cf],
        t_sync,
        prev_action: ctx.prev_action.to_vec(),
    })
}
