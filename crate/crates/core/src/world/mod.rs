//! Desk-scale rigid-body world: one payload, `N` robots, penalty contacts.
//!
//! Robots are reduced to the abstraction the high-level controller sees: a
//! planar base that tracks velocity commands through a first-order lag with
//! acceleration limits, and a flat square pad driven by a critically damped
//! Cartesian servo inside a reach box. The payload is a full 6-DOF rigid
//! body integrated with semi-implicit Euler. Pad/payload and payload/ground
//! contacts use a one-sided spring-damper normal law and an anchored
//! tangential spring whose force is capped by the Coulomb cone (stick-slip).

mod closure;
mod contact;
mod detect;
mod scene;

use nalgebra::{Matrix3, UnitQuaternion};
use serde::{Deserialize, Serialize};

pub use closure::{
    contact_wrenches, force_closure_check, force_closure_check_with, origin_strictly_interior,
    tangent_basis, ClosureOptions,
};
pub use detect::{
    contact_wrench_summary, detect_drop, detect_robot_failure, DropDetector, DROP_HEIGHT,
    CONTACT_LOSS_WINDOW,
};
pub use scene::{
    cf_on_surface, standard_arrangement, spawn_scene, RobotInit, SceneSpec, DEFAULT_CONTACT_HEIGHT, PAD_STANDOFF,
};

use crate::error::{PlmError, Result};
use crate::geometry::{Pose, Twist, Vec3};

/// Shape of the payload. The payload root frame sits at the center of the
/// bottom face; `+z` points up through the body.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PayloadShape {
    Box { l: f64, w: f64, h: f64 },
    Cylinder { radius: f64, length: f64 },
}

impl PayloadShape {
    pub fn default_box() -> Self {
        Self::Box { l: 1.0, w: 1.5, h: 0.7 }
    }

    pub fn small_box() -> Self {
        Self::Box { l: 0.5, w: 0.4, h: 0.7 }
    }

    pub fn height(&self) -> f64 {
        match *self {
            Self::Box { h, .. } => h,
            Self::Cylinder { length, .. } => length,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Self::Box { l, w, h } => l > 0.0 && w > 0.0 && h > 0.0,
            Self::Cylinder { radius, length } => radius > 0.0 && length > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(PlmError::Config(format!("payload dimensions must be positive: {self:?}")))
        }
    }

    /// Principal inertia about the center of mass for a uniform solid.
    pub fn inertia(&self, mass: f64) -> Matrix3<f64> {
        let d = match *self {
            Self::Box { l, w, h } => Vec3::new(
                mass * (w * w + h * h) / 12.0,
                mass * (l * l + h * h) / 12.0,
                mass * (l * l + w * w) / 12.0,
            ),
            Self::Cylinder { radius, length } => {
                let side = mass * (3.0 * radius * radius + length * length) / 12.0;
                Vec3::new(side, side, mass * radius * radius / 2.0)
            }
        };
        Matrix3::from_diagonal(&d)
    }

    /// Penetration depth and outward surface normal for a point inside the
    /// body, both in the payload frame.
    pub fn penetration(&self, p: &Vec3) -> Option<(f64, Vec3)> {
        match *self {
            Self::Box { l, w, h } => {
                let (hx, hy) = (l / 2.0, w / 2.0);
                if p.x.abs() >= hx || p.y.abs() >= hy || p.z <= 0.0 || p.z >= h {
                    return None;
                }
                let faces = [
                    (hx - p.x, Vec3::x()),
                    (hx + p.x, -Vec3::x()),
                    (hy - p.y, Vec3::y()),
                    (hy + p.y, -Vec3::y()),
                    (h - p.z, Vec3::z()),
                    (p.z, -Vec3::z()),
                ];
                faces
                    .into_iter()
                    .min_by(|a, b| a.0.total_cmp(&b.0))
            }
            Self::Cylinder { radius, length } => {
                let r = (p.x * p.x + p.y * p.y).sqrt();
                if r >= radius || p.z <= 0.0 || p.z >= length {
                    return None;
                }
                let radial = if r > 1e-12 {
                    Vec3::new(p.x / r, p.y / r, 0.0)
                } else {
                    Vec3::x()
                };
                [
                    (radius - r, radial),
                    (length - p.z, Vec3::z()),
                    (p.z, -Vec3::z()),
                ]
                .into_iter()
                .min_by(|a, b| a.0.total_cmp(&b.0))
            }
        }
    }

    /// Body points tested against the ground, and how many of them carry
    /// the payload when it rests upright.
    fn ground_samples(&self) -> (Vec<Vec3>, usize) {
        match *self {
            Self::Box { l, w, h } => {
                let mut pts = Vec::with_capacity(8);
                for z in [0.0, h] {
                    for (sx, sy) in [(1.0, 1.0), (1.0, -1.0), (-1.0, -1.0), (-1.0, 1.0)] {
                        pts.push(Vec3::new(sx * l / 2.0, sy * w / 2.0, z));
                    }
                }
                (pts, 4)
            }
            Self::Cylinder { radius, length } => {
                let k = 12;
                let mut pts = Vec::with_capacity(2 * k);
                for z in [0.0, length] {
                    for i in 0..k {
                        let a = std::f64::consts::TAU * i as f64 / k as f64;
                        pts.push(Vec3::new(radius * a.cos(), radius * a.sin(), z));
                    }
                }
                (pts, k)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PayloadBody {
    pub shape: PayloadShape,
    pub mass: f64,
    /// Inertia about the center of mass, body axes (kg·m²).
    pub inertia: Matrix3<f64>,
    /// Root frame (bottom-face center).
    pub pose: Pose,
    /// Center-of-mass velocity and angular velocity, world frame.
    pub twist: Twist,
}

impl PayloadBody {
    pub fn new(shape: PayloadShape, mass: f64, pose: Pose) -> Result<Self> {
        shape.validate()?;
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(PlmError::Config(format!("payload mass must be positive, got {mass}")));
        }
        Ok(Self {
            shape,
            mass,
            inertia: shape.inertia(mass),
            pose,
            twist: Twist::zero(),
        })
    }

    pub fn com_local(&self) -> Vec3 {
        Vec3::new(0.0, 0.0, self.shape.height() / 2.0)
    }

    pub fn com(&self) -> Vec3 {
        self.pose.transform_point(&self.com_local())
    }

    /// Velocity of a world point rigidly attached to the payload.
    pub fn point_velocity(&self, x: &Vec3) -> Vec3 {
        self.twist.point_velocity(&(x - self.com()))
    }

    /// Twist of the root frame origin (world frame).
    pub fn root_twist(&self) -> Twist {
        Twist::new(self.point_velocity(&self.pose.position), self.twist.angular)
    }

    fn inv_inertia_world(&self) -> Matrix3<f64> {
        let r = self.pose.rotation_matrix();
        let inv = self
            .inertia
            .try_inverse()
            .expect("payload inertia is positive definite");
        r * inv * r.transpose()
    }

    fn inertia_world(&self) -> Matrix3<f64> {
        let r = self.pose.rotation_matrix();
        r * self.inertia * r.transpose()
    }
}

/// Planar velocity command for a base, expressed in the base frame.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BaseCommand {
    pub v: [f64; 2],
    pub omega: f64,
}

impl BaseCommand {
    pub fn new(vx: f64, vy: f64, omega: f64) -> Self {
        Self { v: [vx, vy], omega }
    }

    pub fn is_finite(&self) -> bool {
        self.v[0].is_finite() && self.v[1].is_finite() && self.omega.is_finite()
    }
}

/// Per-robot base response parameters (randomized per episode).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaseDynamics {
    pub tau: f64,
    pub accel_limit: f64,
}

/// Pad servo workspace relative to the base frame (m).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReachBox {
    pub x: [f64; 2],
    pub y: [f64; 2],
    pub z: [f64; 2],
}

impl Default for ReachBox {
    fn default() -> Self {
        Self {
            x: [0.3, 0.8],
            y: [-0.3, 0.3],
            z: [0.1, 0.6],
        }
    }
}

impl ReachBox {
    pub fn clamp(&self, p: &Vec3) -> Vec3 {
        Vec3::new(
            p.x.clamp(self.x[0], self.x[1]),
            p.y.clamp(self.y[0], self.y[1]),
            p.z.clamp(self.z[0], self.z[1]),
        )
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        self.clamp(p) == *p
    }
}

/// Physical constants of the world. Immutable during an episode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysicsParams {
    pub control_dt: f64,
    pub substeps: usize,
    pub weld_substeps: usize,
    pub gravity: f64,
    /// Pad normal stiffness (N/m), shared by the pad's corner points.
    pub contact_stiffness: f64,
    pub contact_damping: f64,
    pub friction: f64,
    /// Static sag of a resting payload on the ground; sets ground stiffness.
    pub ground_sag: f64,
    pub ground_damping_ratio: f64,
    pub ground_friction: f64,
    pub pad_mass: f64,
    pub pad_half_size: f64,
    pub servo_kp: f64,
    pub servo_force_limit: f64,
    pub base_tau: f64,
    pub base_accel_limit: f64,
    pub base_yaw_rate_limit: f64,
    pub base_yaw_accel_limit: f64,
    pub base_height: f64,
    pub base_radius: f64,
    pub reach: ReachBox,
    /// Natural frequency of the privileged weld joints (rad/s).
    pub weld_frequency: f64,
    pub weld_preload: f64,
}

impl Default for PhysicsParams {
    fn default() -> Self {
        Self {
            control_dt: 0.02,
            substeps: 8,
            weld_substeps: 40,
            gravity: 9.81,
            contact_stiffness: 5e3,
            contact_damping: 50.0,
            friction: 0.8,
            ground_sag: 1e-3,
            ground_damping_ratio: 0.7,
            ground_friction: 0.6,
            pad_mass: 0.5,
            pad_half_size: 0.03,
            servo_kp: 800.0,
            servo_force_limit: 60.0,
            base_tau: 0.15,
            base_accel_limit: 2.0,
            base_yaw_rate_limit: 0.6,
            base_yaw_accel_limit: 4.0,
            base_height: 0.30,
            base_radius: 0.18,
            reach: ReachBox::default(),
            weld_frequency: 300.0,
            weld_preload: 20.0,
        }
    }
}

impl PhysicsParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("control_dt", self.control_dt),
            ("gravity", self.gravity),
            ("contact_stiffness", self.contact_stiffness),
            ("ground_sag", self.ground_sag),
            ("pad_mass", self.pad_mass),
            ("pad_half_size", self.pad_half_size),
            ("servo_kp", self.servo_kp),
            ("servo_force_limit", self.servo_force_limit),
            ("base_tau", self.base_tau),
            ("base_accel_limit", self.base_accel_limit),
            ("base_height", self.base_height),
            ("base_radius", self.base_radius),
            ("weld_frequency", self.weld_frequency),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(PlmError::Config(format!("physics.{name} must be positive, got {v}")));
            }
        }
        if self.substeps == 0 || self.weld_substeps == 0 {
            return Err(PlmError::Config("physics substeps must be >= 1".into()));
        }
        if self.friction < 0.0 || self.ground_friction < 0.0 || self.contact_damping < 0.0 {
            return Err(PlmError::Config("friction and damping must be nonnegative".into()));
        }
        Ok(())
    }

    pub fn servo_kd(&self) -> f64 {
        2.0 * (self.servo_kp * self.pad_mass).sqrt()
    }

    pub fn base_dynamics(&self) -> BaseDynamics {
        BaseDynamics {
            tau: self.base_tau,
            accel_limit: self.base_accel_limit,
        }
    }

    /// Pad corner offsets in the pad frame (the pad face is the `x = 0` plane).
    pub fn pad_corners(&self) -> [Vec3; 4] {
        let s = self.pad_half_size;
        [
            Vec3::new(0.0, s, s),
            Vec3::new(0.0, -s, s),
            Vec3::new(0.0, -s, -s),
            Vec3::new(0.0, s, -s),
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobotBody {
    pub base_pose: Pose,
    pub base_twist: Twist,
    pub pad_pose: Pose,
    pub pad_twist: Twist,
    pub commanded_base: BaseCommand,
    /// Servo setpoint for the pad, base frame.
    pub pad_target: Pose,
    /// Last servo force on the pad (world frame, gravity compensation excluded).
    pub servo_force: Vec3,
    pub dynamics: BaseDynamics,
}

impl RobotBody {
    pub fn pad_in_base(&self) -> Pose {
        self.base_pose.inverse().compose(&self.pad_pose)
    }
}

/// Per-robot contact summary for one control tick (forces averaged over
/// substeps).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContactRecord {
    pub robot_id: usize,
    pub point: Vec3,
    /// Unit normal pointing into the payload.
    pub normal: Vec3,
    pub normal_force: f64,
    /// Tangential force on the payload in the [`tangent_basis`] of `normal`.
    pub tangent_force: [f64; 2],
    pub in_contact: bool,
    /// Set when the record comes from a privileged weld, not a pad contact.
    #[serde(default)]
    pub welded: bool,
}

impl ContactRecord {
    fn empty(robot_id: usize) -> Self {
        Self {
            robot_id,
            point: Vec3::zeros(),
            normal: Vec3::x(),
            normal_force: 0.0,
            tangent_force: [0.0; 2],
            in_contact: false,
            welded: false,
        }
    }
}

/// Horizontal push on the payload center of mass over a time interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForcePulse {
    pub start: f64,
    pub duration: f64,
    pub force: Vec3,
}

/// Per-tick action for one robot.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RobotAction {
    pub pad_target: Pose,
    pub base_cmd: BaseCommand,
}

/// Kinematic attachment used by the privileged oracle: the robot is placed
/// at `base_pose`/`pad_pose` at the end of the tick and the pad is joined to
/// the contact frame `cf_offset` (payload frame) by a stiff 6-DOF spring.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Weld {
    pub base_pose: Pose,
    pub pad_pose: Pose,
    pub cf_offset: Pose,
}

/// Running per-robot average of normal force from `start` onward.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ForceWindow {
    pub start: f64,
    pub sums: Vec<f64>,
    pub ticks: usize,
}

/// Diagnostics of the most recent tick.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TickDiagnostics {
    pub max_pad_penetration: f64,
    pub max_ground_penetration: f64,
    /// Average force and torque (about the COM) from all contacts and welds.
    pub contact_force: Vec3,
    pub contact_torque: Vec3,
    /// Friction cone slack `μ·N − ‖F_t‖`, minimum over substeps and points.
    pub min_cone_slack: f64,
    pub min_normal_force: f64,
}

#[derive(Clone, Debug)]
pub struct WorldState {
    pub payload: PayloadBody,
    pub robots: Vec<RobotBody>,
    pub contacts: Vec<ContactRecord>,
    pub t: f64,
    pub gravity: Vec3,
    pub params: PhysicsParams,
    pub pulses: Vec<ForcePulse>,
    pub force_window: ForceWindow,
    pub diagnostics: TickDiagnostics,
    pad_anchors: Vec<[Option<Vec3>; 4]>,
    ground_anchors: Vec<Option<Vec3>>,
    welded: Vec<bool>,
}

impl WorldState {
    /// World with a payload and robots in the given states, no contacts yet.
    pub fn new(payload: PayloadBody, robots: Vec<RobotBody>, params: PhysicsParams) -> Self {
        let n = robots.len();
        let ground = payload.shape.ground_samples().0.len();
        Self {
            payload,
            contacts: (0..n).map(ContactRecord::empty).collect(),
            robots,
            t: 0.0,
            gravity: Vec3::new(0.0, 0.0, -params.gravity),
            params,
            pulses: Vec::new(),
            force_window: ForceWindow {
                start: crate::commands::SYNC_HORIZON,
                sums: vec![0.0; n],
                ticks: 0,
            },
            diagnostics: TickDiagnostics::default(),
            pad_anchors: vec![[None; 4]; n],
            ground_anchors: vec![None; ground],
            welded: vec![false; n],
        }
    }

    pub fn n_robots(&self) -> usize {
        self.robots.len()
    }

    pub fn is_finite(&self) -> bool {
        self.payload.pose.is_finite()
            && self.payload.twist.is_finite()
            && self.robots.iter().all(|r| {
                r.base_pose.is_finite()
                    && r.base_twist.is_finite()
                    && r.pad_pose.is_finite()
                    && r.pad_twist.is_finite()
                    && r.servo_force.iter().all(|v| v.is_finite())
            })
            && self.contacts.iter().all(|c| {
                c.normal_force.is_finite() && c.tangent_force.iter().all(|v| v.is_finite())
            })
    }

    /// Restarts the normal-force averaging window at `start`.
    pub fn reset_force_window(&mut self, start: f64) {
        self.force_window = ForceWindow {
            start,
            sums: vec![0.0; self.robots.len()],
            ticks: 0,
        };
    }

    /// Advances one control tick with servo/velocity actions.
    pub fn step(&mut self, actions: &[RobotAction]) -> Result<()> {
        if actions.len() != self.robots.len() {
            return Err(PlmError::DimensionMismatch {
                expected: self.robots.len(),
                got: actions.len(),
            });
        }
        for a in actions {
            if !a.pad_target.is_finite() || !a.base_cmd.is_finite() {
                return Err(PlmError::InvalidArgument("non-finite action".into()));
            }
        }
        let snapshot = self.clone();
        let reach = self.params.reach;
        let yaw_limit = self.params.base_yaw_rate_limit;
        for (r, a) in self.robots.iter_mut().zip(actions) {
            r.pad_target = Pose::new(reach.clamp(&a.pad_target.position), a.pad_target.orientation);
            r.commanded_base = BaseCommand {
                v: a.base_cmd.v,
                omega: a.base_cmd.omega.clamp(-yaw_limit, yaw_limit),
            };
        }
        self.welded.iter_mut().for_each(|w| *w = false);

        let n_sub = self.params.substeps;
        let h = self.params.control_dt / n_sub as f64;
        let mut acc = contact::TickAccumulator::new(self.robots.len());
        for _ in 0..n_sub {
            contact::substep(self, h, &mut acc, None);
        }
        self.finish_tick(acc, n_sub, snapshot)
    }

    /// Advances one control tick with every robot welded to its contact frame.
    pub fn step_welded(&mut self, welds: &[Weld]) -> Result<()> {
        if welds.len() != self.robots.len() {
            return Err(PlmError::DimensionMismatch {
                expected: self.robots.len(),
                got: welds.len(),
            });
        }
        let snapshot = self.clone();
        let dt = self.params.control_dt;
        let starts: Vec<(Pose, Pose)> = self
            .robots
            .iter()
            .zip(welds)
            .zip(&self.welded)
            .map(|((r, w), was)| {
                if *was {
                    (r.base_pose, r.pad_pose)
                } else {
                    (w.base_pose, w.pad_pose)
                }
            })
            .collect();
        for (r, (base0, pad0)) in self.robots.iter_mut().zip(&starts) {
            r.base_pose = *base0;
            r.pad_pose = *pad0;
        }
        self.welded.iter_mut().for_each(|w| *w = true);
        for (i, w) in welds.iter().enumerate() {
            let (base0, pad0) = starts[i];
            let r = &mut self.robots[i];
            r.base_twist = finite_difference_twist(&base0, &w.base_pose, dt);
            r.pad_twist = finite_difference_twist(&pad0, &w.pad_pose, dt);
            r.pad_target = w.base_pose.inverse().compose(&w.pad_pose);
            r.commanded_base = BaseCommand::default();
        }

        let n_sub = self.params.weld_substeps;
        let h = dt / n_sub as f64;
        let mut acc = contact::TickAccumulator::new(self.robots.len());
        for k in 0..n_sub {
            let s = (k + 1) as f64 / n_sub as f64;
            let current: Vec<Weld> = welds
                .iter()
                .zip(&starts)
                .map(|(w, (base0, pad0))| Weld {
                    base_pose: interpolate(base0, &w.base_pose, s),
                    pad_pose: interpolate(pad0, &w.pad_pose, s),
                    cf_offset: w.cf_offset,
                })
                .collect();
            contact::substep(self, h, &mut acc, Some(&current));
        }
        for (r, w) in self.robots.iter_mut().zip(welds) {
            r.base_pose = w.base_pose;
            r.pad_pose = w.pad_pose;
        }
        self.finish_tick(acc, n_sub, snapshot)
    }

    fn finish_tick(
        &mut self,
        acc: contact::TickAccumulator,
        n_sub: usize,
        snapshot: WorldState,
    ) -> Result<()> {
        // tick-aligned clock, free of accumulated rounding
        let dt = self.params.control_dt;
        self.t = ((snapshot.t / dt).round() + 1.0) * dt;
        acc.write_into(self, n_sub);
        if !self.is_finite() {
            let t = self.t;
            *self = snapshot.clone();
            return Err(PlmError::Diverged {
                t,
                last_valid: Box::new(snapshot),
            });
        }
        if self.t + 1e-9 >= self.force_window.start {
            for (sum, c) in self.force_window.sums.iter_mut().zip(&self.contacts) {
                *sum += c.normal_force;
            }
            self.force_window.ticks += 1;
        }
        Ok(())
    }
}

fn interpolate(a: &Pose, b: &Pose, s: f64) -> Pose {
    Pose::new(
        a.position + (b.position - a.position) * s,
        a.orientation.slerp(&b.orientation, s),
    )
}

fn finite_difference_twist(a: &Pose, b: &Pose, dt: f64) -> Twist {
    let dq: UnitQuaternion<f64> = b.orientation * a.orientation.inverse();
    Twist::new((b.position - a.position) / dt, dq.scaled_axis() / dt)
}
