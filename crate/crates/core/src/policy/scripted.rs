use nalgebra::UnitQuaternion;
use serde::{Deserialize, Serialize};

use super::observation::{Action, ActionBounds, Observation};
use crate::geometry::{rotate_planar, wrap_angle, Pose, Vec3};
use crate::world::{PhysicsParams, ReachBox};

/// Gains and timing of the scripted pinch-lift-move controller.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScriptedConfig {
    /// End of the approach stage (s).
    pub approach_end: f64,
    /// End of the squeeze stage (s).
    pub squeeze_end: f64,
    /// End of the lift ramp (s).
    pub lift_end: f64,
    /// Start of transport (s).
    pub transport_start: f64,
    /// Squeeze never drops below this normal force (N).
    pub min_squeeze: f64,
    /// Squeeze as a multiple of the vertical load carried by the pad.
    pub load_ratio: f64,
    /// Base correction gain on pad drift along the contact normal (1/s).
    pub deflection_gain: f64,
    /// Integral gain on pad drift along the contact normal (1/s²).
    pub deflection_integral: f64,
    /// Base correction gain on pad drift along the contact surface (1/s).
    pub tangential_gain: f64,
    /// Yaw correction gain on contact-frame heading error (1/s).
    pub heading_gain: f64,
    /// Fraction of the horizontal tangential pad force relieved per tick
    /// before transport, so side pads do not pin the payload by friction.
    pub tangential_yield: f64,
    /// Low-pass factor for noisy estimates, per tick.
    pub smoothing: f64,
    pub control_dt: f64,
    /// Pad and servo compliance used to turn force into squeeze depth (m/N).
    pub compliance: f64,
    pub servo_kp: f64,
    pub reach: ReachBox,
}

impl Default for ScriptedConfig {
    fn default() -> Self {
        Self::from_physics(&PhysicsParams::default())
    }
}

impl ScriptedConfig {
    pub fn from_physics(p: &PhysicsParams) -> Self {
        Self {
            approach_end: 1.5,
            squeeze_end: 3.0,
            lift_end: 4.5,
            transport_start: 5.0,
            min_squeeze: 20.0,
            load_ratio: 2.5,
            deflection_gain: 1.5,
            deflection_integral: 1.0,
            tangential_gain: 0.0,
            heading_gain: 1.0,
            tangential_yield: 0.1,
            smoothing: 0.2,
            control_dt: p.control_dt,
            compliance: 1.0 / p.contact_stiffness + 1.0 / p.servo_kp,
            servo_kp: p.servo_kp,
            reach: p.reach,
        }
    }
}

fn smoothstep(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x * x * (3.0 - 2.0 * x)
}

/// Pinch-lift-move from local observations only. Holds its own clock, its
/// own copy of the pad setpoint and filtered estimates.
#[derive(Clone, Debug, PartialEq)]
pub struct ScriptedController {
    cfg: ScriptedConfig,
    bounds: ActionBounds,
    tick: u64,
    setpoint: Option<Pose>,
    cf: Option<Pose>,
    /// Last observed contact frame and whether it changed this tick.
    last_cf: Option<[f64; 7]>,
    cf_fresh: bool,
    load: f64,
    height: f64,
    /// Contact point and inward normal captured when squeezing starts.
    grip: Option<(Vec3, Vec3, UnitQuaternion<f64>)>,
    squeeze: f64,
    /// Setpoint shift along the horizontal contact tangent (m).
    yield_offset: f64,
    lift_from: Option<f64>,
    /// Filtered pad position and its running sum over the settle window.
    pad: Option<Vec3>,
    settle: (Vec3, u32),
    /// Setpoint and settled pad position when transport starts.
    carry: Option<(Pose, Vec3, f64)>,
    drift_integral: f64,
    /// Base heading lag behind the commanded yaw since transport started.
    heading_lag: f64,
}

impl ScriptedController {
    pub fn new(cfg: ScriptedConfig, bounds: ActionBounds) -> Self {
        Self {
            cfg,
            bounds,
            tick: 0,
            setpoint: None,
            cf: None,
            last_cf: None,
            cf_fresh: false,
            load: 0.0,
            height: 0.0,
            grip: None,
            squeeze: 0.0,
            yield_offset: 0.0,
            lift_from: None,
            pad: None,
            settle: (Vec3::zeros(), 0),
            carry: None,
            drift_integral: 0.0,
            heading_lag: 0.0,
        }
    }

    pub fn reset(&mut self) {
        *self = Self::new(self.cfg, self.bounds);
    }

    fn filter(&mut self, obs: &Observation) {
        let a = self.cfg.smoothing;
        // a held frame repeats bit for bit
        self.cf_fresh = self.last_cf != Some(obs.cf_pose);
        self.last_cf = Some(obs.cf_pose);
        let est = obs.cf_estimate();
        self.cf = Some(match self.cf {
            None => est,
            Some(prev) => Pose::new(
                prev.position + (est.position - prev.position) * a,
                prev.orientation.slerp(&est.orientation, a),
            ),
        });
        let pad = obs.pad().position;
        self.pad = Some(self.pad.map_or(pad, |p| p + (pad - p) * a));
        let t = self.tick as f64 * self.cfg.control_dt;
        if t >= self.cfg.lift_end && t < self.cfg.transport_start {
            self.settle.0 += pad;
            self.settle.1 += 1;
        }
        let fz = obs.servo_force[2].max(0.0);
        if self.tick == 0 {
            self.height = obs.base_height;
            self.load = fz;
        } else {
            self.height += (obs.base_height - self.height) * a;
            self.load += (fz - self.load) * a;
        }
    }

    /// Pad setpoint this tick, base frame.
    fn desired_pad(&mut self, t: f64, obs: &Observation) -> Pose {
        let c = self.cfg;
        let cf = self.cf.expect("filtered");
        if t < c.approach_end {
            return cf;
        }
        let (p0, n, q) = *self.grip.get_or_insert((cf.position, cf.transform_vector(&Vec3::x()), cf.orientation));
        let wanted = c.min_squeeze.max(c.load_ratio * self.load);
        let ramp = smoothstep((t - c.approach_end) / (c.squeeze_end - c.approach_end).max(1e-9));
        self.squeeze = self.squeeze.max(wanted * ramp);
        let tangent = n.cross(&Vec3::z()).normalize();
        if t < c.transport_start {
            let pushed = -Vec3::from(obs.servo_force).dot(&tangent);
            self.yield_offset += c.tangential_yield * pushed / c.servo_kp;
        }
        let mut p = p0 + n * (self.squeeze * c.compliance) + tangent * self.yield_offset;
        if t >= c.squeeze_end {
            let z0 = *self.lift_from.get_or_insert(p0.z);
            let goal = obs.cf_command[3] - self.height + self.load / c.servo_kp;
            let s = smoothstep((t - c.squeeze_end) / (c.lift_end - c.squeeze_end).max(1e-9));
            p.z = z0 + (goal - z0) * s;
        }
        Pose::new(p, q)
    }

    fn base_command(&mut self, t: f64, obs: &Observation) -> [f64; 3] {
        if t < self.cfg.transport_start {
            return [0.0; 3];
        }
        let sp = self.setpoint.expect("set");
        let pad = self.pad.expect("filtered");
        let cf_yaw = self.cf.expect("filtered").yaw();
        let (sum, count) = self.settle;
        let settled = if count > 0 { sum / count as f64 } else { pad };
        let (carry, rest, yaw0) = *self.carry.get_or_insert((sp, settled, cf_yaw));
        let [vx, vy, w, _] = obs.cf_command;
        let c = self.cfg;
        self.heading_lag += (w - obs.base_twist[2]) * c.control_dt;
        let v = carry.transform_vector(&Vec3::new(vx, vy, 0.0));
        let p = carry.position;
        let rigid = rotate_planar([v.x + w * p.y, v.y - w * p.x], self.heading_lag);
        // pad drift from its loaded rest position means the payload leads or lags
        let n = carry.transform_vector(&Vec3::x());
        let (n, t) = ([n.x, n.y], [-n.y, n.x]);
        let d = [pad.x - rest.x, pad.y - rest.y];
        let along = d[0] * n[0] + d[1] * n[1];
        let across = d[0] * t[0] + d[1] * t[1];
        self.drift_integral += along * c.control_dt;
        let normal = c.deflection_gain * along + c.deflection_integral * self.drift_integral;
        let tangential = c.tangential_gain * across;
        let turn = if self.cf_fresh {
            c.heading_gain * wrap_angle(cf_yaw - yaw0)
        } else {
            0.0
        };
        [
            rigid[0] + normal * n[0] + tangential * t[0],
            rigid[1] + normal * n[1] + tangential * t[1],
            w + turn,
        ]
    }

    pub fn act(&mut self, obs: &Observation) -> Action {
        let t = self.tick as f64 * self.cfg.control_dt;
        self.filter(obs);
        let sp = *self.setpoint.get_or_insert(obs.pad());
        let want = self.desired_pad(t, obs);
        let want = Pose::new(self.cfg.reach.clamp(&want.position), want.orientation);

        let mut dp = want.position - sp.position;
        let step = dp.norm();
        if step > self.bounds.pad_step {
            dp *= self.bounds.pad_step / step;
        }
        let mut dr = (want.orientation * sp.orientation.inverse()).scaled_axis();
        let turn = dr.norm();
        if turn > self.bounds.pad_turn {
            dr *= self.bounds.pad_turn / turn;
        }
        let next = Pose::new(
            sp.position + dp,
            UnitQuaternion::from_scaled_axis(dr) * sp.orientation,
        );
        self.setpoint = Some(next);

        let base = self.base_command(t, obs);
        self.tick += 1;
        self.bounds.clip(&Action {
            pad_delta: [dp.x, dp.y, dp.z, dr.x, dr.y, dr.z],
            base_cmd: base,
        })
    }
}
