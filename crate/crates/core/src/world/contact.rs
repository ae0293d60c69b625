use nalgebra::UnitQuaternion;

use super::{tangent_basis, ContactRecord, Weld, WorldState};
use crate::geometry::{Pose, Twist, Vec3};

/// Sums over the substeps of one control tick.
pub(super) struct TickAccumulator {
    normal: Vec<f64>,
    tangent: Vec<Vec3>,
    point: Vec<Vec3>,
    direction: Vec<Vec3>,
    touching: Vec<bool>,
    welded: bool,
    force: Vec3,
    torque: Vec3,
    max_pad_pen: f64,
    max_ground_pen: f64,
    min_slack: f64,
    min_normal: f64,
}

impl TickAccumulator {
    pub(super) fn new(n: usize) -> Self {
        Self {
            normal: vec![0.0; n],
            tangent: vec![Vec3::zeros(); n],
            point: vec![Vec3::zeros(); n],
            direction: vec![Vec3::x(); n],
            touching: vec![false; n],
            welded: false,
            force: Vec3::zeros(),
            torque: Vec3::zeros(),
            max_pad_pen: 0.0,
            max_ground_pen: 0.0,
            min_slack: f64::INFINITY,
            min_normal: f64::INFINITY,
        }
    }

    pub(super) fn write_into(self, w: &mut WorldState, n_sub: usize) {
        let k = n_sub as f64;
        for (i, c) in w.contacts.iter_mut().enumerate() {
            let fn_avg = self.normal[i] / k;
            let ft = self.tangent[i] / k;
            let n = self.direction[i];
            let (t1, t2) = tangent_basis(&n);
            *c = ContactRecord {
                robot_id: i,
                point: if self.normal[i] > 0.0 {
                    self.point[i] / self.normal[i]
                } else {
                    w.robots[i].pad_pose.position
                },
                normal: n,
                normal_force: fn_avg,
                tangent_force: [ft.dot(&t1), ft.dot(&t2)],
                in_contact: self.touching[i],
                welded: self.welded,
            };
        }
        w.diagnostics.max_pad_penetration = self.max_pad_pen;
        w.diagnostics.max_ground_penetration = self.max_ground_pen;
        w.diagnostics.contact_force = self.force / k;
        w.diagnostics.contact_torque = self.torque / k;
        w.diagnostics.min_cone_slack = if self.min_slack.is_finite() { self.min_slack } else { 0.0 };
        w.diagnostics.min_normal_force = if self.min_normal.is_finite() { self.min_normal } else { 0.0 };
    }
}

/// Penalty contact between a point on body A and the surface of body B.
struct PointContact {
    depth: f64,
    /// Unit normal along which A pushes B.
    normal: Vec3,
    /// Velocity of A's point relative to B's coincident point.
    v_rel: Vec3,
    /// A's point minus B's anchor, world frame.
    anchor_offset: Vec3,
    stiffness: f64,
    damping: f64,
    tangent_stiffness: f64,
    tangent_damping: f64,
    mu: f64,
}

struct ContactForce {
    /// Force A exerts on B.
    on_b: Vec3,
    normal: f64,
    tangent: Vec3,
    /// Replacement for the anchor offset when the contact slides.
    new_anchor_offset: Option<Vec3>,
}

fn resolve(c: &PointContact) -> ContactForce {
    let n = c.normal;
    let vn = c.v_rel.dot(&n);
    let normal = (c.stiffness * c.depth + c.damping * vn).max(0.0);
    let d_n = c.anchor_offset.dot(&n);
    let d_t = c.anchor_offset - d_n * n;
    let v_t = c.v_rel - vn * n;
    let trial = c.tangent_stiffness * d_t + c.tangent_damping * v_t;
    let cap = c.mu * normal;
    let trial_norm = trial.norm();
    let (tangent, new_anchor_offset) = if trial_norm <= cap {
        (trial, None)
    } else {
        let t = if trial_norm > 0.0 { trial * (cap / trial_norm) } else { Vec3::zeros() };
        let spring = if c.tangent_stiffness > 0.0 { t / c.tangent_stiffness } else { Vec3::zeros() };
        (t, Some(d_n * n + spring))
    };
    ContactForce {
        on_b: normal * n + tangent,
        normal,
        tangent,
        new_anchor_offset,
    }
}

/// One physics substep of length `h`. With `welds`, robots are kinematic and
/// joined to the payload by weld springs instead of pad contacts.
pub(super) fn substep(w: &mut WorldState, h: f64, acc: &mut TickAccumulator, welds: Option<&[Weld]>) {
    let p = w.params.clone();
    let n = w.robots.len();
    let com = w.payload.com();
    let mut f_payload = w.payload.mass * w.gravity;
    let mut tau_payload = Vec3::zeros();
    let mut f_pads = vec![Vec3::zeros(); n];

    for pulse in &w.pulses {
        if w.t >= pulse.start && w.t < pulse.start + pulse.duration {
            f_payload += pulse.force;
        }
    }

    match welds {
        None => {
            update_bases(w, h);
            let corners = p.pad_corners();
            let kc = p.contact_stiffness / corners.len() as f64;
            // keep explicit damping stable for light payloads
            let m_red = p.pad_mass * w.payload.mass / (p.pad_mass + w.payload.mass);
            let cc = (p.contact_damping / corners.len() as f64)
                .min(m_red / (h * (corners.len() * n.max(1)) as f64));
            let inv_payload = w.payload.pose.inverse();
            for i in 0..n {
                let pad = w.robots[i].pad_pose;
                let pad_twist = w.robots[i].pad_twist;
                let mut touching = false;
                for (k, corner_local) in corners.iter().enumerate() {
                    let x = pad.transform_point(corner_local);
                    let local = inv_payload.transform_point(&x);
                    let Some((depth, n_out)) = w.payload.shape.penetration(&local) else {
                        w.pad_anchors[i][k] = None;
                        continue;
                    };
                    touching = true;
                    let anchor_local = *w.pad_anchors[i][k].get_or_insert(local);
                    let anchor = w.payload.pose.transform_point(&anchor_local);
                    let normal = -w.payload.pose.transform_vector(&n_out);
                    let v_pad = pad_twist.point_velocity(&(x - pad.position));
                    let c = PointContact {
                        depth,
                        normal,
                        v_rel: v_pad - w.payload.point_velocity(&x),
                        anchor_offset: x - anchor,
                        stiffness: kc,
                        damping: cc,
                        tangent_stiffness: kc,
                        tangent_damping: cc,
                        mu: p.friction,
                    };
                    let f = resolve(&c);
                    if let Some(off) = f.new_anchor_offset {
                        w.pad_anchors[i][k] = Some(inv_payload.transform_point(&(x - off)));
                    }
                    f_payload += f.on_b;
                    tau_payload += (x - com).cross(&f.on_b);
                    f_pads[i] -= f.on_b;

                    acc.normal[i] += f.normal;
                    acc.tangent[i] += f.tangent;
                    acc.point[i] += f.normal * x;
                    acc.direction[i] = normal;
                    acc.max_pad_pen = acc.max_pad_pen.max(depth);
                    acc.min_slack = acc.min_slack.min(p.friction * f.normal - f.tangent.norm());
                    acc.min_normal = acc.min_normal.min(f.normal);
                    acc.force += f.on_b;
                    acc.torque += (x - com).cross(&f.on_b);
                }
                acc.touching[i] = touching;
            }
        }
        Some(welds) => {
            acc.welded = true;
            let omega = p.weld_frequency;
            let share = n.max(1) as f64;
            let k_lin = omega * omega * w.payload.mass / share;
            let c_lin = 2.0 * omega * w.payload.mass / share;
            let inertia = w.payload.inertia.diagonal().max();
            let k_rot = omega * omega * inertia / share;
            let c_rot = 2.0 * omega * inertia / share;
            for (i, weld) in welds.iter().enumerate() {
                let r = &mut w.robots[i];
                r.base_pose = weld.base_pose;
                r.pad_pose = weld.pad_pose;
                let cf = w.payload.pose.compose(&weld.cf_offset);
                let normal = cf.transform_vector(&Vec3::x());
                let v_pad = r.pad_twist.linear;
                let v_cf = w.payload.point_velocity(&cf.position);
                let f = k_lin * (weld.pad_pose.position - cf.position)
                    + c_lin * (v_pad - v_cf)
                    + p.weld_preload * normal;
                let q_err: UnitQuaternion<f64> = weld.pad_pose.orientation * cf.orientation.inverse();
                let tau = k_rot * q_err.scaled_axis()
                    + c_rot * (r.pad_twist.angular - w.payload.twist.angular);
                f_payload += f;
                tau_payload += (cf.position - com).cross(&f) + tau;

                let fn_ = f.dot(&normal);
                acc.normal[i] += fn_.max(0.0);
                acc.tangent[i] += f - fn_ * normal;
                acc.point[i] += fn_.max(0.0) * cf.position;
                acc.direction[i] = normal;
                acc.touching[i] = true;
                acc.force += f;
                acc.torque += (cf.position - com).cross(&f) + tau;
            }
        }
    }

    // payload / ground
    let (samples, support) = w.payload.shape.ground_samples();
    let kg = w.payload.mass * p.gravity / (support as f64 * p.ground_sag);
    let cg = 2.0 * p.ground_damping_ratio * (kg * w.payload.mass / support as f64).sqrt();
    for (j, s) in samples.iter().enumerate() {
        let x = w.payload.pose.transform_point(s);
        if x.z >= 0.0 {
            w.ground_anchors[j] = None;
            continue;
        }
        let anchor = *w.ground_anchors[j].get_or_insert(Vec3::new(x.x, x.y, 0.0));
        // the ground pushes the payload: A = ground, B = payload
        let c = PointContact {
            depth: -x.z,
            normal: Vec3::z(),
            v_rel: -w.payload.point_velocity(&x),
            anchor_offset: anchor - x,
            stiffness: kg,
            damping: cg,
            tangent_stiffness: kg,
            tangent_damping: cg,
            mu: p.ground_friction,
        };
        let f = resolve(&c);
        if let Some(off) = f.new_anchor_offset {
            w.ground_anchors[j] = Some(x + off);
        }
        f_payload += f.on_b;
        tau_payload += (x - com).cross(&f.on_b);
        acc.max_ground_pen = acc.max_ground_pen.max(-x.z);
        acc.min_slack = acc.min_slack.min(p.ground_friction * f.normal - f.tangent.norm());
        acc.min_normal = acc.min_normal.min(f.normal);
        acc.force += f.on_b;
        acc.torque += (x - com).cross(&f.on_b);
    }

    if welds.is_none() {
        update_pads(w, h, &f_pads);
    }
    integrate_payload(w, h, f_payload, tau_payload);
}

fn update_bases(w: &mut WorldState, h: f64) {
    let p = &w.params;
    for r in &mut w.robots {
        let yaw = r.base_pose.yaw();
        let cmd = r.commanded_base;
        let (s, c) = yaw.sin_cos();
        let v_cmd = Vec3::new(c * cmd.v[0] - s * cmd.v[1], s * cmd.v[0] + c * cmd.v[1], 0.0);
        let mut v = r.base_twist.linear;
        v.z = 0.0;
        let mut a = (v_cmd - v) / r.dynamics.tau;
        let a_norm = a.norm();
        if a_norm > r.dynamics.accel_limit {
            a *= r.dynamics.accel_limit / a_norm;
        }
        v += a * h;
        let omega_cmd = cmd.omega.clamp(-p.base_yaw_rate_limit, p.base_yaw_rate_limit);
        let mut omega = r.base_twist.angular.z;
        let alpha = ((omega_cmd - omega) / r.dynamics.tau)
            .clamp(-p.base_yaw_accel_limit, p.base_yaw_accel_limit);
        omega = (omega + alpha * h).clamp(-p.base_yaw_rate_limit, p.base_yaw_rate_limit);

        let rot = UnitQuaternion::from_axis_angle(&Vec3::z_axis(), omega * h);
        r.base_pose = Pose::new(r.base_pose.position + v * h, rot * r.base_pose.orientation);
        r.base_twist = Twist::new(v, Vec3::new(0.0, 0.0, omega));
    }
}

fn update_pads(w: &mut WorldState, h: f64, contact_forces: &[Vec3]) {
    let p = &w.params;
    let kd = p.servo_kd();
    for (r, f_contact) in w.robots.iter_mut().zip(contact_forces) {
        let target = r.base_pose.compose(&r.pad_target);
        let v_target = r
            .base_twist
            .point_velocity(&(target.position - r.base_pose.position));
        let mut f = p.servo_kp * (target.position - r.pad_pose.position)
            + kd * (v_target - r.pad_twist.linear);
        let norm = f.norm();
        if norm > p.servo_force_limit {
            f *= p.servo_force_limit / norm;
        }
        r.servo_force = f;
        // gravity compensation cancels the pad weight
        let v = r.pad_twist.linear + (f + f_contact) / p.pad_mass * h;
        r.pad_pose = Pose::new(r.pad_pose.position + v * h, target.orientation);
        r.pad_twist = Twist::new(v, r.base_twist.angular);
    }
}

fn integrate_payload(w: &mut WorldState, h: f64, force: Vec3, torque: Vec3) {
    let body = &mut w.payload;
    let com_local = body.com_local();
    let com = body.com();
    let inv_i = body.inv_inertia_world();
    let i_w = body.inertia_world();
    let omega = body.twist.angular;
    let v = body.twist.linear + force / body.mass * h;
    let omega = omega + inv_i * (torque - omega.cross(&(i_w * omega))) * h;
    let new_com = com + v * h;
    let rot = UnitQuaternion::from_scaled_axis(omega * h);
    let orientation = rot * body.pose.orientation;
    let orientation = UnitQuaternion::from_quaternion(orientation.into_inner());
    let root = new_com - orientation * com_local;
    body.pose = Pose::new(root, orientation);
    body.twist = Twist::new(v, omega);
}
