use super::{PayloadBody, PayloadShape, WorldState};
use crate::commands::SYNC_HORIZON;
use crate::geometry::Vec3;

/// Payload root height below which a lifted payload counts as dropped (m).
pub const DROP_HEIGHT: f64 = 0.05;
/// Commanded heights at or above this make a grounded payload a drop (m).
pub const DROP_MIN_COMMAND: f64 = 0.1;
/// How long every contact may be lost before the payload counts as dropped (s).
pub const CONTACT_LOSS_WINDOW: f64 = 0.5;
/// Base tilt beyond which a robot has fallen (rad).
pub const FAILURE_TILT: f64 = std::f64::consts::PI / 6.0;
/// Allowed base interpenetration before a collision is declared (m).
pub const COLLISION_TOLERANCE: f64 = 0.02;

/// Stateless drop test. `contact_lost_for` is how long no pad has touched
/// the payload.
pub fn detect_drop(w: &WorldState, commanded_h: f64, contact_lost_for: f64) -> bool {
    if w.t + 1e-9 < SYNC_HORIZON {
        return false;
    }
    (w.payload.pose.position.z < DROP_HEIGHT && commanded_h >= DROP_MIN_COMMAND)
        || contact_lost_for > CONTACT_LOSS_WINDOW
}

/// Tracks contact loss over time and latches the first drop.
#[derive(Clone, Debug, Default)]
pub struct DropDetector {
    lost_since: Option<f64>,
    dropped_at: Option<f64>,
}

impl DropDetector {
    pub fn new() -> Self {
        Self::default()
    }

    /// Feed one tick; returns true once a drop has happened.
    pub fn update(&mut self, w: &WorldState, commanded_h: f64) -> bool {
        if self.dropped_at.is_some() {
            return true;
        }
        let any_contact = w.contacts.iter().any(|c| c.in_contact);
        let lost_for = if any_contact || w.t + 1e-9 < SYNC_HORIZON {
            self.lost_since = None;
            0.0
        } else {
            w.t - *self.lost_since.get_or_insert(w.t - w.params.control_dt)
        };
        if detect_drop(w, commanded_h, lost_for) {
            self.dropped_at = Some(w.t);
        }
        self.dropped_at.is_some()
    }

    pub fn dropped_at(&self) -> Option<f64> {
        self.dropped_at
    }
}

/// Horizontal overlap of a base disc with the payload footprint (m), zero
/// when the payload is lifted clear of the base.
pub(crate) fn base_payload_penetration(payload: &PayloadBody, base: &Vec3, radius: f64) -> f64 {
    let local = payload.pose.inverse().transform_point(base);
    let gap = match payload.shape {
        PayloadShape::Box { l, w, .. } => {
            let dx = local.x.abs() - l / 2.0;
            let dy = local.y.abs() - w / 2.0;
            if dx <= 0.0 && dy <= 0.0 {
                dx.max(dy)
            } else {
                dx.max(0.0).hypot(dy.max(0.0))
            }
        }
        PayloadShape::Cylinder { radius: rc, .. } => local.x.hypot(local.y) - rc,
    };
    (radius - gap).max(0.0)
}

/// True if any base collides with another base or the payload, or has
/// tipped beyond [`FAILURE_TILT`].
pub fn detect_robot_failure(w: &WorldState) -> bool {
    let r = w.params.base_radius;
    let payload_low = w.payload.pose.position.z < w.params.base_height;
    for (i, a) in w.robots.iter().enumerate() {
        if a.base_pose.tilt() > FAILURE_TILT {
            return true;
        }
        if payload_low && base_payload_penetration(&w.payload, &a.base_pose.position, r) > COLLISION_TOLERANCE {
            return true;
        }
        for b in &w.robots[i + 1..] {
            let d = a.base_pose.position - b.base_pose.position;
            if 2.0 * r - d.x.hypot(d.y) > COLLISION_TOLERANCE {
                return true;
            }
        }
    }
    false
}

/// Per-robot mean normal force over the world's force window.
pub fn contact_wrench_summary(w: &WorldState) -> Vec<f64> {
    let fw = &w.force_window;
    if fw.ticks == 0 {
        return vec![0.0; fw.sums.len()];
    }
    fw.sums.iter().map(|s| s / fw.ticks as f64).collect()
}
