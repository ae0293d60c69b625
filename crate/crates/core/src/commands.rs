//! Team-level payload commands and their per-robot decomposition.
//!
//! The payload command is a joystick-style tuple for the payload root frame:
//! planar velocity in the payload's own heading frame, yaw rate, and the
//! absolute root height above ground. Each robot receives the same command
//! re-expressed at its contact frame through the rigid-offset velocity
//! relation, which needs nothing but the robot's fixed offset.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{PlmError, Result};
use crate::geometry::{Pose, Vec3};

/// Length of the synchronized pinch-lift window (s).
pub const SYNC_HORIZON: f64 = 5.0;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PayloadCommand {
    /// Planar velocity of the payload root in the payload heading frame (m/s).
    pub v_pl: [f64; 2],
    /// Yaw rate (rad/s).
    pub omega_pl: f64,
    /// Payload root height above ground (m).
    pub h_pl: f64,
}

impl PayloadCommand {
    pub fn new(vx: f64, vy: f64, omega: f64, h: f64) -> Self {
        Self {
            v_pl: [vx, vy],
            omega_pl: omega,
            h_pl: h,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.v_pl[0].is_finite()
            && self.v_pl[1].is_finite()
            && self.omega_pl.is_finite()
            && self.h_pl.is_finite()
    }

    /// The command a team sees during the pinch-lift window: only height.
    pub fn lift_only(&self) -> Self {
        Self::new(0.0, 0.0, 0.0, self.h_pl)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ContactFrameCommand {
    pub v_cf: [f64; 2],
    pub omega_cf: f64,
    pub h_cf: f64,
}

/// Fixed offset of a contact frame from the payload root, payload frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContactOffset(pub Vec3);

/// `v_cf = v_pl + ω × p_offset` (planar), `ω_cf = ω_pl`, `h_cf = h_pl + p_offset,z`.
pub fn decompose_command(c: &PayloadCommand, off: &ContactOffset) -> ContactFrameCommand {
    let p = off.0;
    // (0, 0, ω) × (px, py, pz) = (−ω py, ω px, 0)
    ContactFrameCommand {
        v_cf: [
            c.v_pl[0] - c.omega_pl * p.y,
            c.v_pl[1] + c.omega_pl * p.x,
        ],
        omega_cf: c.omega_pl,
        h_cf: c.h_pl + p.z,
    }
}

/// Uniform sampling ranges for evaluation commands.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommandRanges {
    pub vx: [f64; 2],
    pub vy: [f64; 2],
    pub omega: [f64; 2],
    pub h: [f64; 2],
}

impl Default for CommandRanges {
    fn default() -> Self {
        Self {
            vx: [-0.4, 0.4],
            vy: [-0.4, 0.4],
            omega: [-0.4, 0.4],
            h: [0.1, 0.3],
        }
    }
}

impl CommandRanges {
    pub fn zero() -> Self {
        Self {
            vx: [0.0, 0.0],
            vy: [0.0, 0.0],
            omega: [0.0, 0.0],
            h: [0.0, 0.0],
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, r) in [
            ("vx", self.vx),
            ("vy", self.vy),
            ("omega", self.omega),
            ("h", self.h),
        ] {
            if !(r[0].is_finite() && r[1].is_finite() && r[0] <= r[1]) {
                return Err(PlmError::Config(format!(
                    "command range {name} = {r:?} is empty or not finite"
                )));
            }
        }
        if self.h[0] < 0.0 {
            return Err(PlmError::Config("height range must be nonnegative".into()));
        }
        Ok(())
    }
}

pub(crate) fn uniform<R: Rng + ?Sized>(rng: &mut R, r: [f64; 2]) -> f64 {
    if r[1] > r[0] {
        rng.random_range(r[0]..r[1])
    } else {
        r[0]
    }
}

pub fn sample_eval_command<R: Rng + ?Sized>(rng: &mut R, ranges: &CommandRanges) -> PayloadCommand {
    PayloadCommand::new(
        uniform(rng, ranges.vx),
        uniform(rng, ranges.vy),
        uniform(rng, ranges.omega),
        uniform(rng, ranges.h),
    )
}

/// Shared clock for the pinch-lift window, saturating at [`SYNC_HORIZON`].
pub fn sync_signal(t: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(PlmError::InvalidArgument(format!(
            "sync signal needs t >= 0, got {t}"
        )));
    }
    Ok(t.min(SYNC_HORIZON))
}

/// Maximum vertical rate of the virtual target frame (m/s).
pub const TARGET_CLIMB_RATE: f64 = 0.1;

/// Virtual commanded payload frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetFrame {
    pub pose: Pose,
}

impl TargetFrame {
    pub fn new(pose: Pose) -> Self {
        Self { pose }
    }

    /// World-frame velocity of a point fixed at `offset` (target frame) under `c`.
    pub fn point_velocity(&self, c: &PayloadCommand, offset: &Vec3) -> Vec3 {
        let v_body = Vec3::new(c.v_pl[0], c.v_pl[1], 0.0);
        let r = self.pose.transform_vector(offset);
        let omega = Vec3::new(0.0, 0.0, c.omega_pl);
        let yaw = self.pose.yaw();
        let v_world = nalgebra::Rotation3::from_axis_angle(&Vec3::z_axis(), yaw) * v_body;
        v_world + omega.cross(&Vec3::new(r.x, r.y, 0.0))
    }
}

/// Advances the target frame by `dt` under `c`.
///
/// Planar motion is the exact unicycle solution for body-frame velocity
/// `v_pl` and constant yaw rate; height moves toward `h_pl` at
/// [`TARGET_CLIMB_RATE`].
pub fn target_frame_integrate(tf: &TargetFrame, c: &PayloadCommand, dt: f64) -> Result<TargetFrame> {
    if !(dt > 0.0) {
        return Err(PlmError::InvalidArgument(format!("dt must be > 0, got {dt}")));
    }
    let psi0 = tf.pose.yaw();
    let w = c.omega_pl;
    let [vx, vy] = c.v_pl;
    let (dx, dy) = if w.abs() < 1e-12 {
        let (s, co) = psi0.sin_cos();
        ((co * vx - s * vy) * dt, (s * vx + co * vy) * dt)
    } else {
        let psi1 = psi0 + w * dt;
        let s = (psi1.sin() - psi0.sin()) / w;
        let cc = (psi0.cos() - psi1.cos()) / w;
        (vx * s - vy * cc, vx * cc + vy * s)
    };
    let mut position = tf.pose.position + Vec3::new(dx, dy, 0.0);
    let dz = (c.h_pl - position.z).clamp(-TARGET_CLIMB_RATE * dt, TARGET_CLIMB_RATE * dt);
    position.z += dz;
    let yaw_step = nalgebra::UnitQuaternion::from_axis_angle(&Vec3::z_axis(), w * dt);
    Ok(TargetFrame::new(Pose::new(position, yaw_step * tf.pose.orientation)))
}

#[cfg(test)]
mod tests {
    use std::f64::consts::TAU;

    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn decompose_examples() {
        let c = PayloadCommand::new(0.1, -0.2, 0.3, 0.15);
        let out = decompose_command(&c, &ContactOffset(Vec3::zeros()));
        assert_eq!(out.v_cf, c.v_pl);
        assert_eq!(out.omega_cf, c.omega_pl);
        assert_eq!(out.h_cf, c.h_pl);

        // (0, 0, 0.4) × (0.5, 0, 0) computed with a generic cross product
        let cross = Vec3::new(0.0, 0.0, 0.4).cross(&Vec3::new(0.5, 0.0, 0.0));
        let out = decompose_command(
            &PayloadCommand::new(0.0, 0.0, 0.4, 0.0),
            &ContactOffset(Vec3::new(0.5, 0.0, 0.0)),
        );
        assert_abs_diff_eq!(out.v_cf[0], cross.x, epsilon = 1e-12);
        assert_abs_diff_eq!(out.v_cf[1], cross.y, epsilon = 1e-12);
        assert_abs_diff_eq!(out.v_cf[1], 0.2, epsilon = 1e-12);
        assert_eq!(out.omega_cf, 0.4);

        let out = decompose_command(
            &PayloadCommand::new(0.0, 0.0, 0.0, 0.1),
            &ContactOffset(Vec3::new(0.0, 0.0, 0.2)),
        );
        assert_abs_diff_eq!(out.h_cf, 0.3, epsilon = 1e-12);
    }

    #[test]
    fn eval_command_sampling() {
        let ranges = CommandRanges {
            h: [0.1, 0.1],
            ..CommandRanges::zero()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(
            sample_eval_command(&mut rng, &ranges),
            PayloadCommand::new(0.0, 0.0, 0.0, 0.1)
        );

        let a = sample_eval_command(&mut ChaCha8Rng::seed_from_u64(9), &CommandRanges::default());
        let b = sample_eval_command(&mut ChaCha8Rng::seed_from_u64(9), &CommandRanges::default());
        assert_eq!(a, b);

        let ranges = CommandRanges::default();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let samples: Vec<_> = (0..10_000).map(|_| sample_eval_command(&mut rng, &ranges)).collect();
        let mean_vx = samples.iter().map(|c| c.v_pl[0]).sum::<f64>() / samples.len() as f64;
        assert!(mean_vx.abs() < 0.02, "mean vx {mean_vx}");
        for c in &samples {
            assert!((-0.4..=0.4).contains(&c.v_pl[0]));
            assert!((-0.4..=0.4).contains(&c.v_pl[1]));
            assert!((-0.4..=0.4).contains(&c.omega_pl));
            assert!((0.1..=0.3).contains(&c.h_pl));
        }
    }

    #[test]
    fn ranges_validate() {
        assert!(CommandRanges::default().validate().is_ok());
        let bad = CommandRanges {
            vx: [0.5, -0.5],
            ..CommandRanges::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn sync_signal_clamps() {
        assert_eq!(sync_signal(0.0).unwrap(), 0.0);
        assert_eq!(sync_signal(3.2).unwrap(), 3.2);
        assert_eq!(sync_signal(7.0).unwrap(), 5.0);
        assert!(sync_signal(-0.1).is_err());
        assert!(sync_signal(f64::NAN).is_err());
    }

    #[test]
    fn target_frame_examples() {
        let tf = TargetFrame::new(Pose::from_yaw(Vec3::new(0.3, -0.2, 0.0), 0.5));
        let same = target_frame_integrate(&tf, &PayloadCommand::default(), 0.02).unwrap();
        assert_eq!(same.pose.position, tf.pose.position);
        assert!(same.pose.orientation.angle_to(&tf.pose.orientation) < 1e-12);

        let tf0 = TargetFrame::new(Pose::identity());
        let moved =
            target_frame_integrate(&tf0, &PayloadCommand::new(0.4, 0.0, 0.0, 0.0), 1.0).unwrap();
        assert_abs_diff_eq!(moved.pose.position, Vec3::new(0.4, 0.0, 0.0), epsilon = 1e-12);

        // a full circle returns to the start
        let cmd = PayloadCommand::new(0.4, 0.0, 0.4, 0.0);
        let period = TAU / 0.4;
        let steps = (period / 0.02).floor() as usize;
        let mut tf = tf0;
        for _ in 0..steps {
            tf = target_frame_integrate(&tf, &cmd, 0.02).unwrap();
        }
        tf = target_frame_integrate(&tf, &cmd, period - steps as f64 * 0.02).unwrap();
        assert!(tf.pose.position.norm() < 1e-3, "{:?}", tf.pose.position);

        assert!(target_frame_integrate(&tf0, &cmd, 0.0).is_err());
    }

    #[test]
    fn target_height_moves_toward_command() {
        let tf = TargetFrame::new(Pose::from_translation(Vec3::new(0.0, 0.0, 0.1)));
        let up = target_frame_integrate(&tf, &PayloadCommand::new(0.0, 0.0, 0.0, 0.3), 0.5).unwrap();
        assert_abs_diff_eq!(up.pose.position.z, 0.15, epsilon = 1e-12);
        let there = target_frame_integrate(&tf, &PayloadCommand::new(0.0, 0.0, 0.0, 0.12), 1.0).unwrap();
        assert_abs_diff_eq!(there.pose.position.z, 0.12, epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn decomposition_is_linear(
            v1 in prop::array::uniform3(-1.0..1.0f64),
            v2 in prop::array::uniform3(-1.0..1.0f64),
            off in prop::array::uniform3(-1.0..1.0f64),
            k in -3.0..3.0f64,
        ) {
            let off = ContactOffset(Vec3::from(off));
            let a = PayloadCommand::new(v1[0], v1[1], v1[2], 0.0);
            let b = PayloadCommand::new(v2[0], v2[1], v2[2], 0.0);
            let sum = PayloadCommand::new(
                a.v_pl[0] + k * b.v_pl[0],
                a.v_pl[1] + k * b.v_pl[1],
                a.omega_pl + k * b.omega_pl,
                0.0,
            );
            let da = decompose_command(&a, &off);
            let db = decompose_command(&b, &off);
            let ds = decompose_command(&sum, &off);
            for i in 0..2 {
                prop_assert!((ds.v_cf[i] - (da.v_cf[i] + k * db.v_cf[i])).abs() < 1e-12);
            }
            prop_assert!((ds.omega_cf - (da.omega_cf + k * db.omega_cf)).abs() < 1e-12);
        }
    }
}
