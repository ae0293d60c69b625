//! Rigid transforms, twists and landmark constellations.
//!
//! Quaternions are scalar-first `(w, x, y, z)` and right-handed. Every
//! constructor and composition renormalizes, so a [`Pose`] always carries a
//! unit rotation.
//!
//! A constellation is an ordered landmark set. Matching it against a target
//! constellation of the same length measures position and orientation error
//! with one scalar: the mean squared distance between index-matched points.

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3, SVD};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{PlmError, Result};

pub type Vec3 = Vector3<f64>;

/// Length of the pad and contact-frame constellations along their normal.
pub const NORMAL_CONSTELLATION_SPAN: f64 = 0.5;
/// Number of landmarks on the pad and contact-frame constellations.
pub const NORMAL_CONSTELLATION_POINTS: usize = 5;
/// Edge of the cube whose corners make up the base constellation.
pub const BASE_CUBE_EDGE: f64 = 0.1;

/// Rigid transform: rotate, then translate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    pub position: Vec3,
    pub orientation: UnitQuaternion<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            position: Vec3::zeros(),
            orientation: UnitQuaternion::identity(),
        }
    }

    pub fn new(position: Vec3, orientation: UnitQuaternion<f64>) -> Self {
        Self {
            position,
            orientation: renormalize(orientation),
        }
    }

    pub fn from_translation(position: Vec3) -> Self {
        Self::new(position, UnitQuaternion::identity())
    }

    /// Builds a pose from a raw `(w, x, y, z)` quaternion, normalizing it.
    pub fn from_wxyz(position: Vec3, w: f64, x: f64, y: f64, z: f64) -> Self {
        Self::new(
            position,
            UnitQuaternion::from_quaternion(Quaternion::new(w, x, y, z)),
        )
    }

    /// Pose at `position` rotated by `yaw` about world +z.
    pub fn from_yaw(position: Vec3, yaw: f64) -> Self {
        Self::new(
            position,
            UnitQuaternion::from_axis_angle(&Vec3::z_axis(), yaw),
        )
    }

    pub fn inverse(&self) -> Self {
        let inv = self.orientation.inverse();
        Self::new(-(inv * self.position), inv)
    }

    pub fn compose(&self, other: &Pose) -> Pose {
        compose(self, other)
    }

    pub fn transform_point(&self, x: &Vec3) -> Vec3 {
        transform_point(self, x)
    }

    pub fn transform_vector(&self, v: &Vec3) -> Vec3 {
        self.orientation * v
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        self.orientation.to_rotation_matrix().into_inner()
    }

    /// Heading of the body x-axis projected on the ground plane.
    pub fn yaw(&self) -> f64 {
        let x = self.orientation * Vec3::x();
        x.y.atan2(x.x)
    }

    /// Roll and pitch (intrinsic z-y-x Euler angles).
    pub fn roll_pitch(&self) -> (f64, f64) {
        let (roll, pitch, _) = self.orientation.euler_angles();
        (roll, pitch)
    }

    /// Angle between the body z-axis and world +z.
    pub fn tilt(&self) -> f64 {
        let z = self.orientation * Vec3::z();
        z.z.clamp(-1.0, 1.0).acos()
    }

    /// `[x, y, z, w, qx, qy, qz]`, the layout used in logs, configs and observations.
    pub fn to_array(&self) -> [f64; 7] {
        let q = self.orientation.quaternion();
        [
            self.position.x,
            self.position.y,
            self.position.z,
            q.w,
            q.i,
            q.j,
            q.k,
        ]
    }

    pub fn from_array(a: [f64; 7]) -> Self {
        Self::from_wxyz(Vec3::new(a[0], a[1], a[2]), a[3], a[4], a[5], a[6])
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    /// Translation distance plus rotation angle between two poses.
    pub fn distance_to(&self, other: &Pose) -> (f64, f64) {
        (
            (self.position - other.position).norm(),
            self.orientation.angle_to(&other.orientation),
        )
    }
}

impl Serialize for Pose {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_array().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Pose {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let a = <[f64; 7]>::deserialize(d)?;
        let norm = (a[3] * a[3] + a[4] * a[4] + a[5] * a[5] + a[6] * a[6]).sqrt();
        if !(norm > 1e-12) {
            return Err(serde::de::Error::custom("pose quaternion has zero norm"));
        }
        Ok(Pose::from_array(a))
    }
}

fn renormalize(q: UnitQuaternion<f64>) -> UnitQuaternion<f64> {
    UnitQuaternion::from_quaternion(q.into_inner())
}

/// `a ∘ b`: express `b` (given in frame `a`) in the parent frame of `a`.
pub fn compose(a: &Pose, b: &Pose) -> Pose {
    Pose::new(
        a.position + a.orientation * b.position,
        a.orientation * b.orientation,
    )
}

pub fn transform_point(p: &Pose, x: &Vec3) -> Vec3 {
    p.orientation * x + p.position
}

/// Linear and angular velocity.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Twist {
    pub linear: Vec3,
    pub angular: Vec3,
}

impl Twist {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn new(linear: Vec3, angular: Vec3) -> Self {
        Self { linear, angular }
    }

    pub fn is_finite(&self) -> bool {
        self.linear.iter().chain(self.angular.iter()).all(|v| v.is_finite())
    }

    /// Velocity of a point rigidly attached to the body, `r` measured from
    /// the point whose velocity is `linear`.
    pub fn point_velocity(&self, r: &Vec3) -> Vec3 {
        self.linear + self.angular.cross(r)
    }
}

/// Which body a constellation rides on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnchorFrame {
    Pad,
    Base,
    ContactFrame,
    RigidTarget,
}

/// Ordered landmark set in world coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct Constellation {
    points: Vec<Vec3>,
    pub anchor: AnchorFrame,
}

impl Constellation {
    pub fn new(points: Vec<Vec3>, anchor: AnchorFrame) -> Result<Self> {
        if points.is_empty() {
            return Err(PlmError::InvalidArgument(
                "a constellation needs at least one landmark".into(),
            ));
        }
        Ok(Self { points, anchor })
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Applies `g` to every landmark.
    pub fn transformed(&self, g: &Pose) -> Self {
        Self {
            points: self.points.iter().map(|p| g.transform_point(p)).collect(),
            anchor: self.anchor,
        }
    }

    pub fn with_anchor(mut self, anchor: AnchorFrame) -> Self {
        self.anchor = anchor;
        self
    }
}

/// Mean squared distance between index-matched landmarks (m²).
pub fn constellation_distance(p: &Constellation, p_star: &Constellation) -> Result<f64> {
    if p.len() != p_star.len() {
        return Err(PlmError::ConstellationMismatch {
            left: p.len(),
            right: p_star.len(),
        });
    }
    let sum: f64 = p
        .points
        .iter()
        .zip(&p_star.points)
        .map(|(a, b)| (a - b).norm_squared())
        .sum();
    Ok(sum / p.len() as f64)
}

fn normal_constellation(pose: &Pose, anchor: AnchorFrame) -> Constellation {
    let step = NORMAL_CONSTELLATION_SPAN / (NORMAL_CONSTELLATION_POINTS - 1) as f64;
    let points = (0..NORMAL_CONSTELLATION_POINTS)
        .map(|i| pose.transform_point(&Vec3::new(i as f64 * step, 0.0, 0.0)))
        .collect();
    Constellation { points, anchor }
}

/// Five colinear landmarks from the pad face along its outward normal (+x).
pub fn make_pad_constellation(pad_pose: &Pose) -> Constellation {
    normal_constellation(pad_pose, AnchorFrame::Pad)
}

/// Five colinear landmarks from the contact point along the inward surface
/// normal (+x of the contact frame). A pad flush on the surface with its
/// outward normal pointing into the payload has the same pose and matches
/// point for point.
pub fn make_cf_constellation(cf_pose: &Pose) -> Constellation {
    normal_constellation(cf_pose, AnchorFrame::ContactFrame)
}

fn base_offsets() -> [Vec3; 3] {
    [
        Vec3::new(BASE_CUBE_EDGE, 0.0, 0.0),
        Vec3::new(0.0, BASE_CUBE_EDGE, 0.0),
        Vec3::new(0.0, 0.0, BASE_CUBE_EDGE),
    ]
}

/// Three cube corners adjacent to the base origin, one along each body axis.
pub fn make_base_constellation(base_pose: &Pose) -> Constellation {
    Constellation {
        points: base_offsets()
            .iter()
            .map(|o| base_pose.transform_point(o))
            .collect(),
        anchor: AnchorFrame::Base,
    }
}

/// Least-squares rigid transform `T` minimizing `Σ‖T·p_i − p*_i‖²` (SVD
/// alignment of the centered point sets).
pub fn best_fit_transform(p: &Constellation, p_star: &Constellation) -> Result<Pose> {
    if p.len() != p_star.len() {
        return Err(PlmError::ConstellationMismatch {
            left: p.len(),
            right: p_star.len(),
        });
    }
    if p.len() < 3 {
        return Err(PlmError::RankDeficient(format!(
            "need at least 3 landmarks, got {}",
            p.len()
        )));
    }
    let n = p.len() as f64;
    let c_src = p.points.iter().sum::<Vec3>() / n;
    let c_dst = p_star.points.iter().sum::<Vec3>() / n;

    let mut cov = Matrix3::zeros();
    let mut spread = Matrix3::zeros();
    for (a, b) in p.points.iter().zip(&p_star.points) {
        let da = a - c_src;
        cov += (b - c_dst) * da.transpose();
        spread += da * da.transpose();
    }

    let sv = spread.symmetric_eigenvalues();
    let mut sv: Vec<f64> = sv.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    if sv[0] <= 0.0 || sv[1] <= 1e-12 * sv[0].max(1e-300) {
        return Err(PlmError::RankDeficient(
            "landmarks are collinear or coincident".into(),
        ));
    }

    let svd = SVD::new(cov, true, true);
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested V^T");
    let d = (u * v_t).determinant().signum();
    let r = u * Matrix3::from_diagonal(&Vec3::new(1.0, 1.0, d)) * v_t;
    let rotation = UnitQuaternion::from_matrix(&r);
    let translation = c_dst - rotation * c_src;
    Ok(Pose::new(translation, rotation))
}

/// Rotation by `yaw` about +z applied to a planar vector.
pub fn rotate_planar(v: [f64; 2], yaw: f64) -> [f64; 2] {
    let (s, c) = yaw.sin_cos();
    [c * v[0] - s * v[1], s * v[0] + c * v[1]]
}

/// Wraps an angle to `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let mut r = a % two_pi;
    if r <= -std::f64::consts::PI {
        r += two_pi;
    } else if r > std::f64::consts::PI {
        r -= two_pi;
    }
    r
}

#[cfg(test)]
mod tests {
    use std::f64::consts::{FRAC_PI_2, PI};

    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    use super::*;

    fn pose_strategy() -> impl Strategy<Value = Pose> {
        (
            prop::array::uniform3(-5.0..5.0f64),
            prop::array::uniform4(-1.0..1.0f64),
        )
            .prop_filter("nonzero quaternion", |(_, q)| {
                q.iter().map(|v| v * v).sum::<f64>() > 1e-3
            })
            .prop_map(|(t, q)| Pose::from_wxyz(Vec3::from(t), q[0], q[1], q[2], q[3]))
    }

    fn assert_pose_eq(a: &Pose, b: &Pose, tol: f64) {
        let (dt, dr) = a.distance_to(b);
        assert!(dt < tol && dr < tol, "{a:?} != {b:?} ({dt}, {dr})");
    }

    #[test]
    fn compose_identity_and_inverse() {
        let p = Pose::from_wxyz(Vec3::new(0.3, -1.0, 2.0), 0.9, 0.1, -0.3, 0.2);
        assert_pose_eq(&compose(&Pose::identity(), &p), &p, 1e-12);
        assert_pose_eq(&compose(&p, &p.inverse()), &Pose::identity(), 1e-9);
        let a = Pose::from_translation(Vec3::new(1.0, 0.0, 0.0));
        let b = Pose::from_translation(Vec3::new(0.0, 2.0, 0.0));
        assert_pose_eq(
            &compose(&a, &b),
            &Pose::from_translation(Vec3::new(1.0, 2.0, 0.0)),
            1e-12,
        );
    }

    #[test]
    fn transform_point_cases() {
        let x = Vec3::new(1.0, 2.0, 3.0);
        assert_eq!(Pose::identity().transform_point(&x), x);
        let yaw90 = Pose::from_yaw(Vec3::zeros(), FRAC_PI_2);
        assert_abs_diff_eq!(
            yaw90.transform_point(&Vec3::x()),
            Vec3::y(),
            epsilon = 1e-12
        );
        // explicit rotation matrix for a half turn about z
        let p = Pose::from_yaw(Vec3::new(1.0, 0.0, 0.0), PI);
        let r = Matrix3::new(-1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 1.0);
        let expected = r * Vec3::x() + Vec3::new(1.0, 0.0, 0.0);
        assert_abs_diff_eq!(p.transform_point(&Vec3::x()), expected, epsilon = 1e-12);
        assert_abs_diff_eq!(expected, Vec3::zeros(), epsilon = 1e-12);
    }

    #[test]
    fn pose_array_layout() {
        let p = Pose::from_wxyz(Vec3::new(1.0, 2.0, 3.0), 1.0, 0.0, 0.0, 0.0);
        assert_eq!(p.to_array(), [1.0, 2.0, 3.0, 1.0, 0.0, 0.0, 0.0]);
        let json = serde_json::to_string(&p).unwrap();
        assert_eq!(json, "[1.0,2.0,3.0,1.0,0.0,0.0,0.0]");
        let back: Pose = serde_json::from_str(&json).unwrap();
        assert_eq!(back, p);
        assert!(serde_json::from_str::<Pose>("[0,0,0,0,0,0,0]").is_err());
    }

    #[test]
    fn distance_examples() {
        let pts = vec![Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 1.0, 1.0)];
        let a = Constellation::new(pts.clone(), AnchorFrame::Pad).unwrap();
        assert_eq!(constellation_distance(&a, &a).unwrap(), 0.0);

        let shifted = a.transformed(&Pose::from_translation(Vec3::new(0.1, 0.0, 0.0)));
        assert_abs_diff_eq!(
            constellation_distance(&a, &shifted).unwrap(),
            0.01,
            epsilon = 1e-12
        );

        // direct summation: (0.3² + 0²) / 2
        let b = Constellation::new(
            vec![Vec3::new(0.0, 0.0, 0.3), Vec3::new(1.0, 1.0, 1.0)],
            AnchorFrame::ContactFrame,
        )
        .unwrap();
        let oracle = (0.3f64 * 0.3 + 0.0) / 2.0;
        assert_abs_diff_eq!(constellation_distance(&a, &b).unwrap(), oracle, epsilon = 1e-12);
        assert_abs_diff_eq!(oracle, 0.045, epsilon = 1e-12);

        let c = Constellation::new(vec![Vec3::zeros()], AnchorFrame::Pad).unwrap();
        assert!(matches!(
            constellation_distance(&a, &c),
            Err(PlmError::ConstellationMismatch { left: 2, right: 1 })
        ));
        assert!(Constellation::new(vec![], AnchorFrame::Pad).is_err());
    }

    #[test]
    fn pad_constellation_layout() {
        let c = make_pad_constellation(&Pose::identity());
        let expected = [0.0, 0.125, 0.25, 0.375, 0.5];
        for (p, x) in c.points().iter().zip(expected) {
            assert_abs_diff_eq!(*p, Vec3::new(x, 0.0, 0.0), epsilon = 1e-12);
        }
        let c = make_pad_constellation(&Pose::from_yaw(Vec3::zeros(), FRAC_PI_2));
        for (p, y) in c.points().iter().zip(expected) {
            assert_abs_diff_eq!(*p, Vec3::new(0.0, y, 0.0), epsilon = 1e-12);
        }
    }

    #[test]
    fn cf_constellation_alignment() {
        let cf = Pose::from_yaw(Vec3::new(0.5, 0.2, 0.45), 0.7);
        let flush = make_pad_constellation(&cf);
        let target = make_cf_constellation(&cf);
        assert_eq!(constellation_distance(&flush, &target).unwrap(), 0.0);

        let retracted = cf.compose(&Pose::from_translation(Vec3::new(-0.05, 0.0, 0.0)));
        let d = constellation_distance(&make_pad_constellation(&retracted), &target).unwrap();
        // all five landmarks offset by 0.05 m
        let oracle: f64 = (0..5).map(|_| 0.05f64 * 0.05).sum::<f64>() / 5.0;
        assert_abs_diff_eq!(d, oracle, epsilon = 1e-12);
        assert_abs_diff_eq!(d, 0.0025, epsilon = 1e-12);

        let tilt = UnitQuaternion::from_axis_angle(&Vec3::y_axis(), 10f64.to_radians());
        let tilted = cf.compose(&Pose::new(Vec3::zeros(), tilt));
        assert!(constellation_distance(&make_pad_constellation(&tilted), &target).unwrap() > 0.0);
    }

    #[test]
    fn base_constellation_layout() {
        let c = make_base_constellation(&Pose::identity());
        assert_eq!(c.points(), &base_offsets());
        let moved = make_base_constellation(&Pose::from_translation(Vec3::x()));
        for (a, b) in c.points().iter().zip(moved.points()) {
            assert_abs_diff_eq!(b - a, Vec3::x(), epsilon = 1e-12);
        }
    }

    #[test]
    fn best_fit_examples() {
        let p = make_base_constellation(&Pose::from_yaw(Vec3::new(0.2, 0.1, 0.3), 0.4));
        assert_pose_eq(&best_fit_transform(&p, &p).unwrap(), &Pose::identity(), 1e-9);
        let t = Pose::from_translation(Vec3::new(0.3, -0.2, 1.0));
        assert_pose_eq(&best_fit_transform(&p, &p.transformed(&t)).unwrap(), &t, 1e-9);

        let collinear = make_pad_constellation(&Pose::identity());
        assert!(matches!(
            best_fit_transform(&collinear, &collinear),
            Err(PlmError::RankDeficient(_))
        ));
    }

    #[test]
    fn wrap_angle_range() {
        assert_abs_diff_eq!(wrap_angle(3.0 * PI), PI, epsilon = 1e-12);
        assert_abs_diff_eq!(wrap_angle(-0.5), -0.5);
        assert_abs_diff_eq!(wrap_angle(2.0 * PI + 0.1), 0.1, epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn quaternion_stays_unit(a in pose_strategy(), b in pose_strategy()) {
            let c = compose(&a, &b);
            prop_assert!((c.orientation.quaternion().norm() - 1.0).abs() < 1e-9);
            let id = compose(&a, &a.inverse());
            prop_assert!(id.position.norm() < 1e-9);
            prop_assert!(id.orientation.angle() < 1e-9);
        }

        #[test]
        fn distance_invariant_under_common_transform(
            a in pose_strategy(), b in pose_strategy(), g in pose_strategy()
        ) {
            let pa = make_pad_constellation(&a);
            let pb = make_cf_constellation(&b);
            let d0 = constellation_distance(&pa, &pb).unwrap();
            let d1 = constellation_distance(&pa.transformed(&g), &pb.transformed(&g)).unwrap();
            prop_assert!((d0 - d1).abs() < 1e-9 * d0.max(1.0));
        }

        #[test]
        fn translation_gives_squared_norm(a in pose_strategy(), t in prop::array::uniform3(-2.0..2.0f64)) {
            let t = Vec3::from(t);
            let p = make_base_constellation(&a);
            let q = p.transformed(&Pose::from_translation(t));
            let d = constellation_distance(&p, &q).unwrap();
            prop_assert!((d - t.norm_squared()).abs() < 1e-9);
        }

        #[test]
        fn constellations_are_equivariant(a in pose_strategy(), g in pose_strategy()) {
            let ga = compose(&g, &a);
            for (lhs, rhs) in [
                (make_pad_constellation(&ga), make_pad_constellation(&a).transformed(&g)),
                (make_cf_constellation(&ga), make_cf_constellation(&a).transformed(&g)),
                (make_base_constellation(&ga), make_base_constellation(&a).transformed(&g)),
            ] {
                prop_assert!(constellation_distance(&lhs, &rhs).unwrap() < 1e-18);
            }
        }
    }
}
