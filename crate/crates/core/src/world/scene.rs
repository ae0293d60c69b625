use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{BaseDynamics, PayloadBody, PayloadShape, PhysicsParams, RobotBody, WorldState};
use crate::error::{PlmError, Result};
use crate::geometry::{Pose, Twist, Vec3};

/// Height of the standard contact frames above the payload root (m).
pub const DEFAULT_CONTACT_HEIGHT: f64 = 0.45;
/// Horizontal distance from a contact frame back to its robot's base (m).
pub const PAD_STANDOFF: f64 = 0.55;
/// Pad start position is retracted this far from the contact frame (m).
pub const PAD_RETRACT: f64 = 0.2;
const PLACEMENT_ATTEMPTS: usize = 100;

/// Everything needed to build the initial world of an episode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub shape: PayloadShape,
    pub mass: f64,
    pub payload_pose: Pose,
    /// Contact frames in the payload frame, one per robot.
    pub contact_frames: Vec<Pose>,
    /// Standard deviation of the base position offset (m).
    pub position_noise: f64,
    /// Standard deviation of the base yaw offset (rad).
    pub yaw_noise: f64,
    /// Per-robot base response; empty means the physics defaults.
    pub dynamics: Vec<BaseDynamics>,
    pub params: PhysicsParams,
}

/// Nominal placement of one robot relative to its contact frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RobotInit {
    pub base_pose: Pose,
    /// Pad servo setpoint in the base frame.
    pub pad_home: Pose,
}

impl RobotInit {
    /// Base behind the contact frame, facing it, with the pad retracted.
    pub fn facing(cf_world: &Pose, params: &PhysicsParams) -> Self {
        let inward = cf_world.transform_vector(&Vec3::x());
        let dir = Vec3::new(inward.x, inward.y, 0.0).normalize();
        let yaw = dir.y.atan2(dir.x);
        let p = cf_world.position - PAD_STANDOFF * dir;
        let base_pose = Pose::from_yaw(Vec3::new(p.x, p.y, params.base_height), yaw);
        let cf_local = base_pose.inverse().compose(cf_world);
        let home = cf_local.position - PAD_RETRACT * Vec3::x();
        Self {
            base_pose,
            pad_home: Pose::new(params.reach.clamp(&home), cf_local.orientation),
        }
    }
}

/// Team arrangements around the payload. Indexing starts at the `(+x, +y)`
/// corner and runs clockwise seen from above. Boxes get robots on the two
/// long faces first (split as evenly as possible, the first long face in
/// clockwise order taking the extra robot), and one robot on each short
/// face once `n ≥ 5`; `n = 4` uses one robot per face. Cylinders get evenly
/// spaced robots starting at 45°.
pub fn standard_arrangement(shape: &PayloadShape, n: usize, contact_height: f64) -> Result<Vec<Pose>> {
    if n < 2 {
        return Err(PlmError::InvalidArgument(format!("team size must be >= 2, got {n}")));
    }
    shape.validate()?;
    if !(contact_height > 0.0 && contact_height < shape.height()) {
        return Err(PlmError::InvalidArgument(format!(
            "contact height {contact_height} outside the payload"
        )));
    }
    match *shape {
        PayloadShape::Cylinder { radius, .. } => Ok((0..n)
            .map(|j| {
                let a = std::f64::consts::FRAC_PI_4 - std::f64::consts::TAU * j as f64 / n as f64;
                let out = Vec3::new(a.cos(), a.sin(), 0.0);
                cf_on_surface(radius * out + contact_height * Vec3::z(), out)
            })
            .collect()),
        PayloadShape::Box { l, w, .. } => {
            // Faces in clockwise order from the (+x, +y) corner: outward
            // normal, clockwise tangent, face width.
            let faces = [
                (Vec3::x(), -Vec3::y(), w, l / 2.0),
                (-Vec3::y(), -Vec3::x(), l, w / 2.0),
                (-Vec3::x(), Vec3::y(), w, l / 2.0),
                (Vec3::y(), Vec3::x(), l, w / 2.0),
            ];
            let x_long = w >= l;
            let counts: [usize; 4] = if n == 4 {
                [1; 4]
            } else {
                let short_each = usize::from(n >= 5);
                let long_total = n - 2 * short_each;
                let first = long_total.div_ceil(2);
                let second = long_total / 2;
                if x_long {
                    [first, short_each, second, short_each]
                } else {
                    [short_each, first, short_each, second]
                }
            };
            let mut out = Vec::with_capacity(n);
            for ((normal, tangent, width, half_depth), k) in faces.iter().zip(counts) {
                for j in 0..k {
                    let s = width * (j as f64 + 0.5) / k as f64 - width / 2.0;
                    let p = *half_depth * normal + s * tangent + contact_height * Vec3::z();
                    out.push(cf_on_surface(p, *normal));
                }
            }
            Ok(out)
        }
    }
}

/// Contact frame at `p` on a vertical surface with outward normal `out`:
/// `x` points into the payload, `z` up.
pub fn cf_on_surface(p: Vec3, out: Vec3) -> Pose {
    let inward = -out;
    Pose::from_yaw(p, inward.y.atan2(inward.x))
}

/// Builds the initial world: payload at rest, each robot facing its contact
/// frame with a random base offset. Placements whose bases overlap each
/// other or the payload are redrawn.
pub fn spawn_scene<R: Rng + ?Sized>(spec: &SceneSpec, rng: &mut R) -> Result<WorldState> {
    let n = spec.contact_frames.len();
    if n < 2 {
        return Err(PlmError::InvalidArgument(format!("team size must be >= 2, got {n}")));
    }
    spec.params.validate()?;
    if !spec.dynamics.is_empty() && spec.dynamics.len() != n {
        return Err(PlmError::DimensionMismatch {
            expected: n,
            got: spec.dynamics.len(),
        });
    }
    if !(spec.position_noise >= 0.0 && spec.yaw_noise >= 0.0) {
        return Err(PlmError::Config("pose noise must be nonnegative".into()));
    }
    let payload = PayloadBody::new(spec.shape, spec.mass, spec.payload_pose)?;
    let nominal: Vec<RobotInit> = spec
        .contact_frames
        .iter()
        .map(|cf| RobotInit::facing(&payload.pose.compose(cf), &spec.params))
        .collect();
    if !placement_clear(&payload, &nominal.iter().map(|r| r.base_pose).collect::<Vec<_>>(), &spec.params) {
        return Err(PlmError::InfeasibleScene("nominal robot placements overlap".into()));
    }

    let pos = Normal::new(0.0, spec.position_noise).map_err(|e| PlmError::Config(e.to_string()))?;
    let yaw = Normal::new(0.0, spec.yaw_noise).map_err(|e| PlmError::Config(e.to_string()))?;
    for _ in 0..PLACEMENT_ATTEMPTS {
        let bases: Vec<Pose> = nominal
            .iter()
            .map(|r| {
                let d = Vec3::new(pos.sample(rng), pos.sample(rng), 0.0);
                let dyaw = yaw.sample(rng);
                Pose::from_yaw(r.base_pose.position + d, r.base_pose.yaw() + dyaw)
            })
            .collect();
        if !placement_clear(&payload, &bases, &spec.params) {
            continue;
        }
        let robots = bases
            .iter()
            .zip(&nominal)
            .enumerate()
            .map(|(i, (base, init))| {
                let dynamics = spec
                    .dynamics
                    .get(i)
                    .copied()
                    .unwrap_or_else(|| spec.params.base_dynamics());
                RobotBody {
                    base_pose: *base,
                    base_twist: Twist::zero(),
                    pad_pose: base.compose(&init.pad_home),
                    pad_twist: Twist::zero(),
                    commanded_base: Default::default(),
                    pad_target: init.pad_home,
                    servo_force: Vec3::zeros(),
                    dynamics,
                }
            })
            .collect();
        return Ok(WorldState::new(payload, robots, spec.params.clone()));
    }
    Err(PlmError::InfeasibleScene(format!(
        "no overlap-free placement in {PLACEMENT_ATTEMPTS} attempts"
    )))
}

fn placement_clear(payload: &PayloadBody, bases: &[Pose], params: &PhysicsParams) -> bool {
    let r = params.base_radius;
    for (i, a) in bases.iter().enumerate() {
        if super::detect::base_payload_penetration(payload, &a.position, r) > 0.0 {
            return false;
        }
        for b in &bases[i + 1..] {
            let d = a.position - b.position;
            if d.x.hypot(d.y) < 2.0 * r {
                return false;
            }
        }
    }
    true
}
