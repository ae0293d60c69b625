use serde::{Deserialize, Serialize};

use crate::commands::{target_frame_integrate, PayloadCommand, TargetFrame, SYNC_HORIZON};
use crate::error::{PlmError, Result};
use crate::geometry::{Pose, Vec3};
use crate::world::{Weld, WorldState};

/// Lift ramp of the oracle during the pinch-lift window (s).
pub const ORACLE_LIFT_WINDOW: [f64; 2] = [1.0, 4.0];

/// Privileged controller that welds every pad to its contact frame and
/// every base to its rigid offset from the commanded payload frame.
/// Reads the true world state, so it is for validation only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RigidOracle {
    cf_offsets: Vec<Pose>,
    initial_payload: Pose,
    initial_bases: Vec<Pose>,
    target: Option<TargetFrame>,
    base_offsets: Vec<Pose>,
}

fn smoothstep(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x * x * (3.0 - 2.0 * x)
}

impl RigidOracle {
    pub fn new(world: &WorldState, cf_offsets: &[Pose]) -> Result<Self> {
        if cf_offsets.len() != world.n_robots() {
            return Err(PlmError::DimensionMismatch {
                expected: world.n_robots(),
                got: cf_offsets.len(),
            });
        }
        Ok(Self {
            cf_offsets: cf_offsets.to_vec(),
            initial_payload: world.payload.pose,
            initial_bases: world.robots.iter().map(|r| r.base_pose).collect(),
            target: None,
            base_offsets: Vec::new(),
        })
    }

    /// The commanded payload frame, once transport has started.
    pub fn target_frame(&self) -> Option<&TargetFrame> {
        self.target.as_ref()
    }

    /// Base poses relative to the commanded frame, fixed when transport starts.
    pub fn base_offsets(&self) -> &[Pose] {
        &self.base_offsets
    }

    /// Welds for the tick that ends at `t + dt`.
    pub fn welds(&mut self, world: &WorldState, command: &PayloadCommand) -> Result<Vec<Weld>> {
        let dt = world.params.control_dt;
        let t_next = world.t + dt;
        let (reference, bases) = if t_next < SYNC_HORIZON - 1e-9 {
            let [a, b] = ORACLE_LIFT_WINDOW;
            let s = smoothstep((t_next - a) / (b - a));
            let p0 = self.initial_payload;
            let lift = p0.position + Vec3::new(0.0, 0.0, (command.h_pl - p0.position.z) * s);
            (Pose::new(lift, p0.orientation), self.initial_bases.clone())
        } else {
            let tf = match self.target {
                Some(tf) => target_frame_integrate(&tf, command, dt)?,
                None => {
                    let p = world.payload.pose;
                    let tf = TargetFrame::new(Pose::from_yaw(p.position, p.yaw()));
                    self.base_offsets = world
                        .robots
                        .iter()
                        .map(|r| tf.pose.inverse().compose(&r.base_pose))
                        .collect();
                    target_frame_integrate(&tf, command, dt)?
                }
            };
            self.target = Some(tf);
            let bases = self.base_offsets.iter().map(|o| tf.pose.compose(o)).collect();
            (tf.pose, bases)
        };
        Ok(bases
            .into_iter()
            .zip(&self.cf_offsets)
            .map(|(base_pose, cf)| Weld {
                base_pose,
                pad_pose: reference.compose(cf),
                cf_offset: *cf,
            })
            .collect())
    }
}
