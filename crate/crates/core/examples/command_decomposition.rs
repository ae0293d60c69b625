//! Splits a payload command into per-contact velocities and checks them
//! against the motion of the integrated target frame.

use plm::commands::{decompose_command, target_frame_integrate, ContactOffset, PayloadCommand, TargetFrame};
use plm::geometry::{rotate_planar, Pose, Vec3};

fn main() -> plm::Result<()> {
    let command = PayloadCommand::new(0.3, -0.1, 0.4, 0.2);
    let tf = TargetFrame::new(Pose::from_yaw(Vec3::new(0.0, 0.0, 0.2), 0.7));
    let dt = 1e-4;
    let next = target_frame_integrate(&tf, &command, dt)?;
    for offset in [Vec3::new(0.25, 0.0, 0.45), Vec3::new(-0.25, 0.0, 0.45), Vec3::new(0.0, 0.2, 0.45)] {
        let v = decompose_command(&command, &ContactOffset(offset)).v_cf;
        let world = rotate_planar(v, tf.pose.yaw());
        let fd = (next.pose.transform_point(&offset) - tf.pose.transform_point(&offset)) / dt;
        println!(
            "offset ({:+.2}, {:+.2}): contact velocity ({:+.3}, {:+.3}), finite difference ({:+.3}, {:+.3})",
            offset.x, offset.y, world[0], world[1], fd.x, fd.y
        );
    }
    Ok(())
}
