//! Constellation distance, best-fit recovery and the contact reward for a pad
//! approaching its contact frame.

use plm::geometry::{best_fit_transform, AnchorFrame, Constellation, constellation_distance, make_cf_constellation, make_pad_constellation, Pose, Vec3};
use plm::rewards::r_contact;

fn main() -> plm::Result<()> {
    let cf = Pose::from_yaw(Vec3::new(0.3, 0.0, 0.45), 0.4);
    for gap in [0.2, 0.1, 0.05, 0.0] {
        let pad = cf.compose(&Pose::from_translation(Vec3::new(-gap, 0.0, 0.0)));
        let d = constellation_distance(&make_pad_constellation(&pad), &make_cf_constellation(&cf))?;
        println!("gap {gap:.2} m: distance {d:.4}, r_contact {:.4}", r_contact(&pad, &cf) + 0.0);
    }

    let points = vec![
        Vec3::new(0.0, 0.0, 0.0),
        Vec3::new(0.1, 0.0, 0.0),
        Vec3::new(0.0, 0.1, 0.0),
        Vec3::new(0.0, 0.0, 0.1),
    ];
    let body = Constellation::new(points, AnchorFrame::Pad)?;
    let truth = Pose::from_yaw(Vec3::new(0.1, -0.2, 0.4), -0.3);
    let fit = best_fit_transform(&body, &body.transformed(&truth))?;
    let (dp, da) = fit.distance_to(&truth);
    println!("best fit recovers the transform: residual {dp:.1e} m, {da:.1e} rad");
    Ok(())
}
