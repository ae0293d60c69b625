//! Force-closure verdicts for two and four frictional contacts on a box.

use plm::geometry::Vec3;
use plm::world::{force_closure_check_with, ClosureOptions};

fn main() {
    let opts = ClosureOptions::default();
    let pinch = vec![
        (Vec3::new(0.25, 0.0, 0.45), Vec3::new(-1.0, 0.0, 0.0)),
        (Vec3::new(-0.25, 0.0, 0.45), Vec3::new(1.0, 0.0, 0.0)),
    ];
    let same_side = vec![
        (Vec3::new(0.25, 0.1, 0.45), Vec3::new(-1.0, 0.0, 0.0)),
        (Vec3::new(0.25, -0.1, 0.45), Vec3::new(-1.0, 0.0, 0.0)),
    ];
    let mut ring = pinch.clone();
    ring.push((Vec3::new(0.0, 0.2, 0.45), Vec3::new(0.0, -1.0, 0.0)));
    ring.push((Vec3::new(0.0, -0.2, 0.45), Vec3::new(0.0, 1.0, 0.0)));
    for mu in [0.0, 0.3, 0.8] {
        println!(
            "mu {mu:.1}: opposing pair {}, same side {}, four sides {}",
            force_closure_check_with(&pinch, mu, &opts),
            force_closure_check_with(&same_side, mu, &opts),
            force_closure_check_with(&ring, mu, &opts)
        );
    }
}
