//! Force-closure test for frictional pad contacts.
//!
//! Each pad is a soft-finger contact: a pyramidal approximation of the
//! Coulomb cone plus a pair of torsional generators about the normal, since
//! a flat pad resists twisting. The contact set is in force closure iff the
//! origin lies strictly inside the convex hull of all generator wrenches,
//! which holds iff the generators span R⁶ and admit a strictly positive
//! combination summing to zero. The second condition is one small LP.

use minilp::{ComparisonOp, LinearExpr, OptimizationDirection, Problem};
use nalgebra::{DMatrix, Vector6};

use crate::geometry::Vec3;

/// Discretization of the friction model used by [`force_closure_check`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClosureOptions {
    pub cone_edges: usize,
    /// Effective radius of the pad for torsional friction (m).
    pub torsion_radius: f64,
}

impl Default for ClosureOptions {
    fn default() -> Self {
        Self {
            cone_edges: 8,
            torsion_radius: 0.02,
        }
    }
}

/// Orthonormal tangent basis for a unit normal.
pub fn tangent_basis(n: &Vec3) -> (Vec3, Vec3) {
    let helper = if n.z.abs() < 0.9 { Vec3::z() } else { Vec3::x() };
    let t1 = helper.cross(n).normalize();
    let t2 = n.cross(&t1);
    (t1, t2)
}

/// Generator wrenches `[f; τ / L]` for every contact, with torques taken
/// about the contact centroid and scaled by the contact spread `L`.
pub fn contact_wrenches(frames: &[(Vec3, Vec3)], mu: f64, opts: &ClosureOptions) -> Vec<Vector6<f64>> {
    if frames.is_empty() {
        return Vec::new();
    }
    let centroid = frames.iter().map(|(p, _)| *p).sum::<Vec3>() / frames.len() as f64;
    let scale = frames
        .iter()
        .map(|(p, _)| (p - centroid).norm())
        .fold(opts.torsion_radius, f64::max);

    let mut out = Vec::with_capacity(frames.len() * (opts.cone_edges + 2));
    for (p, n) in frames {
        let n = n.normalize();
        let r = p - centroid;
        let (t1, t2) = tangent_basis(&n);
        for k in 0..opts.cone_edges {
            let a = std::f64::consts::TAU * k as f64 / opts.cone_edges as f64;
            let f = n + mu * (a.cos() * t1 + a.sin() * t2);
            let tau = r.cross(&f) / scale;
            out.push(Vector6::new(f.x, f.y, f.z, tau.x, tau.y, tau.z));
        }
        let gamma = mu * opts.torsion_radius / scale;
        for sign in [1.0, -1.0] {
            let tau = r.cross(&n) / scale + sign * gamma * n;
            out.push(Vector6::new(n.x, n.y, n.z, tau.x, tau.y, tau.z));
        }
    }
    out
}

/// True iff the contacts `(point, inward normal)` can resist any wrench.
pub fn force_closure_check(frames: &[(Vec3, Vec3)], mu: f64) -> bool {
    force_closure_check_with(frames, mu, &ClosureOptions::default())
}

pub fn force_closure_check_with(frames: &[(Vec3, Vec3)], mu: f64, opts: &ClosureOptions) -> bool {
    if frames.len() < 2 || !(mu >= 0.0) {
        return false;
    }
    let w = contact_wrenches(frames, mu, opts);
    origin_strictly_interior(&w)
}

/// `0 ∈ int conv(w)`: full rank plus a strictly positive null combination.
pub fn origin_strictly_interior(w: &[Vector6<f64>]) -> bool {
    if w.len() < 7 {
        return false;
    }
    let m = DMatrix::from_fn(6, w.len(), |r, c| w[c][r]);
    let sv = m.clone().svd(false, false).singular_values;
    let smax = sv.max();
    if sv.iter().any(|s| *s <= 1e-9 * smax) {
        return false;
    }

    // maximize t  s.t.  Σ λ_i w_i = 0,  Σ λ_i = 1,  λ_i ≥ t ≥ 0
    let mut lp = Problem::new(OptimizationDirection::Maximize);
    let t = lp.add_var(1.0, (0.0, 1.0));
    let lambdas: Vec<_> = (0..w.len()).map(|_| lp.add_var(0.0, (0.0, 1.0))).collect();
    for row in 0..6 {
        let mut e = LinearExpr::empty();
        for (l, wi) in lambdas.iter().zip(w) {
            e.add(*l, wi[row]);
        }
        lp.add_constraint(e, ComparisonOp::Eq, 0.0);
    }
    let mut sum = LinearExpr::empty();
    for l in &lambdas {
        sum.add(*l, 1.0);
    }
    lp.add_constraint(sum, ComparisonOp::Eq, 1.0);
    for l in &lambdas {
        lp.add_constraint([(*l, 1.0), (t, -1.0)], ComparisonOp::Ge, 0.0);
    }
    match lp.solve() {
        Ok(sol) => sol.objective() > 1e-9 / w.len() as f64,
        Err(_) => false,
    }
}
