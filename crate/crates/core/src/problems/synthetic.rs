//! Small random manifolds with a known feasible point, for tests and
//! verification runs.

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::linalg::{Mat, Vector};
use crate::manifold::{IntersectionManifold, TangentVector};

fn uniform_mat(rng: &mut Xoshiro256PlusPlus, rows: usize, cols: usize) -> Mat {
    Mat::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
}

/// Random `M_r` with `N = n`, binary rows `0..s`, `m` affine rows, together
/// with a point on it. Binary rows of the point lie on their spheres at
/// random positions; `A'` is drawn at random and then made orthogonal to
/// columns `2..r` of the point so the point is feasible.
pub fn random_manifold(seed: u64, n: usize, r: usize, s: usize, m: usize) -> (IntersectionManifold, Mat) {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let mut x = uniform_mat(&mut rng, n, r);
    for i in 0..s {
        let mut u = uniform_mat(&mut rng, 1, r);
        let nrm = u.norm().max(1e-3);
        u /= nrm;
        u[0] += 1.0;
        x.set_row(i, &(u.row(0) * 0.5));
    }
    let mut a = uniform_mat(&mut rng, m, n);
    if r > 1 {
        let cols = x.columns(1, r - 1).into_owned();
        let qr = cols.qr();
        let q = qr.q();
        a -= (&a * &q) * q.transpose();
    }
    let b: Vector = &a * x.column(0);
    let manifold =
        IntersectionManifold::new(a, b, (0..s).collect(), r).expect("random constraint matrix has full row rank");
    (manifold, x)
}

/// `x + scale * Z / |Z|`, then projected onto the affine set.
pub fn random_near_point(m: &IntersectionManifold, x: &Mat, scale: f64, seed: u64) -> Mat {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let z = uniform_mat(&mut rng, x.nrows(), x.ncols());
    let y = x + z.normalize() * scale;
    m.project_affine(&y).expect("dimensions match")
}

/// Random tangent vector at `x` of norm `scale`.
pub fn random_tangent(m: &IntersectionManifold, x: &Mat, scale: f64, seed: u64) -> TangentVector {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let z = uniform_mat(&mut rng, x.nrows(), x.ncols());
    let mut t = m.project_tangent(x, &z).expect("feasible base point");
    let nrm = t.xi.norm();
    t.xi *= scale / nrm;
    t
}
