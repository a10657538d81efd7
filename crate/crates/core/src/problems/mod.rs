//! Concrete instances of the intersection manifold and their lifted
//! quadratic objectives.

mod qap;
mod qkp;
pub mod synthetic;

use nalgebra::SymmetricEigen;

use crate::error::{Error, Result};
use crate::linalg::{Mat, Vector};
use crate::manifold::IntersectionManifold;

pub use qap::{lift_qap, parse_qaplib, QapInstance};
pub use qkp::{gen_qkp, lift_qkp, QkpInstance};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    Qap,
    Qkp,
    Synthetic,
}

#[derive(Debug, Clone)]
pub struct ProblemMeta {
    pub kind: ProblemKind,
    pub name: String,
    pub seed: Option<u64>,
    /// Number of binary variables.
    pub n: usize,
    /// Permutation size (QAP only).
    pub p: Option<usize>,
    pub r: usize,
    /// The source problem maximizes; `Qlift` holds the negated objective.
    pub negated: bool,
    /// Binary-variable constraint data before lifting (QKP: capacity).
    pub capacity: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ProblemInstance {
    pub manifold: IntersectionManifold,
    pub q_lift: Mat,
    pub c_lift: Vector,
    pub meta: ProblemMeta,
}

impl ProblemInstance {
    /// Same instance with column count `r`.
    pub fn with_rank(&self, r: usize) -> Result<Self> {
        Ok(ProblemInstance {
            manifold: self.manifold.with_rank(r)?,
            q_lift: self.q_lift.clone(),
            c_lift: self.c_lift.clone(),
            meta: ProblemMeta { r, ..self.meta.clone() },
        })
    }

    /// Objective value reported in the source problem's sense.
    pub fn reported_objective(&self, value: f64) -> f64 {
        if self.meta.negated {
            -value
        } else {
            value
        }
    }
}

/// Initial rank `min(200, ceil(n/5))`.
pub fn initial_rank(n: usize) -> usize {
    n.div_ceil(5).clamp(1, 200)
}

/// Rejects constraint matrices whose Gram matrix is numerically singular,
/// `lambda_min(A A^T) <= 1e-10 ||A||_F^2`.
pub fn check_full_row_rank(a: &Mat) -> Result<()> {
    let g = a * a.transpose();
    let lam = SymmetricEigen::new(g).eigenvalues.min();
    let bound = 1e-10 * a.norm_squared();
    if lam > bound {
        Ok(())
    } else {
        Err(Error::SingularGram.context(format!(
            "lifted constraint matrix is rank deficient: lambda_min(AA^T) = {lam:.3e} <= {bound:.3e}"
        )))
    }
}

/// Stacks `[A I 0; A 0 -I]` with right-hand side `(b; b)`.
pub(crate) fn lift_constraints(a: &Mat, b: &Vector) -> (Mat, Vector) {
    let (m, n) = a.shape();
    let mut big = Mat::zeros(2 * m, n + 2 * m);
    big.view_mut((0, 0), (m, n)).copy_from(a);
    big.view_mut((m, 0), (m, n)).copy_from(a);
    for i in 0..m {
        big[(i, n + i)] = 1.0;
        big[(m + i, n + m + i)] = -1.0;
    }
    let mut rhs = Vector::zeros(2 * m);
    rhs.rows_mut(0, m).copy_from(b);
    rhs.rows_mut(m, m).copy_from(b);
    (big, rhs)
}

/// Embeds an `n x n` matrix in the top-left block of an `N x N` zero matrix.
pub(crate) fn embed_objective(q: &Mat, big_n: usize) -> Mat {
    let mut out = Mat::zeros(big_n, big_n);
    out.view_mut((0, 0), q.shape()).copy_from(q);
    out
}

/// Constructive point on `M_r`: first column is the lifted vector of a
/// feasible binary solution (with its slacks), other columns are zero.
///
/// QKP uses `x = 0` (slacks `(tau, -tau)`), QAP the identity permutation.
pub fn feasible_init(inst: &ProblemInstance, r: usize) -> Result<Mat> {
    let m = inst.manifold.with_rank(r)?;
    let big_n = m.dims().n;
    let n = inst.meta.n;
    let mut x = Vector::zeros(big_n);
    match inst.meta.kind {
        ProblemKind::Qkp => {
            let tau = inst.meta.capacity.expect("QKP instance carries its capacity");
            x[n] = tau;
            x[n + 1] = -tau;
        }
        ProblemKind::Qap => {
            let p = inst.meta.p.expect("QAP instance carries p");
            for i in 0..p {
                x[i + i * p] = 1.0;
            }
        }
        ProblemKind::Synthetic => {
            return Err(Error::InvalidConfig(
                "synthetic instances carry their own feasible point".into(),
            ))
        }
    }
    let mut out = Mat::zeros(big_n, r);
    out.set_column(0, &x);
    Ok(out)
}

/// Seed used for [`feasible_start`] unless given otherwise.
pub const START_SEED: u64 = 0;

/// Feasible point with binary rows at generic positions.
///
/// The constructive point of [`feasible_init`] sits at a saddle of every
/// lifted objective (for QKP all binary rows are zero, so `2Q'R` vanishes),
/// and there all row normals are `+-e1`, which makes the two factor normal
/// spaces nearly aligned. Here each binary row is drawn uniformly on its
/// sphere and the slack rows of the lift `[A I 0; A 0 -I]` are solved for, so
/// the point satisfies both constraint blocks up to roundoff.
pub fn feasible_start(inst: &ProblemInstance, r: usize, seed: u64) -> Result<Mat> {
    use rand::{Rng, SeedableRng};
    use rand_xoshiro::Xoshiro256PlusPlus;

    let m = inst.manifold.with_rank(r)?;
    if inst.meta.kind == ProblemKind::Synthetic {
        return Err(Error::InvalidConfig(
            "synthetic instances carry their own feasible point".into(),
        ));
    }
    let n = inst.meta.n;
    let big_n = m.dims().n;
    let rows = m.dims().m_rows / 2;
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let mut x = Mat::zeros(big_n, r);
    for i in 0..n {
        let mut u: Vec<f64> = (0..r).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let nrm = u.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-3);
        u.iter_mut().for_each(|v| *v /= nrm);
        u[0] += 1.0;
        for (j, v) in u.into_iter().enumerate() {
            x[(i, j)] = 0.5 * v;
        }
    }
    // A R_B for the original constraint block
    let a = m.affine().a().view((0, 0), (rows, n)).into_owned();
    let ar = &a * x.rows(0, n);
    let b = m.affine().b().rows(0, rows).into_owned();
    for k in 0..rows {
        for j in 0..r {
            let target = if j == 0 { b[k] } else { 0.0 };
            x[(n + k, j)] = target - ar[(k, j)];
            x[(n + rows + k, j)] = ar[(k, j)] - target;
        }
    }
    Ok(x)
}
