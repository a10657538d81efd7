//! Dense helpers shared by the projection and Newton-type solvers.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// How to solve the `s x s` Schur system `(Diag(d) - (C C^T) .* S) mu = g`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SchurPath {
    /// Form the `s x s` matrix and factorize it.
    Direct,
    /// Sherman-Morrison-Woodbury through the rank-`m r` factor `W`.
    Smw,
    /// Pick by size: SMW when `s > 4 m r`.
    #[default]
    Auto,
}

impl SchurPath {
    pub fn resolve(self, s: usize, m: usize, r: usize) -> SchurPath {
        match self {
            SchurPath::Auto => {
                if s > 4 * m * r {
                    SchurPath::Smw
                } else {
                    SchurPath::Direct
                }
            }
            p => p,
        }
    }
}

pub fn frob_dot(a: &Mat, b: &Mat) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

pub fn max_abs(a: &Mat) -> f64 {
    a.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// `W = [Diag(C(:,1)) U, ..., Diag(C(:,r)) U]`, so that `W W^T = (C C^T) .* (U U^T)`.
pub fn hadamard_factor(c: &Mat, u: &Mat) -> Mat {
    let (s, r) = c.shape();
    let m = u.ncols();
    let mut w = Mat::zeros(s, m * r);
    for j in 0..r {
        for k in 0..m {
            for i in 0..s {
                w[(i, j * m + k)] = c[(i, j)] * u[(i, k)];
            }
        }
    }
    w
}

/// Solves `(Diag(d) - (C C^T) .* S) mu = g` where `S = U U^T`.
///
/// `s_full` is the precomputed `S`; it is only read on the direct path.
pub fn schur_solve(d: &Vector, c: &Mat, u: &Mat, s_full: &Mat, g: &Vector, path: SchurPath) -> Result<Vector> {
    let s = c.nrows();
    if s == 0 {
        return Ok(Vector::zeros(0));
    }
    match path.resolve(s, u.ncols(), c.ncols()) {
        SchurPath::Direct | SchurPath::Auto => {
            let cc = c * c.transpose();
            let mut k = -cc.component_mul(s_full);
            for i in 0..s {
                k[(i, i)] += d[i];
            }
            k.lu().solve(g).ok_or(Error::SingularSchur).and_then(finite_vec)
        }
        SchurPath::Smw => {
            // (D - W W^T)^{-1} g = D^{-1} g + D^{-1} W (I - W^T D^{-1} W)^{-1} W^T D^{-1} g
            if d.iter().any(|x| x.abs() < 1e-300) {
                return Err(Error::SingularSchur);
            }
            let w = hadamard_factor(c, u);
            let dinv = d.map(|x| 1.0 / x);
            let dinv_g = g.component_mul(&dinv);
            let mut dinv_w = w.clone();
            for (i, mut row) in dinv_w.row_iter_mut().enumerate() {
                row *= dinv[i];
            }
            let mut inner = -(w.transpose() * &dinv_w);
            for i in 0..inner.nrows() {
                inner[(i, i)] += 1.0;
            }
            let rhs = w.transpose() * &dinv_g;
            let z = inner.lu().solve(&rhs).ok_or(Error::SingularSchur)?;
            finite_vec(dinv_g + dinv_w * z)
        }
    }
}

fn finite_vec(v: Vector) -> Result<Vector> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(v)
    } else {
        Err(Error::SingularSchur)
    }
}

/// Ordinary least-squares slope and intercept of `y` against `x`.
pub fn ols(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// `n` logarithmically spaced points between `lo` and `hi` inclusive.
pub fn logspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.log10(), hi.log10());
    (0..n)
        .map(|k| 10f64.powf(a + (b - a) * k as f64 / (n - 1) as f64))
        .collect()
}
