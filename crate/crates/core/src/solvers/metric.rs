//! Metric projection onto `M_r` through its convex dual.
//!
//! For a trial point `V` the projection equals `P_M2(V + A'^T Theta*)`, where
//! `Theta*` minimizes
//!
//! ```text
//! G(Theta) = sum_{i in B} |Y_i| + sum_{i not in B} |Y_i|^2 + <gamma e1^T, Theta>,
//! Y = V' + A'^T Theta,  V' = V - e e1^T / 2,  gamma = A'e - 2b'.
//! ```
//!
//! `G` is minimized either by the generalized Weiszfeld fixed point iteration
//! or by its Newton acceleration.

use nalgebra::{Cholesky, Dyn, LU};

use crate::error::{Error, Result};
use crate::linalg::{Mat, SchurPath, Vector};
use crate::manifold::IntersectionManifold;

/// Lower cap on `|Y_i|` in the Weiszfeld weights.
pub const WEIGHT_SAFEGUARD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DualMethod {
    Gwa,
    GwaNewton,
}

/// `(V', gamma)` for the dual problem at `V`.
pub fn dual_data(m: &IntersectionManifold, v: &Mat) -> Result<(Mat, Vector)> {
    m.check_dims(v)?;
    let mut vp = v.clone();
    vp.column_mut(0).add_scalar_mut(-0.5);
    let a = m.affine().a();
    let row_sums = Vector::from_iterator(a.nrows(), a.row_iter().map(|row| row.sum()));
    let gamma = row_sums - m.affine().b() * 2.0;
    Ok((vp, gamma))
}

fn dual_point(m: &IntersectionManifold, vp: &Mat, theta: &Mat) -> Mat {
    vp + m.affine().a().transpose() * theta
}

/// `G(Theta)`.
pub fn gwa_objective(m: &IntersectionManifold, vp: &Mat, gamma: &Vector, theta: &Mat) -> f64 {
    let y = dual_point(m, vp, theta);
    let mut total = gamma.dot(&theta.column(0));
    for i in 0..y.nrows() {
        let n2 = y.row(i).norm_squared();
        total += if m.is_binary(i) { n2.sqrt() } else { n2 };
    }
    total
}

/// Gradient `gamma e1^T + A' Diag(v) Y` of `G`.
pub fn gwa_gradient(m: &IntersectionManifold, vp: &Mat, gamma: &Vector, theta: &Mat) -> Mat {
    let mut y = dual_point(m, vp, theta);
    for i in 0..y.nrows() {
        let w = if m.is_binary(i) {
            1.0 / y.row(i).norm().max(WEIGHT_SAFEGUARD)
        } else {
            2.0
        };
        y.row_mut(i).scale_mut(w);
    }
    let mut g = m.affine().a() * y;
    let mut c0 = g.column_mut(0);
    c0 += gamma;
    g
}

fn binary_row_norms(m: &IntersectionManifold, y: &Mat) -> Vector {
    Vector::from_iterator(m.dims().s, m.binary_rows().iter().map(|&i| y.row(i).norm()))
}

/// `A' Diag(v) A'^T = 2 A'A'^T + A_B Diag(v_B - 2) A_B^T`.
fn weighted_gram(m: &IntersectionManifold, vb: &Vector) -> Mat {
    let aff = m.affine();
    let mut scaled = aff.a_binary().clone();
    for (k, mut col) in scaled.column_iter_mut().enumerate() {
        col *= vb[k] - 2.0;
    }
    aff.gram() * 2.0 + scaled * aff.a_binary().transpose()
}

fn solve_sym(k: Mat, rhs: &Mat, err: fn() -> Error) -> Result<Mat> {
    let out = match Cholesky::new(k.clone()) {
        Some(ch) => ch.solve(rhs),
        None => LU::<f64, Dyn, Dyn>::new(k).solve(rhs).ok_or_else(err)?,
    };
    if out.iter().all(|x| x.is_finite()) {
        Ok(out)
    } else {
        Err(err())
    }
}

/// One generalized Weiszfeld update `Theta -> Theta+`.
pub fn gwa_iterate(m: &IntersectionManifold, vp: &Mat, gamma: &Vector, theta: &Mat, path: SchurPath) -> Result<Mat> {
    let ProblemShape { s, mm, r } = shape(m);
    let aff = m.affine();
    let y = dual_point(m, vp, theta);
    let vb = binary_row_norms(m, &y).map(|x| 1.0 / x.max(WEIGHT_SAFEGUARD));
    // rhs = gamma e1^T + A' Diag(v) V'
    let mut dvp = vp * 2.0;
    for (k, &i) in m.binary_rows().iter().enumerate() {
        let row = vp.row(i) * vb[k];
        dvp.set_row(i, &row);
    }
    let mut rhs = aff.a() * dvp;
    rhs.column_mut(0).axpy(1.0, gamma, 1.0);

    let sol = match path.resolve(s, mm, r) {
        SchurPath::Smw => {
            // (2G + A_B D A_B^T)^{-1} via Woodbury without inverting D = Diag(v_B - 2):
            // K^{-1} y = K0^{-1} y - K0^{-1} A_B D (I + A_B^T K0^{-1} A_B D)^{-1} A_B^T K0^{-1} y
            let x0 = aff.gram_solve(&rhs) * 0.5;
            let d = vb.map(|x| x - 2.0);
            let mut inner = aff.schur_s() * 0.5;
            for (k, mut col) in inner.column_iter_mut().enumerate() {
                col *= d[k];
            }
            for k in 0..s {
                inner[(k, k)] += 1.0;
            }
            let proj = aff.a_binary().transpose() * &x0;
            let z = LU::<f64, Dyn, Dyn>::new(inner)
                .solve(&proj)
                .ok_or(Error::SingularWeightedGram)?;
            let mut dz = z;
            for (k, mut row) in dz.row_iter_mut().enumerate() {
                row *= d[k];
            }
            let out = x0 - aff.gram_solve(&(aff.a_binary() * dz)) * 0.5;
            if !out.iter().all(|x| x.is_finite()) {
                return Err(Error::SingularWeightedGram);
            }
            out
        }
        _ => solve_sym(weighted_gram(m, &vb), &rhs, || Error::SingularWeightedGram)?,
    };
    Ok(-sol)
}

struct ProblemShape {
    s: usize,
    mm: usize,
    r: usize,
}

fn shape(m: &IntersectionManifold) -> ProblemShape {
    let d = m.dims();
    ProblemShape {
        s: d.s,
        mm: d.m_rows,
        r: d.r,
    }
}

/// Newton direction `Delta` solving `(A' P_k A'^T)[Delta] = grad G(Theta)`.
pub fn gwa_newton_direction(
    m: &IntersectionManifold,
    vp: &Mat,
    gamma: &Vector,
    theta: &Mat,
    path: SchurPath,
) -> Result<Mat> {
    let ProblemShape { s, mm, r } = shape(m);
    let aff = m.affine();
    let a = aff.a();
    let y = dual_point(m, vp, theta);
    let rho = binary_row_norms(m, &y);
    if let Some(k) = rho.iter().position(|&x| x < WEIGHT_SAFEGUARD) {
        let row = m.binary_rows()[k];
        return Err(Error::ZeroNormal { row });
    }
    let grad = gwa_gradient(m, vp, gamma, theta);
    // unit rows of Y on B
    let mut yhat = Mat::zeros(s, r);
    for (k, &i) in m.binary_rows().iter().enumerate() {
        yhat.set_row(k, &(y.row(i) / rho[k]));
    }

    let dir = match path.resolve(s, mm, r) {
        SchurPath::Smw => {
            // A' P A'^T = I_r (x) K1 - sum_i beta_i f_i f_i^T,
            // K1 = A' Diag(v) A'^T, beta_i = 1/rho_i, f_i = vec(a_i yhat_i).
            let vb = rho.map(|x| 1.0 / x);
            let k1 = weighted_gram(m, &vb);
            let ch = Cholesky::new(k1.clone());
            let k1_solve = |rhs: &Mat| -> Result<Mat> {
                match &ch {
                    Some(c) => Ok(c.solve(rhs)),
                    None => LU::<f64, Dyn, Dyn>::new(k1.clone())
                        .solve(rhs)
                        .ok_or(Error::SingularNewton),
                }
            };
            let x0 = k1_solve(&grad)?;
            let kab = k1_solve(aff.a_binary())?;
            let sk = aff.a_binary().transpose() * &kab;
            let yy = &yhat * yhat.transpose();
            let mut inner = -sk.component_mul(&yy);
            for k in 0..s {
                inner[(k, k)] += rho[k];
            }
            // f_i^T x0 = a_i^T x0 yhat_i^T
            let ab_x0 = aff.a_binary().transpose() * &x0;
            let proj = Vector::from_iterator(s, (0..s).map(|k| ab_x0.row(k).dot(&yhat.row(k))));
            let z = LU::<f64, Dyn, Dyn>::new(inner)
                .solve(&proj)
                .ok_or(Error::SingularNewton)?;
            let mut zy = yhat.clone();
            for (k, mut row) in zy.row_iter_mut().enumerate() {
                row *= z[k];
            }
            x0 + kab * zy
        }
        _ => {
            // vectorized (m r) x (m r) system, vec column-major
            let dim = mm * r;
            let g = aff.gram();
            let mut h = Mat::zeros(dim, dim);
            for j in 0..r {
                for q in 0..mm {
                    for p in 0..mm {
                        h[(j * mm + p, j * mm + q)] = 2.0 * g[(p, q)];
                    }
                }
            }
            for (k, &i) in m.binary_rows().iter().enumerate() {
                let alpha = 1.0 / rho[k] - 2.0;
                let beta = 1.0 / rho[k];
                let ai = a.column(i);
                for l in 0..r {
                    for j in 0..r {
                        let blk = if l == j { alpha } else { 0.0 } - beta * yhat[(k, l)] * yhat[(k, j)];
                        if blk == 0.0 {
                            continue;
                        }
                        for q in 0..mm {
                            let aq = ai[q] * blk;
                            if aq == 0.0 {
                                continue;
                            }
                            for p in 0..mm {
                                h[(j * mm + p, l * mm + q)] += ai[p] * aq;
                            }
                        }
                    }
                }
            }
            let rhs = Vector::from_column_slice(grad.as_slice());
            let sol = LU::<f64, Dyn, Dyn>::new(h).solve(&rhs).ok_or(Error::SingularNewton)?;
            Mat::from_column_slice(mm, r, sol.as_slice())
        }
    };
    if !dir.iter().all(|x| x.is_finite()) {
        return Err(Error::SingularNewton);
    }
    Ok(dir)
}

/// One GWA-Newton update `Theta - Delta`.
pub fn gwa_newton_iterate(
    m: &IntersectionManifold,
    vp: &Mat,
    gamma: &Vector,
    theta: &Mat,
    path: SchurPath,
) -> Result<Mat> {
    Ok(theta - gwa_newton_direction(m, vp, gamma, theta, path)?)
}

/// Primal point `P_M2(V + A'^T Theta)` recovered from a dual iterate.
pub fn primal_point(m: &IntersectionManifold, v: &Mat, theta: &Mat) -> Result<Mat> {
    m.project_binary(&(v + m.affine().a().transpose() * theta))
}

/// State of the dual iteration, shared by [`metric_project`] and the
/// retraction driver.
#[derive(Debug, Clone)]
pub struct DualIteration<'a> {
    m: &'a IntersectionManifold,
    pub vp: Mat,
    pub gamma: Vector,
    pub theta: Mat,
    pub objective: f64,
    method: DualMethod,
    path: SchurPath,
}

impl<'a> DualIteration<'a> {
    pub fn new(m: &'a IntersectionManifold, v: &Mat, method: DualMethod, path: SchurPath) -> Result<Self> {
        let (vp, gamma) = dual_data(m, v)?;
        let theta = Mat::zeros(m.dims().m_rows, m.dims().r);
        let objective = gwa_objective(m, &vp, &gamma, &theta);
        Ok(DualIteration {
            m,
            vp,
            gamma,
            theta,
            objective,
            method,
            path,
        })
    }

    /// Advances one step; returns `(|Theta+ - Theta|_F, objective decrease)`.
    pub fn step(&mut self) -> Result<(f64, f64)> {
        let next = match self.method {
            DualMethod::Gwa => gwa_iterate(self.m, &self.vp, &self.gamma, &self.theta, self.path)?,
            DualMethod::GwaNewton => gwa_newton_iterate(self.m, &self.vp, &self.gamma, &self.theta, self.path)?,
        };
        let change = (&next - &self.theta).norm();
        let obj = gwa_objective(self.m, &self.vp, &self.gamma, &next);
        let decrease = self.objective - obj;
        self.theta = next;
        self.objective = obj;
        Ok((change, decrease))
    }
}

/// Result of [`metric_project`].
#[derive(Debug, Clone)]
pub struct MetricProjection {
    pub point: Mat,
    pub theta: Mat,
    pub iterations: usize,
}

/// Metric projection of `V` onto `M_r`.
///
/// Stops when `|Theta+ - Theta|_F <= tol (|Theta|_F + 1)` and the last step
/// did not increase `G` beyond roundoff.
pub fn metric_project(
    m: &IntersectionManifold,
    v: &Mat,
    method: DualMethod,
    tol: f64,
    maxiter: usize,
    path: SchurPath,
) -> Result<MetricProjection> {
    let mut it = DualIteration::new(m, v, method, path)?;
    for k in 1..=maxiter {
        let prev_norm = it.theta.norm();
        let (change, decrease) = it.step().map_err(|e| e.at_iter(k))?;
        let slack = 1e-12 * (it.objective.abs() + 1.0);
        if change <= tol * (prev_norm + 1.0) && decrease >= -slack {
            let point = primal_point(m, v, &it.theta).map_err(|e| e.at_iter(k))?;
            return Ok(MetricProjection {
                point,
                theta: it.theta,
                iterations: k,
            });
        }
    }
    let residual = primal_point(m, v, &it.theta)
        .and_then(|p| m.combined_residual(&p))
        .unwrap_or(f64::NAN);
    Err(Error::MaxIterExceeded {
        iters: maxiter,
        residual,
        trace: None,
    })
}
