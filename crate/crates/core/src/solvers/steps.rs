//! Single-step maps of the alternating-projection family.
//!
//! Every map here takes a point near `M_r` and returns the next iterate.
//! Newton-type maps rely on the Schur system
//! `(Diag(|c_i|^2) - (C C^T) .* S) mu = rhs` with `S = A_B^T (A A^T)^{-1} A_B`;
//! on `M2` the diagonal is the identity.

use crate::error::{Error, Result};
use crate::linalg::{frob_dot, schur_solve, Mat, SchurPath, Vector};
use crate::manifold::IntersectionManifold;

/// Threshold below which the relaxed-tangent direction counts as vanishing.
pub const VANISHING_DIRECTION_TOL: f64 = 1e-14;

/// `P_M1(P_M2(R))`
pub fn apm_step(m: &IntersectionManifold, r: &Mat) -> Result<Mat> {
    m.project_affine(&m.project_binary(r)?)
}

/// `P_M1(phi_2(R))` with `phi_2` the linearized projection onto `M2`.
pub fn iap_step(m: &IntersectionManifold, r: &Mat) -> Result<Mat> {
    m.project_affine(&m.linearized_project(r)?)
}

fn squared_row_norms(c: &Mat) -> Vector {
    Vector::from_iterator(c.nrows(), c.row_iter().map(|row| row.norm_squared()))
}

fn solve_schur(m: &IntersectionManifold, c: &Mat, rhs: &Vector, path: SchurPath) -> Result<Vector> {
    let aff = m.affine();
    schur_solve(
        &squared_row_norms(c),
        c,
        aff.low_rank_factor(),
        aff.schur_s(),
        rhs,
        path,
    )
}

/// One NewtonSLRA step from `R` on `M1`: project onto `M2`, then take the
/// least-norm correction onto `M1 ∩ (R~ + T_{R~} M2)`.
pub fn newton_slra_step(m: &IntersectionManifold, r: &Mat, path: SchurPath) -> Result<Mat> {
    let rt = m.project_binary(r)?;
    let c = m.row_normals(&rt)?;
    let g = Vector::from_iterator(
        c.nrows(),
        m.binary_rows()
            .iter()
            .enumerate()
            .map(|(k, &i)| (r.row(i) - rt.row(i)).dot(&c.row(k))),
    );
    let mu = solve_schur(m, &c, &g, path)?;
    // Delta = -A'^T Lambda - T*(mu) with Lambda = -(AA^T)^{-1} A' T*(mu),
    // i.e. Delta = -P_ker(T*(mu)).
    let t = m.scatter_rows(&mu, &c);
    Ok(r - m.project_affine_kernel(&t)?)
}

/// Relaxed NewtonSLRA: the tangent slice is replaced by the hyperplane
/// through `R~` orthogonal to `D = R - R~`, so only one scalar multiplier is
/// solved on top of the affine projector.
pub fn relaxed_newton_slra_step(m: &IntersectionManifold, r: &Mat) -> Result<Mat> {
    let rt = m.project_binary(r)?;
    let d = r - &rt;
    let dn2 = d.norm_squared();
    if dn2.sqrt() < VANISHING_DIRECTION_TOL {
        return Err(Error::VanishingDirection);
    }
    let a = m.affine().a();
    let e = m.affine_residual(r)?;
    let delta0 = -(a.transpose() * m.affine().gram_solve(&e));
    let p0d = m.project_affine_kernel(&d)?;
    let den = p0d.norm_squared();
    if den <= 1e-30 * dn2 {
        return Err(Error::SingularSchur);
    }
    let lambda = (dn2 + frob_dot(&d, &delta0)) / den;
    Ok(r + delta0 - p0d * lambda)
}

/// Intermediate quantities of one APHL step.
#[derive(Debug, Clone)]
pub struct AphlParts {
    /// `Q_k[A'^T Lambda]`, the constraint-dissolving correction.
    pub correction: Mat,
    /// `R - Q_k[A'^T Lambda]`, before re-projection.
    pub corrected: Mat,
    pub row_normals: Mat,
    pub mu: Vector,
}

/// Dissolves the affine residual `E = A'R - b'e1^T` with a correction that
/// stays in the row-wise tangent space of `M2` at `R`.
pub fn aphl_parts(m: &IntersectionManifold, r: &Mat, path: SchurPath) -> Result<AphlParts> {
    let aff = m.affine();
    let a = aff.a();
    let e = m.affine_residual(r)?;
    let c = m.row_normals(r)?;
    let z = a.transpose() * aff.gram_solve(&e);
    let h = Vector::from_iterator(
        c.nrows(),
        m.binary_rows()
            .iter()
            .enumerate()
            .map(|(k, &i)| z.row(i).dot(&c.row(k))),
    );
    let mu = solve_schur(m, &c, &h, path)?;
    let t = m.scatter_rows(&mu, &c);
    let lambda = aff.gram_solve(&(e + a * &t));
    let correction = a.transpose() * lambda - t;
    let corrected = r - &correction;
    Ok(AphlParts {
        correction,
        corrected,
        row_normals: c,
        mu,
    })
}

/// One APHL step: dissolving correction followed by re-projection onto `M2`.
pub fn aphl_step(m: &IntersectionManifold, r: &Mat, path: SchurPath) -> Result<Mat> {
    let parts = aphl_parts(m, r, path)?;
    m.project_binary(&parts.corrected)
}
