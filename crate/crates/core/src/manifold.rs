//! The intersection manifold
//!
//! ```text
//! M_r = { R in R^{N x r} : A' R = b' e1^T,  ||R_i||^2 = R_{i,1} for i in B }
//!     = M1 ∩ M2
//! ```
//!
//! `M1` is the affine slice (every column constrained by `A'`, only the first
//! column carries `b'`), `M2` the product of row spheres of radius 1/2 centred
//! at `e1/2`. All pointwise geometry lives here: factor projections,
//! residuals, tangent projection, row normals and the linearized projection.

use nalgebra::{Cholesky, Dyn, SymmetricEigen};

use crate::error::{Error, Result};
use crate::linalg::{frob_dot, schur_solve, Mat, SchurPath, Vector};

/// Rows below this norm are treated as vanishing constraint normals.
pub const ZERO_NORMAL_TOL: f64 = 1e-14;

/// Default feasibility tolerance, relative to `||R||_F + 1`.
pub const FEASIBILITY_TOL: f64 = 1e-6;

/// Tangent projection switches from the dense Schur solve to SMW above this `s`.
pub const TANGENT_DIRECT_MAX_S: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProblemDims {
    /// Ambient row count `N`.
    pub n: usize,
    /// Column count `r`.
    pub r: usize,
    /// Affine rows of `A'`.
    pub m_rows: usize,
    /// Number of binary rows `|B|`.
    pub s: usize,
}

impl ProblemDims {
    pub fn validate(&self) -> Result<()> {
        let ProblemDims { n, r, m_rows, s } = *self;
        if n < 1 || r < 1 {
            return Err(Error::InvalidDims(format!("need N >= 1 and r >= 1, got N={n}, r={r}")));
        }
        if s < 1 || s > n {
            return Err(Error::InvalidDims(format!("need 1 <= s <= N, got s={s}, N={n}")));
        }
        if m_rows < 1 || m_rows >= n {
            return Err(Error::InvalidDims(format!("need 1 <= m < N, got m={m_rows}, N={n}")));
        }
        Ok(())
    }
}

/// `A'`, `b'` and the factorizations reused by every projection.
#[derive(Debug, Clone)]
pub struct AffineSystem {
    a: Mat,
    b: Vector,
    gram: Cholesky<f64, Dyn>,
    /// Columns of `A'` indexed by `B` (`m x s`).
    a_b: Mat,
    /// `U` with `A_B^T (A A^T)^{-1} A_B = U U^T` (`s x m`).
    low_rank: Mat,
    /// `S = U U^T`.
    schur_s: Mat,
}

impl AffineSystem {
    fn new(a: Mat, b: Vector, binary_rows: &[usize]) -> Result<Self> {
        if b.len() != a.nrows() {
            return Err(Error::DimensionMismatch {
                expected: (a.nrows(), 1),
                got: (b.len(), 1),
            });
        }
        if a.iter().chain(b.iter()).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite);
        }
        let g = &a * a.transpose();
        let scale = a.norm_squared().max(f64::MIN_POSITIVE);
        let lam_min = SymmetricEigen::new(g.clone())
            .eigenvalues
            .iter()
            .fold(f64::INFINITY, |m, &x| m.min(x));
        if !(lam_min > 1e-12 * scale) {
            return Err(Error::SingularGram);
        }
        let gram = Cholesky::new(g).ok_or(Error::SingularGram)?;
        let a_b = a.select_columns(binary_rows.iter());
        let linv_ab = gram.l().solve_lower_triangular(&a_b).ok_or(Error::SingularGram)?;
        let low_rank = linv_ab.transpose();
        let schur_s = &low_rank * low_rank.transpose();
        Ok(AffineSystem {
            a,
            b,
            gram,
            a_b,
            low_rank,
            schur_s,
        })
    }

    pub fn a(&self) -> &Mat {
        &self.a
    }

    pub fn b(&self) -> &Vector {
        &self.b
    }

    pub fn a_binary(&self) -> &Mat {
        &self.a_b
    }

    pub fn low_rank_factor(&self) -> &Mat {
        &self.low_rank
    }

    pub fn schur_s(&self) -> &Mat {
        &self.schur_s
    }

    /// Solves `(A A^T) X = Y`.
    pub fn gram_solve(&self, y: &Mat) -> Mat {
        self.gram.solve(y)
    }

    pub fn gram(&self) -> Mat {
        &self.a * self.a.transpose()
    }
}

#[derive(Debug, Clone)]
pub struct IntersectionManifold {
    dims: ProblemDims,
    affine: AffineSystem,
    /// Zero-based, strictly increasing.
    binary_rows: Vec<usize>,
    is_binary: Vec<bool>,
}

#[derive(Debug, Clone)]
pub struct ConstraintResidual {
    pub affine_block: Mat,
    pub binary_block: Vector,
    pub combined_norm: f64,
}

impl ConstraintResidual {
    pub fn affine_norm(&self) -> f64 {
        self.affine_block.norm()
    }

    pub fn binary_norm(&self) -> f64 {
        self.binary_block.norm()
    }
}

/// A tangent vector together with the point it is tangent at.
#[derive(Debug, Clone)]
pub struct TangentVector {
    pub xi: Mat,
    pub base: Mat,
}

impl IntersectionManifold {
    /// `binary_rows` are zero-based row indices.
    pub fn new(a: Mat, b: Vector, binary_rows: Vec<usize>, r: usize) -> Result<Self> {
        let dims = ProblemDims {
            n: a.ncols(),
            r,
            m_rows: a.nrows(),
            s: binary_rows.len(),
        };
        dims.validate()?;
        if binary_rows.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidDims("binary rows must be strictly increasing".into()));
        }
        if binary_rows.last().is_some_and(|&i| i >= dims.n) {
            return Err(Error::InvalidDims("binary row index out of bounds".into()));
        }
        let affine = AffineSystem::new(a, b, &binary_rows)?;
        let mut is_binary = vec![false; dims.n];
        for &i in &binary_rows {
            is_binary[i] = true;
        }
        Ok(IntersectionManifold {
            dims,
            affine,
            binary_rows,
            is_binary,
        })
    }

    /// Same constraints with a different column count.
    pub fn with_rank(&self, r: usize) -> Result<Self> {
        let dims = ProblemDims { r, ..self.dims };
        dims.validate()?;
        Ok(IntersectionManifold { dims, ..self.clone() })
    }

    pub fn dims(&self) -> ProblemDims {
        self.dims
    }

    pub fn affine(&self) -> &AffineSystem {
        &self.affine
    }

    pub fn binary_rows(&self) -> &[usize] {
        &self.binary_rows
    }

    pub fn is_binary(&self, row: usize) -> bool {
        self.is_binary[row]
    }

    pub fn check_dims(&self, r: &Mat) -> Result<()> {
        let want = (self.dims.n, self.dims.r);
        if r.shape() != want {
            return Err(Error::DimensionMismatch {
                expected: want,
                got: r.shape(),
            });
        }
        Ok(())
    }

    /// `b' e1^T`
    pub fn target(&self) -> Mat {
        let mut t = Mat::zeros(self.dims.m_rows, self.dims.r);
        t.set_column(0, self.affine.b());
        t
    }

    pub fn binary_residual(&self, r: &Mat) -> Result<Vector> {
        self.check_dims(r)?;
        Ok(Vector::from_iterator(
            self.dims.s,
            self.binary_rows.iter().map(|&i| r.row(i).norm_squared() - r[(i, 0)]),
        ))
    }

    /// `A' R - b' e1^T`
    pub fn affine_residual(&self, r: &Mat) -> Result<Mat> {
        self.check_dims(r)?;
        let mut e = self.affine.a() * r;
        let mut c0 = e.column_mut(0);
        c0 -= self.affine.b();
        Ok(e)
    }

    pub fn residual(&self, r: &Mat) -> Result<ConstraintResidual> {
        let affine_block = self.affine_residual(r)?;
        let binary_block = self.binary_residual(r)?;
        let combined_norm = (affine_block.norm_squared() + binary_block.norm_squared()).sqrt();
        Ok(ConstraintResidual {
            affine_block,
            binary_block,
            combined_norm,
        })
    }

    pub fn combined_residual(&self, r: &Mat) -> Result<f64> {
        self.residual(r).map(|c| c.combined_norm)
    }

    /// Whether `R` lies on `M_r` within `tol * (||R||_F + 1)`.
    pub fn is_feasible(&self, r: &Mat, tol: f64) -> Result<bool> {
        Ok(self.combined_residual(r)? <= tol * (r.norm() + 1.0))
    }

    /// Metric projection onto `M1`.
    pub fn project_affine(&self, r: &Mat) -> Result<Mat> {
        let e = self.affine_residual(r)?;
        Ok(r - self.affine.a().transpose() * self.affine.gram_solve(&e))
    }

    /// Projects onto `ker A'` (column-wise), the tangent space of `M1`.
    pub fn project_affine_kernel(&self, v: &Mat) -> Result<Mat> {
        self.check_dims(v)?;
        let a = self.affine.a();
        Ok(v - a.transpose() * self.affine.gram_solve(&(a * v)))
    }

    /// Metric projection onto `M2`, row by row onto the spheres
    /// `||x - e1/2|| = 1/2`.
    pub fn project_binary(&self, r: &Mat) -> Result<Mat> {
        self.check_dims(r)?;
        let mut out = r.clone();
        for &i in &self.binary_rows {
            let mut c = r.row(i) * 2.0;
            c[0] -= 1.0;
            let nrm = c.norm();
            if nrm == 0.0 {
                return Err(Error::DegenerateRow { row: i });
            }
            let mut row = c / nrm;
            row[0] += 1.0;
            out.set_row(i, &(row * 0.5));
        }
        Ok(out)
    }

    /// Rows `2 R_i - e1^T` for `i in B`, stacked as an `s x r` matrix.
    pub fn row_normals(&self, r: &Mat) -> Result<Mat> {
        self.check_dims(r)?;
        let mut c = r.select_rows(self.binary_rows.iter()) * 2.0;
        for i in 0..self.dims.s {
            c[(i, 0)] -= 1.0;
        }
        Ok(c)
    }

    /// `T_B^*(mu)`: rows in `B` are `mu_i c_i`, all others zero.
    pub fn scatter_rows(&self, mu: &Vector, c: &Mat) -> Mat {
        let mut out = Mat::zeros(self.dims.n, self.dims.r);
        for (k, &i) in self.binary_rows.iter().enumerate() {
            out.set_row(i, &(c.row(k) * mu[k]));
        }
        out
    }

    /// Orthogonal projection of `v` onto `T_R M_r`.
    pub fn project_tangent(&self, r: &Mat, v: &Mat) -> Result<TangentVector> {
        let path = if self.dims.s <= TANGENT_DIRECT_MAX_S {
            SchurPath::Direct
        } else {
            SchurPath::Smw
        };
        self.project_tangent_with(r, v, path)
    }

    pub fn project_tangent_with(&self, r: &Mat, v: &Mat, path: SchurPath) -> Result<TangentVector> {
        self.check_dims(r)?;
        self.check_dims(v)?;
        let c = self.row_normals(r)?;
        let d = Vector::from_iterator(self.dims.s, c.row_iter().map(|row| row.norm_squared()));
        let v0 = self.project_affine_kernel(v)?;
        let g = Vector::from_iterator(
            self.dims.s,
            self.binary_rows
                .iter()
                .enumerate()
                .map(|(k, &i)| v0.row(i).dot(&c.row(k))),
        );
        let mu = schur_solve(&d, &c, self.affine.low_rank_factor(), self.affine.schur_s(), &g, path)
            .map_err(|_| Error::SingularKkt)?;
        // xi = v0 - P_ker(T*(mu))
        let t = self.scatter_rows(&mu, &c);
        let xi = v0 - self.project_affine_kernel(&t)?;
        Ok(TangentVector { xi, base: r.clone() })
    }

    /// Projection onto the linearization of `M2` at `R`, row by row.
    pub fn linearized_project(&self, r: &Mat) -> Result<Mat> {
        self.check_dims(r)?;
        let c = self.row_normals(r)?;
        let h = self.binary_residual(r)?;
        let mut out = r.clone();
        for (k, &i) in self.binary_rows.iter().enumerate() {
            let cn = c.row(k).norm_squared();
            if cn.sqrt() < ZERO_NORMAL_TOL {
                return Err(Error::ZeroNormal { row: i });
            }
            let row = r.row(i) - c.row(k) * (h[k] / cn);
            out.set_row(i, &row);
        }
        Ok(out)
    }

    /// Constraint Jacobian at `R` acting on `vec(xi)` (column-major), rows
    /// ordered as the `m r` affine rows then the `s` binary rows.
    pub fn constraint_jacobian(&self, r: &Mat) -> Result<Mat> {
        self.check_dims(r)?;
        let ProblemDims { n, r: rk, m_rows, s } = self.dims;
        let a = self.affine.a();
        let c = self.row_normals(r)?;
        let mut j = Mat::zeros(m_rows * rk + s, n * rk);
        for col in 0..rk {
            for p in 0..m_rows {
                for i in 0..n {
                    j[(col * m_rows + p, col * n + i)] = a[(p, i)];
                }
            }
        }
        for (k, &i) in self.binary_rows.iter().enumerate() {
            for col in 0..rk {
                j[(m_rows * rk + k, col * n + i)] = c[(k, col)];
            }
        }
        Ok(j)
    }

    /// Orthonormal basis of `T_R M_r` from the null space of the constraint
    /// Jacobian, each basis element reshaped to `N x r`.
    pub fn tangent_basis(&self, r: &Mat) -> Result<Vec<Mat>> {
        let j = self.constraint_jacobian(r)?;
        let jtj = j.transpose() * &j;
        let eig = SymmetricEigen::new(jtj);
        let top = eig.eigenvalues.iter().fold(0.0_f64, |m, &x| m.max(x.abs()));
        let cut = 1e-10 * top.max(1.0);
        let (n, rk) = (self.dims.n, self.dims.r);
        Ok(eig
            .eigenvalues
            .iter()
            .enumerate()
            .filter(|(_, &lam)| lam.abs() <= cut)
            .map(|(k, _)| Mat::from_column_slice(n, rk, eig.eigenvectors.column(k).as_slice()))
            .collect())
    }

    /// Dense matrices (acting on `vec`) of the orthogonal projectors onto
    /// `T M1`, `T_R M2` and `T_R M_r`.
    pub fn tangent_projectors(&self, r: &Mat) -> Result<(Mat, Mat, Mat)> {
        self.check_dims(r)?;
        let (n, rk) = (self.dims.n, self.dims.r);
        let dim = n * rk;
        let c = self.row_normals(r)?;
        let mut p1 = Mat::zeros(dim, dim);
        let mut p2 = Mat::zeros(dim, dim);
        let mut pcap = Mat::zeros(dim, dim);
        for k in 0..dim {
            let mut e = Mat::zeros(n, rk);
            e[(k % n, k / n)] = 1.0;
            p1.set_column(
                k,
                &Vector::from_column_slice(self.project_affine_kernel(&e)?.as_slice()),
            );
            let mut t2 = e.clone();
            for (q, &i) in self.binary_rows.iter().enumerate() {
                let cn = c.row(q).norm_squared();
                if cn > 0.0 {
                    let coef = t2.row(i).dot(&c.row(q)) / cn;
                    let row = t2.row(i) - c.row(q) * coef;
                    t2.set_row(i, &row);
                }
            }
            p2.set_column(k, &Vector::from_column_slice(t2.as_slice()));
            let tc = self.project_tangent(r, &e)?.xi;
            pcap.set_column(k, &Vector::from_column_slice(tc.as_slice()));
        }
        Ok((p1, p2, pcap))
    }
}

impl TangentVector {
    /// Largest violation of the linearized constraints, relative to `||xi||`.
    pub fn tangency_defect(&self, m: &IntersectionManifold) -> Result<f64> {
        let a_part = m.affine().a() * &self.xi;
        let c = m.row_normals(&self.base)?;
        let mut worst = a_part.iter().fold(0.0_f64, |w, x| w.max(x.abs()));
        for (k, &i) in m.binary_rows().iter().enumerate() {
            worst = worst.max(self.xi.row(i).dot(&c.row(k)).abs());
        }
        Ok(worst / self.xi.norm().max(f64::MIN_POSITIVE))
    }

    pub fn norm(&self) -> f64 {
        self.xi.norm()
    }

    pub fn dot(&self, other: &Mat) -> f64 {
        frob_dot(&self.xi, other)
    }
}

/// Spectral norm `||P2 P1 - Pcap||_2`, the cosine of the Friedrichs angle
/// between the ranges of `P1` and `P2` when `Pcap` projects onto their
/// intersection.
pub fn angle_cosine(p1: &Mat, p2: &Mat, pcap: &Mat) -> Result<f64> {
    for (name, p) in [("P1", p1), ("P2", p2), ("Pcap", pcap)] {
        check_projector(name, p)?;
    }
    if p1.shape() != p2.shape() || p1.shape() != pcap.shape() {
        return Err(Error::DimensionMismatch {
            expected: p1.shape(),
            got: if p2.shape() != p1.shape() {
                p2.shape()
            } else {
                pcap.shape()
            },
        });
    }
    let k = p2 * p1 - pcap;
    let sv = k.singular_values();
    Ok(sv.iter().fold(0.0_f64, |m, &x| m.max(x)))
}

fn check_projector(name: &str, p: &Mat) -> Result<()> {
    if !p.is_square() {
        return Err(Error::NonProjector(format!("{name} is not square")));
    }
    let scale = p.norm().max(1.0);
    let asym = (p - p.transpose()).amax();
    if asym > 1e-10 * scale {
        return Err(Error::NonProjector(format!("{name} is not symmetric ({asym:.2e})")));
    }
    let idem = (p * p - p).amax();
    if idem > 1e-10 * scale {
        return Err(Error::NonProjector(format!("{name} is not idempotent ({idem:.2e})")));
    }
    Ok(())
}
