//! Numerical certificates for the geometric claims: retraction order
//! slopes, convergence-rate fits, and the projection expansion on the unit
//! sphere where everything is available in closed form.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::linalg::{logspace, ols, Mat};
use crate::manifold::{IntersectionManifold, TangentVector};
use crate::solvers::{retract, RetractionConfig, RetractionKind};

/// Inner retraction tolerance used by slope experiments.
pub const SLOPE_RETRACT_TOL: f64 = 1e-12;
/// Iteration budget for slope experiments (APM is only linearly convergent).
pub const SLOPE_MAXITER: usize = 20_000;
/// Minimum number of points surviving the plateau cut.
pub const MIN_FIT_POINTS: usize = 4;

/// Default step grid: 15 points in `[1e-7, 1e-5]`.
pub fn default_t_grid() -> Vec<f64> {
    logspace(1e-7, 1e-5, 15)
}

/// Roundoff floor `1e-13 (|x|_F + 1)` below which errors are not fitted.
pub fn plateau_floor(x: &Mat) -> f64 {
    1e-13 * (x.norm() + 1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlopeFit {
    pub t_values: Vec<f64>,
    pub errors: Vec<f64>,
    /// OLS slope of `log10 err` against `log10 t` over points above the floor.
    pub slope: f64,
    pub intercept: f64,
    pub plateau_floor: f64,
}

impl SlopeFit {
    pub fn fit(t_values: Vec<f64>, errors: Vec<f64>, plateau_floor: f64) -> Result<Self> {
        if t_values.len() != errors.len() {
            return Err(Error::InvalidConfig("t grid and errors differ in length".into()));
        }
        if t_values.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidConfig("t grid must be strictly increasing".into()));
        }
        let (lx, ly): (Vec<f64>, Vec<f64>) = t_values
            .iter()
            .zip(&errors)
            .filter(|(_, &e)| e > plateau_floor)
            .map(|(&t, &e)| (t.log10(), e.log10()))
            .unzip();
        if lx.len() < MIN_FIT_POINTS {
            return Err(Error::InsufficientPoints {
                needed: MIN_FIT_POINTS,
                have: lx.len(),
            });
        }
        let (slope, intercept) = ols(&lx, &ly);
        if !slope.is_finite() {
            return Err(Error::NonFinite);
        }
        Ok(SlopeFit {
            t_values,
            errors,
            slope,
            intercept,
            plateau_floor,
        })
    }

    /// Points at or below the floor, which were left out of the fit.
    pub fn excluded(&self) -> usize {
        self.errors.iter().filter(|&&e| e <= self.plateau_floor).count()
    }

    pub fn excluded_points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.t_values
            .iter()
            .zip(&self.errors)
            .filter(|(_, &e)| e <= self.plateau_floor)
            .map(|(&t, &e)| (t, e))
    }
}

/// Per-step errors of a retraction along a fixed direction.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderErrors {
    pub t_values: Vec<f64>,
    /// `|retract(x, t eta) - (x + t eta)|_F`
    pub total: Vec<f64>,
    /// `|P_T(retract(x, t eta) - (x + t eta))|_F`
    pub tangential: Vec<f64>,
}

impl OrderErrors {
    pub fn fit(&self, floor: f64) -> Result<(SlopeFit, SlopeFit)> {
        Ok((
            SlopeFit::fit(self.t_values.clone(), self.total.clone(), floor)?,
            SlopeFit::fit(self.t_values.clone(), self.tangential.clone(), floor)?,
        ))
    }
}

fn slope_config(kind: RetractionKind) -> Result<RetractionConfig> {
    RetractionConfig::new(kind, SLOPE_RETRACT_TOL, SLOPE_MAXITER)
}

/// Evaluates the retraction errors for each `t` in order. Failures carry
/// the offending `t` in their context.
pub fn order_errors(
    m: &IntersectionManifold,
    kind: RetractionKind,
    x: &Mat,
    eta: &Mat,
    t_grid: &[f64],
) -> Result<OrderErrors> {
    let cfg = slope_config(kind)?;
    let mut total = Vec::with_capacity(t_grid.len());
    let mut tangential = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let step = TangentVector {
            xi: eta * t,
            base: x.clone(),
        };
        let out = retract(m, x, &step, &cfg).map_err(|e| e.context(format!("{kind} retraction at t = {t:e}")))?;
        let e = out.point - (x + &step.xi);
        total.push(e.norm());
        tangential.push(m.project_tangent(x, &e)?.norm());
    }
    Ok(OrderErrors {
        t_values: t_grid.to_vec(),
        total,
        tangential,
    })
}

/// Log-log slopes of the total and tangential retraction errors.
pub fn order_slope(
    m: &IntersectionManifold,
    kind: RetractionKind,
    x: &Mat,
    eta: &Mat,
    t_grid: &[f64],
) -> Result<(SlopeFit, SlopeFit)> {
    order_errors(m, kind, x, eta, t_grid)?.fit(plateau_floor(x))
}

/// Gap between two retractions evaluated at the same trial points, split
/// into its normal and tangential parts at `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct GapErrors {
    pub t_values: Vec<f64>,
    /// Normal part at `x` of `first - second`.
    pub normal: Vec<f64>,
    /// Tangential part at `x` of `first - second`.
    pub tangential: Vec<f64>,
    /// Normal part at `x` of `first - (x + t eta)`.
    pub first_normal: Vec<f64>,
}

/// `tol` is the relative inner tolerance of both retractions.
pub fn retraction_gap(
    m: &IntersectionManifold,
    first: RetractionKind,
    second: RetractionKind,
    x: &Mat,
    eta: &Mat,
    t_grid: &[f64],
    tol: f64,
) -> Result<GapErrors> {
    let ca = RetractionConfig::new(first, tol, SLOPE_MAXITER)?;
    let cb = RetractionConfig::new(second, tol, SLOPE_MAXITER)?;
    let mut normal = Vec::new();
    let mut tangential = Vec::new();
    let mut first_normal = Vec::new();
    for &t in t_grid {
        let step = TangentVector {
            xi: eta * t,
            base: x.clone(),
        };
        let a = retract(m, x, &step, &ca).map_err(|e| e.context(format!("{first} at t = {t:e}")))?;
        let b = retract(m, x, &step, &cb).map_err(|e| e.context(format!("{second} at t = {t:e}")))?;
        let gap = &a.point - &b.point;
        let tan = m.project_tangent(x, &gap)?.xi;
        normal.push((&gap - &tan).norm());
        tangential.push(tan.norm());
        let disp = &a.point - x - &step.xi;
        let dt = m.project_tangent(x, &disp)?.xi;
        first_normal.push((&disp - &dt).norm());
    }
    Ok(GapErrors {
        t_values: t_grid.to_vec(),
        normal,
        tangential,
        first_normal,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateMode {
    Linear,
    Quadratic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateFit {
    /// Tail of the residual sequence above the fit floor.
    pub residuals: Vec<f64>,
    /// Geometric mean of the last (up to) five ratios `r_{k+1}/r_k`.
    pub linear_factor: f64,
    pub max_ratio: f64,
    /// `r_{k+1}/r_k^2` over the tail.
    pub quadratic_constants: Vec<f64>,
    /// Largest over smallest quadratic constant.
    pub quadratic_spread: f64,
}

impl RateFit {
    pub fn quadratic_constant(&self) -> f64 {
        self.quadratic_constants.last().copied().unwrap_or(f64::NAN)
    }
}

/// Residuals at or below this value are treated as converged and dropped.
pub const RATE_FLOOR: f64 = 1e-13;

/// Fits linear or quadratic convergence constants to a residual sequence.
pub fn rate_fit(residuals: &[f64], mode: RateMode) -> Result<RateFit> {
    let tail: Vec<f64> = residuals.iter().copied().filter(|&r| r > RATE_FLOOR).collect();
    if tail.len() < MIN_FIT_POINTS {
        return Err(Error::InsufficientPoints {
            needed: MIN_FIT_POINTS,
            have: tail.len(),
        });
    }
    let ratios: Vec<f64> = tail.windows(2).map(|w| w[1] / w[0]).collect();
    let last: &[f64] = &ratios[ratios.len().saturating_sub(5)..];
    let linear_factor = (last.iter().map(|r| r.ln()).sum::<f64>() / last.len() as f64).exp();
    let max_ratio = last.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let quadratic_constants: Vec<f64> = match mode {
        RateMode::Quadratic => tail.windows(2).map(|w| w[1] / (w[0] * w[0])).collect(),
        RateMode::Linear => Vec::new(),
    };
    let quadratic_spread = if quadratic_constants.is_empty() {
        f64::NAN
    } else {
        let hi = quadratic_constants.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = quadratic_constants.iter().copied().fold(f64::INFINITY, f64::min);
        hi / lo
    };
    Ok(RateFit {
        residuals: tail,
        linear_factor,
        max_ratio,
        quadratic_constants,
        quadratic_spread,
    })
}

/// `x / |x|`
pub fn sphere_project(x: &DVector<f64>) -> Result<DVector<f64>> {
    let n = x.norm();
    if !(n > 1e-14) {
        return Err(Error::NearZeroInput);
    }
    Ok(x / n)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SphereExpansion {
    pub x: DVector<f64>,
    pub u: DVector<f64>,
    /// `II_x(u_T, u_T) = -|u_T|^2 x`
    pub second_fundamental: DVector<f64>,
    /// `W_x(u_T, u_N) = -<u, x> u_T`
    pub weingarten: DVector<f64>,
    pub tangential_residual: f64,
    pub normal_residual_gap: f64,
}

/// Compares `P(x + u)` on the unit sphere with its second-order expansion
/// `x + u_T + W_x(u_T, u_N) + II_x(u_T, u_T)/2`.
pub fn sphere_expansion_check(x: &DVector<f64>, u: &DVector<f64>) -> Result<SphereExpansion> {
    if x.len() != u.len() {
        return Err(Error::DimensionMismatch {
            expected: (x.len(), 1),
            got: (u.len(), 1),
        });
    }
    if (x.norm() - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidConfig("base point must lie on the unit sphere".into()));
    }
    if u.norm() > 0.1 {
        return Err(Error::InvalidConfig("perturbation norm must not exceed 0.1".into()));
    }
    let un = u.dot(x);
    let ut = u - x * un;
    let second_fundamental = x * -ut.norm_squared();
    let weingarten = &ut * -un;
    let predicted = x + &ut + &weingarten + &second_fundamental * 0.5;
    let diff = sphere_project(&(x + u))? - predicted;
    let normal = diff.dot(x);
    let tangential = &diff - x * normal;
    Ok(SphereExpansion {
        x: x.clone(),
        u: u.clone(),
        second_fundamental,
        weingarten,
        tangential_residual: tangential.norm(),
        normal_residual_gap: normal.abs(),
    })
}
