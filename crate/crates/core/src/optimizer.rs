//! Riemannian gradient descent with Barzilai-Borwein steps on the lifted
//! quadratic `trace(R^T Q' R) + 2 c'^T R e1` over `M_r`.

use std::collections::VecDeque;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::linalg::{frob_dot, Mat};
use crate::manifold::TangentVector;
use crate::problems::{feasible_start, ProblemInstance, START_SEED};
use crate::solvers::{retract, retract_tol, RetractionConfig, RetractionKind, TaprParams};

pub const MAX_HALVINGS: usize = 20;
pub const NONMONOTONE_SLACK: f64 = 1e-8;
/// Smallest relative tolerance handed to the retraction.
pub const MIN_RELATIVE_TOL: f64 = 1e-15;

pub fn objective(inst: &ProblemInstance, r: &Mat) -> f64 {
    let qr = &inst.q_lift * r;
    frob_dot(r, &qr) + 2.0 * inst.c_lift.dot(&r.column(0))
}

/// Euclidean gradient `2 Q' R + 2 c' e1^T`.
pub fn gradient(inst: &ProblemInstance, r: &Mat) -> Mat {
    let mut g = &inst.q_lift * r * 2.0;
    let mut c0 = g.column_mut(0);
    c0.axpy(2.0, &inst.c_lift, 1.0);
    g
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BbVariant {
    Bb1,
    Bb2,
    Alternating,
}

impl std::str::FromStr for BbVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bb1" => Ok(BbVariant::Bb1),
            "bb2" => Ok(BbVariant::Bb2),
            "alternating" | "alt" => Ok(BbVariant::Alternating),
            _ => Err(Error::InvalidConfig(format!("unknown BB variant '{s}'"))),
        }
    }
}

/// What the solver does when the last step saw non-positive curvature,
/// `<s, y> <= 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurvatureRule {
    /// Fall back to the lower step bound, as [`bb_step`] does.
    MinBound,
    /// Use `|<s, y>|` in the BB quotients.
    Absolute,
}

impl std::str::FromStr for CurvatureRule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "min" | "min-bound" => Ok(CurvatureRule::MinBound),
            "abs" | "absolute" => Ok(CurvatureRule::Absolute),
            _ => Err(Error::InvalidConfig(format!("unknown curvature rule '{s}'"))),
        }
    }
}

/// BB step length from the last displacement `s` and gradient change `y`,
/// clamped to `bounds`. `iter` picks the formula for the alternating rule
/// (odd: BB1, even: BB2). A non-positive quotient gives `bounds.0`.
pub fn bb_step(s: &Mat, y: &Mat, variant: BbVariant, iter: usize, bounds: (f64, f64)) -> f64 {
    bb_quotient(s, y, frob_dot(s, y), variant, iter, bounds)
}

/// Like [`bb_step`] with `|<s, y>|` in place of `<s, y>`.
pub fn bb_step_abs(s: &Mat, y: &Mat, variant: BbVariant, iter: usize, bounds: (f64, f64)) -> f64 {
    bb_quotient(s, y, frob_dot(s, y).abs(), variant, iter, bounds)
}

fn bb_quotient(s: &Mat, y: &Mat, sy: f64, variant: BbVariant, iter: usize, bounds: (f64, f64)) -> f64 {
    let use_bb1 = match variant {
        BbVariant::Bb1 => true,
        BbVariant::Bb2 => false,
        BbVariant::Alternating => iter % 2 == 1,
    };
    let raw = if use_bb1 {
        s.norm_squared() / sy
    } else {
        sy / y.norm_squared()
    };
    if !(raw > 0.0) || !raw.is_finite() {
        return bounds.0;
    }
    raw.clamp(bounds.0, bounds.1)
}

#[derive(Debug, Clone)]
pub struct OptimizerConfig {
    /// Kind and inner solver settings; `tol` is overridden per iteration by
    /// the adaptive schedule.
    pub retraction: RetractionConfig,
    pub grad_tol: f64,
    pub max_outer: usize,
    pub bb_variant: BbVariant,
    pub step_bounds: (f64, f64),
    pub nonmonotone_window: usize,
    pub curvature_rule: CurvatureRule,
}

impl OptimizerConfig {
    pub fn new(kind: RetractionKind) -> Self {
        OptimizerConfig {
            retraction: RetractionConfig::new(kind, 1e-6, 1000).expect("static defaults are valid"),
            grad_tol: 1e-4,
            max_outer: 2000,
            bb_variant: BbVariant::Alternating,
            step_bounds: (1e-8, 1e2),
            nonmonotone_window: 5,
            curvature_rule: CurvatureRule::Absolute,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.retraction.validate()?;
        let (lo, hi) = self.step_bounds;
        if !(self.grad_tol > 0.0) {
            return Err(Error::InvalidConfig("grad_tol must be positive".into()));
        }
        if !(lo > 0.0 && lo <= hi) {
            return Err(Error::InvalidConfig(format!(
                "step bounds must satisfy 0 < min <= max, got ({lo}, {hi})"
            )));
        }
        if self.max_outer == 0 || self.nonmonotone_window == 0 {
            return Err(Error::InvalidConfig(
                "max_outer and nonmonotone_window must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterLog {
    pub iter: usize,
    pub step: f64,
    pub halvings: usize,
    pub objective: f64,
    /// Max of the nonmonotone window the step was accepted against.
    pub reference: f64,
    /// Riemannian gradient norm at the point the step was taken from.
    pub grad_norm: f64,
    pub retract_tol: f64,
    pub retract_iters: usize,
    pub residual: f64,
    pub point_norm: f64,
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub final_point: Mat,
    pub final_objective: f64,
    pub grad_norm: f64,
    pub outer_iters: usize,
    pub total_retraction_iters: usize,
    pub mean_retraction_iters: f64,
    pub wall_time: f64,
    pub converged: bool,
    pub per_iter_log: Vec<IterLog>,
}

fn riemannian_gradient(inst: &ProblemInstance, m: &crate::manifold::IntersectionManifold, r: &Mat) -> Result<Mat> {
    Ok(m.project_tangent(r, &gradient(inst, r))?.xi)
}

/// Runs the solver from [`feasible_start`] at rank `r`.
pub fn solve(inst: &ProblemInstance, r: usize, cfg: &OptimizerConfig) -> Result<SolveReport> {
    let x0 = feasible_start(inst, r, START_SEED)?;
    solve_from(inst, x0, cfg)
}

/// Runs the solver from a given feasible point.
pub fn solve_from(inst: &ProblemInstance, x0: Mat, cfg: &OptimizerConfig) -> Result<SolveReport> {
    cfg.validate()?;
    let start = Instant::now();
    let m = inst.manifold.with_rank(x0.ncols())?;
    m.check_dims(&x0)?;
    let mut x = x0;
    let mut f = objective(inst, &x);
    let mut g = riemannian_gradient(inst, &m, &x)?;
    let mut gnorm = g.norm();
    let mut window: VecDeque<f64> = VecDeque::from([f]);
    let mut log = Vec::new();
    let mut prev: Option<(Mat, Mat)> = None;
    let mut total_inner = 0;
    let mut outer = 0;

    while gnorm > cfg.grad_tol && outer < cfg.max_outer {
        let i = outer + 1;
        let mut t = match &prev {
            None => 1e-3 / (gnorm + 1.0),
            Some((s, y)) => match cfg.curvature_rule {
                CurvatureRule::MinBound => bb_step(s, y, cfg.bb_variant, i, cfg.step_bounds),
                CurvatureRule::Absolute => bb_step_abs(s, y, cfg.bb_variant, i, cfg.step_bounds),
            },
        };
        let tol = retract_tol(gnorm, i);
        let mut rcfg = cfg.retraction.clone();
        // the schedule is used as an absolute residual target
        rcfg.tol = (tol / (x.norm() + 1.0)).max(MIN_RELATIVE_TOL);
        if rcfg.kind == RetractionKind::Tapr {
            let base = rcfg.tapr.clone().unwrap_or_default();
            rcfg.tapr = Some(TaprParams {
                a2: TaprParams::for_tolerance(tol).a2.min(0.5 * base.a1),
                ..base
            });
        }
        let reference = window.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut halvings = 0;
        let accepted = loop {
            let eta = TangentVector {
                xi: &g * -t,
                base: x.clone(),
            };
            let trial = match retract(&m, &x, &eta, &rcfg) {
                Ok(out) => {
                    let fn_ = objective(inst, &out.point);
                    (fn_ <= reference - NONMONOTONE_SLACK * t * gnorm * gnorm).then_some((out, fn_))
                }
                // step left the retraction's basin: shrink it
                Err(Error::InitialResidualTooLarge { .. }) | Err(Error::MaxIterExceeded { .. }) => None,
                Err(e) => return Err(e.at_iter(i).context("retraction inside line search")),
            };
            if let Some(acc) = trial {
                break acc;
            }
            if halvings == MAX_HALVINGS {
                return Err(Error::LineSearchFailed { iter: i, halvings });
            }
            halvings += 1;
            t *= 0.5;
        };
        let (out, f_new) = accepted;
        let inner = out.trace.iterations();
        total_inner += inner;
        let residual = out.trace.records.last().map_or(f64::NAN, |rec| rec.residual);
        let x_new = out.point;
        let g_new = riemannian_gradient(inst, &m, &x_new)?;
        log.push(IterLog {
            iter: i,
            step: t,
            halvings,
            objective: f_new,
            reference,
            grad_norm: gnorm,
            retract_tol: tol,
            retract_iters: inner,
            residual,
            point_norm: x_new.norm(),
        });
        prev = Some((&x_new - &x, &g_new - &g));
        x = x_new;
        g = g_new;
        gnorm = g.norm();
        f = f_new;
        window.push_back(f);
        if window.len() > cfg.nonmonotone_window {
            window.pop_front();
        }
        outer = i;
    }

    Ok(SolveReport {
        final_objective: f,
        grad_norm: gnorm,
        outer_iters: outer,
        total_retraction_iters: total_inner,
        mean_retraction_iters: if outer > 0 {
            total_inner as f64 / outer as f64
        } else {
            0.0
        },
        wall_time: start.elapsed().as_secs_f64(),
        converged: gnorm <= cfg.grad_tol,
        per_iter_log: log,
        final_point: x,
    })
}
