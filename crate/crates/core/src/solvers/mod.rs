//! Retractions onto `M_r` built from alternating-projection-type maps.
//!
//! A retraction `psi(x, eta)` starts from the trial point `x + eta` and
//! iterates one of the step maps in [`steps`] (or the dual metric projection
//! in [`metric`]) until the combined constraint residual drops below the
//! configured tolerance. [`tapr`] switches between APM, iAP and NewtonSLRA
//! according to the current residual.

pub mod metric;
pub mod steps;
pub mod tapr;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::error::{Error, Result};
use crate::linalg::{Mat, SchurPath};
use crate::manifold::{IntersectionManifold, TangentVector};

pub use metric::{metric_project, DualMethod, MetricProjection};
pub use steps::{aphl_step, apm_step, iap_step, newton_slra_step, relaxed_newton_slra_step};
pub use tapr::{tapr, TaprParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RetractionKind {
    Apm,
    Iap,
    NewtonSlra,
    RelaxedNewtonSlra,
    Aphl,
    MetricGwa,
    MetricGwaNewton,
    Tapr,
}

impl RetractionKind {
    pub const ALL: [RetractionKind; 8] = [
        RetractionKind::Apm,
        RetractionKind::Iap,
        RetractionKind::NewtonSlra,
        RetractionKind::RelaxedNewtonSlra,
        RetractionKind::Aphl,
        RetractionKind::MetricGwa,
        RetractionKind::MetricGwaNewton,
        RetractionKind::Tapr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RetractionKind::Apm => "apm",
            RetractionKind::Iap => "iap",
            RetractionKind::NewtonSlra => "newton-slra",
            RetractionKind::RelaxedNewtonSlra => "relaxed-newton-slra",
            RetractionKind::Aphl => "aphl",
            RetractionKind::MetricGwa => "gwa",
            RetractionKind::MetricGwaNewton => "gwa-newton",
            RetractionKind::Tapr => "tapr",
        }
    }
}

impl fmt::Display for RetractionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RetractionKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let key = s.trim().to_ascii_lowercase().replace('_', "-");
        RetractionKind::ALL
            .into_iter()
            .find(|k| k.name() == key)
            .or(match key.as_str() {
                "newtonslra" | "newton" => Some(RetractionKind::NewtonSlra),
                "relaxed" | "relaxed-newton" => Some(RetractionKind::RelaxedNewtonSlra),
                "metric-gwa" => Some(RetractionKind::MetricGwa),
                "metric-gwa-newton" | "gwanewton" => Some(RetractionKind::MetricGwaNewton),
                _ => None,
            })
            .ok_or_else(|| format!("unknown retraction kind '{s}'"))
    }
}

#[derive(Debug, Clone)]
pub struct RetractionConfig {
    pub kind: RetractionKind,
    /// Combined-residual tolerance relative to `||R||_F + 1`.
    pub tol: f64,
    pub maxiter: usize,
    pub schur_path: SchurPath,
    pub tapr: Option<TaprParams>,
}

impl RetractionConfig {
    pub fn new(kind: RetractionKind, tol: f64, maxiter: usize) -> Result<Self> {
        let cfg = RetractionConfig {
            kind,
            tol,
            maxiter,
            schur_path: SchurPath::Auto,
            tapr: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol >= 1e-15) {
            return Err(Error::InvalidConfig(format!("tol must be >= 1e-15, got {}", self.tol)));
        }
        if self.maxiter < 1 {
            return Err(Error::InvalidConfig("maxiter must be >= 1".into()));
        }
        if let Some(p) = &self.tapr {
            p.validate()?;
        }
        Ok(())
    }

    pub fn with_schur_path(mut self, path: SchurPath) -> Self {
        self.schur_path = path;
        self
    }

    pub fn with_tapr(mut self, params: TaprParams) -> Self {
        self.tapr = Some(params);
        self
    }
}

/// Which map produced an iterate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Init,
    Apm,
    Iap,
    NewtonSlra,
    RelaxedNewtonSlra,
    Aphl,
    Dual,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Init => "init",
            Phase::Apm => "apm",
            Phase::Iap => "iap",
            Phase::NewtonSlra => "newton-slra",
            Phase::RelaxedNewtonSlra => "relaxed-newton-slra",
            Phase::Aphl => "aphl",
            Phase::Dual => "dual",
        }
    }
}

#[derive(Debug, Clone)]
pub struct IterRecord {
    pub phase: Phase,
    /// Whether the trial step was kept (rejected TAPR trials leave the iterate unchanged).
    pub accepted: bool,
    /// Combined residual of the current iterate after this iteration.
    pub residual: f64,
    /// Combined residual of the trial point.
    pub trial_residual: f64,
    /// Binary-block residual norm of the current iterate.
    pub binary_residual: f64,
    pub step_norm: f64,
    pub elapsed_secs: f64,
}

#[derive(Debug, Clone, Default)]
pub struct IterTrace {
    pub records: Vec<IterRecord>,
}

impl IterTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn residuals(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.residual).collect()
    }

    pub fn binary_residuals(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.binary_residual).collect()
    }

    /// Number of iterations after the initial record.
    pub fn iterations(&self) -> usize {
        self.records.iter().filter(|r| r.phase != Phase::Init).count()
    }
}

#[derive(Debug, Clone)]
pub struct RetractionResult {
    pub point: Mat,
    pub converged: bool,
    pub trace: IterTrace,
    pub kind: RetractionKind,
}

/// Adaptive retraction tolerance `max(min(|grad|/100, 1/i^3), 1e-9)`.
pub fn retract_tol(grad_norm: f64, i: usize) -> f64 {
    let i = i.max(1) as f64;
    (grad_norm / 1e2).min(1.0 / (i * i * i)).max(1e-9)
}

pub(crate) struct Tracer {
    start: Instant,
    pub trace: IterTrace,
}

impl Tracer {
    pub fn new() -> Self {
        Tracer {
            start: Instant::now(),
            trace: IterTrace::default(),
        }
    }

    pub fn push(&mut self, phase: Phase, accepted: bool, residual: f64, trial: f64, binary: f64, step: f64) {
        self.trace.records.push(IterRecord {
            phase,
            accepted,
            residual,
            trial_residual: trial,
            binary_residual: binary,
            step_norm: step,
            elapsed_secs: self.start.elapsed().as_secs_f64(),
        });
    }
}

pub(crate) fn converged(residual: f64, point: &Mat, tol: f64) -> bool {
    residual <= tol * (point.norm() + 1.0)
}

/// Runs `step`, and on a degenerate binary row perturbs that row by
/// `1e-12` times a unit vector and retries once.
pub(crate) fn with_degenerate_retry<F>(y: &Mat, mut step: F) -> Result<Mat>
where
    F: FnMut(&Mat) -> Result<Mat>,
{
    match step(y) {
        Err(Error::DegenerateRow { row }) => {
            let mut rng = Xoshiro256PlusPlus::seed_from_u64(row as u64);
            let mut dir: Vec<f64> = (0..y.ncols()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let n = dir.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
            dir.iter_mut().for_each(|x| *x *= 1e-12 / n);
            let mut z = y.clone();
            for (j, d) in dir.into_iter().enumerate() {
                z[(row, j)] += d;
            }
            step(&z)
        }
        other => other,
    }
}

fn phase_of(kind: RetractionKind) -> Phase {
    match kind {
        RetractionKind::Apm => Phase::Apm,
        RetractionKind::Iap => Phase::Iap,
        RetractionKind::NewtonSlra => Phase::NewtonSlra,
        RetractionKind::RelaxedNewtonSlra => Phase::RelaxedNewtonSlra,
        RetractionKind::Aphl => Phase::Aphl,
        RetractionKind::MetricGwa | RetractionKind::MetricGwaNewton => Phase::Dual,
        RetractionKind::Tapr => Phase::Apm,
    }
}

/// Computes `psi(x, eta)` with the method selected in `cfg`.
pub fn retract(
    m: &IntersectionManifold,
    x: &Mat,
    eta: &TangentVector,
    cfg: &RetractionConfig,
) -> Result<RetractionResult> {
    cfg.validate()?;
    m.check_dims(x)?;
    m.check_dims(&eta.xi)?;
    if eta.xi.iter().all(|&v| v == 0.0) {
        let res = m.residual(x)?;
        let mut tracer = Tracer::new();
        tracer.push(
            Phase::Init,
            true,
            res.combined_norm,
            res.combined_norm,
            res.binary_norm(),
            0.0,
        );
        return Ok(RetractionResult {
            point: x.clone(),
            converged: converged(res.combined_norm, x, cfg.tol),
            trace: tracer.trace,
            kind: cfg.kind,
        });
    }
    let v = x + &eta.xi;
    match cfg.kind {
        RetractionKind::Tapr => {
            let params = cfg.tapr.clone().unwrap_or_default();
            tapr(m, x, eta, &params, cfg.tol, cfg.maxiter)
        }
        RetractionKind::MetricGwa | RetractionKind::MetricGwaNewton => retract_dual(m, &v, cfg),
        kind => retract_primal(m, v, kind, cfg),
    }
}

fn retract_primal(
    m: &IntersectionManifold,
    v: Mat,
    kind: RetractionKind,
    cfg: &RetractionConfig,
) -> Result<RetractionResult> {
    let path = cfg.schur_path;
    let mut y = if kind == RetractionKind::Aphl {
        with_degenerate_retry(&v, |z| m.project_binary(z)).map_err(|e| e.at_iter(0))?
    } else {
        v
    };
    let mut tracer = Tracer::new();
    let res = m.residual(&y)?;
    let mut err = res.combined_norm;
    tracer.push(Phase::Init, true, err, err, res.binary_norm(), 0.0);
    let phase = phase_of(kind);
    let newton_type = matches!(
        kind,
        RetractionKind::NewtonSlra | RetractionKind::RelaxedNewtonSlra | RetractionKind::Aphl
    );

    for k in 1..=cfg.maxiter {
        if converged(err, &y, cfg.tol) {
            break;
        }
        let trial = with_degenerate_retry(&y, |z| match kind {
            RetractionKind::Apm => apm_step(m, z),
            RetractionKind::Iap => iap_step(m, z),
            RetractionKind::NewtonSlra => newton_slra_step(m, z, path),
            RetractionKind::RelaxedNewtonSlra => match relaxed_newton_slra_step(m, z) {
                Err(Error::VanishingDirection) => m.project_affine(&m.project_binary(z)?),
                other => other,
            },
            RetractionKind::Aphl => aphl_step(m, z, path),
            _ => unreachable!("dual and hybrid kinds are dispatched elsewhere"),
        });
        let (next, ph, trial_res) = match trial {
            Ok(t) => {
                let tr = m.combined_residual(&t)?;
                if newton_type && !(tr <= err) {
                    // raw Newton-type step increased the residual: fall back to APM
                    let f = with_degenerate_retry(&y, |z| apm_step(m, z)).map_err(|e| e.at_iter(k))?;
                    (f, Phase::Apm, tr)
                } else {
                    (t, phase, tr)
                }
            }
            Err(Error::SingularSchur) if newton_type => {
                let f = with_degenerate_retry(&y, |z| apm_step(m, z)).map_err(|e| e.at_iter(k))?;
                (f, Phase::Apm, f64::NAN)
            }
            Err(e) => return Err(e.at_iter(k)),
        };
        let step = (&next - &y).norm();
        y = next;
        let res = m.residual(&y)?;
        err = res.combined_norm;
        tracer.push(ph, true, err, trial_res, res.binary_norm(), step);
    }
    finish(y, err, tracer, cfg)
}

fn retract_dual(m: &IntersectionManifold, v: &Mat, cfg: &RetractionConfig) -> Result<RetractionResult> {
    let method = if cfg.kind == RetractionKind::MetricGwa {
        DualMethod::Gwa
    } else {
        DualMethod::GwaNewton
    };
    let mut it = metric::DualIteration::new(m, v, method, cfg.schur_path)?;
    let mut tracer = Tracer::new();
    let mut y = with_degenerate_retry(v, |z| metric::primal_point(m, z, &it.theta)).map_err(|e| e.at_iter(0))?;
    let res = m.residual(&y)?;
    let mut err = res.combined_norm;
    tracer.push(Phase::Init, true, err, err, res.binary_norm(), 0.0);
    for k in 1..=cfg.maxiter {
        if converged(err, &y, cfg.tol) {
            break;
        }
        it.step().map_err(|e| e.at_iter(k))?;
        let next = with_degenerate_retry(v, |z| metric::primal_point(m, z, &it.theta)).map_err(|e| e.at_iter(k))?;
        let step = (&next - &y).norm();
        y = next;
        let res = m.residual(&y)?;
        err = res.combined_norm;
        tracer.push(Phase::Dual, true, err, err, res.binary_norm(), step);
    }
    finish(y, err, tracer, cfg)
}

pub(crate) fn finish(y: Mat, err: f64, tracer: Tracer, cfg: &RetractionConfig) -> Result<RetractionResult> {
    if converged(err, &y, cfg.tol) {
        Ok(RetractionResult {
            point: y,
            converged: true,
            trace: tracer.trace,
            kind: cfg.kind,
        })
    } else {
        Err(Error::MaxIterExceeded {
            iters: cfg.maxiter,
            residual: err,
            trace: Some(Box::new(tracer.trace)),
        })
    }
}
