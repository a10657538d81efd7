//! Three-phase hybrid retraction: APM far from the manifold, iAP in a
//! moderate neighbourhood, NewtonSLRA close to it, with merit-decrease
//! acceptance tests on the squared combined residual.

use crate::error::{Error, Result};
use crate::linalg::{Mat, SchurPath};
use crate::manifold::{IntersectionManifold, TangentVector};

use super::steps::{apm_step, iap_step, newton_slra_step};
use super::{
    converged, finish, with_degenerate_retry, Phase, RetractionConfig, RetractionKind, RetractionResult, Tracer,
};

#[derive(Debug, Clone, PartialEq)]
pub struct TaprParams {
    /// Largest admissible initial residual.
    pub a0: f64,
    /// Residual below which APM hands over to iAP.
    pub a1: f64,
    /// Residual below which iAP hands over to NewtonSLRA.
    pub a2: f64,
    /// Slow-convergence threshold for iAP.
    pub mu0: f64,
    /// Required decrease for an accepted iAP step.
    pub mu1: f64,
    /// Required decrease for an accepted NewtonSLRA step.
    pub mu2: f64,
}

impl Default for TaprParams {
    fn default() -> Self {
        TaprParams::for_tolerance(1e-6)
    }
}

impl TaprParams {
    pub fn new(a0: f64, a1: f64, a2: f64, mu0: f64, mu1: f64, mu2: f64) -> Result<Self> {
        let p = TaprParams {
            a0,
            a1,
            a2,
            mu0,
            mu1,
            mu2,
        };
        p.validate()?;
        Ok(p)
    }

    /// Defaults with the second-order threshold tied to the retraction
    /// tolerance, `a2 = 1e3 tol`, capped below `a1`.
    pub fn for_tolerance(tol: f64) -> Self {
        let a1 = 1e-2;
        TaprParams {
            a0: 1.0,
            a1,
            a2: (tol * 1e3).min(0.5 * a1),
            mu0: 0.05,
            mu1: 0.1,
            mu2: 0.3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let TaprParams {
            a0,
            a1,
            a2,
            mu0,
            mu1,
            mu2,
        } = *self;
        if !(a0 > 0.0) {
            return Err(Error::InvalidConfig("TAPR needs a0 > 0".into()));
        }
        if !(1.0 > a1 && a1 > a2 && a2 > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "TAPR needs 1 > a1 > a2 > 0, got a1={a1}, a2={a2}"
            )));
        }
        if !(0.0 < mu0 && mu0 < mu1 && mu1 <= mu2 && mu2 < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "TAPR needs 0 < mu0 < mu1 <= mu2 < 1, got {mu0}, {mu1}, {mu2}"
            )));
        }
        Ok(())
    }
}

/// Runs the hybrid from `x + eta`.
///
/// `err` is the combined residual. A rejected trial leaves the iterate and
/// `err` unchanged but still counts against `maxiter`.
pub fn tapr(
    m: &IntersectionManifold,
    x: &Mat,
    eta: &TangentVector,
    params: &TaprParams,
    tol: f64,
    maxiter: usize,
) -> Result<RetractionResult> {
    params.validate()?;
    let cfg = RetractionConfig {
        kind: RetractionKind::Tapr,
        tol,
        maxiter,
        schur_path: SchurPath::Auto,
        tapr: Some(params.clone()),
    };
    cfg.validate()?;
    m.check_dims(x)?;
    let mut y = x + &eta.xi;
    let mut tracer = Tracer::new();
    let res0 = m.residual(&y)?;
    let mut err = res0.combined_norm;
    tracer.push(Phase::Init, true, err, err, res0.binary_norm(), 0.0);
    if err > params.a0 {
        return Err(Error::InitialResidualTooLarge {
            err0: err,
            bound: params.a0,
        });
    }

    let mut phase = Phase::Apm;
    for i in 1..=maxiter {
        if converged(err, &y, tol) {
            break;
        }
        match phase {
            Phase::Apm => {
                let next = with_degenerate_retry(&y, |z| apm_step(m, z)).map_err(|e| e.at_iter(i))?;
                let step = (&next - &y).norm();
                y = next;
                let res = m.residual(&y)?;
                err = res.combined_norm;
                tracer.push(Phase::Apm, true, err, err, res.binary_norm(), step);
                if err < params.a1 {
                    phase = Phase::Iap;
                }
            }
            Phase::Iap => {
                let trial = with_degenerate_retry(&y, |z| iap_step(m, z)).map_err(|e| e.at_iter(i))?;
                let trial_err = m.combined_residual(&trial)?;
                let before = err;
                let accepted = trial_err * trial_err <= (1.0 - params.mu1) * before * before;
                let mut step = 0.0;
                if accepted {
                    step = (&trial - &y).norm();
                    y = trial;
                    err = trial_err;
                } else {
                    phase = Phase::Apm;
                }
                let slow = trial_err * trial_err > (1.0 - params.mu0) * before * before;
                if err <= params.a2 || slow {
                    phase = Phase::NewtonSlra;
                }
                let bin = m.residual(&y)?.binary_norm();
                tracer.push(Phase::Iap, accepted, err, trial_err, bin, step);
            }
            _ => {
                let trial = with_degenerate_retry(&y, |z| newton_slra_step(m, z, SchurPath::Auto));
                let (accepted, trial_err, step) = match trial {
                    Ok(t) => {
                        let trial_err = m.combined_residual(&t)?;
                        if trial_err * trial_err <= (1.0 - params.mu2) * err * err {
                            let step = (&t - &y).norm();
                            y = t;
                            err = trial_err;
                            (true, trial_err, step)
                        } else {
                            (false, trial_err, 0.0)
                        }
                    }
                    Err(Error::SingularSchur) => (false, f64::NAN, 0.0),
                    Err(e) => return Err(e.at_iter(i)),
                };
                if !accepted {
                    phase = Phase::Iap;
                }
                let bin = m.residual(&y)?.binary_norm();
                tracer.push(Phase::NewtonSlra, accepted, err, trial_err, bin, step);
            }
        }
    }
    finish(y, err, tracer, &cfg)
}
