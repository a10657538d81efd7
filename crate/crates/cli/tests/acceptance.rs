//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line for
//! each, and exits non-zero if any failed.

#[path = "../../core/tests/common/mod.rs"]
mod oracles;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;
use std::time::Instant;

use isect_core::linalg::{frob_dot, logspace};
use isect_core::optimizer::gradient;
use isect_core::problems::synthetic::{random_manifold, random_near_point, random_tangent};
use isect_core::problems::{feasible_start, gen_qkp, lift_qap, lift_qkp, parse_qaplib, ProblemInstance, QapInstance};
use isect_core::solvers::metric::{dual_data, gwa_iterate, gwa_newton_direction};
use isect_core::solvers::steps::{aphl_step, newton_slra_step, relaxed_newton_slra_step};
use isect_core::solvers::{metric_project, tapr, DualMethod, IterRecord, Phase, TaprParams};
use isect_core::verify::{
    order_errors, plateau_floor, rate_fit, retraction_gap, sphere_expansion_check, RateMode, SlopeFit,
};
use isect_core::{retract, IntersectionManifold, Mat, RetractionConfig, RetractionKind, SchurPath, Vector};
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

// Pinned tolerances.
const SLOPE_TAN: (f64, f64) = (2.7, 3.3);
const SLOPE_TOTAL: (f64, f64) = (1.8, 2.2);
const ORDER_RUNTIME_SECS: f64 = 30.0;
const PLATEAU_TAN_MAX: f64 = 1e-12;
const APM_TAU_MAX: f64 = 0.99;
const NEWTON_TARGET: f64 = 1e-12;
const NEWTON_MAX_STEPS: usize = 6;
const ORACLE_REL: f64 = 1e-10;
const PATH_REL: f64 = 1e-9;
const METRIC_AGREE: f64 = 1e-8;
const METRIC_FEAS: f64 = 1e-9;
const METRIC_ORTH: f64 = 1e-8;
const GAP_NORMAL: (f64, f64) = (1.8, 2.2);
const GAP_TAN_MIN: f64 = 2.7;
const SPHERE_NORMAL_MAX: f64 = 1e-13;
const SPHERE_TAN_SLOPE_MIN: f64 = 2.7;
const SPHERE_II_MAX: f64 = 1e-10;
const TAPR_LIMIT: f64 = 1e-8;
const INVARIANT_REL: f64 = 1e-10;
const UNIT_NORMAL: f64 = 1e-12;
const INVARIANT_POINTS: u64 = 200;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn qkp50() -> (ProblemInstance, Mat) {
    let inst = lift_qkp(&gen_qkp(50, 0.5, 42).unwrap()).unwrap();
    assert_eq!(inst.meta.r, 10);
    let x = feasible_start(&inst, 10, 0).unwrap();
    (inst, x)
}

fn riemannian_gradient(inst: &ProblemInstance, x: &Mat) -> Mat {
    inst.manifold.project_tangent(x, &gradient(inst, x)).unwrap().xi
}

const ORDER_KINDS: [RetractionKind; 4] = [
    RetractionKind::Apm,
    RetractionKind::NewtonSlra,
    RetractionKind::Aphl,
    RetractionKind::MetricGwa,
];

fn in_band(x: f64, band: (f64, f64)) -> bool {
    x >= band.0 && x <= band.1
}

fn slopes_line(m: &IntersectionManifold, x: &Mat, eta: &Mat, grid: &[f64]) -> (bool, String) {
    let mut ok = true;
    let mut parts = Vec::new();
    for kind in ORDER_KINDS {
        match order_errors(m, kind, x, eta, grid).and_then(|e| e.fit(plateau_floor(x))) {
            Ok((tot, tan)) => {
                ok &= in_band(tan.slope, SLOPE_TAN) && in_band(tot.slope, SLOPE_TOTAL);
                parts.push(format!("{kind} total {:.3} tangential {:.3}", tot.slope, tan.slope));
            }
            Err(e) => {
                ok = false;
                parts.push(format!("{kind} {e}"));
            }
        }
    }
    (ok, parts.join("; "))
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let (inst, x) = qkp50();
    let g = riemannian_gradient(&inst, &x);
    let grid = logspace(1e-7, 1e-5, 15);
    let (ok, detail) = slopes_line(&inst.manifold, &x, &(&g / g.norm()), &grid);
    let secs = start.elapsed().as_secs_f64();
    let (raw_ok, raw) = slopes_line(&inst.manifold, &x, &g, &grid);
    println!(
        "  info: unnormalized gradient (norm {:.3e}): {raw} [{}]",
        g.norm(),
        if raw_ok { "in band" } else { "out of band" }
    );
    match std::env::var("ISECT_CHR12A") {
        Ok(path) => {
            let text = std::fs::read_to_string(&path).map_err(|e| format!("chr12a: {e}"))?;
            let q = lift_qap(&parse_qaplib(&text, "chr12a").map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
            let r = q.meta.r;
            let xq = feasible_start(&q, r, 0).map_err(|e| e.to_string())?;
            let gq = riemannian_gradient(&q, &xq);
            let (qok, qd) = slopes_line(&q.manifold, &xq, &(&gq / gq.norm()), &grid);
            println!("  info: chr12a: {qd} [{}]", if qok { "in band" } else { "out of band" });
        }
        Err(_) => println!("  info: chr12a not supplied (set ISECT_CHR12A to a QAPLib file)"),
    }
    check(
        ok && secs < ORDER_RUNTIME_SECS,
        format!("unit eta: {detail}; {secs:.1}s"),
    )
}

fn criterion_2() -> Outcome {
    let (inst, x) = qkp50();
    let g = riemannian_gradient(&inst, &x);
    let eta = &g / g.norm();
    let grid = logspace(1e-9, 1e-5, 21);
    let floor = plateau_floor(&x);
    let mut worst: f64 = 0.0;
    let mut excluded = 0;
    for kind in ORDER_KINDS {
        let e = order_errors(&inst.manifold, kind, &x, &eta, &grid).map_err(|e| e.to_string())?;
        for &tan in e.tangential.iter().filter(|&&v| v <= floor) {
            excluded += 1;
            worst = worst.max(tan);
        }
    }
    check(
        excluded > 0 && worst <= PLATEAU_TAN_MAX,
        format!("{excluded} plateau points, largest tangential error {worst:.2e}"),
    )
}

fn criterion_3() -> Outcome {
    let (inst, x) = qkp50();
    let m = &inst.manifold;
    let mut worst_tau: f64 = 0.0;
    let mut worst_ratio: f64 = 0.0;
    for seed in 0..5 {
        let eta = random_tangent(m, &x, 1e-2, seed);
        let cfg = RetractionConfig::new(RetractionKind::Apm, 1e-12, 20_000).unwrap();
        let out = retract(m, &x, &eta, &cfg).map_err(|e| e.to_string())?;
        let fit = rate_fit(&out.trace.binary_residuals(), RateMode::Linear).map_err(|e| format!("seed {seed}: {e}"))?;
        worst_tau = worst_tau.max(fit.linear_factor);
        worst_ratio = worst_ratio.max(fit.max_ratio);
    }
    check(
        worst_ratio < 1.0 && worst_tau < APM_TAU_MAX,
        format!("largest tau {worst_tau:.3}, largest last-5 ratio {worst_ratio:.3}"),
    )
}

fn criterion_4() -> Outcome {
    let (inst, x) = qkp50();
    let m = &inst.manifold;
    let mut lines = Vec::new();
    let mut ok = true;
    for seed in 0..3 {
        let v = random_near_point(m, &x, 3e-2, seed);
        let eta = isect_core::TangentVector {
            xi: &v - &x,
            base: x.clone(),
        };
        let cfg = RetractionConfig::new(RetractionKind::NewtonSlra, 1e-15, 20).unwrap();
        let res = match retract(m, &x, &eta, &cfg) {
            Ok(out) => out.trace.residuals(),
            Err(isect_core::Error::MaxIterExceeded { trace: Some(t), .. }) => t.residuals(),
            Err(e) => return Err(e.to_string()),
        };
        let steps = res.iter().position(|&r| r < NEWTON_TARGET);
        ok &= steps.is_some_and(|s| s <= NEWTON_MAX_STEPS);
        // digits at least double while the new residual is above the target
        for w in res.windows(2).filter(|w| w[1] >= NEWTON_TARGET) {
            ok &= w[1].log10() <= 2.0 * w[0].log10();
        }
        let shown: Vec<String> = res.iter().take(6).map(|r| format!("{r:.1e}")).collect();
        lines.push(format!("[{}]", shown.join(" ")));
    }
    check(ok, format!("residuals {}", lines.join(" ")))
}

fn tiny(seed: u64) -> (IntersectionManifold, Mat) {
    let n = 6 + (seed % 3) as usize;
    let s = 1 + (seed % 3) as usize;
    let m = 1 + (seed % 2) as usize;
    random_manifold(seed, n, 2, s, m)
}

fn criterion_5() -> Outcome {
    let mut worst = [0.0_f64; 3];
    for seed in 0..50 {
        let (m, x) = tiny(seed);
        let r = random_near_point(&m, &x, 0.05, seed + 100);
        let e = [
            oracles::rel_err(
                &newton_slra_step(&m, &r, SchurPath::Auto).map_err(|e| e.to_string())?,
                &oracles::newton_slra_oracle(&m, &r),
            ),
            oracles::rel_err(
                &relaxed_newton_slra_step(&m, &r).map_err(|e| e.to_string())?,
                &oracles::relaxed_oracle(&m, &r),
            ),
            {
                let rb = oracles::sphere_rows(&m, &(r + Mat::from_element(x.nrows(), 2, 1e-3)));
                oracles::rel_err(
                    &aphl_step(&m, &rb, SchurPath::Auto).map_err(|e| e.to_string())?,
                    &oracles::aphl_oracle(&m, &rb),
                )
            },
        ];
        for k in 0..3 {
            worst[k] = worst[k].max(e[k]);
        }
    }
    check(
        worst.iter().all(|&w| w <= ORACLE_REL),
        format!(
            "max rel err newton {:.1e}, relaxed {:.1e}, aphl {:.1e}",
            worst[0], worst[1], worst[2]
        ),
    )
}

fn criterion_6() -> Outcome {
    let (mut wn, mut wg) = (0.0_f64, 0.0_f64);
    for seed in 0..50 {
        let n = 14 + (seed % 5) as usize;
        let (m, x) = random_manifold(seed, n, 3, 10, 2);
        let r = random_near_point(&m, &x, 0.02, seed + 400);
        let d = newton_slra_step(&m, &r, SchurPath::Direct).map_err(|e| e.to_string())?;
        let s = newton_slra_step(&m, &r, SchurPath::Smw).map_err(|e| e.to_string())?;
        wn = wn.max(oracles::rel_err(&s, &d));
        let (vp, gamma) = dual_data(&m, &r).unwrap();
        let mut theta = Mat::zeros(2, 3);
        for _ in 0..3 {
            theta = gwa_iterate(&m, &vp, &gamma, &theta, SchurPath::Direct).map_err(|e| e.to_string())?;
        }
        let gd = gwa_newton_direction(&m, &vp, &gamma, &theta, SchurPath::Direct).map_err(|e| e.to_string())?;
        let gs = gwa_newton_direction(&m, &vp, &gamma, &theta, SchurPath::Smw).map_err(|e| e.to_string())?;
        wg = wg.max(oracles::rel_err(&gs, &gd));
    }
    check(
        wn <= PATH_REL && wg <= PATH_REL,
        format!("max rel diff newton {wn:.1e}, gwa-newton {wg:.1e}"),
    )
}

fn criterion_7() -> Outcome {
    let mut cases: Vec<(IntersectionManifold, Mat, Mat)> = (0..10)
        .map(|seed| {
            let (m, x) = random_manifold(seed, 9, 2, 4, 2);
            let v = random_near_point(&m, &x, 0.05, seed + 50);
            (m, x, v)
        })
        .collect();
    let q = lift_qkp(&gen_qkp(10, 0.5, 3).unwrap()).unwrap().with_rank(3).unwrap();
    let xq = feasible_start(&q, 3, 1).unwrap();
    let vq = &xq + random_tangent(&q.manifold, &xq, 0.05, 2).xi;
    cases.push((q.manifold, xq, vq));
    let (mut agree, mut feas, mut orth) = (0.0_f64, 0.0_f64, 0.0_f64);
    for (m, _, v) in &cases {
        let a = metric_project(m, v, DualMethod::Gwa, 1e-13, 50_000, SchurPath::Auto).map_err(|e| e.to_string())?;
        let b = metric_project(m, v, DualMethod::GwaNewton, 1e-13, 500, SchurPath::Auto).map_err(|e| e.to_string())?;
        agree = agree.max((&a.point - &b.point).norm());
        let resid = v - &b.point;
        for p in [&a.point, &b.point] {
            feas = feas.max(m.combined_residual(p).unwrap());
        }
        for basis in m.tangent_basis(&b.point).unwrap() {
            orth = orth.max(frob_dot(&resid, &basis).abs());
        }
    }
    check(
        agree <= METRIC_AGREE && feas <= METRIC_FEAS && orth <= METRIC_ORTH,
        format!("gwa vs gwa-newton {agree:.1e}, residual {feas:.1e}, tangent inner product {orth:.1e}"),
    )
}

fn criterion_8() -> Outcome {
    let (inst, x) = qkp50();
    let g = riemannian_gradient(&inst, &x);
    let grid = logspace(1e-7, 1e-4, 15);
    let gap = retraction_gap(
        &inst.manifold,
        RetractionKind::Apm,
        RetractionKind::MetricGwaNewton,
        &x,
        &g,
        &grid,
        1e-15,
    )
    .map_err(|e| e.to_string())?;
    let floor = plateau_floor(&x);
    let fit = |v: &Vec<f64>| SlopeFit::fit(grid.clone(), v.clone(), floor).map(|f| f.slope);
    let tan = fit(&gap.tangential).map_err(|e| format!("tangential fit: {e}"))?;
    let normal = fit(&gap.normal);
    let disp = fit(&gap.first_normal).map_err(|e| format!("displacement fit: {e}"))?;
    println!("  info: normal displacement of the APM limit from x + t eta: slope {disp:.3}");
    let normal_ok = normal.as_ref().is_ok_and(|&s| in_band(s, GAP_NORMAL));
    let normal_txt = match normal {
        Ok(s) => format!("{s:.3}"),
        Err(e) => e.to_string(),
    };
    check(
        normal_ok && tan >= GAP_TAN_MIN,
        format!("gap slopes: normal {normal_txt}, tangential {tan:.3}"),
    )
}

fn criterion_9() -> Outcome {
    let x = Vector::from_vec(vec![0.2, -0.4, 0.5, 0.1, 0.7]).normalize();
    let raw_t = Vector::from_vec(vec![0.3, 0.1, -0.2, 0.6, 0.05]);
    let dir = (&raw_t - &x * raw_t.dot(&x)).normalize();
    let mut normal_worst: f64 = 0.0;
    for &t in &[1e-1, 1e-2, 1e-3, -5e-2] {
        let e = sphere_expansion_check(&x, &(&x * t)).map_err(|e| e.to_string())?;
        normal_worst = normal_worst.max(e.tangential_residual).max(e.normal_residual_gap);
    }
    let ts = logspace(1e-4, 1e-1, 8);
    let errs = ts
        .iter()
        .map(|&t| sphere_expansion_check(&x, &(&dir * t)).map(|e| e.tangential_residual))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    let slope = SlopeFit::fit(ts, errs, 1e-16).map_err(|e| e.to_string())?.slope;
    let ii = sphere_expansion_check(&x, &(&dir * 1e-3)).map_err(|e| e.to_string())?;
    check(
        normal_worst <= SPHERE_NORMAL_MAX && slope >= SPHERE_TAN_SLOPE_MIN && ii.normal_residual_gap <= SPHERE_II_MAX,
        format!(
            "pure-normal residual {normal_worst:.1e}, tangent slope {slope:.3}, normal-term gap at t=1e-3 {:.1e}",
            ii.normal_residual_gap
        ),
    )
}

/// Replays the TAPR phase logic from the trace alone.
fn replay_phases(p: &TaprParams, records: &[IterRecord]) -> Result<usize, String> {
    let mut expect = Phase::Apm;
    let mut err = records[0].residual;
    let mut newton_accepted = 0;
    for (k, rec) in records.iter().enumerate().skip(1) {
        if rec.phase != expect {
            return Err(format!("record {k}: phase {:?}, expected {expect:?}", rec.phase));
        }
        let before = err;
        err = rec.residual;
        expect = match rec.phase {
            Phase::Apm if err < p.a1 => Phase::Iap,
            Phase::Apm => Phase::Apm,
            Phase::Iap => {
                let t = rec.trial_residual;
                let accepted = t * t <= (1.0 - p.mu1) * before * before;
                let slow = t * t > (1.0 - p.mu0) * before * before;
                if accepted != rec.accepted {
                    return Err(format!("record {k}: iAP acceptance mismatch"));
                }
                if err <= p.a2 || slow {
                    Phase::NewtonSlra
                } else if accepted {
                    Phase::Iap
                } else {
                    Phase::Apm
                }
            }
            Phase::NewtonSlra if rec.accepted => {
                if err * err > (1.0 - p.mu2) * before * before {
                    return Err(format!("record {k}: accepted Newton step without sufficient decrease"));
                }
                newton_accepted += 1;
                Phase::NewtonSlra
            }
            Phase::NewtonSlra => Phase::Iap,
            other => return Err(format!("record {k}: unexpected phase {other:?}")),
        };
    }
    Ok(newton_accepted)
}

fn criterion_10() -> Outcome {
    let inst = lift_qkp(&gen_qkp(20, 0.5, 42).unwrap()).unwrap().with_rank(4).unwrap();
    let m = &inst.manifold;
    let x = feasible_start(&inst, 4, 0).unwrap();
    let params = TaprParams::new(1.0, 1e-2, 1e-5, 0.05, 0.1, 0.3).unwrap();
    let mut phases = Vec::new();
    let mut newton = 0;
    for (seed, scale) in [(1, 0.5), (2, 0.2), (3, 0.05), (4, 0.01)] {
        let eta = random_tangent(m, &x, scale, seed);
        let out = tapr(m, &x, &eta, &params, 1e-13, 500).map_err(|e| e.to_string())?;
        newton += replay_phases(&params, &out.trace.records)?;
        phases.extend(out.trace.records.iter().map(|r| r.phase));
    }
    let all_phases = [Phase::Apm, Phase::Iap, Phase::NewtonSlra]
        .iter()
        .all(|p| phases.contains(p));

    let near = TaprParams::new(1.0, 0.999, 0.998, 0.05, 0.1, 0.3).unwrap();
    let eta = random_tangent(m, &x, 1e-3, 8);
    let t = tapr(m, &x, &eta, &near, 1e-15, 200).map_err(|e| e.to_string())?;
    let cfg = RetractionConfig::new(RetractionKind::NewtonSlra, 1e-15, 200).unwrap();
    let n = retract(m, &x, &eta, &cfg).map_err(|e| e.to_string())?;
    let gap = (&t.point - &n.point).norm();
    check(
        all_phases && newton > 0 && gap <= TAPR_LIMIT,
        format!("phase replay ok, {newton} accepted Newton steps, distance to NewtonSLRA limit {gap:.1e}"),
    )
}

fn random_mat(rows: usize, cols: usize, seed: u64) -> Mat {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    Mat::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
}

fn criterion_11() -> Outcome {
    let qkp = lift_qkp(&gen_qkp(10, 0.5, 7).unwrap()).unwrap().with_rank(3).unwrap();
    let qap = lift_qap(&QapInstance {
        name: "p3".into(),
        p: 3,
        w: Mat::from_fn(3, 3, |i, j| ((i + j) % 3) as f64),
        d: Mat::from_fn(3, 3, |i, j| (i as f64 - j as f64).abs()),
    })
    .unwrap()
    .with_rank(3)
    .unwrap();
    let (syn, xs) = random_manifold(11, 9, 3, 4, 2);
    let syn_points = {
        let cfg = RetractionConfig::new(RetractionKind::NewtonSlra, 1e-14, 100).unwrap();
        (0..INVARIANT_POINTS)
            .map(|s| retract(&syn, &xs, &random_tangent(&syn, &xs, 0.3, s), &cfg).map(|o| o.point))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| e.to_string())?
    };
    let mut sets: Vec<(&str, &IntersectionManifold, Vec<Mat>)> = Vec::new();
    for (name, inst) in [("qkp", &qkp), ("qap", &qap)] {
        let pts = (0..INVARIANT_POINTS)
            .map(|s| feasible_start(inst, 3, s))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| e.to_string())?;
        sets.push((name, &inst.manifold, pts));
    }
    sets.push(("synthetic", &syn, syn_points));

    let mut worst = [0.0_f64; 6];
    for (_, m, pts) in &sets {
        let d = m.dims();
        for (k, x) in pts.iter().enumerate() {
            let seed = 1000 + k as u64;
            let v = random_mat(d.n, d.r, seed) * 3.0;
            let w = random_mat(d.n, d.r, seed + 7777);
            let scale = x.norm() + 1.0;
            let pa = m.project_affine(&v).unwrap();
            let pb = m.project_binary(&v).unwrap();
            worst[0] = worst[0]
                .max((m.project_affine(&pa).unwrap() - &pa).norm() / (pa.norm() + 1.0))
                .max((m.project_binary(&pb).unwrap() - &pb).norm() / (pb.norm() + 1.0));
            let pv = m.project_tangent(x, &v).unwrap();
            let pw = m.project_tangent(x, &w).unwrap();
            let ppv = m.project_tangent(x, &pv.xi).unwrap();
            worst[1] = worst[1].max((&ppv.xi - &pv.xi).norm() / v.norm());
            worst[2] = worst[2].max((pv.dot(&w) - pw.dot(&v)).abs() / (v.norm() * w.norm()));
            worst[3] = worst[3].max(pv.tangency_defect(m).unwrap() / scale);
            let resid = &v - &pv.xi;
            for b in m.tangent_basis(x).unwrap() {
                worst[4] = worst[4].max(frob_dot(&resid, &b).abs() / v.norm());
            }
            for row in m.row_normals(x).unwrap().row_iter() {
                worst[5] = worst[5].max((row.norm() - 1.0).abs());
            }
        }
    }
    let ok = worst[..5].iter().all(|&w| w <= INVARIANT_REL) && worst[5] <= UNIT_NORMAL;
    check(
        ok,
        format!(
            "{} points; idempotence {:.1e}/{:.1e}, self-adjointness {:.1e}, kernel {:.1e}, basis orthogonality {:.1e}, unit normals {:.1e}",
            sets.iter().map(|s| s.2.len()).sum::<usize>(),
            worst[0],
            worst[1],
            worst[2],
            worst[3],
            worst[4],
            worst[5]
        ),
    )
}

fn isect(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_isect"))
        .args(args)
        .env("ISECT_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn criterion_12() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let p = |name: &str| dir.path().join(name).to_string_lossy().into_owned();
    let (a, b) = (p("a.qkp"), p("b.qkp"));
    for out in [&a, &b] {
        let o = isect(&["gen-qkp", "--n", "50", "--density", "0.5", "--seed", "42", "--out", out]);
        if !o.status.success() {
            return Err(format!("gen-qkp failed: {}", String::from_utf8_lossy(&o.stderr)));
        }
    }
    let gen_same = std::fs::read(&a).unwrap() == std::fs::read(&b).unwrap();
    let mut csv_same = true;
    for scale in ["raw", "unit"] {
        let (c1, c2) = (p(&format!("{scale}1.csv")), p(&format!("{scale}2.csv")));
        for out in [&c1, &c2] {
            isect(&[
                "verify-order",
                "--instance",
                &a,
                "--kinds",
                "apm,newton-slra,aphl",
                "--eta-scale",
                scale,
                "--out",
                out,
            ]);
        }
        let (x, y) = (std::fs::read(&c1), std::fs::read(&c2));
        csv_same &= matches!((x, y), (Ok(x), Ok(y)) if x == y && !x.is_empty());
    }
    check(
        gen_same && csv_same,
        format!("instance files identical: {gen_same}, verify-order CSVs identical: {csv_same}"),
    )
}

fn main() {
    let criteria: [(u32, &str, fn() -> Outcome); 12] = [
        (1, "second-order slopes on QKP 50/0.5/42", criterion_1),
        (2, "roundoff plateau", criterion_2),
        (3, "APM linear rate", criterion_3),
        (4, "NewtonSLRA quadratic rate", criterion_4),
        (5, "Schur steps vs dense KKT", criterion_5),
        (6, "direct vs SMW paths", criterion_6),
        (7, "metric projection cross-check", criterion_7),
        (8, "APM limit vs metric projection", criterion_8),
        (9, "sphere expansion", criterion_9),
        (10, "TAPR conformance", criterion_10),
        (11, "projection and tangent invariants", criterion_11),
        (12, "determinism", criterion_12),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = Vec::new();
    for (id, name, f) in criteria {
        let label = format!("criterion {id:>2}");
        if !filter.is_empty()
            && !filter
                .iter()
                .any(|s| name.contains(s.as_str()) || label.contains(s.as_str()))
        {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("{label} PASS ({name}, {secs:.1}s): {d}"),
            Err(d) => {
                println!("{label} FAIL ({name}, {secs:.1}s): {d}");
                failed.push(id);
            }
        }
    }
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
