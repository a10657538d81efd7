//! `isect`: instance generation, retraction order checks, single solves,
//! benchmarks and metric projections, all writing deterministic CSV.
//!
//! Exit codes: 0 on success, 1 on usage or input errors, 2 on numerical
//! failure.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use isect_core::optimizer::{gradient, solve_from, BbVariant, CurvatureRule, OptimizerConfig, SolveReport};
use isect_core::problems::{
    feasible_start, gen_qkp, lift_qap, lift_qkp, parse_qaplib, ProblemInstance, QkpInstance, START_SEED,
};
use isect_core::solvers::{metric_project, DualMethod};
use isect_core::verify::{order_errors, plateau_floor, SlopeFit};
use isect_core::{Error, Mat, RetractionKind, SchurPath};
use rayon::prelude::*;

#[derive(Parser)]
#[command(
    name = "isect",
    version,
    about = "Retractions on affine/row-sphere intersection manifolds"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random quadratic knapsack instance.
    GenQkp(GenQkpArgs),
    /// Measure retraction error slopes along the normalized gradient.
    VerifyOrder(VerifyOrderArgs),
    /// Run the Riemannian BB solver once.
    Solve(SolveArgs),
    /// Run (instance, kind, repeat) solver cells.
    Bench(BenchArgs),
    /// Metric projection of a point onto the instance manifold.
    Project(ProjectArgs),
}

#[derive(Args)]
struct GenQkpArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    density: f64,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum EtaScale {
    /// Unit Frobenius norm.
    Unit,
    /// The Riemannian gradient as is.
    Raw,
}

#[derive(Args)]
struct VerifyOrderArgs {
    #[arg(long)]
    instance: PathBuf,
    /// Comma-separated retraction kinds.
    #[arg(long, default_value = "apm,newton-slra,aphl,gwa")]
    kinds: String,
    #[arg(long, default_value_t = 1e-7)]
    t_min: f64,
    #[arg(long, default_value_t = 1e-5)]
    t_max: f64,
    #[arg(long, default_value_t = 15)]
    points: usize,
    /// Rank; defaults to the instance's initial rank.
    #[arg(long)]
    r: Option<usize>,
    #[arg(long, value_enum, default_value = "unit")]
    eta_scale: EtaScale,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SolverFlags {
    /// Rank; defaults to the instance's initial rank.
    #[arg(long)]
    r: Option<usize>,
    /// Riemannian gradient tolerance.
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    #[arg(long, default_value_t = 2000)]
    max_outer: usize,
    #[arg(long, default_value = "alternating")]
    bb: String,
    /// Step rule on non-positive curvature: `abs` or `min`.
    #[arg(long, default_value = "abs")]
    curvature: String,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long)]
    kind: String,
    #[command(flatten)]
    solver: SolverFlags,
    #[arg(long)]
    out: PathBuf,
    /// Optional per-iteration log CSV.
    #[arg(long)]
    log: Option<PathBuf>,
    /// Optional file receiving the wall-clock time.
    #[arg(long)]
    timing_out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Comma-separated instance files.
    #[arg(long)]
    instances: String,
    #[arg(long, default_value = "apm,newton-slra,aphl,tapr")]
    kinds: String,
    #[arg(long, default_value_t = 1)]
    repeats: usize,
    #[command(flatten)]
    solver: SolverFlags,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    timing_out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProjectMethod {
    Gwa,
    GwaNewton,
}

#[derive(Args)]
struct ProjectArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, value_enum, default_value = "gwa-newton")]
    method: ProjectMethod,
    /// CSV file with one matrix row per line.
    #[arg(long)]
    input_point: PathBuf,
    #[arg(long, default_value_t = 1e-12)]
    tol: f64,
    #[arg(long, default_value_t = 10_000)]
    maxiter: usize,
    #[arg(long)]
    out: PathBuf,
}

enum CliError {
    Usage(String),
    Numerical(Error),
    NotConverged(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e.root() {
            Error::InvalidConfig(_)
            | Error::InvalidDims(_)
            | Error::MalformedFile(_)
            | Error::AsymmetricMatrix { .. } => CliError::Usage(e.to_string()),
            _ => CliError::Numerical(e),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn usage<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::Usage(msg.into()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let res = match cli.command {
        Command::GenQkp(a) => run_gen_qkp(a),
        Command::VerifyOrder(a) => run_verify_order(a),
        Command::Solve(a) => run_solve(a),
        Command::Bench(a) => run_bench(a),
        Command::Project(a) => run_project(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::NotConverged(msg)) => {
            eprintln!("numerical failure: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Numerical(e)) => {
            eprintln!("numerical failure: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                eprintln!("  caused by: {s}");
                src = s.source();
            }
            ExitCode::from(2)
        }
    }
}

/// Writes through a sibling temporary file and renames it into place.
fn write_atomic(path: &Path, contents: &str) -> CliResult<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| CliError::Usage(format!("invalid output path {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let io = |e: std::io::Error| CliError::Usage(format!("cannot write {}: {e}", path.display()));
    let mut f = fs::File::create(&tmp).map_err(io)?;
    f.write_all(contents.as_bytes()).map_err(io)?;
    f.sync_all().map_err(io)?;
    fs::rename(&tmp, path).map_err(io)
}

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))
}

/// Shortest representation that round-trips.
fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else {
        format!("{x:e}")
    }
}

fn parse_list<T, F>(s: &str, f: F) -> CliResult<Vec<T>>
where
    F: Fn(&str) -> std::result::Result<T, String>,
{
    let items: Vec<T> = s
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(&f)
        .collect::<std::result::Result<_, _>>()
        .map_err(CliError::Usage)?;
    if items.is_empty() {
        return usage("empty list");
    }
    Ok(items)
}

fn parse_kinds(s: &str) -> CliResult<Vec<RetractionKind>> {
    parse_list(s, |t| t.parse::<RetractionKind>())
}

/// Reads a qkp-v1 file or, failing the header check, a QAPLib file.
fn load_instance(path: &Path, r: Option<usize>) -> CliResult<ProblemInstance> {
    let text = read_text(path)?;
    let inst = if text.trim_start().starts_with("qkp") {
        lift_qkp(&QkpInstance::from_text(&text)?)?
    } else {
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        lift_qap(&parse_qaplib(&text, &name)?)?
    };
    match r {
        Some(0) => usage("--r must be >= 1"),
        Some(r) => Ok(inst.with_rank(r)?),
        None => Ok(inst),
    }
}

fn thread_pool() -> CliResult<rayon::ThreadPool> {
    let threads = match std::env::var("ISECT_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n >= 1)
            .ok_or_else(|| CliError::Usage(format!("ISECT_THREADS must be a positive integer, got '{v}'")))?,
        Err(_) => 1,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start thread pool: {e}")))
}

fn run_gen_qkp(a: GenQkpArgs) -> CliResult<()> {
    if a.n < 2 {
        return usage("--n must be >= 2");
    }
    if !(a.density > 0.0 && a.density <= 1.0) {
        return usage("--density must lie in (0, 1]");
    }
    let inst = gen_qkp(a.n, a.density, a.seed)?;
    write_atomic(&a.out, &inst.to_text())
}

struct KindOrder {
    kind: RetractionKind,
    rows: Vec<(f64, f64, f64)>,
    fit: std::result::Result<(SlopeFit, SlopeFit), Error>,
}

fn run_verify_order(a: VerifyOrderArgs) -> CliResult<()> {
    if !(a.t_min > 0.0 && a.t_min < a.t_max) {
        return usage("need 0 < --t-min < --t-max");
    }
    if a.points < 2 {
        return usage("--points must be >= 2");
    }
    let kinds = parse_kinds(&a.kinds)?;
    let inst = load_instance(&a.instance, a.r)?;
    let pool = thread_pool()?;
    let x = feasible_start(&inst, inst.meta.r, START_SEED)?;
    let m = &inst.manifold;
    let g = m.project_tangent(&x, &gradient(&inst, &x))?.xi;
    let eta = match a.eta_scale {
        EtaScale::Unit => {
            let n = g.norm();
            if !(n > 0.0) {
                return Err(CliError::Numerical(Error::InvalidConfig(
                    "Riemannian gradient vanishes at the start point".into(),
                )));
            }
            &g / n
        }
        EtaScale::Raw => g,
    };
    let grid = isect_core::linalg::logspace(a.t_min, a.t_max, a.points);
    let floor = plateau_floor(&x);
    let results: Vec<std::result::Result<KindOrder, Error>> = pool.install(|| {
        kinds
            .par_iter()
            .map(|&kind| {
                let errs = order_errors(m, kind, &x, &eta, &grid)?;
                let rows = (0..grid.len())
                    .map(|k| (grid[k], errs.total[k], errs.tangential[k]))
                    .collect();
                Ok(KindOrder {
                    kind,
                    rows,
                    fit: errs.fit(floor),
                })
            })
            .collect()
    });

    let mut csv =
        String::from("kind,t,total_error,tangential_error,slope_total,slope_tangential,plateau_excluded_count\n");
    let mut failure = None;
    for res in results {
        let ko = res?;
        for (t, tot, tan) in &ko.rows {
            let _ = writeln!(
                csv,
                "{},{},{},{},,,",
                ko.kind,
                fmt_f64(*t),
                fmt_f64(*tot),
                fmt_f64(*tan)
            );
        }
        let excluded = ko.rows.iter().filter(|r| r.2 <= floor).count();
        let (st, sn) = match &ko.fit {
            Ok((tot, tan)) => (tot.slope, tan.slope),
            Err(_) => (f64::NAN, f64::NAN),
        };
        let _ = writeln!(csv, "{},,,,{},{},{}", ko.kind, fmt_f64(st), fmt_f64(sn), excluded);
        if let Err(e) = ko.fit {
            failure.get_or_insert(e.context(format!("slope fit for {}", ko.kind)));
        }
    }
    write_atomic(&a.out, &csv)?;
    match failure {
        Some(e) => Err(CliError::Numerical(e)),
        None => Ok(()),
    }
}

fn solver_config(kind: RetractionKind, f: &SolverFlags) -> CliResult<OptimizerConfig> {
    let mut cfg = OptimizerConfig::new(kind);
    cfg.grad_tol = f.tol;
    cfg.max_outer = f.max_outer;
    cfg.bb_variant = f.bb.parse::<BbVariant>()?;
    cfg.curvature_rule = f.curvature.parse::<CurvatureRule>()?;
    cfg.validate()?;
    Ok(cfg)
}

fn run_one(inst: &ProblemInstance, cfg: &OptimizerConfig) -> isect_core::Result<SolveReport> {
    let x0 = feasible_start(inst, inst.meta.r, START_SEED)?;
    solve_from(inst, x0, cfg)
}

const REPORT_HEADER: &str =
    "kind,r,outer_iters,total_retraction_iters,mean_retraction_iters,final_objective,reported_objective,grad_norm,converged";

fn report_row(inst: &ProblemInstance, kind: RetractionKind, rep: &SolveReport) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{}",
        kind,
        inst.meta.r,
        rep.outer_iters,
        rep.total_retraction_iters,
        fmt_f64(rep.mean_retraction_iters),
        fmt_f64(rep.final_objective),
        fmt_f64(inst.reported_objective(rep.final_objective)),
        fmt_f64(rep.grad_norm),
        rep.converged
    )
}

fn run_solve(a: SolveArgs) -> CliResult<()> {
    let kind: RetractionKind = a.kind.parse().map_err(CliError::Usage)?;
    let cfg = solver_config(kind, &a.solver)?;
    let inst = load_instance(&a.instance, a.solver.r)?;
    let rep = run_one(&inst, &cfg)?;
    write_atomic(&a.out, &format!("{REPORT_HEADER}\n{}\n", report_row(&inst, kind, &rep)))?;
    if let Some(path) = &a.log {
        let mut csv =
            String::from("iter,step,halvings,objective,reference,grad_norm,retract_tol,retract_iters,residual\n");
        for l in &rep.per_iter_log {
            let _ = writeln!(
                csv,
                "{},{},{},{},{},{},{},{},{}",
                l.iter,
                fmt_f64(l.step),
                l.halvings,
                fmt_f64(l.objective),
                fmt_f64(l.reference),
                fmt_f64(l.grad_norm),
                fmt_f64(l.retract_tol),
                l.retract_iters,
                fmt_f64(l.residual)
            );
        }
        write_atomic(path, &csv)?;
    }
    if let Some(path) = &a.timing_out {
        write_atomic(path, &format!("wall_time\n{}\n", fmt_f64(rep.wall_time)))?;
    }
    if !rep.converged {
        return Err(CliError::NotConverged(format!(
            "{kind} stopped after {} outer iterations with gradient norm {} > {}",
            rep.outer_iters,
            fmt_f64(rep.grad_norm),
            fmt_f64(cfg.grad_tol)
        )));
    }
    Ok(())
}

fn run_bench(a: BenchArgs) -> CliResult<()> {
    if a.repeats == 0 {
        return usage("--repeats must be >= 1");
    }
    let kinds = parse_kinds(&a.kinds)?;
    let paths = parse_list(&a.instances, |t| Ok(PathBuf::from(t)))?;
    let insts = paths
        .iter()
        .map(|p| load_instance(p, a.solver.r))
        .collect::<CliResult<Vec<_>>>()?;
    let cfgs = kinds
        .iter()
        .map(|&k| solver_config(k, &a.solver))
        .collect::<CliResult<Vec<_>>>()?;
    let cells: Vec<(usize, usize, usize)> = (0..insts.len())
        .flat_map(|i| (0..kinds.len()).flat_map(move |k| (0..a.repeats).map(move |rep| (i, k, rep))))
        .collect();
    let pool = thread_pool()?;
    let rows: Vec<(String, f64)> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(i, k, rep)| {
                let label = format!("{},{rep}", paths[i].display());
                match run_one(&insts[i], &cfgs[k]) {
                    Ok(r) => (
                        format!("{label},{},ok", report_row(&insts[i], kinds[k], &r)),
                        r.wall_time,
                    ),
                    Err(e) => (
                        format!("{label},{},,,,,,,,\"{}\"", kinds[k], e.to_string().replace('"', "'")),
                        f64::NAN,
                    ),
                }
            })
            .collect()
    });
    let mut csv = format!("instance,repeat,{REPORT_HEADER},status\n");
    let mut timing = String::from("instance,kind,repeat,wall_time\n");
    for ((row, wall), &(i, k, rep)) in rows.iter().zip(&cells) {
        csv.push_str(row);
        csv.push('\n');
        let _ = writeln!(timing, "{},{},{rep},{}", paths[i].display(), kinds[k], fmt_f64(*wall));
    }
    write_atomic(&a.out, &csv)?;
    if let Some(path) = &a.timing_out {
        write_atomic(path, &timing)?;
    }
    Ok(())
}

fn read_matrix(path: &Path) -> CliResult<Mat> {
    let text = read_text(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| CliError::Usage(format!("{}:{}: {e}", path.display(), ln + 1)))?;
        rows.push(row);
    }
    let ncols = rows.first().map_or(0, Vec::len);
    if ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
        return usage(format!("{}: expected a non-empty rectangular matrix", path.display()));
    }
    Ok(Mat::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

fn run_project(a: ProjectArgs) -> CliResult<()> {
    if !(a.tol > 0.0) || a.maxiter == 0 {
        return usage("--tol must be positive and --maxiter >= 1");
    }
    let v = read_matrix(&a.input_point)?;
    let inst = load_instance(&a.instance, Some(v.ncols()))?;
    inst.manifold.check_dims(&v)?;
    let method = match a.method {
        ProjectMethod::Gwa => DualMethod::Gwa,
        ProjectMethod::GwaNewton => DualMethod::GwaNewton,
    };
    let p = metric_project(&inst.manifold, &v, method, a.tol, a.maxiter, SchurPath::Auto)?;
    let mut csv = String::new();
    for row in p.point.row_iter() {
        let cells: Vec<String> = row.iter().map(|&x| fmt_f64(x)).collect();
        csv.push_str(&cells.join(","));
        csv.push('\n');
    }
    write_atomic(&a.out, &csv)?;
    let res = inst.manifold.combined_residual(&p.point)?;
    eprintln!("{} iterations, combined residual {}", p.iterations, fmt_f64(res));
    Ok(())
}
