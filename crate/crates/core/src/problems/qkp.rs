use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

use super::{
    check_full_row_rank, embed_objective, initial_rank, lift_constraints, ProblemInstance, ProblemKind, ProblemMeta,
};
use crate::error::{Error, Result};
use crate::linalg::{Mat, Vector};
use crate::manifold::IntersectionManifold;

/// Quadratic knapsack instance `max x^T Q x  s.t.  a^T x <= tau, x binary`.
#[derive(Debug, Clone, PartialEq)]
pub struct QkpInstance {
    pub n: usize,
    /// Symmetric, entries in `{0} ∪ {1..100}`.
    pub q: Vec<Vec<u32>>,
    /// Weights in `{1..50}`.
    pub a: Vec<u32>,
    pub tau: f64,
    pub density: f64,
    pub seed: u64,
    /// Number of Bernoulli draws that fired while sampling `Q`.
    pub fired: usize,
}

fn capacity(a: &[u32]) -> f64 {
    0.9 * a.iter().map(|&w| w as f64).sum::<f64>()
}

/// Samples an instance with a Xoshiro256++ stream seeded through SplitMix64.
///
/// Stream order: for each `i <= j` of the upper triangle in row-major order,
/// one Bernoulli(`density`) draw followed, when it fires, by a uniform value
/// in `1..=100`; then the `n` weights in `1..=50`.
pub fn gen_qkp(n: usize, density: f64, seed: u64) -> Result<QkpInstance> {
    if n < 2 {
        return Err(Error::InvalidConfig(format!("QKP needs n >= 2, got {n}")));
    }
    if !(density > 0.0 && density <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "density must lie in (0, 1], got {density}"
        )));
    }
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let mut q = vec![vec![0u32; n]; n];
    let mut fired = 0;
    for i in 0..n {
        for j in i..n {
            if rng.gen_bool(density) {
                fired += 1;
                let v = rng.gen_range(1..=100u32);
                q[i][j] = v;
                q[j][i] = v;
            }
        }
    }
    let a: Vec<u32> = (0..n).map(|_| rng.gen_range(1..=50u32)).collect();
    let tau = capacity(&a);
    Ok(QkpInstance {
        n,
        q,
        a,
        tau,
        density,
        seed,
        fired,
    })
}

impl QkpInstance {
    /// `qkp v1` text form: header, upper triangle of `Q` one row per line,
    /// the weights, then the capacity.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "qkp v1 {} {} {}", self.n, self.density, self.seed);
        for i in 0..self.n {
            let row: Vec<String> = (i..self.n).map(|j| self.q[i][j].to_string()).collect();
            let _ = writeln!(out, "{}", row.join(" "));
        }
        let a: Vec<String> = self.a.iter().map(|w| w.to_string()).collect();
        let _ = writeln!(out, "{}", a.join(" "));
        let _ = writeln!(out, "{}", self.tau);
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |msg: &str| Error::MalformedFile(format!("qkp v1: {msg}"));
        let mut tokens = text.split_whitespace();
        if tokens.next() != Some("qkp") || tokens.next() != Some("v1") {
            return Err(bad("missing 'qkp v1' header"));
        }
        let mut next = |what: &str| tokens.next().ok_or_else(|| bad(&format!("truncated before {what}")));
        let n: usize = next("n")?.parse().map_err(|_| bad("n"))?;
        let density: f64 = next("density")?.parse().map_err(|_| bad("density"))?;
        let seed: u64 = next("seed")?.parse().map_err(|_| bad("seed"))?;
        if n < 2 {
            return Err(bad("n < 2"));
        }
        let mut q = vec![vec![0u32; n]; n];
        let mut fired = 0;
        for i in 0..n {
            for j in i..n {
                let v: u32 = next("Q")?.parse().map_err(|_| bad("Q entry"))?;
                if v > 100 {
                    return Err(bad("Q entry above 100"));
                }
                fired += usize::from(v > 0);
                q[i][j] = v;
                q[j][i] = v;
            }
        }
        let mut a = Vec::with_capacity(n);
        for _ in 0..n {
            let w: u32 = next("a")?.parse().map_err(|_| bad("weight"))?;
            if !(1..=50).contains(&w) {
                return Err(bad("weight outside 1..=50"));
            }
            a.push(w);
        }
        let tau: f64 = next("tau")?.parse().map_err(|_| bad("tau"))?;
        if tokens.next().is_some() {
            return Err(bad("trailing tokens"));
        }
        if tau != capacity(&a) {
            return Err(bad("capacity is not 0.9 * sum(a)"));
        }
        Ok(QkpInstance {
            n,
            q,
            a,
            tau,
            density,
            seed,
            fired,
        })
    }

    pub fn nonzero_density(&self) -> f64 {
        let n = self.n;
        let nz = (0..n)
            .flat_map(|i| (i..n).map(move |j| (i, j)))
            .filter(|&(i, j)| self.q[i][j] > 0)
            .count();
        nz as f64 / (n * (n + 1) / 2) as f64
    }
}

/// Lifts `max x^T Q x, a^T x <= tau` to `M_r` with `N = n + 2`,
/// `A' = [a^T 1 0; a^T 0 -1]`, `b' = (tau, tau)`. The objective is negated
/// so the lifted problem is a minimization.
pub fn lift_qkp(inst: &QkpInstance) -> Result<ProblemInstance> {
    let n = inst.n;
    let a = Mat::from_iterator(1, n, inst.a.iter().map(|&w| w as f64));
    let (a_lift, b_lift) = lift_constraints(&a, &Vector::from_element(1, inst.tau));
    check_full_row_rank(&a_lift)?;
    let r = initial_rank(n);
    let manifold = IntersectionManifold::new(a_lift, b_lift, (0..n).collect(), r)?;
    let q = Mat::from_fn(n, n, |i, j| -(inst.q[i][j] as f64));
    Ok(ProblemInstance {
        q_lift: embed_objective(&q, n + 2),
        c_lift: Vector::zeros(n + 2),
        manifold,
        meta: ProblemMeta {
            kind: ProblemKind::Qkp,
            name: format!("qkp-n{}-d{}-s{}", n, inst.density, inst.seed),
            seed: Some(inst.seed),
            n,
            p: None,
            r,
            negated: true,
            capacity: Some(inst.tau),
        },
    })
}
