use super::{
    check_full_row_rank, embed_objective, initial_rank, lift_constraints, ProblemInstance, ProblemKind, ProblemMeta,
};
use crate::error::{Error, Result};
use crate::linalg::{Mat, Vector};
use crate::manifold::IntersectionManifold;

/// Largest asymmetry that is silently symmetrized on input.
pub const SYMMETRIZE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct QapInstance {
    pub p: usize,
    pub w: Mat,
    pub d: Mat,
    pub name: String,
}

fn symmetrize(m: Mat, name: &'static str) -> Result<Mat> {
    let deviation = (&m - m.transpose()).amax();
    if deviation > SYMMETRIZE_TOL {
        return Err(Error::AsymmetricMatrix { name, deviation });
    }
    Ok((&m + m.transpose()) * 0.5)
}

/// Parses the flat QAPLib layout: `p`, then `p^2` entries of `W`, then `p^2`
/// of `D`, all whitespace separated.
pub fn parse_qaplib(text: &str, name: &str) -> Result<QapInstance> {
    let tokens: Vec<&str> = text.split_whitespace().collect();
    let p: usize = tokens
        .first()
        .ok_or_else(|| Error::MalformedFile("empty file".into()))?
        .parse()
        .map_err(|_| Error::MalformedFile(format!("bad size token '{}'", tokens[0])))?;
    if p < 2 {
        return Err(Error::MalformedFile(format!("size must be >= 2, got {p}")));
    }
    let want = 1 + 2 * p * p;
    if tokens.len() != want {
        return Err(Error::MalformedFile(format!(
            "expected {want} tokens for p = {p}, found {}",
            tokens.len()
        )));
    }
    let vals = tokens[1..]
        .iter()
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| Error::MalformedFile(format!("bad number '{t}'")))
        })
        .collect::<Result<Vec<f64>>>()?;
    let w = Mat::from_row_slice(p, p, &vals[..p * p]);
    let d = Mat::from_row_slice(p, p, &vals[p * p..]);
    Ok(QapInstance {
        p,
        w: symmetrize(w, "W")?,
        d: symmetrize(d, "D")?,
        name: name.to_string(),
    })
}

/// Assignment constraints `[e^T (x) I; I (x) e^T]` acting on `vec(Y)`.
pub fn assignment_matrix(p: usize) -> Mat {
    let mut a = Mat::zeros(2 * p, p * p);
    for i in 0..p {
        for j in 0..p {
            let col = i + j * p;
            a[(i, col)] = 1.0;
            a[(p + j, col)] = 1.0;
        }
    }
    a
}

/// Lifts `min <Y, W Y D>` over permutations: `n = p^2`, `Q = D (x) W`,
/// `N = n + 4p`, `m = 4p`, all of `vec(Y)` binary.
pub fn lift_qap(inst: &QapInstance) -> Result<ProblemInstance> {
    let p = inst.p;
    let n = p * p;
    let a = assignment_matrix(p);
    let (a_lift, b_lift) = lift_constraints(&a, &Vector::from_element(2 * p, 1.0));
    check_full_row_rank(&a_lift)?;
    let r = initial_rank(n);
    let manifold = IntersectionManifold::new(a_lift, b_lift, (0..n).collect(), r)?;
    let q = inst.d.kronecker(&inst.w);
    Ok(ProblemInstance {
        q_lift: embed_objective(&q, n + 4 * p),
        c_lift: Vector::zeros(n + 4 * p),
        manifold,
        meta: ProblemMeta {
            kind: ProblemKind::Qap,
            name: inst.name.clone(),
            seed: None,
            n,
            p: Some(p),
            r,
            negated: false,
            capacity: None,
        },
    })
}
