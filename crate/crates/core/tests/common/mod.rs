//! Dense brute-force oracles that never touch the Schur machinery.
#![allow(dead_code)]

use isect_core::{IntersectionManifold, Mat, Vector};

/// Closest point on the sphere `|y - e1/2| = 1/2`, row by row.
pub fn sphere_rows(m: &IntersectionManifold, r: &Mat) -> Mat {
    let mut out = r.clone();
    for &i in m.binary_rows() {
        let mut d = r.row(i).into_owned();
        d[0] -= 0.5;
        let scale = 0.5 / d.norm();
        let mut y = d * scale;
        y[0] += 0.5;
        out.set_row(i, &y);
    }
    out
}

/// `2 y_i - e1` for the binary rows of `y`.
pub fn normals(m: &IntersectionManifold, y: &Mat) -> Vec<Vec<f64>> {
    m.binary_rows()
        .iter()
        .map(|&i| {
            let mut c: Vec<f64> = y.row(i).iter().map(|v| 2.0 * v).collect();
            c[0] -= 1.0;
            c
        })
        .collect()
}

fn idx(n: usize, i: usize, j: usize) -> usize {
    i + j * n
}

/// Rows of the affine constraint `A' X = b' e1^T` acting on `vec(X)`.
fn affine_rows(m: &IntersectionManifold, n: usize, r: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let a = m.affine().a();
    let b = m.affine().b();
    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    for j in 0..r {
        for p in 0..a.nrows() {
            let mut row = vec![0.0; n * r];
            for i in 0..n {
                row[idx(n, i, j)] = a[(p, i)];
            }
            rows.push(row);
            rhs.push(if j == 0 { b[p] } else { 0.0 });
        }
    }
    (rows, rhs)
}

/// `argmin |X - target|^2` subject to `J vec(X) = h`, from the full KKT system.
fn kkt_min_distance(target: &Mat, rows: &[Vec<f64>], h: &[f64]) -> Mat {
    let (n, r) = target.shape();
    let d = n * r;
    let k = rows.len();
    let mut kkt = Mat::zeros(d + k, d + k);
    let mut rhs = Vector::zeros(d + k);
    for p in 0..d {
        kkt[(p, p)] = 1.0;
        rhs[p] = target.as_slice()[p];
    }
    for (q, row) in rows.iter().enumerate() {
        for p in 0..d {
            kkt[(d + q, p)] = row[p];
            kkt[(p, d + q)] = row[p];
        }
        rhs[d + q] = h[q];
    }
    let sol = kkt.lu().solve(&rhs).expect("KKT system nonsingular");
    Mat::from_column_slice(n, r, &sol.as_slice()[..d])
}

/// NewtonSLRA step: nearest point to `R` on `M1` intersected with the
/// affine tangent slice of `M2` at the sphere projection of `R`.
pub fn newton_slra_oracle(m: &IntersectionManifold, r: &Mat) -> Mat {
    let (n, rk) = r.shape();
    let rt = sphere_rows(m, r);
    let (mut rows, mut h) = affine_rows(m, n, rk);
    for (c, &i) in normals(m, &rt).iter().zip(m.binary_rows()) {
        let mut row = vec![0.0; n * rk];
        let mut val = 0.0;
        for j in 0..rk {
            row[idx(n, i, j)] = c[j];
            val += c[j] * rt[(i, j)];
        }
        rows.push(row);
        h.push(val);
    }
    kkt_min_distance(r, &rows, &h)
}

/// Relaxed step: the tangent slice is replaced by `<R - R~, X - R~> = 0`.
pub fn relaxed_oracle(m: &IntersectionManifold, r: &Mat) -> Mat {
    let (n, rk) = r.shape();
    let rt = sphere_rows(m, r);
    let d = r - &rt;
    let (mut rows, mut h) = affine_rows(m, n, rk);
    rows.push(d.as_slice().to_vec());
    h.push(d.dot(&rt));
    kkt_min_distance(r, &rows, &h)
}

/// APHL step: least-norm correction `Z` with `A'(R - Z) = b'e1^T` and
/// `<Z_i, c_i(R)> = 0`, followed by the sphere projection.
pub fn aphl_oracle(m: &IntersectionManifold, r: &Mat) -> Mat {
    let (n, rk) = r.shape();
    let a = m.affine().a();
    let e = a * r - m.target();
    let (mut rows, _) = affine_rows(m, n, rk);
    let mut h: Vec<f64> = (0..rk)
        .flat_map(|j| (0..a.nrows()).map(move |p| (j, p)))
        .map(|(j, p)| e[(p, j)])
        .collect();
    for (c, &i) in normals(m, r).iter().zip(m.binary_rows()) {
        let mut row = vec![0.0; n * rk];
        for j in 0..rk {
            row[idx(n, i, j)] = c[j];
        }
        rows.push(row);
        h.push(0.0);
    }
    let z = kkt_min_distance(&Mat::zeros(n, rk), &rows, &h);
    sphere_rows(m, &(r - z))
}

pub fn rel_err(got: &Mat, want: &Mat) -> f64 {
    (got - want).norm() / want.norm().max(1.0)
}
