mod common;

use common::{aphl_oracle, newton_slra_oracle, rel_err, relaxed_oracle, sphere_rows};
use isect_core::problems::synthetic::{random_manifold, random_near_point};
use isect_core::solvers::metric::{dual_data, gwa_iterate, gwa_newton_direction};
use isect_core::solvers::steps::{aphl_parts, aphl_step, newton_slra_step, relaxed_newton_slra_step};
use isect_core::{Mat, SchurPath};

fn tiny(seed: u64) -> (isect_core::IntersectionManifold, Mat) {
    let n = 6 + (seed % 3) as usize;
    let s = 1 + (seed % 3) as usize;
    let m = 1 + (seed % 2) as usize;
    random_manifold(seed, n, 2, s, m)
}

#[test]
fn newton_slra_matches_dense_kkt() {
    for seed in 0..50 {
        let (m, x) = tiny(seed);
        let r = random_near_point(&m, &x, 0.05, seed + 100);
        let want = newton_slra_oracle(&m, &r);
        for path in [SchurPath::Direct, SchurPath::Smw] {
            let got = newton_slra_step(&m, &r, path).unwrap();
            assert!(
                rel_err(&got, &want) < 1e-10,
                "seed {seed} {path:?}: {}",
                rel_err(&got, &want)
            );
        }
    }
}

#[test]
fn relaxed_step_matches_dense_kkt() {
    for seed in 0..50 {
        let (m, x) = tiny(seed);
        let r = random_near_point(&m, &x, 0.05, seed + 200);
        let got = relaxed_newton_slra_step(&m, &r).unwrap();
        let want = relaxed_oracle(&m, &r);
        assert!(rel_err(&got, &want) < 1e-10, "seed {seed}");
    }
}

#[test]
fn aphl_matches_dense_kkt() {
    for seed in 0..50 {
        let (m, x) = tiny(seed);
        let r = sphere_rows(
            &m,
            &(random_near_point(&m, &x, 0.05, seed + 300) + Mat::from_element(x.nrows(), 2, 1e-3)),
        );
        let got = aphl_step(&m, &r, SchurPath::Direct).unwrap();
        let want = aphl_oracle(&m, &r);
        assert!(rel_err(&got, &want) < 1e-10, "seed {seed}");
    }
}

#[test]
fn aphl_correction_is_row_tangent() {
    let (m, x) = random_manifold(4, 8, 2, 3, 2);
    let r = sphere_rows(&m, &(x + Mat::from_element(8, 2, 1e-2)));
    let parts = aphl_parts(&m, &r, SchurPath::Auto).unwrap();
    for (k, &i) in m.binary_rows().iter().enumerate() {
        assert!(parts.correction.row(i).dot(&parts.row_normals.row(k)).abs() < 1e-10);
    }
}

#[test]
fn schur_paths_agree_on_larger_instances() {
    for seed in 0..50 {
        let n = 14 + (seed % 5) as usize;
        let (m, x) = random_manifold(seed, n, 3, 10, 2);
        let r = random_near_point(&m, &x, 0.02, seed + 400);
        let d = newton_slra_step(&m, &r, SchurPath::Direct).unwrap();
        let s = newton_slra_step(&m, &r, SchurPath::Smw).unwrap();
        assert!(rel_err(&s, &d) < 1e-9, "seed {seed}");

        let (vp, gamma) = dual_data(&m, &r).unwrap();
        let mut theta = Mat::zeros(2, 3);
        for _ in 0..3 {
            theta = gwa_iterate(&m, &vp, &gamma, &theta, SchurPath::Direct).unwrap();
        }
        let gd = gwa_newton_direction(&m, &vp, &gamma, &theta, SchurPath::Direct).unwrap();
        let gs = gwa_newton_direction(&m, &vp, &gamma, &theta, SchurPath::Smw).unwrap();
        assert!(rel_err(&gs, &gd) < 1e-9, "seed {seed}");
    }
}
