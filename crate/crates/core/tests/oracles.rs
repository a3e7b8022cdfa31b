//! Cross-checks against independent implementations: nalgebra for the dense
//! linear algebra, coordinate descent for LASSO, entrywise loops for assembly.

mod common;

use atlas_core::atlas::{self, balance_decomposition, c21, Decomposition};
use atlas_core::linalg::{self, cholesky_solve, jacobi_svd, symmetric_eigen};
use atlas_core::models::{self, GroundTruthSpec, SparseDecomposition, SparsityClass};
use atlas_core::solvers::{ista, ista_with_penalty, tikhonov_solve, IstaConfig, Penalty};
use atlas_core::{analysis, measurement};
use common::*;
use ndarray::{Array1, Array2};
use rand::Rng;

#[test]
fn jacobi_svd_matches_nalgebra() {
    let mut r = rng(1);
    for case in 0..60 {
        let n1 = r.random_range(1..=20);
        let n2 = r.random_range(1..=20);
        let x = gaussian_matrix(n1, n2, &mut r);
        let ours = jacobi_svd(x.view());
        let theirs = to_na(x.view()).svd(false, false).singular_values;
        let smax = theirs[0];
        for k in 0..n1.min(n2) {
            assert!(
                (ours.s[k] - theirs[k]).abs() <= 1e-12 * smax,
                "case {case}: sigma_{k} {} vs {}",
                ours.s[k],
                theirs[k]
            );
        }
        let mut rebuilt = Array2::<f64>::zeros((n1, n2));
        for k in 0..ours.s.len() {
            for i in 0..n1 {
                for j in 0..n2 {
                    rebuilt[[i, j]] += ours.u[[i, k]] * ours.s[k] * ours.v[[j, k]];
                }
            }
        }
        let err = linalg::frobenius((&rebuilt - &x).view());
        assert!(err <= 1e-12 * linalg::frobenius(x.view()), "case {case}: reconstruction {err}");
    }
}

#[test]
fn jacobi_svd_small_singular_values_of_low_rank() {
    let mut r = rng(2);
    let a = gaussian_matrix(12, 2, &mut r);
    let b = gaussian_matrix(2, 30, &mut r);
    let x = a.dot(&b);
    let s = jacobi_svd(x.view()).s;
    assert!(s[2] <= 1e-13 * s[0], "{s}");
}

#[test]
fn schatten_matches_nalgebra_singular_values() {
    let mut r = rng(3);
    for _ in 0..30 {
        let n1 = r.random_range(2..=16);
        let n2 = r.random_range(2..=30);
        let x = gaussian_matrix(n1, n2, &mut r);
        let sv = to_na(x.view()).svd(false, false).singular_values;
        for p in [2.0 / 3.0, 1.0, 2.0] {
            let want = sv.iter().map(|s| s.powf(p)).sum::<f64>().powf(1.0 / p);
            let got = models::schatten_quasi_norm(&x, p).unwrap();
            assert!(rel_diff(got, want) < 1e-10, "p={p}: {got} vs {want}");
        }
        let fro = linalg::frobenius(x.view());
        assert!(rel_diff(models::schatten_quasi_norm(&x, 2.0).unwrap(), fro) < 1e-10);
    }
}

#[test]
fn symmetric_eigen_matches_nalgebra() {
    let mut r = rng(4);
    for _ in 0..30 {
        let n = r.random_range(1..=15);
        let b = gaussian_matrix(n, n, &mut r);
        let a = &b + &b.t();
        let ours = symmetric_eigen(a.view()).unwrap();
        let mut theirs: Vec<f64> = to_na(a.view()).symmetric_eigenvalues().iter().copied().collect();
        theirs.sort_by(|x, y| y.total_cmp(x));
        let scale = theirs.iter().map(|x| x.abs()).fold(0.0, f64::max);
        for (o, t) in ours.values.iter().zip(&theirs) {
            assert!((o - t).abs() <= 1e-12 * scale, "{o} vs {t}");
        }
        // A V = V diag(values)
        let av = a.dot(&ours.vectors);
        let vd = &ours.vectors * &ours.values;
        assert!(linalg::frobenius((&av - &vd).view()) <= 1e-11 * scale.max(1.0));
    }
}

#[test]
fn tikhonov_matches_full_pivot_lu() {
    let mut r = rng(5);
    for _ in 0..50 {
        let m = r.random_range(1..=40);
        let n = r.random_range(1..=16);
        let alpha = 10f64.powf(r.random_range(-3.0..1.0));
        let a = gaussian_matrix(m, n, &mut r);
        let y = gaussian_vector(m, &mut r);
        let ours = tikhonov_solve(a.view(), y.view(), alpha).unwrap();
        let na = to_na(a.view());
        let lhs = na.transpose() * &na + nalgebra::DMatrix::<f64>::identity(n, n) * alpha;
        let rhs = na.transpose() * to_na_vec(y.view());
        let theirs = lhs.full_piv_lu().solve(&rhs).unwrap();
        let diff: f64 = ours.iter().zip(theirs.iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        assert!(diff <= 1e-9 * theirs.norm().max(1e-300), "{diff}");
    }
}

#[test]
fn cholesky_solve_matches_nalgebra() {
    let mut r = rng(6);
    for _ in 0..30 {
        let n = r.random_range(1..=12);
        let b = gaussian_matrix(n + 3, n, &mut r);
        let a = b.t().dot(&b) + Array2::<f64>::eye(n) * 0.1;
        let rhs = gaussian_vector(n, &mut r);
        let ours = cholesky_solve(a.view(), rhs.view()).unwrap();
        let theirs = to_na(a.view()).cholesky().unwrap().solve(&to_na_vec(rhs.view()));
        for (o, t) in ours.iter().zip(theirs.iter()) {
            assert!((o - t).abs() <= 1e-9 * theirs.amax().max(1.0));
        }
    }
}

#[test]
fn spectral_norm_estimate_is_close_and_not_above() {
    let mut r = rng(7);
    for _ in 0..30 {
        let a = gaussian_matrix(r.random_range(2..=40), r.random_range(2..=20), &mut r);
        let truth = to_na(a.view()).svd(false, false).singular_values[0].powi(2);
        let est = linalg::spectral_norm_sq(a.view(), 20, 1e-8);
        assert!(est <= truth * (1.0 + 1e-12));
        assert!(est >= 0.5 * truth, "{est} vs {truth}");
    }
}

#[test]
fn ista_matches_coordinate_descent() {
    let mut r = rng(8);
    let cfg = IstaConfig {
        max_iters: 200_000,
        tol: 1e-14,
        ..Default::default()
    };
    for case in 0..50 {
        let m = r.random_range(5..=60);
        let n = r.random_range(2..=20);
        let a = gaussian_matrix(m, n, &mut r) / (m as f64).sqrt();
        let y = gaussian_vector(m, &mut r);
        let beta = r.random_range(0.01..1.0);
        let v0 = Array1::zeros(n);
        let ours = ista(a.view(), y.view(), v0.view(), beta, &cfg).unwrap();
        let oracle = lasso_cd(&a, &y, beta);
        let (fo, fc) = (lasso_value(&a, &y, &ours, beta), lasso_value(&a, &y, &oracle, beta));
        assert!((fo - fc).abs() <= 1e-6, "case {case}: ista {fo} vs cd {fc}");
    }
}

#[test]
fn ista_trace_is_monotone_and_solution_is_stationary() {
    let mut r = rng(9);
    for _ in 0..30 {
        let m = r.random_range(5..=50);
        let n = r.random_range(2..=20);
        let a = gaussian_matrix(m, n, &mut r);
        let y = gaussian_vector(m, &mut r);
        let beta = r.random_range(0.05..3.0);
        let cfg = IstaConfig {
            max_iters: 100_000,
            tol: 1e-13,
            ..Default::default()
        };
        let rep = ista_with_penalty(a.view(), y.view(), Array1::zeros(n).view(), beta, Penalty::L1, &cfg, true)
            .unwrap();
        for w in rep.objective_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12 * (1.0 + w[0].abs()), "{} -> {}", w[0], w[1]);
        }
        let v = &rep.solution;
        let grad = a.t().dot(&(a.dot(v) - &y)) * 2.0;
        let scale = a.t().dot(&y).iter().fold(1.0f64, |acc, x| acc.max(x.abs()));
        for j in 0..n {
            if v[j] != 0.0 {
                assert!((grad[j] + beta * v[j].signum()).abs() <= 1e-6 * scale, "active {j}");
            } else {
                assert!(grad[j].abs() <= beta + 1e-6 * scale, "inactive {j}");
            }
        }
    }
}

#[test]
fn assembly_matches_entrywise_sum() {
    let mut r = rng(10);
    for _ in 0..40 {
        let n1 = r.random_range(1..=20);
        let n2 = r.random_range(1..=20);
        let rank = r.random_range(1..=4);
        let sd = SparseDecomposition {
            u_factors: (0..rank).map(|_| gaussian_vector(n1, &mut r)).collect(),
            v_factors: (0..rank).map(|_| gaussian_vector(n2, &mut r)).collect(),
            sigma: gaussian_vector(rank, &mut r),
        };
        let x = models::assemble_matrix(&sd).unwrap();
        for a in 0..n1 {
            for b in 0..n2 {
                let mut want = 0.0;
                for k in 0..rank {
                    want += sd.sigma[k] * sd.u_factors[k][a] * sd.v_factors[k][b];
                }
                assert!((x[[a, b]] - want).abs() <= 1e-12 * want.abs().max(1.0));
            }
        }
    }
}

#[test]
fn operator_matches_explicit_frames() {
    let mut r = rng(11);
    let (m, n1, n2) = (7, 3, 5);
    let op = operator(m, n1, n2, 99);
    let x = gaussian_matrix(n1, n2, &mut r);
    let y = op.apply(&x).unwrap();
    let design = op.design();
    for i in 0..m {
        let mut want = 0.0;
        for a in 0..n1 {
            for b in 0..n2 {
                want += design[[i, a * n2 + b]] * x[[a, b]];
            }
        }
        want /= (m as f64).sqrt();
        assert!((y[i] - want).abs() < 1e-12 * want.abs().max(1.0));
    }
}

#[test]
fn gramian_constants_match_nalgebra() {
    let mut r = rng(12);
    for _ in 0..20 {
        let n1 = r.random_range(4..=16);
        let rank = r.random_range(1..=4);
        let us: Vec<Array1<f64>> = (0..rank)
            .map(|_| {
                let u = gaussian_vector(n1, &mut r);
                let n = linalg::norm2(u.view());
                u / n
            })
            .collect();
        let (c_u, big_c) = models::gramian_constants(&us).unwrap();
        let g = nalgebra::DMatrix::from_fn(rank, rank, |i, j| us[i].dot(&us[j]));
        let ev = g.symmetric_eigenvalues();
        assert!(rel_diff(c_u, 1.0 / ev.min()) < 1e-10);
        assert!(rel_diff(big_c, ev.max()) < 1e-10);
    }
}

#[test]
fn c21_is_minimum_of_balancing_function() {
    // golden-section search on f(l) = l^2 + 1/l
    let f = |l: f64| l * l + 1.0 / l;
    let (mut a, mut b) = (0.01f64, 10.0f64);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if f(c) < f(d) {
            b = d;
        } else {
            a = c;
        }
    }
    let min = f(0.5 * (a + b));
    assert!((min - c21()).abs() < 1e-12, "{min} vs {}", c21());
    assert!((c21() - 1.88988).abs() < 1e-5);
}

#[test]
fn balanced_ground_truth_objective_equals_misfit_rhs() {
    let mut r = rng(13);
    for case in 0..40 {
        let n1 = r.random_range(2..=16);
        let n2 = r.random_range(5..=100);
        let rank = r.random_range(1..=n1.min(5));
        let s = r.random_range(1..=n2.min(10));
        let class = if r.random::<bool>() {
            SparsityClass::ExactSparse
        } else {
            SparsityClass::EffectivelySparse
        };
        let spec = GroundTruthSpec {
            class,
            ..GroundTruthSpec::right_sparse(n1, n2, rank, s, r.random_range(0.5..20.0))
        };
        let gt = models::sample_ground_truth(&spec, &mut r).unwrap();
        let m = r.random_range(10..=80);
        let op = operator(m, n1, n2, 1000 + case);
        let clean = op.apply(&gt.matrix).unwrap();
        let noisy = measurement::add_noise(&clean, r.random_range(0.0..0.5), 1.0, &mut r).unwrap();
        let alpha = 10f64.powf(r.random_range(-2.0..1.0));
        let beta = 10f64.powf(r.random_range(-2.0..1.0));
        let balanced = balance_decomposition(&Decomposition::from_sparse(&gt.decomposition), alpha, beta).unwrap();
        let j = atlas::objective(&op, &noisy.y, &balanced, alpha, beta).unwrap();
        let rhs = analysis::misfit_bound_rhs(&gt, alpha, beta, noisy.noise_norm);
        assert!(rel_diff(j, rhs) < 1e-10, "case {case}: {j} vs {rhs}");
    }
}

#[test]
fn theorem_bound_second_evaluation_path() {
    let p = analysis::BoundParams {
        s: 10.0,
        rank: 1,
        gamma: 1.0,
        c: 1.0,
        delta: 0.0,
        delta_source: analysis::DeltaSource::UserSupplied,
        c_u: 1.0,
        noise_norm: 0.0,
        schatten_23: 10.0,
    };
    // exponent form: 10^{(1/3 + ln C21 / ln 10)/2 + 1/3}
    let by_logs = ((10f64.ln() / 3.0 + c21().ln()) / 2.0 + 10f64.ln() / 3.0).exp();
    assert!((analysis::theorem_bound(&p, 1.0, 1.0) - by_logs).abs() < 1e-12);
    assert!((by_logs - 4.3476).abs() < 1e-3);
}

#[test]
fn single_component_schatten_identity() {
    // orthonormal factors with sigma as singular values
    let mut r = rng(14);
    for _ in 0..20 {
        let n1 = r.random_range(3..=10);
        let n2 = r.random_range(10..=40);
        let rank = r.random_range(1..=3);
        let s = r.random_range(rank..=n2.min(8));
        let spec = GroundTruthSpec {
            common_support: true,
            orthonormalize: true,
            orthonormalize_left: true,
            ..GroundTruthSpec::right_sparse(n1, n2, rank, s, 5.0)
        };
        let gt = models::sample_ground_truth(&spec, &mut r).unwrap();
        for p in [2.0 / 3.0, 1.0] {
            let lhs: f64 = gt.decomposition.sigma.iter().map(|s| s.powf(p)).sum();
            let rhs = models::schatten_quasi_norm(&gt.matrix, p).unwrap().powf(p);
            assert!(rel_diff(lhs, rhs) < 1e-8, "{lhs} vs {rhs}");
        }
    }
}
