mod common;

use atlas_core::analysis::{self, BoundParams, DeltaSource};
use atlas_core::atlas::{self, atlas_run, balanced_rescale, Decomposition, ProximalConfig, SolverConfig};
use atlas_core::linalg::{self, norm1, norm2};
use atlas_core::measurement::{self, sample_operator, Ensemble};
use atlas_core::models::{self, GroundTruthSpec, SparsityClass};
use atlas_core::solvers::soft_threshold;
use common::*;
use ndarray::Array1;
use proptest::prelude::*;

fn vec_strategy(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0f64..10.0, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn soft_threshold_is_nonexpansive(
        (a, b) in (1usize..30).prop_flat_map(|n| (vec_strategy(n), vec_strategy(n))),
        beta in 0.0f64..5.0,
    ) {
        let a = Array1::from(a);
        let b = Array1::from(b);
        let sa = soft_threshold(&a, beta).unwrap();
        let sb = soft_threshold(&b, beta).unwrap();
        prop_assert!(norm2((&sa - &sb).view()) <= norm2((&a - &b).view()) + 1e-12);
        prop_assert_eq!(soft_threshold(&a, 0.0).unwrap(), a);
    }

    #[test]
    fn apply_is_linear_and_adjoint(seed in any::<u64>(), m in 1usize..40, n1 in 1usize..8, n2 in 1usize..12,
                                   ca in -3.0f64..3.0, cb in -3.0f64..3.0) {
        let mut r = rng(seed);
        let ensemble = if seed % 2 == 0 { Ensemble::Gaussian } else { Ensemble::Rademacher };
        let op = sample_operator(m, n1, n2, ensemble, &mut r).unwrap();
        let x = gaussian_matrix(n1, n2, &mut r);
        let z = gaussian_matrix(n1, n2, &mut r);
        let y = gaussian_vector(m, &mut r);
        let lhs = op.apply(&(&x * ca + &z * cb)).unwrap();
        let rhs = op.apply(&x).unwrap() * ca + op.apply(&z).unwrap() * cb;
        prop_assert!(norm2((&lhs - &rhs).view()) <= 1e-12 * norm2(rhs.view()).max(1.0));
        let left = op.apply(&x).unwrap().dot(&y);
        let right = linalg::frobenius_dot(x.view(), op.adjoint(&y).unwrap().view());
        prop_assert!((left - right).abs() <= 1e-10 * left.abs().max(right.abs()).max(1.0));
    }

    #[test]
    fn partials_agree_with_rank_one_apply(seed in any::<u64>(), m in 1usize..40, n1 in 1usize..8, n2 in 1usize..12) {
        let mut r = rng(seed);
        let op = sample_operator(m, n1, n2, Ensemble::Gaussian, &mut r).unwrap();
        let u = gaussian_vector(n1, &mut r);
        let v = gaussian_vector(n2, &mut r);
        let outer = ndarray::Array2::from_shape_fn((n1, n2), |(a, b)| u[a] * v[b]);
        let direct = op.apply(&outer).unwrap();
        let via_u = op.partial_in_u(&v).unwrap().dot(&u);
        let via_v = op.partial_in_v(&u).unwrap().dot(&v);
        let scale = norm2(direct.view()).max(1e-300);
        prop_assert!(norm2((&via_u - &direct).view()) <= 1e-12 * scale);
        prop_assert!(norm2((&via_v - &direct).view()) <= 1e-12 * scale);
    }

    #[test]
    fn data_term_is_gauge_invariant(seed in any::<u64>(), lambda in prop_oneof![0.01f64..100.0, -100.0f64..-0.01]) {
        let mut r = rng(seed);
        let (n1, n2, rank) = (4, 9, 2);
        let op = sample_operator(20, n1, n2, Ensemble::Gaussian, &mut r).unwrap();
        let y = gaussian_vector(20, &mut r);
        let d = Decomposition {
            u: (0..rank).map(|_| gaussian_vector(n1, &mut r)).collect(),
            v: (0..rank).map(|_| gaussian_vector(n2, &mut r)).collect(),
        };
        let mut scaled = d.clone();
        scaled.u[0] = &scaled.u[0] * lambda;
        scaled.v[0] = &scaled.v[0] / lambda;
        let a = atlas::objective(&op, &y, &d, 0.0, 0.0).unwrap();
        let b = atlas::objective(&op, &y, &scaled, 0.0, 0.0).unwrap();
        prop_assert!((a - b).abs() <= 1e-10 * a.max(1.0));
    }

    #[test]
    fn balancing_is_idempotent_and_optimal(seed in any::<u64>(), alpha in 1e-3f64..10.0, beta in 1e-3f64..10.0) {
        let mut r = rng(seed);
        let u = gaussian_vector(6, &mut r);
        let v = gaussian_vector(11, &mut r);
        let (u1, v1, _) = balanced_rescale(&u, &v, alpha, beta).unwrap();
        let (u2, v2, l2) = balanced_rescale(&u1, &v1, alpha, beta).unwrap();
        prop_assert!((l2 - 1.0).abs() < 1e-12);
        prop_assert!(norm2((&u2 - &u1).view()) <= 1e-12 * norm2(u1.view()));
        prop_assert!(norm2((&v2 - &v1).view()) <= 1e-12 * norm2(v1.view()));
        let (a, b) = (u.dot(&u), norm1(v.view()));
        let pen = alpha * u1.dot(&u1) + beta * norm1(v1.view());
        let closed = atlas::c21() * (alpha * a).cbrt() * (beta * b).powf(2.0 / 3.0);
        prop_assert!(rel_diff(pen, closed) < 1e-10);
    }

    #[test]
    fn relative_error_is_scale_equivariant(seed in any::<u64>(), c in prop_oneof![0.01f64..100.0, -100.0f64..-0.01]) {
        let mut r = rng(seed);
        let x = gaussian_matrix(5, 7, &mut r);
        let z = gaussian_matrix(5, 7, &mut r);
        let a = analysis::relative_error(&x, &z).unwrap();
        let b = analysis::relative_error(&(&x * c), &(&z * c)).unwrap();
        prop_assert!(rel_diff(a, b) < 1e-12);
        prop_assert!(a >= 0.0);
    }

    #[test]
    fn bounds_are_monotone(
        s in 1.0f64..50.0, rank in 1usize..6, c_u in 1.0f64..10.0, x23 in 0.1f64..100.0,
        eta in 0.0f64..5.0, delta in 0.0f64..0.9, alpha in 1e-3f64..5.0, beta in 1e-3f64..5.0, bump in 1.0f64..3.0,
    ) {
        let p = BoundParams { s, rank, gamma: 1.0, c: 1.0, delta, delta_source: DeltaSource::UserSupplied,
                              c_u, noise_norm: eta, schatten_23: x23 };
        let t = analysis::theorem_bound(&p, alpha, beta);
        let k = analysis::corollary_bound(&p);
        prop_assert!(t >= 0.0 && k >= 0.0);
        prop_assert!(analysis::theorem_bound(&p, alpha * bump, beta) >= t);
        prop_assert!(analysis::theorem_bound(&p, alpha, beta * bump) >= t);
        let more_noise = BoundParams { noise_norm: eta * bump + 0.1, ..p };
        prop_assert!(analysis::theorem_bound(&more_noise, alpha, beta) >= t);
        prop_assert!(analysis::corollary_bound(&more_noise) >= k);
        let more_delta = BoundParams { delta: (delta * bump).min(0.99), ..p };
        prop_assert!(analysis::theorem_bound(&more_delta, alpha, beta) >= t);
        prop_assert!(analysis::corollary_bound(&more_delta) >= k);
    }

    #[test]
    fn ground_truth_hits_target_norm(seed in any::<u64>(), n1 in 2usize..12, n2 in 4usize..40, target in 0.1f64..50.0,
                                     effective in any::<bool>()) {
        let mut r = rng(seed);
        let rank = 1 + (seed as usize % n1.min(3));
        let s = 1 + (seed as usize / 7) % n2;
        let class = if effective { SparsityClass::EffectivelySparse } else { SparsityClass::ExactSparse };
        let spec = GroundTruthSpec { class, ..GroundTruthSpec::right_sparse(n1, n2, rank, s, target) };
        let gt = models::sample_ground_truth(&spec, &mut r).unwrap();
        prop_assert!(rel_diff(linalg::frobenius(gt.matrix.view()), target) < 1e-10);
        for v in &gt.decomposition.v_factors {
            prop_assert!((norm2(v.view()) - 1.0).abs() < 1e-12);
            if effective {
                prop_assert!(norm1(v.view()) <= (s as f64).sqrt() * norm2(v.view()) * (1.0 + 1e-12));
            } else {
                prop_assert!(v.iter().filter(|x| **x != 0.0).count() <= s);
            }
        }
    }

    #[test]
    fn capped_sampling_respects_gamma(seed in any::<u64>(), gamma in 5.0f64..50.0) {
        let mut r = rng(seed);
        let spec = GroundTruthSpec { gamma_cap: Some(gamma), ..GroundTruthSpec::right_sparse(6, 20, 3, 4, 5.0) };
        let gt = models::sample_ground_truth(&spec, &mut r).unwrap();
        prop_assert!(norm2(gt.decomposition.sigma.view()) <= gamma * (1.0 + 1e-12));
    }

    #[test]
    fn noise_has_exact_norm(seed in any::<u64>(), m in 1usize..50, ratio in 0.0f64..2.0, signal in 0.1f64..20.0) {
        let mut r = rng(seed);
        let clean = gaussian_vector(m, &mut r);
        let noisy = measurement::add_noise(&clean, ratio, signal, &mut r).unwrap();
        prop_assert!((noisy.noise_norm - ratio * signal).abs() <= 1e-12 * (ratio * signal).max(1.0));
        prop_assert!((norm2(noisy.noise.view()) - ratio * signal).abs() <= 1e-10 * (ratio * signal).max(1.0));
        prop_assert!(norm2((&noisy.y - &clean - &noisy.noise).view()) <= 1e-12 * norm2(noisy.y.view()).max(1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn atlas_descends_and_stays_coercive(seed in any::<u64>(), alpha in 0.05f64..2.0, beta in 0.05f64..2.0,
                                         proximal in any::<bool>()) {
        let mut r = rng(seed);
        let (n1, n2, rank, m) = (5, 20, 2, 50);
        let op = sample_operator(m, n1, n2, Ensemble::Gaussian, &mut r).unwrap();
        let gt = models::sample_ground_truth(&GroundTruthSpec::right_sparse(n1, n2, rank, 4, 5.0), &mut r).unwrap();
        let clean = op.apply(&gt.matrix).unwrap();
        let y = measurement::add_noise(&clean, 0.1, 5.0, &mut r).unwrap().y;
        let init = atlas::init_leading_singular(&op, &y, rank).unwrap().decomposition;
        let mut cfg = SolverConfig { max_outer: 60, ..SolverConfig::new(alpha, beta, rank) };
        if proximal {
            cfg.proximal = Some(ProximalConfig::uniform(1.0, 1.0));
        }
        let rep = atlas_run(&op, &y, &cfg, &init).unwrap();
        let j0 = rep.objective_trace[0];
        for w in rep.objective_trace.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-10 * (1.0 + j0.abs()), "{} -> {}", w[0], w[1]);
        }
        for (u, v) in rep.decomposition.u.iter().zip(&rep.decomposition.v) {
            prop_assert!(u.dot(u) <= j0 / alpha * (1.0 + 1e-12));
            prop_assert!(norm1(v.view()) <= j0 / beta * (1.0 + 1e-12));
            prop_assert!(u.iter().chain(v.iter()).all(|x| x.is_finite()));
        }
    }
}

#[test]
fn sparse_samplers_over_ten_thousand_draws() {
    let mut r = rng(77);
    for i in 0..10_000 {
        let n = 5 + i % 96;
        let s = 1 + (i / 3) % n;
        let v = models::sample_sparse_unit_vector(n, s, &mut r).unwrap();
        assert!(v.iter().filter(|x| **x != 0.0).count() <= s);
        let w = models::sample_effectively_sparse_unit_vector(n, s, &mut r).unwrap();
        assert!(norm1(w.view()) <= (s as f64).sqrt() * norm2(w.view()) * (1.0 + 1e-12));
    }
}

#[test]
fn isometry_in_expectation() {
    let mut r = rng(78);
    let z = gaussian_matrix(3, 5, &mut r);
    let fro2 = linalg::frobenius(z.view()).powi(2);
    let samples: Vec<f64> = (0..1000)
        .map(|_| {
            let op = sample_operator(10, 3, 5, Ensemble::Gaussian, &mut r).unwrap();
            let y = op.apply(&z).unwrap();
            y.dot(&y)
        })
        .collect();
    let mean = samples.iter().sum::<f64>() / 1000.0;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 999.0;
    let se = (var / 1000.0).sqrt();
    assert!((mean - fro2).abs() <= 3.0 * se, "mean {mean}, target {fro2}, se {se}");
}
