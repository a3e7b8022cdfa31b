//! Fixtures shared by the criterion benchmarks in `benches/`.

use atlas_core::measurement::{sample_operator, Ensemble, MeasurementOperator};
use atlas_core::models::{sample_ground_truth, GroundTruth, GroundTruthSpec};
use atlas_core::seeding::rng_for;

/// Operator, planted matrix and clean measurements at a fixed seed.
pub fn fixture(n1: usize, n2: usize, rank: usize, s: usize, m: usize) -> (MeasurementOperator, GroundTruth, ndarray::Array1<f64>) {
    let mut rng = rng_for(7, &format!("bench|{n1}|{n2}|{rank}|{s}|{m}"));
    let op = sample_operator(m, n1, n2, Ensemble::Gaussian, &mut rng).expect("valid dimensions");
    let gt = sample_ground_truth(&GroundTruthSpec::right_sparse(n1, n2, rank, s, 10.0), &mut rng).expect("valid spec");
    let y = op.apply(&gt.matrix).expect("shapes match");
    (op, gt, y)
}
