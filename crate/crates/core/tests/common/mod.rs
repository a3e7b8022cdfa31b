#![allow(dead_code)]

use atlas_core::measurement::{sample_operator, Ensemble, MeasurementOperator};
use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.sample::<f64, _>(StandardNormal))
}

pub fn gaussian_vector(n: usize, rng: &mut ChaCha8Rng) -> Array1<f64> {
    Array1::from_shape_fn(n, |_| rng.sample::<f64, _>(StandardNormal))
}

pub fn to_na(x: ArrayView2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| x[[i, j]])
}

pub fn to_na_vec(x: ArrayView1<f64>) -> DVector<f64> {
    DVector::from_iterator(x.len(), x.iter().copied())
}

pub fn operator(m: usize, n1: usize, n2: usize, seed: u64) -> MeasurementOperator {
    sample_operator(m, n1, n2, Ensemble::Gaussian, &mut rng(seed)).unwrap()
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

/// Cyclic coordinate descent for `||y - A v||^2 + beta ||v||_1`, run to a
/// tight change tolerance.
pub fn lasso_cd(a: &Array2<f64>, y: &Array1<f64>, beta: f64) -> Array1<f64> {
    let n = a.ncols();
    let mut v = Array1::<f64>::zeros(n);
    let mut r = y.clone();
    let col_sq: Vec<f64> = (0..n).map(|j| a.column(j).dot(&a.column(j))).collect();
    for _ in 0..200_000 {
        let mut max_change: f64 = 0.0;
        for j in 0..n {
            if col_sq[j] == 0.0 {
                continue;
            }
            let col = a.column(j);
            let rho = col.dot(&r) + col_sq[j] * v[j];
            // minimizer of c (v - rho/c)^2 + beta |v| with c = ||a_j||^2
            let new = if rho > beta / 2.0 {
                (rho - beta / 2.0) / col_sq[j]
            } else if rho < -beta / 2.0 {
                (rho + beta / 2.0) / col_sq[j]
            } else {
                0.0
            };
            let delta = new - v[j];
            if delta != 0.0 {
                r.scaled_add(-delta, &col);
                v[j] = new;
            }
            max_change = max_change.max(delta.abs());
        }
        if max_change < 1e-15 {
            break;
        }
    }
    v
}

pub fn lasso_value(a: &Array2<f64>, y: &Array1<f64>, v: &Array1<f64>, beta: f64) -> f64 {
    let r = y - &a.dot(v);
    r.dot(&r) + beta * v.iter().map(|x| x.abs()).sum::<f64>()
}
