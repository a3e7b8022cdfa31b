//! Dense subgaussian measurement operators `A(X) = m^{-1/2} (<A_i, X>_F)_i`.
//!
//! The `m` frame matrices are stored row-wise as an `m x (n1*n2)` design with
//! `vec(X)[a * n2 + b] = X[a, b]`.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::norm2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ensemble {
    Gaussian,
    Rademacher,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementOperator {
    m: usize,
    n1: usize,
    n2: usize,
    design: Array2<f64>,
    scale: f64,
}

/// Everything needed to rebuild an operator bit-for-bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OperatorSpec {
    pub seed: u64,
    pub m: usize,
    pub n1: usize,
    pub n2: usize,
    pub ensemble: Ensemble,
}

impl OperatorSpec {
    pub fn build(&self) -> Result<MeasurementOperator> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        sample_operator(self.m, self.n1, self.n2, self.ensemble, &mut rng)
    }
}

/// Draws an operator whose frame entries are i.i.d. mean 0, variance 1.
pub fn sample_operator<R: Rng + ?Sized>(
    m: usize,
    n1: usize,
    n2: usize,
    ensemble: Ensemble,
    rng: &mut R,
) -> Result<MeasurementOperator> {
    if m == 0 || n1 == 0 || n2 == 0 {
        return Err(Error::invalid(format!(
            "operator dimensions must be positive, got m={m}, n1={n1}, n2={n2}"
        )));
    }
    let design = match ensemble {
        Ensemble::Gaussian => Array2::from_shape_simple_fn((m, n1 * n2), || rng.sample(StandardNormal)),
        Ensemble::Rademacher => Array2::from_shape_simple_fn((m, n1 * n2), || {
            if rng.random::<bool>() {
                1.0
            } else {
                -1.0
            }
        }),
    };
    MeasurementOperator::from_design(design, n1, n2)
}

impl MeasurementOperator {
    /// Wraps explicit frame matrices (rows are `vec(A_i)`); applies the `1/sqrt(m)` scale.
    pub fn from_design(design: Array2<f64>, n1: usize, n2: usize) -> Result<Self> {
        let m = design.nrows();
        if m == 0 || design.ncols() != n1 * n2 || n1 == 0 || n2 == 0 {
            return Err(Error::invalid(format!(
                "design of shape {:?} does not match n1={n1}, n2={n2}",
                design.dim()
            )));
        }
        if design.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("design contains non-finite entries"));
        }
        Ok(Self {
            m,
            n1,
            n2,
            design,
            scale: 1.0 / (m as f64).sqrt(),
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n1, self.n2)
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Unscaled frame matrices, one per row.
    pub fn design(&self) -> ArrayView2<'_, f64> {
        self.design.view()
    }

    fn frames(&self) -> ndarray::ArrayView3<'_, f64> {
        self.design
            .view()
            .into_shape_with_order((self.m, self.n1, self.n2))
            .expect("design is contiguous")
    }

    fn check_matrix(&self, x: &ArrayView2<f64>) -> Result<()> {
        if x.dim() != (self.n1, self.n2) {
            return Err(Error::invalid(format!(
                "matrix shape {:?} does not match operator ({}, {})",
                x.dim(),
                self.n1,
                self.n2
            )));
        }
        Ok(())
    }

    pub fn apply(&self, x: &Array2<f64>) -> Result<Array1<f64>> {
        self.apply_view(x.view())
    }

    pub fn apply_view(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        self.check_matrix(&x)?;
        let flat = x.iter().copied().collect::<Array1<f64>>();
        Ok(self.design.dot(&flat) * self.scale)
    }

    /// `m^{-1/2} sum_i y_i A_i`.
    pub fn adjoint(&self, y: &Array1<f64>) -> Result<Array2<f64>> {
        if y.len() != self.m {
            return Err(Error::invalid(format!(
                "measurement vector has length {}, expected {}",
                y.len(),
                self.m
            )));
        }
        let flat = self.design.t().dot(y) * self.scale;
        Ok(flat
            .into_shape_with_order((self.n1, self.n2))
            .expect("n1*n2 entries"))
    }

    /// The `m x n1` matrix `M` with `M u = A(u v^T)`.
    pub fn partial_in_u(&self, v: &Array1<f64>) -> Result<Array2<f64>> {
        if v.len() != self.n2 {
            return Err(Error::invalid(format!(
                "v has length {}, expected {}",
                v.len(),
                self.n2
            )));
        }
        let stacked = self
            .design
            .view()
            .into_shape_with_order((self.m * self.n1, self.n2))
            .expect("design is contiguous");
        let out = stacked.dot(v) * self.scale;
        Ok(out
            .into_shape_with_order((self.m, self.n1))
            .expect("m*n1 entries"))
    }

    /// The `m x n2` matrix `M` with `M v = A(u v^T)`.
    pub fn partial_in_v(&self, u: &Array1<f64>) -> Result<Array2<f64>> {
        if u.len() != self.n1 {
            return Err(Error::invalid(format!(
                "u has length {}, expected {}",
                u.len(),
                self.n1
            )));
        }
        let mut out = Array2::<f64>::zeros((self.m, self.n2));
        for (frame, mut row) in self.frames().axis_iter(Axis(0)).zip(out.rows_mut()) {
            for (a, frame_row) in frame.rows().into_iter().enumerate() {
                let ua = u[a];
                if ua != 0.0 {
                    row.scaled_add(ua, &frame_row);
                }
            }
        }
        out *= self.scale;
        Ok(out)
    }
}

/// Measurements `y = clean + eta` together with the realized noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoisySample {
    pub y: Array1<f64>,
    pub noise: Array1<f64>,
    pub noise_norm: f64,
}

/// Adds Gaussian noise rescaled to `||eta||_2 = noise_to_signal * signal_frobenius` exactly.
pub fn add_noise<R: Rng + ?Sized>(
    clean: &Array1<f64>,
    noise_to_signal: f64,
    signal_frobenius: f64,
    rng: &mut R,
) -> Result<NoisySample> {
    if !(signal_frobenius > 0.0) {
        return Err(Error::invalid("signal_frobenius must be positive"));
    }
    if !(noise_to_signal >= 0.0) || !noise_to_signal.is_finite() {
        return Err(Error::invalid("noise_to_signal must be finite and non-negative"));
    }
    let target = noise_to_signal * signal_frobenius;
    let mut noise = Array1::<f64>::zeros(clean.len());
    if target > 0.0 && !clean.is_empty() {
        loop {
            noise = Array1::from_iter((0..clean.len()).map(|_| rng.sample::<f64, _>(StandardNormal)));
            let n = norm2(noise.view());
            if n > 0.0 {
                noise *= target / n;
                break;
            }
        }
    }
    let y = clean + &noise;
    let noise_norm = norm2(noise.view());
    Ok(NoisySample { y, noise, noise_norm })
}
