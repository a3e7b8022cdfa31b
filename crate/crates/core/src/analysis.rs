//! Error metrics, recovery-bound evaluators, minimizer-property checks and an
//! empirical probe of the additive restricted isometry property.
//!
//! The bounds and lemma checks are statements about *global* minimizers. The
//! alternating solver may stop at a local one, so the checkers report verdicts
//! instead of failing: a violated inequality is flagged as a local-minimum
//! suspect.

use ndarray::{Array1, Array2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::atlas::{c21, Decomposition};
use crate::error::{Error, Result};
use crate::linalg::{self, norm1, norm2};
use crate::measurement::MeasurementOperator;
use crate::models::{self, GroundTruth, GroundTruthSpec, SparseDecomposition, SparsityClass};
use crate::seeding;

/// `||X_hat - X_out||_F / ||X_hat||_F`.
pub fn relative_error(x_hat: &Array2<f64>, x_out: &Array2<f64>) -> Result<f64> {
    if x_hat.dim() != x_out.dim() {
        return Err(Error::invalid("relative_error: shape mismatch"));
    }
    let denom = linalg::frobenius(x_hat.view());
    if denom == 0.0 {
        return Err(Error::Domain("relative error against a zero ground truth".into()));
    }
    Ok(linalg::frobenius((x_hat - x_out).view()) / denom)
}

/// Recovery counts as successful when `rel_err <= threshold`.
pub fn success(rel_err: f64, threshold: f64) -> bool {
    debug_assert!(threshold > 0.0);
    rel_err <= threshold
}

/// `sum_r (sigma_r ||u^r||_2 ||v^r||_1)^{2/3}` of a decomposition with unit factors.
pub fn decomposition_energy(sd: &SparseDecomposition) -> f64 {
    sd.u_factors
        .iter()
        .zip(&sd.v_factors)
        .zip(sd.sigma.iter())
        .map(|((u, v), &s)| (s * norm2(u.view()) * norm1(v.view())).powf(2.0 / 3.0))
        .sum()
}

/// Same quantity for an unnormalized factor tuple.
pub fn factor_energy(d: &Decomposition) -> f64 {
    d.u.iter()
        .zip(&d.v)
        .map(|(u, v)| (norm2(u.view()) * norm1(v.view())).powf(2.0 / 3.0))
        .sum()
}

/// Right-hand side of the measurement-misfit bound:
/// `||eta||^2 + C_{2,1} (alpha beta^2)^{1/3} sum_r (||u^r|| ||v^r||_1)^{2/3}`.
pub fn misfit_bound_rhs(ground: &GroundTruth, alpha: f64, beta: f64, noise_norm: f64) -> f64 {
    noise_norm * noise_norm
        + c21() * (alpha * beta * beta).cbrt() * decomposition_energy(&ground.decomposition)
}

/// Where the RIP constant plugged into a bound came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeltaSource {
    UserSupplied,
    /// Largest deviation seen by [`rip_probe`]; a lower bound on the true constant.
    ProbeLowerBound,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundParams {
    /// Effective sparsity level of the right factors.
    pub s: f64,
    pub rank: usize,
    /// Sparsity-control scale.
    pub gamma: f64,
    /// Cap multiplier on `||sigma||`, at least 1.
    pub c: f64,
    pub delta: f64,
    pub delta_source: DeltaSource,
    /// `1 / lambda_min` of the normalized left-factor Gramian.
    pub c_u: f64,
    pub noise_norm: f64,
    /// `||X_hat||_{2/3}`.
    pub schatten_23: f64,
}

impl BoundParams {
    pub fn validate(&self) -> Result<()> {
        let nonneg = [self.s, self.gamma, self.delta, self.c_u, self.noise_norm, self.schatten_23];
        if nonneg.iter().any(|x| !(*x >= 0.0)) {
            return Err(Error::invalid("bound parameters must be non-negative"));
        }
        if !(self.c >= 1.0) {
            return Err(Error::invalid("bound parameter c must be at least 1"));
        }
        if !(self.delta < 1.0) {
            return Err(Error::invalid("RIP constant delta must be below 1"));
        }
        Ok(())
    }
}

/// Recovery bound for a global minimizer at fixed `(alpha, beta)`:
/// `sqrt(s^{1/3} R^{2/3} C_{2,1} c_U) (alpha beta^2)^{1/6} ||X||_{2/3}^{1/3} + 2 ||eta|| + sqrt(delta)`.
pub fn theorem_bound(params: &BoundParams, alpha: f64, beta: f64) -> f64 {
    let r = params.rank as f64;
    let slope = (params.s.cbrt() * r.powf(2.0 / 3.0) * c21() * params.c_u).sqrt();
    slope * (alpha * beta * beta).powf(1.0 / 6.0) * params.schatten_23.cbrt()
        + 2.0 * params.noise_norm
        + params.delta.sqrt()
}

/// Noise-adapted recovery bound with `alpha = beta = ||eta||^2 / ||X||_{2/3}^{2/3}`:
/// `(2 sqrt(c_U R^{2/3} s^{1/3}) + 2) ||eta|| + sqrt(delta)`.
pub fn corollary_bound(params: &BoundParams) -> f64 {
    let r = params.rank as f64;
    (2.0 * (params.c_u * r.powf(2.0 / 3.0) * params.s.cbrt()).sqrt() + 2.0) * params.noise_norm
        + params.delta.sqrt()
}

/// The parameter choice behind [`corollary_bound`].
pub fn noise_adapted_parameter(noise_norm: f64, schatten_23: f64) -> f64 {
    noise_norm * noise_norm / schatten_23.powf(2.0 / 3.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    /// The statement's hypothesis does not hold; nothing to check.
    NotApplicable,
    Satisfied,
    /// The inequality fails, so the solution cannot be a global minimizer.
    LocalMinimumSuspect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundednessVerdict {
    pub misfit: f64,
    pub noise_norm: f64,
    pub precondition: bool,
    pub left_energy: f64,
    pub left_bound: f64,
    pub right_l1: f64,
    pub right_bound: f64,
    pub product_energy: f64,
    pub product_bound: f64,
    pub verdict: Verdict,
}

const PRECONDITION_SLACK: f64 = 1e-9;

/// Checks the three norm bounds that hold for global minimizers whose misfit
/// is at least the noise level.
///
/// The misfit has to exceed `||eta||` by more than round-off
/// (`1e-9 (1 + ||y||)`); exact ties count as not applicable.
pub fn check_boundedness(
    op: &MeasurementOperator,
    y: &Array1<f64>,
    ground: &GroundTruth,
    solution: &Decomposition,
    alpha: f64,
    beta: f64,
    noise_norm: f64,
) -> Result<BoundednessVerdict> {
    if !(alpha > 0.0) || !(beta > 0.0) {
        return Err(Error::invalid("alpha and beta must be positive"));
    }
    let predicted = op.apply(&solution.assemble())?;
    let misfit = norm2((y - &predicted).view());
    let precondition = misfit > noise_norm + PRECONDITION_SLACK * (1.0 + norm2(y.view()));

    let energy = decomposition_energy(&ground.decomposition);
    let left_energy: f64 = solution.u.iter().map(|u| u.dot(u)).sum();
    let right_l1: f64 = solution.v.iter().map(|v| norm1(v.view())).sum();
    let left_bound = c21() * (beta * beta / (alpha * alpha)).cbrt() * energy;
    let right_bound = c21() * (alpha / beta).cbrt() * energy;
    let product_energy = factor_energy(solution);
    let verdict = if !precondition {
        Verdict::NotApplicable
    } else if left_energy <= left_bound && right_l1 <= right_bound && product_energy <= energy {
        Verdict::Satisfied
    } else {
        Verdict::LocalMinimumSuspect
    };
    Ok(BoundednessVerdict {
        misfit,
        noise_norm,
        precondition,
        left_energy,
        left_bound,
        right_l1,
        right_bound,
        product_energy,
        product_bound: energy,
        verdict,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparsityVerdict {
    pub component: usize,
    pub norm2: f64,
    pub gate: f64,
    /// `||v||_1 / ||v||_2`, when defined.
    pub ratio: Option<f64>,
    pub limit: f64,
    pub verdict: Verdict,
}

/// Components with `||v^r||_2 >= ||y||^2 / gamma` must have `||v^r||_1 / ||v^r||_2 < gamma / beta`.
pub fn check_sparsity_control(
    solution: &Decomposition,
    y: &Array1<f64>,
    beta: f64,
    gamma: f64,
) -> Result<Vec<SparsityVerdict>> {
    if !(beta > 0.0) || !(gamma > 0.0) {
        return Err(Error::invalid("beta and gamma must be positive"));
    }
    let gate = y.dot(y) / gamma;
    let limit = gamma / beta;
    Ok(solution
        .v
        .iter()
        .enumerate()
        .map(|(component, v)| {
            let n2 = norm2(v.view());
            let ratio = (n2 > 0.0).then(|| norm1(v.view()) / n2);
            let verdict = match ratio {
                Some(q) if n2 >= gate => {
                    if q < limit {
                        Verdict::Satisfied
                    } else {
                        Verdict::LocalMinimumSuspect
                    }
                }
                _ => Verdict::NotApplicable,
            };
            SparsityVerdict {
                component,
                norm2: n2,
                gate,
                ratio,
                limit,
                verdict,
            }
        })
        .collect())
}

/// Structured class probed by [`rip_probe`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeClass {
    pub class: SparsityClass,
    pub rank: usize,
    pub s1: usize,
    pub s2: usize,
    /// Scale `||sigma||_2` of every probe matrix.
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RipProbeReport {
    pub samples: usize,
    pub max_deviation: f64,
    pub mean_deviation: f64,
    pub class: ProbeClass,
    /// `| ||A(Z_i)||^2 - ||Z_i||_F^2 |` per sample, in sample order.
    pub deviations: Vec<f64>,
}

/// Draws one member of the class; `||sigma||_2` is set to `gamma` exactly.
pub fn sample_probe_matrix<R: rand::Rng + ?Sized>(
    n1: usize,
    n2: usize,
    class: &ProbeClass,
    rng: &mut R,
) -> Result<Array2<f64>> {
    let spec = GroundTruthSpec {
        n1,
        n2,
        rank: class.rank,
        class: class.class,
        s1: class.s1,
        s2: class.s2,
        gamma_cap: None,
        common_support: false,
        orthonormalize: false,
        orthonormalize_left: false,
        target_frobenius: 1.0,
    };
    let gt = models::sample_ground_truth(&spec, rng)?;
    let mut sd = gt.decomposition;
    let scale = class.gamma / norm2(sd.sigma.view());
    sd.sigma *= scale;
    models::assemble_matrix(&sd)
}

/// Monte-Carlo lower bound on the additive RIP constant of `op` over a class.
///
/// Sample `i` is drawn from its own generator seeded by `(seed, i)`, so the
/// report does not depend on the number of worker threads and a longer probe
/// extends a shorter one.
pub fn rip_probe(op: &MeasurementOperator, class: &ProbeClass, samples: usize, seed: u64) -> Result<RipProbeReport> {
    if samples == 0 {
        return Err(Error::invalid("rip_probe needs at least one sample"));
    }
    if !(class.gamma > 0.0) {
        return Err(Error::invalid("probe gamma must be positive"));
    }
    let (n1, n2) = op.shape();
    let deviations = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = seeding::rng_for(seed, &format!("rip-sample={i}"));
            let z = sample_probe_matrix(n1, n2, class, &mut rng)?;
            let az = op.apply(&z)?;
            let fro = linalg::frobenius(z.view());
            Ok((az.dot(&az) - fro * fro).abs())
        })
        .collect::<Result<Vec<f64>>>()?;
    let max_deviation = deviations.iter().copied().fold(0.0, f64::max);
    let mean_deviation = deviations.iter().sum::<f64>() / samples as f64;
    Ok(RipProbeReport {
        samples,
        max_deviation,
        mean_deviation,
        class: *class,
        deviations,
    })
}
