//! Convex inner solvers for the alternating scheme.
//!
//! Conventions: the LASSO objective is `||y - A v||_2^2 + beta ||v||_1` with no
//! `1/2` on the data term. A gradient step of length `t` on the data term is
//! `v + t A^T (y - A v)` (the factor 2 is absorbed into `t`), and the matching
//! proximal map is soft-thresholding with dead zone `t * beta / 2`.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, norm2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum StepPolicy {
    /// `v + A^T (y - A v)`; diverges when `||A||_2 > 1`.
    UnitStep,
    /// Step `1 / L` with `L = ||A||_2^2` estimated by power iteration.
    #[default]
    SafeStep,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IstaConfig {
    pub max_iters: usize,
    /// Stop once `||v_k - v_{k-1}|| <= tol * ||v_k||`.
    pub tol: f64,
    pub step_policy: StepPolicy,
}

impl Default for IstaConfig {
    fn default() -> Self {
        Self {
            max_iters: 500,
            tol: 1e-8,
            step_policy: StepPolicy::SafeStep,
        }
    }
}

impl IstaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::invalid("ista max_iters must be at least 1"));
        }
        if !(self.tol > 0.0) {
            return Err(Error::invalid("ista tol must be positive"));
        }
        Ok(())
    }
}

/// Sparsity penalty applied by the v-steps.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Penalty {
    /// `||v||_1`
    #[default]
    L1,
    /// `sum_i |v_i|^+_theta`: positive entries cost `v_i`, negative ones `theta |v_i|`.
    NonnegL1 { theta: f64 },
}

impl Penalty {
    pub fn value(&self, v: ArrayView1<f64>) -> f64 {
        match *self {
            Penalty::L1 => linalg::norm1(v),
            Penalty::NonnegL1 { theta } => v
                .iter()
                .map(|&x| if x >= 0.0 { x } else { -theta * x })
                .sum(),
        }
    }

    fn shrink(&self, z: f64, half_width: f64) -> f64 {
        match *self {
            Penalty::L1 => shrink_scalar(z, half_width, 1.0),
            Penalty::NonnegL1 { theta } => shrink_scalar(z, half_width, theta),
        }
    }
}

#[inline]
fn shrink_scalar(z: f64, half_width: f64, theta: f64) -> f64 {
    if z > half_width {
        z - half_width
    } else if z < -theta * half_width {
        z + theta * half_width
    } else {
        0.0
    }
}

/// Componentwise `S_beta`: shrink toward zero by `beta / 2`.
pub fn soft_threshold(z: &Array1<f64>, beta: f64) -> Result<Array1<f64>> {
    if !(beta >= 0.0) {
        return Err(Error::invalid(format!("threshold beta = {beta} must be non-negative")));
    }
    let h = beta / 2.0;
    Ok(z.mapv(|x| shrink_scalar(x, h, 1.0)))
}

/// Componentwise `S_{beta,theta}`: dead zone `[-theta beta / 2, beta / 2]`.
pub fn asym_soft_threshold(z: &Array1<f64>, beta: f64, theta: f64) -> Result<Array1<f64>> {
    if !(beta >= 0.0) || !(theta >= 0.0) {
        return Err(Error::invalid(format!(
            "beta = {beta} and theta = {theta} must be non-negative"
        )));
    }
    let h = beta / 2.0;
    Ok(z.mapv(|x| shrink_scalar(x, h, theta)))
}

fn check_finite(name: &str, mut it: impl Iterator<Item = f64>) -> Result<()> {
    if it.any(|x| !x.is_finite()) {
        return Err(Error::invalid(format!("{name} contains non-finite entries")));
    }
    Ok(())
}

/// Ridge solution `(alpha I + A^T A)^{-1} A^T y`.
pub fn tikhonov_solve(design: ArrayView2<f64>, y: ArrayView1<f64>, alpha: f64) -> Result<Array1<f64>> {
    tikhonov_solve_anchored(design, y, alpha, None)
}

/// Ridge solve with an optional proximal anchor `(weight, u0)`:
/// minimizes `||y - A u||^2 + alpha ||u||^2 + weight ||u - u0||^2`.
pub fn tikhonov_solve_anchored(
    design: ArrayView2<f64>,
    y: ArrayView1<f64>,
    alpha: f64,
    anchor: Option<(f64, ArrayView1<f64>)>,
) -> Result<Array1<f64>> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::invalid(format!("Tikhonov weight alpha = {alpha} must be positive")));
    }
    if design.nrows() != y.len() {
        return Err(Error::invalid(format!(
            "design has {} rows but y has length {}",
            design.nrows(),
            y.len()
        )));
    }
    check_finite("design", design.iter().copied())?;
    check_finite("y", y.iter().copied())?;
    let n = design.ncols();
    let mut normal = design.t().dot(&design);
    let mut rhs = design.t().dot(&y);
    let mut shift = alpha;
    if let Some((weight, u0)) = anchor {
        if !(weight >= 0.0) || u0.len() != n {
            return Err(Error::invalid("invalid proximal anchor"));
        }
        shift += weight;
        rhs.scaled_add(weight, &u0);
    }
    for i in 0..n {
        normal[[i, i]] += shift;
    }
    linalg::cholesky_solve(normal.view(), rhs.view())
}

/// `||y - A v||_2^2 + beta * penalty(v)`.
pub fn lasso_objective(design: ArrayView2<f64>, y: ArrayView1<f64>, v: ArrayView1<f64>, beta: f64, penalty: Penalty) -> f64 {
    let r = &y - &design.dot(&v);
    r.dot(&r) + beta * penalty.value(v)
}

#[derive(Debug, Clone)]
pub struct IstaReport {
    pub solution: Array1<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Step length used (1 for the unit step).
    pub step: f64,
    /// Objective before the first and after every iteration, when traced.
    pub objective_trace: Vec<f64>,
}

const DIVERGENCE_STREAK: usize = 10;
const POWER_ITERS: usize = 20;
const POWER_TOL: f64 = 1e-8;

/// ISTA for `min ||y - A v||^2 + beta ||v||_1`, warm-started at `v0`.
pub fn ista(
    design: ArrayView2<f64>,
    y: ArrayView1<f64>,
    v0: ArrayView1<f64>,
    beta: f64,
    cfg: &IstaConfig,
) -> Result<Array1<f64>> {
    ista_with_penalty(design, y, v0, beta, Penalty::L1, cfg, false).map(|r| r.solution)
}

/// General ISTA driver; `trace` records the objective at every iterate.
pub fn ista_with_penalty(
    design: ArrayView2<f64>,
    y: ArrayView1<f64>,
    v0: ArrayView1<f64>,
    beta: f64,
    penalty: Penalty,
    cfg: &IstaConfig,
    trace: bool,
) -> Result<IstaReport> {
    cfg.validate()?;
    let (m, n) = design.dim();
    if y.len() != m || v0.len() != n {
        return Err(Error::invalid(format!(
            "ista shapes: design {m}x{n}, y {}, v0 {}",
            y.len(),
            v0.len()
        )));
    }
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(Error::invalid(format!("ista beta = {beta} must be positive")));
    }
    if let Penalty::NonnegL1 { theta } = penalty {
        if !(theta >= 0.0) {
            return Err(Error::invalid("asymmetric threshold theta must be non-negative"));
        }
    }

    let step = match cfg.step_policy {
        StepPolicy::UnitStep => 1.0,
        StepPolicy::SafeStep => {
            let l = linalg::spectral_norm_sq(design, POWER_ITERS, POWER_TOL);
            if l == 0.0 {
                // zero design: the minimizer is 0
                return Ok(IstaReport {
                    solution: Array1::zeros(n),
                    iterations: 1,
                    converged: true,
                    step: 1.0,
                    objective_trace: if trace {
                        vec![lasso_objective(design, y, v0, beta, penalty), y.dot(&y)]
                    } else {
                        Vec::new()
                    },
                });
            }
            1.0 / l
        }
    };
    let half_width = step * beta / 2.0;
    let need_objective = trace || cfg.step_policy == StepPolicy::UnitStep;

    let gram = design.t().dot(&design);
    let aty = design.t().dot(&y);
    let mut v = v0.to_owned();
    let mut objective_trace = Vec::new();
    let mut last_objective = f64::INFINITY;
    if need_objective {
        last_objective = lasso_objective(design, y, v.view(), beta, penalty);
        if trace {
            objective_trace.push(last_objective);
        }
    }
    let mut increases = 0usize;
    let mut converged = false;
    let mut iterations = 0usize;
    let mut next = Array1::<f64>::zeros(n);

    for k in 1..=cfg.max_iters {
        iterations = k;
        let grad = &aty - &gram.dot(&v);
        for i in 0..n {
            next[i] = penalty.shrink(v[i] + step * grad[i], half_width);
        }
        let diff = norm2((&next - &v).view());
        let size = norm2(next.view());
        std::mem::swap(&mut v, &mut next);

        if !diff.is_finite() || !size.is_finite() {
            return Err(Error::StepSize(
                "ISTA iterates became non-finite; use the safe step".into(),
            ));
        }
        if need_objective {
            let obj = lasso_objective(design, y, v.view(), beta, penalty);
            if trace {
                objective_trace.push(obj);
            }
            if cfg.step_policy == StepPolicy::UnitStep {
                if obj > last_objective {
                    increases += 1;
                    if increases >= DIVERGENCE_STREAK {
                        return Err(Error::StepSize(format!(
                            "ISTA objective increased {DIVERGENCE_STREAK} iterations in a row \
                             with the unit step; use the safe step"
                        )));
                    }
                } else {
                    increases = 0;
                }
            }
            last_objective = obj;
        }
        if diff <= cfg.tol * size {
            converged = true;
            break;
        }
    }
    Ok(IstaReport {
        solution: v,
        iterations,
        converged,
        step,
        objective_trace,
    })
}

/// Row-stacks `[A; w I]` and `[y; w v0]`, turning `w^2 ||v - v0||^2` into extra data rows.
pub(crate) fn augment_with_identity(
    design: &Array2<f64>,
    y: &Array1<f64>,
    weight: f64,
    anchor: ArrayView1<f64>,
) -> (Array2<f64>, Array1<f64>) {
    let (m, n) = design.dim();
    let mut big = Array2::<f64>::zeros((m + n, n));
    big.slice_mut(ndarray::s![..m, ..]).assign(design);
    for i in 0..n {
        big[[m + i, i]] = weight;
    }
    let mut target = Array1::<f64>::zeros(m + n);
    target.slice_mut(ndarray::s![..m]).assign(y);
    target
        .slice_mut(ndarray::s![m..])
        .assign(&(&anchor * weight));
    (big, target)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn soft_threshold_branches() {
        let out = soft_threshold(&array![2.0, 0.3, -2.0, 0.5, -0.5], 1.0).unwrap();
        assert_eq!(out, array![1.5, 0.0, -1.5, 0.0, 0.0]);
        let z = array![0.1, -4.0, 3.0];
        assert_eq!(soft_threshold(&z, 0.0).unwrap(), z);
        assert!(soft_threshold(&z, -1.0).is_err());
    }

    #[test]
    fn asymmetric_branches() {
        assert_eq!(asym_soft_threshold(&array![1.0], 1.0, 2.0).unwrap(), array![0.5]);
        assert_eq!(asym_soft_threshold(&array![-0.8], 1.0, 2.0).unwrap(), array![0.0]);
        assert_eq!(asym_soft_threshold(&array![-1.5], 1.0, 2.0).unwrap(), array![-0.5]);
        assert!(asym_soft_threshold(&array![1.0], 1.0, -1.0).is_err());
        assert!(asym_soft_threshold(&array![1.0], -1.0, 1.0).is_err());
    }

    #[test]
    fn tikhonov_identity_design() {
        let u = tikhonov_solve(Array2::eye(2).view(), array![2.0, 4.0].view(), 1.0).unwrap();
        assert!((u[0] - 1.0).abs() < 1e-15 && (u[1] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn tikhonov_zero_design() {
        let u = tikhonov_solve(Array2::zeros((3, 2)).view(), array![1.0, 2.0, 3.0].view(), 0.5).unwrap();
        assert_eq!(u, array![0.0, 0.0]);
    }

    #[test]
    fn tikhonov_rejects_bad_input() {
        let a = Array2::<f64>::eye(2);
        assert!(tikhonov_solve(a.view(), array![1.0, f64::NAN].view(), 1.0).is_err());
        assert!(tikhonov_solve(a.view(), array![1.0, 1.0].view(), 0.0).is_err());
        assert!(tikhonov_solve(a.view(), array![1.0].view(), 1.0).is_err());
    }

    #[test]
    fn ista_identity_design_is_one_threshold() {
        let cfg = IstaConfig {
            max_iters: 1,
            step_policy: StepPolicy::UnitStep,
            ..Default::default()
        };
        let v = ista(
            Array2::eye(3).view(),
            array![2.0, 0.3, -2.0].view(),
            Array1::zeros(3).view(),
            1.0,
            &cfg,
        )
        .unwrap();
        assert_eq!(v, array![1.5, 0.0, -1.5]);
        // the safe step has L = 1 here as well and stops at the fixed point
        let v = ista(
            Array2::eye(3).view(),
            array![2.0, 0.3, -2.0].view(),
            Array1::zeros(3).view(),
            1.0,
            &IstaConfig::default(),
        )
        .unwrap();
        assert!((&v - &array![1.5, 0.0, -1.5]).iter().all(|d| d.abs() < 1e-14));
    }

    #[test]
    fn large_beta_kills_everything() {
        let a = array![[1.0, 2.0], [0.5, -1.0], [3.0, 0.0]];
        let y = array![1.0, -2.0, 0.5];
        let l = linalg::spectral_norm_sq(a.view(), POWER_ITERS, POWER_TOL);
        let aty = a.t().dot(&y);
        let inf = aty.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let beta = 2.0 * inf * 1.0001;
        let v = ista(a.view(), y.view(), Array1::zeros(2).view(), beta, &IstaConfig::default()).unwrap();
        assert!(v.iter().all(|x| *x == 0.0), "{v} (L = {l})");
    }

    #[test]
    fn unit_step_divergence_is_reported() {
        let a = Array2::<f64>::eye(4) * 3.0;
        let y = array![1.0, 2.0, 3.0, 4.0];
        let cfg = IstaConfig {
            step_policy: StepPolicy::UnitStep,
            ..Default::default()
        };
        let err = ista(a.view(), y.view(), Array1::zeros(4).view(), 0.1, &cfg).unwrap_err();
        assert!(matches!(err, Error::StepSize(_)));
    }

    #[test]
    fn nonneg_penalty_stays_nonnegative_for_large_theta() {
        let a = array![[1.0, 0.2], [0.1, 1.0], [0.3, 0.3]];
        let y = array![-1.0, 1.0, 0.0];
        let r = ista_with_penalty(
            a.view(),
            y.view(),
            Array1::zeros(2).view(),
            0.1,
            Penalty::NonnegL1 { theta: 1e6 },
            &IstaConfig {
                max_iters: 5000,
                tol: 1e-12,
                ..Default::default()
            },
            false,
        )
        .unwrap();
        assert!(r.solution.iter().all(|x| *x >= -1e-12));
        assert!(r.solution[1] > 0.0);
    }

    #[test]
    fn augmentation_matches_penalty() {
        let a = array![[1.0, 2.0], [3.0, 4.0]];
        let y = array![0.5, -1.0];
        let v0 = array![0.2, 0.7];
        let w = 0.3f64;
        let (big, target) = augment_with_identity(&a, &y, w, v0.view());
        let v = array![-1.0, 0.25];
        let lhs = {
            let r = &target - &big.dot(&v);
            r.dot(&r)
        };
        let rhs = {
            let r = &y - &a.dot(&v);
            let d = &v - &v0;
            r.dot(&r) + w * w * d.dot(&d)
        };
        assert!((lhs - rhs).abs() < 1e-14);
    }
}
