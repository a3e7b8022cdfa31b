//! Alternating Tikhonov / LASSO minimization of the multi-penalty functional
//!
//! ```text
//! J(u^1..u^R, v^1..v^R) = ||y - A(sum_r u^r (v^r)^T)||_2^2
//!                         + alpha sum_r ||u^r||_2^2 + beta sum_r ||v^r||_1
//! ```
//!
//! Each sweep visits components in order; for component `r` the residual
//! against all other (already updated) components is formed, then a ridge
//! step updates `u^r` and an ISTA step updates `v^r`. With proximal weights
//! set, both subproblems get an extra `||. - current||^2 / (2 lambda)` term,
//! which makes the whole sequence a proximal alternating minimization.
//!
//! Both variants are monotone: the ridge step is solved exactly and ISTA is
//! warm-started at the current `v^r`, so neither half-step can increase `J`.

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, norm1, norm2};
use crate::measurement::MeasurementOperator;
use crate::models::{add_outer, SparseDecomposition};
use crate::solvers::{self, IstaConfig, Penalty};

/// Unnormalized factor tuple; the scale lives in the factors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub u: Vec<Array1<f64>>,
    pub v: Vec<Array1<f64>>,
}

impl Decomposition {
    pub fn zeros(n1: usize, n2: usize, rank: usize) -> Self {
        Self {
            u: vec![Array1::zeros(n1); rank],
            v: vec![Array1::zeros(n2); rank],
        }
    }

    /// Puts each scale `sigma_r` on the left factor.
    pub fn from_sparse(sd: &SparseDecomposition) -> Self {
        Self {
            u: sd
                .u_factors
                .iter()
                .zip(sd.sigma.iter())
                .map(|(u, &s)| u * s)
                .collect(),
            v: sd.v_factors.clone(),
        }
    }

    pub fn rank(&self) -> usize {
        self.u.len()
    }

    pub fn shape(&self) -> (usize, usize) {
        (
            self.u.first().map_or(0, |u| u.len()),
            self.v.first().map_or(0, |v| v.len()),
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.u.is_empty() || self.u.len() != self.v.len() {
            return Err(Error::invalid(format!(
                "decomposition has {} left and {} right factors",
                self.u.len(),
                self.v.len()
            )));
        }
        let (n1, n2) = self.shape();
        if self.u.iter().any(|u| u.len() != n1) || self.v.iter().any(|v| v.len() != n2) {
            return Err(Error::invalid("decomposition factors have inconsistent lengths"));
        }
        if self
            .u
            .iter()
            .chain(&self.v)
            .any(|f| f.iter().any(|x| !x.is_finite()))
        {
            return Err(Error::invalid("decomposition has non-finite entries"));
        }
        Ok(())
    }

    /// `sum_r u^r (v^r)^T`.
    pub fn assemble(&self) -> Array2<f64> {
        let (n1, n2) = self.shape();
        let mut x = Array2::zeros((n1, n2));
        for (u, v) in self.u.iter().zip(&self.v) {
            add_outer(&mut x, 1.0, u, v);
        }
        x
    }
}

/// Constant proximal weights per component (length 1 broadcasts).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProximalConfig {
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
}

impl ProximalConfig {
    pub fn uniform(lambda: f64, mu: f64) -> Self {
        Self {
            lambda: vec![lambda],
            mu: vec![mu],
        }
    }

    fn pick(values: &[f64], r: usize) -> f64 {
        if values.len() == 1 {
            values[0]
        } else {
            values[r]
        }
    }

    pub fn lambda(&self, r: usize) -> f64 {
        Self::pick(&self.lambda, r)
    }

    pub fn mu(&self, r: usize) -> f64 {
        Self::pick(&self.mu, r)
    }

    fn validate(&self, rank: usize) -> Result<()> {
        for (name, vals) in [("lambda", &self.lambda), ("mu", &self.mu)] {
            if vals.len() != 1 && vals.len() != rank {
                return Err(Error::invalid(format!(
                    "proximal {name} needs 1 or {rank} entries, got {}",
                    vals.len()
                )));
            }
            if vals.iter().any(|x| !(*x > 0.0) || !x.is_finite()) {
                return Err(Error::invalid(format!("proximal {name} entries must be positive")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub alpha: f64,
    pub beta: f64,
    pub rank: usize,
    #[serde(default = "default_max_outer")]
    pub max_outer: usize,
    /// Relative Frobenius change of the assembled matrix that ends the loop.
    #[serde(default = "default_outer_tol")]
    pub outer_tol: f64,
    #[serde(default)]
    pub proximal: Option<ProximalConfig>,
    #[serde(default)]
    pub ista: IstaConfig,
    /// Switches the v-steps to the asymmetric (non-negativity promoting) penalty.
    #[serde(default)]
    pub nonneg_theta: Option<f64>,
    /// Randomizes the component order of each sweep with this seed.
    #[serde(default)]
    pub shuffle_seed: Option<u64>,
}

fn default_max_outer() -> usize {
    300
}

fn default_outer_tol() -> f64 {
    1e-6
}

impl SolverConfig {
    pub fn new(alpha: f64, beta: f64, rank: usize) -> Self {
        Self {
            alpha,
            beta,
            rank,
            max_outer: default_max_outer(),
            outer_tol: default_outer_tol(),
            proximal: None,
            ista: IstaConfig::default(),
            nonneg_theta: None,
            shuffle_seed: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::invalid(format!("alpha = {} must be positive", self.alpha)));
        }
        if !(self.beta > 0.0) || !self.beta.is_finite() {
            return Err(Error::invalid(format!("beta = {} must be positive", self.beta)));
        }
        if self.rank == 0 {
            return Err(Error::invalid("rank must be at least 1"));
        }
        if self.max_outer == 0 {
            return Err(Error::invalid("max_outer must be at least 1"));
        }
        if !(self.outer_tol > 0.0) {
            return Err(Error::invalid("outer_tol must be positive"));
        }
        if let Some(theta) = self.nonneg_theta {
            if !(theta >= 0.0) {
                return Err(Error::invalid("nonneg_theta must be non-negative"));
            }
        }
        if let Some(p) = &self.proximal {
            p.validate(self.rank)?;
        }
        self.ista.validate()
    }

    pub fn penalty(&self) -> Penalty {
        match self.nonneg_theta {
            Some(theta) => Penalty::NonnegL1 { theta },
            None => Penalty::L1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub decomposition: Decomposition,
    /// `J` at the initialization followed by `J` after every sweep.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub assembled: Array2<f64>,
    /// Per sweep: `sum_r ||u_k - u_{k-1}||^2 / (2 lambda) + ||v_k - v_{k-1}||^2 / (2 mu)`
    /// (empty without proximal terms).
    pub proximal_increments: Vec<f64>,
    /// Per sweep: squared Euclidean length of the step in all factors.
    pub step_norms_sq: Vec<f64>,
}

/// The multi-penalty functional; `alpha = beta = 0` leaves the data term.
pub fn objective(
    op: &MeasurementOperator,
    y: &Array1<f64>,
    d: &Decomposition,
    alpha: f64,
    beta: f64,
) -> Result<f64> {
    objective_with_penalty(op, y, d, alpha, beta, Penalty::L1)
}

pub fn objective_with_penalty(
    op: &MeasurementOperator,
    y: &Array1<f64>,
    d: &Decomposition,
    alpha: f64,
    beta: f64,
    penalty: Penalty,
) -> Result<f64> {
    d.validate()?;
    if d.shape() != op.shape() {
        return Err(Error::invalid(format!(
            "decomposition shape {:?} does not match operator {:?}",
            d.shape(),
            op.shape()
        )));
    }
    if y.len() != op.m() {
        return Err(Error::invalid("measurement length does not match operator"));
    }
    if !(alpha >= 0.0) || !(beta >= 0.0) {
        return Err(Error::invalid("alpha and beta must be non-negative"));
    }
    let residual = y - &op.apply(&d.assemble())?;
    Ok(residual.dot(&residual) + penalty_sum(d, alpha, beta, penalty))
}

fn penalty_sum(d: &Decomposition, alpha: f64, beta: f64, penalty: Penalty) -> f64 {
    let left: f64 = d.u.iter().map(|u| u.dot(u)).sum();
    let right: f64 = d.v.iter().map(|v| penalty.value(v.view())).sum();
    alpha * left + beta * right
}

/// `C_{p,q} = (q/p)^{p/(p+q)} + (p/q)^{q/(p+q)}`, the minimum constant of
/// `lambda^p alpha a + beta b / lambda^q`.
pub fn balancing_constant(p: f64, q: f64) -> f64 {
    (q / p).powf(p / (p + q)) + (p / q).powf(q / (p + q))
}

/// `C_{2,1} = (1/2)^{2/3} + 2^{1/3}`.
pub fn c21() -> f64 {
    balancing_constant(2.0, 1.0)
}

/// Rescales `(u, v) -> (l u, v / l)` with the `l` minimizing
/// `alpha l^2 ||u||_2^2 + beta ||v||_1 / l`.
pub fn balanced_rescale(
    u: &Array1<f64>,
    v: &Array1<f64>,
    alpha: f64,
    beta: f64,
) -> Result<(Array1<f64>, Array1<f64>, f64)> {
    if !(alpha > 0.0) || !(beta > 0.0) {
        return Err(Error::Domain("balancing needs alpha, beta > 0".into()));
    }
    let a = u.dot(u);
    let b = norm1(v.view());
    if a == 0.0 || b == 0.0 {
        return Err(Error::Domain("balancing a zero factor".into()));
    }
    let lambda = (0.5 * beta * b / (alpha * a)).cbrt();
    Ok((u * lambda, v / lambda, lambda))
}

/// Applies [`balanced_rescale`] to every non-zero component.
pub fn balance_decomposition(d: &Decomposition, alpha: f64, beta: f64) -> Result<Decomposition> {
    let mut out = d.clone();
    for r in 0..d.rank() {
        if d.u[r].iter().all(|x| *x == 0.0) || d.v[r].iter().all(|x| *x == 0.0) {
            continue;
        }
        let (u, v, _) = balanced_rescale(&d.u[r], &d.v[r], alpha, beta)?;
        out.u[r] = u;
        out.v[r] = v;
    }
    Ok(out)
}

/// Result of a spectral initialization.
#[derive(Debug, Clone, PartialEq)]
pub struct Initialization {
    pub decomposition: Decomposition,
    /// Number of components backed by a non-negligible singular value; the rest are zero.
    pub numerical_rank: usize,
}

impl Initialization {
    pub fn rank_deficient(&self) -> bool {
        self.numerical_rank < self.decomposition.rank()
    }
}

/// Top-`rank` singular triplets of `A^*(y)`, split as `sqrt(sigma)` on each side.
pub fn init_leading_singular(op: &MeasurementOperator, y: &Array1<f64>, rank: usize) -> Result<Initialization> {
    let m = op.adjoint(y)?;
    init_from_matrix(&m, rank)
}

/// Top-`rank` singular triplets of an arbitrary matrix, split as `sqrt(sigma)`.
pub fn init_from_matrix(m: &Array2<f64>, rank: usize) -> Result<Initialization> {
    let (n1, n2) = m.dim();
    if rank == 0 || rank > n1.min(n2) {
        return Err(Error::invalid(format!(
            "rank {rank} must lie in [1, min({n1}, {n2})]"
        )));
    }
    let svd = linalg::jacobi_svd(m.view());
    let smax = svd.s[0];
    let mut d = Decomposition::zeros(n1, n2, rank);
    let mut numerical_rank = 0;
    for r in 0..rank {
        let s = svd.s[r];
        if smax == 0.0 || s <= 1e-12 * smax {
            break;
        }
        let root = s.sqrt();
        d.u[r] = svd.u.column(r).to_owned() * root;
        d.v[r] = svd.v.column(r).to_owned() * root;
        numerical_rank += 1;
    }
    Ok(Initialization {
        decomposition: d,
        numerical_rank,
    })
}

/// Unit factors and scales `sigma_r = ||u^r|| ||v^r||`; zero components stay zero.
pub fn extract_normalized(d: &Decomposition) -> SparseDecomposition {
    let mut u_factors = Vec::with_capacity(d.rank());
    let mut v_factors = Vec::with_capacity(d.rank());
    let mut sigma = Array1::zeros(d.rank());
    for (r, (u, v)) in d.u.iter().zip(&d.v).enumerate() {
        let nu = norm2(u.view());
        let nv = norm2(v.view());
        if nu == 0.0 || nv == 0.0 {
            u_factors.push(Array1::zeros(u.len()));
            v_factors.push(Array1::zeros(v.len()));
        } else {
            u_factors.push(u / nu);
            v_factors.push(v / nv);
            sigma[r] = nu * nv;
        }
    }
    SparseDecomposition {
        u_factors,
        v_factors,
        sigma,
    }
}

/// Runs the alternating scheme from `init`.
pub fn atlas_run(
    op: &MeasurementOperator,
    y: &Array1<f64>,
    cfg: &SolverConfig,
    init: &Decomposition,
) -> Result<SolveReport> {
    cfg.validate()?;
    init.validate()?;
    if init.rank() != cfg.rank {
        return Err(Error::invalid(format!(
            "initialization has rank {}, config asks for {}",
            init.rank(),
            cfg.rank
        )));
    }
    if init.shape() != op.shape() || y.len() != op.m() {
        return Err(Error::invalid("initialization or data does not match the operator"));
    }

    let penalty = cfg.penalty();
    let rank = cfg.rank;
    let mut d = init.clone();
    let mut shuffler = cfg.shuffle_seed.map(ChaCha8Rng::seed_from_u64);
    let mut order: Vec<usize> = (0..rank).collect();

    let mut assembled = d.assemble();
    let mut prediction = op.apply(&assembled)?;
    let initial = {
        let r = y - &prediction;
        r.dot(&r) + penalty_sum(&d, cfg.alpha, cfg.beta, penalty)
    };
    if !initial.is_finite() {
        return Err(Error::Divergence("objective at the initialization is not finite".into()));
    }
    let mut objective_trace = vec![initial];
    let mut proximal_increments = Vec::new();
    let mut step_norms_sq = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    for sweep in 1..=cfg.max_outer {
        iterations = sweep;
        if let Some(rng) = shuffler.as_mut() {
            order.shuffle(rng);
        }
        let mut increment = 0.0;
        let mut step_sq = 0.0;
        for &r in &order {
            let u_old = d.u[r].clone();
            let v_old = d.v[r].clone();

            let a_v = op.partial_in_u(&v_old)?;
            let own = a_v.dot(&u_old);
            let residual = y - &prediction + &own;

            let anchor_u = cfg.proximal.as_ref().map(|p| 1.0 / (2.0 * p.lambda(r)));
            let u_new = solvers::tikhonov_solve_anchored(
                a_v.view(),
                residual.view(),
                cfg.alpha,
                anchor_u.map(|w| (w, u_old.view())),
            )?;

            let a_u = op.partial_in_v(&u_new)?;
            let v_new = match cfg.proximal.as_ref() {
                None => {
                    solvers::ista_with_penalty(
                        a_u.view(),
                        residual.view(),
                        v_old.view(),
                        cfg.beta,
                        penalty,
                        &cfg.ista,
                        false,
                    )?
                    .solution
                }
                Some(p) => {
                    let w = 1.0 / (2.0 * p.mu(r)).sqrt();
                    let (design, target) = solvers::augment_with_identity(&a_u, &residual, w, v_old.view());
                    solvers::ista_with_penalty(
                        design.view(),
                        target.view(),
                        v_old.view(),
                        cfg.beta,
                        penalty,
                        &cfg.ista,
                        false,
                    )?
                    .solution
                }
            };

            let du = &u_new - &u_old;
            let dv = &v_new - &v_old;
            let (du2, dv2) = (du.dot(&du), dv.dot(&dv));
            step_sq += du2 + dv2;
            if let Some(p) = &cfg.proximal {
                increment += du2 / (2.0 * p.lambda(r)) + dv2 / (2.0 * p.mu(r));
            }

            let contribution = a_u.dot(&v_new);
            prediction = prediction - &own + &contribution;
            d.u[r] = u_new;
            d.v[r] = v_new;
        }

        let next = d.assemble();
        // refresh to keep the incremental bookkeeping from drifting
        prediction = op.apply(&next)?;
        let value = {
            let r = y - &prediction;
            r.dot(&r) + penalty_sum(&d, cfg.alpha, cfg.beta, penalty)
        };
        if !value.is_finite() {
            return Err(Error::Divergence(format!("objective became non-finite in sweep {sweep}")));
        }
        objective_trace.push(value);
        step_norms_sq.push(step_sq);
        if cfg.proximal.is_some() {
            proximal_increments.push(increment);
        }

        let change = linalg::frobenius((&next - &assembled).view());
        let size = linalg::frobenius(next.view());
        assembled = next;
        if change <= cfg.outer_tol * size || change == 0.0 {
            converged = true;
            break;
        }
    }

    Ok(SolveReport {
        decomposition: d,
        objective_trace,
        iterations,
        converged,
        assembled,
        proximal_increments,
        step_norms_sq,
    })
}
