//! Planted matrix classes with (effectively) sparse decompositions.
//!
//! A planted matrix is `X = sum_r sigma_r u^r (v^r)^T` with unit-norm factors.
//! Exact-sparse factors have at most `s` non-zeros; effectively sparse factors
//! only satisfy `||v||_1 <= sqrt(s) ||v||_2`.

use ndarray::{Array1, Array2};
use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, norm1, norm2};

/// Which structured class the factors are drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SparsityClass {
    /// Exactly `s`-sparse unit factors.
    ExactSparse,
    /// Unit factors with `||v||_1 <= sqrt(s)`.
    EffectivelySparse,
}

/// Unit-norm factors plus scales.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseDecomposition {
    pub u_factors: Vec<Array1<f64>>,
    pub v_factors: Vec<Array1<f64>>,
    pub sigma: Array1<f64>,
}

impl SparseDecomposition {
    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    pub fn shape(&self) -> (usize, usize) {
        (
            self.u_factors.first().map_or(0, |u| u.len()),
            self.v_factors.first().map_or(0, |v| v.len()),
        )
    }

    fn check_shapes(&self) -> Result<(usize, usize)> {
        let r = self.sigma.len();
        if r == 0 || self.u_factors.len() != r || self.v_factors.len() != r {
            return Err(Error::invalid(format!(
                "decomposition needs matching non-zero counts, got {} u, {} v, {} sigma",
                self.u_factors.len(),
                self.v_factors.len(),
                r
            )));
        }
        let (n1, n2) = self.shape();
        if n1 == 0 || n2 == 0 {
            return Err(Error::invalid("decomposition factors must be non-empty"));
        }
        if self.u_factors.iter().any(|u| u.len() != n1) || self.v_factors.iter().any(|v| v.len() != n2)
        {
            return Err(Error::invalid("decomposition factors have inconsistent lengths"));
        }
        Ok((n1, n2))
    }
}

/// Recipe for drawing a planted matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruthSpec {
    pub n1: usize,
    pub n2: usize,
    pub rank: usize,
    pub class: SparsityClass,
    /// Sparsity of the left factors (`n1` means unconstrained).
    pub s1: usize,
    /// Sparsity of the right factors.
    pub s2: usize,
    /// Cap on `||sigma||_2`; `None` leaves the scales uncapped.
    #[serde(default)]
    pub gamma_cap: Option<f64>,
    /// Reuse one support set across all components (per side).
    #[serde(default)]
    pub common_support: bool,
    /// Gram-Schmidt the right factors inside the shared support.
    #[serde(default)]
    pub orthonormalize: bool,
    /// Gram-Schmidt the left factors (requires a shared left support when `s1 < n1`).
    #[serde(default)]
    pub orthonormalize_left: bool,
    pub target_frobenius: f64,
}

impl GroundTruthSpec {
    /// Rank-`rank` matrix with dense left factors and `s`-sparse right factors.
    pub fn right_sparse(n1: usize, n2: usize, rank: usize, s: usize, target_frobenius: f64) -> Self {
        Self {
            n1,
            n2,
            rank,
            class: SparsityClass::ExactSparse,
            s1: n1,
            s2: s,
            gamma_cap: None,
            common_support: false,
            orthonormalize: false,
            orthonormalize_left: false,
            target_frobenius,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n1 == 0 || self.n2 == 0 || self.rank == 0 {
            return Err(Error::invalid("n1, n2 and rank must be positive"));
        }
        if self.s1 == 0 || self.s1 > self.n1 {
            return Err(Error::invalid(format!("s1 = {} outside [1, {}]", self.s1, self.n1)));
        }
        if self.s2 == 0 || self.s2 > self.n2 {
            return Err(Error::invalid(format!("s2 = {} outside [1, {}]", self.s2, self.n2)));
        }
        if let Some(g) = self.gamma_cap {
            if !(g >= 1.0) {
                return Err(Error::invalid(format!("gamma_cap = {g} must be >= 1")));
            }
        }
        if !(self.target_frobenius > 0.0 && self.target_frobenius.is_finite()) {
            return Err(Error::invalid("target_frobenius must be positive and finite"));
        }
        if self.orthonormalize {
            check_orthonormalizable("right", self.s2, self.n2, self.rank, self.common_support)?;
        }
        if self.orthonormalize_left {
            check_orthonormalizable("left", self.s1, self.n1, self.rank, self.common_support)?;
        }
        Ok(())
    }
}

fn check_orthonormalizable(side: &str, s: usize, n: usize, rank: usize, common: bool) -> Result<()> {
    if s < n && !common {
        return Err(Error::invalid(format!(
            "orthonormalizing {side} factors with independent supports would densify them; \
             set common_support"
        )));
    }
    if s < rank {
        return Err(Error::invalid(format!(
            "cannot fit {rank} orthonormal {side} factors in a support of size {s}"
        )));
    }
    Ok(())
}

/// Realized planted matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub decomposition: SparseDecomposition,
    pub matrix: Array2<f64>,
    pub spec: GroundTruthSpec,
}

fn check_sparsity(n: usize, s: usize) -> Result<()> {
    if s == 0 || s > n {
        return Err(Error::invalid(format!("sparsity {s} outside [1, {n}]")));
    }
    Ok(())
}

fn gaussian_on_support<R: Rng + ?Sized>(n: usize, support: &[usize], rng: &mut R) -> Array1<f64> {
    let mut v = Array1::<f64>::zeros(n);
    for &i in support {
        v[i] = rng.sample(StandardNormal);
    }
    v
}

fn normalize_in_place(v: &mut Array1<f64>) -> bool {
    let n = norm2(v.view());
    if n > 0.0 {
        *v /= n;
        true
    } else {
        false
    }
}

fn sparse_unit_on_support<R: Rng + ?Sized>(n: usize, support: &[usize], rng: &mut R) -> Array1<f64> {
    loop {
        let mut v = gaussian_on_support(n, support, rng);
        if normalize_in_place(&mut v) {
            return v;
        }
    }
}

/// Unit vector with exactly `s` non-zeros on a uniformly drawn support.
pub fn sample_sparse_unit_vector<R: Rng + ?Sized>(n: usize, s: usize, rng: &mut R) -> Result<Array1<f64>> {
    check_sparsity(n, s)?;
    let support = index::sample(rng, n, s).into_vec();
    Ok(sparse_unit_on_support(n, &support, rng))
}

/// Relative l2 mass of the dense tail added to the sparse core.
const DENSE_TAIL_MASS: f64 = 0.2;
const TAIL_ATTEMPTS_PER_LEVEL: usize = 8;
const TAIL_HALVINGS: usize = 40;

/// Unit vector with `||v||_1 <= sqrt(s)` that is generally not sparse.
///
/// Sparse core plus a dense Gaussian tail; rejected draws are retried and the
/// tail mass is halved after repeated rejections, down to the bare core (which
/// always qualifies).
pub fn sample_effectively_sparse_unit_vector<R: Rng + ?Sized>(
    n: usize,
    s: usize,
    rng: &mut R,
) -> Result<Array1<f64>> {
    check_sparsity(n, s)?;
    let support = index::sample(rng, n, s).into_vec();
    effectively_sparse_on_support(n, s, &support, rng)
}

fn effectively_sparse_on_support<R: Rng + ?Sized>(
    n: usize,
    s: usize,
    support: &[usize],
    rng: &mut R,
) -> Result<Array1<f64>> {
    let budget = (s as f64).sqrt();
    let mut mass = DENSE_TAIL_MASS;
    for _ in 0..TAIL_HALVINGS {
        for _ in 0..TAIL_ATTEMPTS_PER_LEVEL {
            let core = sparse_unit_on_support(n, support, rng);
            let mut tail = Array1::from_iter((0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
            if !normalize_in_place(&mut tail) {
                continue;
            }
            let mut v = core + tail * mass;
            if !normalize_in_place(&mut v) {
                continue;
            }
            if norm1(v.view()) <= budget {
                return Ok(v);
            }
        }
        mass *= 0.5;
    }
    Ok(sparse_unit_on_support(n, support, rng))
}

fn draw_factor<R: Rng + ?Sized>(
    class: SparsityClass,
    n: usize,
    s: usize,
    support: Option<&[usize]>,
    rng: &mut R,
) -> Result<Array1<f64>> {
    let owned;
    let support = match support {
        Some(sup) => sup,
        None => {
            owned = index::sample(rng, n, s).into_vec();
            &owned
        }
    };
    match class {
        SparsityClass::ExactSparse => Ok(sparse_unit_on_support(n, support, rng)),
        SparsityClass::EffectivelySparse => effectively_sparse_on_support(n, s, support, rng),
    }
}

/// Modified Gram-Schmidt; fails when the family is numerically dependent.
fn gram_schmidt(factors: &mut [Array1<f64>]) -> Result<()> {
    for i in 0..factors.len() {
        for j in 0..i {
            let proj = factors[i].dot(&factors[j]);
            let fj = factors[j].clone();
            factors[i].scaled_add(-proj, &fj);
        }
        let nrm = norm2(factors[i].view());
        if nrm < 1e-10 {
            return Err(Error::SingularModel(
                "factors became linearly dependent during orthonormalization".into(),
            ));
        }
        factors[i] /= nrm;
    }
    Ok(())
}

fn draw_side<R: Rng + ?Sized>(
    spec: &GroundTruthSpec,
    n: usize,
    s: usize,
    orthonormalize: bool,
    rng: &mut R,
) -> Result<Vec<Array1<f64>>> {
    let shared = if spec.common_support {
        Some(index::sample(rng, n, s).into_vec())
    } else {
        None
    };
    let mut factors = (0..spec.rank)
        .map(|_| draw_factor(spec.class, n, s, shared.as_deref(), rng))
        .collect::<Result<Vec<_>>>()?;
    if orthonormalize {
        gram_schmidt(&mut factors)?;
    }
    Ok(factors)
}

/// Draws a planted matrix following `spec`.
///
/// Scales are i.i.d. uniform on `[0.5, 1]` before a global rescale that hits
/// `target_frobenius` exactly.
pub fn sample_ground_truth<R: Rng + ?Sized>(spec: &GroundTruthSpec, rng: &mut R) -> Result<GroundTruth> {
    spec.validate()?;
    let u_factors = draw_side(spec, spec.n1, spec.s1, spec.orthonormalize_left, rng)?;
    let v_factors = draw_side(spec, spec.n2, spec.s2, spec.orthonormalize, rng)?;
    let sigma = Array1::from_iter((0..spec.rank).map(|_| rng.random_range(0.5..=1.0)));
    let mut decomposition = SparseDecomposition {
        u_factors,
        v_factors,
        sigma,
    };
    let raw = assemble_matrix(&decomposition)?;
    let norm = linalg::frobenius(raw.view());
    if norm == 0.0 {
        return Err(Error::SingularModel("planted matrix vanished".into()));
    }
    let factor = spec.target_frobenius / norm;
    decomposition.sigma *= factor;
    if let Some(cap) = spec.gamma_cap {
        let sn = norm2(decomposition.sigma.view());
        if sn > cap {
            return Err(Error::invalid(format!(
                "||sigma||_2 = {sn} exceeds gamma_cap = {cap} at target_frobenius = {}",
                spec.target_frobenius
            )));
        }
    }
    let matrix = raw * factor;
    Ok(GroundTruth {
        decomposition,
        matrix,
        spec: spec.clone(),
    })
}

/// `sum_r sigma_r u^r (v^r)^T`.
pub fn assemble_matrix(d: &SparseDecomposition) -> Result<Array2<f64>> {
    let (n1, n2) = d.check_shapes()?;
    let mut x = Array2::<f64>::zeros((n1, n2));
    for ((u, v), &s) in d.u_factors.iter().zip(&d.v_factors).zip(d.sigma.iter()) {
        add_outer(&mut x, s, u, v);
    }
    Ok(x)
}

pub(crate) fn add_outer(x: &mut Array2<f64>, scale: f64, u: &Array1<f64>, v: &Array1<f64>) {
    if scale == 0.0 {
        return;
    }
    for (i, mut row) in x.rows_mut().into_iter().enumerate() {
        let ui = scale * u[i];
        if ui != 0.0 {
            row.scaled_add(ui, v);
        }
    }
}

/// `||v||_1 / ||v||_2`.
pub fn effective_sparsity_ratio(v: &Array1<f64>) -> Result<f64> {
    let n2 = norm2(v.view());
    if n2 == 0.0 {
        return Err(Error::Domain("effective sparsity of the zero vector".into()));
    }
    Ok(norm1(v.view()) / n2)
}

/// Schatten-`p` quasi-norm `(sum_i sigma_i^p)^(1/p)`.
///
/// Singular values below `max(n1, n2) * eps * sigma_max` count as zero, so
/// round-off in numerically rank-deficient inputs does not leak into `p < 1`.
pub fn schatten_quasi_norm(x: &Array2<f64>, p: f64) -> Result<f64> {
    if !(p > 0.0) {
        return Err(Error::invalid(format!("Schatten exponent p = {p} must be positive")));
    }
    let svd = linalg::jacobi_svd(x.view());
    let smax = svd.s.first().copied().unwrap_or(0.0);
    if smax == 0.0 {
        return Ok(0.0);
    }
    let (n1, n2) = x.dim();
    let cutoff = n1.max(n2) as f64 * f64::EPSILON * smax;
    let sum: f64 = svd
        .s
        .iter()
        .filter(|&&s| s > cutoff)
        .map(|&s| (s / smax).powf(p))
        .sum();
    Ok(smax * sum.powf(1.0 / p))
}

/// `(c_U, C_U) = (1 / lambda_min(G), lambda_max(G))` of the normalized Gramian.
pub fn gramian_constants(u_factors: &[Array1<f64>]) -> Result<(f64, f64)> {
    let r = u_factors.len();
    if r == 0 {
        return Err(Error::invalid("gramian_constants needs at least one factor"));
    }
    let n = u_factors[0].len();
    let mut normalized = Vec::with_capacity(r);
    for u in u_factors {
        if u.len() != n {
            return Err(Error::invalid("gramian factors have inconsistent lengths"));
        }
        let nrm = norm2(u.view());
        if nrm == 0.0 {
            return Err(Error::SingularModel("zero factor in Gramian".into()));
        }
        normalized.push(u / nrm);
    }
    let mut g = Array2::<f64>::zeros((r, r));
    for i in 0..r {
        for j in i..r {
            let d = normalized[i].dot(&normalized[j]);
            g[[i, j]] = d;
            g[[j, i]] = d;
        }
    }
    let eig = linalg::symmetric_eigen(g.view())?;
    let lmax = eig.values[0];
    let lmin = eig.values[r - 1];
    if lmin < 1e-10 {
        return Err(Error::SingularModel(format!(
            "Gramian smallest eigenvalue {lmin:e} below 1e-10"
        )));
    }
    Ok((1.0 / lmin, lmax))
}
