//! Experiment configuration: a single JSON document, strict about unknown
//! fields, with kind-specific defaults for everything left out.

use serde::{Deserialize, Serialize};

use crate::atlas::ProximalConfig;
use crate::error::{Error, Result};
use crate::measurement::Ensemble;
use crate::models::SparsityClass;
use crate::solvers::IstaConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    NoiseSweep,
    ParamSweep,
    NormSweep,
    PhaseDiagram,
    InitStudy,
    RipSweep,
    SingleRecover,
}

impl ExperimentKind {
    pub fn label(self) -> &'static str {
        match self {
            ExperimentKind::NoiseSweep => "noise-sweep",
            ExperimentKind::ParamSweep => "param-sweep",
            ExperimentKind::NormSweep => "norm-sweep",
            ExperimentKind::PhaseDiagram => "phase-diagram",
            ExperimentKind::InitStudy => "init-study",
            ExperimentKind::RipSweep => "rip-sweep",
            ExperimentKind::SingleRecover => "single-recover",
        }
    }
}

/// How `(alpha, beta)` is chosen per trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ParamRule {
    Fixed { alpha: f64, beta: f64 },
    /// `alpha = kappa * beta` for every `beta` in the grid.
    Ratio { kappa: f64, betas: Vec<f64> },
    /// `alpha = beta = ||eta||^2 / ||X||_{2/3}^{2/3}`, computed per trial.
    NoiseAdapted,
}

/// One `(alpha, beta)` arm of a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ParamArm {
    Fixed { alpha: f64, beta: f64 },
    NoiseAdapted,
}

impl ParamRule {
    pub fn arms(&self) -> Vec<ParamArm> {
        match self {
            ParamRule::Fixed { alpha, beta } => vec![ParamArm::Fixed {
                alpha: *alpha,
                beta: *beta,
            }],
            ParamRule::Ratio { kappa, betas } => betas
                .iter()
                .map(|&beta| ParamArm::Fixed {
                    alpha: kappa * beta,
                    beta,
                })
                .collect(),
            ParamRule::NoiseAdapted => vec![ParamArm::NoiseAdapted],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OperatorMode {
    /// One operator per measurement count, shared by every trial.
    PerSweep,
    PerTrial,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitMode {
    /// Leading singular pairs of `A*(y)`.
    AdjointSvd,
    /// Leading singular pairs of `X + Z` with a Gaussian `Z` scaled to `||Z||_F = norm`.
    PerturbedTruth { norm: f64 },
}

impl InitMode {
    pub fn label(&self) -> String {
        match self {
            InitMode::AdjointSvd => "adjoint-svd".into(),
            InitMode::PerturbedTruth { norm } => format!("perturbed-truth:{norm}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSettings {
    pub max_outer: usize,
    pub outer_tol: f64,
    pub ista: IstaConfig,
    pub proximal: Option<ProximalConfig>,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            max_outer: 300,
            outer_tol: 1e-6,
            ista: IstaConfig::default(),
            proximal: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RipSettings {
    /// Probe matrices per operator.
    pub samples: usize,
    /// `||sigma||_2` of every probe matrix.
    pub gamma: f64,
}

impl Default for RipSettings {
    fn default() -> Self {
        Self {
            samples: 1000,
            gamma: 1.0,
        }
    }
}

/// Configuration as written by the user; `None` means "default for the kind".
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(default)]
    pub kind: Option<ExperimentKind>,
    #[serde(default)]
    pub base_seed: Option<u64>,
    #[serde(default)]
    pub n1: Option<usize>,
    #[serde(default)]
    pub n2: Option<usize>,
    #[serde(default)]
    pub rank: Option<usize>,
    /// Sparsity grid of the right factors.
    #[serde(default)]
    pub s: Option<Vec<usize>>,
    /// Sparsity of the left factors.
    #[serde(default)]
    pub s1: Option<usize>,
    #[serde(default)]
    pub class: Option<SparsityClass>,
    #[serde(default)]
    pub common_support: Option<bool>,
    #[serde(default)]
    pub orthonormalize: Option<bool>,
    #[serde(default)]
    pub orthonormalize_left: Option<bool>,
    #[serde(default)]
    pub m: Option<Vec<usize>>,
    #[serde(default)]
    pub noise_ratios: Option<Vec<f64>>,
    #[serde(default)]
    pub target_frobenius: Option<Vec<f64>>,
    #[serde(default)]
    pub params: Option<ParamRule>,
    #[serde(default)]
    pub trials: Option<usize>,
    #[serde(default)]
    pub operator_mode: Option<OperatorMode>,
    #[serde(default)]
    pub ensemble: Option<Ensemble>,
    /// Initialization arms; every arm sees the same planted instances.
    #[serde(default)]
    pub init: Option<Vec<InitMode>>,
    #[serde(default)]
    pub solver: Option<SolverSettings>,
    /// Sparsity-control scale recorded with the bound evaluations.
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub rip: Option<RipSettings>,
    #[serde(default)]
    pub threads: Option<usize>,
    /// Fill `wall_ms`; off by default because timings break byte-identical output.
    #[serde(default)]
    pub record_wall_time: Option<bool>,
}

/// Fully resolved configuration; this is what `run.json` echoes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlan {
    pub kind: ExperimentKind,
    pub base_seed: u64,
    pub n1: usize,
    pub n2: usize,
    pub rank: usize,
    pub s: Vec<usize>,
    pub s1: usize,
    pub class: SparsityClass,
    pub common_support: bool,
    pub orthonormalize: bool,
    pub orthonormalize_left: bool,
    pub m: Vec<usize>,
    pub noise_ratios: Vec<f64>,
    pub target_frobenius: Vec<f64>,
    pub params: ParamRule,
    pub trials: usize,
    pub operator_mode: OperatorMode,
    pub ensemble: Ensemble,
    pub init: Vec<InitMode>,
    pub solver: SolverSettings,
    pub gamma: f64,
    pub rip: RipSettings,
    pub threads: usize,
    pub record_wall_time: bool,
}

fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    let mut grid: Vec<f64> = (0..points)
        .map(|i| (a + (b - a) * i as f64 / (points - 1) as f64).exp())
        .collect();
    grid[0] = lo;
    grid[points - 1] = hi;
    grid
}

struct Defaults {
    n1: usize,
    n2: usize,
    rank: usize,
    s: Vec<usize>,
    m: Vec<usize>,
    noise_ratios: Vec<f64>,
    target_frobenius: Vec<f64>,
    params: ParamRule,
    trials: usize,
    operator_mode: OperatorMode,
    init: Vec<InitMode>,
}

fn defaults(kind: ExperimentKind) -> Defaults {
    let half = ParamRule::Fixed { alpha: 0.5, beta: 0.5 };
    let base = Defaults {
        n1: 16,
        n2: 100,
        rank: 1,
        s: vec![10],
        m: vec![90],
        noise_ratios: vec![0.0],
        target_frobenius: vec![10.0],
        params: half.clone(),
        trials: 20,
        operator_mode: OperatorMode::PerSweep,
        init: vec![InitMode::AdjointSvd],
    };
    match kind {
        ExperimentKind::NoiseSweep => Defaults {
            noise_ratios: vec![0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.7, 1.0],
            params: ParamRule::NoiseAdapted,
            ..base
        },
        ExperimentKind::ParamSweep => Defaults {
            params: ParamRule::Ratio {
                kappa: 1.0,
                betas: log_grid(0.02, 2.0, 13),
            },
            ..base
        },
        ExperimentKind::NormSweep => Defaults {
            target_frobenius: vec![1.0, 2.0, 3.0, 5.0, 7.0, 10.0, 15.0],
            ..base
        },
        ExperimentKind::PhaseDiagram => Defaults {
            n1: 4,
            n2: 128,
            s: vec![4, 16, 32, 64, 96],
            m: vec![32, 96, 192, 320, 480],
            noise_ratios: vec![0.0, 0.3],
            operator_mode: OperatorMode::PerTrial,
            ..base
        },
        ExperimentKind::InitStudy => Defaults {
            n1: 8,
            n2: 128,
            s: vec![8, 16, 32, 64],
            m: vec![128, 256, 512, 768],
            noise_ratios: vec![0.3],
            operator_mode: OperatorMode::PerTrial,
            init: vec![
                InitMode::PerturbedTruth { norm: 100.0 },
                InitMode::AdjointSvd,
                InitMode::PerturbedTruth { norm: 0.2 },
            ],
            ..base
        },
        ExperimentKind::RipSweep => Defaults {
            n1: 8,
            n2: 64,
            s: vec![8],
            m: vec![100, 400, 1600],
            operator_mode: OperatorMode::PerTrial,
            ..base
        },
        ExperimentKind::SingleRecover => Defaults {
            m: vec![400],
            params: ParamRule::Fixed { alpha: 0.05, beta: 0.05 },
            trials: 1,
            operator_mode: OperatorMode::PerTrial,
            ..base
        },
    }
}

fn cfg_err(field: impl Into<String>, message: impl Into<String>) -> Error {
    Error::config(field, message)
}

impl ExperimentSpec {
    /// Parses a JSON document; errors name the offending field path.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let field = if path == "." || path.is_empty() { "<root>".to_string() } else { path };
            cfg_err(field, e.into_inner().to_string())
        })
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    /// Fills defaults for the kind and validates the result.
    pub fn resolve(&self) -> Result<ExperimentPlan> {
        let kind = self
            .kind
            .ok_or_else(|| cfg_err("kind", "experiment kind is required"))?;
        let d = defaults(kind);
        let n1 = self.n1.unwrap_or(d.n1);
        let plan = ExperimentPlan {
            kind,
            base_seed: self.base_seed.unwrap_or(0),
            n1,
            n2: self.n2.unwrap_or(d.n2),
            rank: self.rank.unwrap_or(d.rank),
            s: self.s.clone().unwrap_or(d.s),
            s1: self.s1.unwrap_or(n1),
            class: self.class.unwrap_or(SparsityClass::ExactSparse),
            common_support: self.common_support.unwrap_or(false),
            orthonormalize: self.orthonormalize.unwrap_or(false),
            orthonormalize_left: self.orthonormalize_left.unwrap_or(false),
            m: self.m.clone().unwrap_or(d.m),
            noise_ratios: self.noise_ratios.clone().unwrap_or(d.noise_ratios),
            target_frobenius: self.target_frobenius.clone().unwrap_or(d.target_frobenius),
            params: self.params.clone().unwrap_or(d.params),
            trials: self.trials.unwrap_or(d.trials),
            operator_mode: self.operator_mode.unwrap_or(d.operator_mode),
            ensemble: self.ensemble.unwrap_or(Ensemble::Gaussian),
            init: self.init.clone().unwrap_or(d.init),
            solver: self.solver.clone().unwrap_or_default(),
            gamma: self.gamma.unwrap_or(1.0),
            rip: self.rip.unwrap_or_default(),
            threads: self.threads.unwrap_or(0),
            record_wall_time: self.record_wall_time.unwrap_or(false),
        };
        plan.validate()?;
        Ok(plan)
    }
}

fn positive_finite(x: f64) -> bool {
    x > 0.0 && x.is_finite()
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<()> {
        for (field, value) in [("n1", self.n1), ("n2", self.n2), ("rank", self.rank), ("trials", self.trials)] {
            if value == 0 {
                return Err(cfg_err(field, "must be at least 1"));
            }
        }
        if self.rank > self.n1.min(self.n2) {
            return Err(cfg_err("rank", format!("exceeds min(n1, n2) = {}", self.n1.min(self.n2))));
        }
        if self.s1 == 0 || self.s1 > self.n1 {
            return Err(cfg_err("s1", format!("must lie in 1..={}", self.n1)));
        }
        let grids = [
            ("s", self.s.is_empty()),
            ("m", self.m.is_empty()),
            ("noise_ratios", self.noise_ratios.is_empty()),
            ("target_frobenius", self.target_frobenius.is_empty()),
            ("init", self.init.is_empty()),
        ];
        for (field, empty) in grids {
            if empty {
                return Err(cfg_err(field, "grid must not be empty"));
            }
        }
        for (i, &s) in self.s.iter().enumerate() {
            if s == 0 || s > self.n2 {
                return Err(cfg_err(format!("s[{i}]"), format!("must lie in 1..={}", self.n2)));
            }
        }
        for (i, &m) in self.m.iter().enumerate() {
            if m == 0 {
                return Err(cfg_err(format!("m[{i}]"), "must be at least 1"));
            }
        }
        for (i, &r) in self.noise_ratios.iter().enumerate() {
            if !(r >= 0.0) || !r.is_finite() {
                return Err(cfg_err(format!("noise_ratios[{i}]"), "must be finite and non-negative"));
            }
        }
        for (i, &f) in self.target_frobenius.iter().enumerate() {
            if !positive_finite(f) {
                return Err(cfg_err(format!("target_frobenius[{i}]"), "must be positive"));
            }
        }
        match &self.params {
            ParamRule::Fixed { alpha, beta } => {
                if !positive_finite(*alpha) {
                    return Err(cfg_err("params.alpha", "must be positive"));
                }
                if !positive_finite(*beta) {
                    return Err(cfg_err("params.beta", "must be positive"));
                }
            }
            ParamRule::Ratio { kappa, betas } => {
                if !positive_finite(*kappa) {
                    return Err(cfg_err("params.kappa", "must be positive"));
                }
                if betas.is_empty() {
                    return Err(cfg_err("params.betas", "grid must not be empty"));
                }
                for (i, &b) in betas.iter().enumerate() {
                    if !positive_finite(b) {
                        return Err(cfg_err(format!("params.betas[{i}]"), "must be positive"));
                    }
                }
            }
            ParamRule::NoiseAdapted => {
                if self.kind != ExperimentKind::RipSweep && self.noise_ratios.contains(&0.0) {
                    return Err(cfg_err(
                        "params",
                        "the noise-adapted rule gives alpha = beta = 0 at noise ratio 0",
                    ));
                }
            }
        }
        for (i, init) in self.init.iter().enumerate() {
            if let InitMode::PerturbedTruth { norm } = init {
                if !(*norm >= 0.0) || !norm.is_finite() {
                    return Err(cfg_err(format!("init[{i}].norm"), "must be finite and non-negative"));
                }
            }
        }
        if self.solver.max_outer == 0 {
            return Err(cfg_err("solver.max_outer", "must be at least 1"));
        }
        if !positive_finite(self.solver.outer_tol) {
            return Err(cfg_err("solver.outer_tol", "must be positive"));
        }
        self.solver
            .ista
            .validate()
            .map_err(|e| cfg_err("solver.ista", e.to_string()))?;
        if let Some(p) = &self.solver.proximal {
            for (name, vals) in [("lambda", &p.lambda), ("mu", &p.mu)] {
                if vals.len() != 1 && vals.len() != self.rank {
                    return Err(cfg_err(
                        format!("solver.proximal.{name}"),
                        format!("needs 1 or {} entries", self.rank),
                    ));
                }
                if vals.iter().any(|x| !positive_finite(*x)) {
                    return Err(cfg_err(format!("solver.proximal.{name}"), "entries must be positive"));
                }
            }
        }
        if !positive_finite(self.gamma) {
            return Err(cfg_err("gamma", "must be positive"));
        }
        if self.rip.samples == 0 {
            return Err(cfg_err("rip.samples", "must be at least 1"));
        }
        if !positive_finite(self.rip.gamma) {
            return Err(cfg_err("rip.gamma", "must be positive"));
        }
        self.ground_truth_spec(self.s[0], self.target_frobenius[0])
            .validate()
            .map_err(|e| cfg_err("<ground truth>", e.to_string()))?;
        Ok(())
    }

    pub fn ground_truth_spec(&self, s: usize, target_frobenius: f64) -> crate::models::GroundTruthSpec {
        crate::models::GroundTruthSpec {
            n1: self.n1,
            n2: self.n2,
            rank: self.rank,
            class: self.class,
            s1: self.s1,
            s2: s,
            gamma_cap: None,
            common_support: self.common_support,
            orthonormalize: self.orthonormalize,
            orthonormalize_left: self.orthonormalize_left,
            target_frobenius,
        }
    }

    pub fn arms(&self) -> Vec<ParamArm> {
        self.params.arms()
    }
}
