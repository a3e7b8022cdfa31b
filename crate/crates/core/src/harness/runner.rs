use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentKind, ExperimentPlan, InitMode, OperatorMode, ParamArm, ParamRule};
use crate::analysis::{
    self, BoundParams, BoundednessVerdict, DeltaSource, ProbeClass, RipProbeReport, SparsityVerdict,
};
use crate::atlas::{self, Decomposition, SolveReport, SolverConfig};
use crate::error::{Error, Result};
use crate::linalg::{self, norm2};
use crate::measurement::{self, MeasurementOperator};
use crate::models::{self, GroundTruth};
use crate::seeding;

/// One row of `trials.csv` plus per-trial extras kept in the JSON output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub kind: String,
    pub n1: usize,
    pub n2: usize,
    #[serde(rename = "R")]
    pub rank: usize,
    pub s: usize,
    pub m: usize,
    pub noise_ratio: f64,
    pub alpha: f64,
    pub beta: f64,
    pub trial: usize,
    pub seed: u64,
    pub rel_error: f64,
    pub success_02: bool,
    pub success_04: bool,
    pub iters: usize,
    pub objective: f64,
    pub wall_ms: u64,
    /// Index of the cell in emission order.
    pub cell: usize,
    pub target_frobenius: f64,
    pub init: String,
    pub noise_norm: f64,
    pub converged: bool,
    /// Bound on the relative error for this trial (`delta = 0`).
    pub bound_rel: f64,
    /// Fraction of entries of the leading right factor above `1e-8` in magnitude.
    pub support_fraction: f64,
    /// FNV-1a hash of the planted matrix, equal across paired arms.
    pub instance_hash: u64,
}

const SUPPORT_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy)]
struct Cell {
    index: usize,
    s: usize,
    m: usize,
    noise_ratio: f64,
    target_frobenius: f64,
    arm: ParamArm,
    init: InitMode,
}

fn enumerate_cells(plan: &ExperimentPlan) -> Vec<Cell> {
    let arms = plan.arms();
    let mut cells = Vec::new();
    for &s in &plan.s {
        for &m in &plan.m {
            for &noise_ratio in &plan.noise_ratios {
                for &target_frobenius in &plan.target_frobenius {
                    for &arm in &arms {
                        for &init in &plan.init {
                            cells.push(Cell {
                                index: cells.len(),
                                s,
                                m,
                                noise_ratio,
                                target_frobenius,
                                arm,
                                init,
                            });
                        }
                    }
                }
            }
        }
    }
    cells
}

/// Seed of the planted instance. Arm coordinates (alpha/beta, init mode) are
/// left out so that compared arms see identical instances.
pub fn instance_seed(plan: &ExperimentPlan, s: usize, m: usize, noise_ratio: f64, target_frobenius: f64, trial: usize) -> u64 {
    seeding::derive_seed(
        plan.base_seed,
        &format!(
            "kind={}|n1={}|n2={}|R={}|s={s}|m={m}|noise={noise_ratio}|frob={target_frobenius}|trial={trial}",
            plan.kind.label(),
            plan.n1,
            plan.n2,
            plan.rank
        ),
    )
}

fn sweep_operator_seed(plan: &ExperimentPlan, m: usize) -> u64 {
    seeding::derive_seed(
        plan.base_seed,
        &format!("kind={}|operator|n1={}|n2={}|m={m}", plan.kind.label(), plan.n1, plan.n2),
    )
}

fn matrix_hash(x: &Array2<f64>) -> u64 {
    use std::hash::Hasher;
    let mut h = fnv::FnvHasher::default();
    for v in x.iter() {
        h.write(&v.to_bits().to_le_bytes());
    }
    h.finish()
}

/// Planted instance, operator and measurements of one trial.
pub struct Instance {
    pub seed: u64,
    pub ground: GroundTruth,
    pub op: Arc<MeasurementOperator>,
    pub y: Array1<f64>,
    pub noise_norm: f64,
    pub schatten_23: f64,
}

fn build_operator(plan: &ExperimentPlan, m: usize, seed: u64) -> Result<MeasurementOperator> {
    measurement::OperatorSpec {
        seed,
        m,
        n1: plan.n1,
        n2: plan.n2,
        ensemble: plan.ensemble,
    }
    .build()
}

fn make_instance(
    plan: &ExperimentPlan,
    cell: &Cell,
    trial: usize,
    shared: &BTreeMap<usize, Arc<MeasurementOperator>>,
) -> Result<Instance> {
    let seed = instance_seed(plan, cell.s, cell.m, cell.noise_ratio, cell.target_frobenius, trial);
    let spec = plan.ground_truth_spec(cell.s, cell.target_frobenius);
    let ground = models::sample_ground_truth(&spec, &mut seeding::rng_for(seed, "truth"))?;
    let op = match plan.operator_mode {
        OperatorMode::PerSweep => Arc::clone(&shared[&cell.m]),
        OperatorMode::PerTrial => Arc::new(build_operator(plan, cell.m, seeding::derive_seed(seed, "operator"))?),
    };
    let clean = op.apply(&ground.matrix)?;
    let fro = linalg::frobenius(ground.matrix.view());
    let noisy = measurement::add_noise(&clean, cell.noise_ratio, fro, &mut seeding::rng_for(seed, "noise"))?;
    let schatten_23 = models::schatten_quasi_norm(&ground.matrix, 2.0 / 3.0)?;
    Ok(Instance {
        seed,
        ground,
        op,
        y: noisy.y,
        noise_norm: noisy.noise_norm,
        schatten_23,
    })
}

fn resolve_arm(arm: ParamArm, inst: &Instance) -> Result<(f64, f64)> {
    match arm {
        ParamArm::Fixed { alpha, beta } => Ok((alpha, beta)),
        ParamArm::NoiseAdapted => {
            let p = analysis::noise_adapted_parameter(inst.noise_norm, inst.schatten_23);
            if !(p > 0.0) {
                return Err(Error::config("params", "noise-adapted rule needs non-zero noise"));
            }
            Ok((p, p))
        }
    }
}

fn initialize(plan: &ExperimentPlan, init: InitMode, inst: &Instance) -> Result<Decomposition> {
    let out = match init {
        InitMode::AdjointSvd => atlas::init_leading_singular(&inst.op, &inst.y, plan.rank)?,
        InitMode::PerturbedTruth { norm } => {
            let mut rng = seeding::rng_for(inst.seed, "perturbation");
            let (n1, n2) = (plan.n1, plan.n2);
            let mut z = Array2::from_shape_fn((n1, n2), |_| rng.sample::<f64, _>(StandardNormal));
            let zn = linalg::frobenius(z.view());
            if zn > 0.0 {
                z *= norm / zn;
            }
            atlas::init_from_matrix(&(&inst.ground.matrix + &z), plan.rank)?
        }
    };
    Ok(out.decomposition)
}

pub(crate) fn solver_config(plan: &ExperimentPlan, alpha: f64, beta: f64) -> SolverConfig {
    SolverConfig {
        max_outer: plan.solver.max_outer,
        outer_tol: plan.solver.outer_tol,
        proximal: plan.solver.proximal.clone(),
        ista: plan.solver.ista,
        ..SolverConfig::new(alpha, beta, plan.rank)
    }
}

/// Bound parameters of an instance with `delta = 0`.
pub fn bound_params(plan: &ExperimentPlan, s: usize, inst: &Instance) -> BoundParams {
    let c_u = models::gramian_constants(&inst.ground.decomposition.u_factors)
        .map(|(c, _)| c)
        .unwrap_or(f64::INFINITY);
    BoundParams {
        s: s as f64,
        rank: plan.rank,
        gamma: plan.gamma,
        c: 1.0,
        delta: 0.0,
        delta_source: DeltaSource::UserSupplied,
        c_u,
        noise_norm: inst.noise_norm,
        schatten_23: inst.schatten_23,
    }
}

fn leading_support_fraction(d: &Decomposition) -> f64 {
    let lead = (0..d.rank()).max_by(|&a, &b| {
        let ea = norm2(d.u[a].view()) * norm2(d.v[a].view());
        let eb = norm2(d.u[b].view()) * norm2(d.v[b].view());
        ea.total_cmp(&eb).then(b.cmp(&a))
    });
    match lead {
        Some(r) => {
            let v = &d.v[r];
            v.iter().filter(|x| x.abs() > SUPPORT_EPS).count() as f64 / v.len() as f64
        }
        None => 0.0,
    }
}

struct TrialOutcome {
    record: TrialRecord,
    report: SolveReport,
    alpha: f64,
    beta: f64,
}

fn kind_label(plan: &ExperimentPlan, init: InitMode) -> String {
    if plan.init.len() > 1 {
        format!("{}/{}", plan.kind.label(), init.label())
    } else {
        plan.kind.label().to_string()
    }
}

fn run_trial(
    plan: &ExperimentPlan,
    cell: &Cell,
    trial: usize,
    shared: &BTreeMap<usize, Arc<MeasurementOperator>>,
) -> Result<(TrialOutcome, Instance)> {
    let start = Instant::now();
    let inst = make_instance(plan, cell, trial, shared)?;
    let (alpha, beta) = resolve_arm(cell.arm, &inst)?;
    let init = initialize(plan, cell.init, &inst)?;
    let report = atlas::atlas_run(&inst.op, &inst.y, &solver_config(plan, alpha, beta), &init)?;
    let rel_error = analysis::relative_error(&inst.ground.matrix, &report.assembled)?;
    let fro = linalg::frobenius(inst.ground.matrix.view());
    let params = bound_params(plan, cell.s, &inst);
    let bound = match cell.arm {
        ParamArm::NoiseAdapted => analysis::corollary_bound(&params),
        ParamArm::Fixed { .. } => analysis::theorem_bound(&params, alpha, beta),
    };
    let wall_ms = if plan.record_wall_time {
        start.elapsed().as_millis() as u64
    } else {
        0
    };
    let record = TrialRecord {
        kind: kind_label(plan, cell.init),
        n1: plan.n1,
        n2: plan.n2,
        rank: plan.rank,
        s: cell.s,
        m: cell.m,
        noise_ratio: cell.noise_ratio,
        alpha,
        beta,
        trial,
        seed: inst.seed,
        rel_error,
        success_02: analysis::success(rel_error, 0.2),
        success_04: analysis::success(rel_error, 0.4),
        iters: report.iterations,
        objective: report.objective_trace.last().copied().unwrap_or(f64::NAN),
        wall_ms,
        cell: cell.index,
        target_frobenius: cell.target_frobenius,
        init: cell.init.label(),
        noise_norm: inst.noise_norm,
        converged: report.converged,
        bound_rel: bound / fro,
        support_fraction: leading_support_fraction(&report.decomposition),
        instance_hash: matrix_hash(&inst.ground.matrix),
    };
    Ok((
        TrialOutcome {
            record,
            report,
            alpha,
            beta,
        },
        inst,
    ))
}

fn with_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::invalid(format!("cannot build worker pool: {e}")))?;
    Ok(pool.install(f))
}

/// Runs every trial of a sweep-type plan. Records come back in (cell, trial)
/// order whatever the number of workers.
pub fn run_trials(plan: &ExperimentPlan) -> Result<Vec<TrialRecord>> {
    plan.validate()?;
    if plan.kind == ExperimentKind::RipSweep {
        return Ok(run_rip_sweep(plan)?.0);
    }
    let cells = enumerate_cells(plan);
    let mut shared = BTreeMap::new();
    if plan.operator_mode == OperatorMode::PerSweep {
        for &m in &plan.m {
            shared.insert(m, Arc::new(build_operator(plan, m, sweep_operator_seed(plan, m))?));
        }
    }
    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..plan.trials).map(move |t| (c, t)))
        .collect();
    let mut records = with_pool(plan.threads, || {
        jobs.par_iter()
            .map(|&(c, t)| run_trial(plan, &cells[c], t, &shared).map(|(o, _)| o.record))
            .collect::<Result<Vec<_>>>()
    })??;
    records.sort_by_key(|r| (r.cell, r.trial));
    Ok(records)
}

/// Runs the probe sweep; one record per (m, probe) with
/// `rel_error = max_deviation`, `objective = mean_deviation`, `iters = samples`.
pub fn run_rip_sweep(plan: &ExperimentPlan) -> Result<(Vec<TrialRecord>, Vec<RipProbeReport>)> {
    let class = ProbeClass {
        class: plan.class,
        rank: plan.rank,
        s1: plan.s1,
        s2: 0,
        gamma: plan.rip.gamma,
    };
    let mut jobs = Vec::new();
    for &s in &plan.s {
        for &m in &plan.m {
            for t in 0..plan.trials {
                jobs.push((jobs.len() / plan.trials, s, m, t));
            }
        }
    }
    let out = with_pool(plan.threads, || {
        jobs.par_iter()
            .map(|&(cell, s, m, t)| {
                let start = Instant::now();
                let seed = instance_seed(plan, s, m, 0.0, plan.rip.gamma, t);
                let op = build_operator(plan, m, seeding::derive_seed(seed, "operator"))?;
                let report = analysis::rip_probe(
                    &op,
                    &ProbeClass { s2: s, ..class },
                    plan.rip.samples,
                    seeding::derive_seed(seed, "samples"),
                )?;
                let wall_ms = if plan.record_wall_time {
                    start.elapsed().as_millis() as u64
                } else {
                    0
                };
                let record = TrialRecord {
                    kind: plan.kind.label().to_string(),
                    n1: plan.n1,
                    n2: plan.n2,
                    rank: plan.rank,
                    s,
                    m,
                    noise_ratio: 0.0,
                    alpha: 0.0,
                    beta: 0.0,
                    trial: t,
                    seed,
                    rel_error: report.max_deviation,
                    success_02: report.max_deviation <= 0.2,
                    success_04: report.max_deviation <= 0.4,
                    iters: report.samples,
                    objective: report.mean_deviation,
                    wall_ms,
                    cell,
                    target_frobenius: plan.rip.gamma,
                    init: String::new(),
                    noise_norm: 0.0,
                    converged: true,
                    bound_rel: f64::NAN,
                    support_fraction: f64::NAN,
                    instance_hash: 0,
                };
                Ok((record, report))
            })
            .collect::<Result<Vec<_>>>()
    })??;
    Ok(out.into_iter().unzip())
}

/// Full report of a single recovery.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingleReport {
    pub record: TrialRecord,
    pub alpha: f64,
    pub beta: f64,
    pub solve: SolveReport,
    pub bound_params: BoundParams,
    pub theorem_bound: f64,
    pub corollary_bound: f64,
    pub misfit_bound_rhs: f64,
    pub final_misfit_sq: f64,
    pub boundedness: BoundednessVerdict,
    pub sparsity_control: Vec<SparsityVerdict>,
}

/// One pipeline run on the first cell of the plan, with bounds and lemma verdicts.
pub fn run_single(plan: &ExperimentPlan) -> Result<SingleReport> {
    plan.validate()?;
    let cell = enumerate_cells(plan)[0];
    let mut shared = BTreeMap::new();
    if plan.operator_mode == OperatorMode::PerSweep {
        shared.insert(cell.m, Arc::new(build_operator(plan, cell.m, sweep_operator_seed(plan, cell.m))?));
    }
    let (outcome, inst) = run_trial(plan, &cell, 0, &shared)?;
    let (alpha, beta) = (outcome.alpha, outcome.beta);
    let params = bound_params(plan, cell.s, &inst);
    let boundedness = analysis::check_boundedness(
        &inst.op,
        &inst.y,
        &inst.ground,
        &outcome.report.decomposition,
        alpha,
        beta,
        inst.noise_norm,
    )?;
    let sparsity_control = analysis::check_sparsity_control(&outcome.report.decomposition, &inst.y, beta, plan.gamma)?;
    let residual = &inst.y - &inst.op.apply(&outcome.report.assembled)?;
    Ok(SingleReport {
        alpha,
        beta,
        bound_params: params,
        theorem_bound: analysis::theorem_bound(&params, alpha, beta),
        corollary_bound: analysis::corollary_bound(&params),
        misfit_bound_rhs: analysis::misfit_bound_rhs(&inst.ground, alpha, beta, inst.noise_norm),
        final_misfit_sq: residual.dot(&residual),
        boundedness,
        sparsity_control,
        record: outcome.record,
        solve: outcome.report,
    })
}

/// Planted instance of one trial, rebuilt from the plan alone.
pub fn rebuild_instance(plan: &ExperimentPlan, s: usize, m: usize, noise_ratio: f64, target_frobenius: f64, trial: usize) -> Result<Instance> {
    let cell = Cell {
        index: 0,
        s,
        m,
        noise_ratio,
        target_frobenius,
        arm: plan.arms()[0],
        init: plan.init[0],
    };
    let mut shared = BTreeMap::new();
    if plan.operator_mode == OperatorMode::PerSweep {
        shared.insert(m, Arc::new(build_operator(plan, m, sweep_operator_seed(plan, m))?));
    }
    make_instance(plan, &cell, trial, &shared)
}

/// True when the plan's rule computes `(alpha, beta)` from the noise.
pub fn is_noise_adapted(plan: &ExperimentPlan) -> bool {
    matches!(plan.params, ParamRule::NoiseAdapted)
}
