//! Seeded experiment runners and their CSV/JSON emission.
//!
//! Every trial derives its randomness from `(base_seed, cell coordinates,
//! trial)`, and results are sorted before they are written, so the output
//! bytes do not depend on the number of worker threads.

mod config;
mod output;
mod runner;

use std::path::Path;

pub use config::{
    ExperimentKind, ExperimentPlan, ExperimentSpec, InitMode, OperatorMode, ParamArm, ParamRule, RipSettings,
    SolverSettings,
};
pub use output::{
    summarize, summary_csv, trials_csv, write_outputs, Environment, OutputFormat, RunManifest, SummaryRow,
    SUMMARY_HEADER, TRIALS_HEADER,
};
pub use runner::{
    bound_params, instance_seed, is_noise_adapted, rebuild_instance, run_rip_sweep, run_single, run_trials, Instance,
    SingleReport, TrialRecord,
};

use crate::error::Result;

/// Runs a plan and writes its outputs into `dir`.
pub fn run_to_dir(plan: &ExperimentPlan, dir: &Path, format: OutputFormat) -> Result<Vec<TrialRecord>> {
    if plan.kind == ExperimentKind::SingleRecover {
        let report = run_single(plan)?;
        let records = vec![report.record.clone()];
        write_outputs(dir, plan, &records, format)?;
        std::fs::write(dir.join("report.json"), serde_json::to_string_pretty(&report)?)?;
        return Ok(records);
    }
    let records = run_trials(plan)?;
    write_outputs(dir, plan, &records, format)?;
    Ok(records)
}
