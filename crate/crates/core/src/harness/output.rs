use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{ExperimentKind, ExperimentPlan};
use super::runner::TrialRecord;
use crate::error::{Error, Result};
use crate::stats;

pub const TRIALS_HEADER: &str =
    "kind,n1,n2,R,s,m,noise_ratio,alpha,beta,trial,seed,rel_error,success_02,success_04,iters,objective,wall_ms";

pub const SUMMARY_HEADER: &str = "kind,n1,n2,R,s,m,noise_ratio,target_frobenius,alpha,beta,trials,mean_rel_error,median_rel_error,success_02,success_04,mean_iters,mean_objective,bound_rel,support_fraction";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl std::str::FromStr for OutputFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(Error::config("format", format!("expected csv or json, got `{other}`"))),
        }
    }
}

/// Per-cell aggregate, recomputed from the trial rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub kind: String,
    pub n1: usize,
    pub n2: usize,
    #[serde(rename = "R")]
    pub rank: usize,
    pub s: usize,
    pub m: usize,
    pub noise_ratio: f64,
    pub target_frobenius: f64,
    /// Mean over trials (constant unless the rule is noise-adapted).
    pub alpha: f64,
    pub beta: f64,
    pub trials: usize,
    pub mean_rel_error: f64,
    pub median_rel_error: f64,
    pub success_02: f64,
    pub success_04: f64,
    pub mean_iters: f64,
    pub mean_objective: f64,
    pub bound_rel: f64,
    pub support_fraction: f64,
}

fn bit(b: bool) -> u8 {
    b as u8
}

pub fn trials_csv(records: &[TrialRecord]) -> String {
    let mut out = String::with_capacity(64 * (records.len() + 1));
    out.push_str(TRIALS_HEADER);
    out.push('\n');
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.kind,
            r.n1,
            r.n2,
            r.rank,
            r.s,
            r.m,
            r.noise_ratio,
            r.alpha,
            r.beta,
            r.trial,
            r.seed,
            r.rel_error,
            bit(r.success_02),
            bit(r.success_04),
            r.iters,
            r.objective,
            r.wall_ms
        )
        .expect("writing to a String cannot fail");
    }
    out
}

/// Groups consecutive records of the same cell.
pub fn summarize(records: &[TrialRecord]) -> Vec<SummaryRow> {
    let mut rows = Vec::new();
    for group in records.chunk_by(|a, b| a.cell == b.cell) {
        let first = &group[0];
        let col = |f: &dyn Fn(&TrialRecord) -> f64| group.iter().map(f).collect::<Vec<f64>>();
        let errors = col(&|r| r.rel_error);
        rows.push(SummaryRow {
            kind: first.kind.clone(),
            n1: first.n1,
            n2: first.n2,
            rank: first.rank,
            s: first.s,
            m: first.m,
            noise_ratio: first.noise_ratio,
            target_frobenius: first.target_frobenius,
            alpha: stats::mean(&col(&|r| r.alpha)),
            beta: stats::mean(&col(&|r| r.beta)),
            trials: group.len(),
            mean_rel_error: stats::mean(&errors),
            median_rel_error: stats::median(&errors),
            success_02: stats::mean(&col(&|r| bit(r.success_02) as f64)),
            success_04: stats::mean(&col(&|r| bit(r.success_04) as f64)),
            mean_iters: stats::mean(&col(&|r| r.iters as f64)),
            mean_objective: stats::mean(&col(&|r| r.objective)),
            bound_rel: stats::mean(&col(&|r| r.bound_rel)),
            support_fraction: stats::mean(&col(&|r| r.support_fraction)),
        });
    }
    rows
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::new();
    out.push_str(SUMMARY_HEADER);
    out.push('\n');
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.kind,
            r.n1,
            r.n2,
            r.rank,
            r.s,
            r.m,
            r.noise_ratio,
            r.target_frobenius,
            r.alpha,
            r.beta,
            r.trials,
            r.mean_rel_error,
            r.median_rel_error,
            r.success_02,
            r.success_04,
            r.mean_iters,
            r.mean_objective,
            r.bound_rel,
            r.support_fraction
        )
        .expect("writing to a String cannot fail");
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub package: String,
    pub version: String,
    pub os: String,
    pub arch: String,
    pub threads: usize,
}

impl Environment {
    pub fn current(threads: usize) -> Self {
        Self {
            package: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            os: std::env::consts::OS.into(),
            arch: std::env::consts::ARCH.into(),
            threads: if threads == 0 {
                rayon::current_num_threads()
            } else {
                threads
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub spec: ExperimentPlan,
    pub environment: Environment,
    pub outputs: Vec<String>,
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    std::fs::write(dir.join(name), contents)?;
    Ok(())
}

/// Writes `trials.*`, `summary.*` and `run.json`; returns the file names.
pub fn write_outputs(
    dir: &Path,
    plan: &ExperimentPlan,
    records: &[TrialRecord],
    format: OutputFormat,
) -> Result<Vec<String>> {
    std::fs::create_dir_all(dir)?;
    let summary = summarize(records);
    let mut names = Vec::new();
    match format {
        OutputFormat::Csv => {
            write(dir, "trials.csv", &trials_csv(records))?;
            write(dir, "summary.csv", &summary_csv(&summary))?;
            names.extend(["trials.csv".to_string(), "summary.csv".to_string()]);
        }
        OutputFormat::Json => {
            write(dir, "trials.json", &serde_json::to_string_pretty(records)?)?;
            write(dir, "summary.json", &serde_json::to_string_pretty(&summary)?)?;
            names.extend(["trials.json".to_string(), "summary.json".to_string()]);
        }
    }
    if plan.kind == ExperimentKind::SingleRecover {
        names.push("report.json".into());
    }
    names.push("run.json".into());
    let manifest = RunManifest {
        spec: plan.clone(),
        environment: Environment::current(plan.threads),
        outputs: names.clone(),
    };
    write(dir, "run.json", &serde_json::to_string_pretty(&manifest)?)?;
    Ok(names)
}
