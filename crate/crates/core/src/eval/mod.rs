//! Fixed-split stratified cross-validation, precision/recall/F1, run
//! aggregation and chi-squared significance.

mod cv;
mod folds;
mod metrics;
mod significance;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

pub use cv::{cross_validate, CvOutcome, CvReport, EncoderInit, FoldResult, MajorityClass, RunResult, System, UlmfitSystem};
pub use folds::{make_folds, FoldAssignment};
pub use metrics::{aggregate_runs, compute_metrics, Aggregate, ConfusionMatrix, EvalReport, PerClass, Scores};
pub use significance::{chi2_sf_df1, chi_squared_from_table, chi_squared_test, ChiSquared};

use crate::nn::NnError;
use crate::pipeline::{LabeledSentence, PipelineError};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("empty {0}")]
    Empty(&'static str),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("label {0} is not 0 or 1")]
    BadLabel(usize),
    #[error("{n} examples cannot fill {k} folds")]
    TooFewExamples { n: usize, k: usize },
    #[error("invalid folds: {0}")]
    BadFolds(String),
    #[error("thread pool: {0}")]
    Parallel(String),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub sentences: usize,
    pub claims: usize,
    /// Percentage of sentences labelled claim.
    pub claim_pct: f64,
}

pub fn dataset_stats(data: &[LabeledSentence]) -> DatasetStats {
    let claims = data.iter().filter(|s| s.label == 1).count();
    DatasetStats {
        sentences: data.len(),
        claims,
        claim_pct: if data.is_empty() {
            0.0
        } else {
            100.0 * claims as f64 / data.len() as f64
        },
    }
}

/// Plain-text table with one row per metric and Claim / Macro columns,
/// each cell `mean ± sd` in percent.
pub fn format_table(title: &str, mean: &EvalReport, sd: &EvalReport) -> String {
    let cell = |m: f64, s: f64| format!("{:5.1} ± {:4.1}", 100.0 * m, 100.0 * s);
    let mut out = String::new();
    let _ = writeln!(out, "{title}");
    let _ = writeln!(out, "{:<8}{:>16}{:>16}", "Metric", "Claim", "Macro");
    let rows = [
        ("P", mean.per_class.claim.precision, sd.per_class.claim.precision, mean.macro_avg.precision, sd.macro_avg.precision),
        ("R", mean.per_class.claim.recall, sd.per_class.claim.recall, mean.macro_avg.recall, sd.macro_avg.recall),
        ("F", mean.per_class.claim.f1, sd.per_class.claim.f1, mean.macro_avg.f1, sd.macro_avg.f1),
    ];
    for (name, cm, cs, mm, ms) in rows {
        let _ = writeln!(out, "{name:<8}{:>16}{:>16}", cell(cm, cs), cell(mm, ms));
    }
    out
}
