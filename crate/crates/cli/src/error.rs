use std::path::{Path, PathBuf};

use phenoflow_core::data::DataError;
use phenoflow_core::explain::ExplainError;
use phenoflow_core::neural::NeuralError;
use thiserror::Error;

/// Every failure a command can end with. [`CliError::exit_code`] maps them
/// onto the process exit status:
///
/// | code | meaning |
/// |------|---------|
/// | 0 | success |
/// | 1 | bad usage, bad configuration, or an output file could not be written |
/// | 2 | an input or intermediate file is missing, unreadable or malformed |
/// | 3 | not enough usable data (no convergent fit, under 3 QC rows, too few samples per year) |
/// | 4 | network training diverged |
/// | 5 | explanation failed or violated additivity |
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{}: {message}", path.display())]
    Ingest { path: PathBuf, message: String },
    #[error("cannot write {}: {message}", path.display())]
    Output { path: PathBuf, message: String },
    #[error("no plot-year fit converged")]
    NoConvergentFits,
    #[error("only {n} plot-years pass QC, need at least 3")]
    TooFewQcRows { n: usize },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("training diverged: {0}")]
    Divergence(String),
    #[error("explanation failed: {0}")]
    Explain(String),
    #[error("additivity violated: max |base + sum(phi) - prediction| = {max_error:e}")]
    Additivity { max_error: f64 },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) | CliError::Output { .. } => 1,
            CliError::Ingest { .. } => 2,
            CliError::NoConvergentFits
            | CliError::TooFewQcRows { .. }
            | CliError::InsufficientData(_) => 3,
            CliError::Divergence(_) => 4,
            CliError::Explain(_) | CliError::Additivity { .. } => 5,
        }
    }

    pub fn ingest(path: &Path, err: impl std::fmt::Display) -> Self {
        CliError::Ingest {
            path: path.to_path_buf(),
            message: err.to_string(),
        }
    }

    pub fn output(path: &Path, err: impl std::fmt::Display) -> Self {
        CliError::Output {
            path: path.to_path_buf(),
            message: err.to_string(),
        }
    }

    /// Classifies a training-stage error.
    pub fn from_neural(err: NeuralError) -> Self {
        if err.is_divergence() {
            return CliError::Divergence(err.to_string());
        }
        match root(&err) {
            NeuralError::MissingWeek { .. }
            | NeuralError::MissingSoil { .. }
            | NeuralError::ShapeMismatch => CliError::InsufficientData(err.to_string()),
            NeuralError::InvalidRatio(_)
            | NeuralError::InvalidHyperparams(_)
            | NeuralError::InvalidBudget => CliError::Config(err.to_string()),
            _ => CliError::InsufficientData(err.to_string()),
        }
    }

    pub fn from_explain(err: ExplainError) -> Self {
        match err {
            ExplainError::BudgetTooSmall { .. } => CliError::Config(err.to_string()),
            _ => CliError::Explain(err.to_string()),
        }
    }
}

fn root(err: &NeuralError) -> &NeuralError {
    match err {
        NeuralError::Fold { source, .. } | NeuralError::Trial { source, .. } => root(source),
        e => e,
    }
}

pub(crate) fn data_error(path: &Path, err: DataError) -> CliError {
    CliError::ingest(path, err)
}

pub type Result<T> = std::result::Result<T, CliError>;
