//! Regression networks on weekly weather plus soil temperature, with
//! year-stratified splitting, cross-validated random search and evaluation
//! against the training-mean baseline.

mod features;
pub mod mlp;
mod search;
mod split;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::predictor::Predictor;

pub use features::{
    build_features, feature_names, FeatureVector, AIR_OFFSET, IRR_OFFSET, N_FEATURES,
    PRECIP_OFFSET, SOIL_INDEX, WEEKS,
};
pub use mlp::{train_mlp, Hyperparams, LrSchedule, MlpModel, Scaler, Solver};
pub use search::{
    cross_validate, derive_seed, hyperparam_search, read_tuning, write_tuning, SearchOutcome,
    SearchSpace, TrialRecord, TUNING_HEADER,
};
pub use split::{kfold_indices, split_train_test, MIN_SAMPLES_PER_YEAR};

#[derive(Debug, Error, PartialEq)]
pub enum NeuralError {
    #[error("weather for year {year} is missing week {week}")]
    MissingWeek { year: i32, week: u32 },
    #[error("no soil temperature for plot {plot} in {year}")]
    MissingSoil { plot: String, year: i32 },
    #[error("year {year} has {count} samples, need at least {needed}")]
    TooFewSamplesInYear {
        year: i32,
        count: usize,
        needed: usize,
    },
    #[error("split ratio {0} is outside (0, 1)")]
    InvalidRatio(f64),
    #[error("cannot make {k} folds from {n} samples")]
    InvalidFolds { k: usize, n: usize },
    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparams(String),
    #[error("search budget must be at least 1")]
    InvalidBudget,
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("test set is empty")]
    EmptyTestSet,
    #[error("loss became non-finite at iteration {iteration}")]
    NonFiniteLoss { iteration: usize },
    #[error("stored model shapes are inconsistent")]
    ShapeMismatch,
    #[error("fold {fold}: {source}")]
    Fold {
        fold: usize,
        source: Box<NeuralError>,
    },
    #[error("trial {trial}: {source}")]
    Trial {
        trial: usize,
        source: Box<NeuralError>,
    },
}

impl NeuralError {
    /// True when the root cause is a diverged training run.
    pub fn is_divergence(&self) -> bool {
        match self {
            NeuralError::NonFiniteLoss { .. } => true,
            NeuralError::Fold { source, .. } | NeuralError::Trial { source, .. } => {
                source.is_divergence()
            }
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub features: FeatureVector,
    pub target: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub cv_mse: f64,
    pub test_mse: f64,
    pub test_mae: f64,
    pub test_r2: f64,
    pub naive_mse: f64,
    pub naive_mae: f64,
}

/// Test-set metrics for `model`, next to those of predicting the training
/// mean. `test_r2 = 1 - test_mse / var(test targets)`; when the test targets
/// are constant it is 1 for a perfect model and 0 otherwise.
pub fn evaluate(
    model: &dyn Predictor,
    train: &[LabeledSample],
    test: &[LabeledSample],
    cv_mse: f64,
) -> Result<EvalReport, NeuralError> {
    if test.is_empty() {
        return Err(NeuralError::EmptyTestSet);
    }
    if train.is_empty() {
        return Err(NeuralError::EmptyTrainingSet);
    }
    let train_mean = train.iter().map(|s| s.target).sum::<f64>() / train.len() as f64;
    let (x, y) = mlp::design_matrix(test);
    let pred = model.predict_batch(x.view());
    let n = test.len() as f64;
    let mut report = EvalReport {
        cv_mse,
        test_mse: 0.0,
        test_mae: 0.0,
        test_r2: 0.0,
        naive_mse: 0.0,
        naive_mae: 0.0,
    };
    for (p, t) in pred.iter().zip(&y) {
        report.test_mse += (p - t) * (p - t);
        report.test_mae += (p - t).abs();
        report.naive_mse += (train_mean - t) * (train_mean - t);
        report.naive_mae += (train_mean - t).abs();
    }
    report.test_mse /= n;
    report.test_mae /= n;
    report.naive_mse /= n;
    report.naive_mae /= n;
    let test_mean = y.sum() / n;
    let var = y
        .iter()
        .map(|t| (t - test_mean) * (t - test_mean))
        .sum::<f64>()
        / n;
    report.test_r2 = if var > 0.0 {
        1.0 - report.test_mse / var
    } else if report.test_mse == 0.0 {
        1.0
    } else {
        0.0
    };
    Ok(report)
}
