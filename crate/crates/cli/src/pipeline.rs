//! The analysis stages as plain functions over in-memory data. The command
//! layer adds file handling around them.

use std::collections::HashMap;

use phenoflow_core::data::{
    group_plot_years, Category, NdviSample, PlotRecord, SoilTempSeries, WeatherWeekly,
};
use phenoflow_core::explain::{
    aggregate_weekly, explain_instance, select_background, ExplainError, SampleShap,
    ShapExplanation,
};
use phenoflow_core::linstats::{ols_fit, LinRegResult, StatsError};
use phenoflow_core::neural::{
    build_features, derive_seed, evaluate, hyperparam_search, split_train_test, train_mlp,
    EvalReport, FeatureVector, LabeledSample, MlpModel, NeuralError, SearchOutcome, SearchSpace,
};
use phenoflow_core::phenology::{extract_metrics_at, PhenologyMetrics};
use phenoflow_core::predictor::Predictor;
use phenoflow_core::seasonfit::{fit_season, FitError, FitOptions, SeasonFit};
use rayon::prelude::*;

use crate::config::Target;

/// Stream indices passed to [`derive_seed`] so that each stage draws from
/// its own generator.
pub mod stream {
    pub const FIT: u64 = 1;
    pub const SPLIT: u64 = 2;
    pub const SEARCH: u64 = 3;
    pub const TRAIN: u64 = 4;
    pub const BACKGROUND: u64 = 5;
    pub const EXPLAIN: u64 = 6;
}

pub fn stage_seed(master: u64, stream: u64, target: Option<Target>) -> u64 {
    let s = derive_seed(master, stream);
    match target {
        Some(t) => derive_seed(s, t.index()),
        None => s,
    }
}

/// A plot-year that could not be fitted at all.
#[derive(Debug, Clone, PartialEq)]
pub struct Skipped {
    pub plot_id: String,
    pub year: i32,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct FitRun {
    /// One entry per fittable plot-year, sorted by plot then year. Fits whose
    /// restarts all failed to converge are kept with `converged = false`.
    pub fits: Vec<SeasonFit>,
    pub skipped: Vec<Skipped>,
}

impl FitRun {
    pub fn n_converged(&self) -> usize {
        self.fits.iter().filter(|f| f.converged).count()
    }
}

/// Fits every plot-year in parallel. Each fit gets its own seed derived from
/// `seed` and the plot-year's position, so the result does not depend on the
/// thread count.
pub fn fit_all(ndvi: &[NdviSample], opts: &FitOptions, seed: u64) -> FitRun {
    let groups = group_plot_years(ndvi);
    let base = derive_seed(seed, stream::FIT);
    let results: Vec<Result<SeasonFit, Skipped>> = groups
        .par_iter()
        .enumerate()
        .map(|(i, ((plot_id, year), samples))| {
            let opts = FitOptions {
                seed: derive_seed(base, i as u64),
                ..opts.clone()
            };
            match fit_season(samples, &opts) {
                Ok(f) => Ok(f),
                Err(FitError::NoConvergence { best, .. }) => Ok(*best),
                Err(e) => Err(Skipped {
                    plot_id: plot_id.clone(),
                    year: *year,
                    reason: e.to_string(),
                }),
            }
        })
        .collect();
    let mut run = FitRun {
        fits: Vec::new(),
        skipped: Vec::new(),
    };
    for r in results {
        match r {
            Ok(f) => run.fits.push(f),
            Err(s) => run.skipped.push(s),
        }
    }
    run
}

pub fn phenology_table(fits: &[SeasonFit], c_min: f64, qc_threshold: f64) -> Vec<PhenologyMetrics> {
    fits.iter()
        .map(|f| extract_metrics_at(f, c_min, qc_threshold))
        .collect()
}

pub fn exclusion_rate(metrics: &[PhenologyMetrics]) -> f64 {
    if metrics.is_empty() {
        return 0.0;
    }
    metrics.iter().filter(|m| !m.qc_pass).count() as f64 / metrics.len() as f64
}

pub fn soil_means(soil: &[SoilTempSeries]) -> HashMap<(String, i32), f64> {
    soil.iter()
        .map(|s| ((s.plot_id.clone(), s.year), s.annual_mean()))
        .collect()
}

/// `(soil mean, target)` pairs for QC-passing rows with a finite target and
/// a known soil mean.
pub fn regression_pairs(
    target: Target,
    metrics: &[PhenologyMetrics],
    soil: &HashMap<(String, i32), f64>,
) -> (Vec<f64>, Vec<f64>) {
    let mut x = Vec::new();
    let mut y = Vec::new();
    for m in metrics.iter().filter(|m| m.qc_pass) {
        let v = target.value(m);
        if let Some(&s) = soil.get(&(m.plot_id.clone(), m.year)) {
            if v.is_finite() && s.is_finite() {
                x.push(s);
                y.push(v);
            }
        }
    }
    (x, y)
}

pub fn regress(
    target: Target,
    metrics: &[PhenologyMetrics],
    soil: &HashMap<(String, i32), f64>,
) -> Result<LinRegResult, StatsError> {
    let (x, y) = regression_pairs(target, metrics, soil);
    ols_fit(&x, &y)
}

/// Labeled samples for `target`: QC-passing rows with a finite value, in
/// phenology-table order.
pub fn labeled_samples(
    target: Target,
    metrics: &[PhenologyMetrics],
    weather: &[WeatherWeekly],
    soil: &[SoilTempSeries],
) -> Result<Vec<LabeledSample>, NeuralError> {
    let rows: Vec<&PhenologyMetrics> = metrics
        .iter()
        .filter(|m| m.qc_pass && target.value(m).is_finite())
        .collect();
    let keys: Vec<(String, i32)> = rows.iter().map(|m| (m.plot_id.clone(), m.year)).collect();
    let features = build_features(weather, soil, &keys)?;
    Ok(features
        .into_iter()
        .zip(rows)
        .map(|(features, m)| LabeledSample {
            features,
            target: target.value(m),
        })
        .collect())
}

#[derive(Debug, Clone)]
pub struct TrainSettings {
    pub split_ratio: f64,
    pub folds: usize,
    pub budget: usize,
    pub space: SearchSpace,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: MlpModel,
    pub train: Vec<LabeledSample>,
    pub test: Vec<LabeledSample>,
    pub search: SearchOutcome,
    pub eval: EvalReport,
}

/// Split, tune on the training part, refit the winner on all of it, and
/// score on the held-out part.
pub fn train_target(
    samples: &[LabeledSample],
    settings: &TrainSettings,
    seed: u64,
) -> Result<TrainOutcome, NeuralError> {
    let (train, test) = split_train_test(
        samples,
        settings.split_ratio,
        derive_seed(seed, stream::SPLIT),
    )?;
    let search = hyperparam_search(
        &train,
        &settings.space,
        settings.budget,
        settings.folds,
        derive_seed(seed, stream::SEARCH),
    )?;
    let model = train_mlp(&train, &search.best, derive_seed(seed, stream::TRAIN))?;
    let eval = evaluate(&model, &train, &test, search.best_cv_mse)?;
    Ok(TrainOutcome {
        model,
        train,
        test,
        search,
        eval,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct ExplainSettings {
    pub coalitions: usize,
    pub background_cap: usize,
}

/// Explains each row of `targets` against a background drawn from
/// `background`. Rows are processed in parallel with per-row seeds.
pub fn explain_rows(
    model: &dyn Predictor,
    background: &[FeatureVector],
    targets: &[FeatureVector],
    settings: ExplainSettings,
    seed: u64,
) -> Result<Vec<ShapExplanation>, ExplainError> {
    let bg = select_background(
        background,
        settings.background_cap,
        derive_seed(seed, stream::BACKGROUND),
    );
    let base = derive_seed(seed, stream::EXPLAIN);
    targets
        .par_iter()
        .enumerate()
        .map(|(i, x)| {
            explain_instance(
                model,
                x,
                &bg,
                settings.coalitions,
                derive_seed(base, i as u64),
            )
        })
        .collect()
}

pub fn max_additivity_error(explanations: &[ShapExplanation]) -> f64 {
    explanations
        .iter()
        .map(ShapExplanation::additivity_error)
        .fold(0.0, f64::max)
}

/// Weekly attributions summed per variable, tagged with the plot category.
/// `explanations` and `rows` must line up.
pub fn sample_shap(
    explanations: &[ShapExplanation],
    rows: &[FeatureVector],
    categories: &HashMap<String, Category>,
) -> Result<Vec<SampleShap>, ExplainError> {
    explanations
        .iter()
        .zip(rows)
        .map(|(e, fv)| {
            Ok(SampleShap {
                plot_id: e.plot_id.clone(),
                year: e.year,
                category: categories
                    .get(&e.plot_id)
                    .map_or_else(|| "?".to_string(), |c| c.to_string()),
                soil_mean: fv.soil_mean(),
                shap: aggregate_weekly(&e.phi)?,
            })
        })
        .collect()
}

pub fn category_map(plots: &[PlotRecord]) -> HashMap<String, Category> {
    plots
        .iter()
        .map(|p| (p.plot_id.clone(), p.category))
        .collect()
}
