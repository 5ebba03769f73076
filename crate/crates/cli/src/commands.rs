use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use phenoflow_core::data::{
    aggregate_weather_weekly, generate_synthetic_dataset, group_plot_years, ingest_ndvi,
    ingest_plots, ingest_soil, ingest_weather_daily, write_ndvi, write_plots, write_soil,
    write_truth, write_weather_daily, Category, DataError, PlotRecord, SoilTempSeries,
    WeatherWeekly,
};
use phenoflow_core::explain::{
    group_a_shap, shap_soil_correlation, write_aggregates, write_shap, write_shap_vars, GroupShap,
    VARIABLE_NAMES,
};
use phenoflow_core::linstats::{round_to, shift_rates, write_linreg, LinRegResult};
use phenoflow_core::neural::{build_features, write_tuning, EvalReport, Hyperparams, MlpModel};
use phenoflow_core::phenology::{estimate_sos, read_phenology, write_phenology, PhenologyMetrics};
use phenoflow_core::seasonfit::{eval_double_logistic, read_fits, write_fits, SeasonFit};
use serde::{Deserialize, Serialize};

use crate::config::{ExplainSet, PipelineConfig, Target};
use crate::error::{data_error, CliError, Result};
use crate::pipeline::{self, stream, ExplainSettings, TrainSettings};
use crate::svg;

/// Largest tolerated |base + sum(phi) - prediction| before explain fails.
pub const ADDITIVITY_TOLERANCE: f64 = 1e-6;
/// Fewest QC-passing plot-years analyze will regress on.
pub const MIN_QC_ROWS: usize = 3;

#[derive(Debug, Parser)]
#[command(
    name = "phenoflow",
    version,
    about = "NDVI phenology extraction, soil-warming regression, MLP prediction and SHAP attribution"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON configuration file; missing keys take their defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed, overrides the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// Targets for train and explain (comma separated: sos,pos,peak).
    #[arg(long, global = true, value_delimiter = ',')]
    pub target: Vec<Target>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Write a synthetic input dataset and its ground truth.
    Synth,
    /// Fit a double logistic curve to every plot-year.
    Fit,
    /// Extract SOS/POS/PEAK, apply QC and regress each on soil temperature.
    Analyze,
    /// Tune, train and evaluate one network per target.
    Train,
    /// Kernel SHAP attributions for the trained networks.
    Explain,
    /// Run every stage; synthesizes inputs when none are configured.
    All,
}

impl Cli {
    pub fn resolve_config(&self) -> Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(dir) = &self.out_dir {
            cfg.out_dir = dir.clone();
        }
        if !self.target.is_empty() {
            cfg.targets = self.target.clone();
            cfg.targets.sort();
            cfg.targets.dedup();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let cfg = cli.resolve_config()?;
    match cli.command {
        Command::Synth => cmd_synth(&cfg),
        Command::Fit => cmd_fit(&cfg),
        Command::Analyze => cmd_analyze(&cfg),
        Command::Train => cmd_train(&cfg),
        Command::Explain => cmd_explain(&cfg),
        Command::All => cmd_all(&cfg),
    }
}

/// Reads `PHENOFLOW_THREADS` (0 or unset means one thread per core) and
/// sizes the global worker pool.
pub fn configure_threads() -> Result<()> {
    let n = match std::env::var("PHENOFLOW_THREADS") {
        Ok(v) => v.trim().parse::<usize>().map_err(|_| {
            CliError::Usage(format!(
                "PHENOFLOW_THREADS must be a non-negative integer, got {v:?}"
            ))
        })?,
        Err(_) => 0,
    };
    // a second call in the same process keeps the first pool
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global();
    Ok(())
}

/// Files produced by a command, written together once it has finished.
#[derive(Default)]
struct Outputs(Vec<(PathBuf, Vec<u8>)>);

impl Outputs {
    fn add(&mut self, path: PathBuf, bytes: Vec<u8>) {
        self.0.push((path, bytes));
    }

    fn csv(
        &mut self,
        path: PathBuf,
        write: impl FnOnce(&mut Vec<u8>) -> std::result::Result<(), DataError>,
    ) -> Result<()> {
        let mut buf = Vec::new();
        write(&mut buf).map_err(|e| CliError::output(&path, e))?;
        self.add(path, buf);
        Ok(())
    }

    fn json<T: Serialize>(&mut self, path: PathBuf, value: &T) -> Result<()> {
        let mut buf = serde_json::to_vec_pretty(value).map_err(|e| CliError::output(&path, e))?;
        buf.push(b'\n');
        self.add(path, buf);
        Ok(())
    }

    fn commit(self) -> Result<()> {
        for (path, bytes) in self.0 {
            if let Some(dir) = path.parent() {
                fs::create_dir_all(dir).map_err(|e| CliError::output(dir, e))?;
            }
            fs::write(&path, bytes).map_err(|e| CliError::output(&path, e))?;
        }
        Ok(())
    }
}

fn require(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::ingest(path, "file not found"))
    }
}

fn load<T>(
    path: &Path,
    read: impl FnOnce(&Path) -> std::result::Result<T, DataError>,
) -> Result<T> {
    require(path)?;
    read(path).map_err(|e| data_error(path, e))
}

fn load_csv<T>(
    path: &Path,
    read: impl FnOnce(fs::File) -> std::result::Result<T, DataError>,
) -> Result<T> {
    require(path)?;
    let f = fs::File::open(path).map_err(|e| CliError::ingest(path, e))?;
    read(f).map_err(|e| data_error(path, e))
}

fn load_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    require(path)?;
    let text = fs::read_to_string(path).map_err(|e| CliError::ingest(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::ingest(path, e))
}

fn load_soil(cfg: &PipelineConfig) -> Result<Vec<SoilTempSeries>> {
    load(&cfg.soil_path(), |p| ingest_soil(p))
}

fn load_weekly(cfg: &PipelineConfig) -> Result<Vec<WeatherWeekly>> {
    let path = cfg.weather_path();
    let daily = load(&path, |p| ingest_weather_daily(p))?;
    aggregate_weather_weekly(&daily).map_err(|e| data_error(&path, e))
}

/// Plot categories colour the charts. The plots file is optional unless it
/// was named explicitly.
fn load_categories(cfg: &PipelineConfig) -> Result<HashMap<String, Category>> {
    let path = cfg.plots_path();
    if cfg.inputs.plots.is_none() && !path.exists() {
        return Ok(HashMap::new());
    }
    let plots: Vec<PlotRecord> = load(&path, |p| ingest_plots(p))?;
    Ok(pipeline::category_map(&plots))
}

fn fits_path(cfg: &PipelineConfig) -> PathBuf {
    cfg.out_dir.join("fits.csv")
}

fn phenology_path(cfg: &PipelineConfig) -> PathBuf {
    cfg.out_dir.join("phenology.csv")
}

fn model_path(cfg: &PipelineConfig, t: Target) -> PathBuf {
    cfg.target_dir(t).join("model.json")
}

pub fn cmd_synth(cfg: &PipelineConfig) -> Result<()> {
    let synth_cfg = phenoflow_core::data::SyntheticConfig {
        seed: cfg.seed,
        ..cfg.synthetic.clone()
    };
    let data =
        generate_synthetic_dataset(&synth_cfg).map_err(|e| CliError::Config(e.to_string()))?;
    let dir = cfg.input_dir();
    let mut out = Outputs::default();
    out.csv(dir.join("ndvi.csv"), |w| write_ndvi(w, &data.ndvi))?;
    out.csv(dir.join("soil.csv"), |w| write_soil(w, &data.soil))?;
    out.csv(dir.join("weather.csv"), |w| {
        write_weather_daily(w, &data.weather)
    })?;
    out.csv(dir.join("plots.csv"), |w| write_plots(w, &data.plots))?;
    out.csv(dir.join("truth.csv"), |w| write_truth(w, &data.truth))?;
    out.commit()?;
    eprintln!(
        "synth: {} plots, {} plot-years -> {}",
        data.plots.len(),
        data.truth.len(),
        dir.display()
    );
    Ok(())
}

pub fn cmd_fit(cfg: &PipelineConfig) -> Result<()> {
    let path = cfg.ndvi_path();
    let ndvi = load(&path, |p| ingest_ndvi(p))?;
    if ndvi.is_empty() {
        return Err(CliError::ingest(&path, "no NDVI samples"));
    }
    let run = pipeline::fit_all(&ndvi, &cfg.fit, cfg.seed);
    for s in &run.skipped {
        eprintln!("fit: skipped {} {}: {}", s.plot_id, s.year, s.reason);
    }
    let mut out = Outputs::default();
    out.csv(fits_path(cfg), |w| write_fits(w, &run.fits))?;
    if cfg.season_plots {
        let samples: HashMap<(String, i32), Vec<(f64, f64)>> = group_plot_years(&ndvi)
            .into_iter()
            .map(|(k, v)| (k, v.iter().map(|s| (s.week, s.ndvi)).collect()))
            .collect();
        let dir = cfg.out_dir.join("plots").join("seasons");
        for f in &run.fits {
            let key = (f.plot_id.clone(), f.year);
            let sos = estimate_sos(f, cfg.fit.c_min).unwrap_or(f64::NAN);
            let title = format!("{} {} (r² {:.3})", f.plot_id, f.year, f.r2);
            let doc = svg::season_plot(
                &title,
                &samples[&key],
                |x| eval_double_logistic(&f.params, x),
                sos,
                f.params.p,
            );
            out.add(
                dir.join(format!("{}_{}.svg", f.plot_id, f.year)),
                doc.into_bytes(),
            );
        }
    }
    out.commit()?;
    let converged = run.n_converged();
    eprintln!(
        "fit: {} plot-years, {} converged, {} skipped",
        run.fits.len(),
        converged,
        run.skipped.len()
    );
    if converged == 0 {
        return Err(CliError::NoConvergentFits);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionSummary {
    pub slope: f64,
    pub slope_se: f64,
    pub intercept: f64,
    pub intercept_se: f64,
    pub r2: f64,
    pub p_slope: f64,
    pub p_intercept: f64,
    pub n: usize,
    /// Timing targets only: the slope converted from weeks to days per °C.
    pub days_per_degc: Option<f64>,
    /// Timing targets only: warming needed for a one-week shift.
    pub degc_per_week: Option<f64>,
}

impl RegressionSummary {
    fn new(target: Target, r: &LinRegResult) -> Self {
        let rates = match target {
            Target::Sos | Target::Pos => shift_rates(r.slope).ok(),
            Target::Peak => None,
        };
        Self {
            slope: r.slope,
            slope_se: r.slope_se,
            intercept: r.intercept,
            intercept_se: r.intercept_se,
            r2: r.r2,
            p_slope: r.p_slope,
            p_intercept: r.p_intercept,
            n: r.n,
            days_per_degc: rates.map(|s| s.days_per_degc),
            degc_per_week: rates.map(|s| s.degc_per_week),
        }
    }

    /// Display rounding: three decimals, four for the NDVI-scale PEAK
    /// coefficients, two for °C per week.
    fn rounded(&self, target: Target) -> Self {
        let d = if target == Target::Peak { 4 } else { 3 };
        Self {
            slope: round_to(self.slope, d),
            slope_se: round_to(self.slope_se, d),
            intercept: round_to(self.intercept, d),
            intercept_se: round_to(self.intercept_se, d),
            r2: round_to(self.r2, 3),
            p_slope: round_to(self.p_slope, 3),
            p_intercept: round_to(self.p_intercept, 3),
            n: self.n,
            days_per_degc: self.days_per_degc.map(|v| round_to(v, 3)),
            degc_per_week: self.degc_per_week.map(|v| round_to(v, 2)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetReport {
    pub target: Target,
    pub raw: RegressionSummary,
    pub rounded: RegressionSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub n_plot_years: usize,
    pub n_qc_pass: usize,
    pub qc_threshold: f64,
    pub exclusion_rate: f64,
    pub targets: Vec<TargetReport>,
}

pub fn cmd_analyze(cfg: &PipelineConfig) -> Result<()> {
    let fits: Vec<SeasonFit> = load_csv(&fits_path(cfg), read_fits)?;
    let soil = load_soil(cfg)?;
    let categories = load_categories(cfg)?;
    let metrics = pipeline::phenology_table(&fits, cfg.fit.c_min, cfg.qc_threshold);
    let n_qc = metrics.iter().filter(|m| m.qc_pass).count();

    let mut out = Outputs::default();
    out.csv(phenology_path(cfg), |w| write_phenology(w, &metrics))?;
    if n_qc < MIN_QC_ROWS {
        out.commit()?;
        return Err(CliError::TooFewQcRows { n: n_qc });
    }

    let soil_means = pipeline::soil_means(&soil);
    let mut rows = Vec::new();
    let mut reports = Vec::new();
    for t in Target::ALL {
        let r = pipeline::regress(t, &metrics, &soil_means)
            .map_err(|e| CliError::InsufficientData(format!("{t}: {e}")))?;
        let raw = RegressionSummary::new(t, &r);
        reports.push(TargetReport {
            target: t,
            rounded: raw.rounded(t),
            raw,
        });
        rows.push((t.as_str().to_string(), r));

        let points: Vec<(f64, f64, Option<Category>)> = metrics
            .iter()
            .filter(|m| m.qc_pass)
            .filter_map(|m| {
                let s = soil_means.get(&(m.plot_id.clone(), m.year))?;
                Some((*s, t.value(m), categories.get(&m.plot_id).copied()))
            })
            .collect();
        let title = format!(
            "{} vs annual mean soil temperature (slope {:.3}, p {:.3})",
            t.as_str().to_uppercase(),
            r.slope,
            r.p_slope
        );
        let doc = svg::scatter_plot(
            &title,
            "annual mean soil temperature (°C)",
            t.as_str(),
            &points,
            Some((r.slope, r.intercept)),
        );
        out.add(
            cfg.out_dir.join("plots").join(format!("{t}_vs_soil.svg")),
            doc.into_bytes(),
        );
    }
    out.csv(cfg.out_dir.join("linreg.csv"), |w| {
        write_linreg(w, &rows).map_err(DataError::from)
    })?;
    let report = AnalysisReport {
        n_plot_years: metrics.len(),
        n_qc_pass: n_qc,
        qc_threshold: cfg.qc_threshold,
        exclusion_rate: pipeline::exclusion_rate(&metrics),
        targets: reports,
    };
    out.json(cfg.out_dir.join("report.json"), &report)?;
    out.commit()?;
    for r in &report.targets {
        eprintln!(
            "analyze: {} slope {:.4} (p {:.3}, n {})",
            r.target, r.raw.slope, r.raw.p_slope, r.raw.n
        );
    }
    eprintln!(
        "analyze: {} of {} plot-years pass QC ({:.1}% excluded)",
        n_qc,
        metrics.len(),
        100.0 * report.exclusion_rate
    );
    Ok(())
}

/// Trained network plus the plot-years it was trained and tested on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub target: Target,
    pub model: MlpModel,
    pub train_keys: Vec<(String, i32)>,
    pub test_keys: Vec<(String, i32)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalFile {
    pub target: Target,
    pub n_train: usize,
    pub n_test: usize,
    pub hyperparams: Hyperparams,
    #[serde(flatten)]
    pub metrics: EvalReport,
}

fn keys(samples: &[phenoflow_core::neural::LabeledSample]) -> Vec<(String, i32)> {
    samples
        .iter()
        .map(|s| (s.features.plot_id.clone(), s.features.year))
        .collect()
}

pub fn cmd_train(cfg: &PipelineConfig) -> Result<()> {
    let metrics: Vec<PhenologyMetrics> = load_csv(&phenology_path(cfg), read_phenology)?;
    let weekly = load_weekly(cfg)?;
    let soil = load_soil(cfg)?;
    let settings = TrainSettings {
        split_ratio: cfg.split_ratio,
        folds: cfg.folds,
        budget: cfg.tuning_budget,
        space: cfg.search_space.clone(),
    };
    let mut out = Outputs::default();
    for &t in &cfg.targets {
        let samples = pipeline::labeled_samples(t, &metrics, &weekly, &soil)
            .map_err(CliError::from_neural)?;
        let seed = pipeline::stage_seed(cfg.seed, stream::TRAIN, Some(t));
        let r = pipeline::train_target(&samples, &settings, seed).map_err(CliError::from_neural)?;
        let dir = cfg.target_dir(t);
        out.csv(dir.join("tuning.csv"), |w| {
            write_tuning(w, &r.search.trials)
        })?;
        let eval = EvalFile {
            target: t,
            n_train: r.train.len(),
            n_test: r.test.len(),
            hyperparams: r.search.best,
            metrics: r.eval,
        };
        out.json(dir.join("eval.json"), &eval)?;
        let file = ModelFile {
            target: t,
            train_keys: keys(&r.train),
            test_keys: keys(&r.test),
            model: r.model,
        };
        out.json(dir.join("model.json"), &file)?;
        eprintln!(
            "train: {t} test MSE {:.4} vs naive {:.4} (cv {:.4}, {} train / {} test)",
            r.eval.test_mse, r.eval.naive_mse, r.eval.cv_mse, eval.n_train, eval.n_test
        );
    }
    out.commit()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainSummary {
    pub target: Target,
    pub n_explained: usize,
    pub n_background: usize,
    pub coalitions: usize,
    pub max_additivity_error: f64,
    /// Pearson r between annual soil mean and the soil attribution; `None`
    /// when either side is constant.
    pub soil_shap_pearson: Option<f64>,
    pub a_shap: BTreeMap<String, f64>,
}

fn bar_groups(groups: &[GroupShap], var: usize) -> Vec<(String, Vec<(Option<Category>, f64)>)> {
    let mut out: Vec<(String, Vec<(Option<Category>, f64)>)> = Vec::new();
    for g in groups {
        let Some(year) = g.year else { continue };
        let label = year.to_string();
        let cat = g
            .category
            .as_deref()
            .and_then(|c| c.parse::<Category>().ok());
        let v = g.a_shap.as_array()[var];
        match out.last_mut() {
            Some((l, bars)) if *l == label => bars.push((cat, v)),
            _ => out.push((label, vec![(cat, v)])),
        }
    }
    out
}

pub fn cmd_explain(cfg: &PipelineConfig) -> Result<()> {
    let weekly = load_weekly(cfg)?;
    let soil = load_soil(cfg)?;
    let categories = load_categories(cfg)?;
    let settings = ExplainSettings {
        coalitions: cfg.shap_coalitions,
        background_cap: cfg.background_cap,
    };
    let mut out = Outputs::default();
    for &t in &cfg.targets {
        let path = model_path(cfg, t);
        let file: ModelFile = load_json(&path)?;
        file.model
            .check_shapes()
            .map_err(|e| CliError::ingest(&path, e))?;
        if file.target != t {
            return Err(CliError::ingest(
                &path,
                format!("model is for {}, expected {t}", file.target),
            ));
        }
        let background =
            build_features(&weekly, &soil, &file.train_keys).map_err(CliError::from_neural)?;
        let keys: Vec<(String, i32)> = match cfg.explain_set {
            ExplainSet::Test => file.test_keys.clone(),
            ExplainSet::All => file
                .train_keys
                .iter()
                .chain(&file.test_keys)
                .cloned()
                .collect(),
        };
        let rows = build_features(&weekly, &soil, &keys).map_err(CliError::from_neural)?;
        let seed = pipeline::stage_seed(cfg.seed, stream::EXPLAIN, Some(t));
        let explanations = pipeline::explain_rows(&file.model, &background, &rows, settings, seed)
            .map_err(CliError::from_explain)?;
        let max_error = pipeline::max_additivity_error(&explanations);
        if !(max_error <= ADDITIVITY_TOLERANCE) {
            return Err(CliError::Additivity { max_error });
        }
        let per_sample = pipeline::sample_shap(&explanations, &rows, &categories)
            .map_err(CliError::from_explain)?;
        let groups = group_a_shap(&per_sample);
        let soil_x: Vec<f64> = per_sample.iter().map(|s| s.soil_mean).collect();
        let soil_phi: Vec<f64> = per_sample.iter().map(|s| s.shap.soil).collect();
        let total = groups
            .last()
            .map(|g| g.a_shap.as_array())
            .unwrap_or_default();
        let summary = ExplainSummary {
            target: t,
            n_explained: explanations.len(),
            n_background: background.len().min(cfg.background_cap),
            coalitions: cfg.shap_coalitions,
            max_additivity_error: max_error,
            soil_shap_pearson: shap_soil_correlation(&soil_x, &soil_phi).ok(),
            a_shap: VARIABLE_NAMES
                .iter()
                .map(|v| v.to_string())
                .zip(total)
                .collect(),
        };

        let dir = cfg.target_dir(t);
        out.csv(dir.join("shap.csv"), |w| {
            write_shap(w, t.as_str(), &explanations)
        })?;
        out.csv(dir.join("shap_vars.csv"), |w| {
            write_shap_vars(w, &per_sample)
        })?;
        out.csv(dir.join("aggregates.csv"), |w| write_aggregates(w, &groups))?;
        out.json(dir.join("explain.json"), &summary)?;
        for (i, var) in VARIABLE_NAMES.iter().enumerate() {
            let title = format!(
                "{}: sum of |SHAP| for {var} by year and category",
                t.as_str().to_uppercase()
            );
            let doc = svg::grouped_bars(&title, "A_SHAP", &bar_groups(&groups, i));
            out.add(dir.join(format!("a_shap_{var}.svg")), doc.into_bytes());
        }
        let r = summary
            .soil_shap_pearson
            .map_or_else(|| "n/a".to_string(), |r| format!("{r:.3}"));
        eprintln!(
            "explain: {t} {} samples, max additivity error {max_error:.1e}, soil r {r}",
            summary.n_explained
        );
    }
    out.commit()
}

pub fn cmd_all(cfg: &PipelineConfig) -> Result<()> {
    if cfg.inputs.is_empty() {
        cmd_synth(cfg)?;
    }
    cmd_fit(cfg)?;
    cmd_analyze(cfg)?;
    cmd_train(cfg)?;
    cmd_explain(cfg)
}
