use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use phenoflow_core::data::SyntheticConfig;
use phenoflow_core::explain::{DEFAULT_BACKGROUND_CAP, DEFAULT_COALITIONS};
use phenoflow_core::neural::{LrSchedule, SearchSpace, Solver};
use phenoflow_core::phenology::{PhenologyMetrics, QC_MIN_R2};
use phenoflow_core::seasonfit::FitOptions;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Sos,
    Pos,
    Peak,
}

impl Target {
    pub const ALL: [Target; 3] = [Target::Sos, Target::Pos, Target::Peak];

    pub fn as_str(self) -> &'static str {
        match self {
            Target::Sos => "sos",
            Target::Pos => "pos",
            Target::Peak => "peak",
        }
    }

    pub fn index(self) -> u64 {
        self as u64
    }

    pub fn value(self, m: &PhenologyMetrics) -> f64 {
        match self {
            Target::Sos => m.sos,
            Target::Pos => m.pos,
            Target::Peak => m.peak,
        }
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Target {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "sos" => Ok(Target::Sos),
            "pos" => Ok(Target::Pos),
            "peak" => Ok(Target::Peak),
            _ => Err(format!("unknown target '{s}', expected sos, pos or peak")),
        }
    }
}

/// Which samples get explained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExplainSet {
    Test,
    All,
}

/// Input files. Any path left out defaults to `<out_dir>/input/<name>.csv`,
/// which is where `synth` writes.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputPaths {
    pub ndvi: Option<PathBuf>,
    pub soil: Option<PathBuf>,
    pub weather: Option<PathBuf>,
    pub plots: Option<PathBuf>,
}

impl InputPaths {
    pub fn is_empty(&self) -> bool {
        self.ndvi.is_none() && self.soil.is_none() && self.weather.is_none() && self.plots.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub inputs: InputPaths,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub qc_threshold: f64,
    pub fit: FitOptions,
    /// Fraction of each year's samples used for training.
    pub split_ratio: f64,
    pub folds: usize,
    pub tuning_budget: usize,
    pub search_space: SearchSpace,
    pub shap_coalitions: usize,
    pub background_cap: usize,
    pub explain_set: ExplainSet,
    pub targets: Vec<Target>,
    /// Write one SVG per plot-year from `fit`.
    pub season_plots: bool,
    pub synthetic: SyntheticConfig,
}

/// A reduced slice of the full search ranges that keeps `all` quick on a
/// single core.
pub fn desk_search_space() -> SearchSpace {
    SearchSpace {
        layer1: vec![10, 20, 30, 40, 50],
        layer2: vec![0, 10, 20],
        l2: (1e-4, 1e-1),
        solver: vec![Solver::Adam],
        lr0: (1e-3, 1e-2),
        lr_schedule: vec![LrSchedule::Constant, LrSchedule::Adaptive],
        max_iter: vec![1000],
        patience: vec![10, 20],
    }
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            inputs: InputPaths::default(),
            out_dir: PathBuf::from("out"),
            seed: 42,
            qc_threshold: QC_MIN_R2,
            fit: FitOptions::default(),
            split_ratio: 0.8,
            folds: 5,
            tuning_budget: 4,
            search_space: desk_search_space(),
            shap_coalitions: DEFAULT_COALITIONS,
            background_cap: DEFAULT_BACKGROUND_CAP,
            explain_set: ExplainSet::Test,
            targets: Target::ALL.to_vec(),
            season_plots: true,
            synthetic: SyntheticConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(CliError::Config(msg));
        if !(self.qc_threshold > 0.0 && self.qc_threshold <= 1.0) {
            return bad(format!(
                "qc_threshold {} is outside (0, 1]",
                self.qc_threshold
            ));
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return bad(format!(
                "split_ratio {} is outside (0, 1)",
                self.split_ratio
            ));
        }
        if self.folds < 2 {
            return bad("folds must be at least 2".into());
        }
        if self.tuning_budget == 0 {
            return bad("tuning_budget must be at least 1".into());
        }
        if self.background_cap == 0 {
            return bad("background_cap must be at least 1".into());
        }
        if self.targets.is_empty() {
            return bad("targets is empty".into());
        }
        if self.fit.lambda < 0.0 || !self.fit.lambda.is_finite() {
            return bad(format!(
                "fit.lambda {} must be a finite non-negative number",
                self.fit.lambda
            ));
        }
        self.search_space
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        self.synthetic
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn input_dir(&self) -> PathBuf {
        self.out_dir.join("input")
    }

    fn input(&self, given: &Option<PathBuf>, name: &str) -> PathBuf {
        given.clone().unwrap_or_else(|| self.input_dir().join(name))
    }

    pub fn ndvi_path(&self) -> PathBuf {
        self.input(&self.inputs.ndvi, "ndvi.csv")
    }

    pub fn soil_path(&self) -> PathBuf {
        self.input(&self.inputs.soil, "soil.csv")
    }

    pub fn weather_path(&self) -> PathBuf {
        self.input(&self.inputs.weather, "weather.csv")
    }

    pub fn plots_path(&self) -> PathBuf {
        self.input(&self.inputs.plots, "plots.csv")
    }

    pub fn target_dir(&self, target: Target) -> PathBuf {
        self.out_dir.join(target.as_str())
    }
}
