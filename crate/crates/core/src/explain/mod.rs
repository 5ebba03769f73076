//! Feature attributions for trained regressors and their per-variable
//! aggregation.

mod kernel;

use std::collections::BTreeMap;
use std::io::Write;

use ndarray::{Array2, ArrayView1};
use rand::seq::index::sample as sample_indices;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::DataError;
use crate::linstats::{pearson, StatsError};
use crate::neural::{
    FeatureVector, AIR_OFFSET, IRR_OFFSET, N_FEATURES, PRECIP_OFFSET, SOIL_INDEX, WEEKS,
};
use crate::predictor::Predictor;

pub use kernel::{binomial, kernel_shap, shapley_kernel_weight, ShapValues};

/// Default number of background rows kept for imputation.
pub const DEFAULT_BACKGROUND_CAP: usize = 100;
/// Default coalition budget when sampling.
pub const DEFAULT_COALITIONS: usize = 2048;

#[derive(Debug, Error, PartialEq)]
pub enum ExplainError {
    #[error("coalition size {s} is not a proper subset of {m} features")]
    InvalidCoalitionSize { m: usize, s: usize },
    #[error("background set is empty")]
    EmptyBackground,
    #[error("expected {expected} features, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("budget of {n_coalitions} coalitions is below 2 x {m} features")]
    BudgetTooSmall { n_coalitions: usize, m: usize },
    #[error("coalition design is rank deficient with {n_coalitions} coalitions")]
    DegenerateSystem { n_coalitions: usize },
    #[error(transparent)]
    Stats(#[from] StatsError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapExplanation {
    pub plot_id: String,
    pub year: i32,
    pub base_value: f64,
    pub phi: Vec<f64>,
    pub reconstructed: f64,
    pub prediction: f64,
}

impl ShapExplanation {
    pub fn additivity_error(&self) -> f64 {
        (self.reconstructed - self.prediction).abs()
    }
}

/// Deterministic uniform subsample of at most `cap` rows, kept in input
/// order.
pub fn select_background(rows: &[FeatureVector], cap: usize, seed: u64) -> Array2<f64> {
    let m = rows.first().map_or(0, |r| r.values.len());
    let mut idx: Vec<usize> = if rows.len() <= cap {
        (0..rows.len()).collect()
    } else {
        sample_indices(&mut ChaCha8Rng::seed_from_u64(seed), rows.len(), cap).into_vec()
    };
    idx.sort_unstable();
    let mut out = Array2::zeros((idx.len(), m));
    for (mut row, &i) in out.rows_mut().into_iter().zip(&idx) {
        row.assign(&ArrayView1::from(&rows[i].values));
    }
    out
}

pub fn explain_instance(
    model: &dyn Predictor,
    x: &FeatureVector,
    background: &Array2<f64>,
    n_coalitions: usize,
    seed: u64,
) -> Result<ShapExplanation, ExplainError> {
    let v = kernel_shap(model, &x.values, background.view(), n_coalitions, seed)?;
    Ok(ShapExplanation {
        plot_id: x.plot_id.clone(),
        year: x.year,
        base_value: v.base_value,
        reconstructed: v.reconstructed(),
        prediction: v.prediction,
        phi: v.phi,
    })
}

/// Per-sample attribution summed over each variable's 26 weeks.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AggregatedShap {
    pub air: f64,
    pub precip: f64,
    pub irr: f64,
    pub soil: f64,
}

impl AggregatedShap {
    pub fn as_array(&self) -> [f64; 4] {
        [self.air, self.precip, self.irr, self.soil]
    }
}

pub const VARIABLE_NAMES: [&str; 4] = ["air", "precip", "irr", "soil"];

pub fn aggregate_weekly(phi: &[f64]) -> Result<AggregatedShap, ExplainError> {
    if phi.len() != N_FEATURES {
        return Err(ExplainError::LengthMismatch {
            expected: N_FEATURES,
            got: phi.len(),
        });
    }
    let sum = |off: usize| phi[off..off + WEEKS].iter().sum::<f64>();
    Ok(AggregatedShap {
        air: sum(AIR_OFFSET),
        precip: sum(PRECIP_OFFSET),
        irr: sum(IRR_OFFSET),
        soil: phi[SOIL_INDEX],
    })
}

/// Sum over samples of the absolute per-variable values.
pub fn a_shap(rows: &[AggregatedShap]) -> AggregatedShap {
    rows.iter()
        .fold(AggregatedShap::default(), |acc, r| AggregatedShap {
            air: acc.air + r.air.abs(),
            precip: acc.precip + r.precip.abs(),
            irr: acc.irr + r.irr.abs(),
            soil: acc.soil + r.soil.abs(),
        })
}

pub fn shap_soil_correlation(soil_means: &[f64], shap_soil: &[f64]) -> Result<f64, ExplainError> {
    Ok(pearson(soil_means, shap_soil)?)
}

/// Per-variable sums for one explained sample, tagged for grouping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleShap {
    pub plot_id: String,
    pub year: i32,
    pub category: String,
    pub soil_mean: f64,
    pub shap: AggregatedShap,
}

/// Absolute sums for one `(year, category)` group; `None` marks the
/// all-samples total.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupShap {
    pub year: Option<i32>,
    pub category: Option<String>,
    pub n: usize,
    pub a_shap: AggregatedShap,
}

/// Per-group absolute sums, groups ordered by year then category, followed
/// by the overall total.
pub fn group_a_shap(rows: &[SampleShap]) -> Vec<GroupShap> {
    let mut groups: BTreeMap<(i32, String), Vec<AggregatedShap>> = BTreeMap::new();
    for r in rows {
        groups
            .entry((r.year, r.category.clone()))
            .or_default()
            .push(r.shap);
    }
    let mut out: Vec<GroupShap> = groups
        .into_iter()
        .map(|((year, category), v)| GroupShap {
            year: Some(year),
            category: Some(category),
            n: v.len(),
            a_shap: a_shap(&v),
        })
        .collect();
    let all: Vec<AggregatedShap> = rows.iter().map(|r| r.shap).collect();
    out.push(GroupShap {
        year: None,
        category: None,
        n: all.len(),
        a_shap: a_shap(&all),
    });
    out
}

pub const SHAP_VARS_HEADER: [&str; 8] = [
    "plot_id",
    "year",
    "category",
    "soil_mean",
    "shap_air",
    "shap_precip",
    "shap_irr",
    "shap_soil",
];
pub const AGGREGATES_HEADER: [&str; 7] = [
    "year",
    "category",
    "n",
    "a_shap_air",
    "a_shap_precip",
    "a_shap_irr",
    "a_shap_soil",
];

pub fn write_shap_vars<W: Write>(w: W, rows: &[SampleShap]) -> Result<(), DataError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(SHAP_VARS_HEADER)?;
    for r in rows {
        let mut rec = vec![
            r.plot_id.clone(),
            r.year.to_string(),
            r.category.clone(),
            r.soil_mean.to_string(),
        ];
        rec.extend(r.shap.as_array().iter().map(f64::to_string));
        out.write_record(&rec)?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn write_aggregates<W: Write>(w: W, groups: &[GroupShap]) -> Result<(), DataError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(AGGREGATES_HEADER)?;
    for g in groups {
        let mut rec = vec![
            g.year.map_or_else(|| "all".to_string(), |y| y.to_string()),
            g.category.clone().unwrap_or_else(|| "all".to_string()),
            g.n.to_string(),
        ];
        rec.extend(g.a_shap.as_array().iter().map(f64::to_string));
        out.write_record(&rec)?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[derive(Deserialize)]
struct ShapVarsRow {
    plot_id: String,
    year: i32,
    category: String,
    soil_mean: f64,
    shap_air: f64,
    shap_precip: f64,
    shap_irr: f64,
    shap_soil: f64,
}

pub fn read_shap_vars<R: std::io::Read>(r: R) -> Result<Vec<SampleShap>, DataError> {
    let rows: Vec<ShapVarsRow> = crate::data::read_rows(r, &SHAP_VARS_HEADER)?;
    Ok(rows
        .into_iter()
        .map(|r| SampleShap {
            plot_id: r.plot_id,
            year: r.year,
            category: r.category,
            soil_mean: r.soil_mean,
            shap: AggregatedShap {
                air: r.shap_air,
                precip: r.shap_precip,
                irr: r.shap_irr,
                soil: r.shap_soil,
            },
        })
        .collect())
}

#[derive(Deserialize)]
struct AggregatesRow {
    year: String,
    category: String,
    n: usize,
    a_shap_air: f64,
    a_shap_precip: f64,
    a_shap_irr: f64,
    a_shap_soil: f64,
}

/// Reads aggregates back; `all` in the year or category column becomes
/// `None`.
pub fn read_aggregates<R: std::io::Read>(r: R) -> Result<Vec<GroupShap>, DataError> {
    let rows: Vec<AggregatesRow> = crate::data::read_rows(r, &AGGREGATES_HEADER)?;
    rows.into_iter()
        .enumerate()
        .map(|(i, r)| {
            let year = match r.year.as_str() {
                "all" => None,
                y => Some(y.parse::<i32>().map_err(|_| DataError::MalformedRow {
                    line: i as u64 + 2,
                    reason: format!("cannot parse year from {y:?}"),
                })?),
            };
            Ok(GroupShap {
                year,
                category: (r.category != "all").then_some(r.category),
                n: r.n,
                a_shap: AggregatedShap {
                    air: r.a_shap_air,
                    precip: r.a_shap_precip,
                    irr: r.a_shap_irr,
                    soil: r.a_shap_soil,
                },
            })
        })
        .collect()
}

pub fn shap_header() -> Vec<String> {
    let mut h: Vec<String> = ["plot_id", "year", "target", "base"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    h.extend((1..=N_FEATURES).map(|i| format!("phi_{i}")));
    h.push("reconstructed".into());
    h.push("prediction".into());
    h
}

pub fn write_shap<W: Write>(w: W, target: &str, rows: &[ShapExplanation]) -> Result<(), DataError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(shap_header())?;
    for e in rows {
        let mut rec = vec![
            e.plot_id.clone(),
            e.year.to_string(),
            target.to_string(),
            e.base_value.to_string(),
        ];
        rec.extend(e.phi.iter().map(f64::to_string));
        rec.push(e.reconstructed.to_string());
        rec.push(e.prediction.to_string());
        out.write_record(&rec)?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Reads `shap.csv` back as `(target, explanation)` pairs.
pub fn read_shap<R: std::io::Read>(r: R) -> Result<Vec<(String, ShapExplanation)>, DataError> {
    let mut rdr = csv::Reader::from_reader(r);
    let headers = rdr.headers()?.clone();
    let expected = shap_header();
    if headers.iter().ne(expected.iter().map(String::as_str)) {
        return Err(DataError::BadHeader {
            expected: expected.join(","),
            found: headers.iter().collect::<Vec<_>>().join(","),
        });
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i as u64 + 2;
        let num = |k: usize| -> Result<f64, DataError> {
            rec[k].parse().map_err(|_| DataError::MalformedRow {
                line,
                reason: format!("column {} is not a number", k + 1),
            })
        };
        let year = rec[1].parse().map_err(|_| DataError::MalformedRow {
            line,
            reason: "bad year".into(),
        })?;
        let phi = (0..N_FEATURES)
            .map(|j| num(4 + j))
            .collect::<Result<Vec<_>, _>>()?;
        out.push((
            rec[2].to_string(),
            ShapExplanation {
                plot_id: rec[0].to_string(),
                year,
                base_value: num(3)?,
                phi,
                reconstructed: num(4 + N_FEATURES)?,
                prediction: num(5 + N_FEATURES)?,
            },
        ));
    }
    Ok(out)
}
