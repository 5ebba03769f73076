//! Domain records, CSV ingestion, weekly weather aggregation and the
//! synthetic dataset generator.

mod ingest;
mod synth;
mod weather;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ingest::{
    ingest_ndvi, ingest_plots, ingest_soil, ingest_weather_daily, read_ndvi, read_plots, read_soil,
    read_weather_daily, write_ndvi, write_plots, write_soil, write_weather_daily,
};
pub use synth::{
    generate_synthetic_dataset, read_truth, write_truth, GroundTruth, SyntheticConfig,
    SyntheticDataset, TRUTH_HEADER,
};
pub use weather::{aggregate_weather_weekly, week_of_doy, DailyWeather, WEEKS_PER_YEAR_RETAINED};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("unexpected header {found:?}, expected {expected:?}")]
    BadHeader { expected: String, found: String },
    #[error("malformed row at line {line}: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("{field} out of range at line {line}")]
    OutOfRange { field: &'static str, line: u64 },
    #[error("duplicate sample for plot {plot}, year {year}, week {week}")]
    DuplicateSample { plot: String, year: i32, week: f64 },
    #[error("duplicate plot id {0}")]
    DuplicatePlot(String),
    #[error("duplicate daily weather record for {0}")]
    DuplicateDate(chrono::NaiveDate),
    #[error("no daily weather records in year {year}, week {week}")]
    EmptyWindow { year: i32, week: u32 },
    #[error("invalid synthetic config: {0}")]
    InvalidConfig(String),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, DataError>;

/// Reads a CSV whose header must equal `header`, deserializing every row.
pub(crate) fn read_rows<T: serde::de::DeserializeOwned, R: std::io::Read>(
    r: R,
    header: &[&str],
) -> Result<Vec<T>> {
    let mut rdr = csv::Reader::from_reader(r);
    let found = rdr.headers()?.clone();
    if found.iter().ne(header.iter().copied()) {
        return Err(DataError::BadHeader {
            expected: header.join(","),
            found: found.iter().collect::<Vec<_>>().join(","),
        });
    }
    rdr.deserialize()
        .map(|row| row.map_err(DataError::from))
        .collect()
}

/// Field site of a plot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Site {
    DisturbedGrassland,
    LongWarmedGrassland,
}

impl Site {
    pub fn as_str(self) -> &'static str {
        match self {
            Site::DisturbedGrassland => "disturbed-grassland",
            Site::LongWarmedGrassland => "long-warmed-grassland",
        }
    }
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Site {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "disturbed-grassland" => Ok(Site::DisturbedGrassland),
            "long-warmed-grassland" => Ok(Site::LongWarmedGrassland),
            other => Err(format!("unknown site {other:?}")),
        }
    }
}

/// Soil warming category of a plot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Category {
    A,
    B,
    C,
    D,
    E,
}

impl Category {
    pub const ALL: [Category; 5] = [
        Category::A,
        Category::B,
        Category::C,
        Category::D,
        Category::E,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Warming above ambient, in °C, that defines the category.
    pub fn warming_range(self) -> (f64, f64) {
        match self {
            Category::A => (0.0, 0.0),
            Category::B => (0.5, 1.0),
            Category::C => (2.0, 3.0),
            Category::D => (3.0, 5.0),
            Category::E => (5.0, 10.0),
        }
    }

    /// Plot color: A blue, B red, C yellow, D green, E orange.
    pub fn color(self) -> &'static str {
        match self {
            Category::A => "#1f77b4",
            Category::B => "#d62728",
            Category::C => "#e6c300",
            Category::D => "#2ca02c",
            Category::E => "#ff7f0e",
        }
    }

    pub fn as_char(self) -> char {
        (b'A' + self as u8) as char
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

impl FromStr for Category {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "A" => Ok(Category::A),
            "B" => Ok(Category::B),
            "C" => Ok(Category::C),
            "D" => Ok(Category::D),
            "E" => Ok(Category::E),
            other => Err(format!("unknown category {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotRecord {
    pub plot_id: String,
    pub site: Site,
    /// 1..=5
    pub transect: u8,
    pub category: Category,
}

/// One NDVI observation. `week` is a fractional week of year, `doy / 7`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NdviSample {
    pub plot_id: String,
    pub year: i32,
    pub week: f64,
    pub ndvi: f64,
}

/// Daily soil temperature readings at one plot for one calendar year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoilTempSeries {
    pub plot_id: String,
    pub year: i32,
    /// (day of year, °C)
    pub readings: Vec<(u32, f64)>,
}

impl SoilTempSeries {
    /// Arithmetic mean of all readings; NaN when there are none.
    pub fn annual_mean(&self) -> f64 {
        if self.readings.is_empty() {
            return f64::NAN;
        }
        self.readings.iter().map(|&(_, t)| t).sum::<f64>() / self.readings.len() as f64
    }
}

/// Weekly weather means for one year, shared by every plot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeatherWeekly {
    pub year: i32,
    /// 1..=26
    pub week: u32,
    pub air_temp: f64,
    pub precipitation: f64,
    pub irradiance: f64,
}

/// Groups samples into plot-years, preserving the (plot, year) sort order.
pub fn group_plot_years(samples: &[NdviSample]) -> Vec<((String, i32), Vec<NdviSample>)> {
    let mut out: Vec<((String, i32), Vec<NdviSample>)> = Vec::new();
    for s in samples {
        match out.last_mut() {
            Some(((p, y), v)) if *p == s.plot_id && *y == s.year => v.push(s.clone()),
            _ => out.push(((s.plot_id.clone(), s.year), vec![s.clone()])),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn category_round_trips_through_text() {
        for c in Category::ALL {
            assert_eq!(c.to_string().parse::<Category>().unwrap(), c);
        }
        assert!("F".parse::<Category>().is_err());
    }

    #[test]
    fn annual_mean_is_arithmetic_mean() {
        let s = SoilTempSeries {
            plot_id: "x".into(),
            year: 2015,
            readings: vec![(1, 1.0), (2, 2.0), (3, 6.0)],
        };
        assert!((s.annual_mean() - 3.0).abs() <= 3.0 * 1e-12);
    }
}
