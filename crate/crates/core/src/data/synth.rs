//! Synthetic plots, NDVI seasons, soil series and daily weather with known
//! ground-truth phenology.
//!
//! Each plot-year's curve is built from target SOS/POS/PEAK values:
//!
//! * `sos = 20.4 + sos_sensitivity * warming + weather_sensitivity * air_anomaly + N(0, plot_sd)`
//! * `pos = 30.0 + pos_sensitivity * warming + 0.7 * weather_sensitivity * air_anomaly + N(0, plot_sd)`
//! * `peak = 0.80 + peak_sensitivity * warming + peak_irradiance_sensitivity * irradiance_anomaly`
//!
//! where `warming` is the realised soil annual mean minus the ambient
//! baseline and the anomalies are spring (weeks 11-20) departures of the
//! year's daily weather from climatology. The spring steepness is chosen so
//! both branches are saturated at `p`, which keeps the derivative gap there
//! negligible.

use chrono::{Datelike, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use super::weather::DailyWeather;
use super::{Category, DataError, NdviSample, PlotRecord, Result, Site, SoilTempSeries};
use crate::seasonfit::{eval_double_logistic, DoubleLogisticParams};

pub const SOIL_BASELINE_C: f64 = 6.0;
const SOS_BASE: f64 = 20.4;
const POS_BASE: f64 = 30.0;
const PEAK_BASE: f64 = 0.80;
/// `ln(2 + sqrt(3))`: SOS sits this many inverse steepness units before `a1`.
const SOS_OFFSET: f64 = 1.316_957_896_924_816_6;
/// Minimum `|b1 (p - a1)|`, so the curve is flat on both sides of `p`.
const MIN_SATURATION: f64 = 14.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub n_plots: usize,
    pub first_year: i32,
    pub last_year: i32,
    /// Nominal soil warming per category A..E, °C.
    pub warming_offsets: [f64; 5],
    /// SOS shift, weeks per °C of soil warming.
    pub sos_sensitivity: f64,
    /// POS shift, weeks per °C of soil warming.
    pub pos_sensitivity: f64,
    /// PEAK change, NDVI per °C of soil warming.
    pub peak_sensitivity: f64,
    /// SOS shift, weeks per °C of spring air-temperature anomaly.
    pub weather_sensitivity: f64,
    /// PEAK change, NDVI per W/m² of spring irradiance anomaly.
    pub peak_irradiance_sensitivity: f64,
    /// Unexplained plot-year scatter of SOS and POS, weeks.
    pub plot_sd: f64,
    /// Gaussian noise added to each NDVI sample.
    pub noise_sd: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_plots: 50,
            first_year: 2014,
            last_year: 2019,
            warming_offsets: [0.0, 0.75, 2.5, 4.0, 7.5],
            sos_sensitivity: -0.216,
            pos_sensitivity: -0.235,
            peak_sensitivity: 0.005,
            weather_sensitivity: -0.8,
            peak_irradiance_sensitivity: 0.001,
            plot_sd: 0.5,
            noise_sd: 0.03,
            seed: 42,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_plots == 0 {
            return Err(DataError::InvalidConfig(
                "n_plots must be at least 1".into(),
            ));
        }
        if !(self.noise_sd >= 0.0) || !(self.plot_sd >= 0.0) {
            return Err(DataError::InvalidConfig(
                "noise_sd and plot_sd must be non-negative".into(),
            ));
        }
        if self.last_year < self.first_year {
            return Err(DataError::InvalidConfig("empty year range".into()));
        }
        Ok(())
    }

    pub fn years(&self) -> impl Iterator<Item = i32> {
        self.first_year..=self.last_year
    }
}

/// Ground-truth curve and landmarks for one plot-year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub plot_id: String,
    pub year: i32,
    pub params: DoubleLogisticParams,
    pub sos: f64,
    pub pos: f64,
    pub peak: f64,
    pub soil_mean: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub plots: Vec<PlotRecord>,
    pub ndvi: Vec<NdviSample>,
    pub soil: Vec<SoilTempSeries>,
    pub weather: Vec<DailyWeather>,
    pub truth: Vec<GroundTruth>,
}

fn climatology(doy: u32, mean: f64, amplitude: f64) -> f64 {
    mean + amplitude * (2.0 * std::f64::consts::PI * (doy as f64 - 110.0) / 365.0).sin()
}

const AIR_MEAN: f64 = 4.5;
const AIR_AMP: f64 = 6.5;
const IRR_MEAN: f64 = 120.0;
const IRR_AMP: f64 = 110.0;
const SPRING_DOYS: std::ops::RangeInclusive<u32> = 71..=140;

struct YearWeather {
    days: Vec<DailyWeather>,
    air_anomaly: f64,
    irradiance_anomaly: f64,
}

fn year_weather(year: i32, rng: &mut ChaCha8Rng) -> YearWeather {
    let std_normal = Normal::new(0.0, 1.0).unwrap();
    let air_shift = std_normal.sample(rng);
    let irr_shift = 15.0 * std_normal.sample(rng);
    let wetness: f64 = rng.random_range(0.7..1.3);
    let rain = Exp::new(1.0 / 3.5).unwrap();
    let mut days = Vec::with_capacity(366);
    let (mut air_dev, mut irr_dev, mut n_spring) = (0.0, 0.0, 0);
    let mut date = NaiveDate::from_ymd_opt(year, 1, 1).unwrap();
    while date.year() == year {
        let doy = date.ordinal();
        let air = climatology(doy, AIR_MEAN, AIR_AMP) + air_shift + 2.0 * std_normal.sample(rng);
        let irr = (climatology(doy, IRR_MEAN, IRR_AMP) + irr_shift + 30.0 * std_normal.sample(rng))
            .max(0.0);
        let precip = if rng.random_bool(0.6) {
            wetness * rain.sample(rng)
        } else {
            0.0
        };
        if SPRING_DOYS.contains(&doy) {
            air_dev += air - climatology(doy, AIR_MEAN, AIR_AMP);
            irr_dev += irr - climatology(doy, IRR_MEAN, IRR_AMP);
            n_spring += 1;
        }
        days.push(DailyWeather {
            date,
            air_temp: air,
            precipitation: precip,
            irradiance: irr,
        });
        date = date.succ_opt().unwrap();
    }
    YearWeather {
        days,
        air_anomaly: air_dev / n_spring as f64,
        irradiance_anomaly: irr_dev / n_spring as f64,
    }
}

fn make_plots(cfg: &SyntheticConfig) -> Vec<PlotRecord> {
    (0..cfg.n_plots)
        .map(|i| {
            let category = Category::ALL[i % 5];
            let transect = ((i / 5) % 5 + 1) as u8;
            let site = if (i / 25) % 2 == 0 {
                Site::DisturbedGrassland
            } else {
                Site::LongWarmedGrassland
            };
            let code = if site == Site::DisturbedGrassland {
                "GN"
            } else {
                "GO"
            };
            let mut plot_id = format!("{code}{transect}{category}");
            if i >= 50 {
                plot_id.push_str(&format!("-{}", i / 50));
            }
            PlotRecord {
                plot_id,
                site,
                transect,
                category,
            }
        })
        .collect()
}

/// Generates a full synthetic dataset; identical seeds give identical data.
pub fn generate_synthetic_dataset(cfg: &SyntheticConfig) -> Result<SyntheticDataset> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let std_normal = Normal::new(0.0, 1.0).unwrap();
    let plots = make_plots(cfg);

    let offsets: Vec<f64> = plots
        .iter()
        .map(|p| {
            let (lo, hi) = p.category.warming_range();
            let half = 0.5 * (hi - lo);
            let jitter = if half > 0.0 {
                rng.random_range(-half..half)
            } else {
                0.0
            };
            (cfg.warming_offsets[p.category.index()] + jitter).max(0.0)
        })
        .collect();

    let mut weather = Vec::new();
    let mut ndvi = Vec::new();
    let mut soil = Vec::new();
    let mut truth = Vec::new();
    for year in cfg.years() {
        let yw = year_weather(year, &mut rng);
        let soil_shift = 0.3 * std_normal.sample(&mut rng);
        let n_days = yw.days.len() as u32;
        for (plot, &offset) in plots.iter().zip(&offsets) {
            let readings: Vec<(u32, f64)> = (1..=n_days)
                .map(|doy| {
                    let t = climatology(doy, SOIL_BASELINE_C, 5.0)
                        + soil_shift
                        + offset
                        + 0.5 * std_normal.sample(&mut rng);
                    (doy, t)
                })
                .collect();
            let series = SoilTempSeries {
                plot_id: plot.plot_id.clone(),
                year,
                readings,
            };
            let soil_mean = series.annual_mean();
            let warming = soil_mean - SOIL_BASELINE_C;

            let sos = SOS_BASE
                + cfg.sos_sensitivity * warming
                + cfg.weather_sensitivity * yw.air_anomaly
                + cfg.plot_sd * std_normal.sample(&mut rng);
            let mut pos = POS_BASE
                + cfg.pos_sensitivity * warming
                + 0.7 * cfg.weather_sensitivity * yw.air_anomaly
                + cfg.plot_sd * std_normal.sample(&mut rng);
            pos = pos.max(sos + 6.0);
            let peak_target = (PEAK_BASE
                + cfg.peak_sensitivity * warming
                + cfg.peak_irradiance_sensitivity * yw.irradiance_anomaly)
                .clamp(0.4, 0.97);
            let d: f64 = rng.random_range(0.15..0.25);
            let c = peak_target - d;
            let steep = rng
                .random_range(0.9..1.5f64)
                .max((MIN_SATURATION + SOS_OFFSET) / (pos - sos));
            let b1 = -steep;
            let b2 = b1 / rng.random_range(0.8..1.4);
            let a1 = sos - SOS_OFFSET / b1;
            let params = DoubleLogisticParams::from_free(a1, b1, b2, c, d, pos);

            let start = 14.0 + rng.random_range(0.0..2.0);
            let mut week = start;
            while week <= 48.0 {
                let noise = if cfg.noise_sd > 0.0 {
                    cfg.noise_sd * std_normal.sample(&mut rng)
                } else {
                    0.0
                };
                let value = (eval_double_logistic(&params, week) + noise).clamp(-1.0, 1.0);
                ndvi.push(NdviSample {
                    plot_id: plot.plot_id.clone(),
                    year,
                    week,
                    ndvi: value,
                });
                week += 2.0;
            }
            truth.push(GroundTruth {
                plot_id: plot.plot_id.clone(),
                year,
                params,
                sos: a1 + SOS_OFFSET / b1,
                pos,
                peak: eval_double_logistic(&params, pos),
                soil_mean,
            });
            soil.push(series);
        }
        weather.extend(yw.days);
    }
    ndvi.sort_by(|a, b| {
        a.plot_id
            .cmp(&b.plot_id)
            .then(a.year.cmp(&b.year))
            .then(a.week.total_cmp(&b.week))
    });
    soil.sort_by(|a, b| a.plot_id.cmp(&b.plot_id).then(a.year.cmp(&b.year)));
    truth.sort_by(|a, b| a.plot_id.cmp(&b.plot_id).then(a.year.cmp(&b.year)));
    Ok(SyntheticDataset {
        plots,
        ndvi,
        soil,
        weather,
        truth,
    })
}

pub const TRUTH_HEADER: [&str; 13] = [
    "plot_id",
    "year",
    "a1",
    "a2",
    "b1",
    "b2",
    "c",
    "d",
    "p",
    "sos",
    "pos",
    "peak",
    "soil_mean",
];

pub fn write_truth<W: std::io::Write>(w: W, truth: &[GroundTruth]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(TRUTH_HEADER)?;
    for t in truth {
        let p = &t.params;
        let mut rec = vec![t.plot_id.clone(), t.year.to_string()];
        rec.extend(
            [
                p.a1,
                p.a2,
                p.b1,
                p.b2,
                p.c,
                p.d,
                p.p,
                t.sos,
                t.pos,
                t.peak,
                t.soil_mean,
            ]
            .iter()
            .map(f64::to_string),
        );
        out.write_record(&rec)?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[derive(Deserialize)]
struct TruthRow {
    plot_id: String,
    year: i32,
    a1: f64,
    a2: f64,
    b1: f64,
    b2: f64,
    c: f64,
    d: f64,
    p: f64,
    sos: f64,
    pos: f64,
    peak: f64,
    soil_mean: f64,
}

pub fn read_truth<R: std::io::Read>(r: R) -> Result<Vec<GroundTruth>> {
    let rows: Vec<TruthRow> = super::read_rows(r, &TRUTH_HEADER)?;
    Ok(rows
        .into_iter()
        .map(|t| GroundTruth {
            plot_id: t.plot_id,
            year: t.year,
            params: DoubleLogisticParams {
                a1: t.a1,
                a2: t.a2,
                b1: t.b1,
                b2: t.b2,
                c: t.c,
                d: t.d,
                p: t.p,
            },
            sos: t.sos,
            pos: t.pos,
            peak: t.peak,
            soil_mean: t.soil_mean,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_samples_lie_on_curve() {
        let cfg = SyntheticConfig {
            n_plots: 1,
            noise_sd: 0.0,
            first_year: 2015,
            last_year: 2015,
            ..Default::default()
        };
        let ds = generate_synthetic_dataset(&cfg).unwrap();
        let t = &ds.truth[0];
        assert!(ds.ndvi.len() >= 15);
        for s in &ds.ndvi {
            assert_eq!(s.ndvi, eval_double_logistic(&t.params, s.week));
        }
        t.params.validate().unwrap();
    }

    #[test]
    fn same_seed_same_data() {
        let cfg = SyntheticConfig {
            n_plots: 7,
            ..Default::default()
        };
        assert_eq!(
            generate_synthetic_dataset(&cfg).unwrap(),
            generate_synthetic_dataset(&cfg).unwrap()
        );
        let other = SyntheticConfig {
            seed: 43,
            ..cfg.clone()
        };
        assert_ne!(
            generate_synthetic_dataset(&cfg).unwrap(),
            generate_synthetic_dataset(&other).unwrap()
        );
    }

    #[test]
    fn truth_csv_round_trip() {
        let cfg = SyntheticConfig {
            n_plots: 3,
            first_year: 2016,
            last_year: 2017,
            ..Default::default()
        };
        let data = generate_synthetic_dataset(&cfg).unwrap();
        let mut buf = Vec::new();
        write_truth(&mut buf, &data.truth).unwrap();
        assert_eq!(read_truth(buf.as_slice()).unwrap(), data.truth);
    }

    #[test]
    fn invalid_config_rejected() {
        assert!(generate_synthetic_dataset(&SyntheticConfig {
            n_plots: 0,
            ..Default::default()
        })
        .is_err());
        assert!(generate_synthetic_dataset(&SyntheticConfig {
            noise_sd: -1.0,
            ..Default::default()
        })
        .is_err());
    }

    #[test]
    fn plot_ids_unique_and_categories_cycle() {
        let ds = generate_synthetic_dataset(&SyntheticConfig {
            n_plots: 60,
            last_year: 2014,
            ..Default::default()
        })
        .unwrap();
        let mut ids: Vec<&str> = ds.plots.iter().map(|p| p.plot_id.as_str()).collect();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), 60);
        assert_eq!(ds.plots[7].category, Category::C);
    }

    #[test]
    fn truth_landmarks_are_consistent() {
        let ds = generate_synthetic_dataset(&SyntheticConfig::default()).unwrap();
        for t in &ds.truth {
            t.params.validate().unwrap();
            assert!(t.sos < t.pos);
            assert!(t.params.b1 * (t.params.p - t.params.a1) <= -MIN_SATURATION + 1e-9);
            assert!(t.params.derivative_gap().abs() < 1e-3);
        }
    }
}
