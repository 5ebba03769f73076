use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::NeuralError;
use crate::data::{SoilTempSeries, WeatherWeekly, WEEKS_PER_YEAR_RETAINED};

pub const WEEKS: usize = WEEKS_PER_YEAR_RETAINED as usize;
/// 26 weeks each of air temperature, precipitation and irradiance, then the
/// annual mean soil temperature.
pub const N_FEATURES: usize = 3 * WEEKS + 1;
pub const AIR_OFFSET: usize = 0;
pub const PRECIP_OFFSET: usize = WEEKS;
pub const IRR_OFFSET: usize = 2 * WEEKS;
pub const SOIL_INDEX: usize = 3 * WEEKS;

/// Column names in feature order: `air_w01..air_w26`, `precip_w01..`,
/// `irr_w01..`, `soil_mean`.
pub fn feature_names() -> Vec<String> {
    let mut names = Vec::with_capacity(N_FEATURES);
    for prefix in ["air", "precip", "irr"] {
        names.extend((1..=WEEKS).map(|w| format!("{prefix}_w{w:02}")));
    }
    names.push("soil_mean".to_string());
    names
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub plot_id: String,
    pub year: i32,
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn soil_mean(&self) -> f64 {
        self.values[SOIL_INDEX]
    }
}

/// Builds one feature vector per `(plot_id, year)` key, in key order.
///
/// Weather is shared by all plots of a year; only the soil entry differs.
pub fn build_features(
    weather: &[WeatherWeekly],
    soil: &[SoilTempSeries],
    keys: &[(String, i32)],
) -> Result<Vec<FeatureVector>, NeuralError> {
    let mut by_week: BTreeMap<(i32, u32), &WeatherWeekly> = BTreeMap::new();
    for w in weather {
        by_week.insert((w.year, w.week), w);
    }
    let soil_by_key: HashMap<(&str, i32), &SoilTempSeries> = soil
        .iter()
        .map(|s| ((s.plot_id.as_str(), s.year), s))
        .collect();

    let mut cache: HashMap<i32, Vec<f64>> = HashMap::new();
    let mut out = Vec::with_capacity(keys.len());
    for (plot, year) in keys {
        if !cache.contains_key(year) {
            let mut shared = vec![0.0; 3 * WEEKS];
            for week in 1..=WEEKS as u32 {
                let w = by_week
                    .get(&(*year, week))
                    .ok_or(NeuralError::MissingWeek { year: *year, week })?;
                let i = (week - 1) as usize;
                shared[AIR_OFFSET + i] = w.air_temp;
                shared[PRECIP_OFFSET + i] = w.precipitation;
                shared[IRR_OFFSET + i] = w.irradiance;
            }
            cache.insert(*year, shared);
        }
        let series =
            soil_by_key
                .get(&(plot.as_str(), *year))
                .ok_or_else(|| NeuralError::MissingSoil {
                    plot: plot.clone(),
                    year: *year,
                })?;
        let soil_mean = series.annual_mean();
        if !soil_mean.is_finite() {
            return Err(NeuralError::MissingSoil {
                plot: plot.clone(),
                year: *year,
            });
        }
        let mut values = cache[year].clone();
        values.push(soil_mean);
        out.push(FeatureVector {
            plot_id: plot.clone(),
            year: *year,
            values,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat_weather(year: i32, weeks: u32) -> Vec<WeatherWeekly> {
        (1..=weeks)
            .map(|week| WeatherWeekly {
                year,
                week,
                air_temp: 0.0,
                precipitation: 0.0,
                irradiance: 0.0,
            })
            .collect()
    }

    fn soil(plot: &str, year: i32, t: f64) -> SoilTempSeries {
        SoilTempSeries {
            plot_id: plot.into(),
            year,
            readings: vec![(1, t - 1.0), (2, t + 1.0)],
        }
    }

    #[test]
    fn zeros_then_soil() {
        let f = build_features(
            &flat_weather(2016, 52),
            &[soil("P1", 2016, 5.0)],
            &[("P1".into(), 2016)],
        )
        .unwrap();
        assert_eq!(f[0].values.len(), N_FEATURES);
        assert!(f[0].values[..78].iter().all(|v| *v == 0.0));
        assert_eq!(f[0].values[78], 5.0);
    }

    #[test]
    fn plots_share_weather() {
        let mut w = flat_weather(2016, 26);
        for (i, x) in w.iter_mut().enumerate() {
            x.air_temp = i as f64;
            x.precipitation = 2.0 * i as f64;
            x.irradiance = 100.0 + i as f64;
        }
        let keys = vec![("P1".to_string(), 2016), ("P2".to_string(), 2016)];
        let f = build_features(&w, &[soil("P1", 2016, 5.0), soil("P2", 2016, 9.0)], &keys).unwrap();
        assert_eq!(f[0].values[..78], f[1].values[..78]);
        assert_ne!(f[0].soil_mean(), f[1].soil_mean());
        assert_eq!(f[0].values[PRECIP_OFFSET + 3], 6.0);
        assert_eq!(f[0].values[IRR_OFFSET + 25], 125.0);
    }

    #[test]
    fn missing_inputs() {
        let err = build_features(
            &flat_weather(2016, 20),
            &[soil("P1", 2016, 5.0)],
            &[("P1".into(), 2016)],
        );
        assert_eq!(
            err,
            Err(NeuralError::MissingWeek {
                year: 2016,
                week: 21
            })
        );
        let err = build_features(&flat_weather(2016, 26), &[], &[("P1".into(), 2016)]);
        assert_eq!(
            err,
            Err(NeuralError::MissingSoil {
                plot: "P1".into(),
                year: 2016
            })
        );
    }

    #[test]
    fn names_follow_order() {
        let n = feature_names();
        assert_eq!(n.len(), 79);
        assert_eq!(n[0], "air_w01");
        assert_eq!(n[PRECIP_OFFSET], "precip_w01");
        assert_eq!(n[IRR_OFFSET + 25], "irr_w26");
        assert_eq!(n[SOIL_INDEX], "soil_mean");
    }
}
