use std::collections::{BTreeMap, BTreeSet};

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use super::{DataError, Result, WeatherWeekly};

/// Only the first 26 weeks of each year feed the feature vector.
pub const WEEKS_PER_YEAR_RETAINED: u32 = 26;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyWeather {
    pub date: NaiveDate,
    pub air_temp: f64,
    pub precipitation: f64,
    pub irradiance: f64,
}

/// Week `w` covers day-of-year `[7(w-1)+1, 7w]`.
pub fn week_of_doy(doy: u32) -> u32 {
    (doy - 1) / 7 + 1
}

/// Averages daily weather into weeks 1..=26 for every year present.
///
/// Each output value is the mean over the daily records that fall in the
/// week's window; a week without any record is an error.
pub fn aggregate_weather_weekly(daily: &[DailyWeather]) -> Result<Vec<WeatherWeekly>> {
    let mut seen = BTreeSet::new();
    // (year, week) -> (count, sums)
    let mut acc: BTreeMap<(i32, u32), (usize, [f64; 3])> = BTreeMap::new();
    let mut years = BTreeSet::new();
    for d in daily {
        if !seen.insert(d.date) {
            return Err(DataError::DuplicateDate(d.date));
        }
        years.insert(d.date.year());
        let week = week_of_doy(d.date.ordinal());
        if week > WEEKS_PER_YEAR_RETAINED {
            continue;
        }
        let e = acc.entry((d.date.year(), week)).or_insert((0, [0.0; 3]));
        e.0 += 1;
        e.1[0] += d.air_temp;
        e.1[1] += d.precipitation;
        e.1[2] += d.irradiance;
    }
    let mut out = Vec::with_capacity(years.len() * WEEKS_PER_YEAR_RETAINED as usize);
    for year in years {
        for week in 1..=WEEKS_PER_YEAR_RETAINED {
            let (n, sums) = acc
                .get(&(year, week))
                .copied()
                .ok_or(DataError::EmptyWindow { year, week })?;
            let n = n as f64;
            out.push(WeatherWeekly {
                year,
                week,
                air_temp: sums[0] / n,
                precipitation: sums[1] / n,
                irradiance: sums[2] / n,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn year_of(year: i32, f: impl Fn(u32) -> f64) -> Vec<DailyWeather> {
        let start = NaiveDate::from_ymd_opt(year, 1, 1).unwrap();
        start
            .iter_days()
            .take_while(|d| d.year() == year)
            .map(|date| {
                let t = f(date.ordinal());
                DailyWeather {
                    date,
                    air_temp: t,
                    precipitation: 2.0 * t,
                    irradiance: t + 100.0,
                }
            })
            .collect()
    }

    #[test]
    fn constant_week_mean() {
        let days = year_of(2015, |_| 5.0);
        let w = aggregate_weather_weekly(&days).unwrap();
        assert_eq!(w.len(), 26);
        assert_eq!(w[0].air_temp, 5.0);
    }

    #[test]
    fn arithmetic_mean_of_first_week() {
        let days = year_of(2015, |doy| if doy <= 7 { (doy - 1) as f64 } else { 0.0 });
        let w = aggregate_weather_weekly(&days).unwrap();
        assert_eq!(w[0].air_temp, 3.0);
        assert_eq!(w[0].precipitation, 6.0);
    }

    #[test]
    fn sinusoidal_year_matches_brute_force_windows() {
        let f = |doy: u32| {
            4.0 + 7.0 * (2.0 * std::f64::consts::PI * (doy as f64 - 110.0) / 365.0).sin()
        };
        let mut days = year_of(2016, f);
        days.extend(year_of(2017, |d| f(d) + 1.0));
        let weekly = aggregate_weather_weekly(&days).unwrap();
        assert_eq!(weekly.len(), 52);
        for w in &weekly {
            let window: Vec<f64> = days
                .iter()
                .filter(|d| d.date.year() == w.year)
                .filter(|d| {
                    let doy = d.date.ordinal();
                    doy >= 7 * (w.week - 1) + 1 && doy <= 7 * w.week
                })
                .map(|d| d.air_temp)
                .collect();
            assert_eq!(window.len(), 7);
            let mean = window.iter().sum::<f64>() / 7.0;
            assert!((w.air_temp - mean).abs() < 1e-12);
        }
        let mut keys: Vec<(i32, u32)> = weekly.iter().map(|w| (w.year, w.week)).collect();
        keys.dedup();
        assert_eq!(keys.len(), 52);
    }

    #[test]
    fn missing_week_is_an_error() {
        let days: Vec<DailyWeather> = year_of(2015, |_| 1.0)
            .into_iter()
            .filter(|d| week_of_doy(d.date.ordinal()) != 4)
            .collect();
        assert!(matches!(
            aggregate_weather_weekly(&days),
            Err(DataError::EmptyWindow {
                year: 2015,
                week: 4
            })
        ));
    }

    #[test]
    fn duplicate_dates_rejected() {
        let mut days = year_of(2015, |_| 1.0);
        days.push(days[3].clone());
        assert!(matches!(
            aggregate_weather_weekly(&days),
            Err(DataError::DuplicateDate(_))
        ));
    }
}
