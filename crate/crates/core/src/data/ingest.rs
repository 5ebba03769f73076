use std::collections::HashSet;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use csv::{ReaderBuilder, StringRecord};

use super::weather::DailyWeather;
use super::{Category, DataError, NdviSample, PlotRecord, Result, Site, SoilTempSeries};

const NDVI_HEADER: [&str; 4] = ["plot_id", "year", "week", "ndvi"];
const SOIL_HEADER: [&str; 4] = ["plot_id", "year", "doy", "temp_c"];
const WEATHER_HEADER: [&str; 4] = ["date", "air_temp_c", "precip_mm", "irradiance_wm2"];
const PLOTS_HEADER: [&str; 4] = ["plot_id", "site", "transect", "category"];

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn records<R: Read>(reader: R, expected: &[&str]) -> Result<Vec<(u64, StringRecord)>> {
    let mut rdr = ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.iter().ne(expected.iter().copied()) {
        return Err(DataError::BadHeader {
            expected: expected.join(","),
            found: header.iter().collect::<Vec<_>>().join(","),
        });
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            DataError::MalformedRow {
                line,
                reason: e.to_string(),
            }
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != expected.len() {
            return Err(DataError::MalformedRow {
                line,
                reason: format!("expected {} fields, found {}", expected.len(), rec.len()),
            });
        }
        out.push((line, rec));
    }
    Ok(out)
}

fn field<T: std::str::FromStr>(rec: &StringRecord, idx: usize, name: &str, line: u64) -> Result<T> {
    rec[idx].parse::<T>().map_err(|_| DataError::MalformedRow {
        line,
        reason: format!("cannot parse {name} from {:?}", &rec[idx]),
    })
}

pub fn read_ndvi<R: Read>(reader: R) -> Result<Vec<NdviSample>> {
    let mut samples = Vec::new();
    for (line, rec) in records(reader, &NDVI_HEADER)? {
        let week: f64 = field(&rec, 2, "week", line)?;
        let ndvi: f64 = field(&rec, 3, "ndvi", line)?;
        if !(0.0..=52.0).contains(&week) {
            return Err(DataError::OutOfRange {
                field: "week",
                line,
            });
        }
        if !(-1.0..=1.0).contains(&ndvi) {
            return Err(DataError::OutOfRange {
                field: "ndvi",
                line,
            });
        }
        samples.push(NdviSample {
            plot_id: rec[0].to_string(),
            year: field(&rec, 1, "year", line)?,
            week,
            ndvi,
        });
    }
    samples.sort_by(|a, b| {
        a.plot_id
            .cmp(&b.plot_id)
            .then(a.year.cmp(&b.year))
            .then(a.week.total_cmp(&b.week))
    });
    for w in samples.windows(2) {
        if w[0].plot_id == w[1].plot_id && w[0].year == w[1].year && w[0].week == w[1].week {
            return Err(DataError::DuplicateSample {
                plot: w[0].plot_id.clone(),
                year: w[0].year,
                week: w[0].week,
            });
        }
    }
    Ok(samples)
}

/// Reads `plot_id,year,week,ndvi`, sorted by (plot_id, year, week).
pub fn ingest_ndvi(path: impl AsRef<Path>) -> Result<Vec<NdviSample>> {
    read_ndvi(open(path.as_ref())?)
}

pub fn read_soil<R: Read>(reader: R) -> Result<Vec<SoilTempSeries>> {
    let mut rows: Vec<(String, i32, u32, f64, u64)> = Vec::new();
    for (line, rec) in records(reader, &SOIL_HEADER)? {
        let doy: u32 = field(&rec, 2, "doy", line)?;
        if !(1..=366).contains(&doy) {
            return Err(DataError::OutOfRange { field: "doy", line });
        }
        let temp: f64 = field(&rec, 3, "temp_c", line)?;
        if !temp.is_finite() {
            return Err(DataError::OutOfRange {
                field: "temp_c",
                line,
            });
        }
        rows.push((
            rec[0].to_string(),
            field(&rec, 1, "year", line)?,
            doy,
            temp,
            line,
        ));
    }
    rows.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut out: Vec<SoilTempSeries> = Vec::new();
    for (plot, year, doy, temp, line) in rows {
        match out.last_mut() {
            Some(s) if s.plot_id == plot && s.year == year => {
                if s.readings.last().map(|r| r.0) == Some(doy) {
                    return Err(DataError::MalformedRow {
                        line,
                        reason: format!("second reading for {plot} {year} day {doy}"),
                    });
                }
                s.readings.push((doy, temp));
            }
            _ => out.push(SoilTempSeries {
                plot_id: plot,
                year,
                readings: vec![(doy, temp)],
            }),
        }
    }
    Ok(out)
}

/// Reads `plot_id,year,doy,temp_c` into one series per plot-year.
pub fn ingest_soil(path: impl AsRef<Path>) -> Result<Vec<SoilTempSeries>> {
    read_soil(open(path.as_ref())?)
}

pub fn read_weather_daily<R: Read>(reader: R) -> Result<Vec<DailyWeather>> {
    let mut out = Vec::new();
    for (line, rec) in records(reader, &WEATHER_HEADER)? {
        let date = NaiveDate::parse_from_str(&rec[0], "%Y-%m-%d").map_err(|_| {
            DataError::MalformedRow {
                line,
                reason: format!("bad ISO-8601 date {:?}", &rec[0]),
            }
        })?;
        out.push(DailyWeather {
            date,
            air_temp: field(&rec, 1, "air_temp_c", line)?,
            precipitation: field(&rec, 2, "precip_mm", line)?,
            irradiance: field(&rec, 3, "irradiance_wm2", line)?,
        });
    }
    out.sort_by_key(|d| d.date);
    Ok(out)
}

/// Reads `date,air_temp_c,precip_mm,irradiance_wm2`, sorted by date.
pub fn ingest_weather_daily(path: impl AsRef<Path>) -> Result<Vec<DailyWeather>> {
    read_weather_daily(open(path.as_ref())?)
}

pub fn read_plots<R: Read>(reader: R) -> Result<Vec<PlotRecord>> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (line, rec) in records(reader, &PLOTS_HEADER)? {
        let site: Site = rec[1]
            .parse()
            .map_err(|reason| DataError::MalformedRow { line, reason })?;
        let transect: u8 = field(&rec, 2, "transect", line)?;
        if !(1..=5).contains(&transect) {
            return Err(DataError::OutOfRange {
                field: "transect",
                line,
            });
        }
        let category: Category = rec[3]
            .parse()
            .map_err(|reason| DataError::MalformedRow { line, reason })?;
        if !seen.insert(rec[0].to_string()) {
            return Err(DataError::DuplicatePlot(rec[0].to_string()));
        }
        out.push(PlotRecord {
            plot_id: rec[0].to_string(),
            site,
            transect,
            category,
        });
    }
    Ok(out)
}

/// Reads `plot_id,site,transect,category`.
pub fn ingest_plots(path: impl AsRef<Path>) -> Result<Vec<PlotRecord>> {
    read_plots(open(path.as_ref())?)
}

fn writer<W: Write>(w: W, header: &[&str]) -> Result<csv::Writer<W>> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(header)?;
    Ok(wtr)
}

pub fn write_ndvi<W: Write>(w: W, samples: &[NdviSample]) -> Result<()> {
    let mut wtr = writer(w, &NDVI_HEADER)?;
    for s in samples {
        wtr.write_record([
            s.plot_id.clone(),
            s.year.to_string(),
            s.week.to_string(),
            s.ndvi.to_string(),
        ])?;
    }
    wtr.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn write_soil<W: Write>(w: W, series: &[SoilTempSeries]) -> Result<()> {
    let mut wtr = writer(w, &SOIL_HEADER)?;
    for s in series {
        for &(doy, t) in &s.readings {
            wtr.write_record([
                s.plot_id.clone(),
                s.year.to_string(),
                doy.to_string(),
                t.to_string(),
            ])?;
        }
    }
    wtr.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn write_weather_daily<W: Write>(w: W, days: &[DailyWeather]) -> Result<()> {
    let mut wtr = writer(w, &WEATHER_HEADER)?;
    for d in days {
        wtr.write_record([
            d.date.format("%Y-%m-%d").to_string(),
            d.air_temp.to_string(),
            d.precipitation.to_string(),
            d.irradiance.to_string(),
        ])?;
    }
    wtr.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn write_plots<W: Write>(w: W, plots: &[PlotRecord]) -> Result<()> {
    let mut wtr = writer(w, &PLOTS_HEADER)?;
    for p in plots {
        wtr.write_record([
            p.plot_id.clone(),
            p.site.to_string(),
            p.transect.to_string(),
            p.category.to_string(),
        ])?;
    }
    wtr.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_file_with_header_is_empty() {
        let out = read_ndvi("plot_id,year,week,ndvi\n".as_bytes()).unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn ndvi_above_one_names_the_line() {
        let text = "plot_id,year,week,ndvi\nP1,2015,10,0.3\nP1,2015,12,1.5\n";
        match read_ndvi(text.as_bytes()) {
            Err(DataError::OutOfRange {
                field: "ndvi",
                line: 3,
            }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn week_out_of_range_rejected() {
        let text = "plot_id,year,week,ndvi\nP1,2015,53.5,0.3\n";
        assert!(matches!(
            read_ndvi(text.as_bytes()),
            Err(DataError::OutOfRange {
                field: "week",
                line: 2
            })
        ));
    }

    #[test]
    fn three_row_fixture_sorted_and_exact() {
        let text =
            "plot_id,year,week,ndvi\nB2,2016,20.5,0.612\nA1,2016,30.25,0.81\nA1,2016,14.125,0.2\n";
        let out = read_ndvi(text.as_bytes()).unwrap();
        let expected = [
            ("A1", 2016, 14.125, 0.2),
            ("A1", 2016, 30.25, 0.81),
            ("B2", 2016, 20.5, 0.612),
        ];
        assert_eq!(out.len(), 3);
        for (s, (p, y, w, v)) in out.iter().zip(expected) {
            assert_eq!(s.plot_id, p);
            assert_eq!(s.year, y);
            assert_eq!(s.week.to_bits(), f64::to_bits(w));
            assert_eq!(s.ndvi.to_bits(), f64::to_bits(v));
        }
    }

    #[test]
    fn duplicate_sample_rejected() {
        let text = "plot_id,year,week,ndvi\nA1,2016,10,0.2\nA1,2016,10,0.3\n";
        assert!(matches!(
            read_ndvi(text.as_bytes()),
            Err(DataError::DuplicateSample { .. })
        ));
    }

    #[test]
    fn malformed_row_and_header() {
        let text = "plot_id,year,week,ndvi\nA1,twenty,10,0.2\n";
        assert!(matches!(
            read_ndvi(text.as_bytes()),
            Err(DataError::MalformedRow { line: 2, .. })
        ));
        let text = "plot,year,week,ndvi\n";
        assert!(matches!(
            read_ndvi(text.as_bytes()),
            Err(DataError::BadHeader { .. })
        ));
    }

    #[test]
    fn plots_reject_bad_transect_and_duplicates() {
        let text = "plot_id,site,transect,category\nG1A,disturbed-grassland,6,A\n";
        assert!(matches!(
            read_plots(text.as_bytes()),
            Err(DataError::OutOfRange {
                field: "transect",
                ..
            })
        ));
        let text = "plot_id,site,transect,category\nG1A,disturbed-grassland,1,A\nG1A,long-warmed-grassland,2,B\n";
        assert!(matches!(
            read_plots(text.as_bytes()),
            Err(DataError::DuplicatePlot(_))
        ));
    }

    #[test]
    fn soil_groups_by_plot_year() {
        let text = "plot_id,year,doy,temp_c\nA,2015,2,4.0\nA,2015,1,2.0\nB,2015,1,7.5\n";
        let out = read_soil(text.as_bytes()).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].readings, vec![(1, 2.0), (2, 4.0)]);
        assert_eq!(out[0].annual_mean(), 3.0);
    }

    proptest! {
        #[test]
        fn ndvi_serialization_is_lossless(
            rows in proptest::collection::vec((0u8..4, 2014i32..2020, 0.0f64..=52.0, -1.0f64..=1.0), 0..40)
        ) {
            let mut samples: Vec<NdviSample> = rows
                .into_iter()
                .map(|(p, year, week, ndvi)| NdviSample { plot_id: format!("P{p}"), year, week, ndvi })
                .collect();
            samples.sort_by(|a, b| a.plot_id.cmp(&b.plot_id).then(a.year.cmp(&b.year)).then(a.week.total_cmp(&b.week)));
            samples.dedup_by(|a, b| a.plot_id == b.plot_id && a.year == b.year && a.week == b.week);
            let mut buf = Vec::new();
            write_ndvi(&mut buf, &samples).unwrap();
            let back = read_ndvi(buf.as_slice()).unwrap();
            prop_assert_eq!(back, samples);
        }
    }
}
