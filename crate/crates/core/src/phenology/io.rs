use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::PhenologyMetrics;
use crate::data::DataError;

pub const PHENOLOGY_HEADER: [&str; 6] = ["plot_id", "year", "sos", "pos", "peak", "qc_pass"];

#[derive(Serialize, Deserialize)]
struct Row {
    plot_id: String,
    year: i32,
    sos: f64,
    pos: f64,
    peak: f64,
    qc_pass: bool,
}

pub fn write_phenology<W: Write>(w: W, rows: &[PhenologyMetrics]) -> Result<(), DataError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(PHENOLOGY_HEADER)?;
    for m in rows {
        out.write_record(&[
            m.plot_id.clone(),
            m.year.to_string(),
            m.sos.to_string(),
            m.pos.to_string(),
            m.peak.to_string(),
            m.qc_pass.to_string(),
        ])?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_phenology<R: Read>(r: R) -> Result<Vec<PhenologyMetrics>, DataError> {
    let mut rdr = csv::Reader::from_reader(r);
    let headers = rdr.headers()?.clone();
    if headers.iter().ne(PHENOLOGY_HEADER) {
        return Err(DataError::BadHeader {
            expected: PHENOLOGY_HEADER.join(","),
            found: headers.iter().collect::<Vec<_>>().join(","),
        });
    }
    let mut out = Vec::new();
    for rec in rdr.deserialize::<Row>() {
        let row = rec?;
        out.push(PhenologyMetrics {
            plot_id: row.plot_id,
            year: row.year,
            sos: row.sos,
            pos: row.pos,
            peak: row.peak,
            qc_pass: row.qc_pass,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let rows = vec![
            PhenologyMetrics {
                plot_id: "GO3E".into(),
                year: 2018,
                sos: 19.25,
                pos: 27.5,
                peak: 0.7125,
                qc_pass: true,
            },
            PhenologyMetrics {
                plot_id: "GN1A".into(),
                year: 2015,
                sos: f64::NAN,
                pos: 30.0,
                peak: 0.2,
                qc_pass: false,
            },
        ];
        let mut buf = Vec::new();
        write_phenology(&mut buf, &rows).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("plot_id,year,sos,pos,peak,qc_pass\n"));
        let back = read_phenology(buf.as_slice()).unwrap();
        assert_eq!(back[0], rows[0]);
        assert!(back[1].sos.is_nan());
    }
}
