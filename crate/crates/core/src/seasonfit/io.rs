use std::io::{Read, Write};

use serde::Deserialize;

use super::{DoubleLogisticParams, SeasonFit};
use crate::data::DataError;

pub const FITS_HEADER: [&str; 14] = [
    "plot_id",
    "year",
    "a1",
    "a2",
    "b1",
    "b2",
    "c",
    "d",
    "p",
    "r2",
    "mse",
    "n_points",
    "converged",
    "deriv_gap",
];

#[derive(Deserialize)]
struct Row {
    plot_id: String,
    year: i32,
    a1: f64,
    a2: f64,
    b1: f64,
    b2: f64,
    c: f64,
    d: f64,
    p: f64,
    r2: f64,
    mse: f64,
    n_points: usize,
    converged: bool,
    deriv_gap: f64,
}

pub fn write_fits<W: Write>(w: W, fits: &[SeasonFit]) -> Result<(), DataError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(FITS_HEADER)?;
    for f in fits {
        let p = &f.params;
        let mut rec = vec![f.plot_id.clone(), f.year.to_string()];
        rec.extend(
            [p.a1, p.a2, p.b1, p.b2, p.c, p.d, p.p, f.r2, f.mse]
                .iter()
                .map(f64::to_string),
        );
        rec.push(f.n_points.to_string());
        rec.push(f.converged.to_string());
        rec.push(f.derivative_gap_at_p.to_string());
        out.write_record(&rec)?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Reads fits back. `a2` is taken from the file as written; it is not
/// re-derived from the continuity constraint.
pub fn read_fits<R: Read>(r: R) -> Result<Vec<SeasonFit>, DataError> {
    let mut rdr = csv::Reader::from_reader(r);
    let headers = rdr.headers()?.clone();
    if headers.iter().ne(FITS_HEADER) {
        return Err(DataError::BadHeader {
            expected: FITS_HEADER.join(","),
            found: headers.iter().collect::<Vec<_>>().join(","),
        });
    }
    let mut out = Vec::new();
    for rec in rdr.deserialize::<Row>() {
        let r = rec?;
        out.push(SeasonFit {
            plot_id: r.plot_id,
            year: r.year,
            params: DoubleLogisticParams {
                a1: r.a1,
                a2: r.a2,
                b1: r.b1,
                b2: r.b2,
                c: r.c,
                d: r.d,
                p: r.p,
            },
            r2: r.r2,
            mse: r.mse,
            n_points: r.n_points,
            converged: r.converged,
            derivative_gap_at_p: r.deriv_gap,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let params = DoubleLogisticParams::from_free(17.3, -1.1, -0.7, 0.55, 0.21, 27.9);
        let fit = SeasonFit {
            plot_id: "GN2C".into(),
            year: 2017,
            params,
            r2: 0.973,
            mse: 1.2e-4,
            n_points: 18,
            converged: true,
            derivative_gap_at_p: params.derivative_gap(),
        };
        let mut buf = Vec::new();
        write_fits(&mut buf, std::slice::from_ref(&fit)).unwrap();
        let back = read_fits(buf.as_slice()).unwrap();
        assert_eq!(back, vec![fit]);
    }

    #[test]
    fn wrong_header() {
        assert!(matches!(
            read_fits("plot_id,year\n".as_bytes()),
            Err(DataError::BadHeader { .. })
        ));
    }
}
