//! Continuity-constrained double logistic NDVI model and its bounded
//! least-squares fit.

mod fit;
mod io;
mod model;
pub mod trf;

use thiserror::Error;

pub use fit::{fit_season, FitOptions, ParamBounds, SeasonFit};
pub use io::{read_fits, write_fits, FITS_HEADER};
pub use model::{
    eval_double_logistic, eval_jacobian, DoubleLogisticParams, FREE_PARAM_NAMES, N_FREE,
};

#[derive(Debug, Error)]
pub enum FitError {
    #[error("need at least {needed} samples, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("samples span {span} weeks, need at least {needed}")]
    InsufficientSpan { span: f64, needed: f64 },
    #[error("samples contain a non-finite value")]
    NonFinite,
    #[error("no restart converged for {plot_id} {year}")]
    NoConvergence {
        plot_id: String,
        year: i32,
        best: Box<SeasonFit>,
    },
}
