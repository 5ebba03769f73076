//! Phenology extraction from NDVI seasons and the statistical and
//! machine-learning analysis built on top of it.

pub mod data;
pub mod explain;
pub mod linstats;
pub mod neural;
pub mod phenology;
pub mod predictor;
pub mod seasonfit;
