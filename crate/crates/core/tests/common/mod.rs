#![allow(dead_code)]

pub mod gradient;
pub mod ols;
pub mod shapley;
