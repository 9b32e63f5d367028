//! Underlap coefficients, related three-class summaries, and Bayesian
//! nonparametric density estimators for computing them from data.

pub mod cli;
pub mod data;
pub mod densities;
pub mod design;
pub mod dpm;
pub mod error;
pub mod io;
pub mod lsbp;
pub mod measures;
pub mod mixture;
pub mod numerics;
pub mod polya_gamma;
pub mod posterior;
pub mod simulation;
pub mod splines;

pub use error::{Error, Result};
