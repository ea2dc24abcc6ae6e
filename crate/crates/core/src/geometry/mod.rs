//! Source domains and their Kobayashi-Royden infinitesimal metric.

mod domain;
mod kobayashi;
pub mod optimize;

pub use domain::{Domain, DomainSpec, GenericDomain, Grid, DEFAULT_FULL_SPACE_HALF_WIDTH};
pub use kobayashi::{
    exit_parameter, extremal_disc, kobayashi, kobayashi_closed_form, kobayashi_numeric,
    AnalyticDiscCandidate, ExtremalDisc, NumericOptions, OPTIMIZER_BOUNDARY_SAMPLES,
};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("point is not interior to the domain")]
    OutsideDomain,
    #[error("domain is not hyperbolic")]
    NotHyperbolic,
    #[error("not supported: {0}")]
    NotSupported(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid options: {0}")]
    InvalidOptions(String),
}
