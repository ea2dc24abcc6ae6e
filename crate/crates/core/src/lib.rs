//! Numerical laboratory for non-normality of holomorphic families on
//! domains in C^n.
//!
//! The pipeline is: sample a compact grid in the source domain, track the
//! growth of the derivative supremum along the family index to flag
//! μ₁-points, classify the flagged locus (empty, thin analytic, non-analytic,
//! or with interior), and at chosen locus points build Zalcman rescalings
//! `g_j(ξ) = f_j(w_j + ρ_j ξ)` whose limits witness the failure of
//! normality.

pub mod catalog;
pub mod config;
pub mod expr;
pub mod geometry;
pub mod linalg;
pub mod marty;
pub mod mu;
pub mod pipeline;
pub mod report;
pub mod rescale;
pub mod sampling;
pub mod svg;
pub mod targets;

pub use expr::{parse, DualComplex, EvalError, Expr, HolomorphicFamily, ParseError};
pub use geometry::{Domain, Grid};
pub use mu::{LocusClass, MuReport, Verdict};
pub use rescale::{ConvergenceOutcome, ConvergenceVerdict, RescalingSequence};
pub use targets::TargetMetric;

pub use num_complex::Complex64;
