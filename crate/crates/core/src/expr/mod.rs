//! Holomorphic family expressions: parsing, printing, evaluation and exact
//! Jacobians through complex dual numbers.

mod ast;
mod dual;
mod eval;
mod family;
mod parser;

pub use ast::{Constant, Expr, Func};
pub use dual::DualComplex;
pub use family::{FamilyError, FamilyFile, HolomorphicFamily};
pub use parser::{parse, parse_with, ParseContext};

use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("syntax error at {position}: {message}")]
    Syntax { position: usize, message: String },
    #[error("variable z{index} exceeds ambient dimension {dim}")]
    Dimension { index: usize, dim: usize },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("logarithm of zero")]
    LogOfZero,
    #[error("{func} evaluated on its branch cut")]
    BranchCut { func: &'static str },
    #[error("{func} is not differentiable here")]
    NotDifferentiable { func: &'static str },
    #[error("exponent {re}{im:+}i is not an integer")]
    NonIntegerExponent { re: f64, im: f64 },
    #[error("point has {got} coordinates, expression needs {expected}")]
    PointDimension { expected: usize, got: usize },
    #[error("family index must be a positive integer")]
    InvalidIndex,
}

/// Evaluates a single expression at `point` with family index `param`.
pub fn eval_scalar(expr: &Expr, point: &[Complex64], param: f64) -> Result<Complex64, EvalError> {
    eval::eval_expr(expr, point, param)
}

/// Value and complex derivative of `expr` along the direction `direction`
/// at `point`.
pub fn eval_directional(
    expr: &Expr,
    point: &[Complex64],
    direction: &[Complex64],
    param: f64,
) -> Result<DualComplex, EvalError> {
    let vars: Vec<DualComplex> = point
        .iter()
        .zip(direction)
        .map(|(p, d)| DualComplex::new(*p, *d))
        .collect();
    eval::eval_expr(expr, &vars, param)
}
