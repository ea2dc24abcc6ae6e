use std::ops::{Add, Div, Mul, Neg, Sub};

use num_complex::Complex64;

use super::ast::{Expr, Func};
use super::dual::DualComplex;
use super::EvalError;

/// Arithmetic the evaluator needs; implemented for plain complex values and
/// for dual numbers so one tree walk serves both evaluation and
/// differentiation.
pub(crate) trait Scalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn lift(c: Complex64) -> Self;
    fn value(&self) -> Complex64;
    fn carries_derivative(&self) -> bool;
    fn exp(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn sqrt(self) -> Self;
    fn ln(self) -> Self;
    fn powi(self, k: i64) -> Self;
}

impl Scalar for Complex64 {
    fn lift(c: Complex64) -> Self {
        c
    }
    fn value(&self) -> Complex64 {
        *self
    }
    fn carries_derivative(&self) -> bool {
        false
    }
    fn exp(self) -> Self {
        Complex64::exp(self)
    }
    fn sin(self) -> Self {
        Complex64::sin(self)
    }
    fn cos(self) -> Self {
        Complex64::cos(self)
    }
    fn sqrt(self) -> Self {
        Complex64::sqrt(self)
    }
    fn ln(self) -> Self {
        Complex64::ln(self)
    }
    fn powi(self, k: i64) -> Self {
        let mut base = self;
        let mut e = k.unsigned_abs();
        let mut acc = Complex64::new(1.0, 0.0);
        while e > 0 {
            if e & 1 == 1 {
                acc *= base;
            }
            e >>= 1;
            if e > 0 {
                base = base * base;
            }
        }
        if k < 0 {
            acc.inv()
        } else {
            acc
        }
    }
}

impl Scalar for DualComplex {
    fn lift(c: Complex64) -> Self {
        DualComplex::constant(c)
    }
    fn value(&self) -> Complex64 {
        self.value
    }
    fn carries_derivative(&self) -> bool {
        self.derivative != Complex64::new(0.0, 0.0)
    }
    fn exp(self) -> Self {
        DualComplex::exp(self)
    }
    fn sin(self) -> Self {
        DualComplex::sin(self)
    }
    fn cos(self) -> Self {
        DualComplex::cos(self)
    }
    fn sqrt(self) -> Self {
        DualComplex::sqrt(self)
    }
    fn ln(self) -> Self {
        DualComplex::ln(self)
    }
    fn powi(self, k: i64) -> Self {
        DualComplex::powi(self, k)
    }
}

fn on_branch_cut(z: Complex64) -> bool {
    z.im == 0.0 && z.re < 0.0
}

/// Evaluates `expr` at `vars` (index 0 holds `z1`) with family index `param`.
pub(crate) fn eval_expr<S: Scalar>(expr: &Expr, vars: &[S], param: f64) -> Result<S, EvalError> {
    Ok(match expr {
        Expr::Num(v) => S::lift(Complex64::new(*v, 0.0)),
        Expr::Const(c) => S::lift(c.value()),
        Expr::Named(_, v) => S::lift(*v),
        Expr::Var(k) => *vars.get(k - 1).ok_or(EvalError::PointDimension {
            expected: *k,
            got: vars.len(),
        })?,
        Expr::Param => S::lift(Complex64::new(param, 0.0)),
        Expr::Neg(a) => -eval_expr(a, vars, param)?,
        Expr::Add(a, b) => eval_expr(a, vars, param)? + eval_expr(b, vars, param)?,
        Expr::Sub(a, b) => eval_expr(a, vars, param)? - eval_expr(b, vars, param)?,
        Expr::Mul(a, b) => eval_expr(a, vars, param)? * eval_expr(b, vars, param)?,
        Expr::Div(a, b) => {
            let num = eval_expr(a, vars, param)?;
            let den = eval_expr(b, vars, param)?;
            if den.value() == Complex64::new(0.0, 0.0) {
                return Err(EvalError::DivisionByZero);
            }
            num / den
        }
        Expr::Pow(a, b) => {
            let base = eval_expr(a, vars, param)?;
            let exponent: Complex64 = eval_expr(b, &[], param)?;
            let k = integer_exponent(exponent)?;
            if k < 0 && base.value() == Complex64::new(0.0, 0.0) {
                return Err(EvalError::DivisionByZero);
            }
            base.powi(k)
        }
        Expr::Call(func, a) => {
            let x = eval_expr(a, vars, param)?;
            match func {
                Func::Exp => x.exp(),
                Func::Sin => x.sin(),
                Func::Cos => x.cos(),
                Func::Sqrt => {
                    let v = x.value();
                    if on_branch_cut(v) {
                        return Err(EvalError::BranchCut { func: "sqrt" });
                    }
                    if v == Complex64::new(0.0, 0.0) && x.carries_derivative() {
                        return Err(EvalError::NotDifferentiable { func: "sqrt" });
                    }
                    x.sqrt()
                }
                Func::Log => {
                    let v = x.value();
                    if v == Complex64::new(0.0, 0.0) {
                        return Err(EvalError::LogOfZero);
                    }
                    if on_branch_cut(v) {
                        return Err(EvalError::BranchCut { func: "log" });
                    }
                    x.ln()
                }
            }
        }
    })
}

fn integer_exponent(e: Complex64) -> Result<i64, EvalError> {
    let k = e.re.round();
    if e.im.abs() > 1e-12 || (e.re - k).abs() > 1e-9 || !k.is_finite() || k.abs() > 1e15 {
        return Err(EvalError::NonIntegerExponent { re: e.re, im: e.im });
    }
    Ok(k as i64)
}
