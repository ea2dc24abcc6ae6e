use std::fmt;

use num_complex::Complex64;

/// Named mathematical constants recognised by the parser.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Constant {
    I,
    Pi,
    E,
}

impl Constant {
    pub fn value(self) -> Complex64 {
        match self {
            Constant::I => Complex64::new(0.0, 1.0),
            Constant::Pi => Complex64::new(std::f64::consts::PI, 0.0),
            Constant::E => Complex64::new(std::f64::consts::E, 0.0),
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Constant::I => "i",
            Constant::Pi => "pi",
            Constant::E => "e",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Exp,
    Cos,
    Sin,
    Sqrt,
    Log,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Cos => "cos",
            Func::Sin => "sin",
            Func::Sqrt => "sqrt",
            Func::Log => "log",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "exp" => Func::Exp,
            "cos" => Func::Cos,
            "sin" => Func::Sin,
            "sqrt" => Func::Sqrt,
            "log" => Func::Log,
            _ => return None,
        })
    }
}

/// Expression tree over the variables `z1..zn`, the family index `n` and
/// complex constants.
///
/// Variables are 1-based: `Var(1)` is `z1`.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Const(Constant),
    /// A constant bound by name at parse time (for example a base point
    /// coordinate in a rescaling sequence).
    Named(String, Complex64),
    Var(usize),
    Param,
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

// Binding strength used by the printer; mirrors the parser's grammar levels.
const PREC_SUM: u8 = 1;
const PREC_PRODUCT: u8 = 2;
const PREC_UNARY: u8 = 3;
const PREC_POWER: u8 = 4;
const PREC_ATOM: u8 = 5;

impl Expr {
    fn precedence(&self) -> u8 {
        match self {
            Expr::Add(..) | Expr::Sub(..) => PREC_SUM,
            Expr::Mul(..) | Expr::Div(..) => PREC_PRODUCT,
            Expr::Neg(..) => PREC_UNARY,
            Expr::Pow(..) => PREC_POWER,
            _ => PREC_ATOM,
        }
    }

    /// Largest variable index referenced, or 0 when the expression is
    /// variable-free.
    pub fn max_var(&self) -> usize {
        match self {
            Expr::Var(k) => *k,
            Expr::Num(_) | Expr::Const(_) | Expr::Named(..) | Expr::Param => 0,
            Expr::Neg(a) | Expr::Call(_, a) => a.max_var(),
            Expr::Add(a, b)
            | Expr::Sub(a, b)
            | Expr::Mul(a, b)
            | Expr::Div(a, b)
            | Expr::Pow(a, b) => a.max_var().max(b.max_var()),
        }
    }

    pub fn depends_on_param(&self) -> bool {
        match self {
            Expr::Param => true,
            Expr::Num(_) | Expr::Const(_) | Expr::Named(..) | Expr::Var(_) => false,
            Expr::Neg(a) | Expr::Call(_, a) => a.depends_on_param(),
            Expr::Add(a, b)
            | Expr::Sub(a, b)
            | Expr::Mul(a, b)
            | Expr::Div(a, b)
            | Expr::Pow(a, b) => a.depends_on_param() || b.depends_on_param(),
        }
    }

    fn write_at(&self, f: &mut fmt::Formatter<'_>, min_prec: u8) -> fmt::Result {
        let wrap = self.precedence() < min_prec;
        if wrap {
            f.write_str("(")?;
        }
        match self {
            Expr::Num(v) => write!(f, "{v}")?,
            Expr::Const(c) => f.write_str(c.symbol())?,
            Expr::Named(name, _) => f.write_str(name)?,
            Expr::Var(k) => write!(f, "z{k}")?,
            Expr::Param => f.write_str("n")?,
            Expr::Neg(a) => {
                f.write_str("-")?;
                a.write_at(f, PREC_UNARY)?;
            }
            Expr::Add(a, b) => {
                a.write_at(f, PREC_SUM)?;
                f.write_str(" + ")?;
                b.write_at(f, PREC_PRODUCT)?;
            }
            Expr::Sub(a, b) => {
                a.write_at(f, PREC_SUM)?;
                f.write_str(" - ")?;
                b.write_at(f, PREC_PRODUCT)?;
            }
            Expr::Mul(a, b) => {
                a.write_at(f, PREC_PRODUCT)?;
                f.write_str("*")?;
                b.write_at(f, PREC_UNARY)?;
            }
            Expr::Div(a, b) => {
                a.write_at(f, PREC_PRODUCT)?;
                f.write_str("/")?;
                b.write_at(f, PREC_UNARY)?;
            }
            Expr::Pow(a, b) => {
                a.write_at(f, PREC_ATOM)?;
                f.write_str("^")?;
                b.write_at(f, PREC_UNARY)?;
            }
            Expr::Call(func, a) => {
                write!(f, "{}(", func.name())?;
                a.write_at(f, 0)?;
                f.write_str(")")?;
            }
        }
        if wrap {
            f.write_str(")")?;
        }
        Ok(())
    }
}

/// Prints with the minimum number of parentheses needed for the parser to
/// rebuild the same tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write_at(f, 0)
    }
}
