use std::ops::{Add, Div, Mul, Neg, Sub};

use num_complex::Complex64;

/// Complex dual number `value + eps * derivative` with `eps^2 = 0`.
///
/// Carrying a holomorphic function through these gives its complex
/// derivative exactly, with no step-size error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualComplex {
    pub value: Complex64,
    pub derivative: Complex64,
}

impl DualComplex {
    pub const fn new(value: Complex64, derivative: Complex64) -> Self {
        Self { value, derivative }
    }

    pub fn constant(value: Complex64) -> Self {
        Self::new(value, Complex64::new(0.0, 0.0))
    }

    pub fn variable(value: Complex64) -> Self {
        Self::new(value, Complex64::new(1.0, 0.0))
    }

    pub fn exp(self) -> Self {
        let e = self.value.exp();
        Self::new(e, e * self.derivative)
    }

    pub fn sin(self) -> Self {
        Self::new(self.value.sin(), self.value.cos() * self.derivative)
    }

    pub fn cos(self) -> Self {
        Self::new(self.value.cos(), -self.value.sin() * self.derivative)
    }

    /// Principal square root. The derivative is infinite at 0.
    pub fn sqrt(self) -> Self {
        let r = self.value.sqrt();
        Self::new(r, self.derivative / (r * 2.0))
    }

    /// Principal logarithm.
    pub fn ln(self) -> Self {
        Self::new(self.value.ln(), self.derivative / self.value)
    }

    /// Integer power by repeated squaring; each step is an exact dual
    /// product so no branch of `log` is involved.
    pub fn powi(self, exponent: i64) -> Self {
        let mut base = self;
        let mut k = exponent.unsigned_abs();
        let mut acc = Self::constant(Complex64::new(1.0, 0.0));
        while k > 0 {
            if k & 1 == 1 {
                acc = acc * base;
            }
            k >>= 1;
            if k > 0 {
                base = base * base;
            }
        }
        if exponent < 0 {
            Self::constant(Complex64::new(1.0, 0.0)) / acc
        } else {
            acc
        }
    }
}

impl Add for DualComplex {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self::new(self.value + rhs.value, self.derivative + rhs.derivative)
    }
}

impl Sub for DualComplex {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self::new(self.value - rhs.value, self.derivative - rhs.derivative)
    }
}

impl Mul for DualComplex {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        Self::new(
            self.value * rhs.value,
            self.value * rhs.derivative + self.derivative * rhs.value,
        )
    }
}

impl Div for DualComplex {
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        let q = self.value / rhs.value;
        Self::new(q, (self.derivative - q * rhs.derivative) / rhs.value)
    }
}

impl Neg for DualComplex {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.value, -self.derivative)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn product_rule_is_exact() {
        let a = DualComplex::new(c(1.5, -0.5), c(0.25, 2.0));
        let b = DualComplex::new(c(-0.75, 1.0), c(3.0, 0.5));
        let p = a * b;
        assert_eq!(p.value, a.value * b.value);
        assert_eq!(p.derivative, a.value * b.derivative + a.derivative * b.value);
    }

    #[test]
    fn integer_power_matches_closed_form() {
        let z = c(0.8, 0.6);
        for k in [0_i64, 1, 2, 7, 20, -3] {
            let d = DualComplex::variable(z).powi(k);
            let expect_v = z.powi(k as i32);
            let expect_d = if k == 0 {
                c(0.0, 0.0)
            } else {
                z.powi(k as i32 - 1) * k as f64
            };
            assert!((d.value - expect_v).norm() < 1e-12, "k={k}");
            assert!((d.derivative - expect_d).norm() < 1e-11, "k={k}");
        }
    }

    #[test]
    fn quotient_rule() {
        let z = c(0.3, 0.4);
        let d = DualComplex::constant(c(1.0, 0.0)) / DualComplex::variable(z);
        assert!((d.derivative + (z * z).inv()).norm() < 1e-14);
    }
}
