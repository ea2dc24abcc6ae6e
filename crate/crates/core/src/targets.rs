//! Hermitian length on the target manifold: Euclidean C^k or the Riemann
//! sphere with the chordal normalisation `|v| / (1 + |p|^2)`.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TargetError {
    #[error("dimension mismatch: metric expects {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("unknown target metric '{0}' (expected 'euclidean:k' or 'sphere')")]
    UnknownMetric(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum TargetMetric {
    Euclidean(usize),
    RiemannSphere,
}

impl TargetMetric {
    pub fn dim(self) -> usize {
        match self {
            TargetMetric::Euclidean(k) => k,
            TargetMetric::RiemannSphere => 1,
        }
    }

    pub fn is_compact(self) -> bool {
        matches!(self, TargetMetric::RiemannSphere)
    }

    fn check(self, len: usize) -> Result<(), TargetError> {
        if len != self.dim() {
            return Err(TargetError::DimensionMismatch {
                expected: self.dim(),
                got: len,
            });
        }
        Ok(())
    }

    /// Length of the tangent vector `v` at `p`.
    ///
    /// On the sphere a non-finite `p` is the point at infinity, and `v` is
    /// then read in the chart `w = 1/p`.
    pub fn length(self, p: &[Complex64], v: &[Complex64]) -> Result<f64, TargetError> {
        self.check(p.len())?;
        self.check(v.len())?;
        Ok(match self {
            TargetMetric::Euclidean(_) => euclidean_norm(v),
            TargetMetric::RiemannSphere => {
                if !p[0].is_finite() {
                    v[0].norm()
                } else {
                    v[0].norm() / (1.0 + p[0].norm_sqr())
                }
            }
        })
    }

    /// Euclidean distance, or chordal distance on the sphere.
    pub fn distance(self, p: &[Complex64], q: &[Complex64]) -> Result<f64, TargetError> {
        self.check(p.len())?;
        self.check(q.len())?;
        Ok(match self {
            TargetMetric::Euclidean(_) => p
                .iter()
                .zip(q)
                .map(|(a, b)| (a - b).norm_sqr())
                .sum::<f64>()
                .sqrt(),
            TargetMetric::RiemannSphere => chordal(p[0], q[0]),
        })
    }

    /// Distance from `p` to the closed compact ball of radius `radius` around
    /// the origin (zero when inside). On the sphere the ball is chordal and
    /// centred at 0.
    pub fn distance_to_ball(self, p: &[Complex64], radius: f64) -> Result<f64, TargetError> {
        self.check(p.len())?;
        Ok(match self {
            TargetMetric::Euclidean(_) => (euclidean_norm(p) - radius).max(0.0),
            TargetMetric::RiemannSphere => {
                (chordal(p[0], Complex64::new(0.0, 0.0)) - radius).max(0.0)
            }
        })
    }
}

fn euclidean_norm(v: &[Complex64]) -> f64 {
    v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

fn chordal(p: Complex64, q: Complex64) -> f64 {
    match (p.is_finite(), q.is_finite()) {
        (false, false) => 0.0,
        (true, false) => 1.0 / (1.0 + p.norm_sqr()).sqrt(),
        (false, true) => 1.0 / (1.0 + q.norm_sqr()).sqrt(),
        (true, true) => {
            // for large arguments go through the inverted chart to keep
            // (1 + |p|^2) from overflowing
            if p.norm() > 1.0 && q.norm() > 1.0 {
                let (a, b) = (p.inv(), q.inv());
                (a - b).norm() / ((1.0 + a.norm_sqr()) * (1.0 + b.norm_sqr())).sqrt()
            } else {
                (p - q).norm() / ((1.0 + p.norm_sqr()) * (1.0 + q.norm_sqr())).sqrt()
            }
        }
    }
}

impl fmt::Display for TargetMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TargetMetric::Euclidean(k) => write!(f, "euclidean:{k}"),
            TargetMetric::RiemannSphere => f.write_str("sphere"),
        }
    }
}

impl FromStr for TargetMetric {
    type Err = TargetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s == "sphere" {
            return Ok(TargetMetric::RiemannSphere);
        }
        if let Some(k) = s.strip_prefix("euclidean:") {
            if let Ok(k) = k.parse::<usize>() {
                if k >= 1 {
                    return Ok(TargetMetric::Euclidean(k));
                }
            }
        }
        Err(TargetError::UnknownMetric(s.to_string()))
    }
}

impl TryFrom<String> for TargetMetric {
    type Error = TargetError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<TargetMetric> for String {
    fn from(m: TargetMetric) -> Self {
        m.to_string()
    }
}
