//! μ₁-point detection by growth tracking of the derivative supremum, and
//! classification of the flagged locus into thin analytic, non-analytic, or
//! thick sets.

use std::collections::HashSet;
use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::HolomorphicFamily;
use crate::geometry::{Domain, Grid};
use crate::linalg::{null_space, singular_values};
use crate::marty::{marty_sweep, MartyError, QuotientOptions, SweepMode};
use crate::targets::TargetMetric;

/// Vandermonde nullspace acceptance: `‖V c‖∞ < NULL_TOLERANCE ‖c‖₂`.
pub const NULL_TOLERANCE: f64 = 1e-6;
/// Fraction of a sub-box that must be flagged for the locus to have interior.
pub const COVER_FRACTION: f64 = 0.9;
/// Side length, in lattice cells along each real axis, of the covering boxes.
pub const COVER_SIDE: usize = 3;

const LOG_FLOOR: f64 = 1e-300;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MuError {
    #[error(transparent)]
    Marty(#[from] MartyError),
    #[error("too few flagged points: {points} for a monomial basis of size {basis}")]
    TooFewPoints { points: usize, basis: usize },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionOptions {
    pub slope_threshold: f64,
    pub growth_threshold: f64,
    /// Growing points whose slope lies in `[straddle_slope, slope_threshold)`
    /// make the run inconclusive.
    pub straddle_slope: f64,
}

impl Default for DetectionOptions {
    fn default() -> Self {
        Self {
            slope_threshold: 0.5,
            growth_threshold: 1e3,
            straddle_slope: 0.25,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointStats {
    /// Least-squares slope of `log M_j` against `log j` over the last half
    /// of the schedule; `+inf` once the values overflow.
    pub slope: f64,
    pub first: f64,
    pub last: f64,
    pub flagged: bool,
    pub straddling: bool,
}

/// Growth statistics of one point's values along `schedule`.
pub fn growth_stats(schedule: &[u64], values: &[f64], opts: &DetectionOptions) -> PointStats {
    let len = schedule.len();
    let start = len / 2;
    let tail = &values[start..];
    let slope = if tail.iter().any(|v| !v.is_finite()) {
        f64::INFINITY
    } else {
        let xs: Vec<f64> = schedule[start..].iter().map(|&j| (j as f64).ln()).collect();
        let ys: Vec<f64> = tail.iter().map(|v| v.max(LOG_FLOOR).ln()).collect();
        let m = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / m;
        let my = ys.iter().sum::<f64>() / m;
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        if sxx > 0.0 {
            sxy / sxx
        } else {
            0.0
        }
    };
    let first = values[0];
    let last = values[len - 1];
    let grows = last >= opts.growth_threshold * (1.0 + first);
    let flagged = grows && slope >= opts.slope_threshold;
    let straddling = grows && !flagged && slope >= opts.straddle_slope;
    PointStats {
        slope,
        first,
        last,
        flagged,
        straddling,
    }
}

/// Output of [`detect_mu1`]: the sweep values and the flags, before the
/// locus is classified.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub grid: Grid,
    pub schedule: Vec<u64>,
    /// `values[point][index]`.
    pub values: Vec<Vec<f64>>,
    pub stats: Vec<PointStats>,
    /// Indices into the grid, ascending.
    pub flagged: Vec<usize>,
    pub straddling: Vec<usize>,
}

impl Detection {
    pub fn flagged_points(&self) -> Vec<Vec<Complex64>> {
        self.flagged.iter().map(|&i| self.grid.points[i].clone()).collect()
    }
}

pub fn detect_mu1(
    family: &HolomorphicFamily,
    domain: &Domain,
    metric: TargetMetric,
    grid: &Grid,
    schedule: &[u64],
    opts: &DetectionOptions,
) -> Result<Detection, MuError> {
    if schedule.len() < 4 {
        return Err(MuError::Invalid("detection needs at least 4 indices".into()));
    }
    if !(opts.slope_threshold > 0.0 && opts.growth_threshold > 0.0 && opts.straddle_slope > 0.0) {
        return Err(MuError::Invalid("thresholds must be positive".into()));
    }
    let sweep = marty_sweep(
        family,
        domain,
        metric,
        grid,
        schedule,
        SweepMode::Derivative,
        &QuotientOptions::default(),
    )?;
    let stats: Vec<PointStats> = sweep
        .values
        .iter()
        .map(|v| growth_stats(schedule, v, opts))
        .collect();
    let flagged = (0..stats.len()).filter(|&i| stats[i].flagged).collect();
    let straddling = (0..stats.len()).filter(|&i| stats[i].straddling).collect();
    Ok(Detection {
        grid: grid.clone(),
        schedule: schedule.to_vec(),
        values: sweep.values,
        stats,
        flagged,
        straddling,
    })
}

/// A polynomial `Σ c_α z^α`, normalised so its largest coefficient is 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedPolynomial {
    pub exponents: Vec<Vec<u32>>,
    pub coefficients: Vec<Complex64>,
}

impl FittedPolynomial {
    pub fn eval(&self, z: &[Complex64]) -> Complex64 {
        self.exponents
            .iter()
            .zip(&self.coefficients)
            .map(|(a, c)| c * monomial(z, a))
            .sum()
    }

    pub fn gradient(&self, z: &[Complex64]) -> Vec<Complex64> {
        (0..z.len())
            .map(|b| {
                self.exponents
                    .iter()
                    .zip(&self.coefficients)
                    .filter(|(a, _)| a[b] > 0)
                    .map(|(a, c)| {
                        let mut d = a.clone();
                        d[b] -= 1;
                        c * a[b] as f64 * monomial(z, &d)
                    })
                    .sum()
            })
            .collect()
    }

    /// Coefficients over the full monomial basis of the given degree, in
    /// [`monomials`] order.
    pub fn dense(&self, dim: usize, degree: usize) -> Vec<Complex64> {
        monomials(dim, degree)
            .iter()
            .map(|a| {
                self.exponents
                    .iter()
                    .position(|e| e == a)
                    .map_or(Complex64::new(0.0, 0.0), |k| self.coefficients[k])
            })
            .collect()
    }
}

impl fmt::Display for FittedPolynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (a, c) in self.exponents.iter().zip(&self.coefficients) {
            if !first {
                f.write_str(" + ")?;
            }
            first = false;
            write!(f, "({:.6}{:+.6}i)", c.re, c.im)?;
            for (k, &e) in a.iter().enumerate() {
                match e {
                    0 => {}
                    1 => write!(f, "*z{}", k + 1)?,
                    _ => write!(f, "*z{}^{e}", k + 1)?,
                }
            }
        }
        if first {
            f.write_str("0")?;
        }
        Ok(())
    }
}

fn monomial(z: &[Complex64], a: &[u32]) -> Complex64 {
    z.iter()
        .zip(a)
        .fold(Complex64::new(1.0, 0.0), |acc, (zi, &e)| acc * zi.powu(e))
}

/// Exponents `α` with `|α| ≤ degree`, by total degree then lexicographically
/// descending (`1, z1, z2, z1^2, z1 z2, z2^2, ...`).
pub fn monomials(dim: usize, degree: usize) -> Vec<Vec<u32>> {
    fn fill(dim: usize, left: u32, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if prefix.len() == dim - 1 {
            prefix.push(left);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for e in (0..=left).rev() {
            prefix.push(e);
            fill(dim, left - e, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    for d in 0..=degree as u32 {
        fill(dim, d, &mut Vec::new(), &mut out);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum LocusClass {
    Empty,
    AnalyticThin {
        degree: usize,
        polynomial: FittedPolynomial,
        /// `‖V c‖∞` for the unit-norm coefficient vector.
        residual: f64,
        least_singular_value: f64,
        /// Generic rank of the gradients of the vanishing polynomials.
        codimension: usize,
    },
    NonAnalytic {
        /// Least singular value of the column-scaled Vandermonde matrix at
        /// the maximal degree.
        least_singular_value: f64,
    },
    HasInteriorClosure {
        /// Lattice index of the covering box's lowest corner.
        box_origin: Vec<usize>,
        fill_fraction: f64,
    },
}

impl LocusClass {
    pub fn name(&self) -> &'static str {
        match self {
            LocusClass::Empty => "Empty",
            LocusClass::AnalyticThin { .. } => "AnalyticThin",
            LocusClass::NonAnalytic { .. } => "NonAnalytic",
            LocusClass::HasInteriorClosure { .. } => "HasInteriorClosure",
        }
    }

    /// The point type the locus witnesses: μ₂, q, or λ.
    pub fn point_kind(&self) -> Option<&'static str> {
        match self {
            LocusClass::Empty => None,
            LocusClass::AnalyticThin { codimension, .. } if *codimension <= 1 => Some("mu2"),
            LocusClass::AnalyticThin { .. } => None,
            LocusClass::NonAnalytic { .. } => Some("lambda"),
            LocusClass::HasInteriorClosure { .. } => Some("q"),
        }
    }
}

/// Looks for a `COVER_SIDE^(2n)` lattice box in which at least
/// `COVER_FRACTION` of the grid cells are flagged.
pub fn covering_box(grid: &Grid, flagged: &[usize]) -> Option<(Vec<usize>, f64)> {
    let real_dim = grid.axes.len();
    let shape: Vec<usize> = grid.axes.iter().map(Vec::len).collect();
    if flagged.is_empty() || shape.iter().any(|&s| s < COVER_SIDE) {
        return None;
    }
    let present: HashSet<&[usize]> = grid.cells.iter().map(Vec::as_slice).collect();
    let marked: HashSet<&[usize]> = flagged.iter().map(|&i| grid.cells[i].as_slice()).collect();
    let min_cells = 3usize.pow(grid.dim as u32);
    let mut origin = vec![0usize; real_dim];
    loop {
        let (mut total, mut hits) = (0usize, 0usize);
        let mut offset = vec![0usize; real_dim];
        loop {
            let cell: Vec<usize> = origin.iter().zip(&offset).map(|(o, d)| o + d).collect();
            if present.contains(cell.as_slice()) {
                total += 1;
                if marked.contains(cell.as_slice()) {
                    hits += 1;
                }
            }
            if !odometer(&mut offset, &vec![COVER_SIDE; real_dim]) {
                break;
            }
        }
        if total >= min_cells && hits as f64 >= COVER_FRACTION * total as f64 {
            return Some((origin, hits as f64 / total as f64));
        }
        let limits: Vec<usize> = shape.iter().map(|s| s - COVER_SIDE + 1).collect();
        if !odometer(&mut origin, &limits) {
            return None;
        }
    }
}

fn odometer(index: &mut [usize], limits: &[usize]) -> bool {
    for k in (0..index.len()).rev() {
        index[k] += 1;
        if index[k] < limits[k] {
            return true;
        }
        index[k] = 0;
    }
    false
}

/// Decides whether a holomorphic polynomial of degree at most `max_degree`
/// vanishes on the point cloud. The lowest such degree wins.
pub fn classify_point_cloud(
    points: &[Vec<Complex64>],
    ambient_dim: usize,
    max_degree: usize,
) -> Result<LocusClass, MuError> {
    if max_degree == 0 {
        return Err(MuError::Invalid("max_degree must be at least 1".into()));
    }
    if points.is_empty() {
        return Ok(LocusClass::Empty);
    }
    if points.iter().any(|p| p.len() != ambient_dim) {
        return Err(MuError::Invalid("point dimension differs from ambient dimension".into()));
    }
    let basis = monomials(ambient_dim, max_degree).len();
    if points.len() < basis {
        return Err(MuError::TooFewPoints {
            points: points.len(),
            basis,
        });
    }
    let mut least = f64::INFINITY;
    for degree in 1..=max_degree {
        let exps = monomials(ambient_dim, degree);
        let v = DMatrix::from_fn(points.len(), exps.len(), |r, c| monomial(&points[r], &exps[c]));
        let scales: Vec<f64> = (0..exps.len())
            .map(|c| {
                let s = v.column(c).norm();
                if s > 0.0 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        let mut scaled = v.clone();
        for (c, s) in scales.iter().enumerate() {
            scaled.column_mut(c).unscale_mut(*s);
        }
        let ns = null_space(&scaled, NULL_TOLERANCE);
        least = ns.least_singular_value();
        let mut polys = Vec::new();
        let mut best_residual = f64::INFINITY;
        for vec in &ns.vectors {
            let raw: Vec<Complex64> = vec.iter().zip(&scales).map(|(x, s)| x / s).collect();
            let norm = raw.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
            let unit = nalgebra::DVector::from_iterator(raw.len(), raw.iter().map(|c| c / norm));
            let residual = (&v * &unit).iter().fold(0.0f64, |m, c| m.max(c.norm()));
            if residual < NULL_TOLERANCE {
                best_residual = best_residual.min(residual);
                polys.push(normalised(&exps, unit.as_slice()));
            }
        }
        if let Some(first) = polys.first().cloned() {
            let codimension = gradient_rank(&polys, points).max(1);
            return Ok(LocusClass::AnalyticThin {
                degree,
                polynomial: first,
                residual: best_residual,
                least_singular_value: least,
                codimension,
            });
        }
    }
    Ok(LocusClass::NonAnalytic {
        least_singular_value: least,
    })
}

fn normalised(exps: &[Vec<u32>], coeffs: &[Complex64]) -> FittedPolynomial {
    let lead = coeffs
        .iter()
        .copied()
        .max_by(|a, b| a.norm().total_cmp(&b.norm()))
        .unwrap_or(Complex64::new(1.0, 0.0));
    let (mut exponents, mut coefficients) = (Vec::new(), Vec::new());
    for (a, c) in exps.iter().zip(coeffs) {
        let c = c / lead;
        if c.norm() > 1e-9 {
            exponents.push(a.clone());
            coefficients.push(c);
        }
    }
    FittedPolynomial {
        exponents,
        coefficients,
    }
}

fn gradient_rank(polys: &[FittedPolynomial], points: &[Vec<Complex64>]) -> usize {
    points
        .iter()
        .map(|p| {
            let grads: Vec<Vec<Complex64>> = polys.iter().map(|q| q.gradient(p)).collect();
            let m = DMatrix::from_fn(grads.len(), p.len(), |r, c| grads[r][c]);
            let s = singular_values(&m);
            let top = s.first().copied().unwrap_or(0.0);
            if top < 1e-9 {
                0
            } else {
                s.iter().filter(|&&x| x > 1e-6 * top).count()
            }
        })
        .max()
        .unwrap_or(0)
}

/// Full classification of the flagged subset of a grid: the covering test
/// first, then the Vandermonde test.
pub fn classify_locus(grid: &Grid, flagged: &[usize], max_degree: usize) -> Result<LocusClass, MuError> {
    if flagged.is_empty() {
        return Ok(LocusClass::Empty);
    }
    if let Some((box_origin, fill_fraction)) = covering_box(grid, flagged) {
        return Ok(LocusClass::HasInteriorClosure {
            box_origin,
            fill_fraction,
        });
    }
    let points: Vec<Vec<Complex64>> = flagged.iter().map(|&i| grid.points[i].clone()).collect();
    classify_point_cloud(&points, grid.dim, max_degree)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    Normal,
    #[serde(rename = "NotNormal_QuasiNormal")]
    NotNormalQuasiNormal,
    #[serde(rename = "NotNormal_WeaklyNormal")]
    NotNormalWeaklyNormal,
    NotQuasiNormal,
    Inconclusive,
}

impl Verdict {
    pub const ALL: [Verdict; 5] = [
        Verdict::Normal,
        Verdict::NotNormalQuasiNormal,
        Verdict::NotNormalWeaklyNormal,
        Verdict::NotQuasiNormal,
        Verdict::Inconclusive,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Verdict::Normal => "Normal",
            Verdict::NotNormalQuasiNormal => "NotNormal_QuasiNormal",
            Verdict::NotNormalWeaklyNormal => "NotNormal_WeaklyNormal",
            Verdict::NotQuasiNormal => "NotQuasiNormal",
            Verdict::Inconclusive => "Inconclusive",
        }
    }

    pub fn is_normal(self) -> Option<bool> {
        match self {
            Verdict::Inconclusive => None,
            v => Some(v == Verdict::Normal),
        }
    }

    pub fn is_quasi_normal(self) -> Option<bool> {
        match self {
            Verdict::Inconclusive => None,
            v => Some(v != Verdict::NotQuasiNormal),
        }
    }

    pub fn is_weakly_normal(self) -> Option<bool> {
        match self {
            Verdict::Inconclusive => None,
            v => Some(matches!(v, Verdict::Normal | Verdict::NotNormalWeaklyNormal)),
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Verdict {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Verdict::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| format!("unknown verdict '{s}'"))
    }
}

/// Decision table from the locus to the family verdict.
pub fn verdict_for(locus: Option<&LocusClass>, straddling: bool) -> Verdict {
    if straddling {
        return Verdict::Inconclusive;
    }
    match locus {
        None => Verdict::Inconclusive,
        Some(LocusClass::Empty) => Verdict::Normal,
        Some(LocusClass::AnalyticThin { codimension, .. }) if *codimension >= 2 => {
            Verdict::NotNormalWeaklyNormal
        }
        Some(LocusClass::AnalyticThin { .. }) => Verdict::NotNormalQuasiNormal,
        Some(LocusClass::NonAnalytic { .. }) | Some(LocusClass::HasInteriorClosure { .. }) => {
            Verdict::NotQuasiNormal
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MuReport {
    pub detection: Detection,
    /// `None` when the locus could not be classified.
    pub locus: Option<LocusClass>,
    pub locus_error: Option<String>,
    /// Verdict with the straddling points counted as flagged; `None` when
    /// nothing straddles.
    pub widened_verdict: Option<Verdict>,
    pub verdict: Verdict,
}

/// The table verdict, or `Inconclusive` when counting the straddling points
/// as flagged would change it.
pub fn classify_family(report: &MuReport) -> Verdict {
    let base = verdict_for(report.locus.as_ref(), false);
    match report.widened_verdict {
        Some(w) if w != base => Verdict::Inconclusive,
        _ => base,
    }
}

fn scan_locus(
    grid: &Grid,
    flagged: &[usize],
    max_degree: usize,
) -> Result<(Option<LocusClass>, Option<String>), MuError> {
    match classify_locus(grid, flagged, max_degree) {
        Ok(l) => Ok((Some(l), None)),
        Err(e @ MuError::TooFewPoints { .. }) => Ok((None, Some(e.to_string()))),
        Err(e) => Err(e),
    }
}

/// Detection, locus classification, and verdict in one pass.
pub fn mu_scan(
    family: &HolomorphicFamily,
    domain: &Domain,
    metric: TargetMetric,
    grid: &Grid,
    schedule: &[u64],
    opts: &DetectionOptions,
    max_degree: usize,
) -> Result<MuReport, MuError> {
    let detection = detect_mu1(family, domain, metric, grid, schedule, opts)?;
    let (locus, locus_error) = scan_locus(grid, &detection.flagged, max_degree)?;
    let widened_verdict = if detection.straddling.is_empty() {
        None
    } else {
        let mut wide: Vec<usize> = detection.flagged.iter().chain(&detection.straddling).copied().collect();
        wide.sort_unstable();
        let (wide_locus, _) = scan_locus(grid, &wide, max_degree)?;
        Some(verdict_for(wide_locus.as_ref(), false))
    };
    let mut report = MuReport {
        detection,
        locus,
        locus_error,
        widened_verdict,
        verdict: Verdict::Inconclusive,
    };
    report.verdict = classify_family(&report);
    Ok(report)
}

/// `j = 2^t` for `t = 0..=max_exponent`.
pub fn geometric_schedule(max_exponent: u32) -> Vec<u64> {
    (0..=max_exponent).map(|t| 1u64 << t).collect()
}
