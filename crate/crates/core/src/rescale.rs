//! Zalcman rescalings `g_j(ξ) = f_j(w_j + ρ_j ξ)` at a μ₁-point and the
//! convergence test on their samples.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{eval_scalar, parse_with, EvalError, Expr, HolomorphicFamily, ParseContext, ParseError};
use crate::geometry::{Domain, GeometryError, Grid};
use crate::marty::{derivative_sup, MartyError};
use crate::mu::{growth_stats, DetectionOptions};
use crate::sampling::ball_points;
use crate::targets::TargetMetric;

pub const DEFAULT_TOL: f64 = 0.05;
pub const DEFAULT_ESCAPE_RADIUS: f64 = 1e3;
/// Number of indices at the end of the schedule examined by
/// [`test_convergence`].
pub const TAIL_LEN: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RescaleError {
    #[error(transparent)]
    Marty(#[from] MartyError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("expression '{source_text}': {error}")]
    Parse { source_text: String, error: ParseError },
    #[error("base point is not a mu1-point (slope {slope:.3}, final value {last:.3e})")]
    NotMuPoint { slope: f64, last: f64 },
    #[error("need {TAIL_LEN} fully valid indices at the end of the schedule, found {valid}")]
    InsufficientTail { valid: usize },
    #[error("the rescaled maps did not converge")]
    NotConverged,
    #[error("{0}")]
    Invalid(String),
}

/// How centers and scales are chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum Strategy {
    /// Argmax of the derivative supremum over a ball of radius `1/(2√j)`
    /// around the base point, scale `min(1, 1/D_j)/√j`.
    Lemma,
    /// Center at the base point, scale `1/D_j`.
    Derivative,
    /// Closed forms in `n`.
    Explicit { center: Vec<Expr>, scale: Expr },
}

impl Strategy {
    pub fn explicit(
        center: &[String],
        scale: &str,
        constants: &BTreeMap<String, Complex64>,
    ) -> Result<Self, RescaleError> {
        let ctx = ParseContext {
            ambient_dim: center.len().max(1),
            constants: constants.clone(),
        };
        let parse = |s: &str| -> Result<Expr, RescaleError> {
            let e = parse_with(s, &ctx).map_err(|error| RescaleError::Parse {
                source_text: s.to_string(),
                error,
            })?;
            if e.max_var() > 0 {
                return Err(RescaleError::Invalid(format!(
                    "'{s}' may depend on n and constants only"
                )));
            }
            Ok(e)
        };
        Ok(Strategy::Explicit {
            center: center.iter().map(|s| parse(s)).collect::<Result<_, _>>()?,
            scale: parse(scale)?,
        })
    }

    pub fn tag(&self) -> &'static str {
        match self {
            Strategy::Lemma => "lemma",
            Strategy::Derivative => "derivative",
            Strategy::Explicit { .. } => "explicit",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProposeOptions {
    pub detection: DetectionOptions,
    /// Skip the μ₁ check at the base point.
    pub override_check: bool,
    /// Sample count of the lemma ball.
    pub ball_samples: usize,
}

impl Default for ProposeOptions {
    fn default() -> Self {
        Self {
            detection: DetectionOptions::default(),
            override_check: false,
            ball_samples: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RescalingSequence {
    pub base_point: Vec<Complex64>,
    pub schedule: Vec<u64>,
    pub centers: Vec<Vec<Complex64>>,
    pub scales: Vec<f64>,
    pub strategy: String,
    /// Derivative supremum at each center (lemma and derivative strategies).
    pub derivative: Vec<f64>,
}

/// Best point of the ball of radius `1/(2√j)` about `p0`; ties go to the
/// lowest sample index.
fn lemma_center(
    family: &HolomorphicFamily,
    domain: &Domain,
    metric: TargetMetric,
    p0: &[Complex64],
    j: u64,
    unit_ball: &[Vec<Complex64>],
) -> Result<(Vec<Complex64>, f64), RescaleError> {
    let r = 0.5 / (j as f64).sqrt();
    let candidates: Vec<Vec<Complex64>> = unit_ball
        .iter()
        .map(|u| p0.iter().zip(u).map(|(p, x)| p + x * r).collect::<Vec<_>>())
        .filter(|q| domain.contains(q))
        .collect();
    let values: Vec<f64> = candidates
        .par_iter()
        .map(|q| derivative_sup(family, j, q, metric))
        .collect::<Result<_, _>>()?;
    let mut best = 0;
    for (k, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = k;
        }
    }
    Ok((candidates[best].clone(), values[best]))
}

pub fn propose_rescaling(
    family: &HolomorphicFamily,
    domain: &Domain,
    metric: TargetMetric,
    p0: &[Complex64],
    strategy: &Strategy,
    schedule: &[u64],
    opts: &ProposeOptions,
) -> Result<RescalingSequence, RescaleError> {
    crate::marty::check_schedule(schedule)?;
    if p0.len() != family.ambient_dim() {
        return Err(GeometryError::DimensionMismatch {
            expected: family.ambient_dim(),
            got: p0.len(),
        }
        .into());
    }
    if !domain.contains(p0) {
        return Err(GeometryError::OutsideDomain.into());
    }
    if let Strategy::Explicit { center, scale } = strategy {
        return explicit_sequence(p0, center, scale, schedule);
    }

    let unit_ball = ball_points(opts.ball_samples.max(1), p0.len());
    let lemma: Vec<(Vec<Complex64>, f64)> = schedule
        .iter()
        .map(|&j| lemma_center(family, domain, metric, p0, j, &unit_ball))
        .collect::<Result<_, _>>()?;
    if !opts.override_check {
        if schedule.len() < 4 {
            return Err(RescaleError::Invalid(
                "the mu1 check needs at least 4 indices (or an override)".into(),
            ));
        }
        let sups: Vec<f64> = lemma.iter().map(|(_, d)| *d).collect();
        let stats = growth_stats(schedule, &sups, &opts.detection);
        if !stats.flagged {
            return Err(RescaleError::NotMuPoint {
                slope: stats.slope,
                last: stats.last,
            });
        }
    }

    let mut centers = Vec::with_capacity(schedule.len());
    let mut scales = Vec::with_capacity(schedule.len());
    let mut derivative = Vec::with_capacity(schedule.len());
    let mut running = f64::INFINITY;
    for (&j, (w, d)) in schedule.iter().zip(lemma) {
        let (center, d, rho) = match strategy {
            Strategy::Lemma => {
                let rho = (1.0 / d).min(1.0) / (j as f64).sqrt();
                (w, d, rho)
            }
            _ => {
                let d = derivative_sup(family, j, p0, metric)?;
                if !(d > 0.0) {
                    return Err(RescaleError::Invalid(format!(
                        "derivative vanishes at the base point for j = {j}"
                    )));
                }
                (p0.to_vec(), d, 1.0 / d)
            }
        };
        running = running.min(rho);
        centers.push(center);
        scales.push(running);
        derivative.push(d);
    }
    Ok(RescalingSequence {
        base_point: p0.to_vec(),
        schedule: schedule.to_vec(),
        centers,
        scales,
        strategy: strategy.tag().to_string(),
        derivative,
    })
}

fn explicit_sequence(
    p0: &[Complex64],
    center: &[Expr],
    scale: &Expr,
    schedule: &[u64],
) -> Result<RescalingSequence, RescaleError> {
    if center.len() != p0.len() {
        return Err(RescaleError::Invalid(format!(
            "explicit center has {} components, expected {}",
            center.len(),
            p0.len()
        )));
    }
    let mut centers = Vec::with_capacity(schedule.len());
    let mut scales: Vec<f64> = Vec::with_capacity(schedule.len());
    for &j in schedule {
        let w = center
            .iter()
            .map(|e| eval_scalar(e, &[], j as f64))
            .collect::<Result<Vec<_>, _>>()?;
        let rho = eval_scalar(scale, &[], j as f64)?;
        if !(rho.re > 0.0 && rho.re.is_finite()) || rho.im.abs() > 1e-12 * rho.re {
            return Err(RescaleError::Invalid(format!("scale at j = {j} is {rho}, not positive")));
        }
        if scales.last().is_some_and(|&prev| rho.re > prev) {
            return Err(RescaleError::Invalid("explicit scales must be non-increasing".into()));
        }
        centers.push(w);
        scales.push(rho.re);
    }
    Ok(RescalingSequence {
        base_point: p0.to_vec(),
        schedule: schedule.to_vec(),
        centers,
        scales,
        strategy: "explicit".into(),
        derivative: Vec::new(),
    })
}

/// Samples of `g_j` on a lattice of the closed ξ-polydisc.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RescaledSamples {
    pub grid_radius: f64,
    pub points: Vec<Vec<Complex64>>,
    pub schedule: Vec<u64>,
    /// `values[index][point]`; `None` where `w_j + ρ_j ξ` left the domain.
    pub values: Vec<Vec<Option<Vec<Complex64>>>>,
}

impl RescaledSamples {
    pub fn valid(&self, index: usize) -> bool {
        self.values[index].iter().all(Option::is_some)
    }
}

/// Lattice of `resolution` values per real axis on `[-R, R]`, cut to the
/// closed polydisc of radius `R`.
pub fn xi_grid(dim: usize, radius: f64, resolution: usize) -> Grid {
    let axis: Vec<f64> = (0..resolution)
        .map(|k| {
            if resolution == 1 {
                0.0
            } else {
                -radius + 2.0 * radius * k as f64 / (resolution - 1) as f64
            }
        })
        .collect();
    Grid::lattice(vec![axis; 2 * dim], |p| {
        p.iter().all(|c| c.norm() <= radius * (1.0 + 1e-12))
    })
}

pub fn evaluate_rescaled(
    family: &HolomorphicFamily,
    seq: &RescalingSequence,
    grid_radius: f64,
    grid_resolution: usize,
) -> Result<RescaledSamples, RescaleError> {
    if !(grid_radius > 0.0 && grid_radius.is_finite()) {
        return Err(RescaleError::Invalid("grid radius must be positive".into()));
    }
    if grid_resolution < 2 {
        return Err(RescaleError::Invalid("grid resolution must be at least 2".into()));
    }
    let grid = xi_grid(family.ambient_dim(), grid_radius, grid_resolution);
    let domain = family.domain();
    let values = seq
        .schedule
        .iter()
        .zip(seq.centers.iter().zip(&seq.scales))
        .map(|(&j, (w, &rho))| {
            grid.points
                .par_iter()
                .map(|xi| {
                    let z: Vec<Complex64> = w.iter().zip(xi).map(|(a, b)| a + b * rho).collect();
                    if domain.contains(&z) {
                        family.eval(&z, j).map(Some)
                    } else {
                        Ok(None)
                    }
                })
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(RescaledSamples {
        grid_radius,
        points: grid.points,
        schedule: seq.schedule.clone(),
        values,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum ConvergenceOutcome {
    ConvergesUniformly {
        /// `g` at the last tail index.
        limit: Vec<Vec<Complex64>>,
        nonconstant: bool,
        /// Largest target distance from the value at the grid point nearest 0.
        spread: f64,
    },
    CompactlyDivergent,
    Inconclusive,
}

impl ConvergenceOutcome {
    pub fn name(&self) -> &'static str {
        match self {
            ConvergenceOutcome::ConvergesUniformly { .. } => "ConvergesUniformly",
            ConvergenceOutcome::CompactlyDivergent => "CompactlyDivergent",
            ConvergenceOutcome::Inconclusive => "Inconclusive",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceVerdict {
    pub outcome: ConvergenceOutcome,
    pub tail: Vec<u64>,
    /// Sup-grid distance of each consecutive tail pair.
    pub pair_defects: Vec<f64>,
    pub cauchy_defect: f64,
    /// Smallest `‖g_j‖` over the grid, per tail index.
    pub min_modulus: Vec<f64>,
    pub tol: f64,
    pub escape_radius: f64,
}

fn dist(metric: TargetMetric, p: &[Complex64], q: &[Complex64]) -> f64 {
    match metric.distance(p, q) {
        Ok(d) if !d.is_nan() => d,
        _ => f64::INFINITY,
    }
}

fn modulus(v: &[Complex64]) -> f64 {
    v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

pub fn test_convergence(
    samples: &RescaledSamples,
    metric: TargetMetric,
    tol: f64,
    escape_radius: f64,
) -> Result<ConvergenceVerdict, RescaleError> {
    if !(tol > 0.0 && escape_radius > 0.0) {
        return Err(RescaleError::Invalid("tol and escape radius must be positive".into()));
    }
    let len = samples.schedule.len();
    let valid_tail = (0..len).rev().take_while(|&t| samples.valid(t)).count();
    if valid_tail < TAIL_LEN || samples.points.is_empty() {
        return Err(RescaleError::InsufficientTail { valid: valid_tail });
    }
    let tail: Vec<usize> = (len - TAIL_LEN..len).collect();
    let sample = |t: usize| -> Vec<&[Complex64]> {
        samples.values[t]
            .iter()
            .map(|v| v.as_deref().expect("tail is valid"))
            .collect()
    };
    let pair_defects: Vec<f64> = tail
        .windows(2)
        .map(|w| {
            let (a, b) = (sample(w[0]), sample(w[1]));
            a.iter().zip(&b).fold(0.0f64, |m, (p, q)| m.max(dist(metric, p, q)))
        })
        .collect();
    let cauchy_defect = pair_defects.iter().copied().fold(0.0, f64::max);
    let min_modulus: Vec<f64> = tail
        .iter()
        .map(|&t| sample(t).iter().map(|v| modulus(v)).fold(f64::INFINITY, f64::min))
        .collect();

    let outcome = if cauchy_defect < tol {
        let limit: Vec<Vec<Complex64>> = sample(len - 1).iter().map(|v| v.to_vec()).collect();
        let origin = samples
            .points
            .iter()
            .enumerate()
            .min_by(|a, b| modulus(a.1).total_cmp(&modulus(b.1)))
            .map(|(k, _)| k)
            .unwrap_or(0);
        let spread = limit
            .iter()
            .fold(0.0f64, |m, v| m.max(dist(metric, v, &limit[origin])));
        ConvergenceOutcome::ConvergesUniformly {
            limit,
            nonconstant: spread > 10.0 * tol,
            spread,
        }
    } else if !metric.is_compact()
        && min_modulus.iter().all(|&m| m > escape_radius)
        && min_modulus.windows(2).all(|w| w[1] >= w[0] + tol)
    {
        ConvergenceOutcome::CompactlyDivergent
    } else {
        ConvergenceOutcome::Inconclusive
    };
    Ok(ConvergenceVerdict {
        outcome,
        tail: tail.iter().map(|&t| samples.schedule[t]).collect(),
        pair_defects,
        cauchy_defect,
        min_modulus,
        tol,
        escape_radius,
    })
}

/// Sup over the grid of the target distance between the limit samples and
/// a reference map in the variables `z1..zn` (standing for ξ).
pub fn compare_limit(
    samples: &RescaledSamples,
    verdict: &ConvergenceVerdict,
    reference: &[Expr],
    metric: TargetMetric,
) -> Result<f64, RescaleError> {
    let ConvergenceOutcome::ConvergesUniformly { limit, .. } = &verdict.outcome else {
        return Err(RescaleError::NotConverged);
    };
    let j = *samples.schedule.last().unwrap_or(&1) as f64;
    let mut sup = 0.0f64;
    for (xi, g) in samples.points.iter().zip(limit) {
        let r = reference
            .iter()
            .map(|e| eval_scalar(e, xi, j))
            .collect::<Result<Vec<_>, _>>()?;
        if r.len() != g.len() {
            return Err(RescaleError::Invalid("reference has the wrong target dimension".into()));
        }
        sup = sup.max(dist(metric, g, &r));
    }
    Ok(sup)
}

/// Sup-grid distance between `g_j` and the reference, for every index `j`
/// (the reference sees `n = j`). `None` where samples are missing.
pub fn index_deviations(
    samples: &RescaledSamples,
    reference: &[Expr],
    metric: TargetMetric,
) -> Result<Vec<Option<f64>>, RescaleError> {
    samples
        .schedule
        .iter()
        .enumerate()
        .map(|(t, &j)| {
            if !samples.valid(t) {
                return Ok(None);
            }
            let mut sup = 0.0f64;
            for (xi, g) in samples.points.iter().zip(&samples.values[t]) {
                let g = g.as_deref().expect("index is valid");
                let r = reference
                    .iter()
                    .map(|e| eval_scalar(e, xi, j as f64))
                    .collect::<Result<Vec<_>, _>>()?;
                if r.len() != g.len() {
                    return Err(RescaleError::Invalid("reference has the wrong target dimension".into()));
                }
                sup = sup.max(dist(metric, g, &r));
            }
            Ok(Some(sup))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn fam(src: &[&str], dim: usize, domain: Domain) -> HolomorphicFamily {
        HolomorphicFamily::parse(src, dim, domain, BTreeMap::new(), "").unwrap()
    }

    fn synthetic(schedule: Vec<u64>, f: impl Fn(u64, &[Complex64]) -> Complex64) -> RescaledSamples {
        let grid = xi_grid(1, 1.0, 5);
        let values = schedule
            .iter()
            .map(|&j| grid.points.iter().map(|p| Some(vec![f(j, p)])).collect())
            .collect();
        RescaledSamples {
            grid_radius: 1.0,
            points: grid.points,
            schedule,
            values,
        }
    }

    #[test]
    fn derivative_strategy_for_linear_family() {
        let f = fam(&["n*z1", "n*z2"], 2, Domain::full_space(2));
        let seq = propose_rescaling(
            &f,
            f.domain(),
            TargetMetric::Euclidean(2),
            &[c(0.0, 0.0), c(0.0, 0.0)],
            &Strategy::Derivative,
            &[1, 2, 4, 8, 16, 32, 64, 128, 256, 512, 1024, 2048, 4096],
            &ProposeOptions::default(),
        )
        .unwrap();
        for ((&j, w), rho) in seq.schedule.iter().zip(&seq.centers).zip(&seq.scales) {
            assert!(w.iter().all(|c| c.norm() == 0.0));
            assert!((rho - 1.0 / j as f64).abs() < 1e-15);
        }
    }

    #[test]
    fn normal_family_is_not_a_mu_point() {
        let f = fam(&["z/n"], 1, Domain::UnitDisc);
        let r = propose_rescaling(
            &f,
            &Domain::UnitDisc,
            TargetMetric::Euclidean(1),
            &[c(0.0, 0.0)],
            &Strategy::Lemma,
            &[1, 2, 4, 8, 16, 32],
            &ProposeOptions::default(),
        );
        assert!(matches!(r, Err(RescaleError::NotMuPoint { .. })));
    }

    #[test]
    fn explicit_scales_are_validated() {
        let consts = BTreeMap::new();
        let s = Strategy::explicit(&["0".into()], "n", &consts).unwrap();
        let f = fam(&["z"], 1, Domain::full_space(1));
        assert!(propose_rescaling(
            &f,
            f.domain(),
            TargetMetric::Euclidean(1),
            &[c(0.0, 0.0)],
            &s,
            &[1, 2],
            &ProposeOptions::default()
        )
        .is_err());
        assert!(Strategy::explicit(&["z1".into()], "1/n", &consts).is_err());
    }

    #[test]
    fn marching_constants_diverge() {
        let s = synthetic(vec![1000, 2000, 4000, 8000, 16000], |j, _| c(j as f64, 0.0));
        let v = test_convergence(&s, TargetMetric::Euclidean(1), DEFAULT_TOL, DEFAULT_ESCAPE_RADIUS).unwrap();
        assert_eq!(v.outcome, ConvergenceOutcome::CompactlyDivergent);
        let v = test_convergence(&s, TargetMetric::RiemannSphere, DEFAULT_TOL, DEFAULT_ESCAPE_RADIUS).unwrap();
        assert!(!matches!(v.outcome, ConvergenceOutcome::CompactlyDivergent));
    }

    #[test]
    fn fixed_map_converges() {
        let s = synthetic(vec![1, 2, 3, 4], |_, p| p[0].exp());
        let v = test_convergence(&s, TargetMetric::Euclidean(1), DEFAULT_TOL, DEFAULT_ESCAPE_RADIUS).unwrap();
        match &v.outcome {
            ConvergenceOutcome::ConvergesUniformly { nonconstant, .. } => assert!(nonconstant),
            other => panic!("{other:?}"),
        }
        assert_eq!(v.cauchy_defect, 0.0);
        let reference = [crate::expr::parse("exp(z)", 1).unwrap()];
        let d = compare_limit(&s, &v, &reference, TargetMetric::Euclidean(1)).unwrap();
        assert_eq!(d, 0.0);
    }

    #[test]
    fn short_tail_is_rejected() {
        let s = synthetic(vec![1, 2, 3], |_, p| p[0]);
        assert!(matches!(
            test_convergence(&s, TargetMetric::Euclidean(1), 0.05, 1e3),
            Err(RescaleError::InsufficientTail { valid: 3 })
        ));
    }
}
