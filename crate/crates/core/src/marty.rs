//! Directional derivative suprema of a family: the plain supremum
//! `sup_{|ξ|=1} E_M(f_j(p); J ξ)` and the Marty quotient against the
//! Kobayashi metric of the source domain.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{EvalError, HolomorphicFamily};
use crate::geometry::optimize::NelderMead;
use crate::geometry::{kobayashi, kobayashi_numeric, Domain, GeometryError, Grid, NumericOptions};
use crate::linalg::largest_singular_value;
use crate::sampling::{cube_to_sphere, halton};
use crate::targets::{TargetError, TargetMetric};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MartyError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Target(#[from] TargetError),
    #[error("{0}")]
    Invalid(String),
}

/// Number of deterministic ξ starts used by [`marty_quotient`].
pub const QUOTIENT_STARTS: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepMode {
    Derivative,
    Quotient,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuotientOptions {
    /// Seed for the numeric metric on ball and generic domains.
    pub seed: u64,
    /// Nelder-Mead budget for the local refinement on domains whose metric
    /// is only available numerically.
    pub refine_evals: usize,
}

impl Default for QuotientOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            refine_evals: 60,
        }
    }
}

/// Target weight of `E_M(p; ·)`: 1 on C^k, `1/(1+|p|^2)` on the sphere.
/// An overflowed value on the sphere sits at the point at infinity, where a
/// finite family has vanishing spherical derivative; it reads as 0.
fn target_weight(metric: TargetMetric, value: &[Complex64]) -> f64 {
    match metric {
        TargetMetric::Euclidean(_) => 1.0,
        TargetMetric::RiemannSphere => {
            let r = value[0].norm();
            if !r.is_finite() {
                0.0
            } else if r > 1.0 {
                1.0 / (r * r) / (1.0 + 1.0 / (r * r))
            } else {
                1.0 / (1.0 + r * r)
            }
        }
    }
}

fn check_metric(family: &HolomorphicFamily, metric: TargetMetric) -> Result<(), MartyError> {
    if metric.dim() != family.target_dim() {
        return Err(TargetError::DimensionMismatch {
            expected: metric.dim(),
            got: family.target_dim(),
        }
        .into());
    }
    Ok(())
}

fn weighted(weight: f64, norm: f64) -> f64 {
    if weight == 0.0 {
        0.0
    } else {
        weight * norm
    }
}

/// `sup_{|ξ|=1} E_M(f_j(p); J ξ)`: the largest singular value of the
/// Jacobian, times the target weight.
pub fn derivative_sup(
    family: &HolomorphicFamily,
    index: u64,
    p: &[Complex64],
    metric: TargetMetric,
) -> Result<f64, MartyError> {
    check_metric(family, metric)?;
    let (value, jac) = family.eval_with_jacobian(p, index)?;
    let w = target_weight(metric, &value);
    if w == 0.0 {
        return Ok(0.0);
    }
    Ok(weighted(w, largest_singular_value(&jac)))
}

/// The fixed start set: the coordinate vectors, the same rotated by `i`,
/// then Halton directions on the unit sphere.
pub fn start_directions(dim: usize) -> Vec<Vec<Complex64>> {
    let mut starts = Vec::with_capacity(QUOTIENT_STARTS);
    for rot in [Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0)] {
        for a in 0..dim {
            let mut v = vec![Complex64::new(0.0, 0.0); dim];
            v[a] = rot;
            starts.push(v);
        }
    }
    let rest = QUOTIENT_STARTS.saturating_sub(starts.len());
    if 4 * dim <= 16 {
        starts.extend(halton(rest, 4 * dim).iter().map(|u| cube_to_sphere(u)));
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..rest {
            let u: Vec<f64> = (0..4 * dim).map(|_| rng.random::<f64>()).collect();
            starts.push(cube_to_sphere(&u));
        }
    }
    starts.truncate(QUOTIENT_STARTS);
    starts
}

/// `sup_{ξ≠0} E_M(f_j(p); J ξ) / F_K(p, ξ)`.
pub fn marty_quotient(
    family: &HolomorphicFamily,
    index: u64,
    p: &[Complex64],
    domain: &Domain,
    metric: TargetMetric,
) -> Result<f64, MartyError> {
    marty_quotient_from(
        family,
        index,
        p,
        domain,
        metric,
        &start_directions(domain.dim()),
        &QuotientOptions::default(),
    )
}

/// [`marty_quotient`] with an explicit start set. Only the directions of the
/// starts matter.
pub fn marty_quotient_from(
    family: &HolomorphicFamily,
    index: u64,
    p: &[Complex64],
    domain: &Domain,
    metric: TargetMetric,
    starts: &[Vec<Complex64>],
    opts: &QuotientOptions,
) -> Result<f64, MartyError> {
    check_metric(family, metric)?;
    if !domain.is_hyperbolic() {
        return Err(GeometryError::NotHyperbolic.into());
    }
    if domain.dim() != family.ambient_dim() {
        return Err(GeometryError::DimensionMismatch {
            expected: family.ambient_dim(),
            got: domain.dim(),
        }
        .into());
    }
    if p.len() != domain.dim() {
        return Err(GeometryError::DimensionMismatch {
            expected: domain.dim(),
            got: p.len(),
        }
        .into());
    }
    if !domain.contains(p) {
        return Err(GeometryError::OutsideDomain.into());
    }
    if starts.is_empty() {
        return Err(MartyError::Invalid("empty start set".into()));
    }
    let (value, jac) = family.eval_with_jacobian(p, index)?;
    let w = target_weight(metric, &value);
    if w == 0.0 {
        return Ok(0.0);
    }
    if jac.iter().any(|c| !c.is_finite()) {
        return Ok(f64::INFINITY);
    }
    let sup = match domain {
        Domain::UnitDisc => (1.0 - p[0].norm_sqr()) * largest_singular_value(&jac),
        Domain::Polydisc { center, radii } => {
            let s: Vec<f64> = p
                .iter()
                .zip(center.iter().zip(radii))
                .map(|(z, (c, r))| r * (1.0 - ((z - c) / r).norm_sqr()))
                .collect();
            torus_ascent(&jac, &s, starts)
        }
        _ => numeric_quotient(&jac, p, domain, starts, opts)?,
    };
    Ok(weighted(w, sup))
}

/// `max ‖J ξ‖` over the torus `|ξ_a| = s_a`, by exact coordinatewise
/// phase updates from each start.
fn torus_ascent(jac: &DMatrix<Complex64>, s: &[f64], starts: &[Vec<Complex64>]) -> f64 {
    let n = s.len();
    let mut best = 0.0f64;
    for start in starts {
        let mut xi: DVector<Complex64> = DVector::from_fn(n, |a, _| {
            let c = start[a];
            if c.norm() > 0.0 {
                c / c.norm() * s[a]
            } else {
                Complex64::new(s[a], 0.0)
            }
        });
        let mut current = (jac * &xi).norm();
        for _ in 0..200 {
            for a in 0..n {
                let col = jac.column(a);
                let u = jac * &xi - col * xi[a];
                let c = col.dotc(&u);
                if c.norm() > 0.0 {
                    xi[a] = c / c.norm() * s[a];
                }
            }
            let next = (jac * &xi).norm();
            let done = next <= current * (1.0 + 1e-15);
            current = current.max(next);
            if done {
                break;
            }
        }
        best = best.max(current);
    }
    best
}

fn numeric_quotient(
    jac: &DMatrix<Complex64>,
    p: &[Complex64],
    domain: &Domain,
    starts: &[Vec<Complex64>],
    opts: &QuotientOptions,
) -> Result<f64, GeometryError> {
    let n = p.len();
    let metric = |xi: &[Complex64]| -> Result<f64, GeometryError> {
        match domain {
            Domain::GenericBounded(_) => kobayashi_numeric(
                domain,
                p,
                xi,
                &NumericOptions {
                    seed: opts.seed,
                    ..NumericOptions::default()
                },
            ),
            _ => kobayashi(domain, p, xi),
        }
    };
    let ratio = |xi: &[Complex64]| -> Result<f64, GeometryError> {
        let norm = xi.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Ok(0.0);
        }
        let unit: Vec<Complex64> = xi.iter().map(|c| c / norm).collect();
        let image = jac * DVector::from_column_slice(&unit);
        Ok(image.norm() / metric(&unit)?)
    };
    let mut candidates: Vec<Vec<Complex64>> = starts.to_vec();
    let svd = jac.clone().svd(false, true);
    if let Some(v_t) = svd.v_t {
        let top = (0..svd.singular_values.len())
            .max_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]));
        if let Some(k) = top {
            candidates.push(v_t.row(k).adjoint().iter().copied().collect());
        }
    }
    let mut best = (0.0f64, candidates[0].clone());
    for c in &candidates {
        let r = ratio(c)?;
        if r > best.0 {
            best = (r, c.clone());
        }
    }
    if opts.refine_evals > 0 {
        let x0: Vec<f64> = best.1.iter().flat_map(|c| [c.re, c.im]).collect();
        let to_xi = |x: &[f64]| -> Vec<Complex64> {
            (0..n).map(|a| Complex64::new(x[2 * a], x[2 * a + 1])).collect()
        };
        let nm = NelderMead {
            max_evals: opts.refine_evals,
            f_tol: 1e-10,
            initial_step: 0.1,
        };
        let m = nm.minimize(|x| ratio(&to_xi(x)).map(|r| -r).unwrap_or(f64::INFINITY), &x0);
        best.0 = best.0.max(-m.value);
    }
    Ok(best.0)
}

/// Per-point, per-index values of a sweep and the per-index suprema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub points: Vec<Vec<Complex64>>,
    pub schedule: Vec<u64>,
    pub mode: SweepMode,
    /// `values[point][index]`.
    pub values: Vec<Vec<f64>>,
    /// `M_j(K)`, the maximum over the grid for each index.
    pub sups: Vec<f64>,
}

pub(crate) fn check_schedule(schedule: &[u64]) -> Result<(), MartyError> {
    if schedule.is_empty() {
        return Err(MartyError::Invalid("index schedule is empty".into()));
    }
    if schedule[0] == 0 {
        return Err(MartyError::Invalid("family indices start at 1".into()));
    }
    if schedule.windows(2).any(|w| w[1] <= w[0]) {
        return Err(MartyError::Invalid("index schedule must be strictly increasing".into()));
    }
    Ok(())
}

pub fn marty_sweep(
    family: &HolomorphicFamily,
    domain: &Domain,
    metric: TargetMetric,
    grid: &Grid,
    schedule: &[u64],
    mode: SweepMode,
    opts: &QuotientOptions,
) -> Result<SweepResult, MartyError> {
    check_metric(family, metric)?;
    check_schedule(schedule)?;
    if grid.is_empty() {
        return Err(MartyError::Invalid("grid is empty".into()));
    }
    if let Some(p) = grid.points.iter().find(|p| !domain.contains(p)) {
        return Err(MartyError::Invalid(format!("grid point {p:?} is not interior")));
    }
    if mode == SweepMode::Quotient && !domain.is_hyperbolic() {
        return Err(GeometryError::NotHyperbolic.into());
    }
    let starts = start_directions(domain.dim());
    let values: Vec<Vec<f64>> = grid
        .points
        .par_iter()
        .map(|p| {
            schedule
                .iter()
                .map(|&j| match mode {
                    SweepMode::Derivative => derivative_sup(family, j, p, metric),
                    SweepMode::Quotient => {
                        marty_quotient_from(family, j, p, domain, metric, &starts, opts)
                    }
                })
                .collect::<Result<Vec<f64>, _>>()
        })
        .collect::<Result<_, _>>()?;
    let sups = (0..schedule.len())
        .map(|t| values.iter().fold(0.0f64, |m, row| m.max(row[t])))
        .collect();
    Ok(SweepResult {
        points: grid.points.clone(),
        schedule: schedule.to_vec(),
        mode,
        values,
        sups,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn fam(src: &[&str], dim: usize, domain: Domain) -> HolomorphicFamily {
        HolomorphicFamily::parse(src, dim, domain, BTreeMap::new(), "").unwrap()
    }

    #[test]
    fn derivative_sup_examples() {
        let nz = fam(&["n*z1", "n*z2"], 2, Domain::full_space(2));
        let v = derivative_sup(&nz, 100, &[c(0.3, -0.1), c(0.0, 2.0)], TargetMetric::Euclidean(2)).unwrap();
        assert!((v - 100.0).abs() < 1e-10);

        let pow = fam(&["z1^n"], 2, Domain::full_space(2));
        let v = derivative_sup(&pow, 5, &[c(1.0, 0.0), c(0.0, 0.0)], TargetMetric::Euclidean(1)).unwrap();
        assert!((v - 5.0).abs() < 1e-12);

        let konst = fam(&["3 + 2*i"], 2, Domain::full_space(2));
        for j in [1, 7, 1000] {
            for m in [TargetMetric::Euclidean(1), TargetMetric::RiemannSphere] {
                assert_eq!(derivative_sup(&konst, j, &[c(0.1, 0.2), c(1.0, 0.0)], m).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn spherical_derivative_saturates_at_infinity() {
        let f = fam(&["exp(n*z)"], 1, Domain::full_space(1));
        let v = derivative_sup(&f, 100_000, &[c(1.0, 0.0)], TargetMetric::RiemannSphere).unwrap();
        assert_eq!(v, 0.0);
        let v = derivative_sup(&f, 50, &[c(0.0, 0.7)], TargetMetric::RiemannSphere).unwrap();
        assert!((v - 25.0).abs() < 1e-9);
    }

    #[test]
    fn quotient_on_disc() {
        let id = fam(&["z"], 1, Domain::UnitDisc);
        let e = TargetMetric::Euclidean(1);
        let q0 = marty_quotient(&id, 1, &[c(0.0, 0.0)], &Domain::UnitDisc, e).unwrap();
        assert!((q0 - 1.0).abs() < 1e-12);
        let q = marty_quotient(&id, 1, &[c(0.5, 0.0)], &Domain::UnitDisc, e).unwrap();
        assert!((q - 0.75).abs() < 1e-12);
        let scaled = fam(&["z/n"], 1, Domain::UnitDisc);
        let q = marty_quotient(&scaled, 10, &[c(0.0, 0.0)], &Domain::UnitDisc, e).unwrap();
        assert!((q - 0.1).abs() < 1e-12);
    }

    #[test]
    fn quotient_rejects_full_space_and_outside_points() {
        let f = fam(&["z1"], 2, Domain::full_space(2));
        let e = TargetMetric::Euclidean(1);
        assert!(matches!(
            marty_quotient(&f, 1, &[c(0.0, 0.0), c(0.0, 0.0)], &Domain::full_space(2), e),
            Err(MartyError::Geometry(GeometryError::NotHyperbolic))
        ));
        let bidisc = Domain::unit_polydisc(2, 1.0);
        let f = f.with_domain(bidisc.clone()).unwrap();
        assert!(matches!(
            marty_quotient(&f, 1, &[c(1.5, 0.0), c(0.0, 0.0)], &bidisc, e),
            Err(MartyError::Geometry(GeometryError::OutsideDomain))
        ));
    }

    #[test]
    fn polydisc_quotient_matches_weighted_norm() {
        // k = 1: the torus maximum of |a ξ1 + b ξ2| is |a| s1 + |b| s2
        let bidisc = Domain::unit_polydisc(2, 1.0);
        let f = fam(&["(2 - i)*z1 + 3*i*z2"], 2, bidisc.clone());
        let p = [c(0.3, 0.4), c(-0.2, 0.0)];
        let q = marty_quotient(&f, 1, &p, &bidisc, TargetMetric::Euclidean(1)).unwrap();
        let expected = 5f64.sqrt() * (1.0 - 0.25) + 3.0 * (1.0 - 0.04);
        assert!((q - expected).abs() < 1e-12, "{q} vs {expected}");
    }

    #[test]
    fn ball_quotient_at_center_is_operator_norm() {
        let ball = Domain::ball(vec![c(0.0, 0.0); 2], 1.0).unwrap();
        let f = fam(&["z1 + 2*z2"], 2, ball.clone());
        let q = marty_quotient(&f, 1, &[c(0.0, 0.0), c(0.0, 0.0)], &ball, TargetMetric::Euclidean(1))
            .unwrap();
        assert!((q - 5f64.sqrt()).abs() < 1e-3 * 5f64.sqrt(), "{q}");
    }

    #[test]
    fn sweep_of_linear_family() {
        let bidisc = Domain::unit_polydisc(2, 1.0);
        let f = fam(&["n*z1", "n*z2"], 2, bidisc.clone());
        let grid = Grid::lattice(
            vec![vec![-0.4, 0.0, 0.4], vec![0.0], vec![-0.4, 0.0, 0.4], vec![0.0]],
            |p| bidisc.contains(p),
        );
        assert_eq!(grid.len(), 9);
        let r = marty_sweep(
            &f,
            &bidisc,
            TargetMetric::Euclidean(2),
            &grid,
            &[1, 10, 100],
            SweepMode::Derivative,
            &QuotientOptions::default(),
        )
        .unwrap();
        for (s, e) in r.sups.iter().zip([1.0, 10.0, 100.0]) {
            assert!((s - e).abs() < 1e-10);
        }
    }

    #[test]
    fn sweep_rejects_bad_schedules() {
        let f = fam(&["z"], 1, Domain::UnitDisc);
        let grid = Domain::UnitDisc.sample_grid(3, 0.5).unwrap();
        for bad in [&[][..], &[0, 1][..], &[3, 2][..], &[2, 2][..]] {
            assert!(marty_sweep(
                &f,
                &Domain::UnitDisc,
                TargetMetric::Euclidean(1),
                &grid,
                bad,
                SweepMode::Derivative,
                &QuotientOptions::default()
            )
            .is_err());
        }
    }
}
