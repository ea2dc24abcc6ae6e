//! The Kobayashi-Royden infinitesimal metric of a source domain.
//!
//! The numeric route searches holomorphic discs of the form `P ∘ m`, where
//! `P` is a polynomial map in powers of `(t - t0)` and `m` is the disc
//! automorphism sending 0 to `t0`. Precomposing with automorphisms does not
//! change the infimum, and lets low degrees reach the Möbius extremals of
//! the model domains. Every returned value comes from a disc whose
//! containment was re-checked on a refined boundary sweep, so it is an upper
//! bound for the true metric.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::optimize::NelderMead;
use super::{Domain, GeometryError};
use crate::sampling::circle;

/// Boundary samples used inside the optimiser.
pub const OPTIMIZER_BOUNDARY_SAMPLES: usize = 64;
/// Boundary samples used for the final containment check, before each local
/// minimum of the exit radius is refined by golden-section search.
const CHECK_BOUNDARY_SAMPLES: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NumericOptions {
    pub degree: usize,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for NumericOptions {
    fn default() -> Self {
        Self {
            degree: 3,
            restarts: 8,
            seed: 0,
        }
    }
}

/// A competitor disc with coordinates `φ_a(s) = Σ_k c_{a,k} u_a(s)^k`, where
/// `u_a(s) = s / (1 + conj(t_a) s)` is a disc automorphism moved to fix the
/// origin. Sharing one `t` across coordinates gives polynomials in `m_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticDiscCandidate {
    /// `t_a`, one per coordinate, each inside the unit disc.
    pub center_params: Vec<Complex64>,
    /// `coefficients[a][k]` is `c_{a,k}`; `c_{a,0}` is the base point.
    pub coefficients: Vec<Vec<Complex64>>,
}

impl AnalyticDiscCandidate {
    pub fn degree(&self) -> usize {
        self.coefficients.first().map_or(0, |c| c.len().saturating_sub(1))
    }

    /// The disc itself.
    pub fn eval(&self, s: Complex64) -> Vec<Complex64> {
        self.coefficients
            .iter()
            .zip(&self.center_params)
            .map(|(cs, t)| {
                let u = s / (Complex64::new(1.0, 0.0) + t.conj() * s);
                cs.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, c| acc * u + c)
            })
            .collect()
    }

    /// `φ'(0) = (c_{a,1})_a`.
    pub fn derivative_at_origin(&self) -> Vec<Complex64> {
        self.coefficients
            .iter()
            .map(|cs| cs.get(1).copied().unwrap_or_default())
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct ExtremalDisc {
    pub candidate: AnalyticDiscCandidate,
    /// `‖ξ‖ / ‖φ'(0)‖` for the candidate.
    pub value: f64,
}

fn norm(v: &[Complex64]) -> f64 {
    v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

fn check_point(domain: &Domain, z: &[Complex64], xi: &[Complex64]) -> Result<(), GeometryError> {
    let dim = domain.dim();
    if z.len() != dim {
        return Err(GeometryError::DimensionMismatch {
            expected: dim,
            got: z.len(),
        });
    }
    if xi.len() != dim {
        return Err(GeometryError::DimensionMismatch {
            expected: dim,
            got: xi.len(),
        });
    }
    if !domain.contains(z) {
        return Err(GeometryError::OutsideDomain);
    }
    Ok(())
}

/// Closed-form metric for the model domains.
///
/// The disc and polydisc use the Poincaré density and the product rule;
/// full space is identically zero. The ball is delegated to the numeric
/// oracle and memoised.
pub fn kobayashi_closed_form(
    domain: &Domain,
    z: &[Complex64],
    xi: &[Complex64],
) -> Result<f64, GeometryError> {
    check_point(domain, z, xi)?;
    match domain {
        Domain::UnitDisc => Ok(xi[0].norm() / (1.0 - z[0].norm_sqr())),
        Domain::Polydisc { center, radii } => Ok(z
            .iter()
            .zip(xi)
            .zip(center.iter().zip(radii))
            .map(|((za, xa), (ca, r))| {
                let w = ((za - ca) / r).norm_sqr();
                xa.norm() / (r * (1.0 - w))
            })
            .fold(0.0, f64::max)),
        Domain::Ball { .. } => ball_memo(domain, z, xi),
        Domain::FullSpace { .. } => Ok(0.0),
        Domain::GenericBounded(_) => Err(GeometryError::NotSupported(
            "no closed form for generic domains".into(),
        )),
    }
}

/// Closed form where available, numeric oracle with default options
/// otherwise.
pub fn kobayashi(domain: &Domain, z: &[Complex64], xi: &[Complex64]) -> Result<f64, GeometryError> {
    match domain {
        Domain::GenericBounded(_) => kobayashi_numeric(domain, z, xi, &NumericOptions::default()),
        _ => kobayashi_closed_form(domain, z, xi),
    }
}

const BALL_MEMO_OPTIONS: NumericOptions = NumericOptions {
    degree: 2,
    restarts: 4,
    seed: 0,
};

type MemoKey = Vec<u64>;

fn ball_memo(domain: &Domain, z: &[Complex64], xi: &[Complex64]) -> Result<f64, GeometryError> {
    static MEMO: OnceLock<Mutex<HashMap<MemoKey, f64>>> = OnceLock::new();
    let scale = norm(xi);
    if scale == 0.0 {
        return Ok(0.0);
    }
    // Unit direction with the phase of its largest entry removed, snapped to
    // a 1e-10 lattice, so that ξ and λξ share a memo entry.
    let lead = xi
        .iter()
        .enumerate()
        .fold((0, 0.0), |best, (k, c)| if c.norm() > best.1 { (k, c.norm()) } else { best })
        .0;
    let phase = (xi[lead] / xi[lead].norm()).conj();
    let snap = |v: f64| (v * 1e10).round() / 1e10;
    let canonical: Vec<Complex64> = xi
        .iter()
        .map(|c| {
            let u = c * phase / scale;
            Complex64::new(snap(u.re), snap(u.im))
        })
        .collect();
    let Domain::Ball { center, radius } = domain else {
        unreachable!("ball_memo called on a non-ball domain");
    };
    let key: MemoKey = center
        .iter()
        .chain(z)
        .chain(&canonical)
        .flat_map(|c| [c.re.to_bits(), c.im.to_bits()])
        .chain(std::iter::once(radius.to_bits()))
        .collect();
    let memo = MEMO.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(v) = memo.lock().expect("memo poisoned").get(&key) {
        return Ok(scale * v);
    }
    let unit = kobayashi_numeric(domain, z, &canonical, &BALL_MEMO_OPTIONS)? / norm(&canonical);
    memo.lock().expect("memo poisoned").insert(key, unit);
    Ok(scale * unit)
}

/// Upper bound for the metric from the best disc found.
pub fn kobayashi_numeric(
    domain: &Domain,
    z: &[Complex64],
    xi: &[Complex64],
    opts: &NumericOptions,
) -> Result<f64, GeometryError> {
    Ok(extremal_disc(domain, z, xi, opts)?.value)
}

/// Searches the candidate class up to `opts.degree`, one degree at a time,
/// warm-starting each degree from the previous best so the estimate never
/// increases with degree.
pub fn extremal_disc(
    domain: &Domain,
    z: &[Complex64],
    xi: &[Complex64],
    opts: &NumericOptions,
) -> Result<ExtremalDisc, GeometryError> {
    if !domain.is_hyperbolic() {
        return Err(GeometryError::NotHyperbolic);
    }
    check_point(domain, z, xi)?;
    if opts.degree == 0 {
        return Err(GeometryError::InvalidOptions("degree must be at least 1".into()));
    }
    let xi_norm = norm(xi);
    let dim = domain.dim();
    if xi_norm == 0.0 {
        let mut coefficients: Vec<Vec<Complex64>> = z.iter().map(|c| vec![*c]).collect();
        coefficients.iter_mut().for_each(|c| c.push(Complex64::new(0.0, 0.0)));
        return Ok(ExtremalDisc {
            candidate: AnalyticDiscCandidate {
                center_params: vec![Complex64::new(0.0, 0.0); z.len()],
                coefficients,
            },
            value: 0.0,
        });
    }
    let direction: Vec<Complex64> = xi.iter().map(|c| c / xi_norm).collect();
    let problem = DiscProblem {
        domain,
        z,
        direction: &direction,
        coarse: circle(OPTIMIZER_BOUNDARY_SAMPLES),
        fine: circle(CHECK_BOUNDARY_SAMPLES),
    };

    let mut best_params: Vec<f64> = vec![0.0; 2 * dim];
    let mut best_score = problem.certified_exit(&best_params, 1);
    let nm = NelderMead::default();

    for degree in 1..=opts.degree {
        let n_params = 2 * dim * degree;
        let mut warm = best_params.clone();
        warm.resize(n_params, 0.0);
        let starts: Vec<Vec<f64>> = std::iter::once(warm.clone())
            .chain((0..opts.restarts).map(|r| {
                let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(r as u64));
                let mut x: Vec<f64> = (0..n_params).map(|_| rng.random_range(-0.5..0.5)).collect();
                x[..2 * dim].iter_mut().for_each(|v| *v *= 1.6);
                x
            }))
            .collect();
        let results: Vec<(Vec<f64>, f64)> = starts
            .par_iter()
            .map(|x0| {
                let m = nm.minimize(|x| -problem.coarse_score(x, degree), x0);
                let score = problem.certified_exit(&m.x, degree);
                (m.x, score)
            })
            .collect();
        // warm start first so that ties keep the previous degree's disc
        let mut degree_best = (warm, best_score);
        for (x, score) in results {
            if score > degree_best.1 {
                degree_best = (x, score);
            }
        }
        best_params = degree_best.0;
        best_score = degree_best.1;
    }

    let final_degree = best_params.len() / (2 * dim);
    let (ts, coeffs) = problem.unpack(&best_params, final_degree);
    let tau = problem.certified_exit(&best_params, final_degree);
    let coefficients = (0..dim)
        .map(|a| {
            std::iter::once(z[a])
                .chain(coeffs.iter().map(|c| c[a] * tau))
                .collect()
        })
        .collect();
    Ok(ExtremalDisc {
        candidate: AnalyticDiscCandidate {
            center_params: ts,
            coefficients,
        },
        value: xi_norm / best_score,
    })
}

struct DiscProblem<'a> {
    domain: &'a Domain,
    z: &'a [Complex64],
    direction: &'a [Complex64],
    coarse: Vec<Complex64>,
    fine: Vec<Complex64>,
}

impl DiscProblem<'_> {
    /// Parameter vector -> (t_a per coordinate, [c_1, ..., c_d]) with `c_1`
    /// the unit direction. Each `t_a` is kept inside the disc by a radial
    /// tanh squash.
    fn unpack(&self, x: &[f64], degree: usize) -> (Vec<Complex64>, Vec<Vec<Complex64>>) {
        let dim = self.z.len();
        let ts = (0..dim)
            .map(|a| {
                let w = Complex64::new(x[2 * a], x[2 * a + 1]);
                let r = w.norm();
                if r > 0.0 {
                    w * (r.tanh() / r)
                } else {
                    w
                }
            })
            .collect();
        let mut coeffs = vec![self.direction.to_vec()];
        for k in 0..degree - 1 {
            let base = 2 * dim * (k + 1);
            coeffs.push(
                (0..dim)
                    .map(|a| Complex64::new(x[base + 2 * a], x[base + 2 * a + 1]))
                    .collect(),
            );
        }
        (ts, coeffs)
    }

    /// `φ(s) - z` before scaling, for `s` on the unit circle.
    fn offset(s: Complex64, ts: &[Complex64], coeffs: &[Vec<Complex64>]) -> Vec<Complex64> {
        ts.iter()
            .enumerate()
            .map(|(a, t)| {
                let u = s / (Complex64::new(1.0, 0.0) + t.conj() * s);
                coeffs.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, cs| (acc + cs[a]) * u)
            })
            .collect()
    }

    fn exit_at(&self, theta: f64, ts: &[Complex64], coeffs: &[Vec<Complex64>]) -> f64 {
        let v = Self::offset(Complex64::from_polar(1.0, theta), ts, coeffs);
        exit_parameter(self.domain, self.z, &v)
    }

    /// Largest scale `τ` on the coarse boundary samples; `φ'(0) = τ ξ/|ξ|`.
    fn coarse_score(&self, x: &[f64], degree: usize) -> f64 {
        let (ts, coeffs) = self.unpack(x, degree);
        self.coarse
            .iter()
            .map(|s| exit_parameter(self.domain, self.z, &Self::offset(*s, &ts, &coeffs)))
            .fold(f64::INFINITY, f64::min)
    }

    /// Largest scale keeping the whole boundary curve inside the domain:
    /// a dense sweep followed by golden-section refinement around each
    /// local minimum of the exit radius.
    fn certified_exit(&self, x: &[f64], degree: usize) -> f64 {
        let (ts, coeffs) = self.unpack(x, degree);
        let n = self.fine.len();
        let step = std::f64::consts::TAU / n as f64;
        let vals: Vec<f64> = (0..n).map(|k| self.exit_at(k as f64 * step, &ts, &coeffs)).collect();
        let mut best = vals.iter().copied().fold(f64::INFINITY, f64::min);
        for k in 0..n {
            let prev = vals[(k + n - 1) % n];
            let next = vals[(k + 1) % n];
            if vals[k] <= prev && vals[k] <= next {
                let lo = (k as f64 - 1.0) * step;
                let hi = (k as f64 + 1.0) * step;
                best = best.min(golden_min(|th| self.exit_at(th, &ts, &coeffs), lo, hi));
            }
        }
        best
    }
}

fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let ratio = (5.0_f64.sqrt() - 1.0) / 2.0;
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    let mut best = fc.min(fd);
    for _ in 0..80 {
        if (b - a).abs() < 1e-14 {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = f(c);
            best = best.min(fc);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = f(d);
            best = best.min(fd);
        }
    }
    best
}

/// Positive root of `|p + τ v|^2 = r^2` for `|p| < r`.
fn sphere_exit(p_norm_sqr: f64, p_dot_v: f64, v_norm_sqr: f64, r: f64) -> f64 {
    if v_norm_sqr == 0.0 {
        return f64::INFINITY;
    }
    let a = v_norm_sqr;
    let b = 2.0 * p_dot_v;
    let c = p_norm_sqr - r * r;
    let disc = (b * b - 4.0 * a * c).max(0.0).sqrt();
    if b >= 0.0 {
        -2.0 * c / (b + disc)
    } else {
        (disc - b) / (2.0 * a)
    }
}

/// `sup { τ ≥ 0 : z + τ v ∈ Ω }` for the ray from `z` in direction `v`.
pub fn exit_parameter(domain: &Domain, z: &[Complex64], v: &[Complex64]) -> f64 {
    match domain {
        Domain::UnitDisc => {
            let p = z[0];
            sphere_exit(p.norm_sqr(), (p.conj() * v[0]).re, v[0].norm_sqr(), 1.0)
        }
        Domain::Polydisc { center, radii } => z
            .iter()
            .zip(v)
            .zip(center.iter().zip(radii))
            .map(|((za, va), (ca, r))| {
                let p = za - ca;
                sphere_exit(p.norm_sqr(), (p.conj() * va).re, va.norm_sqr(), *r)
            })
            .fold(f64::INFINITY, f64::min),
        Domain::Ball { center, radius } => {
            let (mut pp, mut pv, mut vv) = (0.0, 0.0, 0.0);
            for ((za, va), ca) in z.iter().zip(v).zip(center) {
                let p = za - ca;
                pp += p.norm_sqr();
                pv += (p.conj() * va).re;
                vv += va.norm_sqr();
            }
            sphere_exit(pp, pv, vv, *radius)
        }
        Domain::FullSpace { .. } => f64::INFINITY,
        Domain::GenericBounded(g) => {
            let vn = norm(v);
            if vn == 0.0 {
                return f64::INFINITY;
            }
            let extent = g
                .bounds
                .iter()
                .map(|(lo, hi)| (hi - lo).powi(2))
                .sum::<f64>()
                .sqrt();
            let along = |t: f64| -> Vec<Complex64> { z.iter().zip(v).map(|(a, b)| a + b * t).collect() };
            let (mut lo, mut hi) = (0.0, 2.0 * extent / vn);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if domain.contains(&along(mid)) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            lo
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn disc_closed_form_values() {
        let one = [c(1.0, 0.0)];
        assert_eq!(kobayashi_closed_form(&Domain::UnitDisc, &[c(0.0, 0.0)], &one).unwrap(), 1.0);
        let v = kobayashi_closed_form(&Domain::UnitDisc, &[c(0.5, 0.0)], &one).unwrap();
        assert!((v - 4.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn full_space_is_degenerate() {
        let d = Domain::full_space(2);
        let z = [c(3.0, 1.0), c(-2.0, 0.5)];
        let xi = [c(1.0, 0.0), c(0.0, 7.0)];
        assert_eq!(kobayashi_closed_form(&d, &z, &xi).unwrap(), 0.0);
        assert!(matches!(
            kobayashi_numeric(&d, &z, &xi, &NumericOptions::default()),
            Err(GeometryError::NotHyperbolic)
        ));
    }

    #[test]
    fn outside_points_rejected() {
        let r = kobayashi_closed_form(&Domain::UnitDisc, &[c(1.0, 0.0)], &[c(1.0, 0.0)]);
        assert!(matches!(r, Err(GeometryError::OutsideDomain)));
        let r = kobayashi_numeric(
            &Domain::unit_polydisc(2, 1.0),
            &[c(0.0, 0.0), c(0.0, 1.5)],
            &[c(1.0, 0.0), c(0.0, 0.0)],
            &NumericOptions::default(),
        );
        assert!(matches!(r, Err(GeometryError::OutsideDomain)));
    }

    #[test]
    fn generic_domain_has_no_closed_form() {
        let g = Domain::generic(
            1,
            vec![crate::expr::parse("z1", 1).unwrap()],
            vec![(-1.0, 1.0), (-1.0, 1.0)],
        )
        .unwrap();
        assert!(matches!(
            kobayashi_closed_form(&g, &[c(0.0, 0.0)], &[c(1.0, 0.0)]),
            Err(GeometryError::NotSupported(_))
        ));
    }

    #[test]
    fn identity_disc_is_reached_at_degree_one() {
        let opts = NumericOptions {
            degree: 1,
            restarts: 4,
            seed: 0,
        };
        let v = kobayashi_numeric(&Domain::UnitDisc, &[c(0.0, 0.0)], &[c(1.0, 0.0)], &opts).unwrap();
        assert!((v - 1.0).abs() < 1e-9, "{v}");
    }

    #[test]
    fn ball_linear_disc_at_center() {
        let ball = Domain::ball(vec![c(0.0, 0.0); 2], 1.0).unwrap();
        let opts = NumericOptions {
            degree: 1,
            restarts: 4,
            seed: 0,
        };
        let xi = [c(0.6, 0.0), c(0.0, 0.8)];
        let v = kobayashi_numeric(&ball, &[c(0.0, 0.0), c(0.0, 0.0)], &xi, &opts).unwrap();
        assert!((v - 1.0).abs() < 1e-6, "{v}");
    }

    #[test]
    fn polydisc_numeric_near_product_rule() {
        let d = Domain::unit_polydisc(2, 1.0);
        let v = kobayashi_numeric(
            &d,
            &[c(0.5, 0.0), c(0.0, 0.0)],
            &[c(1.0, 0.0), c(0.0, 0.0)],
            &NumericOptions::default(),
        )
        .unwrap();
        assert!((v / (4.0 / 3.0) - 1.0).abs() < 0.02, "{v}");
        assert!(v >= 4.0 / 3.0 - 1e-9);
    }

    #[test]
    fn disc_off_center_within_two_percent() {
        let v = kobayashi_numeric(
            &Domain::UnitDisc,
            &[c(0.5, 0.0)],
            &[c(1.0, 0.0)],
            &NumericOptions::default(),
        )
        .unwrap();
        assert!((v / (4.0 / 3.0) - 1.0).abs() < 0.02, "{v}");
    }

    #[test]
    fn candidate_passes_through_base_point() {
        let z = [c(0.2, -0.3), c(0.1, 0.4)];
        let disc = extremal_disc(
            &Domain::unit_polydisc(2, 1.0),
            &z,
            &[c(0.3, 0.1), c(-0.2, 0.5)],
            &NumericOptions::default(),
        )
        .unwrap();
        let at0 = disc.candidate.eval(c(0.0, 0.0));
        for (a, b) in at0.iter().zip(&z) {
            assert!((a - b).norm() < 1e-15);
        }
        // φ'(0) is parallel to ξ and reproduces the reported value
        let d0 = disc.candidate.derivative_at_origin();
        let xi_norm = (0.3f64.powi(2) + 0.1f64.powi(2) + 0.2f64.powi(2) + 0.5f64.powi(2)).sqrt();
        assert!((xi_norm / norm(&d0) - disc.value).abs() < 1e-12);
        // and the boundary stays inside
        for s in circle(500) {
            assert!(Domain::unit_polydisc(2, 1.0).contains(&disc.candidate.eval(s * 0.999_999)));
        }
    }
}
