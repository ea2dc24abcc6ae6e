//! Deterministic point sets shared by the optimisers and samplers.

use num_complex::Complex64;

const PRIMES: [u32; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

/// Radical inverse of `index` in `base` (van der Corput).
pub fn radical_inverse(mut index: u64, base: u32) -> f64 {
    let b = base as u64;
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while index > 0 {
        r += f * (index % b) as f64;
        index /= b;
        f *= inv;
    }
    r
}

/// `count` Halton points in `[0, 1)^dim`, skipping the origin.
pub fn halton(count: usize, dim: usize) -> Vec<Vec<f64>> {
    assert!(dim <= PRIMES.len(), "halton dimension {dim} unsupported");
    (1..=count as u64)
        .map(|i| (0..dim).map(|d| radical_inverse(i, PRIMES[d])).collect())
        .collect()
}

/// Maps a point of the unit cube to the Euclidean unit sphere of C^n via
/// Box-Muller pairs, so low-discrepancy inputs give well-spread directions.
pub fn cube_to_sphere(u: &[f64]) -> Vec<Complex64> {
    let n = u.len() / 4;
    let mut v: Vec<Complex64> = (0..n)
        .map(|a| {
            let (r1, t1) = box_muller(u[4 * a], u[4 * a + 1]);
            let (r2, t2) = box_muller(u[4 * a + 2], u[4 * a + 3]);
            Complex64::new(r1 * t1.cos(), r2 * t2.cos())
        })
        .collect();
    let norm = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|c| *c /= norm);
    } else if let Some(first) = v.first_mut() {
        *first = Complex64::new(1.0, 0.0);
    }
    v
}

fn box_muller(u1: f64, u2: f64) -> (f64, f64) {
    let u1 = u1.clamp(1e-12, 1.0 - 1e-12);
    ((-2.0 * u1.ln()).sqrt(), std::f64::consts::TAU * u2)
}

/// `count` points of the closed unit ball of C^n (Halton radius and
/// direction), preceded by the center itself.
pub fn ball_points(count: usize, dim: usize) -> Vec<Vec<Complex64>> {
    let mut out = vec![vec![Complex64::new(0.0, 0.0); dim]];
    for u in halton(count.saturating_sub(1), 4 * dim + 1) {
        let dir = cube_to_sphere(&u[..4 * dim]);
        let r = u[4 * dim].powf(1.0 / (2 * dim) as f64);
        out.push(dir.into_iter().map(|c| c * r).collect());
    }
    out
}

/// `count` equally spaced points on the unit circle.
pub fn circle(count: usize) -> Vec<Complex64> {
    (0..count)
        .map(|k| Complex64::from_polar(1.0, std::f64::consts::TAU * k as f64 / count as f64))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn van_der_corput_base_two() {
        let seq: Vec<f64> = (1..5).map(|i| radical_inverse(i, 2)).collect();
        assert_eq!(seq, vec![0.5, 0.25, 0.75, 0.125]);
    }

    #[test]
    fn sphere_points_have_unit_norm() {
        for u in halton(50, 8) {
            let v = cube_to_sphere(&u);
            let n: f64 = v.iter().map(|c| c.norm_sqr()).sum();
            assert!((n - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn ball_points_inside_unit_ball() {
        let pts = ball_points(40, 2);
        assert_eq!(pts.len(), 40);
        assert!(pts
            .iter()
            .all(|p| p.iter().map(|c| c.norm_sqr()).sum::<f64>() <= 1.0 + 1e-12));
    }
}
