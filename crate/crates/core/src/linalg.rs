//! Small dense complex linear algebra on top of nalgebra's SVD.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

/// Operator 2-norm. Returns `+inf` when any entry overflowed.
pub fn largest_singular_value(m: &DMatrix<Complex64>) -> f64 {
    if m.iter().any(|c| !c.is_finite()) {
        return f64::INFINITY;
    }
    if m.is_empty() {
        return 0.0;
    }
    singular_values(m).first().copied().unwrap_or(0.0)
}

/// Singular values in descending order.
pub fn singular_values(m: &DMatrix<Complex64>) -> Vec<f64> {
    let mut s: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Right singular vectors for the smallest singular values of a tall matrix.
#[derive(Debug, Clone)]
pub struct NullSpace {
    /// Singular values, descending.
    pub singular_values: Vec<f64>,
    /// Unit vectors whose singular value fell below the threshold, smallest
    /// first. Always holds at least the least singular vector.
    pub vectors: Vec<DVector<Complex64>>,
}

impl NullSpace {
    pub fn least_singular_value(&self) -> f64 {
        self.singular_values.last().copied().unwrap_or(0.0)
    }
}

/// SVD-based numerical nullspace of `m` (rows ≥ cols), keeping the vectors
/// with singular value ≤ `threshold`.
pub fn null_space(m: &DMatrix<Complex64>, threshold: f64) -> NullSpace {
    let svd = m.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested V^H");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let singular_values: Vec<f64> = order.iter().map(|&k| svd.singular_values[k]).collect();
    let vectors = order
        .iter()
        .rev()
        .enumerate()
        .filter(|(rank, &k)| *rank == 0 || svd.singular_values[k] <= threshold)
        .map(|(_, &k)| v_t.row(k).adjoint().into_owned())
        .collect();
    NullSpace {
        singular_values,
        vectors,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn diagonal_norm() {
        let m = DMatrix::from_row_slice(2, 2, &[c(3.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, -5.0)]);
        assert!((largest_singular_value(&m) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn overflow_is_infinite() {
        let m = DMatrix::from_row_slice(1, 2, &[c(f64::INFINITY, 0.0), c(1.0, 0.0)]);
        assert_eq!(largest_singular_value(&m), f64::INFINITY);
    }

    #[test]
    fn nullspace_of_rank_deficient_matrix() {
        // columns: a, b, a + i b
        let m = DMatrix::from_fn(5, 3, |r, col| {
            let a = c(r as f64 + 1.0, 0.5);
            let b = c(-(r as f64), (r * r) as f64);
            match col {
                0 => a,
                1 => b,
                _ => a + c(0.0, 1.0) * b,
            }
        });
        let ns = null_space(&m, 1e-10);
        assert_eq!(ns.vectors.len(), 1);
        let v = &ns.vectors[0];
        let r = &m * v;
        assert!(r.iter().all(|x| x.norm() < 1e-12));
        assert!((v.norm() - 1.0).abs() < 1e-12);
    }
}
