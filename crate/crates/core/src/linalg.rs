//! Small dense kernels shared by the field code.

use std::ops::Add;

use nalgebra::{DMatrix, Matrix3};

/// Fixed-order pairwise summation. The split points depend only on the
/// length, so results are reproducible run to run.
pub fn pairwise_sum<T>(values: &[T]) -> T
where
    T: Copy + Default + Add<Output = T>,
{
    const BLOCK: usize = 32;
    if values.len() <= BLOCK {
        return values.iter().fold(T::default(), |acc, &v| acc + v);
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Mean via [`pairwise_sum`].
pub fn pairwise_mean(values: &[f64]) -> f64 {
    pairwise_sum(values) / values.len() as f64
}

/// Eigenvalues of the symmetric `n x n` row-major block `a`, written to `out`
/// in descending order.
pub fn symmetric_eigenvalues_into(a: &[f64], n: usize, out: &mut [f64]) {
    debug_assert_eq!(a.len(), n * n);
    debug_assert_eq!(out.len(), n);
    match n {
        1 => out[0] = a[0],
        2 => {
            let (p, q, r) = (a[0], 0.5 * (a[1] + a[2]), a[3]);
            let mean = 0.5 * (p + r);
            let rad = (0.5 * (p - r)).hypot(q);
            out[0] = mean + rad;
            out[1] = mean - rad;
        }
        3 => {
            let m = Matrix3::from_fn(|i, j| 0.5 * (a[i * 3 + j] + a[j * 3 + i]));
            let ev = m.symmetric_eigenvalues();
            out.copy_from_slice(ev.as_slice());
            out.sort_by(|x, y| y.total_cmp(x));
        }
        _ => {
            let m = DMatrix::from_fn(n, n, |i, j| 0.5 * (a[i * n + j] + a[j * n + i]));
            let ev = m.symmetric_eigenvalues();
            out.copy_from_slice(ev.as_slice());
            out.sort_by(|x, y| y.total_cmp(x));
        }
    }
}
