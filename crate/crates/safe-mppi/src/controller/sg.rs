//! Savitzky-Golay smoothing: least-squares polynomial-fit convolution
//! kernels with mirror padding at the sequence ends.

use std::sync::Once;

/// Central smoothing coefficients for an odd `window` and polynomial
/// `order < window`: the value at the window center of the least-squares
/// polynomial fit, expressed as a convolution kernel.
pub fn sg_kernel(window: usize, order: usize) -> Vec<f64> {
    assert!(window % 2 == 1, "window must be odd");
    assert!(order < window, "order must be below the window size");
    let half = (window / 2) as i64;
    let n_coef = order + 1;

    // Normal equations G z = e0 with G = V^T V over integer offsets.
    let mut g = vec![vec![0.0; n_coef]; n_coef];
    for (i, row) in g.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            *cell = (-half..=half)
                .map(|t| (t as f64).powi(i as i32) * (t as f64).powi(j as i32))
                .sum();
        }
    }
    let mut rhs = vec![0.0; n_coef];
    rhs[0] = 1.0;
    let z = solve_dense(&mut g, &mut rhs);

    (-half..=half)
        .map(|t| {
            (0..n_coef)
                .map(|j| z[j] * (t as f64).powi(j as i32))
                .sum()
        })
        .collect()
}

/// Gaussian elimination with partial pivoting; consumes its inputs.
fn solve_dense(a: &mut [Vec<f64>], b: &mut [f64]) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        assert!(a[col][col] != 0.0, "singular normal equations");
        for row_idx in (col + 1)..n {
            let (head, tail) = a.split_at_mut(row_idx);
            let pivot_row = &head[col];
            let row = &mut tail[0];
            let f = row[col] / pivot_row[col];
            for (target, source) in row[col..].iter_mut().zip(pivot_row[col..].iter()) {
                *target -= f * source;
            }
            b[row_idx] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for col in (0..n).rev() {
        let mut s = b[col];
        for k in (col + 1)..n {
            s -= a[col][k] * x[k];
        }
        x[col] = s / a[col][col];
    }
    x
}

/// Value at a possibly out-of-range index under odd (point) reflection about
/// the end samples. This extension preserves constant and linear sequences
/// exactly through the filter.
fn mirrored(data: &[f64], idx: i64) -> f64 {
    let n = data.len() as i64;
    if idx < 0 {
        2.0 * data[0] - data[(-idx) as usize]
    } else if idx >= n {
        2.0 * data[(n - 1) as usize] - data[(2 * (n - 1) - idx) as usize]
    } else {
        data[idx as usize]
    }
}

/// Convolve one channel with the SG kernel using mirror padding. Falls back
/// to the identity when the window does not fit the sequence.
pub fn smooth_channel(data: &[f64], window: usize, order: usize) -> Vec<f64> {
    if window > data.len() {
        warn_window_fallback(window, data.len());
        return data.to_vec();
    }
    let kernel = sg_kernel(window, order);
    let half = (window / 2) as i64;
    (0..data.len() as i64)
        .map(|k| {
            kernel
                .iter()
                .enumerate()
                .map(|(i, c)| c * mirrored(data, k + i as i64 - half))
                .sum()
        })
        .collect()
}

fn warn_window_fallback(window: usize, len: usize) {
    static ONCE: Once = Once::new();
    ONCE.call_once(|| {
        eprintln!(
            "savitzky-golay window {window} exceeds sequence length {len}; smoothing disabled"
        );
    });
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent least-squares oracle: the kernel weight of input i is the
    /// fit-polynomial value at the window center when the input is the i-th
    /// unit vector. The fit here goes through an explicit residual
    /// minimization over a sampled polynomial basis, not the normal-equation
    /// route used by `sg_kernel`.
    fn kernel_by_unit_response(window: usize, order: usize) -> Vec<f64> {
        let half = (window / 2) as i64;
        (0..window)
            .map(|i| {
                let mut y = vec![0.0; window];
                y[i] = 1.0;
                fit_value_at_zero(&y, half, order)
            })
            .collect()
    }

    /// Least-squares polynomial fit evaluated at offset 0, via Gram-Schmidt
    /// orthogonalization of the monomial basis.
    fn fit_value_at_zero(y: &[f64], half: i64, order: usize) -> f64 {
        let ts: Vec<f64> = (-half..=half).map(|t| t as f64).collect();
        // Orthogonalize monomials over the window grid.
        let mut basis: Vec<Vec<f64>> = Vec::new();
        for p in 0..=order {
            let mut v: Vec<f64> = ts.iter().map(|t| t.powi(p as i32)).collect();
            for b in &basis {
                let proj = dot(&v, b) / dot(b, b);
                for (vi, bi) in v.iter_mut().zip(b.iter()) {
                    *vi -= proj * bi;
                }
            }
            basis.push(v);
        }
        // Projection of y onto the basis, evaluated at t = 0 (window center).
        let mut value = 0.0;
        for b in &basis {
            let coef = dot(y, b) / dot(b, b);
            let center = b[half as usize];
            value += coef * center;
        }
        value
    }

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn window5_order2_kernel_matches_the_classic_coefficients() {
        let kernel = sg_kernel(5, 2);
        let expect = [-3.0, 12.0, 17.0, 12.0, -3.0].map(|c| c / 35.0);
        for (got, want) in kernel.iter().zip(expect.iter()) {
            assert!((got - want).abs() < 1e-12, "got {got}, want {want}");
        }
    }

    #[test]
    fn kernels_match_the_unit_response_oracle() {
        for (window, order) in [(5, 2), (7, 3), (9, 3), (11, 4)] {
            let kernel = sg_kernel(window, order);
            let oracle = kernel_by_unit_response(window, order);
            for (got, want) in kernel.iter().zip(oracle.iter()) {
                assert!((got - want).abs() < 1e-10, "w{window} o{order}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn constant_sequence_passes_through() {
        let data = vec![3.7; 20];
        let smoothed = smooth_channel(&data, 5, 2);
        for v in smoothed {
            assert!((v - 3.7).abs() < 1e-12);
        }
    }

    #[test]
    fn linear_ramp_passes_through() {
        let data: Vec<f64> = (0..25).map(|k| -1.0 + 0.35 * k as f64).collect();
        let smoothed = smooth_channel(&data, 9, 3);
        for (got, want) in smoothed.iter().zip(data.iter()) {
            assert!((got - want).abs() < 1e-10, "{got} vs {want}");
        }
    }

    #[test]
    fn oversized_window_falls_back_to_identity() {
        let data = vec![1.0, 2.0, 4.0];
        assert_eq!(smooth_channel(&data, 5, 2), data);
    }

    #[test]
    fn kernel_weights_sum_to_one() {
        for (window, order) in [(5, 2), (7, 2), (9, 3)] {
            let s: f64 = sg_kernel(window, order).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }
}
