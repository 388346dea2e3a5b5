//! Sort-free top-α selection.
//!
//! Finding the top-α fraction of a column exactly needs a sort. Instead we
//! bracket the hurdle between the column mean and the column maximum and run
//! a fixed number of bisections, each of which only needs an exceedance count.

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};

/// Result of one hurdle search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hurdle {
    pub value: f64,
    /// The column was constant, so nothing can exceed the hurdle.
    pub degenerate: bool,
}

/// Fraction of entries strictly greater than `h`.
pub fn exceedance(column: ArrayView1<'_, f64>, h: f64) -> f64 {
    let n = column.len();
    if n == 0 {
        return 0.0;
    }
    column.iter().filter(|&&v| v > h).count() as f64 / n as f64
}

/// Bisects `[mean, max]` exactly `iters` times for the hurdle whose
/// exceedance fraction is `alpha`.
///
/// Each step evaluates the exceedance at the midpoint `h`; if it is above
/// `alpha` the lower bound moves up to `h`, otherwise the upper bound moves
/// down. The returned hurdle is the last midpoint evaluated. With zero
/// iterations the maximum is returned.
pub fn top_alpha_hurdle(column: ArrayView1<'_, f64>, alpha: f64, iters: usize) -> Hurdle {
    let n = column.len();
    assert!(n > 0, "hurdle search over an empty column");
    let mut max = f64::NEG_INFINITY;
    let mut min = f64::INFINITY;
    let mut sum = 0.0;
    for &v in column {
        max = max.max(v);
        min = min.min(v);
        sum += v;
    }
    if max == min {
        return Hurdle {
            value: max,
            degenerate: true,
        };
    }
    let mut lo = sum / n as f64;
    let mut hi = max;
    let mut h = hi;
    for _ in 0..iters {
        h = 0.5 * (lo + hi);
        if exceedance(column, h) > alpha {
            lo = h;
        } else {
            hi = h;
        }
    }
    Hurdle {
        value: h,
        degenerate: false,
    }
}

/// Output of per-dimension winner-take-all sparsification.
#[derive(Debug, Clone)]
pub struct Sparsified {
    pub values: Array2<f64>,
    /// 1.0 where the input survived, 0.0 elsewhere.
    pub mask: Array2<f64>,
    pub hurdles: Vec<f64>,
}

impl Sparsified {
    pub fn survivor_fraction(&self) -> f64 {
        self.mask.mean().unwrap_or(0.0)
    }
}

/// Zeroes, column by column, every entry that does not clear its column's
/// hurdle. Survivors pass through unchanged. Entries must also be positive
/// to survive, so noisy inputs never yield negative codes.
pub fn wta_sparsify(batch: ArrayView2<'_, f64>, alpha: f64, iters: usize) -> Sparsified {
    let (rows, cols) = batch.dim();
    let mut values = Array2::zeros((rows, cols));
    let mut mask = Array2::zeros((rows, cols));
    let mut hurdles = Vec::with_capacity(cols);
    if rows == 0 {
        return Sparsified {
            values,
            mask,
            hurdles: vec![f64::INFINITY; cols],
        };
    }
    for (j, col) in batch.axis_iter(Axis(1)).enumerate() {
        let h = top_alpha_hurdle(col, alpha, iters).value;
        let cut = h.max(0.0);
        for (i, &v) in col.iter().enumerate() {
            if v > cut {
                values[[i, j]] = v;
                mask[[i, j]] = 1.0;
            }
        }
        hurdles.push(h);
    }
    Sparsified {
        values,
        mask,
        hurdles,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array1};
    use proptest::prelude::*;

    #[test]
    fn single_dominant_value() {
        let mut col = Array1::zeros(16);
        col[7] = 1.0;
        let h = top_alpha_hurdle(col.view(), 1.0 / 16.0, 5);
        assert!(h.value > 1.0 / 16.0 && h.value < 1.0);
        assert_eq!(exceedance(col.view(), h.value), 1.0 / 16.0);
    }

    #[test]
    fn constant_column_is_degenerate() {
        let col = Array1::from_elem(8, 0.3);
        let h = top_alpha_hurdle(col.view(), 0.1, 5);
        assert!(h.degenerate);
        assert_eq!(exceedance(col.view(), h.value), 0.0);
    }

    #[test]
    fn all_zero_column_stays_zero() {
        let batch = array![[0.0, 1.0], [0.0, 2.0], [0.0, 3.0], [0.0, 4.0]];
        let s = wta_sparsify(batch.view(), 0.25, 5);
        assert!(s.values.column(0).iter().all(|&v| v == 0.0));
        assert_eq!(s.values.column(1).to_vec(), vec![0.0, 0.0, 0.0, 4.0]);
    }

    #[test]
    fn negative_entries_never_survive() {
        let batch = array![[-3.0], [-2.0], [-1.0], [-0.5]];
        let s = wta_sparsify(batch.view(), 0.25, 5);
        assert!(s.values.iter().all(|&v| v == 0.0));
    }

    proptest! {
        #[test]
        fn pass_through(values in prop::collection::vec(0.0f64..5.0, 8..64), alpha in 0.01f64..0.49) {
            let cols = 4;
            let rows = values.len() / cols;
            let batch = Array2::from_shape_vec((rows, cols), values[..rows * cols].to_vec()).unwrap();
            let s = wta_sparsify(batch.view(), alpha, 5);
            for ((&out, &inp), &m) in s.values.iter().zip(batch.iter()).zip(s.mask.iter()) {
                prop_assert!(out == 0.0 || out == inp);
                prop_assert_eq!(m == 1.0, out != 0.0);
            }
        }
    }
}
