//! Quantile binning of feature columns for histogram split search.

use ndarray::ArrayView2;

/// At most this many bins per feature (255 thresholds).
pub const MAX_BINS: usize = 256;

/// Column-major bin indices. Row `i` of feature `f` falls in bin `b` when
/// `thresholds[f][b-1] < x <= thresholds[f][b]`; the last bin is open above.
#[derive(Debug, Clone)]
pub struct BinnedMatrix {
    pub n_rows: usize,
    pub thresholds: Vec<Vec<f64>>,
    bins: Vec<u8>,
}

impl BinnedMatrix {
    pub fn new(x: ArrayView2<f64>) -> Self {
        let n_rows = x.nrows();
        let mut thresholds = Vec::with_capacity(x.ncols());
        let mut bins = Vec::with_capacity(n_rows * x.ncols());
        for col in x.columns() {
            let mut sorted: Vec<f64> = col.to_vec();
            sorted.sort_by(f64::total_cmp);
            let t = column_thresholds(&sorted);
            bins.extend(col.iter().map(|&v| t.partition_point(|&th| th < v) as u8));
            thresholds.push(t);
        }
        BinnedMatrix {
            n_rows,
            thresholds,
            bins,
        }
    }

    pub fn n_features(&self) -> usize {
        self.thresholds.len()
    }

    pub fn n_bins(&self, feature: usize) -> usize {
        self.thresholds[feature].len() + 1
    }

    pub fn column(&self, feature: usize) -> &[u8] {
        &self.bins[feature * self.n_rows..(feature + 1) * self.n_rows]
    }
}

fn column_thresholds(sorted: &[f64]) -> Vec<f64> {
    let mut unique = sorted.to_vec();
    unique.dedup();
    if unique.len() <= MAX_BINS {
        return unique.windows(2).map(|w| w[0] + (w[1] - w[0]) / 2.0).collect();
    }
    let n = sorted.len();
    let mut t: Vec<f64> = (1..MAX_BINS).map(|i| sorted[i * n / MAX_BINS]).collect();
    t.dedup();
    // a threshold equal to the maximum would leave the top bin empty
    if t.last() == sorted.last() {
        t.pop();
    }
    t
}
