//! Streaming error statistics and fixed-width histograms.

use serde::{Deserialize, Serialize};

/// Running sums of a signed error sample.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ErrorStats {
    pub count: u64,
    pub sum: f64,
    pub sum_sq: f64,
    pub sum_abs: f64,
}

impl ErrorStats {
    pub fn add(&mut self, e: f64) {
        self.count += 1;
        self.sum += e;
        self.sum_sq += e * e;
        self.sum_abs += e.abs();
    }

    pub fn merge(&mut self, other: &ErrorStats) {
        self.count += other.count;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
        self.sum_abs += other.sum_abs;
    }

    fn ratio(&self, x: f64) -> Option<f64> {
        (self.count > 0).then(|| x / self.count as f64)
    }

    pub fn mean(&self) -> Option<f64> {
        self.ratio(self.sum)
    }

    pub fn rmse(&self) -> Option<f64> {
        self.ratio(self.sum_sq).map(f64::sqrt)
    }

    pub fn mean_abs(&self) -> Option<f64> {
        self.ratio(self.sum_abs)
    }

    pub fn summary(&self) -> Summary {
        Summary {
            count: self.count,
            mean: self.mean(),
            rmse: self.rmse(),
            mean_abs: self.mean_abs(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: u64,
    pub mean: Option<f64>,
    pub rmse: Option<f64>,
    pub mean_abs: Option<f64>,
}

/// Error statistics binned over `[lo, hi]`; keys outside are clamped to the
/// end bins so bin counts always sum to the sample count.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub width: f64,
    pub bins: Vec<ErrorStats>,
}

impl Histogram {
    pub fn new(lo: f64, hi: f64, width: f64) -> Self {
        let n = ((hi - lo) / width).round() as usize;
        Self {
            lo,
            hi,
            width,
            bins: vec![ErrorStats::default(); n],
        }
    }

    pub fn index(&self, key: f64) -> usize {
        let i = ((key - self.lo) / self.width).floor();
        if i.is_nan() || i < 0.0 {
            0
        } else {
            (i as usize).min(self.bins.len() - 1)
        }
    }

    pub fn add(&mut self, key: f64, e: f64) {
        let i = self.index(key);
        self.bins[i].add(e);
    }

    pub fn merge(&mut self, other: &Histogram) {
        for (a, b) in self.bins.iter_mut().zip(&other.bins) {
            a.merge(b);
        }
    }

    pub fn total(&self) -> u64 {
        self.bins.iter().map(|b| b.count).sum()
    }

    pub fn table(&self) -> Vec<BinRow> {
        self.bins
            .iter()
            .enumerate()
            .map(|(i, b)| BinRow {
                lo: self.lo + i as f64 * self.width,
                hi: self.lo + (i + 1) as f64 * self.width,
                count: b.count,
                mean: b.mean(),
                rmse: b.rmse(),
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinRow {
    pub lo: f64,
    pub hi: f64,
    pub count: u64,
    pub mean: Option<f64>,
    pub rmse: Option<f64>,
}

/// Median of a sample (average of the middle pair for even sizes).
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

/// Fraction of values `< threshold`.
pub fn fraction_below(values: &[f64], threshold: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    Some(values.iter().filter(|&&v| v < threshold).count() as f64 / values.len() as f64)
}

/// Empirical CDF sampled at `0, step, 2·step, …, max` (fraction `<=` each point).
pub fn cdf(values: &[f64], step: f64, max: f64) -> Vec<(f64, f64)> {
    let n = (max / step).round() as usize;
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    (0..=n)
        .map(|i| {
            let t = i as f64 * step;
            let below = sorted.partition_point(|&v| v <= t);
            let frac = if sorted.is_empty() {
                0.0
            } else {
                below as f64 / sorted.len() as f64
            };
            (t, frac)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stats_arithmetic() {
        let mut s = ErrorStats::default();
        assert_eq!(s.mean(), None);
        for e in [3.0, -4.0] {
            s.add(e);
        }
        assert_eq!(s.mean(), Some(-0.5));
        assert_eq!(s.rmse(), Some(12.5f64.sqrt()));
        assert_eq!(s.mean_abs(), Some(3.5));
    }

    #[test]
    fn histogram_covers_range() {
        let mut h = Histogram::new(-180.0, 180.0, 4.0);
        assert_eq!(h.bins.len(), 90);
        for k in [-180.0, -179.9, 0.0, 179.99, 180.0, 250.0, -400.0] {
            h.add(k, 1.0);
        }
        assert_eq!(h.total(), 7);
        assert_eq!(h.bins[0].count, 3);
        assert_eq!(h.bins[89].count, 3);
        assert_eq!(h.bins[45].count, 1);
        let rows = h.table();
        assert_eq!(rows[0].lo, -180.0);
        assert_eq!(rows[89].hi, 180.0);
    }

    #[test]
    fn order_statistics() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(fraction_below(&[1.0, 30.0, 10.0, 25.0], 25.0), Some(0.5));
        let c = cdf(&[0.5, 1.5, 1.5, 3.0], 1.0, 3.0);
        assert_eq!(c, vec![(0.0, 0.0), (1.0, 0.25), (2.0, 0.75), (3.0, 1.0)]);
    }
}
