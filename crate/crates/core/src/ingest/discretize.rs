use std::collections::VecDeque;

use crate::error::{Error, Result};

/// Number of intervals produced per numeric attribute.
pub const NUM_BINS: usize = 5;
/// Default number of recent values the cut points are estimated from.
pub const DEFAULT_CAPACITY: usize = 1000;

const PERCENTILES: [usize; NUM_BINS - 1] = [20, 40, 60, 80];

/// Incremental equal-frequency binning over a sliding sample of recent values.
///
/// Cut points are lower-nearest-rank percentiles of the sample; a value's bin
/// is the number of cut points strictly below it. Once the sample holds at
/// least five distinct values the cut points are forced strictly increasing,
/// so every bin is reachable.
#[derive(Debug, Clone)]
pub struct Discretizer {
    capacity: usize,
    arrivals: VecDeque<f64>,
    sorted: Vec<f64>,
    cuts: [f64; NUM_BINS - 1],
}

impl Discretizer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config(
                "discretizer capacity must be at least 1".into(),
            ));
        }
        Ok(Self {
            capacity,
            arrivals: VecDeque::with_capacity(capacity + 1),
            sorted: Vec::with_capacity(capacity + 1),
            cuts: [f64::NAN; NUM_BINS - 1],
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Values currently in the sample, in ascending order.
    pub fn sample(&self) -> &[f64] {
        &self.sorted
    }

    /// Current cut points; `None` before the first observation.
    pub fn cuts(&self) -> Option<[f64; NUM_BINS - 1]> {
        (!self.sorted.is_empty()).then_some(self.cuts)
    }

    /// Adds `value` to the sample, refreshes the cut points and returns the
    /// value's bin under the refreshed cuts.
    pub fn observe(&mut self, value: f64) -> Result<usize> {
        if !value.is_finite() {
            return Err(Error::SchemaViolation(format!(
                "cannot discretize non-finite value {value}"
            )));
        }
        self.arrivals.push_back(value);
        let at = self.sorted.partition_point(|&v| v < value);
        self.sorted.insert(at, value);
        if self.arrivals.len() > self.capacity {
            let old = self.arrivals.pop_front().expect("non-empty");
            let at = self.sorted.partition_point(|&v| v < old);
            self.sorted.remove(at);
        }
        self.recompute();
        Ok(self.bin(value))
    }

    /// Bin of `value` under the current cut points, without updating state.
    pub fn bin(&self, value: f64) -> usize {
        if self.sorted.is_empty() {
            return 0;
        }
        self.cuts.iter().filter(|&&c| c < value).count()
    }

    fn recompute(&mut self) {
        let n = self.sorted.len();
        for (cut, &p) in self.cuts.iter_mut().zip(&PERCENTILES) {
            *cut = self.sorted[lower_nearest_rank(n, p)];
        }
        if self.cuts.windows(2).all(|w| w[0] < w[1]) {
            return;
        }
        let mut distinct = self.sorted.clone();
        distinct.dedup();
        if distinct.len() < NUM_BINS {
            return;
        }
        // Work on positions in the distinct list: push duplicates upwards,
        // then cap so the last cut stays below the maximum.
        let mut idx = self.cuts.map(|c| distinct.partition_point(|&v| v < c));
        for k in 1..idx.len() {
            idx[k] = idx[k].max(idx[k - 1] + 1);
        }
        let last = idx.len() - 1;
        for (k, i) in idx.iter_mut().enumerate() {
            *i = (*i).min(distinct.len() - 2 - (last - k));
        }
        for (cut, i) in self.cuts.iter_mut().zip(idx) {
            *cut = distinct[i];
        }
    }
}

/// Zero-based index of the lower-nearest-rank `p`-th percentile of `n` sorted values.
fn lower_nearest_rank(n: usize, p: usize) -> usize {
    (p * n).div_ceil(100).max(1) - 1
}
