//! Pooled-minima benchmark forecast.
//!
//! Every complete-neighborhood minimum is dropped into one of `n + 1` bins
//! delimited by the design points. Since the ECDF is only ever read at those
//! points, the histogram reproduces it exactly in constant memory.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::evaluation::{DesignGrid, PredictiveCdf};
use crate::min_process::{CompleteMask, MinField};

/// `counts[b]` holds values with exactly `b` design points strictly below
/// them: bin 0 is `x ≤ x¹`, bin `n` is `x > xⁿ`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PooledMinimaHistogram {
    pub counts: Vec<u64>,
    pub total_n: u64,
}

impl PooledMinimaHistogram {
    pub fn new(grid: &DesignGrid) -> Self {
        PooledMinimaHistogram {
            counts: vec![0; grid.n + 1],
            total_n: 0,
        }
    }

    pub fn add(&mut self, points: &[f64], x: f64) {
        let b = points.partition_point(|&p| p < x);
        self.counts[b] += 1;
        self.total_n += 1;
    }

    pub fn merge(mut self, other: &Self) -> Self {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.total_n += other.total_n;
        self
    }

    /// Histogram of an arbitrary sample (NaNs skipped).
    pub fn from_values(grid: &DesignGrid, values: &[f64]) -> Self {
        let points = grid.points();
        let mut h = Self::new(grid);
        for &v in values.iter().filter(|v| !v.is_nan()) {
            h.add(&points, v);
        }
        h
    }
}

/// Bins every `X(s,t)` whose neighborhood is complete. Day slices are
/// counted in parallel and merged by integer addition.
pub fn pool_minima(x: &MinField, complete: &CompleteMask, grid: &DesignGrid) -> Result<PooledMinimaHistogram> {
    let f = &x.field;
    if complete.n_cells != f.n_cells() || complete.n_days != f.n_days() {
        return Err(Error::DimensionMismatch("complete mask and minimum field differ in shape".into()));
    }
    let points = grid.points();
    let n = f.n_cells();
    let hist = (0..f.n_days())
        .into_par_iter()
        .fold(
            || PooledMinimaHistogram::new(grid),
            |mut h, d| {
                let flags = &complete.flags[d * n..(d + 1) * n];
                for (&v, &ok) in f.day(d).iter().zip(flags) {
                    if ok {
                        h.add(&points, v as f64);
                    }
                }
                h
            },
        )
        .reduce(|| PooledMinimaHistogram::new(grid), |a, b| a.merge(&b));
    if hist.total_n == 0 {
        return Err(Error::NoCompleteNeighborhoods);
    }
    Ok(hist)
}

/// `F(x^k) = #{pooled ≤ x^k} / total_n`.
pub fn benchmark_cdf(hist: &PooledMinimaHistogram) -> Result<PredictiveCdf> {
    if hist.total_n == 0 {
        return Err(Error::NoCompleteNeighborhoods);
    }
    let n_points = hist.counts.len() - 1;
    let mut cum = 0u64;
    let values = (0..n_points)
        .map(|k| {
            cum += hist.counts[k];
            cum as f64 / hist.total_n as f64
        })
        .collect();
    PredictiveCdf::new(values)
}
