//! Space-time cylinder minimum `X(s,t)`.
//!
//! The cylinder is a closed disk of `radius_km` around `s` crossed with the
//! days `t-h ..= t+h`, both clipped to the domain. Because a minimum over a
//! product set factorizes, `X` is computed as a sliding minimum along time per
//! cell followed by a disk minimum per day. Both passes apply the same missing
//! value policy, which makes the composition exact for either policy.

use std::collections::VecDeque;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::csv_io;
use crate::error::{Error, Result};
use crate::field::Field;
use crate::grid::NeighborTable;
use crate::mask::ValidationIndex;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NaMode {
    /// Minimum over observed values; NaN only if nothing was observed.
    IgnoreMissing,
    /// NaN as soon as any value in the window is missing.
    RequireComplete,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CylinderSpec {
    pub radius_km: f64,
    pub half_window_days: usize,
}

impl Default for CylinderSpec {
    fn default() -> Self {
        CylinderSpec {
            radius_km: 50.0,
            half_window_days: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinField {
    pub field: Field,
    pub spec: CylinderSpec,
    pub na_mode: NaMode,
    pub source: String,
}

/// Sliding minimum over `t-h ..= t+h` (clipped) of one series.
pub fn sliding_min(series: &[f32], half_window: usize, mode: NaMode) -> Vec<f32> {
    let n = series.len();
    let mut out = Vec::with_capacity(n);
    // indices of observed values with increasing values
    let mut wedge: VecDeque<usize> = VecDeque::with_capacity(2 * half_window + 2);
    let mut nan_prefix = Vec::with_capacity(n + 1);
    nan_prefix.push(0u32);
    for v in series {
        nan_prefix.push(nan_prefix.last().unwrap() + v.is_nan() as u32);
    }
    let mut next = 0;
    for t in 0..n {
        let hi = (t + half_window).min(n - 1);
        let lo = t.saturating_sub(half_window);
        while next <= hi {
            let v = series[next];
            if !v.is_nan() {
                while wedge.back().is_some_and(|&b| series[b] >= v) {
                    wedge.pop_back();
                }
                wedge.push_back(next);
            }
            next += 1;
        }
        while wedge.front().is_some_and(|&f| f < lo) {
            wedge.pop_front();
        }
        let has_missing = nan_prefix[hi + 1] > nan_prefix[lo];
        out.push(match (mode, wedge.front()) {
            (NaMode::RequireComplete, _) if has_missing => f32::NAN,
            (_, Some(&f)) => series[f],
            (_, None) => f32::NAN,
        });
    }
    out
}

/// Temporal pass: sliding minimum per cell.
pub fn temporal_window_min(field: &Field, half_window: usize, mode: NaMode) -> Field {
    let n = field.n_cells();
    let per_cell: Vec<Vec<f32>> = (0..n)
        .into_par_iter()
        .map(|c| sliding_min(&field.series(c), half_window, mode))
        .collect();
    let mut out = field.clone();
    for (c, series) in per_cell.iter().enumerate() {
        for (d, &v) in series.iter().enumerate() {
            out.set(d, c, v);
        }
    }
    out
}

fn disk_min(row: &[f32], ids: &[u32], mode: NaMode) -> f32 {
    let mut m = f32::INFINITY;
    let mut seen = false;
    for &j in ids {
        let v = row[j as usize];
        if v.is_nan() {
            if mode == NaMode::RequireComplete {
                return f32::NAN;
            }
        } else {
            seen = true;
            if v < m {
                m = v;
            }
        }
    }
    if seen {
        m
    } else {
        f32::NAN
    }
}

/// Spatial pass on an arbitrary field: disk minimum per day.
pub fn spatial_disk_min_field(field: &Field, neighbors: &NeighborTable, mode: NaMode) -> Result<Field> {
    if neighbors.n_cells() != field.n_cells() {
        return Err(Error::DimensionMismatch(format!(
            "neighbor table for {} cells, field has {}",
            neighbors.n_cells(),
            field.n_cells()
        )));
    }
    let n = field.n_cells();
    let mut out = field.clone();
    out.values_mut()
        .par_chunks_mut(n)
        .enumerate()
        .for_each(|(d, row_out)| {
            let row = field.day(d);
            for (c, o) in row_out.iter_mut().enumerate() {
                *o = disk_min(row, neighbors.neighbors(c), mode);
            }
        });
    Ok(out)
}

pub fn spatial_disk_min(tmin: &Field, neighbors: &NeighborTable, half_window: usize, mode: NaMode) -> Result<MinField> {
    Ok(MinField {
        field: spatial_disk_min_field(tmin, neighbors, mode)?,
        spec: CylinderSpec {
            radius_km: neighbors.radius_km(),
            half_window_days: half_window,
        },
        na_mode: mode,
        source: String::new(),
    })
}

/// `X(s,t)`: temporal pass followed by the spatial pass.
pub fn min_process(anom: &Field, neighbors: &NeighborTable, half_window: usize, mode: NaMode) -> Result<MinField> {
    let tmin = temporal_window_min(anom, half_window, mode);
    spatial_disk_min(&tmin, neighbors, half_window, mode)
}

/// Day-major flags: `true` where the whole cylinder is observed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompleteMask {
    pub n_cells: usize,
    pub n_days: usize,
    pub flags: Vec<bool>,
}

impl CompleteMask {
    pub fn get(&self, day: usize, cell: usize) -> bool {
        self.flags[day * self.n_cells + cell]
    }

    pub fn count(&self) -> usize {
        self.flags.iter().filter(|&&f| f).count()
    }

    pub fn fraction(&self) -> f64 {
        self.count() as f64 / self.flags.len() as f64
    }
}

/// Propagates a 0/NaN observation indicator through both passes under
/// [`NaMode::RequireComplete`]. Truncated windows at the series ends count as
/// complete when everything inside them is observed.
pub fn complete_neighborhood_mask(masked: &Field, neighbors: &NeighborTable, half_window: usize) -> Result<CompleteMask> {
    let mut indicator = masked.clone();
    for v in indicator.values_mut() {
        *v = if v.is_nan() { f32::NAN } else { 0.0 };
    }
    let x = min_process(&indicator, neighbors, half_window, NaMode::RequireComplete)?;
    Ok(CompleteMask {
        n_cells: masked.n_cells(),
        n_days: masked.n_days(),
        flags: x.field.values().iter().map(|v| !v.is_nan()).collect(),
    })
}

/// Observed `X` at each validation point, indexed by `point_id`.
#[derive(Debug, Clone, PartialEq)]
pub struct Truth {
    pub values: Vec<f64>,
}

impl Truth {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        let mut emit = || -> std::io::Result<()> {
            w.write_all(b"point_id,x_true\n")?;
            for (i, v) in self.values.iter().enumerate() {
                writeln!(w, "{i},{v}")?;
            }
            w.flush()
        };
        emit().map_err(|e| Error::io(path, e))
    }

    /// Rows may come in any order but must cover `0..n` exactly once.
    pub fn read_csv(path: &Path) -> Result<Self> {
        const WHAT: &str = "truth CSV";
        let mut rdr = csv_io::open(path, WHAT, &["point_id", "x_true"])?;
        let mut rows: Vec<(usize, f64)> = rdr
            .deserialize()
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| csv_io::map_err(WHAT, path, e))?;
        rows.sort_by_key(|r| r.0);
        let mut values = Vec::with_capacity(rows.len());
        for (expected, (id, x)) in rows.into_iter().enumerate() {
            if id != expected {
                return Err(Error::MissingTruth(expected));
            }
            values.push(x);
        }
        Ok(Truth { values })
    }
}

/// Samples `X` at the validation points.
pub fn extract_truth(x: &MinField, index: &ValidationIndex) -> Result<Truth> {
    let values = index
        .points
        .iter()
        .map(|p| {
            let v = x.field.get(p.day, p.cell_id);
            if v.is_nan() {
                Err(Error::InvalidArgument(format!(
                    "minimum process undefined at validation point {}",
                    p.point_id
                )))
            } else {
                Ok(v as f64)
            }
        })
        .collect::<Result<_>>()?;
    Ok(Truth { values })
}
