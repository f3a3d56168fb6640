//! Fixtures shared by the criterion benchmarks under `benches/`.

use chrono::NaiveDate;
use sstx_core::rng::{standard_normal, stream};
use sstx_core::{Calendar, DesignGrid, Field, Grid, PredictiveCdf, Submission};

/// Regular grid at 0.05°, roughly 5.5 km between rows.
pub fn grid(rows: usize, cols: usize) -> Grid {
    Grid::regular(rows, cols, -20.0, 20.0, 0.05).expect("regular grid")
}

/// i.i.d. standard normal anomalies with a fraction of cells set to NaN.
pub fn noisy_field(n_cells: usize, n_days: usize, nan_rate: f64, seed: u64) -> Field {
    let cal = Calendar::new(NaiveDate::from_ymd_opt(2010, 1, 1).unwrap(), n_days).expect("calendar");
    let mut rng = stream(seed, 0);
    let values = (0..n_cells * n_days)
        .map(|_| {
            let z = standard_normal(&mut rng);
            if sstx_core::rng::open_unit(&mut rng) < nan_rate {
                f32::NAN
            } else {
                z as f32
            }
        })
        .collect();
    Field::new(n_cells, cal, values).expect("field")
}

/// Observations spread over the design range and one smooth CDF per point.
pub fn forecasts(n_points: usize, seed: u64) -> (Submission, Vec<f64>) {
    let design = DesignGrid::default();
    let points = design.points();
    let mut rng = stream(seed, 1);
    let mut obs = Vec::with_capacity(n_points);
    let mut values = Vec::with_capacity(n_points * points.len());
    for _ in 0..n_points {
        let centre = standard_normal(&mut rng);
        obs.push(centre + 0.5 * standard_normal(&mut rng));
        let cdf: Vec<f64> = points.iter().map(|&y| sstx_core::normal::cdf(y - centre)).collect();
        values.extend(PredictiveCdf::new(cdf).expect("cdf").values().iter().map(|&v| v as f32));
    }
    (Submission::from_raw(n_points, values), obs)
}
