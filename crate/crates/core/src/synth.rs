//! Synthetic SST-like datasets with known generating parameters.
//!
//! ```text
//! Y(s,t) = base + gradient·(lat(s) − lat₀) + amplitude·cos(2π(p(t) − peak)/365)
//!        + trend·t/36525 + A(s,t)
//! A(s,t) = φ·A(s,t−1) + σ·√(1−φ²)·Z_t(s),   A(s,1) = σ·Z_1(s)
//! ```
//!
//! `p(t)` is the position of the date in a 365-day cycle (Feb 29 sits halfway
//! between Feb 28 and Mar 1) and `Z_t` are independent unit Gaussian random
//! fields, one stream per day.

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::climatology::MeanSurface;
use crate::error::{Error, Result};
use crate::field::{Calendar, Field, LeapPolicy, FEB29_SLOT};
use crate::grid::Grid;
use crate::random_fields::{CovarianceSpec, GaussianFieldSimulator};
use crate::rng;

const CHUNK_DAYS: usize = 128;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub rows: usize,
    pub cols: usize,
    pub origin_lon: f64,
    pub origin_lat: f64,
    pub spacing_deg: f64,
    pub start_year: i32,
    pub years: u32,
    /// °C at the southern edge, annual mean.
    pub base_temp: f64,
    /// °C
    pub seasonal_amplitude: f64,
    /// Cycle position (0..365) of the seasonal maximum.
    pub seasonal_peak: f64,
    /// °C per degree latitude.
    pub meridional_gradient: f64,
    /// °C per century.
    pub trend_per_century: f64,
    /// Stationary anomaly SD, °C.
    pub anomaly_sd: f64,
    pub anomaly_cov: CovarianceSpec,
    pub ar_phi: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            rows: 40,
            cols: 50,
            origin_lon: 36.0,
            origin_lat: 18.0,
            spacing_deg: 0.05,
            start_year: 2006,
            years: 10,
            base_temp: 28.0,
            seasonal_amplitude: 3.0,
            seasonal_peak: 220.0,
            meridional_gradient: -0.4,
            trend_per_century: 2.0,
            anomaly_sd: 1.0,
            anomaly_cov: CovarianceSpec::exponential(200.0),
            ar_phi: 0.97,
            seed: 2019,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.ar_phi) {
            return Err(Error::InvalidArgument(format!("ar_phi {} outside [0, 1)", self.ar_phi)));
        }
        if !(self.anomaly_sd > 0.0) {
            return Err(Error::InvalidArgument(format!("anomaly_sd {} must be > 0", self.anomaly_sd)));
        }
        if self.rows == 0 || self.cols == 0 || self.years == 0 {
            return Err(Error::InvalidArgument("empty synthetic domain".into()));
        }
        self.anomaly_cov.validate()
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::regular(self.rows, self.cols, self.origin_lon, self.origin_lat, self.spacing_deg)
    }

    pub fn calendar(&self) -> Result<Calendar> {
        Calendar::years(self.start_year, self.years, LeapPolicy::Gregorian)
    }

    /// Position in the 365-day cycle of a day-of-year slot.
    pub fn cycle_position(slot: usize) -> f64 {
        match slot {
            s if s < FEB29_SLOT => s as f64,
            FEB29_SLOT => FEB29_SLOT as f64 - 0.5,
            s => (s - 1) as f64,
        }
    }

    pub fn seasonal(&self, slot: usize) -> f64 {
        let p = Self::cycle_position(slot);
        self.seasonal_amplitude * (2.0 * std::f64::consts::PI * (p - self.seasonal_peak) / 365.0).cos()
    }

    /// Generating mean without the trend term.
    pub fn true_mean(&self, grid: &Grid) -> MeanSurface {
        MeanSurface::from_fn(grid.len(), |cell, slot| {
            self.base_temp
                + self.meridional_gradient * (grid.cell(cell).lat - self.origin_lat)
                + self.seasonal(slot)
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthTruth {
    pub config: SynthConfig,
    pub start_date: NaiveDate,
    pub n_days: usize,
    pub n_cells: usize,
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub grid: Grid,
    pub raw: Field,
    pub true_mean: MeanSurface,
    pub truth: SynthTruth,
}

/// AR(1)-in-time, GRF-in-space anomalies, `T × S`, day-major.
pub fn simulate_anomalies(sim: &GaussianFieldSimulator, n_days: usize, sd: f64, phi: f64, seed: u64) -> Vec<f64> {
    let n = sim.n_cells();
    let innovation_scale = sd * (1.0 - phi * phi).sqrt();
    let mut out = vec![0.0f64; n * n_days];
    let mut prev: Option<Vec<f64>> = None;
    for chunk_start in (0..n_days).step_by(CHUNK_DAYS) {
        let chunk_end = (chunk_start + CHUNK_DAYS).min(n_days);
        let innovations: Vec<Vec<f64>> = (chunk_start..chunk_end)
            .into_par_iter()
            .map(|d| sim.sample(seed, rng::SYNTH_STREAM_BASE + d as u64 + 1).values)
            .collect();
        for (d, z) in (chunk_start..chunk_end).zip(innovations) {
            let row = &mut out[d * n..(d + 1) * n];
            match &prev {
                None => row.iter_mut().zip(&z).for_each(|(a, z)| *a = sd * z),
                Some(p) => row
                    .iter_mut()
                    .zip(z.iter().zip(p))
                    .for_each(|(a, (z, p))| *a = phi * p + innovation_scale * z),
            }
            prev = Some(row.to_vec());
        }
    }
    out
}

pub fn generate(config: &SynthConfig) -> Result<SynthOutput> {
    config.validate()?;
    let grid = config.grid()?;
    let calendar = config.calendar()?;
    let sim = GaussianFieldSimulator::new(&grid, &config.anomaly_cov)?;
    let n = grid.len();
    let anomalies = simulate_anomalies(&sim, calendar.n_days(), config.anomaly_sd, config.ar_phi, config.seed);
    let true_mean = config.true_mean(&grid);
    let values: Vec<f32> = anomalies
        .par_chunks(n)
        .enumerate()
        .flat_map_iter(|(d, row)| {
            let slot = calendar.doy_slot(d);
            let trend = config.trend_per_century * (d + 1) as f64 / 36525.0;
            let mean = &true_mean;
            row.iter()
                .enumerate()
                .map(move |(c, a)| (mean.get(c, slot) + trend + a) as f32)
        })
        .collect();
    let raw = Field::new(n, calendar.clone(), values)?;
    raw.check_bounds(-10.0, 50.0)?;
    Ok(SynthOutput {
        truth: SynthTruth {
            config: config.clone(),
            start_date: calendar.start(),
            n_days: calendar.n_days(),
            n_cells: n,
        },
        grid,
        raw,
        true_mean,
    })
}
