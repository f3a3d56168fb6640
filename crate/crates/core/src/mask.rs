//! Month-wise missing-data masks and the validation index.
//!
//! For month `j` a Gaussian field `Z_j` is simulated over the grid and the
//! `round_half_up(α_j·S)` cells with the largest values become missing for
//! every day of that month. Validation points are then drawn from the masked
//! cells, so they never overlap the training data.

use std::collections::HashSet;
use std::io::Write;
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::csv_io;
use crate::error::{Error, Result};
use crate::field::{Calendar, Field};
use crate::grid::Grid;
use crate::random_fields::{CovarianceSpec, GaussianFieldSimulator};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaConfig {
    pub alpha_early: f64,
    pub alpha_late: f64,
    /// First day of the late period.
    pub split_date: NaiveDate,
}

impl Default for AlphaConfig {
    fn default() -> Self {
        AlphaConfig {
            alpha_early: 0.20,
            alpha_late: 0.60,
            split_date: NaiveDate::from_ymd_opt(2007, 1, 1).unwrap(),
        }
    }
}

/// Per-month missing fraction; a month belongs to the late period when its
/// first day is on or after the split date.
pub fn default_alpha_schedule(calendar: &Calendar, cfg: &AlphaConfig) -> Vec<f64> {
    (0..calendar.n_months())
        .map(|m| {
            let first = calendar.date(calendar.month_days(m).start);
            if first < cfg.split_date {
                cfg.alpha_early
            } else {
                cfg.alpha_late
            }
        })
        .collect()
}

pub fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor() as usize
}

/// Cells with the `round_half_up(α·S)` largest values (ties by ascending
/// cell id), returned sorted, plus the largest excluded value (`-∞` when
/// nothing is excluded).
pub fn truncate_to_mask(z: &[f64], alpha: f64) -> Result<(Vec<u32>, f64)> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidArgument(format!("alpha {alpha} outside [0, 1]")));
    }
    let n_missing = round_half_up(alpha * z.len() as f64).min(z.len());
    let mut order: Vec<u32> = (0..z.len() as u32).collect();
    order.sort_by(|&a, &b| z[b as usize].total_cmp(&z[a as usize]).then(a.cmp(&b)));
    let threshold = order.get(n_missing).map_or(f64::NEG_INFINITY, |&i| z[i as usize]);
    let mut missing = order[..n_missing].to_vec();
    missing.sort_unstable();
    Ok((missing, threshold))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonthMask {
    pub alpha: f64,
    pub threshold: f64,
    /// Ascending cell ids.
    pub missing: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaskSchedule {
    n_cells: usize,
    calendar: Calendar,
    months: Vec<MonthMask>,
}

impl MaskSchedule {
    /// Schedule that masks nothing.
    pub fn empty(n_cells: usize, calendar: Calendar) -> Self {
        let months = (0..calendar.n_months())
            .map(|_| MonthMask {
                alpha: 0.0,
                threshold: f64::INFINITY,
                missing: Vec::new(),
            })
            .collect();
        MaskSchedule {
            n_cells,
            calendar,
            months,
        }
    }

    /// Simulates one Gaussian field per month (stream id = one-based month)
    /// and truncates it at the month's fraction.
    pub fn generate(
        grid: &Grid,
        calendar: &Calendar,
        alphas: &[f64],
        cov: &CovarianceSpec,
        seed: u64,
    ) -> Result<Self> {
        if alphas.len() != calendar.n_months() {
            return Err(Error::DimensionMismatch(format!(
                "{} alphas for {} months",
                alphas.len(),
                calendar.n_months()
            )));
        }
        let sim = GaussianFieldSimulator::new(grid, cov)?;
        Self::generate_with(&sim, calendar, alphas, seed)
    }

    /// As [`MaskSchedule::generate`] with a pre-factorized simulator.
    pub fn generate_with(sim: &GaussianFieldSimulator, calendar: &Calendar, alphas: &[f64], seed: u64) -> Result<Self> {
        let months = alphas
            .par_iter()
            .enumerate()
            .map(|(m, &alpha)| {
                let z = sim.sample(seed, m as u64 + 1);
                let (missing, threshold) = truncate_to_mask(&z.values, alpha)?;
                Ok(MonthMask {
                    alpha,
                    threshold,
                    missing,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(MaskSchedule {
            n_cells: sim.n_cells(),
            calendar: calendar.clone(),
            months,
        })
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn calendar(&self) -> &Calendar {
        &self.calendar
    }

    pub fn months(&self) -> &[MonthMask] {
        &self.months
    }

    pub fn is_missing(&self, cell: usize, day: usize) -> bool {
        let m = &self.months[self.calendar.month_of_day(day)];
        m.missing.binary_search(&(cell as u32)).is_ok()
    }

    /// `Σ_j |M_j|·|T_j| / (S·T)`.
    pub fn missing_fraction(&self) -> f64 {
        let total: usize = self
            .months
            .iter()
            .enumerate()
            .map(|(m, mm)| mm.missing.len() * self.calendar.month_days(m).len())
            .sum();
        total as f64 / (self.n_cells * self.calendar.n_days()) as f64
    }

    /// `month_index,alpha,n_missing,z_threshold` with one-based months.
    pub fn summary_csv(&self) -> String {
        let mut out = String::from("month_index,alpha,n_missing,z_threshold\n");
        for (m, mm) in self.months.iter().enumerate() {
            out.push_str(&format!("{},{},{},{}\n", m + 1, mm.alpha, mm.missing.len(), mm.threshold));
        }
        out
    }
}

/// Training field: NaN on the scheduled cells of each month, input bits elsewhere.
pub fn apply_mask(anom: &Field, schedule: &MaskSchedule) -> Result<Field> {
    if anom.n_cells() != schedule.n_cells || anom.calendar() != &schedule.calendar {
        return Err(Error::DimensionMismatch(
            "mask schedule and field disagree on grid or calendar".into(),
        ));
    }
    let mut out = anom.clone();
    let cal = schedule.calendar.clone();
    for (m, mm) in schedule.months.iter().enumerate() {
        for day in cal.month_days(m) {
            let row = out.day_mut(day);
            for &c in &mm.missing {
                row[c as usize] = f32::NAN;
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationConfig {
    pub n_per_day: usize,
    pub days_of_month: Vec<u32>,
    pub period_start: NaiveDate,
    pub period_end: NaiveDate,
    /// Draw once per month and reuse the locations on every validation day.
    pub reuse_locations_within_month: bool,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        ValidationConfig {
            n_per_day: 500,
            days_of_month: vec![5, 15, 25],
            period_start: NaiveDate::from_ymd_opt(2007, 1, 1).unwrap(),
            period_end: NaiveDate::from_ymd_opt(2015, 12, 31).unwrap(),
            reuse_locations_within_month: false,
        }
    }
}

impl ValidationConfig {
    pub fn is_validation_date(&self, date: NaiveDate) -> bool {
        date >= self.period_start && date <= self.period_end && self.days_of_month.contains(&date.day())
    }

    /// Number of validation points implied by a calendar, without sampling.
    pub fn point_count(&self, calendar: &Calendar) -> usize {
        calendar.dates().iter().filter(|&&d| self.is_validation_date(d)).count() * self.n_per_day
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ValidationPoint {
    pub point_id: usize,
    pub cell_id: usize,
    /// Zero-based day index in the calendar.
    pub day: usize,
    pub date: NaiveDate,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ValidationIndex {
    pub points: Vec<ValidationPoint>,
}

impl ValidationIndex {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        let mut emit = || -> std::io::Result<()> {
            w.write_all(b"point_id,cell_id,date\n")?;
            for p in &self.points {
                writeln!(w, "{},{},{}", p.point_id, p.cell_id, p.date.format("%Y-%m-%d"))?;
            }
            w.flush()
        };
        emit().map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path, calendar: &Calendar) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            point_id: usize,
            cell_id: usize,
            date: NaiveDate,
        }
        const WHAT: &str = "validation index CSV";
        let mut rdr = csv_io::open(path, WHAT, &["point_id", "cell_id", "date"])?;
        let mut points = Vec::new();
        for row in rdr.deserialize::<Row>() {
            let row = row.map_err(|e| csv_io::map_err(WHAT, path, e))?;
            if row.point_id != points.len() {
                return Err(Error::format(WHAT, format!("point_id {} out of sequence", row.point_id)));
            }
            points.push(ValidationPoint {
                point_id: row.point_id,
                cell_id: row.cell_id,
                day: calendar.day_index(row.date)?,
                date: row.date,
            });
        }
        Ok(ValidationIndex { points })
    }
}

fn draw_without_replacement<R: Rng>(pool: &[u32], n: usize, rng: &mut R) -> Vec<u32> {
    let mut pool = pool.to_vec();
    for i in 0..n {
        let k = rng.random_range(i..pool.len());
        pool.swap(i, k);
    }
    let mut out = pool[..n].to_vec();
    out.sort_unstable();
    out
}

/// Uniform draws without replacement from each validation day's missing set.
///
/// Day `t` (one-based) uses stream `10000 + t`; with location reuse the
/// month's first validation day supplies the stream for the whole month.
pub fn sample_validation(schedule: &MaskSchedule, cfg: &ValidationConfig, seed: u64) -> Result<ValidationIndex> {
    let cal = &schedule.calendar;
    let days: Vec<usize> = (0..cal.n_days()).filter(|&d| cfg.is_validation_date(cal.date(d))).collect();
    let mut checked = HashSet::new();
    for &d in &days {
        let m = cal.month_of_day(d);
        if checked.insert(m) && schedule.months[m].missing.len() < cfg.n_per_day {
            return Err(Error::InsufficientMissing {
                month: m + 1,
                needed: cfg.n_per_day,
                available: schedule.months[m].missing.len(),
            });
        }
    }
    let stream_day = |d: usize| -> usize {
        if cfg.reuse_locations_within_month {
            let m = cal.month_of_day(d);
            *days.iter().find(|&&x| cal.month_of_day(x) == m).unwrap()
        } else {
            d
        }
    };
    let draws: Vec<Vec<u32>> = days
        .par_iter()
        .map(|&d| {
            let mut r = rng::stream(seed, rng::VALIDATION_STREAM_BASE + stream_day(d) as u64 + 1);
            draw_without_replacement(&schedule.months[cal.month_of_day(d)].missing, cfg.n_per_day, &mut r)
        })
        .collect();
    let mut points = Vec::with_capacity(days.len() * cfg.n_per_day);
    for (&d, cells) in days.iter().zip(draws) {
        for c in cells {
            points.push(ValidationPoint {
                point_id: points.len(),
                cell_id: c as usize,
                day: d,
                date: cal.date(d),
            });
        }
    }
    Ok(ValidationIndex { points })
}
