//! Seasonal mean surface, anomalies and trend diagnostics.
//!
//! The mean is estimated per cell and per day-of-year slot by pooling all
//! years, then smoothed with a centered 7-day boxcar that wraps around the
//! year boundary. Slots are keyed on (month, day), so Feb 29 is its own group
//! averaged over leap years only. When the calendar holds no Feb 29 the
//! smoothing cycle has 365 slots and Feb 29 is left undefined.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{Calendar, Field, DOY_SLOTS, FEB29_SLOT};

pub const SMOOTHING_HALF_WIDTH: usize = 3;

/// Reference start for serializing a mean surface as a 366-day field: a leap
/// year, so day index equals slot.
fn surface_calendar() -> Calendar {
    Calendar::new(chrono::NaiveDate::from_ymd_opt(2000, 1, 1).unwrap(), DOY_SLOTS).unwrap()
}

/// Per-cell, per-day-of-year mean, slot-major (`values[slot * S + cell]`).
///
/// NaN marks slots without an estimate. `gaps` lists the (cell, slot) pairs
/// inside the active cycle that had no observation in any year.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanSurface {
    n_cells: usize,
    values: Vec<f64>,
    gaps: Vec<(usize, usize)>,
}

impl MeanSurface {
    /// Builds a surface from a closure over (cell, slot).
    pub fn from_fn(n_cells: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let values = (0..DOY_SLOTS)
            .flat_map(|slot| (0..n_cells).map(move |cell| (slot, cell)))
            .map(|(slot, cell)| f(cell, slot))
            .collect();
        MeanSurface {
            n_cells,
            values,
            gaps: Vec::new(),
        }
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn get(&self, cell: usize, slot: usize) -> f64 {
        self.values[slot * self.n_cells + cell]
    }

    pub fn gaps(&self) -> &[(usize, usize)] {
        &self.gaps
    }

    pub fn to_field(&self) -> Field {
        let values = self.values.iter().map(|&v| v as f32).collect();
        Field::new(self.n_cells, surface_calendar(), values).unwrap()
    }

    pub fn from_field(field: &Field) -> Result<Self> {
        if field.n_days() != DOY_SLOTS {
            return Err(Error::DimensionMismatch(format!(
                "mean surface needs {DOY_SLOTS} slots, field has {}",
                field.n_days()
            )));
        }
        let n = field.n_cells();
        let values: Vec<f64> = field.values().iter().map(|&v| v as f64).collect();
        let feb29_defined = values[FEB29_SLOT * n..(FEB29_SLOT + 1) * n].iter().any(|v| !v.is_nan());
        let gaps = values
            .iter()
            .enumerate()
            .filter(|(i, v)| v.is_nan() && (i / n != FEB29_SLOT || feb29_defined))
            .map(|(i, _)| (i % n, i / n))
            .collect();
        Ok(MeanSurface { n_cells: n, values, gaps })
    }
}

/// Slots making up the seasonal cycle for this calendar.
pub fn active_cycle(calendar: &Calendar) -> Vec<usize> {
    let with_leap = calendar.has_feb29();
    (0..DOY_SLOTS).filter(|&s| with_leap || s != FEB29_SLOT).collect()
}

/// Unsmoothed per-slot means pooled across years; missing values excluded.
pub fn daily_means(raw: &Field) -> MeanSurface {
    let n = raw.n_cells();
    let cal = raw.calendar();
    let mut sums = vec![0.0f64; DOY_SLOTS * n];
    let mut counts = vec![0u32; DOY_SLOTS * n];
    for day in 0..raw.n_days() {
        let base = cal.doy_slot(day) * n;
        for (cell, &v) in raw.day(day).iter().enumerate() {
            if !v.is_nan() {
                sums[base + cell] += v as f64;
                counts[base + cell] += 1;
            }
        }
    }
    let cycle = active_cycle(cal);
    let mut in_cycle = [false; DOY_SLOTS];
    cycle.iter().for_each(|&s| in_cycle[s] = true);
    let mut gaps = Vec::new();
    let values = sums
        .iter()
        .zip(&counts)
        .enumerate()
        .map(|(i, (&s, &c))| {
            if c > 0 {
                s / c as f64
            } else {
                if in_cycle[i / n] {
                    gaps.push((i % n, i / n));
                }
                f64::NAN
            }
        })
        .collect();
    gaps.sort_unstable();
    MeanSurface { n_cells: n, values, gaps }
}

/// Centered circular boxcar over the slots in `cycle`.
///
/// Each output averages the defined values among the `2h + 1` cycle
/// neighbors; a slot that is itself a gap stays undefined.
pub fn smooth_circular(surface: &MeanSurface, cycle: &[usize], half_width: usize) -> MeanSurface {
    let n = surface.n_cells;
    let len = cycle.len();
    let per_cell: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|cell| {
            let series: Vec<f64> = cycle.iter().map(|&s| surface.get(cell, s)).collect();
            (0..len)
                .map(|p| {
                    if series[p].is_nan() {
                        return f64::NAN;
                    }
                    let (mut sum, mut count) = (0.0, 0usize);
                    for k in 0..=2 * half_width {
                        let q = (p + len * (half_width + 1) + k - half_width) % len;
                        if !series[q].is_nan() {
                            sum += series[q];
                            count += 1;
                        }
                    }
                    sum / count as f64
                })
                .collect()
        })
        .collect();
    let mut values = vec![f64::NAN; DOY_SLOTS * n];
    for (cell, smoothed) in per_cell.iter().enumerate() {
        for (p, &slot) in cycle.iter().enumerate() {
            values[slot * n + cell] = smoothed[p];
        }
    }
    MeanSurface {
        n_cells: n,
        values,
        gaps: surface.gaps.clone(),
    }
}

/// Pooled day-of-year means smoothed with a centered, circular 7-day window.
pub fn estimate_mean(raw: &Field) -> Result<MeanSurface> {
    if raw.n_days() < 365 {
        return Err(Error::InvalidArgument(format!(
            "mean estimation needs at least one full year, got {} days",
            raw.n_days()
        )));
    }
    let cycle = active_cycle(raw.calendar());
    Ok(smooth_circular(&daily_means(raw), &cycle, SMOOTHING_HALF_WIDTH))
}

/// `Â = Y − μ̂(doy)`; missing stays missing.
pub fn compute_anomaly(raw: &Field, mean: &MeanSurface) -> Result<Field> {
    if raw.n_cells() != mean.n_cells() {
        return Err(Error::DimensionMismatch(format!(
            "raw field has {} cells, mean surface {}",
            raw.n_cells(),
            mean.n_cells()
        )));
    }
    let n = raw.n_cells();
    let cal = raw.calendar();
    let mut out = raw.clone();
    let mut gaps = std::collections::BTreeSet::new();
    for day in 0..raw.n_days() {
        let slot = cal.doy_slot(day);
        for (cell, v) in out.day_mut(day).iter_mut().enumerate() {
            if v.is_nan() {
                continue;
            }
            let mu = mean.values[slot * n + cell];
            if mu.is_nan() {
                gaps.insert((cell, slot));
            } else {
                *v = (*v as f64 - mu) as f32;
            }
        }
    }
    if !gaps.is_empty() {
        return Err(Error::EstimationGap(gaps.into_iter().collect()));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoxSummary {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

impl BoxSummary {
    /// Quartiles by linear interpolation between order statistics; NaNs ignored.
    pub fn of(values: &[f64]) -> Option<Self> {
        let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        let q = |p: f64| {
            let h = p * (v.len() - 1) as f64;
            let lo = h.floor() as usize;
            let hi = h.ceil() as usize;
            v[lo] + (h - lo as f64) * (v[hi] - v[lo])
        };
        Some(BoxSummary {
            min: v[0],
            q1: q(0.25),
            median: q(0.5),
            q3: q(0.75),
            max: v[v.len() - 1],
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct YearSummary {
    pub year: i32,
    pub basin_mean: f64,
    pub basin_sd: f64,
    pub mean_box: Option<BoxSummary>,
    pub sd_box: Option<BoxSummary>,
}

/// Linear trend diagnostics of the anomaly process.
///
/// Slopes are in °C per century. `cell_slopes[i]` is `None` when cell `i` has
/// fewer than three years with data.
#[derive(Debug, Clone, Serialize)]
pub struct TrendReport {
    #[serde(skip)]
    pub cell_slopes: Vec<Option<f64>>,
    pub basin_mean_slope: f64,
    pub basin_sd_slope: f64,
    pub years: Vec<YearSummary>,
}

impl TrendReport {
    pub fn cell_slopes_csv(&self) -> String {
        let mut out = String::from("cell_id,slope_c_per_century\n");
        for (i, s) in self.cell_slopes.iter().enumerate() {
            match s {
                Some(v) => out.push_str(&format!("{i},{v}\n")),
                None => out.push_str(&format!("{i},NA\n")),
            }
        }
        out
    }
}

/// OLS slope of `y` on `x` with `x` centered; NaN pairs are dropped.
pub fn ols_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = x.iter().zip(y).filter(|(_, y)| !y.is_nan()).map(|(&a, &b)| (a, b)).collect();
    if pts.len() < 3 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = pts.iter().map(|(a, _)| (a - mx).powi(2)).sum();
    Some(sxy / sxx)
}

fn mean_of_finite(v: &[f64]) -> f64 {
    let (s, c) = v.iter().filter(|x| !x.is_nan()).fold((0.0, 0usize), |(s, c), x| (s + x, c + 1));
    if c == 0 {
        f64::NAN
    } else {
        s / c as f64
    }
}

/// Yearly per-cell anomaly means and SDs, regressed on year.
pub fn trend_diagnostics(anom: &Field) -> Result<TrendReport> {
    let years = anom.calendar().full_years();
    if years.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "trend diagnostics need at least 3 full years, got {}",
            years.len()
        )));
    }
    let n = anom.n_cells();
    // per year: (cell means, cell SDs)
    let stats: Vec<(Vec<f64>, Vec<f64>)> = years
        .par_iter()
        .map(|(_, days)| {
            let mut sum = vec![0.0f64; n];
            let mut cnt = vec![0u32; n];
            for d in days.clone() {
                for (c, &v) in anom.day(d).iter().enumerate() {
                    if !v.is_nan() {
                        sum[c] += v as f64;
                        cnt[c] += 1;
                    }
                }
            }
            let means: Vec<f64> = sum
                .iter()
                .zip(&cnt)
                .map(|(&s, &c)| if c > 0 { s / c as f64 } else { f64::NAN })
                .collect();
            let mut ss = vec![0.0f64; n];
            for d in days.clone() {
                for (c, &v) in anom.day(d).iter().enumerate() {
                    if !v.is_nan() {
                        ss[c] += (v as f64 - means[c]).powi(2);
                    }
                }
            }
            let sds = ss
                .iter()
                .zip(&cnt)
                .map(|(&s, &c)| if c > 1 { (s / (c - 1) as f64).sqrt() } else { f64::NAN })
                .collect();
            (means, sds)
        })
        .collect();

    let year_x: Vec<f64> = years.iter().map(|(y, _)| *y as f64).collect();
    let cell_slopes = (0..n)
        .into_par_iter()
        .map(|c| {
            let ys: Vec<f64> = stats.iter().map(|(m, _)| m[c]).collect();
            ols_slope(&year_x, &ys).map(|s| 100.0 * s)
        })
        .collect();

    let summaries: Vec<YearSummary> = years
        .iter()
        .zip(&stats)
        .map(|((year, _), (means, sds))| YearSummary {
            year: *year,
            basin_mean: mean_of_finite(means),
            basin_sd: mean_of_finite(sds),
            mean_box: BoxSummary::of(means),
            sd_box: BoxSummary::of(sds),
        })
        .collect();
    let basin_means: Vec<f64> = summaries.iter().map(|s| s.basin_mean).collect();
    let basin_sds: Vec<f64> = summaries.iter().map(|s| s.basin_sd).collect();
    let slope = |y: &[f64]| ols_slope(&year_x, y).map(|s| 100.0 * s).unwrap_or(f64::NAN);
    Ok(TrendReport {
        cell_slopes,
        basin_mean_slope: slope(&basin_means),
        basin_sd_slope: slope(&basin_sds),
        years: summaries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use chrono::NaiveDate;
    use std::f64::consts::PI;

    fn years_calendar(first: i32, n: u32) -> Calendar {
        Calendar::years(first, n, crate::field::LeapPolicy::Gregorian).unwrap()
    }

    fn field_from(cal: &Calendar, n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Field {
        let mut values = Vec::with_capacity(n * cal.n_days());
        for d in 0..cal.n_days() {
            for c in 0..n {
                values.push(f(d, c) as f32);
            }
        }
        Field::new(n, cal.clone(), values).unwrap()
    }

    #[test]
    fn constant_field_gives_constant_mean() {
        let cal = years_calendar(2001, 2);
        let raw = Field::filled(3, cal, 27.25);
        let mean = estimate_mean(&raw).unwrap();
        for slot in active_cycle(raw.calendar()) {
            for c in 0..3 {
                assert!((mean.get(c, slot) - 27.25).abs() < 1e-12);
            }
        }
        assert!(mean.get(0, FEB29_SLOT).is_nan());
        assert!(mean.gaps().is_empty());
    }

    #[test]
    fn sinusoid_is_attenuated_by_boxcar_gain() {
        // two non-leap years, seasonal term on the 365-slot cycle
        let cal = years_calendar(2001, 2);
        let cycle = active_cycle(&cal);
        assert_eq!(cycle.len(), 365);
        let pos = |slot: usize| cycle.iter().position(|&s| s == slot).unwrap() as f64;
        let amp = 3.0;
        let raw = field_from(&cal, 2, |d, c| {
            amp * (2.0 * PI * pos(cal.doy_slot(d)) / 365.0 + c as f64).sin()
        });
        let mean = estimate_mean(&raw).unwrap();
        let gain = (7.0 * PI / 365.0).sin() / (7.0 * (PI / 365.0).sin());
        assert!((gain - 0.99940744463922769331).abs() < 1e-15);
        for &slot in &cycle {
            for c in 0..2 {
                let truth = amp * gain * (2.0 * PI * pos(slot) / 365.0 + c as f64).sin();
                // storage is f32
                assert!((mean.get(c, slot) - truth).abs() < 1e-6, "slot {slot}");
            }
        }
    }

    #[test]
    fn single_year_is_circular_moving_average() {
        let cal = years_calendar(2001, 1);
        let mut r = rng::stream(4, 4);
        let raw = field_from(&cal, 1, |_, _| rng::standard_normal(&mut r));
        let step1 = daily_means(&raw);
        let data: Vec<f64> = raw.series(0).iter().map(|&v| v as f64).collect();
        for d in 0..365 {
            assert_eq!(step1.get(0, cal.doy_slot(d)), data[d]);
        }
        let mean = estimate_mean(&raw).unwrap();
        for d in 0..365usize {
            let oracle: f64 = (0..7).map(|k| data[(d + 365 + k - 3) % 365]).sum::<f64>() / 7.0;
            assert!((mean.get(0, cal.doy_slot(d)) - oracle).abs() < 1e-12);
        }
    }

    #[test]
    fn feb29_is_its_own_group() {
        let cal = years_calendar(2003, 2); // 2004 is leap
        let raw = field_from(&cal, 1, |d, _| {
            let date = cal.date(d);
            if chrono::Datelike::month(&date) == 2 && chrono::Datelike::day(&date) == 29 {
                100.0
            } else {
                1.0
            }
        });
        let step1 = daily_means(&raw);
        assert_eq!(step1.get(0, FEB29_SLOT), 100.0);
        assert_eq!(step1.get(0, FEB29_SLOT - 1), 1.0);
        assert_eq!(step1.get(0, FEB29_SLOT + 1), 1.0);
        assert_eq!(active_cycle(&cal).len(), 366);
    }

    #[test]
    fn gaps_are_flagged_and_block_anomalies() {
        let cal = years_calendar(2001, 1);
        let mut raw = Field::filled(2, cal.clone(), 5.0);
        let jan10 = cal.day_index(NaiveDate::from_ymd_opt(2001, 1, 10).unwrap()).unwrap();
        raw.set(jan10, 1, f32::NAN);
        let mean = estimate_mean(&raw).unwrap();
        assert_eq!(mean.gaps(), &[(1, 9)]);
        assert!(mean.get(1, 9).is_nan());
        assert_eq!(mean.get(1, 10), 5.0);

        // the gap is harmless where the data is missing too
        let anom = compute_anomaly(&raw, &mean).unwrap();
        assert!(anom.get(jan10, 1).is_nan());
        // but fatal for a field observed on that day
        let full = Field::filled(2, cal, 5.0);
        match compute_anomaly(&full, &mean) {
            Err(Error::EstimationGap(g)) => assert_eq!(g, vec![(1, 9)]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn anomaly_of_the_mean_is_zero_and_linear() {
        let cal = years_calendar(2001, 2);
        let mean = MeanSurface::from_fn(3, |c, s| 20.0 + c as f64 + (s as f64 / 50.0).sin());
        let raw = field_from(&cal, 3, |d, c| mean.get(c, cal.doy_slot(d)));
        let anom = compute_anomaly(&raw, &mean).unwrap();
        assert!(anom.values().iter().all(|v| v.abs() < 1e-5));

        let shifted = field_from(&cal, 3, |d, c| mean.get(c, cal.doy_slot(d)) + 0.75);
        let anom2 = compute_anomaly(&shifted, &mean).unwrap();
        for (a, b) in anom.values().iter().zip(anom2.values()) {
            assert!((b - a - 0.75).abs() < 1e-5);
        }
    }

    #[test]
    fn missingness_is_preserved() {
        let cal = years_calendar(2001, 2);
        let mut r = rng::stream(9, 1);
        let raw = field_from(&cal, 4, |_, _| {
            if rng::open_unit(&mut r) < 0.2 {
                f64::NAN
            } else {
                25.0 + rng::standard_normal(&mut r)
            }
        });
        let mean = estimate_mean(&raw).unwrap();
        let anom = compute_anomaly(&raw, &mean).unwrap();
        for (a, y) in anom.values().iter().zip(raw.values()) {
            assert_eq!(a.is_nan(), y.is_nan());
        }
    }

    #[test]
    fn unsmoothed_group_anomalies_sum_to_zero() {
        let cal = years_calendar(2001, 3);
        let mut r = rng::stream(11, 2);
        let raw = field_from(&cal, 2, |_, _| {
            if rng::open_unit(&mut r) < 0.1 {
                f64::NAN
            } else {
                28.0 + 2.0 * rng::standard_normal(&mut r)
            }
        });
        let step1 = daily_means(&raw);
        let mut sums = vec![0.0f64; DOY_SLOTS * 2];
        for d in 0..raw.n_days() {
            let s = cal.doy_slot(d);
            for c in 0..2 {
                let y = raw.get(d, c);
                if !y.is_nan() {
                    sums[s * 2 + c] += y as f64 - step1.get(c, s);
                }
            }
        }
        assert!(sums.iter().all(|s| s.abs() < 1e-9));
    }

    #[test]
    fn white_noise_anomalies_center_on_zero() {
        let cal = years_calendar(2001, 6);
        let sigma = 0.8;
        let mut r = rng::stream(12, 3);
        let raw = field_from(&cal, 3, |d, c| {
            26.0 + c as f64 + 2.0 * (d as f64 * 2.0 * PI / 365.25).cos() + sigma * rng::standard_normal(&mut r)
        });
        let anom = compute_anomaly(&raw, &estimate_mean(&raw).unwrap()).unwrap();
        let t = cal.n_days() as f64;
        for c in 0..3 {
            let m = anom.series(c).iter().map(|&v| v as f64).sum::<f64>() / t;
            assert!(m.abs() < 4.0 * sigma / t.sqrt(), "cell {c}: {m}");
        }
    }

    #[test]
    fn trend_recovery_in_mean_and_sd() {
        let cal = years_calendar(1990, 30);
        let mut r = rng::stream(21, 0);
        let n = 40;
        let y0 = 1990.0;
        // +2 °C/century in the mean, -0.5 °C/century in the SD
        let anom = field_from(&cal, n, |d, _| {
            let year = chrono::Datelike::year(&cal.date(d)) as f64;
            let yrs = year - y0;
            let sd = 0.8 - 0.005 * yrs;
            0.02 * yrs + sd * rng::standard_normal(&mut r)
        });
        let rep = trend_diagnostics(&anom).unwrap();
        assert!((rep.basin_mean_slope - 2.0).abs() < 0.1, "{}", rep.basin_mean_slope);
        assert!((rep.basin_sd_slope + 0.5).abs() < 0.1, "{}", rep.basin_sd_slope);
        assert_eq!(rep.years.len(), 30);
        for y in &rep.years {
            let b = y.mean_box.unwrap();
            assert!(b.min <= b.q1 && b.q1 <= b.median && b.median <= b.q3 && b.q3 <= b.max);
        }
        assert!(rep.cell_slopes.iter().all(|s| s.is_some()));
        assert!(rep.cell_slopes_csv().starts_with("cell_id,slope_c_per_century\n0,"));
    }

    #[test]
    fn trend_needs_three_years_and_flags_sparse_cells() {
        let short = Field::filled(1, years_calendar(2001, 2), 0.0);
        assert!(trend_diagnostics(&short).is_err());
        let cal = years_calendar(2001, 4);
        let anom = field_from(&cal, 2, |d, c| {
            if c == 1 && chrono::Datelike::year(&cal.date(d)) > 2002 {
                f64::NAN
            } else {
                0.0
            }
        });
        let rep = trend_diagnostics(&anom).unwrap();
        assert_eq!(rep.cell_slopes[0], Some(0.0));
        assert_eq!(rep.cell_slopes[1], None);
    }

    #[test]
    fn zero_trend_noise_has_small_slope() {
        let cal = years_calendar(2001, 10);
        let mut r = rng::stream(33, 0);
        let anom = field_from(&cal, 20, |_, _| 0.5 * rng::standard_normal(&mut r));
        let rep = trend_diagnostics(&anom).unwrap();
        // SE of the basin slope: 0.5/sqrt(365*20) / sqrt(sum (x - xbar)^2) per year
        let se = 100.0 * 0.5 / (365.0f64 * 20.0).sqrt() / 82.5f64.sqrt();
        assert!(rep.basin_mean_slope.abs() < 4.0 * se, "{} vs {se}", rep.basin_mean_slope);
    }

    #[test]
    fn surface_field_round_trip() {
        let cal = years_calendar(2001, 1);
        let mut raw = Field::filled(2, cal, 3.5);
        raw.set(40, 0, f32::NAN);
        let mean = estimate_mean(&raw).unwrap();
        let back = MeanSurface::from_field(&mean.to_field()).unwrap();
        assert_eq!(back.gaps(), mean.gaps());
        assert_eq!(back.get(1, 100), 3.5);
    }
}
