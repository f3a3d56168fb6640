//! Competition calendar and day-major gridded fields.
//!
//! A [`Field`] stores `T × S` single-precision values, one row of `S` cells
//! per day. Missing values are quiet NaNs. All arithmetic downstream is done
//! in `f64`.
//!
//! The `XTFD` file layout (all little-endian):
//!
//! ```text
//! magic   b"XTFD"
//! version u32 = 1
//! S       u32
//! T       u32
//! epoch   i64   start date as days since 1970-01-01
//! values  T blocks of S f32, day-major
//! ```

use std::io::Write;
use std::path::Path;

use chrono::{Datelike, NaiveDate};

use crate::error::{Error, Result};

pub const FIELD_MAGIC: &[u8; 4] = b"XTFD";
pub const FIELD_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 4 + 4 + 8;

/// Number of day-of-year slots; slot 59 is Feb 29.
pub const DOY_SLOTS: usize = 366;
pub const FEB29_SLOT: usize = 59;

const CUMULATIVE_LEAP_DAYS: [usize; 12] = [0, 31, 60, 91, 121, 152, 182, 213, 244, 274, 305, 335];

fn unix_epoch() -> NaiveDate {
    NaiveDate::from_ymd_opt(1970, 1, 1).unwrap()
}

/// Zero-based day-of-year slot keyed by (month, day) on a leap-year template.
pub fn doy_slot(date: NaiveDate) -> usize {
    CUMULATIVE_LEAP_DAYS[date.month0() as usize] + date.day0() as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LeapPolicy {
    /// Every calendar day, Feb 29 included.
    Gregorian,
    /// 365-day years; Feb 29 is skipped. Not representable in `XTFD` headers.
    NoLeap,
}

/// Consecutive days from `start`.
///
/// Day indices are zero-based throughout the crate; [`Calendar::date_to_t`]
/// and [`Calendar::t_to_date`] expose the one-based `t` convention.
#[derive(Debug, Clone)]
pub struct Calendar {
    start: NaiveDate,
    policy: LeapPolicy,
    dates: Vec<NaiveDate>,
    month_of_day: Vec<u32>,
    month_starts: Vec<usize>,
}

impl PartialEq for Calendar {
    fn eq(&self, other: &Self) -> bool {
        self.start == other.start && self.policy == other.policy && self.dates.len() == other.dates.len()
    }
}

impl Eq for Calendar {}

impl Calendar {
    pub fn new(start: NaiveDate, n_days: usize) -> Result<Self> {
        Self::with_policy(start, n_days, LeapPolicy::Gregorian)
    }

    pub fn with_policy(start: NaiveDate, n_days: usize, policy: LeapPolicy) -> Result<Self> {
        if n_days == 0 {
            return Err(Error::InvalidArgument("calendar needs at least one day".into()));
        }
        if policy == LeapPolicy::NoLeap && start.month() == 2 && start.day() == 29 {
            return Err(Error::InvalidArgument("no-leap calendar cannot start on Feb 29".into()));
        }
        let mut dates = Vec::with_capacity(n_days);
        let mut d = start;
        while dates.len() < n_days {
            if !(policy == LeapPolicy::NoLeap && d.month() == 2 && d.day() == 29) {
                dates.push(d);
            }
            d = d
                .succ_opt()
                .ok_or_else(|| Error::InvalidArgument("calendar overflows the date range".into()))?;
        }
        let mut month_of_day = Vec::with_capacity(n_days);
        let mut month_starts = vec![0];
        for (i, d) in dates.iter().enumerate() {
            if i > 0 && (d.year(), d.month()) != (dates[i - 1].year(), dates[i - 1].month()) {
                month_starts.push(i);
            }
            month_of_day.push((month_starts.len() - 1) as u32);
        }
        month_starts.push(n_days);
        Ok(Calendar {
            start,
            policy,
            dates,
            month_of_day,
            month_starts,
        })
    }

    /// Whole calendar years `first_year ..= first_year + n_years - 1`.
    pub fn years(first_year: i32, n_years: u32, policy: LeapPolicy) -> Result<Self> {
        let start = NaiveDate::from_ymd_opt(first_year, 1, 1)
            .ok_or_else(|| Error::InvalidArgument(format!("bad year {first_year}")))?;
        let end = NaiveDate::from_ymd_opt(first_year + n_years as i32, 1, 1)
            .ok_or_else(|| Error::InvalidArgument("bad year span".into()))?;
        let mut n = (end - start).num_days() as usize;
        if policy == LeapPolicy::NoLeap {
            n -= (first_year..first_year + n_years as i32)
                .filter(|&y| NaiveDate::from_ymd_opt(y, 2, 29).is_some())
                .count();
        }
        Self::with_policy(start, n, policy)
    }

    pub fn start(&self) -> NaiveDate {
        self.start
    }

    pub fn end(&self) -> NaiveDate {
        *self.dates.last().unwrap()
    }

    pub fn policy(&self) -> LeapPolicy {
        self.policy
    }

    pub fn n_days(&self) -> usize {
        self.dates.len()
    }

    pub fn n_months(&self) -> usize {
        self.month_starts.len() - 1
    }

    pub fn date(&self, day: usize) -> NaiveDate {
        self.dates[day]
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn month_of_day(&self, day: usize) -> usize {
        self.month_of_day[day] as usize
    }

    /// Day range of zero-based month `month`.
    pub fn month_days(&self, month: usize) -> std::ops::Range<usize> {
        self.month_starts[month]..self.month_starts[month + 1]
    }

    pub fn doy_slot(&self, day: usize) -> usize {
        doy_slot(self.dates[day])
    }

    pub fn day_index(&self, date: NaiveDate) -> Result<usize> {
        let out_of_range = || Error::DateOutOfRange {
            date,
            start: self.start,
            end: self.end(),
        };
        if date < self.start || date > self.end() {
            return Err(out_of_range());
        }
        match self.policy {
            LeapPolicy::Gregorian => Ok((date - self.start).num_days() as usize),
            LeapPolicy::NoLeap => self.dates.binary_search(&date).map_err(|_| out_of_range()),
        }
    }

    /// One-based `t` with `t(start) = 1`.
    pub fn date_to_t(&self, date: NaiveDate) -> Result<usize> {
        self.day_index(date).map(|d| d + 1)
    }

    pub fn t_to_date(&self, t: usize) -> Result<NaiveDate> {
        if t == 0 || t > self.n_days() {
            return Err(Error::InvalidArgument(format!("t = {t} outside 1..={}", self.n_days())));
        }
        Ok(self.dates[t - 1])
    }

    pub fn epoch_day(&self) -> i64 {
        (self.start - unix_epoch()).num_days()
    }

    pub fn has_feb29(&self) -> bool {
        self.dates.iter().any(|d| d.month() == 2 && d.day() == 29)
    }

    /// Calendar years fully covered by this calendar, with their day ranges.
    pub fn full_years(&self) -> Vec<(i32, std::ops::Range<usize>)> {
        let mut out = Vec::new();
        let mut i = 0;
        while i < self.dates.len() {
            let y = self.dates[i].year();
            let mut j = i;
            while j < self.dates.len() && self.dates[j].year() == y {
                j += 1;
            }
            let first = self.dates[i];
            let last = self.dates[j - 1];
            if first.ordinal() == 1 && last.month() == 12 && last.day() == 31 {
                out.push((y, i..j));
            }
            i = j;
        }
        out
    }
}

/// `T × S` values in day-major order, NaN for missing.
#[derive(Debug, Clone)]
pub struct Field {
    n_cells: usize,
    calendar: Calendar,
    values: Vec<f32>,
}

impl PartialEq for Field {
    /// Bitwise comparison, so NaN markers compare equal to themselves.
    fn eq(&self, other: &Self) -> bool {
        self.n_cells == other.n_cells
            && self.calendar == other.calendar
            && self.values.len() == other.values.len()
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

impl Field {
    pub fn new(n_cells: usize, calendar: Calendar, values: Vec<f32>) -> Result<Self> {
        let expected = n_cells * calendar.n_days();
        if values.len() != expected {
            return Err(Error::DimensionMismatch(format!(
                "{} values for {} cells x {} days",
                values.len(),
                n_cells,
                calendar.n_days()
            )));
        }
        Ok(Field {
            n_cells,
            calendar,
            values,
        })
    }

    pub fn filled(n_cells: usize, calendar: Calendar, value: f32) -> Self {
        let values = vec![value; n_cells * calendar.n_days()];
        Field {
            n_cells,
            calendar,
            values,
        }
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn n_days(&self) -> usize {
        self.calendar.n_days()
    }

    pub fn calendar(&self) -> &Calendar {
        &self.calendar
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f32] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    pub fn get(&self, day: usize, cell: usize) -> f32 {
        self.values[day * self.n_cells + cell]
    }

    pub fn set(&mut self, day: usize, cell: usize, v: f32) {
        self.values[day * self.n_cells + cell] = v;
    }

    pub fn day(&self, day: usize) -> &[f32] {
        &self.values[day * self.n_cells..(day + 1) * self.n_cells]
    }

    pub fn day_mut(&mut self, day: usize) -> &mut [f32] {
        &mut self.values[day * self.n_cells..(day + 1) * self.n_cells]
    }

    /// Values of one cell over time (strided gather).
    pub fn series(&self, cell: usize) -> Vec<f32> {
        self.values.iter().skip(cell).step_by(self.n_cells).copied().collect()
    }

    pub fn missing_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_nan()).count()
    }

    /// Errors unless `other` lives on the same grid size and calendar.
    pub fn check_same_domain(&self, other: &Field) -> Result<()> {
        if self.n_cells != other.n_cells || self.calendar != other.calendar {
            return Err(Error::DimensionMismatch(format!(
                "field {}x{} from {} vs field {}x{} from {}",
                self.n_days(),
                self.n_cells,
                self.calendar.start(),
                other.n_days(),
                other.n_cells,
                other.calendar.start()
            )));
        }
        Ok(())
    }

    /// Checks finite values lie in `[lo, hi]`.
    pub fn check_bounds(&self, lo: f32, hi: f32) -> Result<()> {
        if let Some((i, v)) = self
            .values
            .iter()
            .enumerate()
            .find(|(_, v)| v.is_finite() && !(lo..=hi).contains(*v) || v.is_infinite())
        {
            return Err(Error::InvalidArgument(format!(
                "value {v} at day {} cell {} outside [{lo}, {hi}]",
                i / self.n_cells,
                i % self.n_cells
            )));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        if self.calendar.policy() != LeapPolicy::Gregorian {
            return Err(Error::InvalidArgument(
                "XTFD headers only describe Gregorian calendars".into(),
            ));
        }
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * self.values.len());
        out.extend_from_slice(FIELD_MAGIC);
        out.extend_from_slice(&FIELD_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.n_cells as u32).to_le_bytes());
        out.extend_from_slice(&(self.n_days() as u32).to_le_bytes());
        out.extend_from_slice(&self.calendar.epoch_day().to_le_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_bits().to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::format("XTFD", format!("truncated header ({} bytes)", bytes.len())));
        }
        if &bytes[0..4] != FIELD_MAGIC {
            return Err(Error::format("XTFD", "bad magic"));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let version = u32_at(4);
        if version != FIELD_VERSION {
            return Err(Error::format("XTFD", format!("unsupported version {version}")));
        }
        let n_cells = u32_at(8) as usize;
        let n_days = u32_at(12) as usize;
        let epoch = i64::from_le_bytes(bytes[16..24].try_into().unwrap());
        let payload = &bytes[HEADER_LEN..];
        let expected = n_cells
            .checked_mul(n_days)
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| Error::format("XTFD", "dimensions overflow"))?;
        if payload.len() < expected {
            return Err(Error::format(
                "XTFD",
                format!("truncated payload: {} of {expected} bytes", payload.len()),
            ));
        }
        if payload.len() > expected {
            return Err(Error::format("XTFD", "trailing bytes after payload"));
        }
        let start = unix_epoch()
            .checked_add_signed(chrono::TimeDelta::days(epoch))
            .ok_or_else(|| Error::format("XTFD", format!("epoch day {epoch} out of range")))?;
        let calendar = Calendar::new(start, n_days)?;
        let values = payload
            .chunks_exact(4)
            .map(|c| f32::from_bits(u32::from_le_bytes(c.try_into().unwrap())))
            .collect();
        Field::new(n_cells, calendar, values)
    }
}

pub fn write_field(field: &Field, path: &Path) -> Result<()> {
    let bytes = field.to_bytes()?;
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn read_field(path: &Path) -> Result<Field> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Field::from_bytes(&bytes)
}

/// Reads a field and checks it against an expected cell count and calendar.
pub fn read_field_checked(path: &Path, n_cells: Option<usize>, calendar: Option<&Calendar>) -> Result<Field> {
    let field = read_field(path)?;
    if let Some(s) = n_cells {
        if field.n_cells() != s {
            return Err(Error::DimensionMismatch(format!(
                "{}: {} cells, grid has {s}",
                path.display(),
                field.n_cells()
            )));
        }
    }
    if let Some(cal) = calendar {
        if field.calendar() != cal {
            return Err(Error::DimensionMismatch(format!(
                "{}: calendar {}+{} days, expected {}+{} days",
                path.display(),
                field.calendar().start(),
                field.n_days(),
                cal.start(),
                cal.n_days()
            )));
        }
    }
    Ok(field)
}
