//! Run configuration: flat `key = value` text with dotted keys.
//!
//! Lines starting with `#` and blank lines are ignored. Every key has a
//! default, so an empty file is a valid configuration. Later assignments win,
//! which is how `--set` overrides the file.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::NaiveDate;
use sha2::{Digest, Sha256};
use sstx_core::evaluation::SUBMISSION_WIDTH;
use sstx_core::mask::{AlphaConfig, ValidationConfig};
use sstx_core::{CovarianceSpec, CylinderSpec, DesignGrid, NaMode, SynthConfig, WeightSpec};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("line {line}: expected `key = value`, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("bad value for `{key}`: {value:?} ({reason})")]
    BadValue {
        key: String,
        value: String,
        reason: String,
    },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub raw: (f32, f32),
    pub anomaly: (f32, f32),
}

impl Default for Bounds {
    fn default() -> Self {
        Bounds {
            raw: (-10.0, 50.0),
            anomaly: (-10.0, 10.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub workdir: PathBuf,
    pub grid_input: Option<PathBuf>,
    pub raw_input: Option<PathBuf>,
    pub seed: u64,
    pub threads: Option<usize>,
    pub synth: SynthConfig,
    pub mask_cov: CovarianceSpec,
    pub alpha: AlphaConfig,
    pub validation: ValidationConfig,
    pub cylinder: CylinderSpec,
    pub truth_na_mode: NaMode,
    pub weight: WeightSpec,
    pub design: DesignGrid,
    pub bounds: Bounds,
    pub summary_bin_width: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            workdir: PathBuf::from("."),
            grid_input: None,
            raw_input: None,
            seed: 2019,
            threads: None,
            synth: SynthConfig::default(),
            mask_cov: CovarianceSpec::default(),
            alpha: AlphaConfig::default(),
            validation: ValidationConfig::default(),
            cylinder: CylinderSpec::default(),
            truth_na_mode: NaMode::IgnoreMissing,
            weight: WeightSpec::default(),
            design: DesignGrid::default(),
            bounds: Bounds::default(),
            summary_bin_width: 0.1,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::BadValue {
        key: key.to_string(),
        value: value.to_string(),
        reason: e.to_string(),
    })
}

fn parse_date(key: &str, value: &str) -> Result<NaiveDate, ConfigError> {
    NaiveDate::parse_from_str(value, "%Y-%m-%d").map_err(|e| ConfigError::BadValue {
        key: key.to_string(),
        value: value.to_string(),
        reason: e.to_string(),
    })
}

fn parse_na_mode(key: &str, value: &str) -> Result<NaMode, ConfigError> {
    match value {
        "ignore_missing" => Ok(NaMode::IgnoreMissing),
        "require_complete" => Ok(NaMode::RequireComplete),
        _ => Err(ConfigError::BadValue {
            key: key.to_string(),
            value: value.to_string(),
            reason: "expected ignore_missing or require_complete".into(),
        }),
    }
}

fn na_mode_name(m: NaMode) -> &'static str {
    match m {
        NaMode::IgnoreMissing => "ignore_missing",
        NaMode::RequireComplete => "require_complete",
    }
}

fn set_cov(cov: &mut CovarianceSpec, field: &str, key: &str, value: &str) -> Result<bool, ConfigError> {
    match field {
        "family" => cov.family = parse(key, value)?,
        "range_km" => cov.range_km = parse(key, value)?,
        "nugget" => cov.nugget = parse(key, value)?,
        _ => return Ok(false),
    }
    Ok(true)
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = RunConfig::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: i + 1,
                text: line.to_string(),
            })?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    /// `key=value` as given on the command line.
    pub fn apply_assignment(&mut self, assignment: &str) -> Result<(), ConfigError> {
        let (k, v) = assignment.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line: 0,
            text: assignment.to_string(),
        })?;
        self.set(k.trim(), v.trim())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let s = &mut self.synth;
        match key {
            "workdir" => self.workdir = PathBuf::from(value),
            "input.grid" => self.grid_input = Some(PathBuf::from(value)),
            "input.raw" => self.raw_input = Some(PathBuf::from(value)),
            "seed" => self.seed = parse(key, value)?,
            "threads" => self.threads = Some(parse(key, value)?),

            "synth.rows" => s.rows = parse(key, value)?,
            "synth.cols" => s.cols = parse(key, value)?,
            "synth.origin_lon" => s.origin_lon = parse(key, value)?,
            "synth.origin_lat" => s.origin_lat = parse(key, value)?,
            "synth.spacing_deg" => s.spacing_deg = parse(key, value)?,
            "synth.start_year" => s.start_year = parse(key, value)?,
            "synth.years" => s.years = parse(key, value)?,
            "synth.base_temp" => s.base_temp = parse(key, value)?,
            "synth.seasonal_amplitude" => s.seasonal_amplitude = parse(key, value)?,
            "synth.seasonal_peak" => s.seasonal_peak = parse(key, value)?,
            "synth.meridional_gradient" => s.meridional_gradient = parse(key, value)?,
            "synth.trend_per_century" => s.trend_per_century = parse(key, value)?,
            "synth.anomaly_sd" => s.anomaly_sd = parse(key, value)?,
            "synth.ar_phi" => s.ar_phi = parse(key, value)?,

            "mask.alpha_early" => self.alpha.alpha_early = parse(key, value)?,
            "mask.alpha_late" => self.alpha.alpha_late = parse(key, value)?,
            "mask.split_date" => self.alpha.split_date = parse_date(key, value)?,

            "validation.n_per_day" => self.validation.n_per_day = parse(key, value)?,
            "validation.days_of_month" => {
                self.validation.days_of_month = value
                    .split(',')
                    .map(|d| parse::<u32>(key, d.trim()))
                    .collect::<Result<_, _>>()?
            }
            "validation.period_start" => self.validation.period_start = parse_date(key, value)?,
            "validation.period_end" => self.validation.period_end = parse_date(key, value)?,
            "validation.reuse_locations_within_month" => {
                self.validation.reuse_locations_within_month = parse(key, value)?
            }

            "cylinder.radius_km" => self.cylinder.radius_km = parse(key, value)?,
            "cylinder.half_window_days" => self.cylinder.half_window_days = parse(key, value)?,
            "truth.na_mode" => self.truth_na_mode = parse_na_mode(key, value)?,

            "weight.center" => self.weight.center = parse(key, value)?,
            "weight.scale" => self.weight.scale = parse(key, value)?,
            "weight.threshold" => self.weight.threshold = parse(key, value)?,

            "design.lower" => self.design.lower = parse(key, value)?,
            "design.upper" => self.design.upper = parse(key, value)?,
            "design.n" => self.design.n = parse(key, value)?,

            "bounds.raw_min" => self.bounds.raw.0 = parse(key, value)?,
            "bounds.raw_max" => self.bounds.raw.1 = parse(key, value)?,
            "bounds.anomaly_min" => self.bounds.anomaly.0 = parse(key, value)?,
            "bounds.anomaly_max" => self.bounds.anomaly.1 = parse(key, value)?,

            "summary.bin_width" => self.summary_bin_width = parse(key, value)?,

            _ => {
                let handled = if let Some(f) = key.strip_prefix("mask.cov.") {
                    set_cov(&mut self.mask_cov, f, key, value)?
                } else if let Some(f) = key.strip_prefix("synth.cov.") {
                    set_cov(&mut self.synth.anomaly_cov, f, key, value)?
                } else {
                    false
                };
                if !handled {
                    return Err(ConfigError::UnknownKey(key.to_string()));
                }
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |e: sstx_core::Error| ConfigError::Invalid(e.to_string());
        let mut synth = self.synth.clone();
        synth.seed = self.seed;
        synth.validate().map_err(invalid)?;
        self.mask_cov.validate().map_err(invalid)?;
        self.weight.validate().map_err(invalid)?;
        DesignGrid::new(self.design.lower, self.design.upper, self.design.n).map_err(invalid)?;
        if self.design.n != SUBMISSION_WIDTH {
            return Err(ConfigError::Invalid(format!(
                "design.n must be {SUBMISSION_WIDTH}, the submission row width"
            )));
        }
        for (name, a) in [("mask.alpha_early", self.alpha.alpha_early), ("mask.alpha_late", self.alpha.alpha_late)] {
            if !(0.0..=1.0).contains(&a) {
                return Err(ConfigError::Invalid(format!("{name} = {a} outside [0, 1]")));
            }
        }
        let v = &self.validation;
        if v.period_end < v.period_start {
            return Err(ConfigError::Invalid("validation.period_end precedes period_start".into()));
        }
        if v.days_of_month.iter().any(|&d| !(1..=31).contains(&d)) {
            return Err(ConfigError::Invalid("validation.days_of_month entries must be in 1..=31".into()));
        }
        if !(self.cylinder.radius_km >= 0.0) {
            return Err(ConfigError::Invalid("cylinder.radius_km must be >= 0".into()));
        }
        if !(self.summary_bin_width > 0.0) {
            return Err(ConfigError::Invalid("summary.bin_width must be > 0".into()));
        }
        if self.threads == Some(0) {
            return Err(ConfigError::Invalid("threads must be >= 1".into()));
        }
        Ok(())
    }

    /// Synthetic generator settings with the run seed applied.
    pub fn synth_config(&self) -> SynthConfig {
        SynthConfig {
            seed: self.seed,
            ..self.synth.clone()
        }
    }

    /// Every setting that can influence an artifact, one `key = value` per
    /// line in a fixed order. Paths and thread count are excluded.
    pub fn canonical(&self) -> String {
        let s = &self.synth;
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        let cov = |c: &CovarianceSpec| (c.family.to_string(), c.range_km, c.nugget);
        kv("seed", self.seed.to_string());
        kv("synth.rows", s.rows.to_string());
        kv("synth.cols", s.cols.to_string());
        kv("synth.origin_lon", format!("{:?}", s.origin_lon));
        kv("synth.origin_lat", format!("{:?}", s.origin_lat));
        kv("synth.spacing_deg", format!("{:?}", s.spacing_deg));
        kv("synth.start_year", s.start_year.to_string());
        kv("synth.years", s.years.to_string());
        kv("synth.base_temp", format!("{:?}", s.base_temp));
        kv("synth.seasonal_amplitude", format!("{:?}", s.seasonal_amplitude));
        kv("synth.seasonal_peak", format!("{:?}", s.seasonal_peak));
        kv("synth.meridional_gradient", format!("{:?}", s.meridional_gradient));
        kv("synth.trend_per_century", format!("{:?}", s.trend_per_century));
        kv("synth.anomaly_sd", format!("{:?}", s.anomaly_sd));
        let (f, r, n) = cov(&s.anomaly_cov);
        kv("synth.cov.family", f);
        kv("synth.cov.range_km", format!("{r:?}"));
        kv("synth.cov.nugget", format!("{n:?}"));
        kv("synth.ar_phi", format!("{:?}", s.ar_phi));
        let (f, r, n) = cov(&self.mask_cov);
        kv("mask.cov.family", f);
        kv("mask.cov.range_km", format!("{r:?}"));
        kv("mask.cov.nugget", format!("{n:?}"));
        kv("mask.alpha_early", format!("{:?}", self.alpha.alpha_early));
        kv("mask.alpha_late", format!("{:?}", self.alpha.alpha_late));
        kv("mask.split_date", self.alpha.split_date.to_string());
        let v = &self.validation;
        kv("validation.n_per_day", v.n_per_day.to_string());
        kv(
            "validation.days_of_month",
            v.days_of_month.iter().map(u32::to_string).collect::<Vec<_>>().join(","),
        );
        kv("validation.period_start", v.period_start.to_string());
        kv("validation.period_end", v.period_end.to_string());
        kv("validation.reuse_locations_within_month", v.reuse_locations_within_month.to_string());
        kv("cylinder.radius_km", format!("{:?}", self.cylinder.radius_km));
        kv("cylinder.half_window_days", self.cylinder.half_window_days.to_string());
        kv("truth.na_mode", na_mode_name(self.truth_na_mode).to_string());
        kv("weight.center", format!("{:?}", self.weight.center));
        kv("weight.scale", format!("{:?}", self.weight.scale));
        kv("weight.threshold", format!("{:?}", self.weight.threshold));
        kv("design.lower", format!("{:?}", self.design.lower));
        kv("design.upper", format!("{:?}", self.design.upper));
        kv("design.n", self.design.n.to_string());
        kv("bounds.raw_min", format!("{:?}", self.bounds.raw.0));
        kv("bounds.raw_max", format!("{:?}", self.bounds.raw.1));
        kv("bounds.anomaly_min", format!("{:?}", self.bounds.anomaly.0));
        kv("bounds.anomaly_max", format!("{:?}", self.bounds.anomaly.1));
        kv("summary.bin_width", format!("{:?}", self.summary_bin_width));
        out
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use sstx_core::CovarianceFamily;

    #[test]
    fn empty_text_is_default() {
        let mut c = RunConfig::default();
        c.apply_text("\n# nothing\n   \n").unwrap();
        assert_eq!(c, RunConfig::default());
        c.validate().unwrap();
    }

    #[test]
    fn dotted_keys_are_applied() {
        let mut c = RunConfig::default();
        c.apply_text(
            "mask.cov.family = gaussian\nmask.cov.range_km=150\nvalidation.days_of_month = 1, 10\n\
             mask.split_date = 2010-06-01\ntruth.na_mode = require_complete\nseed = 7\n",
        )
        .unwrap();
        assert_eq!(c.mask_cov.family, CovarianceFamily::Gaussian);
        assert_eq!(c.mask_cov.range_km, 150.0);
        assert_eq!(c.validation.days_of_month, vec![1, 10]);
        assert_eq!(c.alpha.split_date, NaiveDate::from_ymd_opt(2010, 6, 1).unwrap());
        assert_eq!(c.truth_na_mode, NaMode::RequireComplete);
        assert_eq!(c.seed, 7);
        assert_eq!(c.synth_config().seed, 7);
    }

    #[test]
    fn later_assignment_wins() {
        let mut c = RunConfig::default();
        c.apply_text("seed = 1\n").unwrap();
        c.apply_assignment("seed=2").unwrap();
        assert_eq!(c.seed, 2);
    }

    #[test]
    fn errors_are_specific() {
        let mut c = RunConfig::default();
        assert!(matches!(c.apply_text("seed 3"), Err(ConfigError::Syntax { line: 1, .. })));
        assert!(matches!(c.set("mask.colour", "red"), Err(ConfigError::UnknownKey(_))));
        assert!(matches!(c.set("mask.cov.nope", "1"), Err(ConfigError::UnknownKey(_))));
        assert!(matches!(c.set("seed", "-1"), Err(ConfigError::BadValue { .. })));
        assert!(matches!(c.set("mask.split_date", "2007/01/01"), Err(ConfigError::BadValue { .. })));
        c.set("mask.alpha_late", "1.5").unwrap();
        assert!(matches!(c.validate(), Err(ConfigError::Invalid(_))));
        let mut c = RunConfig::default();
        c.set("design.n", "200").unwrap();
        assert!(c.validate().is_err());
    }

    #[test]
    fn canonical_round_trips_through_the_parser() {
        let mut a = RunConfig::default();
        a.apply_text("synth.cov.nugget = 0.1\nweight.center = 1.25\nvalidation.reuse_locations_within_month = true\n")
            .unwrap();
        let mut b = RunConfig::default();
        b.apply_text(&a.canonical()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.hash(), b.hash());
    }

    #[test]
    fn hash_ignores_paths_and_threads() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.set("workdir", "/elsewhere").unwrap();
        b.set("threads", "3").unwrap();
        assert_eq!(a.hash(), b.hash());
        b.set("seed", "1").unwrap();
        assert_ne!(a.hash(), b.hash());
    }
}
