//! Threshold-weighted CRPS on a fixed design grid, submission handling and
//! the leaderboard.
//!
//! A predictive CDF is a vector of values at the design points
//! `x^k = lower + k·Δ`, `k = 1..=n`. Its score against an observation `x` is
//!
//! ```text
//! twCRPS = Δ · Σ_k (F(x^k) − 1{x ≤ x^k})² · w(x^k),   w(x) = Φ((x − center)/scale)
//! ```
//!
//! Submissions are either `XTSB` binary files or CSV:
//!
//! ```text
//! magic    b"XTSB"
//! version  u32 = 1
//! n_points u32
//! rows     n_points × 400 f32, ascending point_id (little-endian)
//! ```
//!
//! An unreadable or inconsistent submission is not an error: it is scored
//! `+∞` and ranked last.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::min_process::Truth;
use crate::normal;

pub const SUBMISSION_MAGIC: &[u8; 4] = b"XTSB";
pub const SUBMISSION_VERSION: u32 = 1;
/// Row width of the submission formats.
pub const SUBMISSION_WIDTH: usize = 400;
/// Values this close outside `[0, 1]` are clamped instead of rejected.
pub const CLAMP_TOLERANCE: f64 = 1e-9;
/// Leaderboard display convention: `10⁴ × mean twCRPS`.
pub const DISPLAY_SCALE: f64 = 1e4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignGrid {
    pub lower: f64,
    pub upper: f64,
    pub n: usize,
}

impl Default for DesignGrid {
    fn default() -> Self {
        DesignGrid {
            lower: -1.0,
            upper: 3.0,
            n: 400,
        }
    }
}

impl DesignGrid {
    pub fn new(lower: f64, upper: f64, n: usize) -> Result<Self> {
        if !(lower < upper) || !lower.is_finite() || !upper.is_finite() || n == 0 {
            return Err(Error::InvalidArgument(format!(
                "design grid needs finite lower < upper and n > 0, got [{lower}, {upper}] n={n}"
            )));
        }
        Ok(DesignGrid { lower, upper, n })
    }

    pub fn width(&self) -> f64 {
        (self.upper - self.lower) / self.n as f64
    }

    /// `x^k` for `k = 1..=n`, each computed as one rounded rational.
    pub fn points(&self) -> Vec<f64> {
        let n = self.n as f64;
        (1..=self.n)
            .map(|k| (self.lower * n + k as f64 * (self.upper - self.lower)) / n)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightSpec {
    pub center: f64,
    pub scale: f64,
    /// Threshold of interest; documents where the weight puts its emphasis.
    pub threshold: f64,
}

impl Default for WeightSpec {
    fn default() -> Self {
        WeightSpec {
            center: 1.5,
            scale: 0.4,
            threshold: 1.0,
        }
    }
}

impl WeightSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.scale > 0.0) || !self.center.is_finite() {
            return Err(Error::InvalidArgument(format!("bad weight spec {self:?}")));
        }
        Ok(())
    }
}

pub fn weight(x: f64, spec: &WeightSpec) -> f64 {
    normal::cdf((x - spec.center) / spec.scale)
}

/// Predictive CDF values at the design points: each in `[0, 1]`, nondecreasing.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveCdf(Vec<f64>);

impl PredictiveCdf {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some((k, v)) = values.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidArgument(format!("CDF value {v} at design point {}", k + 1)));
        }
        if let Some(k) = values.windows(2).position(|w| w[1] < w[0]) {
            return Err(Error::InvalidArgument(format!(
                "CDF decreases between design points {} and {}",
                k + 1,
                k + 2
            )));
        }
        Ok(PredictiveCdf(values))
    }

    /// Point mass at `x`: `F(x^k) = 1{x ≤ x^k}`.
    pub fn step_at(grid: &DesignGrid, x: f64) -> Self {
        PredictiveCdf(grid.points().iter().map(|&p| if x <= p { 1.0 } else { 0.0 }).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

/// Compensated (Neumaier) running sum.
#[derive(Debug, Default, Clone, Copy)]
struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Design points and weights, precomputed once per scoring run.
#[derive(Debug, Clone)]
pub struct Scorer {
    grid: DesignGrid,
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl Scorer {
    pub fn new(grid: DesignGrid, spec: WeightSpec) -> Result<Self> {
        spec.validate()?;
        let points = grid.points();
        let weights = points.iter().map(|&x| weight(x, &spec)).collect();
        Ok(Scorer { grid, points, weights })
    }

    pub fn grid(&self) -> &DesignGrid {
        &self.grid
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Discretized twCRPS of one CDF row, summed left to right.
    pub fn score_row<T: Copy + Into<f64>>(&self, row: &[T], x_obs: f64) -> f64 {
        debug_assert_eq!(row.len(), self.points.len());
        let mut acc = CompensatedSum::default();
        for ((&f, &p), &w) in row.iter().zip(&self.points).zip(&self.weights) {
            let ind = if x_obs <= p { 1.0 } else { 0.0 };
            let d = f.into() - ind;
            acc.add(d * d * w);
        }
        acc.value() * (self.grid.upper - self.grid.lower) / self.grid.n as f64
    }

    pub fn twcrps(&self, pred: &PredictiveCdf, x_obs: f64) -> Result<f64> {
        if pred.0.len() != self.points.len() {
            return Err(Error::DimensionMismatch(format!(
                "CDF has {} values, design grid {}",
                pred.0.len(),
                self.points.len()
            )));
        }
        Ok(self.score_row(&pred.0, x_obs))
    }
}

/// One-shot twCRPS; see [`Scorer`] for repeated scoring.
pub fn twcrps(pred: &PredictiveCdf, x_obs: f64, grid: &DesignGrid, spec: &WeightSpec) -> Result<f64> {
    Scorer::new(*grid, *spec)?.twcrps(pred, x_obs)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aggregate {
    pub mean: f64,
    /// `10⁴ × mean`
    pub display: f64,
}

/// Mean over points, left to right; any `+∞` makes the whole mean `+∞`.
pub fn aggregate(per_point: &[f64]) -> Result<Aggregate> {
    if per_point.is_empty() {
        return Err(Error::InvalidArgument("cannot aggregate an empty score list".into()));
    }
    let mean = if per_point.iter().any(|s| s.is_infinite()) {
        f64::INFINITY
    } else {
        let mut acc = CompensatedSum::default();
        per_point.iter().for_each(|&s| acc.add(s));
        acc.value() / per_point.len() as f64
    };
    Ok(Aggregate {
        mean,
        display: DISPLAY_SCALE * mean,
    })
}

/// Validated CDF rows in ascending point order.
#[derive(Debug, Clone, PartialEq)]
pub struct Submission {
    n_points: usize,
    values: Vec<f32>,
}

impl Submission {
    /// Builds a submission from per-point CDFs (checked like any file).
    pub fn from_cdfs(cdfs: &[PredictiveCdf]) -> Result<Self> {
        let mut values = Vec::with_capacity(cdfs.len() * SUBMISSION_WIDTH);
        for c in cdfs {
            if c.0.len() != SUBMISSION_WIDTH {
                return Err(Error::DimensionMismatch(format!(
                    "submission rows need {SUBMISSION_WIDTH} values, got {}",
                    c.0.len()
                )));
            }
            values.extend(c.0.iter().map(|&v| v as f32));
        }
        Ok(Submission {
            n_points: cdfs.len(),
            values,
        })
    }

    /// Repeats one CDF for every point.
    pub fn constant(cdf: &PredictiveCdf, n_points: usize) -> Result<Self> {
        Self::from_cdfs(&vec![cdf.clone(); n_points])
    }

    /// Unchecked construction from raw rows; used to produce deliberately
    /// broken files in tests and tooling.
    pub fn from_raw(n_points: usize, values: Vec<f32>) -> Self {
        Submission { n_points, values }
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.values[i * SUBMISSION_WIDTH..(i + 1) * SUBMISSION_WIDTH]
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + 4 * self.values.len());
        out.extend_from_slice(SUBMISSION_MAGIC);
        out.extend_from_slice(&SUBMISSION_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.n_points as u32).to_le_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("point_id");
        for k in 1..=SUBMISSION_WIDTH {
            out.push_str(&format!(",f{k:03}"));
        }
        out.push('\n');
        for i in 0..self.n_points {
            out.push_str(&i.to_string());
            for &v in self.row(i) {
                out.push(',');
                out.push_str(&(v as f64).to_string());
            }
            out.push('\n');
        }
        out
    }

    pub fn write_xtsb(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InvalidReason {
    Parse(String),
    RowCount { expected: usize, found: usize },
    RowLength { row: usize, found: usize },
    NonFinite { row: usize, k: usize },
    OutOfRange { row: usize, k: usize, value: f64 },
    Monotonicity { row: usize, k: usize },
}

impl InvalidReason {
    /// Short machine-friendly label.
    pub fn kind(&self) -> &'static str {
        match self {
            InvalidReason::Parse(_) => "parse",
            InvalidReason::RowCount { .. } => "row count",
            InvalidReason::RowLength { .. } => "row length",
            InvalidReason::NonFinite { .. } => "non-finite",
            InvalidReason::OutOfRange { .. } => "range",
            InvalidReason::Monotonicity { .. } => "monotonicity",
        }
    }
}

impl fmt::Display for InvalidReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InvalidReason::Parse(m) => write!(f, "parse: {m}"),
            InvalidReason::RowCount { expected, found } => {
                write!(f, "row count: expected {expected}, found {found}")
            }
            InvalidReason::RowLength { row, found } => {
                write!(f, "row length: row {row} has {found} values, expected {SUBMISSION_WIDTH}")
            }
            InvalidReason::NonFinite { row, k } => write!(f, "non-finite: row {row}, f{k:03}"),
            InvalidReason::OutOfRange { row, k, value } => {
                write!(f, "range: row {row}, f{k:03} = {value}")
            }
            InvalidReason::Monotonicity { row, k } => {
                write!(f, "monotonicity: row {row}, f{k:03} > f{:03}", k + 1)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Validity {
    Valid(Submission),
    Invalid(InvalidReason),
}

impl Validity {
    pub fn is_valid(&self) -> bool {
        matches!(self, Validity::Valid(_))
    }
}

/// Clamps near-boundary noise, then checks range and monotonicity.
fn check_row(row: usize, values: &mut [f64]) -> std::result::Result<(), InvalidReason> {
    for (k, v) in values.iter_mut().enumerate() {
        if !v.is_finite() {
            return Err(InvalidReason::NonFinite { row, k: k + 1 });
        }
        if *v < 0.0 && *v >= -CLAMP_TOLERANCE {
            *v = 0.0;
        } else if *v > 1.0 && *v <= 1.0 + CLAMP_TOLERANCE {
            *v = 1.0;
        }
        if !(0.0..=1.0).contains(v) {
            return Err(InvalidReason::OutOfRange { row, k: k + 1, value: *v });
        }
    }
    if let Some(k) = values.windows(2).position(|w| w[1] < w[0]) {
        return Err(InvalidReason::Monotonicity { row, k: k + 1 });
    }
    Ok(())
}

fn parse_binary(bytes: &[u8], expected_n: usize) -> std::result::Result<Submission, InvalidReason> {
    if bytes.len() < 12 {
        return Err(InvalidReason::Parse("truncated XTSB header".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != SUBMISSION_VERSION {
        return Err(InvalidReason::Parse(format!("unsupported XTSB version {version}")));
    }
    let declared = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let payload = &bytes[12..];
    let row_bytes = 4 * SUBMISSION_WIDTH;
    let present = payload.len() / row_bytes;
    if declared != expected_n || present != expected_n {
        let found = if declared != expected_n { declared } else { present };
        return Err(InvalidReason::RowCount {
            expected: expected_n,
            found,
        });
    }
    if payload.len() != expected_n * row_bytes {
        return Err(InvalidReason::Parse("trailing bytes after the last row".into()));
    }
    let mut values = Vec::with_capacity(expected_n * SUBMISSION_WIDTH);
    let mut buf = vec![0.0f64; SUBMISSION_WIDTH];
    for (row, chunk) in payload.chunks_exact(row_bytes).enumerate() {
        for (b, c) in buf.iter_mut().zip(chunk.chunks_exact(4)) {
            *b = f32::from_le_bytes(c.try_into().unwrap()) as f64;
        }
        check_row(row, &mut buf)?;
        values.extend(buf.iter().map(|&v| v as f32));
    }
    Ok(Submission {
        n_points: expected_n,
        values,
    })
}

fn parse_csv(bytes: &[u8], expected_n: usize) -> std::result::Result<Submission, InvalidReason> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(bytes);
    let header = rdr.headers().map_err(|e| InvalidReason::Parse(e.to_string()))?;
    if header.get(0) != Some("point_id") {
        return Err(InvalidReason::Parse(format!("unexpected header start {:?}", header.get(0))));
    }
    if header.len() != SUBMISSION_WIDTH + 1 {
        return Err(InvalidReason::RowLength {
            row: 0,
            found: header.len().saturating_sub(1),
        });
    }
    let mut rows: Vec<(usize, Vec<f64>)> = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| InvalidReason::Parse(e.to_string()))?;
        if record.iter().all(str::is_empty) {
            continue;
        }
        let id: usize = record[0]
            .parse()
            .map_err(|_| InvalidReason::Parse(format!("bad point_id {:?}", &record[0])))?;
        let vals = record
            .iter()
            .skip(1)
            .map(str::parse::<f64>)
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| InvalidReason::Parse(format!("point {id}: {e}")))?;
        if vals.len() != SUBMISSION_WIDTH {
            return Err(InvalidReason::RowLength {
                row: id,
                found: vals.len(),
            });
        }
        rows.push((id, vals));
    }
    if rows.len() != expected_n {
        return Err(InvalidReason::RowCount {
            expected: expected_n,
            found: rows.len(),
        });
    }
    rows.sort_by_key(|r| r.0);
    let mut values = Vec::with_capacity(expected_n * SUBMISSION_WIDTH);
    for (i, (id, mut vals)) in rows.into_iter().enumerate() {
        if id != i {
            return Err(InvalidReason::Parse(format!("point_ids are not 0..{expected_n}: missing {i}")));
        }
        check_row(id, &mut vals)?;
        values.extend(vals.iter().map(|&v| v as f32));
    }
    Ok(Submission {
        n_points: expected_n,
        values,
    })
}

/// Format is sniffed from the magic bytes; anything else is parsed as CSV.
pub fn validate_submission_bytes(bytes: &[u8], expected_n: usize) -> Validity {
    let parsed = if bytes.starts_with(SUBMISSION_MAGIC) {
        parse_binary(bytes, expected_n)
    } else {
        parse_csv(bytes, expected_n)
    };
    match parsed {
        Ok(s) => Validity::Valid(s),
        Err(r) => Validity::Invalid(r),
    }
}

/// I/O failures are errors; content problems come back as [`Validity::Invalid`].
pub fn validate_submission(path: &Path, expected_n: usize) -> Result<Validity> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(validate_submission_bytes(&bytes, expected_n))
}

#[derive(Debug, Clone)]
pub struct ScoreReport {
    pub team: String,
    pub per_point: Vec<f64>,
    pub mean: f64,
    pub display: f64,
    pub invalid: Option<InvalidReason>,
}

/// Scores every point in parallel; each point's sum is serial, so the result
/// does not depend on the thread count.
pub fn score_submission(team: &str, validity: &Validity, truth: &Truth, scorer: &Scorer) -> Result<ScoreReport> {
    if truth.is_empty() {
        return Err(Error::InvalidArgument("truth has no points".into()));
    }
    let (per_point, invalid) = match validity {
        Validity::Valid(sub) => {
            if sub.n_points() != truth.len() {
                return Err(Error::DimensionMismatch(format!(
                    "submission has {} points, truth {}",
                    sub.n_points(),
                    truth.len()
                )));
            }
            if scorer.points().len() != SUBMISSION_WIDTH {
                return Err(Error::DimensionMismatch(format!(
                    "design grid has {} points, submissions {SUBMISSION_WIDTH}",
                    scorer.points().len()
                )));
            }
            let scores = (0..sub.n_points())
                .into_par_iter()
                .map(|i| scorer.score_row(sub.row(i), truth.values[i]))
                .collect();
            (scores, None)
        }
        Validity::Invalid(r) => (vec![f64::INFINITY; truth.len()], Some(r.clone())),
    };
    let agg = aggregate(&per_point)?;
    Ok(ScoreReport {
        team: team.to_string(),
        per_point,
        mean: agg.mean,
        display: agg.display,
        invalid,
    })
}

/// Ascending mean score, ties by team name; `+∞` sorts last.
pub fn rank(mut reports: Vec<ScoreReport>) -> Vec<ScoreReport> {
    reports.sort_by(|a, b| a.mean.total_cmp(&b.mean).then_with(|| a.team.cmp(&b.team)));
    reports
}

/// Validates, scores and ranks submission files against a truth CSV.
pub fn leaderboard(submissions: &[(String, PathBuf)], truth_path: &Path, scorer: &Scorer) -> Result<Vec<ScoreReport>> {
    let truth = Truth::read_csv(truth_path)?;
    let reports = submissions
        .iter()
        .map(|(team, path)| {
            let validity = validate_submission(path, truth.len())?;
            score_submission(team, &validity, &truth, scorer)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(rank(reports))
}

fn display_score(s: f64) -> String {
    if s.is_infinite() {
        "inf".to_string()
    } else {
        format!("{s:.4}")
    }
}

/// `rank,team,score_e4`
pub fn leaderboard_csv(ranked: &[ScoreReport]) -> String {
    let mut out = String::from("rank,team,score_e4\n");
    for (i, r) in ranked.iter().enumerate() {
        out.push_str(&format!("{},{},{}\n", i + 1, r.team, display_score(r.display)));
    }
    out
}

pub fn leaderboard_table(ranked: &[ScoreReport]) -> String {
    let width = ranked.iter().map(|r| r.team.len()).max().unwrap_or(4).max(4);
    let mut out = format!("{:>4}  {:<width$}  {:>12}\n", "Rank", "Team", "Score");
    for (i, r) in ranked.iter().enumerate() {
        let note = r.invalid.as_ref().map(|x| format!("  ({})", x.kind())).unwrap_or_default();
        out.push_str(&format!(
            "{:>4}  {:<width$}  {:>12}{note}\n",
            i + 1,
            r.team,
            display_score(r.display)
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn scorer() -> Scorer {
        Scorer::new(DesignGrid::default(), WeightSpec::default()).unwrap()
    }

    #[test]
    fn design_points() {
        let p = DesignGrid::default().points();
        assert_eq!(p.len(), 400);
        assert_eq!(p[0], -0.99);
        assert_eq!(p[399], 3.0);
        assert_eq!(p[99], 0.0);
        assert_eq!(p[299], 2.0);
        for (k, x) in p.iter().enumerate() {
            assert_eq!(*x, (-100.0 + (k + 1) as f64) / 100.0);
        }
        assert_eq!(DesignGrid::default().width(), 0.01);
        assert!(DesignGrid::new(3.0, -1.0, 400).is_err());
    }

    #[test]
    fn weight_values() {
        let w = WeightSpec::default();
        assert_eq!(weight(1.5, &w), 0.5);
        assert!((weight(-1.0, &w) - 2.0522634252189388816e-10).abs() < 1e-20);
        assert!((weight(3.0, &w) - 0.99991158271479919613).abs() < 1e-15);
        let s = scorer();
        assert!(s.weights().iter().all(|&x| x > 0.0));
        assert!(s.weights().windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn step_at_observation_scores_zero() {
        let s = scorer();
        for x in [-0.99, 0.0, 1.37, 3.0] {
            let pred = PredictiveCdf::step_at(s.grid(), x);
            assert_eq!(s.twcrps(&pred, x).unwrap(), 0.0);
        }
        // off-grid observation, forecast snapped to the same side of every point
        let pred = PredictiveCdf::step_at(s.grid(), 0.123);
        assert_eq!(s.twcrps(&pred, 0.123).unwrap(), 0.0);
        assert!(s.twcrps(&pred, 0.133).unwrap() > 0.0);
    }

    #[test]
    fn closed_form_sums() {
        let s = scorer();
        let ones = PredictiveCdf::new(vec![1.0; 400]).unwrap();
        // mpmath: (1/100) Σ_k w(x^k)
        let all = 1.505007977589875398170937;
        assert!((s.twcrps(&ones, 3.5).unwrap() - all).abs() / all < 1e-12);
        let step0 = PredictiveCdf::step_at(s.grid(), 0.0);
        let band = 0.5157588237540322310281985;
        assert!((s.twcrps(&step0, 2.0).unwrap() - band).abs() / band < 1e-12);
    }

    #[test]
    fn cdf_invariants_enforced() {
        assert!(PredictiveCdf::new(vec![0.0, 0.5, 0.4]).is_err());
        assert!(PredictiveCdf::new(vec![0.0, 1.1]).is_err());
        assert!(PredictiveCdf::new(vec![f64::NAN]).is_err());
        let s = scorer();
        assert!(s.twcrps(&PredictiveCdf::new(vec![0.5; 3]).unwrap(), 0.0).is_err());
    }

    #[test]
    fn aggregate_rules() {
        assert_eq!(aggregate(&[0.0, 0.0]).unwrap().mean, 0.0);
        assert_eq!(aggregate(&[1.0, f64::INFINITY]).unwrap().mean, f64::INFINITY);
        let a = aggregate(&[1e-4, 3e-4]).unwrap();
        assert!((a.mean - 2e-4).abs() < 1e-19);
        assert!((a.display - 2.0).abs() < 1e-12);
        assert!(aggregate(&[]).is_err());
    }

    #[test]
    fn aggregate_is_linear_over_concatenation() {
        let mut r = rng::stream(1, 9);
        let a: Vec<f64> = (0..37).map(|_| rng::open_unit(&mut r) * 1e-3).collect();
        let b: Vec<f64> = (0..91).map(|_| rng::open_unit(&mut r) * 1e-3).collect();
        let all: Vec<f64> = a.iter().chain(&b).copied().collect();
        let weighted = (aggregate(&a).unwrap().mean * 37.0 + aggregate(&b).unwrap().mean * 91.0) / 128.0;
        assert!((aggregate(&all).unwrap().mean - weighted).abs() < 1e-16);
    }

    #[test]
    fn score_is_nondecreasing_as_error_moves_right() {
        // forecast step 30 design points above the observation, both shifted
        // right by one point per step
        let s = scorer();
        let pts = s.points().to_vec();
        let mut prev = 0.0;
        for j in 0..80 {
            let pred = PredictiveCdf::step_at(s.grid(), pts[129 + j]);
            let v = s.twcrps(&pred, pts[99 + j]).unwrap();
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn zero_only_for_exact_step() {
        let s = scorer();
        let mut v = PredictiveCdf::step_at(s.grid(), 1.0).values().to_vec();
        v[198] = 1e-7;
        let pred = PredictiveCdf::new(v).unwrap();
        assert!(s.twcrps(&pred, 1.0).unwrap() > 0.0);
    }

    fn csv_with_rows(rows: &[Vec<f64>]) -> Vec<u8> {
        let mut out = String::from("point_id");
        for k in 1..=400 {
            out.push_str(&format!(",f{k:03}"));
        }
        out.push('\n');
        for (i, r) in rows.iter().enumerate() {
            out.push_str(&i.to_string());
            for v in r {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out.into_bytes()
    }

    #[test]
    fn submission_validation_reasons() {
        let grid = DesignGrid::default();
        let good = PredictiveCdf::step_at(&grid, 0.5);
        let sub = Submission::constant(&good, 10).unwrap();
        assert!(validate_submission_bytes(&sub.to_bytes(), 10).is_valid());
        assert!(validate_submission_bytes(sub.to_csv().as_bytes(), 10).is_valid());

        let bytes = sub.to_bytes();
        let half = &bytes[..12 + 5 * 1600];
        match validate_submission_bytes(half, 10) {
            Validity::Invalid(r) => assert_eq!(r.kind(), "row count"),
            v => panic!("{v:?}"),
        }
        match validate_submission_bytes(&sub.to_bytes(), 11) {
            Validity::Invalid(r) => assert_eq!(r.kind(), "row count"),
            v => panic!("{v:?}"),
        }

        let mut bad = vec![0.5; 400];
        bad[199] = 0.7;
        bad[200] = 0.6;
        let rows = vec![good.values().to_vec(), bad];
        match validate_submission_bytes(&csv_with_rows(&rows), 2) {
            Validity::Invalid(InvalidReason::Monotonicity { row: 1, k: 200 }) => {}
            v => panic!("{v:?}"),
        }

        let mut noisy = vec![0.5; 400];
        noisy[0] = -5e-10;
        noisy[399] = 1.0 + 5e-10;
        match validate_submission_bytes(&csv_with_rows(&[noisy.clone()]), 1) {
            Validity::Valid(s) => {
                assert_eq!(s.row(0)[0], 0.0);
                assert_eq!(s.row(0)[399], 1.0);
            }
            v => panic!("{v:?}"),
        }
        noisy[0] = -1e-6;
        assert!(matches!(
            validate_submission_bytes(&csv_with_rows(&[noisy]), 1),
            Validity::Invalid(InvalidReason::OutOfRange { .. })
        ));

        let mut nan_row = vec![0.5f32; 400];
        nan_row[3] = f32::NAN;
        let raw = Submission::from_raw(1, nan_row).to_bytes();
        assert!(matches!(
            validate_submission_bytes(&raw, 1),
            Validity::Invalid(InvalidReason::NonFinite { row: 0, k: 4 })
        ));
        assert!(matches!(
            validate_submission_bytes(b"garbage", 1),
            Validity::Invalid(InvalidReason::Parse(_))
        ));
        assert!(validate_submission(Path::new("/nonexistent/sub.xtsb"), 1).is_err());
    }

    #[test]
    fn csv_rows_may_arrive_unordered() {
        let grid = DesignGrid::default();
        let a = PredictiveCdf::step_at(&grid, 0.0);
        let b = PredictiveCdf::step_at(&grid, 1.0);
        let sub = Submission::from_cdfs(&[a, b]).unwrap();
        let text = sub.to_csv();
        let mut lines: Vec<&str> = text.lines().collect();
        lines.swap(1, 2);
        let shuffled = lines.join("\n");
        match validate_submission_bytes(shuffled.as_bytes(), 2) {
            Validity::Valid(s) => assert_eq!(s, sub),
            v => panic!("{v:?}"),
        }
    }

    #[test]
    fn ranking_semantics() {
        let s = scorer();
        let truth = Truth {
            values: vec![0.5, 1.7, 2.2],
        };
        let grid = *s.grid();
        let perfect = Submission::from_cdfs(
            &truth.values.iter().map(|&x| PredictiveCdf::step_at(&grid, x)).collect::<Vec<_>>(),
        )
        .unwrap();
        let flat = Submission::constant(&PredictiveCdf::step_at(&grid, 0.0), 3).unwrap();
        let reports = vec![
            score_submission("zeta", &Validity::Invalid(InvalidReason::Parse("x".into())), &truth, &s).unwrap(),
            score_submission("flat", &Validity::Valid(flat.clone()), &truth, &s).unwrap(),
            score_submission("perfect", &Validity::Valid(perfect), &truth, &s).unwrap(),
            score_submission("alpha", &Validity::Valid(flat), &truth, &s).unwrap(),
        ];
        let ranked = rank(reports);
        let names: Vec<&str> = ranked.iter().map(|r| r.team.as_str()).collect();
        assert_eq!(names, ["perfect", "alpha", "flat", "zeta"]);
        assert_eq!(ranked[0].mean, 0.0);
        assert_eq!(ranked[3].mean, f64::INFINITY);
        let csv = leaderboard_csv(&ranked);
        assert!(csv.starts_with("rank,team,score_e4\n1,perfect,0.0000\n"));
        assert!(csv.ends_with("4,zeta,inf\n"));
        assert!(leaderboard_table(&ranked).contains("(parse)"));
    }

    #[test]
    fn propriety_small_sample() {
        // G supported on the design points; candidates shifted by ±25 cells
        let s = scorer();
        let pts = s.points().to_vec();
        let cdf_of = |shift: f64| -> Vec<f64> {
            pts.iter().map(|&x| normal::cdf((x + 0.005 - 1.5 - shift) / 0.4)).collect()
        };
        let g = cdf_of(0.0);
        let mut r = rng::stream(5, 5);
        let n = 20_000;
        let draws: Vec<f64> = (0..n)
            .map(|_| {
                let u = rng::open_unit(&mut r);
                let k = g.partition_point(|&c| c < u).min(399);
                pts[k]
            })
            .collect();
        let mean_score = |c: &[f64]| draws.iter().map(|&x| s.score_row(c, x)).sum::<f64>() / n as f64;
        let at_g = mean_score(&g);
        assert!(at_g < mean_score(&cdf_of(0.25)));
        assert!(at_g < mean_score(&cdf_of(-0.25)));
    }
}
