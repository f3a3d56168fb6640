//! Pipeline stages.
//!
//! Every stage reads fixed artifact names from the work directory and writes
//! its own, so a fresh directory can be replayed stage by stage with no other
//! state.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value};
use sstx_core::benchmark::{benchmark_cdf, pool_minima};
use sstx_core::climatology::{compute_anomaly, estimate_mean, trend_diagnostics};
use sstx_core::evaluation::{
    leaderboard, leaderboard_csv, leaderboard_table, score_submission, validate_submission, Scorer, Submission,
    Validity,
};
use sstx_core::field::{read_field, read_field_checked, write_field};
use sstx_core::grid::build_neighbor_table;
use sstx_core::mask::{apply_mask, default_alpha_schedule, sample_validation};
use sstx_core::min_process::{complete_neighborhood_mask, extract_truth, min_process, Truth};
use sstx_core::{synth, Field, Grid, MaskSchedule, NaMode, ValidationIndex};

use crate::config::RunConfig;

pub const GRID: &str = "grid.csv";
pub const RAW: &str = "raw.xtfd";
pub const TRUE_MEAN: &str = "true_mean.xtfd";
pub const SYNTH_TRUTH: &str = "synth_truth.json";
pub const MEAN: &str = "mean.xtfd";
pub const ANOMALY: &str = "anomaly.xtfd";
pub const TREND: &str = "trend.json";
pub const CELL_TRENDS: &str = "cell_trends.csv";
pub const MASK_SUMMARY: &str = "mask_summary.csv";
pub const TRAINING: &str = "training.xtfd";
pub const VALIDATION_INDEX: &str = "validation_index.csv";
pub const MINIMA: &str = "minima.xtfd";
pub const TRUTH: &str = "truth.csv";
pub const BENCHMARK_SUBMISSION: &str = "benchmark.xtsb";
pub const BENCHMARK_CDF: &str = "benchmark_cdf.csv";
pub const BENCHMARK_HISTOGRAM: &str = "benchmark_histogram.json";
pub const LEADERBOARD: &str = "leaderboard.csv";
pub const SUMMARY_DIR: &str = "summary";

#[derive(Debug)]
pub enum Failure {
    Config(String),
    Data(String),
    Validation(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) => 3,
            Failure::Data(_) => 4,
            Failure::Validation(_) => 5,
        }
    }
}

impl Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "config error: {m}"),
            Failure::Data(m) => write!(f, "data error: {m}"),
            Failure::Validation(m) => write!(f, "invalid submission: {m}"),
        }
    }
}

fn data(e: impl Display) -> Failure {
    Failure::Data(e.to_string())
}

#[derive(Debug, Default)]
pub struct StageOutput {
    pub outputs: Vec<PathBuf>,
    pub metrics: Map<String, Value>,
    /// Set when the stage completed but the submission it examined is invalid.
    pub rejection: Option<String>,
}

impl StageOutput {
    fn metric(&mut self, key: &str, v: impl Into<Value>) {
        self.metrics.insert(key.to_string(), v.into());
    }
}

/// Finite numbers as JSON numbers, infinities as `"inf"`.
pub fn number(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else if x > 0.0 {
        json!("inf")
    } else if x < 0.0 {
        json!("-inf")
    } else {
        Value::Null
    }
}

struct Workdir<'a> {
    root: &'a Path,
}

impl Workdir<'_> {
    fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    /// Path of an input the stage cannot run without.
    fn input(&self, name: &str) -> Result<PathBuf, Failure> {
        let p = self.path(name);
        if p.exists() {
            Ok(p)
        } else {
            Err(Failure::Data(format!("missing input {}", p.display())))
        }
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn write_json(path: &Path, v: &impl serde::Serialize) -> Result<(), Failure> {
    let mut s = serde_json::to_string_pretty(v).map_err(data)?;
    s.push('\n');
    write_text(path, &s)
}

fn load_grid(cfg: &RunConfig, wd: &Workdir) -> Result<Grid, Failure> {
    let path = match &cfg.grid_input {
        Some(p) => p.clone(),
        None => wd.input(GRID)?,
    };
    Grid::read_csv(&path).map_err(data)
}

fn load_field(wd: &Workdir, name: &str, grid: &Grid) -> Result<Field, Failure> {
    read_field_checked(&wd.input(name)?, Some(grid.len()), None).map_err(data)
}

fn load_index(wd: &Workdir, field: &Field) -> Result<ValidationIndex, Failure> {
    ValidationIndex::read_csv(&wd.input(VALIDATION_INDEX)?, field.calendar()).map_err(data)
}

pub fn synth(cfg: &RunConfig, root: &Path) -> Result<StageOutput, Failure> {
    let wd = Workdir { root };
    let out = synth::generate(&cfg.synth_config()).map_err(data)?;
    let mut res = StageOutput::default();
    let grid = wd.path(GRID);
    out.grid.write_csv(&grid).map_err(data)?;
    let raw = wd.path(RAW);
    write_field(&out.raw, &raw).map_err(data)?;
    let mean = wd.path(TRUE_MEAN);
    write_field(&out.true_mean.to_field(), &mean).map_err(data)?;
    let truth = wd.path(SYNTH_TRUTH);
    write_json(&truth, &out.truth)?;
    res.outputs = vec![grid, raw, mean, truth];
    res.metric("n_cells", out.grid.len());
    res.metric("n_days", out.raw.n_days());
    res.metric("start_date", out.raw.calendar().start().to_string());
    Ok(res)
}

pub fn climatology(cfg: &RunConfig, root: &Path) -> Result<StageOutput, Failure> {
    let wd = Workdir { root };
    let grid = load_grid(cfg, &wd)?;
    let raw_path = match &cfg.raw_input {
        Some(p) => p.clone(),
        None => wd.input(RAW)?,
    };
    let raw = read_field_checked(&raw_path, Some(grid.len()), None).map_err(data)?;
    raw.check_bounds(cfg.bounds.raw.0, cfg.bounds.raw.1).map_err(data)?;
    let mean = estimate_mean(&raw).map_err(data)?;
    let anomaly = compute_anomaly(&raw, &mean).map_err(data)?;
    anomaly
        .check_bounds(cfg.bounds.anomaly.0, cfg.bounds.anomaly.1)
        .map_err(data)?;

    let mut res = StageOutput::default();
    let mean_path = wd.path(MEAN);
    write_field(&mean.to_field(), &mean_path).map_err(data)?;
    let anomaly_path = wd.path(ANOMALY);
    write_field(&anomaly, &anomaly_path).map_err(data)?;
    res.outputs = vec![mean_path, anomaly_path];

    let full_years = anomaly.calendar().full_years().len();
    res.metric("full_years", full_years);
    if full_years >= 3 {
        let trend = trend_diagnostics(&anomaly).map_err(data)?;
        let trend_path = wd.path(TREND);
        write_json(&trend_path, &trend)?;
        let cells_path = wd.path(CELL_TRENDS);
        write_text(&cells_path, &trend.cell_slopes_csv())?;
        res.outputs.extend([trend_path, cells_path]);
        res.metric("basin_mean_slope_c_per_century", number(trend.basin_mean_slope));
        res.metric("basin_sd_slope_c_per_century", number(trend.basin_sd_slope));
    } else {
        eprintln!("note: fewer than 3 full calendar years, trend diagnostics skipped");
    }
    Ok(res)
}

pub fn mask(cfg: &RunConfig, root: &Path) -> Result<StageOutput, Failure> {
    let wd = Workdir { root };
    let grid = load_grid(cfg, &wd)?;
    let anomaly = load_field(&wd, ANOMALY, &grid)?;
    let cal = anomaly.calendar();
    let alphas = default_alpha_schedule(cal, &cfg.alpha);
    let schedule = MaskSchedule::generate(&grid, cal, &alphas, &cfg.mask_cov, cfg.seed).map_err(data)?;
    let training = apply_mask(&anomaly, &schedule).map_err(data)?;
    let index = sample_validation(&schedule, &cfg.validation, cfg.seed).map_err(data)?;

    let mut res = StageOutput::default();
    let summary = wd.path(MASK_SUMMARY);
    write_text(&summary, &schedule.summary_csv())?;
    let training_path = wd.path(TRAINING);
    write_field(&training, &training_path).map_err(data)?;
    let index_path = wd.path(VALIDATION_INDEX);
    index.write_csv(&index_path).map_err(data)?;
    res.outputs = vec![summary, training_path, index_path];
    res.metric("n_months", schedule.months().len());
    res.metric("missing_fraction", number(schedule.missing_fraction()));
    res.metric("validation_points", index.len());
    Ok(res)
}

pub fn truth(cfg: &RunConfig, root: &Path) -> Result<StageOutput, Failure> {
    let wd = Workdir { root };
    let grid = load_grid(cfg, &wd)?;
    let anomaly = load_field(&wd, ANOMALY, &grid)?;
    let index = load_index(&wd, &anomaly)?;
    let nb = build_neighbor_table(&grid, cfg.cylinder.radius_km).map_err(data)?;
    let mut x = min_process(&anomaly, &nb, cfg.cylinder.half_window_days, cfg.truth_na_mode).map_err(data)?;
    x.spec = cfg.cylinder;
    let truth = extract_truth(&x, &index).map_err(data)?;

    let mut res = StageOutput::default();
    let minima = wd.path(MINIMA);
    write_field(&x.field, &minima).map_err(data)?;
    let truth_path = wd.path(TRUTH);
    truth.write_csv(&truth_path).map_err(data)?;
    res.outputs = vec![minima, truth_path];
    res.metric("validation_points", truth.len());
    res.metric("mean_neighbors", nb.total_pairs() as f64 / grid.len() as f64);
    Ok(res)
}

pub fn benchmark(cfg: &RunConfig, root: &Path) -> Result<StageOutput, Failure> {
    let wd = Workdir { root };
    let grid = load_grid(cfg, &wd)?;
    let training = load_field(&wd, TRAINING, &grid)?;
    let index = load_index(&wd, &training)?;
    let nb = build_neighbor_table(&grid, cfg.cylinder.radius_km).map_err(data)?;
    let h = cfg.cylinder.half_window_days;
    let x = min_process(&training, &nb, h, NaMode::RequireComplete).map_err(data)?;
    let complete = complete_neighborhood_mask(&training, &nb, h).map_err(data)?;
    let hist = pool_minima(&x, &complete, &cfg.design).map_err(data)?;
    let cdf = benchmark_cdf(&hist).map_err(data)?;
    let sub = Submission::constant(&cdf, index.len()).map_err(data)?;

    let mut res = StageOutput::default();
    let sub_path = wd.path(BENCHMARK_SUBMISSION);
    sub.write_xtsb(&sub_path).map_err(data)?;
    let cdf_path = wd.path(BENCHMARK_CDF);
    let mut text = String::from("k,x,cdf\n");
    for (k, (p, f)) in cfg.design.points().iter().zip(cdf.values()).enumerate() {
        text.push_str(&format!("{},{p},{f}\n", k + 1));
    }
    write_text(&cdf_path, &text)?;
    let hist_path = wd.path(BENCHMARK_HISTOGRAM);
    write_json(
        &hist_path,
        &json!({
            "design": cfg.design,
            "total_n": hist.total_n,
            "complete_fraction": complete.fraction(),
            "counts": hist.counts,
        }),
    )?;
    res.outputs = vec![sub_path, cdf_path, hist_path];
    res.metric("complete_neighborhoods", hist.total_n);
    res.metric("complete_fraction", number(complete.fraction()));
    res.metric("validation_points", index.len());
    Ok(res)
}

fn expected_points(root: &Path, points: Option<usize>) -> Result<usize, Failure> {
    if let Some(n) = points {
        return Ok(n);
    }
    let wd = Workdir { root };
    let training = read_field(&wd.input(TRAINING)?).map_err(data)?;
    Ok(load_index(&wd, &training)?.len())
}

pub fn validate(root: &Path, submission: &Path, points: Option<usize>) -> Result<StageOutput, Failure> {
    let n = expected_points(root, points)?;
    let validity = validate_submission(submission, n).map_err(data)?;
    let mut res = StageOutput::default();
    res.metric("submission", submission.display().to_string());
    res.metric("expected_points", n);
    match validity {
        Validity::Valid(_) => res.metric("valid", true),
        Validity::Invalid(r) => {
            res.metric("valid", false);
            res.metric("reason", r.kind());
            res.metric("detail", r.to_string());
            res.rejection = Some(format!("{}: {r}", r.kind()));
        }
    }
    Ok(res)
}

fn team_of(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "submission".into())
}

fn scorer(cfg: &RunConfig) -> Result<Scorer, Failure> {
    Scorer::new(cfg.design, cfg.weight).map_err(|e| Failure::Config(e.to_string()))
}

pub fn score(
    cfg: &RunConfig,
    root: &Path,
    submission: &Path,
    team: Option<&str>,
    truth_path: Option<&Path>,
) -> Result<StageOutput, Failure> {
    let wd = Workdir { root };
    let truth_path = match truth_path {
        Some(p) => p.to_path_buf(),
        None => wd.input(TRUTH)?,
    };
    let truth = Truth::read_csv(&truth_path).map_err(data)?;
    let team = team.map(str::to_string).unwrap_or_else(|| team_of(submission));
    let validity = validate_submission(submission, truth.len()).map_err(data)?;
    let report = score_submission(&team, &validity, &truth, &scorer(cfg)?).map_err(data)?;

    let mut res = StageOutput::default();
    let out = wd.path(&format!("scores_{team}.csv"));
    let mut text = String::from("point_id,twcrps\n");
    for (i, s) in report.per_point.iter().enumerate() {
        text.push_str(&format!("{i},{s}\n"));
    }
    write_text(&out, &text)?;
    res.outputs = vec![out];
    res.metric("team", team.clone());
    res.metric("mean_twcrps", number(report.mean));
    res.metric("score_e4", number(report.display));
    eprintln!("{team}: {}", if report.display.is_finite() { format!("{:.4}", report.display) } else { "inf".into() });
    if let Some(r) = &report.invalid {
        res.metric("reason", r.kind());
        res.rejection = Some(format!("{}: {r}", r.kind()));
    }
    Ok(res)
}

/// `team=path`, or a bare path whose file stem names the team.
fn parse_entry(entry: &str) -> (String, PathBuf) {
    match entry.split_once('=') {
        Some((team, path)) if !team.is_empty() => (team.to_string(), PathBuf::from(path)),
        _ => {
            let p = PathBuf::from(entry);
            (team_of(&p), p)
        }
    }
}

pub fn rank(cfg: &RunConfig, root: &Path, entries: &[String], truth_path: Option<&Path>) -> Result<StageOutput, Failure> {
    let wd = Workdir { root };
    let truth_path = match truth_path {
        Some(p) => p.to_path_buf(),
        None => wd.input(TRUTH)?,
    };
    let subs: Vec<(String, PathBuf)> = entries.iter().map(|e| parse_entry(e)).collect();
    for (_, p) in &subs {
        if !p.exists() {
            return Err(Failure::Data(format!("missing submission {}", p.display())));
        }
    }
    let ranked = leaderboard(&subs, &truth_path, &scorer(cfg)?).map_err(data)?;

    let mut res = StageOutput::default();
    let out = wd.path(LEADERBOARD);
    write_text(&out, &leaderboard_csv(&ranked))?;
    eprint!("{}", leaderboard_table(&ranked));
    res.outputs = vec![out];
    let rows: Vec<Value> = ranked
        .iter()
        .enumerate()
        .map(|(i, r)| {
            json!({
                "rank": i + 1,
                "team": r.team,
                "score_e4": number(r.display),
                "invalid": r.invalid.as_ref().map(|x| x.kind()),
            })
        })
        .collect();
    res.metric("leaderboard", rows);
    Ok(res)
}

/// Fixed-width bins `[i·w, (i+1)·w)`, contiguous from the lowest to the
/// highest occupied bin.
fn histogram(values: impl Iterator<Item = f64>, width: f64) -> Vec<(f64, f64, u64)> {
    let mut counts: BTreeMap<i64, u64> = BTreeMap::new();
    for v in values.filter(|v| v.is_finite()) {
        *counts.entry((v / width).floor() as i64).or_default() += 1;
    }
    let (Some(&lo), Some(&hi)) = (counts.keys().next(), counts.keys().next_back()) else {
        return Vec::new();
    };
    (lo..=hi)
        .map(|i| (i as f64 * width, (i + 1) as f64 * width, counts.get(&i).copied().unwrap_or(0)))
        .collect()
}

pub fn summary(cfg: &RunConfig, root: &Path) -> Result<StageOutput, Failure> {
    let wd = Workdir { root };
    let grid = load_grid(cfg, &wd)?;
    let anomaly = load_field(&wd, ANOMALY, &grid)?;
    let minima = load_field(&wd, MINIMA, &grid)?;
    let truth = Truth::read_csv(&wd.input(TRUTH)?).map_err(data)?;
    let dir = wd.path(SUMMARY_DIR);
    std::fs::create_dir_all(&dir).map_err(|e| Failure::Data(format!("{}: {e}", dir.display())))?;
    let mut res = StageOutput::default();
    let mut doc = Map::new();

    if anomaly.calendar().full_years().len() >= 3 {
        let trend = trend_diagnostics(&anomaly).map_err(data)?;
        let mut text = String::from("year,stat,min,q1,median,q3,max,basin_value\n");
        for y in &trend.years {
            for (stat, b, basin) in [("mean", &y.mean_box, y.basin_mean), ("sd", &y.sd_box, y.basin_sd)] {
                if let Some(b) = b {
                    text.push_str(&format!(
                        "{},{stat},{},{},{},{},{},{basin}\n",
                        y.year, b.min, b.q1, b.median, b.q3, b.max
                    ));
                }
            }
        }
        let path = dir.join("yearly_boxplots.csv");
        write_text(&path, &text)?;
        res.outputs.push(path);
        doc.insert("basin_mean_slope_c_per_century".into(), number(trend.basin_mean_slope));
        doc.insert("basin_sd_slope_c_per_century".into(), number(trend.basin_sd_slope));
    } else {
        doc.insert("basin_mean_slope_c_per_century".into(), Value::Null);
        doc.insert("basin_sd_slope_c_per_century".into(), Value::Null);
    }

    let n = minima.n_cells();
    let mut cell_max = vec![f64::NAN; n];
    for d in 0..minima.n_days() {
        for (m, &v) in cell_max.iter_mut().zip(minima.day(d)) {
            if !v.is_nan() && !(*m >= v as f64) {
                *m = v as f64;
            }
        }
    }
    let w = cfg.summary_bin_width;
    let panels = [
        ("all", histogram(minima.values().iter().map(|&v| v as f64), w)),
        ("validation", histogram(truth.values.iter().copied(), w)),
        ("cell_max", histogram(cell_max.iter().copied(), w)),
    ];
    let mut text = String::from("panel,bin_lo,bin_hi,count\n");
    for (name, bins) in &panels {
        for (lo, hi, c) in bins {
            text.push_str(&format!("{name},{lo:.6},{hi:.6},{c}\n"));
        }
        let total: u64 = bins.iter().map(|b| b.2).sum();
        doc.insert(format!("{name}_count"), json!(total));
    }
    let path = dir.join("minima_histograms.csv");
    write_text(&path, &text)?;
    res.outputs.push(path);
    doc.insert("bin_width".into(), number(w));
    doc.insert(
        "validation_exceeding_threshold".into(),
        json!(truth.values.iter().filter(|&&x| x > cfg.weight.threshold).count()),
    );
    let path = dir.join("summary.json");
    write_json(&path, &doc)?;
    res.outputs.push(path);
    res.metrics = doc;
    Ok(res)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn histogram_bins_are_contiguous() {
        let bins = histogram([0.05, 0.31, 0.32, f64::NAN, -0.05].into_iter(), 0.1);
        assert_eq!(bins.len(), 5);
        assert_eq!(bins[0].2, 1);
        assert_eq!(bins[1].2, 1);
        assert_eq!(bins[2].2, 0);
        assert_eq!(bins[4].2, 2);
        assert!(histogram(std::iter::empty(), 0.1).is_empty());
    }

    #[test]
    fn entries_name_teams() {
        assert_eq!(parse_entry("alpha=subs/a.xtsb"), ("alpha".into(), PathBuf::from("subs/a.xtsb")));
        assert_eq!(parse_entry("subs/beta.csv"), ("beta".into(), PathBuf::from("subs/beta.csv")));
    }

    #[test]
    fn infinite_numbers_become_strings() {
        assert_eq!(number(f64::INFINITY), json!("inf"));
        assert_eq!(number(1.5), json!(1.5));
    }
}
