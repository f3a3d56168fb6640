//! Core algorithms for a spatio-temporal extreme-prediction competition harness.
//!
//! The pipeline turns gridded daily fields into anomalies, masks them with
//! spatially coherent monthly gaps, computes the space-time cylinder minimum
//! process used as ground truth, builds a pooled-ECDF benchmark and scores
//! predictive CDFs with the threshold-weighted CRPS.
//!
//! Module map:
//!
//! - [`grid`]: sea-cell geometry and fixed-radius disk neighbor tables
//! - [`field`]: calendar, day-major field storage and the `XTFD` binary format
//! - [`random_fields`]: stationary isotropic Gaussian random fields
//! - [`climatology`]: seasonal mean surface, anomalies, trend diagnostics
//! - [`mask`]: monthly missing-data masks and validation sampling
//! - [`min_process`]: cylinder minimum process and complete-neighborhood mask
//! - [`benchmark`]: pooled-minima ECDF benchmark
//! - [`evaluation`]: weight function, twCRPS, submissions and leaderboard
//! - [`synth`]: synthetic SST-like datasets with known ground truth

pub mod benchmark;
pub mod climatology;
mod csv_io;
pub mod error;
pub mod evaluation;
pub mod field;
pub mod grid;
pub mod mask;
pub mod min_process;
pub mod normal;
pub mod random_fields;
pub mod rng;
pub mod synth;

pub use benchmark::PooledMinimaHistogram;
pub use climatology::{MeanSurface, TrendReport};
pub use error::{Error, Result};
pub use evaluation::{DesignGrid, PredictiveCdf, ScoreReport, Scorer, Submission, Validity, WeightSpec};
pub use field::{Calendar, Field};
pub use grid::{GeoPoint, Grid, NeighborTable};
pub use mask::{MaskSchedule, ValidationIndex};
pub use min_process::{CylinderSpec, MinField, NaMode, Truth};
pub use random_fields::{CovarianceFamily, CovarianceSpec, GaussianFieldSample};
pub use synth::SynthConfig;
