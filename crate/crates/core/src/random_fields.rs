//! Stationary isotropic Gaussian random fields on a [`Grid`].
//!
//! The covariance matrix over all cell pairs is factorized once (dense
//! Cholesky, packed lower triangle) and reused for every sample, so a
//! simulator amortizes the `O(S³)` setup across months or days.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::rng;

/// Largest grid accepted by the dense backend.
pub const DENSE_CAP: usize = 20_000;

const JITTER_LADDER: [f64; 4] = [0.0, 1e-10, 1e-8, 1e-6];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovarianceFamily {
    /// `exp(-d/range)`
    Exponential,
    /// `exp(-(d/range)²)`
    Gaussian,
}

impl std::str::FromStr for CovarianceFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exponential" => Ok(CovarianceFamily::Exponential),
            "gaussian" => Ok(CovarianceFamily::Gaussian),
            other => Err(Error::InvalidArgument(format!("unknown covariance family {other:?}"))),
        }
    }
}

impl std::fmt::Display for CovarianceFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CovarianceFamily::Exponential => "exponential",
            CovarianceFamily::Gaussian => "gaussian",
        })
    }
}

/// Unit-variance correlation model.
///
/// The nugget is expressed relative to the structured part:
/// `c(d) = (ρ(d) + nugget·[d = 0]) / (1 + nugget)`, so the marginal variance is
/// one for every nugget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovarianceSpec {
    pub family: CovarianceFamily,
    pub range_km: f64,
    pub nugget: f64,
}

impl Default for CovarianceSpec {
    fn default() -> Self {
        CovarianceSpec {
            family: CovarianceFamily::Exponential,
            range_km: 300.0,
            nugget: 0.0,
        }
    }
}

impl CovarianceSpec {
    pub fn exponential(range_km: f64) -> Self {
        CovarianceSpec {
            family: CovarianceFamily::Exponential,
            range_km,
            nugget: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.range_km > 0.0) || !self.range_km.is_finite() {
            return Err(Error::InvalidArgument(format!("range_km {} must be > 0", self.range_km)));
        }
        if !(self.nugget >= 0.0) || !self.nugget.is_finite() {
            return Err(Error::InvalidArgument(format!("nugget {} must be >= 0", self.nugget)));
        }
        Ok(())
    }

    pub fn correlation(&self, d_km: f64) -> f64 {
        let h = d_km / self.range_km;
        let rho = match self.family {
            CovarianceFamily::Exponential => (-h).exp(),
            CovarianceFamily::Gaussian => (-h * h).exp(),
        };
        if d_km == 0.0 {
            1.0
        } else {
            rho / (1.0 + self.nugget)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianFieldSample {
    pub values: Vec<f64>,
    pub seed: u64,
    pub stream_id: u64,
}

/// In-place Cholesky of a packed lower-triangular symmetric matrix.
///
/// On failure returns the one-based order of the first non-positive leading
/// minor.
pub(crate) fn cholesky_packed(a: &mut [f64], n: usize) -> std::result::Result<(), usize> {
    debug_assert_eq!(a.len(), n * (n + 1) / 2);
    for i in 0..n {
        let ri = i * (i + 1) / 2;
        for j in 0..=i {
            let rj = j * (j + 1) / 2;
            let dot: f64 = a[ri..ri + j].iter().zip(&a[rj..rj + j]).map(|(x, y)| x * y).sum();
            let s = a[ri + j] - dot;
            if i == j {
                if !(s > 0.0) {
                    return Err(i + 1);
                }
                a[ri + i] = s.sqrt();
            } else {
                a[ri + j] = s / a[rj + j];
            }
        }
    }
    Ok(())
}

/// Factorized covariance for one grid, ready to draw samples.
#[derive(Debug, Clone)]
pub struct GaussianFieldSimulator {
    n: usize,
    factor: Vec<f64>,
    jitter: f64,
}

impl GaussianFieldSimulator {
    pub fn new(grid: &Grid, cov: &CovarianceSpec) -> Result<Self> {
        cov.validate()?;
        let n = grid.len();
        if n == 0 {
            return Err(Error::InvalidArgument("empty grid".into()));
        }
        if n > DENSE_CAP {
            return Err(Error::CapExceeded { cells: n, cap: DENSE_CAP });
        }
        let base: Vec<f64> = (0..n)
            .into_par_iter()
            .flat_map_iter(|i| (0..=i).map(move |j| cov.correlation(grid.distance_km(i, j))))
            .collect();

        let mut last_minor = 0;
        for &jitter in &JITTER_LADDER {
            let mut a = base.clone();
            for i in 0..n {
                a[i * (i + 1) / 2 + i] += jitter;
            }
            match cholesky_packed(&mut a, n) {
                Ok(()) => return Ok(GaussianFieldSimulator { n, factor: a, jitter }),
                Err(minor) => last_minor = minor,
            }
        }
        Err(Error::Factorization {
            minor: last_minor,
            jitter: JITTER_LADDER[JITTER_LADDER.len() - 1],
        })
    }

    pub fn n_cells(&self) -> usize {
        self.n
    }

    /// Diagonal jitter that was needed for the factorization to succeed.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// `L z` with `z` drawn serially from the `(seed, stream_id)` stream.
    pub fn sample(&self, seed: u64, stream_id: u64) -> GaussianFieldSample {
        let mut r = rng::stream(seed, stream_id);
        let z: Vec<f64> = (0..self.n).map(|_| rng::standard_normal(&mut r)).collect();
        GaussianFieldSample {
            values: self.correlate(&z),
            seed,
            stream_id,
        }
    }

    /// Applies the Cholesky factor to a vector of independent normals.
    pub fn correlate(&self, z: &[f64]) -> Vec<f64> {
        assert_eq!(z.len(), self.n);
        (0..self.n)
            .into_par_iter()
            .with_min_len(64)
            .map(|i| {
                let row = &self.factor[i * (i + 1) / 2..i * (i + 1) / 2 + i + 1];
                row.iter().zip(z).map(|(l, x)| l * x).sum()
            })
            .collect()
    }
}

/// One-shot simulation; prefer [`GaussianFieldSimulator`] when sampling repeatedly.
pub fn simulate_grf(grid: &Grid, cov: &CovarianceSpec, seed: u64, stream_id: u64) -> Result<GaussianFieldSample> {
    Ok(GaussianFieldSimulator::new(grid, cov)?.sample(seed, stream_id))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GeoPoint;

    fn corr(xs: &[f64], ys: &[f64]) -> f64 {
        let n = xs.len() as f64;
        let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
        let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
        sxy / (sxx * syy).sqrt()
    }

    fn replicates(sim: &GaussianFieldSimulator, n: u64) -> Vec<Vec<f64>> {
        (0..n).map(|k| sim.sample(99, k).values).collect()
    }

    #[test]
    fn cholesky_reports_leading_minor() {
        // [[1, 2], [2, 1]] is indefinite at order 2
        let mut a = vec![1.0, 2.0, 1.0];
        assert_eq!(cholesky_packed(&mut a, 2), Err(2));
        let mut b = vec![4.0, 2.0, 5.0];
        cholesky_packed(&mut b, 2).unwrap();
        assert_eq!(b, vec![2.0, 1.0, 2.0]);
    }

    #[test]
    fn covariance_validation_and_cap() {
        assert!(CovarianceSpec::exponential(0.0).validate().is_err());
        assert!(CovarianceSpec { nugget: -1.0, ..Default::default() }.validate().is_err());
        let cells = (0..DENSE_CAP + 1)
            .map(|i| GeoPoint::new((i % 200) as f64 * 0.01, (i / 200) as f64 * 0.01).unwrap())
            .collect();
        let g = Grid::new(cells).unwrap();
        assert!(matches!(
            GaussianFieldSimulator::new(&g, &CovarianceSpec::default()),
            Err(Error::CapExceeded { .. })
        ));
    }

    #[test]
    fn deterministic_per_stream() {
        let g = Grid::regular(6, 6, 35.0, 20.0, 0.1).unwrap();
        let cov = CovarianceSpec::exponential(40.0);
        let a = simulate_grf(&g, &cov, 5, 17).unwrap();
        let b = simulate_grf(&g, &cov, 5, 17).unwrap();
        let c = simulate_grf(&g, &cov, 5, 18).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.values, c.values);
    }

    #[test]
    fn nugget_limit_gives_independent_cells() {
        let g = Grid::regular(1, 4, 35.0, 20.0, 0.05).unwrap();
        let cov = CovarianceSpec {
            family: CovarianceFamily::Exponential,
            range_km: 1e-6,
            nugget: 0.0,
        };
        let sim = GaussianFieldSimulator::new(&g, &cov).unwrap();
        let n = 10_000;
        let reps = replicates(&sim, n);
        let col = |i: usize| reps.iter().map(|r| r[i]).collect::<Vec<_>>();
        let bound = 3.0 / (n as f64).sqrt();
        for (i, j) in [(0, 1), (1, 2), (0, 3)] {
            let r = corr(&col(i), &col(j));
            assert!(r.abs() < bound, "pair ({i},{j}) corr {r}");
        }
    }

    #[test]
    fn exponential_correlation_at_one_range() {
        // two cells exactly one range apart, plus a third in between
        let g = Grid::new(vec![
            GeoPoint::new(36.0, 20.0).unwrap(),
            GeoPoint::new(36.0, 20.5).unwrap(),
            GeoPoint::new(36.0, 21.0).unwrap(),
        ])
        .unwrap();
        let d = g.distance_km(0, 2);
        let sim = GaussianFieldSimulator::new(&g, &CovarianceSpec::exponential(d)).unwrap();
        let reps = replicates(&sim, 10_000);
        let x: Vec<f64> = reps.iter().map(|r| r[0]).collect();
        let y: Vec<f64> = reps.iter().map(|r| r[2]).collect();
        let r = corr(&x, &y);
        assert!((r - (-1.0f64).exp()).abs() < 0.03, "{r}");
    }

    #[test]
    fn marginals_are_standard_normal() {
        let g = Grid::regular(4, 4, 35.0, 20.0, 0.2).unwrap();
        for cov in [
            CovarianceSpec::exponential(60.0),
            CovarianceSpec {
                family: CovarianceFamily::Gaussian,
                range_km: 40.0,
                nugget: 0.1,
            },
        ] {
            let sim = GaussianFieldSimulator::new(&g, &cov).unwrap();
            let n = 10_000;
            let reps = replicates(&sim, n);
            for i in 0..g.len() {
                let xs: Vec<f64> = reps.iter().map(|r| r[i]).collect();
                let m = xs.iter().sum::<f64>() / n as f64;
                let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
                assert!(m.abs() < 0.04, "cell {i} mean {m}");
                assert!((v - 1.0).abs() < 0.05, "cell {i} var {v}");
            }
        }
    }

    #[test]
    fn isotropy_on_regular_subgrid() {
        // equidistant horizontal and vertical neighbors near the equator
        let g = Grid::regular(3, 3, 0.0, -0.1, 0.1).unwrap();
        assert!((g.distance_km(4, 5) - g.distance_km(4, 7)).abs() < 0.05);
        let sim = GaussianFieldSimulator::new(&g, &CovarianceSpec::exponential(20.0)).unwrap();
        let reps = replicates(&sim, 20_000);
        let col = |i: usize| reps.iter().map(|r| r[i]).collect::<Vec<_>>();
        let zonal = corr(&col(4), &col(5));
        let meridional = corr(&col(4), &col(7));
        let expected = (-g.distance_km(4, 5) / 20.0).exp();
        assert!((zonal - meridional).abs() < 0.04, "{zonal} vs {meridional}");
        assert!((zonal - expected).abs() < 0.03);
    }

    #[test]
    fn distinct_streams_are_uncorrelated() {
        let g = Grid::regular(2, 2, 35.0, 20.0, 0.1).unwrap();
        let sim = GaussianFieldSimulator::new(&g, &CovarianceSpec::exponential(30.0)).unwrap();
        let n = 10_000u64;
        let a: Vec<f64> = (0..n).map(|k| sim.sample(3, 2 * k).values[0]).collect();
        let b: Vec<f64> = (0..n).map(|k| sim.sample(3, 2 * k + 1).values[0]).collect();
        assert!(corr(&a, &b).abs() < 3.0 / (n as f64).sqrt());
    }
}
