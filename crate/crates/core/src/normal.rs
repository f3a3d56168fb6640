//! Standard normal CDF and quantile.
//!
//! `Φ(x) = erfc(-x/√2)/2`. For `z < 2` the complementary function comes from
//! the positive-term series of `erf`, beyond that from the Laplace continued
//! fraction, so the lower tail keeps full relative accuracy.

use std::f64::consts::{PI, SQRT_2};

use statrs::function::erf::erfc_inv;

const SERIES_LIMIT: f64 = 2.0;

/// `erf(z)` for `0 ≤ z < 2`: `2/√π · e^{-z²} Σ (2z²)ⁿ z / (2n+1)!!`.
fn erf_series(z: f64, z2: f64) -> f64 {
    let mut term = z;
    let mut sum = z;
    let mut n = 0.0;
    loop {
        n += 1.0;
        term *= 2.0 * z2 / (2.0 * n + 1.0);
        sum += term;
        if term <= sum * 1e-17 {
            break;
        }
    }
    2.0 / PI.sqrt() * (-z2).exp() * sum
}

/// `erfc(z)` for `z ≥ 2`, modified Lentz on `1/(z + ½/(z + 1/(z + 3/2/(z + …))))`.
fn erfc_fraction(z: f64, z2: f64) -> f64 {
    let tiny = 1e-300;
    let mut f = z;
    let mut c = z;
    let mut d = 0.0;
    for n in 1..5000 {
        let a = n as f64 * 0.5;
        d = z + a * d;
        if d.abs() < tiny {
            d = tiny;
        }
        d = 1.0 / d;
        c = z + a / c;
        if c.abs() < tiny {
            c = tiny;
        }
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    (-z2).exp() / (PI.sqrt() * f)
}

/// `erfc(|x|/√2)`, i.e. twice the tail probability beyond `|x|`.
fn tail2(x: f64) -> f64 {
    let z = x.abs() / SQRT_2;
    let z2 = 0.5 * x * x;
    if z < SERIES_LIMIT {
        1.0 - erf_series(z, z2)
    } else {
        erfc_fraction(z, z2)
    }
}

pub fn cdf(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x == f64::NEG_INFINITY {
        return 0.0;
    }
    if x == f64::INFINITY {
        return 1.0;
    }
    let t = 0.5 * tail2(x);
    if x < 0.0 {
        t
    } else {
        1.0 - t
    }
}

pub fn pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Quantile function on `(0, 1)`: `erfc_inv` start, one Newton step on `Φ`.
pub fn inv_cdf(p: f64) -> f64 {
    debug_assert!(p > 0.0 && p < 1.0);
    if p == 0.5 {
        return 0.0;
    }
    let x = -SQRT_2 * erfc_inv(2.0 * p);
    let dens = pdf(x);
    if !x.is_finite() || dens <= 0.0 {
        return x;
    }
    // work on the smaller tail to avoid cancellation in cdf(x) - p
    let step = if p < 0.5 {
        (cdf(x) - p) / dens
    } else {
        ((1.0 - p) - cdf(-x)) / dens
    };
    x - step
}
