//! Seeded, splittable random streams.
//!
//! Every random draw in the harness comes from a ChaCha8 generator keyed by a
//! master seed and a 64-bit stream id (ChaCha's native stream parameter), so
//! samples are reproducible irrespective of execution order or thread count.
//!
//! Stream id layout:
//!
//! | purpose                      | stream id           |
//! |------------------------------|---------------------|
//! | mask field for month `j`     | `j` (1-based)       |
//! | validation draws for day `t` | `10000 + t`         |
//! | synthetic innovations day `t`| `SYNTH_BASE + t`    |

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::normal;

pub const VALIDATION_STREAM_BASE: u64 = 10_000;
pub const SYNTH_STREAM_BASE: u64 = 1 << 32;

pub fn stream(seed: u64, stream_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id);
    rng
}

/// Uniform on the open interval (0, 1) with 53 random bits.
pub fn open_unit<R: Rng>(rng: &mut R) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Standard normal by inverse-CDF transform (one uniform per draw).
pub fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    normal::inv_cdf(open_unit(rng))
}
