//! Reproducible Wiener increments.
//!
//! Every path owns a ChaCha8 stream selected by `(seed, domain, path)`, so a
//! path's noise does not depend on which worker simulates it. Paths are built
//! by Lévy's midpoint construction in breadth-first order: the coarse levels
//! consume a prefix of the stream, so the same path index sampled at two
//! dyadic resolutions describes the same Brownian path. That is what makes
//! common random numbers work across a schedule whose time steps differ.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Independent stream families derived from one base seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    /// Noise driving the parameterized equation.
    Primary,
    /// Noise driving the limit equation.
    Limit,
    /// Primary noise decorrelated per schedule value (CRN disabled).
    PerParameter(u64),
    Bootstrap,
}

impl Domain {
    fn tag(self) -> u64 {
        match self {
            Self::Primary => 0x9E37_79B9_7F4A_7C15,
            Self::Limit => 0xD1B5_4A32_D192_ED03,
            Self::PerParameter(bits) => splitmix(0xA076_1D64_78BD_642F ^ bits),
            Self::Bootstrap => 0xE703_7ED1_A0B4_28DB,
        }
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn stream(seed: u64, domain: Domain, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix(seed ^ domain.tag()));
    rng.set_stream(index);
    rng
}

/// Fill `w` (length `2^level + 1`) with a Brownian path on `[0, horizon]`
/// sampled at `2^level` equal steps, `w[0] = 0`.
pub fn brownian_path(rng: &mut ChaCha8Rng, horizon: f64, level: u32, w: &mut Vec<f64>) {
    let n = 1usize << level;
    w.clear();
    w.resize(n + 1, 0.0);
    let z: f64 = StandardNormal.sample(rng);
    w[n] = horizon.sqrt() * z;
    for l in 1..=level {
        let span = n >> (l - 1);
        let half = span >> 1;
        // conditional sd of the midpoint of an interval of length horizon / 2^(l-1)
        let sd = (horizon / (1u64 << (l + 1)) as f64).sqrt();
        let mut left = 0;
        while left < n {
            let right = left + span;
            let z: f64 = StandardNormal.sample(rng);
            w[left + half] = 0.5 * (w[left] + w[right]) + sd * z;
            left = right;
        }
    }
}

/// Increments of [`brownian_path`].
pub fn brownian_increments(
    rng: &mut ChaCha8Rng,
    horizon: f64,
    level: u32,
    w: &mut Vec<f64>,
    dw: &mut Vec<f64>,
) {
    brownian_path(rng, horizon, level, w);
    dw.clear();
    dw.extend(w.windows(2).map(|p| p[1] - p[0]));
}
