//! Seed derivation and seeded random streams.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::Real;

/// SplitMix64 finalizer.
#[inline]
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive an independent seed for a parallel unit of work.
///
/// The result depends only on `(seed, parts)`, so work can be scheduled in
/// any order without changing results.
pub fn derive_seed(seed: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(mix(seed), |acc, &p| mix(acc ^ mix(p)))
}

pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_vector<T: Real, R: Rng>(rng: &mut R, dim: usize) -> DVector<T> {
    DVector::from_fn(dim, |_, _| T::c(rng.sample::<f64, _>(StandardNormal)))
}

pub fn uniform<T: Real, R: Rng>(rng: &mut R, lo: T, hi: T) -> T {
    let u: f64 = rng.random();
    lo + (hi - lo) * T::c(u)
}

/// Uniform sample from the Euclidean ball of radius `radius` around `center`.
pub fn uniform_in_ball<T: Real, R: Rng>(rng: &mut R, center: &DVector<T>, radius: T) -> DVector<T> {
    let n = center.len();
    let mut dir: DVector<T> = gaussian_vector(rng, n);
    let mut len = crate::dense::euclid(&dir);
    while len == T::zero() {
        dir = gaussian_vector(rng, n);
        len = crate::dense::euclid(&dir);
    }
    let u: f64 = rng.random();
    let scale = radius * T::c(u.powf(1.0 / n as f64)) / len;
    center + dir * scale
}
