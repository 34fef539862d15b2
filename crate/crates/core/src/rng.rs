//! Counter-based randomness for per-cell variation.
//!
//! Each draw is a pure function of `(seed, key, counter)`, so a cell's sample
//! never depends on how many other cells were sampled before it.

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[inline]
pub fn hash3(seed: u64, key: u64, counter: u64) -> u64 {
    mix64(mix64(mix64(seed) ^ key) ^ counter)
}

/// Uniform in the open interval (0, 1).
#[inline]
pub fn unit_open(bits: u64) -> f64 {
    ((bits >> 12) as f64 + 0.5) * (1.0 / (1u64 << 52) as f64)
}

/// Standard normal deviate via Box-Muller on two keyed uniforms.
pub fn standard_normal(seed: u64, key: u64, counter: u64) -> f64 {
    let u1 = unit_open(hash3(seed, key, counter.wrapping_mul(2)));
    let u2 = unit_open(hash3(seed, key, counter.wrapping_mul(2).wrapping_add(1)));
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Packs a cell coordinate into a sampling key.
pub fn cell_key(subarray: u32, row: u32, col: u32) -> u64 {
    ((subarray as u64) << 42) ^ ((row as u64) << 21) ^ col as u64
}
