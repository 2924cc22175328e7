//! Counter-keyed deterministic value generation.
//!
//! Every stochastic quantity in the simulator (pilot values, data symbols,
//! noise, traffic transitions) is a pure function of a seed and a position
//! key rather than a draw from a sequential generator. This makes results
//! independent of evaluation order, so slot ranges can be farmed out to any
//! number of workers and still produce bit-identical output, and lets the
//! frequency-domain and time-domain signal paths observe the same noise
//! realization.

use num_complex::Complex64;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 finalizer: a well-mixed 64-bit hash of the input.
#[inline]
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Combine a seed with a position key into a new stream seed.
#[inline]
pub fn derive(seed: u64, tag: u64) -> u64 {
    mix(seed ^ mix(tag))
}

/// Hash of up to four coordinates under one seed.
#[inline]
pub fn key4(seed: u64, a: u64, b: u64, c: u64, d: u64) -> u64 {
    let mut h = seed;
    h = mix(h ^ a);
    h = mix(h ^ b);
    h = mix(h ^ c);
    mix(h ^ d)
}

/// Uniform value in the open interval (0, 1).
#[inline]
pub fn u01(key: u64) -> f64 {
    // 52 significant bits, offset by half a step so neither end is hit
    ((key >> 12) as f64 + 0.5) / (1u64 << 52) as f64
}

/// Standard circularly-symmetric complex Gaussian, E|z|^2 = 1.
///
/// Box-Muller on two decorrelated sub-keys of the input key.
#[inline]
pub fn gaussian_c(key: u64) -> Complex64 {
    let u1 = u01(mix(key ^ 0x5bf0_3635));
    let u2 = u01(mix(key ^ 0xc2b2_ae35));
    let r = (-u1.ln()).sqrt(); // E[r^2] = 1 for the complex pair
    let theta = std::f64::consts::TAU * u2;
    Complex64::new(r * theta.cos(), r * theta.sin())
}

/// Standard real Gaussian, unit variance.
#[inline]
pub fn gaussian_r(key: u64) -> f64 {
    let u1 = u01(mix(key ^ 0x1f83_d9ab));
    let u2 = u01(mix(key ^ 0x9b05_688c));
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Unit-modulus QPSK point selected by two bits of the key.
#[inline]
pub fn qpsk(key: u64) -> Complex64 {
    const A: f64 = std::f64::consts::FRAC_1_SQRT_2;
    let re = if key & 1 == 0 { A } else { -A };
    let im = if key & 2 == 0 { A } else { -A };
    Complex64::new(re, im)
}
