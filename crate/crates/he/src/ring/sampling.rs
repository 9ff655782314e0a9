//! Seeded sampling of ring elements: uniform, ternary, and error noise.
//!
//! All samplers take an explicit RNG so key generation and encryption are
//! reproducible from a seed.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::Rng;

use super::element::{Domain, RingElement};
use super::params::RingParams;

/// Standard deviation of the error distribution.
pub const ERROR_STDDEV: f64 = 3.2;

/// Uniform residues under every active prime.
pub fn sample_uniform<R: Rng>(params: &Arc<RingParams>, level: usize, rng: &mut R) -> RingElement {
    let n = params.degree();
    let mut residues = Vec::with_capacity(level + 1);
    for i in 0..=level {
        let q = params.prime(i).modulus.value();
        residues.push((0..n).map(|_| rng.gen_range(0..q)).collect());
    }
    RingElement::from_residues(params, level, Domain::Coefficient, residues)
}

/// Signed ternary coefficients, each of {-1, 0, 1} with equal weight.
pub fn sample_ternary_coeffs<R: Rng>(n: usize, rng: &mut R) -> Vec<i64> {
    (0..n).map(|_| rng.gen_range(0..3i64) - 1).collect()
}

/// Ternary element lifted to the requested level.
pub fn sample_ternary<R: Rng>(params: &Arc<RingParams>, level: usize, rng: &mut R) -> RingElement {
    let coeffs = sample_ternary_coeffs(params.degree(), rng);
    RingElement::from_signed_coeffs(params, level, &coeffs)
}

/// Centered discrete Gaussian coefficients (Box-Muller, rounded).
pub fn sample_error_coeffs<R: Rng>(n: usize, rng: &mut R) -> Vec<i64> {
    (0..n)
        .map(|_| {
            let u1: f64 = 1.0 - rng.gen::<f64>(); // (0, 1]
            let u2: f64 = rng.gen();
            let z = (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos();
            (z * ERROR_STDDEV).round() as i64
        })
        .collect()
}

/// Error element lifted to the requested level.
pub fn sample_error<R: Rng>(params: &Arc<RingParams>, level: usize, rng: &mut R) -> RingElement {
    let coeffs = sample_error_coeffs(params.degree(), rng);
    RingElement::from_signed_coeffs(params, level, &coeffs)
}
