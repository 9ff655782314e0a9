//! Slot embedding: the FFT variant that evaluates real-coefficient
//! polynomials at the Galois orbit of odd roots of unity.
//!
//! A degree-N element carries N/2 slots. Packing the coefficients as
//! z_k = c_k + i*c_{k+N/2}, slot j equals sum_k z_k * zeta^(k * 5^j) with
//! zeta = e^(i*pi/N). The butterflies below compute that sum (and its
//! inverse) in O(n log n); tests pin them against the quadratic direct
//! evaluation.

use super::params::CkksParams;

#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Complex {
    pub re: f64,
    pub im: f64,
}

impl Complex {
    pub fn new(re: f64, im: f64) -> Self {
        Complex { re, im }
    }

    #[inline]
    pub fn add(self, o: Complex) -> Complex {
        Complex::new(self.re + o.re, self.im + o.im)
    }

    #[inline]
    pub fn sub(self, o: Complex) -> Complex {
        Complex::new(self.re - o.re, self.im - o.im)
    }

    #[inline]
    pub fn mul(self, o: Complex) -> Complex {
        Complex::new(
            self.re * o.re - self.im * o.im,
            self.re * o.im + self.im * o.re,
        )
    }
}

fn bit_reverse_permute(vals: &mut [Complex]) {
    let n = vals.len();
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = (i.reverse_bits() >> (usize::BITS - bits)) as usize;
        if i < j {
            vals.swap(i, j);
        }
    }
}

/// Forward slot transform: coefficients-as-complex -> slot values.
pub(crate) fn slot_fft(params: &CkksParams, vals: &mut [Complex]) {
    let slots = vals.len();
    debug_assert_eq!(slots, params.slots());
    let two_n = 2 * params.degree();
    let roots = &params.embed.roots;
    let rot = &params.embed.rot_group;

    bit_reverse_permute(vals);
    let mut len = 2;
    while len <= slots {
        let half = len >> 1;
        let quad = len << 2;
        for start in (0..slots).step_by(len) {
            for j in 0..half {
                let idx = (rot[j] % quad) * (two_n / quad);
                let (re, im) = roots[idx];
                let w = Complex::new(re, im);
                let u = vals[start + j];
                let v = vals[start + j + half].mul(w);
                vals[start + j] = u.add(v);
                vals[start + j + half] = u.sub(v);
            }
        }
        len <<= 1;
    }
}

/// Inverse slot transform: slot values -> coefficients-as-complex.
pub(crate) fn slot_fft_inverse(params: &CkksParams, vals: &mut [Complex]) {
    let slots = vals.len();
    debug_assert_eq!(slots, params.slots());
    let two_n = 2 * params.degree();
    let roots = &params.embed.roots;
    let rot = &params.embed.rot_group;

    let mut len = slots;
    while len >= 2 {
        let half = len >> 1;
        let quad = len << 2;
        for start in (0..slots).step_by(len) {
            for j in 0..half {
                let idx = (quad - (rot[j] % quad)) * (two_n / quad);
                let (re, im) = roots[idx % two_n];
                let w = Complex::new(re, im);
                let u = vals[start + j].add(vals[start + j + half]);
                let v = vals[start + j].sub(vals[start + j + half]).mul(w);
                vals[start + j] = u;
                vals[start + j + half] = v;
            }
        }
        len >>= 1;
    }
    bit_reverse_permute(vals);
    let inv = 1.0 / slots as f64;
    for v in vals.iter_mut() {
        v.re *= inv;
        v.im *= inv;
    }
}

/// Quadratic direct evaluation of the same transform; the oracle for tests.
#[cfg(test)]
pub(crate) fn slot_transform_direct(params: &CkksParams, vals: &[Complex]) -> Vec<Complex> {
    let slots = vals.len();
    let two_n = 2 * params.degree();
    let mut out = Vec::with_capacity(slots);
    for j in 0..slots {
        let g = params.embed.rot_group[j];
        let mut acc = Complex::new(0.0, 0.0);
        for (k, &z) in vals.iter().enumerate() {
            let idx = (k * g) % two_n;
            let (re, im) = params.embed.roots[idx];
            acc = acc.add(z.mul(Complex::new(re, im)));
        }
        out.push(acc);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ckks::params::SecurityLabel;
    use crate::ring::RingParams;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn tiny_params(n: usize) -> std::sync::Arc<CkksParams> {
        let ring = RingParams::generate(n, &[30, 22, 34]).unwrap();
        CkksParams::from_ring(ring, 22, SecurityLabel::ToyInsecure).unwrap()
    }

    #[test]
    fn fft_matches_direct_evaluation() {
        let mut rng = ChaCha20Rng::seed_from_u64(21);
        for n in [8usize, 32, 128] {
            let params = tiny_params(n);
            let vals: Vec<Complex> = (0..n / 2)
                .map(|_| Complex::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect();
            let expect = slot_transform_direct(&params, &vals);
            let mut got = vals.clone();
            slot_fft(&params, &mut got);
            for (g, e) in got.iter().zip(&expect) {
                assert!((g.re - e.re).abs() < 1e-9 && (g.im - e.im).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn inverse_then_forward_is_identity() {
        let mut rng = ChaCha20Rng::seed_from_u64(22);
        let params = tiny_params(64);
        let vals: Vec<Complex> = (0..32)
            .map(|_| Complex::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)))
            .collect();
        let mut work = vals.clone();
        slot_fft_inverse(&params, &mut work);
        slot_fft(&params, &mut work);
        for (w, v) in work.iter().zip(&vals) {
            assert!((w.re - v.re).abs() < 1e-10 && (w.im - v.im).abs() < 1e-10);
        }
    }
}
