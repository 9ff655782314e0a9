//! Modular arithmetic for word-sized NTT primes.
//!
//! Every prime in a chain gets a [`Modulus`] with precomputed Barrett
//! constants, so reductions after a 64x64 multiply never divide. Hot loops
//! that multiply by a fixed operand (twiddles, key components) use Shoup
//! precomputation instead, which is two multiplies and one correction.

/// A prime modulus q < 2^62 with Barrett constants for 128-bit reduction.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Modulus {
    value: u64,
    // floor(2^128 / q), split into 64-bit words (lo, hi).
    ratio_lo: u64,
    ratio_hi: u64,
}

impl Modulus {
    pub fn new(q: u64) -> Self {
        assert!(q > 1 && q < (1u64 << 62), "modulus out of range");
        // q is odd in all uses, so floor((2^128 - 1) / q) == floor(2^128 / q).
        let ratio = u128::MAX / q as u128;
        Modulus {
            value: q,
            ratio_lo: ratio as u64,
            ratio_hi: (ratio >> 64) as u64,
        }
    }

    #[inline(always)]
    pub fn value(&self) -> u64 {
        self.value
    }

    /// Barrett reduction of a 128-bit value into [0, q).
    #[inline(always)]
    pub fn reduce_u128(&self, x: u128) -> u64 {
        let x0 = x as u64;
        let x1 = (x >> 64) as u64;
        // Estimate floor(x / q) as bits [128..192) of x * ratio.
        let lo_lo = ((x0 as u128 * self.ratio_lo as u128) >> 64) as u64;
        let mid1 = x0 as u128 * self.ratio_hi as u128;
        let mid2 = x1 as u128 * self.ratio_lo as u128;
        let hi = x1 as u128 * self.ratio_hi as u128;
        let carry = ((lo_lo as u128 + (mid1 as u64) as u128 + (mid2 as u64) as u128) >> 64) as u64;
        let q_hat = (hi as u64)
            .wrapping_add((mid1 >> 64) as u64)
            .wrapping_add((mid2 >> 64) as u64)
            .wrapping_add(carry);
        let r = x0.wrapping_sub(q_hat.wrapping_mul(self.value));
        if r >= self.value {
            r - self.value
        } else {
            r
        }
    }

    #[inline(always)]
    pub fn reduce_u64(&self, x: u64) -> u64 {
        if x < self.value {
            x
        } else {
            self.reduce_u128(x as u128)
        }
    }

    #[inline(always)]
    pub fn add(&self, a: u64, b: u64) -> u64 {
        let s = a + b;
        if s >= self.value {
            s - self.value
        } else {
            s
        }
    }

    #[inline(always)]
    pub fn sub(&self, a: u64, b: u64) -> u64 {
        if a >= b {
            a - b
        } else {
            a + self.value - b
        }
    }

    #[inline(always)]
    pub fn neg(&self, a: u64) -> u64 {
        if a == 0 {
            0
        } else {
            self.value - a
        }
    }

    #[inline(always)]
    pub fn mul(&self, a: u64, b: u64) -> u64 {
        self.reduce_u128(a as u128 * b as u128)
    }

    pub fn pow(&self, base: u64, mut exp: u64) -> u64 {
        let mut acc = 1u64;
        let mut b = self.reduce_u64(base);
        while exp > 0 {
            if exp & 1 == 1 {
                acc = self.mul(acc, b);
            }
            b = self.mul(b, b);
            exp >>= 1;
        }
        acc
    }

    /// Inverse of a modulo the (prime) modulus.
    pub fn inv(&self, a: u64) -> u64 {
        debug_assert!(a != 0);
        self.pow(a, self.value - 2)
    }

    /// Shoup precomputation floor(w * 2^64 / q) for a fixed multiplier w.
    #[inline]
    pub fn shoup(&self, w: u64) -> u64 {
        (((w as u128) << 64) / self.value as u128) as u64
    }

    /// Multiply by a fixed operand with its Shoup constant.
    #[inline(always)]
    pub fn mul_shoup(&self, a: u64, w: u64, w_shoup: u64) -> u64 {
        let hi = ((a as u128 * w_shoup as u128) >> 64) as u64;
        let r = a.wrapping_mul(w).wrapping_sub(hi.wrapping_mul(self.value));
        if r >= self.value {
            r - self.value
        } else {
            r
        }
    }
}

/// Deterministic Miller-Rabin for u64 (the fixed witness set is exact below 3.3e24).
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for p in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        if n == p {
            return true;
        }
        if n % p == 0 {
            return false;
        }
    }
    let mut d = n - 1;
    let mut s = 0u32;
    while d & 1 == 0 {
        d >>= 1;
        s += 1;
    }
    let m = Modulus::new(n);
    'witness: for a in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        let mut x = m.pow(a, d);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 0..s - 1 {
            x = m.mul(x, x);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Largest prime p < 2^bits with p = 1 (mod modulus_step), skipping entries
/// in `exclude`. Scanning downward from the bit boundary makes the chain a
/// pure function of (n, bit sizes).
pub fn scan_prime_down(bits: u32, modulus_step: u64, exclude: &[u64]) -> Option<u64> {
    assert!(bits >= 4 && bits <= 61);
    let top = 1u64 << bits;
    // Largest candidate = 1 (mod step) strictly below 2^bits.
    let mut c = top - ((top - 1) % modulus_step);
    loop {
        if c < (1u64 << (bits - 1)) {
            return None;
        }
        if !exclude.contains(&c) && is_prime(c) {
            return Some(c);
        }
        if c <= modulus_step {
            return None;
        }
        c -= modulus_step;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn barrett_matches_division() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        for &q in &[
            17u64,
            97,
            0x3fff_ffff_ffff_fb0b % ((1 << 62) - 1) | 1, // arbitrary odd
            (1u64 << 61) - 1,
            4611686018427387847, // large prime-ish odd below 2^62
        ] {
            let q = q | 1;
            let m = Modulus::new(q.max(3));
            for _ in 0..2000 {
                let a: u64 = rng.gen::<u64>() % m.value();
                let b: u64 = rng.gen::<u64>() % m.value();
                let x = a as u128 * b as u128;
                assert_eq!(m.reduce_u128(x), (x % m.value() as u128) as u64);
            }
        }
    }

    #[test]
    fn shoup_matches_barrett() {
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        let m = Modulus::new(scan_prime_down(50, 2048, &[]).unwrap());
        for _ in 0..2000 {
            let w = rng.gen::<u64>() % m.value();
            let ws = m.shoup(w);
            let a = rng.gen::<u64>() % m.value();
            assert_eq!(m.mul_shoup(a, w, ws), m.mul(a, w));
        }
    }

    #[test]
    fn pow_and_inv() {
        let m = Modulus::new(17);
        assert_eq!(m.pow(3, 16), 1); // Fermat
        for a in 1..17u64 {
            assert_eq!(m.mul(a, m.inv(a)), 1);
        }
    }

    #[test]
    fn primality_small() {
        let primes: Vec<u64> = (2..60).filter(|&n| is_prime(n)).collect();
        assert_eq!(
            primes,
            vec![2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59]
        );
        assert!(is_prime((1 << 61) - 1)); // Mersenne
        assert!(!is_prime(u64::MAX)); // 2^64-1 = 3*5*17*257*641*65537*6700417
    }

    #[test]
    fn prime_scan_congruence() {
        let p = scan_prime_down(22, 2 * 8192, &[]).unwrap();
        assert!(is_prime(p));
        assert_eq!(p % (2 * 8192), 1);
        assert!(p < (1 << 22) && p > (1 << 21));
        let p2 = scan_prime_down(22, 2 * 8192, &[p]).unwrap();
        assert_ne!(p, p2);
    }
}
