//! Negacyclic number-theoretic transform for one chain prime.
//!
//! Forward is a Cooley-Tukey decimation-in-time pass, inverse is
//! Gentleman-Sande, both over twiddle tables of psi powers stored in
//! bit-reversed order (psi is a primitive 2n-th root of unity, so the
//! negacyclic fold is absorbed into the twiddles). Pointwise products in
//! the transformed domain equal negacyclic convolution of coefficients.

use super::modarith::Modulus;

#[derive(Clone, Debug)]
pub struct NttTables {
    n: usize,
    modulus: Modulus,
    psi: u64,
    fwd: Vec<u64>,
    fwd_shoup: Vec<u64>,
    inv: Vec<u64>,
    inv_shoup: Vec<u64>,
    n_inv: u64,
    n_inv_shoup: u64,
}

fn bit_reverse(x: usize, bits: u32) -> usize {
    x.reverse_bits() >> (usize::BITS - bits)
}

impl NttTables {
    /// Build tables for ring degree n under prime q (q = 1 mod 2n).
    pub fn new(n: usize, modulus: Modulus) -> Self {
        assert!(n.is_power_of_two() && n >= 2);
        let q = modulus.value();
        assert_eq!((q - 1) % (2 * n as u64), 0, "prime not NTT-friendly");
        let psi = find_primitive_root_2n(n, &modulus);
        let psi_inv = modulus.inv(psi);
        let bits = n.trailing_zeros();

        let mut fwd = vec![0u64; n];
        let mut inv = vec![0u64; n];
        let mut p = 1u64;
        let mut pi = 1u64;
        // fwd[bitrev(i)] = psi^i ; inv[bitrev(i)] = psi^-i
        for i in 0..n {
            fwd[bit_reverse(i, bits)] = p;
            inv[bit_reverse(i, bits)] = pi;
            p = modulus.mul(p, psi);
            pi = modulus.mul(pi, psi_inv);
        }
        let fwd_shoup = fwd.iter().map(|&w| modulus.shoup(w)).collect();
        let inv_shoup = inv.iter().map(|&w| modulus.shoup(w)).collect();
        let n_inv = modulus.inv(n as u64);
        let n_inv_shoup = modulus.shoup(n_inv);
        NttTables {
            n,
            modulus,
            psi,
            fwd,
            fwd_shoup,
            inv,
            inv_shoup,
            n_inv,
            n_inv_shoup,
        }
    }

    pub fn degree(&self) -> usize {
        self.n
    }

    pub fn modulus(&self) -> &Modulus {
        &self.modulus
    }

    /// The primitive 2n-th root the tables were built from.
    pub fn psi(&self) -> u64 {
        self.psi
    }

    /// In-place forward transform; input coefficient order, output the
    /// fixed evaluation order shared by every prime of the same degree.
    pub fn forward(&self, a: &mut [u64]) {
        debug_assert_eq!(a.len(), self.n);
        let m = &self.modulus;
        let mut t = self.n;
        let mut groups = 1usize;
        while groups < self.n {
            t >>= 1;
            for i in 0..groups {
                let w = self.fwd[groups + i];
                let ws = self.fwd_shoup[groups + i];
                let j1 = 2 * i * t;
                for j in j1..j1 + t {
                    let u = a[j];
                    let v = m.mul_shoup(a[j + t], w, ws);
                    a[j] = m.add(u, v);
                    a[j + t] = m.sub(u, v);
                }
            }
            groups <<= 1;
        }
    }

    /// In-place inverse transform.
    pub fn inverse(&self, a: &mut [u64]) {
        debug_assert_eq!(a.len(), self.n);
        let m = &self.modulus;
        let mut t = 1usize;
        let mut groups = self.n;
        while groups > 1 {
            let h = groups >> 1;
            let mut j1 = 0usize;
            for i in 0..h {
                let w = self.inv[h + i];
                let ws = self.inv_shoup[h + i];
                for j in j1..j1 + t {
                    let u = a[j];
                    let v = a[j + t];
                    a[j] = m.add(u, v);
                    a[j + t] = m.mul_shoup(m.sub(u, v), w, ws);
                }
                j1 += 2 * t;
            }
            t <<= 1;
            groups = h;
        }
        for x in a.iter_mut() {
            *x = m.mul_shoup(*x, self.n_inv, self.n_inv_shoup);
        }
    }
}

/// Smallest x whose (q-1)/2n power has multiplicative order exactly 2n.
fn find_primitive_root_2n(n: usize, modulus: &Modulus) -> u64 {
    let q = modulus.value();
    let exp = (q - 1) / (2 * n as u64);
    for x in 2..q {
        let c = modulus.pow(x, exp);
        // order 2n iff c^n = -1
        if modulus.pow(c, n as u64) == q - 1 {
            return c;
        }
    }
    unreachable!("no primitive root found for an NTT-friendly prime");
}

/// Schoolbook negacyclic product, the O(n^2) oracle the transform is
/// checked against.
pub fn negacyclic_schoolbook(a: &[u64], b: &[u64], modulus: &Modulus) -> Vec<u64> {
    let n = a.len();
    assert_eq!(b.len(), n);
    let q = modulus.value();
    let mut out = vec![0u64; n];
    for i in 0..n {
        for j in 0..n {
            let p = modulus.mul(a[i], b[j]);
            let k = i + j;
            if k < n {
                out[k] = modulus.add(out[k], p);
            } else {
                out[k - n] = modulus.sub(out[k - n], p % q);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ring::modarith::scan_prime_down;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn tables(n: usize, q: u64) -> NttTables {
        NttTables::new(n, Modulus::new(q))
    }

    #[test]
    fn forward_inverse_roundtrip() {
        let mut rng = ChaCha20Rng::seed_from_u64(42);
        for (n, q) in [
            (8usize, 17u64),
            (16, 97),
            (64, scan_prime_down(30, 128, &[]).unwrap()),
        ] {
            let t = tables(n, q);
            for _ in 0..20 {
                let orig: Vec<u64> = (0..n).map(|_| rng.gen::<u64>() % q).collect();
                let mut a = orig.clone();
                t.forward(&mut a);
                t.inverse(&mut a);
                assert_eq!(a, orig);
            }
        }
    }

    #[test]
    fn constant_one_transforms_to_all_ones() {
        let t = tables(16, 97);
        let mut a = vec![0u64; 16];
        a[0] = 1;
        t.forward(&mut a);
        assert_eq!(a, vec![1u64; 16]);
    }

    #[test]
    fn one_plus_x_squared_matches_schoolbook_n8_q17() {
        // (1 + X)^2 in Z_17[X]/(X^8+1)
        let t = tables(8, 17);
        let mut a = vec![0u64; 8];
        a[0] = 1;
        a[1] = 1;
        let expect = negacyclic_schoolbook(&a, &a, t.modulus());
        let mut f = a.clone();
        t.forward(&mut f);
        let mut prod: Vec<u64> = f.iter().map(|&x| t.modulus().mul(x, x)).collect();
        t.inverse(&mut prod);
        assert_eq!(prod, expect);
        assert_eq!(prod, vec![1, 2, 1, 0, 0, 0, 0, 0]);
    }

    #[test]
    fn random_products_match_schoolbook() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let q = scan_prime_down(40, 2 * 32, &[]).unwrap();
        let t = tables(32, q);
        for _ in 0..25 {
            let a: Vec<u64> = (0..32).map(|_| rng.gen::<u64>() % q).collect();
            let b: Vec<u64> = (0..32).map(|_| rng.gen::<u64>() % q).collect();
            let expect = negacyclic_schoolbook(&a, &b, t.modulus());
            let (mut fa, mut fb) = (a.clone(), b.clone());
            t.forward(&mut fa);
            t.forward(&mut fb);
            let mut prod: Vec<u64> = fa
                .iter()
                .zip(&fb)
                .map(|(&x, &y)| t.modulus().mul(x, y))
                .collect();
            t.inverse(&mut prod);
            assert_eq!(prod, expect);
        }
    }
}
