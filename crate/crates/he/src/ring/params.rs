//! Ring parameters: degree, RNS prime chain, and per-prime NTT tables.

use std::collections::HashMap;
use std::sync::Arc;

use super::bigint::UBig;
use super::modarith::{is_prime, scan_prime_down, Modulus};
use super::ntt::NttTables;
use crate::{HeError, Result};

/// One prime of the chain with its transform tables.
#[derive(Clone, Debug)]
pub struct PrimeContext {
    pub modulus: Modulus,
    pub ntt: NttTables,
}

/// Parameters for R_q = Z_q[X]/(X^N + 1) in RNS form.
///
/// Immutable after construction; share via `Arc` across threads.
#[derive(Debug)]
pub struct RingParams {
    n: usize,
    primes: Vec<PrimeContext>,
    /// Exponent e_j such that evaluation slot j of the transform holds
    /// a(psi^e_j). Identical for every prime of the same degree; used to
    /// apply Galois maps as index permutations in the evaluation domain.
    eval_exponents: Vec<u32>,
    /// Inverse map: odd exponent mod 2n -> evaluation index.
    exp_to_index: Vec<u32>,
}

impl RingParams {
    /// Build a chain by scanning one prime per requested bit size, each
    /// congruent to 1 mod 2N, all distinct.
    pub fn generate(n: usize, prime_bits: &[u32]) -> Result<Arc<Self>> {
        if !n.is_power_of_two() || n < 4 {
            return Err(HeError::Params(format!(
                "degree {n} must be a power of two >= 4"
            )));
        }
        if prime_bits.len() < 2 {
            return Err(HeError::Params(
                "prime chain must have at least 2 primes".into(),
            ));
        }
        let step = 2 * n as u64;
        let mut primes = Vec::with_capacity(prime_bits.len());
        for &bits in prime_bits {
            let p = scan_prime_down(bits, step, &primes)
                .ok_or_else(|| HeError::Params(format!("no {bits}-bit prime = 1 mod {step}")))?;
            primes.push(p);
        }
        Self::from_primes(n, &primes)
    }

    /// Build from an explicit prime list (mostly for small test rings).
    pub fn from_primes(n: usize, primes: &[u64]) -> Result<Arc<Self>> {
        if !n.is_power_of_two() || n < 4 {
            return Err(HeError::Params(format!(
                "degree {n} must be a power of two >= 4"
            )));
        }
        if primes.len() < 2 {
            return Err(HeError::Params(
                "prime chain must have at least 2 primes".into(),
            ));
        }
        let step = 2 * n as u64;
        let mut ctxs = Vec::with_capacity(primes.len());
        for (i, &q) in primes.iter().enumerate() {
            if q >= (1u64 << 62) {
                return Err(HeError::Params(format!("prime {q} exceeds 62 bits")));
            }
            if !is_prime(q) {
                return Err(HeError::Params(format!("{q} is not prime")));
            }
            if q % step != 1 {
                return Err(HeError::Params(format!("{q} is not 1 mod {step}")));
            }
            if primes[..i].contains(&q) {
                return Err(HeError::Params(format!("duplicate prime {q}")));
            }
            let modulus = Modulus::new(q);
            ctxs.push(PrimeContext {
                modulus,
                ntt: NttTables::new(n, modulus),
            });
        }
        let (eval_exponents, exp_to_index) = derive_eval_order(n, &ctxs[0]);
        Ok(Arc::new(RingParams {
            n,
            primes: ctxs,
            eval_exponents,
            exp_to_index,
        }))
    }

    pub fn degree(&self) -> usize {
        self.n
    }

    /// Index of the last chain prime.
    pub fn max_level(&self) -> usize {
        self.primes.len() - 1
    }

    pub fn chain_len(&self) -> usize {
        self.primes.len()
    }

    pub fn prime(&self, i: usize) -> &PrimeContext {
        &self.primes[i]
    }

    pub fn prime_values(&self) -> Vec<u64> {
        self.primes.iter().map(|p| p.modulus.value()).collect()
    }

    /// Product of primes 0..=level as a big integer.
    pub fn modulus_product(&self, level: usize) -> UBig {
        let mut q = UBig::from_u64(1);
        for p in &self.primes[..=level] {
            q = q.mul_u64(p.modulus.value());
        }
        q
    }

    /// log2 of the product of primes 0..=level.
    pub fn modulus_log2(&self, level: usize) -> f64 {
        self.primes[..=level]
            .iter()
            .map(|p| (p.modulus.value() as f64).log2())
            .sum()
    }

    /// Evaluation-order exponent list (slot j holds a(psi^e_j)).
    pub fn eval_exponents(&self) -> &[u32] {
        &self.eval_exponents
    }

    /// Permutation realizing X -> X^g on evaluation-domain slots:
    /// out[j] = in[perm[j]].
    pub fn eval_permutation(&self, g: u64) -> Result<Vec<u32>> {
        let two_n = 2 * self.n as u64;
        if g % 2 == 0 || g >= two_n {
            return Err(HeError::Usage(format!(
                "Galois element {g} must be odd and < 2N"
            )));
        }
        let perm = self
            .eval_exponents
            .iter()
            .map(|&e| {
                let src = (e as u64 * g) % two_n;
                self.exp_to_index[src as usize]
            })
            .collect();
        Ok(perm)
    }
}

/// Recover which psi-power each evaluation slot corresponds to by
/// transforming the monomial X: slot j then holds psi^e_j directly, and a
/// discrete-log table over the odd powers inverts it.
fn derive_eval_order(n: usize, ctx: &PrimeContext) -> (Vec<u32>, Vec<u32>) {
    let mut probe = vec![0u64; n];
    probe[1] = 1;
    ctx.ntt.forward(&mut probe);

    let m = ctx.modulus;
    let psi = ctx.ntt.psi();
    let mut dlog = HashMap::with_capacity(n);
    let mut p = psi;
    let mut e = 1u32;
    let two_n = 2 * n as u32;
    while e < two_n {
        dlog.insert(p, e);
        p = m.mul(p, m.mul(psi, psi));
        e += 2;
    }

    let mut eval_exponents = Vec::with_capacity(n);
    let mut exp_to_index = vec![u32::MAX; 2 * n];
    for (j, &v) in probe.iter().enumerate() {
        let e = *dlog.get(&v).expect("transform of X is a psi power");
        eval_exponents.push(e);
        exp_to_index[e as usize] = j as u32;
    }
    (eval_exponents, exp_to_index)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generate_builds_congruent_distinct_chain() {
        let params = RingParams::generate(64, &[30, 22, 22, 34]).unwrap();
        let vals = params.prime_values();
        assert_eq!(vals.len(), 4);
        for &q in &vals {
            assert_eq!(q % 128, 1);
        }
        assert_ne!(vals[1], vals[2]);
        // Reproducible: same inputs, same chain.
        let again = RingParams::generate(64, &[30, 22, 22, 34]).unwrap();
        assert_eq!(vals, again.prime_values());
    }

    #[test]
    fn rejects_bad_chains() {
        assert!(RingParams::from_primes(8, &[17]).is_err()); // too short
        assert!(RingParams::from_primes(8, &[17, 17]).is_err()); // duplicate
        assert!(RingParams::from_primes(8, &[17, 19]).is_err()); // 19 != 1 mod 16
        assert!(RingParams::from_primes(6, &[17, 97]).is_err()); // degree not pow2
    }

    #[test]
    fn eval_exponents_are_odd_and_complete() {
        let params = RingParams::from_primes(8, &[17, 97]).unwrap();
        let mut seen = std::collections::HashSet::new();
        for &e in params.eval_exponents() {
            assert_eq!(e % 2, 1);
            assert!(seen.insert(e));
        }
        assert_eq!(seen.len(), 8);
    }

    #[test]
    fn eval_permutation_identity() {
        let params = RingParams::from_primes(8, &[17, 97]).unwrap();
        let perm = params.eval_permutation(1).unwrap();
        assert_eq!(perm, (0..8).collect::<Vec<u32>>());
        assert!(params.eval_permutation(2).is_err());
    }
}
