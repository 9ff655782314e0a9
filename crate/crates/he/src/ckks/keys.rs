//! Key material: secret, public, relinearization, and rotation keys.
//!
//! Key switching uses one RNS digit per ciphertext prime plus the chain's
//! final key-switch prime: digit j of a switching key encrypts
//! (P mod q_j) * s' "in the q_j position", so accumulating the decomposed
//! ciphertext against the digits and dividing by P lands back on s.
//!
//! The uniform `a` halves of switching keys are expanded from a stored
//! 32-byte seed, which keeps serialized key sets at half size and makes
//! regeneration deterministic.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

use super::params::{CkksParams, Fingerprint};
use crate::ring::{sampling, Domain, RingElement};
use crate::{HeError, Result};

/// Ternary secret, kept at the full chain (including the key-switch prime).
pub struct SecretKey {
    params: Arc<CkksParams>,
    fingerprint: Fingerprint,
    /// Signed ternary coefficients, for key files.
    coeffs: Vec<i8>,
    /// Evaluation-domain lift over the full chain.
    s_full: RingElement,
}

impl SecretKey {
    pub(crate) fn from_ternary(params: &Arc<CkksParams>, coeffs: Vec<i8>) -> Self {
        let signed: Vec<i64> = coeffs.iter().map(|&c| c as i64).collect();
        let s_full =
            RingElement::from_signed_coeffs(params.ring(), params.special_index(), &signed)
                .ntt_forward()
                .expect("coefficient element transforms");
        SecretKey {
            params: params.clone(),
            fingerprint: params.fingerprint(),
            coeffs,
            s_full,
        }
    }

    /// Rebuild a secret key from stored ternary coefficients.
    pub fn from_coeffs(params: &Arc<CkksParams>, coeffs: Vec<i8>) -> Result<Self> {
        if coeffs.len() != params.degree() {
            return Err(HeError::Shape(format!(
                "secret coefficient count {} != degree {}",
                coeffs.len(),
                params.degree()
            )));
        }
        if coeffs.iter().any(|&c| !(-1..=1).contains(&c)) {
            return Err(HeError::Usage("secret coefficients must be ternary".into()));
        }
        Ok(Self::from_ternary(params, coeffs))
    }

    pub fn params(&self) -> &Arc<CkksParams> {
        &self.params
    }

    pub fn fingerprint(&self) -> Fingerprint {
        self.fingerprint
    }

    pub fn ternary_coeffs(&self) -> &[i8] {
        &self.coeffs
    }

    pub(crate) fn element_full(&self) -> &RingElement {
        &self.s_full
    }

    pub(crate) fn element_at(&self, level: usize) -> RingElement {
        if level == self.s_full.level() {
            self.s_full.clone()
        } else {
            self.s_full
                .drop_level(level)
                .expect("level below full chain")
        }
    }
}

/// RLWE public encryption key (b, a) with b = -(a*s) + e.
pub struct PublicKey {
    pub(crate) b: RingElement,
    pub(crate) a: RingElement,
    fingerprint: Fingerprint,
}

impl PublicKey {
    pub fn fingerprint(&self) -> Fingerprint {
        self.fingerprint
    }

    pub fn parts(&self) -> (&RingElement, &RingElement) {
        (&self.b, &self.a)
    }

    pub fn from_parts(params: &Arc<CkksParams>, b: RingElement, a: RingElement) -> Self {
        PublicKey {
            b,
            a,
            fingerprint: params.fingerprint(),
        }
    }
}

/// One digit of switching material.
#[derive(Clone)]
pub(crate) struct KskDigit {
    pub b: RingElement,
    pub a: RingElement,
}

/// Key-switching key: converts a component under some s' into one under s.
#[derive(Clone)]
pub struct KeySwitchKey {
    fingerprint: Fingerprint,
    a_seed: [u8; 32],
    pub(crate) digits: Vec<KskDigit>,
}

impl KeySwitchKey {
    pub fn fingerprint(&self) -> Fingerprint {
        self.fingerprint
    }

    pub fn a_seed(&self) -> [u8; 32] {
        self.a_seed
    }

    pub fn digit_count(&self) -> usize {
        self.digits.len()
    }

    pub fn digit_b_residues(&self, j: usize) -> &[Vec<u64>] {
        self.digits[j].b.residues()
    }

    /// Rebuild from the seed plus serialized b halves.
    pub fn from_b_parts(
        params: &Arc<CkksParams>,
        a_seed: [u8; 32],
        b_parts: Vec<Vec<Vec<u64>>>,
    ) -> Result<Self> {
        let expect = params.ciphertext_primes();
        if b_parts.len() != expect {
            return Err(HeError::Shape(format!(
                "switching key holds {} digits, expected {expect}",
                b_parts.len()
            )));
        }
        let full = params.special_index();
        let mut digits = Vec::with_capacity(expect);
        for (j, b) in b_parts.into_iter().enumerate() {
            if b.len() != full + 1 || b.iter().any(|r| r.len() != params.degree()) {
                return Err(HeError::Shape("switching key digit has wrong shape".into()));
            }
            let a = expand_a(params, &a_seed, j);
            digits.push(KskDigit {
                b: RingElement::from_residues(params.ring(), full, Domain::Evaluation, b),
                a,
            });
        }
        Ok(KeySwitchKey {
            fingerprint: params.fingerprint(),
            a_seed,
            digits,
        })
    }
}

/// Switching key for s^2, consumed by relinearization.
#[derive(Clone)]
pub struct RelinKey(pub(crate) KeySwitchKey);

impl RelinKey {
    pub fn fingerprint(&self) -> Fingerprint {
        self.0.fingerprint()
    }

    pub fn inner(&self) -> &KeySwitchKey {
        &self.0
    }

    pub fn from_inner(k: KeySwitchKey) -> Self {
        RelinKey(k)
    }
}

/// Rotation key for one step: the Galois element, the evaluation-domain
/// slot permutation it induces, and switching material for the permuted
/// secret.
#[derive(Clone)]
pub struct GaloisKey {
    pub(crate) perm: Vec<u32>,
    pub(crate) ksk: KeySwitchKey,
}

/// Rotation keys indexed by signed step.
pub struct GaloisKeySet {
    fingerprint: Fingerprint,
    pub(crate) keys: BTreeMap<i32, GaloisKey>,
}

impl GaloisKeySet {
    pub fn fingerprint(&self) -> Fingerprint {
        self.fingerprint
    }

    pub fn steps(&self) -> Vec<i32> {
        self.keys.keys().copied().collect()
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn contains(&self, step: i32) -> bool {
        self.keys.contains_key(&step)
    }

    pub(crate) fn get(&self, step: i32) -> Result<&GaloisKey> {
        self.keys
            .get(&step)
            .ok_or(HeError::MissingRotationKey(step))
    }

    pub fn key_material(&self, step: i32) -> Option<&KeySwitchKey> {
        self.keys.get(&step).map(|k| &k.ksk)
    }

    pub fn from_entries(
        params: &Arc<CkksParams>,
        entries: Vec<(i32, KeySwitchKey)>,
    ) -> Result<Self> {
        let mut keys = BTreeMap::new();
        for (step, ksk) in entries {
            let element = params.galois_element(step);
            let perm = params.ring().eval_permutation(element)?;
            keys.insert(step, GaloisKey { perm, ksk });
        }
        Ok(GaloisKeySet {
            fingerprint: params.fingerprint(),
            keys,
        })
    }
}

fn derive_digit_seed(a_seed: &[u8; 32], digit: usize) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(b"cryptotl-ksk-digit");
    h.update(a_seed);
    h.update((digit as u64).to_le_bytes());
    h.finalize().into()
}

/// Uniform evaluation-domain element for digit j, replayable from the seed.
fn expand_a(params: &Arc<CkksParams>, a_seed: &[u8; 32], digit: usize) -> RingElement {
    let mut rng = ChaCha20Rng::from_seed(derive_digit_seed(a_seed, digit));
    let full = params.special_index();
    let n = params.degree();
    let mut residues = Vec::with_capacity(full + 1);
    for i in 0..=full {
        let q = params.ring().prime(i).modulus.value();
        residues.push((0..n).map(|_| rng.gen_range(0..q)).collect());
    }
    RingElement::from_residues(params.ring(), full, Domain::Evaluation, residues)
}

/// Build switching material moving components under `target` back under s.
pub(crate) fn gen_key_switch_key<R: Rng>(
    sk: &SecretKey,
    target: &RingElement,
    a_seed: [u8; 32],
    rng: &mut R,
) -> KeySwitchKey {
    let params = sk.params();
    let full = params.special_index();
    let digits_n = params.ciphertext_primes();
    let mut digits = Vec::with_capacity(digits_n);
    for j in 0..digits_n {
        let a = expand_a(params, &a_seed, j);
        let e = sampling::sample_error(params.ring(), full, rng)
            .ntt_forward()
            .expect("error element transforms");
        let mut b = a
            .mul(sk.element_full())
            .expect("same level")
            .neg()
            .add(&e)
            .expect("same level");
        // Digit j carries (P mod q_j) * target in the q_j slot.
        let m = params.ring().prime(j).modulus;
        let p_mod = params.special_mod_qi[j];
        let p_shoup = m.shoup(p_mod);
        let tgt = &target.residues()[j];
        let bj = &mut b.residues_mut()[j];
        for (x, &t) in bj.iter_mut().zip(tgt) {
            *x = m.add(*x, m.mul_shoup(t, p_mod, p_shoup));
        }
        digits.push(KskDigit { b, a });
    }
    KeySwitchKey {
        fingerprint: params.fingerprint(),
        a_seed,
        digits,
    }
}

fn seed_from_rng<R: Rng>(rng: &mut R) -> [u8; 32] {
    let mut s = [0u8; 32];
    rng.fill(&mut s);
    s
}

/// Generate the secret, public, and relinearization keys from a seed.
pub fn keygen(params: &Arc<CkksParams>, seed: u64) -> Result<(SecretKey, PublicKey, RelinKey)> {
    if params.ring().chain_len() < 2 {
        return Err(HeError::Params("chain too short for key generation".into()));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);

    let coeffs: Vec<i8> = sampling::sample_ternary_coeffs(params.degree(), &mut rng)
        .into_iter()
        .map(|c| c as i8)
        .collect();
    let sk = SecretKey::from_ternary(params, coeffs);

    let max = params.max_level();
    let a = sampling::sample_uniform(params.ring(), max, &mut rng)
        .ntt_forward()
        .expect("uniform element transforms");
    let e = sampling::sample_error(params.ring(), max, &mut rng)
        .ntt_forward()
        .expect("error element transforms");
    let s_ct = sk.element_at(max);
    let b = a.mul(&s_ct)?.neg().add(&e)?;
    let pk = PublicKey {
        b,
        a,
        fingerprint: params.fingerprint(),
    };

    let s_sq = sk.element_full().mul(sk.element_full())?;
    let relin_seed = seed_from_rng(&mut rng);
    let relin = RelinKey(gen_key_switch_key(&sk, &s_sq, relin_seed, &mut rng));
    Ok((sk, pk, relin))
}

/// Generate rotation keys for exactly the listed steps.
pub fn gen_galois_keys(sk: &SecretKey, steps: &[i32], seed: u64) -> Result<GaloisKeySet> {
    if steps.is_empty() {
        return Err(HeError::Usage("rotation step set must not be empty".into()));
    }
    let params = sk.params();
    let half = (params.slots() as i64) / 2;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut keys = BTreeMap::new();
    let mut ordered: Vec<i32> = steps.to_vec();
    ordered.sort_unstable();
    ordered.dedup();
    for step in ordered {
        if (step as i64).abs() >= half.max(1) {
            return Err(HeError::Usage(format!(
                "rotation step {step} out of range for {} slots",
                params.slots()
            )));
        }
        let element = params.galois_element(step);
        let perm = params.ring().eval_permutation(element)?;
        let target = sk.element_full().apply_automorphism(element)?;
        let ksk_seed = seed_from_rng(&mut rng);
        let ksk = gen_key_switch_key(sk, &target, ksk_seed, &mut rng);
        keys.insert(step, GaloisKey { perm, ksk });
    }
    Ok(GaloisKeySet {
        fingerprint: params.fingerprint(),
        keys,
    })
}
