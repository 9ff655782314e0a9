//! CKKS parameter sets: ring, modulus chain layout, scale, and identity.
//!
//! The last chain prime is reserved for key switching and never carries
//! ciphertext data; fresh ciphertexts start at the level just below it.
//! Every key and ciphertext is bound to a parameter fingerprint so that
//! material from different parameter sets cannot be mixed silently.

use std::sync::Arc;

use sha2::{Digest, Sha256};

use crate::ring::RingParams;
use crate::{HeError, Result};

/// Provenance label for a parameter set. `Standard128` marks the presets
/// whose sizes follow common 128-bit-security tables; `ToyInsecure` marks
/// deliberately undersized rings for tests and must never be served
/// without an explicit override.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SecurityLabel {
    Standard128,
    ToyInsecure,
}

/// SHA-256 digest binding keys and ciphertexts to one parameter set.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Fingerprint(pub [u8; 32]);

impl Fingerprint {
    pub fn to_hex(&self) -> String {
        self.0.iter().map(|b| format!("{b:02x}")).collect()
    }
}

impl std::fmt::Debug for Fingerprint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Fingerprint({})", &self.to_hex()[..16])
    }
}

/// Bit layout of the modulus chain: one first prime (integer headroom),
/// `mid_count` rescaling primes near the scale, one key-switch prime.
#[derive(Clone, Copy, Debug)]
pub struct ChainSpec {
    pub first_bits: u32,
    pub mid_bits: u32,
    pub mid_count: usize,
    pub special_bits: u32,
}

/// Scale cap: reserving integer headroom above the scale stops working
/// past 60 bits, so larger scales are rejected outright.
pub const MAX_LOG2_SCALE: u32 = 60;

/// Complex root tables for the slot embedding.
#[derive(Debug)]
pub(crate) struct EmbeddingTables {
    /// e^(2*pi*i*j / 2N) for j in 0..2N, as (re, im).
    pub roots: Vec<(f64, f64)>,
    /// 5^j mod 2N for j in 0..slots.
    pub rot_group: Vec<usize>,
}

#[derive(Debug)]
pub struct CkksParams {
    ring: Arc<RingParams>,
    log2_scale: u32,
    label: SecurityLabel,
    fingerprint: Fingerprint,
    pub(crate) embed: EmbeddingTables,
    /// Exact log2 of each chain prime.
    log2_primes: Vec<f64>,
    /// Key-switch prime reduced mod each ciphertext prime.
    pub(crate) special_mod_qi: Vec<u64>,
    /// Inverse of the key-switch prime mod each ciphertext prime.
    pub(crate) special_inv_mod_qi: Vec<u64>,
    /// rescale_inv[l][m] = q_l^-1 mod q_m for m < l (ciphertext primes).
    pub(crate) rescale_inv: Vec<Vec<u64>>,
}

impl CkksParams {
    pub fn build(
        n: usize,
        chain: ChainSpec,
        log2_scale: u32,
        label: SecurityLabel,
    ) -> Result<Arc<Self>> {
        if log2_scale > MAX_LOG2_SCALE {
            return Err(HeError::Params(format!(
                "log2 scale {log2_scale} exceeds the {MAX_LOG2_SCALE}-bit cap"
            )));
        }
        if chain.mid_count < 1 {
            return Err(HeError::Params("chain needs at least one mid prime".into()));
        }
        if (chain.mid_bits as i64 - log2_scale as i64).abs() > 1 {
            return Err(HeError::Params(format!(
                "mid primes ({} bits) must sit within 1 bit of the scale ({} bits)",
                chain.mid_bits, log2_scale
            )));
        }
        let mut bits = Vec::with_capacity(chain.mid_count + 2);
        bits.push(chain.first_bits);
        bits.extend(std::iter::repeat(chain.mid_bits).take(chain.mid_count));
        bits.push(chain.special_bits);
        let ring = RingParams::generate(n, &bits)?;
        Self::from_ring(ring, log2_scale, label)
    }

    /// Wrap an existing ring chain (the last prime becomes the key-switch
    /// prime). Used by the builders above and by small hand-rolled tests.
    pub fn from_ring(
        ring: Arc<RingParams>,
        log2_scale: u32,
        label: SecurityLabel,
    ) -> Result<Arc<Self>> {
        if log2_scale > MAX_LOG2_SCALE {
            return Err(HeError::Params(format!(
                "log2 scale {log2_scale} exceeds the {MAX_LOG2_SCALE}-bit cap"
            )));
        }
        if ring.chain_len() < 2 {
            return Err(HeError::Params("chain must hold at least 2 primes".into()));
        }
        let n = ring.degree();
        let slots = n / 2;
        let two_n = 2 * n;

        let mut roots = Vec::with_capacity(two_n);
        for j in 0..two_n {
            let theta = 2.0 * std::f64::consts::PI * j as f64 / two_n as f64;
            roots.push((theta.cos(), theta.sin()));
        }
        let mut rot_group = Vec::with_capacity(slots);
        let mut g = 1usize;
        for _ in 0..slots {
            rot_group.push(g);
            g = (g * 5) % two_n;
        }

        let log2_primes: Vec<f64> = ring
            .prime_values()
            .iter()
            .map(|&q| (q as f64).log2())
            .collect();

        let ct_primes = ring.chain_len() - 1;
        let special = ring.prime(ct_primes).modulus.value();
        let mut special_mod_qi = Vec::with_capacity(ct_primes);
        let mut special_inv_mod_qi = Vec::with_capacity(ct_primes);
        for i in 0..ct_primes {
            let m = ring.prime(i).modulus;
            let p_mod = m.reduce_u128(special as u128);
            special_mod_qi.push(p_mod);
            special_inv_mod_qi.push(m.inv(p_mod));
        }
        let mut rescale_inv = Vec::with_capacity(ct_primes);
        for l in 0..ct_primes {
            let ql = ring.prime(l).modulus.value();
            let mut row = Vec::with_capacity(l);
            for m in 0..l {
                let modulus = ring.prime(m).modulus;
                row.push(modulus.inv(modulus.reduce_u128(ql as u128)));
            }
            rescale_inv.push(row);
        }

        let fingerprint = compute_fingerprint(&ring, log2_scale, label);
        Ok(Arc::new(CkksParams {
            ring,
            log2_scale,
            label,
            fingerprint,
            embed: EmbeddingTables { roots, rot_group },
            log2_primes,
            special_mod_qi,
            special_inv_mod_qi,
            rescale_inv,
        }))
    }

    /// Preset p1: N = 8192, 218-bit chain (40 + 6x22 + 46), scale 2^22.
    /// Mirrors the fast low-precision production preset.
    pub fn preset_p1() -> Arc<Self> {
        Self::build(
            8192,
            ChainSpec {
                first_bits: 40,
                mid_bits: 22,
                mid_count: 6,
                special_bits: 46,
            },
            22,
            SecurityLabel::Standard128,
        )
        .expect("p1 preset is well formed")
    }

    /// Preset p2: N = 16384, 420-bit chain (60 + 6x50 + 60), scale 2^50.
    /// Trades runtime for precision.
    pub fn preset_p2() -> Arc<Self> {
        Self::build(
            16384,
            ChainSpec {
                first_bits: 60,
                mid_bits: 50,
                mid_count: 6,
                special_bits: 60,
            },
            50,
            SecurityLabel::Standard128,
        )
        .expect("p2 preset is well formed")
    }

    /// Deliberately undersized preset for fast tests. Offers no security
    /// whatsoever; `serve` refuses it without an explicit override.
    pub fn preset_toy_insecure() -> Arc<Self> {
        Self::build(
            1024,
            ChainSpec {
                first_bits: 30,
                mid_bits: 22,
                mid_count: 6,
                special_bits: 34,
            },
            22,
            SecurityLabel::ToyInsecure,
        )
        .expect("toy preset is well formed")
    }

    /// Look a preset up by its CLI name.
    pub fn preset_by_name(name: &str) -> Option<Arc<Self>> {
        match name {
            "p1" => Some(Self::preset_p1()),
            "p2" => Some(Self::preset_p2()),
            "toy" => Some(Self::preset_toy_insecure()),
            _ => None,
        }
    }

    pub fn ring(&self) -> &Arc<RingParams> {
        &self.ring
    }

    pub fn degree(&self) -> usize {
        self.ring.degree()
    }

    pub fn slots(&self) -> usize {
        self.ring.degree() / 2
    }

    /// Number of primes available to ciphertexts (chain minus the
    /// key-switch prime).
    pub fn ciphertext_primes(&self) -> usize {
        self.ring.chain_len() - 1
    }

    /// Highest ciphertext level; fresh ciphertexts start here.
    pub fn max_level(&self) -> usize {
        self.ciphertext_primes() - 1
    }

    /// Chain index of the key-switch prime.
    pub fn special_index(&self) -> usize {
        self.ring.chain_len() - 1
    }

    /// Rescaling budget: number of mid primes.
    pub fn supported_depth(&self) -> usize {
        self.ciphertext_primes() - 1
    }

    pub fn log2_scale(&self) -> u32 {
        self.log2_scale
    }

    pub fn label(&self) -> SecurityLabel {
        self.label
    }

    pub fn is_insecure(&self) -> bool {
        self.label == SecurityLabel::ToyInsecure
    }

    pub fn fingerprint(&self) -> Fingerprint {
        self.fingerprint
    }

    /// Exact log2 of chain prime i.
    pub fn log2_prime(&self, i: usize) -> f64 {
        self.log2_primes[i]
    }

    /// log2 of the ciphertext modulus at `level`.
    pub fn log2_modulus(&self, level: usize) -> f64 {
        self.log2_primes[..=level].iter().sum()
    }

    /// Total nominal chain bits (ceil of log2 per prime, summed).
    pub fn total_chain_bits(&self) -> u32 {
        self.ring
            .prime_values()
            .iter()
            .map(|&q| 64 - q.leading_zeros())
            .sum()
    }

    /// Galois element implementing a cyclic left rotation by `step` slots.
    pub fn galois_element(&self, step: i32) -> u64 {
        let slots = self.slots() as i64;
        let r = (step as i64).rem_euclid(slots) as usize;
        self.embed.rot_group[r] as u64
    }
}

fn compute_fingerprint(
    ring: &Arc<RingParams>,
    log2_scale: u32,
    label: SecurityLabel,
) -> Fingerprint {
    let mut h = Sha256::new();
    h.update(b"cryptotl-ckks-params-v1");
    h.update((ring.degree() as u64).to_le_bytes());
    for q in ring.prime_values() {
        h.update(q.to_le_bytes());
    }
    h.update(log2_scale.to_le_bytes());
    h.update([match label {
        SecurityLabel::Standard128 => 0u8,
        SecurityLabel::ToyInsecure => 1u8,
    }]);
    Fingerprint(h.finalize().into())
}
