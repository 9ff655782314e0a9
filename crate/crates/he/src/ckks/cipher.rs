//! Plaintexts, ciphertexts, encoding, and the encrypt/decrypt pair.
//!
//! Scales are tracked as log2 values. Multiplication adds them, rescaling
//! subtracts the exact log2 of the dropped prime, and additions demand
//! agreement within one part in 2^40. Serializing the log2 value is
//! therefore lossless.

use std::sync::Arc;

use rand::Rng;

use super::embedding::{slot_fft, slot_fft_inverse, Complex};
use super::keys::{PublicKey, SecretKey};
use super::params::{CkksParams, Fingerprint};
use crate::ring::bigint::UBig;
use crate::ring::{sampling, Domain, RingElement};
use crate::{HeError, Result};

/// Headroom (bits) the encoder insists on between the scaled payload and
/// the active modulus, so noise growth cannot wrap.
pub const ENCODE_MARGIN_BITS: f64 = 2.0;

/// An encoded (unencrypted) vector: ring element, level, log2 scale.
#[derive(Clone)]
pub struct Plaintext {
    params: Arc<CkksParams>,
    element: RingElement,
    scale_log2: f64,
}

impl Plaintext {
    pub fn params(&self) -> &Arc<CkksParams> {
        &self.params
    }

    pub fn level(&self) -> usize {
        self.element.level()
    }

    pub fn scale_log2(&self) -> f64 {
        self.scale_log2
    }

    pub fn element(&self) -> &RingElement {
        &self.element
    }

    pub(crate) fn from_element(
        params: &Arc<CkksParams>,
        element: RingElement,
        scale_log2: f64,
    ) -> Self {
        assert!(scale_log2.is_finite());
        Plaintext {
            params: params.clone(),
            element,
            scale_log2,
        }
    }

    /// Drop to a lower level without touching the scale.
    pub fn mod_switch_to(&self, level: usize) -> Result<Plaintext> {
        if level > self.level() {
            return Err(HeError::LevelMismatch(format!(
                "cannot switch plaintext up from level {} to {level}",
                self.level()
            )));
        }
        if level == self.level() {
            return Ok(self.clone());
        }
        Ok(Plaintext {
            params: self.params.clone(),
            element: self.element.drop_level(level)?,
            scale_log2: self.scale_log2,
        })
    }
}

/// An encrypted vector: 2 components normally, 3 transiently after a
/// ciphertext-ciphertext multiply until relinearization.
#[derive(Clone)]
pub struct Ciphertext {
    params: Arc<CkksParams>,
    parts: Vec<RingElement>,
    scale_log2: f64,
    fingerprint: Fingerprint,
}

impl Ciphertext {
    pub(crate) fn new(params: &Arc<CkksParams>, parts: Vec<RingElement>, scale_log2: f64) -> Self {
        debug_assert!(parts.len() == 2 || parts.len() == 3);
        Ciphertext {
            params: params.clone(),
            parts,
            scale_log2,
            fingerprint: params.fingerprint(),
        }
    }

    pub fn params(&self) -> &Arc<CkksParams> {
        &self.params
    }

    pub fn level(&self) -> usize {
        self.parts[0].level()
    }

    pub fn scale_log2(&self) -> f64 {
        self.scale_log2
    }

    pub fn size(&self) -> usize {
        self.parts.len()
    }

    pub fn fingerprint(&self) -> Fingerprint {
        self.fingerprint
    }

    pub fn parts(&self) -> &[RingElement] {
        &self.parts
    }

    /// Pair each of this ciphertext's components mutably with the peer's.
    pub(crate) fn parts_pairs_mut<'a>(
        &'a mut self,
        rhs: &'a Ciphertext,
    ) -> impl Iterator<Item = (&'a mut RingElement, &'a RingElement)> {
        self.parts.iter_mut().zip(rhs.parts.iter())
    }

    /// Rebuild from raw parts (deserialization path).
    pub fn from_parts(
        params: &Arc<CkksParams>,
        parts: Vec<RingElement>,
        scale_log2: f64,
    ) -> Result<Self> {
        if parts.len() != 2 && parts.len() != 3 {
            return Err(HeError::Shape(format!(
                "ciphertext must hold 2 or 3 components, got {}",
                parts.len()
            )));
        }
        let level = parts[0].level();
        if parts
            .iter()
            .any(|p| p.level() != level || p.domain() != Domain::Evaluation)
        {
            return Err(HeError::Shape(
                "ciphertext components disagree on level/domain".into(),
            ));
        }
        if level > params.max_level() {
            return Err(HeError::LevelMismatch(format!(
                "level {level} above maximum {}",
                params.max_level()
            )));
        }
        Ok(Ciphertext::new(params, parts, scale_log2))
    }
}

/// Encode reals into slots at a given level and log2 scale.
///
/// Up to N/2 values; shorter inputs are zero-padded. The scaled payload
/// must clear the active modulus by [`ENCODE_MARGIN_BITS`].
pub fn encode(
    params: &Arc<CkksParams>,
    values: &[f64],
    level: usize,
    scale_log2: f64,
) -> Result<Plaintext> {
    let slots = params.slots();
    if values.len() > slots {
        return Err(HeError::Capacity(format!(
            "{} values exceed {} slots",
            values.len(),
            slots
        )));
    }
    if level > params.max_level() {
        return Err(HeError::LevelMismatch(format!(
            "encode level {level} above maximum {}",
            params.max_level()
        )));
    }
    let max_abs = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if max_abs > 0.0 {
        let payload_log2 = scale_log2 + max_abs.log2();
        let budget = params.log2_modulus(level) - 1.0 - ENCODE_MARGIN_BITS;
        if payload_log2 >= budget.min(120.0) {
            return Err(HeError::EncodeRange(format!(
                "scaled payload needs {payload_log2:.1} bits, budget is {budget:.1}"
            )));
        }
    }

    let mut work: Vec<Complex> = values.iter().map(|&v| Complex::new(v, 0.0)).collect();
    work.resize(slots, Complex::new(0.0, 0.0));
    slot_fft_inverse(params, &mut work);

    let scale = (scale_log2).exp2();
    let n = params.degree();
    let mut residues = Vec::with_capacity(level + 1);
    for i in 0..=level {
        let m = params.ring().prime(i).modulus;
        let q = m.value() as i128;
        let mut r = Vec::with_capacity(n);
        for k in 0..n {
            let c = if k < slots {
                work[k].re * scale
            } else {
                work[k - slots].im * scale
            };
            let v = c.round() as i128 % q;
            r.push(if v < 0 { (v + q) as u64 } else { v as u64 });
        }
        residues.push(r);
    }
    let element = RingElement::from_residues(params.ring(), level, Domain::Coefficient, residues)
        .ntt_forward()
        .expect("fresh coefficient element transforms");
    Ok(Plaintext::from_element(params, element, scale_log2))
}

/// Decode a plaintext back to N/2 reals. Needs no key material.
pub fn decode(pt: &Plaintext) -> Vec<f64> {
    let params = pt.params();
    let element = match pt.element().domain() {
        Domain::Evaluation => pt
            .element()
            .ntt_inverse()
            .expect("evaluation element inverts"),
        Domain::Coefficient => pt.element().clone(),
    };
    let level = element.level();
    let ring = params.ring();

    // CRT reconstruction tables for the active prefix.
    let q_big = ring.modulus_product(level);
    let q_half = q_big.shr1();
    let mut q_hats = Vec::with_capacity(level + 1);
    let mut inv_factors = Vec::with_capacity(level + 1);
    for i in 0..=level {
        let m = ring.prime(i).modulus;
        let q_hat = q_big.div_exact_u64(m.value());
        inv_factors.push(m.inv(q_hat.rem_u64(m.value())));
        q_hats.push(q_hat);
    }

    let n = params.degree();
    let slots = params.slots();
    let inv_scale = (-pt.scale_log2()).exp2();
    let mut coeffs = Vec::with_capacity(n);
    for k in 0..n {
        let mut acc = UBig::zero();
        for i in 0..=level {
            let m = ring.prime(i).modulus;
            let t = m.mul(element.residues()[i][k], inv_factors[i]);
            acc.add_assign(&q_hats[i].mul_u64(t));
        }
        while acc.cmp_big(&q_big) != std::cmp::Ordering::Less {
            acc = acc.sub(&q_big);
        }
        let v = if acc.cmp_big(&q_half) == std::cmp::Ordering::Greater {
            -(q_big.sub(&acc).to_f64())
        } else {
            acc.to_f64()
        };
        coeffs.push(v * inv_scale);
    }

    let mut work: Vec<Complex> = (0..slots)
        .map(|k| Complex::new(coeffs[k], coeffs[k + slots]))
        .collect();
    slot_fft(params, &mut work);
    work.into_iter().map(|c| c.re).collect()
}

/// Public-key encryption; fresh randomness comes from the caller's RNG.
pub fn encrypt<R: Rng>(pt: &Plaintext, pk: &PublicKey, rng: &mut R) -> Result<Ciphertext> {
    let params = pt.params();
    if pk.fingerprint() != params.fingerprint() {
        return Err(HeError::FingerprintMismatch);
    }
    let level = pt.level();
    let ring = params.ring();
    let (b, a) = pk.parts();
    let (b, a) = if level == b.level() {
        (b.clone(), a.clone())
    } else {
        (b.drop_level(level)?, a.drop_level(level)?)
    };
    let u = sampling::sample_ternary(ring, level, rng).ntt_forward()?;
    let e0 = sampling::sample_error(ring, level, rng).ntt_forward()?;
    let e1 = sampling::sample_error(ring, level, rng).ntt_forward()?;
    let c0 = b.mul(&u)?.add(&e0)?.add(pt.element())?;
    let c1 = a.mul(&u)?.add(&e1)?;
    Ok(Ciphertext::new(params, vec![c0, c1], pt.scale_log2()))
}

/// Decrypt a size-2 ciphertext. Size-3 ciphertexts must be relinearized
/// first; mismatched key material is rejected.
pub fn decrypt(ct: &Ciphertext, sk: &SecretKey) -> Result<Plaintext> {
    if sk.fingerprint() != ct.fingerprint() {
        return Err(HeError::FingerprintMismatch);
    }
    if ct.size() != 2 {
        return Err(HeError::Usage(
            "decrypt requires a size-2 ciphertext; relinearize first".into(),
        ));
    }
    let s = sk.element_at(ct.level());
    let m = ct.parts()[0].add(&ct.parts()[1].mul(&s)?)?;
    Ok(Plaintext::from_element(ct.params(), m, ct.scale_log2()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ckks::keys::keygen;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn toy() -> Arc<CkksParams> {
        CkksParams::preset_toy_insecure()
    }

    #[test]
    fn zero_vector_roundtrips_exactly() {
        let params = toy();
        let pt = encode(&params, &[0.0; 16], params.max_level(), 22.0).unwrap();
        let out = decode(&pt);
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn encode_decode_error_is_tiny() {
        // Rounding-only error: pinned well above the measured level, far
        // below anything the scheme's noise can reach.
        let params = toy();
        let vals = vec![0.5, -0.25, 0.125, 1.0, -1.0];
        let pt = encode(&params, &vals, params.max_level(), 22.0).unwrap();
        let out = decode(&pt);
        for (o, v) in out.iter().zip(vals.iter().chain(std::iter::repeat(&0.0))) {
            assert!((o - v).abs() < 1e-4);
        }
    }

    #[test]
    fn high_scale_roundtrip_precision() {
        // Scale 2^40 drives rounding error below 2^-28.
        let params = CkksParams::preset_p1();
        let mut vals = vec![0.0; params.slots()];
        vals[0] = 0.5;
        vals[1] = -0.25;
        let pt = encode(&params, &vals, params.max_level(), 40.0).unwrap();
        let out = decode(&pt);
        let worst = out
            .iter()
            .zip(&vals)
            .map(|(o, v)| (o - v).abs())
            .fold(0.0f64, f64::max);
        assert!(worst <= (-28.0f64).exp2(), "worst error {worst:.3e}");
    }

    #[test]
    fn encode_range_is_enforced() {
        let params = toy();
        // At level 0 the modulus is ~2^30; scale 2^22 * value 2^10 blows
        // the margin.
        let err = encode(&params, &[1024.0], 0, 22.0);
        assert!(matches!(err, Err(HeError::EncodeRange(_))));
        // Same payload fits at the top level.
        assert!(encode(&params, &[1024.0], params.max_level(), 22.0).is_ok());
    }

    #[test]
    fn encrypt_decrypt_roundtrip_and_randomization() {
        let params = toy();
        let (sk, pk, _) = keygen(&params, 5).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(50);
        let vals: Vec<f64> = (0..params.slots())
            .map(|i| ((i % 7) as f64 - 3.0) / 4.0)
            .collect();
        let pt = encode(&params, &vals, params.max_level(), 22.0).unwrap();
        let ct1 = encrypt(&pt, &pk, &mut rng).unwrap();
        let ct2 = encrypt(&pt, &pk, &mut rng).unwrap();
        assert_ne!(
            ct1.parts()[0].residues()[0],
            ct2.parts()[0].residues()[0],
            "encryption must be randomized"
        );
        let out = decode(&decrypt(&ct1, &sk).unwrap());
        let worst = out
            .iter()
            .zip(&vals)
            .map(|(o, v)| (o - v).abs())
            .fold(0.0f64, f64::max);
        assert!(worst < 1e-2, "fresh roundtrip error {worst:.3e}");
    }

    #[test]
    fn decrypt_rejects_wrong_fingerprint_and_wrong_key() {
        let params = toy();
        let (_, pk, _) = keygen(&params, 6).unwrap();
        let other = CkksParams::build(
            1024,
            crate::ckks::params::ChainSpec {
                first_bits: 30,
                mid_bits: 22,
                mid_count: 6,
                special_bits: 34,
            },
            21,
            crate::ckks::params::SecurityLabel::ToyInsecure,
        )
        .unwrap();
        let (sk_other, _, _) = keygen(&other, 6).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(51);
        let pt = encode(&params, &[0.5], params.max_level(), 22.0).unwrap();
        let ct = encrypt(&pt, &pk, &mut rng).unwrap();
        assert!(matches!(
            decrypt(&ct, &sk_other),
            Err(HeError::FingerprintMismatch)
        ));

        // A fresh random secret under the SAME params decrypts to garbage:
        // public material reveals nothing usable without the right secret.
        let (sk_fresh, _, _) = keygen(&params, 999).unwrap();
        let wrong = decode(&decrypt(&ct, &sk_fresh).unwrap());
        assert!((wrong[0] - 0.5).abs() > 1.0, "wrong key must not decrypt");
    }
}
