//! Homomorphic operations: add/sub, plaintext and ciphertext multiplies,
//! relinearization, rescaling, modulus switching, and slot rotations.
//!
//! Everything stays in the evaluation domain. Key switching decomposes the
//! target component into one digit per active prime, accumulates against
//! the switching key over the active primes plus the key-switch prime, and
//! divides the key-switch prime back out with centered rounding.

use super::cipher::Ciphertext;
use super::keys::{GaloisKeySet, KeySwitchKey, RelinKey};
use super::params::CkksParams;
use super::Plaintext;
use crate::ring::{Domain, Modulus, RingElement};
use crate::{HeError, Result};

/// Two scales "match" when their log2 values agree to one part in 2^40.
pub const SCALE_MATCH_TOL_LOG2: f64 = 1.32e-12;

pub(crate) fn scales_match(a: f64, b: f64) -> bool {
    (a - b).abs() <= SCALE_MATCH_TOL_LOG2
}

fn check_pair(a: &Ciphertext, b: &Ciphertext) -> Result<()> {
    if a.fingerprint() != b.fingerprint() {
        return Err(HeError::FingerprintMismatch);
    }
    if a.level() != b.level() {
        return Err(HeError::LevelMismatch(format!(
            "ciphertext levels {} vs {}",
            a.level(),
            b.level()
        )));
    }
    Ok(())
}

fn check_plain(ct: &Ciphertext, pt: &Plaintext) -> Result<()> {
    if ct.params().fingerprint() != pt.params().fingerprint() {
        return Err(HeError::FingerprintMismatch);
    }
    if ct.level() != pt.level() {
        return Err(HeError::LevelMismatch(format!(
            "ciphertext level {} vs plaintext level {}",
            ct.level(),
            pt.level()
        )));
    }
    Ok(())
}

fn require_scale_match(a: f64, b: f64) -> Result<()> {
    if !scales_match(a, b) {
        return Err(HeError::ScaleMismatch(format!(
            "log2 scales {a} vs {b}; rescale or mod-switch explicitly"
        )));
    }
    Ok(())
}

impl Ciphertext {
    pub fn add(&self, rhs: &Ciphertext) -> Result<Ciphertext> {
        check_pair(self, rhs)?;
        require_scale_match(self.scale_log2(), rhs.scale_log2())?;
        if self.size() != rhs.size() {
            return Err(HeError::Usage(
                "addition needs equal ciphertext sizes".into(),
            ));
        }
        let parts = self
            .parts()
            .iter()
            .zip(rhs.parts())
            .map(|(a, b)| a.add(b))
            .collect::<Result<Vec<_>>>()?;
        Ok(Ciphertext::new(self.params(), parts, self.scale_log2()))
    }

    pub fn sub(&self, rhs: &Ciphertext) -> Result<Ciphertext> {
        check_pair(self, rhs)?;
        require_scale_match(self.scale_log2(), rhs.scale_log2())?;
        if self.size() != rhs.size() {
            return Err(HeError::Usage(
                "subtraction needs equal ciphertext sizes".into(),
            ));
        }
        let parts = self
            .parts()
            .iter()
            .zip(rhs.parts())
            .map(|(a, b)| a.sub(b))
            .collect::<Result<Vec<_>>>()?;
        Ok(Ciphertext::new(self.params(), parts, self.scale_log2()))
    }

    pub fn add_plain(&self, pt: &Plaintext) -> Result<Ciphertext> {
        check_plain(self, pt)?;
        require_scale_match(self.scale_log2(), pt.scale_log2())?;
        let mut parts = self.parts().to_vec();
        parts[0] = parts[0].add(pt.element())?;
        Ok(Ciphertext::new(self.params(), parts, self.scale_log2()))
    }

    pub fn sub_plain(&self, pt: &Plaintext) -> Result<Ciphertext> {
        check_plain(self, pt)?;
        require_scale_match(self.scale_log2(), pt.scale_log2())?;
        let mut parts = self.parts().to_vec();
        parts[0] = parts[0].sub(pt.element())?;
        Ok(Ciphertext::new(self.params(), parts, self.scale_log2()))
    }

    pub fn negate(&self) -> Ciphertext {
        let parts = self.parts().iter().map(|p| p.neg()).collect();
        Ciphertext::new(self.params(), parts, self.scale_log2())
    }

    /// Slot-wise product with a plaintext; scales multiply.
    pub fn mul_plain(&self, pt: &Plaintext) -> Result<Ciphertext> {
        check_plain(self, pt)?;
        let parts = self
            .parts()
            .iter()
            .map(|p| p.mul(pt.element()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Ciphertext::new(
            self.params(),
            parts,
            self.scale_log2() + pt.scale_log2(),
        ))
    }

    /// In-place sum; same contract as [`Ciphertext::add`].
    pub fn add_assign_ct(&mut self, rhs: &Ciphertext) -> Result<()> {
        check_pair(self, rhs)?;
        require_scale_match(self.scale_log2(), rhs.scale_log2())?;
        if self.size() != rhs.size() {
            return Err(HeError::Usage(
                "addition needs equal ciphertext sizes".into(),
            ));
        }
        for (a, b) in self.parts_pairs_mut(rhs) {
            a.add_assign(b)?;
        }
        Ok(())
    }

    /// self += src * pt without materializing the product. The running
    /// sum must already carry the product scale.
    pub fn mul_plain_acc(&mut self, src: &Ciphertext, pt: &Plaintext) -> Result<()> {
        check_pair(self, src)?;
        check_plain(src, pt)?;
        require_scale_match(self.scale_log2(), src.scale_log2() + pt.scale_log2())?;
        if self.size() != src.size() {
            return Err(HeError::Usage(
                "accumulate needs equal ciphertext sizes".into(),
            ));
        }
        for (acc, s) in self.parts_pairs_mut(src) {
            acc.mul_acc(s, pt.element())?;
        }
        Ok(())
    }

    /// Ciphertext-ciphertext product; the result has 3 components until
    /// relinearized.
    pub fn mul(&self, rhs: &Ciphertext) -> Result<Ciphertext> {
        check_pair(self, rhs)?;
        if self.size() != 2 || rhs.size() != 2 {
            return Err(HeError::Usage(
                "multiplication operands must be size-2 (relinearize first)".into(),
            ));
        }
        let (a0, a1) = (&self.parts()[0], &self.parts()[1]);
        let (b0, b1) = (&rhs.parts()[0], &rhs.parts()[1]);
        let c0 = a0.mul(b0)?;
        let c1 = a0.mul(b1)?.add(&a1.mul(b0)?)?;
        let c2 = a1.mul(b1)?;
        Ok(Ciphertext::new(
            self.params(),
            vec![c0, c1, c2],
            self.scale_log2() + rhs.scale_log2(),
        ))
    }

    /// Key-switch the quadratic component away. A size-2 input is returned
    /// unchanged (the call is a no-op then).
    pub fn relinearize(&self, rk: &RelinKey) -> Result<Ciphertext> {
        if rk.fingerprint() != self.fingerprint() {
            return Err(HeError::FingerprintMismatch);
        }
        if self.size() == 2 {
            return Ok(self.clone());
        }
        let (ks0, ks1) = key_switch(self.params(), &self.parts()[2], rk.inner())?;
        let c0 = self.parts()[0].add(&ks0)?;
        let c1 = self.parts()[1].add(&ks1)?;
        Ok(Ciphertext::new(
            self.params(),
            vec![c0, c1],
            self.scale_log2(),
        ))
    }

    /// Drop the top prime, dividing the scale by it. Errors once the chain
    /// is exhausted; that is the depth budget making itself felt.
    pub fn rescale(&self) -> Result<Ciphertext> {
        let level = self.level();
        if level == 0 {
            return Err(HeError::DepthExhausted(
                "rescale at level 0: no prime left to drop".into(),
            ));
        }
        let params = self.params();
        let parts = self
            .parts()
            .iter()
            .map(|p| divide_out_top_prime(params, p))
            .collect::<Result<Vec<_>>>()?;
        let new_scale = self.scale_log2() - params.log2_prime(level);
        Ok(Ciphertext::new(params, parts, new_scale))
    }

    /// Drop to `level` without dividing the scale.
    pub fn mod_switch_to(&self, level: usize) -> Result<Ciphertext> {
        if level > self.level() {
            return Err(HeError::LevelMismatch(format!(
                "cannot mod-switch up from {} to {level}",
                self.level()
            )));
        }
        if level == self.level() {
            return Ok(self.clone());
        }
        let parts = self
            .parts()
            .iter()
            .map(|p| p.drop_level(level))
            .collect::<Result<Vec<_>>>()?;
        Ok(Ciphertext::new(self.params(), parts, self.scale_log2()))
    }

    /// Cyclic left rotation of the slot vector by `step` (negative steps
    /// rotate right). Requires the matching rotation key.
    pub fn rotate(&self, step: i32, keys: &GaloisKeySet) -> Result<Ciphertext> {
        if step == 0 {
            return Ok(self.clone());
        }
        if keys.fingerprint() != self.fingerprint() {
            return Err(HeError::FingerprintMismatch);
        }
        if self.size() != 2 {
            return Err(HeError::Usage("rotate requires a size-2 ciphertext".into()));
        }
        let key = keys.get(step)?;
        let c0p = self.parts()[0].permute_eval(&key.perm)?;
        let c1p = self.parts()[1].permute_eval(&key.perm)?;
        let (ks0, ks1) = key_switch(self.params(), &c1p, &key.ksk)?;
        let c0 = c0p.add(&ks0)?;
        Ok(Ciphertext::new(
            self.params(),
            vec![c0, ks1],
            self.scale_log2(),
        ))
    }

    /// Precompute the digit decomposition of the key-switched component so
    /// many rotations of the same ciphertext share the transform work.
    pub fn hoist_rotations(&self) -> Result<HoistedRotations> {
        if self.size() != 2 {
            return Err(HeError::Usage(
                "hoisting requires a size-2 ciphertext".into(),
            ));
        }
        let digits = decompose_digits_ntt(self.params(), &self.parts()[1])?;
        Ok(HoistedRotations {
            digits,
            level: self.level(),
        })
    }

    /// Rotation using a hoisted decomposition of this same ciphertext.
    /// Digits get permuted in the evaluation domain instead of being
    /// re-decomposed, which skips the per-rotation transforms.
    pub fn rotate_hoisted(
        &self,
        hoisted: &HoistedRotations,
        step: i32,
        keys: &GaloisKeySet,
    ) -> Result<Ciphertext> {
        if step == 0 {
            return Ok(self.clone());
        }
        if keys.fingerprint() != self.fingerprint() {
            return Err(HeError::FingerprintMismatch);
        }
        if hoisted.level != self.level() {
            return Err(HeError::LevelMismatch(
                "hoisted digits were built at another level".into(),
            ));
        }
        let key = keys.get(step)?;
        let (ks0, ks1) = mac_mod_down(
            self.params(),
            &hoisted.digits,
            &key.ksk,
            self.level(),
            Some(&key.perm),
        )?;
        let c0 = self.parts()[0].permute_eval(&key.perm)?.add(&ks0)?;
        Ok(Ciphertext::new(
            self.params(),
            vec![c0, ks1],
            self.scale_log2(),
        ))
    }
}

/// Digit decomposition of one ciphertext component, transformed per
/// target prime, reusable across rotations of the same ciphertext.
pub struct HoistedRotations {
    /// digits[j][t]: digit j lifted into target slot t (active primes in
    /// order, then the key-switch prime) in the evaluation domain.
    digits: Vec<Vec<Vec<u64>>>,
    level: usize,
}

/// Reduce residues of `src` (mod `from`) into `out` (mod `to`), reading
/// them as centered representatives so the lift stays small.
fn lift_centered(src: &[u64], from: &Modulus, to: &Modulus, out: &mut [u64]) {
    let half = from.value() >> 1;
    for (o, &r) in out.iter_mut().zip(src) {
        *o = if r <= half {
            to.reduce_u64(r)
        } else {
            let neg = to.reduce_u64(from.value() - r);
            if neg == 0 {
                0
            } else {
                to.value() - neg
            }
        };
    }
}

/// (element - centered(top residues)) / q_top over the remaining primes.
fn divide_out_top_prime(params: &CkksParams, part: &RingElement) -> Result<RingElement> {
    debug_assert_eq!(part.domain(), Domain::Evaluation);
    let level = part.level();
    let ring = params.ring();
    let top = ring.prime(level).modulus;

    let mut last = part.residues()[level].clone();
    ring.prime(level).ntt.inverse(&mut last);

    let n = ring.degree();
    let mut corr = vec![0u64; n];
    let mut residues = Vec::with_capacity(level);
    for m in 0..level {
        let ctx = ring.prime(m);
        lift_centered(&last, &top, &ctx.modulus, &mut corr);
        ctx.ntt.forward(&mut corr);
        let inv = params.rescale_inv[level][m];
        let inv_shoup = ctx.modulus.shoup(inv);
        let src = &part.residues()[m];
        residues.push(
            (0..n)
                .map(|k| {
                    ctx.modulus
                        .mul_shoup(ctx.modulus.sub(src[k], corr[k]), inv, inv_shoup)
                })
                .collect(),
        );
    }
    Ok(RingElement::from_residues(
        ring,
        level - 1,
        Domain::Evaluation,
        residues,
    ))
}

/// Targets of a key switch at `level`: the active primes then the
/// key-switch prime.
fn ks_targets(params: &CkksParams, level: usize) -> Vec<usize> {
    (0..=level)
        .chain(std::iter::once(params.special_index()))
        .collect()
}

/// Decompose `c` into one digit per active prime, lifted into every
/// target prime and transformed to the evaluation domain.
fn decompose_digits_ntt(params: &CkksParams, c: &RingElement) -> Result<Vec<Vec<Vec<u64>>>> {
    let ring = params.ring();
    let n = ring.degree();
    let level = c.level();
    let targets = ks_targets(params, level);
    let c_coeff = c.ntt_inverse()?;
    let mut digits = Vec::with_capacity(level + 1);
    for j in 0..=level {
        let r = &c_coeff.residues()[j];
        let qj = ring.prime(j).modulus;
        let mut rows = Vec::with_capacity(targets.len());
        for &prime_idx in &targets {
            let ctx = ring.prime(prime_idx);
            let mut digit = vec![0u64; n];
            if prime_idx == j || qj.value() < ctx.modulus.value() {
                digit.copy_from_slice(r);
            } else {
                for (d, &x) in digit.iter_mut().zip(r) {
                    *d = ctx.modulus.reduce_u64(x);
                }
            }
            ctx.ntt.forward(&mut digit);
            rows.push(digit);
        }
        digits.push(rows);
    }
    Ok(digits)
}

/// Accumulate decomposed digits against a switching key and divide the
/// key-switch prime back out. An optional evaluation-domain permutation
/// is applied to the digits on the fly (the hoisted-rotation path).
fn mac_mod_down(
    params: &CkksParams,
    digits: &[Vec<Vec<u64>>],
    ksk: &KeySwitchKey,
    level: usize,
    perm: Option<&[u32]>,
) -> Result<(RingElement, RingElement)> {
    if ksk.fingerprint() != params.fingerprint() {
        return Err(HeError::FingerprintMismatch);
    }
    if ksk.digit_count() < level + 1 {
        return Err(HeError::Usage(format!(
            "switching key holds {} digits, level {level} needs {}",
            ksk.digit_count(),
            level + 1
        )));
    }
    let ring = params.ring();
    let n = ring.degree();
    let targets = ks_targets(params, level);

    // Lazy u128 accumulators; digit counts are far below the overflow
    // bound of 16 (checked at parameter build).
    let mut acc0: Vec<Vec<u128>> = targets.iter().map(|_| vec![0u128; n]).collect();
    let mut acc1: Vec<Vec<u128>> = targets.iter().map(|_| vec![0u128; n]).collect();
    let mut permuted = vec![0u64; n];

    for (j, rows) in digits.iter().enumerate().take(level + 1) {
        for (t_idx, &prime_idx) in targets.iter().enumerate() {
            let row = &rows[t_idx];
            let d_row: &[u64] = match perm {
                None => row,
                Some(p) => {
                    for (dst, &src) in permuted.iter_mut().zip(p) {
                        *dst = row[src as usize];
                    }
                    &permuted
                }
            };
            let kb = &ksk.digits[j].b.residues()[prime_idx];
            let ka = &ksk.digits[j].a.residues()[prime_idx];
            let (a0, a1) = (&mut acc0[t_idx], &mut acc1[t_idx]);
            for k in 0..n {
                let d = d_row[k] as u128;
                a0[k] += d * kb[k] as u128;
                a1[k] += d * ka[k] as u128;
            }
        }
    }

    let reduce = |acc: Vec<Vec<u128>>| -> Vec<Vec<u64>> {
        acc.into_iter()
            .enumerate()
            .map(|(t_idx, row)| {
                let m = ring.prime(targets[t_idx]).modulus;
                row.into_iter().map(|x| m.reduce_u128(x)).collect()
            })
            .collect()
    };
    let acc0 = reduce(acc0);
    let acc1 = reduce(acc1);

    let out0 = mod_down_special(params, acc0, level)?;
    let out1 = mod_down_special(params, acc1, level)?;
    Ok((out0, out1))
}

/// Key-switch `c` (evaluation domain, level l) under the given key,
/// producing the two output components at the same level.
pub(crate) fn key_switch(
    params: &CkksParams,
    c: &RingElement,
    ksk: &KeySwitchKey,
) -> Result<(RingElement, RingElement)> {
    let digits = decompose_digits_ntt(params, c)?;
    mac_mod_down(params, &digits, ksk, c.level(), None)
}

/// Divide the key-switch prime back out of an accumulator (active primes
/// in slots 0..=level, key-switch prime in the last slot).
fn mod_down_special(
    params: &CkksParams,
    mut acc: Vec<Vec<u64>>,
    level: usize,
) -> Result<RingElement> {
    let ring = params.ring();
    let n = ring.degree();
    let sp_ctx = ring.prime(params.special_index());
    let mut p_part = acc.pop().expect("accumulator has the key-switch slot");
    sp_ctx.ntt.inverse(&mut p_part);

    let mut corr = vec![0u64; n];
    for m in 0..=level {
        let ctx = ring.prime(m);
        lift_centered(&p_part, &sp_ctx.modulus, &ctx.modulus, &mut corr);
        ctx.ntt.forward(&mut corr);
        let inv = params.special_inv_mod_qi[m];
        let inv_shoup = ctx.modulus.shoup(inv);
        for (x, &c) in acc[m].iter_mut().zip(&corr) {
            *x = ctx
                .modulus
                .mul_shoup(ctx.modulus.sub(*x, c), inv, inv_shoup);
        }
    }
    Ok(RingElement::from_residues(
        ring,
        level,
        Domain::Evaluation,
        acc,
    ))
}


#[cfg(test)]
mod hoisted_tests {
    use crate::ckks::{decode, decrypt, encode, encrypt, gen_galois_keys, keygen, CkksParams};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn hoisted_rotation_matches_plain_rotation() {
        let params = CkksParams::preset_toy_insecure();
        let (sk, pk, _) = keygen(&params, 8).unwrap();
        let keys = gen_galois_keys(&sk, &[1, 5, -2], 9).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(90);
        let v: Vec<f64> = (0..params.slots())
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        let pt = encode(&params, &v, params.max_level(), 22.0).unwrap();
        let ct = encrypt(&pt, &pk, &mut rng).unwrap();
        let hoisted = ct.hoist_rotations().unwrap();
        for step in [1i32, 5, -2] {
            let a = decode(&decrypt(&ct.rotate(step, &keys).unwrap(), &sk).unwrap());
            let b =
                decode(&decrypt(&ct.rotate_hoisted(&hoisted, step, &keys).unwrap(), &sk).unwrap());
            let worst = a
                .iter()
                .zip(&b)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0f64, f64::max);
            assert!(worst < 2e-3, "step {step}: hoisted deviates by {worst:.2e}");
        }
    }

    #[test]
    fn fused_accumulate_matches_separate_ops() {
        let params = CkksParams::preset_toy_insecure();
        let (_sk, pk, _) = keygen(&params, 10).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(91);
        let top = params.max_level();
        let u: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let v: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let w: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let cu = encrypt(&encode(&params, &u, top, 22.0).unwrap(), &pk, &mut rng).unwrap();
        let cv = encrypt(&encode(&params, &v, top, 22.0).unwrap(), &pk, &mut rng).unwrap();
        let pw = encode(&params, &w, top, 22.0).unwrap();

        let separate = cu
            .mul_plain(&pw)
            .unwrap()
            .add(&cv.mul_plain(&pw).unwrap())
            .unwrap();
        let mut fused = cu.mul_plain(&pw).unwrap();
        fused.mul_plain_acc(&cv, &pw).unwrap();
        for (a, b) in separate.parts().iter().zip(fused.parts()) {
            assert_eq!(
                a.residues(),
                b.residues(),
                "fused path must be bit-identical"
            );
        }
    }
}
