//! Ring elements in RNS form, with arithmetic, level drops, and Galois maps.

use std::sync::Arc;

use super::params::RingParams;
use crate::{HeError, Result};

/// Which basis the residues are expressed in.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Domain {
    Coefficient,
    Evaluation,
}

/// An element of R_q at some level: one residue vector per active prime.
#[derive(Clone, Debug)]
pub struct RingElement {
    params: Arc<RingParams>,
    level: usize,
    domain: Domain,
    /// residues[i][k]: residue of coefficient/evaluation k under prime i.
    residues: Vec<Vec<u64>>,
}

impl RingElement {
    pub fn zero(params: &Arc<RingParams>, level: usize, domain: Domain) -> Self {
        assert!(level <= params.max_level());
        let n = params.degree();
        RingElement {
            params: params.clone(),
            level,
            domain,
            residues: vec![vec![0u64; n]; level + 1],
        }
    }

    /// Lift signed coefficients into every active prime (coefficient domain).
    pub fn from_signed_coeffs(params: &Arc<RingParams>, level: usize, coeffs: &[i64]) -> Self {
        assert_eq!(coeffs.len(), params.degree());
        let mut residues = Vec::with_capacity(level + 1);
        for i in 0..=level {
            let q = params.prime(i).modulus.value();
            residues.push(
                coeffs
                    .iter()
                    .map(|&c| {
                        let r = c % q as i64;
                        if r < 0 {
                            (r + q as i64) as u64
                        } else {
                            r as u64
                        }
                    })
                    .collect(),
            );
        }
        RingElement {
            params: params.clone(),
            level,
            domain: Domain::Coefficient,
            residues,
        }
    }

    pub fn from_residues(
        params: &Arc<RingParams>,
        level: usize,
        domain: Domain,
        residues: Vec<Vec<u64>>,
    ) -> Self {
        assert_eq!(residues.len(), level + 1);
        for r in &residues {
            assert_eq!(r.len(), params.degree());
        }
        RingElement {
            params: params.clone(),
            level,
            domain,
            residues,
        }
    }

    pub fn params(&self) -> &Arc<RingParams> {
        &self.params
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn residues(&self) -> &[Vec<u64>] {
        &self.residues
    }

    pub fn residues_mut(&mut self) -> &mut [Vec<u64>] {
        &mut self.residues
    }

    pub fn into_residues(self) -> Vec<Vec<u64>> {
        self.residues
    }

    fn check_compatible(&self, other: &RingElement) -> Result<()> {
        if !Arc::ptr_eq(&self.params, &other.params) {
            return Err(HeError::Usage("ring parameter mismatch".into()));
        }
        if self.level != other.level {
            return Err(HeError::LevelMismatch(format!(
                "levels {} vs {}",
                self.level, other.level
            )));
        }
        if self.domain != other.domain {
            return Err(HeError::Representation("domain mismatch".into()));
        }
        Ok(())
    }

    /// Convert to the evaluation domain.
    pub fn ntt_forward(&self) -> Result<RingElement> {
        if self.domain == Domain::Evaluation {
            return Err(HeError::Representation(
                "element already in evaluation domain".into(),
            ));
        }
        let mut out = self.clone();
        for (i, r) in out.residues.iter_mut().enumerate() {
            self.params.prime(i).ntt.forward(r);
        }
        out.domain = Domain::Evaluation;
        Ok(out)
    }

    /// Convert to the coefficient domain.
    pub fn ntt_inverse(&self) -> Result<RingElement> {
        if self.domain == Domain::Coefficient {
            return Err(HeError::Representation(
                "element already in coefficient domain".into(),
            ));
        }
        let mut out = self.clone();
        for (i, r) in out.residues.iter_mut().enumerate() {
            self.params.prime(i).ntt.inverse(r);
        }
        out.domain = Domain::Coefficient;
        Ok(out)
    }

    pub fn add(&self, other: &RingElement) -> Result<RingElement> {
        let mut out = self.clone();
        out.add_assign(other)?;
        Ok(out)
    }

    pub fn add_assign(&mut self, other: &RingElement) -> Result<()> {
        self.check_compatible(other)?;
        for i in 0..=self.level {
            let m = self.params.prime(i).modulus;
            for (a, &b) in self.residues[i].iter_mut().zip(&other.residues[i]) {
                *a = m.add(*a, b);
            }
        }
        Ok(())
    }

    /// self += a * b (evaluation domain), with no intermediate element.
    pub fn mul_acc(&mut self, a: &RingElement, b: &RingElement) -> Result<()> {
        self.check_compatible(a)?;
        self.check_compatible(b)?;
        if self.domain != Domain::Evaluation {
            return Err(HeError::Representation(
                "fused multiply-accumulate requires the evaluation domain".into(),
            ));
        }
        for i in 0..=self.level {
            let m = self.params.prime(i).modulus;
            let (ra, rb) = (&a.residues[i], &b.residues[i]);
            for (k, acc) in self.residues[i].iter_mut().enumerate() {
                *acc = m.add(*acc, m.mul(ra[k], rb[k]));
            }
        }
        Ok(())
    }

    pub fn sub(&self, other: &RingElement) -> Result<RingElement> {
        self.check_compatible(other)?;
        let mut out = self.clone();
        for i in 0..=self.level {
            let m = self.params.prime(i).modulus;
            for (a, &b) in out.residues[i].iter_mut().zip(&other.residues[i]) {
                *a = m.sub(*a, b);
            }
        }
        Ok(out)
    }

    pub fn neg(&self) -> RingElement {
        let mut out = self.clone();
        for i in 0..=self.level {
            let m = self.params.prime(i).modulus;
            for a in out.residues[i].iter_mut() {
                *a = m.neg(*a);
            }
        }
        out
    }

    /// Negacyclic product; both operands must be in the evaluation domain.
    pub fn mul(&self, other: &RingElement) -> Result<RingElement> {
        self.check_compatible(other)?;
        if self.domain != Domain::Evaluation {
            return Err(HeError::Representation(
                "ring multiplication requires the evaluation domain".into(),
            ));
        }
        let mut out = self.clone();
        for i in 0..=self.level {
            let m = self.params.prime(i).modulus;
            for (a, &b) in out.residues[i].iter_mut().zip(&other.residues[i]) {
                *a = m.mul(*a, b);
            }
        }
        Ok(out)
    }

    /// Multiply by a per-prime scalar.
    pub fn mul_scalar(&self, scalars: &[u64]) -> RingElement {
        assert_eq!(scalars.len(), self.level + 1);
        let mut out = self.clone();
        for i in 0..=self.level {
            let m = self.params.prime(i).modulus;
            let s = scalars[i];
            let ss = m.shoup(s % m.value());
            for a in out.residues[i].iter_mut() {
                *a = m.mul_shoup(*a, s % m.value(), ss);
            }
        }
        out
    }

    /// Remove residues above `target`; congruences mod the remaining primes
    /// are untouched.
    pub fn drop_level(&self, target: usize) -> Result<RingElement> {
        if target >= self.level {
            return Err(HeError::Usage(format!(
                "drop_level target {target} must be below current level {}",
                self.level
            )));
        }
        let mut out = self.clone();
        out.residues.truncate(target + 1);
        out.level = target;
        Ok(out)
    }

    /// Apply a precomputed evaluation-domain slot permutation
    /// (out[j] = in[perm[j]]), the fast path for Galois maps.
    pub fn permute_eval(&self, perm: &[u32]) -> Result<RingElement> {
        if self.domain != Domain::Evaluation {
            return Err(HeError::Representation(
                "slot permutation requires the evaluation domain".into(),
            ));
        }
        debug_assert_eq!(perm.len(), self.params.degree());
        let mut out = self.clone();
        for i in 0..=self.level {
            let src = &self.residues[i];
            for (j, x) in out.residues[i].iter_mut().enumerate() {
                *x = src[perm[j] as usize];
            }
        }
        Ok(out)
    }

    /// The ring automorphism X -> X^g (g odd, mod 2N). Works in either
    /// domain: a signed index fold on coefficients, a pure slot permutation
    /// on evaluations.
    pub fn apply_automorphism(&self, g: u64) -> Result<RingElement> {
        let n = self.params.degree();
        let two_n = 2 * n as u64;
        let g = g % two_n;
        if g % 2 == 0 {
            return Err(HeError::Usage(format!("Galois element {g} must be odd")));
        }
        let mut out = self.clone();
        match self.domain {
            Domain::Coefficient => {
                for i in 0..=self.level {
                    let m = self.params.prime(i).modulus;
                    let src = &self.residues[i];
                    let dst = &mut out.residues[i];
                    dst.iter_mut().for_each(|x| *x = 0);
                    for k in 0..n {
                        let e = (k as u64 * g) % two_n;
                        let v = src[k];
                        if e < n as u64 {
                            dst[e as usize] = m.add(dst[e as usize], v);
                        } else {
                            let idx = (e - n as u64) as usize;
                            dst[idx] = m.sub(dst[idx], v);
                        }
                    }
                }
            }
            Domain::Evaluation => {
                let perm = self.params.eval_permutation(g)?;
                for i in 0..=self.level {
                    let src = &self.residues[i];
                    for (j, x) in out.residues[i].iter_mut().enumerate() {
                        *x = src[perm[j] as usize];
                    }
                }
            }
        }
        Ok(out)
    }
}
