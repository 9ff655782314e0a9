//! Bit-exact byte layouts for ciphertexts, key material, and weights.
//!
//! Every deserializer validates magic, version, fingerprint, and all
//! declared lengths against the actually available bytes before any
//! allocation sized by attacker-controlled numbers. All integers and
//! float bit patterns are little-endian.
//!
//! There is deliberately no codec for the secret key; it exists only in
//! client memory and in the key file the `keygen` command writes.
//!
//! ```compile_fail
//! use cryptotl_protocol::codec::WireCodec;
//! fn requires_codec<T: WireCodec>() {}
//! requires_codec::<cryptotl_he::ckks::SecretKey>();
//! ```

use std::sync::Arc;

use cryptotl_he::ckks::{
    Ciphertext, CkksParams, Fingerprint, GaloisKeySet, KeySwitchKey, PublicKey, RelinKey,
};
use cryptotl_he::layers::FrozenWeights;
use cryptotl_he::ring::{Domain, RingElement};

use crate::{ProtocolError, Result};

pub const FORMAT_VERSION: u16 = 1;

pub const MAGIC_CIPHERTEXT: &[u8; 4] = b"CTLC";
pub const MAGIC_PUBLIC_KEY: &[u8; 4] = b"CTLP";
pub const MAGIC_RELIN_KEY: &[u8; 4] = b"CTLR";
pub const MAGIC_GALOIS_KEYS: &[u8; 4] = b"CTLG";
pub const MAGIC_WEIGHTS: &[u8; 4] = b"CTLW";

/// Content kinds inside the CTLW tensor container.
pub const WEIGHTS_KIND_SERVER_FULL: u8 = 1;
pub const WEIGHTS_KIND_FROZEN: u8 = 2;
pub const WEIGHTS_KIND_CLIENT_FULL: u8 = 3;

/// Marker for types that may travel on the wire. The secret key
/// intentionally never implements it.
pub trait WireCodec {
    fn wire_encode(&self) -> Vec<u8>;
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(ProtocolError::Malformed(format!(
                "need {n} bytes, {} available",
                self.remaining()
            )));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn u64(&mut self) -> Result<u64> {
        let b = self.take(8)?;
        Ok(u64::from_le_bytes(b.try_into().expect("8 bytes")))
    }

    fn i32(&mut self) -> Result<i32> {
        let b = self.take(4)?;
        Ok(i32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_bits(self.u64()?))
    }

    fn finish(&self) -> Result<()> {
        if self.remaining() != 0 {
            return Err(ProtocolError::Malformed(format!(
                "{} trailing bytes",
                self.remaining()
            )));
        }
        Ok(())
    }
}

fn check_header(r: &mut Reader<'_>, magic: &[u8; 4], what: &str) -> Result<()> {
    if r.take(4)? != magic {
        return Err(ProtocolError::Malformed(format!("bad {what} magic")));
    }
    let ver = r.u16()?;
    if ver != FORMAT_VERSION {
        return Err(ProtocolError::Malformed(format!(
            "unsupported {what} version {ver}"
        )));
    }
    Ok(())
}

fn check_fingerprint(r: &mut Reader<'_>, params: &CkksParams) -> Result<()> {
    let fp = r.take(32)?;
    if fp != params.fingerprint().0 {
        return Err(ProtocolError::Fingerprint);
    }
    Ok(())
}

fn write_residues(out: &mut Vec<u8>, residues: &[Vec<u64>]) {
    for prime_row in residues {
        for &v in prime_row {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
}

/// Read `primes` rows of `n` residues, validating each against its prime.
fn read_residues(
    r: &mut Reader<'_>,
    params: &Arc<CkksParams>,
    primes: usize,
    what: &str,
) -> Result<Vec<Vec<u64>>> {
    let n = params.degree();
    let mut rows = Vec::with_capacity(primes);
    for i in 0..primes {
        let q = params.ring().prime(i).modulus.value();
        let raw = r.take(n * 8)?;
        let mut row = Vec::with_capacity(n);
        for chunk in raw.chunks_exact(8) {
            let v = u64::from_le_bytes(chunk.try_into().expect("8 bytes"));
            if v >= q {
                return Err(ProtocolError::Malformed(format!(
                    "{what}: residue {v} out of range for prime {i}"
                )));
            }
            row.push(v);
        }
        rows.push(row);
    }
    Ok(rows)
}

// --- Ciphertext -----------------------------------------------------------

pub fn serialize_ciphertext(ct: &Ciphertext) -> Vec<u8> {
    let level = ct.level();
    let n = ct.params().degree();
    let mut out = Vec::with_capacity(48 + ct.size() * (level + 1) * n * 8);
    out.extend_from_slice(MAGIC_CIPHERTEXT);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&ct.fingerprint().0);
    out.push(level as u8);
    out.extend_from_slice(&ct.scale_log2().to_bits().to_le_bytes());
    out.push(ct.size() as u8);
    for part in ct.parts() {
        write_residues(&mut out, part.residues());
    }
    out
}

pub fn deserialize_ciphertext(bytes: &[u8], params: &Arc<CkksParams>) -> Result<Ciphertext> {
    let mut r = Reader::new(bytes);
    check_header(&mut r, MAGIC_CIPHERTEXT, "ciphertext")?;
    check_fingerprint(&mut r, params)?;
    let level = r.u8()? as usize;
    if level > params.max_level() {
        return Err(ProtocolError::Malformed(format!(
            "level {level} above maximum {}",
            params.max_level()
        )));
    }
    let scale_log2 = r.f64()?;
    if !scale_log2.is_finite() {
        return Err(ProtocolError::Malformed("non-finite scale".into()));
    }
    let count = r.u8()? as usize;
    if count != 2 && count != 3 {
        return Err(ProtocolError::Malformed(format!(
            "component count {count} not in {{2, 3}}"
        )));
    }
    let expect = count * (level + 1) * params.degree() * 8;
    if r.remaining() != expect {
        return Err(ProtocolError::Malformed(format!(
            "ciphertext body {} bytes, expected {expect}",
            r.remaining()
        )));
    }
    let mut parts = Vec::with_capacity(count);
    for _ in 0..count {
        let rows = read_residues(&mut r, params, level + 1, "ciphertext")?;
        parts.push(RingElement::from_residues(
            params.ring(),
            level,
            Domain::Evaluation,
            rows,
        ));
    }
    r.finish()?;
    Ok(Ciphertext::from_parts(params, parts, scale_log2)?)
}

impl WireCodec for Ciphertext {
    fn wire_encode(&self) -> Vec<u8> {
        serialize_ciphertext(self)
    }
}

// --- Public key -------------------------------------------------------------

pub fn serialize_public_key(pk: &PublicKey) -> Vec<u8> {
    let (b, a) = pk.parts();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC_PUBLIC_KEY);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&pk.fingerprint().0);
    write_residues(&mut out, b.residues());
    write_residues(&mut out, a.residues());
    out
}

pub fn deserialize_public_key(bytes: &[u8], params: &Arc<CkksParams>) -> Result<PublicKey> {
    let mut r = Reader::new(bytes);
    check_header(&mut r, MAGIC_PUBLIC_KEY, "public key")?;
    check_fingerprint(&mut r, params)?;
    let primes = params.max_level() + 1;
    let expect = 2 * primes * params.degree() * 8;
    if r.remaining() != expect {
        return Err(ProtocolError::Malformed(format!(
            "public key body {} bytes, expected {expect}",
            r.remaining()
        )));
    }
    let b = read_residues(&mut r, params, primes, "public key")?;
    let a = read_residues(&mut r, params, primes, "public key")?;
    r.finish()?;
    let mk = |rows| {
        RingElement::from_residues(params.ring(), params.max_level(), Domain::Evaluation, rows)
    };
    Ok(PublicKey::from_parts(params, mk(b), mk(a)))
}

impl WireCodec for PublicKey {
    fn wire_encode(&self) -> Vec<u8> {
        serialize_public_key(self)
    }
}

// --- Switching keys (relinearization + rotations) ---------------------------

/// Body shared by both key kinds: seed for the uniform halves, then the
/// b halves digit by digit over the full chain.
fn write_ksk_body(out: &mut Vec<u8>, ksk: &KeySwitchKey) {
    out.extend_from_slice(&ksk.a_seed());
    out.push(ksk.digit_count() as u8);
    for j in 0..ksk.digit_count() {
        write_residues(out, ksk.digit_b_residues(j));
    }
}

fn read_ksk_body(r: &mut Reader<'_>, params: &Arc<CkksParams>) -> Result<KeySwitchKey> {
    let seed: [u8; 32] = r.take(32)?.try_into().expect("32 bytes");
    let digits = r.u8()? as usize;
    if digits != params.ciphertext_primes() {
        return Err(ProtocolError::Malformed(format!(
            "switching key digits {digits} != {}",
            params.ciphertext_primes()
        )));
    }
    let full_primes = params.special_index() + 1;
    let need = digits * full_primes * params.degree() * 8;
    if r.remaining() < need {
        return Err(ProtocolError::Malformed(format!(
            "switching key body {} bytes, needs {need}",
            r.remaining()
        )));
    }
    let mut b_parts = Vec::with_capacity(digits);
    for _ in 0..digits {
        b_parts.push(read_residues(r, params, full_primes, "switching key")?);
    }
    Ok(KeySwitchKey::from_b_parts(params, seed, b_parts)?)
}

pub fn serialize_relin_key(rk: &RelinKey) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC_RELIN_KEY);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&rk.fingerprint().0);
    write_ksk_body(&mut out, rk.inner());
    out
}

pub fn deserialize_relin_key(bytes: &[u8], params: &Arc<CkksParams>) -> Result<RelinKey> {
    let mut r = Reader::new(bytes);
    check_header(&mut r, MAGIC_RELIN_KEY, "relinearization key")?;
    check_fingerprint(&mut r, params)?;
    let ksk = read_ksk_body(&mut r, params)?;
    r.finish()?;
    Ok(RelinKey::from_inner(ksk))
}

impl WireCodec for RelinKey {
    fn wire_encode(&self) -> Vec<u8> {
        serialize_relin_key(self)
    }
}

pub fn serialize_galois_keys(keys: &GaloisKeySet) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC_GALOIS_KEYS);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&keys.fingerprint().0);
    let steps = keys.steps();
    out.extend_from_slice(&(steps.len() as u16).to_le_bytes());
    for step in steps {
        out.extend_from_slice(&step.to_le_bytes());
        let ksk = keys.key_material(step).expect("listed step");
        write_ksk_body(&mut out, ksk);
    }
    out
}

pub fn deserialize_galois_keys(bytes: &[u8], params: &Arc<CkksParams>) -> Result<GaloisKeySet> {
    let mut r = Reader::new(bytes);
    check_header(&mut r, MAGIC_GALOIS_KEYS, "rotation keys")?;
    check_fingerprint(&mut r, params)?;
    let count = r.u16()? as usize;
    let half = params.slots() as i64 / 2;
    let mut entries = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let step = r.i32()?;
        if step == 0 || (step as i64).abs() >= half.max(1) {
            return Err(ProtocolError::Malformed(format!(
                "rotation step {step} out of range"
            )));
        }
        let ksk = read_ksk_body(&mut r, params)?;
        entries.push((step, ksk));
    }
    r.finish()?;
    Ok(GaloisKeySet::from_entries(params, entries)?)
}

impl WireCodec for GaloisKeySet {
    fn wire_encode(&self) -> Vec<u8> {
        serialize_galois_keys(self)
    }
}

// --- Tensor container (weights) ---------------------------------------------

/// A named f64 tensor in the CTLW container.
#[derive(Clone, Debug, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

impl NamedTensor {
    pub fn scalar(name: &str, v: f64) -> Self {
        NamedTensor {
            name: name.into(),
            dims: vec![1],
            data: vec![v],
        }
    }

    pub fn vector(name: &str, v: &[f64]) -> Self {
        NamedTensor {
            name: name.into(),
            dims: vec![v.len()],
            data: v.to_vec(),
        }
    }

    pub fn matrix(name: &str, rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, |r| r.len());
        NamedTensor {
            name: name.into(),
            dims: vec![rows.len(), cols],
            data: rows.iter().flatten().copied().collect(),
        }
    }

    pub fn to_matrix(&self) -> Result<Vec<Vec<f64>>> {
        if self.dims.len() != 2 {
            return Err(ProtocolError::Malformed(format!(
                "tensor {} is not a matrix",
                self.name
            )));
        }
        let (rows, cols) = (self.dims[0], self.dims[1]);
        Ok((0..rows)
            .map(|r| self.data[r * cols..(r + 1) * cols].to_vec())
            .collect())
    }
}

pub fn serialize_tensors(kind: u8, tensors: &[NamedTensor]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC_WEIGHTS);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.push(kind);
    out.extend_from_slice(&(tensors.len() as u16).to_le_bytes());
    for t in tensors {
        debug_assert_eq!(t.data.len(), t.dims.iter().product::<usize>());
        let name = t.name.as_bytes();
        out.push(name.len() as u8);
        out.extend_from_slice(name);
        out.push(t.dims.len() as u8);
        for &d in &t.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in &t.data {
            out.extend_from_slice(&v.to_bits().to_le_bytes());
        }
    }
    out
}

pub fn deserialize_tensors(bytes: &[u8]) -> Result<(u8, Vec<NamedTensor>)> {
    let mut r = Reader::new(bytes);
    check_header(&mut r, MAGIC_WEIGHTS, "weights")?;
    let kind = r.u8()?;
    let count = r.u16()? as usize;
    let mut tensors = Vec::with_capacity(count.min(256));
    for _ in 0..count {
        let name_len = r.u8()? as usize;
        let name = String::from_utf8(r.take(name_len)?.to_vec())
            .map_err(|_| ProtocolError::Malformed("tensor name not utf-8".into()))?;
        let rank = r.u8()? as usize;
        if rank > 4 {
            return Err(ProtocolError::Malformed(format!("tensor rank {rank} > 4")));
        }
        let mut dims = Vec::with_capacity(rank);
        let mut total: usize = 1;
        for _ in 0..rank {
            let d = r.u32()? as usize;
            total = total
                .checked_mul(d)
                .ok_or_else(|| ProtocolError::Malformed("tensor dimension overflow".into()))?;
            dims.push(d);
        }
        if total * 8 > r.remaining() {
            return Err(ProtocolError::Malformed(format!(
                "tensor {name} declares {total} elements, {} bytes remain",
                r.remaining()
            )));
        }
        let raw = r.take(total * 8)?;
        let data: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_bits(u64::from_le_bytes(c.try_into().expect("8 bytes"))))
            .collect();
        tensors.push(NamedTensor { name, dims, data });
    }
    r.finish()?;
    Ok((kind, tensors))
}

pub fn serialize_frozen_weights(w: &FrozenWeights) -> Vec<u8> {
    let tensors = vec![
        NamedTensor::vector("conv.w", &w.conv_filter),
        NamedTensor::scalar("conv.b", w.conv_bias),
        NamedTensor::matrix("dense1.w", &w.dense1),
        NamedTensor::vector("dense1.b", &w.dense1_bias),
        NamedTensor::matrix("dense2.w", &w.dense2),
        NamedTensor::vector("dense2.b", &w.dense2_bias),
        NamedTensor::vector("relu.coeffs", &w.relu_coeffs),
        NamedTensor::scalar("pool", w.pool as f64),
    ];
    serialize_tensors(WEIGHTS_KIND_FROZEN, &tensors)
}

pub fn deserialize_frozen_weights(bytes: &[u8]) -> Result<FrozenWeights> {
    let (kind, tensors) = deserialize_tensors(bytes)?;
    if kind != WEIGHTS_KIND_FROZEN {
        return Err(ProtocolError::Malformed(format!(
            "weights kind {kind} is not a frozen prefix"
        )));
    }
    let get = |name: &str| -> Result<&NamedTensor> {
        tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| ProtocolError::Malformed(format!("missing tensor {name}")))
    };
    let relu = get("relu.coeffs")?;
    if relu.data.len() != 4 {
        return Err(ProtocolError::Malformed(
            "relu.coeffs must hold 4 values".into(),
        ));
    }
    let w = FrozenWeights {
        conv_filter: get("conv.w")?.data.clone(),
        conv_bias: *get("conv.b")?
            .data
            .first()
            .ok_or_else(|| ProtocolError::Malformed("conv.b empty".into()))?,
        dense1: get("dense1.w")?.to_matrix()?,
        dense1_bias: get("dense1.b")?.data.clone(),
        dense2: get("dense2.w")?.to_matrix()?,
        dense2_bias: get("dense2.b")?.data.clone(),
        relu_coeffs: [relu.data[0], relu.data[1], relu.data[2], relu.data[3]],
        pool: *get("pool")?
            .data
            .first()
            .ok_or_else(|| ProtocolError::Malformed("pool empty".into()))? as usize,
    };
    w.validate()?;
    Ok(w)
}

impl WireCodec for FrozenWeights {
    fn wire_encode(&self) -> Vec<u8> {
        serialize_frozen_weights(self)
    }
}

// --- Session payloads --------------------------------------------------------

pub fn encode_hello(fp: Fingerprint) -> Vec<u8> {
    let mut out = Vec::with_capacity(34);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&fp.0);
    out
}

pub fn decode_hello(payload: &[u8]) -> Result<Fingerprint> {
    let mut r = Reader::new(payload);
    let ver = r.u16()?;
    if ver != FORMAT_VERSION {
        return Err(ProtocolError::Malformed(format!("hello version {ver}")));
    }
    let fp: [u8; 32] = r.take(32)?.try_into().expect("32 bytes");
    r.finish()?;
    Ok(Fingerprint(fp))
}

pub fn encode_evalkeys(galois: &GaloisKeySet, relin: &RelinKey) -> Vec<u8> {
    let g = serialize_galois_keys(galois);
    let k = serialize_relin_key(relin);
    let mut out = Vec::with_capacity(8 + g.len() + k.len());
    out.extend_from_slice(&(g.len() as u32).to_le_bytes());
    out.extend_from_slice(&g);
    out.extend_from_slice(&(k.len() as u32).to_le_bytes());
    out.extend_from_slice(&k);
    out
}

pub fn decode_evalkeys(
    payload: &[u8],
    params: &Arc<CkksParams>,
) -> Result<(GaloisKeySet, RelinKey)> {
    let mut r = Reader::new(payload);
    let glen = r.u32()? as usize;
    let g = r.take(glen)?;
    let klen = r.u32()? as usize;
    let k = r.take(klen)?;
    r.finish()?;
    Ok((
        deserialize_galois_keys(g, params)?,
        deserialize_relin_key(k, params)?,
    ))
}

pub fn encode_query(seq: u64, ct: &Ciphertext) -> Vec<u8> {
    let body = serialize_ciphertext(ct);
    let mut out = Vec::with_capacity(8 + body.len());
    out.extend_from_slice(&seq.to_le_bytes());
    out.extend_from_slice(&body);
    out
}

pub fn decode_query(payload: &[u8], params: &Arc<CkksParams>) -> Result<(u64, Ciphertext)> {
    let mut r = Reader::new(payload);
    let seq = r.u64()?;
    let rest = r.take(r.remaining())?;
    Ok((seq, deserialize_ciphertext(rest, params)?))
}
