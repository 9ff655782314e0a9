//! The client side: handshake, key upload, and batched encrypted queries.

use std::sync::Arc;

use cryptotl_he::ckks::{
    decode, decrypt, encode, encrypt, CkksParams, GaloisKeySet, PublicKey, RelinKey, SecretKey,
};
use cryptotl_he::layers::{pack_batch, unpack_batch, PackingPlan};
use rand::Rng;

use crate::codec::{decode_hello, decode_query, encode_evalkeys, encode_hello, encode_query};
use crate::frame::{RawFrame, TAG_ERROR, TAG_EVALKEYS, TAG_HELLO, TAG_QUERY, TAG_RESPONSE};
use crate::transport::FrameIo;
use crate::{ProtocolError, Result};

/// Everything the client needs for a query session. The secret key stays
/// here; only evaluation material is ever sent.
pub struct ClientContext {
    pub params: Arc<CkksParams>,
    pub plan: PackingPlan,
    pub sk: SecretKey,
    pub pk: PublicKey,
    pub relin: RelinKey,
    pub galois: GaloisKeySet,
    /// Valid output slots per item (t - pool + 1).
    pub feature_width: usize,
}

/// Queries a dataset of n items takes: ceil(n / p_impl).
pub fn query_count(n: usize, p_impl: usize) -> usize {
    n.div_ceil(p_impl)
}

fn expect_frame(io: &mut dyn FrameIo, tag: u8) -> Result<RawFrame> {
    match io.read_frame()? {
        Some(f) if f.tag == tag => Ok(f),
        Some(f) if f.tag == TAG_ERROR => {
            let (code, message) = f.parse_error()?;
            Err(ProtocolError::Remote { code, message })
        }
        Some(f) => Err(ProtocolError::UnexpectedFrame {
            got: f.tag,
            phase: "client",
        }),
        None => Err(ProtocolError::Io(std::io::Error::from(
            std::io::ErrorKind::UnexpectedEof,
        ))),
    }
}

/// Run the full exchange for a batch of items: handshake, evaluation
/// keys, then exactly ceil(n / p_impl) QUERY/RESPONSE rounds. Returns one
/// feature vector (width `feature_width`) per input item, in order.
///
/// Over an interactive transport each query waits for its response. When
/// the transport reports responses as pending (the offline directory
/// mode), every request frame is written first, so a later server pass
/// can answer the whole batch; the pending error then surfaces to the
/// caller, and re-running after the server pass collects the results.
///
/// An empty input issues no frames at all.
pub fn client_query<R: Rng>(
    io: &mut dyn FrameIo,
    items: &[Vec<f64>],
    cx: &ClientContext,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    if items.is_empty() {
        return Ok(Vec::new());
    }

    io.write_frame(&RawFrame::new(
        TAG_HELLO,
        encode_hello(cx.params.fingerprint()),
    ))?;
    // Probe for the ack: interactive transports answer now, the offline
    // directory answers only after a server pass.
    let ack = match expect_frame(io, TAG_HELLO) {
        Ok(f) => Some(f),
        Err(ProtocolError::Pending(_)) => None,
        Err(e) => return Err(e),
    };
    if let Some(ack) = &ack {
        let server_fp = decode_hello(&ack.payload)?;
        if server_fp != cx.params.fingerprint() {
            return Err(ProtocolError::Fingerprint);
        }
    }

    io.write_frame(&RawFrame::new(
        TAG_EVALKEYS,
        encode_evalkeys(&cx.galois, &cx.relin),
    ))?;

    let top = cx.params.max_level();
    let scale = cx.params.log2_scale() as f64;
    let chunks: Vec<&[Vec<f64>]> = items.chunks(cx.plan.p_impl).collect();

    let mut responses: Vec<RawFrame> = Vec::with_capacity(chunks.len());
    if ack.is_some() {
        // Interactive: one round trip per chunk.
        for (seq, chunk) in chunks.iter().enumerate() {
            let frame = build_query(seq as u64, chunk, cx, top, scale, rng)?;
            io.write_frame(&frame)?;
            responses.push(expect_frame(io, TAG_RESPONSE)?);
        }
    } else {
        // Offline: write everything, then try to read everything. The
        // first missing response propagates as Pending.
        for (seq, chunk) in chunks.iter().enumerate() {
            let frame = build_query(seq as u64, chunk, cx, top, scale, rng)?;
            io.write_frame(&frame)?;
        }
        let ack = expect_frame(io, TAG_HELLO)?;
        let server_fp = decode_hello(&ack.payload)?;
        if server_fp != cx.params.fingerprint() {
            return Err(ProtocolError::Fingerprint);
        }
        for _ in 0..chunks.len() {
            responses.push(expect_frame(io, TAG_RESPONSE)?);
        }
    }

    let mut features = Vec::with_capacity(items.len());
    for (seq, (chunk, resp)) in chunks.iter().zip(&responses).enumerate() {
        let (echo, result) = decode_query(&resp.payload, &cx.params)?;
        if echo != seq as u64 {
            return Err(ProtocolError::Malformed(format!(
                "response sequence {echo} != expected {seq}"
            )));
        }
        let plain = decode(&decrypt(&result, &cx.sk)?);
        features.extend(unpack_batch(
            &plain,
            &cx.plan,
            cx.feature_width,
            chunk.len(),
        ));
    }
    Ok(features)
}

fn build_query<R: Rng>(
    seq: u64,
    chunk: &[Vec<f64>],
    cx: &ClientContext,
    top: usize,
    scale: f64,
    rng: &mut R,
) -> Result<RawFrame> {
    let slots = pack_batch(chunk, &cx.plan)?;
    let pt = encode(&cx.params, &slots, top, scale)?;
    let ct = encrypt(&pt, &cx.pk, rng)?;
    Ok(RawFrame::new(TAG_QUERY, encode_query(seq, &ct)))
}
