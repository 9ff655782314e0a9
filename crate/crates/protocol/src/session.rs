//! The server side of a session.
//!
//! State machine: AwaitingHello -> AwaitingKeys -> Ready. HELLO carries
//! the client's parameter fingerprint and is answered with the server's;
//! EVALKEYS caches rotation/relinearization material for the session;
//! each QUERY is answered with one RESPONSE echoing its sequence number.
//! Failures produce an ERROR frame: evaluation problems are recoverable
//! (the session continues), protocol violations close the session. Keys
//! live only as long as the session unless retention is enabled.

use std::sync::Arc;
use std::time::Instant;

use cryptotl_he::ckks::CkksParams;
use cryptotl_he::layers::{frozen_forward, EvalKeys, FrozenOperands, OpCounter};

use crate::codec::{decode_evalkeys, decode_hello, encode_hello, encode_query};
use crate::frame::{
    ErrorCode, RawFrame, TAG_ERROR, TAG_EVALKEYS, TAG_HELLO, TAG_QUERY, TAG_RESPONSE,
};
use crate::transport::FrameIo;
use crate::{ProtocolError, Result};

/// Immutable server-side state shared by all sessions.
pub struct ServerContext {
    pub params: Arc<CkksParams>,
    pub operands: FrozenOperands,
    /// Keep client keys across sessions of one connection loop.
    pub retain_keys: bool,
}

/// Per-query log record.
#[derive(Clone, Debug)]
pub struct QueryLog {
    pub seq: u64,
    pub bytes_in: usize,
    pub bytes_out: usize,
    pub levels_consumed: usize,
    pub wall_ms: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SessionStats {
    pub queries: u64,
    pub recoverable_errors: u64,
    pub fatal: bool,
}

enum Phase {
    AwaitingHello,
    AwaitingKeys,
    Ready,
}

impl Phase {
    fn name(&self) -> &'static str {
        match self {
            Phase::AwaitingHello => "awaiting-hello",
            Phase::AwaitingKeys => "awaiting-keys",
            Phase::Ready => "ready",
        }
    }
}

/// Drive one session over a transport until EOF or a fatal error. Cached
/// evaluation keys survive into the next session only when the context
/// retains them.
pub fn serve_session(
    io: &mut dyn FrameIo,
    cx: &ServerContext,
    cached_keys: &mut Option<EvalKeys>,
    mut on_query: impl FnMut(&QueryLog),
) -> Result<SessionStats> {
    let mut stats = SessionStats::default();
    let mut phase = Phase::AwaitingHello;
    if !cx.retain_keys {
        *cached_keys = None;
    }

    loop {
        let frame = match io.read_frame() {
            Ok(Some(f)) => f,
            Ok(None) => break,
            Err(e @ ProtocolError::Pending(_)) => return Err(e),
            Err(e) => {
                let _ = io.write_frame(&RawFrame::error(ErrorCode::Malformed, &e.to_string()));
                stats.fatal = true;
                break;
            }
        };
        match (&phase, frame.tag) {
            (Phase::AwaitingHello, TAG_HELLO) => match decode_hello(&frame.payload) {
                Ok(fp) if fp == cx.params.fingerprint() => {
                    io.write_frame(&RawFrame::new(
                        TAG_HELLO,
                        encode_hello(cx.params.fingerprint()),
                    ))?;
                    phase = if cached_keys.is_some() {
                        Phase::Ready
                    } else {
                        Phase::AwaitingKeys
                    };
                }
                Ok(_) => {
                    let _ = io.write_frame(&RawFrame::error(
                        ErrorCode::FingerprintMismatch,
                        "parameter fingerprint mismatch",
                    ));
                    stats.fatal = true;
                    break;
                }
                Err(e) => {
                    let _ = io.write_frame(&RawFrame::error(ErrorCode::Malformed, &e.to_string()));
                    stats.fatal = true;
                    break;
                }
            },
            (Phase::AwaitingKeys, TAG_EVALKEYS) => {
                match decode_evalkeys(&frame.payload, &cx.params) {
                    Ok((galois, relin)) => {
                        *cached_keys = Some(EvalKeys { galois, relin });
                        phase = Phase::Ready;
                    }
                    Err(e) => {
                        let _ =
                            io.write_frame(&RawFrame::error(ErrorCode::Malformed, &e.to_string()));
                        stats.fatal = true;
                        break;
                    }
                }
            }
            (Phase::AwaitingKeys, TAG_QUERY) => {
                let _ = io.write_frame(&RawFrame::error(ErrorCode::KeysRequired, "keys required"));
                stats.fatal = true;
                break;
            }
            (Phase::Ready, TAG_QUERY) => {
                let bytes_in = frame.payload.len();
                let started = Instant::now();
                match crate::codec::decode_query(&frame.payload, &cx.params) {
                    Ok((seq, ct)) => {
                        let keys = cached_keys.as_ref().expect("ready phase has keys");
                        let counter = OpCounter::new();
                        match frozen_forward(&ct, &cx.operands, keys, &counter) {
                            Ok(result) => {
                                let payload = encode_query(seq, &result);
                                let bytes_out = payload.len();
                                io.write_frame(&RawFrame::new(TAG_RESPONSE, payload))?;
                                stats.queries += 1;
                                on_query(&QueryLog {
                                    seq,
                                    bytes_in,
                                    bytes_out,
                                    levels_consumed: ct.level() - result.level(),
                                    wall_ms: started.elapsed().as_secs_f64() * 1e3,
                                });
                            }
                            Err(e) => {
                                // Depth/level trouble is the client's to fix;
                                // the session survives.
                                io.write_frame(&RawFrame::error(
                                    ErrorCode::Evaluation,
                                    &e.to_string(),
                                ))?;
                                stats.recoverable_errors += 1;
                            }
                        }
                    }
                    Err(e) => {
                        let _ =
                            io.write_frame(&RawFrame::error(ErrorCode::Malformed, &e.to_string()));
                        stats.fatal = true;
                        break;
                    }
                }
            }
            (_, TAG_ERROR) => {
                stats.fatal = true;
                break;
            }
            (p, tag) => {
                let _ = io.write_frame(&RawFrame::error(
                    ErrorCode::UnknownTag,
                    &format!("frame 0x{tag:02x} not valid in phase {}", p.name()),
                ));
                stats.fatal = true;
                break;
            }
        }
    }
    if !cx.retain_keys {
        *cached_keys = None;
    }
    Ok(stats)
}
