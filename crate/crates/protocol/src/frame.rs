//! Wire frames: 4-byte big-endian payload length, 1-byte type tag,
//! payload. Inside payloads all integers and float bit patterns are
//! little-endian.

use std::io::{Read, Write};

use crate::{ProtocolError, Result};

pub const TAG_HELLO: u8 = 0x01;
pub const TAG_EVALKEYS: u8 = 0x02;
pub const TAG_QUERY: u8 = 0x03;
pub const TAG_RESPONSE: u8 = 0x04;
pub const TAG_ERROR: u8 = 0x7f;

pub const KNOWN_TAGS: [u8; 5] = [TAG_HELLO, TAG_EVALKEYS, TAG_QUERY, TAG_RESPONSE, TAG_ERROR];

/// Default frame cap: 256 MiB (CRYPTOTL_MAX_FRAME overrides in the CLI).
pub const DEFAULT_MAX_FRAME: u64 = 256 * 1024 * 1024;

/// Error codes carried by ERROR frames.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum ErrorCode {
    FingerprintMismatch = 0x01,
    KeysRequired = 0x02,
    Malformed = 0x03,
    UnknownTag = 0x04,
    /// Evaluation failed (depth/level problems); recoverable, the session
    /// continues.
    Evaluation = 0x05,
    Capacity = 0x06,
    Internal = 0x07,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawFrame {
    pub tag: u8,
    pub payload: Vec<u8>,
}

impl RawFrame {
    pub fn new(tag: u8, payload: Vec<u8>) -> Self {
        RawFrame { tag, payload }
    }

    pub fn error(code: ErrorCode, message: &str) -> Self {
        let msg = message.as_bytes();
        let take = msg.len().min(u16::MAX as usize);
        let mut payload = Vec::with_capacity(3 + take);
        payload.push(code as u8);
        payload.extend_from_slice(&(take as u16).to_le_bytes());
        payload.extend_from_slice(&msg[..take]);
        RawFrame {
            tag: TAG_ERROR,
            payload,
        }
    }

    /// Parse an ERROR payload into (code, message).
    pub fn parse_error(&self) -> Result<(u8, String)> {
        if self.tag != TAG_ERROR {
            return Err(ProtocolError::Malformed("not an error frame".into()));
        }
        if self.payload.len() < 3 {
            return Err(ProtocolError::Malformed("error frame too short".into()));
        }
        let code = self.payload[0];
        let len = u16::from_le_bytes([self.payload[1], self.payload[2]]) as usize;
        if self.payload.len() < 3 + len {
            return Err(ProtocolError::Malformed("error message truncated".into()));
        }
        let message = String::from_utf8_lossy(&self.payload[3..3 + len]).into_owned();
        Ok((code, message))
    }

    /// Serialize to the on-wire byte layout.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(5 + self.payload.len());
        out.extend_from_slice(&(self.payload.len() as u32).to_be_bytes());
        out.push(self.tag);
        out.extend_from_slice(&self.payload);
        out
    }

    /// Parse one frame from a byte slice, returning the remainder.
    pub fn from_bytes(bytes: &[u8], max: u64) -> Result<(RawFrame, &[u8])> {
        if bytes.len() < 5 {
            return Err(ProtocolError::Malformed("frame header truncated".into()));
        }
        let len = u32::from_be_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]) as u64;
        if len > max {
            return Err(ProtocolError::Oversize { declared: len, max });
        }
        let tag = bytes[4];
        if !KNOWN_TAGS.contains(&tag) {
            return Err(ProtocolError::UnknownTag(tag));
        }
        let end = 5 + len as usize;
        if bytes.len() < end {
            return Err(ProtocolError::Malformed(format!(
                "payload truncated: declared {len}, available {}",
                bytes.len() - 5
            )));
        }
        Ok((
            RawFrame {
                tag,
                payload: bytes[5..end].to_vec(),
            },
            &bytes[end..],
        ))
    }
}

/// Write one frame to a stream and flush it.
pub fn write_frame(w: &mut impl Write, frame: &RawFrame) -> Result<()> {
    w.write_all(&(frame.payload.len() as u32).to_be_bytes())?;
    w.write_all(&[frame.tag])?;
    w.write_all(&frame.payload)?;
    w.flush()?;
    Ok(())
}

/// Read one frame; Ok(None) on clean EOF at a frame boundary.
pub fn read_frame(r: &mut impl Read, max: u64) -> Result<Option<RawFrame>> {
    let mut len_buf = [0u8; 4];
    match r.read_exact(&mut len_buf) {
        Ok(()) => {}
        Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e.into()),
    }
    let len = u32::from_be_bytes(len_buf) as u64;
    if len > max {
        return Err(ProtocolError::Oversize { declared: len, max });
    }
    let mut tag = [0u8; 1];
    r.read_exact(&mut tag)?;
    let tag = tag[0];
    if !KNOWN_TAGS.contains(&tag) {
        return Err(ProtocolError::UnknownTag(tag));
    }
    let mut payload = vec![0u8; len as usize];
    r.read_exact(&mut payload)?;
    Ok(Some(RawFrame { tag, payload }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_through_stream() {
        let f = RawFrame::new(TAG_QUERY, vec![1, 2, 3, 4, 5]);
        let mut buf = Vec::new();
        write_frame(&mut buf, &f).unwrap();
        assert_eq!(buf.len(), 4 + 1 + 5);
        assert_eq!(&buf[..4], &5u32.to_be_bytes());
        let mut cursor = std::io::Cursor::new(buf);
        let back = read_frame(&mut cursor, DEFAULT_MAX_FRAME).unwrap().unwrap();
        assert_eq!(back, f);
        assert!(read_frame(&mut cursor, DEFAULT_MAX_FRAME)
            .unwrap()
            .is_none());
    }

    #[test]
    fn oversize_and_unknown_tags_are_structured_errors() {
        let mut buf = Vec::new();
        buf.extend_from_slice(&(1024u32).to_be_bytes());
        buf.push(TAG_HELLO);
        buf.extend_from_slice(&[0u8; 1024]);
        let err = read_frame(&mut std::io::Cursor::new(&buf), 512).unwrap_err();
        assert!(matches!(
            err,
            ProtocolError::Oversize {
                declared: 1024,
                max: 512
            }
        ));

        let mut buf = Vec::new();
        buf.extend_from_slice(&0u32.to_be_bytes());
        buf.push(0x55);
        let err = read_frame(&mut std::io::Cursor::new(&buf), 512).unwrap_err();
        assert!(matches!(err, ProtocolError::UnknownTag(0x55)));
    }

    #[test]
    fn error_frame_payload_roundtrip() {
        let f = RawFrame::error(ErrorCode::KeysRequired, "keys required");
        let (code, msg) = f.parse_error().unwrap();
        assert_eq!(code, ErrorCode::KeysRequired as u8);
        assert_eq!(msg, "keys required");
    }
}
