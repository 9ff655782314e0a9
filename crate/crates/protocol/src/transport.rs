//! Frame transports: byte streams, in-process channels, and the offline
//! directory mode where every frame is a file (client frames c0000.frame,
//! c0001.frame, ...; server frames s0000.frame, ...). Offline mode makes
//! the whole protocol testable and scriptable with no socket at all.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::mpsc::{Receiver, Sender};

use crate::frame::{read_frame, write_frame, RawFrame, DEFAULT_MAX_FRAME, KNOWN_TAGS};
use crate::{ProtocolError, Result};

/// A bidirectional ordered frame pipe.
pub trait FrameIo {
    /// Next incoming frame; Ok(None) on clean end of stream.
    fn read_frame(&mut self) -> Result<Option<RawFrame>>;
    fn write_frame(&mut self, frame: &RawFrame) -> Result<()>;
}

/// Frames over any Read + Write stream (TCP sockets included).
pub struct StreamIo<T: Read + Write> {
    stream: T,
    max_frame: u64,
}

impl<T: Read + Write> StreamIo<T> {
    pub fn new(stream: T, max_frame: u64) -> Self {
        StreamIo { stream, max_frame }
    }

    pub fn with_default_cap(stream: T) -> Self {
        Self::new(stream, DEFAULT_MAX_FRAME)
    }
}

impl<T: Read + Write> FrameIo for StreamIo<T> {
    fn read_frame(&mut self) -> Result<Option<RawFrame>> {
        read_frame(&mut self.stream, self.max_frame)
    }

    fn write_frame(&mut self, frame: &RawFrame) -> Result<()> {
        write_frame(&mut self.stream, frame)
    }
}

/// In-process transport over channels; the test loopback.
pub struct ChannelIo {
    tx: Option<Sender<RawFrame>>,
    rx: Receiver<RawFrame>,
}

impl ChannelIo {
    /// Signal end-of-stream to the peer while keeping the read half open.
    pub fn close_write(&mut self) {
        self.tx = None;
    }
}

impl FrameIo for ChannelIo {
    fn read_frame(&mut self) -> Result<Option<RawFrame>> {
        match self.rx.recv() {
            Ok(f) => Ok(Some(f)),
            Err(_) => Ok(None), // peer hung up
        }
    }

    fn write_frame(&mut self, frame: &RawFrame) -> Result<()> {
        self.tx
            .as_ref()
            .and_then(|tx| tx.send(frame.clone()).ok())
            .ok_or_else(|| ProtocolError::Io(std::io::Error::from(std::io::ErrorKind::BrokenPipe)))
    }
}

/// A connected pair of in-process transports.
pub fn channel_pair() -> (ChannelIo, ChannelIo) {
    let (tx_a, rx_b) = std::sync::mpsc::channel();
    let (tx_b, rx_a) = std::sync::mpsc::channel();
    (
        ChannelIo {
            tx: Some(tx_a),
            rx: rx_a,
        },
        ChannelIo {
            tx: Some(tx_b),
            rx: rx_b,
        },
    )
}

fn frame_path(dir: &Path, side: char, idx: usize) -> PathBuf {
    dir.join(format!("{side}{idx:04}.frame"))
}

fn read_frame_file(path: &Path, max: u64) -> Result<RawFrame> {
    let bytes = std::fs::read(path)?;
    let (frame, rest) = RawFrame::from_bytes(&bytes, max)?;
    if !rest.is_empty() {
        return Err(ProtocolError::Malformed(format!(
            "{} holds trailing bytes",
            path.display()
        )));
    }
    Ok(frame)
}

/// Client side of the offline exchange: outgoing frames become c-files,
/// reads consume s-files in order. A missing s-file surfaces as
/// [`ProtocolError::Pending`]: run the server pass over the directory and
/// retry.
pub struct OfflineClientIo {
    dir: PathBuf,
    write_idx: usize,
    read_idx: usize,
    max_frame: u64,
}

impl OfflineClientIo {
    pub fn new(dir: &Path, max_frame: u64) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(OfflineClientIo {
            dir: dir.to_path_buf(),
            write_idx: 0,
            read_idx: 0,
            max_frame,
        })
    }

    /// Count of client frames currently in the directory with a tag.
    pub fn count_client_frames(dir: &Path, tag: u8) -> Result<usize> {
        let mut n = 0;
        let mut idx = 0;
        loop {
            let p = frame_path(dir, 'c', idx);
            if !p.exists() {
                return Ok(n);
            }
            if read_frame_file(&p, DEFAULT_MAX_FRAME)?.tag == tag {
                n += 1;
            }
            idx += 1;
        }
    }
}

impl FrameIo for OfflineClientIo {
    fn read_frame(&mut self) -> Result<Option<RawFrame>> {
        let p = frame_path(&self.dir, 's', self.read_idx);
        if !p.exists() {
            return Err(ProtocolError::Pending(format!(
                "server frame {} not yet produced",
                p.display()
            )));
        }
        let f = read_frame_file(&p, self.max_frame)?;
        self.read_idx += 1;
        Ok(Some(f))
    }

    fn write_frame(&mut self, frame: &RawFrame) -> Result<()> {
        let p = frame_path(&self.dir, 'c', self.write_idx);
        // Re-runs keep previously written frames (encryption randomness
        // would otherwise change the bytes; the responses on file answer
        // the original frames).
        if !p.exists() {
            std::fs::write(&p, frame.to_bytes())?;
        }
        self.write_idx += 1;
        Ok(())
    }
}

/// Server side of the offline exchange: reads c-files, writes s-files.
/// Ends cleanly when the c-files run out.
pub struct OfflineServerIo {
    dir: PathBuf,
    read_idx: usize,
    write_idx: usize,
    max_frame: u64,
}

impl OfflineServerIo {
    pub fn new(dir: &Path, max_frame: u64) -> Result<Self> {
        if !dir.is_dir() {
            return Err(ProtocolError::Io(std::io::Error::new(
                std::io::ErrorKind::NotFound,
                format!("offline directory {} missing", dir.display()),
            )));
        }
        Ok(OfflineServerIo {
            dir: dir.to_path_buf(),
            read_idx: 0,
            write_idx: 0,
            max_frame,
        })
    }
}

impl FrameIo for OfflineServerIo {
    fn read_frame(&mut self) -> Result<Option<RawFrame>> {
        let p = frame_path(&self.dir, 'c', self.read_idx);
        if !p.exists() {
            return Ok(None);
        }
        let f = read_frame_file(&p, self.max_frame)?;
        self.read_idx += 1;
        Ok(Some(f))
    }

    fn write_frame(&mut self, frame: &RawFrame) -> Result<()> {
        let p = frame_path(&self.dir, 's', self.write_idx);
        std::fs::write(&p, frame.to_bytes())?;
        self.write_idx += 1;
        Ok(())
    }
}

/// Validate every frame file in a directory parses (diagnostics helper).
pub fn scan_offline_dir(dir: &Path) -> Result<(usize, usize)> {
    let mut c = 0;
    let mut s = 0;
    for side in ['c', 's'] {
        let mut idx = 0;
        loop {
            let p = frame_path(dir, side, idx);
            if !p.exists() {
                break;
            }
            let f = read_frame_file(&p, DEFAULT_MAX_FRAME)?;
            if !KNOWN_TAGS.contains(&f.tag) {
                return Err(ProtocolError::UnknownTag(f.tag));
            }
            idx += 1;
        }
        if side == 'c' {
            c = idx;
        } else {
            s = idx;
        }
    }
    Ok((c, s))
}
