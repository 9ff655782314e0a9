//! Client/server protocol for encrypted frozen-layer queries.
//!
//! Length-prefixed frames over any byte stream (or a directory of frame
//! files for fully offline operation), bit-exact codecs for ciphertexts,
//! evaluation keys, and frozen weights, and the three-phase session:
//! HELLO (parameter fingerprint check), EVALKEYS (client ships rotation
//! and relinearization keys), then any number of QUERY/RESPONSE rounds.
//!
//! The client's secret key never crosses the wire; no codec for it exists.

pub mod client;
pub mod codec;
pub mod error;
pub mod frame;
pub mod session;
pub mod transport;

pub use client::{client_query, query_count, ClientContext};
pub use error::{ProtocolError, Result};
pub use frame::{ErrorCode, RawFrame, DEFAULT_MAX_FRAME};
pub use session::{serve_session, QueryLog, ServerContext, SessionStats};
pub use transport::{channel_pair, ChannelIo, FrameIo, OfflineClientIo, OfflineServerIo, StreamIo};
