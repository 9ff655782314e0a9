//! CKKS homomorphic encryption engine and encrypted CNN layer circuits.
//!
//! The crate is organized in three layers:
//!
//! - [`ring`]: negacyclic polynomial arithmetic over an RNS prime chain,
//!   with a per-prime number-theoretic transform. This is the substrate
//!   every ciphertext operation runs on.
//! - [`ckks`]: the leveled CKKS scheme -- slot encoding of real vectors,
//!   key generation, encryption, homomorphic add/multiply/rescale/rotate.
//! - [`layers`]: SIMD-packed encrypted evaluation of the frozen CNN stack
//!   (1-D convolution, baby-step/giant-step dense layers, cubic ReLU
//!   approximation, average pooling), each with an unencrypted twin used
//!   as a correctness oracle.

pub mod ckks;
pub mod error;
pub mod layers;
pub mod ring;

pub use error::{HeError, Result};
