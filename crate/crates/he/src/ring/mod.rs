//! Negacyclic polynomial ring R_q = Z_q[X]/(X^N + 1) in RNS form.

pub mod bigint;
pub mod element;
pub mod modarith;
pub mod ntt;
pub mod params;
pub mod sampling;

pub use element::{Domain, RingElement};
pub use modarith::Modulus;
pub use params::{PrimeContext, RingParams};
