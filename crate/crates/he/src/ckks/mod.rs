//! The leveled CKKS scheme: encoding, keys, encryption, and evaluation.

pub mod cipher;
pub mod embedding;
pub mod eval;
pub mod keys;
pub mod params;

pub use cipher::{decode, decrypt, encode, encrypt, Ciphertext, Plaintext};
pub use keys::{
    gen_galois_keys, keygen, GaloisKeySet, KeySwitchKey, PublicKey, RelinKey, SecretKey,
};
pub use params::{ChainSpec, CkksParams, Fingerprint, SecurityLabel};
