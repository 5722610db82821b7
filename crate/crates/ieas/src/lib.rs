//! IEAS image cipher and its differential cryptanalysis.
//!
//! The cipher splits an N x 2N grayscale image into two N x N halves and
//! runs T rounds of mask XOR, cat-map pixel permutation, and a raster-order
//! chained substitution, with all key material drawn from logistic-map
//! orbits. When the substitution multiplier A is even, the low bit planes
//! of every round are linear over GF(2), so differences of plain-images
//! propagate through the rounds as pure XOR-and-permute. The `attack`
//! module exploits this to recover equivalent key material from a handful
//! of known or chosen plain-images for T = 1 through 4; `analysis`
//! quantifies plaintext sensitivity and the effective key space.

pub mod analysis;
pub mod attack;
pub mod catmap;
pub mod cipher;
pub mod imageio;
pub mod keyschedule;

pub use attack::{EquivalentKey, PlainCipherPair, RecoveredImage};
pub use cipher::{CipherParams, HalfImage};
pub use imageio::Image;
pub use keyschedule::{KeySchedule, SecretKey};
