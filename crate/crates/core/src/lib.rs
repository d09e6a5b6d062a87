//! Crowdsensed bridge modal identification from mobile scans.
//!
//! The crate pairs a synthetic "virtual laboratory" (an analytically solvable
//! beam, a mobile-sensor sampler, and a quarter-car suspension filter) with
//! the identification pipeline itself: per-scan continuous wavelet maps,
//! time-to-space mapping onto a shared grid, aggregation of many unsynchronized
//! scans, noise-bed removal, peak picking, and absolute mode-shape extraction
//! with confidence intervals and accuracy metrics.

pub mod beam;
pub mod config;
pub mod cwt;
pub mod error;
pub mod formats;
pub mod modal;
pub mod pipeline;
pub mod scan;
pub mod spacemap;
pub mod vehicle;

pub use error::{Error, Result};

/// Stable seed derivation for independent deterministic substreams.
///
/// Every stochastic stage derives its RNG seed from the experiment master
/// seed, a stream tag, and an index, so results do not depend on scheduling
/// or worker count.
pub fn derive_seed(master: u64, stream: u64, index: u64) -> u64 {
    let mut z = master
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(index.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    // splitmix64 finalizer
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
