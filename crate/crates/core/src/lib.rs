//! Rotation-based slice error correction (RSEC) for continuous-variable QKD.
//!
//! The crate simulates correlated Gaussian raw data for Alice and Bob, runs
//! reverse reconciliation with either the rotated slice protocol (RSEC) or the
//! classic slice error correction baseline (SEC) on top of polar codes, and
//! evaluates quantization efficiency, reconciliation efficiency and finite-size
//! secret key rates.
//!
//! Module map:
//!
//! - [`channel`]: Gaussian raw data `Y = X + Z` and per-slice BER calibration.
//! - [`rotation`]: target points on the unit sphere and the Householder map.
//! - [`quantizer`]: equidistant slice grids, bit assignment and entropy.
//! - [`estimator`]: Alice's per-slice log-likelihood ratios.
//! - [`polar`]: polar transform, BSC construction, SC decoding and CRC-32.
//! - [`recon`]: full reconciliation sessions and the leakage ledger.
//! - [`keyrate`]: Holevo bound, finite-size offset and PLOB bound.
//! - [`experiment`]: config-driven sweeps that emit CSV.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod error;
pub mod estimator;
pub mod experiment;
pub mod keyrate;
pub mod polar;
pub mod quantizer;
pub mod recon;
pub mod rng;
pub mod rotation;

pub use channel::{ChannelParams, CorrelatedBlock, Protocol, SliceBerEstimate};
pub use error::{Error, Result};
pub use quantizer::SliceGrid;

/// Binary entropy in bits, with `H2(0) = H2(1) = 0`.
pub fn binary_entropy(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        return 0.0;
    }
    -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_entropy_endpoints() {
        assert_eq!(binary_entropy(0.0), 0.0);
        assert_eq!(binary_entropy(1.0), 0.0);
        assert!((binary_entropy(0.5) - 1.0).abs() < 1e-15);
        assert!((binary_entropy(0.11) - binary_entropy(0.89)).abs() < 1e-15);
    }
}
