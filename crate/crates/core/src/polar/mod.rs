//! Polar codes on the binary symmetric channel.
//!
//! `x = u G` with `G = F^{(x)n} B`. Because `G G = I`, Bob's slice sequence can
//! itself be treated as a codeword: he sends the frozen part of `U = Q G` and
//! Alice decodes her noisy estimate of `Q` as if it had come through a BSC.

mod construct;
mod crc;
mod decode;
mod frozen_file;
mod transform;

pub use construct::{
    bhattacharyya, construct_bsc, construct_for_target, log_bhattacharyya, select_info_count, select_rate,
};
pub use crc::{bits_to_value, bytes_to_bits, crc32_bits, crc_attach, crc_check, value_to_bits, CRC_WIDTH};
pub(crate) use decode::finish as decode_finish;
pub use decode::{encode, f_exact, g, sc_decision_llrs, sc_decode, sc_decode_with, CrcCheck, DecodeResult, ScDecoder};
pub use frozen_file::{cache_file_name, load_or_construct, read_frozen_file, write_frozen_file, CodeKey};
pub use transform::{bit_reverse, bit_reverse_permute, butterfly, polar_transform};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum NodeKind {
    Rate0,
    Rate1,
    Mixed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolarCode {
    n: usize,
    frozen: Vec<usize>,
    info: Vec<usize>,
    crc_width: usize,
    bsc_error: f64,
    kinds: Vec<NodeKind>,
}

impl PolarCode {
    /// Builds a code from a sorted frozen set.
    pub fn from_frozen(n: usize, frozen: Vec<usize>, crc_width: usize, bsc_error: f64) -> Result<Self> {
        transform::check_length(n)?;
        if frozen.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("frozen set must be strictly increasing"));
        }
        if frozen.last().is_some_and(|&i| i >= n) {
            return Err(Error::invalid("frozen index out of range"));
        }
        let mut is_frozen = vec![false; n];
        frozen.iter().for_each(|&i| is_frozen[i] = true);
        let info: Vec<usize> = (0..n).filter(|&i| !is_frozen[i]).collect();
        if crc_width != 0 && crc_width != CRC_WIDTH {
            return Err(Error::invalid(format!(
                "CRC width must be 0 or {CRC_WIDTH}, got {crc_width}"
            )));
        }
        if info.len() < crc_width {
            return Err(Error::invalid(format!(
                "{} information positions cannot hold a {crc_width}-bit CRC",
                info.len()
            )));
        }
        let mut kinds = vec![NodeKind::Mixed; 2 * n];
        for i in 0..n {
            kinds[n + i] = if is_frozen[i] { NodeKind::Rate0 } else { NodeKind::Rate1 };
        }
        for id in (1..n).rev() {
            kinds[id] = match (kinds[2 * id], kinds[2 * id + 1]) {
                (NodeKind::Rate0, NodeKind::Rate0) => NodeKind::Rate0,
                (NodeKind::Rate1, NodeKind::Rate1) => NodeKind::Rate1,
                _ => NodeKind::Mixed,
            };
        }
        Ok(Self {
            n,
            frozen,
            info,
            crc_width,
            bsc_error,
            kinds,
        })
    }

    pub fn with_crc(self, crc_width: usize) -> Result<Self> {
        Self::from_frozen(self.n, self.frozen, crc_width, self.bsc_error)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn frozen(&self) -> &[usize] {
        &self.frozen
    }

    pub fn info(&self) -> &[usize] {
        &self.info
    }

    pub fn crc_width(&self) -> usize {
        self.crc_width
    }

    pub fn bsc_error(&self) -> f64 {
        self.bsc_error
    }

    /// `R' = k / n`.
    pub fn rate_pre_crc(&self) -> f64 {
        self.info.len() as f64 / self.n as f64
    }

    /// `R = R' - n_crc / n`.
    pub fn effective_rate(&self) -> f64 {
        (self.info.len() - self.crc_width) as f64 / self.n as f64
    }

    pub(crate) fn node_kinds(&self) -> &[NodeKind] {
        &self.kinds
    }
}
