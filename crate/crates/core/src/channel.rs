//! Correlated Gaussian raw data and per-slice error calibration.

use std::fmt;

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{hard_estimate, llr_last_slice, IntervalLikelihoods, KnownSlices};
use crate::quantizer::SliceGrid;
use crate::rng::{stream, substream};
use crate::rotation::rotate_block;

/// Default number of calibration samples.
pub const DEFAULT_CALIBRATION_SAMPLES: usize = 1 << 20;

/// Bounds applied to calibrated error rates before code construction.
pub const MIN_CONSTRUCTION_BER: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    modulation_variance: f64,
    noise_variance: f64,
    snr: f64,
}

impl ChannelParams {
    pub fn new(modulation_variance: f64, noise_variance: f64) -> Result<Self> {
        for (name, v) in [
            ("modulation variance", modulation_variance),
            ("noise variance", noise_variance),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("{name} must be finite and positive, got {v}")));
            }
        }
        Ok(Self {
            modulation_variance,
            noise_variance,
            snr: modulation_variance / noise_variance,
        })
    }

    /// Unit modulation variance and `sigma^2 = 1 / snr`.
    pub fn from_snr(snr: f64) -> Result<Self> {
        if !(snr.is_finite() && snr > 0.0) {
            return Err(Error::invalid(format!("snr must be finite and positive, got {snr}")));
        }
        Self::new(1.0, 1.0 / snr)
    }

    pub fn modulation_variance(&self) -> f64 {
        self.modulation_variance
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    pub fn snr(&self) -> f64 {
        self.snr
    }

    /// Variance of Bob's samples, `delta^2 + sigma^2`.
    pub fn total_variance(&self) -> f64 {
        self.modulation_variance + self.noise_variance
    }

    pub fn mutual_information(&self) -> f64 {
        0.5 * (1.0 + self.snr).log2()
    }
}

/// Shannon capacity `1/2 log2(1 + snr)` in bits per symbol.
pub fn mutual_information(snr: f64) -> Result<f64> {
    if !(snr >= 0.0) {
        return Err(Error::invalid(format!("snr must be non-negative, got {snr}")));
    }
    Ok(0.5 * snr.ln_1p() / std::f64::consts::LN_2)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelatedBlock {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub params: ChannelParams,
    pub seed: u64,
}

impl CorrelatedBlock {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
}

/// Draws `n` samples of `X ~ N(0, delta^2)` and `Y = X + Z`, `Z ~ N(0, sigma^2)`.
pub fn generate_block(n: usize, params: &ChannelParams, seed: u64) -> Result<CorrelatedBlock> {
    if n == 0 {
        return Err(Error::invalid("block length must be positive"));
    }
    let params = ChannelParams::new(params.modulation_variance, params.noise_variance)?;
    let mut rng = substream(seed, stream::CHANNEL, 0);
    let sd_x = params.modulation_variance.sqrt();
    let sd_z = params.noise_variance.sqrt();
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let xi: f64 = StandardNormal.sample(&mut rng);
        let zi: f64 = StandardNormal.sample(&mut rng);
        let xi = sd_x * xi;
        x.push(xi);
        y.push(xi + sd_z * zi);
    }
    Ok(CorrelatedBlock { x, y, params, seed })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Rsec,
    Sec,
}

impl Protocol {
    pub const ALL: [Protocol; 2] = [Protocol::Rsec, Protocol::Sec];
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Protocol::Rsec => "RSEC",
            Protocol::Sec => "SEC",
        })
    }
}

/// Order in which the non-disclosed slices are corrected (1-based).
///
/// RSEC corrects the sign slice first, then `l, ..., m - 1`; SEC goes
/// `l, ..., m`. Slices `1..l-1` (`disclosed` of them) are sent in the clear.
pub fn decode_order(protocol: Protocol, m: u32, disclosed: u32) -> Result<Vec<u32>> {
    if m == 0 || disclosed >= m {
        return Err(Error::invalid(format!(
            "need 0 <= disclosed < m, got disclosed = {disclosed}, m = {m}"
        )));
    }
    Ok(match protocol {
        Protocol::Rsec => std::iter::once(m).chain(disclosed + 1..m).collect(),
        Protocol::Sec => (disclosed + 1..=m).collect(),
    })
}

/// Mask of the slices Alice knows when she estimates slice `k`.
pub fn conditioning_mask(protocol: Protocol, m: u32, k: u32) -> u32 {
    let low = (1u32 << (k - 1)) - 1;
    match protocol {
        Protocol::Rsec if k < m => low | (1 << (m - 1)),
        _ => low,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceBerEstimate {
    pub e: Vec<f64>,
    pub sample_count: usize,
}

impl SliceBerEstimate {
    /// Error rates clamped into the range safe for code construction.
    pub fn for_construction(&self) -> Vec<f64> {
        self.e.iter().map(|e| e.clamp(MIN_CONSTRUCTION_BER, 0.5)).collect()
    }

    pub fn csv_rows(&self, snr: f64) -> Vec<CalibrationRow> {
        self.e
            .iter()
            .enumerate()
            .map(|(i, &e)| CalibrationRow {
                snr,
                slice_index: i as u32 + 1,
                e,
                samples: self.sample_count,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRow {
    pub snr: f64,
    pub slice_index: u32,
    pub e: f64,
    pub samples: usize,
}

/// Calibration data after the protocol's preprocessing.
///
/// For RSEC the block is rotated once up front, so many grids can be scored
/// on the same data without redoing the rotation.
#[derive(Debug, Clone)]
pub struct CalibrationSet {
    protocol: Protocol,
    params: ChannelParams,
    d: usize,
    alice: Vec<f64>,
    bob: Vec<f64>,
    alice_norms: Vec<f64>,
}

const CHUNK: usize = 1 << 12;

impl CalibrationSet {
    /// Copy of the first `n` samples, rounded down to whole vectors.
    pub fn prefix(&self, n: usize) -> Self {
        let d = self.d.max(1);
        let n = (n - n % d).clamp(d.min(self.len()), self.len());
        Self {
            protocol: self.protocol,
            params: self.params,
            d: self.d,
            alice: self.alice[..n].to_vec(),
            bob: self.bob[..n].to_vec(),
            alice_norms: self.alice_norms[..self.alice_norms.len().min(n / d)].to_vec(),
        }
    }

    pub fn prepare(block: &CorrelatedBlock, protocol: Protocol, d: usize) -> Result<Self> {
        if block.is_empty() {
            return Err(Error::invalid("empty calibration block"));
        }
        if block.x.len() != block.y.len() {
            return Err(Error::LengthMismatch {
                expected: block.y.len(),
                got: block.x.len(),
            });
        }
        let mut alice = block.x.clone();
        let mut bob = block.y.clone();
        let alice_norms = match protocol {
            Protocol::Rsec => rotate_block(&mut alice, &mut bob, d, block.seed)?,
            Protocol::Sec => Vec::new(),
        };
        Ok(Self {
            protocol,
            params: block.params,
            d,
            alice,
            bob,
            alice_norms,
        })
    }

    pub fn protocol(&self) -> Protocol {
        self.protocol
    }

    pub fn params(&self) -> &ChannelParams {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.alice.len()
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn is_empty(&self) -> bool {
        self.alice.is_empty()
    }

    /// Plug-in entropy, in bits, of the interval index of Bob's (preprocessed)
    /// samples.
    pub fn empirical_entropy(&self, grid: &SliceGrid) -> f64 {
        let mut counts = vec![0u64; grid.intervals()];
        for &y in &self.bob {
            counts[grid.interval_index(y)] += 1;
        }
        let n = self.bob.len() as f64;
        counts
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let p = c as f64 / n;
                -p * p.log2()
            })
            .sum()
    }

    /// Fraction of hard-estimate errors per slice, each slice conditioned on
    /// the true values of the slices before it in decode order.
    pub fn slice_errors(&self, grid: &SliceGrid) -> Result<SliceBerEstimate> {
        let m = grid.m();
        let order = decode_order(self.protocol, m, 0)?;
        let sigma = self.params.noise_variance().sqrt();
        let snr = self.params.snr();
        let chunk = CHUNK - CHUNK % self.d.max(1);
        let counts = self
            .alice
            .par_chunks(chunk)
            .zip(self.bob.par_chunks(chunk))
            .enumerate()
            .map(|(c, (xs, ys))| -> Result<Vec<u64>> {
                let mut errs = vec![0u64; m as usize];
                let mut lik = IntervalLikelihoods::new(0.0, grid, sigma);
                for (j, (&x, &y)) in xs.iter().zip(ys).enumerate() {
                    let word = grid.interval_index(y);
                    lik.refill(x);
                    for &k in &order {
                        let bit = ((word >> (k - 1)) & 1) as u8;
                        let est = if self.protocol == Protocol::Rsec && k == m {
                            let norm = self.alice_norms[(c * chunk + j) / self.d];
                            hard_estimate(llr_last_slice(x, norm, snr)?)
                        } else {
                            let mask = conditioning_mask(self.protocol, m, k);
                            hard_estimate(lik.llr(k, KnownSlices::from_word(word as u32, mask)))
                        };
                        if est != bit {
                            errs[k as usize - 1] += 1;
                        }
                    }
                }
                Ok(errs)
            })
            .try_reduce(
                || vec![0u64; m as usize],
                |mut a, b| {
                    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                    Ok(a)
                },
            )?;
        let n = self.len();
        Ok(SliceBerEstimate {
            e: counts.iter().map(|&c| (c as f64 / n as f64).min(0.5)).collect(),
            sample_count: n,
        })
    }
}

/// Per-slice error rates of `protocol` on `calibration` with grid `grid`.
pub fn estimate_slice_ber(
    calibration: &CorrelatedBlock,
    protocol: Protocol,
    grid: &SliceGrid,
    d: usize,
) -> Result<SliceBerEstimate> {
    CalibrationSet::prepare(calibration, protocol, d)?.slice_errors(grid)
}
