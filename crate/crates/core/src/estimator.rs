//! Alice's soft information about Bob's slices.
//!
//! LLRs use the convention `ln(P(bit = 0) / P(bit = 1))` in natural-log units.
//! The sign slice after rotation has a closed form that needs only the norm of
//! Alice's vector. Every other slice is estimated from the Gaussian mass of
//! the candidate intervals that agree with the slices already known.

use crate::channel::ChannelParams;
use crate::error::{Error, Result};
use crate::quantizer::SliceGrid;

/// Saturation magnitude for all LLRs.
pub const LLR_MAX: f64 = 40.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SliceLlr {
    pub value: f64,
    pub clamped: bool,
}

impl SliceLlr {
    pub fn new(raw: f64) -> Self {
        if raw.is_nan() {
            return Self {
                value: 0.0,
                clamped: true,
            };
        }
        if raw.abs() > LLR_MAX {
            Self {
                value: LLR_MAX.copysign(raw),
                clamped: true,
            }
        } else {
            Self {
                value: raw,
                clamped: false,
            }
        }
    }

    pub fn saturated(bit: u8) -> Self {
        Self {
            value: if bit == 0 { LLR_MAX } else { -LLR_MAX },
            clamped: true,
        }
    }

    /// `P(bit = 0)` implied by the LLR.
    pub fn prob_zero(&self) -> f64 {
        1.0 / (1.0 + (-self.value).exp())
    }
}

/// Slice values known to Alice when estimating the next slice.
///
/// Bit `i - 1` of `mask` says slice `i` is known; its value sits in the same
/// bit of `bits`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct KnownSlices {
    pub mask: u32,
    pub bits: u32,
}

impl KnownSlices {
    pub fn none() -> Self {
        Self::default()
    }

    /// Slices selected by `mask`, with values copied from interval label `word`.
    pub fn from_word(word: u32, mask: u32) -> Self {
        Self {
            mask,
            bits: word & mask,
        }
    }

    pub fn with(mut self, slice: u32, bit: u8) -> Self {
        let b = 1u32 << (slice - 1);
        self.mask |= b;
        if bit != 0 {
            self.bits |= b;
        } else {
            self.bits &= !b;
        }
        self
    }

    pub fn contains(&self, slice: u32) -> bool {
        self.mask & (1 << (slice - 1)) != 0
    }

    #[inline]
    pub fn matches(&self, interval: usize) -> bool {
        (interval as u32 & self.mask) == self.bits
    }
}

/// LLR of the sign slice of a rotated sample.
///
/// `value = snr * norm_x * ln((1 - v) / (1 + v))` with `v = x_rot / norm_x`.
pub fn llr_last_slice(x_rot: f64, norm_x: f64, snr: f64) -> Result<SliceLlr> {
    if !(norm_x > 0.0 && norm_x.is_finite()) {
        return Err(Error::invalid(format!("vector norm must be positive, got {norm_x}")));
    }
    let v = (x_rot / norm_x).clamp(-1.0, 1.0);
    if v == 1.0 {
        return Ok(SliceLlr::saturated(1));
    }
    if v == -1.0 {
        return Ok(SliceLlr::saturated(0));
    }
    // ln((1-v)/(1+v)) = -2 atanh(v), accurate near v = 0.
    Ok(SliceLlr::new(-2.0 * snr * norm_x * v.atanh()))
}

/// Hard decision: 0 iff the LLR is strictly positive.
pub fn hard_estimate(llr: SliceLlr) -> u8 {
    if llr.value > 0.0 {
        0
    } else {
        1
    }
}

/// LLR of intermediate slice `k` of a rotated sample, with slices `1..k-1`
/// and `m` known.
pub fn llr_intermediate(
    x_rot: f64,
    k: u32,
    known: KnownSlices,
    grid: &SliceGrid,
    params: &ChannelParams,
) -> Result<SliceLlr> {
    let m = grid.m();
    if k == 0 || k >= m {
        return Err(Error::invalid(format!("intermediate slice index {k} outside [1, {m})")));
    }
    let needed = low_mask(k) | (1 << (m - 1));
    if known.mask & needed != needed {
        return Err(Error::invalid(format!(
            "slice {k} needs slices 1..{} and {m} to be known",
            k - 1
        )));
    }
    let lik = IntervalLikelihoods::new(x_rot, grid, params.noise_variance().sqrt());
    Ok(lik.llr(k, KnownSlices::from_word(known.bits, needed)))
}

/// LLR of slice `k` of an unrotated sample, conditioned on slices `1..k-1`.
pub fn llr_sec(x: f64, k: u32, known: KnownSlices, grid: &SliceGrid, params: &ChannelParams) -> Result<SliceLlr> {
    let m = grid.m();
    if k == 0 || k > m {
        return Err(Error::invalid(format!("slice index {k} outside [1, {m}]")));
    }
    let needed = low_mask(k);
    if known.mask & needed != needed {
        return Err(Error::invalid(format!(
            "slice {k} needs slices 1..{} to be known",
            k - 1
        )));
    }
    let lik = IntervalLikelihoods::new(x, grid, params.noise_variance().sqrt());
    Ok(lik.llr(k, KnownSlices::from_word(known.bits, needed)))
}

fn low_mask(k: u32) -> u32 {
    (1u32 << (k - 1)) - 1
}

/// Gaussian mass of every grid interval around one of Alice's samples.
///
/// Built once per sample and reused for every slice of that sample. Masses
/// are kept in the linear domain; when a candidate sum underflows the LLR is
/// recomputed from log-domain masses.
#[derive(Debug, Clone)]
pub struct IntervalLikelihoods {
    grid: SliceGrid,
    sigma: f64,
    x: f64,
    masses: Vec<f64>,
}

/// Sums below this are recomputed in the log domain.
const LINEAR_FLOOR: f64 = 1e-280;

impl IntervalLikelihoods {
    pub fn new(x: f64, grid: &SliceGrid, sigma: f64) -> Self {
        let mut lik = Self {
            grid: *grid,
            sigma,
            x,
            masses: vec![0.0; grid.intervals()],
        };
        lik.refill(x);
        lik
    }

    pub fn refill(&mut self, x: f64) {
        self.x = x;
        let k = self.grid.intervals();
        let scale = std::f64::consts::SQRT_2 * self.sigma;
        // Upper-tail mass beyond |z| for every interior boundary.
        let mut prev_z = f64::NEG_INFINITY;
        let mut prev_tail = 0.5;
        for a in 0..k {
            let (z, tail) = if a + 1 == k {
                (f64::INFINITY, 0.0)
            } else {
                let z = (self.grid.boundary(a + 1) - x) / scale;
                (z, 0.5 * libm::erfc(z.abs()))
            };
            self.masses[a] = if prev_z >= 0.0 {
                prev_tail - tail
            } else if z <= 0.0 {
                tail - if prev_z == f64::NEG_INFINITY { 0.0 } else { prev_tail }
            } else {
                let left = if prev_z == f64::NEG_INFINITY { 0.0 } else { prev_tail };
                1.0 - left - tail
            }
            .max(0.0);
            prev_z = z;
            prev_tail = tail;
        }
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    /// LLR of slice `k` over the intervals consistent with `known`.
    pub fn llr(&self, k: u32, known: KnownSlices) -> SliceLlr {
        let bit = 1usize << (k - 1);
        let (mut s0, mut s1) = (0.0, 0.0);
        let (mut n0, mut n1) = (0usize, 0usize);
        for (a, &p) in self.masses.iter().enumerate() {
            if !known.matches(a) {
                continue;
            }
            if a & bit == 0 {
                s0 += p;
                n0 += 1;
            } else {
                s1 += p;
                n1 += 1;
            }
        }
        if n1 == 0 {
            return SliceLlr::saturated(0);
        }
        if n0 == 0 {
            return SliceLlr::saturated(1);
        }
        if s0 > LINEAR_FLOOR && s1 > LINEAR_FLOOR {
            return SliceLlr::new((s0 / s1).ln());
        }
        let l0 = self.log_sum(|a| known.matches(a) && a & bit == 0);
        let l1 = self.log_sum(|a| known.matches(a) && a & bit != 0);
        SliceLlr::new(l0 - l1)
    }

    fn log_sum(&self, keep: impl Fn(usize) -> bool) -> f64 {
        let logs: Vec<f64> = (0..self.masses.len())
            .filter(|&a| keep(a))
            .map(|a| self.log_mass(a))
            .collect();
        log_sum_exp(&logs)
    }

    /// Log of the Gaussian mass of interval `a`, accurate far into the tails.
    pub fn log_mass(&self, a: usize) -> f64 {
        let scale = self.sigma;
        let lo = (self.grid.boundary(a) - self.x) / scale;
        let hi = (self.grid.boundary(a + 1) - self.x) / scale;
        log_gaussian_interval(lo, hi)
    }
}

/// `ln P(lo <= Z < hi)` for standard normal `Z`.
pub fn log_gaussian_interval(lo: f64, hi: f64) -> f64 {
    if lo >= 0.0 {
        let a = ln_upper_tail(lo);
        a + ln_one_minus_exp(ln_upper_tail(hi) - a)
    } else if hi <= 0.0 {
        let a = ln_upper_tail(-hi);
        a + ln_one_minus_exp(ln_upper_tail(-lo) - a)
    } else {
        let q = ln_upper_tail(hi).exp() + ln_upper_tail(-lo).exp();
        (-q).ln_1p()
    }
}

/// `ln Q(z)` for `z >= 0`, with `Q` the standard normal upper tail.
pub fn ln_upper_tail(z: f64) -> f64 {
    if z == f64::INFINITY {
        return f64::NEG_INFINITY;
    }
    if z < 30.0 {
        (0.5 * libm::erfc(z / std::f64::consts::SQRT_2)).ln()
    } else {
        let z2 = z * z;
        let series = 1.0 - 1.0 / z2 + 3.0 / (z2 * z2) - 15.0 / (z2 * z2 * z2);
        -0.5 * z2 - (z * (2.0 * std::f64::consts::PI).sqrt()).ln() + series.ln()
    }
}

/// `ln(1 - e^d)` for `d <= 0`.
fn ln_one_minus_exp(d: f64) -> f64 {
    if d == f64::NEG_INFINITY {
        0.0
    } else if d > -std::f64::consts::LN_2 {
        (-d.exp_m1()).ln()
    } else {
        (-d.exp()).ln_1p()
    }
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|&x| (x - max).exp()).sum::<f64>().ln()
}
