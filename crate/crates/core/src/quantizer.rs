//! Equidistant slice quantization.
//!
//! The real line is cut by `2^m - 1` equidistant points symmetric about zero.
//! A sample falling in interval `a - 1` (closed on the left) is labelled with
//! the binary representation of `a - 1`; slice 1 takes the least significant
//! bit and slice `m` the most significant one, which is also the sign bit.

use serde::{Deserialize, Serialize};

use crate::channel::{CalibrationSet, ChannelParams, Protocol};
use crate::error::{Error, Result};
use crate::recon::efficiency_with_disclosure;

/// Largest slice count accepted by [`SliceGrid::new`].
pub const MAX_SLICES: u32 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SliceGrid {
    m: u32,
    step: f64,
}

impl SliceGrid {
    pub fn new(m: u32, step: f64) -> Result<Self> {
        if m == 0 || m > MAX_SLICES {
            return Err(Error::invalid(format!(
                "slice count must lie in [1, {MAX_SLICES}], got {m}"
            )));
        }
        if !(step.is_finite() && step > 0.0) {
            return Err(Error::invalid(format!(
                "grid step must be finite and positive, got {step}"
            )));
        }
        Ok(Self { m, step })
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    /// Number of intervals, `2^m`.
    pub fn intervals(&self) -> usize {
        1usize << self.m
    }

    /// Boundary `tau_j` for `j` in `0..=2^m`; the outer two are infinite.
    pub fn boundary(&self, j: usize) -> f64 {
        let k = self.intervals();
        match j {
            0 => f64::NEG_INFINITY,
            j if j >= k => f64::INFINITY,
            j => (j as f64 - (k / 2) as f64) * self.step,
        }
    }

    /// The `2^m - 1` finite boundaries in increasing order.
    pub fn interior_points(&self) -> Vec<f64> {
        (1..self.intervals()).map(|j| self.boundary(j)).collect()
    }

    /// Interval index `a - 1` with `tau_{a-1} <= x < tau_a`. `x` must not be NaN.
    pub fn interval_index(&self, x: f64) -> usize {
        let k = self.intervals();
        let raw = (x / self.step).floor() + (k / 2) as f64;
        let mut idx = raw.clamp(0.0, (k - 1) as f64) as usize;
        // Guard against rounding in x / step right at a boundary.
        if idx + 1 < k && x >= self.boundary(idx + 1) {
            idx += 1;
        } else if idx > 0 && x < self.boundary(idx) {
            idx -= 1;
        }
        idx
    }

    pub fn quantize(&self, x: f64) -> Result<SliceWord> {
        if x.is_nan() {
            return Err(Error::invalid("cannot quantize NaN"));
        }
        Ok(SliceWord {
            interval: self.interval_index(x) as u32,
            m: self.m,
        })
    }
}

/// Builds the symmetric equidistant grid with `m` slices and step `step`.
pub fn build_grid(m: u32, step: f64) -> Result<SliceGrid> {
    SliceGrid::new(m, step)
}

pub fn quantize(x: f64, grid: &SliceGrid) -> Result<SliceWord> {
    grid.quantize(x)
}

/// The m-bit label of one quantized sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SliceWord {
    interval: u32,
    m: u32,
}

impl SliceWord {
    /// Rebuilds a word from its packed bits (slice 1 in bit 0).
    pub fn from_bits(bits: u32, m: u32) -> Result<Self> {
        if m == 0 || m > MAX_SLICES || bits >= (1u32 << m) {
            return Err(Error::invalid(format!("bits {bits:#x} do not fit {m} slices")));
        }
        Ok(Self { interval: bits, m })
    }

    pub fn interval(&self) -> usize {
        self.interval as usize
    }

    pub fn bits(&self) -> u32 {
        self.interval
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    /// Value of slice `i` (1-based).
    pub fn slice(&self, i: u32) -> u8 {
        debug_assert!(i >= 1 && i <= self.m);
        ((self.interval >> (i - 1)) & 1) as u8
    }
}

/// Bit value of slice `i` (1-based) for interval index `interval`.
#[inline]
pub fn slice_bit(interval: usize, i: u32) -> u8 {
    ((interval >> (i - 1)) & 1) as u8
}

/// Probability mass of every interval for a zero-mean Gaussian of variance
/// `total_variance`.
pub fn interval_probabilities(grid: &SliceGrid, total_variance: f64) -> Result<Vec<f64>> {
    if !(total_variance.is_finite() && total_variance > 0.0) {
        return Err(Error::invalid(format!(
            "total variance must be positive, got {total_variance}"
        )));
    }
    let scale = (2.0 * total_variance).sqrt();
    let probs = (0..grid.intervals())
        .map(|a| {
            let lo = grid.boundary(a) / scale;
            let hi = grid.boundary(a + 1) / scale;
            // Subtract tails on the same side of zero to keep precision.
            if lo >= 0.0 {
                0.5 * (libm::erfc(lo) - libm::erfc(hi))
            } else if hi <= 0.0 {
                0.5 * (libm::erfc(-hi) - libm::erfc(-lo))
            } else {
                0.5 * (libm::erf(hi) - libm::erf(lo))
            }
        })
        .collect();
    Ok(probs)
}

fn entropy_bits(probs: &[f64]) -> f64 {
    probs.iter().filter(|&&p| p > 0.0).map(|&p| -p * p.log2()).sum()
}

/// Entropy in bits of the interval label of a Gaussian sample.
pub fn slice_entropy(grid: &SliceGrid, total_variance: f64) -> Result<f64> {
    Ok(entropy_bits(&interval_probabilities(grid, total_variance)?))
}

/// `P(|Y'| >= t)` for one coordinate of a rotated `d`-vector.
///
/// After rotation onto `U_B` every coordinate has magnitude `||Y|| / sqrt(d)`,
/// and `||Y||^2 / v` is chi-square with `d` degrees of freedom, so the tail is
/// the regularized upper gamma function `Q(d/2, d t^2 / 2v)`.
fn rotated_magnitude_tail(t: f64, total_variance: f64, d: usize) -> f64 {
    if t == f64::INFINITY {
        return 0.0;
    }
    let x = d as f64 * t * t / (2.0 * total_variance);
    if d == 1 {
        return libm::erfc(x.sqrt());
    }
    if x == 0.0 {
        return 1.0;
    }
    // Q(k, x) = e^-x sum_{j<k} x^j / j!, summed in the log domain.
    let ln_x = x.ln();
    let mut ln_term = -x;
    let mut terms = Vec::with_capacity(d / 2);
    for j in 0..d / 2 {
        if j > 0 {
            ln_term += ln_x - (j as f64).ln();
        }
        terms.push(ln_term);
    }
    crate::estimator::log_sum_exp(&terms).exp().min(1.0)
}

/// Interval masses of one coordinate of `d`-dimensional Gaussian data rotated
/// onto a point `U_B`: the magnitude follows the scaled chi distribution and
/// the sign is uniform. For `d = 1` this is [`interval_probabilities`].
pub fn rotated_interval_probabilities(grid: &SliceGrid, total_variance: f64, d: usize) -> Result<Vec<f64>> {
    if !(total_variance.is_finite() && total_variance > 0.0) {
        return Err(Error::invalid(format!(
            "total variance must be positive, got {total_variance}"
        )));
    }
    if d == 0 || !d.is_power_of_two() {
        return Err(Error::invalid(format!("dimension must be a power of two, got {d}")));
    }
    let tail = |t: f64| rotated_magnitude_tail(t, total_variance, d);
    Ok((0..grid.intervals())
        .map(|a| {
            let lo = grid.boundary(a);
            let hi = grid.boundary(a + 1);
            if lo >= 0.0 {
                0.5 * (tail(lo) - tail(hi))
            } else {
                0.5 * (tail(-hi) - tail(-lo))
            }
            .max(0.0)
        })
        .collect())
}

pub fn rotated_slice_entropy(grid: &SliceGrid, total_variance: f64, d: usize) -> Result<f64> {
    Ok(entropy_bits(&rotated_interval_probabilities(grid, total_variance, d)?))
}

/// `H(S(Y'))` for the data a protocol actually quantizes: Gaussian for SEC,
/// rotated for RSEC.
pub fn protocol_entropy(protocol: Protocol, grid: &SliceGrid, total_variance: f64, d: usize) -> Result<f64> {
    match protocol {
        Protocol::Sec => slice_entropy(grid, total_variance),
        Protocol::Rsec => rotated_slice_entropy(grid, total_variance, d),
    }
}

/// Search settings for [`optimize_grid`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSearch {
    /// Lower end of the step range, in units of `sigma_Y`.
    pub min_step: f64,
    /// Upper end of the step range, in units of `sigma_Y`.
    pub max_step: f64,
    /// Golden-section tolerance, in units of `sigma_Y`.
    pub tolerance: f64,
    /// Log-spaced points scanned before refining.
    pub scan_points: usize,
    /// Slices sent in the clear; they count as fully leaked in the objective.
    pub disclosed: u32,
    /// Samples used by the coarse scan. Refinement always uses the full set.
    pub scan_samples: Option<usize>,
}

impl Default for GridSearch {
    fn default() -> Self {
        Self {
            min_step: 0.05,
            max_step: 2.0,
            tolerance: 1e-3,
            scan_points: 24,
            disclosed: 0,
            scan_samples: Some(1 << 18),
        }
    }
}

/// Result of a grid-step search.
#[derive(Debug, Clone, PartialEq)]
pub struct GridOptimum {
    pub grid: SliceGrid,
    pub beta_s: f64,
    pub errors: Vec<f64>,
}

/// Picks the grid step that maximizes quantization efficiency on the given
/// calibration data.
///
/// A log-spaced scan over `[min_step, max_step] * sigma_Y` locates the best
/// bracket, then golden-section search refines inside it. The objective is
/// evaluated on fixed data, so the result is deterministic.
pub fn optimize_grid(
    m: u32,
    params: &ChannelParams,
    protocol: Protocol,
    calibration: &CalibrationSet,
    search: &GridSearch,
) -> Result<GridOptimum> {
    if !(1..=8).contains(&m) {
        return Err(Error::invalid(format!(
            "grid optimization supports m in [1, 8], got {m}"
        )));
    }
    if calibration.protocol() != protocol {
        return Err(Error::invalid("calibration data was prepared for another protocol"));
    }
    if !(search.min_step > 0.0 && search.max_step > search.min_step && search.scan_points >= 3) {
        return Err(Error::invalid("grid search range is empty"));
    }
    let sigma_y = params.total_variance().sqrt();
    let coarse = match search.scan_samples {
        Some(n) if n < calibration.len() => Some(calibration.prefix(n)),
        _ => None,
    };
    let evaluate_on = |set: &CalibrationSet, step: f64| -> Result<GridOptimum> {
        let grid = SliceGrid::new(m, step)?;
        let ber = set.slice_errors(&grid)?;
        let h = protocol_entropy(protocol, &grid, params.total_variance(), set.dim())?;
        let (beta_s, _) = efficiency_with_disclosure(&ber, h, params, search.disclosed)?;
        Ok(GridOptimum {
            grid,
            beta_s,
            errors: ber.e,
        })
    };
    let evaluate = |step: f64| evaluate_on(calibration, step);

    let lo = search.min_step * sigma_y;
    let hi = search.max_step * sigma_y;
    let ratio = (hi / lo).powf(1.0 / (search.scan_points - 1) as f64);
    let steps: Vec<f64> = (0..search.scan_points)
        .map(|i| {
            if i + 1 == search.scan_points {
                hi
            } else {
                lo * ratio.powi(i as i32)
            }
        })
        .collect();
    let mut scan = Vec::with_capacity(steps.len());
    for &s in &steps {
        scan.push(evaluate_on(coarse.as_ref().unwrap_or(calibration), s)?);
    }
    let best_idx = scan
        .iter()
        .enumerate()
        .fold(0, |best, (i, o)| if o.beta_s > scan[best].beta_s { i } else { best });

    let mut a = steps[best_idx.saturating_sub(1)];
    let mut b = steps[(best_idx + 1).min(steps.len() - 1)];
    let mut best = if coarse.is_some() {
        evaluate(steps[best_idx])?
    } else {
        scan.swap_remove(best_idx)
    };
    let tol = search.tolerance * sigma_y;
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = evaluate(c)?;
    let mut fd = evaluate(d)?;
    while (b - a) > tol {
        if fc.beta_s >= fd.beta_s {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = evaluate(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = evaluate(d)?;
        }
    }
    for cand in [fc, fd] {
        if cand.beta_s > best.beta_s {
            best = cand;
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::generate_block;

    #[test]
    fn rotated_tail_matches_gamma_oracle() {
        // Regularized upper incomplete gamma, 40-digit reference values.
        let cases = [
            (8, 0.5, 0.998_248_377_443_709_2),
            (8, 1.3, 0.562_734_470_592_599),
            (8, 2.9, 4.720_351_367_793_921_5e-5),
            (2, 0.7, 0.782_704_538_241_868_2),
            (16, 1.1, 0.882_796_655_780_805_8),
            (64, 2.0, 3.617_021_095_165_559_7e-6),
        ];
        for (d, t, want) in cases {
            let got = rotated_magnitude_tail(t, 2.0, d);
            assert!(((got - want) / want).abs() < 1e-12, "d={d} t={t}: {got} vs {want}");
        }
    }

    #[test]
    fn rotated_masses_reduce_to_gaussian_for_d1() {
        let g = SliceGrid::new(5, 0.37).unwrap();
        let a = rotated_interval_probabilities(&g, 1.7, 1).unwrap();
        let b = interval_probabilities(&g, 1.7).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-14);
        }
        for d in [2, 8, 32] {
            let p = rotated_interval_probabilities(&g, 1.7, d).unwrap();
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(rotated_interval_probabilities(&g, 1.7, 3).is_err());
        }
    }

    #[test]
    fn rotated_entropy_matches_histogram() {
        let params = ChannelParams::from_snr(3.0).unwrap();
        let block = generate_block(1 << 20, &params, 11).unwrap();
        for step in [0.2, 0.5] {
            let g = SliceGrid::new(5, step).unwrap();
            for protocol in Protocol::ALL {
                let set = CalibrationSet::prepare(&block, protocol, 8).unwrap();
                let exact = protocol_entropy(protocol, &g, params.total_variance(), 8).unwrap();
                let hist = set.empirical_entropy(&g);
                assert!((exact - hist).abs() < 0.01, "{protocol} step {step}: {exact} vs {hist}");
            }
        }
    }

    /// Slice value straight from the interval inequalities: slice `i` is 0 iff
    /// `tau_{2^i n} <= x < tau_{2^i n + 2^{i-1}}` for some `n >= 0`.
    fn slice_by_inequality(grid: &SliceGrid, x: f64, i: u32) -> u8 {
        let k = grid.intervals();
        let period = 1usize << i;
        let half = 1usize << (i - 1);
        let mut n = 0;
        while period * n < k {
            let lo = grid.boundary(period * n);
            let hi = grid.boundary(period * n + half);
            if lo <= x && x < hi {
                return 0;
            }
            n += 1;
        }
        1
    }

    #[test]
    fn grid_shapes() {
        let g1 = build_grid(1, 0.7).unwrap();
        assert_eq!(g1.interior_points(), vec![0.0]);
        let g2 = build_grid(2, 1.5).unwrap();
        assert_eq!(g2.interior_points(), vec![-1.5, 0.0, 1.5]);
        let g5 = build_grid(5, 0.3).unwrap();
        let pts = g5.interior_points();
        assert_eq!(pts.len(), 31);
        assert_eq!(pts[15], 0.0);
        for (a, b) in pts.iter().zip(pts.iter().rev()) {
            assert!((a + b).abs() < 1e-12);
        }
        for w in pts.windows(2) {
            assert!((w[1] - w[0] - 0.3).abs() < 1e-12);
        }
        assert!(build_grid(3, 0.0).is_err());
        assert!(build_grid(3, -1.0).is_err());
        assert!(build_grid(0, 1.0).is_err());
    }

    #[test]
    fn quantize_examples() {
        let c = 1.0;
        let g = build_grid(2, c).unwrap();
        let w = quantize(-1.5 * c, &g).unwrap();
        assert_eq!(w.interval(), 0);
        assert_eq!((w.slice(1), w.slice(2)), (0, 0));
        let w = quantize(0.5 * c, &g).unwrap();
        assert_eq!(w.interval(), 2);
        assert_eq!((w.slice(1), w.slice(2)), (0, 1));

        // Interval 13 = 0b1101 with m = 4.
        let g4 = build_grid(4, 0.25).unwrap();
        let x = 0.5 * (g4.boundary(13) + g4.boundary(14));
        let w = quantize(x, &g4).unwrap();
        assert_eq!(w.interval(), 13);
        let by_eq: Vec<u8> = (1..=4).map(|i| slice_by_inequality(&g4, x, i)).collect();
        assert_eq!(by_eq, vec![1, 0, 1, 1]);
        assert_eq!((1..=4).map(|i| w.slice(i)).collect::<Vec<_>>(), by_eq);

        assert!(quantize(f64::NAN, &g4).is_err());
    }

    #[test]
    fn boundaries_are_closed_left() {
        let g = build_grid(3, 0.37).unwrap();
        for j in 1..g.intervals() {
            assert_eq!(g.interval_index(g.boundary(j)), j);
        }
        assert_eq!(g.interval_index(0.0), 4);
        assert_eq!(g.interval_index(-0.0), 4);
        assert_eq!(g.interval_index(f64::INFINITY), 7);
        assert_eq!(g.interval_index(f64::NEG_INFINITY), 0);
    }

    #[test]
    fn bit_assignment_is_a_bijection() {
        for m in 1..=8u32 {
            let g = build_grid(m, 0.1).unwrap();
            for a in 0..g.intervals() {
                let x = if a == 0 {
                    g.boundary(1) - 1.0
                } else {
                    g.boundary(a) + 0.05
                };
                let w = g.quantize(x).unwrap();
                assert_eq!(w.interval(), a);
                let back = SliceWord::from_bits(w.bits(), m).unwrap();
                assert_eq!(back.interval(), a);
                for i in 1..=m {
                    assert_eq!(w.slice(i), slice_by_inequality(&g, x, i), "m={m} a={a} i={i}");
                }
            }
        }
    }

    #[test]
    fn interval_probabilities_examples() {
        let g = build_grid(1, 3.0).unwrap();
        let p = interval_probabilities(&g, 2.0).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-15 && (p[1] - 0.5).abs() < 1e-15);
        for m in 1..=8 {
            let g = build_grid(m, 0.17).unwrap();
            let s: f64 = interval_probabilities(&g, 1.3).unwrap().iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
        assert!(interval_probabilities(&g, 0.0).is_err());
        assert!(interval_probabilities(&g, -1.0).is_err());
    }

    #[test]
    fn interval_probabilities_match_trapezoid_oracle() {
        let v: f64 = 2.0;
        let g = build_grid(2, v.sqrt()).unwrap();
        let p = interval_probabilities(&g, v).unwrap();
        let density = |y: f64| (-y * y / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt();
        let trapezoid = |a: f64, b: f64| {
            let n = 200_000;
            let h = (b - a) / n as f64;
            let inner: f64 = (1..n).map(|i| density(a + i as f64 * h)).sum();
            h * (inner + 0.5 * (density(a) + density(b)))
        };
        let far = 40.0 * v.sqrt();
        for (a, &pa) in p.iter().enumerate() {
            let lo = g.boundary(a).max(-far);
            let hi = g.boundary(a + 1).min(far);
            assert!((pa - trapezoid(lo, hi)).abs() < 1e-9, "interval {a}");
        }
    }

    #[test]
    fn entropy_bounds() {
        let g = build_grid(1, 1.0).unwrap();
        assert!((slice_entropy(&g, 4.0).unwrap() - 1.0).abs() < 1e-12);
        for m in 1..=6 {
            for step in [1e-3, 0.1, 1.0, 10.0] {
                let g = build_grid(m, step).unwrap();
                let h = slice_entropy(&g, 1.0).unwrap();
                assert!(h >= 0.0 && h <= m as f64 + 1e-12);
            }
        }
    }
}
