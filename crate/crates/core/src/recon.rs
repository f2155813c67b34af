//! Reverse reconciliation sessions for RSEC and the SEC baseline.
//!
//! Bob quantizes his (rotated, for RSEC) samples into `m` slices. Slices
//! `1..l-1` are sent in the clear. Every other slice is treated as a polar
//! codeword `Q_i = U_i G`: Bob sends the frozen part of `U_i` and a CRC of its
//! information part, Alice SC-decodes her estimate of `Q_i` and re-encodes.
//! A CRC failure on any slice discards the whole block.

use std::path::PathBuf;

use rayon::prelude::*;
use serde::Serialize;

use crate::binary_entropy;
use crate::channel::{
    conditioning_mask, decode_order, generate_block, CalibrationSet, ChannelParams, CorrelatedBlock, Protocol,
    SliceBerEstimate, DEFAULT_CALIBRATION_SAMPLES, MIN_CONSTRUCTION_BER,
};
use crate::error::{Error, Result};
use crate::estimator::{hard_estimate, llr_last_slice, IntervalLikelihoods, KnownSlices, SliceLlr};
use crate::polar::{
    construct_for_target, crc32_bits, load_or_construct, polar_transform, CodeKey, CrcCheck, PolarCode, ScDecoder,
    CRC_WIDTH,
};
use crate::quantizer::{optimize_grid, protocol_entropy, GridSearch, SliceGrid};
use crate::rng::{derive_seed, stream};
use crate::rotation::rotate_block;

/// Soft input handed to the SC decoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LlrMode {
    /// `+-ln((1 - e) / e)` from the hard estimate and the calibrated `e`.
    VirtualBsc,
    /// The estimator's LLRs directly.
    Soft,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionConfig {
    pub protocol: Protocol,
    pub snr: f64,
    pub m: u32,
    /// Number of slices sent in the clear, `l - 1`.
    pub disclosed: u32,
    pub d: usize,
    pub n: usize,
    pub blocks: usize,
    /// Frame error budget shared by the coded slices.
    pub target_fer: f64,
    pub master_seed: u64,
    pub calibration_samples: usize,
    /// Fixed grid step; `None` searches for the best one.
    pub grid_step: Option<f64>,
    pub llr_mode: LlrMode,
    pub code_cache: Option<PathBuf>,
    pub keep_key: bool,
}

impl SessionConfig {
    pub fn new(protocol: Protocol, snr: f64) -> Self {
        Self {
            protocol,
            snr,
            m: 5,
            disclosed: 2,
            d: 8,
            n: 1 << 16,
            blocks: 100,
            target_fer: 0.1,
            master_seed: 0,
            calibration_samples: DEFAULT_CALIBRATION_SAMPLES,
            grid_step: None,
            llr_mode: LlrMode::VirtualBsc,
            code_cache: None,
            keep_key: false,
        }
    }

    /// Index of the first corrected slice.
    pub fn l(&self) -> u32 {
        self.disclosed + 1
    }

    pub fn validate(&self) -> Result<()> {
        ChannelParams::from_snr(self.snr)?;
        if self.m == 0 || self.m > 8 {
            return Err(Error::invalid(format!("m must lie in [1, 8], got {}", self.m)));
        }
        if self.disclosed >= self.m {
            return Err(Error::invalid(format!(
                "cannot disclose {} of {} slices",
                self.disclosed, self.m
            )));
        }
        if self.d == 0 || !self.d.is_power_of_two() {
            return Err(Error::invalid(format!(
                "dimension must be a power of two, got {}",
                self.d
            )));
        }
        if !self.n.is_power_of_two() || self.n < self.d {
            return Err(Error::invalid(format!(
                "block length {} must be a power of two no smaller than d = {}",
                self.n, self.d
            )));
        }
        if !(self.target_fer > 0.0 && self.target_fer <= 1.0) {
            return Err(Error::invalid(format!(
                "target FER must lie in (0, 1], got {}",
                self.target_fer
            )));
        }
        if self.calibration_samples == 0 || !self.calibration_samples.is_multiple_of(self.d) {
            return Err(Error::invalid("calibration size must be a positive multiple of d"));
        }
        Ok(())
    }

    pub fn params(&self) -> Result<ChannelParams> {
        ChannelParams::from_snr(self.snr)
    }

    /// Seed of reconciliation block `index`.
    pub fn block_seed(&self, index: usize) -> u64 {
        derive_seed(self.master_seed, stream::BLOCK, index as u64)
    }

    pub fn generate_block(&self, index: usize) -> Result<CorrelatedBlock> {
        generate_block(self.n, &self.params()?, self.block_seed(index))
    }
}

/// `beta_s = (H - sum H2(e_i)) / I`, with `h_slices = H(S(Y'))`.
pub fn quantization_efficiency(e: &SliceBerEstimate, h_slices: f64, params: &ChannelParams) -> Result<f64> {
    efficiency_with_disclosure(e, h_slices, params, 0).map(|(b, _)| b)
}

/// Quantization efficiency with slices `1..=disclosed` counted as fully
/// leaked, plus its Monte-Carlo standard error.
pub fn efficiency_with_disclosure(
    e: &SliceBerEstimate,
    h_slices: f64,
    params: &ChannelParams,
    disclosed: u32,
) -> Result<(f64, f64)> {
    if disclosed as usize > e.e.len() {
        return Err(Error::invalid("more disclosed slices than slices"));
    }
    if e.e.iter().any(|v| !(0.0..=0.5).contains(v)) {
        return Err(Error::invalid("slice error rates must lie in [0, 0.5]"));
    }
    let h = h_slices;
    let info = params.mutual_information();
    let mut loss = 0.0;
    let mut var = 0.0;
    for (i, &ei) in e.e.iter().enumerate() {
        if (i as u32) < disclosed {
            loss += 1.0;
            continue;
        }
        loss += binary_entropy(ei);
        if ei > 0.0 && ei < 0.5 {
            let slope = ((1.0 - ei) / ei).log2();
            var += slope * slope * ei * (1.0 - ei) / e.sample_count as f64;
        }
    }
    Ok(((h - loss) / info, var.sqrt() / info))
}

/// `beta = (H - m + sum R_i) / I`.
pub fn reconciliation_efficiency(h_slices: f64, m: u32, rates: &[f64], snr: f64) -> Result<f64> {
    if rates.len() != m as usize {
        return Err(Error::LengthMismatch {
            expected: m as usize,
            got: rates.len(),
        });
    }
    if rates.iter().any(|r| !(0.0..=1.0).contains(r)) {
        return Err(Error::invalid("slice rates must lie in [0, 1]"));
    }
    let info = crate::channel::mutual_information(snr)?;
    Ok((h_slices - m as f64 + rates.iter().sum::<f64>()) / info)
}

/// Grid and per-slice error rates measured on calibration data.
#[derive(Debug, Clone)]
pub struct Calibration {
    pub protocol: Protocol,
    pub snr: f64,
    pub d: usize,
    pub disclosed: u32,
    pub grid: SliceGrid,
    pub ber: SliceBerEstimate,
    pub beta_s: f64,
    pub beta_s_se: f64,
}

/// Calibrates `cfg`'s protocol on a dedicated block and picks the grid.
pub fn calibrate(cfg: &SessionConfig) -> Result<Calibration> {
    cfg.validate()?;
    let params = cfg.params()?;
    let seed = derive_seed(cfg.master_seed, stream::CALIBRATION, 0);
    let block = generate_block(cfg.calibration_samples, &params, seed)?;
    let set = CalibrationSet::prepare(&block, cfg.protocol, cfg.d)?;
    let grid = match cfg.grid_step {
        Some(step) => SliceGrid::new(cfg.m, step)?,
        None => {
            let search = GridSearch {
                disclosed: cfg.disclosed,
                ..GridSearch::default()
            };
            optimize_grid(cfg.m, &params, cfg.protocol, &set, &search)?.grid
        }
    };
    let ber = set.slice_errors(&grid)?;
    let entropy = protocol_entropy(cfg.protocol, &grid, params.total_variance(), cfg.d)?;
    let (beta_s, beta_s_se) = efficiency_with_disclosure(&ber, entropy, &params, cfg.disclosed)?;
    Ok(Calibration {
        protocol: cfg.protocol,
        snr: cfg.snr,
        d: cfg.d,
        disclosed: cfg.disclosed,
        grid,
        ber,
        beta_s,
        beta_s_se,
    })
}

/// A configured session: grid, calibration and one code per coded slice.
#[derive(Debug, Clone)]
pub struct Session {
    pub cfg: SessionConfig,
    pub params: ChannelParams,
    pub calibration: Calibration,
    /// Indexed by slice - 1; `None` for disclosed slices.
    pub codes: Vec<Option<PolarCode>>,
    pub order: Vec<u32>,
    pub entropy: f64,
}

impl Session {
    pub fn new(cfg: SessionConfig, calibration: Calibration) -> Result<Self> {
        cfg.validate()?;
        if calibration.protocol != cfg.protocol
            || calibration.snr != cfg.snr
            || calibration.grid.m() != cfg.m
            || calibration.d != cfg.d
            || calibration.disclosed != cfg.disclosed
        {
            return Err(Error::Config("calibration was made for a different session".into()));
        }
        let params = cfg.params()?;
        let order = decode_order(cfg.protocol, cfg.m, cfg.disclosed)?;
        let per_slice_fer = cfg.target_fer / order.len() as f64;
        let mut codes = vec![None; cfg.m as usize];
        for &k in &order {
            let e = calibration.ber.e[k as usize - 1].clamp(MIN_CONSTRUCTION_BER, 0.5);
            let key = CodeKey {
                n: cfg.n,
                e,
                target_fer: per_slice_fer,
                crc_width: CRC_WIDTH,
            };
            let code = match &cfg.code_cache {
                Some(dir) => load_or_construct(dir, &key)?.0,
                None => construct_for_target(&key)?,
            };
            codes[k as usize - 1] = Some(code);
        }
        let entropy = protocol_entropy(cfg.protocol, &calibration.grid, params.total_variance(), cfg.d)?;
        Ok(Self {
            cfg,
            params,
            calibration,
            codes,
            order,
            entropy,
        })
    }

    pub fn grid(&self) -> &SliceGrid {
        &self.calibration.grid
    }

    /// Effective rate `R_i` of every slice; disclosed slices have rate 0.
    pub fn rates(&self) -> Vec<f64> {
        self.codes
            .iter()
            .map(|c| c.as_ref().map_or(0.0, |c| c.effective_rate()))
            .collect()
    }

    /// Bits Bob reveals per block: disclosed slices, frozen bits and CRCs.
    pub fn leaked_bits_per_block(&self) -> u64 {
        self.codes
            .iter()
            .map(|c| match c {
                None => self.cfg.n as u64,
                Some(c) => (c.frozen().len() + c.crc_width()) as u64,
            })
            .sum()
    }

    /// Efficiency from the slice rates, `(H - m + sum R_i) / I`.
    pub fn beta(&self) -> Result<f64> {
        reconciliation_efficiency(self.entropy, self.cfg.m, &self.rates(), self.cfg.snr)
    }

    /// The same efficiency from the leakage ledger.
    pub fn beta_from_ledger(&self) -> f64 {
        let n = self.cfg.n as f64;
        (n * self.entropy - self.leaked_bits_per_block() as f64) / (n * self.params.mutual_information())
    }
}

/// Calibrates and builds the codes for `cfg`.
pub fn prepare_session(cfg: &SessionConfig) -> Result<Session> {
    let calibration = calibrate(cfg)?;
    Session::new(cfg.clone(), calibration)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SliceTranscript {
    pub slice: u32,
    pub frozen_bits: Vec<u8>,
    pub crc: Option<u32>,
    pub passed: bool,
}

/// What Bob sent for one block.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BlockTranscript {
    pub block_seed: u64,
    pub disclosed: Vec<Vec<u8>>,
    pub slices: Vec<SliceTranscript>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SliceCounters {
    pub attempts: u64,
    pub failures: u64,
    /// Hard-estimate errors before decoding.
    pub raw_errors: u64,
    pub raw_bits: u64,
    /// Errors left after decoding on blocks that passed.
    pub residual_errors: u64,
    pub residual_bits: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockOutcome {
    pub passed: bool,
    pub slices: Vec<SliceCounters>,
    /// Alice's corrected slice words, present when the block passed.
    pub key: Option<Vec<u8>>,
    pub transcript: Option<BlockTranscript>,
}

fn slice_bits(words: &[u8], k: u32) -> Vec<u8> {
    words.iter().map(|&w| (w >> (k - 1)) & 1).collect()
}

/// Runs the protocol on one block.
pub fn reconcile_block(session: &Session, block: &CorrelatedBlock, with_transcript: bool) -> Result<BlockOutcome> {
    let cfg = &session.cfg;
    if block.len() != cfg.n {
        return Err(Error::LengthMismatch {
            expected: cfg.n,
            got: block.len(),
        });
    }
    let grid = session.grid();
    let m = cfg.m;
    let mut x = block.x.clone();
    let mut y = block.y.clone();
    let norms = match cfg.protocol {
        Protocol::Rsec => rotate_block(&mut x, &mut y, cfg.d, block.seed)?,
        Protocol::Sec => Vec::new(),
    };
    // Bob's slice words; m <= 8 so one byte per sample.
    let bob: Vec<u8> = y.iter().map(|&v| grid.interval_index(v) as u8).collect();
    let mut alice = vec![0u8; cfg.n];
    let disclosed_mask = (1u8 << cfg.disclosed).wrapping_sub(1);
    for (a, &b) in alice.iter_mut().zip(&bob) {
        *a = b & disclosed_mask;
    }

    let mut counters = vec![SliceCounters::default(); m as usize];
    let mut transcript = with_transcript.then(|| BlockTranscript {
        block_seed: block.seed,
        disclosed: (1..=cfg.disclosed).map(|k| slice_bits(&bob, k)).collect(),
        slices: Vec::new(),
        passed: false,
    });
    let sigma = session.params.noise_variance().sqrt();
    let snr = session.params.snr();
    let mut lik = IntervalLikelihoods::new(0.0, grid, sigma);
    let mut decoder = ScDecoder::new(cfg.n);
    let mut llr = vec![0.0; cfg.n];
    let mut passed = true;

    for &k in &session.order {
        let code = session.codes[k as usize - 1].as_ref().expect("coded slice has a code");
        let q = slice_bits(&bob, k);
        let c = &mut counters[k as usize - 1];
        c.attempts += 1;
        if code.info().is_empty() {
            // Rate zero: the whole slice is revealed.
            for (a, &b) in alice.iter_mut().zip(&q) {
                *a |= b << (k - 1);
            }
            if let Some(t) = transcript.as_mut() {
                t.slices.push(SliceTranscript {
                    slice: k,
                    frozen_bits: polar_transform(&q)?,
                    crc: None,
                    passed: true,
                });
            }
            continue;
        }

        // Alice's soft estimate of slice k.
        let mask = conditioning_mask(cfg.protocol, m, k);
        let e = code.bsc_error().clamp(MIN_CONSTRUCTION_BER, 0.5);
        let bsc = ((1.0 - e) / e).ln();
        for i in 0..cfg.n {
            let soft: SliceLlr = if cfg.protocol == Protocol::Rsec && k == m {
                llr_last_slice(x[i], norms[i / cfg.d], snr)?
            } else {
                lik.refill(x[i]);
                lik.llr(k, KnownSlices::from_word(alice[i] as u32, mask))
            };
            let bit = hard_estimate(soft);
            if bit != q[i] {
                c.raw_errors += 1;
            }
            llr[i] = match cfg.llr_mode {
                LlrMode::VirtualBsc => {
                    if bit == 0 {
                        bsc
                    } else {
                        -bsc
                    }
                }
                LlrMode::Soft => soft.value,
            };
        }
        c.raw_bits += cfg.n as u64;

        // Bob's message: frozen part of U = Q G and a CRC of the rest.
        let u = polar_transform(&q)?;
        let frozen_bits: Vec<u8> = code.frozen().iter().map(|&i| u[i]).collect();
        let info_bits: Vec<u8> = code.info().iter().map(|&i| u[i]).collect();
        let crc = crc32_bits(&info_bits);

        let u_hat = decoder.decode(&llr, code, &frozen_bits)?.to_vec();
        let result = crate::polar::decode_finish(u_hat, code, CrcCheck::SideInfo(crc))?;
        let q_hat = polar_transform(&result.u_hat)?;
        if let Some(t) = transcript.as_mut() {
            t.slices.push(SliceTranscript {
                slice: k,
                frozen_bits,
                crc: Some(crc),
                passed: result.crc_ok,
            });
        }
        if !result.crc_ok {
            c.failures += 1;
            passed = false;
            break;
        }
        c.residual_errors += q_hat.iter().zip(&q).filter(|(a, b)| a != b).count() as u64;
        c.residual_bits += cfg.n as u64;
        for (a, &b) in alice.iter_mut().zip(&q_hat) {
            *a |= b << (k - 1);
        }
    }
    if let Some(t) = transcript.as_mut() {
        t.passed = passed;
    }
    let key = (passed && cfg.keep_key).then_some(alice);
    Ok(BlockOutcome {
        passed,
        slices: counters,
        key,
        transcript,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SliceStats {
    pub slice: u32,
    pub disclosed: bool,
    pub calibrated_error: f64,
    pub info_bits: usize,
    pub rate_pre_crc: f64,
    pub rate: f64,
    pub attempts: u64,
    pub failures: u64,
    pub fer: f64,
    pub raw_ber: f64,
    pub residual_ber: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconOutcome {
    pub protocol: Protocol,
    pub snr: f64,
    pub m: u32,
    pub disclosed: u32,
    pub d: usize,
    pub n: usize,
    pub grid: SliceGrid,
    pub slices: Vec<SliceStats>,
    pub blocks_attempted: usize,
    pub blocks_passed: usize,
    pub fer: f64,
    /// Bits revealed per block.
    pub leaked_bits_per_block: u64,
    /// Bits revealed over all attempted blocks.
    pub disclosed_bits: u64,
    pub residual_errors: u64,
    pub entropy: f64,
    pub mutual_information: f64,
    pub beta: f64,
    pub beta_ledger: f64,
    pub beta_s: f64,
    pub beta_s_se: f64,
    pub corrected_key: Vec<u8>,
    pub transcripts: Vec<BlockTranscript>,
}

impl ReconOutcome {
    /// Secret bits per channel use before privacy amplification.
    pub fn bits_per_pulse(&self) -> f64 {
        (1.0 - self.fer) * self.beta * self.mutual_information
    }
}

fn aggregate(session: &Session, outcomes: Vec<BlockOutcome>) -> Result<ReconOutcome> {
    let cfg = &session.cfg;
    let m = cfg.m as usize;
    let mut totals = vec![SliceCounters::default(); m];
    let mut passed = 0;
    let mut key = Vec::new();
    let mut transcripts = Vec::new();
    for o in &outcomes {
        for (t, c) in totals.iter_mut().zip(&o.slices) {
            t.attempts += c.attempts;
            t.failures += c.failures;
            t.raw_errors += c.raw_errors;
            t.raw_bits += c.raw_bits;
            t.residual_errors += c.residual_errors;
            t.residual_bits += c.residual_bits;
        }
        if o.passed {
            passed += 1;
            if let Some(k) = &o.key {
                key.extend_from_slice(k);
            }
        }
    }
    for o in outcomes {
        if let Some(t) = o.transcript {
            transcripts.push(t);
        }
    }
    let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let slices = (0..m)
        .map(|i| {
            let t = &totals[i];
            let code = session.codes[i].as_ref();
            SliceStats {
                slice: i as u32 + 1,
                disclosed: code.is_none(),
                calibrated_error: session.calibration.ber.e[i],
                info_bits: code.map_or(0, |c| c.info().len()),
                rate_pre_crc: code.map_or(0.0, |c| c.rate_pre_crc()),
                rate: code.map_or(0.0, |c| c.effective_rate()),
                attempts: t.attempts,
                failures: t.failures,
                fer: ratio(t.failures, t.attempts),
                raw_ber: ratio(t.raw_errors, t.raw_bits),
                residual_ber: ratio(t.residual_errors, t.residual_bits),
            }
        })
        .collect();
    let blocks = cfg.blocks;
    let leaked = session.leaked_bits_per_block();
    Ok(ReconOutcome {
        protocol: cfg.protocol,
        snr: cfg.snr,
        m: cfg.m,
        disclosed: cfg.disclosed,
        d: cfg.d,
        n: cfg.n,
        grid: *session.grid(),
        slices,
        blocks_attempted: blocks,
        blocks_passed: passed,
        fer: ratio((blocks - passed) as u64, blocks as u64),
        leaked_bits_per_block: leaked,
        disclosed_bits: leaked * blocks as u64,
        residual_errors: totals.iter().map(|t| t.residual_errors).sum(),
        entropy: session.entropy,
        mutual_information: session.params.mutual_information(),
        beta: session.beta()?,
        beta_ledger: session.beta_from_ledger(),
        beta_s: session.calibration.beta_s,
        beta_s_se: session.calibration.beta_s_se,
        corrected_key: key,
        transcripts,
    })
}

fn reconcile_stream<I>(session: &Session, protocol: Protocol, blocks: I, with_transcript: bool) -> Result<ReconOutcome>
where
    I: IntoIterator<Item = CorrelatedBlock>,
{
    if session.cfg.protocol != protocol {
        return Err(Error::Config(format!(
            "session is configured for {}, not {protocol}",
            session.cfg.protocol
        )));
    }
    let mut outcomes = Vec::with_capacity(session.cfg.blocks);
    let mut it = blocks.into_iter();
    for i in 0..session.cfg.blocks {
        let block = it.next().ok_or(Error::StreamExhausted(i))?;
        outcomes.push(reconcile_block(session, &block, with_transcript)?);
    }
    aggregate(session, outcomes)
}

/// RSEC over a caller-supplied block stream.
pub fn rsec_reconcile<I>(session: &Session, blocks: I) -> Result<ReconOutcome>
where
    I: IntoIterator<Item = CorrelatedBlock>,
{
    reconcile_stream(session, Protocol::Rsec, blocks, false)
}

/// SEC over a caller-supplied block stream.
pub fn sec_reconcile<I>(session: &Session, blocks: I) -> Result<ReconOutcome>
where
    I: IntoIterator<Item = CorrelatedBlock>,
{
    reconcile_stream(session, Protocol::Sec, blocks, false)
}

/// Generates and reconciles `cfg.blocks` blocks in parallel on the current
/// rayon pool. Block `i` always uses the same seed, so the outcome does not
/// depend on the number of threads.
pub fn run_session(session: &Session, with_transcript: bool) -> Result<ReconOutcome> {
    let outcomes = (0..session.cfg.blocks)
        .into_par_iter()
        .map(|i| {
            let block = session.cfg.generate_block(i)?;
            reconcile_block(session, &block, with_transcript)
        })
        .collect::<Result<Vec<_>>>()?;
    aggregate(session, outcomes)
}
