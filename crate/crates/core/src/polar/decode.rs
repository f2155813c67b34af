//! Successive-cancellation decoding in the LLR domain.
//!
//! The channel LLRs of `x = u F B` are first put through the bit-reversal
//! permutation, after which the decoder works on `w = u F` in natural order:
//! the left half of every node observes `a xor b`, the right half `b`.

use crate::error::{Error, Result};

use super::crc::{crc32_bits, crc_check, CRC_WIDTH};
use super::transform::{bit_reverse_permute, butterfly};
use super::{NodeKind, PolarCode};

const INFO: u8 = 2;

/// Check-node update `2 atanh(tanh(a/2) tanh(b/2))`.
#[inline]
pub fn f_exact(a: f64, b: f64) -> f64 {
    if a.abs() > 10.0 && b.abs() > 10.0 {
        // Both reliable: the product of tanh values rounds to one, so use
        // the min form with its two correction terms.
        let s = if (a < 0.0) != (b < 0.0) { -1.0 } else { 1.0 };
        s * a.abs().min(b.abs()) + (-(a + b).abs()).exp().ln_1p() - (-(a - b).abs()).exp().ln_1p()
    } else {
        2.0 * ((0.5 * a).tanh() * (0.5 * b).tanh()).atanh()
    }
}

/// Variable-node update `(-1)^s a + b`.
#[inline]
pub fn g(a: f64, b: f64, s: u8) -> f64 {
    if s == 0 {
        b + a
    } else {
        b - a
    }
}

#[inline]
fn decide(llr: f64) -> u8 {
    if llr >= 0.0 {
        0
    } else {
        1
    }
}

/// How the decoder validates the recovered information bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrcCheck {
    /// No check; `crc_ok` is always true.
    Skip,
    /// The last 32 information positions hold the CRC of the others.
    Embedded,
    /// The CRC of all information bits was sent separately.
    SideInfo(u32),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodeResult {
    pub u_hat: Vec<u8>,
    pub payload: Vec<u8>,
    pub crc_ok: bool,
}

/// Reusable decoder buffers for one block length.
#[derive(Debug, Clone)]
pub struct ScDecoder {
    n: usize,
    llr: Vec<f64>,
    scratch: Vec<f64>,
    pattern: Vec<u8>,
    u: Vec<u8>,
    w: Vec<u8>,
}

impl ScDecoder {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            llr: vec![0.0; n],
            scratch: vec![0.0; n.max(1)],
            pattern: vec![INFO; n],
            u: vec![0; n],
            w: vec![0; n],
        }
    }

    /// Decodes and returns the estimate of `u`.
    pub fn decode(&mut self, llr_init: &[f64], code: &PolarCode, frozen_values: &[u8]) -> Result<&[u8]> {
        self.run(llr_init, code, frozen_values, None)?;
        Ok(&self.u)
    }

    fn run(
        &mut self,
        llr_init: &[f64],
        code: &PolarCode,
        frozen_values: &[u8],
        record: Option<&mut [f64]>,
    ) -> Result<()> {
        let n = code.n();
        if self.n != n {
            *self = ScDecoder::new(n);
        }
        if llr_init.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                got: llr_init.len(),
            });
        }
        if frozen_values.len() != code.frozen().len() {
            return Err(Error::LengthMismatch {
                expected: code.frozen().len(),
                got: frozen_values.len(),
            });
        }
        if llr_init.iter().any(|v| v.is_nan()) {
            return Err(Error::invalid("NaN channel LLR"));
        }
        self.pattern.iter_mut().for_each(|p| *p = INFO);
        for (&i, &v) in code.frozen().iter().zip(frozen_values) {
            self.pattern[i] = v & 1;
        }
        self.llr.copy_from_slice(llr_init);
        bit_reverse_permute(&mut self.llr);
        let mut ctx = Ctx {
            kinds: code.node_kinds(),
            pattern: &self.pattern,
            record,
        };
        node(&mut ctx, 1, 0, &self.llr, &mut self.u, &mut self.w, &mut self.scratch);
        Ok(())
    }
}

struct Ctx<'a> {
    kinds: &'a [NodeKind],
    pattern: &'a [u8],
    record: Option<&'a mut [f64]>,
}

fn node(ctx: &mut Ctx<'_>, id: usize, offset: usize, llr: &[f64], u: &mut [u8], w: &mut [u8], scratch: &mut [f64]) {
    let s = llr.len();
    if s == 1 {
        let p = ctx.pattern[offset];
        let bit = if p == INFO { decide(llr[0]) } else { p };
        if let Some(rec) = ctx.record.as_deref_mut() {
            rec[offset] = llr[0];
        }
        u[0] = bit;
        w[0] = bit;
        return;
    }
    if ctx.record.is_none() {
        match ctx.kinds[id] {
            NodeKind::Rate0 => {
                // Decisions do not depend on the LLRs.
                u.copy_from_slice(&ctx.pattern[offset..offset + s]);
                w.copy_from_slice(u);
                butterfly(w);
                return;
            }
            NodeKind::Rate1 if llr.iter().all(|&v| v != 0.0) => {
                // With no frozen bits SC ends up with the hard decision of
                // every node input; u is recovered by re-encoding.
                for (wi, &l) in w.iter_mut().zip(llr) {
                    *wi = decide(l);
                }
                u.copy_from_slice(w);
                butterfly(u);
                return;
            }
            _ => {}
        }
    }
    let h = s / 2;
    let (child, rest) = scratch.split_at_mut(h);
    let (l1, l2) = llr.split_at(h);
    for j in 0..h {
        child[j] = f_exact(l1[j], l2[j]);
    }
    let (ul, ur) = u.split_at_mut(h);
    let (wl, wr) = w.split_at_mut(h);
    node(ctx, 2 * id, offset, child, ul, wl, rest);
    for j in 0..h {
        child[j] = g(l1[j], l2[j], wl[j]);
    }
    node(ctx, 2 * id + 1, offset + h, child, ur, wr, rest);
    for j in 0..h {
        wl[j] ^= wr[j];
    }
}

/// SC-decodes `llr_init`; the CRC check is embedded when the code carries one.
pub fn sc_decode(llr_init: &[f64], code: &PolarCode, frozen_values: &[u8]) -> Result<DecodeResult> {
    let check = if code.crc_width() > 0 {
        CrcCheck::Embedded
    } else {
        CrcCheck::Skip
    };
    sc_decode_with(llr_init, code, frozen_values, check)
}

pub fn sc_decode_with(
    llr_init: &[f64],
    code: &PolarCode,
    frozen_values: &[u8],
    check: CrcCheck,
) -> Result<DecodeResult> {
    let mut dec = ScDecoder::new(code.n());
    dec.decode(llr_init, code, frozen_values)?;
    finish(dec.u, code, check)
}

pub(crate) fn finish(u_hat: Vec<u8>, code: &PolarCode, check: CrcCheck) -> Result<DecodeResult> {
    let info: Vec<u8> = code.info().iter().map(|&i| u_hat[i]).collect();
    let (payload, crc_ok) = match check {
        CrcCheck::Skip => (info, true),
        CrcCheck::SideInfo(value) => {
            let ok = crc32_bits(&info) == value;
            (info, ok)
        }
        CrcCheck::Embedded => {
            if info.len() < CRC_WIDTH {
                return Err(Error::invalid("code has fewer information bits than CRC bits"));
            }
            let ok = crc_check(&info);
            let mut payload = info;
            payload.truncate(payload.len() - CRC_WIDTH);
            (payload, ok)
        }
    };
    Ok(DecodeResult { u_hat, payload, crc_ok })
}

/// Decisions plus the LLR each position was decided on, without shortcuts.
pub fn sc_decision_llrs(llr_init: &[f64], code: &PolarCode, frozen_values: &[u8]) -> Result<(Vec<u8>, Vec<f64>)> {
    let mut dec = ScDecoder::new(code.n());
    let mut rec = vec![0.0; code.n()];
    dec.run(llr_init, code, frozen_values, Some(&mut rec))?;
    Ok((dec.u, rec))
}

/// Builds `u` from information and frozen bits and returns `x = u G`.
pub fn encode(info_bits: &[u8], code: &PolarCode, frozen_values: &[u8]) -> Result<Vec<u8>> {
    if info_bits.len() != code.info().len() {
        return Err(Error::LengthMismatch {
            expected: code.info().len(),
            got: info_bits.len(),
        });
    }
    if frozen_values.len() != code.frozen().len() {
        return Err(Error::LengthMismatch {
            expected: code.frozen().len(),
            got: frozen_values.len(),
        });
    }
    let mut u = vec![0u8; code.n()];
    for (&i, &b) in code.info().iter().zip(info_bits) {
        u[i] = b;
    }
    for (&i, &b) in code.frozen().iter().zip(frozen_values) {
        u[i] = b;
    }
    super::polar_transform(&u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polar::{construct_bsc, crc_attach, polar_transform};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Decision LLR of `u_j` from the definition of the synthetic channel:
    /// sum `W^N(y | u G)` over all continuations `u_{j+1..N}`, with the past
    /// fixed to the decoder's own decisions.
    fn brute_force_llr(y: &[u8], past: &[u8], e: f64) -> f64 {
        let n = y.len();
        let j = past.len();
        let mut p = [0.0f64; 2];
        for bit in 0..2u8 {
            let rest = n - j - 1;
            for tail in 0..(1u32 << rest) {
                let mut u = past.to_vec();
                u.push(bit);
                u.extend((0..rest).map(|t| ((tail >> t) & 1) as u8));
                let x = polar_transform(&u).unwrap();
                let w: f64 = x.iter().zip(y).map(|(a, b)| if a == b { 1.0 - e } else { e }).product();
                p[bit as usize] += w;
            }
        }
        (p[0] / p[1]).ln()
    }

    fn oracle_check(n: usize, k: usize) {
        let e: f64 = 0.2;
        let c = ((1.0 - e) / e).ln();
        let code = construct_bsc(n, e, k).unwrap();
        let frozen_values = vec![0u8; code.frozen().len()];
        for word in 0..(1u32 << n) {
            let y: Vec<u8> = (0..n).map(|i| ((word >> i) & 1) as u8).collect();
            let llr: Vec<f64> = y.iter().map(|&b| if b == 0 { c } else { -c }).collect();
            let (u, rec) = sc_decision_llrs(&llr, &code, &frozen_values).unwrap();
            for j in 0..n {
                let expect = brute_force_llr(&y, &u[..j], e);
                assert!(
                    (rec[j] - expect).abs() < 1e-9,
                    "n={n} y={y:?} j={j}: {} vs {expect}",
                    rec[j]
                );
            }
            let fast = sc_decode(&llr, &code, &frozen_values).unwrap();
            assert_eq!(fast.u_hat, u);
        }
    }

    #[test]
    fn matches_synthetic_channel_oracle_n4() {
        for k in 0..=4 {
            oracle_check(4, k);
        }
    }

    #[test]
    fn matches_synthetic_channel_oracle_n8() {
        oracle_check(8, 4);
        oracle_check(8, 8);
    }

    #[test]
    fn f_branches_agree() {
        for &(a, b) in &[(10.5, 11.0), (-12.0, 30.0), (10.01, -10.02)] {
            let direct: f64 = 2.0 * ((0.5f64 * a).tanh() * (0.5f64 * b).tanh()).atanh();
            assert!((f_exact(a, b) - direct).abs() < 1e-6);
        }
        assert_eq!(f_exact(0.0, 3.0), 0.0);
        assert!((f_exact(200.0, -300.0) + 200.0).abs() < 1e-12);
    }

    #[test]
    fn noiseless_recovery_with_crc() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let code = construct_bsc(256, 0.05, 128).unwrap().with_crc(32).unwrap();
        let payload: Vec<u8> = (0..96).map(|_| rng.random_range(0..2)).collect();
        let info = crc_attach(&payload);
        let frozen: Vec<u8> = (0..128).map(|_| rng.random_range(0..2)).collect();
        let x = encode(&info, &code, &frozen).unwrap();
        let llr: Vec<f64> = x.iter().map(|&b| if b == 0 { 40.0 } else { -40.0 }).collect();
        let r = sc_decode(&llr, &code, &frozen).unwrap();
        assert!(r.crc_ok);
        assert_eq!(r.payload, payload);
        assert_eq!(polar_transform(&r.u_hat).unwrap(), x);
    }

    #[test]
    fn all_frozen_returns_frozen_values() {
        let code = construct_bsc(16, 0.1, 0).unwrap();
        let frozen: Vec<u8> = (0..16).map(|i| (i % 3 == 0) as u8).collect();
        let llr: Vec<f64> = (0..16).map(|i| i as f64 - 7.5).collect();
        let r = sc_decode(&llr, &code, &frozen).unwrap();
        assert_eq!(r.u_hat, frozen);
        assert!(sc_decode(&llr[..8], &code, &frozen).is_err());
    }

    proptest! {
        #[test]
        fn shortcuts_match_plain_sc(seed in any::<u64>(), k in 0usize..=128, e in 0.01f64..0.3) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let code = construct_bsc(128, e, k).unwrap();
            let frozen: Vec<u8> = (0..code.frozen().len()).map(|_| rng.random_range(0..2)).collect();
            let llr: Vec<f64> = (0..128).map(|_| rng.random_range(0.5..8.0) * if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
            let (plain, _) = sc_decision_llrs(&llr, &code, &frozen).unwrap();
            let fast = sc_decode(&llr, &code, &frozen).unwrap();
            prop_assert_eq!(fast.u_hat, plain);
        }
    }
}
