//! Bhattacharyya-bound construction of polar codes on the BSC.

use crate::binary_entropy;
use crate::error::{Error, Result};

use super::transform::check_length;
use super::{CodeKey, PolarCode};

fn check_crossover(e: f64) -> Result<()> {
    if !(e > 0.0 && e <= 0.5) {
        return Err(Error::invalid(format!("BSC crossover must lie in (0, 0.5], got {e}")));
    }
    Ok(())
}

/// Natural logarithm of the Bhattacharyya parameter of every synthetic
/// channel, indexed like the polar input `u`.
///
/// Starts from `Z = 2 sqrt(e (1 - e))`; reading the index from its most
/// significant bit, a 0 maps `Z` to `2Z - Z^2` and a 1 maps it to `Z^2`.
pub fn log_bhattacharyya(n: usize, e: f64) -> Result<Vec<f64>> {
    let levels = check_length(n)?;
    check_crossover(e)?;
    let mut z = Vec::with_capacity(n);
    z.push(0.5 * (4.0 * e * (1.0 - e)).ln());
    for _ in 0..levels {
        let next: Vec<f64> = z
            .iter()
            .flat_map(|&lz: &f64| {
                let minus = (lz + (2.0 - lz.exp()).ln()).min(0.0);
                [minus, 2.0 * lz]
            })
            .collect();
        z = next;
    }
    Ok(z)
}

pub fn bhattacharyya(n: usize, e: f64) -> Result<Vec<f64>> {
    Ok(log_bhattacharyya(n, e)?.into_iter().map(f64::exp).collect())
}

/// Indices ordered from least to most reliable: largest `Z` first, ties by
/// lower index first.
fn reliability_order(log_z: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..log_z.len()).collect();
    idx.sort_by(|&a, &b| log_z[b].total_cmp(&log_z[a]).then(a.cmp(&b)));
    idx
}

/// Code of length `n` with `k` information positions on a BSC with
/// crossover `e`. The code carries no CRC; see [`PolarCode::with_crc`].
pub fn construct_bsc(n: usize, e: f64, k: usize) -> Result<PolarCode> {
    if k > n {
        return Err(Error::invalid(format!("information count {k} exceeds length {n}")));
    }
    let log_z = log_bhattacharyya(n, e)?;
    let order = reliability_order(&log_z);
    let mut frozen = order[..n - k].to_vec();
    frozen.sort_unstable();
    PolarCode::from_frozen(n, frozen, 0, e)
}

/// Largest information count whose summed Bhattacharyya parameters stay at
/// or below `target_fer`, capped by the capacity `n (1 - H2(e))`.
pub fn select_info_count(e: f64, n: usize, target_fer: f64) -> Result<usize> {
    if !(target_fer > 0.0 && target_fer <= 1.0) {
        return Err(Error::invalid(format!(
            "target FER must lie in (0, 1], got {target_fer}"
        )));
    }
    let log_z = log_bhattacharyya(n, e)?;
    let cap = (n as f64 * (1.0 - binary_entropy(e))).floor() as usize;
    let mut order = reliability_order(&log_z);
    order.reverse();
    let mut sum = 0.0;
    let mut k = 0;
    for &i in order.iter().take(cap) {
        sum += log_z[i].exp();
        if sum > target_fer {
            break;
        }
        k += 1;
    }
    Ok(k)
}

/// Pre-CRC rate `R'` chosen by [`select_info_count`].
pub fn select_rate(e: f64, n: usize, target_fer: f64) -> Result<f64> {
    Ok(select_info_count(e, n, target_fer)? as f64 / n as f64)
}

/// Code for a BSC with crossover `key.e` at the rate picked by
/// [`select_info_count`].
///
/// When the selected information set cannot even hold the CRC, every
/// position is frozen: the slice is better sent in the clear.
pub fn construct_for_target(key: &CodeKey) -> Result<PolarCode> {
    let k = select_info_count(key.e, key.n, key.target_fer)?;
    if k <= key.crc_width {
        return construct_bsc(key.n, key.e, 0);
    }
    construct_bsc(key.n, key.e, k)?.with_crc(key.crc_width)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_recursion_n4() {
        let z = bhattacharyya(4, 0.11).unwrap();
        let z0 = 2.0 * (0.11f64 * 0.89).sqrt();
        assert!((z0 - 0.626).abs() < 1e-3);
        let m = 2.0 * z0 - z0 * z0;
        let p = z0 * z0;
        let expect = [2.0 * m - m * m, m * m, 2.0 * p - p * p, p * p];
        for (a, b) in z.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
        for (a, b) in z.iter().zip([0.980, 0.740, 0.630, 0.153]) {
            assert!((a - b).abs() < 1e-3);
        }
        let code = construct_bsc(4, 0.11, 3).unwrap();
        assert_eq!(code.frozen(), &[0]);
    }

    #[test]
    fn extreme_crossovers() {
        assert!(bhattacharyya(64, 0.5).unwrap().iter().all(|&z| (z - 1.0).abs() < 1e-12));
        assert!(bhattacharyya(64, 1e-20).unwrap().iter().all(|&z| z < 1e-7));
        assert!(construct_bsc(8, 0.0, 4).is_err());
        assert!(construct_bsc(8, 0.6, 4).is_err());
        assert!(construct_bsc(6, 0.1, 4).is_err());
        assert!(construct_bsc(8, 0.1, 9).is_err());
    }

    #[test]
    fn rate_selection_examples() {
        assert_eq!(select_rate(0.5, 1024, 0.1).unwrap(), 0.0);
        let r = select_rate(1e-9, 1024, 0.1).unwrap();
        assert!(r > 0.99);
        let r = select_rate(0.02, 1 << 16, 0.1).unwrap();
        assert!(r <= 1.0 - binary_entropy(0.02));
        assert!(r > 0.5);
    }

    #[test]
    fn frozen_sets_are_nested() {
        let n = 1024;
        let mut prev: Option<Vec<usize>> = None;
        for k in (0..=n).step_by(37) {
            let code = construct_bsc(n, 0.07, k).unwrap();
            if let Some(p) = prev {
                // Lower k (previous) freezes a superset.
                assert!(code.frozen().iter().all(|i| p.binary_search(i).is_ok()));
            }
            prev = Some(code.frozen().to_vec());
        }
    }

    proptest! {
        #[test]
        fn nested_random(e in 0.001f64..0.5, k1 in 0usize..=256, k2 in 0usize..=256) {
            let (lo, hi) = (k1.min(k2), k1.max(k2));
            let a = construct_bsc(256, e, lo).unwrap();
            let b = construct_bsc(256, e, hi).unwrap();
            prop_assert!(b.frozen().iter().all(|i| a.frozen().binary_search(i).is_ok()));
        }

        #[test]
        fn rate_monotone_in_error(e1 in 0.001f64..0.5, e2 in 0.001f64..0.5) {
            let (lo, hi) = (e1.min(e2), e1.max(e2));
            prop_assert!(select_info_count(lo, 512, 0.1).unwrap() >= select_info_count(hi, 512, 0.1).unwrap());
        }
    }
}
