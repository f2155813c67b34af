use crate::error::{Error, Result};

pub(crate) fn check_length(n: usize) -> Result<u32> {
    if n == 0 || !n.is_power_of_two() {
        return Err(Error::invalid(format!("polar length must be a power of two, got {n}")));
    }
    Ok(n.trailing_zeros())
}

/// Reverses the lowest `bits` bits of `i`.
#[inline]
pub fn bit_reverse(i: usize, bits: u32) -> usize {
    if bits == 0 {
        0
    } else {
        i.reverse_bits() >> (usize::BITS - bits)
    }
}

/// In-place `u * F^{(x)n}` over GF(2), `F = [[1, 0], [1, 1]]`, natural order.
pub fn butterfly(u: &mut [u8]) {
    let n = u.len();
    let mut h = 1;
    while h < n {
        for block in u.chunks_exact_mut(2 * h) {
            let (lo, hi) = block.split_at_mut(h);
            for (a, b) in lo.iter_mut().zip(hi.iter()) {
                *a ^= *b;
            }
        }
        h *= 2;
    }
}

/// Applies the bit-reversal permutation in place.
pub fn bit_reverse_permute<T>(v: &mut [T]) {
    let bits = v.len().trailing_zeros();
    for i in 0..v.len() {
        let j = bit_reverse(i, bits);
        if i < j {
            v.swap(i, j);
        }
    }
}

/// `x = u G` with `G = F^{(x)n} B`, `B` the bit-reversal permutation.
///
/// `G` is its own inverse, so applying the transform twice returns `u`.
pub fn polar_transform(u: &[u8]) -> Result<Vec<u8>> {
    check_length(u.len())?;
    let mut w = u.to_vec();
    butterfly(&mut w);
    bit_reverse_permute(&mut w);
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Explicit generator matrix `F^{(x)n} B` as rows.
    fn generator(n: usize) -> Vec<Vec<u8>> {
        let mut f = vec![vec![1u8]];
        while f.len() < n {
            let s = f.len();
            let mut g = vec![vec![0u8; 2 * s]; 2 * s];
            for i in 0..s {
                for j in 0..s {
                    g[i][j] = f[i][j];
                    g[i + s][j] = f[i][j];
                    g[i + s][j + s] = f[i][j];
                }
            }
            f = g;
        }
        let bits = n.trailing_zeros();
        (0..n)
            .map(|i| (0..n).map(|j| f[i][bit_reverse(j, bits)]).collect())
            .collect()
    }

    fn mul(u: &[u8], g: &[Vec<u8>]) -> Vec<u8> {
        let n = u.len();
        (0..n)
            .map(|j| (0..n).fold(0, |acc, i| acc ^ (u[i] & g[i][j])))
            .collect()
    }

    #[test]
    fn small_examples() {
        assert_eq!(polar_transform(&[0; 8]).unwrap(), vec![0; 8]);
        assert_eq!(polar_transform(&[1, 0]).unwrap(), vec![1, 0]);
        assert_eq!(polar_transform(&[0, 1]).unwrap(), vec![1, 1]);
        assert_eq!(polar_transform(&[0, 0, 0, 1]).unwrap(), vec![1, 1, 1, 1]);
        assert!(polar_transform(&[0, 1, 0]).is_err());
        assert!(polar_transform(&[]).is_err());
    }

    #[test]
    fn hand_generator_n4() {
        let g = generator(4);
        let expect = vec![vec![1, 0, 0, 0], vec![1, 0, 1, 0], vec![1, 1, 0, 0], vec![1, 1, 1, 1]];
        assert_eq!(g, expect);
    }

    #[test]
    fn matches_dense_generator_and_is_involution() {
        for n in [2usize, 4, 8, 16] {
            let g = generator(n);
            for word in 0..(1u32 << n) {
                let u: Vec<u8> = (0..n).map(|i| ((word >> i) & 1) as u8).collect();
                let x = polar_transform(&u).unwrap();
                assert_eq!(x, mul(&u, &g));
                assert_eq!(polar_transform(&x).unwrap(), u);
            }
        }
    }

    #[test]
    fn permutation_commutes_with_kernel() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut n = 2;
        while n <= 256 {
            for _ in 0..20 {
                let u: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
                let mut a = u.clone();
                butterfly(&mut a);
                bit_reverse_permute(&mut a);
                let mut b = u.clone();
                bit_reverse_permute(&mut b);
                butterfly(&mut b);
                assert_eq!(a, b);
            }
            n *= 2;
        }
    }

    proptest! {
        #[test]
        fn involution_random(log_n in 1u32..=20, seed in any::<u64>()) {
            let n = 1usize << log_n;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let u: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
            let x = polar_transform(&u).unwrap();
            prop_assert_eq!(polar_transform(&x).unwrap(), u);
        }
    }
}
