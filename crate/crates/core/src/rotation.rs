//! Random orthogonal rotation of Alice's and Bob's d-dimensional vectors.
//!
//! Bob draws `d` random bits `b`, normalizes his vector to `t = y / |y|` and
//! builds an orthogonal map `M` with `M t = u_b`, where `u_b` has entries
//! `(-1)^{b_i} / sqrt(d)`. Both vectors are rotated by `M`, which leaves the
//! noise `M z` Gaussian with the same variance.

use rand::RngCore;

use crate::error::{Error, Result};
use crate::rng::{derive_seed, stream, substream};

pub const DEFAULT_DIMENSION: usize = 8;

const UNIT_TOLERANCE: f64 = 1e-9;

/// Target point `u_b` on the unit sphere.
pub fn make_target_point(b: &[u8]) -> Result<Vec<f64>> {
    if b.is_empty() {
        return Err(Error::invalid("target point needs at least one bit"));
    }
    let c = 1.0 / (b.len() as f64).sqrt();
    Ok(b.iter().map(|&bit| if bit == 0 { c } else { -c }).collect())
}

/// An orthogonal map stored in O(d) form.
#[derive(Debug, Clone, PartialEq)]
pub enum OrthogonalMap {
    Identity {
        d: usize,
    },
    /// `H = I - scale * v v^T` with `scale = 2 / v^T v`.
    Householder {
        v: Vec<f64>,
        scale: f64,
    },
}

impl OrthogonalMap {
    pub fn dim(&self) -> usize {
        match self {
            OrthogonalMap::Identity { d } => *d,
            OrthogonalMap::Householder { v, .. } => v.len(),
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = x.to_vec();
        self.apply_in_place(&mut out);
        out
    }

    pub fn apply_in_place(&self, x: &mut [f64]) {
        debug_assert_eq!(x.len(), self.dim());
        if let OrthogonalMap::Householder { v, scale } = self {
            let dot: f64 = v.iter().zip(x.iter()).map(|(a, b)| a * b).sum();
            let c = scale * dot;
            for (xi, vi) in x.iter_mut().zip(v) {
                *xi -= c * vi;
            }
        }
    }

    /// Row-major dense matrix, for inspection and tests.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let d = self.dim();
        (0..d)
            .map(|i| {
                (0..d)
                    .map(|j| {
                        let id = if i == j { 1.0 } else { 0.0 };
                        match self {
                            OrthogonalMap::Identity { .. } => id,
                            OrthogonalMap::Householder { v, scale } => id - scale * v[i] * v[j],
                        }
                    })
                    .collect()
            })
            .collect()
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Orthogonal map sending unit vector `t` to unit vector `u`.
///
/// Realized as the Householder reflection with `v = t - u`, or the identity
/// when the two points coincide.
pub fn build_orthogonal_map(t: &[f64], u: &[f64]) -> Result<OrthogonalMap> {
    if t.len() != u.len() {
        return Err(Error::LengthMismatch {
            expected: t.len(),
            got: u.len(),
        });
    }
    if t.is_empty() {
        return Err(Error::invalid("empty vectors"));
    }
    for (name, w) in [("t", t), ("u", u)] {
        let n = norm(w);
        if !((n - 1.0).abs() <= UNIT_TOLERANCE) {
            return Err(Error::invalid(format!("{name} is not a unit vector (norm {n})")));
        }
    }
    let v: Vec<f64> = t.iter().zip(u).map(|(a, b)| a - b).collect();
    let vtv: f64 = v.iter().map(|x| x * x).sum();
    if vtv < 1e-20 {
        return Ok(OrthogonalMap::Identity { d: t.len() });
    }
    Ok(OrthogonalMap::Householder { v, scale: 2.0 / vtv })
}

/// Everything Alice and Bob share about the rotation of one vector pair.
#[derive(Debug, Clone, PartialEq)]
pub struct RotationBundle {
    pub d: usize,
    pub b: Vec<u8>,
    pub u: Vec<f64>,
    pub m_map: OrthogonalMap,
    pub x_rot: Vec<f64>,
    pub y_rot: Vec<f64>,
}

/// Draws `d` uniform bits from a 64-bit seed.
pub fn draw_bits(d: usize, seed: u64) -> Vec<u8> {
    let mut rng = substream(seed, stream::ROTATION, 0);
    let mut word = 0u64;
    (0..d)
        .map(|i| {
            if i % 64 == 0 {
                word = rng.next_u64();
            }
            ((word >> (i % 64)) & 1) as u8
        })
        .collect()
}

/// Rotates one pair of d-vectors with bits drawn from `seed`.
pub fn rsec_rotate(x: &[f64], y: &[f64], seed: u64) -> Result<RotationBundle> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            expected: y.len(),
            got: x.len(),
        });
    }
    let d = y.len();
    let ny = norm(y);
    if !(ny > 0.0 && ny.is_finite()) {
        return Err(Error::invalid("Bob's vector has zero or non-finite norm"));
    }
    let b = draw_bits(d, seed);
    let u = make_target_point(&b)?;
    let t: Vec<f64> = y.iter().map(|v| v / ny).collect();
    let m_map = build_orthogonal_map(&t, &u)?;
    let x_rot = m_map.apply(x);
    let y_rot = m_map.apply(y);
    Ok(RotationBundle {
        d,
        b,
        u,
        m_map,
        x_rot,
        y_rot,
    })
}

/// Seed of the rotation applied to vector `index` of a block.
pub fn vector_seed(block_seed: u64, index: u64) -> u64 {
    derive_seed(block_seed, stream::ROTATION, index)
}

/// Rotates a whole block vector by vector in place.
///
/// Vector `i` uses [`vector_seed`]`(seed, i)`, so the result does not depend
/// on how the block is split across threads. Returns the norms of Alice's
/// vectors, which the sign-slice estimator needs.
pub fn rotate_block(x: &mut [f64], y: &mut [f64], d: usize, seed: u64) -> Result<Vec<f64>> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            expected: y.len(),
            got: x.len(),
        });
    }
    if d == 0 || !x.len().is_multiple_of(d) {
        return Err(Error::invalid(format!(
            "block length {} is not a multiple of dimension {d}",
            x.len()
        )));
    }
    let mut norms = Vec::with_capacity(x.len() / d);
    for (i, (xv, yv)) in x.chunks_exact_mut(d).zip(y.chunks_exact_mut(d)).enumerate() {
        let bundle = rsec_rotate(xv, yv, vector_seed(seed, i as u64))?;
        xv.copy_from_slice(&bundle.x_rot);
        yv.copy_from_slice(&bundle.y_rot);
        norms.push(norm(xv));
    }
    Ok(norms)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian_vec(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
        (0..d).map(|_| StandardNormal.sample(rng)).collect()
    }

    fn unit(mut v: Vec<f64>) -> Vec<f64> {
        let n = norm(&v);
        v.iter_mut().for_each(|x| *x /= n);
        v
    }

    #[test]
    fn target_point_examples() {
        assert_eq!(make_target_point(&[0, 0, 0, 0]).unwrap(), vec![0.5; 4]);
        assert_eq!(make_target_point(&[1]).unwrap(), vec![-1.0]);
        assert!(make_target_point(&[]).is_err());
        let u = make_target_point(&[1, 0, 1, 1, 0, 0, 1, 0]).unwrap();
        assert!((norm(&u) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn map_examples() {
        let t = [0.6, 0.8];
        assert_eq!(build_orthogonal_map(&t, &t).unwrap(), OrthogonalMap::Identity { d: 2 });
        let h = build_orthogonal_map(&[1.0, 0.0], &[0.0, 1.0]).unwrap().to_dense();
        let expect = [[0.0, 1.0], [1.0, 0.0]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((h[i][j] - expect[i][j]).abs() < 1e-15);
            }
        }
        assert!(build_orthogonal_map(&[1.0, 1.0], &[0.0, 1.0]).is_err());
        assert!(build_orthogonal_map(&[1.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn noiseless_rotation_is_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let y = gaussian_vec(&mut rng, 8);
        let r = rsec_rotate(&y, &y, 99).unwrap();
        assert_eq!(r.x_rot, r.y_rot);
        assert!(rsec_rotate(&[0.0; 8], &[0.0; 8], 1).is_err());
    }

    #[test]
    fn rotation_preserves_noise_variance() {
        // snr = 1: sigma^2 = 1.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let vectors = 100_000 / 8 * 8;
        let mut sum = 0.0;
        let mut sum2 = 0.0;
        let mut count = 0.0;
        for i in 0..vectors / 8 {
            let x = gaussian_vec(&mut rng, 8);
            let z = gaussian_vec(&mut rng, 8);
            let y: Vec<f64> = x.iter().zip(&z).map(|(a, b)| a + b).collect();
            let r = rsec_rotate(&x, &y, i as u64).unwrap();
            for (a, b) in r.x_rot.iter().zip(&r.y_rot) {
                let e = b - a;
                sum += e;
                sum2 += e * e;
                count += 1.0;
            }
        }
        let var = sum2 / count - (sum / count).powi(2);
        assert!((var - 1.0).abs() < 0.03, "var = {var}");
    }

    proptest! {
        #[test]
        fn householder_is_orthogonal(seed in any::<u64>(), d in 1usize..=16) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t = unit(gaussian_vec(&mut rng, d));
            let u = unit(gaussian_vec(&mut rng, d));
            let m = build_orthogonal_map(&t, &u).unwrap();
            let dense = m.to_dense();
            for i in 0..d {
                for j in 0..d {
                    let dot: f64 = (0..d).map(|k| dense[k][i] * dense[k][j]).sum();
                    let id = if i == j { 1.0 } else { 0.0 };
                    prop_assert!((dot - id).abs() <= 1e-10);
                }
            }
            let mt = m.apply(&t);
            for (a, b) in mt.iter().zip(&u) {
                prop_assert!((a - b).abs() <= 1e-9);
            }
        }

        #[test]
        fn rotation_invariants(seed in any::<u64>(), rot_seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = gaussian_vec(&mut rng, 8);
            let y = gaussian_vec(&mut rng, 8);
            let r = rsec_rotate(&x, &y, rot_seed).unwrap();
            prop_assert!((norm(&r.u) - 1.0).abs() < 1e-12);
            prop_assert!((norm(&r.x_rot) - norm(&x)).abs() <= 1e-9 * norm(&x));
            prop_assert!((norm(&r.y_rot) - norm(&y)).abs() <= 1e-9 * norm(&y));
            for (bit, v) in r.b.iter().zip(&r.y_rot) {
                prop_assert_eq!(*bit == 0, *v > 0.0);
            }
        }

        #[test]
        fn block_rotation_matches_single(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut x = gaussian_vec(&mut rng, 32);
            let mut y = gaussian_vec(&mut rng, 32);
            let (x0, y0) = (x.clone(), y.clone());
            let norms = rotate_block(&mut x, &mut y, 8, seed).unwrap();
            for i in 0..4 {
                let r = rsec_rotate(&x0[i*8..i*8+8], &y0[i*8..i*8+8], vector_seed(seed, i as u64)).unwrap();
                prop_assert_eq!(&r.x_rot[..], &x[i*8..i*8+8]);
                prop_assert_eq!(&r.y_rot[..], &y[i*8..i*8+8]);
                prop_assert!((norms[i] - norm(&x0[i*8..i*8+8])).abs() < 1e-9);
            }
        }
    }
}
