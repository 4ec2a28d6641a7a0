//! Canonical cosine similarity.

use super::SimilarityError;

const LANES: usize = 4;

/// Dot product in f64 with a fixed four-lane accumulation order.
///
/// Every score that leaves this crate goes through this function (or
/// [`norm`]), so results never depend on SIMD width or GEMM blocking.
pub(crate) fn dot(u: &[f32], v: &[f32]) -> f64 {
    debug_assert_eq!(u.len(), v.len());
    let mut acc = [0f64; LANES];
    let mut cu = u.chunks_exact(LANES);
    let mut cv = v.chunks_exact(LANES);
    for (a, b) in (&mut cu).zip(&mut cv) {
        for k in 0..LANES {
            acc[k] += a[k] as f64 * b[k] as f64;
        }
    }
    for (k, (a, b)) in cu.remainder().iter().zip(cv.remainder()).enumerate() {
        acc[k] += *a as f64 * *b as f64;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3])
}

pub(crate) fn norm(u: &[f32]) -> f64 {
    dot(u, u).sqrt()
}

/// Cosine from a precomputed dot product and norms, clamped to [−1, 1].
/// Negative zero is folded into zero so ties compare equal.
pub(crate) fn from_parts(dot: f64, norm_u: f64, norm_v: f64) -> f64 {
    (dot / (norm_u * norm_v)).clamp(-1.0, 1.0) + 0.0
}

/// `u·v / (‖u‖‖v‖)`, clamped to [−1, 1].
pub fn cosine(u: &[f32], v: &[f32]) -> Result<f64, SimilarityError> {
    if u.len() != v.len() {
        return Err(SimilarityError::DimensionMismatch {
            left: u.len(),
            right: v.len(),
        });
    }
    let (nu, nv) = (norm(u), norm(v));
    if nu == 0.0 || nv == 0.0 || !nu.is_finite() || !nv.is_finite() {
        return Err(SimilarityError::ZeroNorm);
    }
    Ok(from_parts(dot(u, v), nu, nv))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        assert_eq!(cosine(&[3.0, 4.0], &[3.0, 4.0]).unwrap(), 1.0);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        let c = cosine(&[1.0, 2.0, 2.0], &[2.0, 1.0, 2.0]).unwrap();
        assert!((c - 8.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            cosine(&[1.0], &[1.0, 2.0]),
            Err(SimilarityError::DimensionMismatch { left: 1, right: 2 })
        ));
        assert!(matches!(cosine(&[0.0, 0.0], &[1.0, 2.0]), Err(SimilarityError::ZeroNorm)));
    }

    proptest! {
        #[test]
        fn symmetric_and_bounded(
            u in prop::collection::vec(-1e3f32..1e3, 1..40),
            seed in any::<u64>(),
        ) {
            let v: Vec<f32> = u.iter().enumerate()
                .map(|(i, x)| x * ((seed.rotate_left(i as u32) % 7) as f32 - 3.0) + 0.5)
                .collect();
            if let (Ok(a), Ok(b)) = (cosine(&u, &v), cosine(&v, &u)) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
                prop_assert!((-1.0..=1.0).contains(&a));
            }
        }

        #[test]
        fn matches_naive(u in prop::collection::vec(-10f32..10.0, 1..64),
                         v in prop::collection::vec(-10f32..10.0, 64)) {
            let v = &v[..u.len()];
            if let Ok(c) = cosine(&u, v) {
                let d: f64 = u.iter().zip(v).map(|(a, b)| *a as f64 * *b as f64).sum();
                let nu: f64 = u.iter().map(|a| (*a as f64).powi(2)).sum::<f64>().sqrt();
                let nv: f64 = v.iter().map(|a| (*a as f64).powi(2)).sum::<f64>().sqrt();
                prop_assert!((c - (d / (nu * nv)).clamp(-1.0, 1.0)).abs() < 1e-12);
            }
        }
    }
}
