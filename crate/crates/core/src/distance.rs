use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::types::{DistanceMetric, FeatureVector};

/// Distance between two embeddings under `metric`.
///
/// Cosine distance is `1 - cos(a, b)` clamped to `[0, 2]` and is an error for
/// zero vectors. Identical inputs give exactly zero under every metric.
pub fn compute_distance<S: Real>(a: &FeatureVector<S>, b: &FeatureVector<S>, metric: DistanceMetric) -> Result<S> {
    let (a, b) = (a.as_slice(), b.as_slice());
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch { left: a.len(), right: b.len() });
    }
    match metric {
        DistanceMetric::SquaredL2 => Ok(squared_l2(a, b)),
        DistanceMetric::L2 => Ok(squared_l2(a, b).sqrt()),
        DistanceMetric::Cosine => {
            let sim = cosine_similarity_slices(a, b)?;
            if a == b {
                return Ok(S::zero());
            }
            let two = S::one() + S::one();
            Ok((S::one() - sim).max(S::zero()).min(two))
        }
    }
}

/// Cosine similarity in `[-1, 1]`; errors on zero vectors.
pub fn cosine_similarity<S: Real>(a: &FeatureVector<S>, b: &FeatureVector<S>) -> Result<S> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch { left: a.dim(), right: b.dim() });
    }
    cosine_similarity_slices(a.as_slice(), b.as_slice())
}

fn squared_l2<S: Real>(a: &[S], b: &[S]) -> S {
    a.iter().zip(b).fold(S::zero(), |acc, (&x, &y)| {
        let diff = x - y;
        acc + diff * diff
    })
}

fn cosine_similarity_slices<S: Real>(a: &[S], b: &[S]) -> Result<S> {
    let mut dot = S::zero();
    let mut na = S::zero();
    let mut nb = S::zero();
    for (&x, &y) in a.iter().zip(b) {
        dot = dot + x * y;
        na = na + x * x;
        nb = nb + y * y;
    }
    if na == S::zero() || nb == S::zero() {
        return Err(Error::ZeroVector);
    }
    let sim = dot / (na.sqrt() * nb.sqrt());
    Ok(sim.max(-S::one()).min(S::one()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fv(v: &[f64]) -> FeatureVector<f64> {
        FeatureVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn squared_l2_of_3_4_5_triangle() {
        let d = compute_distance(&fv(&[0.0, 0.0]), &fv(&[3.0, 4.0]), DistanceMetric::SquaredL2);
        assert_eq!(d.unwrap(), 25.0);
        let d = compute_distance(&fv(&[0.0, 0.0]), &fv(&[3.0, 4.0]), DistanceMetric::L2);
        assert_eq!(d.unwrap(), 5.0);
    }

    #[test]
    fn identical_inputs_are_at_distance_zero() {
        let a = fv(&[1.0, 2.0, 3.0]);
        for m in [DistanceMetric::SquaredL2, DistanceMetric::L2, DistanceMetric::Cosine] {
            assert_eq!(compute_distance(&a, &a, m).unwrap(), 0.0);
        }
    }

    #[test]
    fn orthogonal_vectors_have_cosine_distance_one() {
        let d = compute_distance(&fv(&[1.0, 0.0]), &fv(&[0.0, 1.0]), DistanceMetric::Cosine);
        assert_eq!(d.unwrap(), 1.0);
        let d = compute_distance(&fv(&[1.0, 0.0]), &fv(&[-2.0, 0.0]), DistanceMetric::Cosine);
        assert_eq!(d.unwrap(), 2.0);
    }

    #[test]
    fn errors() {
        let err = compute_distance(&fv(&[1.0]), &fv(&[1.0, 2.0]), DistanceMetric::L2);
        assert_eq!(err, Err(Error::DimensionMismatch { left: 1, right: 2 }));
        let err = compute_distance(&fv(&[0.0, 0.0]), &fv(&[1.0, 2.0]), DistanceMetric::Cosine);
        assert_eq!(err, Err(Error::ZeroVector));
    }

    #[test]
    fn works_in_single_precision() {
        let a = FeatureVector::new(vec![0.0f32, 0.0]).unwrap();
        let b = FeatureVector::new(vec![3.0f32, 4.0]).unwrap();
        assert_eq!(compute_distance(&a, &b, DistanceMetric::L2).unwrap(), 5.0f32);
    }
}
