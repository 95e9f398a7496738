use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A sentence embedding. Non-empty and finite by construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct EmbeddingVector {
    values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Computation("embedding has no dimensions".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Computation(format!("embedding component {i} is not finite")));
        }
        Ok(Self { values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

impl TryFrom<Vec<f64>> for EmbeddingVector {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<EmbeddingVector> for Vec<f64> {
    fn from(v: EmbeddingVector) -> Self {
        v.values
    }
}

pub fn cosine_similarity(u: &EmbeddingVector, v: &EmbeddingVector) -> Result<f64> {
    if u.dim() != v.dim() {
        return Err(Error::Computation(format!(
            "dimension mismatch: {} vs {}",
            u.dim(),
            v.dim()
        )));
    }
    let (mut dot, mut uu, mut vv) = (0.0, 0.0, 0.0);
    for (a, b) in u.values.iter().zip(&v.values) {
        dot += a * b;
        uu += a * a;
        vv += b * b;
    }
    if uu == 0.0 || vv == 0.0 {
        return Err(Error::Computation("cosine similarity of a zero vector".into()));
    }
    Ok((dot / (libm::sqrt(uu) * libm::sqrt(vv))).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn e(v: &[f64]) -> EmbeddingVector {
        EmbeddingVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn examples() {
        assert!((cosine_similarity(&e(&[1., 2., 3.]), &e(&[1., 2., 3.])).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(cosine_similarity(&e(&[1., 0.]), &e(&[0., 1.])).unwrap(), 0.0);
        // hand computation: 1 / (sqrt(2) * 1)
        let s = cosine_similarity(&e(&[1., 1.]), &e(&[1., 0.])).unwrap();
        assert!((s - core::f64::consts::FRAC_1_SQRT_2).abs() < 1e-9);
        assert!((s - 0.707_106_78).abs() < 1e-8);
    }

    #[test]
    fn errors() {
        assert!(cosine_similarity(&e(&[1., 0.]), &e(&[1., 0., 0.])).is_err());
        assert!(cosine_similarity(&e(&[0., 0.]), &e(&[1., 0.])).is_err());
        assert!(EmbeddingVector::new(vec![]).is_err());
        assert!(EmbeddingVector::new(vec![f64::NAN]).is_err());
    }

    fn nonzero() -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-100.0f64..100.0, 3)
            .prop_filter("nonzero", |v| v.iter().map(|x| x * x).sum::<f64>() > 1e-6)
    }

    proptest! {
        #[test]
        fn self_similarity_is_one(u in nonzero()) {
            let u = e(&u);
            prop_assert!((cosine_similarity(&u, &u).unwrap() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn symmetric_and_scale_invariant(u in nonzero(), v in nonzero(), s in 0.01f64..100.0) {
            let (a, b) = (e(&u), e(&v));
            let ab = cosine_similarity(&a, &b).unwrap();
            prop_assert!((ab - cosine_similarity(&b, &a).unwrap()).abs() < 1e-12);
            let scaled = e(&u.iter().map(|x| x * s).collect::<Vec<_>>());
            prop_assert!((ab - cosine_similarity(&scaled, &b).unwrap()).abs() < 1e-12);
            prop_assert!((-1.0..=1.0).contains(&ab));
        }
    }
}
