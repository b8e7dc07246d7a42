use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `Σ = 1` for a valid probability vector.
pub const SIMPLEX_TOL: f64 = 1e-12;

/// Probability vector: nonnegative components summing to one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct SimplexVec(Vec<f64>);

impl SimplexVec {
    pub fn new(components: Vec<f64>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::Domain("empty probability vector".into()));
        }
        if let Some(bad) = components.iter().find(|c| !(c.is_finite() && **c >= 0.0)) {
            return Err(Error::Domain(format!(
                "probability component {bad} is not a finite nonnegative number"
            )));
        }
        let total: f64 = components.iter().sum();
        if (total - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::Domain(format!(
                "components sum to {total}, not 1"
            )));
        }
        Ok(Self(components))
    }

    /// Normalizes nonnegative weights.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::Domain(format!("weights sum to {total}")));
        }
        Self::new(weights.iter().map(|w| w / total).collect())
    }

    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0 / n as f64; n])
    }

    pub fn one_hot(n: usize, index: usize) -> Self {
        let mut v = vec![0.0; n];
        v[index] = 1.0;
        Self(v)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Index of the largest component; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }

    /// Shannon entropy in nats, `0 · ln 0 = 0`.
    pub fn entropy(&self) -> f64 {
        -self
            .0
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|p| p * p.ln())
            .sum::<f64>()
    }

    pub fn total_variation(&self, other: &SimplexVec) -> f64 {
        0.5 * self
            .0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
    }
}

impl TryFrom<Vec<f64>> for SimplexVec {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<SimplexVec> for Vec<f64> {
    fn from(v: SimplexVec) -> Self {
        v.0
    }
}

/// Argmax with lowest-index tie breaking.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        assert!(SimplexVec::new(vec![0.3, 0.7]).is_ok());
        assert!(SimplexVec::new(vec![0.3, 0.8]).is_err());
        assert!(SimplexVec::new(vec![-0.1, 1.1]).is_err());
        assert!(SimplexVec::new(vec![]).is_err());
        assert!(serde_json::from_str::<SimplexVec>("[0.5, 0.6]").is_err());
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[0.1, 0.7, 0.2]), 1);
        assert_eq!(SimplexVec::uniform(4).argmax(), 0);
        assert_eq!(argmax(&[0.2, 0.4, 0.4]), 1);
    }

    #[test]
    fn entropy_of_uniform_pair_is_ln2() {
        assert!((SimplexVec::uniform(2).entropy() - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(SimplexVec::one_hot(3, 1).entropy(), 0.0);
    }
}
