use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean function for a squared-residual label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MeanFunction {
    /// `m(y) = offset + matrix · y`.
    Affine {
        offset: Vec<f64>,
        matrix: Vec<Vec<f64>>,
    },
    /// Exact lookup by input point.
    Table { keys: Vec<Vec<f64>>, values: Vec<Vec<f64>> },
}

impl MeanFunction {
    pub fn eval(&self, y: &[f64]) -> Result<Vec<f64>> {
        match self {
            MeanFunction::Affine { offset, matrix } => {
                if matrix.len() != offset.len() || matrix.iter().any(|r| r.len() != y.len()) {
                    return Err(Error::ShapeMismatch {
                        op: "mean_function",
                        lhs: vec![matrix.len(), matrix.first().map_or(0, Vec::len)],
                        rhs: vec![y.len()],
                    });
                }
                Ok(offset
                    .iter()
                    .zip(matrix)
                    .map(|(o, row)| o + row.iter().zip(y).map(|(a, b)| a * b).sum::<f64>())
                    .collect())
            }
            MeanFunction::Table { keys, values } => keys
                .iter()
                .position(|k| k.as_slice() == y)
                .map(|i| values[i].clone())
                .ok_or_else(|| Error::Domain(format!("mean table has no entry for y = {y:?}"))),
        }
    }
}

/// The training label `g(x, y)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LabelMap {
    IdentityX,
    /// `(x − y)/σ²`, the score of the Gaussian kernel `p(y | x)`.
    ScoreLabel { noise_var: f64 },
    /// `(x − m(y))²` elementwise.
    SquaredResidual { mean: MeanFunction },
}

impl LabelMap {
    pub fn apply(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        match self {
            LabelMap::IdentityX => Ok(x.to_vec()),
            LabelMap::ScoreLabel { noise_var } => {
                if !(*noise_var > 0.0) {
                    return Err(Error::Domain("score label needs noise variance > 0".into()));
                }
                if x.len() != y.len() {
                    return Err(Error::ShapeMismatch {
                        op: "score_label",
                        lhs: vec![x.len()],
                        rhs: vec![y.len()],
                    });
                }
                Ok(x.iter().zip(y).map(|(a, b)| (a - b) / noise_var).collect())
            }
            LabelMap::SquaredResidual { mean } => {
                let m = mean.eval(y)?;
                if m.len() != x.len() {
                    return Err(Error::ShapeMismatch {
                        op: "squared_residual",
                        lhs: vec![x.len()],
                        rhs: vec![m.len()],
                    });
                }
                Ok(x.iter().zip(&m).map(|(a, b)| (a - b) * (a - b)).collect())
            }
        }
    }
}
