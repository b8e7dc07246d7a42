use crate::distributions::DiscreteJoint;
use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::risk::LabelMap;

/// Supervised pairs `(y, label)` as row-aligned matrices, with optional
/// per-row weights. Weighted rows turn a finite joint into its exact
/// expectation: the training objective becomes `Σ_n w_n ℓ_n / Σ_n w_n`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub inputs: Tensor,
    pub targets: Tensor,
    pub weights: Option<Vec<f64>>,
}

impl Dataset {
    pub fn new(inputs: Tensor, targets: Tensor, weights: Option<Vec<f64>>) -> Result<Self> {
        if inputs.rank() != 2 || targets.rank() != 2 {
            return Err(Error::InvalidTensor("dataset inputs and targets must be matrices".into()));
        }
        if inputs.rows() != targets.rows() {
            return Err(Error::ShapeMismatch {
                op: "dataset",
                lhs: inputs.shape().to_vec(),
                rhs: targets.shape().to_vec(),
            });
        }
        if inputs.rows() == 0 {
            return Err(Error::Domain("dataset is empty".into()));
        }
        if let Some(w) = &weights {
            if w.len() != inputs.rows() || w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::Domain("weights must be one nonnegative value per row".into()));
            }
            if !(w.iter().sum::<f64>() > 0.0) {
                return Err(Error::Domain("weights sum to zero".into()));
            }
        }
        Ok(Self {
            inputs,
            targets,
            weights,
        })
    }

    pub fn from_rows(inputs: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<Self> {
        Self::new(Tensor::from_rows(inputs)?, Tensor::from_rows(targets)?, None)
    }

    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.cols()
    }

    pub fn target_dim(&self) -> usize {
        self.targets.cols()
    }

    /// Every cell `(y_i, x_j)` of the joint as one row with weight `p_ij`,
    /// input one-hot in `i` and target `g(x_j, y_i)`. Zero-probability
    /// cells are dropped.
    pub fn from_joint(joint: &DiscreteJoint, g: &LabelMap) -> Result<Self> {
        let n_y = joint.n_y();
        let mut inputs = Vec::new();
        let mut targets = Vec::new();
        let mut weights = Vec::new();
        for (i, y) in joint.y_support().iter().enumerate() {
            for (j, x) in joint.x_support().iter().enumerate() {
                let p = joint.prob(i, j);
                if p == 0.0 {
                    continue;
                }
                inputs.push(one_hot(n_y, i));
                targets.push(g.apply(x, y)?);
                weights.push(p);
            }
        }
        Self::new(
            Tensor::from_rows(&inputs)?,
            Tensor::from_rows(&targets)?,
            Some(weights),
        )
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            inputs: self.inputs.select_rows(indices),
            targets: self.targets.select_rows(indices),
            weights: self
                .weights
                .as_ref()
                .map(|w| indices.iter().map(|&i| w[i]).collect()),
        }
    }
}

pub fn one_hot(n: usize, index: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[index] = 1.0;
    v
}

/// `[indices.len(), n]` matrix of one-hot rows.
pub fn one_hot_rows(indices: &[usize], n: usize) -> Tensor {
    let mut data = vec![0.0; indices.len() * n];
    for (r, &i) in indices.iter().enumerate() {
        data[r * n + i] = 1.0;
    }
    Tensor::new(vec![indices.len(), n], data).expect("shape matches data")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn joint_dataset_weights_are_the_table() {
        let joint = DiscreteJoint::new(
            vec![vec![0.0], vec![1.0]],
            vec![vec![0.0], vec![1.0]],
            vec![vec![0.1, 0.2], vec![0.0, 0.7]],
        )
        .unwrap();
        let d = Dataset::from_joint(&joint, &LabelMap::IdentityX).unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.weights.as_deref(), Some(&[0.1, 0.2, 0.7][..]));
        assert_eq!(d.inputs.row(2), &[0.0, 1.0]);
        assert_eq!(d.targets.row(2), &[1.0]);
    }

    #[test]
    fn rejects_misaligned_rows() {
        let err = Dataset::new(Tensor::zeros(&[3, 2]), Tensor::zeros(&[2, 1]), None);
        assert!(err.is_err());
        assert!(Dataset::new(Tensor::zeros(&[0, 2]), Tensor::zeros(&[0, 1]), None).is_err());
    }
}
