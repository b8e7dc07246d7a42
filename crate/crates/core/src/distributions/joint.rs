use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Stream;
use crate::simplex::SimplexVec;

/// Exact finite joint distribution `p[i][j] = P(y = y_i, x = x_j)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawJoint", into = "RawJoint")]
pub struct DiscreteJoint {
    y_support: Vec<Vec<f64>>,
    x_support: Vec<Vec<f64>>,
    prob: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct RawJoint {
    y_support: Vec<Vec<f64>>,
    x_support: Vec<Vec<f64>>,
    prob: Vec<Vec<f64>>,
}

impl TryFrom<RawJoint> for DiscreteJoint {
    type Error = Error;

    fn try_from(r: RawJoint) -> Result<Self> {
        DiscreteJoint::new(r.y_support, r.x_support, r.prob)
    }
}

impl From<DiscreteJoint> for RawJoint {
    fn from(j: DiscreteJoint) -> Self {
        RawJoint {
            y_support: j.y_support,
            x_support: j.x_support,
            prob: j.prob,
        }
    }
}

const TOTAL_TOL: f64 = 1e-12;

impl DiscreteJoint {
    pub fn new(
        y_support: Vec<Vec<f64>>,
        x_support: Vec<Vec<f64>>,
        prob: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if y_support.is_empty() || x_support.is_empty() {
            return Err(Error::Domain("joint needs nonempty supports".into()));
        }
        if prob.len() != y_support.len() || prob.iter().any(|r| r.len() != x_support.len()) {
            return Err(Error::Domain(format!(
                "probability table must be {}x{}",
                y_support.len(),
                x_support.len()
            )));
        }
        let dim_x = x_support[0].len();
        if x_support.iter().any(|x| x.len() != dim_x) {
            return Err(Error::Domain("x support points differ in dimension".into()));
        }
        let dim_y = y_support[0].len();
        if y_support.iter().any(|y| y.len() != dim_y) {
            return Err(Error::Domain("y support points differ in dimension".into()));
        }
        let mut total = 0.0;
        for (i, row) in prob.iter().enumerate() {
            if row.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                return Err(Error::Domain(format!("row {i} has an invalid probability")));
            }
            let marginal: f64 = row.iter().sum();
            if marginal <= 0.0 {
                return Err(Error::ZeroMarginal { y_index: i });
            }
            total += marginal;
        }
        if (total - 1.0).abs() > TOTAL_TOL {
            return Err(Error::Domain(format!("joint sums to {total}, not 1")));
        }
        Ok(Self {
            y_support,
            x_support,
            prob,
        })
    }

    /// Normalizes a table of nonnegative weights into a joint.
    pub fn from_weights(
        y_support: Vec<Vec<f64>>,
        x_support: Vec<Vec<f64>>,
        weights: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let total: f64 = weights.iter().flatten().sum();
        if !(total > 0.0) {
            return Err(Error::Domain("weights sum to zero".into()));
        }
        let prob = weights
            .into_iter()
            .map(|r| r.into_iter().map(|w| w / total).collect())
            .collect();
        Self::new(y_support, x_support, prob)
    }

    /// Random joint with scalar supports `y_i = i`, `x_j` uniform in `[-2, 2]`
    /// and cell weights uniform in `(0.05, 1]`.
    pub fn random(n_y: usize, n_x: usize, dim_x: usize, rng: &mut Stream) -> Result<Self> {
        let y_support = (0..n_y).map(|i| vec![i as f64]).collect();
        let x_support = (0..n_x)
            .map(|_| (0..dim_x).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let weights = (0..n_y)
            .map(|_| (0..n_x).map(|_| rng.random_range(0.05..1.0)).collect())
            .collect();
        Self::from_weights(y_support, x_support, weights)
    }

    pub fn n_y(&self) -> usize {
        self.y_support.len()
    }

    pub fn n_x(&self) -> usize {
        self.x_support.len()
    }

    pub fn y_support(&self) -> &[Vec<f64>] {
        &self.y_support
    }

    pub fn x_support(&self) -> &[Vec<f64>] {
        &self.x_support
    }

    pub fn prob(&self, i: usize, j: usize) -> f64 {
        self.prob[i][j]
    }

    pub fn table(&self) -> &[Vec<f64>] {
        &self.prob
    }

    pub fn marginal_y(&self, i: usize) -> f64 {
        self.prob[i].iter().sum()
    }

    /// `p(x | y_i)` over the x support.
    pub fn conditional(&self, y_index: usize) -> Result<SimplexVec> {
        let row = self
            .prob
            .get(y_index)
            .ok_or_else(|| Error::Domain(format!("y index {y_index} out of range")))?;
        let marginal: f64 = row.iter().sum();
        if marginal <= 0.0 {
            return Err(Error::ZeroMarginal { y_index });
        }
        SimplexVec::new(row.iter().map(|p| p / marginal).collect())
    }

    /// Draws `n` `(y_index, x_index)` pairs by inverse-CDF over the flattened
    /// table.
    pub fn sample(&self, rng: &mut Stream, n: usize) -> Vec<(usize, usize)> {
        let nx = self.n_x();
        let mut cumulative = Vec::with_capacity(self.n_y() * nx);
        let mut acc = 0.0;
        for p in self.prob.iter().flatten() {
            acc += p;
            cumulative.push(acc);
        }
        let flat: Vec<f64> = self.prob.iter().flatten().copied().collect();
        let last_positive = flat.iter().rposition(|p| *p > 0.0).unwrap_or(0);
        (0..n)
            .map(|_| {
                let u: f64 = rng.random::<f64>() * acc;
                let cell = cumulative
                    .partition_point(|c| *c <= u)
                    .min(last_positive);
                (cell / nx, cell % nx)
            })
            .collect()
    }
}
