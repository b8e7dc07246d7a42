use serde::{Deserialize, Serialize};

use super::identity::score_label;
use crate::distributions::{make_noise2noise_pairs, GaussianMixture};
use crate::error::{Error, Result};
use crate::models::{predict, train_supervised, AnyModel, Dataset, Head, ModelSpec, TrainConfig, TrainRecord};
use crate::numerics::Tensor;
use crate::risk::LossFn;
use crate::rng::Seeder;
use crate::uncertainty::nmse;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreRegressionConfig {
    pub noise_var: f64,
    pub n_samples: usize,
    pub model: ModelSpec,
    pub train: TrainConfig,
}

/// Regresses a model onto `∇_y log p(y|x) = (x − y)/σ²` over pairs
/// `x ~ prior`, `y = x + N(0, σ²I)`. The minimizer is the noisy-marginal
/// score `∇_y log p(y)`.
pub fn score_regression_train(
    prior: &GaussianMixture,
    cfg: &ScoreRegressionConfig,
    seeder: &Seeder,
) -> Result<(AnyModel, TrainRecord)> {
    if !(cfg.noise_var > 0.0) {
        return Err(Error::Domain("noise variance must be > 0".into()));
    }
    if cfg.train.loss != LossFn::L2 {
        return Err(Error::Config("score regression uses the L2 loss".into()));
    }
    let d = prior.dim();
    if d > 2 {
        return Err(Error::Unsupported("score regression is for 1-D or 2-D inputs".into()));
    }
    let pairs = make_noise2noise_pairs(|r| prior.sample(r), cfg.noise_var.sqrt(), 0.0, seeder, cfg.n_samples)?;
    let inputs: Vec<Vec<f64>> = pairs.iter().map(|p| p.input.clone()).collect();
    let labels: Vec<Vec<f64>> = pairs
        .iter()
        .map(|p| score_label(&p.clean, &p.input, cfg.noise_var))
        .collect();
    let data = Dataset::from_rows(&inputs, &labels)?;
    let init = cfg.model.build(d, d, Head::Identity, &mut seeder.stream("score.init", 0))?;
    train_supervised(init, &data, &cfg.train)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreGridRow {
    pub y: f64,
    pub model_score: f64,
    pub exact_score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreEvaluation {
    /// The 5th and 95th percentiles of the noisy marginal.
    pub lower: f64,
    pub upper: f64,
    pub nmse: f64,
    pub grid: Vec<ScoreGridRow>,
}

/// NMSE of a scalar score model against the analytic noisy-marginal score
/// on `n` equispaced points between the 5th and 95th percentiles of `p(y)`.
pub fn evaluate_score_model(model: &AnyModel, prior: &GaussianMixture, noise_var: f64, n: usize) -> Result<ScoreEvaluation> {
    if prior.dim() != 1 {
        return Err(Error::Unsupported("score evaluation needs a scalar prior".into()));
    }
    if n < 2 {
        return Err(Error::Domain("need at least two grid points".into()));
    }
    let marginal = prior.widened(noise_var);
    let lower = marginal.quantile_1d(0.05);
    let upper = marginal.quantile_1d(0.95);
    let ys: Vec<f64> = (0..n)
        .map(|i| lower + (upper - lower) * i as f64 / (n - 1) as f64)
        .collect();
    let pred = predict(model, &Tensor::new(vec![n, 1], ys.clone())?)?.into_data();
    let exact: Vec<f64> = ys.iter().map(|y| marginal.score(&[*y])[0]).collect();
    Ok(ScoreEvaluation {
        lower,
        upper,
        nmse: nmse(&pred, &exact)?,
        grid: ys
            .iter()
            .zip(pred.iter().zip(&exact))
            .map(|(y, (m, e))| ScoreGridRow {
                y: *y,
                model_score: *m,
                exact_score: *e,
            })
            .collect(),
    })
}
