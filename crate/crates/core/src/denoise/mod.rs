//! Posterior-mean identities for Gaussian corruption: Tweedie's formula,
//! Noise2Noise, and score estimation by regression.

mod identity;
mod n2n;
mod score;

pub use identity::{marginal_grid, score_identity_deviation, score_label, tweedie_mean, verify_score_identity};
pub use n2n::{
    discrete_noise2noise_oracle, noise2noise_equivalence_run, DenoiseTask, DenoiseTrainConfig, DiscreteOracleReport,
    DiscreteOracleRow, FiniteDist, GridRow, Noise2NoiseReport,
};
pub use score::{
    evaluate_score_model, score_regression_train, ScoreEvaluation, ScoreGridRow, ScoreRegressionConfig,
};
