//! Exactly computable probability models used as ground truth.

mod joint;
mod linear;
mod mixture;
mod noise_pair;

pub use joint::DiscreteJoint;
pub use linear::{GaussianLinearModel, GaussianSampler, Posterior, PINV_TOL};
pub use mixture::{normal_cdf, GaussianMixture, MixtureComponent};
pub use noise_pair::{make_noise2noise_pairs, NoisePair};
