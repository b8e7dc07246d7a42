//! Losses, the conditional risk `E_{x|y}[L(z, g(x, y))]` and its minimizer.

mod gap;
mod label;
mod loss;
mod zstar;

pub use gap::{random_probes, theorem2_gap_check, GapReport};
pub use label::{LabelMap, MeanFunction};
pub use loss::{
    loss_hypothesis_probe, probe_builtin, Counterexample, HypothesisReport, HypothesisSide, LossFn,
    LossValue, ProbeDomain,
};
pub use zstar::{conditional_risk, zstar_bruteforce, zstar_closed_form, GridSpec};
