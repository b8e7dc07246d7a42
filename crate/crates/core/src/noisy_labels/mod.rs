//! Label-noise models, the distribution `q_y` they induce, and the
//! closeness metrics between a trained classifier and `q_y`.

mod dataset;
mod experiment;
mod qy;

pub use dataset::{
    build_noisy_dataset, calibrate_alpha_from_generated, ce_bar_f, ce_bar_q, reference_outputs,
    theory_accuracy, LabeledSet, NoisyDataset, NoisyItem,
};
pub use experiment::{
    run_noisy_label_experiment, table_model_check, NoisyLabelConfig, NoisyLabelReport, NoisyLabelRow,
    SweepEntry, TableCheckConfig, TableCheckRow, CSV_HEADER,
};
pub use qy::{qy_biased, qy_generated, qy_uniform, NoiseKind, NoiseSpec};
