//! Trainable function families and the supervised training loop.

mod arch;
mod dataset;
mod train;

pub use arch::{AnyModel, ConvNet, Head, MlpModel, Model, ModelSpec, TableModel, CONV_KERNEL};
pub use dataset::{one_hot, one_hot_rows, Dataset};
pub use train::{
    objective, predict, predict_class, select_checkpoint, train_supervised, Checkpoint, LrSchedule,
    TrainConfig, TrainRecord,
};
