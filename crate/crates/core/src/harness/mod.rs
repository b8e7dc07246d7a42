//! Data ingestion, experiment configs, result records and replay.

mod config;
mod data;
mod experiments;
mod record;
mod tensor_file;

pub use config::{
    DataSpec, DiscreteOracleConfig, ExperimentConfig, ExperimentKind, GapConfig, Noise2NoiseSection,
    NoisyLabelsSection, ScoreSection, Theorem1Config, TweedieConfig,
};
pub use data::{blob_center, load_idx, load_idx_pair, parse_idx, synth_blobs};
pub use experiments::{
    execute, replay, run_and_record, Artifact, Execution, ExperimentOutput, GapSummary, Theorem1Report,
    TweedieReport, RECORDS_FILE,
};
pub use record::{parse_records, read_records, write_record, ExperimentRecord, SCHEMA_VERSION};
pub use tensor_file::{decode_tensor, encode_tensor, read_tensors, write_tensors};
