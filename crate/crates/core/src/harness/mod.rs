//! Experiment plumbing: configuration, corpora, the training loop, SNR
//! sweeps and CSV output.

pub mod config;
pub mod eval;
pub mod manifest;
pub mod stats;
pub mod synth;
pub mod train;

use std::path::PathBuf;

pub use config::{parse_channels, parse_snr_grid, EvalConfig, ExperimentConfig, TrainConfig};
pub use eval::{evaluate, evaluate_baseline, write_csv, ResultRow, CSV_HEADER};
pub use manifest::{load_dataset, load_manifest, Dataset, Manifest, Record, Utterance};
pub use synth::synth_corpus;
pub use train::{train, EpochStats, TrainOutcome};

use crate::classic::ClassicError;
use crate::dsp::DspError;
use crate::model::ModelError;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("{path}: {detail}")]
    Io { path: PathBuf, detail: String },
    #[error("config: {0}")]
    Config(String),
    #[error("{path}:{line}: {detail}")]
    Manifest {
        path: PathBuf,
        line: usize,
        detail: String,
    },
    #[error("{0}: manifest has no records")]
    EmptyManifest(PathBuf),
    #[error("no usable utterances ({skipped} skipped as too short for their transcripts)")]
    EmptyDataset { skipped: usize },
    #[error("{0}")]
    Audio(#[from] DspError),
    #[error("{0}")]
    Model(ModelError),
    #[error("{0}")]
    Classic(#[from] ClassicError),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl From<ModelError> for HarnessError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Tensor(t) => HarnessError::Numerical(t.to_string()),
            ModelError::ZeroPower => HarnessError::Numerical(e.to_string()),
            other => HarnessError::Model(other),
        }
    }
}

impl HarnessError {
    /// 1 for bad input, 2 for numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Numerical(_) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;

pub(crate) fn io_error(path: impl Into<PathBuf>, e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Io {
        path: path.into(),
        detail: e.to_string(),
    }
}
