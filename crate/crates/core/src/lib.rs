//! Label-noise detection and human re-labeling loop.
//!
//! A labeled dataset is compared against model predictions; items where the
//! model disagrees with the current human label are flagged, queued for a
//! human to re-label (with both the model output and the previous human label
//! shown as references), and the decisions are merged into a new immutable
//! dataset version. The loop repeats until few items are flagged.
//!
//! Module map:
//!
//! - [`dataset`]: items, labels, versions, content hashing, on-disk formats.
//! - [`metrics`]: BLEU, token overlap, IoU, span P/R/F1, accuracy, AUC, similarity keys.
//! - [`detectors`]: per-task disagreement rules producing [`NoiseFlag`]s.
//! - [`baseline`]: hashed-feature linear models standing in for external models.
//! - [`review`]: the review queue, leases and decision resolution.
//! - [`loop_engine`]: the on-disk store and the round orchestration.
//! - [`sim`]: synthetic data, noise injection, simulated annotators, run reports.

pub mod baseline;
pub mod dataset;
pub mod detectors;
mod error;
mod hashing;
pub mod jsonl;
pub mod loop_engine;
pub mod metrics;
pub mod review;
pub mod sim;
pub mod tokenize;

pub use baseline::{LinearModel, TrainConfig};
pub use dataset::{
    BBox, DatasetVersion, Item, Label, LabelSource, Payload, Span, Split, TaskKind,
};
pub use detectors::{DetectorConfig, FlagAction, FlagReason, GenerationMode, NoiseFlag, Prediction};
pub use error::{Error, Result};
pub use loop_engine::{LoopState, RelabelLoop, RoundRecord, Store};
pub use metrics::{BleuConfig, Prf1, Smoothing};
pub use review::{Choice, ReviewDecision, ReviewMode, ReviewTask};

/// Version tag written into every record and manifest.
pub const FORMAT_VERSION: u32 = 1;
