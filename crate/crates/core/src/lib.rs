//! Directional-embedding segmentation of bird vocalizations.
//!
//! The pipeline turns a recording into per-frame bird/background decisions in
//! two passes. Pass one projects unit-normalized spectrogram super-frames onto
//! a dictionary of directions learned with a mixture of von Mises-Fisher
//! distributions, then auto-labels the frames whose embedding changes least
//! (background) and most (vocalization) as measured by mutual information
//! between consecutive embedding columns. Pass two trains a per-recording SVM
//! on those auto-labels and classifies every frame.
//!
//! Modules follow the data path: [`audio`] -> [`spectral`] -> [`movmf`] ->
//! [`embedding`] -> [`labeling`] -> [`classifier`] -> [`pipeline`], with
//! [`evalkit`] providing ground-truth handling and scoring.

pub mod audio;
pub mod classifier;
pub mod embedding;
pub mod evalkit;
pub mod labeling;
pub mod movmf;
pub mod pipeline;
pub mod spectral;
pub mod types;

pub use types::FrameLabel;

/// Default RNG seed used by every seeded operation when none is given.
pub const DEFAULT_SEED: u64 = 42;
