//! Single frequency filtering (SFF) speech analysis.
//!
//! The crate covers the whole path from audio files to severity
//! classification reports:
//!
//! * [`audio`] reads PCM WAV files and corpus manifests.
//! * [`transforms`] holds the FFT, DCT-II, windows, STFT and mel filterbanks.
//! * [`sff`] computes per-frequency amplitude envelopes with a single-pole
//!   filter placed near the Nyquist frequency.
//! * [`features`] derives SFFCC, MFCC-SFF and baseline MFCC features.
//! * [`classifier`] trains linear SVMs (SMO dual solver) with one-vs-one voting.
//! * [`metrics`] computes confusion matrices, UAR and class-wise scores.
//! * [`harness`] runs leave-one-speaker-out experiments end to end.
//! * [`synth`] generates synthetic corpora for smoke tests.

// Negated comparisons deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod audio;
pub mod classifier;
pub mod error;
pub mod features;
pub mod harness;
pub mod metrics;
pub mod sff;
pub mod synth;
pub mod transforms;

pub use audio::{CorpusManifest, ManifestEntry, SeverityClass, SignalBuffer, SpeakingTask};
pub use classifier::{BinarySvmModel, Dataset, OvoModel, Sample, Standardizer};
pub use error::{Error, Result};
pub use features::{FeatureConfig, FeatureKind, FeatureMatrix, FeatureVector};
pub use harness::{ExperimentConfig, FoldReport, TaskFilter};
pub use metrics::{ConfusionMatrix, ExperimentReport, MetricReport};
pub use sff::{SffConfig, SffDecomposition};
pub use transforms::{MelFilterbank, Spectrogram, SpectrogramOrigin};
