//! Non-neural machinery for pipeline speech translation.
//!
//! - [`audio`]: WAV I/O, speed and noise perturbation, energy VAD, splicing
//! - [`textnorm`]: written-to-spoken normalization
//! - [`augment`]: simulated ASR errors for MT training sources
//! - [`segmenter`]: sentence re-segmentation of unpunctuated token streams
//! - [`corpusops`]: bitext filters and an EM word-translation lexicon
//! - [`metrics`]: WER, corpus BLEU and realigned speech translation scoring
//! - [`fusion`]: n-best merging, log-linear rescoring and weight tuning

pub mod audio;
pub mod augment;
pub mod corpusops;
pub mod fusion;
pub mod metrics;
pub mod seed;
pub mod segmenter;
pub mod textnorm;

pub use audio::{AudioError, AudioSignal, Fragment};
pub use augment::{AugmentError, CorruptionConfig, HomophoneTable};
pub use corpusops::{CorpusError, LexiconModel, SentencePair};
pub use fusion::{
    FusionError, Hypothesis, MissingScorePolicy, NBestList, WeightGrid, WeightVector,
};
pub use metrics::{EditCounts, MetricsError, ScoreReport, SegmentedText};
pub use segmenter::{BoundaryExample, BoundaryModel, SegmenterError};
pub use textnorm::{SpokenText, TextNormError};
