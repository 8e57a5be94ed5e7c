//! Speech-based depression detection.
//!
//! The pipeline turns participant-only speech into fixed-length crops, maps
//! every crop to a min-max normalized log-spectrogram, scores crops with a
//! one-dimensional CNN whose filters span the whole frequency axis, and
//! aggregates crop scores into one decision per speaker. Several networks
//! that differ only in their random initialization can be fused with one of
//! three ensemble-averaging rules.
//!
//! Modules follow the pipeline order:
//!
//! - [`audio`]: WAV I/O, silence trimming and the synthetic corpus generator
//! - [`sampling`]: cropping and class/speaker-balanced sample selection
//! - [`features`]: STFT, log-magnitude, normalization and the feature cache
//! - [`network`]: forward/backward passes and the model file format
//! - [`trainer`]: Adadelta, learning-rate schedule and ensemble training
//! - [`ensemble`]: speaker-level aggregation and fusion methods 1, 2 and 3
//! - [`evaluation`]: metrics, speaker-disjoint folds and cross-validation
//! - [`cli`]: configuration and the command implementations behind the binary

pub mod audio;
pub mod cli;
pub mod ensemble;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod network;
pub mod rng;
pub mod sampling;
pub mod trainer;

pub use error::{Error, Result};

use serde::{Deserialize, Serialize};

/// Binary speaker/sample class. `Depressed` is the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Label {
    NonDepressed = 0,
    Depressed = 1,
}

impl Label {
    pub const BOTH: [Label; 2] = [Label::Depressed, Label::NonDepressed];

    pub fn as_u8(self) -> u8 {
        self as u8
    }

    pub fn from_u8(v: u8) -> Option<Label> {
        match v {
            0 => Some(Label::NonDepressed),
            1 => Some(Label::Depressed),
            _ => None,
        }
    }

    pub fn flipped(self) -> Label {
        match self {
            Label::NonDepressed => Label::Depressed,
            Label::Depressed => Label::NonDepressed,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Label::NonDepressed => "non_depressed",
            Label::Depressed => "depressed",
        }
    }
}

impl From<Label> for u8 {
    fn from(l: Label) -> u8 {
        l as u8
    }
}

impl TryFrom<u8> for Label {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, Self::Error> {
        Label::from_u8(v).ok_or_else(|| format!("label must be 0 or 1, got {v}"))
    }
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}
