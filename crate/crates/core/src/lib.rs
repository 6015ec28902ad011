//! Zero-shot detection of machine-generated text from the shift in
//! perplexity between a document and a sentence-shuffled copy of it.

pub mod evaluation;
pub mod features;
pub mod inference;
pub mod par;
pub mod repository;
pub mod scoring;
pub mod segment;
pub mod shuffle;
pub mod stats;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Origin of a document: machine-generated or human-written.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Class {
    #[serde(rename = "MGT")]
    Mgt,
    #[serde(rename = "HGT")]
    Hgt,
}

impl Class {
    pub const ALL: [Class; 2] = [Class::Mgt, Class::Hgt];

    pub fn name(self) -> &'static str {
        match self {
            Class::Mgt => "MGT",
            Class::Hgt => "HGT",
        }
    }

    pub fn other(self) -> Class {
        match self {
            Class::Mgt => Class::Hgt,
            Class::Hgt => Class::Mgt,
        }
    }
}

impl fmt::Display for Class {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Class {
    type Err = String;

    /// Accepts `MGT`/`HGT` in any case, plus common label spellings.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mgt" | "machine" | "ai" | "generated" | "1" => Ok(Class::Mgt),
            "hgt" | "human" | "0" => Ok(Class::Hgt),
            other => Err(format!("unknown class label `{other}`")),
        }
    }
}

/// Any failure surfaced by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Segment(#[from] segment::SegmentError),
    #[error(transparent)]
    Pair(#[from] features::PairError),
    #[error(transparent)]
    Stat(#[from] stats::StatError),
    #[error(transparent)]
    Scoring(#[from] scoring::ScoringError),
    #[error(transparent)]
    Repository(#[from] repository::RepoError),
    #[error(transparent)]
    Inference(#[from] inference::InferenceError),
    #[error(transparent)]
    Evaluation(#[from] evaluation::EvalError),
}
