//! Synthetic motion corpora, nearest-neighbor distance labels and negative
//! sampling for field training.

pub mod negatives;
pub mod nn;
pub mod synth;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use negatives::{sample_negatives, sample_negatives_from, Category, LabeledSample, LabeledSet, NegativeConfig};
pub use nn::{MetricWeights, NnIndex, SearchMode};
pub use synth::{synth_corpus, synth_sequence, CorpusMeta, JointMotion, MotionCorpus, SynthMotionSpec};

use crate::error::{Error, Result};
use crate::kinematics::io::{sequence_from_value, sequence_to_value};
use crate::kinematics::MotionFile;

const CORPUS_FORMAT: &str = "motionfield-corpus";
const CORPUS_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CorpusRaw {
    format: String,
    version: u32,
    meta: CorpusMeta,
    sequences: Vec<serde_json::Value>,
}

impl MotionCorpus {
    /// Corpus file: a header plus one motion object per sequence.
    pub fn to_json(&self) -> Result<String> {
        let raw = CorpusRaw {
            format: CORPUS_FORMAT.into(),
            version: CORPUS_VERSION,
            meta: self.meta.clone(),
            sequences: self
                .sequences
                .iter()
                .map(|s| sequence_to_value(&MotionFile { sequence: s.clone(), skeleton: None }))
                .collect(),
        };
        Ok(serde_json::to_string(&raw)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let raw: CorpusRaw = serde_json::from_str(s)?;
        if raw.format != CORPUS_FORMAT || raw.version != CORPUS_VERSION {
            return Err(Error::Format(format!("unsupported corpus {} v{}", raw.format, raw.version)));
        }
        let sequences = raw
            .sequences
            .into_iter()
            .map(|v| sequence_from_value(v).map(|m| m.sequence))
            .collect::<Result<Vec<_>>>()?;
        if sequences.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let k = sequences[0].joints();
        for s in &sequences {
            crate::error::check_len(k, s.joints())?;
        }
        Ok(MotionCorpus::from_sequences(sequences, raw.meta))
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
