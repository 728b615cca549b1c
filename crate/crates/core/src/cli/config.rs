//! Run configuration file (JSON):
//!
//! ```json
//! { "version": 1, "seed": 7,
//!   "gen_data": {..}, "train": {..}, "project": {..}, "rollout": {..},
//!   "denoise": {..}, "fit": {..}, "inbetween": {..}, "generate": {..} }
//! ```
//!
//! Every block is optional and every key inside a block has a default;
//! unknown keys are rejected. `--seed` replaces `seed`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::datagen::{NegativeConfig, SynthMotionSpec};
use crate::dynamics::{IntegratorConfig, ProjectionConfig};
use crate::error::{Error, Result};
use crate::fields::{FieldKind, TrainConfig};
use crate::optim::{FitConfig, GenerateConfig};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub gen_data: GenDataConfig,
    #[serde(default)]
    pub train: TrainCmdConfig,
    #[serde(default)]
    pub project: ProjectionConfig,
    #[serde(default)]
    pub rollout: IntegratorConfig,
    #[serde(default)]
    pub denoise: DenoiseConfig,
    #[serde(default)]
    pub fit: FitConfig,
    #[serde(default)]
    pub inbetween: InbetweenConfig,
    #[serde(default)]
    pub generate: GenerateConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            version: CONFIG_VERSION,
            seed: 0,
            gen_data: GenDataConfig::default(),
            train: TrainCmdConfig::default(),
            project: ProjectionConfig::default(),
            rollout: IntegratorConfig::default(),
            denoise: DenoiseConfig::default(),
            fit: FitConfig::default(),
            inbetween: InbetweenConfig::default(),
            generate: GenerateConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        let v: serde_json::Value = serde_json::from_str(s)?;
        match v.get("version").and_then(|v| v.as_u64()) {
            Some(n) if n == CONFIG_VERSION as u64 => {}
            Some(n) => return Err(Error::Config(format!("unsupported config version {n}"))),
            None => return Err(Error::Config("config lacks a numeric \"version\"".into())),
        }
        Ok(serde_json::from_value(v)?)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenDataConfig {
    #[serde(default = "default_joints")]
    pub joints: usize,
    #[serde(default = "default_sequences")]
    pub sequences: usize,
    #[serde(default = "default_gen_frames")]
    pub frames: usize,
    /// Full generator spec; replaces the toy spec built from `joints` and
    /// `frames` when present.
    #[serde(default)]
    pub spec: Option<SynthMotionSpec>,
    /// Labeled samples per field drawn around the training corpus.
    #[serde(default)]
    pub negatives: NegativeConfig,
    /// Labeled samples per field drawn around the held-out corpus.
    #[serde(default = "default_heldout_samples")]
    pub heldout_samples: usize,
    /// Frames of the evaluation motion written next to the corpora.
    #[serde(default = "default_eval_frames")]
    pub eval_frames: usize,
}

fn default_joints() -> usize {
    5
}
fn default_sequences() -> usize {
    100
}
fn default_gen_frames() -> usize {
    90
}
fn default_heldout_samples() -> usize {
    1000
}
fn default_eval_frames() -> usize {
    60
}

impl Default for GenDataConfig {
    fn default() -> Self {
        GenDataConfig {
            joints: default_joints(),
            sequences: default_sequences(),
            frames: default_gen_frames(),
            spec: None,
            negatives: NegativeConfig::default(),
            heldout_samples: default_heldout_samples(),
            eval_frames: default_eval_frames(),
        }
    }
}

impl GenDataConfig {
    pub fn spec(&self, seed: u64) -> SynthMotionSpec {
        match &self.spec {
            Some(s) => SynthMotionSpec { seed, ..s.clone() },
            None => SynthMotionSpec { frames: self.frames, ..SynthMotionSpec::toy(self.joints, seed) },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainCmdConfig {
    #[serde(default = "all_kinds")]
    pub kinds: Vec<FieldKind>,
    #[serde(default)]
    pub network: TrainConfig,
}

fn all_kinds() -> Vec<FieldKind> {
    FieldKind::ALL.to_vec()
}

impl Default for TrainCmdConfig {
    fn default() -> Self {
        TrainCmdConfig { kinds: all_kinds(), network: TrainConfig::default() }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    /// Start from the input motion.
    #[default]
    Input,
    /// Identity poses with the root following the observed root joint.
    Identity,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DenoiseConfig {
    /// Gaussian noise (meters, per coordinate) added to the input joints
    /// before fitting.
    #[serde(default)]
    pub noise: f64,
    #[serde(default)]
    pub init: Init,
    #[serde(default)]
    pub fit: FitConfig,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum Keyframes {
    /// First and last frame.
    #[default]
    Endpoints,
    /// Every `stride`-th frame plus the last.
    Every { stride: usize },
    Frames { frames: Vec<usize> },
}

impl Keyframes {
    pub fn mask(&self, n: usize) -> Result<Vec<bool>> {
        let mut m = vec![false; n];
        if n == 0 {
            return Ok(m);
        }
        match self {
            Keyframes::Endpoints => {
                m[0] = true;
                m[n - 1] = true;
            }
            Keyframes::Every { stride } => {
                if *stride == 0 {
                    return Err(Error::Config("keyframe stride must be positive".into()));
                }
                for t in (0..n).step_by(*stride) {
                    m[t] = true;
                }
                m[n - 1] = true;
            }
            Keyframes::Frames { frames } => {
                for &t in frames {
                    if t >= n {
                        return Err(Error::Config(format!("keyframe {t} outside {n} frames")));
                    }
                    m[t] = true;
                }
            }
        }
        Ok(m)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InbetweenConfig {
    #[serde(default)]
    pub keyframes: Keyframes,
    #[serde(default)]
    pub fit: FitConfig,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_takes_defaults() {
        let c = RunConfig::from_json(r#"{"version": 1}"#).unwrap();
        assert_eq!(c, RunConfig::default());
        let back = RunConfig::from_json(&c.to_json().unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn rejects_unknown_keys_and_versions() {
        assert!(RunConfig::from_json(r#"{"version": 1, "sede": 3}"#).is_err());
        assert!(RunConfig::from_json(r#"{"version": 1, "fit": {"stage3_iterations": 3}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"version": 2}"#).is_err());
        assert!(RunConfig::from_json(r#"{"seed": 2}"#).is_err());
    }

    #[test]
    fn nested_blocks_parse() {
        let c = RunConfig::from_json(
            r#"{"version": 1, "seed": 4,
                "train": {"kinds": ["pose"], "network": {"hidden": [8], "epochs": 2}},
                "inbetween": {"keyframes": {"mode": "every", "stride": 4}},
                "fit": {"weights": {"smooth": 0.5}}}"#,
        )
        .unwrap();
        assert_eq!(c.seed, 4);
        assert_eq!(c.train.kinds, vec![FieldKind::Pose]);
        assert_eq!(c.train.network.hidden, vec![8]);
        assert_eq!(c.fit.weights.smooth, 0.5);
        assert_eq!(c.inbetween.keyframes.mask(10).unwrap().iter().filter(|b| **b).count(), 4);
    }

    #[test]
    fn keyframe_masks() {
        assert_eq!(Keyframes::Endpoints.mask(4).unwrap(), vec![true, false, false, true]);
        assert_eq!(Keyframes::Every { stride: 2 }.mask(4).unwrap(), vec![true, false, true, true]);
        assert!(Keyframes::Every { stride: 0 }.mask(4).is_err());
        assert!(Keyframes::Frames { frames: vec![9] }.mask(4).is_err());
    }
}
