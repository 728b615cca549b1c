//! Model file (JSON):
//!
//! ```json
//! { "format": "motionfield-model", "version": 1, "kind": "velocity", "joints": 5,
//!   "widths": [35, 256, 256, 128, 1], "activations": ["softplus", ...],
//!   "encoding": "axial-flat", "conditioning": "pose",
//!   "input_shift": [...], "input_scale": [...], "output_scale": 0.8,
//!   "layers": [ {"weights": [row-major], "bias": [...]}, ... ] }
//! ```

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::fields::mlp::{Activation, Layer, Mlp, MlpField};
use crate::fields::FieldKind;

const MODEL_FORMAT: &str = "motionfield-model";
const MODEL_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerRaw {
    weights: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelRaw {
    format: String,
    version: u32,
    kind: FieldKind,
    joints: usize,
    widths: Vec<usize>,
    activations: Vec<Activation>,
    encoding: String,
    conditioning: String,
    input_shift: Vec<f64>,
    input_scale: Vec<f64>,
    output_scale: f64,
    layers: Vec<LayerRaw>,
}

impl MlpField {
    pub fn to_json(&self) -> Result<String> {
        let net = &self.net;
        let raw = ModelRaw {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            kind: self.kind,
            joints: self.joints,
            widths: net.widths(),
            activations: net.layers.iter().map(|l| l.activation).collect(),
            encoding: self.kind.encoding_tag().into(),
            conditioning: self.kind.conditioning_tag().into(),
            input_shift: net.input_shift.as_slice().to_vec(),
            input_scale: net.input_scale.as_slice().to_vec(),
            output_scale: net.output_scale,
            layers: net
                .layers
                .iter()
                .map(|l| LayerRaw {
                    // nalgebra is column-major; transpose to write rows
                    weights: l.weights.transpose().as_slice().to_vec(),
                    bias: l.bias.as_slice().to_vec(),
                })
                .collect(),
        };
        Ok(serde_json::to_string(&raw)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let raw: ModelRaw = serde_json::from_str(s)?;
        if raw.format != MODEL_FORMAT || raw.version != MODEL_VERSION {
            return Err(Error::Format(format!("unsupported model {} v{}", raw.format, raw.version)));
        }
        if raw.encoding != raw.kind.encoding_tag() || raw.conditioning != raw.kind.conditioning_tag() {
            return Err(Error::Format(format!(
                "encoding {:?}/{:?} does not match a {} field",
                raw.encoding, raw.conditioning, raw.kind
            )));
        }
        let n = raw.layers.len();
        check_len(n + 1, raw.widths.len())?;
        check_len(n, raw.activations.len())?;
        let layers = raw
            .layers
            .into_iter()
            .enumerate()
            .map(|(l, lr)| {
                let (rows, cols) = (raw.widths[l + 1], raw.widths[l]);
                check_len(rows * cols, lr.weights.len())?;
                check_len(rows, lr.bias.len())?;
                Ok(Layer {
                    weights: DMatrix::from_row_slice(rows, cols, &lr.weights),
                    bias: DVector::from_vec(lr.bias),
                    activation: raw.activations[l],
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let net = Mlp {
            layers,
            input_shift: DVector::from_vec(raw.input_shift),
            input_scale: DVector::from_vec(raw.input_scale),
            output_scale: raw.output_scale,
        };
        MlpField::new(raw.kind, raw.joints, net)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
