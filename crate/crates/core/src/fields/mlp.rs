//! Feed-forward network with reverse-mode gradients.
//!
//! `y = s_out · a_L(W_L · … a_1(W_1 · ((x − shift) ⊙ scale) + b_1) … + b_L)`
//!
//! Weights are stored as `out × in` matrices. Hidden and output activations
//! are softplus by default, so `y ≥ 0` without clamping.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::fields::{DistanceField, FieldKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Softplus,
    Linear,
}

pub fn softplus(z: f64) -> f64 {
    if z > 30.0 {
        z
    } else {
        z.exp().ln_1p()
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `softplus⁻¹(y) = ln(eʸ − 1)`.
pub fn softplus_inv(y: f64) -> f64 {
    y.exp_m1().ln()
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Softplus => softplus(z),
            Activation::Linear => z,
        }
    }

    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Softplus => sigmoid(z),
            Activation::Linear => 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
    pub activation: Activation,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Layer>,
    pub input_shift: DVector<f64>,
    pub input_scale: DVector<f64>,
    pub output_scale: f64,
}

/// Gradients with respect to every parameter, shaped like the network.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpGrad {
    pub weights: Vec<DMatrix<f64>>,
    pub bias: Vec<DVector<f64>>,
}

impl MlpGrad {
    pub fn zeros_like(net: &Mlp) -> Self {
        MlpGrad {
            weights: net.layers.iter().map(|l| DMatrix::zeros(l.weights.nrows(), l.weights.ncols())).collect(),
            bias: net.layers.iter().map(|l| DVector::zeros(l.bias.len())).collect(),
        }
    }
}

/// Forward pass over a batch, keeping pre-activations for the backward pass.
pub struct Tape {
    input: DMatrix<f64>,
    pre: Vec<DMatrix<f64>>,
    post: Vec<DMatrix<f64>>,
}

impl Mlp {
    /// Glorot-uniform weights, zero hidden biases and an output bias of
    /// `softplus⁻¹(1)`, so a fresh network outputs about `output_scale`.
    pub fn glorot(widths: &[usize], rng: &mut impl Rng) -> Result<Self> {
        if widths.len() < 2 || widths.iter().any(|w| *w == 0) || *widths.last().unwrap() != 1 {
            return Err(Error::Config(format!("invalid widths {widths:?}")));
        }
        let n = widths.len() - 1;
        let layers = (0..n)
            .map(|l| {
                let (fan_in, fan_out) = (widths[l], widths[l + 1]);
                let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let weights = DMatrix::from_fn(fan_out, fan_in, |_, _| rng.random_range(-bound..bound));
                let bias = if l + 1 == n {
                    DVector::from_element(fan_out, softplus_inv(1.0))
                } else {
                    DVector::zeros(fan_out)
                };
                Layer { weights, bias, activation: Activation::Softplus }
            })
            .collect();
        Ok(Mlp {
            layers,
            input_shift: DVector::zeros(widths[0]),
            input_scale: DVector::from_element(widths[0], 1.0),
            output_scale: 1.0,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.ncols()
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_dim()];
        w.extend(self.layers.iter().map(|l| l.weights.nrows()));
        w
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Format("network has no layers".into()));
        }
        let d = self.input_dim();
        check_len(d, self.input_shift.len())?;
        check_len(d, self.input_scale.len())?;
        for w in self.layers.windows(2) {
            check_len(w[0].weights.nrows(), w[1].weights.ncols())?;
        }
        for l in &self.layers {
            check_len(l.weights.nrows(), l.bias.len())?;
        }
        check_len(1, self.layers.last().unwrap().weights.nrows())?;
        let finite = self.layers.iter().all(|l| l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
            && self.output_scale.is_finite();
        if !finite {
            return Err(Error::Format("non-finite network parameters".into()));
        }
        Ok(())
    }

    fn normalize(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut z = x.clone();
        for (i, mut row) in z.row_iter_mut().enumerate() {
            let (s, c) = (self.input_shift[i], self.input_scale[i]);
            for v in row.iter_mut() {
                *v = (*v - s) * c;
            }
        }
        z
    }

    /// Batch forward; columns of `x` are samples.
    pub fn forward_batch(&self, x: &DMatrix<f64>) -> Result<Tape> {
        check_len(self.input_dim(), x.nrows())?;
        let input = self.normalize(x);
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post: Vec<DMatrix<f64>> = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            let h = post.last().unwrap_or(&input);
            let mut z = &l.weights * h;
            for mut col in z.column_iter_mut() {
                col += &l.bias;
            }
            let a = z.map(|v| l.activation.apply(v));
            pre.push(z);
            post.push(a);
        }
        Ok(Tape { input, pre, post })
    }

    pub fn outputs(&self, tape: &Tape) -> Vec<f64> {
        tape.post.last().unwrap().iter().map(|v| v * self.output_scale).collect()
    }

    /// Backward pass for upstream `∂L/∂y` per sample. Returns parameter
    /// gradients (summed over the batch) and, if requested, `∂L/∂x`.
    pub fn backward_batch(&self, tape: &Tape, upstream: &[f64], want_input: bool) -> (MlpGrad, Option<DMatrix<f64>>) {
        let n = self.layers.len();
        let batch = upstream.len();
        let mut delta = DMatrix::from_fn(1, batch, |_, j| upstream[j] * self.output_scale);
        let mut grad = MlpGrad::zeros_like(self);
        for l in (0..n).rev() {
            let layer = &self.layers[l];
            delta.zip_apply(&tape.pre[l], |d, z| *d *= layer.activation.derivative(z));
            let h = if l == 0 { &tape.input } else { &tape.post[l - 1] };
            grad.weights[l] = &delta * h.transpose();
            grad.bias[l] = delta.column_sum();
            if l > 0 || want_input {
                delta = layer.weights.transpose() * &delta;
            }
        }
        let input_grad = want_input.then(|| {
            let mut g = delta;
            for (i, mut row) in g.row_iter_mut().enumerate() {
                row *= self.input_scale[i];
            }
            g
        });
        (grad, input_grad)
    }

    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        let tape = self.forward_batch(&DMatrix::from_column_slice(x.len(), 1, x))?;
        Ok(self.outputs(&tape)[0])
    }

    pub fn grad_input(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let tape = self.forward_batch(&DMatrix::from_column_slice(x.len(), 1, x))?;
        let y = self.outputs(&tape)[0];
        let (_, g) = self.backward_batch(&tape, &[1.0], true);
        Ok((y, g.expect("requested").as_slice().to_vec()))
    }

    pub fn grad_weights(&self, x: &[f64], upstream: f64) -> Result<MlpGrad> {
        let tape = self.forward_batch(&DMatrix::from_column_slice(x.len(), 1, x))?;
        Ok(self.backward_batch(&tape, &[upstream], false).0)
    }
}

/// A network used as a distance field of a given kind.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpField {
    pub kind: FieldKind,
    pub joints: usize,
    pub net: Mlp,
}

impl MlpField {
    pub fn new(kind: FieldKind, joints: usize, net: Mlp) -> Result<Self> {
        net.validate()?;
        check_len(kind.input_dim(joints), net.input_dim())?;
        Ok(MlpField { kind, joints, net })
    }
}

impl DistanceField for MlpField {
    fn kind(&self) -> FieldKind {
        self.kind
    }

    fn joints(&self) -> usize {
        self.joints
    }

    fn eval(&self, x: &[f64]) -> Result<f64> {
        self.net.forward(x)
    }

    fn eval_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.net.grad_input(x)
    }
}
