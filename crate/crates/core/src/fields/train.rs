//! Supervised training of a field on labeled samples: mean L1 between the
//! prediction and the nearest-neighbor distance, minimized by minibatch SGD
//! with momentum.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datagen::LabeledSet;
use crate::error::{check_len, Error, Result};
use crate::fields::mlp::{Mlp, MlpField, MlpGrad};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    /// Learning rate at the last epoch as a fraction of the initial one;
    /// decays linearly.
    #[serde(default = "one")]
    pub final_lr_fraction: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_hidden() -> Vec<usize> {
    vec![256, 256, 128]
}
fn default_epochs() -> usize {
    100
}
fn default_batch() -> usize {
    32
}
fn default_lr() -> f64 {
    1e-3
}
fn default_momentum() -> f64 {
    0.9
}
fn one() -> f64 {
    1.0
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig::new(0)
    }
}

impl TrainConfig {
    pub fn new(seed: u64) -> Self {
        TrainConfig {
            hidden: default_hidden(),
            epochs: default_epochs(),
            batch_size: default_batch(),
            learning_rate: default_lr(),
            momentum: default_momentum(),
            final_lr_fraction: 1.0,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = self.epochs > 0
            && self.batch_size > 0
            && self.learning_rate > 0.0
            && (0.0..1.0).contains(&self.momentum)
            && self.final_lr_fraction > 0.0
            && self.hidden.iter().all(|w| *w > 0);
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid training configuration {self:?}")))
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub samples: usize,
    pub epochs: usize,
    /// Mean L1 loss per epoch, averaged over minibatches.
    pub epoch_loss: Vec<f64>,
    pub train_l1: f64,
    pub train_pearson: f64,
    pub heldout_l1: Option<f64>,
    pub heldout_pearson: Option<f64>,
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return 0.0;
    }
    sab / (saa * sbb).sqrt()
}

fn to_matrix(set: &LabeledSet, idx: &[usize]) -> DMatrix<f64> {
    let d = set.samples[0].encoding.len();
    let mut m = DMatrix::zeros(d, idx.len());
    for (c, &i) in idx.iter().enumerate() {
        m.set_column(c, &DVector::from_column_slice(&set.samples[i].encoding));
    }
    m
}

/// Predictions for every sample, in chunks.
pub fn predict(net: &Mlp, set: &LabeledSet) -> Result<Vec<f64>> {
    let idx: Vec<usize> = (0..set.len()).collect();
    let mut out = Vec::with_capacity(set.len());
    for chunk in idx.chunks(1024) {
        let tape = net.forward_batch(&to_matrix(set, chunk))?;
        out.extend(net.outputs(&tape));
    }
    Ok(out)
}

fn l1(pred: &[f64], labels: &[f64]) -> f64 {
    pred.iter().zip(labels).map(|(p, y)| (p - y).abs()).sum::<f64>() / pred.len() as f64
}

/// Per-coordinate mean and inverse standard deviation of the inputs.
fn input_normalization(set: &LabeledSet) -> (DVector<f64>, DVector<f64>) {
    let d = set.samples[0].encoding.len();
    let n = set.len() as f64;
    let mut mean = DVector::zeros(d);
    for s in &set.samples {
        mean += DVector::from_column_slice(&s.encoding);
    }
    mean /= n;
    let mut var = DVector::<f64>::zeros(d);
    for s in &set.samples {
        for (i, x) in s.encoding.iter().enumerate() {
            var[i] += (x - mean[i]) * (x - mean[i]);
        }
    }
    let scale = var.map(|v| {
        let sd = (v / n).sqrt();
        if sd > 1e-6 {
            1.0 / sd
        } else {
            1.0
        }
    });
    (mean, scale)
}

pub fn train_field(train: &LabeledSet, heldout: Option<&LabeledSet>, cfg: &TrainConfig) -> Result<(MlpField, TrainReport)> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let dim = train.kind.input_dim(train.joints);
    check_len(dim, train.samples[0].encoding.len())?;
    if let Some(h) = heldout {
        check_len(dim, h.kind.input_dim(h.joints))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut widths = vec![dim];
    widths.extend(&cfg.hidden);
    widths.push(1);
    let mut net = Mlp::glorot(&widths, &mut rng)?;
    let (shift, scale) = input_normalization(train);
    net.input_shift = shift;
    net.input_scale = scale;
    let labels = train.labels();
    let mean_label = labels.iter().sum::<f64>() / labels.len() as f64;
    net.output_scale = if mean_label > 1e-12 { mean_label } else { 1.0 };

    let mut velocity = MlpGrad::zeros_like(&net);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut epoch_loss = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let frac = if cfg.epochs > 1 { epoch as f64 / (cfg.epochs - 1) as f64 } else { 0.0 };
        let lr = cfg.learning_rate * (1.0 + (cfg.final_lr_fraction - 1.0) * frac);
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let x = to_matrix(train, batch);
            let tape = net.forward_batch(&x)?;
            let pred = net.outputs(&tape);
            let nb = batch.len() as f64;
            let mut upstream = Vec::with_capacity(batch.len());
            let mut loss = 0.0;
            for (p, &i) in pred.iter().zip(batch) {
                let r = p - labels[i];
                loss += r.abs();
                upstream.push(if r > 0.0 { 1.0 / nb } else if r < 0.0 { -1.0 / nb } else { 0.0 });
            }
            total += loss / nb;
            let (g, _) = net.backward_batch(&tape, &upstream, false);
            for (l, layer) in net.layers.iter_mut().enumerate() {
                velocity.weights[l] *= cfg.momentum;
                velocity.weights[l] -= &g.weights[l] * lr;
                velocity.bias[l] *= cfg.momentum;
                velocity.bias[l] -= &g.bias[l] * lr;
                layer.weights += &velocity.weights[l];
                layer.bias += &velocity.bias[l];
            }
        }
        let mean = total / order.chunks(cfg.batch_size).len() as f64;
        if !mean.is_finite() {
            return Err(Error::Divergence { iterations: epoch, energy: mean, trace: epoch_loss });
        }
        log::debug!("epoch {epoch}: loss {mean:.5}");
        epoch_loss.push(mean);
    }

    let pred = predict(&net, train)?;
    let mut report = TrainReport {
        samples: train.len(),
        epochs: cfg.epochs,
        epoch_loss,
        train_l1: l1(&pred, &labels),
        train_pearson: pearson(&pred, &labels),
        heldout_l1: None,
        heldout_pearson: None,
    };
    if let Some(h) = heldout.filter(|h| !h.is_empty()) {
        let p = predict(&net, h)?;
        let y = h.labels();
        report.heldout_l1 = Some(l1(&p, &y));
        report.heldout_pearson = Some(pearson(&p, &y));
    }
    Ok((MlpField::new(train.kind, train.joints, net)?, report))
}
