//! Exact nearest-neighbor distances over encoded corpus elements.
//!
//! Elements are stored in the field input layout of their kind (see
//! [`crate::fields::encoding`]). The pose metric is the L1 sum of per-joint
//! geodesic angles. Velocity and acceleration elements are compared by the
//! Euclidean distance of their main block plus weighted distances of the
//! conditioning blocks:
//!
//! ```text
//! d_vel((v, θ), (v', θ'))       = ‖v − v'‖ + w_pose·d_pose(θ, θ')
//! d_acc((a, θ, v), (a', θ', v')) = ‖a − a'‖ + w_pose·d_pose(θ, θ') + w_vel·‖v − v'‖
//! ```
//!
//! Zero weights give the unconditional Euclidean metrics.

use serde::{Deserialize, Serialize};

use crate::datagen::synth::MotionCorpus;
use crate::error::{check_len, Error, Result};
use crate::fields::encoding::{encode_state, FieldKind};
use crate::so3::quat_angle;
use nalgebra::Vector4;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricWeights {
    #[serde(default = "one")]
    pub pose: f64,
    #[serde(default = "one")]
    pub velocity: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for MetricWeights {
    fn default() -> Self {
        MetricWeights { pose: 1.0, velocity: 1.0 }
    }
}

impl MetricWeights {
    pub const UNCONDITIONAL: MetricWeights = MetricWeights { pose: 0.0, velocity: 0.0 };
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode", deny_unknown_fields)]
pub enum SearchMode {
    BruteForce,
    /// Euclidean shortlist of `shortlist` candidates on the raw encoding,
    /// re-ranked with the exact metric.
    TwoStage { shortlist: usize },
}

impl Default for SearchMode {
    fn default() -> Self {
        SearchMode::BruteForce
    }
}

pub const DEFAULT_SHORTLIST: usize = 1000;

#[derive(Clone, Debug)]
pub struct NnIndex {
    kind: FieldKind,
    k: usize,
    dim: usize,
    data: Vec<f64>,
    weights: MetricWeights,
}

fn quat_l1(a: &[f64], b: &[f64], bound: f64) -> f64 {
    let mut s = 0.0;
    for (qa, qb) in a.chunks_exact(4).zip(b.chunks_exact(4)) {
        s += quat_angle(&Vector4::from_column_slice(qa), &Vector4::from_column_slice(qb));
        if s > bound {
            break;
        }
    }
    s
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

impl NnIndex {
    pub fn new(kind: FieldKind, k: usize, rows: Vec<Vec<f64>>, weights: MetricWeights) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let dim = kind.input_dim(k);
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in &rows {
            check_len(dim, r.len())?;
            data.extend_from_slice(r);
        }
        Ok(NnIndex { kind, k, dim, data, weights })
    }

    /// Index over every frame of a corpus.
    pub fn from_corpus(kind: FieldKind, corpus: &MotionCorpus, weights: MetricWeights) -> Result<Self> {
        if corpus.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let rows = (0..corpus.len())
            .map(|i| encode_state(kind, &corpus.poses[i], &corpus.vels[i], &corpus.accs[i]))
            .collect();
        Self::new(kind, corpus.joints(), rows, weights)
    }

    pub fn kind(&self) -> FieldKind {
        self.kind
    }

    pub fn joints(&self) -> usize {
        self.k
    }

    pub fn weights(&self) -> MetricWeights {
        self.weights
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Exact metric between two encoded elements, abandoning the sum once
    /// it exceeds `bound`.
    fn metric_bounded(&self, x: &[f64], y: &[f64], bound: f64) -> f64 {
        let k = self.k;
        match self.kind {
            FieldKind::Pose => quat_l1(x, y, bound),
            FieldKind::Velocity => {
                let mut d = euclid(&x[..3 * k], &y[..3 * k]);
                if self.weights.pose > 0.0 && d <= bound {
                    d += self.weights.pose * quat_l1(&x[3 * k..], &y[3 * k..], (bound - d) / self.weights.pose);
                }
                d
            }
            FieldKind::Acceleration => {
                let mut d = euclid(&x[..3 * k], &y[..3 * k]);
                if self.weights.velocity > 0.0 && d <= bound {
                    d += self.weights.velocity * euclid(&x[7 * k..], &y[7 * k..]);
                }
                if self.weights.pose > 0.0 && d <= bound {
                    d += self.weights.pose * quat_l1(&x[3 * k..7 * k], &y[3 * k..7 * k], (bound - d) / self.weights.pose);
                }
                d
            }
        }
    }

    pub fn metric(&self, x: &[f64], y: &[f64]) -> f64 {
        self.metric_bounded(x, y, f64::INFINITY)
    }

    /// `(distance, index)` of the nearest element, ties to the lowest index.
    pub fn nearest(&self, query: &[f64]) -> Result<(f64, usize)> {
        check_len(self.dim, query.len())?;
        let mut best = (f64::INFINITY, 0);
        for i in 0..self.len() {
            let d = self.metric_bounded(query, self.row(i), best.0);
            if d < best.0 {
                best = (d, i);
            }
        }
        Ok(best)
    }

    pub fn nearest_with(&self, query: &[f64], mode: SearchMode) -> Result<(f64, usize)> {
        match mode {
            SearchMode::BruteForce => self.nearest(query),
            SearchMode::TwoStage { shortlist } => self.nearest_two_stage(query, shortlist),
        }
    }

    pub fn nearest_two_stage(&self, query: &[f64], shortlist: usize) -> Result<(f64, usize)> {
        check_len(self.dim, query.len())?;
        let n = self.len();
        if shortlist >= n {
            return self.nearest(query);
        }
        let mut coarse: Vec<(f64, usize)> = (0..n)
            .map(|i| {
                let r = self.row(i);
                (query.iter().zip(r).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(), i)
            })
            .collect();
        let shortlist = shortlist.max(1);
        coarse.select_nth_unstable_by(shortlist - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut cand: Vec<usize> = coarse[..shortlist].iter().map(|c| c.1).collect();
        cand.sort_unstable();
        let mut best = (f64::INFINITY, 0);
        for i in cand {
            let d = self.metric_bounded(query, self.row(i), best.0);
            if d < best.0 {
                best = (d, i);
            }
        }
        Ok(best)
    }
}
