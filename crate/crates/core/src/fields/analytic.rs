//! Closed-form distance fields with exact values, used as ground truth for
//! projection, integration and fitting.

use std::sync::Arc;

use nalgebra::Vector4;

use crate::datagen::NnIndex;
use crate::error::{check_len, Error, Result};
use crate::fields::{DistanceField, FieldKind};
use crate::so3::{quat_angle, quat_angle_grad};

const IDENTITY_QUAT: Vector4<f64> = Vector4::new(1.0, 0.0, 0.0, 0.0);

/// `f(θ) = Σ_k d(θ_k, I)`.
#[derive(Clone, Debug)]
pub struct IdentityPoseField {
    k: usize,
}

impl IdentityPoseField {
    pub fn new(k: usize) -> Self {
        IdentityPoseField { k }
    }
}

impl DistanceField for IdentityPoseField {
    fn kind(&self) -> FieldKind {
        FieldKind::Pose
    }

    fn joints(&self) -> usize {
        self.k
    }

    fn eval(&self, x: &[f64]) -> Result<f64> {
        check_len(4 * self.k, x.len())?;
        Ok(x.chunks_exact(4).map(|q| quat_angle(&Vector4::from_column_slice(q), &IDENTITY_QUAT)).sum())
    }

    fn eval_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        check_len(4 * self.k, x.len())?;
        let mut f = 0.0;
        let mut g = Vec::with_capacity(x.len());
        for q in x.chunks_exact(4) {
            let (a, dq) = quat_angle_grad(&Vector4::from_column_slice(q), &IDENTITY_QUAT);
            f += a;
            g.extend(dq.iter());
        }
        Ok((f, g))
    }
}

/// Euclidean norm of the main block; the conditioning block is ignored.
#[derive(Clone, Debug)]
pub struct ZeroVectorField {
    kind: FieldKind,
    k: usize,
}

impl ZeroVectorField {
    pub fn new(kind: FieldKind, k: usize) -> Self {
        assert!(kind != FieldKind::Pose, "pose inputs are rotations");
        ZeroVectorField { kind, k }
    }
}

impl DistanceField for ZeroVectorField {
    fn kind(&self) -> FieldKind {
        self.kind
    }

    fn joints(&self) -> usize {
        self.k
    }

    fn eval(&self, x: &[f64]) -> Result<f64> {
        check_len(self.input_dim(), x.len())?;
        Ok(x[..3 * self.k].iter().map(|v| v * v).sum::<f64>().sqrt())
    }

    fn eval_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let f = self.eval(x)?;
        let mut g = vec![0.0; x.len()];
        if f > 0.0 {
            for (gi, xi) in g.iter_mut().zip(&x[..3 * self.k]) {
                *gi = xi / f;
            }
        }
        Ok((f, g))
    }
}

/// Exact distance to a corpus under the index metric. The gradient is that
/// of the metric to the current nearest element.
#[derive(Clone, Debug)]
pub struct CorpusField {
    index: Arc<NnIndex>,
}

impl CorpusField {
    pub fn new(index: Arc<NnIndex>) -> Result<Self> {
        if index.is_empty() {
            return Err(Error::EmptyDataset);
        }
        Ok(CorpusField { index })
    }

    pub fn index(&self) -> &NnIndex {
        &self.index
    }
}

fn quat_block_grad(x: &[f64], y: &[f64], w: f64, g: &mut [f64]) {
    for ((qx, qy), gq) in x.chunks_exact(4).zip(y.chunks_exact(4)).zip(g.chunks_exact_mut(4)) {
        let (_, d) = quat_angle_grad(&Vector4::from_column_slice(qx), &Vector4::from_column_slice(qy));
        for (gi, di) in gq.iter_mut().zip(d.iter()) {
            *gi += w * di;
        }
    }
}

fn euclid_block_grad(x: &[f64], y: &[f64], w: f64, g: &mut [f64]) {
    let n = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    if n > 1e-9 {
        for ((gi, a), b) in g.iter_mut().zip(x).zip(y) {
            *gi += w * (a - b) / n;
        }
    }
}

impl DistanceField for CorpusField {
    fn kind(&self) -> FieldKind {
        self.index.kind()
    }

    fn joints(&self) -> usize {
        self.index.joints()
    }

    fn eval(&self, x: &[f64]) -> Result<f64> {
        Ok(self.index.nearest(x)?.0)
    }

    fn eval_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (f, i) = self.index.nearest(x)?;
        let y = self.index.row(i);
        let k = self.joints();
        let w = self.index.weights();
        let mut g = vec![0.0; x.len()];
        match self.kind() {
            FieldKind::Pose => quat_block_grad(x, y, 1.0, &mut g),
            FieldKind::Velocity => {
                euclid_block_grad(&x[..3 * k], &y[..3 * k], 1.0, &mut g[..3 * k]);
                quat_block_grad(&x[3 * k..], &y[3 * k..], w.pose, &mut g[3 * k..]);
            }
            FieldKind::Acceleration => {
                euclid_block_grad(&x[..3 * k], &y[..3 * k], 1.0, &mut g[..3 * k]);
                quat_block_grad(&x[3 * k..7 * k], &y[3 * k..7 * k], w.pose, &mut g[3 * k..7 * k]);
                euclid_block_grad(&x[7 * k..], &y[7 * k..], w.velocity, &mut g[7 * k..]);
            }
        }
        Ok((f, g))
    }
}
