//! Evaluation metrics between a predicted and a reference motion.
//!
//! * MPJPE: mean Euclidean joint position error, millimeters.
//! * Geodesic error: mean per-joint rotation angle error, radians.
//! * Acceleration error: mean norm of the difference of angular
//!   accelerations re-estimated from both pose sequences, rad/s².

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::fields::{state_value, FieldKind, FieldSet};
use crate::kinematics::{estimate_dynamics, MotionSequence, Skeleton};
use crate::optim::losses::sequence_positions;
use crate::so3::geodesic_distance;

fn check_frames(a: &MotionSequence, b: &MotionSequence) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Config(format!("sequences have {} and {} frames", a.len(), b.len())));
    }
    check_len(a.joints(), b.joints())
}

/// Mean joint position error in millimeters, optionally restricted to
/// `(frame, joint)` pairs where `mask` holds.
pub fn mpjpe_mm_masked(
    pred: &MotionSequence,
    pred_skel: &Skeleton,
    reference: &MotionSequence,
    ref_skel: &Skeleton,
    mask: impl Fn(usize, usize) -> bool,
) -> Result<f64> {
    check_frames(pred, reference)?;
    let (p, r) = (sequence_positions(pred, pred_skel)?, sequence_positions(reference, ref_skel)?);
    let (mut sum, mut n) = (0.0, 0usize);
    for t in 0..p.len() {
        for j in 0..p[t].len() {
            if mask(t, j) {
                sum += (p[t][j] - r[t][j]).norm();
                n += 1;
            }
        }
    }
    Ok(if n == 0 { 0.0 } else { 1000.0 * sum / n as f64 })
}

pub fn mpjpe_mm(pred: &MotionSequence, pred_skel: &Skeleton, reference: &MotionSequence, ref_skel: &Skeleton) -> Result<f64> {
    mpjpe_mm_masked(pred, pred_skel, reference, ref_skel, |_, _| true)
}

/// Mean geodesic error per joint over frames.
pub fn geodesic_error_per_joint(pred: &MotionSequence, reference: &MotionSequence) -> Result<Vec<f64>> {
    check_frames(pred, reference)?;
    let k = pred.joints();
    let mut out = vec![0.0; k];
    for (a, b) in pred.states.iter().zip(&reference.states) {
        for j in 0..k {
            out[j] += geodesic_distance(&a.pose[j], &b.pose[j]);
        }
    }
    Ok(out.into_iter().map(|v| v / pred.len() as f64).collect())
}

/// Mean `‖α_pred - α_ref‖` over frames and joints, with both accelerations
/// estimated from the poses.
pub fn acceleration_error(pred: &MotionSequence, reference: &MotionSequence) -> Result<f64> {
    check_frames(pred, reference)?;
    let (_, ap) = estimate_dynamics(&pred.poses(), pred.fps)?;
    let (_, ar) = estimate_dynamics(&reference.poses(), reference.fps)?;
    let mut sum = 0.0;
    for (a, b) in ap.iter().zip(&ar) {
        for j in 0..a.joints() {
            sum += (a[j] - b[j]).norm();
        }
    }
    Ok(sum / (ap.len() * pred.joints()) as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldStats {
    pub mean: f64,
    pub max: f64,
}

/// Field values along a sequence (state velocities and accelerations as
/// stored).
pub fn field_stats(seq: &MotionSequence, fields: &FieldSet) -> Result<BTreeMap<String, FieldStats>> {
    let mut out = BTreeMap::new();
    for kind in FieldKind::ALL {
        let Some(f) = fields.get(kind) else { continue };
        let vals: Vec<f64> =
            seq.states.iter().map(|s| state_value(f.as_ref(), &s.pose, &s.vel, &s.acc)).collect::<Result<_>>()?;
        out.insert(
            kind.name().to_string(),
            FieldStats {
                mean: vals.iter().sum::<f64>() / vals.len() as f64,
                max: vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            },
        );
    }
    Ok(out)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mpjpe_mm: f64,
    pub geodesic_error: Vec<f64>,
    pub mean_geodesic_error: f64,
    pub acceleration_error: f64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub fields: BTreeMap<String, FieldStats>,
    /// Wall-clock seconds per stage; only filled on request.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub timings: BTreeMap<String, f64>,
}

impl MetricsReport {
    pub fn compare(
        pred: &MotionSequence,
        pred_skel: &Skeleton,
        reference: &MotionSequence,
        ref_skel: &Skeleton,
    ) -> Result<Self> {
        let geo = geodesic_error_per_joint(pred, reference)?;
        Ok(MetricsReport {
            mpjpe_mm: mpjpe_mm(pred, pred_skel, reference, ref_skel)?,
            mean_geodesic_error: geo.iter().sum::<f64>() / geo.len() as f64,
            geodesic_error: geo,
            acceleration_error: acceleration_error(pred, reference)?,
            fields: BTreeMap::new(),
            timings: BTreeMap::new(),
        })
    }
}
