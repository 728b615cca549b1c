//! Motion file format (JSON):
//!
//! ```json
//! { "fps": 30, "k": 5, "skeleton": {"parents": [..], "offsets": [[x,y,z], ..], "beta": [..]},
//!   "frames": [ {"t_r": [x,y,z], "quats": [[w,x,y,z], ..], "vel": [[..]], "acc": [[..]]} ] }
//! ```
//!
//! Quaternions are written canonicalized (`w ≥ 0`); readers reject
//! quaternions further than 1e-6 from unit norm. `vel`/`acc` are optional
//! on read and re-estimated from the poses when absent.

use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::estimate::estimate_dynamics;
use crate::kinematics::sequence::{MotionSequence, MotionState};
use crate::kinematics::skeleton::Skeleton;
use crate::product::{Pose, PoseAcceleration, PoseVelocity};
use crate::so3::{quat_decode, quat_encode, UnitQuaternion};

#[derive(Clone, Debug, PartialEq)]
pub struct MotionFile {
    pub sequence: MotionSequence,
    pub skeleton: Option<Skeleton>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct MotionRaw {
    fps: f64,
    k: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    skeleton: Option<Skeleton>,
    frames: Vec<FrameRaw>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrameRaw {
    t_r: [f64; 3],
    quats: Vec<UnitQuaternion>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    vel: Option<Vec<[f64; 3]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    acc: Option<Vec<[f64; 3]>>,
}

fn vecs(v: &[Vector3<f64>]) -> Vec<[f64; 3]> {
    v.iter().map(|x| [x.x, x.y, x.z]).collect()
}

fn from_arrays(v: &[[f64; 3]], k: usize, what: &str) -> Result<Vec<Vector3<f64>>> {
    if v.len() != k {
        return Err(Error::Format(format!("{what} has {} entries, expected {k}", v.len())));
    }
    if v.iter().flatten().any(|c| !c.is_finite()) {
        return Err(Error::Format(format!("{what} has non-finite entries")));
    }
    Ok(v.iter().map(|a| Vector3::from(*a)).collect())
}

impl From<&MotionFile> for MotionRaw {
    fn from(m: &MotionFile) -> Self {
        MotionRaw {
            fps: m.sequence.fps,
            k: m.sequence.joints(),
            skeleton: m.skeleton.clone(),
            frames: m
                .sequence
                .states
                .iter()
                .map(|s| FrameRaw {
                    t_r: [s.t_r.x, s.t_r.y, s.t_r.z],
                    quats: s.pose.iter().map(quat_encode).collect(),
                    vel: Some(vecs(&s.vel.0)),
                    acc: Some(vecs(&s.acc.0)),
                })
                .collect(),
        }
    }
}

impl TryFrom<MotionRaw> for MotionFile {
    type Error = Error;
    fn try_from(raw: MotionRaw) -> Result<Self> {
        let k = raw.k;
        if k == 0 {
            return Err(Error::Format("k must be positive".into()));
        }
        if raw.frames.is_empty() {
            return Err(Error::Format("no frames".into()));
        }
        if let Some(s) = &raw.skeleton {
            if s.joints() != k {
                return Err(Error::Format(format!("skeleton has {} joints, k = {k}", s.joints())));
            }
        }
        let mut poses = Vec::with_capacity(raw.frames.len());
        let mut t_r = Vec::with_capacity(raw.frames.len());
        for f in &raw.frames {
            if f.quats.len() != k {
                return Err(Error::Format(format!("frame has {} quaternions, expected {k}", f.quats.len())));
            }
            poses.push(Pose(f.quats.iter().map(quat_decode).collect()));
            t_r.push(Vector3::from(f.t_r));
        }
        let have_dynamics = raw.frames.iter().all(|f| f.vel.is_some() && f.acc.is_some());
        let (vel, acc): (Vec<PoseVelocity>, Vec<PoseAcceleration>) = if have_dynamics {
            let mut v = Vec::new();
            let mut a = Vec::new();
            for f in &raw.frames {
                v.push(PoseVelocity(from_arrays(f.vel.as_deref().unwrap_or_default(), k, "vel")?));
                a.push(PoseAcceleration(from_arrays(f.acc.as_deref().unwrap_or_default(), k, "acc")?));
            }
            (v, a)
        } else if poses.len() >= 3 {
            estimate_dynamics(&poses, raw.fps)?
        } else {
            (vec![PoseVelocity::zeros(k); poses.len()], vec![PoseAcceleration::zeros(k); poses.len()])
        };
        let states = poses
            .into_iter()
            .zip(t_r)
            .zip(vel.into_iter().zip(acc))
            .map(|((pose, t_r), (vel, acc))| MotionState { t_r, pose, vel, acc })
            .collect();
        Ok(MotionFile { sequence: MotionSequence::new(raw.fps, states)?, skeleton: raw.skeleton })
    }
}

impl MotionFile {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&MotionRaw::from(self))?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let raw: MotionRaw = serde_json::from_str(s)?;
        raw.try_into()
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

pub(crate) fn sequence_to_value(m: &MotionFile) -> serde_json::Value {
    serde_json::to_value(MotionRaw::from(m)).expect("motion serializes")
}

pub(crate) fn sequence_from_value(v: serde_json::Value) -> Result<MotionFile> {
    let raw: MotionRaw = serde_json::from_value(v)?;
    raw.try_into()
}
