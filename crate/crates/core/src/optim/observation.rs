//! Observations of a motion: 3D joints, 2D joint detections seen through a
//! pinhole camera, or unordered point clouds.
//!
//! File format (JSON):
//!
//! ```json
//! { "format": "motionfield-observation", "version": 1,
//!   "observation": { "kind": "joints3d", "frames": [ {"points": [[x,y,z], ..], "visible": [true, ..]} ] } }
//! ```
//!
//! `joints2d` adds a `camera` block and per-frame `pixels` and `confidence`;
//! `pointcloud` frames are plain arrays of points.

use std::path::Path;

use nalgebra::{Vector2, Vector3};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::kinematics::{forward_kinematics, MotionSequence, Skeleton};
use crate::so3::{quat_decode, Rotation3, UnitQuaternion};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObservationKind {
    Joints3d,
    Joints2d,
    Pointcloud,
}

/// Pinhole camera with world-to-camera extrinsics `x_c = R·x + t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PinholeCamera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    #[serde(default = "UnitQuaternion::identity")]
    pub rotation: UnitQuaternion,
    #[serde(default = "Vector3::zeros")]
    pub translation: Vector3<f64>,
}

impl PinholeCamera {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        let cam = PinholeCamera { fx, fy, cx, cy, rotation: UnitQuaternion::identity(), translation: Vector3::zeros() };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::Observation(format!("focal lengths must be positive, got {} {}", self.fx, self.fy)));
        }
        Ok(())
    }

    pub fn extrinsic_rotation(&self) -> Rotation3 {
        quat_decode(&self.rotation)
    }

    pub fn to_camera(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.extrinsic_rotation().transform(x) + self.translation
    }

    /// Pixel coordinates, or `None` for points with camera depth `z ≤ 0`.
    pub fn project(&self, x: &Vector3<f64>) -> Option<Vector2<f64>> {
        let c = self.to_camera(x);
        (c.z > 0.0).then(|| Vector2::new(self.fx * c.x / c.z + self.cx, self.fy * c.y / c.z + self.cy))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Joints3dFrame {
    pub points: Vec<Vector3<f64>>,
    pub visible: Vec<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Joints2dFrame {
    pub pixels: Vec<Vector2<f64>>,
    pub confidence: Vec<f64>,
    pub visible: Vec<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Observation {
    Joints3d { frames: Vec<Joints3dFrame> },
    Joints2d { camera: PinholeCamera, frames: Vec<Joints2dFrame> },
    Pointcloud { frames: Vec<Vec<Vector3<f64>>> },
}

const OBSERVATION_FORMAT: &str = "motionfield-observation";
const OBSERVATION_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ObservationFile {
    format: String,
    version: u32,
    observation: Observation,
}

impl Observation {
    pub fn kind(&self) -> ObservationKind {
        match self {
            Observation::Joints3d { .. } => ObservationKind::Joints3d,
            Observation::Joints2d { .. } => ObservationKind::Joints2d,
            Observation::Pointcloud { .. } => ObservationKind::Pointcloud,
        }
    }

    pub fn frames(&self) -> usize {
        match self {
            Observation::Joints3d { frames } => frames.len(),
            Observation::Joints2d { frames, .. } => frames.len(),
            Observation::Pointcloud { frames } => frames.len(),
        }
    }

    /// Joint count implied by the first frame; point clouds carry none.
    pub fn joints(&self) -> Option<usize> {
        match self {
            Observation::Joints3d { frames } => frames.first().map(|f| f.points.len()),
            Observation::Joints2d { frames, .. } => frames.first().map(|f| f.pixels.len()),
            Observation::Pointcloud { .. } => None,
        }
    }

    /// Checks per-frame shapes against `k` joints and confidence ranges.
    pub fn validate(&self, k: usize) -> Result<()> {
        match self {
            Observation::Joints3d { frames } => {
                for f in frames {
                    check_len(k, f.points.len())?;
                    check_len(k, f.visible.len())?;
                    if f.points.iter().any(|p| !p.iter().all(|c| c.is_finite())) {
                        return Err(Error::Observation("non-finite joint position".into()));
                    }
                }
            }
            Observation::Joints2d { camera, frames } => {
                camera.validate()?;
                for f in frames {
                    check_len(k, f.pixels.len())?;
                    check_len(k, f.confidence.len())?;
                    check_len(k, f.visible.len())?;
                    if f.confidence.iter().any(|c| !(0.0..=1.0).contains(c)) {
                        return Err(Error::Observation("confidence outside [0, 1]".into()));
                    }
                }
            }
            Observation::Pointcloud { frames } => {
                if frames.iter().flatten().any(|p| !p.iter().all(|c| c.is_finite())) {
                    return Err(Error::Observation("non-finite cloud point".into()));
                }
            }
        }
        Ok(())
    }

    /// Exact joint positions of `seq`, all visible.
    pub fn joints3d_from(seq: &MotionSequence, skel: &Skeleton) -> Result<Self> {
        let frames = seq
            .states
            .iter()
            .map(|s| {
                let p = forward_kinematics(skel, &s.t_r, &s.pose)?;
                Ok(Joints3dFrame { visible: vec![true; p.0.len()], points: p.0 })
            })
            .collect::<Result<_>>()?;
        Ok(Observation::Joints3d { frames })
    }

    /// Pixels of the joints of `seq`; joints behind the camera are marked
    /// invisible.
    pub fn joints2d_from(seq: &MotionSequence, skel: &Skeleton, camera: &PinholeCamera) -> Result<Self> {
        let frames = seq
            .states
            .iter()
            .map(|s| {
                let p = forward_kinematics(skel, &s.t_r, &s.pose)?;
                let proj: Vec<Option<Vector2<f64>>> = p.0.iter().map(|x| camera.project(x)).collect();
                Ok(Joints2dFrame {
                    pixels: proj.iter().map(|x| x.unwrap_or_else(Vector2::zeros)).collect(),
                    confidence: proj.iter().map(|x| if x.is_some() { 1.0 } else { 0.0 }).collect(),
                    visible: proj.iter().map(|x| x.is_some()).collect(),
                })
            })
            .collect::<Result<_>>()?;
        Ok(Observation::Joints2d { camera: camera.clone(), frames })
    }

    /// A cloud holding the joint positions of every frame.
    pub fn pointcloud_from(seq: &MotionSequence, skel: &Skeleton) -> Result<Self> {
        let frames =
            seq.states.iter().map(|s| Ok(forward_kinematics(skel, &s.t_r, &s.pose)?.0)).collect::<Result<_>>()?;
        Ok(Observation::Pointcloud { frames })
    }

    /// Adds isotropic Gaussian noise with standard deviation `sigma` (meters
    /// or pixels) to every point.
    pub fn with_noise(&self, sigma: f64, rng: &mut impl Rng) -> Result<Self> {
        let n = Normal::new(0.0, sigma).map_err(|e| Error::Config(e.to_string()))?;
        let mut out = self.clone();
        match &mut out {
            Observation::Joints3d { frames } => {
                for p in frames.iter_mut().flat_map(|f| f.points.iter_mut()) {
                    *p += Vector3::from_fn(|_, _| n.sample(rng));
                }
            }
            Observation::Joints2d { frames, .. } => {
                for p in frames.iter_mut().flat_map(|f| f.pixels.iter_mut()) {
                    *p += Vector2::from_fn(|_, _| n.sample(rng));
                }
            }
            Observation::Pointcloud { frames } => {
                for p in frames.iter_mut().flatten() {
                    *p += Vector3::from_fn(|_, _| n.sample(rng));
                }
            }
        }
        Ok(out)
    }

    /// Hides joint `j` of frame `t` where `hidden(t, j)` holds. Point clouds
    /// have no per-joint visibility and are returned unchanged.
    pub fn masked(&self, hidden: impl Fn(usize, usize) -> bool) -> Self {
        let mut out = self.clone();
        match &mut out {
            Observation::Joints3d { frames } => {
                for (t, f) in frames.iter_mut().enumerate() {
                    for (j, v) in f.visible.iter_mut().enumerate() {
                        *v &= !hidden(t, j);
                    }
                }
            }
            Observation::Joints2d { frames, .. } => {
                for (t, f) in frames.iter_mut().enumerate() {
                    for (j, v) in f.visible.iter_mut().enumerate() {
                        *v &= !hidden(t, j);
                    }
                }
            }
            Observation::Pointcloud { .. } => {}
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ObservationFile {
            format: OBSERVATION_FORMAT.into(),
            version: OBSERVATION_VERSION,
            observation: self.clone(),
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: ObservationFile = serde_json::from_str(s)?;
        if file.format != OBSERVATION_FORMAT || file.version != OBSERVATION_VERSION {
            return Err(Error::Format(format!("unsupported observation {} v{}", file.format, file.version)));
        }
        Ok(file.observation)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}
