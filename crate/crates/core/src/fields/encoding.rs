//! Flat input layouts shared by the fields, the nearest-neighbor index and
//! the label files.
//!
//! | kind         | main block      | conditioning block          |
//! |--------------|-----------------|-----------------------------|
//! | pose         | quats (4K)      | none                        |
//! | velocity     | ω (3K)          | pose quats (4K)             |
//! | acceleration | α (3K)          | pose quats (4K) ⊕ ω (3K)    |
//!
//! Quaternions are `(w, x, y, z)` per joint, canonicalized to `w ≥ 0`;
//! vectors are joint-major `(x, y, z)`.

use nalgebra::{Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Result};
use crate::product::{Pose, PoseAcceleration, PoseVelocity};
use crate::so3::{quat_encode, quat_to_matrix, Rotation3, UnitQuaternion};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldKind {
    Pose,
    Velocity,
    Acceleration,
}

impl FieldKind {
    pub const ALL: [FieldKind; 3] = [FieldKind::Pose, FieldKind::Velocity, FieldKind::Acceleration];

    pub fn name(self) -> &'static str {
        match self {
            FieldKind::Pose => "pose",
            FieldKind::Velocity => "velocity",
            FieldKind::Acceleration => "acceleration",
        }
    }

    pub fn main_dim(self, k: usize) -> usize {
        match self {
            FieldKind::Pose => 4 * k,
            _ => 3 * k,
        }
    }

    pub fn cond_dim(self, k: usize) -> usize {
        match self {
            FieldKind::Pose => 0,
            FieldKind::Velocity => 4 * k,
            FieldKind::Acceleration => 7 * k,
        }
    }

    pub fn input_dim(self, k: usize) -> usize {
        self.main_dim(k) + self.cond_dim(k)
    }

    /// Tag written to model files for the main-block encoding.
    pub fn encoding_tag(self) -> &'static str {
        match self {
            FieldKind::Pose => "quat-wxyz-canonical",
            _ => "axial-flat",
        }
    }

    /// Tag written to model files for the conditioning block.
    pub fn conditioning_tag(self) -> &'static str {
        match self {
            FieldKind::Pose => "none",
            FieldKind::Velocity => "pose",
            FieldKind::Acceleration => "pose+velocity",
        }
    }
}

impl std::fmt::Display for FieldKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for FieldKind {
    type Err = crate::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pose" => Ok(FieldKind::Pose),
            "velocity" => Ok(FieldKind::Velocity),
            "acceleration" => Ok(FieldKind::Acceleration),
            other => Err(crate::Error::Config(format!("unknown field kind {other:?}"))),
        }
    }
}

pub fn encode_pose(pose: &Pose) -> Vec<f64> {
    pose.iter().flat_map(|r| quat_encode(r).as_array()).collect()
}

pub fn encode_pose_into(pose: &Pose, out: &mut Vec<f64>) {
    out.extend(pose.iter().flat_map(|r| quat_encode(r).as_array()));
}

/// Decodes `4K` quaternion entries; each quaternion is renormalized.
pub fn decode_pose(x: &[f64], k: usize) -> Result<Pose> {
    check_len(4 * k, x.len())?;
    Ok(Pose(
        x.chunks_exact(4)
            .map(|c| {
                let v = Vector4::new(c[0], c[1], c[2], c[3]);
                let v = v / v.norm();
                Rotation3::from_matrix_unchecked(quat_to_matrix(&v))
            })
            .collect(),
    ))
}

pub fn quat_block(x: &[f64], joint: usize) -> Vector4<f64> {
    Vector4::new(x[4 * joint], x[4 * joint + 1], x[4 * joint + 2], x[4 * joint + 3])
}

pub fn vec_block(x: &[f64], joint: usize) -> Vector3<f64> {
    Vector3::new(x[3 * joint], x[3 * joint + 1], x[3 * joint + 2])
}

pub fn encode_velocity_input(vel: &PoseVelocity, pose: &Pose) -> Vec<f64> {
    let mut x = vel.to_flat();
    encode_pose_into(pose, &mut x);
    x
}

pub fn encode_acceleration_input(acc: &PoseAcceleration, pose: &Pose, vel: &PoseVelocity) -> Vec<f64> {
    let mut x = acc.to_flat();
    encode_pose_into(pose, &mut x);
    x.extend(vel.to_flat());
    x
}

/// Input vector of a field of `kind` for one motion state.
pub fn encode_state(kind: FieldKind, pose: &Pose, vel: &PoseVelocity, acc: &PoseAcceleration) -> Vec<f64> {
    match kind {
        FieldKind::Pose => encode_pose(pose),
        FieldKind::Velocity => encode_velocity_input(vel, pose),
        FieldKind::Acceleration => encode_acceleration_input(acc, pose, vel),
    }
}

/// Identity quaternion block, used for rest conditioning.
pub fn identity_quats(k: usize) -> Vec<f64> {
    std::iter::repeat_n(UnitQuaternion::identity().as_array(), k).flatten().collect()
}
