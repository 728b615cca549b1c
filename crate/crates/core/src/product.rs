//! The power manifold SO(3)^K of articulated poses.
//!
//! Distances use the unweighted L1 product metric (sum of per-joint geodesic
//! angles). Exp/Log/gradients act joint by joint.

use nalgebra::{Matrix3, Vector3};

use crate::error::{check_len, Error, Result};
use crate::so3::{self, AxialVector, Rotation3};

/// K joint rotations.
#[derive(Clone, Debug, PartialEq)]
pub struct Pose(pub Vec<Rotation3>);

/// K body-frame angular velocities (rad/s). Also used as the axial form of a
/// pose tangent vector.
#[derive(Clone, Debug, PartialEq)]
pub struct PoseVelocity(pub Vec<AxialVector>);

/// K angular accelerations (rad/s²).
#[derive(Clone, Debug, PartialEq)]
pub struct PoseAcceleration(pub Vec<AxialVector>);

/// K tangent matrices, entry `k` in the tangent space at joint `k`.
#[derive(Clone, Debug, PartialEq)]
pub struct PoseTangent(pub Vec<Matrix3<f64>>);

impl Pose {
    pub fn identity(k: usize) -> Self {
        Pose(vec![Rotation3::identity(); k])
    }

    pub fn joints(&self) -> usize {
        self.0.len()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Rotation3> {
        self.0.iter()
    }

    pub fn with_joint(&self, k: usize, r: Rotation3) -> Self {
        let mut out = self.clone();
        out.0[k] = r;
        out
    }
}

impl std::ops::Index<usize> for Pose {
    type Output = Rotation3;
    fn index(&self, k: usize) -> &Rotation3 {
        &self.0[k]
    }
}

macro_rules! axial_array {
    ($t:ident) => {
        impl $t {
            pub fn zeros(k: usize) -> Self {
                $t(vec![Vector3::zeros(); k])
            }

            pub fn joints(&self) -> usize {
                self.0.len()
            }

            pub fn scaled(&self, s: f64) -> Self {
                $t(self.0.iter().map(|v| v * s).collect())
            }

            /// Joint-major flattening `[x0, y0, z0, x1, ...]`.
            pub fn to_flat(&self) -> Vec<f64> {
                self.0.iter().flat_map(|v| [v.x, v.y, v.z]).collect()
            }

            pub fn from_flat(x: &[f64]) -> Result<Self> {
                if x.len() % 3 != 0 {
                    return Err(Error::DimensionMismatch { expected: x.len() / 3 * 3, got: x.len() });
                }
                Ok($t(x.chunks_exact(3).map(|c| Vector3::new(c[0], c[1], c[2])).collect()))
            }

            /// Euclidean norm of the flattened vector.
            pub fn norm(&self) -> f64 {
                self.0.iter().map(|v| v.norm_squared()).sum::<f64>().sqrt()
            }

            pub fn is_finite(&self) -> bool {
                self.0.iter().all(|v| v.iter().all(|c| c.is_finite()))
            }
        }

        impl std::ops::Index<usize> for $t {
            type Output = AxialVector;
            fn index(&self, k: usize) -> &AxialVector {
                &self.0[k]
            }
        }
    };
}

axial_array!(PoseVelocity);
axial_array!(PoseAcceleration);

impl PoseTangent {
    pub fn zeros(k: usize) -> Self {
        PoseTangent(vec![Matrix3::zeros(); k])
    }

    /// Body-frame axial form `vee(R_kᵀ ξ_k)` of each component.
    pub fn to_axial(&self, base: &Pose) -> Result<PoseVelocity> {
        check_len(base.joints(), self.0.len())?;
        Ok(PoseVelocity(
            base.iter().zip(&self.0).map(|(r, xi)| so3::tangent_to_axial(r, xi)).collect(),
        ))
    }

    pub fn from_axial(base: &Pose, w: &PoseVelocity) -> Result<Self> {
        check_len(base.joints(), w.joints())?;
        Ok(PoseTangent(base.iter().zip(&w.0).map(|(r, v)| so3::axial_to_tangent(r, v)).collect()))
    }
}

/// L1 product of per-joint geodesic distances.
pub fn pose_distance(a: &Pose, b: &Pose) -> Result<f64> {
    check_len(a.joints(), b.joints())?;
    Ok(a.iter().zip(b.iter()).map(|(x, y)| so3::geodesic_distance(x, y)).sum())
}

/// Componentwise `Exp_{R_k}(R_k·hat(scale·w_k)) = R_k·exp(scale·hat(w_k))`.
pub fn pose_exp(base: &Pose, step: &PoseVelocity, scale: f64) -> Result<Pose> {
    check_len(base.joints(), step.joints())?;
    Ok(Pose(
        base.iter()
            .zip(&step.0)
            .map(|(r, w)| if *w == Vector3::zeros() { *r } else { r.retract(&(w * scale)) })
            .collect(),
    ))
}

/// Componentwise exponential map of a tangent given in matrix form.
pub fn pose_exp_tangent(base: &Pose, step: &PoseTangent) -> Result<Pose> {
    let axial = step.to_axial(base)?;
    pose_exp(base, &axial, 1.0)
}

/// Componentwise `vee(log(base_kᵀ target_k))`.
pub fn pose_log(base: &Pose, target: &Pose) -> Result<PoseVelocity> {
    check_len(base.joints(), target.joints())?;
    Ok(PoseVelocity(
        base.iter().zip(target.iter()).map(|(a, b)| so3::log_so3(&(a.transpose() * *b))).collect(),
    ))
}

/// Componentwise `egrad2rgrad`.
pub fn pose_rgrad(pose: &Pose, eg: &[Matrix3<f64>]) -> Result<PoseTangent> {
    check_len(pose.joints(), eg.len())?;
    Ok(PoseTangent(pose.iter().zip(eg).map(|(r, g)| so3::egrad2rgrad(r, g)).collect()))
}
