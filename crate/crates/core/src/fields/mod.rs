//! Unsigned distance fields for poses, velocities and accelerations.
//!
//! A field maps an encoded input (see [`encoding`]) to a nonnegative
//! distance and its ambient gradient. Pose gradients reach the manifold
//! either through the quaternion-encoding Jacobian followed by
//! `egrad2rgrad` ([`field_rgrad_pose`]) or directly in body-frame axial form
//! ([`pose_value_grad`]); both describe the same differential.

pub mod analytic;
pub mod encoding;
pub mod mlp;
pub mod model;
pub mod train;

use std::sync::Arc;

use nalgebra::Matrix3;

use crate::error::{Error, Result};
use crate::product::{pose_rgrad, Pose, PoseAcceleration, PoseTangent, PoseVelocity};
use crate::so3::{quat_encode_with_jacobian, quat_grad_to_axial, UnitQuaternion};

pub use analytic::{CorpusField, IdentityPoseField, ZeroVectorField};
pub use encoding::{encode_state, FieldKind};
pub use mlp::{Activation, Mlp, MlpField};
pub use train::{train_field, TrainConfig, TrainReport};

pub trait DistanceField: Send + Sync + std::fmt::Debug {
    fn kind(&self) -> FieldKind;

    fn joints(&self) -> usize;

    fn input_dim(&self) -> usize {
        self.kind().input_dim(self.joints())
    }

    fn eval(&self, x: &[f64]) -> Result<f64>;

    /// Value and gradient with respect to the encoded input.
    fn eval_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>)>;
}

pub type SharedField = Arc<dyn DistanceField>;

/// The three fields used by projection, integration and fitting. Missing
/// entries disable the corresponding stage.
#[derive(Clone, Debug, Default)]
pub struct FieldSet {
    pub pose: Option<SharedField>,
    pub velocity: Option<SharedField>,
    pub acceleration: Option<SharedField>,
}

impl FieldSet {
    pub fn new(pose: Option<SharedField>, velocity: Option<SharedField>, acceleration: Option<SharedField>) -> Result<Self> {
        let set = FieldSet { pose, velocity, acceleration };
        let mut k = None;
        for (want, f) in FieldKind::ALL.iter().zip(set.iter()) {
            if let Some(f) = f {
                if f.kind() != *want {
                    return Err(Error::FieldKind { expected: want.to_string(), got: f.kind().to_string() });
                }
                match k {
                    None => k = Some(f.joints()),
                    Some(k) => crate::error::check_len(k, f.joints())?,
                }
            }
        }
        Ok(set)
    }

    pub fn iter(&self) -> [Option<&SharedField>; 3] {
        [self.pose.as_ref(), self.velocity.as_ref(), self.acceleration.as_ref()]
    }

    pub fn get(&self, kind: FieldKind) -> Option<&SharedField> {
        match kind {
            FieldKind::Pose => self.pose.as_ref(),
            FieldKind::Velocity => self.velocity.as_ref(),
            FieldKind::Acceleration => self.acceleration.as_ref(),
        }
    }

    pub fn require(&self, kind: FieldKind) -> Result<&SharedField> {
        self.get(kind).ok_or(Error::MissingField(kind.name()))
    }

    pub fn joints(&self) -> Option<usize> {
        self.iter().into_iter().flatten().next().map(|f| f.joints())
    }
}

pub(crate) fn check_kind(field: &dyn DistanceField, kind: FieldKind) -> Result<()> {
    if field.kind() != kind {
        return Err(Error::FieldKind { expected: kind.to_string(), got: field.kind().to_string() });
    }
    Ok(())
}

fn quats_of(x: &[f64], offset: usize, k: usize) -> Vec<UnitQuaternion> {
    (0..k)
        .map(|j| {
            let c = &x[offset + 4 * j..offset + 4 * j + 4];
            UnitQuaternion { w: c[0], x: c[1], y: c[2], z: c[3] }
        })
        .collect()
}

fn axial_from_quat_grad(x: &[f64], g: &[f64], offset: usize, k: usize) -> PoseVelocity {
    let qs = quats_of(x, offset, k);
    PoseVelocity(
        qs.iter()
            .enumerate()
            .map(|(j, q)| {
                let dq = nalgebra::Vector4::from_column_slice(&g[offset + 4 * j..offset + 4 * j + 4]);
                quat_grad_to_axial(q, &dq)
            })
            .collect(),
    )
}

/// Value of a pose field and its body-frame axial gradient: component `j`
/// is `∂f/∂δ_j` for the perturbation `R_j ← R_j·exp(hat(δ_j))`.
pub fn pose_value_grad(field: &dyn DistanceField, pose: &Pose) -> Result<(f64, PoseVelocity)> {
    check_kind(field, FieldKind::Pose)?;
    let x = encoding::encode_pose(pose);
    let (f, g) = field.eval_grad(&x)?;
    Ok((f, axial_from_quat_grad(&x, &g, 0, pose.joints())))
}

/// Riemannian gradient of a pose field: the encoding Jacobian gives a 3×3
/// Euclidean gradient per joint, which is projected with `egrad2rgrad`.
pub fn field_rgrad_pose(field: &dyn DistanceField, pose: &Pose) -> Result<PoseTangent> {
    check_kind(field, FieldKind::Pose)?;
    let mut x = Vec::with_capacity(4 * pose.joints());
    let mut jacs = Vec::with_capacity(pose.joints());
    for r in pose.iter() {
        let (q, jac) = quat_encode_with_jacobian(r);
        x.extend(q.as_array());
        jacs.push(jac);
    }
    let (_, g) = field.eval_grad(&x)?;
    let eg: Vec<Matrix3<f64>> = jacs
        .iter()
        .enumerate()
        .map(|(j, jac)| (0..4).map(|c| jac[c] * g[4 * j + c]).sum())
        .collect();
    pose_rgrad(pose, &eg)
}

/// Gradient of a field evaluated at one motion state, split by block.
#[derive(Clone, Debug)]
pub struct StateGrad {
    pub value: f64,
    /// Gradient with respect to the main block (flat).
    pub main: Vec<f64>,
    /// Body-axial gradient through the pose (main block for pose fields,
    /// conditioning block otherwise).
    pub pose: PoseVelocity,
    /// Gradient through the conditioning velocity (acceleration fields).
    pub velocity: Option<PoseVelocity>,
}

pub fn state_value_grad(
    field: &dyn DistanceField,
    pose: &Pose,
    vel: &PoseVelocity,
    acc: &PoseAcceleration,
) -> Result<StateGrad> {
    let k = pose.joints();
    crate::error::check_len(field.joints(), k)?;
    let kind = field.kind();
    let x = encode_state(kind, pose, vel, acc);
    let (value, g) = field.eval_grad(&x)?;
    let main_dim = kind.main_dim(k);
    let out = match kind {
        FieldKind::Pose => StateGrad {
            value,
            main: g.clone(),
            pose: axial_from_quat_grad(&x, &g, 0, k),
            velocity: None,
        },
        FieldKind::Velocity => StateGrad {
            value,
            main: g[..main_dim].to_vec(),
            pose: axial_from_quat_grad(&x, &g, main_dim, k),
            velocity: None,
        },
        FieldKind::Acceleration => StateGrad {
            value,
            main: g[..main_dim].to_vec(),
            pose: axial_from_quat_grad(&x, &g, main_dim, k),
            velocity: Some(PoseVelocity::from_flat(&g[7 * k..])?),
        },
    };
    Ok(out)
}

/// Field value at one motion state.
pub fn state_value(field: &dyn DistanceField, pose: &Pose, vel: &PoseVelocity, acc: &PoseAcceleration) -> Result<f64> {
    field.eval(&encode_state(field.kind(), pose, vel, acc))
}
