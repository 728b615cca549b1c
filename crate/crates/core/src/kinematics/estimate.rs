//! Finite-difference estimates of body-frame angular velocity and
//! acceleration from pose sequences, plus the reverse-mode adjoints the
//! optimizer needs.

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::product::{Pose, PoseAcceleration, PoseVelocity};
use crate::so3::{self, exp_so3, log_so3, skew_part, vee_unchecked};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VelocityScheme {
    /// `ω_t = vee(log(R_{t-1}ᵀ R_{t+1}))·fps/2`
    #[default]
    LogCentral,
    /// `ω_t = vee(skew(R_tᵀ (R_{t+1} - R_{t-1})))·fps/2`
    MatrixCentral,
}

#[derive(Clone, Copy, Debug)]
pub enum AccelerationScheme<'a> {
    /// `α_t = (ω_{t+1} - ω_{t-1})·fps/2`
    Central,
    /// Neighbor velocities are parallel-transported to frame `t` along the
    /// connecting geodesics before differencing.
    LogTransport(&'a [Pose]),
}

fn require_frames(n: usize) -> Result<()> {
    if n < 3 {
        Err(Error::TooFewFrames { needed: 3, got: n })
    } else {
        Ok(())
    }
}

fn check_joints(poses: &[Pose]) -> Result<usize> {
    let k = poses[0].joints();
    for p in poses {
        crate::error::check_len(k, p.joints())?;
    }
    Ok(k)
}

/// Per-frame body-frame angular velocities. Endpoints use one-sided
/// first-order differences.
pub fn estimate_velocity(poses: &[Pose], fps: f64, scheme: VelocityScheme) -> Result<Vec<PoseVelocity>> {
    require_frames(poses.len())?;
    let k = check_joints(poses)?;
    let n = poses.len();
    let log_diff = |a: &Pose, b: &Pose, j: usize, scale: f64| log_so3(&(a[j].transpose() * b[j])) * scale;
    let mat_diff = |c: &Pose, a: &Pose, b: &Pose, j: usize, scale: f64| {
        vee_unchecked(&skew_part(&(c[j].matrix().transpose() * (b[j].matrix() - a[j].matrix())))) * scale
    };
    let out = (0..n)
        .map(|t| {
            let (a, b, c, scale) = if t == 0 {
                (0, 1, 0, fps)
            } else if t == n - 1 {
                (n - 2, n - 1, n - 1, fps)
            } else {
                (t - 1, t + 1, t, 0.5 * fps)
            };
            PoseVelocity(
                (0..k)
                    .map(|j| match scheme {
                        VelocityScheme::LogCentral => log_diff(&poses[a], &poses[b], j, scale),
                        VelocityScheme::MatrixCentral => mat_diff(&poses[c], &poses[a], &poses[b], j, scale),
                    })
                    .collect(),
            )
        })
        .collect();
    Ok(out)
}

/// Per-frame angular accelerations from per-frame velocities.
pub fn estimate_acceleration(
    vels: &[PoseVelocity],
    fps: f64,
    scheme: AccelerationScheme<'_>,
) -> Result<Vec<PoseAcceleration>> {
    require_frames(vels.len())?;
    let n = vels.len();
    let k = vels[0].joints();
    if let AccelerationScheme::LogTransport(poses) = scheme {
        crate::error::check_len(n, poses.len())?;
        check_joints(poses)?;
        crate::error::check_len(k, poses[0].joints())?;
    }
    let transported = |from: usize, to: usize, j: usize| -> Vector3<f64> {
        match scheme {
            AccelerationScheme::Central => vels[from][j],
            AccelerationScheme::LogTransport(poses) => {
                if from == to {
                    return vels[from][j];
                }
                // Levi-Civita transport along exp(sV) from `from` to `to`:
                // η ← exp(-V/2)·η with V = log(R_fromᵀ R_to).
                let v = log_so3(&(poses[from][j].transpose() * poses[to][j]));
                exp_so3(&(v * -0.5)) * vels[from][j]
            }
        }
    };
    let out = (0..n)
        .map(|t| {
            let (a, b, scale) = if t == 0 {
                (0, 1, fps)
            } else if t == n - 1 {
                (n - 2, n - 1, fps)
            } else {
                (t - 1, t + 1, 0.5 * fps)
            };
            PoseAcceleration((0..k).map(|j| (transported(b, t, j) - transported(a, t, j)) * scale).collect())
        })
        .collect();
    Ok(out)
}

/// Velocity and central acceleration with the default schemes.
pub fn estimate_dynamics(poses: &[Pose], fps: f64) -> Result<(Vec<PoseVelocity>, Vec<PoseAcceleration>)> {
    let vel = estimate_velocity(poses, fps, VelocityScheme::LogCentral)?;
    let acc = estimate_acceleration(&vel, fps, AccelerationScheme::Central)?;
    Ok((vel, acc))
}

/// Reverse mode of [`estimate_velocity`] with [`VelocityScheme::LogCentral`]:
/// maps `∂E/∂ω_t` to `∂E/∂δ_t`, where `δ_t` perturbs frame `t` as
/// `R ← R·exp(hat(δ))`. Accumulates into `out`.
pub fn velocity_adjoint(poses: &[Pose], fps: f64, grad_vel: &[PoseVelocity], out: &mut [PoseVelocity]) {
    let n = poses.len();
    let k = poses[0].joints();
    for t in 0..n {
        let (a, b, scale) = if t == 0 {
            (0, 1, fps)
        } else if t == n - 1 {
            (n - 2, n - 1, fps)
        } else {
            (t - 1, t + 1, 0.5 * fps)
        };
        for j in 0..k {
            let g = grad_vel[t][j];
            if g == Vector3::zeros() {
                continue;
            }
            let phi = log_so3(&(poses[a][j].transpose() * poses[b][j]));
            // log(exp(-δ_a)·A·exp(δ_b)) ≈ φ - J_l⁻¹ δ_a + J_r⁻¹ δ_b
            let gb = so3::right_jacobian_inv(&phi).transpose() * g * scale;
            let ga = so3::left_jacobian_inv(&phi).transpose() * g * scale;
            out[b].0[j] += gb;
            out[a].0[j] -= ga;
        }
    }
}

/// Reverse mode of the central acceleration scheme: maps `∂E/∂α_t` to
/// `∂E/∂ω_t`, accumulating into `out`.
pub fn acceleration_adjoint(fps: f64, grad_acc: &[PoseAcceleration], out: &mut [PoseVelocity]) {
    let n = grad_acc.len();
    for (t, g) in grad_acc.iter().enumerate() {
        let (a, b, scale) = if t == 0 {
            (0, 1, fps)
        } else if t == n - 1 {
            (n - 2, n - 1, fps)
        } else {
            (t - 1, t + 1, 0.5 * fps)
        };
        for (j, gj) in g.0.iter().enumerate() {
            out[b].0[j] += gj * scale;
            out[a].0[j] -= gj * scale;
        }
    }
}

/// Forward differences `v_t = log(R_tᵀ R_{t+1})·fps` and
/// `a_t = (v_{t+1} - v_t)·fps`; the last entries repeat the previous value
/// (velocity) or are zero (acceleration). An explicit Euler rollout with
/// step `1/fps` reproduces the poses exactly from these.
pub fn forward_differences(poses: &[Pose], fps: f64) -> Result<(Vec<PoseVelocity>, Vec<PoseAcceleration>)> {
    if poses.len() < 2 {
        return Err(Error::TooFewFrames { needed: 2, got: poses.len() });
    }
    let k = check_joints(poses)?;
    let n = poses.len();
    let mut vel: Vec<PoseVelocity> = poses
        .windows(2)
        .map(|w| PoseVelocity((0..k).map(|j| log_so3(&(w[0][j].transpose() * w[1][j])) * fps).collect()))
        .collect();
    vel.push(vel[n - 2].clone());
    let mut acc: Vec<PoseAcceleration> = vel
        .windows(2)
        .map(|w| PoseAcceleration((0..k).map(|j| (w[1][j] - w[0][j]) * fps).collect()))
        .collect();
    acc.push(PoseAcceleration(vec![Vector3::zeros(); k]));
    Ok((vel, acc))
}
