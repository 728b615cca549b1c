//! Projected geometric Euler rollout.
//!
//! For `t = 1..=T`:
//! `θ_t = Π^R(Exp_{θ_{t-1}}(α·θ̇_{t-1}))` and
//! `θ̇_t = Π^ω(θ̇_{t-1} + λ·θ̈_{t-1} | θ_t)`.
//! The velocity projection is conditioned on the projected pose of the same
//! frame. Accelerations are optionally projected first, conditioned on the
//! previous pose and velocity.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::dynamics::project::{project_acceleration, project_pose, project_velocity, ProjectionConfig, Trace};
use crate::error::{check_len, Error, Result};
use crate::fields::FieldSet;
use crate::kinematics::{rebuild_states, MotionSequence, MotionState, DEFAULT_FPS};
use crate::product::{pose_exp, Pose, PoseAcceleration, PoseVelocity};

/// How the rolled-out estimates become motion states.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Compose {
    /// Re-estimate velocities and accelerations from the rolled-out poses.
    #[default]
    Rebuild,
    /// Keep the integrated velocities and the (projected) input accelerations.
    Integrated,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorConfig {
    #[serde(default = "default_fps")]
    pub fps: f64,
    /// Velocity step `λ` in seconds; `1/fps` when absent.
    #[serde(default)]
    pub lambda: Option<f64>,
    /// Pose step `α` in seconds; `1/fps` when absent.
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub projection: ProjectionConfig,
    #[serde(default)]
    pub compose: Compose,
}

fn default_fps() -> f64 {
    DEFAULT_FPS
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            fps: DEFAULT_FPS,
            lambda: None,
            alpha: None,
            projection: ProjectionConfig::default(),
            compose: Compose::Rebuild,
        }
    }
}

impl IntegratorConfig {
    pub fn unprojected(fps: f64) -> Self {
        IntegratorConfig { fps, projection: ProjectionConfig::disabled(), ..Default::default() }
    }

    pub fn steps(&self) -> Result<(f64, f64)> {
        let lambda = self.lambda.unwrap_or(1.0 / self.fps);
        let alpha = self.alpha.unwrap_or(1.0 / self.fps);
        if !(self.fps > 0.0 && lambda > 0.0 && alpha > 0.0) {
            return Err(Error::Config(format!("integrator steps must be positive: {self:?}")));
        }
        Ok((lambda, alpha))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RolloutTrace {
    pub pose: Vec<Trace>,
    pub velocity: Vec<Trace>,
    pub acceleration: Vec<Trace>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Rollout {
    pub sequence: MotionSequence,
    /// Integrated velocities `θ̇_0..θ̇_T`.
    pub velocities: Vec<PoseVelocity>,
    pub trace: RolloutTrace,
}

/// Rolls out `accs.len() + 1` frames from `(pose0, vel0)`.
pub fn integrate(
    pose0: &Pose,
    vel0: &PoseVelocity,
    accs: &[PoseAcceleration],
    fields: &FieldSet,
    cfg: &IntegratorConfig,
) -> Result<Rollout> {
    let (lambda, alpha) = cfg.steps()?;
    let k = pose0.joints();
    check_len(k, vel0.joints())?;
    for a in accs {
        check_len(k, a.joints())?;
    }
    if let Some(fk) = fields.joints() {
        check_len(fk, k)?;
    }
    let pc = &cfg.projection;
    let mut trace = RolloutTrace::default();
    let mut poses = vec![pose0.clone()];
    let mut vels = vec![vel0.clone()];
    let mut used_accs = Vec::with_capacity(accs.len());
    for acc in accs {
        let prev_pose = poses.last().unwrap();
        let prev_vel = vels.last().unwrap();
        let acc = match fields.acceleration.as_ref().filter(|_| pc.acceleration.enabled) {
            Some(f) => {
                let (a, t) = project_acceleration(acc, f.as_ref(), prev_pose, prev_vel, &pc.acceleration)?;
                trace.acceleration.push(t);
                a
            }
            None => acc.clone(),
        };
        let predicted = pose_exp(prev_pose, prev_vel, alpha)?;
        let pose = match fields.pose.as_ref().filter(|_| pc.pose.enabled) {
            Some(f) => {
                let (p, t) = project_pose(&predicted, f.as_ref(), &pc.pose)?;
                trace.pose.push(t);
                p
            }
            None => predicted,
        };
        let raw = PoseVelocity(prev_vel.0.iter().zip(&acc.0).map(|(v, a)| v + a * lambda).collect());
        let vel = match fields.velocity.as_ref().filter(|_| pc.velocity.enabled) {
            Some(f) => {
                let (v, t) = project_velocity(&raw, f.as_ref(), &pose, &pc.velocity)?;
                trace.velocity.push(t);
                v
            }
            None => raw,
        };
        if !vel.is_finite() {
            return Err(Error::Divergence { iterations: poses.len(), energy: f64::NAN, trace: vec![] });
        }
        poses.push(pose);
        vels.push(vel);
        used_accs.push(acc);
    }
    let sequence = match cfg.compose {
        Compose::Rebuild if poses.len() >= 3 => rebuild_states(&poses, cfg.fps)?,
        _ => {
            used_accs.push(PoseAcceleration::zeros(k));
            let states = poses
                .iter()
                .zip(&vels)
                .zip(used_accs)
                .map(|((p, v), a)| MotionState { t_r: Vector3::zeros(), pose: p.clone(), vel: v.clone(), acc: a })
                .collect();
            MotionSequence::new(cfg.fps, states)?
        }
    };
    Ok(Rollout { sequence, velocities: vels, trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::forward_differences;
    use crate::so3::{exp_so3, geodesic_distance, Rotation3};

    fn none() -> FieldSet {
        FieldSet::default()
    }

    #[test]
    fn rest_stays_at_rest() {
        let p = Pose(vec![Rotation3::rot_x(0.3), Rotation3::rot_y(-0.2)]);
        let accs = vec![PoseAcceleration::zeros(2); 10];
        let r = integrate(&p, &PoseVelocity::zeros(2), &accs, &none(), &IntegratorConfig::unprojected(30.0)).unwrap();
        assert_eq!(r.sequence.len(), 11);
        for s in &r.sequence.states {
            assert_eq!(s.pose, p);
        }
    }

    #[test]
    fn constant_velocity_is_geodesic() {
        let w = Vector3::new(0.0, 0.0, 1.3);
        let fps = 30.0;
        let accs = vec![PoseAcceleration::zeros(1); 60];
        let r = integrate(&Pose::identity(1), &PoseVelocity(vec![w]), &accs, &none(), &IntegratorConfig::unprojected(fps))
            .unwrap();
        for (t, s) in r.sequence.states.iter().enumerate() {
            let exact = exp_so3(&(w * t as f64 / fps));
            assert!(geodesic_distance(&s.pose[0], &exact) < 1e-12, "{t}");
        }
    }

    #[test]
    fn forward_differences_replay_exactly() {
        let fps = 30.0;
        let poses: Vec<Pose> = (0..20)
            .map(|t| {
                let s = t as f64 / fps;
                Pose(vec![exp_so3(&Vector3::new(0.5 * s.sin(), 0.3 * s * s, -0.2 * s))])
            })
            .collect();
        let (v, a) = forward_differences(&poses, fps).unwrap();
        let r = integrate(&poses[0], &v[0], &a[..19], &none(), &IntegratorConfig::unprojected(fps)).unwrap();
        for (s, p) in r.sequence.states.iter().zip(&poses) {
            assert!(geodesic_distance(&s.pose[0], &p[0]) < 1e-10);
        }
    }

    #[test]
    fn integrated_compose_keeps_velocities() {
        let accs = vec![PoseAcceleration(vec![Vector3::new(1.0, 0.0, 0.0)]); 4];
        let cfg = IntegratorConfig { compose: Compose::Integrated, ..IntegratorConfig::unprojected(10.0) };
        let r = integrate(&Pose::identity(1), &PoseVelocity::zeros(1), &accs, &none(), &cfg).unwrap();
        for (t, s) in r.sequence.states.iter().enumerate() {
            assert!((s.vel[0].x - 0.1 * t as f64).abs() < 1e-12);
        }
        assert!(matches!(
            integrate(&Pose::identity(1), &PoseVelocity::zeros(2), &accs, &none(), &cfg),
            Err(Error::DimensionMismatch { .. })
        ));
        let bad = IntegratorConfig { lambda: Some(-1.0), ..cfg };
        assert!(integrate(&Pose::identity(1), &PoseVelocity::zeros(1), &accs, &none(), &bad).is_err());
    }
}
