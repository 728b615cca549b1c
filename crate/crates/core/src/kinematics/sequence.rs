use nalgebra::Vector3;

use crate::error::{check_len, Error, Result};
use crate::kinematics::estimate::estimate_dynamics;
use crate::product::{Pose, PoseAcceleration, PoseVelocity};

pub const DEFAULT_FPS: f64 = 30.0;

/// Root translation, pose, velocity and acceleration at one time step.
#[derive(Clone, Debug, PartialEq)]
pub struct MotionState {
    pub t_r: Vector3<f64>,
    pub pose: Pose,
    pub vel: PoseVelocity,
    pub acc: PoseAcceleration,
}

impl MotionState {
    pub fn at_rest(t_r: Vector3<f64>, pose: Pose) -> Self {
        let k = pose.joints();
        MotionState { t_r, pose, vel: PoseVelocity::zeros(k), acc: PoseAcceleration::zeros(k) }
    }

    pub fn joints(&self) -> usize {
        self.pose.joints()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MotionSequence {
    pub fps: f64,
    pub states: Vec<MotionState>,
}

impl MotionSequence {
    /// Validates `fps > 0`, a nonempty state list and uniform joint count.
    pub fn new(fps: f64, states: Vec<MotionState>) -> Result<Self> {
        if !(fps > 0.0 && fps.is_finite()) {
            return Err(Error::Config(format!("fps must be positive, got {fps}")));
        }
        let first = states.first().ok_or(Error::TooFewFrames { needed: 1, got: 0 })?;
        let k = first.joints();
        for s in &states {
            check_len(k, s.pose.joints())?;
            check_len(k, s.vel.joints())?;
            check_len(k, s.acc.joints())?;
        }
        Ok(MotionSequence { fps, states })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn joints(&self) -> usize {
        self.states[0].joints()
    }

    pub fn poses(&self) -> Vec<Pose> {
        self.states.iter().map(|s| s.pose.clone()).collect()
    }

    pub fn translations(&self) -> Vec<Vector3<f64>> {
        self.states.iter().map(|s| s.t_r).collect()
    }
}

/// Builds a sequence whose velocities (log-central) and accelerations
/// (central) are estimated from the poses. Translations default to zero.
pub fn rebuild_states(poses: &[Pose], fps: f64) -> Result<MotionSequence> {
    rebuild_states_with_translation(poses, &vec![Vector3::zeros(); poses.len()], fps)
}

pub fn rebuild_states_with_translation(poses: &[Pose], t_r: &[Vector3<f64>], fps: f64) -> Result<MotionSequence> {
    check_len(poses.len(), t_r.len())?;
    let (vel, acc) = estimate_dynamics(poses, fps)?;
    let states = poses
        .iter()
        .zip(t_r)
        .zip(vel.into_iter().zip(acc))
        .map(|((p, t), (v, a))| MotionState { t_r: *t, pose: p.clone(), vel: v, acc: a })
        .collect();
    MotionSequence::new(fps, states)
}

/// Expresses every frame in the root frame of frame 0: the root rotation
/// and translation of frame 0 become identity and zero. Body-frame
/// velocities and accelerations are unchanged.
pub fn canonicalize(seq: &MotionSequence) -> Result<MotionSequence> {
    let first = seq.states.first().ok_or(Error::TooFewFrames { needed: 1, got: 0 })?;
    let inv = first.pose[0].transpose();
    let origin = first.t_r;
    let states = seq
        .states
        .iter()
        .map(|s| {
            let mut pose = s.pose.clone();
            pose.0[0] = inv * s.pose[0];
            MotionState { t_r: inv.transform(&(s.t_r - origin)), pose, vel: s.vel.clone(), acc: s.acc.clone() }
        })
        .collect();
    MotionSequence::new(seq.fps, states)
}
