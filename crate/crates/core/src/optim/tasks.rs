//! Motion generation and in-betweening on top of the integrator and the
//! two-stage fit.

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dynamics::{integrate, IntegratorConfig};
use crate::error::{Error, Result};
use crate::fields::FieldSet;
use crate::kinematics::{rebuild_states_with_translation, MotionSequence, MotionState, Skeleton};
use crate::optim::fit::{fit_sequence, FitConfig, FitResult};
use crate::optim::observation::Observation;
use crate::product::{pose_exp, pose_log, Pose, PoseAcceleration, PoseVelocity};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateConfig {
    #[serde(default = "default_frames")]
    pub frames: usize,
    /// Standard deviation of the per-frame velocity perturbation, rad/s.
    #[serde(default = "default_noise")]
    pub noise: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub fit: FitConfig,
}

fn default_frames() -> usize {
    60
}

fn default_noise() -> f64 {
    0.1
}

impl Default for GenerateConfig {
    fn default() -> Self {
        GenerateConfig {
            frames: default_frames(),
            noise: default_noise(),
            seed: 0,
            integrator: IntegratorConfig::default(),
            fit: FitConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Generated {
    /// The noisy pose/velocity random walk.
    pub noisy: MotionSequence,
    /// The projected rollout of the noisy accelerations.
    pub rollout: MotionSequence,
    /// The rollout refined by fitting to its own joints.
    pub refined: FitResult,
}

/// Generates `frames` frames from `seed`: the velocity follows a Gaussian
/// random walk and the poses are integrated from it; the resulting noisy
/// accelerations are rolled out with projection, and the rollout is refined
/// by a fit against its own joint positions.
pub fn generate_motion(seed: &MotionState, skel: &Skeleton, fields: &FieldSet, cfg: &GenerateConfig) -> Result<Generated> {
    if cfg.frames < 3 {
        return Err(Error::TooFewFrames { needed: 3, got: cfg.frames });
    }
    if !(cfg.noise >= 0.0) {
        return Err(Error::Config(format!("noise must be nonnegative, got {}", cfg.noise)));
    }
    let fps = cfg.integrator.fps;
    let k = seed.joints();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut gauss = |s: f64| -> Vector3<f64> {
        Vector3::from_fn(|_, _| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z * s
        })
    };
    let mut poses = vec![seed.pose.clone()];
    let mut vels = vec![PoseVelocity(seed.vel.0.iter().map(|v| v + gauss(cfg.noise)).collect())];
    for t in 1..cfg.frames {
        poses.push(pose_exp(&poses[t - 1], &vels[t - 1], 1.0 / fps)?);
        vels.push(PoseVelocity(vels[t - 1].0.iter().map(|v| v + gauss(cfg.noise)).collect()));
    }
    let accs: Vec<PoseAcceleration> = vels
        .windows(2)
        .map(|w| PoseAcceleration((0..k).map(|j| (w[1][j] - w[0][j]) * fps).collect()))
        .collect();
    let t_r = vec![seed.t_r; cfg.frames];
    let noisy = MotionSequence::new(
        fps,
        poses
            .iter()
            .zip(&vels)
            .enumerate()
            .map(|(t, (p, v))| MotionState {
                t_r: seed.t_r,
                pose: p.clone(),
                vel: v.clone(),
                acc: accs.get(t).cloned().unwrap_or_else(|| PoseAcceleration::zeros(k)),
            })
            .collect(),
    )?;
    let out = integrate(&poses[0], &vels[0], &accs, fields, &cfg.integrator)?;
    let rollout = rebuild_states_with_translation(&out.sequence.poses(), &t_r, fps)?;
    let obs = Observation::joints3d_from(&rollout, skel)?;
    let refined = fit_sequence(&obs, skel, &rollout, fields, &cfg.fit)?;
    Ok(Generated { noisy, rollout, refined })
}

/// Fills unobserved frames by constant-speed geodesic interpolation between
/// the bracketing observed frames (per joint); translations interpolate
/// linearly. Frames outside the first and last observed frame hold those.
pub fn geodesic_inbetween(seq: &MotionSequence, observed: &[bool]) -> Result<MotionSequence> {
    crate::error::check_len(seq.len(), observed.len())?;
    let keys: Vec<usize> = (0..seq.len()).filter(|t| observed[*t]).collect();
    if keys.len() < 2 {
        return Err(Error::Observation(format!("in-betweening needs at least 2 keyframes, got {}", keys.len())));
    }
    let mut poses: Vec<Pose> = seq.poses();
    let mut t_r = seq.translations();
    for t in 0..seq.len() {
        if observed[t] {
            continue;
        }
        let after = keys.iter().position(|k| *k > t);
        let (a, b) = match after {
            None => (*keys.last().unwrap(), *keys.last().unwrap()),
            Some(0) => (keys[0], keys[0]),
            Some(i) => (keys[i - 1], keys[i]),
        };
        if a == b {
            poses[t] = seq.states[a].pose.clone();
            t_r[t] = seq.states[a].t_r;
            continue;
        }
        let s = (t - a) as f64 / (b - a) as f64;
        let (pa, pb) = (&seq.states[a].pose, &seq.states[b].pose);
        poses[t] = pose_exp(pa, &pose_log(pa, pb)?, s)?;
        t_r[t] = seq.states[a].t_r * (1.0 - s) + seq.states[b].t_r * s;
    }
    rebuild_states_with_translation(&poses, &t_r, seq.fps)
}

/// In-betweening: geodesic initialization of the unobserved frames, then a
/// fit with the observed frames' joints as 3D observations.
pub fn inbetween(
    seq: &MotionSequence,
    observed: &[bool],
    skel: &Skeleton,
    fields: &FieldSet,
    cfg: &FitConfig,
) -> Result<(MotionSequence, FitResult)> {
    let init = geodesic_inbetween(seq, observed)?;
    let obs = Observation::joints3d_from(seq, skel)?.masked(|t, _| !observed[t]);
    let fit = fit_sequence(&obs, skel, &init, fields, cfg)?;
    Ok((init, fit))
}
