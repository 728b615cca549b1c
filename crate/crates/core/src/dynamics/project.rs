//! Normalized-gradient projection onto the zero level sets of the fields.
//!
//! Each iteration moves by `α·f` against the unit gradient direction:
//! through the exponential map for poses, additively for velocities and
//! accelerations. A step that does not lower `f` is shrunk until it does.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::fields::encoding::{encode_acceleration_input, encode_pose, encode_velocity_input};
use crate::fields::{check_kind, pose_value_grad, DistanceField, FieldKind, FieldSet};
use crate::kinematics::{rebuild_states_with_translation, MotionSequence, MotionState};
use crate::product::{pose_exp, Pose, PoseAcceleration, PoseVelocity};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectorConfig {
    #[serde(default = "default_enabled")]
    pub enabled: bool,
    /// Step scale `α`; a full step moves by `α·f`.
    #[serde(default = "default_step")]
    pub step: f64,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    /// Stop once `f < tolerance`.
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_shrink")]
    pub shrink: f64,
    #[serde(default = "default_max_backtracks")]
    pub max_backtracks: usize,
}

fn default_enabled() -> bool {
    true
}
fn default_step() -> f64 {
    1.0
}
fn default_max_iterations() -> usize {
    20
}
fn default_tolerance() -> f64 {
    1e-4
}
fn default_shrink() -> f64 {
    0.5
}
fn default_max_backtracks() -> usize {
    12
}

impl Default for ProjectorConfig {
    fn default() -> Self {
        ProjectorConfig {
            enabled: true,
            step: default_step(),
            max_iterations: default_max_iterations(),
            tolerance: default_tolerance(),
            shrink: default_shrink(),
            max_backtracks: default_max_backtracks(),
        }
    }
}

impl ProjectorConfig {
    pub fn disabled() -> Self {
        ProjectorConfig { enabled: false, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0) || !(self.shrink > 0.0 && self.shrink < 1.0) || !(self.tolerance >= 0.0) {
            return Err(Error::Config(format!("invalid projector configuration {self:?}")));
        }
        Ok(())
    }
}

/// How a projected sequence keeps velocities consistent with its poses.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Consistency {
    /// Project every state independently.
    #[default]
    None,
    /// Project poses, velocities and accelerations, then re-estimate
    /// velocities and accelerations from the projected poses.
    RebuildAfter,
    /// Project poses, re-estimate velocities and accelerations from them,
    /// then project those.
    RebuildBefore,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectionConfig {
    #[serde(default)]
    pub pose: ProjectorConfig,
    #[serde(default)]
    pub velocity: ProjectorConfig,
    #[serde(default)]
    pub acceleration: ProjectorConfig,
    #[serde(default)]
    pub consistency: Consistency,
}

impl ProjectionConfig {
    pub fn disabled() -> Self {
        ProjectionConfig {
            pose: ProjectorConfig::disabled(),
            velocity: ProjectorConfig::disabled(),
            acceleration: ProjectorConfig::disabled(),
            consistency: Consistency::None,
        }
    }

    pub fn get(&self, kind: FieldKind) -> &ProjectorConfig {
        match kind {
            FieldKind::Pose => &self.pose,
            FieldKind::Velocity => &self.velocity,
            FieldKind::Acceleration => &self.acceleration,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stop {
    Converged,
    MaxIterations,
    /// `‖grad‖ < 1e-12` while `f ≥ tolerance`.
    ZeroGradient,
    /// No shrunk step lowered `f`.
    Stalled,
    Disabled,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    /// Field value before the first and after every accepted iteration.
    pub values: Vec<f64>,
    /// Length of every accepted step (axial norm for poses).
    pub steps: Vec<f64>,
    pub backtracks: usize,
    pub stop: Stop,
}

impl Trace {
    fn disabled() -> Self {
        Trace { values: vec![], steps: vec![], backtracks: 0, stop: Stop::Disabled }
    }

    pub fn iterations(&self) -> usize {
        self.steps.len()
    }

    pub fn final_value(&self) -> Option<f64> {
        self.values.last().copied()
    }
}

pub const ZERO_GRADIENT: f64 = 1e-12;

/// Generic descent loop. `eval_grad` returns the value and the unit
/// direction's unnormalized source; `retract` applies a step of given length
/// against the normalized gradient.
fn descend<S: Clone>(
    start: S,
    cfg: &ProjectorConfig,
    eval: impl Fn(&S) -> Result<f64>,
    grad: impl Fn(&S) -> Result<(f64, Vec<f64>)>,
    retract: impl Fn(&S, &[f64], f64) -> Result<S>,
) -> Result<(S, Trace)> {
    cfg.validate()?;
    if !cfg.enabled {
        return Ok((start, Trace::disabled()));
    }
    let mut x = start;
    let (mut f, mut g) = grad(&x)?;
    let mut trace = Trace { values: vec![f], steps: vec![], backtracks: 0, stop: Stop::MaxIterations };
    for it in 0..=cfg.max_iterations {
        if f < cfg.tolerance {
            trace.stop = Stop::Converged;
            break;
        }
        if it == cfg.max_iterations {
            break;
        }
        let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(gn >= ZERO_GRADIENT) {
            trace.stop = Stop::ZeroGradient;
            break;
        }
        let dir: Vec<f64> = g.iter().map(|v| -v / gn).collect();
        let mut len = cfg.step * f;
        let mut accepted = None;
        for _ in 0..=cfg.max_backtracks {
            let cand = retract(&x, &dir, len)?;
            let fc = eval(&cand)?;
            if fc < f {
                accepted = Some(cand);
                break;
            }
            trace.backtracks += 1;
            len *= cfg.shrink;
        }
        match accepted {
            Some(cand) => {
                x = cand;
                (f, g) = grad(&x)?;
                trace.values.push(f);
                trace.steps.push(len);
            }
            None => {
                trace.stop = Stop::Stalled;
                break;
            }
        }
    }
    Ok((x, trace))
}

pub fn project_pose(pose: &Pose, field: &dyn DistanceField, cfg: &ProjectorConfig) -> Result<(Pose, Trace)> {
    check_kind(field, FieldKind::Pose)?;
    check_len(field.joints(), pose.joints())?;
    descend(
        pose.clone(),
        cfg,
        |p| field.eval(&encode_pose(p)),
        |p| {
            let (f, g) = pose_value_grad(field, p)?;
            Ok((f, g.to_flat()))
        },
        |p, dir, len| pose_exp(p, &PoseVelocity::from_flat(dir)?, len),
    )
}

fn project_block(
    main: Vec<f64>,
    cond: &[f64],
    field: &dyn DistanceField,
    cfg: &ProjectorConfig,
) -> Result<(Vec<f64>, Trace)> {
    let m = main.len();
    let join = |v: &[f64]| {
        let mut x = v.to_vec();
        x.extend_from_slice(cond);
        x
    };
    descend(
        main,
        cfg,
        |v| field.eval(&join(v)),
        |v| {
            let (f, g) = field.eval_grad(&join(v))?;
            Ok((f, g[..m].to_vec()))
        },
        |v, dir, len| Ok(v.iter().zip(dir).map(|(a, d)| a + len * d).collect()),
    )
}

pub fn project_velocity(
    vel: &PoseVelocity,
    field: &dyn DistanceField,
    pose: &Pose,
    cfg: &ProjectorConfig,
) -> Result<(PoseVelocity, Trace)> {
    check_kind(field, FieldKind::Velocity)?;
    check_len(field.joints(), vel.joints())?;
    check_len(vel.joints(), pose.joints())?;
    let x = encode_velocity_input(vel, pose);
    let k = vel.joints();
    let (v, trace) = project_block(vel.to_flat(), &x[3 * k..], field, cfg)?;
    Ok((PoseVelocity::from_flat(&v)?, trace))
}

pub fn project_acceleration(
    acc: &PoseAcceleration,
    field: &dyn DistanceField,
    pose: &Pose,
    vel: &PoseVelocity,
    cfg: &ProjectorConfig,
) -> Result<(PoseAcceleration, Trace)> {
    check_kind(field, FieldKind::Acceleration)?;
    check_len(field.joints(), acc.joints())?;
    check_len(acc.joints(), pose.joints())?;
    check_len(acc.joints(), vel.joints())?;
    let x = encode_acceleration_input(acc, pose, vel);
    let k = acc.joints();
    let (a, trace) = project_block(acc.to_flat(), &x[3 * k..], field, cfg)?;
    Ok((PoseAcceleration::from_flat(&a)?, trace))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateTrace {
    pub pose: Trace,
    pub velocity: Trace,
    pub acceleration: Trace,
}

fn run_or_skip<T>(
    field: Option<&crate::fields::SharedField>,
    cfg: &ProjectorConfig,
    value: T,
    f: impl FnOnce(&dyn DistanceField) -> Result<(T, Trace)>,
) -> Result<(T, Trace)> {
    match field {
        Some(field) if cfg.enabled => f(field.as_ref()),
        _ => Ok((value, Trace::disabled())),
    }
}

/// Projects the pose, then the velocity conditioned on the projected pose,
/// then the acceleration conditioned on both.
pub fn project_state(state: &MotionState, fields: &FieldSet, cfg: &ProjectionConfig) -> Result<(MotionState, StateTrace)> {
    let (pose, tp) =
        run_or_skip(fields.pose.as_ref(), &cfg.pose, state.pose.clone(), |f| project_pose(&state.pose, f, &cfg.pose))?;
    let (vel, tv) = run_or_skip(fields.velocity.as_ref(), &cfg.velocity, state.vel.clone(), |f| {
        project_velocity(&state.vel, f, &pose, &cfg.velocity)
    })?;
    let (acc, ta) = run_or_skip(fields.acceleration.as_ref(), &cfg.acceleration, state.acc.clone(), |f| {
        project_acceleration(&state.acc, f, &pose, &vel, &cfg.acceleration)
    })?;
    Ok((MotionState { t_r: state.t_r, pose, vel, acc }, StateTrace { pose: tp, velocity: tv, acceleration: ta }))
}

/// Projects every frame of a sequence (frames in parallel), keeping
/// velocities consistent with poses per `cfg.consistency`.
pub fn project_sequence(
    seq: &MotionSequence,
    fields: &FieldSet,
    cfg: &ProjectionConfig,
) -> Result<(MotionSequence, Vec<StateTrace>)> {
    let project_all = |seq: &MotionSequence, cfg: &ProjectionConfig| -> Result<(Vec<MotionState>, Vec<StateTrace>)> {
        let out: Vec<(MotionState, StateTrace)> =
            seq.states.par_iter().map(|s| project_state(s, fields, cfg)).collect::<Result<_>>()?;
        Ok(out.into_iter().unzip())
    };
    let rebuild = |states: &[MotionState]| -> Result<MotionSequence> {
        let poses: Vec<Pose> = states.iter().map(|s| s.pose.clone()).collect();
        let t_r: Vec<_> = states.iter().map(|s| s.t_r).collect();
        rebuild_states_with_translation(&poses, &t_r, seq.fps)
    };
    match cfg.consistency {
        Consistency::None => {
            let (states, traces) = project_all(seq, cfg)?;
            Ok((MotionSequence::new(seq.fps, states)?, traces))
        }
        Consistency::RebuildAfter => {
            let (states, traces) = project_all(seq, cfg)?;
            Ok((rebuild(&states)?, traces))
        }
        Consistency::RebuildBefore => {
            let poses_only = ProjectionConfig {
                velocity: ProjectorConfig::disabled(),
                acceleration: ProjectorConfig::disabled(),
                ..cfg.clone()
            };
            let (states, pose_traces) = project_all(seq, &poses_only)?;
            let rebuilt = rebuild(&states)?;
            let dyn_only = ProjectionConfig { pose: ProjectorConfig::disabled(), ..cfg.clone() };
            let (states, traces) = project_all(&rebuilt, &dyn_only)?;
            let traces = pose_traces
                .into_iter()
                .zip(traces)
                .map(|(p, t)| StateTrace { pose: p.pose, ..t })
                .collect();
            Ok((MotionSequence::new(seq.fps, states)?, traces))
        }
    }
}
