//! Two-stage fitting: gradient descent on `E_I`, then on `E_II′` with a
//! projected rollout after every iteration.
//!
//! Each iteration scales the gradient per variable group, takes a trial
//! step (Barzilai-Borwein estimate, or twice the last accepted step) and
//! halves it until the Armijo condition holds.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::dynamics::{integrate, IntegratorConfig};
use crate::error::{Error, Result};
use crate::fields::{FieldKind, FieldSet};
use crate::kinematics::{forward_differences, forward_kinematics, MotionSequence, Skeleton};
use crate::optim::energy::{EnergyTerms, EnergyWeights, Gradient, Problem, Stage, Variables};
use crate::optim::losses::contact_heuristic;
use crate::optim::observation::Observation;
use crate::product::Pose;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepScales {
    #[serde(default = "one")]
    pub translation: f64,
    #[serde(default = "one")]
    pub pose: f64,
    #[serde(default = "one")]
    pub beta: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for StepScales {
    fn default() -> Self {
        StepScales { translation: 1.0, pose: 1.0, beta: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContactConfig {
    /// Joints that may touch the ground; none by default.
    #[serde(default)]
    pub joints: Vec<usize>,
    /// Contact when the joint height is below this (meters) ...
    #[serde(default = "default_contact_height")]
    pub height: f64,
    /// ... and its speed below this (m/s).
    #[serde(default = "default_contact_speed")]
    pub speed: f64,
}

fn default_contact_height() -> f64 {
    0.05
}
fn default_contact_speed() -> f64 {
    0.2
}

impl Default for ContactConfig {
    fn default() -> Self {
        ContactConfig { joints: vec![], height: default_contact_height(), speed: default_contact_speed() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    #[serde(default)]
    pub weights: EnergyWeights,
    #[serde(default = "default_stage1")]
    pub stage1_iterations: usize,
    #[serde(default = "default_stage2")]
    pub stage2_iterations: usize,
    #[serde(default)]
    pub step_scales: StepScales,
    #[serde(default = "default_initial_step")]
    pub initial_step: f64,
    #[serde(default = "default_armijo")]
    pub armijo: f64,
    #[serde(default = "default_backtracks")]
    pub max_backtracks: usize,
    /// Stop a stage after this many consecutive failed line searches.
    #[serde(default = "default_patience")]
    pub patience: usize,
    #[serde(default = "yes")]
    pub barzilai_borwein: bool,
    /// Run the projected rollout after every stage-II iteration.
    #[serde(default = "yes")]
    pub rollout: bool,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub contact: ContactConfig,
    #[serde(default = "yes")]
    pub optimize_translation: bool,
    #[serde(default = "yes")]
    pub optimize_beta: bool,
}

fn default_stage1() -> usize {
    200
}
fn default_stage2() -> usize {
    500
}
fn default_initial_step() -> f64 {
    1e-3
}
fn default_armijo() -> f64 {
    1e-4
}
fn default_backtracks() -> usize {
    30
}
fn default_patience() -> usize {
    5
}
fn yes() -> bool {
    true
}

impl Default for FitConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fit settings have defaults")
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        let s = &self.step_scales;
        let ok = self.initial_step > 0.0
            && self.armijo > 0.0
            && self.armijo < 1.0
            && self.patience > 0
            && [s.translation, s.pose, s.beta].iter().all(|v| *v >= 0.0 && v.is_finite());
        if !ok {
            return Err(Error::Config(format!("invalid fit configuration {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitStop {
    /// Iteration budget exhausted.
    Budget,
    /// `patience` consecutive line searches found no decrease.
    Stalled,
    /// Zero gradient.
    Stationary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: Stage,
    /// Stage energy before the first and after every iteration.
    pub energy: Vec<f64>,
    pub iterations: usize,
    pub accepted_steps: usize,
    pub backtracks: usize,
    pub rollouts_accepted: usize,
    pub stop: FitStop,
    pub terms: EnergyTerms,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub stage1: StageReport,
    pub stage2: Option<StageReport>,
    pub log_beta: Vec<f64>,
    /// Number of (frame, joint) pairs flagged as contacts.
    pub contacts: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitResult {
    pub sequence: MotionSequence,
    /// Output of stage I alone.
    pub stage1: MotionSequence,
    /// Skeleton with the fitted bone scales.
    pub skeleton: Skeleton,
    pub report: FitReport,
}

/// Identity poses; root translations follow the observed root joint where
/// it is visible in 3D, zero otherwise.
pub fn initial_sequence(obs: &Observation, k: usize, fps: f64) -> Result<MotionSequence> {
    let n = obs.frames();
    let t_r: Vec<Vector3<f64>> = match obs {
        Observation::Joints3d { frames } => {
            frames.iter().map(|f| if f.visible[0] { f.points[0] } else { Vector3::zeros() }).collect()
        }
        _ => vec![Vector3::zeros(); n],
    };
    crate::kinematics::rebuild_states_with_translation(&vec![Pose::identity(k); n], &t_r, fps)
}

struct StageRun<'a, 'b> {
    problem: &'a Problem<'b>,
    cfg: &'a FitConfig,
    stage: Stage,
}

impl StageRun<'_, '_> {
    fn direction(&self, g: &Gradient) -> Gradient {
        let s = &self.cfg.step_scales;
        g.scaled(
            if self.cfg.optimize_translation { s.translation } else { 0.0 },
            s.pose,
            if self.cfg.optimize_beta { s.beta } else { 0.0 },
        )
    }

    fn evaluate(&self, vars: &Variables, iterations: usize, trace: &[f64]) -> Result<(EnergyTerms, Gradient)> {
        let (terms, g) = self.problem.evaluate(vars, self.stage, true)?;
        let g = g.expect("gradient requested");
        if !terms.total.is_finite() || !g.is_finite() {
            return Err(Error::Divergence { iterations, energy: terms.total, trace: trace.to_vec() });
        }
        Ok((terms, g))
    }

    /// Replays the poses through the projected integrator; keeps the result
    /// when it does not raise the energy.
    fn rollout(&self, vars: &Variables, energy: f64) -> Result<Option<(Variables, f64)>> {
        let fps = self.problem.fps;
        if vars.frames() < 3 {
            return Ok(None);
        }
        let (v, a) = forward_differences(&vars.poses, fps)?;
        let icfg = IntegratorConfig { fps, ..self.cfg.integrator.clone() };
        let out = integrate(&vars.poses[0], &v[0], &a[..vars.frames() - 1], self.problem.fields, &icfg)?;
        let cand = Variables { poses: out.sequence.poses(), ..vars.clone() };
        let e = self.problem.energy(&cand, self.stage)?.total;
        Ok((e.is_finite() && e <= energy).then_some((cand, e)))
    }

    fn run(&self, start: Variables, budget: usize) -> Result<(Variables, StageReport)> {
        let cfg = self.cfg;
        let mut x = start;
        let mut trace = vec![];
        let (mut terms, mut g) = self.evaluate(&x, 0, &trace)?;
        trace.push(terms.total);
        let mut report = StageReport {
            stage: self.stage,
            energy: vec![],
            iterations: 0,
            accepted_steps: 0,
            backtracks: 0,
            rollouts_accepted: 0,
            stop: FitStop::Budget,
            terms: terms.clone(),
        };
        let mut step = cfg.initial_step;
        let mut failures = 0;
        let mut prev: Option<(Gradient, Gradient, f64)> = None;
        for it in 0..budget {
            report.iterations = it + 1;
            let d = self.direction(&g);
            let slope = g.dot(&d);
            if slope <= 0.0 {
                report.stop = FitStop::Stationary;
                report.iterations = it;
                break;
            }
            if cfg.barzilai_borwein {
                if let Some((g_old, d_old, eta)) = &prev {
                    let denom = -d_old.dot(&g.sub(g_old));
                    if denom > 0.0 {
                        step = (eta * g_old.dot(d_old) / denom).clamp(1e-12, 1e6);
                    }
                }
            }
            let mut accepted = None;
            for _ in 0..=cfg.max_backtracks {
                let cand = x.retract(&d, step)?;
                let e = self.problem.energy(&cand, self.stage)?.total;
                if e.is_finite() && e <= terms.total - cfg.armijo * step * slope {
                    accepted = Some(cand);
                    break;
                }
                report.backtracks += 1;
                step *= 0.5;
            }
            let mut moved = false;
            match accepted {
                Some(cand) => {
                    x = cand;
                    failures = 0;
                    report.accepted_steps += 1;
                    moved = true;
                }
                None => {
                    failures += 1;
                    step = cfg.initial_step;
                    prev = None;
                }
            }
            let mut rolled = false;
            if self.stage == Stage::II && cfg.rollout {
                let e = self.problem.energy(&x, self.stage)?.total;
                if let Some((cand, _)) = self.rollout(&x, e)? {
                    if cand != x {
                        x = cand;
                        report.rollouts_accepted += 1;
                        rolled = true;
                        failures = 0;
                    }
                }
            }
            if moved || rolled {
                let (t, g_new) = self.evaluate(&x, it + 1, &trace)?;
                prev = (moved && !rolled).then(|| (g.clone(), d.clone(), step));
                terms = t;
                g = g_new;
            }
            if moved {
                step *= 2.0;
            }
            trace.push(terms.total);
            if failures >= cfg.patience {
                report.stop = FitStop::Stalled;
                break;
            }
        }
        report.energy = trace;
        report.terms = terms;
        Ok((x, report))
    }
}

/// Fits a sequence to observations: stage I over `E_I`, then stage II over
/// `E_II′` when `stage2_iterations > 0`.
pub fn fit_sequence(
    obs: &Observation,
    skel: &Skeleton,
    init: &MotionSequence,
    fields: &FieldSet,
    cfg: &FitConfig,
) -> Result<FitResult> {
    cfg.validate()?;
    let fps = init.fps;
    let vars = Variables::from_sequence(init);
    let probs = if cfg.contact.joints.is_empty() {
        vec![]
    } else {
        let pos: Vec<Vec<Vector3<f64>>> = match obs {
            Observation::Joints3d { frames } => frames.iter().map(|f| f.points.clone()).collect(),
            _ => init
                .states
                .iter()
                .map(|s| Ok(forward_kinematics(skel, &s.t_r, &s.pose)?.0))
                .collect::<Result<_>>()?,
        };
        contact_heuristic(&pos, fps, &cfg.contact.joints, cfg.contact.height, cfg.contact.speed)
    };
    let problem = Problem {
        observation: obs,
        skeleton: skel,
        weights: &cfg.weights,
        fields,
        fps,
        contact_joints: &cfg.contact.joints,
        contact_probs: &probs,
    };
    problem.validate(&vars)?;
    if cfg.stage2_iterations > 0 {
        for kind in FieldKind::ALL {
            fields.require(kind)?;
        }
    }

    let stage1 = StageRun { problem: &problem, cfg, stage: Stage::I };
    let (vars, r1) = stage1.run(vars, cfg.stage1_iterations)?;
    log::info!("stage I: {} iterations, energy {:.6e}", r1.iterations, r1.terms.total);
    let stage1_seq = vars.to_sequence(fps)?;
    let (vars, r2) = if cfg.stage2_iterations > 0 {
        let stage2 = StageRun { problem: &problem, cfg, stage: Stage::II };
        let (v, r) = stage2.run(vars, cfg.stage2_iterations)?;
        log::info!("stage II: {} iterations, energy {:.6e}", r.iterations, r.terms.total);
        (v, Some(r))
    } else {
        (vars, None)
    };
    Ok(FitResult {
        sequence: vars.to_sequence(fps)?,
        stage1: stage1_seq,
        skeleton: vars.skeleton(skel)?,
        report: FitReport {
            stage1: r1,
            stage2: r2,
            log_beta: vars.log_beta.clone(),
            contacts: probs.iter().flatten().filter(|c| **c > 0.0).count(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{synth_sequence, SynthMotionSpec};
    use crate::fields::{CorpusField, SharedField};
    use crate::datagen::{MetricWeights, NnIndex};
    use crate::fields::encode_state;
    use crate::optim::metrics::mpjpe_mm;
    use std::sync::Arc;

    /// Squared distance to a corpus: smooth, zero on the corpus.
    #[derive(Debug)]
    struct Squared(SharedField);

    impl crate::fields::DistanceField for Squared {
        fn kind(&self) -> FieldKind {
            self.0.kind()
        }

        fn joints(&self) -> usize {
            self.0.joints()
        }

        fn eval(&self, x: &[f64]) -> Result<f64> {
            Ok(self.0.eval(x)?.powi(2))
        }

        fn eval_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
            let (f, g) = self.0.eval_grad(x)?;
            Ok((f * f, g.into_iter().map(|v| 2.0 * f * v).collect()))
        }
    }

    fn exact_fields(seq: &MotionSequence) -> FieldSet {
        let poses = seq.poses();
        let (vels, accs) = crate::kinematics::estimate_dynamics(&poses, seq.fps).unwrap();
        let mk = |kind| -> SharedField {
            let rows = (0..poses.len()).map(|t| encode_state(kind, &poses[t], &vels[t], &accs[t])).collect();
            let idx = NnIndex::new(kind, seq.joints(), rows, MetricWeights::default()).unwrap();
            Arc::new(Squared(Arc::new(CorpusField::new(Arc::new(idx)).unwrap())))
        };
        FieldSet::new(Some(mk(FieldKind::Pose)), Some(mk(FieldKind::Velocity)), Some(mk(FieldKind::Acceleration)))
            .unwrap()
    }

    fn toy(k: usize, frames: usize) -> MotionSequence {
        let spec = SynthMotionSpec { frames, ..SynthMotionSpec::toy(k, 3) };
        synth_sequence(&spec, 5).unwrap()
    }

    #[test]
    fn data_only_fit_interpolates_observations() {
        let seq = toy(3, 12);
        let skel = Skeleton::chain(3);
        let obs = Observation::joints3d_from(&seq, &skel).unwrap();
        let cfg = FitConfig {
            weights: EnergyWeights::data_only(),
            stage1_iterations: 400,
            stage2_iterations: 0,
            ..Default::default()
        };
        let init = initial_sequence(&obs, 3, seq.fps).unwrap();
        let out = fit_sequence(&obs, &skel, &init, &FieldSet::default(), &cfg).unwrap();
        let e = &out.report.stage1.energy;
        assert!(e.windows(2).all(|w| w[1] <= w[0]));
        let err = mpjpe_mm(&out.sequence, &out.skeleton, &seq, &skel).unwrap();
        assert!(err < 1.0, "{err} mm");
        for s in &out.sequence.states {
            for r in s.pose.iter() {
                assert!((r.matrix().transpose() * r.matrix() - nalgebra::Matrix3::identity()).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn noiseless_two_stage_fit_recovers_motion() {
        let seq = toy(3, 10);
        let skel = Skeleton::chain(3);
        let obs = Observation::joints3d_from(&seq, &skel).unwrap();
        let fields = exact_fields(&seq);
        // the exact fields vanish on the truth; smoothing would bias the fit
        let weights = EnergyWeights { smooth: 0.0, ..Default::default() };
        let cfg = FitConfig { weights, stage1_iterations: 300, stage2_iterations: 100, ..Default::default() };
        let poses: Vec<Pose> = seq
            .poses()
            .into_iter()
            .map(|p| Pose(p.0.iter().map(|r| *r * crate::so3::Rotation3::rot_x(0.01)).collect()))
            .collect();
        let t_r: Vec<Vector3<f64>> = seq.translations().iter().map(|t| t + Vector3::new(0.005, 0.0, 0.0)).collect();
        let init = crate::kinematics::rebuild_states_with_translation(&poses, &t_r, seq.fps).unwrap();
        let before = mpjpe_mm(&init, &skel, &seq, &skel).unwrap();
        let out = fit_sequence(&obs, &skel, &init, &fields, &cfg).unwrap();
        for r in [&out.report.stage1, out.report.stage2.as_ref().unwrap()] {
            assert!(r.energy.windows(2).all(|w| w[1] <= w[0]), "{:?}", r.energy);
        }
        let err = mpjpe_mm(&out.sequence, &out.skeleton, &seq, &skel).unwrap();
        assert!(err < 1.0 && err < before / 5.0, "{before} -> {err} mm");
    }

    #[test]
    fn stage_two_needs_all_fields() {
        let seq = toy(2, 5);
        let skel = Skeleton::chain(2);
        let obs = Observation::joints3d_from(&seq, &skel).unwrap();
        let r = fit_sequence(&obs, &skel, &seq, &FieldSet::default(), &FitConfig::default());
        assert!(matches!(r, Err(Error::MissingField(_))));
        let bad = FitConfig { initial_step: -1.0, ..Default::default() };
        assert!(fit_sequence(&obs, &skel, &seq, &FieldSet::default(), &bad).is_err());
    }
}
