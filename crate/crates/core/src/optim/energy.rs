//! Stage energies `E_I` and `E_II′` over the decision variables and their
//! gradients.
//!
//! Variables are per-frame root translations, per-frame poses and per-bone
//! log scale offsets `b`, with `β_j = β⁰_j·exp(b_j)` and `L_β = ‖b‖²`.
//! Pose gradients are body-frame axial (`R ← R·exp(hat(δ))`).

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::fields::encoding::encode_pose;
use crate::fields::{pose_value_grad, state_value, state_value_grad, FieldKind, FieldSet};
use crate::kinematics::{
    acceleration_adjoint, estimate_acceleration, estimate_velocity, fk_adjoint, forward_kinematics_full,
    rebuild_states_with_translation, velocity_adjoint, AccelerationScheme, MotionSequence, Skeleton, VelocityScheme,
};
use crate::optim::losses::{self, Contacts, Positions};
use crate::optim::observation::Observation;
use crate::product::{pose_exp, Pose, PoseAcceleration, PoseVelocity};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyWeights {
    /// 3D joint and point-cloud data terms.
    #[serde(default = "one")]
    pub data: f64,
    #[serde(default = "default_data_2d")]
    pub data_2d: f64,
    #[serde(default = "default_prior")]
    pub beta: f64,
    #[serde(default = "default_prior")]
    pub pose: f64,
    #[serde(default = "default_smooth")]
    pub smooth: f64,
    #[serde(default = "default_smooth")]
    pub bone_length: f64,
    #[serde(default = "one")]
    pub velocity: f64,
    #[serde(default = "default_acceleration")]
    pub acceleration: f64,
    #[serde(default = "one")]
    pub contact_joint: f64,
    #[serde(default = "one")]
    pub contact_velocity: f64,
    #[serde(default = "one")]
    pub contact_height: f64,
    /// Height slack `δ` of the contact height term, meters.
    #[serde(default = "default_slack")]
    pub contact_slack: f64,
    /// Geman-McClure scale `c`, pixels.
    #[serde(default = "default_gm")]
    pub geman_mcclure_scale: f64,
    /// Bisquare cutoff `c_bs`, meters.
    #[serde(default = "default_bisquare")]
    pub bisquare_cutoff: f64,
}

fn one() -> f64 {
    1.0
}
fn default_data_2d() -> f64 {
    1e-3
}
fn default_prior() -> f64 {
    8e-2
}
fn default_smooth() -> f64 {
    10.0
}
fn default_acceleration() -> f64 {
    5e-2
}
fn default_slack() -> f64 {
    0.02
}
fn default_gm() -> f64 {
    100.0
}
fn default_bisquare() -> f64 {
    0.2
}

impl Default for EnergyWeights {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all weights have defaults")
    }
}

impl EnergyWeights {
    /// Data terms only.
    pub fn data_only() -> Self {
        EnergyWeights {
            beta: 0.0,
            pose: 0.0,
            smooth: 0.0,
            bone_length: 0.0,
            velocity: 0.0,
            acceleration: 0.0,
            contact_joint: 0.0,
            contact_velocity: 0.0,
            contact_height: 0.0,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let w = [
            self.data,
            self.data_2d,
            self.beta,
            self.pose,
            self.smooth,
            self.bone_length,
            self.velocity,
            self.acceleration,
            self.contact_joint,
            self.contact_velocity,
            self.contact_height,
            self.contact_slack,
        ];
        if w.iter().any(|v| !(*v >= 0.0 && v.is_finite())) || !(self.geman_mcclure_scale > 0.0) || !(self.bisquare_cutoff > 0.0)
        {
            return Err(Error::Config(format!("invalid energy weights {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    I,
    II,
}

/// Decision variables.
#[derive(Clone, Debug, PartialEq)]
pub struct Variables {
    pub t_r: Vec<Vector3<f64>>,
    pub poses: Vec<Pose>,
    pub log_beta: Vec<f64>,
}

impl Variables {
    pub fn from_sequence(seq: &MotionSequence) -> Self {
        Variables { t_r: seq.translations(), poses: seq.poses(), log_beta: vec![0.0; seq.joints()] }
    }

    pub fn frames(&self) -> usize {
        self.poses.len()
    }

    pub fn skeleton(&self, base: &Skeleton) -> Result<Skeleton> {
        check_len(base.joints(), self.log_beta.len())?;
        base.with_beta(base.beta().iter().zip(&self.log_beta).map(|(b, l)| b * l.exp()).collect())
    }

    pub fn to_sequence(&self, fps: f64) -> Result<MotionSequence> {
        rebuild_states_with_translation(&self.poses, &self.t_r, fps)
    }

    /// `x ← x - step·d` with poses updated through the exponential map.
    pub fn retract(&self, d: &Gradient, step: f64) -> Result<Self> {
        Ok(Variables {
            t_r: self.t_r.iter().zip(&d.t_r).map(|(t, g)| t - g * step).collect(),
            poses: self.poses.iter().zip(&d.poses).map(|(p, g)| pose_exp(p, g, -step)).collect::<Result<_>>()?,
            log_beta: self.log_beta.iter().zip(&d.log_beta).map(|(b, g)| b - g * step).collect(),
        })
    }
}

/// Gradient with respect to [`Variables`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradient {
    pub t_r: Vec<Vector3<f64>>,
    pub poses: Vec<PoseVelocity>,
    pub log_beta: Vec<f64>,
}

impl Gradient {
    pub fn zeros(frames: usize, k: usize) -> Self {
        Gradient { t_r: vec![Vector3::zeros(); frames], poses: vec![PoseVelocity::zeros(k); frames], log_beta: vec![0.0; k] }
    }

    pub fn dot(&self, o: &Gradient) -> f64 {
        self.t_r.iter().zip(&o.t_r).map(|(a, b)| a.dot(b)).sum::<f64>()
            + self.poses.iter().zip(&o.poses).map(|(a, b)| a.0.iter().zip(&b.0).map(|(x, y)| x.dot(y)).sum::<f64>()).sum::<f64>()
            + self.log_beta.iter().zip(&o.log_beta).map(|(a, b)| a * b).sum::<f64>()
    }

    /// Per-group scaling.
    pub fn scaled(&self, translation: f64, pose: f64, beta: f64) -> Gradient {
        Gradient {
            t_r: self.t_r.iter().map(|v| v * translation).collect(),
            poses: self.poses.iter().map(|v| v.scaled(pose)).collect(),
            log_beta: self.log_beta.iter().map(|v| v * beta).collect(),
        }
    }

    pub fn sub(&self, o: &Gradient) -> Gradient {
        Gradient {
            t_r: self.t_r.iter().zip(&o.t_r).map(|(a, b)| a - b).collect(),
            poses: self
                .poses
                .iter()
                .zip(&o.poses)
                .map(|(a, b)| PoseVelocity(a.0.iter().zip(&b.0).map(|(x, y)| x - y).collect()))
                .collect(),
            log_beta: self.log_beta.iter().zip(&o.log_beta).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.t_r.iter().all(|v| v.iter().all(|c| c.is_finite()))
            && self.poses.iter().all(|p| p.is_finite())
            && self.log_beta.iter().all(|b| b.is_finite())
    }
}

/// Unweighted term values.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyTerms {
    pub data: f64,
    pub beta: f64,
    pub pose: f64,
    pub smooth: f64,
    pub bone_length: f64,
    pub contact_joint: f64,
    pub contact_velocity: f64,
    pub contact_height: f64,
    pub velocity: f64,
    pub acceleration: f64,
    /// Visible 2D detections skipped because the joint is behind the camera.
    pub behind_camera: usize,
    /// Weighted sum.
    pub total: f64,
}

/// Everything an energy evaluation needs besides the variables.
pub struct Problem<'a> {
    pub observation: &'a Observation,
    pub skeleton: &'a Skeleton,
    pub weights: &'a EnergyWeights,
    pub fields: &'a FieldSet,
    pub fps: f64,
    pub contact_joints: &'a [usize],
    /// `[frame][contact joint]` probabilities; empty disables contacts.
    pub contact_probs: &'a [Vec<f64>],
}

impl Problem<'_> {
    pub fn validate(&self, vars: &Variables) -> Result<()> {
        self.weights.validate()?;
        let k = self.skeleton.joints();
        self.observation.validate(k)?;
        if self.observation.frames() != vars.frames() {
            return Err(Error::Observation(format!(
                "observation has {} frames, sequence has {}",
                self.observation.frames(),
                vars.frames()
            )));
        }
        check_len(vars.frames(), vars.t_r.len())?;
        check_len(k, vars.log_beta.len())?;
        for p in &vars.poses {
            check_len(k, p.joints())?;
        }
        if let Some(fk) = self.fields.joints() {
            check_len(k, fk)?;
        }
        Ok(())
    }

    fn contacts(&self) -> Option<Contacts<'_>> {
        (!self.contact_joints.is_empty() && !self.contact_probs.is_empty())
            .then_some(Contacts { joints: self.contact_joints, probs: self.contact_probs })
    }

    fn needs_dynamics(&self, stage: Stage) -> bool {
        stage == Stage::II || (self.contacts().is_some() && self.weights.contact_velocity > 0.0)
    }

    pub fn energy(&self, vars: &Variables, stage: Stage) -> Result<EnergyTerms> {
        Ok(self.evaluate(vars, stage, false)?.0)
    }

    /// Term values and, when `want_grad`, the gradient of the weighted total.
    pub fn evaluate(&self, vars: &Variables, stage: Stage, want_grad: bool) -> Result<(EnergyTerms, Option<Gradient>)> {
        let w = self.weights;
        let n = vars.frames();
        let k = self.skeleton.joints();
        let skel = vars.skeleton(self.skeleton)?;
        let fk: Vec<_> =
            vars.t_r.iter().zip(&vars.poses).map(|(t, p)| forward_kinematics_full(&skel, t, p)).collect::<Result<_>>()?;
        let pos: Positions = fk.iter().map(|r| r.positions.0.clone()).collect();
        let mut gpos = want_grad.then(|| losses::zero_positions(n, k));
        let mut gpose = vec![PoseVelocity::zeros(k); n];
        let mut terms = EnergyTerms::default();

        terms.data = match self.observation {
            Observation::Joints3d { frames } => losses::data_3d(&pos, frames, w.data, gpos.as_mut())?,
            Observation::Joints2d { camera, frames } => {
                let (v, behind) = losses::data_2d(&pos, camera, frames, w.geman_mcclure_scale, w.data_2d, gpos.as_mut())?;
                terms.behind_camera = behind;
                v
            }
            Observation::Pointcloud { frames } => {
                losses::data_pointcloud(&pos, frames, w.bisquare_cutoff, w.data, gpos.as_mut())?
            }
        };
        let data_weight = if matches!(self.observation, Observation::Joints2d { .. }) { w.data_2d } else { w.data };
        terms.smooth = losses::smoothness(&pos, w.smooth, gpos.as_mut());
        terms.bone_length = losses::bone_length_consistency(&pos, &skel, w.bone_length, gpos.as_mut());
        let contacts = self.contacts();
        if let Some(c) = &contacts {
            terms.contact_joint = c.sliding(&pos, w.contact_joint, gpos.as_mut())?;
            terms.contact_height = c.height(&pos, w.contact_slack, w.contact_height, gpos.as_mut())?;
        }
        terms.beta = vars.log_beta.iter().map(|b| b * b).sum();

        if w.pose > 0.0 {
            if let Some(f) = &self.fields.pose {
                let out: Vec<(f64, PoseVelocity)> = if want_grad {
                    vars.poses.par_iter().map(|p| pose_value_grad(f.as_ref(), p)).collect::<Result<_>>()?
                } else {
                    vars.poses
                        .par_iter()
                        .map(|p| Ok((f.eval(&encode_pose(p))?, PoseVelocity::zeros(0))))
                        .collect::<Result<_>>()?
                };
                for (t, (v, g)) in out.into_iter().enumerate() {
                    terms.pose += v;
                    if want_grad {
                        add_scaled(&mut gpose[t], &g, w.pose);
                    }
                }
            }
        }

        if self.needs_dynamics(stage) {
            let vel = estimate_velocity(&vars.poses, self.fps, VelocityScheme::LogCentral)?;
            let mut gvel = vec![PoseVelocity::zeros(k); n];
            let mut gacc = vec![PoseAcceleration::zeros(k); n];
            if let Some(c) = &contacts {
                terms.contact_velocity = c.angular_velocity(&vel, w.contact_velocity, want_grad.then_some(&mut gvel[..]))?;
            }
            if stage == Stage::II {
                let acc = estimate_acceleration(&vel, self.fps, AccelerationScheme::Central)?;
                for (kind, weight) in [(FieldKind::Velocity, w.velocity), (FieldKind::Acceleration, w.acceleration)] {
                    let field = self.fields.require(kind)?;
                    if weight == 0.0 {
                        continue;
                    }
                    let out: Vec<_> = (0..n)
                        .into_par_iter()
                        .map(|t| {
                            if want_grad {
                                let g = state_value_grad(field.as_ref(), &vars.poses[t], &vel[t], &acc[t])?;
                                Ok((g.value, Some(g)))
                            } else {
                                Ok((state_value(field.as_ref(), &vars.poses[t], &vel[t], &acc[t])?, None))
                            }
                        })
                        .collect::<Result<_>>()?;
                    for (t, (v, g)) in out.into_iter().enumerate() {
                        match kind {
                            FieldKind::Velocity => terms.velocity += v,
                            _ => terms.acceleration += v,
                        }
                        let Some(g) = g else { continue };
                        add_scaled(&mut gpose[t], &g.pose, weight);
                        let main = PoseVelocity::from_flat(&g.main)?;
                        match kind {
                            FieldKind::Velocity => add_scaled(&mut gvel[t], &main, weight),
                            _ => {
                                for j in 0..k {
                                    gacc[t].0[j] += main[j] * weight;
                                }
                                if let Some(gv) = &g.velocity {
                                    add_scaled(&mut gvel[t], gv, weight);
                                }
                            }
                        }
                    }
                }
            }
            if want_grad {
                acceleration_adjoint(self.fps, &gacc, &mut gvel);
                velocity_adjoint(&vars.poses, self.fps, &gvel, &mut gpose);
            }
        }

        terms.total = data_weight * terms.data
            + w.beta * terms.beta
            + w.pose * terms.pose
            + w.smooth * terms.smooth
            + w.bone_length * terms.bone_length
            + w.contact_joint * terms.contact_joint
            + w.contact_velocity * terms.contact_velocity
            + w.contact_height * terms.contact_height
            + if stage == Stage::II { w.velocity * terms.velocity + w.acceleration * terms.acceleration } else { 0.0 };

        let grad = gpos.map(|gpos| {
            let mut g = Gradient::zeros(n, k);
            for t in 0..n {
                let a = fk_adjoint(&skel, &fk[t], &gpos[t]);
                g.t_r[t] = a.t_r;
                for j in 0..k {
                    g.poses[t].0[j] = a.pose[j] + gpose[t][j];
                    // dβ_j/db_j = β_j
                    g.log_beta[j] += a.beta[j] * skel.beta()[j];
                }
            }
            for (gb, b) in g.log_beta.iter_mut().zip(&vars.log_beta) {
                *gb += 2.0 * w.beta * b;
            }
            g
        });
        Ok((terms, grad))
    }
}

fn add_scaled(acc: &mut PoseVelocity, g: &PoseVelocity, s: f64) {
    for (a, b) in acc.0.iter_mut().zip(&g.0) {
        *a += b * s;
    }
}

/// `E_I` at `vars`.
pub fn energy_stage1(problem: &Problem, vars: &Variables) -> Result<f64> {
    Ok(problem.energy(vars, Stage::I)?.total)
}

/// `E_II′` at `vars`; requires all three fields.
pub fn energy_stage2(problem: &Problem, vars: &Variables) -> Result<f64> {
    for kind in FieldKind::ALL {
        problem.fields.require(kind)?;
    }
    Ok(problem.energy(vars, Stage::II)?.total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::mlp::{Mlp, MlpField};
    use crate::fields::SharedField;
    use crate::so3::exp_so3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn random_fields(rng: &mut ChaCha8Rng, k: usize) -> FieldSet {
        let mk = |kind: FieldKind, rng: &mut ChaCha8Rng| -> SharedField {
            let net = Mlp::glorot(&[kind.input_dim(k), 8, 1], rng).unwrap();
            Arc::new(MlpField::new(kind, k, net).unwrap())
        };
        FieldSet::new(
            Some(mk(FieldKind::Pose, rng)),
            Some(mk(FieldKind::Velocity, rng)),
            Some(mk(FieldKind::Acceleration, rng)),
        )
        .unwrap()
    }

    fn random_vars(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Variables {
        Variables {
            t_r: (0..n).map(|_| Vector3::from_fn(|_, _| rng.random_range(-0.5..0.5))).collect(),
            poses: (0..n)
                .map(|_| Pose((0..k).map(|_| exp_so3(&Vector3::from_fn(|_, _| rng.random_range(-0.8..0.8)))).collect()))
                .collect(),
            log_beta: (0..k).map(|_| rng.random_range(-0.2..0.2)).collect(),
        }
    }

    /// Central differences along every coordinate of the variables.
    fn fd_gradient(problem: &Problem, vars: &Variables, stage: Stage) -> Gradient {
        let h = 1e-6;
        let n = vars.frames();
        let k = vars.log_beta.len();
        let e = |v: &Variables| problem.energy(v, stage).unwrap().total;
        let mut g = Gradient::zeros(n, k);
        for t in 0..n {
            for c in 0..3 {
                let mut d = Gradient::zeros(n, k);
                d.t_r[t][c] = 1.0;
                g.t_r[t][c] = (e(&vars.retract(&d, -h).unwrap()) - e(&vars.retract(&d, h).unwrap())) / (2.0 * h);
                for j in 0..k {
                    let mut d = Gradient::zeros(n, k);
                    d.poses[t].0[j][c] = 1.0;
                    g.poses[t].0[j][c] =
                        (e(&vars.retract(&d, -h).unwrap()) - e(&vars.retract(&d, h).unwrap())) / (2.0 * h);
                }
            }
        }
        for j in 0..k {
            let mut d = Gradient::zeros(n, k);
            d.log_beta[j] = 1.0;
            g.log_beta[j] = (e(&vars.retract(&d, -h).unwrap()) - e(&vars.retract(&d, h).unwrap())) / (2.0 * h);
        }
        g
    }

    fn assert_close(a: &Gradient, b: &Gradient) {
        let scale = a.dot(a).sqrt().max(1e-3);
        let diff = a.sub(b);
        assert!(diff.dot(&diff).sqrt() <= 1e-4 * scale, "{a:?}\n{b:?}");
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let k = 2;
        let skel = Skeleton::chain(k);
        for trial in 0..6 {
            let fields = random_fields(&mut rng, k);
            let vars = random_vars(&mut rng, 3, k);
            let truth = random_vars(&mut rng, 3, k);
            let seq = truth.to_sequence(30.0).unwrap();
            let mut cam = crate::optim::observation::PinholeCamera::new(200.0, 200.0, 10.0, 5.0).unwrap();
            cam.translation = Vector3::new(0.0, 0.0, 4.0);
            let obs = match trial % 3 {
                0 => Observation::joints3d_from(&seq, &skel).unwrap().masked(|t, j| t == 1 && j == 0),
                1 => Observation::joints2d_from(&seq, &skel, &cam).unwrap(),
                _ => Observation::pointcloud_from(&seq, &skel).unwrap().with_noise(0.05, &mut rng).unwrap(),
            };
            let weights = EnergyWeights { data_2d: 1.0, contact_slack: 0.0, ..Default::default() };
            let probs = vec![vec![1.0, 0.5]; 3];
            let joints = [1usize, 0];
            let problem = Problem {
                observation: &obs,
                skeleton: &skel,
                weights: &weights,
                fields: &fields,
                fps: 30.0,
                contact_joints: &joints,
                contact_probs: &probs,
            };
            problem.validate(&vars).unwrap();
            for stage in [Stage::I, Stage::II] {
                let (_, g) = problem.evaluate(&vars, stage, true).unwrap();
                assert_close(&g.unwrap(), &fd_gradient(&problem, &vars, stage));
            }
        }
    }

    #[test]
    fn energy_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let skel = Skeleton::chain(3);
        let vars = Variables { log_beta: vec![0.0; 3], ..random_vars(&mut rng, 5, 3) };
        let seq = vars.to_sequence(30.0).unwrap();
        let obs = Observation::joints3d_from(&seq, &skel).unwrap();
        let fields = random_fields(&mut rng, 3);
        let data_only = EnergyWeights::data_only();
        let problem = Problem {
            observation: &obs,
            skeleton: &skel,
            weights: &data_only,
            fields: &fields,
            fps: 30.0,
            contact_joints: &[],
            contact_probs: &[],
        };
        assert!(energy_stage1(&problem, &vars).unwrap().abs() < 1e-20);
        let w = EnergyWeights::default();
        let problem = Problem { weights: &w, ..problem };
        let t = problem.energy(&vars, Stage::I).unwrap();
        assert_eq!(t.beta, 0.0);
        assert!(energy_stage2(&problem, &vars).unwrap() >= energy_stage1(&problem, &vars).unwrap());
        let no_fields = FieldSet::default();
        let problem = Problem { fields: &no_fields, ..problem };
        assert!(matches!(energy_stage2(&problem, &vars), Err(Error::MissingField(_))));
        let short = Observation::joints3d_from(&Variables { ..vars.clone() }.to_sequence(30.0).unwrap(), &skel).unwrap();
        let mut fewer = vars.clone();
        fewer.poses.pop();
        fewer.t_r.pop();
        assert!(Problem { observation: &short, ..problem }.validate(&fewer).is_err());
    }
}
