//! Synthetic corpora of smooth articulated motion.
//!
//! Every joint swings about a fixed axis, `φ_k(t) = a_k·s·sin(2π f_k·c·(t + t0) + ψ_k)`,
//! where the per-sequence amplitude scale `s`, frequency scale `c` and time
//! shift `t0` are drawn from the seeded generator. Relative phases between
//! joints are shared by all sequences, so joints are coupled the way limbs
//! are in a gait cycle.

use nalgebra::Vector3;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{estimate_dynamics, MotionSequence, MotionState, DEFAULT_FPS};
use crate::product::{Pose, PoseAcceleration, PoseVelocity};
use crate::so3::Rotation3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointMotion {
    /// Unit rotation axis.
    pub axis: [f64; 3],
    /// rad
    pub amplitude: f64,
    /// Hz
    pub frequency: f64,
    /// rad
    pub phase: f64,
    /// Joint limit on `|φ|`, rad.
    pub limit: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthMotionSpec {
    pub joints: Vec<JointMotion>,
    /// Frames per generated sequence, before clipping.
    pub frames: usize,
    pub fps: f64,
    pub seed: u64,
    /// Relative half-width of the per-sequence amplitude scale.
    #[serde(default)]
    pub amplitude_jitter: f64,
    /// Relative half-width of the per-sequence frequency scale.
    #[serde(default)]
    pub frequency_jitter: f64,
    /// Fraction of each sequence kept, centered.
    #[serde(default = "default_clip")]
    pub clip_fraction: f64,
}

fn default_clip() -> f64 {
    0.8
}

impl SynthMotionSpec {
    /// Toy gait-like motion for `k` joints: root yaw plus alternating
    /// x/y swings at a shared frequency with staggered phases.
    pub fn toy(k: usize, seed: u64) -> Self {
        let joints = (0..k)
            .map(|j| {
                let (axis, amplitude) = match j {
                    0 => ([0.0, 0.0, 1.0], 0.3),
                    j if j % 2 == 1 => ([1.0, 0.0, 0.0], 0.5 + 0.1 * (j % 3) as f64),
                    _ => ([0.0, 1.0, 0.0], 0.4 + 0.1 * (j % 3) as f64),
                };
                JointMotion { axis, amplitude, frequency: 0.5, phase: 0.9 * j as f64, limit: 1.2 }
            })
            .collect();
        SynthMotionSpec {
            joints,
            frames: 90,
            fps: DEFAULT_FPS,
            seed,
            amplitude_jitter: 0.3,
            frequency_jitter: 0.2,
            clip_fraction: 0.8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if self.joints.is_empty() {
            return bad("no joints".into());
        }
        if !(self.fps > 0.0) {
            return bad("fps must be positive".into());
        }
        if !(0.0..1.0).contains(&self.amplitude_jitter) || !(0.0..1.0).contains(&self.frequency_jitter) {
            return bad("jitter must lie in [0, 1)".into());
        }
        if !(self.clip_fraction > 0.0 && self.clip_fraction <= 1.0) {
            return bad("clip_fraction must lie in (0, 1]".into());
        }
        if ((self.frames as f64) * self.clip_fraction).floor() < 3.0 {
            return bad("sequences too short to estimate dynamics after clipping".into());
        }
        for (j, m) in self.joints.iter().enumerate() {
            let n = Vector3::from(m.axis).norm();
            if (n - 1.0).abs() > 1e-6 {
                return bad(format!("joint {j}: axis is not unit length"));
            }
            if m.amplitude < 0.0 || m.amplitude > m.limit {
                return bad(format!("joint {j}: amplitude {} outside limit {}", m.amplitude, m.limit));
            }
            if m.frequency < 0.0 || m.frequency * (1.0 + self.frequency_jitter) >= self.fps / 4.0 {
                return bad(format!("joint {j}: frequency must stay below fps/4"));
            }
        }
        Ok(())
    }
}

/// Poses, velocities and accelerations of a set of sequences, flattened.
#[derive(Clone, Debug, PartialEq)]
pub struct MotionCorpus {
    pub poses: Vec<Pose>,
    pub vels: Vec<PoseVelocity>,
    pub accs: Vec<PoseAcceleration>,
    pub sequences: Vec<MotionSequence>,
    pub meta: CorpusMeta,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusMeta {
    pub spec: SynthMotionSpec,
    pub n_sequences: usize,
    pub seed: u64,
    pub split: String,
}

impl MotionCorpus {
    pub fn from_sequences(sequences: Vec<MotionSequence>, meta: CorpusMeta) -> Self {
        let mut poses = Vec::new();
        let mut vels = Vec::new();
        let mut accs = Vec::new();
        for s in &sequences {
            for st in &s.states {
                poses.push(st.pose.clone());
                vels.push(st.vel.clone());
                accs.push(st.acc.clone());
            }
        }
        MotionCorpus { poses, vels, accs, sequences, meta }
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn joints(&self) -> usize {
        self.poses.first().map_or(0, |p| p.joints())
    }
}

#[derive(Clone, Copy, Debug)]
struct SequenceDraw {
    amp_scale: f64,
    freq_scale: f64,
    t0: f64,
}

fn draw_sequence(spec: &SynthMotionSpec, rng: &mut impl Rng) -> SequenceDraw {
    let jitter = |rng: &mut dyn rand::RngCore, w: f64| if w > 0.0 { 1.0 + rng.random_range(-w..w) } else { 1.0 };
    let amp_scale = jitter(rng, spec.amplitude_jitter);
    let freq_scale = jitter(rng, spec.frequency_jitter);
    let f_min = spec.joints.iter().map(|m| m.frequency).filter(|f| *f > 0.0).fold(f64::INFINITY, f64::min);
    let period = if f_min.is_finite() { 1.0 / f_min } else { 1.0 };
    let t0 = rng.random_range(0.0..period);
    SequenceDraw { amp_scale, freq_scale, t0 }
}

fn joint_angle(m: &JointMotion, d: &SequenceDraw, t: f64) -> f64 {
    let a = (m.amplitude * d.amp_scale).min(m.limit);
    a * (2.0 * std::f64::consts::PI * m.frequency * d.freq_scale * (t + d.t0) + m.phase).sin()
}

fn generate_sequence(spec: &SynthMotionSpec, d: &SequenceDraw) -> Result<MotionSequence> {
    let poses: Vec<Pose> = (0..spec.frames)
        .map(|i| {
            let t = i as f64 / spec.fps;
            Pose(
                spec.joints
                    .iter()
                    .map(|m| Rotation3::from_axis_angle(&Vector3::from(m.axis), joint_angle(m, d, t)))
                    .collect(),
            )
        })
        .collect();
    let (vel, acc) = estimate_dynamics(&poses, spec.fps)?;
    let keep = ((spec.frames as f64) * spec.clip_fraction).floor() as usize;
    let start = (spec.frames - keep) / 2;
    let states = (start..start + keep)
        .map(|i| MotionState { t_r: Vector3::zeros(), pose: poses[i].clone(), vel: vel[i].clone(), acc: acc[i].clone() })
        .collect();
    MotionSequence::new(spec.fps, states)
}

/// Generates `n_sequences` sequences and splits them 90/10 by sequence into
/// a training corpus and a held-out corpus. Deterministic in `spec.seed`.
pub fn synth_corpus(spec: &SynthMotionSpec, n_sequences: usize) -> Result<(MotionCorpus, MotionCorpus)> {
    spec.validate()?;
    if n_sequences == 0 {
        return Err(Error::InvalidSpec("n_sequences must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let draws: Vec<SequenceDraw> = (0..n_sequences).map(|_| draw_sequence(spec, &mut rng)).collect();
    let mut order: Vec<usize> = (0..n_sequences).collect();
    order.shuffle(&mut rng);
    let n_held = if n_sequences >= 2 { (n_sequences / 10).max(1) } else { 0 };
    let mut held_idx = order[..n_held].to_vec();
    let mut train_idx = order[n_held..].to_vec();
    held_idx.sort_unstable();
    train_idx.sort_unstable();

    let build = |idx: &[usize], split: &str| -> Result<MotionCorpus> {
        let seqs = idx.iter().map(|&i| generate_sequence(spec, &draws[i])).collect::<Result<Vec<_>>>()?;
        let meta = CorpusMeta { spec: spec.clone(), n_sequences, seed: spec.seed, split: split.into() };
        Ok(MotionCorpus::from_sequences(seqs, meta))
    };
    Ok((build(&train_idx, "train")?, build(&held_idx, "heldout")?))
}

/// One unclipped ground-truth sequence drawn like the corpus sequences but
/// from an independent seed; used to build evaluation motions.
pub fn synth_sequence(spec: &SynthMotionSpec, seed: u64) -> Result<MotionSequence> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = draw_sequence(spec, &mut rng);
    let poses: Vec<Pose> = (0..spec.frames)
        .map(|i| {
            let t = i as f64 / spec.fps;
            Pose(
                spec.joints
                    .iter()
                    .map(|m| Rotation3::from_axis_angle(&Vector3::from(m.axis), joint_angle(m, &d, t)))
                    .collect(),
            )
        })
        .collect();
    crate::kinematics::rebuild_states(&poses, spec.fps)
}
