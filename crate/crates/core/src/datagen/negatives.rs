//! Labeled training sets for the distance fields.
//!
//! Three categories of samples, each labeled with the exact distance to the
//! nearest corpus element:
//!
//! * `A`: a corpus element perturbed off the manifold. Poses get per-joint
//!   rotations by half-Gaussian angles about uniform axes; velocities and
//!   accelerations get a uniform random direction scaled by a half-Gaussian
//!   magnitude.
//! * `B`: a clean corpus element. For velocities and accelerations the
//!   conditioning block is taken from a different, uniformly drawn element.
//! * `C`: fully random. Poses are normalized random 4-vectors per joint;
//!   velocities and accelerations are isotropic Gaussian vectors conditioned
//!   on a random corpus element.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::nn::{MetricWeights, NnIndex, SearchMode};
use crate::datagen::synth::MotionCorpus;
use crate::error::{check_len, Error, Result};
use crate::fields::encoding::{encode_pose, encode_state, FieldKind};
use crate::product::Pose;
use crate::so3::{quat_encode, Rotation3, UnitQuaternion};
use nalgebra::{Vector3, Vector4};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Category {
    A,
    B,
    C,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabeledSample {
    pub encoding: Vec<f64>,
    pub distance: f64,
    pub category: Category,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSet {
    pub kind: FieldKind,
    pub joints: usize,
    pub samples: Vec<LabeledSample>,
}

impl LabeledSet {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn inputs(&self) -> Vec<&[f64]> {
        self.samples.iter().map(|s| s.encoding.as_slice()).collect()
    }

    pub fn labels(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.distance).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.samples)?)
    }

    pub fn from_json(s: &str, kind: FieldKind, joints: usize) -> Result<Self> {
        let samples: Vec<LabeledSample> = serde_json::from_str(s)?;
        for x in &samples {
            check_len(kind.input_dim(joints), x.encoding.len())?;
            if !(x.distance >= 0.0) {
                return Err(Error::Format(format!("negative or non-finite label {}", x.distance)));
            }
        }
        Ok(LabeledSet { kind, joints, samples })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>, kind: FieldKind, joints: usize) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?, kind, joints)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NegativeConfig {
    #[serde(default = "default_n")]
    pub n: usize,
    /// Fractions of categories A, B and C.
    #[serde(default = "default_ratios")]
    pub ratios: [f64; 3],
    /// Category-A scale: radians for poses. For velocities and
    /// accelerations, a multiple of the corpus RMS norm of the main block.
    #[serde(default)]
    pub sigma: Option<f64>,
    /// Category-C standard deviation per component for velocities and
    /// accelerations, as a multiple of the corpus per-component RMS.
    #[serde(default = "default_random_scale")]
    pub random_scale: f64,
    #[serde(default)]
    pub metric: MetricWeights,
    #[serde(default)]
    pub search: SearchMode,
    #[serde(default)]
    pub seed: u64,
}

fn default_n() -> usize {
    5000
}

fn default_ratios() -> [f64; 3] {
    [0.6, 0.3, 0.1]
}

fn default_random_scale() -> f64 {
    2.0
}

pub const DEFAULT_POSE_SIGMA: f64 = 0.25;
pub const DEFAULT_VECTOR_SIGMA: f64 = 0.5;

impl Default for NegativeConfig {
    fn default() -> Self {
        NegativeConfig::new(default_n(), 0)
    }
}

impl NegativeConfig {
    pub fn new(n: usize, seed: u64) -> Self {
        NegativeConfig {
            n,
            ratios: default_ratios(),
            sigma: None,
            random_scale: default_random_scale(),
            metric: MetricWeights::default(),
            search: SearchMode::default(),
            seed,
        }
    }

    /// Per-category counts; A and B are rounded, C takes the remainder.
    pub fn counts(&self) -> Result<[usize; 3]> {
        let r = self.ratios;
        if r.iter().any(|x| !(*x >= 0.0)) || (r.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidRatios(format!("{r:?} must be nonnegative and sum to 1")));
        }
        if self.n == 0 {
            return Err(Error::InvalidRatios("n must be positive".into()));
        }
        let a = ((self.n as f64) * r[0]).round() as usize;
        let b = (((self.n as f64) * r[1]).round() as usize).min(self.n - a);
        Ok([a, b, self.n - a - b])
    }
}

fn uniform_axis(rng: &mut impl Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::from_fn(|_, _| StandardNormal.sample(rng));
        let n: f64 = v.norm();
        if n > 1e-9 {
            return v / n;
        }
    }
}

fn random_rotation(rng: &mut impl Rng) -> Rotation3 {
    loop {
        let v = Vector4::from_fn(|_, _| StandardNormal.sample(rng));
        if let Some(q) = UnitQuaternion::from_unnormalized(v) {
            return crate::so3::quat_decode(&q);
        }
    }
}

fn random_direction(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-9 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

fn half_gaussian(rng: &mut impl Rng, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return 0.0;
    }
    Normal::new(0.0, sigma).expect("finite sigma").sample(rng).abs()
}

/// Per-component RMS and RMS norm of the main block over the corpus.
fn main_block_scale(kind: FieldKind, corpus: &MotionCorpus) -> (f64, f64) {
    let blocks: Vec<Vec<f64>> = match kind {
        FieldKind::Pose => return (1.0, 1.0),
        FieldKind::Velocity => corpus.vels.iter().map(|v| v.to_flat()).collect(),
        FieldKind::Acceleration => corpus.accs.iter().map(|a| a.to_flat()).collect(),
    };
    let n = blocks.len() as f64;
    let dim = blocks[0].len() as f64;
    let sq: f64 = blocks.iter().map(|b| b.iter().map(|x| x * x).sum::<f64>()).sum();
    let rms_norm = (sq / n).sqrt();
    let rms_comp = (sq / (n * dim)).sqrt();
    (rms_comp.max(1e-6), rms_norm.max(1e-6))
}

fn draw_sample(
    kind: FieldKind,
    cat: Category,
    source: &MotionCorpus,
    sigma: f64,
    random_sd: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    let n = source.len();
    let k = source.joints();
    let i = rng.random_range(0..n);
    let encode = |i: usize| encode_state(kind, &source.poses[i], &source.vels[i], &source.accs[i]);
    let main = kind.main_dim(k);
    match (kind, cat) {
        (FieldKind::Pose, Category::A) => {
            let pose = Pose(
                source.poses[i]
                    .iter()
                    .map(|r| {
                        let axis = uniform_axis(rng);
                        r.retract(&(axis * half_gaussian(rng, sigma)))
                    })
                    .collect(),
            );
            encode_pose(&pose)
        }
        (FieldKind::Pose, Category::B) => encode(i),
        (FieldKind::Pose, Category::C) => {
            let pose = Pose((0..k).map(|_| random_rotation(rng)).collect());
            pose.iter().flat_map(|r| quat_encode(r).as_array()).collect()
        }
        (_, Category::A) => {
            let mut x = encode(i);
            let dir = random_direction(rng, main);
            let mag = half_gaussian(rng, sigma);
            for (xi, d) in x[..main].iter_mut().zip(dir) {
                *xi += mag * d;
            }
            x
        }
        (_, Category::B) => {
            let mut x = encode(i);
            let j = if n > 1 { (i + rng.random_range(1..n)) % n } else { i };
            let other = encode(j);
            x[main..].copy_from_slice(&other[main..]);
            x
        }
        (_, Category::C) => {
            let mut x = encode(i);
            for xi in x[..main].iter_mut() {
                *xi = random_sd * { let z: f64 = StandardNormal.sample(rng); z };
            }
            x
        }
    }
}

/// Samples `cfg.n` labeled examples around `corpus`, labeled against the
/// same corpus.
pub fn sample_negatives(kind: FieldKind, corpus: &MotionCorpus, cfg: &NegativeConfig) -> Result<LabeledSet> {
    sample_negatives_from(kind, corpus, corpus, cfg)
}

/// Draws sample seeds from `source` and labels them against `reference`;
/// used for held-out evaluation sets.
pub fn sample_negatives_from(
    kind: FieldKind,
    reference: &MotionCorpus,
    source: &MotionCorpus,
    cfg: &NegativeConfig,
) -> Result<LabeledSet> {
    let index = NnIndex::from_corpus(kind, reference, cfg.metric)?;
    sample_with_index(kind, &index, source, cfg)
}

pub fn sample_with_index(
    kind: FieldKind,
    index: &NnIndex,
    source: &MotionCorpus,
    cfg: &NegativeConfig,
) -> Result<LabeledSet> {
    let counts = cfg.counts()?;
    if source.is_empty() {
        return Err(Error::EmptyDataset);
    }
    check_len(index.joints(), source.joints())?;
    let (rms_comp, rms_norm) = main_block_scale(kind, source);
    let sigma = match (kind, cfg.sigma) {
        (FieldKind::Pose, s) => s.unwrap_or(DEFAULT_POSE_SIGMA),
        (_, s) => s.unwrap_or(DEFAULT_VECTOR_SIGMA) * rms_norm,
    };
    if !(sigma >= 0.0) {
        return Err(Error::Config(format!("sigma must be nonnegative, got {sigma}")));
    }
    let random_sd = cfg.random_scale * rms_comp;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut drawn = Vec::with_capacity(cfg.n);
    for (cat, count) in [Category::A, Category::B, Category::C].into_iter().zip(counts) {
        for _ in 0..count {
            drawn.push((draw_sample(kind, cat, source, sigma, random_sd, &mut rng), cat));
        }
    }
    let samples = drawn
        .into_par_iter()
        .map(|(encoding, category)| {
            let (distance, _) = index.nearest_with(&encoding, cfg.search)?;
            Ok(LabeledSample { encoding, distance, category })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LabeledSet { kind, joints: index.joints(), samples })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::synth::{synth_corpus, SynthMotionSpec};

    fn corpus(k: usize) -> MotionCorpus {
        synth_corpus(&SynthMotionSpec::toy(k, 1), 10).unwrap().0
    }

    #[test]
    fn counts_follow_ratios() {
        let cfg = NegativeConfig::new(1000, 0);
        assert_eq!(cfg.counts().unwrap(), [600, 300, 100]);
        let mut bad = cfg.clone();
        bad.ratios = [0.5, 0.3, 0.1];
        assert!(matches!(bad.counts(), Err(Error::InvalidRatios(_))));
        bad.ratios = [1.2, -0.2, 0.0];
        assert!(bad.counts().is_err());
    }

    #[test]
    fn zero_sigma_lies_on_corpus() {
        let c = corpus(2);
        let mut cfg = NegativeConfig::new(50, 3);
        cfg.ratios = [1.0, 0.0, 0.0];
        cfg.sigma = Some(0.0);
        for kind in FieldKind::ALL {
            let set = sample_negatives(kind, &c, &cfg).unwrap();
            assert!(set.samples.iter().all(|s| s.distance < 1e-12), "{kind}");
        }
    }

    #[test]
    fn labels_match_independent_brute_force() {
        let c = corpus(2);
        let cfg = NegativeConfig::new(60, 4);
        for kind in FieldKind::ALL {
            let set = sample_negatives(kind, &c, &cfg).unwrap();
            let idx = NnIndex::from_corpus(kind, &c, cfg.metric).unwrap();
            for s in &set.samples {
                let brute = (0..idx.len()).map(|i| idx.metric(&s.encoding, idx.row(i))).fold(f64::INFINITY, f64::min);
                assert!((s.distance - brute).abs() < 1e-12);
                assert!(s.distance >= 0.0);
            }
        }
    }

    #[test]
    fn random_poses_are_farther_than_perturbed() {
        let c = corpus(2);
        let mut cfg = NegativeConfig::new(2000, 5);
        cfg.ratios = [0.5, 0.0, 0.5];
        cfg.sigma = Some(0.05);
        let set = sample_negatives(FieldKind::Pose, &c, &cfg).unwrap();
        let mean = |cat| {
            let v: Vec<f64> = set.samples.iter().filter(|s| s.category == cat).map(|s| s.distance).collect();
            v.iter().sum::<f64>() / v.len() as f64
        };
        assert!(mean(Category::C) > mean(Category::A));
    }

    #[test]
    fn deterministic_and_round_trips() {
        let c = corpus(2);
        let cfg = NegativeConfig::new(40, 9);
        let a = sample_negatives(FieldKind::Velocity, &c, &cfg).unwrap();
        let b = sample_negatives(FieldKind::Velocity, &c, &cfg).unwrap();
        assert_eq!(a, b);
        let back = LabeledSet::from_json(&a.to_json().unwrap(), FieldKind::Velocity, 2).unwrap();
        assert_eq!(back, a);
        assert!(LabeledSet::from_json(&a.to_json().unwrap(), FieldKind::Pose, 2).is_err());
    }
}
