use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use log::info;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::cli::config::{Init, RunConfig};
use crate::datagen::{sample_negatives, sample_negatives_from, synth_corpus, synth_sequence, LabeledSet, NegativeConfig};
use crate::dynamics::{integrate, project_sequence, RolloutTrace, StateTrace};
use crate::error::{Error, Result};
use crate::fields::{train_field, FieldKind, FieldSet, MlpField, SharedField, TrainConfig, TrainReport};
use crate::kinematics::{rebuild_states_with_translation, MotionFile, MotionSequence, Skeleton};
use crate::optim::metrics::{field_stats, FieldStats};
use crate::optim::{
    fit_sequence, generate_motion, inbetween, initial_sequence, mpjpe_mm_masked, FitReport, FitResult, MetricsReport,
    Observation,
};

/// Paths and switches shared by the commands.
#[derive(Clone, Debug, Default)]
pub struct Paths {
    pub out: PathBuf,
    pub input: Option<PathBuf>,
    pub fields: Option<PathBuf>,
    pub skeleton: Option<PathBuf>,
    pub reference: Option<PathBuf>,
    pub timings: bool,
}

impl Paths {
    fn input(&self) -> Result<&Path> {
        self.input.as_deref().ok_or_else(|| Error::Config("--input is required".into()))
    }

    fn out(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

struct Timer {
    enabled: bool,
    times: BTreeMap<String, f64>,
}

impl Timer {
    fn new(enabled: bool) -> Self {
        Timer { enabled, times: BTreeMap::new() }
    }

    fn time<T>(&mut self, name: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        if self.enabled {
            *self.times.entry(name.to_string()).or_default() += start.elapsed().as_secs_f64();
        }
        out
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    std::fs::write(path, s)?;
    info!("wrote {}", path.display());
    Ok(())
}

fn write_motion(path: &Path, seq: &MotionSequence, skel: &Skeleton) -> Result<()> {
    MotionFile { sequence: seq.clone(), skeleton: Some(skel.clone()) }.write(path)?;
    info!("wrote {}", path.display());
    Ok(())
}

fn field_file(kind: FieldKind) -> String {
    format!("field_{}.json", kind.name())
}

/// Loads every `field_<kind>.json` present in `dir`.
pub fn load_fields(dir: Option<&Path>) -> Result<FieldSet> {
    let Some(dir) = dir else { return Ok(FieldSet::default()) };
    let mut slots: [Option<SharedField>; 3] = [None, None, None];
    for (slot, kind) in slots.iter_mut().zip(FieldKind::ALL) {
        let path = dir.join(field_file(kind));
        if path.exists() {
            let f = MlpField::read(&path)?;
            if f.kind != kind {
                return Err(Error::FieldKind { expected: kind.name().into(), got: f.kind.name().into() });
            }
            *slot = Some(Arc::new(f));
        }
    }
    let [p, v, a] = slots;
    FieldSet::new(p, v, a)
}

/// `--skeleton`, else the skeleton stored with the motion, else a chain.
fn resolve_skeleton(paths: &Paths, stored: Option<&Skeleton>, k: usize) -> Result<Skeleton> {
    let skel = match (&paths.skeleton, stored) {
        (Some(p), _) => serde_json::from_str(&std::fs::read_to_string(p)?)?,
        (None, Some(s)) => s.clone(),
        (None, None) => Skeleton::chain(k),
    };
    crate::error::check_len(k, skel.joints())?;
    Ok(skel)
}

fn seed_for(seed: u64, kind: FieldKind) -> u64 {
    let i = FieldKind::ALL.iter().position(|k| *k == kind).unwrap_or(0) as u64;
    seed.wrapping_mul(3).wrapping_add(i)
}

#[derive(Serialize)]
struct GenDataReport {
    joints: usize,
    train_sequences: usize,
    train_frames: usize,
    heldout_sequences: usize,
    heldout_frames: usize,
    samples: BTreeMap<String, usize>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    timings: BTreeMap<String, f64>,
}

pub fn gen_data(cfg: &RunConfig, paths: &Paths) -> Result<()> {
    let g = &cfg.gen_data;
    let mut timer = Timer::new(paths.timings);
    let spec = g.spec(cfg.seed);
    let (train, held) = timer.time("corpus", || synth_corpus(&spec, g.sequences))?;
    train.write(paths.out("corpus_train.json"))?;
    held.write(paths.out("corpus_heldout.json"))?;
    let k = train.joints();
    let skel = Skeleton::chain(k);
    write_json(&paths.out("skeleton.json"), &skel)?;
    let eval_spec = crate::datagen::SynthMotionSpec { frames: g.eval_frames, clip_fraction: 1.0, ..spec.clone() };
    let eval = synth_sequence(&eval_spec, cfg.seed.wrapping_add(1_000_003))?;
    write_motion(&paths.out("motion_eval.json"), &eval, &skel)?;
    let mut samples = BTreeMap::new();
    for kind in FieldKind::ALL {
        let ncfg = NegativeConfig { seed: seed_for(cfg.seed, kind), ..g.negatives.clone() };
        let set = timer.time(&format!("samples_{}", kind.name()), || sample_negatives(kind, &train, &ncfg))?;
        set.write(paths.out(&format!("samples_{}.json", kind.name())))?;
        samples.insert(format!("samples_{}", kind.name()), set.len());
        if g.heldout_samples > 0 && !held.is_empty() {
            let hcfg = NegativeConfig { n: g.heldout_samples, seed: ncfg.seed.wrapping_add(7919), ..ncfg };
            let hset = timer.time(&format!("heldout_{}", kind.name()), || sample_negatives_from(kind, &train, &held, &hcfg))?;
            hset.write(paths.out(&format!("heldout_{}.json", kind.name())))?;
            samples.insert(format!("heldout_{}", kind.name()), hset.len());
        }
    }
    let report = GenDataReport {
        joints: k,
        train_sequences: train.sequences.len(),
        train_frames: train.len(),
        heldout_sequences: held.sequences.len(),
        heldout_frames: held.len(),
        samples,
        timings: timer.times,
    };
    write_json(&paths.out("gen_data_report.json"), &report)
}

#[derive(Serialize)]
struct TrainCmdReport {
    joints: usize,
    fields: BTreeMap<String, TrainReport>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    timings: BTreeMap<String, f64>,
}

/// Reads the corpus joint count from `dir/gen_data_report.json` or the
/// training corpus.
fn corpus_joints(dir: &Path) -> Result<usize> {
    let report = dir.join("gen_data_report.json");
    if report.exists() {
        let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(report)?)?;
        if let Some(k) = v.get("joints").and_then(|k| k.as_u64()) {
            return Ok(k as usize);
        }
    }
    Ok(crate::datagen::MotionCorpus::read(dir.join("corpus_train.json"))?.joints())
}

pub fn train(cfg: &RunConfig, paths: &Paths) -> Result<()> {
    let dir = paths.input()?;
    let k = corpus_joints(dir)?;
    let mut timer = Timer::new(paths.timings);
    let mut fields = BTreeMap::new();
    for &kind in &cfg.train.kinds {
        let set = LabeledSet::read(dir.join(format!("samples_{}.json", kind.name())), kind, k)?;
        let held_path = dir.join(format!("heldout_{}.json", kind.name()));
        let held = if held_path.exists() { Some(LabeledSet::read(held_path, kind, k)?) } else { None };
        let tcfg = TrainConfig { seed: seed_for(cfg.seed, kind), ..cfg.train.network.clone() };
        info!("training {} field on {} samples", kind.name(), set.len());
        let (field, report) = timer.time(&format!("train_{}", kind.name()), || train_field(&set, held.as_ref(), &tcfg))?;
        field.write(paths.out(&field_file(kind)))?;
        fields.insert(kind.name().to_string(), report);
    }
    write_json(&paths.out("train_report.json"), &TrainCmdReport { joints: k, fields, timings: timer.times })
}

#[derive(Serialize)]
struct ProjectReport {
    before: BTreeMap<String, FieldStats>,
    after: BTreeMap<String, FieldStats>,
    frames: Vec<StateTrace>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    timings: BTreeMap<String, f64>,
}

pub fn project(cfg: &RunConfig, paths: &Paths) -> Result<()> {
    let input = MotionFile::read(paths.input()?)?;
    let fields = load_fields(paths.fields.as_deref())?;
    let skel = resolve_skeleton(paths, input.skeleton.as_ref(), input.sequence.joints())?;
    let mut timer = Timer::new(paths.timings);
    let (out, traces) = timer.time("project", || project_sequence(&input.sequence, &fields, &cfg.project))?;
    write_motion(&paths.out("projected.json"), &out, &skel)?;
    let report = ProjectReport {
        before: field_stats(&input.sequence, &fields)?,
        after: field_stats(&out, &fields)?,
        frames: traces,
        timings: timer.times,
    };
    write_json(&paths.out("project_report.json"), &report)
}

#[derive(Serialize)]
struct RolloutReport {
    fields: BTreeMap<String, FieldStats>,
    trace: RolloutTrace,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    timings: BTreeMap<String, f64>,
}

/// Rolls out from the first frame's pose and velocity, driven by the
/// accelerations of all frames but the last.
pub fn rollout(cfg: &RunConfig, paths: &Paths) -> Result<()> {
    let input = MotionFile::read(paths.input()?)?;
    let seq = &input.sequence;
    if seq.len() < 2 {
        return Err(Error::TooFewFrames { needed: 2, got: seq.len() });
    }
    let fields = load_fields(paths.fields.as_deref())?;
    let skel = resolve_skeleton(paths, input.skeleton.as_ref(), seq.joints())?;
    let accs: Vec<_> = seq.states[..seq.len() - 1].iter().map(|s| s.acc.clone()).collect();
    let icfg = crate::dynamics::IntegratorConfig { fps: seq.fps, ..cfg.rollout.clone() };
    let mut timer = Timer::new(paths.timings);
    let out = timer.time("rollout", || integrate(&seq.states[0].pose, &seq.states[0].vel, &accs, &fields, &icfg))?;
    let t_r = vec![seq.states[0].t_r; out.sequence.len()];
    let motion = rebuild_states_with_translation(&out.sequence.poses(), &t_r, seq.fps)?;
    write_motion(&paths.out("rollout.json"), &motion, &skel)?;
    let report = RolloutReport { fields: field_stats(&motion, &fields)?, trace: out.trace, timings: timer.times };
    write_json(&paths.out("rollout_report.json"), &report)
}

#[derive(Serialize)]
struct FitCmdReport {
    fit: FitReport,
    metrics: Option<MetricsReport>,
    stage1_metrics: Option<MetricsReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    observation_mpjpe_mm: Option<f64>,
}

fn reference(paths: &Paths) -> Result<Option<MotionFile>> {
    paths.reference.as_deref().map(MotionFile::read).transpose()
}

fn compare(
    pred: &MotionSequence,
    pred_skel: &Skeleton,
    reference: Option<(&MotionSequence, &Skeleton)>,
    fields: &FieldSet,
    timings: &BTreeMap<String, f64>,
) -> Result<Option<MetricsReport>> {
    let Some((r, rs)) = reference else { return Ok(None) };
    let mut m = MetricsReport::compare(pred, pred_skel, r, rs)?;
    m.fields = field_stats(pred, fields)?;
    m.timings = timings.clone();
    Ok(Some(m))
}

fn fit_report(
    result: &FitResult,
    reference: Option<(&MotionSequence, &Skeleton)>,
    fields: &FieldSet,
    timer: &Timer,
) -> Result<FitCmdReport> {
    Ok(FitCmdReport {
        fit: result.report.clone(),
        metrics: compare(&result.sequence, &result.skeleton, reference, fields, &timer.times)?,
        stage1_metrics: compare(&result.stage1, &result.skeleton, reference, fields, &BTreeMap::new())?,
        observation_mpjpe_mm: None,
    })
}

/// Mean distance between visible observed joints and the reference joints.
fn observation_error(obs: &Observation, reference: &MotionSequence, skel: &Skeleton) -> Result<Option<f64>> {
    let Observation::Joints3d { frames } = obs else { return Ok(None) };
    let pos = crate::optim::losses::sequence_positions(reference, skel)?;
    let (mut sum, mut n) = (0.0, 0usize);
    for (p, f) in pos.iter().zip(frames) {
        for j in 0..p.len() {
            if f.visible[j] {
                sum += (p[j] - f.points[j]).norm();
                n += 1;
            }
        }
    }
    Ok((n > 0).then(|| 1000.0 * sum / n as f64))
}

/// Fits the input motion's own joints, optionally after adding noise.
pub fn denoise(cfg: &RunConfig, paths: &Paths) -> Result<()> {
    let input = MotionFile::read(paths.input()?)?;
    let seq = &input.sequence;
    let fields = load_fields(paths.fields.as_deref())?;
    let skel = resolve_skeleton(paths, input.skeleton.as_ref(), seq.joints())?;
    let d = &cfg.denoise;
    let mut obs = Observation::joints3d_from(seq, &skel)?;
    if d.noise > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        obs = obs.with_noise(d.noise, &mut rng)?;
    }
    obs.write(paths.out("observation.json"))?;
    let init = match d.init {
        Init::Input => seq.clone(),
        Init::Identity => initial_sequence(&obs, seq.joints(), seq.fps)?,
    };
    let mut timer = Timer::new(paths.timings);
    let result = timer.time("fit", || fit_sequence(&obs, &skel, &init, &fields, &d.fit))?;
    write_motion(&paths.out("denoised.json"), &result.sequence, &result.skeleton)?;
    let reference = reference(paths)?;
    let (r, rs) = match &reference {
        Some(m) => (&m.sequence, resolve_skeleton(paths, m.skeleton.as_ref(), m.sequence.joints())?),
        None => (seq, skel.clone()),
    };
    let mut report = fit_report(&result, Some((r, &rs)), &fields, &timer)?;
    report.observation_mpjpe_mm = observation_error(&obs, r, &rs)?;
    write_json(&paths.out("denoise_report.json"), &report)
}

/// Fits an observation file (3D joints, 2D joints or point cloud).
pub fn fit(cfg: &RunConfig, paths: &Paths) -> Result<()> {
    let obs = Observation::read(paths.input()?)?;
    let fields = load_fields(paths.fields.as_deref())?;
    let reference = reference(paths)?;
    let k = match (obs.joints(), &paths.skeleton, &reference) {
        (Some(k), _, _) => k,
        (None, Some(p), _) => serde_json::from_str::<Skeleton>(&std::fs::read_to_string(p)?)?.joints(),
        (None, None, Some(r)) => r.sequence.joints(),
        (None, None, None) => {
            return Err(Error::Config("point-cloud observations need --skeleton or --reference".into()))
        }
    };
    let skel = resolve_skeleton(paths, reference.as_ref().and_then(|r| r.skeleton.as_ref()), k)?;
    obs.validate(k)?;
    let fps = reference.as_ref().map_or(cfg.fit.integrator.fps, |r| r.sequence.fps);
    let init = initial_sequence(&obs, k, fps)?;
    let mut timer = Timer::new(paths.timings);
    let result = timer.time("fit", || fit_sequence(&obs, &skel, &init, &fields, &cfg.fit))?;
    write_motion(&paths.out("fitted.json"), &result.sequence, &result.skeleton)?;
    let r = reference.as_ref().map(|m| (&m.sequence, m.skeleton.clone().unwrap_or_else(|| skel.clone())));
    let mut report = fit_report(&result, r.as_ref().map(|(s, k)| (*s, k)), &fields, &timer)?;
    if let Some((s, k)) = &r {
        report.observation_mpjpe_mm = observation_error(&obs, s, k)?;
    }
    write_json(&paths.out("fit_report.json"), &report)
}

#[derive(Serialize)]
struct InbetweenReport {
    keyframes: Vec<usize>,
    fit: FitReport,
    metrics: MetricsReport,
    baseline: MetricsReport,
    /// MPJPE on the unobserved frames only.
    hidden_mpjpe_mm: f64,
    baseline_hidden_mpjpe_mm: f64,
}

/// Keeps the configured keyframes of the input motion, fills the rest by
/// geodesic interpolation and refines by fitting; metrics compare against
/// the full input.
pub fn inbetween_cmd(cfg: &RunConfig, paths: &Paths) -> Result<()> {
    let input = MotionFile::read(paths.input()?)?;
    let seq = &input.sequence;
    let fields = load_fields(paths.fields.as_deref())?;
    let skel = resolve_skeleton(paths, input.skeleton.as_ref(), seq.joints())?;
    let mask = cfg.inbetween.keyframes.mask(seq.len())?;
    let mut timer = Timer::new(paths.timings);
    let (baseline, result) = timer.time("inbetween", || inbetween(seq, &mask, &skel, &fields, &cfg.inbetween.fit))?;
    write_motion(&paths.out("inbetween.json"), &result.sequence, &result.skeleton)?;
    write_motion(&paths.out("baseline.json"), &baseline, &skel)?;
    let mut metrics = MetricsReport::compare(&result.sequence, &result.skeleton, seq, &skel)?;
    metrics.fields = field_stats(&result.sequence, &fields)?;
    metrics.timings = timer.times;
    let mut base = MetricsReport::compare(&baseline, &skel, seq, &skel)?;
    base.fields = field_stats(&baseline, &fields)?;
    let hidden = |t: usize, _: usize| !mask[t];
    let report = InbetweenReport {
        keyframes: (0..seq.len()).filter(|t| mask[*t]).collect(),
        fit: result.report.clone(),
        hidden_mpjpe_mm: mpjpe_mm_masked(&result.sequence, &result.skeleton, seq, &skel, hidden)?,
        baseline_hidden_mpjpe_mm: mpjpe_mm_masked(&baseline, &skel, seq, &skel, hidden)?,
        metrics,
        baseline: base,
    };
    write_json(&paths.out("inbetween_report.json"), &report)
}

#[derive(Serialize)]
struct GenerateReport {
    noisy: BTreeMap<String, FieldStats>,
    rollout: BTreeMap<String, FieldStats>,
    refined: BTreeMap<String, FieldStats>,
    fit: FitReport,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    timings: BTreeMap<String, f64>,
}

/// Generates a motion from the first frame of the input.
pub fn generate(cfg: &RunConfig, paths: &Paths) -> Result<()> {
    let input = MotionFile::read(paths.input()?)?;
    let fields = load_fields(paths.fields.as_deref())?;
    let skel = resolve_skeleton(paths, input.skeleton.as_ref(), input.sequence.joints())?;
    let gcfg = crate::optim::GenerateConfig { seed: cfg.seed, ..cfg.generate.clone() };
    let mut timer = Timer::new(paths.timings);
    let g = timer.time("generate", || generate_motion(&input.sequence.states[0], &skel, &fields, &gcfg))?;
    write_motion(&paths.out("generated.json"), &g.refined.sequence, &g.refined.skeleton)?;
    write_motion(&paths.out("generated_rollout.json"), &g.rollout, &skel)?;
    let report = GenerateReport {
        noisy: field_stats(&g.noisy, &fields)?,
        rollout: field_stats(&g.rollout, &fields)?,
        refined: field_stats(&g.refined.sequence, &fields)?,
        fit: g.refined.report.clone(),
        timings: timer.times,
    };
    write_json(&paths.out("generate_report.json"), &report)
}

/// Compares `--input` against `--reference`; also prints the report.
pub fn metrics(_cfg: &RunConfig, paths: &Paths) -> Result<()> {
    let pred = MotionFile::read(paths.input()?)?;
    let reference = reference(paths)?.ok_or_else(|| Error::Config("--reference is required".into()))?;
    let fields = load_fields(paths.fields.as_deref())?;
    let ps = resolve_skeleton(paths, pred.skeleton.as_ref(), pred.sequence.joints())?;
    let rs = resolve_skeleton(paths, reference.skeleton.as_ref(), reference.sequence.joints())?;
    let mut timer = Timer::new(paths.timings);
    let mut m = timer.time("metrics", || MetricsReport::compare(&pred.sequence, &ps, &reference.sequence, &rs))?;
    m.fields = field_stats(&pred.sequence, &fields)?;
    m.timings = timer.times;
    write_json(&paths.out("metrics.json"), &m)?;
    let _ = writeln!(std::io::stdout(), "{}", serde_json::to_string_pretty(&m)?);
    Ok(())
}
