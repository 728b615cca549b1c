//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails.

mod common;

use std::f64::consts::PI;
use std::sync::Arc;
use std::time::{Duration, Instant};

use motionfield::datagen::{
    sample_negatives, sample_negatives_from, synth_corpus, synth_sequence, MetricWeights, MotionCorpus, NegativeConfig,
    NnIndex, SynthMotionSpec,
};
use motionfield::dynamics::{integrate, project_pose, IntegratorConfig, ProjectorConfig};
use motionfield::fields::encoding::encode_pose;
use motionfield::fields::{FieldKind, FieldSet, IdentityPoseField, Mlp, MlpField, SharedField, TrainConfig};
use motionfield::kinematics::{
    estimate_acceleration, estimate_velocity, forward_differences, AccelerationScheme, MotionSequence, Skeleton,
    VelocityScheme,
};
use motionfield::optim::{
    acceleration_error, fit_sequence, inbetween, initial_sequence, mpjpe_mm, mpjpe_mm_masked, EnergyWeights, FitConfig,
    Gradient, Observation, PinholeCamera, Problem, Stage, Variables,
};
use motionfield::product::{Pose, PoseAcceleration, PoseVelocity};
use motionfield::so3::{egrad2rgrad, exp_so3, geodesic_distance, log_so3, Rotation3};
use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

fn random_unit(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
        let n = v.norm();
        if n > 1e-6 {
            return v / n;
        }
    }
}

fn random_rotation(rng: &mut ChaCha8Rng) -> Rotation3 {
    exp_so3(&(random_unit(rng) * rng.random_range(0.0..PI)))
}

fn geometry() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut roundtrip, mut vs_nalgebra, mut dist) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..10_000 {
        let w = random_unit(&mut rng) * rng.random_range(0.0..PI - 1e-3);
        let r = exp_so3(&w);
        roundtrip = roundtrip.max((log_so3(&r) - w).norm());
        vs_nalgebra = vs_nalgebra.max((r.matrix() - nalgebra::Rotation3::new(w).into_inner()).amax());
        let (a, b) = (random_rotation(&mut rng), random_rotation(&mut rng));
        let rel = Rotation3::new(a.matrix().transpose() * b.matrix()).unwrap();
        dist = dist.max((geodesic_distance(&a, &b) - log_so3(&rel).norm()).abs());
    }
    let mut ortho = 0.0f64;
    for _ in 0..1000 {
        let r = random_rotation(&mut rng);
        let g = Matrix3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
        let p = egrad2rgrad(&r, &g);
        // normal component must be orthogonal to the tangent part, and the
        // tangent part must satisfy rᵀp skew
        let normal = g - p;
        let rp = r.matrix().transpose() * p;
        ortho = ortho.max(normal.dot(&p).abs()).max((rp + rp.transpose()).amax());
    }
    let el = t.elapsed();
    check(
        roundtrip < 1e-9 && vs_nalgebra < 1e-9 && dist < 1e-9 && ortho < 1e-10 && secs(el) < 5.0,
        format!(
            "exp/log {roundtrip:.1e}, exp vs reference {vs_nalgebra:.1e}, distance {dist:.1e}, \
             egrad2rgrad residual {ortho:.1e}, {:.2} s",
            secs(el)
        ),
    )
}

fn lissajous(fps: f64, n: usize) -> Vec<Pose> {
    (0..n)
        .map(|i| {
            let t = i as f64 / fps;
            let a = Rotation3::rot_x(0.6 * (2.0 * PI * 0.4 * t).sin());
            let b = Rotation3::rot_y(0.5 * (2.0 * PI * 0.3 * t + 0.7).sin());
            let c = Rotation3::rot_z(0.4 * (2.0 * PI * 0.5 * t + 1.3).cos());
            Pose(vec![a * b * c, b * c])
        })
        .collect()
}

fn estimators() -> Outcome {
    let t = Instant::now();
    let fps = 30.0;
    let n = 61;
    let poses: Vec<Pose> = (0..n)
        .map(|i| {
            let s = i as f64 / fps;
            Pose(vec![Rotation3::rot_x(0.5 * s * s)])
        })
        .collect();
    let v = estimate_velocity(&poses, fps, VelocityScheme::LogCentral).unwrap();
    let a = estimate_acceleration(&v, fps, AccelerationScheme::Central).unwrap();
    let vel_err = (1..n - 1)
        .map(|i| (v[i][0] - Vector3::new(i as f64 / fps, 0.0, 0.0)).norm())
        .fold(0.0, f64::max);
    // interior frames whose stencil uses only interior velocities
    let acc_err = (2..n - 2).map(|i| (a[i][0] - Vector3::new(1.0, 0.0, 0.0)).norm()).fold(0.0, f64::max);
    let poses = lissajous(fps, 90);
    let vl = estimate_velocity(&poses, fps, VelocityScheme::LogCentral).unwrap();
    let ac = estimate_acceleration(&vl, fps, AccelerationScheme::Central).unwrap();
    let at = estimate_acceleration(&vl, fps, AccelerationScheme::LogTransport(&poses)).unwrap();
    let (mut num, mut den) = (0.0, 0.0);
    for i in 1..89 {
        for j in 0..2 {
            num += (ac[i][j] - at[i][j]).norm_squared();
            den += ac[i][j].norm_squared();
        }
    }
    let rel = (num / den).sqrt();
    let el = t.elapsed();
    check(
        vel_err < 1e-3 && acc_err < 1e-2 && rel < 0.05 && secs(el) < 5.0,
        format!(
            "velocity {vel_err:.1e} rad/s, acceleration {acc_err:.1e} rad/s², schemes differ {:.2}%, {:.2} s",
            100.0 * rel,
            secs(el)
        ),
    )
}

fn random_fields(rng: &mut ChaCha8Rng, k: usize) -> FieldSet {
    let mut mk = |kind: FieldKind| -> SharedField {
        let net = Mlp::glorot(&[kind.input_dim(k), 8, 1], rng).unwrap();
        Arc::new(MlpField::new(kind, k, net).unwrap())
    };
    let (p, v, a) = (mk(FieldKind::Pose), mk(FieldKind::Velocity), mk(FieldKind::Acceleration));
    FieldSet::new(Some(p), Some(v), Some(a)).unwrap()
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

fn fd_energy_gradient(problem: &Problem, vars: &Variables, stage: Stage) -> Gradient {
    let h = 1e-6;
    let n = vars.frames();
    let k = vars.log_beta.len();
    let e = |d: &Gradient, s: f64| problem.energy(&vars.retract(d, s).unwrap(), stage).unwrap().total;
    let diff = |d: &Gradient| (e(d, -h) - e(d, h)) / (2.0 * h);
    let mut g = Gradient::zeros(n, k);
    for t in 0..n {
        for c in 0..3 {
            let mut d = Gradient::zeros(n, k);
            d.t_r[t][c] = 1.0;
            g.t_r[t][c] = diff(&d);
            for j in 0..k {
                let mut d = Gradient::zeros(n, k);
                d.poses[t].0[j][c] = 1.0;
                g.poses[t].0[j][c] = diff(&d);
            }
        }
    }
    for j in 0..k {
        let mut d = Gradient::zeros(n, k);
        d.log_beta[j] = 1.0;
        g.log_beta[j] = diff(&d);
    }
    g
}

fn gradients() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut net_worst = 0.0f64;
    for _ in 0..100 {
        let k = rng.random_range(1..4);
        let kind = FieldKind::ALL[rng.random_range(0..3)];
        let w1 = rng.random_range(2..10);
        let w2 = rng.random_range(2..10);
        let net = Mlp::glorot(&[kind.input_dim(k), w1, w2, 1], &mut rng).unwrap();
        let x: Vec<f64> = (0..kind.input_dim(k)).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (_, g) = net.grad_input(&x).unwrap();
        let h = 1e-6;
        let fd: Vec<f64> = (0..x.len())
            .map(|i| {
                let (mut a, mut b) = (x.clone(), x.clone());
                a[i] += h;
                b[i] -= h;
                (net.forward(&a).unwrap() - net.forward(&b).unwrap()) / (2.0 * h)
            })
            .collect();
        let num: f64 = g.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let den: f64 = g.iter().map(|a| a * a).sum::<f64>().sqrt();
        net_worst = net_worst.max(num / den.max(1e-12));
    }
    let mut energy_worst = 0.0f64;
    let k = 2;
    let skel = Skeleton::chain(k);
    for trial in 0..100 {
        let fields = random_fields(&mut rng, k);
        let vars = random_vars(&mut rng, 3, k);
        let truth = random_vars(&mut rng, 3, k);
        let seq = truth.to_sequence(30.0).unwrap();
        let mut cam = PinholeCamera::new(200.0, 200.0, 10.0, 5.0).unwrap();
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
        for stage in [Stage::I, Stage::II] {
            let (_, g) = problem.evaluate(&vars, stage, true).unwrap();
            let g = g.unwrap();
            let fd = fd_energy_gradient(&problem, &vars, stage);
            let diff = g.sub(&fd);
            energy_worst = energy_worst.max(diff.dot(&diff).sqrt() / g.dot(&g).sqrt().max(1e-12));
        }
    }
    let el = t.elapsed();
    check(
        net_worst < 1e-4 && energy_worst < 1e-4 && secs(el) < 30.0,
        format!("network {net_worst:.1e}, energy {energy_worst:.1e} (relative), {:.2} s", secs(el)),
    )
}

fn toy_corpus(k: usize) -> (MotionCorpus, MotionCorpus) {
    synth_corpus(&SynthMotionSpec::toy(k, 1), 100).unwrap()
}

fn net_config(lr: f64) -> TrainConfig {
    TrainConfig { hidden: vec![64, 64, 32], epochs: 100, learning_rate: lr, final_lr_fraction: 0.1, ..TrainConfig::new(4) }
}

fn field_training() -> (Outcome, SharedField, MotionCorpus, Duration) {
    let t = Instant::now();
    let (train, held) = toy_corpus(2);
    let set = sample_negatives(FieldKind::Pose, &train, &NegativeConfig::new(5000, 2)).unwrap();
    let heldout = sample_negatives_from(FieldKind::Pose, &train, &held, &NegativeConfig::new(1000, 3)).unwrap();
    let (f, r) = motionfield::fields::train_field(&set, Some(&heldout), &net_config(1e-1)).unwrap();
    let el = t.elapsed();
    let p = r.heldout_pearson.unwrap_or(f64::NAN);
    let out = check(
        p > 0.9 && secs(el) < 300.0,
        format!("held-out Pearson {p:.4} on {} samples, {:.1} s", heldout.len(), secs(el)),
    );
    (out, Arc::new(f), train, el)
}

fn projection(field: &SharedField, train: &MotionCorpus, train_time: Duration) -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let id = IdentityPoseField::new(1);
    let one = ProjectorConfig { step: 1.0, max_iterations: 1, ..Default::default() };
    let mut analytic = 0.0f64;
    for _ in 0..1000 {
        let p = Pose(vec![exp_so3(&(random_unit(&mut rng) * rng.random_range(0.01..PI - 1e-3)))]);
        let (q, _) = project_pose(&p, &id, &one).unwrap();
        analytic = analytic.max(geodesic_distance(&q[0], &Rotation3::identity()));
    }
    let index = NnIndex::from_corpus(FieldKind::Pose, train, MetricWeights::default()).unwrap();
    let nrm = Normal::new(0.0, 0.2).unwrap();
    let cfg = ProjectorConfig { step: 1.0, max_iterations: 50, ..Default::default() };
    let (mut before, mut after) = (0.0, 0.0);
    for i in 0..500 {
        let p = &train.poses[(i * 37) % train.len()];
        let noisy = Pose(p.iter().map(|r| r.retract(&Vector3::from_fn(|_, _| nrm.sample(&mut rng)))).collect());
        let (q, _) = project_pose(&noisy, field.as_ref(), &cfg).unwrap();
        before += index.nearest(&encode_pose(&noisy)).unwrap().0;
        after += index.nearest(&encode_pose(&q)).unwrap().0;
    }
    let el = t.elapsed() + train_time;
    let ratio = after / before;
    check(
        analytic < 1e-8 && ratio <= 0.2 && secs(el) < 120.0,
        format!(
            "identity field one step {analytic:.1e} rad; trained field {:.4} -> {:.4} (ratio {ratio:.3}), {:.1} s",
            before / 500.0,
            after / 500.0,
            secs(el)
        ),
    )
}

/// Body angular velocity and acceleration of `R(t) = Rx(f(t))·Ry(g(t))`.
fn two_axis(t: f64) -> (Rotation3, Vector3<f64>, Vector3<f64>) {
    let (f, fd, fdd) = (0.8 * (1.3 * t).sin(), 0.8 * 1.3 * (1.3 * t).cos(), -0.8 * 1.69 * (1.3 * t).sin());
    let (g, gd, gdd) = (0.5 * t + 0.3 * t * t, 0.5 + 0.6 * t, 0.6);
    let b = Rotation3::rot_y(g);
    let ex = Vector3::x();
    let ey = Vector3::y();
    let bt_ex = b.matrix().transpose() * ex;
    let w = bt_ex * fd + ey * gd;
    let a = bt_ex * fdd - ey.cross(&bt_ex) * (fd * gd) + ey * gdd;
    (Rotation3::rot_x(f) * b, w, a)
}

fn integrator_error(fps: f64) -> f64 {
    let n = fps as usize;
    let (r0, w0, _) = two_axis(0.0);
    let accs: Vec<PoseAcceleration> = (0..n).map(|i| PoseAcceleration(vec![two_axis(i as f64 / fps).2])).collect();
    let out = integrate(&Pose(vec![r0]), &PoseVelocity(vec![w0]), &accs, &FieldSet::default(), &IntegratorConfig::unprojected(fps))
        .unwrap();
    geodesic_distance(&out.sequence.states[n].pose[0], &two_axis(1.0).0)
}

fn integrator(train_time: Duration) -> Outcome {
    let t = Instant::now();
    let fps = 30.0;
    let w = Vector3::new(0.7, 0.0, 0.0);
    let zero = vec![PoseAcceleration(vec![Vector3::zeros()]); 60];
    let out = integrate(&Pose(vec![Rotation3::identity()]), &PoseVelocity(vec![w]), &zero, &FieldSet::default(), &IntegratorConfig::unprojected(fps))
        .unwrap();
    let single = (0..=60)
        .map(|i| geodesic_distance(&out.sequence.states[i].pose[0], &Rotation3::rot_x(0.7 * i as f64 / fps)))
        .fold(0.0, f64::max);
    let halving = integrator_error(30.0) / integrator_error(60.0);

    let (train, held) = toy_corpus(2);
    let tc = net_config(3e-2);
    let mut fs = FieldSet::default();
    for kind in [FieldKind::Pose, FieldKind::Velocity] {
        let set = sample_negatives(kind, &train, &NegativeConfig::new(5000, 2)).unwrap();
        let f: SharedField = Arc::new(motionfield::fields::train_field(&set, None, &tc).unwrap().0);
        match kind {
            FieldKind::Pose => fs.pose = Some(f),
            _ => fs.velocity = Some(f),
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let nrm = Normal::new(0.0, 2.0).unwrap();
    let projected = IntegratorConfig::default();
    let plain = IntegratorConfig::unprojected(fps);
    let (mut ep, mut eu) = (0.0, 0.0);
    let seqs: Vec<&MotionSequence> = train.sequences.iter().chain(held.sequences.iter()).collect();
    let m = 20;
    for i in 0..m {
        let poses: Vec<Pose> = seqs[i * seqs.len() / m].poses()[..61].to_vec();
        let (v, a) = forward_differences(&poses, fps).unwrap();
        let noisy: Vec<PoseAcceleration> = a[..60]
            .iter()
            .map(|x| PoseAcceleration(x.0.iter().map(|w| w + Vector3::from_fn(|_, _| nrm.sample(&mut rng))).collect()))
            .collect();
        let err = |s: &MotionSequence| (0..2).map(|j| geodesic_distance(&s.states[60].pose[j], &poses[60][j])).sum::<f64>() / 2.0;
        ep += err(&integrate(&poses[0], &v[0], &noisy, &fs, &projected).unwrap().sequence);
        eu += err(&integrate(&poses[0], &v[0], &noisy, &fs, &plain).unwrap().sequence);
    }
    let reduction = 1.0 - ep / eu;
    let el = t.elapsed() + train_time;
    check(
        single < 1e-12 && (1.6..=2.4).contains(&halving) && reduction >= 0.3 && secs(el) < 120.0,
        format!(
            "single axis {single:.1e} rad, error ratio dt/(dt/2) {halving:.2}, drift {:.3} -> {:.3} rad \
             ({:.0}% lower), {:.1} s",
            eu / m as f64,
            ep / m as f64,
            100.0 * reduction,
            secs(el)
        ),
    )
}

const K5: usize = 5;
const SEEDS: u64 = 4;

fn k5_fields() -> (FieldSet, Duration) {
    let t = Instant::now();
    let (train, _) = toy_corpus(K5);
    let tc = net_config(1e-2);
    let mut fs = FieldSet::default();
    for kind in FieldKind::ALL {
        let set = sample_negatives(kind, &train, &NegativeConfig::new(5000, 2)).unwrap();
        let f: SharedField = Arc::new(motionfield::fields::train_field(&set, None, &tc).unwrap().0);
        match kind {
            FieldKind::Pose => fs.pose = Some(f),
            FieldKind::Velocity => fs.velocity = Some(f),
            FieldKind::Acceleration => fs.acceleration = Some(f),
        }
    }
    (fs, t.elapsed())
}

fn fit_config() -> FitConfig {
    let weights = EnergyWeights { velocity: 1e-2, acceleration: 5e-4, smooth: 0.3, ..Default::default() };
    FitConfig { weights, stage1_iterations: 200, stage2_iterations: 100, ..Default::default() }
}

fn eval_motion(s: u64) -> MotionSequence {
    let spec = SynthMotionSpec { frames: 30, ..SynthMotionSpec::toy(K5, 1) };
    synth_sequence(&spec, 1000 + s).unwrap()
}

fn denoising(fs: &FieldSet, train_time: Duration) -> Outcome {
    let t = Instant::now();
    let skel = Skeleton::chain(K5);
    let cfg = fit_config();
    let (mut noisy, mut s1, mut s2, mut a1, mut a2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for s in 0..SEEDS {
        let gt = eval_motion(s);
        let mut rng = ChaCha8Rng::seed_from_u64(s);
        let obs = Observation::joints3d_from(&gt, &skel).unwrap().with_noise(0.04, &mut rng).unwrap();
        let Observation::Joints3d { frames } = &obs else { unreachable!() };
        let truth = Observation::joints3d_from(&gt, &skel).unwrap();
        let Observation::Joints3d { frames: clean } = &truth else { unreachable!() };
        let (sum, count) = frames.iter().zip(clean).fold((0.0, 0usize), |(s, c), (a, b)| {
            (s + a.points.iter().zip(&b.points).map(|(x, y)| (x - y).norm()).sum::<f64>(), c + a.points.len())
        });
        noisy += 1000.0 * sum / count as f64;
        let init = initial_sequence(&obs, K5, gt.fps).unwrap();
        let out = fit_sequence(&obs, &skel, &init, fs, &cfg).unwrap();
        s1 += mpjpe_mm(&out.stage1, &out.skeleton, &gt, &skel).unwrap();
        s2 += mpjpe_mm(&out.sequence, &out.skeleton, &gt, &skel).unwrap();
        a1 += acceleration_error(&out.stage1, &gt).unwrap();
        a2 += acceleration_error(&out.sequence, &gt).unwrap();
    }
    let n = SEEDS as f64;
    let reduction = 1.0 - s2 / noisy;
    let el = t.elapsed() + train_time;
    check(
        reduction >= 0.4 && a2 < a1 && secs(el) < 600.0,
        format!(
            "MPJPE noisy {:.1} / stage I {:.1} / stage II {:.1} mm ({:.0}% lower), \
             acceleration error stage I {:.2} / stage II {:.2} rad/s², {:.1} s",
            noisy / n,
            s1 / n,
            s2 / n,
            100.0 * reduction,
            a1 / n,
            a2 / n,
            secs(el)
        ),
    )
}

fn occlusion(fs: &FieldSet, train_time: Duration) -> Outcome {
    let t = Instant::now();
    let skel = Skeleton::chain(K5);
    let cfg = fit_config();
    let legs = |_t: usize, j: usize| j >= K5 - 2;
    let (mut h1, mut h2) = (0.0, 0.0);
    for s in 0..SEEDS {
        let gt = eval_motion(s);
        let mut rng = ChaCha8Rng::seed_from_u64(100 + s);
        let obs = Observation::joints3d_from(&gt, &skel).unwrap().with_noise(0.04, &mut rng).unwrap().masked(legs);
        let init = initial_sequence(&obs, K5, gt.fps).unwrap();
        let out = fit_sequence(&obs, &skel, &init, fs, &cfg).unwrap();
        h1 += mpjpe_mm_masked(&out.stage1, &out.skeleton, &gt, &skel, legs).unwrap();
        h2 += mpjpe_mm_masked(&out.sequence, &out.skeleton, &gt, &skel, legs).unwrap();
    }
    let n = SEEDS as f64;
    let el = t.elapsed() + train_time;
    check(
        h2 < h1 && secs(el) < 600.0,
        format!("hidden-joint error stage I {:.1} / stage II {:.1} mm, {:.1} s", h1 / n, h2 / n, secs(el)),
    )
}

fn inbetweening(fs: &FieldSet, train_time: Duration) -> Outcome {
    let t = Instant::now();
    let skel = Skeleton::chain(K5);
    let cfg = fit_config();
    let (mut base, mut fit) = (0.0, 0.0);
    for s in 0..SEEDS {
        let gt = eval_motion(s);
        let mut observed = vec![false; gt.len()];
        observed[0] = true;
        observed[gt.len() - 1] = true;
        let (b, out) = inbetween(&gt, &observed, &skel, fs, &cfg).unwrap();
        base += acceleration_error(&b, &gt).unwrap();
        fit += acceleration_error(&out.sequence, &gt).unwrap();
    }
    let n = SEEDS as f64;
    let el = t.elapsed() + train_time;
    check(
        fit < base && secs(el) < 600.0,
        format!("acceleration error geodesic baseline {:.3} / fit {:.3} rad/s², {:.1} s", base / n, fit / n, secs(el)),
    )
}

fn determinism() -> Outcome {
    let t = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, common::SMALL_CONFIG).unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    common::pipeline(&cfg, &a);
    common::pipeline(&cfg, &b);
    let diff = common::tree_differences(&a, &b);
    check(
        diff.is_empty(),
        format!("9 commands run twice, differing files {diff:?}, {:.1} s", secs(t.elapsed())),
    )
}

fn main() {
    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();
    let mut report = |n: u32, name: &'static str, o: Outcome| {
        println!("criterion {n:>2} {name:<12} {}  {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((n, name, o));
    };
    report(1, "geometry", geometry());
    report(2, "estimators", estimators());
    report(3, "gradients", gradients());
    let (c4, pose_field, train, train_time) = field_training();
    report(4, "training", c4);
    report(5, "projection", projection(&pose_field, &train, train_time));
    report(6, "integrator", integrator(Duration::ZERO));
    let (fs, t5) = k5_fields();
    report(7, "denoising", denoising(&fs, t5));
    report(8, "occlusion", occlusion(&fs, t5));
    report(9, "inbetween", inbetweening(&fs, t5));
    report(10, "determinism", determinism());
    let failed: Vec<u32> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    println!("{} of {} criteria pass", results.len() - failed.len(), results.len());
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
