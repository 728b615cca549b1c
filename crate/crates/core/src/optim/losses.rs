//! Data, regularization and contact terms. Each term works on per-frame
//! joint positions, returns its unweighted value and, when given a gradient
//! buffer, accumulates `weight·∂term/∂positions` into it.

use nalgebra::{Vector2, Vector3};

use crate::error::{check_len, Error, Result};
use crate::kinematics::{forward_kinematics, MotionSequence, Skeleton};
use crate::optim::observation::{Joints2dFrame, Joints3dFrame, Observation, PinholeCamera};
use crate::product::PoseVelocity;

/// Per-frame joint positions.
pub type Positions = Vec<Vec<Vector3<f64>>>;

pub fn zero_positions(frames: usize, k: usize) -> Positions {
    vec![vec![Vector3::zeros(); k]; frames]
}

pub fn sequence_positions(seq: &MotionSequence, skel: &Skeleton) -> Result<Positions> {
    seq.states.iter().map(|s| Ok(forward_kinematics(skel, &s.t_r, &s.pose)?.0)).collect()
}

/// `ρ(r; c) = ‖r‖²/(‖r‖² + c²)`.
pub fn geman_mcclure(r: &Vector2<f64>, c: f64) -> f64 {
    let s = r.norm_squared();
    s / (s + c * c)
}

/// Tukey bisquare weight `(1 - (r/c)²)²` for `r < c`, else 0.
pub fn bisquare_weight(r: f64, c: f64) -> f64 {
    if r < c {
        let u = (r / c).powi(2);
        (1.0 - u) * (1.0 - u)
    } else {
        0.0
    }
}

fn check_frames(pos: &Positions, n: usize) -> Result<()> {
    if pos.len() != n {
        return Err(Error::Observation(format!("observation has {n} frames, sequence has {}", pos.len())));
    }
    Ok(())
}

/// `Σ ‖J_t^j - O_t^j‖²` over visible joints.
pub fn data_3d(pos: &Positions, frames: &[Joints3dFrame], weight: f64, grad: Option<&mut Positions>) -> Result<f64> {
    check_frames(pos, frames.len())?;
    let mut grad = grad;
    let mut total = 0.0;
    for (t, (p, f)) in pos.iter().zip(frames).enumerate() {
        check_len(p.len(), f.points.len())?;
        for j in 0..p.len() {
            if !f.visible[j] {
                continue;
            }
            let r = p[j] - f.points[j];
            total += r.norm_squared();
            if let Some(g) = grad.as_deref_mut() {
                g[t][j] += r * (2.0 * weight);
            }
        }
    }
    Ok(total)
}

/// `Σ σ_t^j ρ(Π(J_t^j) - O_t^j; c)` over visible joints in front of the
/// camera. Also returns the number of visible joints behind the camera,
/// which are skipped.
pub fn data_2d(
    pos: &Positions,
    camera: &PinholeCamera,
    frames: &[Joints2dFrame],
    c: f64,
    weight: f64,
    grad: Option<&mut Positions>,
) -> Result<(f64, usize)> {
    check_frames(pos, frames.len())?;
    let rot = camera.extrinsic_rotation();
    let mut grad = grad;
    let (mut total, mut behind) = (0.0, 0usize);
    for (t, (p, f)) in pos.iter().zip(frames).enumerate() {
        check_len(p.len(), f.pixels.len())?;
        for j in 0..p.len() {
            if !f.visible[j] || f.confidence[j] == 0.0 {
                continue;
            }
            let x = rot.transform(&p[j]) + camera.translation;
            if x.z <= 0.0 {
                behind += 1;
                continue;
            }
            let u = Vector2::new(camera.fx * x.x / x.z + camera.cx, camera.fy * x.y / x.z + camera.cy);
            let r = u - f.pixels[j];
            let s = r.norm_squared();
            total += f.confidence[j] * s / (s + c * c);
            if let Some(g) = grad.as_deref_mut() {
                // dρ/dr = 2r·c²/(s + c²)²
                let dr = r * (2.0 * c * c / ((s + c * c) * (s + c * c)) * f.confidence[j] * weight);
                let dx = Vector3::new(
                    dr.x * camera.fx / x.z,
                    dr.y * camera.fy / x.z,
                    -(dr.x * camera.fx * x.x + dr.y * camera.fy * x.y) / (x.z * x.z),
                );
                g[t][j] += rot.transpose().transform(&dx);
            }
        }
    }
    Ok((total, behind))
}

/// One-sided Chamfer from cloud points to their nearest joints:
/// `Σ w_bs(r)·r²` with `r` the distance to the nearest joint.
pub fn data_pointcloud(
    pos: &Positions,
    frames: &[Vec<Vector3<f64>>],
    cutoff: f64,
    weight: f64,
    grad: Option<&mut Positions>,
) -> Result<f64> {
    check_frames(pos, frames.len())?;
    let mut grad = grad;
    let mut total = 0.0;
    for (t, (p, cloud)) in pos.iter().zip(frames).enumerate() {
        for o in cloud {
            let (mut best, mut bj) = (f64::INFINITY, 0);
            for (j, x) in p.iter().enumerate() {
                let d = (x - o).norm_squared();
                if d < best {
                    best = d;
                    bj = j;
                }
            }
            let r = best.sqrt();
            if r >= cutoff {
                continue;
            }
            let u = best / (cutoff * cutoff);
            total += (1.0 - u) * (1.0 - u) * best;
            if let Some(g) = grad.as_deref_mut() {
                g[t][bj] += (p[bj] - o) * (2.0 * (1.0 - u) * (1.0 - 3.0 * u) * weight);
            }
        }
    }
    Ok(total)
}

/// `Σ ‖J_{t+1} - J_t‖²` over all joints.
pub fn smoothness(pos: &Positions, weight: f64, grad: Option<&mut Positions>) -> f64 {
    let mut grad = grad;
    let mut total = 0.0;
    for t in 0..pos.len().saturating_sub(1) {
        for j in 0..pos[t].len() {
            let d = pos[t + 1][j] - pos[t][j];
            total += d.norm_squared();
            if let Some(g) = grad.as_deref_mut() {
                g[t + 1][j] += d * (2.0 * weight);
                g[t][j] -= d * (2.0 * weight);
            }
        }
    }
    total
}

/// `Σ (ℓ_{t+1} - ℓ_t)²` over parent-child segments.
pub fn bone_length_consistency(pos: &Positions, skel: &Skeleton, weight: f64, grad: Option<&mut Positions>) -> f64 {
    let mut grad = grad;
    let mut total = 0.0;
    for t in 0..pos.len().saturating_sub(1) {
        for j in 0..skel.joints() {
            let Some(par) = skel.parent(j) else { continue };
            let (a, b) = (pos[t][j] - pos[t][par], pos[t + 1][j] - pos[t + 1][par]);
            let (la, lb) = (a.norm(), b.norm());
            let e = lb - la;
            total += e * e;
            if let Some(g) = grad.as_deref_mut() {
                let s = 2.0 * e * weight;
                if lb > 0.0 {
                    g[t + 1][j] += b * (s / lb);
                    g[t + 1][par] -= b * (s / lb);
                }
                if la > 0.0 {
                    g[t][j] -= a * (s / la);
                    g[t][par] += a * (s / la);
                }
            }
        }
    }
    total
}

/// Contact terms. `probs[t][i]` is the contact probability of joint
/// `joints[i]` at frame `t`.
pub struct Contacts<'a> {
    pub joints: &'a [usize],
    pub probs: &'a [Vec<f64>],
}

impl Contacts<'_> {
    fn validate(&self, frames: usize, k: usize) -> Result<()> {
        check_len(frames, self.probs.len())?;
        for p in self.probs {
            check_len(self.joints.len(), p.len())?;
            if p.iter().any(|c| !(0.0..=1.0).contains(c)) {
                return Err(Error::Config("contact probabilities must lie in [0, 1]".into()));
            }
        }
        if let Some(j) = self.joints.iter().find(|j| **j >= k) {
            return Err(Error::Config(format!("contact joint {j} out of range")));
        }
        Ok(())
    }

    /// `Σ c_t^i ‖j_t^i - j_{t-1}^i‖²`.
    pub fn sliding(&self, pos: &Positions, weight: f64, grad: Option<&mut Positions>) -> Result<f64> {
        self.validate(pos.len(), pos.first().map_or(0, |p| p.len()))?;
        let mut grad = grad;
        let mut total = 0.0;
        for t in 1..pos.len() {
            for (i, &j) in self.joints.iter().enumerate() {
                let c = self.probs[t][i];
                let d = pos[t][j] - pos[t - 1][j];
                total += c * d.norm_squared();
                if let Some(g) = grad.as_deref_mut() {
                    g[t][j] += d * (2.0 * c * weight);
                    g[t - 1][j] -= d * (2.0 * c * weight);
                }
            }
        }
        Ok(total)
    }

    /// `Σ c_t^i max(|z_t^i| - δ, 0)`.
    pub fn height(&self, pos: &Positions, slack: f64, weight: f64, grad: Option<&mut Positions>) -> Result<f64> {
        self.validate(pos.len(), pos.first().map_or(0, |p| p.len()))?;
        let mut grad = grad;
        let mut total = 0.0;
        for t in 0..pos.len() {
            for (i, &j) in self.joints.iter().enumerate() {
                let c = self.probs[t][i];
                let z = pos[t][j].z;
                if z.abs() > slack {
                    total += c * (z.abs() - slack);
                    if let Some(g) = grad.as_deref_mut() {
                        g[t][j].z += c * z.signum() * weight;
                    }
                }
            }
        }
        Ok(total)
    }

    /// `Σ c_t^i ‖θ̇_t^i‖²` on the angular velocity of each contact joint.
    pub fn angular_velocity(&self, vel: &[PoseVelocity], weight: f64, grad: Option<&mut [PoseVelocity]>) -> Result<f64> {
        self.validate(vel.len(), vel.first().map_or(0, |v| v.joints()))?;
        let mut grad = grad;
        let mut total = 0.0;
        for (t, v) in vel.iter().enumerate() {
            for (i, &j) in self.joints.iter().enumerate() {
                let c = self.probs[t][i];
                total += c * v[j].norm_squared();
                if let Some(g) = grad.as_deref_mut() {
                    g[t].0[j] += v[j] * (2.0 * c * weight);
                }
            }
        }
        Ok(total)
    }
}

/// Heuristic contact probabilities: 1 where the joint height is below
/// `height` and its speed (central differences) below `speed`, else 0.
pub fn contact_heuristic(pos: &Positions, fps: f64, joints: &[usize], height: f64, speed: f64) -> Vec<Vec<f64>> {
    let n = pos.len();
    (0..n)
        .map(|t| {
            joints
                .iter()
                .map(|&j| {
                    let v = if n < 2 {
                        0.0
                    } else if t == 0 {
                        (pos[1][j] - pos[0][j]).norm() * fps
                    } else if t == n - 1 {
                        (pos[t][j] - pos[t - 1][j]).norm() * fps
                    } else {
                        (pos[t + 1][j] - pos[t - 1][j]).norm() * fps * 0.5
                    };
                    if pos[t][j].z < height && v < speed {
                        1.0
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect()
}

pub fn loss_data_3d(seq: &MotionSequence, obs: &Observation, skel: &Skeleton) -> Result<f64> {
    match obs {
        Observation::Joints3d { frames } => data_3d(&sequence_positions(seq, skel)?, frames, 1.0, None),
        _ => Err(Error::Observation(format!("expected joints3d, got {:?}", obs.kind()))),
    }
}

/// Returns the loss and the number of skipped joints behind the camera.
pub fn loss_data_2d(seq: &MotionSequence, obs: &Observation, skel: &Skeleton, c: f64) -> Result<(f64, usize)> {
    match obs {
        Observation::Joints2d { camera, frames } => data_2d(&sequence_positions(seq, skel)?, camera, frames, c, 1.0, None),
        _ => Err(Error::Observation(format!("expected joints2d, got {:?}", obs.kind()))),
    }
}

pub fn loss_data_pc(seq: &MotionSequence, obs: &Observation, skel: &Skeleton, cutoff: f64) -> Result<f64> {
    match obs {
        Observation::Pointcloud { frames } => data_pointcloud(&sequence_positions(seq, skel)?, frames, cutoff, 1.0, None),
        _ => Err(Error::Observation(format!("expected pointcloud, got {:?}", obs.kind()))),
    }
}

/// Smoothness and bone-length consistency, unweighted: `(L_smooth, L_bl)`.
pub fn loss_reg(seq: &MotionSequence, skel: &Skeleton) -> Result<(f64, f64)> {
    let pos = sequence_positions(seq, skel)?;
    Ok((smoothness(&pos, 1.0, None), bone_length_consistency(&pos, skel, 1.0, None)))
}

/// `λ_cj·L_slide + λ_cv·L_angvel + λ_ch·L_height` on the sequence's joints
/// and stored velocities.
pub fn loss_contact(
    seq: &MotionSequence,
    skel: &Skeleton,
    contacts: &Contacts,
    weights: [f64; 3],
    slack: f64,
) -> Result<f64> {
    let pos = sequence_positions(seq, skel)?;
    let vel: Vec<PoseVelocity> = seq.states.iter().map(|s| s.vel.clone()).collect();
    Ok(weights[0] * contacts.sliding(&pos, 1.0, None)?
        + weights[1] * contacts.angular_velocity(&vel, 1.0, None)?
        + weights[2] * contacts.height(&pos, slack, 1.0, None)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::rebuild_states;
    use crate::product::Pose;
    use crate::so3::Rotation3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_positions(rng: &mut impl Rng, n: usize, k: usize) -> Positions {
        (0..n).map(|_| (0..k).map(|_| Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0))).collect()).collect()
    }

    fn fd_check(pos: &Positions, f: impl Fn(&Positions) -> f64, grad: &Positions) {
        let h = 1e-6;
        for t in 0..pos.len() {
            for j in 0..pos[t].len() {
                for c in 0..3 {
                    let (mut a, mut b) = (pos.clone(), pos.clone());
                    a[t][j][c] += h;
                    b[t][j][c] -= h;
                    let fd = (f(&a) - f(&b)) / (2.0 * h);
                    let g = grad[t][j][c];
                    assert!((fd - g).abs() <= 1e-4 * g.abs().max(1.0), "{t} {j} {c}: {fd} vs {g}");
                }
            }
        }
    }

    fn frames3d(points: &Positions, visible: impl Fn(usize, usize) -> bool) -> Vec<Joints3dFrame> {
        points
            .iter()
            .enumerate()
            .map(|(t, p)| Joints3dFrame { points: p.clone(), visible: (0..p.len()).map(|j| visible(t, j)).collect() })
            .collect()
    }

    #[test]
    fn data_3d_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pos = random_positions(&mut rng, 4, 3);
        assert_eq!(data_3d(&pos, &frames3d(&pos, |_, _| true), 1.0, None).unwrap(), 0.0);
        let mut obs = pos.clone();
        obs[2][1].x += 0.1;
        let v = data_3d(&pos, &frames3d(&obs, |_, _| true), 1.0, None).unwrap();
        assert!((v - 0.01).abs() < 1e-12);
        // naive double loop
        let obs = random_positions(&mut rng, 4, 3);
        let vis = |t: usize, j: usize| (t + j) % 3 != 0;
        let mut naive = 0.0;
        for t in 0..4 {
            for j in 0..3 {
                if vis(t, j) {
                    let d = pos[t][j] - obs[t][j];
                    naive += d.x * d.x + d.y * d.y + d.z * d.z;
                }
            }
        }
        let frames = frames3d(&obs, vis);
        assert!((data_3d(&pos, &frames, 1.0, None).unwrap() - naive).abs() < 1e-12);
        let mut g = zero_positions(4, 3);
        data_3d(&pos, &frames, 1.0, Some(&mut g)).unwrap();
        fd_check(&pos, |p| data_3d(p, &frames, 1.0, None).unwrap(), &g);
        assert!(data_3d(&pos, &frames[..3], 1.0, None).is_err());
    }

    #[test]
    fn data_2d_examples() {
        assert!((geman_mcclure(&Vector2::new(3.0, 4.0), 5.0) - 0.5).abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut cam = PinholeCamera::new(300.0, 280.0, 160.0, 120.0).unwrap();
        cam.rotation = crate::so3::quat_encode(&Rotation3::rot_y(0.3));
        cam.translation = Vector3::new(0.1, -0.2, 6.0);
        let pos = random_positions(&mut rng, 3, 4);
        let frames: Vec<Joints2dFrame> = pos
            .iter()
            .map(|p| Joints2dFrame {
                pixels: p.iter().map(|x| cam.project(x).unwrap()).collect(),
                confidence: vec![0.7; 4],
                visible: vec![true; 4],
            })
            .collect();
        let (v, behind) = data_2d(&pos, &cam, &frames, 100.0, 1.0, None).unwrap();
        assert_eq!((v, behind), (0.0, 0));
        let noisy: Vec<Joints2dFrame> = frames
            .iter()
            .map(|f| Joints2dFrame {
                pixels: f.pixels.iter().map(|p| p + Vector2::new(rng.random_range(-80.0..80.0), 30.0)).collect(),
                ..f.clone()
            })
            .collect();
        let mut g = zero_positions(3, 4);
        data_2d(&pos, &cam, &noisy, 100.0, 1.0, Some(&mut g)).unwrap();
        fd_check(&pos, |p| data_2d(p, &cam, &noisy, 100.0, 1.0, None).unwrap().0, &g);
        let mut behind_pos = pos.clone();
        behind_pos[0][0].z = -10.0;
        let (_, behind) = data_2d(&behind_pos, &cam, &frames, 100.0, 1.0, None).unwrap();
        assert_eq!(behind, 1);
    }

    #[test]
    fn pointcloud_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pos = random_positions(&mut rng, 2, 4);
        let exact: Vec<Vec<Vector3<f64>>> = pos.clone();
        assert_eq!(data_pointcloud(&pos, &exact, 0.2, 1.0, None).unwrap(), 0.0);
        let mut with_outlier = exact.clone();
        with_outlier[0].push(Vector3::new(50.0, 0.0, 0.0));
        assert_eq!(data_pointcloud(&pos, &with_outlier, 0.2, 1.0, None).unwrap(), 0.0);
        let cloud: Vec<Vec<Vector3<f64>>> = pos
            .iter()
            .map(|p| p.iter().map(|x| x + Vector3::from_fn(|_, _| rng.random_range(-0.08..0.08))).collect())
            .collect();
        // brute-force oracle
        let mut naive = 0.0;
        for (p, c) in pos.iter().zip(&cloud) {
            for o in c {
                let r = p.iter().map(|x| (x - o).norm()).fold(f64::INFINITY, f64::min);
                naive += bisquare_weight(r, 0.2) * r * r;
            }
        }
        assert!((data_pointcloud(&pos, &cloud, 0.2, 1.0, None).unwrap() - naive).abs() < 1e-12);
        let mut g = zero_positions(2, 4);
        data_pointcloud(&pos, &cloud, 0.2, 1.0, Some(&mut g)).unwrap();
        fd_check(&pos, |p| data_pointcloud(p, &cloud, 0.2, 1.0, None).unwrap(), &g);
        let empty = vec![vec![]; 2];
        assert_eq!(data_pointcloud(&pos, &empty, 0.2, 1.0, None).unwrap(), 0.0);
    }

    #[test]
    fn regularizer_examples() {
        let skel = Skeleton::chain(3);
        let still = rebuild_states(&vec![Pose(vec![Rotation3::rot_x(0.2); 3]); 4], 30.0).unwrap();
        assert_eq!(loss_reg(&still, &skel).unwrap(), (0.0, 0.0));
        let moving: Vec<Pose> = (0..5).map(|t| Pose(vec![Rotation3::rot_x(0.1 * t as f64); 3])).collect();
        let (smooth, bl) = loss_reg(&rebuild_states(&moving, 30.0).unwrap(), &skel).unwrap();
        assert!(smooth > 0.0);
        assert!(bl < 1e-20);
        // two frames by hand: joint 1 moves by (0.3, 0, 0), bone 0-1 grows from 1 to 1.3
        let pos = vec![
            vec![Vector3::zeros(), Vector3::new(0.0, 0.0, -1.0), Vector3::new(0.0, 0.0, -2.0)],
            vec![Vector3::zeros(), Vector3::new(0.0, 0.0, -1.3), Vector3::new(0.0, 0.0, -2.0)],
        ];
        assert!((smoothness(&pos, 1.0, None) - 0.09).abs() < 1e-12);
        // bone 0-1: 1.0 -> 1.3, bone 1-2: 1.0 -> 0.7
        assert!((bone_length_consistency(&pos, &skel, 1.0, None) - 0.18).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pos = random_positions(&mut rng, 4, 3);
        let mut g = zero_positions(4, 3);
        smoothness(&pos, 1.0, Some(&mut g));
        bone_length_consistency(&pos, &skel, 2.0, Some(&mut g));
        fd_check(&pos, |p| smoothness(p, 1.0, None) + 2.0 * bone_length_consistency(p, &skel, 1.0, None), &g);
    }

    #[test]
    fn contact_examples() {
        let joints = [1usize];
        let pos: Positions = (0..3).map(|_| vec![Vector3::new(0.0, 0.0, 1.0), Vector3::zeros()]).collect();
        let zero = vec![vec![0.0]; 3];
        let one = vec![vec![1.0]; 3];
        let off = Contacts { joints: &joints, probs: &zero };
        let on = Contacts { joints: &joints, probs: &one };
        assert_eq!(off.sliding(&pos, 1.0, None).unwrap(), 0.0);
        assert_eq!(on.sliding(&pos, 1.0, None).unwrap(), 0.0);
        assert_eq!(on.height(&pos, 0.02, 1.0, None).unwrap(), 0.0);
        let vel = vec![PoseVelocity::zeros(2); 3];
        assert_eq!(on.angular_velocity(&vel, 1.0, None).unwrap(), 0.0);
        let mut sliding = pos.clone();
        sliding[1][1].x = 0.05;
        sliding[2][1].x = 0.05;
        let two = vec![vec![0.0], vec![1.0], vec![0.0]];
        let once = Contacts { joints: &joints, probs: &two };
        assert!((once.sliding(&sliding, 1.0, None).unwrap() - 0.0025).abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pos = random_positions(&mut rng, 3, 2);
        let half = vec![vec![0.5]; 3];
        let c = Contacts { joints: &joints, probs: &half };
        let mut g = zero_positions(3, 2);
        c.sliding(&pos, 1.0, Some(&mut g)).unwrap();
        c.height(&pos, 0.02, 3.0, Some(&mut g)).unwrap();
        fd_check(&pos, |p| c.sliding(p, 1.0, None).unwrap() + 3.0 * c.height(p, 0.02, 1.0, None).unwrap(), &g);
        let bad = vec![vec![1.5]; 3];
        assert!(Contacts { joints: &joints, probs: &bad }.sliding(&pos, 1.0, None).is_err());
    }

    #[test]
    fn heuristic_marks_slow_low_joints() {
        let pos: Positions = (0..4)
            .map(|t| vec![Vector3::new(0.0, 0.0, 1.0), Vector3::new(0.001 * t as f64, 0.0, 0.0), Vector3::new(t as f64, 0.0, 0.0)])
            .collect();
        let c = contact_heuristic(&pos, 30.0, &[0, 1, 2], 0.05, 0.2);
        for row in c {
            assert_eq!(row, vec![0.0, 1.0, 0.0]);
        }
    }
}
