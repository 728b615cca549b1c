use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::product::Pose;
use crate::so3::Rotation3;

/// Kinematic tree with rest-pose bone offsets and per-bone scales.
///
/// Joint 0 is the root (parent `-1`); every other joint must reach the root
/// through its parents.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SkeletonRaw", into = "SkeletonRaw")]
pub struct Skeleton {
    parents: Vec<i64>,
    offsets: Vec<Vector3<f64>>,
    beta: Vec<f64>,
    /// Parents-before-children traversal order.
    order: Vec<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SkeletonRaw {
    parents: Vec<i64>,
    offsets: Vec<[f64; 3]>,
    beta: Vec<f64>,
}

impl TryFrom<SkeletonRaw> for Skeleton {
    type Error = Error;
    fn try_from(raw: SkeletonRaw) -> Result<Self> {
        Skeleton::new(raw.parents, raw.offsets.into_iter().map(Vector3::from).collect(), raw.beta)
    }
}

impl From<Skeleton> for SkeletonRaw {
    fn from(s: Skeleton) -> Self {
        SkeletonRaw { parents: s.parents, offsets: s.offsets.iter().map(|o| [o.x, o.y, o.z]).collect(), beta: s.beta }
    }
}

/// Joint positions (meters), one per joint.
#[derive(Clone, Debug, PartialEq)]
pub struct JointPositions(pub Vec<Vector3<f64>>);

impl Skeleton {
    pub fn new(parents: Vec<i64>, offsets: Vec<Vector3<f64>>, beta: Vec<f64>) -> Result<Self> {
        let k = parents.len();
        if k == 0 {
            return Err(Error::InvalidSkeleton("no joints".into()));
        }
        check_len(k, offsets.len())?;
        check_len(k, beta.len())?;
        if parents[0] != -1 {
            return Err(Error::InvalidSkeleton("joint 0 must be the root".into()));
        }
        for (j, &p) in parents.iter().enumerate().skip(1) {
            if p < 0 || p as usize >= k || p as usize == j {
                return Err(Error::InvalidSkeleton(format!("joint {j} has invalid parent {p}")));
            }
            if offsets[j].norm() == 0.0 {
                return Err(Error::InvalidSkeleton(format!("joint {j} has a zero offset")));
            }
        }
        if beta.iter().any(|b| !(*b > 0.0 && b.is_finite())) {
            return Err(Error::InvalidSkeleton("beta must be positive".into()));
        }

        // depth-first from the root; anything unvisited sits on a cycle
        let mut children = vec![Vec::new(); k];
        for (j, &p) in parents.iter().enumerate().skip(1) {
            children[p as usize].push(j);
        }
        let mut order = Vec::with_capacity(k);
        let mut stack = vec![0usize];
        while let Some(j) = stack.pop() {
            order.push(j);
            stack.extend(children[j].iter().rev());
        }
        if order.len() != k {
            return Err(Error::InvalidSkeleton("parent array contains a cycle".into()));
        }
        Ok(Skeleton { parents, offsets, beta, order })
    }

    /// Serial chain of `k` joints with unit offsets along `-z`.
    pub fn chain(k: usize) -> Self {
        let parents = (0..k as i64).map(|j| j - 1).collect();
        let offsets = (0..k).map(|j| if j == 0 { Vector3::zeros() } else { -Vector3::z() }).collect();
        Skeleton::new(parents, offsets, vec![1.0; k]).expect("chain skeleton is valid")
    }

    pub fn joints(&self) -> usize {
        self.parents.len()
    }

    pub fn parent(&self, j: usize) -> Option<usize> {
        let p = self.parents[j];
        (p >= 0).then_some(p as usize)
    }

    pub fn parents(&self) -> &[i64] {
        &self.parents
    }

    pub fn offsets(&self) -> &[Vector3<f64>] {
        &self.offsets
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn with_beta(&self, beta: Vec<f64>) -> Result<Self> {
        Skeleton::new(self.parents.clone(), self.offsets.clone(), beta)
    }

    /// Scaled rest-pose bone vector `beta_k·offset_k`.
    pub fn bone(&self, j: usize) -> Vector3<f64> {
        self.offsets[j] * self.beta[j]
    }
}

/// Joint positions plus the accumulated global rotation of every joint.
#[derive(Clone, Debug)]
pub struct FkResult {
    pub positions: JointPositions,
    pub globals: Vec<Rotation3>,
}

pub fn forward_kinematics(skel: &Skeleton, t_r: &Vector3<f64>, pose: &Pose) -> Result<JointPositions> {
    forward_kinematics_full(skel, t_r, pose).map(|r| r.positions)
}

/// `p_root = t_r`, `p_k = p_parent + G_parent·(beta_k·offset_k)` with
/// `G_k = G_parent·R_k`.
pub fn forward_kinematics_full(skel: &Skeleton, t_r: &Vector3<f64>, pose: &Pose) -> Result<FkResult> {
    let k = skel.joints();
    check_len(k, pose.joints())?;
    let mut pos = vec![Vector3::zeros(); k];
    let mut globals = vec![Rotation3::identity(); k];
    for &j in &skel.order {
        match skel.parent(j) {
            None => {
                pos[j] = *t_r;
                globals[j] = pose[j];
            }
            Some(p) => {
                pos[j] = pos[p] + globals[p].transform(&skel.bone(j));
                globals[j] = globals[p] * pose[j];
            }
        }
    }
    Ok(FkResult { positions: JointPositions(pos), globals })
}

/// Gradients of a scalar with respect to FK inputs.
#[derive(Clone, Debug)]
pub struct FkGradient {
    pub t_r: Vector3<f64>,
    /// Body-frame axial gradient per joint (`R_j ← R_j·exp(hat(δ_j))`).
    pub pose: Vec<Vector3<f64>>,
    /// Gradient with respect to each joint's `beta`.
    pub beta: Vec<f64>,
}

/// Reverse mode of [`forward_kinematics_full`] given `∂E/∂p_k`.
pub fn fk_adjoint(skel: &Skeleton, fk: &FkResult, grad_pos: &[Vector3<f64>]) -> FkGradient {
    let k = skel.joints();
    let p = &fk.positions.0;
    // subtree sums of g and p × g, children before parents
    let mut sum_g = grad_pos.to_vec();
    let mut sum_pg: Vec<Vector3<f64>> = (0..k).map(|j| p[j].cross(&grad_pos[j])).collect();
    for &j in skel.order.iter().rev() {
        if let Some(par) = skel.parent(j) {
            let (g, pg) = (sum_g[j], sum_pg[j]);
            sum_g[par] += g;
            sum_pg[par] += pg;
        }
    }
    let mut pose = vec![Vector3::zeros(); k];
    let mut beta = vec![0.0; k];
    for j in 0..k {
        // Σ_{m ∈ desc(j)} (p_m - p_j) × g_m
        let s = (sum_pg[j] - p[j].cross(&grad_pos[j])) - p[j].cross(&(sum_g[j] - grad_pos[j]));
        pose[j] = fk.globals[j].transpose().transform(&s);
        if let Some(par) = skel.parent(j) {
            beta[j] = fk.globals[par].transform(&skel.offsets[j]).dot(&sum_g[j]);
        }
    }
    FkGradient { t_r: sum_g[0], pose, beta }
}

/// Lengths of parent-child segments for every non-root joint, in joint order.
pub fn bone_lengths(skel: &Skeleton, positions: &JointPositions) -> Vec<f64> {
    (0..skel.joints())
        .filter_map(|j| skel.parent(j).map(|p| (positions.0[j] - positions.0[p]).norm()))
        .collect()
}
