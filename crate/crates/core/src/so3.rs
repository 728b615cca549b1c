//! Single-rotation geometry on SO(3).
//!
//! Rotations are stored as 3×3 matrices. Tangent vectors at a rotation `R`
//! are written `R·hat(w)` and carried around as the body-frame axial vector
//! `w`; the rotation angle of `exp(hat(w))` is `‖w‖`, which is also the
//! geodesic distance it travels.

use std::f64::consts::PI;
use std::ops::Mul;

use nalgebra::{Matrix3, Matrix4, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axial (rotation) vector: radians, rad/s or rad/s² depending on context.
pub type AxialVector = Vector3<f64>;

/// Below this angle exp/log switch to their second-order series.
pub const SMALL_ANGLE: f64 = 1e-6;
/// Above `PI - NEAR_PI` the log map extracts the axis from the symmetric part.
pub const NEAR_PI: f64 = 1e-3;
/// Tolerance on `RᵀR = I` and `det R = 1` for checked construction.
pub const ROTATION_TOL: f64 = 1e-9;
/// `vee` rejects inputs whose symmetric part exceeds this Frobenius norm.
pub const SKEW_TOL: f64 = 1e-6;

/// A skew-symmetric matrix, stored by its three free entries.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SkewMatrix(Vector3<f64>);

impl SkewMatrix {
    pub fn matrix(&self) -> Matrix3<f64> {
        let w = &self.0;
        Matrix3::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0)
    }

    pub fn vee(&self) -> AxialVector {
        self.0
    }

    /// Checked conversion from a general 3×3 matrix.
    pub fn from_matrix(m: &Matrix3<f64>) -> Result<Self> {
        let sym = sym_part(m).norm();
        if sym > SKEW_TOL {
            return Err(Error::NotSkew(sym));
        }
        Ok(SkewMatrix(vee_unchecked(m)))
    }
}

/// Cross-product matrix: `hat(w)·h = w × h`.
pub fn hat(w: &AxialVector) -> SkewMatrix {
    SkewMatrix(*w)
}

pub fn hat_matrix(w: &AxialVector) -> Matrix3<f64> {
    hat(w).matrix()
}

/// Inverse of [`hat`]; rejects matrices that are not skew-symmetric.
pub fn vee(m: &Matrix3<f64>) -> Result<AxialVector> {
    SkewMatrix::from_matrix(m).map(|s| s.vee())
}

/// Axial vector of the skew part of `m`, without validation.
pub fn vee_unchecked(m: &Matrix3<f64>) -> AxialVector {
    Vector3::new(
        0.5 * (m[(2, 1)] - m[(1, 2)]),
        0.5 * (m[(0, 2)] - m[(2, 0)]),
        0.5 * (m[(1, 0)] - m[(0, 1)]),
    )
}

pub fn skew_part(a: &Matrix3<f64>) -> Matrix3<f64> {
    (a - a.transpose()) * 0.5
}

pub fn sym_part(a: &Matrix3<f64>) -> Matrix3<f64> {
    (a + a.transpose()) * 0.5
}

/// A 3×3 orthonormal matrix with unit determinant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rotation3(Matrix3<f64>);

impl Default for Rotation3 {
    fn default() -> Self {
        Self::identity()
    }
}

impl Rotation3 {
    pub fn identity() -> Self {
        Rotation3(Matrix3::identity())
    }

    /// Checked construction: `mᵀm = I` and `det m = 1` within [`ROTATION_TOL`].
    pub fn new(m: Matrix3<f64>) -> Result<Self> {
        let ortho = (m.transpose() * m - Matrix3::identity()).abs().max();
        let det = m.determinant();
        if !m.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidRotation("non-finite entries".into()));
        }
        if ortho > ROTATION_TOL || (det - 1.0).abs() > ROTATION_TOL {
            return Err(Error::InvalidRotation(format!(
                "orthogonality residual {ortho:.3e}, det {det}"
            )));
        }
        Ok(Rotation3(m))
    }

    /// Wraps a matrix already known to be a rotation.
    pub fn from_matrix_unchecked(m: Matrix3<f64>) -> Self {
        Rotation3(m)
    }

    pub fn from_axis_angle(axis: &Vector3<f64>, angle: f64) -> Self {
        let n = axis.norm();
        if n == 0.0 {
            return Self::identity();
        }
        exp_so3(&(axis * (angle / n)))
    }

    pub fn rot_x(angle: f64) -> Self {
        Self::from_axis_angle(&Vector3::x(), angle)
    }

    pub fn rot_y(angle: f64) -> Self {
        Self::from_axis_angle(&Vector3::y(), angle)
    }

    pub fn rot_z(angle: f64) -> Self {
        Self::from_axis_angle(&Vector3::z(), angle)
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        Rotation3(self.0.transpose())
    }

    pub fn inverse(&self) -> Self {
        self.transpose()
    }

    pub fn angle(&self) -> f64 {
        rotation_angle(&self.0)
    }

    /// Left-invariant step `R·exp(hat(w))`.
    pub fn retract(&self, w: &AxialVector) -> Self {
        *self * exp_so3(w)
    }

    pub fn transform(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.0 * v
    }
}

impl Mul for Rotation3 {
    type Output = Rotation3;
    fn mul(self, rhs: Rotation3) -> Rotation3 {
        Rotation3(self.0 * rhs.0)
    }
}

impl Mul<&Rotation3> for &Rotation3 {
    type Output = Rotation3;
    fn mul(self, rhs: &Rotation3) -> Rotation3 {
        Rotation3(self.0 * rhs.0)
    }
}

impl Mul<Vector3<f64>> for Rotation3 {
    type Output = Vector3<f64>;
    fn mul(self, rhs: Vector3<f64>) -> Vector3<f64> {
        self.0 * rhs
    }
}

/// Rotation angle in `[0, π]`, computed as `atan2(sin θ, cos θ)` with the
/// cosine taken from the clamped trace.
fn rotation_angle(m: &Matrix3<f64>) -> f64 {
    let cos = ((m.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let sin = vee_unchecked(m).norm();
    sin.atan2(cos)
}

/// Rodrigues' formula.
pub fn exp_so3(w: &AxialVector) -> Rotation3 {
    let theta = w.norm();
    let k = hat_matrix(w);
    let k2 = k * k;
    let m = if theta < SMALL_ANGLE {
        Matrix3::identity() + k + k2 * 0.5
    } else {
        Matrix3::identity() + k * (theta.sin() / theta) + k2 * ((1.0 - theta.cos()) / (theta * theta))
    };
    Rotation3(m)
}

/// Inverse of [`exp_so3`] with `‖result‖ ∈ [0, π]`.
pub fn log_so3(r: &Rotation3) -> AxialVector {
    let m = &r.0;
    let cos = ((m.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let s = vee_unchecked(m);
    let sin = s.norm();
    let theta = sin.atan2(cos);

    if theta < SMALL_ANGLE {
        return s;
    }
    if theta < PI - NEAR_PI {
        return s * (theta / sin);
    }

    // (R + Rᵀ)/2 - cos θ·I = (1 - cos θ)·aaᵀ; take the dominant column.
    let b = sym_part(m) - Matrix3::identity() * cos;
    let i = (0..3)
        .max_by(|&a, &c| b[(a, a)].total_cmp(&b[(c, c)]))
        .unwrap_or(0);
    let mut axis: Vector3<f64> = b.column(i).into_owned();
    axis /= axis.norm();
    let dot = axis.dot(&s);
    if dot < 0.0 || (dot == 0.0 && first_nonzero_negative(&axis)) {
        axis = -axis;
    }
    axis * theta
}

fn first_nonzero_negative(v: &Vector3<f64>) -> bool {
    v.iter().find(|c| **c != 0.0).is_some_and(|c| *c < 0.0)
}

/// Angle of the relative rotation `r1ᵀ r2`.
pub fn geodesic_distance(r1: &Rotation3, r2: &Rotation3) -> f64 {
    rotation_angle(&(r1.0.transpose() * r2.0))
}

/// Projects an ambient (Euclidean) gradient onto the tangent space at `r`:
/// `r·skew_part(rᵀ g)`.
pub fn egrad2rgrad(r: &Rotation3, g: &Matrix3<f64>) -> Matrix3<f64> {
    r.0 * skew_part(&(r.0.transpose() * g))
}

/// Body-frame axial vector of a tangent matrix `ξ` at `r`, i.e. `vee(rᵀξ)`.
pub fn tangent_to_axial(r: &Rotation3, xi: &Matrix3<f64>) -> AxialVector {
    vee_unchecked(&(r.0.transpose() * xi))
}

/// Tangent matrix `r·hat(w)` for a body-frame axial vector.
pub fn axial_to_tangent(r: &Rotation3, w: &AxialVector) -> Matrix3<f64> {
    r.0 * hat_matrix(w)
}

/// Inverse of the left Jacobian: `log(exp(δ)·exp(φ)) ≈ φ + J_l⁻¹(φ)·δ`.
pub fn left_jacobian_inv(phi: &AxialVector) -> Matrix3<f64> {
    let k = hat_matrix(phi);
    Matrix3::identity() - k * 0.5 + k * k * jac_inv_coeff(phi.norm())
}

/// Inverse of the right Jacobian: `log(exp(φ)·exp(δ)) ≈ φ + J_r⁻¹(φ)·δ`.
pub fn right_jacobian_inv(phi: &AxialVector) -> Matrix3<f64> {
    let k = hat_matrix(phi);
    Matrix3::identity() + k * 0.5 + k * k * jac_inv_coeff(phi.norm())
}

fn jac_inv_coeff(theta: f64) -> f64 {
    if theta < 1e-4 {
        1.0 / 12.0 + theta * theta / 720.0
    } else {
        1.0 / (theta * theta) - (1.0 + theta.cos()) / (2.0 * theta * theta.sin())
    }
}

/// Unit quaternion `(w, x, y, z)` canonicalized to `w ≥ 0`; when `w = 0` the
/// first nonzero vector component is positive.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "[f64; 4]", try_from = "[f64; 4]")]
pub struct UnitQuaternion {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

/// Readers accept quaternions within this distance of unit norm.
pub const QUAT_READ_TOL: f64 = 1e-6;

impl UnitQuaternion {
    pub fn identity() -> Self {
        UnitQuaternion { w: 1.0, x: 0.0, y: 0.0, z: 0.0 }
    }

    /// Normalizes and canonicalizes; rejects inputs further than
    /// [`QUAT_READ_TOL`] from unit norm.
    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Result<Self> {
        let v = Vector4::new(w, x, y, z);
        let n = v.norm();
        if !n.is_finite() || (n - 1.0).abs() > QUAT_READ_TOL {
            return Err(Error::NonUnitQuaternion(n));
        }
        Ok(Self::from_vector_canonical(v / n))
    }

    /// Normalizes any nonzero 4-vector; used to draw uniform random rotations.
    pub fn from_unnormalized(v: Vector4<f64>) -> Option<Self> {
        let n = v.norm();
        (n > 1e-12 && n.is_finite()).then(|| Self::from_vector_canonical(v / n))
    }

    fn from_vector_canonical(v: Vector4<f64>) -> Self {
        let s = canonical_sign(&v);
        UnitQuaternion { w: s * v[0], x: s * v[1], y: s * v[2], z: s * v[3] }
    }

    pub fn as_vector(&self) -> Vector4<f64> {
        Vector4::new(self.w, self.x, self.y, self.z)
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }
}

impl From<UnitQuaternion> for [f64; 4] {
    fn from(q: UnitQuaternion) -> Self {
        q.as_array()
    }
}

impl TryFrom<[f64; 4]> for UnitQuaternion {
    type Error = Error;
    fn try_from(a: [f64; 4]) -> Result<Self> {
        UnitQuaternion::new(a[0], a[1], a[2], a[3])
    }
}

fn canonical_sign(v: &Vector4<f64>) -> f64 {
    if v[0] > 0.0 {
        1.0
    } else if v[0] < 0.0 {
        -1.0
    } else {
        match v.iter().skip(1).find(|c| **c != 0.0) {
            Some(c) if *c < 0.0 => -1.0,
            _ => 1.0,
        }
    }
}

pub fn quat_encode(r: &Rotation3) -> UnitQuaternion {
    quat_encode_with_jacobian(r).0
}

pub fn quat_decode(q: &UnitQuaternion) -> Rotation3 {
    Rotation3(quat_to_matrix(&q.as_vector()))
}

/// Rotation matrix of a unit quaternion `(w, x, y, z)`.
pub fn quat_to_matrix(q: &Vector4<f64>) -> Matrix3<f64> {
    let (w, x, y, z) = (q[0], q[1], q[2], q[3]);
    Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

/// Per-branch recipe for Shepperd's matrix-to-quaternion conversion.
/// `diag` signs the diagonal under the square root, `lead` is the component
/// equal to `s/2`, and each remaining component is
/// `(R[a] + sign·R[b]) / (2s)`.
struct Branch {
    diag: [f64; 3],
    lead: usize,
    rest: [(usize, (usize, usize), (usize, usize), f64); 3],
}

const BRANCHES: [Branch; 4] = [
    Branch {
        diag: [1.0, 1.0, 1.0],
        lead: 0,
        rest: [(1, (2, 1), (1, 2), -1.0), (2, (0, 2), (2, 0), -1.0), (3, (1, 0), (0, 1), -1.0)],
    },
    Branch {
        diag: [1.0, -1.0, -1.0],
        lead: 1,
        rest: [(0, (2, 1), (1, 2), -1.0), (2, (0, 1), (1, 0), 1.0), (3, (0, 2), (2, 0), 1.0)],
    },
    Branch {
        diag: [-1.0, 1.0, -1.0],
        lead: 2,
        rest: [(0, (0, 2), (2, 0), -1.0), (1, (0, 1), (1, 0), 1.0), (3, (1, 2), (2, 1), 1.0)],
    },
    Branch {
        diag: [-1.0, -1.0, 1.0],
        lead: 3,
        rest: [(0, (1, 0), (0, 1), -1.0), (1, (0, 2), (2, 0), 1.0), (2, (1, 2), (2, 1), 1.0)],
    },
];

/// Canonical quaternion of `r` together with `∂q/∂R` (one 3×3 slice per
/// quaternion component), differentiated through the conversion branch used.
pub fn quat_encode_with_jacobian(r: &Rotation3) -> (UnitQuaternion, [Matrix3<f64>; 4]) {
    let m = &r.0;
    let d = [m[(0, 0)], m[(1, 1)], m[(2, 2)]];
    let tr = d[0] + d[1] + d[2];
    let branch = if tr > 0.0 {
        &BRANCHES[0]
    } else if d[0] >= d[1] && d[0] >= d[2] {
        &BRANCHES[1]
    } else if d[1] >= d[2] {
        &BRANCHES[2]
    } else {
        &BRANCHES[3]
    };

    let radicand = 1.0 + branch.diag[0] * d[0] + branch.diag[1] * d[1] + branch.diag[2] * d[2];
    let s = radicand.max(0.0).sqrt();
    let mut q = Vector4::zeros();
    let mut jac = [Matrix3::zeros(); 4];

    // ∂s/∂R_ii = diag_i / (2s)
    let mut ds = Matrix3::zeros();
    for i in 0..3 {
        ds[(i, i)] = branch.diag[i] / (2.0 * s);
    }
    q[branch.lead] = 0.5 * s;
    jac[branch.lead] = ds * 0.5;
    for &(comp, a, b, sign) in &branch.rest {
        let num = m[a] + sign * m[b];
        q[comp] = num / (2.0 * s);
        let mut j = ds * (-num / (2.0 * s * s));
        j[a] += 1.0 / (2.0 * s);
        j[b] += sign / (2.0 * s);
        jac[comp] = j;
    }

    let n = q.norm();
    let sign = canonical_sign(&q);
    let q = q * (sign / n);
    for j in jac.iter_mut() {
        *j *= sign / n;
    }
    (UnitQuaternion { w: q[0], x: q[1], y: q[2], z: q[3] }, jac)
}

/// Hamilton product `a ⊗ b` in `(w, x, y, z)` order.
pub fn quat_mul(a: &Vector4<f64>, b: &Vector4<f64>) -> Vector4<f64> {
    left_mul_matrix(a) * b
}

/// Matrix `L(a)` with `a ⊗ b = L(a)·b`.
pub fn left_mul_matrix(a: &Vector4<f64>) -> Matrix4<f64> {
    let (w, x, y, z) = (a[0], a[1], a[2], a[3]);
    Matrix4::new(w, -x, -y, -z, x, w, -z, y, y, z, w, -x, z, -y, x, w)
}

/// Derivative of a scalar `f(q)` with respect to a body-frame perturbation
/// `R ← R·exp(hat(δ))`, given `∂f/∂q`. Uses `q(R·exp δ) ≈ q ⊗ (1, δ/2)`.
pub fn quat_grad_to_axial(q: &UnitQuaternion, dq: &Vector4<f64>) -> AxialVector {
    let l = left_mul_matrix(&q.as_vector());
    // columns 1..3 of L(q) are q ⊗ e_i
    Vector3::new(
        0.5 * l.column(1).dot(dq),
        0.5 * l.column(2).dot(dq),
        0.5 * l.column(3).dot(dq),
    )
}

/// Geodesic distance between the rotations of two unit quaternions together
/// with its gradient with respect to `q` (ambient, 4-vector).
pub fn quat_angle_grad(q: &Vector4<f64>, p: &Vector4<f64>) -> (f64, Vector4<f64>) {
    let p_conj = Vector4::new(p[0], -p[1], -p[2], -p[3]);
    let l = left_mul_matrix(&p_conj);
    let u = l * q;
    let sgn = if u[0] < 0.0 { -1.0 } else { 1.0 };
    let m = sgn * u[0];
    let n = (u[1] * u[1] + u[2] * u[2] + u[3] * u[3]).sqrt();
    let angle = 2.0 * n.atan2(m);
    let r2 = n * n + m * m;
    if n < 1e-9 || r2 == 0.0 {
        return (angle, Vector4::zeros());
    }
    let dm = -2.0 * n / r2;
    let dn = 2.0 * m / r2;
    let du = Vector4::new(dm * sgn, dn * u[1] / n, dn * u[2] / n, dn * u[3] / n);
    (angle, l.transpose() * du)
}

/// Geodesic distance between two unit quaternions (same value as
/// [`geodesic_distance`] on their rotations).
pub fn quat_angle(q: &Vector4<f64>, p: &Vector4<f64>) -> f64 {
    // vector and scalar parts of conj(p) ⊗ q
    let w = p[0] * q[0] + p[1] * q[1] + p[2] * q[2] + p[3] * q[3];
    let x = p[0] * q[1] - p[1] * q[0] - p[2] * q[3] + p[3] * q[2];
    let y = p[0] * q[2] + p[1] * q[3] - p[2] * q[0] - p[3] * q[1];
    let z = p[0] * q[3] - p[1] * q[2] + p[2] * q[1] - p[3] * q[0];
    2.0 * (x * x + y * y + z * z).sqrt().atan2(w.abs())
}
