//! C ABI for motionfield.
//!
//! Every function returns an [`MfStatus`]; on failure the message is kept
//! per thread and read with [`mf_last_error_message`]. Handles are opaque
//! and released with their `_free` function. Rotation matrices are 9
//! doubles in row-major order, quaternions 4 doubles `(w, x, y, z)`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use motionfield::cli::load_fields;
use motionfield::dynamics::{integrate, project_pose, IntegratorConfig, ProjectorConfig};
use motionfield::fields::{pose_value_grad, FieldSet};
use motionfield::kinematics::{rebuild_states_with_translation, MotionFile, Skeleton};
use motionfield::optim::{fit_sequence, mpjpe_mm, FitConfig, Observation};
use motionfield::product::Pose;
use motionfield::so3::{exp_so3, geodesic_distance, log_so3, quat_decode, quat_encode, Rotation3, UnitQuaternion};
use motionfield::Error;
use nalgebra::{Matrix3, Vector3};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Io = 4,
    Format = 5,
    DimensionMismatch = 6,
    MissingField = 7,
    Divergence = 8,
    Panic = 9,
}

/// Loaded fields.
pub struct MfFields(FieldSet);

/// A motion sequence with an optional skeleton.
pub struct MfMotion(MotionFile);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

enum Failure {
    Null(&'static str),
    Utf8(&'static str),
    Arg(String),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl Failure {
    fn status(&self) -> MfStatus {
        match self {
            Failure::Null(_) => MfStatus::NullPointer,
            Failure::Utf8(_) => MfStatus::InvalidUtf8,
            Failure::Arg(_) => MfStatus::InvalidArgument,
            Failure::Core(e) => match e {
                Error::Io(_) => MfStatus::Io,
                Error::Json(_) | Error::Format(_) => MfStatus::Format,
                Error::DimensionMismatch { .. } => MfStatus::DimensionMismatch,
                Error::MissingField(_) => MfStatus::MissingField,
                Error::Divergence { .. } => MfStatus::Divergence,
                _ => MfStatus::InvalidArgument,
            },
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::Null(what) => format!("{what} is null"),
            Failure::Utf8(what) => format!("{what} is not valid UTF-8"),
            Failure::Arg(m) => m.clone(),
            Failure::Core(e) => format!("{}: {e}", e.code()),
        }
    }
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> MfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MfStatus::Ok,
        Ok(Err(e)) => {
            set_last_error(e.message());
            e.status()
        }
        Err(_) => {
            set_last_error("panic inside motionfield".into());
            MfStatus::Panic
        }
    }
}

unsafe fn slice<'a>(p: *const f64, n: usize, what: &'static str) -> Result<&'a [f64], Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn slice_mut<'a>(p: *mut f64, n: usize, what: &'static str) -> Result<&'a mut [f64], Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, n))
}

unsafe fn string(p: *const c_char, what: &'static str) -> Result<String, Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    CStr::from_ptr(p).to_str().map(str::to_owned).map_err(|_| Failure::Utf8(what))
}

unsafe fn optional_json<T: serde::de::DeserializeOwned + Default>(p: *const c_char, what: &'static str) -> Result<T, Failure> {
    if p.is_null() {
        return Ok(T::default());
    }
    let s = string(p, what)?;
    serde_json::from_str(&s).map_err(|e| Failure::Core(Error::Json(e)))
}

unsafe fn handle<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn out_ptr<T>(p: *mut T, what: &'static str) -> Result<&'static mut T, Failure> {
    p.as_mut().ok_or(Failure::Null(what))
}

fn rotation(r: &[f64]) -> Result<Rotation3, Failure> {
    Ok(Rotation3::new(Matrix3::from_row_slice(r))?)
}

fn write_rotation(r: &Rotation3, out: &mut [f64]) {
    for i in 0..3 {
        for j in 0..3 {
            out[3 * i + j] = r.matrix()[(i, j)];
        }
    }
}

fn pose_from_quats(q: &[f64]) -> Result<Pose, Failure> {
    let rots = q
        .chunks_exact(4)
        .map(|c| UnitQuaternion::new(c[0], c[1], c[2], c[3]).map(|u| quat_decode(&u)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Pose(rots))
}

fn write_quats(pose: &Pose, out: &mut [f64]) {
    for (c, r) in out.chunks_exact_mut(4).zip(pose.iter()) {
        c.copy_from_slice(&quat_encode(r).as_array());
    }
}

/// Library version, a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL. Valid until
/// the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn mf_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Rotation `exp(hat(w))` of the axial vector `w[3]` into `r_out[9]`.
///
/// # Safety
/// `w` must point to 3 readable doubles and `r_out` to 9 writable doubles.
#[no_mangle]
pub unsafe extern "C" fn mf_so3_exp(w: *const f64, r_out: *mut f64) -> MfStatus {
    guard(|| {
        let w = slice(w, 3, "w")?;
        let out = slice_mut(r_out, 9, "r_out")?;
        write_rotation(&exp_so3(&Vector3::from_column_slice(w)), out);
        Ok(())
    })
}

/// Axial vector of a rotation, angle in `[0, π]`.
///
/// # Safety
/// `r` must point to 9 readable doubles and `w_out` to 3 writable doubles.
#[no_mangle]
pub unsafe extern "C" fn mf_so3_log(r: *const f64, w_out: *mut f64) -> MfStatus {
    guard(|| {
        let r = rotation(slice(r, 9, "r")?)?;
        let out = slice_mut(w_out, 3, "w_out")?;
        out.copy_from_slice(log_so3(&r).as_slice());
        Ok(())
    })
}

/// Geodesic distance (rotation angle of `r1ᵀ r2`).
///
/// # Safety
/// `r1` and `r2` must point to 9 readable doubles each; `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn mf_so3_distance(r1: *const f64, r2: *const f64, out: *mut f64) -> MfStatus {
    guard(|| {
        let a = rotation(slice(r1, 9, "r1")?)?;
        let b = rotation(slice(r2, 9, "r2")?)?;
        *out_ptr(out, "out")? = geodesic_distance(&a, &b);
        Ok(())
    })
}

/// Loads `field_pose.json`, `field_velocity.json` and
/// `field_acceleration.json` from `dir`; absent files leave that field
/// unset.
///
/// # Safety
/// `dir` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mf_fields_load(dir: *const c_char, out: *mut *mut MfFields) -> MfStatus {
    guard(|| {
        let dir = PathBuf::from(string(dir, "dir")?);
        let out = out_ptr(out, "out")?;
        if !dir.is_dir() {
            return Err(Failure::Arg(format!("{} is not a directory", dir.display())));
        }
        let fields = load_fields(Some(&dir))?;
        *out = Box::into_raw(Box::new(MfFields(fields)));
        Ok(())
    })
}

/// Joint count of the loaded fields, 0 when none are loaded.
///
/// # Safety
/// `fields` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mf_fields_joints(fields: *const MfFields, out: *mut usize) -> MfStatus {
    guard(|| {
        *out_ptr(out, "out")? = handle(fields, "fields")?.0.joints().unwrap_or(0);
        Ok(())
    })
}

/// # Safety
/// `fields` must be NULL or a handle from [`mf_fields_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mf_fields_free(fields: *mut MfFields) {
    if !fields.is_null() {
        drop(Box::from_raw(fields));
    }
}

/// Pose field value at `quats[4 * joints]`.
///
/// # Safety
/// `fields` must be a live handle, `quats` must hold `4 * joints` doubles
/// and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mf_pose_field_value(
    fields: *const MfFields,
    quats: *const f64,
    joints: usize,
    out: *mut f64,
) -> MfStatus {
    guard(|| {
        let f = handle(fields, "fields")?.0.pose.clone().ok_or(Error::MissingField("pose"))?;
        let pose = pose_from_quats(slice(quats, 4 * joints, "quats")?)?;
        *out_ptr(out, "out")? = pose_value_grad(f.as_ref(), &pose)?.0;
        Ok(())
    })
}

/// Projects a pose onto the pose field's zero level set. `max_iterations`
/// of 0 keeps the default. `value_out` may be NULL.
///
/// # Safety
/// `fields` must be a live handle; `quats_in` and `quats_out` must hold
/// `4 * joints` doubles; `value_out` must be NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn mf_project_pose(
    fields: *const MfFields,
    quats_in: *const f64,
    joints: usize,
    max_iterations: u32,
    quats_out: *mut f64,
    value_out: *mut f64,
) -> MfStatus {
    guard(|| {
        let f = handle(fields, "fields")?.0.pose.clone().ok_or(Error::MissingField("pose"))?;
        let pose = pose_from_quats(slice(quats_in, 4 * joints, "quats_in")?)?;
        let mut cfg = ProjectorConfig::default();
        if max_iterations > 0 {
            cfg.max_iterations = max_iterations as usize;
        }
        let (out, trace) = project_pose(&pose, f.as_ref(), &cfg)?;
        write_quats(&out, slice_mut(quats_out, 4 * joints, "quats_out")?);
        if let Some(v) = value_out.as_mut() {
            *v = trace.final_value().unwrap_or(0.0);
        }
        Ok(())
    })
}

/// Reads a motion file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mf_motion_read(path: *const c_char, out: *mut *mut MfMotion) -> MfStatus {
    guard(|| {
        let path = string(path, "path")?;
        let out = out_ptr(out, "out")?;
        *out = Box::into_raw(Box::new(MfMotion(MotionFile::read(path)?)));
        Ok(())
    })
}

/// Builds a motion from `frames * joints` quaternions and optional root
/// translations (`frames * 3` doubles, NULL for zeros); velocities and
/// accelerations are estimated from the poses.
///
/// # Safety
/// `quats` must hold `4 * frames * joints` doubles, `translations` NULL or
/// `3 * frames` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mf_motion_from_quats(
    fps: f64,
    frames: usize,
    joints: usize,
    quats: *const f64,
    translations: *const f64,
    out: *mut *mut MfMotion,
) -> MfStatus {
    guard(|| {
        if frames == 0 || joints == 0 {
            return Err(Failure::Arg("frames and joints must be positive".into()));
        }
        let q = slice(quats, 4 * frames * joints, "quats")?;
        let poses = q.chunks_exact(4 * joints).map(pose_from_quats).collect::<Result<Vec<_>, _>>()?;
        let t_r: Vec<Vector3<f64>> = if translations.is_null() {
            vec![Vector3::zeros(); frames]
        } else {
            slice(translations, 3 * frames, "translations")?.chunks_exact(3).map(Vector3::from_column_slice).collect()
        };
        let sequence = rebuild_states_with_translation(&poses, &t_r, fps)?;
        let out = out_ptr(out, "out")?;
        *out = Box::into_raw(Box::new(MfMotion(MotionFile { sequence, skeleton: None })));
        Ok(())
    })
}

/// # Safety
/// `motion` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn mf_motion_write(motion: *const MfMotion, path: *const c_char) -> MfStatus {
    guard(|| {
        let m = handle(motion, "motion")?;
        m.0.write(string(path, "path")?)?;
        Ok(())
    })
}

/// # Safety
/// `motion` must be a live handle; `frames` and `joints` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mf_motion_shape(motion: *const MfMotion, frames: *mut usize, joints: *mut usize) -> MfStatus {
    guard(|| {
        let m = handle(motion, "motion")?;
        *out_ptr(frames, "frames")? = m.0.sequence.len();
        *out_ptr(joints, "joints")? = m.0.sequence.joints();
        Ok(())
    })
}

/// Copies the quaternions of one frame into `out[len]`, `len = 4 * joints`.
///
/// # Safety
/// `motion` must be a live handle and `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn mf_motion_frame_quats(
    motion: *const MfMotion,
    frame: usize,
    out: *mut f64,
    len: usize,
) -> MfStatus {
    guard(|| {
        let m = handle(motion, "motion")?;
        let seq = &m.0.sequence;
        if frame >= seq.len() {
            return Err(Failure::Arg(format!("frame {frame} outside {} frames", seq.len())));
        }
        if len != 4 * seq.joints() {
            return Err(Failure::Core(Error::DimensionMismatch { expected: 4 * seq.joints(), got: len }));
        }
        write_quats(&seq.states[frame].pose, slice_mut(out, len, "out")?);
        Ok(())
    })
}

/// # Safety
/// `motion` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mf_motion_free(motion: *mut MfMotion) {
    if !motion.is_null() {
        drop(Box::from_raw(motion));
    }
}

fn skeleton_of(m: &MotionFile) -> Skeleton {
    m.skeleton.clone().unwrap_or_else(|| Skeleton::chain(m.sequence.joints()))
}

/// Fits a motion to its own joint positions with the field priors.
/// `config_json` is a fit configuration object or NULL for defaults.
///
/// # Safety
/// `fields` and `motion` must be live handles, `config_json` NULL or a
/// NUL-terminated string, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mf_denoise(
    fields: *const MfFields,
    motion: *const MfMotion,
    config_json: *const c_char,
    out: *mut *mut MfMotion,
) -> MfStatus {
    guard(|| {
        let f = handle(fields, "fields")?;
        let m = handle(motion, "motion")?;
        let cfg: FitConfig = optional_json(config_json, "config_json")?;
        let out = out_ptr(out, "out")?;
        let skel = skeleton_of(&m.0);
        let obs = Observation::joints3d_from(&m.0.sequence, &skel)?;
        let r = fit_sequence(&obs, &skel, &m.0.sequence, &f.0, &cfg)?;
        *out = Box::into_raw(Box::new(MfMotion(MotionFile { sequence: r.sequence, skeleton: Some(r.skeleton) })));
        Ok(())
    })
}

/// Rolls out from the first state of `motion`, driven by the stored
/// accelerations of all frames but the last. `config_json` is an
/// integrator configuration object or NULL for defaults.
///
/// # Safety
/// `fields` and `motion` must be live handles, `config_json` NULL or a
/// NUL-terminated string, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mf_rollout(
    fields: *const MfFields,
    motion: *const MfMotion,
    config_json: *const c_char,
    out: *mut *mut MfMotion,
) -> MfStatus {
    guard(|| {
        let f = handle(fields, "fields")?;
        let m = handle(motion, "motion")?;
        let cfg: IntegratorConfig = optional_json(config_json, "config_json")?;
        let out = out_ptr(out, "out")?;
        let seq = &m.0.sequence;
        if seq.len() < 2 {
            return Err(Failure::Core(Error::TooFewFrames { needed: 2, got: seq.len() }));
        }
        let accs: Vec<_> = seq.states[..seq.len() - 1].iter().map(|s| s.acc.clone()).collect();
        let cfg = IntegratorConfig { fps: seq.fps, ..cfg };
        let r = integrate(&seq.states[0].pose, &seq.states[0].vel, &accs, &f.0, &cfg)?;
        let t_r = vec![seq.states[0].t_r; r.sequence.len()];
        let sequence = rebuild_states_with_translation(&r.sequence.poses(), &t_r, seq.fps)?;
        *out = Box::into_raw(Box::new(MfMotion(MotionFile { sequence, skeleton: m.0.skeleton.clone() })));
        Ok(())
    })
}

/// Mean joint position error in millimeters.
///
/// # Safety
/// `pred` and `reference` must be live handles and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mf_mpjpe_mm(pred: *const MfMotion, reference: *const MfMotion, out: *mut f64) -> MfStatus {
    guard(|| {
        let p = handle(pred, "pred")?;
        let r = handle(reference, "reference")?;
        *out_ptr(out, "out")? = mpjpe_mm(&p.0.sequence, &skeleton_of(&p.0), &r.0.sequence, &skeleton_of(&r.0))?;
        Ok(())
    })
}
