use std::ffi::{CStr, CString};
use std::ptr;

use motionfield::fields::{FieldKind, Mlp, MlpField};
use motionfield_ffi::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const K: usize = 3;

fn last_error() -> String {
    let p = mf_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_owned()
}

fn cstr(s: &std::path::Path) -> CString {
    CString::new(s.to_str().unwrap()).unwrap()
}

fn quat_x(angle: f64) -> [f64; 4] {
    [(angle / 2.0).cos(), (angle / 2.0).sin(), 0.0, 0.0]
}

fn field_dir() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let net = Mlp::glorot(&[4 * K, 16, 1], &mut rng).unwrap();
    MlpField::new(FieldKind::Pose, K, net).unwrap().write(dir.path().join("field_pose.json")).unwrap();
    dir
}

fn motion(frames: usize) -> *mut MfMotion {
    let quats: Vec<f64> = (0..frames).flat_map(|t| (0..K).flat_map(move |j| quat_x(0.1 * (t + j) as f64))).collect();
    let mut m = ptr::null_mut();
    let st = unsafe { mf_motion_from_quats(30.0, frames, K, quats.as_ptr(), ptr::null(), &mut m) };
    assert_eq!(st, MfStatus::Ok);
    m
}

#[test]
fn version_is_a_c_string() {
    let v = unsafe { CStr::from_ptr(mf_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn so3_exp_log_and_distance() {
    let w = [0.3, -0.2, 0.5];
    let mut r = [0.0; 9];
    let mut back = [0.0; 3];
    unsafe {
        assert_eq!(mf_so3_exp(w.as_ptr(), r.as_mut_ptr()), MfStatus::Ok);
        assert_eq!(mf_so3_log(r.as_ptr(), back.as_mut_ptr()), MfStatus::Ok);
    }
    for i in 0..3 {
        assert!((w[i] - back[i]).abs() < 1e-12);
    }
    let id = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
    let mut d = 0.0;
    assert_eq!(unsafe { mf_so3_distance(id.as_ptr(), r.as_ptr(), &mut d) }, MfStatus::Ok);
    let norm = (w[0] * w[0] + w[1] * w[1] + w[2] * w[2]).sqrt();
    assert!((d - norm).abs() < 1e-12);
}

#[test]
fn bad_inputs_set_status_and_message() {
    let not_rot = [2.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
    let mut w = [0.0; 3];
    assert_eq!(unsafe { mf_so3_log(not_rot.as_ptr(), w.as_mut_ptr()) }, MfStatus::InvalidArgument);
    assert!(last_error().starts_with("invalid_rotation"));
    assert_eq!(unsafe { mf_so3_exp(ptr::null(), w.as_mut_ptr()) }, MfStatus::NullPointer);
    assert_eq!(last_error(), "w is null");
    let mut m = ptr::null_mut();
    let missing = CString::new("/nonexistent/motion.json").unwrap();
    assert_eq!(unsafe { mf_motion_read(missing.as_ptr(), &mut m) }, MfStatus::Io);
    assert!(m.is_null());
    let mut f = ptr::null_mut();
    assert_eq!(unsafe { mf_fields_load(missing.as_ptr(), &mut f) }, MfStatus::InvalidArgument);
    let bad_q = [2.0, 0.0, 0.0, 0.0];
    assert_eq!(
        unsafe { mf_motion_from_quats(30.0, 1, 1, bad_q.as_ptr(), ptr::null(), &mut m) },
        MfStatus::InvalidArgument
    );
    unsafe {
        mf_motion_free(ptr::null_mut());
        mf_fields_free(ptr::null_mut());
    }
}

#[test]
fn motion_round_trips_through_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = cstr(&dir.path().join("m.json"));
    let m = motion(6);
    let (mut frames, mut joints) = (0, 0);
    unsafe {
        assert_eq!(mf_motion_shape(m, &mut frames, &mut joints), MfStatus::Ok);
        assert_eq!((frames, joints), (6, K));
        assert_eq!(mf_motion_write(m, path.as_ptr()), MfStatus::Ok);
        let mut r = ptr::null_mut();
        assert_eq!(mf_motion_read(path.as_ptr(), &mut r), MfStatus::Ok);
        let mut q = [0.0; 4 * K];
        assert_eq!(mf_motion_frame_quats(r, 2, q.as_mut_ptr(), q.len()), MfStatus::Ok);
        for j in 0..K {
            let e = quat_x(0.1 * (2 + j) as f64);
            let dot: f64 = (0..4).map(|i| e[i] * q[4 * j + i]).sum();
            assert!((dot.abs() - 1.0).abs() < 1e-12);
        }
        let mut err = 1.0;
        assert_eq!(mf_mpjpe_mm(m, r, &mut err), MfStatus::Ok);
        assert!(err < 1e-9);
        assert_eq!(mf_motion_frame_quats(r, 6, q.as_mut_ptr(), q.len()), MfStatus::InvalidArgument);
        assert_eq!(mf_motion_frame_quats(r, 0, q.as_mut_ptr(), 3), MfStatus::DimensionMismatch);
        mf_motion_free(r);
        mf_motion_free(m);
    }
}

#[test]
fn fields_project_and_rollout() {
    let dir = field_dir();
    let d = cstr(dir.path());
    let mut f = ptr::null_mut();
    unsafe {
        assert_eq!(mf_fields_load(d.as_ptr(), &mut f), MfStatus::Ok);
        let mut k = 0;
        assert_eq!(mf_fields_joints(f, &mut k), MfStatus::Ok);
        assert_eq!(k, K);
        let q: Vec<f64> = (0..K).flat_map(|j| quat_x(0.4 * j as f64)).collect();
        let mut before = 0.0;
        assert_eq!(mf_pose_field_value(f, q.as_ptr(), K, &mut before), MfStatus::Ok);
        assert!(before.is_finite() && before >= 0.0);
        let mut out = vec![0.0; 4 * K];
        let mut after = f64::NAN;
        assert_eq!(mf_project_pose(f, q.as_ptr(), K, 200, out.as_mut_ptr(), &mut after), MfStatus::Ok);
        assert!(after <= before + 1e-12);
        let mut check = 0.0;
        assert_eq!(mf_pose_field_value(f, out.as_ptr(), K, &mut check), MfStatus::Ok);
        assert!((check - after).abs() < 1e-9);
        assert_eq!(mf_pose_field_value(f, q.as_ptr(), K - 1, &mut check), MfStatus::DimensionMismatch);

        let m = motion(5);
        let mut r = ptr::null_mut();
        assert_eq!(mf_rollout(f, m, ptr::null(), &mut r), MfStatus::Ok);
        let (mut frames, mut joints) = (0, 0);
        assert_eq!(mf_motion_shape(r, &mut frames, &mut joints), MfStatus::Ok);
        assert_eq!((frames, joints), (5, K));
        let bad = CString::new(r#"{"not_a_key": 1}"#).unwrap();
        let mut r2 = ptr::null_mut();
        assert_eq!(mf_rollout(f, m, bad.as_ptr(), &mut r2), MfStatus::Format);
        assert!(r2.is_null());
        mf_motion_free(r);
        mf_motion_free(m);
        mf_fields_free(f);
    }
}

#[test]
fn denoise_returns_a_motion_of_the_same_shape() {
    let dir = field_dir();
    let d = cstr(dir.path());
    let cfg = CString::new(r#"{"stage1_iterations": 5, "stage2_iterations": 0}"#).unwrap();
    unsafe {
        let mut f = ptr::null_mut();
        assert_eq!(mf_fields_load(d.as_ptr(), &mut f), MfStatus::Ok);
        let m = motion(4);
        let mut out = ptr::null_mut();
        assert_eq!(mf_denoise(f, m, cfg.as_ptr(), &mut out), MfStatus::Ok);
        let (mut frames, mut joints) = (0, 0);
        assert_eq!(mf_motion_shape(out, &mut frames, &mut joints), MfStatus::Ok);
        assert_eq!((frames, joints), (4, K));
        let mut err = f64::NAN;
        assert_eq!(mf_mpjpe_mm(out, m, &mut err), MfStatus::Ok);
        assert!(err.is_finite());
        mf_motion_free(out);
        mf_motion_free(m);
        mf_fields_free(f);
    }
}

#[test]
fn header_declares_the_api() {
    let h = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/motionfield.h")).unwrap();
    for name in ["mf_last_error_message", "mf_so3_exp", "mf_fields_load", "mf_project_pose", "mf_denoise", "mf_rollout"] {
        assert!(h.contains(name), "{name}");
    }
    assert!(h.contains("typedef struct MfFields MfFields;"));
}
