#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output};

pub const SMALL_CONFIG: &str = r#"{"version": 1, "seed": 3,
 "gen_data": {"joints": 3, "sequences": 12, "negatives": {"n": 400}, "heldout_samples": 100, "eval_frames": 20},
 "train": {"network": {"hidden": [16, 16], "epochs": 5, "learning_rate": 0.01}},
 "denoise": {"noise": 0.02, "fit": {"stage1_iterations": 20, "stage2_iterations": 10}},
 "fit": {"stage1_iterations": 20, "stage2_iterations": 10},
 "inbetween": {"fit": {"stage1_iterations": 20, "stage2_iterations": 10}},
 "generate": {"frames": 10, "fit": {"stage1_iterations": 10, "stage2_iterations": 5}}}"#;

pub fn motionfield(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_motionfield")).args(args).output().expect("binary runs")
}

pub fn run_ok(args: &[&str]) -> Output {
    let out = motionfield(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

/// Every command once, outputs under `root/<command>`.
pub fn pipeline(cfg: &Path, root: &Path) {
    let p = |s: &str| root.join(s).to_str().unwrap().to_owned();
    let c = cfg.to_str().unwrap();
    let eval = p("data/motion_eval.json");
    let fields = p("fields");
    run_ok(&["gen-data", "--config", c, "--out", &p("data")]);
    run_ok(&["train", "--config", c, "--input", &p("data"), "--out", &fields]);
    for cmd in ["project", "rollout", "denoise", "inbetween", "generate"] {
        run_ok(&[cmd, "--config", c, "--input", &eval, "--fields", &fields, "--out", &p(cmd)]);
    }
    run_ok(&[
        "fit", "--config", c, "--input", &p("denoise/observation.json"), "--fields", &fields,
        "--reference", &eval, "--out", &p("fit"),
    ]);
    run_ok(&["metrics", "--input", &p("denoise/denoised.json"), "--reference", &eval, "--out", &p("metrics")]);
}

/// Relative paths of files whose bytes differ between two trees, plus
/// files present in only one.
pub fn tree_differences(a: &Path, b: &Path) -> Vec<String> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<String>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                out.push(path.strip_prefix(root).unwrap().to_str().unwrap().to_owned());
            }
        }
    }
    let (mut fa, mut fb) = (vec![], vec![]);
    walk(a, a, &mut fa);
    walk(b, b, &mut fb);
    fa.sort();
    fb.sort();
    let mut diff: Vec<String> = fa.iter().filter(|f| !fb.contains(f)).cloned().collect();
    diff.extend(fb.iter().filter(|f| !fa.contains(f)).cloned());
    for f in fa.iter().filter(|f| fb.contains(f)) {
        if std::fs::read(a.join(f)).unwrap() != std::fs::read(b.join(f)).unwrap() {
            diff.push(f.clone());
        }
    }
    diff
}
