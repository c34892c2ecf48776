mod common;

use std::path::{Path, PathBuf};
use std::process::Command;

use rangeseg::kitti::{read_labels, scan_bytes, DEFAULT_CONFIG};
use rangeseg::TensorFile;
use rangeseg_cli::RunManifest;

use common::{p, rangeseg, synthetic_cloud, write_synthetic_scan};

const DEFAULT_MODEL: &str = "stem_channels = 64
stage_widths = [64, 128, 128, 256]
stage_blocks = [3, 4, 6, 3]
decoder_width = 64
msca_local_kernel = 5
msca_branch_kernels = [7, 11, 21]";

/// Default config with the model and image shrunk so inference is quick.
fn small_config(dir: &Path, model: &str) -> PathBuf {
    let text = DEFAULT_CONFIG
        .replace("height = 64\nwidth = 2048", "height = 16\nwidth = 128")
        .replace(DEFAULT_MODEL, model);
    assert!(
        text.contains("width = 128") && text.contains(model),
        "default config layout changed"
    );
    let path = dir.join("small.toml");
    std::fs::write(&path, text).unwrap();
    path
}

const TINY_MODEL: &str = "stem_channels = 1
stage_widths = [1, 1, 1, 1]
stage_blocks = [1, 1, 1, 1]
decoder_width = 1
msca_local_kernel = 1
msca_branch_kernels = [3]";

const SMALL_MODEL: &str = "stem_channels = 8
stage_widths = [8, 8, 16, 16]
stage_blocks = [1, 1, 1, 1]
decoder_width = 8
msca_local_kernel = 3
msca_branch_kernels = [3, 5]";

fn stderr(o: &std::process::Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &std::process::Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn manifest(path: &Path) -> RunManifest {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn write_raw_labels(path: &Path, words: &[u32]) {
    let bytes: Vec<u8> = words.iter().flat_map(|w| w.to_le_bytes()).collect();
    std::fs::write(path, bytes).unwrap();
}

#[test]
fn project_writes_one_container_per_scan() {
    let dir = tempfile::tempdir().unwrap();
    let a = write_synthetic_scan(dir.path(), "a.bin", 500, 1);
    let b = write_synthetic_scan(dir.path(), "b.bin", 300, 2);
    let out = dir.path().join("out");
    let o = rangeseg(&["project", "--scan", p(&a), p(&b), "--out", p(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));

    let tf = TensorFile::read(out.join("a.range")).unwrap();
    let names: Vec<&str> = tf.names().collect();
    for n in [
        "channels",
        "mask",
        "raw_range",
        "pixel_of_point",
        "point_of_pixel",
        "source_index",
    ] {
        assert!(names.contains(&n), "missing {n}: {names:?}");
    }
    assert_eq!(tf.get("channels").unwrap().shape, vec![1, 5, 64, 2048]);
    assert_eq!(tf.get("pixel_of_point").unwrap().shape, vec![500, 2]);
    assert_eq!(tf.get("mask").unwrap().shape, vec![64, 2048]);
    assert!(out.join("b.range").is_file());

    let m = manifest(&out.join("manifest.json"));
    assert_eq!(m.command, "project");
    assert_eq!(m.counts.scans, 2);
    assert_eq!(m.counts.points, 800);
    assert_eq!(m.outputs, vec![out.join("a.range"), out.join("b.range")]);
}

#[test]
fn project_is_bitwise_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let scan = write_synthetic_scan(dir.path(), "s.bin", 2000, 3);
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = rangeseg(&["project", "--scan", p(&scan), "--out", p(&out)]);
        assert!(o.status.success(), "{}", stderr(&o));
        std::fs::read(out.join("s.range")).unwrap()
    };
    assert_eq!(run("one"), run("two"));
}

#[test]
fn project_missing_scan_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.bin");
    let out = dir.path().join("out");
    let o = rangeseg(&["project", "--scan", p(&missing), "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains(p(&missing)), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn project_rejects_truncated_scan() {
    let dir = tempfile::tempdir().unwrap();
    let scan = dir.path().join("t.bin");
    std::fs::write(&scan, [0u8; 18]).unwrap();
    let o = rangeseg(&["project", "--scan", p(&scan), "--out", p(&dir.path().join("out"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("t.bin"), "{}", stderr(&o));
}

#[test]
fn infer_is_deterministic_and_labels_every_point() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), SMALL_MODEL);
    // a non-finite point is dropped before projection but still gets a label
    let mut cloud = synthetic_cloud(1500, 4);
    cloud.points[10] = [f32::NAN, 0.0, 0.0];
    let scan = dir.path().join("000001.bin");
    std::fs::write(&scan, scan_bytes(&cloud)).unwrap();

    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = rangeseg(&[
            "infer",
            "--config",
            p(&cfg),
            "--weights",
            "random:5",
            "--scan",
            p(&scan),
            "--out",
            p(&out),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        out
    };
    let (a, b) = (run("a"), run("b"));
    let bytes = std::fs::read(a.join("000001.label")).unwrap();
    assert_eq!(bytes, std::fs::read(b.join("000001.label")).unwrap());

    let labels = read_labels(a.join("000001.label")).unwrap();
    assert_eq!(labels.len(), 1500);
    assert_eq!(labels[10].semantic, 0);
    assert!(labels.iter().all(|l| l.instance == 0));

    let m = manifest(&a.join("manifest.json"));
    assert_eq!(m.command, "infer");
    assert_eq!(m.seed, Some(5));
    assert_eq!(m.counts.points, 1500);
    assert_eq!(m.counts.rejected_points, 1);
    for stage in ["read", "project", "forward", "backproject", "write", "total"] {
        assert!(m.timing.contains_key(stage), "no {stage} timing");
    }
}

#[test]
fn infer_aborts_before_writing_when_weights_fail_to_load() {
    let dir = tempfile::tempdir().unwrap();
    let scan = write_synthetic_scan(dir.path(), "s.bin", 100, 5);
    let bogus = dir.path().join("weights.bin");
    std::fs::write(&bogus, b"not a tensor file").unwrap();
    let out = dir.path().join("out");
    for w in [p(&bogus), "random:x"] {
        let o = rangeseg(&["infer", "--weights", w, "--scan", p(&scan), "--out", p(&out)]);
        assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
        assert!(!out.exists(), "output written after failed weight load");
    }
}

#[test]
fn eval_hand_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let (pred, gt) = (dir.path().join("pred"), dir.path().join("gt"));
    std::fs::create_dir_all(&pred).unwrap();
    std::fs::create_dir_all(&gt).unwrap();
    // raw 10 = car, 11 = bicycle; instance bits must not matter
    write_raw_labels(&pred.join("0.label"), &[10, 10, 11, 11 | (7 << 16)]);
    write_raw_labels(&gt.join("0.label"), &[10, 11, 11, 11]);
    let m = dir.path().join("m.json");
    let o = rangeseg(&["eval", "--pred-dir", p(&pred), "--gt-dir", p(&gt), "--manifest", p(&m)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("car\t0.500000"), "{text}");
    assert!(text.contains("mIoU\t0.583333\t(2 classes)"), "{text}");
    let miou = manifest(&m).results["miou"].as_f64().unwrap();
    assert!((miou - 0.58333).abs() < 1e-5);
}

#[test]
fn eval_rejects_empty_and_unpaired_dirs() {
    let dir = tempfile::tempdir().unwrap();
    let (pred, gt) = (dir.path().join("pred"), dir.path().join("gt"));
    std::fs::create_dir_all(&pred).unwrap();
    std::fs::create_dir_all(&gt).unwrap();
    let o = rangeseg(&["eval", "--pred-dir", p(&pred), "--gt-dir", p(&gt)]);
    assert_eq!(o.status.code(), Some(2));

    write_raw_labels(&pred.join("a.label"), &[10]);
    write_raw_labels(&gt.join("a.label"), &[10]);
    write_raw_labels(&gt.join("b.label"), &[10]);
    let o = rangeseg(&["eval", "--pred-dir", p(&pred), "--gt-dir", p(&gt)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("b.label"), "{}", stderr(&o));

    write_raw_labels(&pred.join("b.label"), &[10, 10]);
    let o = rangeseg(&["eval", "--pred-dir", p(&pred), "--gt-dir", p(&gt)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn gradcheck_reports_and_fails_on_corruption() {
    let o = rangeseg(&["gradcheck", "--sizes", "1x3x4x4", "--instances", "5"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(
        text.contains("theta0 = 3") && text.contains("lambda = [1.0, 1.0, 0.5]"),
        "{text}"
    );
    assert_eq!(text.matches("PASS").count(), 3, "{text}");

    let o = rangeseg(&["gradcheck", "--sizes", "1x3x4x4", "--instances", "5", "--corrupt"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("FAIL"));
}

#[test]
fn gradcheck_rejects_bad_sizes() {
    for s in ["1x3x4", "1x0x4x4", "axbxcxd"] {
        let o = rangeseg(&["gradcheck", "--sizes", s]);
        assert_eq!(o.status.code(), Some(2), "{s}");
    }
}

#[test]
fn paramcount_is_deterministic() {
    let a = rangeseg(&["paramcount"]);
    let b = rangeseg(&["paramcount"]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let text = stdout(&a);
    assert!(text.contains("total") && text.contains("4197840"), "{text}");
    assert!(text.contains("ratio_to_4.74M"), "{text}");
}

#[test]
fn paramcount_tiny_config_by_hand() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), TINY_MODEL);
    let m = dir.path().join("m.json");
    let o = rangeseg(&["paramcount", "--config", p(&cfg), "--manifest", p(&m)]);
    assert!(o.status.success(), "{}", stderr(&o));
    // stem: 5*9 + 2 + 2 * (9 + 2) = 69
    // stage 1: conv 9 + norm 2 + local 1+1 + strip 2 * (3+1) + mix 1+1 = 23
    // stages 2-4 add a 1x1 projection and its norm: 3 * (23 + 3) = 78
    // iac1: 9 + 2; iac2-4 see 2 channels: 3 * (18 + 2) = 71
    // head: 3*20 + 20 = 80, aux: 3 * (20 + 20) = 120
    let expect = 69 + 23 + 78 + 71 + 80 + 120;
    assert_eq!(manifest(&m).results["total"].as_u64(), Some(expect));
}

#[test]
fn threads_come_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("m.json");
    let o = Command::new(env!("CARGO_BIN_EXE_rangeseg"))
        .args(["paramcount", "--manifest", p(&m)])
        .env("RANGESEG_THREADS", "3")
        .output()
        .unwrap();
    assert!(o.status.success());
    assert_eq!(manifest(&m).threads, 3);

    let o = rangeseg(&["--threads", "2", "paramcount", "--manifest", p(&m)]);
    assert!(o.status.success());
    assert_eq!(manifest(&m).threads, 2);
}

#[test]
fn config_errors_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, DEFAULT_CONFIG.replace("theta0 = 3", "theta0 = 4")).unwrap();
    let o = rangeseg(&["paramcount", "--config", p(&cfg)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("theta0"), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(rangeseg(&["infer"]).status.code(), Some(2));
    assert_eq!(rangeseg(&["frobnicate"]).status.code(), Some(2));
}
