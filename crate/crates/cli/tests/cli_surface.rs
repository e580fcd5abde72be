//! Command-line behavior: flags, outputs, and the 0/1/2 exit-code contract.

use std::fs;
use std::path::Path;
use std::process::Command;

use corrflow_core::init::SplitMix64;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_corrflow"))
}

fn write_pgm(path: &Path, seed: u64, h: usize, w: usize) {
    let mut rng = SplitMix64::new(seed);
    let mut bytes = format!("P5\n{w} {h}\n255\n").into_bytes();
    bytes.extend((0..h * w).map(|_| (rng.next_usize(256)) as u8));
    fs::write(path, bytes).unwrap();
}

#[test]
fn memcheck_prints_fixture_and_passes() {
    let out = bin()
        .args([
            "memcheck", "--H", "440", "--W", "1024", "--K", "16", "--D", "128", "--r", "3", "--b",
            "1",
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(
        text.contains("14,680,064"),
        "missing fixture bytes:\n{text}"
    );
    assert!(text.contains("PASS"));
    assert!(!text.contains("FAIL"));
}

#[test]
fn memcheck_csv_emits_rows() {
    let out = bin()
        .args(["memcheck", "--H", "440", "--W", "1024", "--csv"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    let header = text.lines().next().unwrap();
    assert!(header.starts_with("height,width,K,D,r,"));
}

#[test]
fn selftest_exits_zero() {
    let out = bin().arg("selftest").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("all 13 suites passed"), "{text}");
}

#[test]
fn bench_reports_each_size() {
    let out = bin()
        .args(["bench", "--sizes", "4x8x8,2x16x4", "--reps", "2", "--csv"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(text.lines().count(), 3);
    assert!(text.lines().nth(1).unwrap().starts_with("4,8,8,"));
}

#[test]
fn gen_infer_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let img1 = dir.path().join("a.pgm");
    write_pgm(&img1, 31, 64, 96);
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "d = 16\niterations = 3\nn_slice = 4\nseed = 3\n").unwrap();

    let img2 = dir.path().join("b.pgm");
    let gt = dir.path().join("gt.flo");
    assert!(bin()
        .args(["gen", "--img1"])
        .arg(&img1)
        .args(["--dx", "2", "--dy", "0"])
        .arg("--out-img2")
        .arg(&img2)
        .arg("--out-gt")
        .arg(&gt)
        .status()
        .unwrap()
        .success());

    let pred = dir.path().join("pred.flo");
    let viz = dir.path().join("pred.ppm");
    let infer = bin()
        .args(["infer", "--cfg"])
        .arg(&cfg)
        .arg("--img1")
        .arg(&img1)
        .arg("--img2")
        .arg(&img2)
        .arg("--out")
        .arg(&pred)
        .arg("--viz")
        .arg(&viz)
        .output()
        .unwrap();
    assert!(infer.status.success());
    // untrained-weights banner goes to stderr
    assert!(String::from_utf8_lossy(&infer.stderr).contains("seeded random weights"));
    assert!(pred.exists());
    assert!(viz.exists());

    let eval = bin()
        .args(["eval", "--pred"])
        .arg(&pred)
        .arg("--gt")
        .arg(&gt)
        .output()
        .unwrap();
    assert!(eval.status.success());
    let text = String::from_utf8_lossy(&eval.stdout);
    assert!(text.contains("EPE:"), "{text}");
    assert!(text.contains("F1-all:"), "{text}");
}

#[test]
fn color_ppm_inputs_run_through_the_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let img1 = dir.path().join("a.ppm");
    let mut rng = SplitMix64::new(41);
    let mut bytes = b"P6\n48 32\n255\n".to_vec();
    bytes.extend((0..48 * 32 * 3).map(|_| rng.next_usize(256) as u8));
    fs::write(&img1, bytes).unwrap();

    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "d = 16\niterations = 2\nn_slice = 2\nseed = 5\n").unwrap();

    let img2 = dir.path().join("b.ppm");
    let gt = dir.path().join("gt.flo");
    assert!(bin()
        .args(["gen", "--img1"])
        .arg(&img1)
        .args(["--dx", "-1.5", "--dy", "0.5"])
        .arg("--out-img2")
        .arg(&img2)
        .arg("--out-gt")
        .arg(&gt)
        .status()
        .unwrap()
        .success());

    let pred = dir.path().join("pred.flo");
    assert!(bin()
        .args(["infer", "--cfg"])
        .arg(&cfg)
        .arg("--img1")
        .arg(&img1)
        .arg("--img2")
        .arg(&img2)
        .arg("--out")
        .arg(&pred)
        .status()
        .unwrap()
        .success());
    let flow = corrflow_core::io::flo::read_flo(&pred).unwrap();
    assert_eq!((flow.height(), flow.width()), (32, 48));
}

#[test]
fn missing_input_file_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["eval", "--pred", "/nonexistent/p.flo", "--gt"])
        .arg(dir.path().join("also-missing.flo"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn invalid_config_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("a.pgm");
    write_pgm(&img, 32, 16, 16);
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "mystery_knob = 9\n").unwrap();
    let out = bin()
        .args(["infer", "--cfg"])
        .arg(&cfg)
        .arg("--img1")
        .arg(&img)
        .arg("--img2")
        .arg(&img)
        .args(["--out", "/tmp/never.flo"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown key"));
}

#[test]
fn bad_flags_exit_one_and_help_exits_zero() {
    let out = bin().args(["memcheck", "--no-such-flag"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));

    let out = bin().arg("--help").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("optical flow"));
}

#[test]
fn mismatched_image_dims_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.pgm");
    let b = dir.path().join("b.pgm");
    write_pgm(&a, 33, 32, 32);
    write_pgm(&b, 34, 32, 48);
    let out = bin()
        .args(["infer", "--img1"])
        .arg(&a)
        .arg("--img2")
        .arg(&b)
        .args(["--out", "/tmp/never.flo"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}
