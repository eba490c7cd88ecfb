use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn pixtrack(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pixtrack"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = pixtrack(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn kv(text: &str, key: &str) -> f64 {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("{key} missing from {text}"))
        .parse()
        .unwrap()
}

#[test]
fn simulate_track_eval_is_perfect_on_clean_scene() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["simulate", "--seed", "7", "--objects", "5", "--frames", "100", "--out", "scene/"]);
    ok(d, &["track", "--scene", "scene/", "--out", "res.txt"]);
    ok(d, &["eval", "--gt", "scene/gt.txt", "--res", "res.txt", "--kv", "report.kv"]);
    let report = fs::read_to_string(d.join("report.kv")).unwrap();
    assert_eq!(kv(&report, "mota"), 1.0);
    assert_eq!(kv(&report, "idf1"), 1.0);
    assert_eq!(kv(&report, "idsw"), 0.0);
}

#[test]
fn swapped_identical_files_score_perfectly() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["simulate", "--seed", "2", "--objects", "3", "--frames", "30", "--out", "s"]);
    ok(d, &["track", "--scene", "s", "--out", "res.txt"]);
    ok(d, &["eval", "--gt", "res.txt", "--res", "s/gt.txt", "--kv", "a.kv"]);
    ok(d, &["eval", "--gt", "res.txt", "--res", "res.txt", "--kv", "b.kv"]);
    for f in ["a.kv", "b.kv"] {
        assert_eq!(kv(&fs::read_to_string(d.join(f)).unwrap(), "mota"), 1.0);
    }
}

#[test]
fn config_echo_shows_default_thresholds() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["simulate", "--objects", "2", "--frames", "5", "--out", "s"]);
    let echo = ok(
        d,
        &["track", "--scene", "s", "--eta-m", "0.65", "--eta-s", "0.80", "--nk", "30"],
    );
    for line in ["eta_m = 0.65", "eta_s = 0.8", "nk = 30"] {
        assert!(echo.lines().any(|l| l == line), "{line} not in\n{echo}");
    }
    assert!(d.join("s/results.txt").exists());
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["simulate", "--objects", "2", "--frames", "5", "--out", "s"]);
    fs::write(d.join("run.cfg"), "eta_m = 0.5\nnk = 12\n").unwrap();
    let echo = ok(d, &["track", "--scene", "s", "--config", "run.cfg", "--nk", "7"]);
    assert!(echo.lines().any(|l| l == "eta_m = 0.5"));
    assert!(echo.lines().any(|l| l == "nk = 7"));
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    for tag in ["a", "b"] {
        let scene = format!("scene_{tag}");
        ok(
            d,
            &[
                "simulate", "--seed", "4", "--objects", "4", "--frames", "40", "--noise", "0.1",
                "--clutter", "0.5", "--dropout", "0.1", "--blobs", "--out", &scene,
            ],
        );
        ok(d, &["track", "--scene", &scene, "--out", &format!("res_{tag}.txt")]);
        ok(d, &["render", "--scene", &scene, "--res", &format!("res_{tag}.txt"), "--out", &format!("img_{tag}"), "--every", "10"]);
    }
    for f in ["gt.txt", "det.txt", "scene.cfg", "heatmaps/000003.grid", "flow/000003.grid"] {
        assert_eq!(
            fs::read(d.join("scene_a").join(f)).unwrap(),
            fs::read(d.join("scene_b").join(f)).unwrap(),
            "{f}"
        );
    }
    assert_eq!(fs::read(d.join("res_a.txt")).unwrap(), fs::read(d.join("res_b.txt")).unwrap());
    let img = fs::read(d.join("img_a/000001.ppm")).unwrap();
    assert!(img.starts_with(b"P6\n256 192\n255\n"));
    assert_eq!(img, fs::read(d.join("img_b/000001.ppm")).unwrap());
}

#[test]
fn bare_detection_file_can_be_tracked() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["simulate", "--objects", "3", "--frames", "20", "--out", "s"]);
    ok(
        d,
        &["track", "--det", "s/det.txt", "--width", "256", "--height", "192", "--out", "res.txt"],
    );
    ok(d, &["eval", "--gt", "s/gt.txt", "--res", "res.txt", "--kv", "r.kv"]);
    assert_eq!(kv(&fs::read_to_string(d.join("r.kv")).unwrap(), "mota"), 1.0);
}

#[test]
fn decoder_mode_runs_on_stored_features() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["simulate", "--objects", "2", "--frames", "4", "--features", "--blobs", "--out", "s"]);
    let echo = ok(
        d,
        &[
            "track", "--scene", "s", "--set", "detector=decoder", "--levels", "2", "--queries",
            "6", "--set", "ffn_dim=16", "--out", "res.txt",
        ],
    );
    assert!(echo.lines().any(|l| l == "channels = 32"));
    assert!(d.join("res.txt").exists());

    ok(d, &["simulate", "--objects", "2", "--frames", "4", "--out", "plain"]);
    let out = pixtrack(d, &["track", "--scene", "plain", "--set", "detector=decoder"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("no stored features"));
}

#[test]
fn bad_usage_fails_with_usage_text() {
    let dir = tempfile::tempdir().unwrap();
    let out = pixtrack(dir.path(), &["track", "--bogus"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    let out = pixtrack(dir.path(), &["frobnicate"]);
    assert!(!out.status.success());
}

#[test]
fn missing_files_are_named() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    for args in [
        vec!["eval", "--gt", "missing_gt.txt", "--res", "missing_gt.txt"],
        vec!["track", "--scene", "missing_scene"],
        vec!["track", "--scene", ".", "--config", "missing_gt.txt"],
    ] {
        let out = pixtrack(d, &args);
        assert!(!out.status.success(), "{args:?}");
        let err = String::from_utf8_lossy(&out.stderr);
        assert!(err.contains("missing_"), "{args:?}: {err}");
    }
}
