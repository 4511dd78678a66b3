use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn occflow(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_occflow"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn occflow")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = occflow(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn err_code(out: &Output) -> String {
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    let line = stderr.lines().last().expect("stderr line");
    assert!(line.starts_with("error code="), "{line}");
    line["error code=".len()..]
        .split(' ')
        .next()
        .unwrap()
        .to_string()
}

fn split_preset(dir: &Path, name: &str) {
    ok(
        dir,
        &[
            "synth",
            "--preset",
            name,
            "--out",
            "h.occs",
            "--history-frames",
            "4",
            "--future",
            "f.occs",
        ],
    );
}

#[test]
fn synth_writes_sequences_and_motion_sidecar() {
    let t = TempDir::new().unwrap();
    split_preset(t.path(), "ego_translation");
    assert!(t.path().join("h.occs").exists());
    assert!(t.path().join("f.occs").exists());
    let toml = fs::read_to_string(t.path().join("h.occs.motion.toml")).unwrap();
    assert!(toml.contains("preset = \"ego_translation\""));
    assert!(toml.contains("pair_homographies"));
}

#[test]
fn forecast_then_eval_beats_copy_paste_on_translating_car() {
    let t = TempDir::new().unwrap();
    let d = t.path();
    split_preset(d, "translating_car");
    ok(d, &["forecast", "--history", "h.occs", "--out", "p.occs"]);
    ok(
        d,
        &[
            "baseline",
            "copy-paste",
            "--history",
            "h.occs",
            "--out",
            "c.occs",
        ],
    );
    let flow = ok(d, &["eval", "--pred", "p.occs", "--gt", "f.occs"]);
    let base = ok(d, &["eval", "--pred", "c.occs", "--gt", "f.occs"]);
    let iou = |csv: &str, h: &str| -> f64 {
        csv.lines()
            .find(|l| l.starts_with(&format!("{h},3d,")))
            .unwrap()
            .split(',')
            .nth(2)
            .unwrap()
            .parse()
            .unwrap()
    };
    for h in ["1", "2", "3", "4"] {
        assert!(iou(&flow, h) > iou(&base, h), "horizon {h}");
    }
}

#[test]
fn flow_prints_nine_numbers() {
    let t = TempDir::new().unwrap();
    let d = t.path();
    split_preset(d, "ego_translation");
    let out = ok(
        d,
        &[
            "flow",
            "--from",
            "h.occs",
            "--out",
            "x.flo",
            "--matches",
            "m.csv",
        ],
    );
    let nums: Vec<f64> = out.split_whitespace().map(|s| s.parse().unwrap()).collect();
    assert_eq!(nums.len(), 9);
    assert!((nums[2] + 1.0).abs() < 0.1, "{nums:?}");
    assert!(fs::read_to_string(d.join("m.csv"))
        .unwrap()
        .starts_with("src_x,"));
    assert!(d.join("x.flo").exists());
}

#[test]
fn convert_round_trips_through_directory_and_raw() {
    let t = TempDir::new().unwrap();
    let d = t.path();
    ok(
        d,
        &[
            "synth", "--preset", "static", "--out", "s.occs", "--frames", "3",
        ],
    );
    ok(d, &["convert", "--input", "s.occs", "--output", "frames"]);
    ok(d, &["convert", "--input", "frames", "--output", "s2.occs"]);
    assert_eq!(
        fs::read(d.join("s.occs")).unwrap(),
        fs::read(d.join("s2.occs")).unwrap()
    );

    ok(
        d,
        &["convert", "--input", "frames/000.occv", "--output", "g.raw"],
    );
    ok(
        d,
        &[
            "convert", "--input", "g.raw", "--output", "g.occv", "--dims", "64,64,8",
        ],
    );
    assert_eq!(
        fs::read(d.join("frames/000.occv")).unwrap(),
        fs::read(d.join("g.occv")).unwrap()
    );
}

#[test]
fn bev_outputs() {
    let t = TempDir::new().unwrap();
    let d = t.path();
    ok(
        d,
        &[
            "synth", "--preset", "static", "--out", "s.occs", "--frames", "2",
        ],
    );
    ok(
        d,
        &[
            "bev", "--input", "s.occs", "--frame", "0", "--pgm", "o/h.pgm", "--labels", "o/l.csv",
        ],
    );
    let pgm = fs::read(d.join("o/h.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5\n"));
    let csv = fs::read_to_string(d.join("o/l.csv")).unwrap();
    assert_eq!(csv.lines().count(), 64);
    assert_eq!(csv.lines().next().unwrap().split(',').count(), 64);
}

#[test]
fn fuse_gate_zero_reproduces_first_input() {
    let t = TempDir::new().unwrap();
    let d = t.path();
    split_preset(d, "crossing_pair");
    ok(d, &["forecast", "--history", "h.occs", "--out", "p.occs"]);
    ok(
        d,
        &[
            "baseline",
            "copy-paste",
            "--history",
            "h.occs",
            "--out",
            "c.occs",
        ],
    );
    ok(
        d,
        &[
            "fuse", "--a", "p.occs", "--b", "c.occs", "--w", "0", "--out", "z.occs",
        ],
    );
    assert_eq!(
        fs::read(d.join("p.occs")).unwrap(),
        fs::read(d.join("z.occs")).unwrap()
    );
    let bad = occflow(
        d,
        &[
            "fuse", "--a", "p.occs", "--b", "c.occs", "--w", "1.5", "--out", "y.occs",
        ],
    );
    assert_eq!(err_code(&bad), "INVALID_PARAMS");
}

#[test]
fn run_from_config_is_byte_stable() {
    let t = TempDir::new().unwrap();
    let d = t.path();
    split_preset(d, "ego_rotation");
    fs::write(
        d.join("run.toml"),
        "history_path = \"h.occs\"\ngt_path = \"f.occs\"\noutput_dir = \"out\"\nhorizon = 4\n",
    )
    .unwrap();
    ok(d, &["run", "--config", "run.toml"]);
    let first = fs::read(d.join("out/prediction.occs")).unwrap();
    let metrics = fs::read_to_string(d.join("out/metrics.csv")).unwrap();
    assert!(metrics.starts_with("horizon,space,iou,miou"));
    ok(d, &["run", "--config", "run.toml"]);
    assert_eq!(first, fs::read(d.join("out/prediction.occs")).unwrap());
}

#[test]
fn error_paths_have_stable_codes() {
    let t = TempDir::new().unwrap();
    let d = t.path();
    assert_eq!(err_code(&occflow(d, &["frobnicate"])), "USAGE");
    assert_eq!(
        err_code(&occflow(d, &["eval", "--pred", "a.occs", "--gt", "b.occs"])),
        "IO_FAILURE"
    );
    assert_eq!(
        err_code(&occflow(
            d,
            &["synth", "--preset", "nope", "--out", "x.occs"]
        )),
        "UNKNOWN_PRESET"
    );
    fs::write(d.join("junk.occv"), b"NOPE....").unwrap();
    assert_eq!(
        err_code(&occflow(
            d,
            &["bev", "--input", "junk.occv", "--pgm", "x.pgm"]
        )),
        "BAD_MAGIC"
    );
    fs::write(
        d.join("bad.toml"),
        "history_path = \"h\"\noutput_dir = \"o\"\nbogus = 1\n",
    )
    .unwrap();
    assert_eq!(
        err_code(&occflow(d, &["run", "--config", "bad.toml"])),
        "CONFIG_INVALID"
    );
}

#[test]
fn help_and_version_exit_zero() {
    let t = TempDir::new().unwrap();
    assert!(ok(t.path(), &["--help"]).contains("self-test"));
    assert!(ok(t.path(), &["--version"]).starts_with("occflow "));
}
