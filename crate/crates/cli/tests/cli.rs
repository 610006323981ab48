use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn gazeeg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gazeeg"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn quick_cfg() -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/quick.cfg").display().to_string()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL: [&str; 6] = [
    "-D",
    "synth.n_participants=3",
    "-D",
    "synth.trials_per_participant=12",
    "--log",
    "warn",
];

#[test]
fn all_with_quick_config_is_complete_and_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = quick_cfg();
    for d in [&a, &b] {
        let o = gazeeg(&["all", "--config", &cfg, "--log", "warn", "--out", s(d.path())]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    let csv_a = fs::read_to_string(a.path().join("report/report.csv")).unwrap();
    let csv_b = fs::read_to_string(b.path().join("report/report.csv")).unwrap();
    assert_eq!(csv_a, csv_b);
    assert_eq!(csv_a.lines().count(), 71);
    for name in ["report.json", "report.svg"] {
        assert!(a.path().join("report").join(name).is_file(), "{name}");
    }

    let mut dirs = vec![a.path().to_path_buf(), a.path().join("data"), a.path().join("report")];
    for e in fs::read_dir(a.path().join("participants")).unwrap() {
        let e = e.unwrap().path();
        assert!(e.join("fixations.csv").is_file());
        assert!(e.join("epochs.bin").is_file());
        dirs.push(e);
    }
    assert_eq!(dirs.len(), 7);
    let reference = fs::read_to_string(a.path().join("config.effective.toml")).unwrap();
    assert!(reference.contains("seed = 7"));
    for d in &dirs {
        let c = fs::read_to_string(d.join("config.effective.toml")).unwrap_or_else(|_| panic!("no config in {}", d.display()));
        assert_eq!(c, reference, "{}", d.display());
    }
}

#[test]
fn stage_by_stage() {
    let t = tempfile::tempdir().unwrap();
    let root = t.path();
    let data = root.join("data");
    let o = gazeeg(&[&["synth", "--out", s(&data)][..], &SMALL].concat());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let mut participants: Vec<PathBuf> = fs::read_dir(&data)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_dir())
        .collect();
    participants.sort();
    assert_eq!(participants.len(), 3);

    let fx = root.join("gaze/fixations.csv");
    let o = gazeeg(&[&["gaze", "--in", s(&participants[0]), "--out", s(&fx)][..], &SMALL].concat());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let table = fs::read_to_string(&fx).unwrap();
    assert!(table.starts_with("kind,onset_ms,duration_ms,x_px,y_px,samples,trial_id"));
    assert!(table.lines().filter(|l| l.starts_with("fixation")).count() > 20);

    let epochs = root.join("eeg/epochs.bin");
    let o = gazeeg(&[&["eeg", "--in", s(&data), "--out", s(&epochs)][..], &SMALL].concat());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(fs::metadata(&epochs).unwrap().len() > 0);

    let feats = root.join("features/fusion.csv");
    let o = gazeeg(&[&["features", "--epochs", s(&epochs), "--set", "fusion", "--out", s(&feats)][..], &SMALL].concat());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let header = fs::read_to_string(&feats).unwrap().lines().next().unwrap().to_string();
    assert!(header.starts_with("participant,trial_id,domain,label,csp_00"));
    assert!(header.ends_with(",fix_dur_ms"));

    let model = root.join("model/model.json");
    let o = gazeeg(&[&["train", "--features", s(&feats), "--grid", "linear", "--out", s(&model)][..], &SMALL].concat());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(&model).unwrap()).unwrap();
    assert!(json.is_object());

    let report = root.join("eval");
    let o = gazeeg(
        &[
            &["eval", "--data", s(&data), "--conditions", "both->both,W->W", "--features", "gaze", "--out", s(&report)][..],
            &SMALL,
            &["-D", "eval.outer_folds=3", "-D", "eval.inner_folds=2", "-D", "eval.min_targets=3", "-D", "eval.grid=\"linear\""],
        ]
        .concat(),
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = fs::read_to_string(report.join("report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 2);

    let again = root.join("rendered");
    let o = gazeeg(&["report", "--in", s(&report.join("report.json")), "--out", s(&again), "--log", "warn"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(fs::read_to_string(again.join("report.csv")).unwrap(), csv);

    for d in [&data, &root.join("gaze"), &root.join("eeg"), &root.join("features"), &root.join("model"), &report, &again] {
        assert!(d.join("config.effective.toml").is_file(), "{}", d.display());
    }
}

#[test]
fn exit_codes() {
    let t = tempfile::tempdir().unwrap();
    let out = t.path().join("x");

    let o = gazeeg(&["--version"]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("gazeeg"));
    assert_eq!(code(&gazeeg(&["--help"])), 0);

    assert_eq!(code(&gazeeg(&["synth", "--out", s(&out), "--no-such-flag"])), 1);
    assert_eq!(code(&gazeeg(&["frobnicate"])), 1);

    let o = gazeeg(&["synth", "--out", s(&out), "-D", "synth.no_such_key=3"]);
    assert_eq!(code(&o), 1, "{}", stderr(&o));
    let bad = t.path().join("bad.toml");
    fs::write(&bad, "[eval]\nouter_folds = 1\n").unwrap();
    assert_eq!(code(&gazeeg(&["synth", "--config", s(&bad), "--out", s(&out)])), 1);
    assert_eq!(code(&gazeeg(&["eval", "--data", s(t.path()), "--conditions", "W=>D", "--out", s(&out)])), 1);

    let o = gazeeg(&["gaze", "--in", s(&t.path().join("missing")), "--out", s(&out.join("f.csv"))]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert_eq!(code(&gazeeg(&["report", "--in", s(&t.path().join("none.json")), "--out", s(&out)])), 2);
}
