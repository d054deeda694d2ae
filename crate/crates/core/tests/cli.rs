use std::path::Path;
use std::process::{Command, Output};

fn beamzoom(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_beamzoom"))
        .args(args)
        .env_remove("BEAMZOOM_OUT")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const TINY: &str = r#"
id = "tiny"
schemes = ["optimal", "zoom"]
trials = 2
frames = 2
snr_db = 20.0

[system]
antennas = 64
subcarriers = 16
users = 2
delays_per_chain = 8
carrier_hz = 100e9
bandwidth_hz = 10e9
pilot_len = 4
seed = 5

[users]
mode = "random_drift"
alpha_max = 0.05

[sweep]
axis = "slots"
values = [2, 3]
"#;

#[test]
fn tmin_prints_reference_bound() {
    let o = beamzoom(&["tmin", "--preset", "fig11"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).lines().next().unwrap() == "T_min = 2", "{}", stdout(&o));
}

#[test]
fn tmin_fixed_orientation() {
    let o = beamzoom(&["tmin", "--preset", "fig11", "--fixed-orientation"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("T_min = 12\n"));
}

#[test]
fn bogus_figure_and_subcommand_exit_one() {
    assert_eq!(beamzoom(&["fig", "bogus"]).status.code(), Some(1));
    let o = beamzoom(&["bogus"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
}

#[test]
fn pattern_spans_requested_range() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = beamzoom(&[
        "pattern", "--theta", "-0.025", "--alpha", "0.025", "--M", "32", "--out", out, "--svg",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let mut peaks = csv::Reader::from_path(dir.path().join("peaks.csv")).unwrap();
    let predicted: Vec<f64> = peaks.records().map(|r| r.unwrap()[1].parse().unwrap()).collect();
    assert_eq!(predicted.len(), 32);
    assert!((predicted[0] + 0.05).abs() < 1e-9);
    assert!(predicted[31].abs() < 1e-9);
    let mut pattern = csv::Reader::from_path(dir.path().join("pattern.csv")).unwrap();
    assert_eq!(pattern.headers().unwrap().len(), 33);
    assert!(dir.path().join("pattern.svg").exists());
    assert!(dir.path().join("beamformer.txt").exists());
}

#[test]
fn sweep_writes_all_outputs_and_honours_env_dir() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("tiny.toml");
    std::fs::write(&file, TINY).unwrap();
    let out = dir.path().join("env-out");
    let o = Command::new(env!("CARGO_BIN_EXE_beamzoom"))
        .args(["sweep", file.to_str().unwrap(), "--svg"])
        .env("BEAMZOOM_OUT", &out)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for f in [
        "results.csv",
        "tracking.csv",
        "failures.csv",
        "summary.csv",
        "sum_rate.svg",
        "accuracy.svg",
    ] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    let rows = csv::Reader::from_path(out.join("results.csv"))
        .unwrap()
        .records()
        .count();
    assert_eq!(rows, 2 * 2 * 2 * 2);
}

#[test]
fn seed_flag_changes_output() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("tiny.toml");
    std::fs::write(&file, TINY).unwrap();
    let run = |seed: &str, sub: &str| {
        let out = dir.path().join(sub);
        let o = beamzoom(&[
            "sweep",
            file.to_str().unwrap(),
            "--seed",
            seed,
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0));
        std::fs::read(out.join("results.csv")).unwrap()
    };
    let a = run("1", "a");
    let b = run("1", "b");
    let c = run("2", "c");
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn invalid_scenario_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("bad.toml");
    std::fs::write(&file, TINY.replace("users = 2", "users = 0")).unwrap();
    assert_eq!(beamzoom(&["sweep", file.to_str().unwrap()]).status.code(), Some(1));
    assert_eq!(
        beamzoom(&["sweep", "/nonexistent/scenario.toml"]).status.code(),
        Some(1)
    );
    let unknown_key = TINY.replace("trials = 2", "trials = 2\nbogus = 1");
    std::fs::write(&file, unknown_key).unwrap();
    let o = beamzoom(&["sweep", file.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bogus"));
}

#[test]
fn track_demo_reports_every_user() {
    let o = beamzoom(&["track"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert_eq!(
        text.lines()
            .filter(|l| l.chars().next().is_some_and(|c| c.is_ascii_digit()))
            .count(),
        4
    );
}

#[test]
fn fig6_preset_writes_pattern() {
    let dir = tempfile::tempdir().unwrap();
    let o = beamzoom(&["fig", "fig6", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(Path::new(&dir.path().join("peaks.csv")).exists());
    assert!(stdout(&o).contains("beams = 32"));
}
