use beamzoom::expcli::runner::{
    run_scenario, write_outputs, FAILURES_HEADER, RESULTS_HEADER, SUMMARY_HEADER, TRACKING_HEADER,
};
use beamzoom::expcli::scenario::{load_preset_scenario, ScenarioSpec, Scheme};

const SINGLE: &str = r#"
id = "single"
schemes = ["zoom"]
trials = 1
frames = 1

[system]
antennas = 256
subcarriers = 128
users = 1
delays_per_chain = 16
carrier_hz = 100e9
bandwidth_hz = 10e9
sigma2 = 0.0
seed = 1

[users]
mode = "random_drift"
alpha_max = 0.1
theta0 = [0.3]

[sweep]
axis = "slots"
values = [2]
"#;

fn header(path: &std::path::Path) -> Vec<String> {
    csv::Reader::from_path(path)
        .unwrap()
        .headers()
        .unwrap()
        .iter()
        .map(String::from)
        .collect()
}

#[test]
fn csv_schema_is_stable() {
    let spec = ScenarioSpec::parse(SINGLE, "inline").unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_outputs(&spec, &run_scenario(&spec).unwrap(), dir.path()).unwrap();
    assert_eq!(
        header(&dir.path().join("results.csv")),
        [
            "schema_version",
            "scenario",
            "trial",
            "frame",
            "axis",
            "sweep_value",
            "scheme",
            "slots",
            "snr_db",
            "theta",
            "theta_hat",
            "sum_rate",
            "raw_sum_rate",
            "bound",
            "gram_err",
            "elapsed_ms"
        ]
    );
    assert_eq!(header(&dir.path().join("results.csv")), RESULTS_HEADER);
    assert_eq!(header(&dir.path().join("tracking.csv")), TRACKING_HEADER);
    assert_eq!(header(&dir.path().join("failures.csv")), FAILURES_HEADER);
    assert_eq!(header(&dir.path().join("summary.csv")), SUMMARY_HEADER);
    let first = csv::Reader::from_path(dir.path().join("results.csv"))
        .unwrap()
        .records()
        .next()
        .unwrap()
        .unwrap();
    assert_eq!(&first[0], "1");
}

#[test]
fn single_noiseless_trial_gives_one_deterministic_row() {
    let spec = ScenarioSpec::parse(SINGLE, "inline").unwrap();
    let a = run_scenario(&spec).unwrap();
    let b = run_scenario(&spec).unwrap();
    assert_eq!(a.results.len(), 1);
    assert_eq!(a, b);
    let row = &a.results[0];
    assert_eq!((row.trial, row.frame, row.scheme), (0, 1, Scheme::Zoom));
    assert!(row.elapsed_ms == 0.0);
    assert!(a.failures.is_empty());
}

#[test]
fn same_spec_and_seed_give_identical_files() {
    let mut spec = load_preset_scenario("fig15").unwrap();
    spec.trials = 3;
    spec.sweep.values = vec![0.0, 20.0];
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        write_outputs(&spec, &run_scenario(&spec).unwrap(), d.path()).unwrap();
    }
    for f in ["results.csv", "tracking.csv", "failures.csv", "summary.csv"] {
        assert_eq!(
            std::fs::read(dirs[0].path().join(f)).unwrap(),
            std::fs::read(dirs[1].path().join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn fig9_tracks_within_candidate_gap_when_noise_is_negligible() {
    let mut spec = load_preset_scenario("fig9").unwrap();
    spec.snr_db = Some(60.0);
    let out = run_scenario(&spec).unwrap();
    assert!(out.failures.is_empty());
    assert_eq!(out.results.len(), 30);
    assert_eq!(out.tracking.len(), 120);
    let within = out.tracking.iter().filter(|t| t.err <= t.q_bound).count();
    assert!(within as f64 >= 0.95 * 120.0, "{within} of 120");
}

#[test]
fn fig9_preset_snr_keeps_error_within_a_beamwidth_fraction() {
    // At 10 dB the pilot noise moves the argmax inside the main lobe, so the
    // error is a small fraction of the 2/N beamwidth rather than the candidate gap.
    let spec = load_preset_scenario("fig9").unwrap();
    let out = run_scenario(&spec).unwrap();
    let worst = out.tracking.iter().map(|t| t.err).fold(0.0, f64::max);
    assert!(worst < 0.5 * 2.0 / 256.0, "worst error {worst}");
}

#[test]
fn multi_antenna_preset_runs_reduced() {
    let mut spec = load_preset_scenario("fig16").unwrap();
    spec.trials = 2;
    spec.sweep.values = vec![10.0];
    let out = run_scenario(&spec).unwrap();
    assert!(out.failures.is_empty(), "{:?}", out.failures);
    assert_eq!(out.results.len(), 2 * 5);
    let ue = out.tracking.iter().filter(|t| t.stage == "ue").count();
    assert_eq!(ue, 2 * 2 * 4);
}
