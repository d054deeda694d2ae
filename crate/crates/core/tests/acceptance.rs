//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use beamzoom::analysis::{
    oriented_alpha, quantization_bound, rate_lower_bound, sum_rate, t_min, FanOrientation, RateBoundParams,
};
use beamzoom::beamform::{
    array_gain, dirichlet_sinc, frequency_independent_beamformer, split_free_beamformer, zf_precoder, zoom_beamformer,
    ArrayGeometry,
};
use beamzoom::channel::{synthesize_channel, PathParams};
use beamzoom::expcli::pattern::beam_pattern;
use beamzoom::expcli::runner::{run_scenario, write_outputs, RunOutput};
use beamzoom::expcli::scenario::{PrecoderKind, ScenarioSpec, Scheme, SweepAxis, SweepSpec, UsersSpec};
use beamzoom::syscfg::{FrequencyGrid, SystemParams};
use beamzoom::tracking::{slot_beamformer, target_directions, track_beam_zoom, TrackerParams};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn ref_geom() -> ArrayGeometry {
    ArrayGeometry::new(256, 16).unwrap()
}

fn ref_grid() -> FrequencyGrid {
    FrequencyGrid::new(100e9, 10e9, 128)
}

fn ref_system(seed: u64) -> SystemParams {
    SystemParams {
        antennas: 256,
        subcarriers: 128,
        users: 4,
        delays_per_chain: 16,
        carrier_hz: 100e9,
        bandwidth_hz: 10e9,
        pilot_len: 10,
        rho: 1.0,
        sigma2: 0.1,
        seed,
    }
}

fn ref_spec(id: &str, seed: u64, schemes: Vec<Scheme>, axis: SweepAxis, values: Vec<f64>) -> ScenarioSpec {
    ScenarioSpec {
        id: id.into(),
        description: String::new(),
        system: ref_system(seed),
        users: UsersSpec::RandomDrift {
            alpha_max: 0.1,
            theta0: None,
        },
        user_side: None,
        sweep: SweepSpec { axis, values },
        schemes,
        precoder: PrecoderKind::Mmse,
        trials: 200,
        frames: 1,
        slots: 2,
        snr_db: None,
        outputs: "out".into(),
        record_timing: false,
    }
}

/// Smallest T meeting |beta| <= 1 for every slot, subcarrier and direction on a
/// 1001-point grid (plus both sides of 0), with beta written out from the zoom design.
fn dense_t_min(geom: ArrayGeometry, grid: &FrequencyGrid, alpha: f64, orientation: FanOrientation) -> Option<usize> {
    let p = geom.p() as f64;
    let (x1, xm) = (grid.xi_first(), grid.xi_last());
    let zc = 2.0 * xm * x1 / (xm - x1);
    let mut thetas: Vec<f64> = (0..=1000).map(|i| -1.0 + i as f64 * 2e-3).collect();
    thetas.push(1e-12);
    (1..=4096).find(|&slots| {
        thetas.iter().all(|&theta| {
            let a = oriented_alpha(theta, alpha, orientation);
            (1..=slots).all(|t| {
                let a_t = a / slots as f64;
                let centre = theta - a + (2 * t - 1) as f64 * a_t;
                let phi = centre + (1.0 - x1) * a_t;
                let s = -p / 2.0 * (phi + zc * a_t);
                grid.xi().iter().all(|&xi| (2.0 * (1.0 - xi) * s).abs() <= 1.0 + 1e-12)
            })
        })
    })
}

fn criterion_1() -> Outcome {
    let report = t_min(ref_geom(), &ref_grid(), 0.1, FanOrientation::FollowSign).map_err(|e| e.to_string())?;
    if report.t_min != 2 {
        return Err(format!("T_min = {} (expected 2)", report.t_min));
    }
    // the beamformer constructor must agree: T = 2 builds everywhere, T = 1 does not
    let (geom, grid) = (ref_geom(), ref_grid());
    let builds = |slots: usize| {
        (0..=400).all(|i| {
            let th = -1.0 + i as f64 * 5e-3;
            let a = oriented_alpha(th, 0.1, FanOrientation::FollowSign);
            (1..=slots).all(|t| slot_beamformer(t, th, a, slots, geom, &grid).is_ok())
        })
    };
    if !builds(2) || builds(1) {
        return Err("slot beamformer feasibility disagrees with T_min = 2".into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut compared = 0;
    for _ in 0..50 {
        let kd = [8usize, 16, 32][rng.random_range(0..3)];
        let n = [128usize, 256, 512][rng.random_range(0..3)];
        let geom = ArrayGeometry::new(n, kd).unwrap();
        let grid = FrequencyGrid::new(
            rng.random_range(60e9..320e9),
            rng.random_range(1e9..15e9),
            rng.random_range(8..129),
        );
        let alpha = rng.random_range(0.01..0.3);
        for orient in [FanOrientation::FollowSign, FanOrientation::Ascending] {
            let fast = t_min(geom, &grid, alpha, orient).ok().map(|r| r.t_min);
            let slow = if fast.is_some() || geom.p() as f64 * (grid.xi_last() - 1.0) < 1.0 {
                dense_t_min(geom, &grid, alpha, orient)
            } else {
                None
            };
            if fast != slow {
                return Err(format!(
                    "N {n} K_d {kd} alpha {alpha} {orient:?}: t_min {fast:?} vs dense {slow:?}"
                ));
            }
            compared += 1;
        }
    }
    check(
        true,
        format!("T_min = 2; {compared} random cases match the dense oracle"),
    )
}

fn criterion_2() -> Outcome {
    let q = quantization_bound(0.1, 2, &ref_grid());
    check((q - 4.3e-4).abs() <= 1e-5, format!("bound = {q:.6e}"))
}

fn criterion_3() -> Outcome {
    let grid = FrequencyGrid::new(100e9, 10e9, 32);
    let data = beam_pattern(-0.025, 0.025, ref_geom(), &grid, -0.1, 0.05, 1e-5).map_err(|e| e.to_string())?;
    let p = &data.predicted;
    let increasing = p.windows(2).all(|w| w[1] > w[0]);
    let ends = (p[0] + 0.05).abs() <= 1e-9 && p[31].abs() <= 1e-9;
    let err = data.max_argmax_error();
    check(
        p.len() == 32 && increasing && ends && err <= 2e-4,
        format!(
            "{} beams, increasing = {increasing}, ends = [{:.3e}, {:.3e}], max argmax error = {err:.3e}",
            p.len(),
            p[0],
            p[31]
        ),
    )
}

fn criterion_4() -> Outcome {
    let mut spec = ref_spec("accuracy", 10, vec![Scheme::Zoom], SweepAxis::SnrDb, vec![10.0]);
    spec.trials = 500;
    let out = run_scenario(&spec).map_err(|e| e.to_string())?;
    if !out.failures.is_empty() {
        return Err(format!("{} failed trials", out.failures.len()));
    }
    // bound 4 zeta alpha_max / (T M), the q_bound column carries zeta alpha_max / (T M)
    let hits = out.tracking.iter().filter(|t| t.err <= 4.0 * t.q_bound).count();
    let per_user = out
        .tracking
        .iter()
        .filter(|t| t.err <= 4.0 * quantization_bound(t.alpha, 2, &ref_grid()))
        .count();
    let total = out.tracking.len();
    let p = hits as f64 / total as f64;
    check(
        p >= 0.99,
        format!(
            "P(err <= 4 zeta alpha_max / (TM)) = {p:.4} over {total} estimates (with alpha_k instead: {:.4})",
            per_user as f64 / total as f64
        ),
    )
}

fn mean(out: &RunOutput, scheme: Scheme, v: f64) -> f64 {
    out.mean_rate(scheme, v).unwrap_or(f64::NAN)
}

fn criterion_5() -> Outcome {
    let spec = ref_spec(
        "near-optimal",
        30,
        vec![Scheme::Optimal, Scheme::Zoom],
        SweepAxis::SnrDb,
        vec![30.0],
    );
    let spec = ScenarioSpec { slots: 3, ..spec };
    let out = run_scenario(&spec).map_err(|e| e.to_string())?;
    if !out.failures.is_empty() {
        return Err(format!("{} failed trials", out.failures.len()));
    }
    let (opt, zoom) = (mean(&out, Scheme::Optimal, 30.0), mean(&out, Scheme::Zoom, 30.0));
    let ratio = zoom / opt;
    check(ratio >= 0.95, format!("zoom {zoom:.3} / optimal {opt:.3} = {ratio:.4}"))
}

/// Smallest T reaching 95 % of `optimal` with no failed trial.
fn smallest_t(scheme: Scheme, optimal: f64, limit: usize) -> Result<Option<(usize, f64)>, String> {
    for t in 1..=limit {
        let mut spec = ref_spec("overhead", 60, vec![scheme], SweepAxis::SnrDb, vec![30.0]);
        spec.slots = t;
        let out = run_scenario(&spec).map_err(|e| e.to_string())?;
        let ratio = mean(&out, scheme, 30.0) / optimal;
        if out.failures.is_empty() && ratio >= 0.95 {
            return Ok(Some((t, ratio)));
        }
    }
    Ok(None)
}

fn criterion_6() -> Outcome {
    let spec = ref_spec("overhead", 60, vec![Scheme::Optimal], SweepAxis::SnrDb, vec![30.0]);
    let optimal = mean(&run_scenario(&spec).map_err(|e| e.to_string())?, Scheme::Optimal, 30.0);
    let zoom = smallest_t(Scheme::Zoom, optimal, 16)?.ok_or("zoom never reaches 95 % up to T = 16")?;
    let typical = smallest_t(Scheme::Typical, optimal, 128)?.ok_or("typical never reaches 95 % up to T = 128")?;
    let share = zoom.0 as f64 / typical.0 as f64;
    check(
        share <= 0.2,
        format!(
            "zoom T = {} ({:.4}), typical T = {} ({:.4}), ratio {share:.3}",
            zoom.0, zoom.1, typical.0, typical.1
        ),
    )
}

/// Per-subcarrier ZF rate minus the closed-form bound for a single LoS user whose
/// data beam points at `theta_hat`.
fn rate_margins(
    theta: f64,
    theta_hat: f64,
    alpha: f64,
    slots: usize,
    grid: &FrequencyGrid,
) -> Result<Vec<f64>, String> {
    let geom = ref_geom();
    let (rho, sigma2) = (1.0, 0.1);
    let ch = synthesize_channel(grid, &[PathParams::los(1.0, theta)], 256).map_err(|e| e.to_string())?;
    let beam = split_free_beamformer(theta_hat, geom, grid).map_err(|e| e.to_string())?;
    let (mut h, mut a, mut d) = (Vec::new(), Vec::new(), Vec::new());
    for m in 1..=grid.len() {
        let f = beam.materialize(grid.freq_at(m));
        let h_m = DMatrix::from_row_slice(1, 256, ch.row_at(m));
        let a_m = DMatrix::from_column_slice(256, 1, f.as_slice());
        d.push(zf_precoder(&(&h_m * &a_m), rho).map_err(|e| e.to_string())?);
        h.push(h_m);
        a.push(a_m);
    }
    let report = sum_rate(&h, &a, &d, sigma2).map_err(|e| e.to_string())?;
    let prm = RateBoundParams {
        theta,
        alpha,
        slots,
        rho,
        sigma2,
        gain_at_carrier: 1.0,
    };
    let bound = rate_lower_bound(geom, grid, &prm);
    Ok(report.per_user_per_subcarrier[0]
        .iter()
        .zip(&bound)
        .map(|(r, b)| r - b)
        .collect())
}

fn criterion_7() -> Outcome {
    let grid = ref_grid();
    let slots = 2;
    let cfg = beamzoom::syscfg::SystemConfigBuilder::from_params(SystemParams {
        users: 1,
        ..ref_system(7)
    })
    .build()
    .unwrap();
    let params = TrackerParams {
        sigma2: 0.0,
        ..TrackerParams::from_config(&cfg, slots)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut tracked, mut ideal) = (Vec::new(), Vec::new());
    for _ in 0..100 {
        let alpha: f64 = rng.random_range(0.0..0.1);
        let theta_i: f64 = rng.random_range(-0.85..0.85);
        let theta = theta_i + rng.random_range(-alpha..=alpha);
        let ch = synthesize_channel(&grid, &[PathParams::los(1.0, theta)], 256).map_err(|e| e.to_string())?;
        let out =
            track_beam_zoom(&params, &grid, &[ch.rows()], &[theta_i], &[alpha], &mut rng).map_err(|e| e.to_string())?;
        tracked.extend(rate_margins(theta, out.theta_hat[0], alpha, slots, &grid)?);
        // candidate closest to the truth, i.e. the detection the bound presumes
        let nearest = out.targets[0]
            .flattened()
            .into_iter()
            .min_by(|a, b| (a - theta).abs().total_cmp(&(b - theta).abs()))
            .unwrap();
        ideal.extend(rate_margins(theta, nearest, alpha, slots, &grid)?);
    }
    let summary = |v: &[f64]| {
        let below = v.iter().filter(|&&x| x < -1e-9).count();
        (below, v.iter().cloned().fold(f64::INFINITY, f64::min))
    };
    let (below, worst) = summary(&tracked);
    let (ideal_below, ideal_worst) = summary(&ideal);
    check(
        below == 0,
        format!(
            "noiseless tracker: {below} of {} entries below the bound, min(rate - bound) = {worst:.3e}; \
             nearest-candidate detection: {ideal_below} below, min = {ideal_worst:.3e}",
            tracked.len()
        ),
    )
}

fn criterion_8() -> Outcome {
    let (geom, grid) = (ref_geom(), ref_grid());
    let mut lines = Vec::new();
    let mut ok = true;
    for theta in [0.15, 0.5] {
        let fixed = frequency_independent_beamformer(theta, geom, grid.carrier_hz());
        let edge = [1, grid.len()]
            .iter()
            .map(|&m| array_gain(&fixed.materialize(grid.freq_at(m)), theta, grid.xi_at(m)))
            .fold(0.0, f64::max);
        ok &= edge < 0.4;
        lines.push(format!("fixed-phase edge gain at {theta} = {edge:.3}"));
    }
    let theta = 0.15;
    let beam = split_free_beamformer(theta, geom, &grid).map_err(|e| e.to_string())?;
    let min_gain = (1..=grid.len())
        .map(|m| array_gain(&beam.materialize(grid.freq_at(m)), theta, grid.xi_at(m)))
        .fold(f64::INFINITY, f64::min);
    ok &= min_gain >= 0.99;
    lines.push(format!("split-free min gain at {theta} = {min_gain:.4}"));
    check(ok, lines.join(", "))
}

fn criterion_9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let grid = ref_grid();
    let geom = ref_geom();
    let mut checked = 0;
    for _ in 0..400 {
        let theta: f64 = rng.random_range(-0.9..0.9);
        let alpha: f64 = rng.random_range(0.001..0.1);
        let Ok(bf) = zoom_beamformer(theta, alpha, geom, &grid) else {
            // outside the single-slot feasible region
            continue;
        };
        checked += 1;
        let m = rng.random_range(1..=grid.len());
        let f = bf.materialize(grid.freq_at(m));
        if f.as_slice().iter().any(|z| (z.norm() - 1.0 / 16.0).abs() > 1e-12) {
            return Err("constant modulus violated".into());
        }
        if (f.norm() - 1.0).abs() > 1e-12 {
            return Err("unit norm violated".into());
        }
        // gain against the Dirichlet product
        let probe: f64 = rng.random_range(-1.0..1.0);
        let xi = grid.xi_at(m);
        let x = bf.phi() - xi * probe;
        let beta = bf.td_phase(xi);
        let closed = (dirichlet_sinc(16, 16.0 * x + beta) * dirichlet_sinc(16, x)).abs();
        if (array_gain(&f, probe, xi) - closed).abs() > 1e-9 {
            return Err("Dirichlet equivalence violated".into());
        }
        // every in-range direction is within the candidate spread
        let slots = rng.random_range(2..6);
        let set = target_directions(theta, alpha, slots, &grid).map_err(|e| e.to_string())?;
        let flat = set.flattened();
        let (lo, hi) = flat
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
        if (lo - (theta - alpha)).abs() > 1e-9 || (hi - (theta + alpha)).abs() > 1e-9 {
            return Err("candidate set does not span the tracking range".into());
        }
    }
    if checked < 100 {
        return Err(format!("only {checked} feasible zoom beamformers drawn"));
    }
    // ZF leaves no inter-user leakage
    for _ in 0..50 {
        let h = DMatrix::from_fn(4, 4, |_, _| {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        let d = zf_precoder(&h, 1.0).map_err(|e| e.to_string())?;
        let e = &h * &d;
        for i in 0..4 {
            for j in 0..4 {
                if i != j && e[(i, j)].norm() > 1e-9 {
                    return Err("ZF leakage".into());
                }
            }
        }
    }
    // identical CSV bytes from two runs
    let mut spec = ref_spec(
        "determinism",
        99,
        vec![Scheme::Zoom, Scheme::Perfect],
        SweepAxis::SnrDb,
        vec![10.0],
    );
    spec.trials = 4;
    spec.frames = 2;
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        let out = run_scenario(&spec).map_err(|e| e.to_string())?;
        write_outputs(&spec, &out, d.path()).map_err(|e| e.to_string())?;
    }
    for f in ["results.csv", "tracking.csv", "failures.csv", "summary.csv"] {
        let a = std::fs::read(dirs[0].path().join(f)).unwrap();
        let b = std::fs::read(dirs[1].path().join(f)).unwrap();
        if a != b {
            return Err(format!("{f} differs between runs"));
        }
    }
    Ok(format!("{checked} beamformers: constant modulus, unit norm, Dirichlet, ZF leakage, candidate span and determinism hold"))
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let criteria: [Criterion; 9] = [
        ("1 overhead bound", criterion_1),
        ("2 quantization bound", criterion_2),
        ("3 beam-zoom geometry", criterion_3),
        ("4 tracking accuracy", criterion_4),
        ("5 near-optimal rate", criterion_5),
        ("6 overhead reduction", criterion_6),
        ("7 rate bound validity", criterion_7),
        ("8 beam split", criterion_8),
        ("9 property suites", criterion_9),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        if !args.is_empty() && !args.iter().any(|a| name.contains(a.as_str())) {
            continue;
        }
        let started = Instant::now();
        let outcome = run();
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {name}: PASS ({detail}) [{secs:.1}s]"),
            Err(detail) => {
                failed += 1;
                println!("criterion {name}: FAIL ({detail}) [{secs:.1}s]");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
