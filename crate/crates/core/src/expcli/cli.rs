//! Command-line front end. `cli_main` returns the process exit code:
//! 0 on success, 1 for invalid input, 2 for runtime failures.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::pattern::{beam_pattern, pattern_chart, write_pattern};
use super::runner::{axis_name, run_scenario, write_outputs, SummaryRow};
use super::scenario::{load_preset, load_scenario, PatternSpec, Preset, ScenarioSpec, SweepAxis, UsersSpec};
use super::svg::{render, Chart, Series};
use crate::analysis::{t_min, t_min_at, FanOrientation};
use crate::beamform::ArrayGeometry;
use crate::channel::{generate_trajectory, synthesize_channel, PathParams, TrajectorySpec};
use crate::error::{Error, Result};
use crate::syscfg::{FrequencyGrid, SystemConfigBuilder};
use crate::tracking::{channel_rows, track_beam_zoom, TrackerParams};

/// Environment variable that sets the output directory when `--out` is absent.
pub const OUT_ENV: &str = "BEAMZOOM_OUT";

#[derive(Debug, Parser)]
#[command(
    name = "beamzoom",
    version,
    about = "Beam-zoom tracking experiments for wideband THz arrays"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalOpts,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalOpts {
    /// Output directory (overrides the scenario's `outputs`).
    #[arg(long, global = true, env = OUT_ENV)]
    out: Option<PathBuf>,
    /// Seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Also write SVG charts.
    #[arg(long, global = true)]
    svg: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Smallest training overhead T for the zoom tracker.
    Tmin {
        /// Preset whose system parameters are used.
        #[arg(long, default_value = "fig11")]
        preset: String,
        /// Direction range alpha (defaults to the preset's alpha_max, else 0.1).
        #[arg(long)]
        alpha: Option<f64>,
        /// Keep every fan ascending instead of mirroring it for theta > 0.
        #[arg(long)]
        fixed_orientation: bool,
        /// Bound for a single previous direction instead of all of [-1, 1].
        #[arg(long, allow_hyphen_values = true)]
        theta_i: Option<f64>,
    },
    /// Beam-pattern CSV/SVG of one zoomed beamformer.
    Pattern(PatternArgs),
    /// One tracking round for a handful of users.
    Track(TrackArgs),
    /// Run a scenario file.
    Sweep { file: PathBuf },
    /// Run a bundled preset (fig6, fig9 ... fig16).
    Fig { id: String },
}

#[derive(Debug, Args)]
struct PatternArgs {
    #[arg(long, allow_hyphen_values = true, default_value_t = -0.025)]
    theta: f64,
    #[arg(long, default_value_t = 0.025)]
    alpha: f64,
    /// Number of subcarriers.
    #[arg(long = "M", default_value_t = 32)]
    m: usize,
    #[arg(long, default_value_t = 256)]
    antennas: usize,
    #[arg(long, default_value_t = 16)]
    delays_per_chain: usize,
    #[arg(long, default_value_t = 100e9)]
    carrier_hz: f64,
    #[arg(long, default_value_t = 10e9)]
    bandwidth_hz: f64,
    /// Probe grid; defaults to the zoom range widened by 2 alpha on each side.
    #[arg(long, allow_hyphen_values = true)]
    from: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    to: Option<f64>,
    #[arg(long, default_value_t = 1e-4)]
    step: f64,
}

#[derive(Debug, Args)]
struct TrackArgs {
    /// Preset supplying system parameters and users.
    #[arg(long, default_value = "fig9")]
    preset: String,
    #[arg(long)]
    slots: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    snr_db: Option<f64>,
    /// Search the whole range [-1, 1] from theta_i = 0 with the smallest feasible T.
    #[arg(long)]
    rediscover: bool,
}

/// Parses `args` (including the program name), runs the command and returns the exit code.
pub fn cli_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                1
            } else {
                2
            }
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    match &cli.command {
        Command::Tmin {
            preset,
            alpha,
            fixed_orientation,
            theta_i,
        } => cmd_tmin(preset, *alpha, *fixed_orientation, *theta_i),
        Command::Pattern(a) => cmd_pattern(a, g),
        Command::Track(a) => cmd_track(a, g),
        Command::Sweep { file } => {
            let spec = load_scenario(file)?;
            run_and_write(spec, g)
        }
        Command::Fig { id } => match load_preset(id)? {
            Preset::Scenario(spec) => run_and_write(spec, g),
            Preset::Pattern(spec) => run_pattern_preset(&spec, g),
        },
    }
}

fn preset_system(name: &str) -> Result<(crate::syscfg::SystemParams, Option<f64>)> {
    Ok(match load_preset(name)? {
        Preset::Scenario(s) => {
            let alpha = match s.users {
                UsersSpec::RandomDrift { alpha_max, .. } => Some(alpha_max),
                UsersSpec::Explicit { ref alpha, .. } => alpha.iter().cloned().reduce(f64::max),
            };
            (s.system, alpha)
        }
        Preset::Pattern(p) => (p.system, Some(p.pattern.alpha)),
    })
}

fn cmd_tmin(preset: &str, alpha: Option<f64>, fixed: bool, theta_i: Option<f64>) -> Result<()> {
    let (system, preset_alpha) = preset_system(preset)?;
    let cfg = SystemConfigBuilder::from_params(system).build()?;
    let geom = ArrayGeometry::from_config(&cfg);
    let grid = cfg.frequency_grid();
    let alpha = alpha.or(preset_alpha).unwrap_or(0.1);
    let orientation = if fixed {
        FanOrientation::Ascending
    } else {
        FanOrientation::FollowSign
    };
    let mut out = std::io::stdout().lock();
    if let Some(th) = theta_i {
        let t = t_min_at(geom, &grid, th, alpha, orientation)?;
        writeln!(out, "T_min = {t}")?;
        writeln!(out, "theta_i = {th}, alpha = {alpha}, orientation = {orientation:?}")?;
        return Ok(());
    }
    let report = t_min(geom, &grid, alpha, orientation)?;
    let (t, m, th) = report.binding;
    writeln!(out, "T_min = {}", report.t_min)?;
    writeln!(
        out,
        "alpha = {alpha}, orientation = {orientation:?}, N = {}, M = {}, K_d = {}",
        cfg.antennas(),
        cfg.subcarriers(),
        cfg.delays_per_chain()
    )?;
    writeln!(
        out,
        "binding constraint: slot {t}, subcarrier {m}, theta = {th}, |beta| = {:.6}",
        report.binding_ratio
    )?;
    Ok(())
}

fn out_dir(g: &GlobalOpts, default: &Path) -> PathBuf {
    g.out.clone().unwrap_or_else(|| default.to_path_buf())
}

fn report_pattern(data: &super::pattern::PatternData, dir: &Path, svg: bool) -> Result<()> {
    write_pattern(data, dir)?;
    if svg {
        std::fs::write(dir.join("pattern.svg"), render(&pattern_chart(data)))?;
    }
    let (lo, hi) = data.coverage();
    let mut out = std::io::stdout().lock();
    writeln!(out, "beams = {}", data.predicted.len())?;
    writeln!(out, "coverage = [{lo:.9}, {hi:.9}]")?;
    writeln!(out, "max |argmax - predicted| = {:.3e}", data.max_argmax_error())?;
    writeln!(out, "wrote {}", dir.display())?;
    Ok(())
}

fn cmd_pattern(a: &PatternArgs, g: &GlobalOpts) -> Result<()> {
    let geom = ArrayGeometry::new(a.antennas, a.delays_per_chain)?;
    SystemConfigBuilder::new()
        .antennas(a.antennas)
        .delays_per_chain(a.delays_per_chain)
        .subcarriers(a.m)
        .carrier_hz(a.carrier_hz)
        .bandwidth_hz(a.bandwidth_hz)
        .build()?;
    let freq = FrequencyGrid::new(a.carrier_hz, a.bandwidth_hz, a.m);
    let from = a.from.unwrap_or(a.theta - 3.0 * a.alpha);
    let to = a.to.unwrap_or(a.theta + 3.0 * a.alpha);
    let data = beam_pattern(a.theta, a.alpha, geom, &freq, from, to, a.step)?;
    report_pattern(&data, &out_dir(g, Path::new("out/pattern")), g.svg)
}

fn run_pattern_preset(spec: &PatternSpec, g: &GlobalOpts) -> Result<()> {
    let cfg = SystemConfigBuilder::from_params(spec.system.clone()).build()?;
    let p = &spec.pattern;
    let data = beam_pattern(
        p.theta,
        p.alpha,
        ArrayGeometry::from_config(&cfg),
        &cfg.frequency_grid(),
        p.from,
        p.to,
        p.step,
    )?;
    report_pattern(&data, &out_dir(g, &spec.outputs.join(&spec.id)), g.svg)
}

fn cmd_track(a: &TrackArgs, g: &GlobalOpts) -> Result<()> {
    let spec = super::scenario::load_preset_scenario(&a.preset)?;
    let mut b = SystemConfigBuilder::from_params(spec.system.clone());
    if let Some(seed) = g.seed {
        b = b.seed(seed);
    }
    if let Some(snr) = a.snr_db.or(spec.snr_db) {
        b = b.snr_db(snr);
    }
    let cfg = b.build()?;
    let geom = ArrayGeometry::from_config(&cfg);
    let grid = cfg.frequency_grid();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed());
    let k = cfg.users();
    let (theta_i, alpha, truth) = if a.rediscover {
        let theta: Vec<f64> = crate::channel::draw_separated_directions(k, 4.0 / cfg.antennas() as f64, &mut rng);
        (vec![0.0; k], vec![1.0; k], theta)
    } else {
        let traj_spec = match &spec.users {
            UsersSpec::Explicit {
                theta0,
                alpha,
                segments,
            } => TrajectorySpec::Explicit {
                theta0: theta0.clone(),
                alpha: alpha.clone(),
                segments: segments.clone(),
                frames: 1,
            },
            UsersSpec::RandomDrift { alpha_max, theta0 } => TrajectorySpec::RandomDrift {
                theta0: theta0.clone().unwrap_or_else(|| {
                    crate::channel::draw_separated_directions(k, 4.0 / cfg.antennas() as f64, &mut rng)
                }),
                alpha_max: *alpha_max,
                frames: 1,
            },
        };
        let traj = generate_trajectory(&traj_spec, &mut rng)?;
        (traj.at(0).to_vec(), traj.alpha().to_vec(), traj.at(1).to_vec())
    };
    let slots = match (a.rediscover, a.slots) {
        (_, Some(t)) => t,
        (true, None) => t_min_at(geom, &grid, 0.0, 1.0, FanOrientation::FollowSign)?,
        (false, None) => spec.slots,
    };
    let channels = truth
        .iter()
        .map(|&t| synthesize_channel(&grid, &[PathParams::los(1.0, t)], cfg.antennas()))
        .collect::<Result<Vec<_>>>()?;
    let params = TrackerParams::from_config(&cfg, slots);
    let outcome = track_beam_zoom(&params, &grid, &channel_rows(&channels), &theta_i, &alpha, &mut rng)?;
    let mut out = std::io::stdout().lock();
    writeln!(out, "slots = {slots}, snr_db = {}", cfg.snr_db())?;
    writeln!(out, "user,theta_i,alpha,theta,theta_hat,err,win_slot,win_subcarrier")?;
    for u in 0..k {
        let w = outcome.winners[u];
        writeln!(
            out,
            "{},{},{},{},{},{:.3e},{},{}",
            u + 1,
            theta_i[u],
            alpha[u],
            truth[u],
            outcome.theta_hat[u],
            (outcome.theta_hat[u] - truth[u]).abs(),
            w.slot,
            w.subcarrier
        )?;
    }
    Ok(())
}

fn run_and_write(mut spec: ScenarioSpec, g: &GlobalOpts) -> Result<()> {
    if let Some(seed) = g.seed {
        spec.system.seed = seed;
    }
    let dir = g.out.clone().unwrap_or_else(|| spec.outputs.join(&spec.id));
    let out = run_scenario(&spec)?;
    let summary = write_outputs(&spec, &out, &dir)?;
    if g.svg {
        write_charts(&spec, &out, &summary, &dir)?;
    }
    let mut o = std::io::stdout().lock();
    writeln!(
        o,
        "{}: {} result rows, {} tracking rows, {} failures -> {}",
        spec.id,
        out.results.len(),
        out.tracking.len(),
        out.failures.len(),
        dir.display()
    )?;
    writeln!(o, "{},scheme,mean_sum_rate", axis_name(spec.sweep.axis))?;
    for s in &summary {
        writeln!(o, "{},{},{:.4}", s.sweep_value, s.scheme.name(), s.mean_sum_rate)?;
    }
    if out.results.is_empty() {
        return Err(Error::Scenario {
            context: spec.id.clone(),
            reason: "every trial failed; see failures.csv".into(),
        });
    }
    Ok(())
}

fn write_charts(spec: &ScenarioSpec, out: &super::runner::RunOutput, summary: &[SummaryRow], dir: &Path) -> Result<()> {
    let x_label = match spec.sweep.axis {
        SweepAxis::Slots => "training overhead T",
        SweepAxis::SnrDb => "SNR (dB)",
        SweepAxis::Frames => "frame",
    };
    let mut rate_series: Vec<Series> = spec
        .schemes
        .iter()
        .map(|s| Series {
            name: s.name().into(),
            points: summary
                .iter()
                .filter(|r| r.scheme == *s)
                .map(|r| (r.sweep_value, r.mean_sum_rate))
                .collect(),
        })
        .collect();
    let bound: Vec<(f64, f64)> = summary
        .iter()
        .filter_map(|r| r.mean_bound.map(|b| (r.sweep_value, b)))
        .collect();
    if !bound.is_empty() {
        rate_series.push(Series {
            name: "lower bound".into(),
            points: bound,
        });
    }
    let rate = Chart {
        title: format!("{}: achievable sum rate", spec.id),
        x_label: x_label.into(),
        y_label: "sum rate (bit/s/Hz)".into(),
        series: rate_series,
    };
    std::fs::write(dir.join("sum_rate.svg"), render(&rate))?;

    let tracked: Vec<&SummaryRow> = summary.iter().filter(|r| r.p_err_le.is_some()).collect();
    if !tracked.is_empty() && spec.sweep.axis != SweepAxis::Frames {
        let series = ["1", "2", "4"]
            .iter()
            .enumerate()
            .flat_map(|(i, c)| spec.schemes.iter().filter(|s| s.is_tracker()).map(move |s| (i, c, *s)))
            .map(|(i, c, s)| Series {
                name: format!("{} err <= {c}q", s.name()),
                points: tracked
                    .iter()
                    .filter(|r| r.scheme == s)
                    .map(|r| (r.sweep_value, r.p_err_le.map_or(f64::NAN, |p| p[i])))
                    .collect(),
            })
            .collect();
        let chart = Chart {
            title: format!("{}: tracking accuracy", spec.id),
            x_label: x_label.into(),
            y_label: "probability".into(),
            series,
        };
        std::fs::write(dir.join("accuracy.svg"), render(&chart))?;
    }

    if spec.sweep.axis == SweepAxis::Frames {
        let users = spec.system.users;
        let mut series = Vec::new();
        for u in 1..=users {
            let rows: Vec<_> = out
                .tracking
                .iter()
                .filter(|t| t.user == u && t.trial == 0 && t.stage == "bs")
                .collect();
            series.push(Series {
                name: format!("user {u} true"),
                points: rows.iter().map(|t| (t.frame as f64, t.theta)).collect(),
            });
            series.push(Series {
                name: format!("user {u} tracked"),
                points: rows.iter().map(|t| (t.frame as f64, t.theta_hat)).collect(),
            });
        }
        let chart = Chart {
            title: format!("{}: tracked directions", spec.id),
            x_label: "frame".into(),
            y_label: "physical direction".into(),
            series,
        };
        std::fs::write(dir.join("trajectory.svg"), render(&chart))?;
    }
    Ok(())
}
