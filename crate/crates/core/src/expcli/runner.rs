//! Monte Carlo orchestration: trajectories, tracking, data-phase precoding and rates.

use std::fs;
use std::path::Path;
use std::time::Instant;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::scenario::{PrecoderKind, ScenarioSpec, Scheme, SweepAxis, UserSideSpec, UsersSpec};
use crate::analysis::{quantization_bound, rate_lower_bound, sum_rate_effective, RateBoundParams};
use crate::beamform::{frequency_independent_beamformer, split_free_beamformer, AnalogBeamformer, ArrayGeometry};
use crate::beamform::{fully_digital_mmse, mmse_precoder, zf_precoder};
use crate::channel::{
    array_response, draw_separated_directions, generate_trajectory, synthesize_channel, LosMimoChannel, PathParams,
    Trajectory, TrajectorySpec,
};
use crate::error::{Error, Result};
use crate::syscfg::{FrequencyGrid, SystemConfig};
use crate::tracking::{
    track_beam_zoom, track_two_stage, track_typical, StageTracker, TrackerParams, TrackingOutcome, TwoStageParams,
};

/// Bumped whenever a CSV column is added, removed or reinterpreted.
pub const SCHEMA_VERSION: u32 = 1;

pub const RESULTS_HEADER: [&str; 16] = [
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
    "elapsed_ms",
];

pub const TRACKING_HEADER: [&str; 17] = [
    "schema_version",
    "scenario",
    "trial",
    "frame",
    "sweep_value",
    "scheme",
    "stage",
    "user",
    "theta",
    "theta_hat",
    "err",
    "alpha",
    "q_bound",
    "win_slot",
    "win_subcarrier",
    "max_power",
    "out_of_range_risk",
];

pub const FAILURES_HEADER: [&str; 8] = [
    "schema_version",
    "scenario",
    "seed",
    "trial",
    "frame",
    "sweep_value",
    "scheme",
    "error",
];

pub const SUMMARY_HEADER: [&str; 11] = [
    "schema_version",
    "scenario",
    "axis",
    "sweep_value",
    "scheme",
    "rows",
    "mean_sum_rate",
    "mean_bound",
    "p_err_le_1q",
    "p_err_le_2q",
    "p_err_le_4q",
];

/// Trajectory draws rejected for leaving [-1, 1] before a trial is given up.
const MAX_TRAJECTORY_ATTEMPTS: usize = 1000;

/// One data-transmission evaluation: (trial, frame, sweep value, scheme).
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub scenario: String,
    pub trial: usize,
    pub frame: usize,
    pub axis: SweepAxis,
    pub sweep_value: f64,
    pub scheme: Scheme,
    pub slots: usize,
    pub snr_db: f64,
    pub theta: Vec<f64>,
    /// Directions the data beams were built from (true ones for genie schemes).
    pub theta_hat: Vec<f64>,
    /// Sum over users and subcarriers divided by M.
    pub sum_rate: f64,
    pub raw_sum_rate: f64,
    /// Closed-form rate lower bound (zoom tracking, single-antenna users).
    pub bound: Option<f64>,
    /// max |A^H A - I| over subcarriers (0 for fully-digital).
    pub gram_err: f64,
    pub elapsed_ms: f64,
}

/// Per-user tracking detail for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackingRow {
    pub scenario: String,
    pub trial: usize,
    pub frame: usize,
    pub sweep_value: f64,
    pub scheme: Scheme,
    /// "bs" or "ue".
    pub stage: &'static str,
    pub user: usize,
    pub theta: f64,
    pub theta_hat: f64,
    pub err: f64,
    /// Range handed to the tracker.
    pub alpha: f64,
    /// zeta alpha_ref / (T M), alpha_ref = alpha_max for random drift.
    pub q_bound: f64,
    pub win_slot: usize,
    pub win_subcarrier: usize,
    pub max_power: f64,
    pub out_of_range_risk: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FailureRow {
    pub scenario: String,
    pub seed: u64,
    pub trial: usize,
    pub frame: usize,
    pub sweep_value: f64,
    /// Scheme name, or "trajectory" when no valid trajectory was drawn.
    pub scheme: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub scenario: String,
    pub axis: SweepAxis,
    pub sweep_value: f64,
    pub scheme: Scheme,
    pub rows: usize,
    pub mean_sum_rate: f64,
    pub mean_bound: Option<f64>,
    /// Fractions of BS-side estimates within 1, 2 and 4 quantization bounds.
    pub p_err_le: Option<[f64; 3]>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunOutput {
    pub results: Vec<ResultRow>,
    pub tracking: Vec<TrackingRow>,
    pub failures: Vec<FailureRow>,
}

impl RunOutput {
    fn extend(&mut self, other: RunOutput) {
        self.results.extend(other.results);
        self.tracking.extend(other.tracking);
        self.failures.extend(other.failures);
    }

    /// Mean sum rate per (sweep value, scheme), in first-seen order.
    pub fn mean_rate(&self, scheme: Scheme, sweep_value: f64) -> Option<f64> {
        let rates: Vec<f64> = self
            .results
            .iter()
            .filter(|r| r.scheme == scheme && r.sweep_value == sweep_value)
            .map(|r| r.sum_rate)
            .collect();
        (!rates.is_empty()).then(|| rates.iter().sum::<f64>() / rates.len() as f64)
    }
}

/// Settings for one point on the sweep axis.
#[derive(Debug, Clone)]
struct SweepPoint {
    index: usize,
    /// None on the frames axis, where each row carries its frame number.
    value: Option<f64>,
    cfg: SystemConfig,
    slots: usize,
}

fn sweep_points(spec: &ScenarioSpec, base: &SystemConfig) -> Result<Vec<SweepPoint>> {
    match spec.sweep.axis {
        SweepAxis::Frames => Ok(vec![SweepPoint {
            index: 0,
            value: None,
            cfg: base.clone(),
            slots: spec.slots,
        }]),
        SweepAxis::Slots => Ok(spec
            .sweep
            .values
            .iter()
            .enumerate()
            .map(|(index, &v)| SweepPoint {
                index,
                value: Some(v),
                cfg: base.clone(),
                slots: v as usize,
            })
            .collect()),
        SweepAxis::SnrDb => spec
            .sweep
            .values
            .iter()
            .enumerate()
            .map(|(index, &v)| {
                Ok(SweepPoint {
                    index,
                    value: Some(v),
                    cfg: base.with_snr_db(v)?,
                    slots: spec.slots,
                })
            })
            .collect(),
    }
}

/// Per-trial trajectory stream; identical for every sweep point and scheme so
/// that curves are compared on common random numbers.
fn trajectory_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    rng
}

/// Measurement-noise stream for (sweep point, scheme, trial).
fn noise_rng(seed: u64, point: usize, scheme: usize, trial: usize) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(point as u64).to_le_bytes());
    key[16..24].copy_from_slice(&(scheme as u64).to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(trial as u64);
    rng
}

/// BS-side trajectory plus the user-side one for multi-antenna users.
struct TrialPaths {
    bs: Trajectory,
    ue: Option<Trajectory>,
}

fn draw_paths(spec: &ScenarioSpec, cfg: &SystemConfig, rng: &mut ChaCha8Rng) -> Result<TrialPaths> {
    let k = cfg.users();
    let frames = spec.frames;
    let mut last_err = None;
    for _ in 0..MAX_TRAJECTORY_ATTEMPTS {
        let bs_spec = match &spec.users {
            UsersSpec::RandomDrift { alpha_max, theta0 } => TrajectorySpec::RandomDrift {
                theta0: theta0
                    .clone()
                    .unwrap_or_else(|| draw_separated_directions(k, 4.0 / cfg.antennas() as f64, rng)),
                alpha_max: *alpha_max,
                frames,
            },
            UsersSpec::Explicit {
                theta0,
                alpha,
                segments,
            } => TrajectorySpec::Explicit {
                theta0: theta0.clone(),
                alpha: alpha.clone(),
                segments: segments.clone(),
                frames,
            },
        };
        let bs = match generate_trajectory(&bs_spec, rng) {
            Ok(t) => t,
            Err(e @ Error::TrajectoryOutOfRange { .. }) if matches!(spec.users, UsersSpec::RandomDrift { .. }) => {
                last_err = Some(e);
                continue;
            }
            Err(e) => return Err(e),
        };
        let ue = match &spec.user_side {
            None => None,
            Some(side) => {
                let theta0 = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
                let ue_spec = TrajectorySpec::RandomDrift {
                    theta0,
                    alpha_max: side.alpha,
                    frames,
                };
                match generate_trajectory(&ue_spec, rng) {
                    Ok(t) => Some(t),
                    Err(e @ Error::TrajectoryOutOfRange { .. }) => {
                        last_err = Some(e);
                        continue;
                    }
                    Err(e) => return Err(e),
                }
            }
        };
        return Ok(TrialPaths { bs, ue });
    }
    Err(last_err.unwrap_or_else(|| Error::validation("users", "no trajectory drawn")))
}

/// Everything shared by the trials of one sweep point.
struct Ctx<'a> {
    spec: &'a ScenarioSpec,
    point: &'a SweepPoint,
    grid: FrequencyGrid,
    geom: ArrayGeometry,
    ue_geom: Option<ArrayGeometry>,
}

impl Ctx<'_> {
    fn sweep_value(&self, frame: usize) -> f64 {
        self.point.value.unwrap_or(frame as f64)
    }

    fn tracker(&self) -> TrackerParams {
        TrackerParams::from_config(&self.point.cfg, self.point.slots)
    }

    fn alpha_ref(&self, alpha_k: f64) -> f64 {
        match self.spec.users {
            UsersSpec::RandomDrift { alpha_max, .. } => alpha_max,
            UsersSpec::Explicit { .. } => alpha_k,
        }
    }
}

/// Estimate chain of one tracking scheme across frames.
#[derive(Clone)]
struct Chain {
    bs: Vec<f64>,
    ue: Vec<f64>,
}

fn los_channels(ctx: &Ctx, theta: &[f64]) -> Result<Vec<Vec<Vec<Complex64>>>> {
    theta
        .iter()
        .map(|&t| {
            synthesize_channel(&ctx.grid, &[PathParams::los(1.0, t)], ctx.geom.antennas).map(|c| c.rows().to_vec())
        })
        .collect()
}

fn mimo_channels(ctx: &Ctx, theta_bs: &[f64], theta_ue: &[f64], ue_antennas: usize) -> Vec<LosMimoChannel> {
    theta_bs
        .iter()
        .zip(theta_ue)
        .map(|(&b, &u)| LosMimoChannel {
            gain: 1.0,
            theta_bs: b,
            theta_ue: u,
            bs_antennas: ctx.geom.antennas,
            ue_antennas,
        })
        .collect()
}

/// K x N channel matrices per subcarrier from per-user rows `[k][m]`.
fn stack_rows(rows: &[Vec<Vec<Complex64>>], m_count: usize, n: usize) -> Vec<DMatrix<Complex64>> {
    (0..m_count)
        .map(|m| DMatrix::from_fn(rows.len(), n, |k, i| rows[k][m][i]))
        .collect()
}

/// Rows after user-side combining; `combiners[k][m]` is the N_r-vector of user k.
fn combined_rows(
    ctx: &Ctx,
    channels: &[LosMimoChannel],
    combiners: &[Vec<Vec<Complex64>>],
) -> Vec<Vec<Vec<Complex64>>> {
    channels
        .iter()
        .zip(combiners)
        .map(|(ch, w)| {
            (1..=ctx.grid.len())
                .map(|m| ch.combined_row(&ctx.grid, m, &w[m - 1]))
                .collect()
        })
        .collect()
}

fn beamformer_columns(ctx: &Ctx, beams: &[AnalogBeamformer]) -> Vec<DMatrix<Complex64>> {
    (1..=ctx.grid.len())
        .map(|m| {
            let f = ctx.grid.freq_at(m);
            let cols: Vec<_> = beams.iter().map(|b| b.materialize(f).0).collect();
            DMatrix::from_fn(ctx.geom.antennas, beams.len(), |i, k| cols[k][i])
        })
        .collect()
}

fn gram_error(a: &[DMatrix<Complex64>]) -> f64 {
    a.iter()
        .map(|a| {
            let g = a.adjoint() * a;
            let k = g.nrows();
            let mut worst: f64 = 0.0;
            for i in 0..k {
                for j in 0..k {
                    let target = if i == j { 1.0 } else { 0.0 };
                    worst = worst.max((g[(i, j)] - Complex64::from(target)).norm());
                }
            }
            worst
        })
        .fold(0.0, f64::max)
}

/// Hybrid precoding with analog beams `beams`; returns (sum rate, raw sum, gram error).
fn hybrid_rate(ctx: &Ctx, h: &[DMatrix<Complex64>], beams: &[AnalogBeamformer]) -> Result<(f64, f64, f64)> {
    let cfg = &ctx.point.cfg;
    let a = beamformer_columns(ctx, beams);
    let mut eff = Vec::with_capacity(h.len());
    for (h_m, a_m) in h.iter().zip(&a) {
        let h_eq = h_m * a_m;
        let d = match ctx.spec.precoder {
            PrecoderKind::Zf => zf_precoder(&h_eq, cfg.rho())?,
            PrecoderKind::Mmse => mmse_precoder(&h_eq, cfg.rho(), cfg.sigma2())?,
        };
        eff.push(h_eq * d);
    }
    let report = sum_rate_effective(&eff, cfg.sigma2());
    Ok((report.sum_rate, report.raw_sum, gram_error(&a)))
}

fn digital_rate(ctx: &Ctx, h: &[DMatrix<Complex64>]) -> Result<(f64, f64, f64)> {
    let cfg = &ctx.point.cfg;
    let eff = h
        .iter()
        .map(|h_m| fully_digital_mmse(h_m, cfg.rho(), cfg.sigma2()).map(|w| h_m * w))
        .collect::<Result<Vec<_>>>()?;
    let report = sum_rate_effective(&eff, cfg.sigma2());
    Ok((report.sum_rate, report.raw_sum, 0.0))
}

fn split_free_all(ctx: &Ctx, theta: &[f64]) -> Result<Vec<AnalogBeamformer>> {
    theta
        .iter()
        .map(|&t| split_free_beamformer(t, ctx.geom, &ctx.grid))
        .collect()
}

/// Per-subcarrier user combiners from one beamformer per user.
fn combiners_from(ctx: &Ctx, beams: &[AnalogBeamformer]) -> Vec<Vec<Vec<Complex64>>> {
    beams
        .iter()
        .map(|b| {
            (1..=ctx.grid.len())
                .map(|m| b.materialize(ctx.grid.freq_at(m)).0)
                .collect()
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn tracking_rows(
    ctx: &Ctx,
    trial: usize,
    frame: usize,
    scheme: Scheme,
    stage: &'static str,
    outcome: &TrackingOutcome,
    theta: &[f64],
    alpha: &[f64],
    user_offset: usize,
) -> Vec<TrackingRow> {
    let slots = outcome.overhead_used;
    (0..outcome.theta_hat.len())
        .map(|k| {
            let w = outcome.winners[k];
            let alpha_ref = if stage == "bs" {
                ctx.alpha_ref(alpha[k])
            } else {
                alpha[k]
            };
            TrackingRow {
                scenario: ctx.spec.id.clone(),
                trial,
                frame,
                sweep_value: ctx.sweep_value(frame),
                scheme,
                stage,
                user: user_offset + k + 1,
                theta: theta[k],
                theta_hat: outcome.theta_hat[k],
                err: (outcome.theta_hat[k] - theta[k]).abs(),
                alpha: alpha[k],
                q_bound: quantization_bound(alpha_ref, slots, &ctx.grid),
                win_slot: w.slot,
                win_subcarrier: w.subcarrier,
                max_power: outcome.power_table[k][w.slot - 1][w.subcarrier - 1],
                out_of_range_risk: outcome.out_of_range_risk[k],
            }
        })
        .collect()
}

/// Runs one frame of one scheme; updates the estimate chain of tracking schemes.
#[allow(clippy::too_many_arguments)]
fn run_frame(
    ctx: &Ctx,
    scheme: Scheme,
    paths: &TrialPaths,
    frame: usize,
    trial: usize,
    chain: &mut Chain,
    rng: &mut ChaCha8Rng,
    out: &mut RunOutput,
) -> Result<()> {
    let started = Instant::now();
    let theta = paths.bs.at(frame);
    let alpha = paths.bs.alpha();
    let cfg = &ctx.point.cfg;
    let n = ctx.geom.antennas;
    let m_count = ctx.grid.len();
    let mut bound = None;

    let (rate, used) = match (&ctx.spec.user_side, &paths.ue, ctx.ue_geom) {
        (None, _, _) => {
            let rows = los_channels(ctx, theta)?;
            let h = stack_rows(&rows, m_count, n);
            match scheme {
                Scheme::Optimal => (digital_rate(ctx, &h)?, theta.to_vec()),
                Scheme::Perfect => (hybrid_rate(ctx, &h, &split_free_all(ctx, theta)?)?, theta.to_vec()),
                Scheme::Hybrid => {
                    let beams: Vec<_> = theta
                        .iter()
                        .map(|&t| frequency_independent_beamformer(t, ctx.geom, ctx.grid.carrier_hz()))
                        .collect();
                    (hybrid_rate(ctx, &h, &beams)?, theta.to_vec())
                }
                Scheme::Zoom | Scheme::Typical => {
                    let borrowed: Vec<&[Vec<Complex64>]> = rows.iter().map(Vec::as_slice).collect();
                    let params = ctx.tracker();
                    let outcome = if scheme == Scheme::Zoom {
                        track_beam_zoom(&params, &ctx.grid, &borrowed, &chain.bs, alpha, rng)?
                    } else {
                        track_typical(&params, &ctx.grid, &borrowed, &chain.bs, alpha, rng)?
                    };
                    out.tracking.extend(tracking_rows(
                        ctx, trial, frame, scheme, "bs", &outcome, theta, alpha, 0,
                    ));
                    chain.bs = outcome.theta_hat.clone();
                    if scheme == Scheme::Zoom {
                        let total: f64 = theta
                            .iter()
                            .zip(alpha)
                            .map(|(&t, &a)| {
                                let prm = RateBoundParams {
                                    theta: t,
                                    alpha: a,
                                    slots: ctx.point.slots,
                                    rho: cfg.rho(),
                                    sigma2: cfg.sigma2(),
                                    gain_at_carrier: 1.0,
                                };
                                let per_m = rate_lower_bound(ctx.geom, &ctx.grid, &prm);
                                per_m.iter().sum::<f64>() / per_m.len() as f64
                            })
                            .sum();
                        bound = Some(total);
                    }
                    (
                        hybrid_rate(ctx, &h, &split_free_all(ctx, &chain.bs)?)?,
                        chain.bs.clone(),
                    )
                }
                Scheme::TwoStage => unreachable!("rejected by scenario validation"),
            }
        }
        (Some(side), Some(ue_path), Some(ue_geom)) => {
            let theta_ue = ue_path.at(frame);
            let channels = mimo_channels(ctx, theta, theta_ue, side.antennas);
            let ue_split_free = |dirs: &[f64]| -> Result<Vec<AnalogBeamformer>> {
                dirs.iter()
                    .map(|&t| split_free_beamformer(t, ue_geom, &ctx.grid))
                    .collect()
            };
            match scheme {
                Scheme::Optimal => {
                    let w: Vec<Vec<Vec<Complex64>>> = theta_ue
                        .iter()
                        .map(|&t| {
                            (1..=m_count)
                                .map(|m| array_response(side.antennas, ctx.grid.xi_at(m) * t))
                                .collect()
                        })
                        .collect();
                    let h = stack_rows(&combined_rows(ctx, &channels, &w), m_count, n);
                    (digital_rate(ctx, &h)?, theta.to_vec())
                }
                Scheme::Perfect => {
                    let w = combiners_from(ctx, &ue_split_free(theta_ue)?);
                    let h = stack_rows(&combined_rows(ctx, &channels, &w), m_count, n);
                    (hybrid_rate(ctx, &h, &split_free_all(ctx, theta)?)?, theta.to_vec())
                }
                Scheme::Hybrid => {
                    let fc = ctx.grid.carrier_hz();
                    let ue_beams: Vec<_> = theta_ue
                        .iter()
                        .map(|&t| frequency_independent_beamformer(t, ue_geom, fc))
                        .collect();
                    let w = combiners_from(ctx, &ue_beams);
                    let h = stack_rows(&combined_rows(ctx, &channels, &w), m_count, n);
                    let beams: Vec<_> = theta
                        .iter()
                        .map(|&t| frequency_independent_beamformer(t, ctx.geom, fc))
                        .collect();
                    (hybrid_rate(ctx, &h, &beams)?, theta.to_vec())
                }
                Scheme::TwoStage | Scheme::Typical => {
                    let tracker = if scheme == Scheme::TwoStage {
                        StageTracker::Zoom
                    } else {
                        StageTracker::Typical
                    };
                    let params = TwoStageParams {
                        bs: ctx.tracker(),
                        ue_geom,
                        ue_slots: side.slots,
                        tracker,
                    };
                    let alpha_ue = vec![side.alpha; theta.len()];
                    let outcome = track_two_stage(
                        &params, &ctx.grid, &channels, &chain.bs, &chain.ue, alpha, &alpha_ue, rng,
                    )?;
                    out.tracking.extend(tracking_rows(
                        ctx,
                        trial,
                        frame,
                        scheme,
                        "bs",
                        &outcome.bs,
                        theta,
                        alpha,
                        0,
                    ));
                    for (k, ue_outcome) in outcome.ue.iter().enumerate() {
                        out.tracking.extend(tracking_rows(
                            ctx,
                            trial,
                            frame,
                            scheme,
                            "ue",
                            ue_outcome,
                            &theta_ue[k..=k],
                            &alpha_ue[k..=k],
                            k,
                        ));
                    }
                    chain.bs = outcome.theta_hat_bs;
                    chain.ue = outcome.theta_hat_ue;
                    let w = combiners_from(ctx, &ue_split_free(&chain.ue)?);
                    let h = stack_rows(&combined_rows(ctx, &channels, &w), m_count, n);
                    (
                        hybrid_rate(ctx, &h, &split_free_all(ctx, &chain.bs)?)?,
                        chain.bs.clone(),
                    )
                }
                Scheme::Zoom => unreachable!("rejected by scenario validation"),
            }
        }
        _ => unreachable!("user-side trajectory exists exactly when user_side is set"),
    };

    let (sum_rate, raw_sum_rate, gram_err) = rate;
    out.results.push(ResultRow {
        scenario: ctx.spec.id.clone(),
        trial,
        frame,
        axis: ctx.spec.sweep.axis,
        sweep_value: ctx.sweep_value(frame),
        scheme,
        slots: ctx.point.slots,
        snr_db: cfg.snr_db(),
        theta: theta.to_vec(),
        theta_hat: used,
        sum_rate,
        raw_sum_rate,
        bound,
        gram_err,
        elapsed_ms: if ctx.spec.record_timing {
            started.elapsed().as_secs_f64() * 1e3
        } else {
            0.0
        },
    });
    Ok(())
}

fn run_trial(ctx: &Ctx, trial: usize) -> RunOutput {
    let mut out = RunOutput::default();
    let seed = ctx.point.cfg.seed();
    let failure = |frame: usize, scheme: &str, e: &Error| FailureRow {
        scenario: ctx.spec.id.clone(),
        seed,
        trial,
        frame,
        sweep_value: ctx.sweep_value(frame),
        scheme: scheme.to_string(),
        error: e.to_string(),
    };
    let paths = match draw_paths(ctx.spec, &ctx.point.cfg, &mut trajectory_rng(seed, trial)) {
        Ok(p) => p,
        Err(e) => {
            log::warn!("{} trial {trial}: {e}", ctx.spec.id);
            out.failures.push(failure(0, "trajectory", &e));
            return out;
        }
    };
    for (si, &scheme) in ctx.spec.schemes.iter().enumerate() {
        let mut rng = noise_rng(seed, ctx.point.index, si, trial);
        let mut chain = Chain {
            bs: paths.bs.at(0).to_vec(),
            ue: paths.ue.as_ref().map(|u| u.at(0).to_vec()).unwrap_or_default(),
        };
        for frame in 1..=paths.bs.frames() {
            if let Err(e) = run_frame(ctx, scheme, &paths, frame, trial, &mut chain, &mut rng, &mut out) {
                log::warn!("{} trial {trial} frame {frame} {}: {e}", ctx.spec.id, scheme.name());
                out.failures.push(failure(frame, scheme.name(), &e));
                break;
            }
        }
    }
    out
}

/// Runs every (sweep point, trial) pair. Trials execute in parallel; the output
/// order is (sweep point, trial, scheme, frame) regardless of scheduling.
pub fn run_scenario(spec: &ScenarioSpec) -> Result<RunOutput> {
    spec.validate()?;
    let base = spec.system_config()?;
    let points = sweep_points(spec, &base)?;
    let geom = ArrayGeometry::from_config(&base);
    let ue_geom = spec
        .user_side
        .map(
            |UserSideSpec {
                 antennas,
                 delays_per_chain,
                 ..
             }| ArrayGeometry::new(antennas, delays_per_chain),
        )
        .transpose()?;
    let mut out = RunOutput::default();
    for point in &points {
        let ctx = Ctx {
            spec,
            point,
            grid: point.cfg.frequency_grid(),
            geom,
            ue_geom,
        };
        log::info!("{}: sweep point {} of {}", spec.id, point.index + 1, points.len());
        let trials: Vec<RunOutput> = (0..spec.trials).into_par_iter().map(|t| run_trial(&ctx, t)).collect();
        for t in trials {
            out.extend(t);
        }
    }
    if spec.sweep.axis == SweepAxis::Frames {
        // Frame-major order so a frames sweep reads like a time series.
        out.results.sort_by_key(|r| (r.frame, r.trial));
        out.tracking.sort_by_key(|r| (r.frame, r.trial));
    }
    Ok(out)
}

/// Mean rates and tracking hit rates per (sweep value, scheme).
pub fn summarize(spec: &ScenarioSpec, out: &RunOutput) -> Vec<SummaryRow> {
    let mut keys: Vec<(f64, Scheme)> = Vec::new();
    for r in &out.results {
        if !keys.iter().any(|&(v, s)| v == r.sweep_value && s == r.scheme) {
            keys.push((r.sweep_value, r.scheme));
        }
    }
    keys.sort_by(|a, b| {
        a.0.total_cmp(&b.0)
            .then_with(|| scheme_index(spec, a.1).cmp(&scheme_index(spec, b.1)))
    });
    keys.into_iter()
        .map(|(v, scheme)| {
            let rows: Vec<&ResultRow> = out
                .results
                .iter()
                .filter(|r| r.sweep_value == v && r.scheme == scheme)
                .collect();
            let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
            let rates: Vec<f64> = rows.iter().map(|r| r.sum_rate).collect();
            let bounds: Vec<f64> = rows.iter().filter_map(|r| r.bound).collect();
            let errs: Vec<&TrackingRow> = out
                .tracking
                .iter()
                .filter(|t| t.sweep_value == v && t.scheme == scheme && t.stage == "bs")
                .collect();
            let p_err_le = (!errs.is_empty()).then(|| {
                [1.0, 2.0, 4.0]
                    .map(|c| errs.iter().filter(|t| t.err <= c * t.q_bound).count() as f64 / errs.len() as f64)
            });
            SummaryRow {
                scenario: spec.id.clone(),
                axis: spec.sweep.axis,
                sweep_value: v,
                scheme,
                rows: rows.len(),
                mean_sum_rate: mean(&rates),
                mean_bound: (!bounds.is_empty()).then(|| mean(&bounds)),
                p_err_le,
            }
        })
        .collect()
}

fn scheme_index(spec: &ScenarioSpec, s: Scheme) -> usize {
    spec.schemes.iter().position(|&x| x == s).unwrap_or(usize::MAX)
}

pub fn axis_name(axis: SweepAxis) -> &'static str {
    match axis {
        SweepAxis::Slots => "slots",
        SweepAxis::SnrDb => "snr_db",
        SweepAxis::Frames => "frames",
    }
}

fn join(xs: &[f64]) -> String {
    xs.iter().map(f64::to_string).collect::<Vec<_>>().join(";")
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

impl ResultRow {
    pub fn record(&self) -> Vec<String> {
        vec![
            SCHEMA_VERSION.to_string(),
            self.scenario.clone(),
            self.trial.to_string(),
            self.frame.to_string(),
            axis_name(self.axis).to_string(),
            self.sweep_value.to_string(),
            self.scheme.name().to_string(),
            self.slots.to_string(),
            self.snr_db.to_string(),
            join(&self.theta),
            join(&self.theta_hat),
            self.sum_rate.to_string(),
            self.raw_sum_rate.to_string(),
            opt(self.bound),
            self.gram_err.to_string(),
            self.elapsed_ms.to_string(),
        ]
    }
}

impl TrackingRow {
    pub fn record(&self) -> Vec<String> {
        vec![
            SCHEMA_VERSION.to_string(),
            self.scenario.clone(),
            self.trial.to_string(),
            self.frame.to_string(),
            self.sweep_value.to_string(),
            self.scheme.name().to_string(),
            self.stage.to_string(),
            self.user.to_string(),
            self.theta.to_string(),
            self.theta_hat.to_string(),
            self.err.to_string(),
            self.alpha.to_string(),
            self.q_bound.to_string(),
            self.win_slot.to_string(),
            self.win_subcarrier.to_string(),
            self.max_power.to_string(),
            self.out_of_range_risk.to_string(),
        ]
    }
}

impl FailureRow {
    pub fn record(&self) -> Vec<String> {
        vec![
            SCHEMA_VERSION.to_string(),
            self.scenario.clone(),
            self.seed.to_string(),
            self.trial.to_string(),
            self.frame.to_string(),
            self.sweep_value.to_string(),
            self.scheme.clone(),
            self.error.clone(),
        ]
    }
}

impl SummaryRow {
    pub fn record(&self) -> Vec<String> {
        let p = |i: usize| self.p_err_le.map(|p| p[i].to_string()).unwrap_or_default();
        vec![
            SCHEMA_VERSION.to_string(),
            self.scenario.clone(),
            axis_name(self.axis).to_string(),
            self.sweep_value.to_string(),
            self.scheme.name().to_string(),
            self.rows.to_string(),
            self.mean_sum_rate.to_string(),
            opt(self.mean_bound),
            p(0),
            p(1),
            p(2),
        ]
    }
}

fn write_csv(path: &Path, header: &[&str], records: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in records {
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes results.csv, tracking.csv, failures.csv and summary.csv into `dir`.
pub fn write_outputs(spec: &ScenarioSpec, out: &RunOutput, dir: &Path) -> Result<Vec<SummaryRow>> {
    fs::create_dir_all(dir)?;
    write_csv(
        &dir.join("results.csv"),
        &RESULTS_HEADER,
        out.results.iter().map(ResultRow::record),
    )?;
    write_csv(
        &dir.join("tracking.csv"),
        &TRACKING_HEADER,
        out.tracking.iter().map(TrackingRow::record),
    )?;
    write_csv(
        &dir.join("failures.csv"),
        &FAILURES_HEADER,
        out.failures.iter().map(FailureRow::record),
    )?;
    let summary = summarize(spec, out);
    write_csv(
        &dir.join("summary.csv"),
        &SUMMARY_HEADER,
        summary.iter().map(SummaryRow::record),
    )?;
    Ok(summary)
}
