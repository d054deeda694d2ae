//! Pilot-based beam tracking: the zoom tracker, the exhaustive per-slot baseline
//! and the two-stage procedure for multi-antenna users.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::analysis::{oriented_alpha, FanOrientation};
use crate::beamform::{
    split_free_beamformer, zoom_beamformer, zoom_directions, AnalogBeamformer, ArrayGeometry, BeamVector,
};
use crate::channel::{LosMimoChannel, UserChannel};
use crate::error::{Error, Result};
use crate::syscfg::{FrequencyGrid, SystemConfig};

/// Candidate directions of one user: `psi[t][m]` is probed by slot t at subcarrier m (0-based storage).
#[derive(Debug, Clone, PartialEq)]
pub struct TargetDirectionSet {
    theta_i: f64,
    alpha: f64,
    psi: Vec<Vec<f64>>,
    centers: Vec<f64>,
}

impl TargetDirectionSet {
    pub fn theta_i(&self) -> f64 {
        self.theta_i
    }

    /// Signed half-range; negative for a mirrored fan.
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn psi(&self) -> &[Vec<f64>] {
        &self.psi
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn slots(&self) -> usize {
        self.psi.len()
    }

    /// Candidate for 1-based slot `t` and subcarrier `m`.
    pub fn get(&self, t: usize, m: usize) -> f64 {
        self.psi[t - 1][m - 1]
    }

    /// Candidates in probing order (slot-major); monotone in the fan direction.
    pub fn flattened(&self) -> Vec<f64> {
        self.psi.iter().flatten().copied().collect()
    }

    /// Distance from `theta` to the closest candidate.
    pub fn nearest_distance(&self, theta: f64) -> f64 {
        self.psi
            .iter()
            .flatten()
            .map(|c| (c - theta).abs())
            .fold(f64::INFINITY, f64::min)
    }

    /// Largest gap between neighbouring candidates (slot boundaries repeat a candidate).
    pub fn max_gap(&self) -> f64 {
        let mut flat = self.flattened();
        flat.sort_by(f64::total_cmp);
        flat.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }
}

fn slot_center(theta_i: f64, alpha: f64, slots: usize, t: usize) -> f64 {
    theta_i - alpha + (2 * t - 1) as f64 * alpha / slots as f64
}

/// Splits [theta_i - alpha, theta_i + alpha] into `slots` sub-ranges and fans the
/// M subcarriers of slot t across the t-th one. A negative `alpha` mirrors the layout.
pub fn target_directions(theta_i: f64, alpha: f64, slots: usize, grid: &FrequencyGrid) -> Result<TargetDirectionSet> {
    if slots == 0 {
        return Err(Error::validation("slots", "must be >= 1"));
    }
    let centers: Vec<f64> = (1..=slots).map(|t| slot_center(theta_i, alpha, slots, t)).collect();
    let psi = centers
        .iter()
        .map(|&c| zoom_directions(c, alpha / slots as f64, grid))
        .collect::<Result<_>>()?;
    Ok(TargetDirectionSet {
        theta_i,
        alpha,
        psi,
        centers,
    })
}

/// Zoomed beamformer of 1-based slot `t`.
pub fn slot_beamformer(
    t: usize,
    theta_i: f64,
    alpha: f64,
    slots: usize,
    geom: ArrayGeometry,
    grid: &FrequencyGrid,
) -> Result<AnalogBeamformer> {
    if t == 0 || t > slots {
        return Err(Error::validation("t", format!("slot {t} outside 1..={slots}")));
    }
    zoom_beamformer(slot_center(theta_i, alpha, slots, t), alpha / slots as f64, geom, grid)
}

/// Orthogonal pilot rows (K x Q), each with squared norm Q.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotBlock {
    pilots: DMatrix<Complex64>,
}

impl PilotBlock {
    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.pilots
    }

    pub fn len(&self) -> usize {
        self.pilots.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.pilots.ncols() == 0
    }

    /// |y q_k^H|^2 / Q^2 for user row `k` of a received block.
    pub fn correlate(&self, y: &DMatrix<Complex64>, k: usize) -> f64 {
        let q = self.len() as f64;
        let acc: Complex64 = y
            .row(k)
            .iter()
            .zip(self.pilots.row(k).iter())
            .map(|(a, b)| a * b.conj())
            .sum();
        acc.norm_sqr() / (q * q)
    }
}

/// Rows k of the Q-point DFT: q_k[n] = exp(j 2 pi k n / Q).
pub fn make_pilots(users: usize, len: usize) -> Result<PilotBlock> {
    if len < users {
        return Err(Error::validation(
            "pilot_len",
            format!("{len} pilots cannot be orthogonal for {users} users"),
        ));
    }
    let pilots = DMatrix::from_fn(users, len, |k, n| {
        Complex64::from_polar(1.0, 2.0 * PI * (k * n) as f64 / len as f64)
    });
    Ok(PilotBlock { pilots })
}

/// Y = kappa H A X + N for one subcarrier: `rows` are the K channel rows,
/// `beams` the columns of A, noise is CN(0, sigma2) per entry.
pub fn simulate_slot<R: Rng + ?Sized>(
    rows: &[&[Complex64]],
    beams: &[BeamVector],
    pilots: &PilotBlock,
    kappa: f64,
    sigma2: f64,
    rng: &mut R,
) -> DMatrix<Complex64> {
    let g = DMatrix::from_fn(rows.len(), beams.len(), |k, j| {
        rows[k]
            .iter()
            .zip(beams[j].as_slice())
            .map(|(h, f)| h * f)
            .sum::<Complex64>()
            * kappa
    });
    let mut y = g * pilots.matrix();
    if sigma2 > 0.0 {
        let sd = (sigma2 / 2.0).sqrt();
        for z in y.iter_mut() {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            *z += Complex64::new(re * sd, im * sd);
        }
    }
    y
}

/// Winning slot and subcarrier, both 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Winner {
    pub slot: usize,
    pub subcarrier: usize,
}

/// Per-user argmax over (t, m) of `table[k][t][m]`; the first maximum in
/// lexicographic (t, m) order wins ties.
pub fn detect_winner(table: &[Vec<Vec<f64>>]) -> Vec<Winner> {
    table
        .iter()
        .map(|user| {
            let mut best = (f64::NEG_INFINITY, Winner { slot: 1, subcarrier: 1 });
            for (t, row) in user.iter().enumerate() {
                for (m, &v) in row.iter().enumerate() {
                    if v > best.0 {
                        best = (
                            v,
                            Winner {
                                slot: t + 1,
                                subcarrier: m + 1,
                            },
                        );
                    }
                }
            }
            best.1
        })
        .collect()
}

/// Result of one tracking round.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackingOutcome {
    pub theta_hat: Vec<f64>,
    pub winners: Vec<Winner>,
    /// K x T x M pilot-correlation powers.
    pub power_table: Vec<Vec<Vec<f64>>>,
    pub overhead_used: usize,
    /// True when the winner sits on an end of the candidate range, i.e. the
    /// direction may have left the range.
    pub out_of_range_risk: Vec<bool>,
    pub targets: Vec<TargetDirectionSet>,
}

/// Settings shared by the trackers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackerParams {
    pub geom: ArrayGeometry,
    pub slots: usize,
    pub pilot_len: usize,
    pub sigma2: f64,
    pub orientation: FanOrientation,
}

impl TrackerParams {
    pub fn from_config(cfg: &SystemConfig, slots: usize) -> Self {
        Self {
            geom: ArrayGeometry::from_config(cfg),
            slots,
            pilot_len: cfg.pilot_len(),
            sigma2: cfg.sigma2(),
            orientation: FanOrientation::FollowSign,
        }
    }
}

/// Borrowed per-user channel rows, indexed `[k][m]`.
pub fn channel_rows(channels: &[UserChannel]) -> Vec<&[Vec<Complex64>]> {
    channels.iter().map(UserChannel::rows).collect()
}

fn check_inputs(rows: &[&[Vec<Complex64>]], theta_i: &[f64], alpha: &[f64], grid: &FrequencyGrid) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::validation("users", "at least one user is required"));
    }
    if theta_i.len() != rows.len() || alpha.len() != rows.len() {
        return Err(Error::validation(
            "theta_i",
            "one previous direction and range per user required",
        ));
    }
    if rows.iter().any(|r| r.len() != grid.len()) {
        return Err(Error::validation("channels", "one row per subcarrier required"));
    }
    Ok(())
}

/// Runs every slot with per-user beamformers `beams[k][t]` and returns the K x T x M power table.
fn probe<R: Rng + ?Sized>(
    grid: &FrequencyGrid,
    rows: &[&[Vec<Complex64>]],
    beams: &[Vec<AnalogBeamformer>],
    pilots: &PilotBlock,
    sigma2: f64,
    rng: &mut R,
) -> Vec<Vec<Vec<f64>>> {
    let users = rows.len();
    let slots = beams[0].len();
    let mut table = vec![vec![vec![0.0; grid.len()]; slots]; users];
    for t in 0..slots {
        for (mi, (&f_m, &xi)) in grid.freqs().iter().zip(grid.xi()).enumerate() {
            let a_m: Vec<BeamVector> = beams.iter().map(|b| b[t].materialize(f_m)).collect();
            let h_m: Vec<&[Complex64]> = rows.iter().map(|r| r[mi].as_slice()).collect();
            let y = simulate_slot(&h_m, &a_m, pilots, 1.0 / xi, sigma2, rng);
            for (k, user) in table.iter_mut().enumerate() {
                user[t][mi] = pilots.correlate(&y, k);
            }
        }
    }
    table
}

/// Beam-zoom tracking: every slot probes M candidates per user at once, one per subcarrier.
pub fn track_beam_zoom<R: Rng + ?Sized>(
    params: &TrackerParams,
    grid: &FrequencyGrid,
    rows: &[&[Vec<Complex64>]],
    theta_i: &[f64],
    alpha: &[f64],
    rng: &mut R,
) -> Result<TrackingOutcome> {
    check_inputs(rows, theta_i, alpha, grid)?;
    let slots = params.slots;
    let signed: Vec<f64> = theta_i
        .iter()
        .zip(alpha)
        .map(|(&th, &a)| oriented_alpha(th, a, params.orientation))
        .collect();
    let targets = theta_i
        .iter()
        .zip(&signed)
        .map(|(&th, &a)| target_directions(th, a, slots, grid))
        .collect::<Result<Vec<_>>>()?;
    let beams = theta_i
        .iter()
        .zip(&signed)
        .map(|(&th, &a)| {
            (1..=slots)
                .map(|t| slot_beamformer(t, th, a, slots, params.geom, grid))
                .collect()
        })
        .collect::<Result<Vec<Vec<_>>>>()?;
    let pilots = make_pilots(rows.len(), params.pilot_len)?;
    let table = probe(grid, rows, &beams, &pilots, params.sigma2, rng);
    let winners = detect_winner(&table);
    let m = grid.len();
    let theta_hat = winners
        .iter()
        .zip(&targets)
        .map(|(w, s)| s.get(w.slot, w.subcarrier))
        .collect();
    let out_of_range_risk = winners
        .iter()
        .map(|w| (w.slot == 1 && w.subcarrier == 1) || (w.slot == slots && w.subcarrier == m))
        .collect();
    Ok(TrackingOutcome {
        theta_hat,
        winners,
        power_table: table,
        overhead_used: slots,
        out_of_range_risk,
        targets,
    })
}

/// Exhaustive baseline: slot t points one split-free beam per user at the centre
/// of the t-th sub-range; detection sums the power over subcarriers.
pub fn track_typical<R: Rng + ?Sized>(
    params: &TrackerParams,
    grid: &FrequencyGrid,
    rows: &[&[Vec<Complex64>]],
    theta_i: &[f64],
    alpha: &[f64],
    rng: &mut R,
) -> Result<TrackingOutcome> {
    check_inputs(rows, theta_i, alpha, grid)?;
    let slots = params.slots;
    if slots == 0 {
        return Err(Error::validation("slots", "must be >= 1"));
    }
    let mut targets = Vec::with_capacity(rows.len());
    let mut beams = Vec::with_capacity(rows.len());
    for (&th, &a) in theta_i.iter().zip(alpha) {
        let centers: Vec<f64> = (1..=slots).map(|t| slot_center(th, a, slots, t)).collect();
        beams.push(
            centers
                .iter()
                .map(|&c| split_free_beamformer(c, params.geom, grid))
                .collect::<Result<Vec<_>>>()?,
        );
        targets.push(TargetDirectionSet {
            theta_i: th,
            alpha: a,
            psi: centers.iter().map(|&c| vec![c; grid.len()]).collect(),
            centers,
        });
    }
    let pilots = make_pilots(rows.len(), params.pilot_len)?;
    let table = probe(grid, rows, &beams, &pilots, params.sigma2, rng);
    let summed: Vec<Vec<Vec<f64>>> = table
        .iter()
        .map(|user| user.iter().map(|row| vec![row.iter().sum::<f64>()]).collect())
        .collect();
    let winners: Vec<Winner> = detect_winner(&summed)
        .into_iter()
        .zip(&table)
        .map(|(w, user)| {
            let row = &user[w.slot - 1];
            let best_m = (0..row.len()).fold(0, |b, m| if row[m] > row[b] { m } else { b });
            Winner {
                slot: w.slot,
                subcarrier: best_m + 1,
            }
        })
        .collect();
    let theta_hat = winners
        .iter()
        .zip(&targets)
        .map(|(w, s)| s.centers[w.slot - 1])
        .collect();
    let out_of_range_risk = winners.iter().map(|w| w.slot == 1 || w.slot == slots).collect();
    Ok(TrackingOutcome {
        theta_hat,
        winners,
        power_table: table,
        overhead_used: slots,
        out_of_range_risk,
        targets,
    })
}

/// Tracker run on each side of the two-stage procedure.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageTracker {
    Zoom,
    Typical,
}

/// Settings for multi-antenna users.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoStageParams {
    pub bs: TrackerParams,
    pub ue_geom: ArrayGeometry,
    pub ue_slots: usize,
    pub tracker: StageTracker,
}

fn run_stage<R: Rng + ?Sized>(
    tracker: StageTracker,
    params: &TrackerParams,
    grid: &FrequencyGrid,
    rows: &[&[Vec<Complex64>]],
    theta_i: &[f64],
    alpha: &[f64],
    rng: &mut R,
) -> Result<TrackingOutcome> {
    match tracker {
        StageTracker::Zoom => track_beam_zoom(params, grid, rows, theta_i, alpha, rng),
        StageTracker::Typical => track_typical(params, grid, rows, theta_i, alpha, rng),
    }
}

/// Directions recovered by the two-stage procedure.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoStageOutcome {
    pub bs: TrackingOutcome,
    pub ue: Vec<TrackingOutcome>,
    pub theta_hat_bs: Vec<f64>,
    pub theta_hat_ue: Vec<f64>,
}

/// User-side tracking of one user while the BS holds a split-free beam at `bs_direction`.
pub fn track_user_side<R: Rng + ?Sized>(
    params: &TwoStageParams,
    grid: &FrequencyGrid,
    channel: &LosMimoChannel,
    bs_direction: f64,
    theta_i_ue: f64,
    alpha_ue: f64,
    rng: &mut R,
) -> Result<TrackingOutcome> {
    let bs_beam = split_free_beamformer(bs_direction, params.bs.geom, grid)?;
    // |w^H c| = |sum conj(c) w|, so conj(c) acts as the channel row for the user beam w
    let rows: Vec<Vec<Complex64>> = (1..=grid.len())
        .map(|m| {
            channel
                .received_column(grid, m, bs_beam.materialize(grid.freq_at(m)).as_slice())
                .into_iter()
                .map(|z| z.conj())
                .collect()
        })
        .collect();
    let ue_params = TrackerParams {
        geom: params.ue_geom,
        slots: params.ue_slots,
        ..params.bs
    };
    run_stage(
        params.tracker,
        &ue_params,
        grid,
        &[rows.as_slice()],
        &[theta_i_ue],
        &[alpha_ue],
        rng,
    )
}

/// Stage 1 tracks the BS-side directions with an omnidirectional user combiner
/// (gain 1/sqrt(N_r)); stage 2 fixes the BS beam at the estimate and zooms at the user.
#[allow(clippy::too_many_arguments)]
pub fn track_two_stage<R: Rng + ?Sized>(
    params: &TwoStageParams,
    grid: &FrequencyGrid,
    channels: &[LosMimoChannel],
    theta_i_bs: &[f64],
    theta_i_ue: &[f64],
    alpha_bs: &[f64],
    alpha_ue: &[f64],
    rng: &mut R,
) -> Result<TwoStageOutcome> {
    if theta_i_ue.len() != channels.len() || alpha_ue.len() != channels.len() {
        return Err(Error::validation(
            "theta_i_ue",
            "one user-side direction and range per user required",
        ));
    }
    let rows: Vec<Vec<Vec<Complex64>>> = channels
        .iter()
        .map(|ch| {
            let omni = Complex64::from(1.0 / (ch.ue_antennas as f64).sqrt());
            (1..=grid.len()).map(|m| ch.scaled_row(grid, m, omni)).collect()
        })
        .collect();
    let borrowed: Vec<&[Vec<Complex64>]> = rows.iter().map(Vec::as_slice).collect();
    let bs = run_stage(params.tracker, &params.bs, grid, &borrowed, theta_i_bs, alpha_bs, rng)?;
    let ue = channels
        .iter()
        .enumerate()
        .map(|(k, ch)| track_user_side(params, grid, ch, bs.theta_hat[k], theta_i_ue[k], alpha_ue[k], rng))
        .collect::<Result<Vec<_>>>()?;
    let theta_hat_ue = ue.iter().map(|o| o.theta_hat[0]).collect();
    Ok(TwoStageOutcome {
        theta_hat_bs: bs.theta_hat.clone(),
        bs,
        ue,
        theta_hat_ue,
    })
}
