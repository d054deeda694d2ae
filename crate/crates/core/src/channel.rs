//! Ray-based wideband channel, LoS path-gain scaling and user trajectories.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::syscfg::FrequencyGrid;

/// ULA response a_N(psi): entry n is exp(j pi n psi) / sqrt(N).
pub fn array_response(antennas: usize, psi: f64) -> Vec<Complex64> {
    let scale = 1.0 / (antennas as f64).sqrt();
    (0..antennas)
        .map(|n| Complex64::from_polar(scale, PI * n as f64 * psi))
        .collect()
}

/// Free-space path loss in dB: 32.4 + 20 log10(f[GHz]) + 20 log10(D[m]).
///
/// Takes the frequency in Hz; the 32.4 dB constant belongs to the GHz/metre
/// convention so the value is converted before use.
pub fn fspl_db(freq_hz: f64, distance_m: f64) -> Result<f64> {
    if !(freq_hz > 0.0) {
        return Err(Error::validation("frequency", "must be > 0"));
    }
    if !(distance_m > 0.0) {
        return Err(Error::validation("distance", "must be > 0"));
    }
    Ok(32.4 + 20.0 * (freq_hz / 1e9).log10() + 20.0 * distance_m.log10())
}

/// LoS gain at subcarrier frequency `freq_hz`: (f_m / f_c) g_c.
pub fn los_gain_at_subcarrier(gain_at_carrier: f64, freq_hz: f64, carrier_hz: f64) -> f64 {
    freq_hz / carrier_hz * gain_at_carrier
}

/// One propagation path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathParams {
    /// Real gain at the carrier, g_c >= 0.
    pub gain: f64,
    /// Path delay in seconds.
    pub delay_s: f64,
    /// Physical direction theta = sin(angle), in [-1, 1].
    pub theta: f64,
    pub is_los: bool,
}

impl PathParams {
    pub fn los(gain: f64, theta: f64) -> Self {
        Self {
            gain,
            delay_s: 0.0,
            theta,
            is_los: true,
        }
    }

    pub fn nlos(gain: f64, delay_s: f64, theta: f64) -> Self {
        Self {
            gain,
            delay_s,
            theta,
            is_los: false,
        }
    }

    fn check(&self, index: usize) -> Result<()> {
        if !(-1.0..=1.0).contains(&self.theta) {
            return Err(Error::validation(
                "path.theta",
                format!("path {index}: theta = {} outside [-1, 1]", self.theta),
            ));
        }
        if !(self.gain >= 0.0 && self.gain.is_finite()) {
            return Err(Error::validation(
                "path.gain",
                format!("path {index}: gain must be >= 0"),
            ));
        }
        if !(self.delay_s >= 0.0 && self.delay_s.is_finite()) {
            return Err(Error::validation(
                "path.delay_s",
                format!("path {index}: delay must be >= 0"),
            ));
        }
        if self.is_los != (index == 0) {
            return Err(Error::validation(
                "path.is_los",
                "exactly one LoS path is required and it must be path 0",
            ));
        }
        Ok(())
    }
}

/// Per-user channel rows h_{k,m} (1 x N) for every subcarrier.
#[derive(Debug, Clone, PartialEq)]
pub struct UserChannel {
    paths: Vec<PathParams>,
    rows: Vec<Vec<Complex64>>,
}

impl UserChannel {
    pub fn paths(&self) -> &[PathParams] {
        &self.paths
    }

    pub fn los(&self) -> &PathParams {
        &self.paths[0]
    }

    pub fn rows(&self) -> &[Vec<Complex64>] {
        &self.rows
    }

    /// h_{k,m} for 1-based m.
    pub fn row_at(&self, m: usize) -> &[Complex64] {
        &self.rows[m - 1]
    }

    pub fn antennas(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }
}

/// h_{k,m} = sum_l beta_{l,m} a_N^H(xi_m theta_l), with
/// beta_{l,m} = g_{l,m} exp(-j pi tau_l f_m). Only the LoS gain scales with
/// frequency; NLoS gains are frequency-flat.
pub fn synthesize_channel(grid: &FrequencyGrid, paths: &[PathParams], antennas: usize) -> Result<UserChannel> {
    if paths.is_empty() {
        return Err(Error::validation("paths", "at least the LoS path is required"));
    }
    for (i, p) in paths.iter().enumerate() {
        p.check(i)?;
    }
    let scale = 1.0 / (antennas as f64).sqrt();
    let rows = grid
        .freqs()
        .iter()
        .zip(grid.xi())
        .map(|(&f_m, &xi_m)| {
            let mut row = vec![Complex64::new(0.0, 0.0); antennas];
            for p in paths {
                let g = if p.is_los {
                    los_gain_at_subcarrier(p.gain, f_m, grid.carrier_hz())
                } else {
                    p.gain
                };
                let beta = Complex64::from_polar(g, -PI * p.delay_s * f_m);
                let psi = xi_m * p.theta;
                for (n, h) in row.iter_mut().enumerate() {
                    *h += beta * Complex64::from_polar(scale, -PI * n as f64 * psi);
                }
            }
            row
        })
        .collect();
    Ok(UserChannel {
        paths: paths.to_vec(),
        rows,
    })
}

/// Single-LoS channel between the BS and an N_r-antenna user:
/// H_{k,m} = beta_m a_{N_r}(xi_m theta_ue) a_N^H(xi_m theta_bs).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LosMimoChannel {
    pub gain: f64,
    pub theta_bs: f64,
    pub theta_ue: f64,
    pub bs_antennas: usize,
    pub ue_antennas: usize,
}

impl LosMimoChannel {
    /// Effective 1 x N row w^H H_{k,m} for a user combiner `w` (length N_r) at subcarrier m.
    pub fn combined_row(&self, grid: &FrequencyGrid, m: usize, combiner: &[Complex64]) -> Vec<Complex64> {
        let xi = grid.xi_at(m);
        let ue = array_response(self.ue_antennas, xi * self.theta_ue);
        let proj: Complex64 = combiner.iter().zip(&ue).map(|(w, a)| w.conj() * a).sum();
        self.scaled_row(grid, m, proj)
    }

    /// Effective row when the user side contributes a fixed complex factor.
    pub fn scaled_row(&self, grid: &FrequencyGrid, m: usize, ue_factor: Complex64) -> Vec<Complex64> {
        let xi = grid.xi_at(m);
        let g = los_gain_at_subcarrier(self.gain, grid.freq_at(m), grid.carrier_hz());
        let scale = g / (self.bs_antennas as f64).sqrt();
        let psi = xi * self.theta_bs;
        (0..self.bs_antennas)
            .map(|n| ue_factor * Complex64::from_polar(scale, -PI * n as f64 * psi))
            .collect()
    }

    /// Column seen by the user array when the BS transmits with beam `f` (length N):
    /// H_{k,m} f = beta_m (a_N^H f) a_{N_r}.
    pub fn received_column(&self, grid: &FrequencyGrid, m: usize, bs_beam: &[Complex64]) -> Vec<Complex64> {
        let xi = grid.xi_at(m);
        let g = los_gain_at_subcarrier(self.gain, grid.freq_at(m), grid.carrier_hz());
        let bs = array_response(self.bs_antennas, xi * self.theta_bs);
        let proj: Complex64 = bs.iter().zip(bs_beam).map(|(a, f)| a.conj() * f).sum();
        array_response(self.ue_antennas, xi * self.theta_ue)
            .into_iter()
            .map(|a| a * proj * g)
            .collect()
    }
}

/// Per-user direction increments. `until_frame = None` means "for all remaining frames".
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftSegment {
    pub delta: f64,
    #[serde(default)]
    pub until_frame: Option<usize>,
}

/// How user directions evolve from frame to frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum TrajectorySpec {
    /// Fixed per-frame increments, one segment list per user.
    Explicit {
        theta0: Vec<f64>,
        alpha: Vec<f64>,
        segments: Vec<Vec<DriftSegment>>,
        frames: usize,
    },
    /// alpha_k ~ U(0, alpha_max) once per user, then each frame
    /// theta_{i+1} ~ U(theta_i - alpha_k, theta_i + alpha_k).
    RandomDrift {
        theta0: Vec<f64>,
        alpha_max: f64,
        frames: usize,
    },
}

/// Directions per frame. `theta[i][k]` is user k at frame i; frame 0 is the
/// known starting point, frames 1..=frames are the ones to track.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    theta: Vec<Vec<f64>>,
    alpha: Vec<f64>,
}

impl Trajectory {
    pub fn frames(&self) -> usize {
        self.theta.len() - 1
    }

    pub fn users(&self) -> usize {
        self.alpha.len()
    }

    pub fn theta0(&self) -> &[f64] {
        &self.theta[0]
    }

    /// Directions at frame i (0 = initial).
    pub fn at(&self, frame: usize) -> &[f64] {
        &self.theta[frame]
    }

    /// Prior variation range alpha_k used by the tracker.
    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn deltas(&self, frame: usize) -> Vec<f64> {
        self.theta[frame + 1]
            .iter()
            .zip(&self.theta[frame])
            .map(|(b, a)| b - a)
            .collect()
    }
}

fn check_in_range(theta: f64, user: usize, frame: usize) -> Result<()> {
    if (-1.0..=1.0).contains(&theta) {
        Ok(())
    } else {
        Err(Error::TrajectoryOutOfRange { user, frame, theta })
    }
}

pub fn generate_trajectory<R: Rng + ?Sized>(spec: &TrajectorySpec, rng: &mut R) -> Result<Trajectory> {
    match spec {
        TrajectorySpec::Explicit {
            theta0,
            alpha,
            segments,
            frames,
        } => {
            if *frames < 1 {
                return Err(Error::validation("frames", "must be >= 1"));
            }
            if alpha.len() != theta0.len() || segments.len() != theta0.len() {
                return Err(Error::validation(
                    "trajectory",
                    "theta0, alpha and segments need one entry per user",
                ));
            }
            let mut theta = vec![theta0.clone()];
            for (k, &t) in theta0.iter().enumerate() {
                check_in_range(t, k, 0)?;
            }
            for i in 0..*frames {
                let prev = &theta[i];
                let mut next = Vec::with_capacity(prev.len());
                for (k, segs) in segments.iter().enumerate() {
                    let delta = segment_delta(segs, i).ok_or_else(|| {
                        Error::validation("segments", format!("user {k} has no segment covering frame {i}"))
                    })?;
                    let t = prev[k] + delta;
                    check_in_range(t, k, i + 1)?;
                    next.push(t);
                }
                theta.push(next);
            }
            Ok(Trajectory {
                theta,
                alpha: alpha.clone(),
            })
        }
        TrajectorySpec::RandomDrift {
            theta0,
            alpha_max,
            frames,
        } => {
            if *frames < 1 {
                return Err(Error::validation("frames", "must be >= 1"));
            }
            if !(*alpha_max > 0.0) {
                return Err(Error::validation("alpha_max", "must be > 0"));
            }
            for (k, &t) in theta0.iter().enumerate() {
                check_in_range(t, k, 0)?;
            }
            let alpha: Vec<f64> = theta0.iter().map(|_| rng.random_range(0.0..*alpha_max)).collect();
            let mut theta = vec![theta0.clone()];
            for i in 0..*frames {
                let next = theta[i]
                    .iter()
                    .zip(&alpha)
                    .map(|(&t, &a)| t + rng.random_range(-a..=a))
                    .collect::<Vec<_>>();
                for (k, &t) in next.iter().enumerate() {
                    check_in_range(t, k, i + 1)?;
                }
                theta.push(next);
            }
            Ok(Trajectory { theta, alpha })
        }
    }
}

fn segment_delta(segs: &[DriftSegment], frame: usize) -> Option<f64> {
    segs.iter()
        .find(|s| s.until_frame.is_none_or(|end| frame < end))
        .map(|s| s.delta)
}

/// Draws K directions from U(-1, 1), redrawing the whole set until every pair
/// is at least `min_separation` apart.
pub fn draw_separated_directions<R: Rng + ?Sized>(users: usize, min_separation: f64, rng: &mut R) -> Vec<f64> {
    loop {
        let dirs: Vec<f64> = (0..users).map(|_| rng.random_range(-1.0..1.0)).collect();
        let ok = dirs
            .iter()
            .enumerate()
            .all(|(i, a)| dirs[i + 1..].iter().all(|b| (a - b).abs() >= min_separation));
        if ok {
            return dirs;
        }
    }
}
