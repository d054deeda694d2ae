//! Phase-shifter / time-delay analog beamformers, beam patterns and digital precoders.
//!
//! A linear-delay beamformer is described by a PS pointing direction `phi` and a
//! delay slope `s` (in carrier periods). At relative frequency xi it produces the
//! TD phase beta = 2 (1 - xi) s and points at phi / xi + beta / (xi P).

mod precoding;

pub use precoding::{fully_digital_mmse, mmse_precoder, zf_precoder, ZF_MAX_CONDITION};

use std::f64::consts::PI;
use std::fmt::Write as _;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::syscfg::{FrequencyGrid, SystemConfig};

/// Antenna count and TD count of one RF chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ArrayGeometry {
    pub antennas: usize,
    pub delays_per_chain: usize,
}

impl ArrayGeometry {
    pub fn new(antennas: usize, delays_per_chain: usize) -> Result<Self> {
        crate::syscfg::antennas_per_td(antennas, delays_per_chain)?;
        Ok(Self {
            antennas,
            delays_per_chain,
        })
    }

    pub fn from_config(cfg: &SystemConfig) -> Self {
        Self {
            antennas: cfg.antennas(),
            delays_per_chain: cfg.delays_per_chain(),
        }
    }

    /// Antennas per TD, P = N / K_d.
    pub fn p(&self) -> usize {
        self.antennas / self.delays_per_chain
    }
}

/// Peak-normalised Dirichlet sinc sin(N pi a / 2) / (N sin(pi a / 2)).
pub fn dirichlet_sinc(n: usize, alpha: f64) -> f64 {
    let n_f = n as f64;
    let den = (PI * alpha / 2.0).sin();
    if den.abs() < 1e-12 {
        // limit at alpha = 2k
        let k = (alpha / 2.0).round() as i64;
        let sign = |e: i64| if e.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
        return sign(k * n as i64) * sign(k);
    }
    (n_f * PI * alpha / 2.0).sin() / (n_f * den)
}

/// Materialised frequency-dependent beam f_{k,m}.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamVector(pub Vec<Complex64>);

impl BeamVector {
    pub fn as_slice(&self) -> &[Complex64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }
}

/// Linear-delay PS/TD beamformer for one RF chain.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalogBeamformer {
    ps_blocks: Vec<Vec<Complex64>>,
    delays: Vec<f64>,
    phi: f64,
    s: f64,
    carrier_hz: f64,
}

impl AnalogBeamformer {
    /// Block j, element p: exp(j pi p phi) exp(j pi j (P phi + 2 s)) / sqrt(N);
    /// delay of TD j is s T_c j.
    pub fn linear(geom: ArrayGeometry, phi: f64, s: f64, carrier_hz: f64) -> Self {
        let p = geom.p();
        let scale = 1.0 / (geom.antennas as f64).sqrt();
        let block_step = p as f64 * phi + 2.0 * s;
        let ps_blocks = (0..geom.delays_per_chain)
            .map(|j| {
                (0..p)
                    .map(|q| Complex64::from_polar(scale, PI * (q as f64 * phi + j as f64 * block_step)))
                    .collect()
            })
            .collect();
        let period = 1.0 / carrier_hz;
        let delays = (0..geom.delays_per_chain).map(|j| s * period * j as f64).collect();
        Self {
            ps_blocks,
            delays,
            phi,
            s,
            carrier_hz,
        }
    }

    pub fn ps_blocks(&self) -> &[Vec<Complex64>] {
        &self.ps_blocks
    }

    /// TD delays in seconds (signed; a common offset is irrelevant to gains).
    pub fn delays(&self) -> &[f64] {
        &self.delays
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    /// Delay slope in carrier periods.
    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn carrier_hz(&self) -> f64 {
        self.carrier_hz
    }

    pub fn antennas(&self) -> usize {
        self.ps_blocks.iter().map(Vec::len).sum()
    }

    pub fn geometry(&self) -> ArrayGeometry {
        ArrayGeometry {
            antennas: self.antennas(),
            delays_per_chain: self.ps_blocks.len(),
        }
    }

    /// TD phase beta = 2 (1 - xi) s.
    pub fn td_phase(&self, xi: f64) -> f64 {
        2.0 * (1.0 - xi) * self.s
    }

    /// Direction the beam points at for relative frequency `xi`.
    pub fn direction_at(&self, xi: f64) -> f64 {
        dpp_beam_direction(self.phi, self.td_phase(xi), xi, self.geometry().p())
    }

    /// f = [ps_j exp(-j 2 pi f_m t_j)]_j.
    pub fn materialize(&self, freq_hz: f64) -> BeamVector {
        let mut out = Vec::with_capacity(self.antennas());
        for (block, &t) in self.ps_blocks.iter().zip(&self.delays) {
            let rot = Complex64::from_polar(1.0, -2.0 * PI * freq_hz * t);
            out.extend(block.iter().map(|z| z * rot));
        }
        BeamVector(out)
    }

    /// Hardware-style table: one row per TD with block index, P phases in turns
    /// and the delay in picoseconds, all delays shifted to be non-negative.
    pub fn export_table(&self) -> String {
        let offset = self.delays.iter().cloned().fold(0.0_f64, f64::min);
        let mut out = String::from("# beamzoom-beamformer v1\n");
        let _ = writeln!(
            out,
            "# antennas={} delays_per_chain={} phi={} s={} carrier_hz={}",
            self.antennas(),
            self.ps_blocks.len(),
            self.phi,
            self.s,
            self.carrier_hz
        );
        out.push_str("# block phases_turns... delay_ps\n");
        for (j, (block, &t)) in self.ps_blocks.iter().zip(&self.delays).enumerate() {
            let _ = write!(out, "{j}");
            for z in block {
                let _ = write!(out, " {:.9}", z.arg().rem_euclid(2.0 * PI) / (2.0 * PI));
            }
            let _ = writeln!(out, " {:.6}", (t - offset) * 1e12);
        }
        out
    }
}

/// |a_N(xi theta)^H f|.
pub fn array_gain(f: &BeamVector, theta: f64, xi: f64) -> f64 {
    let n = f.len();
    let psi = xi * theta;
    let acc: Complex64 =
        f.0.iter()
            .enumerate()
            .map(|(i, z)| Complex64::from_polar(1.0, -PI * i as f64 * psi) * z)
            .sum();
    acc.norm() / (n as f64).sqrt()
}

/// Closed-form gain of a linear-delay beamformer:
/// |Xi_{K_d}(P x + beta) Xi_P(x)| with x = phi - xi theta.
pub fn analytic_gain(geom: ArrayGeometry, phi: f64, beta: f64, theta: f64, xi: f64) -> f64 {
    let p = geom.p();
    let x = phi - xi * theta;
    (dirichlet_sinc(geom.delays_per_chain, p as f64 * x + beta) * dirichlet_sinc(p, x)).abs()
}

/// Direction a frequency-independent beam for `theta` points at when seen at `xi`.
pub fn split_direction(theta: f64, xi: f64) -> f64 {
    theta / xi
}

/// Direction formed by PS direction `phi` and TD phase `beta` at `xi`:
/// phi / xi + beta / (xi P).
pub fn dpp_beam_direction(phi: f64, beta: f64, xi: f64, p: usize) -> f64 {
    phi / xi + beta / (xi * p as f64)
}

/// Bound on how far the pattern peak of a linear-delay beam sits from
/// [`dpp_beam_direction`]: the Xi_P envelope drags it toward phi / xi by about
/// |beta| (P^2 - 1) / ((K_d^2 - 1) P^3 xi) (second-order expansion, 25% headroom).
pub fn peak_bias_bound(geom: ArrayGeometry, beta: f64, xi: f64) -> f64 {
    let p = geom.p() as f64;
    let kd = geom.delays_per_chain as f64;
    if kd <= 1.0 {
        return f64::INFINITY;
    }
    1.25 * beta.abs() * (p * p - 1.0) / ((kd * kd - 1.0) * p.powi(3) * xi)
}

/// max_m |P (xi_m - 1)|, the worst TD phase per unit direction.
pub fn max_split_phase(geom: ArrayGeometry, grid: &FrequencyGrid) -> f64 {
    let p = geom.p() as f64;
    grid.xi().iter().map(|x| (p * (x - 1.0)).abs()).fold(0.0, f64::max)
}

/// Beam aligned with `theta` at every subcarrier: phi = theta, s = -P theta / 2.
pub fn split_free_beamformer(theta: f64, geom: ArrayGeometry, grid: &FrequencyGrid) -> Result<AnalogBeamformer> {
    let max_split = max_split_phase(geom, grid);
    if max_split >= 1.0 {
        return Err(Error::DppInfeasible { max_split });
    }
    let s = -(geom.p() as f64) * theta / 2.0;
    Ok(AnalogBeamformer::linear(geom, theta, s, grid.carrier_hz()))
}

/// Conventional zero-delay beamformer a_N(theta).
pub fn frequency_independent_beamformer(theta: f64, geom: ArrayGeometry, carrier_hz: f64) -> AnalogBeamformer {
    AnalogBeamformer::linear(geom, theta, 0.0, carrier_hz)
}

/// Zoom design parameters (phi, s) spreading the M beams over [theta - alpha, theta + alpha].
/// A negative `alpha` mirrors the fan so that m = 1 points at theta + |alpha|.
pub fn zoom_parameters(theta: f64, alpha: f64, geom: ArrayGeometry, grid: &FrequencyGrid) -> Result<(f64, f64)> {
    if alpha == 0.0 || !alpha.is_finite() {
        return Err(Error::validation("alpha", "zoom half-range must be finite and nonzero"));
    }
    let zc = grid.zoom_constant()?;
    let phi = theta + (1.0 - grid.xi_first()) * alpha;
    let s = -(geom.p() as f64) / 2.0 * (phi + zc * alpha);
    Ok((phi, s))
}

/// Zoomed beamformer; fails if some subcarrier would need |beta| > 1.
pub fn zoom_beamformer(theta: f64, alpha: f64, geom: ArrayGeometry, grid: &FrequencyGrid) -> Result<AnalogBeamformer> {
    let (phi, s) = zoom_parameters(theta, alpha, geom, grid)?;
    for (i, &xi) in grid.xi().iter().enumerate() {
        let beta = 2.0 * (1.0 - xi) * s;
        if beta.abs() > 1.0 {
            return Err(Error::ZoomInfeasible { m: i + 1, beta });
        }
    }
    Ok(AnalogBeamformer::linear(geom, phi, s, grid.carrier_hz()))
}

/// Closed-form zoomed directions
/// theta + (1 - xi_1) alpha + 2 xi_M xi_1 (xi_m - 1) / (xi_m (xi_M - xi_1)) alpha.
pub fn zoom_directions(theta: f64, alpha: f64, grid: &FrequencyGrid) -> Result<Vec<f64>> {
    let zc = grid.zoom_constant()?;
    let base = theta + (1.0 - grid.xi_first()) * alpha;
    Ok(grid
        .xi()
        .iter()
        .map(|&xi| base + zc * (xi - 1.0) / xi * alpha)
        .collect())
}
