//! System parameters and the OFDM frequency grid.
//!
//! A [`SystemConfig`] can only be obtained through [`SystemConfigBuilder::build`],
//! which enforces every constraint the rest of the crate relies on. Subcarrier
//! indices are 1-based on every public accessor that takes an index.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Raw, unchecked parameters. This is the shape used in scenario files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemParams {
    /// BS antenna count N.
    pub antennas: usize,
    /// Subcarrier count M.
    pub subcarriers: usize,
    /// Number of single-antenna users K (one RF chain each).
    pub users: usize,
    /// Time-delayers per RF chain K_d.
    pub delays_per_chain: usize,
    pub carrier_hz: f64,
    pub bandwidth_hz: f64,
    /// Pilot sequence length Q.
    #[serde(default = "default_pilot_len")]
    pub pilot_len: usize,
    /// Per-user transmit power (linear).
    #[serde(default = "default_rho")]
    pub rho: f64,
    /// Noise power (linear).
    #[serde(default = "default_sigma2")]
    pub sigma2: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_pilot_len() -> usize {
    10
}

fn default_rho() -> f64 {
    1.0
}

fn default_sigma2() -> f64 {
    0.1
}

impl Default for SystemParams {
    /// The simulation set-up used throughout: N=256, M=128, K=4, K_d=16,
    /// 100 GHz carrier, 10 GHz bandwidth, Q=10, SNR 10 dB.
    fn default() -> Self {
        Self {
            antennas: 256,
            subcarriers: 128,
            users: 4,
            delays_per_chain: 16,
            carrier_hz: 100e9,
            bandwidth_hz: 10e9,
            pilot_len: default_pilot_len(),
            rho: default_rho(),
            sigma2: default_sigma2(),
            seed: 0,
        }
    }
}

/// Validated, immutable system configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SystemConfig {
    params: SystemParams,
}

#[derive(Debug, Clone, Default)]
pub struct SystemConfigBuilder {
    params: SystemParams,
}

impl SystemConfigBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_params(params: SystemParams) -> Self {
        Self { params }
    }

    pub fn antennas(mut self, n: usize) -> Self {
        self.params.antennas = n;
        self
    }

    pub fn subcarriers(mut self, m: usize) -> Self {
        self.params.subcarriers = m;
        self
    }

    pub fn users(mut self, k: usize) -> Self {
        self.params.users = k;
        self
    }

    pub fn delays_per_chain(mut self, kd: usize) -> Self {
        self.params.delays_per_chain = kd;
        self
    }

    pub fn carrier_hz(mut self, fc: f64) -> Self {
        self.params.carrier_hz = fc;
        self
    }

    pub fn bandwidth_hz(mut self, b: f64) -> Self {
        self.params.bandwidth_hz = b;
        self
    }

    pub fn pilot_len(mut self, q: usize) -> Self {
        self.params.pilot_len = q;
        self
    }

    pub fn rho(mut self, rho: f64) -> Self {
        self.params.rho = rho;
        self
    }

    pub fn sigma2(mut self, sigma2: f64) -> Self {
        self.params.sigma2 = sigma2;
        self
    }

    /// Sets the noise power from an SNR in dB, keeping rho fixed.
    pub fn snr_db(mut self, snr_db: f64) -> Self {
        self.params.sigma2 = self.params.rho / 10f64.powf(snr_db / 10.0);
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.params.seed = seed;
        self
    }

    pub fn build(self) -> Result<SystemConfig> {
        let p = &self.params;
        if p.antennas < 2 {
            return Err(Error::validation(
                "antennas",
                format!("N = {} must be >= 2", p.antennas),
            ));
        }
        if p.subcarriers < 2 {
            return Err(Error::validation(
                "subcarriers",
                format!("M = {} must be >= 2", p.subcarriers),
            ));
        }
        if p.users < 1 {
            return Err(Error::validation("users", "K must be >= 1"));
        }
        antennas_per_td(p.antennas, p.delays_per_chain)?;
        if !(p.carrier_hz.is_finite() && p.carrier_hz > 0.0) {
            return Err(Error::validation("carrier_hz", "f_c must be finite and > 0"));
        }
        if !(p.bandwidth_hz.is_finite() && p.bandwidth_hz >= 0.0) {
            return Err(Error::validation("bandwidth_hz", "B must be finite and >= 0"));
        }
        if p.bandwidth_hz >= 2.0 * p.carrier_hz {
            return Err(Error::validation(
                "bandwidth_hz",
                format!("B = {} must be < 2 f_c = {}", p.bandwidth_hz, 2.0 * p.carrier_hz),
            ));
        }
        if p.pilot_len < 1 {
            return Err(Error::validation("pilot_len", "Q must be >= 1"));
        }
        if !(p.rho.is_finite() && p.rho > 0.0) {
            return Err(Error::validation("rho", "transmit power must be finite and > 0"));
        }
        if !(p.sigma2.is_finite() && p.sigma2 >= 0.0) {
            return Err(Error::validation("sigma2", "noise power must be finite and >= 0"));
        }
        Ok(SystemConfig { params: self.params })
    }
}

impl SystemConfig {
    pub fn builder() -> SystemConfigBuilder {
        SystemConfigBuilder::new()
    }

    pub fn params(&self) -> &SystemParams {
        &self.params
    }

    pub fn antennas(&self) -> usize {
        self.params.antennas
    }

    pub fn subcarriers(&self) -> usize {
        self.params.subcarriers
    }

    pub fn users(&self) -> usize {
        self.params.users
    }

    pub fn delays_per_chain(&self) -> usize {
        self.params.delays_per_chain
    }

    /// P = N / K_d, antennas behind each time-delayer.
    pub fn antennas_per_td(&self) -> usize {
        self.params.antennas / self.params.delays_per_chain
    }

    pub fn carrier_hz(&self) -> f64 {
        self.params.carrier_hz
    }

    pub fn bandwidth_hz(&self) -> f64 {
        self.params.bandwidth_hz
    }

    pub fn pilot_len(&self) -> usize {
        self.params.pilot_len
    }

    pub fn rho(&self) -> f64 {
        self.params.rho
    }

    pub fn sigma2(&self) -> f64 {
        self.params.sigma2
    }

    pub fn snr_db(&self) -> f64 {
        10.0 * (self.params.rho / self.params.sigma2).log10()
    }

    pub fn seed(&self) -> u64 {
        self.params.seed
    }

    /// Copy of this config with a different noise power.
    pub fn with_sigma2(&self, sigma2: f64) -> Result<SystemConfig> {
        SystemConfigBuilder::from_params(self.params.clone())
            .sigma2(sigma2)
            .build()
    }

    pub fn with_snr_db(&self, snr_db: f64) -> Result<SystemConfig> {
        SystemConfigBuilder::from_params(self.params.clone())
            .snr_db(snr_db)
            .build()
    }

    pub fn with_users(&self, users: usize) -> Result<SystemConfig> {
        SystemConfigBuilder::from_params(self.params.clone())
            .users(users)
            .build()
    }

    pub fn frequency_grid(&self) -> FrequencyGrid {
        build_frequency_grid(self)
    }
}

/// Checked N / K_d.
pub fn antennas_per_td(antennas: usize, delays_per_chain: usize) -> Result<usize> {
    if delays_per_chain == 0 {
        return Err(Error::validation("delays_per_chain", "K_d must be >= 1"));
    }
    if !antennas.is_multiple_of(delays_per_chain) {
        return Err(Error::validation(
            "delays_per_chain",
            format!("N = {antennas} is not divisible by K_d = {delays_per_chain}"),
        ));
    }
    Ok(antennas / delays_per_chain)
}

/// Subcarrier frequencies f_m = f_c + (B/M)(m - 1 - (M-1)/2) and their
/// ratios xi_m = f_m / f_c. Stored 0-based; accessors named `*_at` take 1-based m.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyGrid {
    freqs: Vec<f64>,
    xi: Vec<f64>,
    carrier_hz: f64,
    bandwidth_hz: f64,
}

pub fn build_frequency_grid(cfg: &SystemConfig) -> FrequencyGrid {
    FrequencyGrid::new(cfg.carrier_hz(), cfg.bandwidth_hz(), cfg.subcarriers())
}

impl FrequencyGrid {
    /// Unchecked constructor; prefer [`build_frequency_grid`] on a validated config.
    pub fn new(carrier_hz: f64, bandwidth_hz: f64, subcarriers: usize) -> Self {
        let m_total = subcarriers as f64;
        let spacing = bandwidth_hz / m_total;
        let centre = (m_total - 1.0) / 2.0;
        let freqs: Vec<f64> = (0..subcarriers)
            .map(|i| carrier_hz + spacing * (i as f64 - centre))
            .collect();
        let xi = freqs.iter().map(|f| f / carrier_hz).collect();
        Self {
            freqs,
            xi,
            carrier_hz,
            bandwidth_hz,
        }
    }

    pub fn len(&self) -> usize {
        self.freqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freqs.is_empty()
    }

    pub fn freqs(&self) -> &[f64] {
        &self.freqs
    }

    pub fn xi(&self) -> &[f64] {
        &self.xi
    }

    /// f_m for 1-based m.
    pub fn freq_at(&self, m: usize) -> f64 {
        self.freqs[m - 1]
    }

    /// xi_m for 1-based m.
    pub fn xi_at(&self, m: usize) -> f64 {
        self.xi[m - 1]
    }

    pub fn xi_first(&self) -> f64 {
        self.xi[0]
    }

    pub fn xi_last(&self) -> f64 {
        self.xi[self.xi.len() - 1]
    }

    pub fn carrier_hz(&self) -> f64 {
        self.carrier_hz
    }

    pub fn bandwidth_hz(&self) -> f64 {
        self.bandwidth_hz
    }

    /// Carrier period T_c = 1 / f_c in seconds.
    pub fn carrier_period(&self) -> f64 {
        1.0 / self.carrier_hz
    }

    /// xi_M - xi_1; zero for a zero-bandwidth grid.
    pub fn relative_span(&self) -> f64 {
        self.xi_last() - self.xi_first()
    }

    /// 2 xi_M xi_1 / (xi_M - xi_1), the fan-spreading constant of beam zooming.
    /// Returns a validation error for a zero-bandwidth grid.
    pub fn zoom_constant(&self) -> Result<f64> {
        let span = self.relative_span();
        if span <= 0.0 {
            return Err(Error::validation(
                "bandwidth_hz",
                "beam zooming needs B > 0 (xi_M - xi_1 = 0)",
            ));
        }
        Ok(2.0 * self.xi_last() * self.xi_first() / span)
    }
}
