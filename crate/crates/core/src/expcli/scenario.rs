//! Declarative experiment descriptions (TOML) and the bundled figure presets.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::beamform::ArrayGeometry;
use crate::channel::DriftSegment;
use crate::error::{Error, Result};
use crate::syscfg::{SystemConfig, SystemConfigBuilder, SystemParams};

/// Data-transmission scheme evaluated per frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Split-free beams at directions from the zoom tracker.
    Zoom,
    /// Split-free beams at directions from the exhaustive per-slot tracker.
    Typical,
    /// Zoom tracking at the BS, then at the user (multi-antenna users only).
    TwoStage,
    /// Fully-digital MMSE with perfect channel knowledge.
    Optimal,
    /// Split-free beams at the true directions.
    Perfect,
    /// Frequency-independent beams at the true directions.
    Hybrid,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Zoom => "zoom",
            Scheme::Typical => "typical",
            Scheme::TwoStage => "two_stage",
            Scheme::Optimal => "optimal",
            Scheme::Perfect => "perfect",
            Scheme::Hybrid => "hybrid",
        }
    }

    pub fn is_tracker(self) -> bool {
        matches!(self, Scheme::Zoom | Scheme::Typical | Scheme::TwoStage)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrecoderKind {
    Zf,
    #[default]
    Mmse,
}

/// How user directions are initialised and evolve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum UsersSpec {
    /// alpha_k ~ U(0, alpha_max); initial directions from `theta0` or drawn from
    /// U(-1, 1) with pairwise separation of at least 4/N.
    RandomDrift {
        alpha_max: f64,
        #[serde(default)]
        theta0: Option<Vec<f64>>,
    },
    /// Fixed initial directions, ranges and per-frame increments.
    Explicit {
        theta0: Vec<f64>,
        alpha: Vec<f64>,
        segments: Vec<Vec<DriftSegment>>,
    },
}

/// Multi-antenna user side for the two-stage procedure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserSideSpec {
    pub antennas: usize,
    pub delays_per_chain: usize,
    /// Fixed user-side variation range alpha^r.
    pub alpha: f64,
    pub slots: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// Training overhead T.
    Slots,
    SnrDb,
    /// One row per frame of a single trajectory run.
    Frames,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    #[serde(default)]
    pub values: Vec<f64>,
}

fn one() -> usize {
    1
}

fn default_slots() -> usize {
    2
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

/// A complete experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub id: String,
    #[serde(default)]
    pub description: String,
    pub system: SystemParams,
    pub users: UsersSpec,
    #[serde(default)]
    pub user_side: Option<UserSideSpec>,
    pub sweep: SweepSpec,
    pub schemes: Vec<Scheme>,
    #[serde(default)]
    pub precoder: PrecoderKind,
    #[serde(default = "one")]
    pub trials: usize,
    #[serde(default = "one")]
    pub frames: usize,
    /// T used when the sweep axis is not `slots`.
    #[serde(default = "default_slots")]
    pub slots: usize,
    /// SNR rho / sigma2 in dB when the axis is not `snr_db`; overrides `system.sigma2`.
    #[serde(default)]
    pub snr_db: Option<f64>,
    #[serde(default = "default_out")]
    pub outputs: PathBuf,
    /// Write wall-clock times into results.csv (makes output non-reproducible).
    #[serde(default)]
    pub record_timing: bool,
}

fn invalid(context: &str, reason: impl Into<String>) -> Error {
    Error::Scenario {
        context: context.to_string(),
        reason: reason.into(),
    }
}

impl ScenarioSpec {
    pub fn parse(text: &str, context: &str) -> Result<Self> {
        let spec: ScenarioSpec = toml::from_str(text).map_err(|e| invalid(context, e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    /// Base system configuration (SNR override applied).
    pub fn system_config(&self) -> Result<SystemConfig> {
        let mut b = SystemConfigBuilder::from_params(self.system.clone());
        if let Some(snr) = self.snr_db {
            b = b.snr_db(snr);
        }
        b.build()
    }

    /// Values of the sweep axis; for `frames` this is 1..=frames.
    pub fn sweep_values(&self) -> Vec<f64> {
        match self.sweep.axis {
            SweepAxis::Frames => (1..=self.frames).map(|f| f as f64).collect(),
            _ => self.sweep.values.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ctx = self.id.as_str();
        let cfg = self.system_config()?;
        if self.trials < 1 {
            return Err(Error::validation("trials", "must be >= 1"));
        }
        if self.frames < 1 {
            return Err(Error::validation("frames", "must be >= 1"));
        }
        if self.slots < 1 {
            return Err(Error::validation("slots", "must be >= 1"));
        }
        if self.schemes.is_empty() {
            return Err(Error::validation("schemes", "at least one scheme is required"));
        }
        match self.sweep.axis {
            SweepAxis::Frames => {
                if !self.sweep.values.is_empty() {
                    return Err(invalid(ctx, "the frames axis takes no values; set `frames` instead"));
                }
            }
            SweepAxis::Slots => {
                if self.sweep.values.is_empty() {
                    return Err(invalid(ctx, "sweep.values must not be empty"));
                }
                if self.sweep.values.iter().any(|v| *v < 1.0 || v.fract() != 0.0) {
                    return Err(Error::validation(
                        "sweep.values",
                        "slot counts must be positive integers",
                    ));
                }
            }
            SweepAxis::SnrDb => {
                if self.sweep.values.is_empty() {
                    return Err(invalid(ctx, "sweep.values must not be empty"));
                }
                if self.sweep.values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::validation("sweep.values", "SNR values must be finite"));
                }
            }
        }
        let k = cfg.users();
        match &self.users {
            UsersSpec::RandomDrift { alpha_max, theta0 } => {
                if !(*alpha_max > 0.0 && *alpha_max <= 1.0) {
                    return Err(Error::validation("users.alpha_max", "must be in (0, 1]"));
                }
                if let Some(t) = theta0 {
                    check_directions(t, k, "users.theta0")?;
                }
            }
            UsersSpec::Explicit {
                theta0,
                alpha,
                segments,
            } => {
                if theta0.is_empty() {
                    return Err(Error::validation("users", "empty users list"));
                }
                check_directions(theta0, k, "users.theta0")?;
                if alpha.len() != k || segments.len() != k {
                    return Err(Error::validation("users", "alpha and segments need one entry per user"));
                }
                if alpha.iter().any(|a| !(*a > 0.0)) {
                    return Err(Error::validation("users.alpha", "ranges must be > 0"));
                }
            }
        }
        let multi = self.user_side.is_some();
        for s in &self.schemes {
            if *s == Scheme::TwoStage && !multi {
                return Err(invalid(ctx, "scheme two_stage needs a [user_side] section"));
            }
            if *s == Scheme::Zoom && multi {
                return Err(invalid(ctx, "with multi-antenna users use two_stage instead of zoom"));
            }
        }
        if let Some(u) = &self.user_side {
            ArrayGeometry::new(u.antennas, u.delays_per_chain)?;
            if !(u.alpha > 0.0) || u.slots < 1 {
                return Err(Error::validation("user_side", "alpha must be > 0 and slots >= 1"));
            }
        }
        Ok(())
    }
}

fn check_directions(theta: &[f64], users: usize, field: &'static str) -> Result<()> {
    if theta.is_empty() {
        return Err(Error::validation("users", "empty users list"));
    }
    if theta.len() != users {
        return Err(Error::validation(
            field,
            format!("{} directions for {users} users", theta.len()),
        ));
    }
    if theta.iter().any(|t| !(-1.0..=1.0).contains(t)) {
        return Err(Error::validation(field, "directions must lie in [-1, 1]"));
    }
    Ok(())
}

/// Beam-pattern request: one zoomed beamformer probed on a direction grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatternRequest {
    pub theta: f64,
    pub alpha: f64,
    pub from: f64,
    pub to: f64,
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatternSpec {
    pub id: String,
    #[serde(default)]
    pub description: String,
    pub system: SystemParams,
    pub pattern: PatternRequest,
    #[serde(default = "default_out")]
    pub outputs: PathBuf,
}

impl PatternSpec {
    pub fn parse(text: &str, context: &str) -> Result<Self> {
        let spec: PatternSpec = toml::from_str(text).map_err(|e| invalid(context, e.to_string()))?;
        SystemConfigBuilder::from_params(spec.system.clone()).build()?;
        let p = &spec.pattern;
        if !(p.step > 0.0 && p.to > p.from) {
            return Err(Error::validation("pattern", "need step > 0 and to > from"));
        }
        Ok(spec)
    }
}

/// A bundled experiment: either a beam-pattern plot or a Monte Carlo scenario.
#[derive(Debug, Clone, PartialEq)]
pub enum Preset {
    Pattern(PatternSpec),
    Scenario(ScenarioSpec),
}

impl Preset {
    pub fn into_scenario(self) -> Option<ScenarioSpec> {
        match self {
            Preset::Scenario(s) => Some(s),
            Preset::Pattern(_) => None,
        }
    }
}

pub fn load_scenario(path: &Path) -> Result<ScenarioSpec> {
    let context = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| invalid(&context, format!("cannot read file: {e}")))?;
    ScenarioSpec::parse(&text, &context)
}

pub const PRESET_NAMES: [&str; 9] = [
    "fig6", "fig9", "fig10", "fig11", "fig12", "fig13", "fig14", "fig15", "fig16",
];

/// Source text of a bundled preset.
pub fn preset_source(name: &str) -> Option<&'static str> {
    Some(match name {
        "fig6" => include_str!("../../presets/fig6.toml"),
        "fig9" => include_str!("../../presets/fig9.toml"),
        "fig10" => include_str!("../../presets/fig10.toml"),
        "fig11" => include_str!("../../presets/fig11.toml"),
        "fig12" => include_str!("../../presets/fig12.toml"),
        "fig13" => include_str!("../../presets/fig13.toml"),
        "fig14" => include_str!("../../presets/fig14.toml"),
        "fig15" => include_str!("../../presets/fig15.toml"),
        "fig16" => include_str!("../../presets/fig16.toml"),
        _ => return None,
    })
}

pub fn load_preset(name: &str) -> Result<Preset> {
    let text = preset_source(name).ok_or_else(|| {
        Error::validation(
            "preset",
            format!("unknown preset '{name}' (known: {})", PRESET_NAMES.join(", ")),
        )
    })?;
    let context = format!("preset {name}");
    if text.contains("\n[pattern]") {
        PatternSpec::parse(text, &context).map(Preset::Pattern)
    } else {
        ScenarioSpec::parse(text, &context).map(Preset::Scenario)
    }
}

/// Loads a preset that must be a Monte Carlo scenario.
pub fn load_preset_scenario(name: &str) -> Result<ScenarioSpec> {
    load_preset(name)?
        .into_scenario()
        .ok_or_else(|| Error::validation("preset", format!("'{name}' is a beam-pattern preset")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_parses() {
        for name in PRESET_NAMES {
            match load_preset(name).unwrap() {
                Preset::Pattern(p) => assert_eq!(p.id, name),
                Preset::Scenario(s) => assert_eq!(s.id, name),
            }
        }
        assert!(matches!(load_preset("fig6").unwrap(), Preset::Pattern(_)));
        assert!(load_preset("bogus").unwrap_err().is_validation());
    }

    #[test]
    fn fig11_parameters() {
        let spec = load_preset_scenario("fig11").unwrap();
        let cfg = spec.system_config().unwrap();
        assert_eq!(
            (cfg.antennas(), cfg.subcarriers(), cfg.users(), cfg.delays_per_chain()),
            (256, 128, 4, 16)
        );
        assert_eq!(
            (cfg.carrier_hz(), cfg.bandwidth_hz(), cfg.pilot_len()),
            (100e9, 10e9, 10)
        );
        assert!((cfg.snr_db() - 30.0).abs() < 1e-9);
        assert!(matches!(spec.users, UsersSpec::RandomDrift { alpha_max, .. } if alpha_max == 0.1));
    }

    #[test]
    fn fig14_parameters() {
        let spec = load_preset_scenario("fig14").unwrap();
        let cfg = spec.system_config().unwrap();
        assert_eq!((cfg.carrier_hz(), cfg.bandwidth_hz()), (300e9, 5e9));
        assert!(matches!(spec.users, UsersSpec::RandomDrift { alpha_max, .. } if alpha_max == 0.2));
    }

    #[test]
    fn empty_users_rejected() {
        let text = preset_source("fig9")
            .unwrap()
            .replace("theta0 = [-0.4, 0.16, -0.15, 0.35]", "theta0 = []");
        let err = ScenarioSpec::parse(&text, "t").unwrap_err();
        assert!(err.is_validation(), "{err}");
    }

    #[test]
    fn parse_errors_carry_context() {
        let err = ScenarioSpec::parse("id = 3", "broken.toml").unwrap_err();
        assert!(err.to_string().contains("broken.toml"));
        let text = preset_source("fig11")
            .unwrap()
            .replace("antennas = 256", "antennas = 250");
        let err = ScenarioSpec::parse(&text, "t").unwrap_err();
        assert!(
            matches!(
                err,
                Error::Validation {
                    field: "delays_per_chain",
                    ..
                }
            ),
            "{err}"
        );
    }
}
