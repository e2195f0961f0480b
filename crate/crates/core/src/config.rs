//! Run configuration read from TOML. Missing keys take the documented
//! defaults; unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cavity::{CavityFiberConfig, MechOscillator};
use crate::drive::{DemodSpec, LangevinSpec};
use crate::error::{Error, Result};
use crate::noise::{NoiseEnv, NoisePort};
use crate::optim::CoolingSearchSpec;
use crate::propagator::{DriveSpec, EquilibriumOptions, DEFAULT_SEED_RATIO};
use crate::spectroscopy::{ForwardMode, SweepSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MechanicsSection {
    /// kg
    pub mass: f64,
    /// Resonance frequency (Hz).
    pub f_m: f64,
    pub q: f64,
    /// K
    pub temperature: f64,
}

impl Default for MechanicsSection {
    fn default() -> Self {
        Self {
            mass: 1e-10,
            f_m: 6.1e3,
            q: 5000.0,
            temperature: 300.0,
        }
    }
}

impl MechanicsSection {
    pub fn oscillator(&self) -> MechOscillator {
        MechOscillator::from_q(self.mass, self.f_m, self.q, self.temperature)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DriveSection {
    pub power_mw: f64,
    /// Detuning `ω_cav − ω_L` (Hz).
    pub delta_hz: f64,
    /// Stokes seed power relative to the input.
    pub seed_ratio: f64,
    pub equilibrium: EquilibriumOptions,
    pub demod: DemodSpec,
    pub langevin: LangevinSpec,
}

impl Default for DriveSection {
    fn default() -> Self {
        Self {
            power_mw: 30.0,
            delta_hz: 0.0,
            seed_ratio: DEFAULT_SEED_RATIO,
            equilibrium: EquilibriumOptions::default(),
            demod: DemodSpec::default(),
            langevin: LangevinSpec::default(),
        }
    }
}

impl DriveSection {
    pub fn p_in(&self) -> f64 {
        self.power_mw * 1e-3
    }

    pub fn spec(&self) -> DriveSpec {
        let mut d = DriveSpec::new(self.p_in(), crate::constants::TWO_PI * self.delta_hz);
        d.seed_power_ratio = self.seed_ratio;
        d
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoisePreset {
    #[default]
    Room,
    Cryogenic,
}

/// Thermo-optic parameters: a preset plus optional per-field overrides.
/// The fiber length always follows `[cavity]`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSection {
    pub preset: NoisePreset,
    pub port: NoisePort,
    pub q: Option<f64>,
    pub kappa_t: Option<f64>,
    pub d: Option<f64>,
    pub w0: Option<f64>,
    pub a_f: Option<f64>,
    pub temperature: Option<f64>,
}

impl NoiseSection {
    pub fn env(&self, length: f64) -> NoiseEnv {
        let base = match self.preset {
            NoisePreset::Room => NoiseEnv::room(length),
            NoisePreset::Cryogenic => NoiseEnv::cryogenic(length),
        };
        NoiseEnv {
            q: self.q.unwrap_or(base.q),
            kappa_t: self.kappa_t.unwrap_or(base.kappa_t),
            d: self.d.unwrap_or(base.d),
            w0: self.w0.unwrap_or(base.w0),
            a_f: self.a_f.unwrap_or(base.a_f),
            temperature: self.temperature.unwrap_or(base.temperature),
            port: self.port,
            ..base
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerSection {
    pub fit_mode: ForwardMode,
    pub fit_max_iters: u64,
    pub search: CoolingSearchSpec,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        Self {
            fit_mode: ForwardMode::Full,
            fit_max_iters: 50,
            search: CoolingSearchSpec::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub cavity: CavityFiberConfig,
    pub mechanics: MechanicsSection,
    pub drive: DriveSection,
    pub noise: NoiseSection,
    pub sweep: SweepSpec,
    pub optimizer: OptimizerSection,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(map_toml_error)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.cavity.validate()?;
        self.mechanics.oscillator().validate()?;
        self.drive.spec().validate()?;
        self.noise.env(self.cavity.l_fib).validate()?;
        self.sweep.validate()?;
        self.optimizer.search.validate()
    }

    /// Fully resolved configuration as TOML. Fails for integers TOML cannot
    /// hold (seeds above `i64::MAX`).
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn noise_env(&self) -> NoiseEnv {
        self.noise.env(self.cavity.l_fib)
    }
}

fn map_toml_error(e: toml::de::Error) -> Error {
    let msg = e.message();
    if let Some(rest) = msg.strip_prefix("unknown field `") {
        if let Some(end) = rest.find('`') {
            return Error::UnknownKey(rest[..end].to_string());
        }
    }
    Error::Config(e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let cfg = RunConfig::from_toml("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.cavity, CavityFiberConfig::default());
    }

    #[test]
    fn round_trip_through_toml() {
        let mut cfg = RunConfig::default();
        cfg.drive.power_mw = 75.0;
        cfg.noise.preset = NoisePreset::Cryogenic;
        cfg.noise.a_f = Some(40e-6);
        let back = RunConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn dotted_keys_and_sections() {
        let cfg = RunConfig::from_toml("cavity.r1 = 0.9\n[drive]\npower_mw = 60\n[drive.langevin]\nseed = 4\n").unwrap();
        assert_eq!(cfg.cavity.r1, 0.9);
        assert_eq!(cfg.drive.p_in(), 0.06);
        assert_eq!(cfg.drive.langevin.seed, 4);
    }

    #[test]
    fn unknown_key_is_named() {
        match RunConfig::from_toml("[cavity]\nmirror_colour = 1\n") {
            Err(Error::UnknownKey(k)) => assert_eq!(k, "mirror_colour"),
            other => panic!("{other:?}"),
        }
        let e = RunConfig::from_toml("[nonsense]\n").unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn invalid_values_rejected() {
        let e = RunConfig::from_toml("[cavity]\nr1 = 1.5\n").unwrap_err();
        assert_eq!(e.exit_code(), 2);
        assert!(RunConfig::from_toml("[cavity]\nr1 = \"high\"\n").is_err());
    }
}
