//! Thermo-optic detuning noise, noise-to-force transfer functions, the
//! mirror displacement spectrum and the final phonon occupancy.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::cavity::{MechOscillator, SingleModeParams};
use crate::constants::{C, HBAR, K_B, TWO_PI};
use crate::error::{Error, Result};
use crate::linear::{chi_opt_inv, force_response, SteadyState, Sources};

/// Which loss rate sets the vacuum-noise coupling of the pump and Stokes
/// fields.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoisePort {
    /// `sqrt(2 κ)`: vacuum enters through every loss channel.
    #[default]
    Total,
    /// `sqrt(2 κ_ex)`: input coupler only.
    External,
}

/// Fiber thermo-optic noise parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseEnv {
    /// Thermo-optic coefficient (1/K).
    pub q: f64,
    /// Thermal conductivity (W/(m K)).
    pub kappa_t: f64,
    /// Thermal diffusivity (m²/s).
    pub d: f64,
    /// Mode-field radius (m).
    pub w0: f64,
    /// Fiber outer radius (m).
    pub a_f: f64,
    pub temperature: f64,
    /// Fiber length (m).
    pub length: f64,
    pub lambda: f64,
    #[serde(default)]
    pub port: NoisePort,
}

impl NoiseEnv {
    pub fn room(length: f64) -> Self {
        Self {
            q: 6.7e-6,
            kappa_t: 1.35,
            d: 8.2e-7,
            w0: 3.3e-6,
            a_f: 62.5e-6,
            temperature: 300.0,
            length,
            lambda: 1064e-9,
            port: NoisePort::Total,
        }
    }

    pub fn cryogenic(length: f64) -> Self {
        Self {
            q: 2.8e-6,
            kappa_t: 0.52,
            d: 2.53e-6,
            temperature: 77.0,
            ..Self::room(length)
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("q", self.q),
            ("kappa_t", self.kappa_t),
            ("d", self.d),
            ("w0", self.w0),
            ("a_f", self.a_f),
            ("temperature", self.temperature),
            ("length", self.length),
            ("lambda", self.lambda),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(name, format!("must be positive, got {v}")));
            }
        }
        if !(self.w0 < self.a_f) {
            return Err(Error::invalid("w0", "mode-field radius must be below the fiber radius"));
        }
        Ok(())
    }

    pub fn k_max(&self) -> f64 {
        2.0 / self.w0
    }

    pub fn k_min(&self) -> f64 {
        2.0 / self.a_f
    }

    /// Vacuum coupling rate for the chosen port.
    pub fn port_rate(&self, p: &SingleModeParams) -> f64 {
        match self.port {
            NoisePort::Total => p.kappa,
            NoisePort::External => p.kappa_ex,
        }
    }
}

/// PSD of the detuning noise `φ̇` ((rad/s)²/Hz); even in `omega`.
pub fn thermoptic_psd(env: &NoiseEnv, omega: f64) -> f64 {
    let w = (omega / env.d).powi(2);
    let f = ((env.k_max().powi(4) + w) / (env.k_min().powi(4) + w)).ln();
    std::f64::consts::PI * C * C * K_B * env.temperature.powi(2) * env.q * env.q
        / (4.0 * env.kappa_t * env.lambda * env.lambda * env.length)
        * f
}

/// Force on the mirror per unit of each noise input (N per unit source).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransferFunctions {
    pub chi_a: Complex64,
    pub chi_b: Complex64,
    pub chi_phidot: Complex64,
}

pub fn transfer_functions(
    p: &SingleModeParams,
    s: &SteadyState,
    env: &NoiseEnv,
    omega: f64,
) -> Result<TransferFunctions> {
    let rate = env.port_rate(p);
    Ok(TransferFunctions {
        chi_a: force_response(p, s, omega, &Sources::pump_noise(rate))?,
        chi_b: force_response(p, s, omega, &Sources::stokes_noise(rate, s))?,
        chi_phidot: force_response(p, s, omega, &Sources::detuning_noise(s))?,
    })
}

/// Force noise PSD split by origin (N²/Hz).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct ForceNoise {
    pub thermal: f64,
    pub pump_shot: f64,
    pub stokes_shot: f64,
    pub thermoptic: f64,
}

impl ForceNoise {
    pub fn total(&self) -> f64 {
        self.thermal + self.pump_shot + self.stokes_shot + self.thermoptic
    }

    fn scaled(self, k: f64) -> Self {
        Self {
            thermal: k * self.thermal,
            pump_shot: k * self.pump_shot,
            stokes_shot: k * self.stokes_shot,
            thermoptic: k * self.thermoptic,
        }
    }

    fn add(self, o: Self) -> Self {
        Self {
            thermal: self.thermal + o.thermal,
            pump_shot: self.pump_shot + o.pump_shot,
            stokes_shot: self.stokes_shot + o.stokes_shot,
            thermoptic: self.thermoptic + o.thermoptic,
        }
    }
}

pub fn force_noise(
    p: &SingleModeParams,
    s: &SteadyState,
    mech: &MechOscillator,
    env: &NoiseEnv,
    omega: f64,
) -> Result<ForceNoise> {
    let tf = transfer_functions(p, s, env, omega)?;
    Ok(ForceNoise {
        thermal: 2.0 * K_B * mech.t_bath * mech.mass * mech.gamma_m,
        pump_shot: tf.chi_a.norm_sqr(),
        stokes_shot: tf.chi_b.norm_sqr(),
        thermoptic: thermoptic_psd(env, omega) * tf.chi_phidot.norm_sqr(),
    })
}

/// Mechanical susceptibility dressed by the optical spring and damping.
pub fn chi_eff(p: &SingleModeParams, s: &SteadyState, mech: &MechOscillator, omega: f64) -> Result<Complex64> {
    let bare = mech.mass * Complex64::new(mech.omega_m.powi(2) - omega * omega, -mech.gamma_m * omega);
    Ok(1.0 / (bare + chi_opt_inv(p, s, omega)?))
}

/// Displacement PSD (m²/Hz).
pub fn displacement_psd(
    p: &SingleModeParams,
    s: &SteadyState,
    mech: &MechOscillator,
    env: &NoiseEnv,
    omega: f64,
) -> Result<f64> {
    Ok(chi_eff(p, s, mech, omega)?.norm_sqr() * force_noise(p, s, mech, env, omega)?.total())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhononResult {
    pub n_f: f64,
    /// Shifted mechanical frequency (rad/s).
    pub omega_eff: f64,
    /// Total mechanical damping `Γ_m + Γ_opt` (rad/s).
    pub gamma_eff: f64,
    pub gamma_opt: f64,
    pub q_eff: f64,
    /// Per-source occupancies; they add up to `n_f`.
    pub contributions: ForceNoise,
    /// False when the oscillator is unstable or the high-Q shortcut is
    /// outside its range (`Q_eff <= 100`).
    pub valid: bool,
}

pub const MIN_Q_EFF: f64 = 100.0;

/// Occupancy from the Lorentzian approximation: noise sampled at `±Ω'`.
pub fn phonon_number(
    p: &SingleModeParams,
    s: &SteadyState,
    mech: &MechOscillator,
    env: &NoiseEnv,
) -> Result<PhononResult> {
    let chi = chi_opt_inv(p, s, mech.omega_m)?;
    let m_omega = mech.mass * mech.omega_m;
    let gamma_opt = -chi.im / m_omega;
    let omega_eff = mech.omega_m + chi.re / (2.0 * m_omega);
    let gamma_eff = mech.gamma_m + gamma_opt;
    let q_eff = omega_eff / gamma_eff;
    if !(omega_eff > 0.0 && gamma_eff > 0.0) {
        return Ok(PhononResult {
            n_f: f64::INFINITY,
            omega_eff,
            gamma_eff,
            gamma_opt,
            q_eff,
            contributions: ForceNoise::default(),
            valid: false,
        });
    }
    let plus = force_noise(p, s, mech, env, omega_eff)?;
    let minus = force_noise(p, s, mech, env, -omega_eff)?;
    let contributions = plus.add(minus).scaled(1.0 / (4.0 * mech.mass * HBAR * omega_eff * gamma_eff));
    Ok(PhononResult {
        n_f: contributions.total(),
        omega_eff,
        gamma_eff,
        gamma_opt,
        q_eff,
        contributions,
        valid: q_eff > MIN_Q_EFF,
    })
}

/// Occupancy by quadrature of `S_xx` over the whole frequency axis.
///
/// Each half axis is mapped onto a finite interval with
/// `ω = ±(Ω' + w tan u)`, `w = Γ_eff / 2`, which flattens the resonance.
pub fn phonon_number_direct(
    p: &SingleModeParams,
    s: &SteadyState,
    mech: &MechOscillator,
    env: &NoiseEnv,
    nodes: usize,
) -> Result<f64> {
    let short = phonon_number(p, s, mech, env)?;
    if !(short.gamma_eff > 0.0 && short.omega_eff > 0.0) {
        return Err(Error::invalid("gamma_eff", "oscillator is unstable"));
    }
    let w = 0.5 * short.gamma_eff;
    let center = short.omega_eff;
    let u_lo = (-center / w).atan();
    let u_hi = 0.5 * std::f64::consts::PI;
    let n = nodes.max(16);
    let mut total = 0.0;
    // midpoint rule keeps clear of the endpoints (ω = 0 and ω = ∞)
    let du = (u_hi - u_lo) / n as f64;
    for i in 0..n {
        let u = u_lo + (i as f64 + 0.5) * du;
        let omega = center + w * u.tan();
        let jac = w / u.cos().powi(2);
        for sign in [1.0, -1.0] {
            total += displacement_psd(p, s, mech, env, sign * omega)? * jac * du;
        }
    }
    Ok(mech.mass * center / HBAR * total / TWO_PI)
}

/// Thermal occupancy with optical damping only, `k_B T/(ħΩ) · Γ_m/(Γ_m+Γ_opt)`.
pub fn thermal_estimate(mech: &MechOscillator, gamma_opt: f64) -> f64 {
    K_B * mech.t_bath / (HBAR * mech.omega_m) * mech.gamma_m / (mech.gamma_m + gamma_opt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cavity::{single_mode_from_config, CavityFiberConfig};
    use crate::linear::steady_state;
    use approx::assert_relative_eq;

    fn quiet_env() -> NoiseEnv {
        // thermo-optic noise negligible
        NoiseEnv {
            q: 1e-30,
            ..NoiseEnv::room(10.0)
        }
    }

    #[test]
    fn thermoptic_limits() {
        let env = NoiseEnv::room(1.0);
        assert!(thermoptic_psd(&env, 0.0) > 0.0);
        assert!(thermoptic_psd(&env, 1e20) < 1e-10 * thermoptic_psd(&env, 0.0));
        let half = NoiseEnv { length: 2.0, ..env };
        assert_relative_eq!(thermoptic_psd(&half, 1e4), 0.5 * thermoptic_psd(&env, 1e4), max_relative = 1e-12);
        assert_eq!(thermoptic_psd(&env, -3e4), thermoptic_psd(&env, 3e4));
    }

    #[test]
    fn thermoptic_low_frequency_value() {
        // ω → 0: F = ln((a_f / w0)^4)
        let env = NoiseEnv::cryogenic(1.6);
        let f = 4.0 * (env.a_f / env.w0).ln();
        let pre = std::f64::consts::PI * C * C * K_B * 77.0f64.powi(2) * 2.8e-6f64.powi(2)
            / (4.0 * 0.52 * 1064e-9f64.powi(2) * 1.6);
        assert_relative_eq!(thermoptic_psd(&env, 0.0), pre * f, max_relative = 1e-12);
    }

    #[test]
    fn thermal_only_occupancy() {
        let mech = MechOscillator::from_q(1e-12, 50e3, 1e5, 300.0);
        let p = single_mode_from_config(&CavityFiberConfig::default(), 0.0, 0.0).unwrap();
        let s = steady_state(&p);
        let r = phonon_number(&p, &s, &mech, &quiet_env()).unwrap();
        assert!(r.valid);
        assert_relative_eq!(r.n_f, K_B * 300.0 / (HBAR * mech.omega_m), max_relative = 1e-9);
    }

    #[test]
    fn cooled_thermal_occupancy() {
        let mech = MechOscillator::from_q(1e-11, 300e3, 1e6, 300.0);
        let p = single_mode_from_config(&CavityFiberConfig::default(), 0.02, 2e6).unwrap().without_sbs();
        let s = steady_state(&p);
        let r = phonon_number(&p, &s, &mech, &quiet_env()).unwrap();
        assert!(r.gamma_opt > 0.0);
        let expect = K_B * 300.0 / (HBAR * r.omega_eff) * mech.gamma_m / r.gamma_eff;
        assert_relative_eq!(r.contributions.thermal, expect, max_relative = 1e-9);
    }

    #[test]
    fn contributions_sum() {
        let mech = MechOscillator::from_q(1e-12, 20e3, 1e9, 77.0);
        let p = single_mode_from_config(&CavityFiberConfig::default(), 0.06, 1e6).unwrap();
        let s = steady_state(&p);
        let r = phonon_number(&p, &s, &mech, &NoiseEnv::cryogenic(10.0)).unwrap();
        let c = r.contributions;
        for v in [c.thermal, c.pump_shot, c.stokes_shot, c.thermoptic] {
            assert!(v >= 0.0);
        }
        assert_eq!(r.n_f, c.total());
    }

    #[test]
    fn unstable_is_invalid() {
        let mech = MechOscillator::from_q(1e-12, 300e3, 1e9, 300.0);
        let p = single_mode_from_config(&CavityFiberConfig::default(), 0.02, -2e6).unwrap().without_sbs();
        let r = phonon_number(&p, &steady_state(&p), &mech, &quiet_env()).unwrap();
        assert!(!r.valid);
    }

    #[test]
    fn direct_integration_agrees() {
        let mech = MechOscillator::from_q(1e-11, 300e3, 1e5, 300.0);
        let p = single_mode_from_config(&CavityFiberConfig::default(), 0.02, 2e6).unwrap();
        let s = steady_state(&p);
        let env = NoiseEnv::room(10.003);
        let short = phonon_number(&p, &s, &mech, &env).unwrap();
        assert!(short.valid);
        let direct = phonon_number_direct(&p, &s, &mech, &env, 20_000).unwrap();
        assert_relative_eq!(direct, short.n_f, max_relative = 0.02);
    }

    #[test]
    fn spectrum_peaks_at_shifted_frequency() {
        let mech = MechOscillator::from_q(1e-10, 100e3, 1e4, 300.0);
        let p = single_mode_from_config(&CavityFiberConfig::default(), 0.02, 1.5e6).unwrap();
        let s = steady_state(&p);
        let env = quiet_env();
        let r = phonon_number(&p, &s, &mech, &env).unwrap();
        let span = 5.0 * r.gamma_eff;
        let best = (0..=2000)
            .map(|i| r.omega_eff - span + span * i as f64 / 1000.0)
            .map(|w| (w, displacement_psd(&p, &s, &mech, &env, w).unwrap()))
            .fold((0.0, 0.0), |a, b| if b.1 > a.1 { b } else { a });
        assert!((best.0 - r.omega_eff).abs() < 0.02 * r.gamma_eff + span / 1000.0);
    }
}
