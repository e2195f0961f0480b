//! Single-mode theory: steady states, Brillouin threshold and the linearized
//! response of the cavity to mechanical motion and input noise.
//!
//! Frequency-domain convention is `x(t) = ∫ x[ω] e^{-iωt}`, so `d/dt → -iω`.
//! The fluctuation equations solved here are
//!
//! ```text
//! (-iω + κ_e + iΔ) δa  + (G_B ā/2)  δB = s_a
//! (-iω + κ_e - iΔ) δa† + (G_B ā*/2) δB = s_a†
//! (-iω + 2κ - G_B|ā|²) δB - G_B B̄ (ā* δa + ā δa†) = s_B
//! ```
//!
//! with `κ_e = κ + G_B B̄/2`. Above threshold `2κ = G_B|ā|²`, the last
//! equation is solved by `δB = (i/ω)(G_B B̄ X + s_B)` and the optical pair
//! collapses onto the `f`, `g`, `h` kernels.

use num_complex::Complex64;
use serde::Serialize;

use crate::cavity::{MechOscillator, SingleModeParams};
use crate::constants::{HBAR, TWO_PI};
use crate::error::{Error, Result};

const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SteadyState {
    /// Intracavity pump amplitude (sqrt photons).
    #[serde(skip)]
    pub a_bar: Complex64,
    /// Stokes photon number.
    pub b_bar: f64,
    /// Pump decay rate including Brillouin depletion (rad/s).
    pub kappa_eff: f64,
    pub above_threshold: bool,
}

impl SteadyState {
    pub fn pump_photons(&self) -> f64 {
        self.a_bar.norm_sqr()
    }
}

/// Steady state of the pump/Stokes single-mode equations.
pub fn steady_state(p: &SingleModeParams) -> SteadyState {
    let drive = (2.0 * p.kappa_ex).sqrt() * p.a_in;
    let s = p.g_b * p.a_in * p.a_in * p.kappa_ex / p.kappa - p.delta * p.delta;
    if p.g_b > 0.0 && s > 0.0 && s.sqrt() > p.kappa {
        let kappa_eff = s.sqrt();
        SteadyState {
            a_bar: drive / Complex64::new(kappa_eff, p.delta),
            b_bar: 2.0 * (kappa_eff - p.kappa) / p.g_b,
            kappa_eff,
            above_threshold: true,
        }
    } else {
        SteadyState {
            a_bar: drive / Complex64::new(p.kappa, p.delta),
            b_bar: 0.0,
            kappa_eff: p.kappa,
            above_threshold: false,
        }
    }
}

/// Input power (W) at which Brillouin oscillation starts for detuning `delta`.
/// Infinite when `G_B = 0`.
pub fn threshold_power(p: &SingleModeParams, delta: f64) -> f64 {
    if p.g_b <= 0.0 {
        return f64::INFINITY;
    }
    let a_in2 = p.kappa * (p.kappa * p.kappa + delta * delta) / (p.g_b * p.kappa_ex);
    a_in2 * HBAR * p.omega_l
}

/// Optical response kernels at one frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResponseKernels {
    pub omega: f64,
    pub f: Complex64,
    pub g: Complex64,
    /// `f*(-ω)`
    pub f_conj_neg: Complex64,
    /// `g*(-ω)`
    pub g_conj_neg: Complex64,
    pub h: Complex64,
    /// `δB` per unit of `X = ā*δa + ā δa†`.
    pub stokes_gain: Complex64,
}

fn stokes_coupling(p: &SingleModeParams, s: &SteadyState, omega: f64) -> Result<Complex64> {
    if s.b_bar > 0.0 {
        if omega == 0.0 {
            return Err(Error::ZeroFrequencyPole);
        }
        Ok(I * p.g_b * s.b_bar / omega)
    } else {
        Ok(Complex64::new(0.0, 0.0))
    }
}

pub fn kernels(p: &SingleModeParams, s: &SteadyState, omega: f64) -> Result<ResponseKernels> {
    let a = s.a_bar;
    let a2 = a.norm_sqr();
    let k_e = s.kappa_eff;
    let (f, g) = if s.b_bar > 0.0 {
        if omega == 0.0 {
            return Err(Error::ZeroFrequencyPole);
        }
        let pull = p.g_b * p.g_b * s.b_bar / (2.0 * omega);
        (
            Complex64::new(k_e, p.delta - omega + pull * a2),
            I * pull * a * a,
        )
    } else {
        (Complex64::new(k_e, p.delta - omega), Complex64::new(0.0, 0.0))
    };
    // same expressions at -ω, conjugated
    let (f_conj_neg, g_conj_neg) = if s.b_bar > 0.0 {
        let pull = p.g_b * p.g_b * s.b_bar / (2.0 * omega);
        (
            Complex64::new(k_e, -(p.delta + omega - pull * a2)),
            I * pull * (a * a).conj(),
        )
    } else {
        (Complex64::new(k_e, -(p.delta + omega)), Complex64::new(0.0, 0.0))
    };
    let h = 1.0 - g * g_conj_neg / (f * f_conj_neg);
    Ok(ResponseKernels {
        omega,
        f,
        g,
        f_conj_neg,
        g_conj_neg,
        h,
        stokes_gain: stokes_coupling(p, s, omega)?,
    })
}

/// Source terms entering the fluctuation equations for `δa`, `δa†`, `δB`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Sources {
    pub a: Complex64,
    pub a_dag: Complex64,
    pub b: Complex64,
}

impl Sources {
    /// Mirror displacement: `ω_cav(x) = ω_cav - G x`.
    pub fn displacement(p: &SingleModeParams, s: &SteadyState) -> Self {
        Self {
            a: I * p.g_om * s.a_bar,
            a_dag: -I * p.g_om * s.a_bar.conj(),
            b: Complex64::new(0.0, 0.0),
        }
    }

    /// Pump vacuum noise through a port of rate `rate`.
    pub fn pump_noise(rate: f64) -> Self {
        Self {
            a: Complex64::new((2.0 * rate).sqrt(), 0.0),
            ..Self::default()
        }
    }

    /// Stokes vacuum noise; `b̄` is taken real and positive.
    pub fn stokes_noise(rate: f64, s: &SteadyState) -> Self {
        Self {
            b: Complex64::new((2.0 * rate).sqrt() * s.b_bar.sqrt(), 0.0),
            ..Self::default()
        }
    }

    /// Detuning noise `φ̇` (rad/s per unit).
    pub fn detuning_noise(s: &SteadyState) -> Self {
        Self {
            a: -I * s.a_bar,
            a_dag: I * s.a_bar.conj(),
            b: Complex64::new(0.0, 0.0),
        }
    }
}

/// Fluctuation amplitudes `(δa, δa†, δB)` driven by `src` at frequency `omega`.
pub fn fluctuations(
    p: &SingleModeParams,
    s: &SteadyState,
    omega: f64,
    src: &Sources,
) -> Result<(Complex64, Complex64, Complex64)> {
    let k = kernels(p, s, omega)?;
    let b_direct = if s.b_bar > 0.0 { I * src.b / omega } else { Complex64::new(0.0, 0.0) };
    let s1 = src.a - 0.5 * p.g_b * s.a_bar * b_direct;
    let s2 = src.a_dag - 0.5 * p.g_b * s.a_bar.conj() * b_direct;
    let da = (s1 - k.g * s2 / k.f_conj_neg) / (k.f * k.h);
    let da_dag = (s2 - k.g_conj_neg * da) / k.f_conj_neg;
    let x = s.a_bar.conj() * da + s.a_bar * da_dag;
    let db = k.stokes_gain * x + b_direct;
    Ok((da, da_dag, db))
}

/// Radiation-pressure force `ħG (δ|a|² + δB)` per unit source.
pub fn force_response(p: &SingleModeParams, s: &SteadyState, omega: f64, src: &Sources) -> Result<Complex64> {
    let (da, da_dag, db) = fluctuations(p, s, omega, src)?;
    Ok(HBAR * p.g_om * (s.a_bar.conj() * da + s.a_bar * da_dag + db))
}

/// Optical contribution to the inverse mechanical susceptibility (N/m).
pub fn chi_opt_inv(p: &SingleModeParams, s: &SteadyState, omega: f64) -> Result<Complex64> {
    Ok(-force_response(p, s, omega, &Sources::displacement(p, s))?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Damping {
    /// Optomechanical damping rate (rad/s).
    pub gamma_opt: f64,
    /// Spring shift of the mechanical frequency (rad/s).
    pub d_omega: f64,
}

/// Damping and spring shift evaluated at the bare mechanical frequency.
pub fn damping_and_shift(p: &SingleModeParams, mech: &MechOscillator, s: &SteadyState) -> Result<Damping> {
    let chi = chi_opt_inv(p, s, mech.omega_m)?;
    let m_omega = mech.mass * mech.omega_m;
    Ok(Damping {
        gamma_opt: -chi.im / m_omega,
        d_omega: chi.re / (2.0 * m_omega),
    })
}

/// One row of a detuning sweep; frequencies in Hz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearPoint {
    pub delta_hz: f64,
    pub gamma_opt_hz: f64,
    pub d_omega_hz: f64,
    pub b_bar: f64,
    pub a_bar2: f64,
}

/// Damping and spring shift over a list of detunings (rad/s).
pub fn damping_curve(p: &SingleModeParams, mech: &MechOscillator, detunings: &[f64]) -> Result<Vec<LinearPoint>> {
    detunings
        .iter()
        .map(|&delta| {
            let q = p.with_delta(delta);
            let s = steady_state(&q);
            let d = damping_and_shift(&q, mech, &s)?;
            Ok(LinearPoint {
                delta_hz: delta / TWO_PI,
                gamma_opt_hz: d.gamma_opt / TWO_PI,
                d_omega_hz: d.d_omega / TWO_PI,
                b_bar: s.b_bar,
                a_bar2: s.pump_photons(),
            })
        })
        .collect()
}
