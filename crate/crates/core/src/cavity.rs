//! Shared domain types and derived cavity quantities.
//!
//! The spatial grid has one free-space element of length `l_free` and
//! `n_elements` fiber elements of length `l_free / n_refr`, so every element
//! takes the same transit time `dt = l_free / c`.

use serde::{Deserialize, Serialize};

use crate::constants::{C, EPS0, ETA0, H, HBAR, K_B, TWO_PI};
use crate::error::{Error, Result};

/// How the Brillouin gain `g_B` maps onto the coupled-amplitude coefficient.
///
/// `Intensity` gives the counter-propagating Stokes wave an intensity gain of
/// `g_B * I` per unit length; `Literal` uses `c_B = n g_B / eta0` on fields
/// normalized by `<u> = n^2 eps0 |E|^2 / 2`, which is four times stronger.
/// Both conventions scale the temporal gain `G_B` identically, so the spatial
/// and single-mode models always agree on the threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum GainConvention {
    #[default]
    Intensity,
    Literal,
}

impl GainConvention {
    pub fn factor(self) -> f64 {
        match self {
            GainConvention::Intensity => 0.25,
            GainConvention::Literal => 1.0,
        }
    }
}

/// Geometry, mirrors and fiber optical constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CavityFiberConfig {
    /// Free-space length between input mirror and fiber (m).
    pub l_free: f64,
    /// Fiber length (m).
    pub l_fib: f64,
    pub n_elements: usize,
    pub n_refr: f64,
    /// Input mirror power reflectivity.
    pub r1: f64,
    /// Far mirror (fiber Bragg grating) power reflectivity.
    pub r2: f64,
    /// Power surviving the free-space/fiber mode matching, per round trip.
    pub beta_mm: f64,
    /// Fiber power attenuation (1/m).
    pub alpha_loss: f64,
    /// Peak Brillouin gain (m/W).
    pub g_b: f64,
    /// Pump wavelength (m).
    pub lambda_p: f64,
    /// Fiber mode-field diameter (m).
    pub mfd: f64,
    /// Free-space beam waist diameter (m).
    pub w_free: f64,
    #[serde(default)]
    pub gain_convention: GainConvention,
}

impl Default for CavityFiberConfig {
    fn default() -> Self {
        Self {
            l_free: 0.1,
            l_fib: 10.003,
            n_elements: 145,
            n_refr: 1.4496,
            r1: 0.85,
            r2: 1.0,
            beta_mm: 0.70,
            alpha_loss: 5.62e-4,
            g_b: 1.13e-11,
            lambda_p: 1064e-9,
            mfd: 6.6e-6,
            w_free: 1e-3,
            gain_convention: GainConvention::Intensity,
        }
    }
}

impl CavityFiberConfig {
    /// Same cavity with `n_elements` fiber elements; the fiber length follows
    /// from the uniform-transit grid.
    pub fn with_elements(&self, n_elements: usize) -> Self {
        Self {
            n_elements,
            l_fib: self.l_free * n_elements as f64 / self.n_refr,
            ..self.clone()
        }
    }

    /// Same fiber with the grid refined by `factor` (shorter free-space step).
    pub fn refined(&self, factor: usize) -> Self {
        Self {
            l_free: self.l_free / factor as f64,
            n_elements: self.n_elements * factor,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("l_free", self.l_free),
            ("n_refr", self.n_refr),
            ("lambda_p", self.lambda_p),
            ("mfd", self.mfd),
            ("w_free", self.w_free),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(name, format!("must be positive, got {v}")));
            }
        }
        for (name, v) in [("l_fib", self.l_fib), ("alpha_loss", self.alpha_loss), ("g_b", self.g_b)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(name, format!("must be nonnegative, got {v}")));
            }
        }
        if !(self.r1 > 0.0 && self.r1 < 1.0) {
            return Err(Error::invalid("r1", format!("must lie in (0, 1), got {}", self.r1)));
        }
        if !(self.r2 > 0.0 && self.r2 <= 1.0) {
            return Err(Error::invalid("r2", format!("must lie in (0, 1], got {}", self.r2)));
        }
        if !(self.beta_mm > 0.0 && self.beta_mm <= 1.0) {
            return Err(Error::invalid(
                "beta_mm",
                format!("must lie in (0, 1], got {}", self.beta_mm),
            ));
        }
        if self.n_elements == 0 {
            return Err(Error::invalid("n_elements", "must be at least 1"));
        }
        let grid_fib = self.l_free * self.n_elements as f64 / self.n_refr;
        if ((grid_fib - self.l_fib) / grid_fib).abs() > 1e-4 {
            return Err(Error::invalid(
                "l_fib",
                format!(
                    "{} m is inconsistent with the uniform-transit grid (l_free * n_elements / n_refr = {grid_fib} m)",
                    self.l_fib
                ),
            ));
        }
        Ok(())
    }

    /// Transit time of one grid element (s).
    pub fn dt(&self) -> f64 {
        self.l_free / C
    }

    /// Physical length of one fiber element (m).
    pub fn dz_fiber(&self) -> f64 {
        self.l_fib / self.n_elements as f64
    }

    /// One-way optical path length (m).
    pub fn optical_length(&self) -> f64 {
        self.l_free + self.n_refr * self.l_fib
    }

    pub fn round_trip_time(&self) -> f64 {
        2.0 * self.optical_length() / C
    }

    /// Lattice steps per round trip.
    pub fn round_trip_steps(&self) -> usize {
        2 * (self.n_elements + 1)
    }

    pub fn omega_l(&self) -> f64 {
        TWO_PI * C / self.lambda_p
    }

    /// Effective power reflectance seen from inside the input mirror: far
    /// mirror, fiber attenuation over both passes and mode-matching loss.
    pub fn back_reflectance(&self) -> f64 {
        self.r2 * self.beta_mm * (-2.0 * self.alpha_loss * self.l_fib).exp()
    }

    /// Round-trip amplitude factor including the input mirror.
    pub fn round_trip_amplitude(&self) -> f64 {
        (self.r1 * self.back_reflectance()).sqrt()
    }

    pub fn fiber_area(&self) -> f64 {
        std::f64::consts::PI * (0.5 * self.mfd).powi(2)
    }

    pub fn free_area(&self) -> f64 {
        std::f64::consts::PI * (0.5 * self.w_free).powi(2)
    }

    /// Spatial Brillouin coefficient `c_B` (m/V^2 per m) under the configured
    /// gain convention.
    pub fn c_b(&self) -> f64 {
        self.gain_convention.factor() * self.n_refr * self.g_b / ETA0
    }

    /// Cavity frequency pull per outward input-mirror displacement (rad/s/m).
    pub fn g_om(&self) -> f64 {
        self.omega_l() / self.optical_length()
    }
}

/// Derived spectral quantities; frequencies in Hz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DerivedCavity {
    pub fsr: f64,
    pub kappa_l: f64,
    pub finesse_l: f64,
    pub kappa_a: f64,
    pub finesse_a: f64,
    pub round_trip_time: f64,
    /// Set when the round trip is lossless and both finesses diverge.
    pub diverges: bool,
}

/// Airy finesse from the round-trip amplitude factor `g`.
///
/// `None` when the resonance is too shallow to have a half-maximum width.
pub fn airy_finesse(g: f64) -> Option<f64> {
    if g >= 1.0 {
        return Some(f64::INFINITY);
    }
    if g <= 0.0 {
        return None;
    }
    let s = (1.0 - g) / (2.0 * g.sqrt());
    (s <= 1.0).then(|| std::f64::consts::PI / (2.0 * s.asin()))
}

/// Inverse of [`airy_finesse`].
pub fn round_trip_from_airy_finesse(finesse: f64) -> f64 {
    let s = (std::f64::consts::PI / (2.0 * finesse)).sin();
    let root = -s + (s * s + 1.0).sqrt();
    root * root
}

pub fn derive_cavity(config: &CavityFiberConfig) -> Result<DerivedCavity> {
    let path = config.optical_length();
    if !(path > 0.0) {
        return Err(Error::invalid("optical_length", "total optical path is zero"));
    }
    let t_rt = 2.0 * path / C;
    let fsr = 1.0 / t_rt;
    let g = config.round_trip_amplitude();
    if g >= 1.0 {
        return Ok(DerivedCavity {
            fsr,
            kappa_l: 0.0,
            finesse_l: f64::INFINITY,
            kappa_a: 0.0,
            finesse_a: f64::INFINITY,
            round_trip_time: t_rt,
            diverges: true,
        });
    }
    // amplitude decay rate, converted to Hz
    let kappa_l = -g.ln() / t_rt / TWO_PI;
    let finesse_l = fsr / (2.0 * kappa_l);
    let finesse_a = airy_finesse(g)
        .ok_or_else(|| Error::invalid("round_trip_amplitude", format!("{g} too low for an Airy linewidth")))?;
    let kappa_a = fsr / (2.0 * finesse_a);
    Ok(DerivedCavity {
        fsr,
        kappa_l,
        finesse_l,
        kappa_a,
        finesse_a,
        round_trip_time: t_rt,
        diverges: false,
    })
}

/// Temporal Brillouin gain `G_B` (rad/s per photon).
pub fn brillouin_temporal_gain(config: &CavityFiberConfig) -> Result<f64> {
    if !(config.mfd > 0.0) {
        return Err(Error::invalid("mfd", "mode-field diameter must be positive"));
    }
    if !(config.l_fib > 0.0) {
        return Err(Error::invalid("l_fib", "fiber length must be positive"));
    }
    let v_fib = config.l_fib * config.fiber_area();
    let n3 = config.n_refr.powi(3);
    Ok(2.0 * HBAR * config.omega_l() * C / (v_fib * EPS0 * n3) * config.c_b())
}

/// Photon flux (photons/s) of a beam of power `p` (W) at wavelength `lambda` (m).
pub fn photon_flux(p: f64, lambda: f64) -> f64 {
    p * lambda / (H * C)
}

/// Parameters of the single-mode model; all rates in rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SingleModeParams {
    /// Cavity amplitude decay rate (half-linewidth).
    pub kappa: f64,
    pub kappa_ex: f64,
    /// Detuning `omega_cav - omega_L`; positive is red.
    pub delta: f64,
    /// Frequency pull per displacement (rad/s/m).
    pub g_om: f64,
    /// Temporal Brillouin gain (rad/s per photon).
    pub g_b: f64,
    /// Input amplitude (sqrt(photons/s)).
    pub a_in: f64,
    pub omega_l: f64,
}

impl SingleModeParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.kappa > 0.0) {
            return Err(Error::invalid("kappa", "must be positive"));
        }
        if !(self.kappa_ex > 0.0 && self.kappa_ex <= self.kappa) {
            return Err(Error::invalid("kappa_ex", "must satisfy 0 < kappa_ex <= kappa"));
        }
        if !(self.g_b >= 0.0) {
            return Err(Error::invalid("g_b", "must be nonnegative"));
        }
        Ok(())
    }

    pub fn with_delta(self, delta: f64) -> Self {
        Self { delta, ..self }
    }

    pub fn with_power(self, p_in: f64) -> Self {
        Self {
            a_in: (p_in / (HBAR * self.omega_l)).sqrt(),
            ..self
        }
    }

    pub fn without_sbs(self) -> Self {
        Self { g_b: 0.0, ..self }
    }

    /// Input power (W) equivalent to `a_in`.
    pub fn input_power(&self) -> f64 {
        self.a_in * self.a_in * HBAR * self.omega_l
    }
}

/// Resonant pump photon number stored in the lattice per watt of input,
/// counted the way [`crate::propagator::FieldLattice::photon_numbers`] does.
pub fn lattice_photons_per_watt(config: &CavityFiberConfig) -> f64 {
    let g = config.round_trip_amplitude();
    let p_f0 = (1.0 - config.r1) / (1.0 - g).powi(2);
    let att = 1.0 - 0.5 * config.alpha_loss * config.dz_fiber();
    let att_p = att * att;
    let sqrt_beta = config.beta_mm.sqrt();
    let n = config.n_elements;
    // forward samples: free-space node, then fiber nodes 1..=n
    let mut fwd = p_f0;
    let mut p = p_f0 * sqrt_beta;
    for _ in 1..=n {
        fwd += p;
        p *= att_p;
    }
    // backward samples: fiber nodes n+1 down to 1
    let mut bwd = 0.0;
    let mut q = p * config.r2;
    for _ in 0..=n {
        bwd += q;
        q *= att_p;
    }
    (fwd + bwd) * config.dt() / (HBAR * config.omega_l())
}

/// Single-mode parameters equivalent to the spatial cavity at power `p_in`
/// and detuning `delta` (rad/s).
pub fn single_mode_from_config(config: &CavityFiberConfig, p_in: f64, delta: f64) -> Result<SingleModeParams> {
    config.validate()?;
    let t_rt = config.round_trip_time();
    let g = config.round_trip_amplitude();
    let kappa = -g.ln() / t_rt;
    let omega_l = config.omega_l();
    // resonant photon number N = 2 kappa_ex a_in^2 / kappa^2
    let photons_per_flux = lattice_photons_per_watt(config) * HBAR * omega_l;
    let kappa_ex = (0.5 * photons_per_flux * kappa * kappa).min(kappa);
    Ok(SingleModeParams {
        kappa,
        kappa_ex,
        delta,
        g_om: config.g_om(),
        g_b: brillouin_temporal_gain(config)?,
        a_in: (p_in / (HBAR * omega_l)).sqrt(),
        omega_l,
    })
}

/// Mechanical oscillator; rates in rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MechOscillator {
    pub mass: f64,
    pub omega_m: f64,
    pub gamma_m: f64,
    pub t_bath: f64,
}

impl MechOscillator {
    /// From mass (kg), resonance frequency (Hz), quality factor and bath temperature (K).
    pub fn from_q(mass: f64, f_m: f64, q: f64, t_bath: f64) -> Self {
        let omega_m = TWO_PI * f_m;
        Self {
            mass,
            omega_m,
            gamma_m: omega_m / q,
            t_bath,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mass > 0.0) {
            return Err(Error::invalid("mass", "must be positive"));
        }
        if !(self.omega_m > 0.0) {
            return Err(Error::invalid("omega_m", "must be positive"));
        }
        if !(self.gamma_m >= 0.0) {
            return Err(Error::invalid("gamma_m", "must be nonnegative"));
        }
        Ok(())
    }

    /// Thermal rms displacement sqrt(k_B T / (m Omega_m^2)).
    pub fn x_rms_thermal(&self) -> f64 {
        (K_B * self.t_bath / (self.mass * self.omega_m * self.omega_m)).sqrt()
    }

    pub fn quality_factor(&self) -> f64 {
        self.omega_m / self.gamma_m
    }
}
