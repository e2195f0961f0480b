//! Prescribed-motion force demodulation and coupled stochastic simulation of
//! the cavity with a moving input mirror.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::cavity::{CavityFiberConfig, MechOscillator};
use crate::constants::{K_B, TWO_PI};
use crate::error::{Error, Result};
use crate::propagator::{
    equilibrate, DriveSpec, EquilibriumOptions, FieldLattice, ForceSample, MirrorMotion, Propagator,
};

/// In-phase and quadrature force components (N) relative to `x = X sin(Ωt)`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Quadratures {
    pub in_phase: f64,
    pub quadrature: f64,
}

impl std::ops::Add for Quadratures {
    type Output = Quadratures;
    fn add(self, o: Quadratures) -> Quadratures {
        Quadratures {
            in_phase: self.in_phase + o.in_phase,
            quadrature: self.quadrature + o.quadrature,
        }
    }
}

impl Quadratures {
    /// `(Γ, δΩ)` in rad/s for an oscillator of mass `m` driven at `omega`
    /// with amplitude `x0`.
    pub fn damping(&self, mass: f64, omega: f64, x0: f64) -> (f64, f64) {
        (
            -self.quadrature / (mass * omega * x0),
            -self.in_phase / (2.0 * mass * omega * x0),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DemodResult {
    pub delta: f64,
    pub p_in: f64,
    pub gamma_opt: f64,
    pub d_omega: f64,
    pub gamma_pump: f64,
    pub gamma_stokes: f64,
    pub pump: Quadratures,
    pub stokes: Quadratures,
    /// Mean force over the demodulation window (N).
    pub mean_force: f64,
    /// False when the cavity had not settled before the motion started.
    pub equilibrated: bool,
}

impl DemodResult {
    pub fn total(&self) -> Quadratures {
        self.pump + self.stokes
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DemodSpec {
    /// Number of mechanical periods integrated.
    pub periods: usize,
    /// Periods of motion discarded before demodulating.
    pub settle_periods: usize,
    /// Motion amplitude (m); thermal amplitude when `None`.
    pub amplitude: Option<f64>,
    pub equilibrium: EquilibriumOptions,
    /// Lower bound on equilibration, in multiples of the time the Stokes
    /// field took to reach half its final power.
    pub stokes_buildup_factor: f64,
}

impl Default for DemodSpec {
    fn default() -> Self {
        Self {
            periods: 20,
            settle_periods: 1,
            amplitude: None,
            equilibrium: EquilibriumOptions::default(),
            stokes_buildup_factor: 5.0,
        }
    }
}

/// Equilibrate at fixed detuning, then record the radiation-pressure force
/// under `x = X sin(Ω_m t)` and project it on the motion.
pub fn demodulate(
    config: &CavityFiberConfig,
    mech: &MechOscillator,
    delta: f64,
    p_in: f64,
    spec: &DemodSpec,
) -> Result<DemodResult> {
    mech.validate()?;
    if spec.periods == 0 {
        return Err(Error::invalid("periods", "must be at least 1"));
    }
    let mut prop = Propagator::new(config)?;
    let drive = DriveSpec::new(p_in, delta);
    let empty = prop.empty_lattice();
    let eq = equilibrate(&mut prop, empty, &drive, &spec.equilibrium)?;
    let buildup = eq.stokes_buildup_time();
    let mut lattice = eq.lattice;
    // at least a few Stokes buildup times before the motion starts
    if let Some(tau) = buildup {
        let hold = spec.stokes_buildup_factor * tau - eq.converged_t;
        if hold > 0.0 {
            prop.run(&mut lattice, &drive, (hold / prop.dt()).ceil() as usize, |_| {})?;
        }
    }
    demodulate_from(&mut prop, lattice, mech, delta, p_in, spec, eq.converged)
}

/// Demodulation starting from an already equilibrated lattice.
pub fn demodulate_from(
    prop: &mut Propagator,
    mut lattice: FieldLattice,
    mech: &MechOscillator,
    delta: f64,
    p_in: f64,
    spec: &DemodSpec,
    equilibrated: bool,
) -> Result<DemodResult> {
    let omega = mech.omega_m;
    let x0 = spec.amplitude.unwrap_or_else(|| mech.x_rms_thermal());
    let t0 = lattice.t;
    // the static force would leak into the projections through the
    // discretization; remove the pre-motion value first
    let base = prop.record_force(&lattice, p_in);
    let mut drive = DriveSpec::new(p_in, delta);
    drive.motion = Some(MirrorMotion::Sine { amplitude: x0, omega, t0 });

    let period = TWO_PI / omega;
    let dt = prop.dt();
    let settle = (spec.settle_periods as f64 * period / dt).round() as usize;
    prop.run(&mut lattice, &drive, settle, |_| {})?;

    // integrate over an exact multiple of the period; the last sample gets a
    // fractional weight
    let window = spec.periods as f64 * period;
    let t_start = lattice.t;
    let n_full = (window / dt).floor() as usize;
    let frac = window / dt - n_full as f64;
    let mut acc = [0.0f64; 5];
    let mut add = |f: &ForceSample, t: f64, w: f64| {
        let ph = omega * (t - t0);
        let (s, c) = ph.sin_cos();
        let (fp, fs) = (f.pump - base.pump, f.stokes - base.stokes);
        acc[0] += w * fp * s;
        acc[1] += w * fp * c;
        acc[2] += w * fs * s;
        acc[3] += w * fs * c;
        acc[4] += w * f.total();
    };
    // midpoint sampling: each force sample stands for the interval ending at t
    for _ in 0..n_full {
        let out = prop.step(&mut lattice, &drive)?;
        add(&out.force, out.t - 0.5 * dt, 1.0);
    }
    if frac > 0.0 {
        let out = prop.step(&mut lattice, &drive)?;
        add(&out.force, out.t - 0.5 * dt, frac);
    }
    let norm = 2.0 * dt / window;
    debug_assert!((lattice.t - t_start - window).abs() <= dt);
    let pump = Quadratures {
        in_phase: norm * acc[0],
        quadrature: norm * acc[1],
    };
    let stokes = Quadratures {
        in_phase: norm * acc[2],
        quadrature: norm * acc[3],
    };
    let (gamma_opt, d_omega) = (pump + stokes).damping(mech.mass, omega, x0);
    let (gamma_pump, _) = pump.damping(mech.mass, omega, x0);
    let (gamma_stokes, _) = stokes.damping(mech.mass, omega, x0);
    Ok(DemodResult {
        delta,
        p_in,
        gamma_opt,
        d_omega,
        gamma_pump,
        gamma_stokes,
        pump,
        stokes,
        mean_force: 0.5 * norm * acc[4],
        equilibrated,
    })
}

/// Detuning sweep with and without Brillouin gain.
#[derive(Debug)]
pub struct DampingSweep {
    pub sbs: Vec<Result<DemodResult>>,
    pub no_sbs: Option<Vec<Result<DemodResult>>>,
}

pub fn sweep_damping(
    config: &CavityFiberConfig,
    mech: &MechOscillator,
    detunings: &[f64],
    p_in: f64,
    spec: &DemodSpec,
    with_baseline: bool,
) -> DampingSweep {
    let run = |cfg: &CavityFiberConfig| -> Vec<Result<DemodResult>> {
        detunings
            .par_iter()
            .map(|&d| demodulate(cfg, mech, d, p_in, spec))
            .collect()
    };
    let sbs = run(config);
    let no_sbs = with_baseline.then(|| run(&CavityFiberConfig { g_b: 0.0, ..config.clone() }));
    DampingSweep { sbs, no_sbs }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LangevinSpec {
    pub t_total: f64,
    /// Initial stretch excluded from the statistics (s).
    pub burn_in: f64,
    pub realizations: usize,
    pub seed: u64,
    /// When false the oscillator feels only the thermal bath.
    pub radiation_pressure: bool,
    /// Position samples kept per mechanical period for the spectrum.
    pub samples_per_period: usize,
    pub equilibrium: EquilibriumOptions,
}

impl Default for LangevinSpec {
    fn default() -> Self {
        Self {
            t_total: 0.6,
            burn_in: 0.0,
            realizations: 50,
            seed: 0,
            radiation_pressure: true,
            samples_per_period: 16,
            equilibrium: EquilibriumOptions::default(),
        }
    }
}

/// One realization's outcome.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    /// Variance of x about its time average over the recorded window (m²).
    pub mean_x2: f64,
    pub mean_x: f64,
    pub lasing: bool,
    #[serde(skip)]
    pub samples: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LangevinResult {
    pub delta: f64,
    pub p_in: f64,
    /// Realization-averaged ⟨x²⟩ (m²).
    pub mean_x2: f64,
    /// Standard error of `mean_x2` across realizations.
    pub stderr: f64,
    pub n_realizations: usize,
    pub n_lasing: usize,
    pub sim_time: f64,
    /// One-sided PSD of x (m²/Hz) at `psd_freq` (Hz), realization averaged.
    pub psd_freq: Vec<f64>,
    pub psd: Vec<f64>,
}

/// One quasi-symplectic leapfrog step of a damped oscillator.
#[derive(Debug, Clone, Copy)]
pub struct Mannella {
    h: f64,
    c1: f64,
    c2: f64,
    noise: f64,
    omega2: f64,
    inv_mass: f64,
}

impl Mannella {
    pub fn new(mech: &MechOscillator, h: f64) -> Self {
        let g = mech.gamma_m;
        Self {
            h,
            c1: 1.0 - 0.5 * g * h,
            c2: 1.0 / (1.0 + 0.5 * g * h),
            noise: (2.0 * g * K_B * mech.t_bath * h / mech.mass).sqrt(),
            omega2: mech.omega_m * mech.omega_m,
            inv_mass: 1.0 / mech.mass,
        }
    }

    pub fn half_drift(&self, x: f64, v: f64) -> f64 {
        x + 0.5 * self.h * v
    }

    /// Kick and second half drift, given the half-step position, the
    /// external force there and a standard normal deviate.
    pub fn finish(&self, x_half: f64, v: f64, force: f64, xi: f64) -> (f64, f64) {
        let acc = -self.omega2 * x_half + force * self.inv_mass;
        let v_new = self.c2 * (self.c1 * v + self.h * acc + self.noise * xi);
        (x_half + 0.5 * self.h * v_new, v_new)
    }
}

fn realization(
    config: &CavityFiberConfig,
    mech: &MechOscillator,
    start: Option<(&Propagator, &FieldLattice, f64)>,
    drive: &DriveSpec,
    spec: &LangevinSpec,
    seed: u64,
) -> Result<Trajectory> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dt = config.dt();
    let sigma_x = mech.x_rms_thermal();
    let sigma_v = sigma_x * mech.omega_m;
    let z: f64 = StandardNormal.sample(&mut rng);
    let mut x = sigma_x * z;
    let z: f64 = StandardNormal.sample(&mut rng);
    let mut v = sigma_v * z;
    let integ = Mannella::new(mech, dt);

    let total = (spec.t_total / dt).round() as u64;
    let burn = (spec.burn_in / dt).round() as u64;
    let per_period = TWO_PI / mech.omega_m / dt;
    let stride = ((per_period / spec.samples_per_period.max(1) as f64).floor() as u64).max(1);
    let limit = 1e3 * sigma_x;

    let mut cavity = start.map(|(p, l, f0)| (p.clone(), l.clone(), f0));
    let (mut s1, mut s2, mut n) = (0.0f64, 0.0f64, 0u64);
    let mut samples = Vec::new();
    let mut lasing = false;
    for i in 0..total {
        let x_half = integ.half_drift(x, v);
        let force = match cavity.as_mut() {
            Some((prop, lat, f0)) => prop.step_with_x(lat, drive, x_half)?.force.total() - *f0,
            None => 0.0,
        };
        let xi: f64 = StandardNormal.sample(&mut rng);
        (x, v) = integ.finish(x_half, v, force, xi);
        if i >= burn {
            s1 += x;
            s2 += x * x;
            n += 1;
            if (i - burn) % stride == 0 {
                samples.push(x);
            }
        }
        if i % 4096 == 0 && x.abs() > limit {
            lasing = true;
            break;
        }
    }
    let mean = if n > 0 { s1 / n as f64 } else { 0.0 };
    let var = if n > 0 { s2 / n as f64 - mean * mean } else { 0.0 };
    Ok(Trajectory {
        mean_x2: var,
        mean_x: mean,
        lasing,
        samples,
    })
}

/// Periodogram (one-sided, m²/Hz) of uniformly sampled data.
pub fn periodogram(samples: &[f64], sample_dt: f64) -> (Vec<f64>, Vec<f64>) {
    let n = samples.len();
    if n < 2 {
        return (Vec::new(), Vec::new());
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let mut buf: Vec<Complex<f64>> = samples.iter().map(|&s| Complex::new(s - mean, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let scale = 2.0 * sample_dt / n as f64;
    let freq = (0..n / 2).map(|k| k as f64 / (n as f64 * sample_dt)).collect();
    let psd = buf[..n / 2].iter().map(|z| scale * z.norm_sqr()).collect();
    (freq, psd)
}

/// Coupled cavity + oscillator runs over independent noise realizations.
pub fn langevin_run(
    config: &CavityFiberConfig,
    mech: &MechOscillator,
    delta: f64,
    p_in: f64,
    spec: &LangevinSpec,
) -> Result<LangevinResult> {
    mech.validate()?;
    if !(mech.gamma_m > 0.0) {
        return Err(Error::invalid("gamma_m", "Langevin runs need finite Q"));
    }
    if spec.realizations == 0 {
        return Err(Error::invalid("realizations", "must be at least 1"));
    }
    let drive = DriveSpec::new(p_in, delta);
    let start = if spec.radiation_pressure {
        let mut prop = Propagator::new(config)?;
        let empty = prop.empty_lattice();
        let eq = equilibrate(&mut prop, empty, &drive, &spec.equilibrium)?;
        // x is measured from the static equilibrium, which `delta` already
        // includes, so only the force fluctuation drives the mirror
        let mut probe = eq.lattice.clone();
        let steps = prop.round_trip_steps();
        let mut f0 = 0.0;
        for _ in 0..steps {
            f0 += prop.step_with_x(&mut probe, &drive, 0.0)?.force.total();
        }
        Some((prop, eq.lattice, f0 / steps as f64))
    } else {
        None
    };
    let trajectories: Vec<Trajectory> = (0..spec.realizations)
        .into_par_iter()
        .map(|r| {
            let seed = spec.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(r as u64);
            realization(config, mech, start.as_ref().map(|(p, l, f0)| (p, l, *f0)), &drive, spec, seed)
        })
        .collect::<Result<_>>()?;

    let n = trajectories.len() as f64;
    let mean_x2 = trajectories.iter().map(|t| t.mean_x2).sum::<f64>() / n;
    let var = if n > 1.0 {
        trajectories.iter().map(|t| (t.mean_x2 - mean_x2).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let per_period = TWO_PI / mech.omega_m / config.dt();
    let stride = (per_period / spec.samples_per_period.max(1) as f64).floor().max(1.0);
    let sample_dt = stride * config.dt();
    let mut psd_freq = Vec::new();
    let mut psd: Vec<f64> = Vec::new();
    let mut used = 0.0f64;
    let len = trajectories.iter().filter(|t| !t.lasing).map(|t| t.samples.len()).min().unwrap_or(0);
    for t in trajectories.iter().filter(|t| !t.lasing) {
        let (f, p) = periodogram(&t.samples[..len], sample_dt);
        if psd.is_empty() {
            psd_freq = f;
            psd = p;
        } else {
            psd.iter_mut().zip(p).for_each(|(a, b)| *a += b);
        }
        used += 1.0;
    }
    psd.iter_mut().for_each(|v| *v /= used.max(1.0));
    Ok(LangevinResult {
        delta,
        p_in,
        mean_x2,
        stderr: (var / n).sqrt(),
        n_realizations: trajectories.len(),
        n_lasing: trajectories.iter().filter(|t| t.lasing).count(),
        sim_time: spec.t_total,
        psd_freq,
        psd,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cavity::single_mode_from_config;
    use crate::linear::{chi_opt_inv, steady_state};
    use num_complex::Complex64;

    fn short_cavity() -> CavityFiberConfig {
        CavityFiberConfig::default().with_elements(14)
    }

    #[test]
    fn quadrature_bookkeeping() {
        let cfg = CavityFiberConfig { g_b: 0.0, ..short_cavity() };
        let mech = MechOscillator::from_q(1e-10, 300e3, 1e4, 300.0);
        let spec = DemodSpec { periods: 4, ..DemodSpec::default() };
        let r = demodulate(&cfg, &mech, 2.0e6, 0.05, &spec).unwrap();
        let t = r.total();
        let (g, s) = t.damping(mech.mass, mech.omega_m, mech.x_rms_thermal());
        assert_eq!(g, r.gamma_opt);
        assert_eq!(s, r.d_omega);
        assert!((r.gamma_pump + r.gamma_stokes - r.gamma_opt).abs() <= 1e-12 * r.gamma_opt.abs());
    }

    #[test]
    fn no_sbs_matches_linear_model() {
        // the lattice force lags the single-mode photon number by half a
        // round trip; fold that phase into the oracle
        let cfg = CavityFiberConfig { g_b: 0.0, ..short_cavity() };
        let mech = MechOscillator::from_q(1e-10, 2e6, 1e4, 300.0);
        let spec = DemodSpec { periods: 20, ..DemodSpec::default() };
        let sm = single_mode_from_config(&cfg, 0.05, 0.0).unwrap();
        let lag = Complex64::from_polar(1.0, -0.5 * mech.omega_m * cfg.round_trip_time());
        let m_omega = mech.mass * mech.omega_m;
        for delta in [-4e6, 5e6, 2e7] {
            let r = demodulate(&cfg, &mech, delta, 0.05, &spec).unwrap();
            let q = sm.with_delta(delta);
            let chi = chi_opt_inv(&q, &steady_state(&q), mech.omega_m).unwrap() * lag;
            let gamma = -chi.im / m_omega;
            let shift = chi.re / (2.0 * m_omega);
            assert!((r.gamma_opt - gamma).abs() < 0.03 * gamma.abs(), "{} vs {gamma}", r.gamma_opt);
            assert!((r.d_omega - shift).abs() < 0.03 * shift.abs(), "{} vs {shift}", r.d_omega);
        }
    }

    #[test]
    fn free_oscillator_energy() {
        let mech = MechOscillator::from_q(1e-12, 1e6, 2.0, 300.0);
        let integ = Mannella::new(&mech, 1e-9);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (mut x, mut v) = (0.0, 0.0);
        let (mut s, mut n) = (0.0f64, 0.0f64);
        for i in 0..20_000_000u64 {
            let xh = integ.half_drift(x, v);
            let xi: f64 = StandardNormal.sample(&mut rng);
            (x, v) = integ.finish(xh, v, 0.0, xi);
            if i > 1_000_000 {
                s += x * x;
                n += 1.0;
            }
        }
        let expect = mech.x_rms_thermal().powi(2);
        assert!((s / n / expect - 1.0).abs() < 0.05, "{}", s / n / expect);
    }

    #[test]
    fn periodogram_parseval() {
        let dt = 1e-3;
        let xs: Vec<f64> = (0..4096).map(|i| (0.37 * i as f64).sin() + 0.1 * (1.9 * i as f64).cos()).collect();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64;
        let (f, p) = periodogram(&xs, dt);
        let df = f[1] - f[0];
        let area: f64 = p.iter().sum::<f64>() * df;
        assert!((area / var - 1.0).abs() < 0.02);
    }
}
