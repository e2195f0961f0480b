//! Cavity spectra in reflection: swept and equilibrium traces, detector
//! filtering, Airy fits and finesse-versus-power curves.

use levenberg_marquardt::{LeastSquaresProblem, LevenbergMarquardt};
use nalgebra::{Dyn, OMatrix, OVector, Owned, U4};
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::cavity::{airy_finesse, round_trip_from_airy_finesse, single_mode_from_config, CavityFiberConfig};
use crate::constants::{HBAR, TWO_PI};
use crate::error::{Error, Result};
use crate::linear::steady_state;
use crate::propagator::{equilibrate, run_to_equilibrium, Detuning, DriveSpec, EquilibriumOptions, Propagator};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepDirection {
    #[default]
    Up,
    Down,
}

impl SweepDirection {
    fn sign(self) -> f64 {
        match self {
            SweepDirection::Up => 1.0,
            SweepDirection::Down => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSpec {
    /// Scanned range in free spectral ranges.
    pub span_fsr: f64,
    /// Ramp duration (s).
    pub duration: f64,
    pub direction: SweepDirection,
    /// Detector bandwidth (Hz).
    pub f_cut: f64,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            span_fsr: 2.5,
            duration: 1e-3,
            direction: SweepDirection::Up,
            f_cut: 1e6,
        }
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.span_fsr > 0.0) {
            return Err(Error::invalid("span_fsr", "must be positive"));
        }
        if !(self.duration > 0.0) {
            return Err(Error::invalid("duration", "must be positive"));
        }
        if !(self.f_cut > 0.0) {
            return Err(Error::invalid("f_cut", "must be positive"));
        }
        Ok(())
    }

    /// Start offset in FSR units: half the span, moved to the nearest point
    /// half way between resonances so the cavity starts off resonance.
    fn start_fsr(&self) -> f64 {
        let half = -0.5 * self.span_fsr;
        (half - 0.5).round() + 0.5
    }
}

/// Reflected power recorded every time step during a detuning ramp.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepTrace {
    pub dt: f64,
    /// Detuning at the first sample (rad/s).
    pub delta_start: f64,
    /// Ramp rate (rad/s per s).
    pub delta_rate: f64,
    /// Grid free spectral range (Hz).
    pub fsr: f64,
    pub p_refl_pump: Vec<f64>,
    pub p_refl_stokes: Vec<f64>,
}

impl SweepTrace {
    pub fn len(&self) -> usize {
        self.p_refl_pump.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p_refl_pump.is_empty()
    }

    pub fn time(&self, i: usize) -> f64 {
        (i + 1) as f64 * self.dt
    }

    pub fn detuning_hz(&self, i: usize) -> f64 {
        (self.delta_start + self.delta_rate * self.time(i)) / TWO_PI
    }

    /// Detector power: pump and Stokes add incoherently.
    pub fn p_reflected(&self) -> Vec<f64> {
        self.p_refl_pump.iter().zip(&self.p_refl_stokes).map(|(a, b)| a + b).collect()
    }
}

/// Equilibrate off resonance, then ramp the detuning across `sweep.span_fsr`
/// free spectral ranges.
pub fn dynamic_sweep(config: &CavityFiberConfig, p_in: f64, sweep: &SweepSpec) -> Result<SweepTrace> {
    sweep.validate()?;
    let mut prop = Propagator::new(config)?;
    let fsr = prop.fsr();
    let sign = sweep.direction.sign();
    let start = sign * sweep.start_fsr() * TWO_PI * fsr;
    let rate = sign * sweep.span_fsr * TWO_PI * fsr / sweep.duration;
    let opts = EquilibriumOptions {
        max_round_trips: 20_000,
        ..EquilibriumOptions::default()
    };
    let empty = prop.empty_lattice();
    let eq = equilibrate(&mut prop, empty, &DriveSpec::new(p_in, start), &opts)?;
    let mut lattice = eq.lattice;
    let mut drive = DriveSpec::new(p_in, start);
    drive.detuning = Detuning::Ramp {
        start,
        rate,
        t0: lattice.t,
    };
    let steps = (sweep.duration / prop.dt()).round() as usize;
    let mut pump = Vec::with_capacity(steps);
    let mut stokes = Vec::with_capacity(steps);
    prop.run(&mut lattice, &drive, steps, |o| {
        pump.push(o.p_refl_pump);
        stokes.push(o.p_refl_stokes);
    })?;
    Ok(SweepTrace {
        dt: prop.dt(),
        delta_start: start,
        delta_rate: rate,
        fsr,
        p_refl_pump: pump,
        p_refl_stokes: stokes,
    })
}

/// First-order low-pass filter applied in the frequency domain. The series
/// is padded with its edge values so the circular transform does not wrap
/// one end into the other.
pub fn lowpass(series: &[f64], dt: f64, f_cut: f64) -> Vec<f64> {
    let n = series.len();
    if n < 2 || !f_cut.is_finite() {
        return series.to_vec();
    }
    let pad = ((10.0 / (TWO_PI * f_cut * dt)).ceil() as usize).min(n);
    let total = n + 2 * pad;
    let mut buf: Vec<Complex<f64>> = Vec::with_capacity(total);
    buf.extend(std::iter::repeat(Complex::new(series[0], 0.0)).take(pad));
    buf.extend(series.iter().map(|&v| Complex::new(v, 0.0)));
    buf.extend(std::iter::repeat(Complex::new(series[n - 1], 0.0)).take(pad));
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(total).process(&mut buf);
    // one-pole kernel (1 - a) a^m: positive weights, so no overshoot
    let a = (-TWO_PI * f_cut * dt).exp();
    for (k, z) in buf.iter_mut().enumerate() {
        let w = Complex::from_polar(a, -TWO_PI * k as f64 / total as f64);
        *z *= (1.0 - a) / (Complex::new(1.0, 0.0) - w);
    }
    planner.plan_fft_inverse(total).process(&mut buf);
    buf[pad..pad + n].iter().map(|z| z.re / total as f64).collect()
}

/// Airy reflectance of a cavity with input reflectance `r1` and effective
/// back reflectance `r_eff` at round-trip phase `phi`.
pub fn airy_reflection(r1: f64, r_eff: f64, phi: f64) -> f64 {
    let a = r1.sqrt();
    let rho = r_eff.sqrt();
    let c = phi.cos();
    (r1 - 2.0 * a * rho * c + r_eff) / (1.0 - 2.0 * a * rho * c + r1 * r_eff)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AiryFit {
    pub r_eff: f64,
    pub finesse_a: f64,
    /// Dip position (Hz).
    pub center: f64,
    pub scale: f64,
    pub offset: f64,
    /// Mean squared residual relative to the squared dip depth.
    pub residual: f64,
    pub points: usize,
}

fn logistic(u: f64) -> f64 {
    1.0 / (1.0 + (-u).exp())
}

struct AiryProblem<'a> {
    x: &'a [f64],
    y: &'a [f64],
    r1: f64,
    fsr: f64,
    /// logit(R_eff), center, scale, offset
    p: OVector<f64, U4>,
}

impl AiryProblem<'_> {
    fn model(&self, p: &OVector<f64, U4>, x: f64) -> f64 {
        let phi = TWO_PI * (x - p[1]) / self.fsr;
        p[3] + p[2] * airy_reflection(self.r1, logistic(p[0]), phi)
    }
}

impl LeastSquaresProblem<f64, Dyn, U4> for AiryProblem<'_> {
    type ResidualStorage = Owned<f64, Dyn>;
    type JacobianStorage = Owned<f64, Dyn, U4>;
    type ParameterStorage = Owned<f64, U4>;

    fn set_params(&mut self, p: &OVector<f64, U4>) {
        self.p = *p;
    }

    fn params(&self) -> OVector<f64, U4> {
        self.p
    }

    fn residuals(&self) -> Option<OVector<f64, Dyn>> {
        Some(OVector::<f64, Dyn>::from_iterator(
            self.x.len(),
            self.x.iter().zip(self.y).map(|(&x, &y)| self.model(&self.p, x) - y),
        ))
    }

    fn jacobian(&self) -> Option<OMatrix<f64, Dyn, U4>> {
        let mut j = OMatrix::<f64, Dyn, U4>::zeros(self.x.len());
        let steps = [1e-6, 1e-6 * self.fsr, 1e-6 * self.p[2].abs().max(1e-30), 1e-6 * self.p[2].abs().max(1e-30)];
        for (k, h) in steps.into_iter().enumerate() {
            let mut hi = self.p;
            let mut lo = self.p;
            hi[k] += h;
            lo[k] -= h;
            for (i, &x) in self.x.iter().enumerate() {
                j[(i, k)] = (self.model(&hi, x) - self.model(&lo, x)) / (2.0 * h);
            }
        }
        Some(j)
    }
}

/// Dip summary used to seed the fit.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Dip {
    x_min: f64,
    y_min: f64,
    base: f64,
    fwhm: f64,
}

/// Linear interpolation of the abscissa where `y` crosses `level` between
/// samples `a` and `b`.
fn crossing(x: &[f64], y: &[f64], a: usize, b: usize, level: f64) -> f64 {
    let t = (level - y[a]) / (y[b] - y[a]);
    x[a] + t * (x[b] - x[a])
}

/// Fit the reflection Airy function to the dip closest to the middle of the
/// data. `x` is the laser detuning in Hz, `fsr` in Hz.
pub fn fit_airy(x: &[f64], y: &[f64], r1: f64, fsr: f64) -> Result<AiryFit> {
    if x.len() != y.len() || x.len() < 8 {
        return Err(Error::FitFailed("need at least 8 samples of matching length".into()));
    }
    let (lo_x, hi_x) = x.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let mid = 0.5 * (lo_x + hi_x);
    let near: Vec<usize> = (0..x.len()).filter(|&i| (x[i] - mid).abs() <= 0.5 * fsr).collect();
    let i_min = *near
        .iter()
        .min_by(|&&a, &&b| y[a].total_cmp(&y[b]))
        .ok_or_else(|| Error::FitFailed("no samples near the trace centre".into()))?;
    let x_min = x[i_min];
    let around: Vec<usize> = (0..x.len()).filter(|&i| (x[i] - x_min).abs() <= 0.5 * fsr).collect();
    let base = around.iter().map(|&i| y[i]).fold(f64::NEG_INFINITY, f64::max);
    let depth = base - y[i_min];
    if !(depth > 0.0) {
        return Err(Error::FitFailed("no resonance dip".into()));
    }
    let half = y[i_min] + 0.5 * depth;
    // half-depth crossings on either side of the minimum
    let pos = around.iter().position(|&i| i == i_min).unwrap_or(0);
    let left = around[..pos].windows(2).rev().find(|w| y[w[0]] >= half).map(|w| crossing(x, y, w[0], w[1], half));
    let right = around[pos..].windows(2).find(|w| y[w[1]] >= half).map(|w| crossing(x, y, w[0], w[1], half));
    let fwhm = match (left, right) {
        (Some(l), Some(r)) => r - l,
        _ => return Err(Error::FitFailed("dip is not resolved on both sides".into())),
    };
    let dip = Dip {
        x_min,
        y_min: y[i_min],
        base,
        fwhm,
    };
    let win: Vec<usize> = around.into_iter().filter(|&i| (x[i] - x_min).abs() <= 1.5 * fwhm).collect();
    let xs: Vec<f64> = win.iter().map(|&i| x[i]).collect();
    let ys: Vec<f64> = win.iter().map(|&i| y[i]).collect();
    fit_window(&xs, &ys, r1, fsr, &dip)
}

fn fit_window(xs: &[f64], ys: &[f64], r1: f64, fsr: f64, dip: &Dip) -> Result<AiryFit> {
    if xs.len() < 5 {
        return Err(Error::FitFailed("fewer than 5 samples in the fit window".into()));
    }
    let g0 = round_trip_from_airy_finesse((fsr / dip.fwhm).max(1.0));
    let r_eff0 = (g0 * g0 / r1).clamp(1e-6, 1.0 - 1e-6);
    let r_lo = airy_reflection(r1, r_eff0, 0.0);
    let r_hi = airy_reflection(r1, r_eff0, std::f64::consts::PI);
    let scale0 = (dip.base - dip.y_min) / (r_hi - r_lo);
    let offset0 = dip.y_min - scale0 * r_lo;
    let problem = AiryProblem {
        x: xs,
        y: ys,
        r1,
        fsr,
        p: OVector::<f64, U4>::new((r_eff0 / (1.0 - r_eff0)).ln(), dip.x_min, scale0, offset0),
    };
    let (solved, report) = LevenbergMarquardt::new().with_tol(1e-12).minimize(problem);
    if !report.termination.was_successful() {
        return Err(Error::FitFailed(format!("{:?}", report.termination)));
    }
    let p = solved.p;
    let r_eff = logistic(p[0]);
    if !(r_eff > 0.0 && r_eff < 1.0 && p[2] > 0.0) {
        return Err(Error::FitFailed(format!("unphysical fit, R_eff = {r_eff}")));
    }
    let finesse_a = airy_finesse((r1 * r_eff).sqrt())
        .ok_or_else(|| Error::FitFailed("no finite finesse for fitted reflectance".into()))?;
    let ssr = 2.0 * report.objective_function;
    Ok(AiryFit {
        r_eff,
        finesse_a,
        center: p[1],
        scale: p[2],
        offset: p[3],
        residual: ssr / (xs.len() as f64 * p[2] * p[2]),
        points: xs.len(),
    })
}

/// Low-pass and fit one swept trace.
pub fn fit_trace(trace: &SweepTrace, r1: f64, f_cut: f64) -> Result<AiryFit> {
    let y = lowpass(&trace.p_reflected(), trace.dt, f_cut);
    let x: Vec<f64> = (0..trace.len()).map(|i| trace.detuning_hz(i)).collect();
    fit_airy(&x, &y, r1, trace.fsr)
}

/// Forward model used to turn fiber parameters into a finesse curve.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ForwardMode {
    /// Spatial simulation with a swept laser.
    #[default]
    Full,
    /// Single-mode steady-state reflection spectrum.
    Fast,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FinessePoint {
    pub p_in: f64,
    pub finesse_a: f64,
    pub r_eff: f64,
    pub fit_residual: f64,
    /// Set when the fit failed; the numeric fields are then NaN.
    pub error: Option<String>,
}

impl FinessePoint {
    fn from_fit(p_in: f64, fit: Result<AiryFit>) -> Self {
        match fit {
            Ok(f) => Self {
                p_in,
                finesse_a: f.finesse_a,
                r_eff: f.r_eff,
                fit_residual: f.residual,
                error: None,
            },
            Err(e) => Self {
                p_in,
                finesse_a: f64::NAN,
                r_eff: f64::NAN,
                fit_residual: f64::NAN,
                error: Some(e.to_string()),
            },
        }
    }

    pub fn ok(&self) -> bool {
        self.error.is_none()
    }
}

/// Reflected power of the single-mode model (W): pump output plus the
/// Stokes power leaving through the coupler.
pub fn single_mode_reflection(config: &CavityFiberConfig, p_in: f64, delta: f64) -> Result<f64> {
    let p = single_mode_from_config(config, p_in, delta)?;
    let s = steady_state(&p);
    let out = p.a_in - (2.0 * p.kappa_ex).sqrt() * s.a_bar;
    Ok(HBAR * p.omega_l * (out.norm_sqr() + 2.0 * p.kappa_ex * s.b_bar))
}

/// Single-mode equilibrium spectrum fitted like a measured trace. The
/// spectrum is even in the detuning, so the dip sits at zero and its width
/// is found by bisection; the window is then sampled on a fixed number of
/// nodes, which keeps the fitted finesse smooth in the cavity parameters.
fn fast_fit(config: &CavityFiberConfig, p_in: f64) -> Result<AiryFit> {
    let fsr = 1.0 / config.round_trip_time();
    let r = |f: f64| single_mode_reflection(config, p_in, TWO_PI * f);
    let y_min = r(0.0)?;
    let base = r(0.5 * fsr)?;
    let half = 0.5 * (y_min + base);
    let (mut lo, mut hi) = (0.0, 0.5 * fsr);
    for _ in 0..60 {
        let m = 0.5 * (lo + hi);
        if r(m)? < half {
            lo = m;
        } else {
            hi = m;
        }
    }
    let fwhm = lo + hi;
    let n = 401;
    let xs: Vec<f64> = (0..n).map(|i| 1.5 * fwhm * (2.0 * i as f64 / (n - 1) as f64 - 1.0)).collect();
    let ys = xs.iter().map(|&f| r(f)).collect::<Result<Vec<_>>>()?;
    let dip = Dip {
        x_min: 0.0,
        y_min,
        base,
        fwhm,
    };
    fit_window(&xs, &ys, config.r1, fsr, &dip)
}

pub fn finesse_at_power(config: &CavityFiberConfig, p_in: f64, sweep: &SweepSpec, mode: ForwardMode) -> FinessePoint {
    let fit = match mode {
        ForwardMode::Full => dynamic_sweep(config, p_in, sweep).and_then(|t| fit_trace(&t, config.r1, sweep.f_cut)),
        ForwardMode::Fast => fast_fit(config, p_in),
    };
    FinessePoint::from_fit(p_in, fit)
}

/// Finesse against input power; failed fits are kept as gaps.
pub fn finesse_vs_power(
    config: &CavityFiberConfig,
    powers: &[f64],
    sweep: &SweepSpec,
    mode: ForwardMode,
) -> Result<Vec<FinessePoint>> {
    if powers.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::invalid("powers", "must be sorted ascending"));
    }
    config.validate()?;
    Ok(powers.par_iter().map(|&p| finesse_at_power(config, p, sweep, mode)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpectrumPoint {
    pub delta_hz: f64,
    pub p_refl: f64,
    pub converged: bool,
}

/// Equilibrium reflected power per detuning (rad/s), each from an empty cavity.
pub fn equilibrium_spectrum(
    config: &CavityFiberConfig,
    p_in: f64,
    detunings: &[f64],
    opts: &EquilibriumOptions,
) -> Result<Vec<SpectrumPoint>> {
    detunings
        .par_iter()
        .map(|&d| {
            let r = run_to_equilibrium(config, &DriveSpec::new(p_in, d), opts)?;
            Ok(SpectrumPoint {
                delta_hz: d / TWO_PI,
                p_refl: r.p_reflected,
                converged: r.converged,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cavity::derive_cavity;
    use approx::assert_relative_eq;

    #[test]
    fn lowpass_dc_and_rolloff() {
        let dt = 1e-9;
        let flat = vec![3.5; 4000];
        for v in lowpass(&flat, dt, 1e6) {
            assert_relative_eq!(v, 3.5, max_relative = 1e-12);
        }
        let f = 1e7;
        let n = 200_000;
        let tone: Vec<f64> = (0..n).map(|i| (TWO_PI * f * i as f64 * dt).sin()).collect();
        let out = lowpass(&tone, dt, 1e6);
        let rms = |v: &[f64]| (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt();
        let ratio = rms(&out[n / 4..3 * n / 4]) / rms(&tone[n / 4..3 * n / 4]);
        assert!(20.0 * ratio.log10() <= -20.0, "{ratio}");
        assert_eq!(lowpass(&tone, dt, f64::INFINITY), tone);
    }

    #[test]
    fn critical_coupling_reaches_zero() {
        assert!(airy_reflection(0.85, 0.85, 0.0).abs() < 1e-12);
    }

    #[test]
    fn fit_recovers_synthetic_airy() {
        let r1: f64 = 0.85;
        let fsr = 10.27e6;
        let g = round_trip_from_airy_finesse(11.93);
        let r_eff = g * g / r1;
        let x: Vec<f64> = (0..4001).map(|i| (i as f64 / 4000.0 - 0.5) * 2.0 * fsr).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|&f| 0.2 + 3.0 * airy_reflection(r1, r_eff, TWO_PI * (f - 1.3e5) / fsr))
            .collect();
        let fit = fit_airy(&x, &y, r1, fsr).unwrap();
        assert_relative_eq!(fit.finesse_a, 11.93, max_relative = 5e-3);
        assert_relative_eq!(fit.center, 1.3e5, epsilon = 1e3);
        // vertical scale does not matter
        let y2: Vec<f64> = y.iter().map(|v| 7.0 * v - 1.0).collect();
        let fit2 = fit_airy(&x, &y2, r1, fsr).unwrap();
        assert_relative_eq!(fit2.finesse_a, fit.finesse_a, max_relative = 1e-6);
    }

    #[test]
    fn fast_mode_below_threshold_matches_airy_finesse() {
        let cfg = CavityFiberConfig::default();
        let p = finesse_at_power(&cfg, 0.01, &SweepSpec::default(), ForwardMode::Fast);
        let d = derive_cavity(&cfg).unwrap();
        assert_relative_eq!(p.finesse_a, d.finesse_a, max_relative = 0.03);
    }

    #[test]
    fn swept_short_cavity_matches_static_airy() {
        let cfg = CavityFiberConfig { g_b: 0.0, ..CavityFiberConfig::default().with_elements(10) };
        let sweep = SweepSpec {
            duration: 2e-4,
            ..SweepSpec::default()
        };
        let trace = dynamic_sweep(&cfg, 0.01, &sweep).unwrap();
        let fit = fit_trace(&trace, cfg.r1, sweep.f_cut).unwrap();
        let d = derive_cavity(&cfg).unwrap();
        assert_relative_eq!(fit.finesse_a, d.finesse_a, max_relative = 0.01);
        assert_relative_eq!(fit.r_eff, cfg.back_reflectance(), max_relative = 0.01);
    }

    #[test]
    fn reversed_sweep_mirrors_trace() {
        let cfg = CavityFiberConfig { g_b: 0.0, ..CavityFiberConfig::default().with_elements(10) };
        let up = SweepSpec { duration: 5e-5, ..SweepSpec::default() };
        let down = SweepSpec { direction: SweepDirection::Down, ..up };
        let a = dynamic_sweep(&cfg, 0.01, &up).unwrap().p_reflected();
        let b = dynamic_sweep(&cfg, 0.01, &down).unwrap().p_reflected();
        let ya = lowpass(&a, cfg.dt(), 1e6);
        let yb = lowpass(&b, cfg.dt(), 1e6);
        let peak = ya.iter().cloned().fold(0.0, f64::max);
        // the symmetric spectrum makes the down sweep trace equal the up sweep
        let n = ya.len();
        let worst = (n / 10..9 * n / 10).map(|i| (ya[i] - yb[i]).abs()).fold(0.0, f64::max);
        assert!(worst < 0.01 * peak, "{worst} vs {peak}");
    }
}
