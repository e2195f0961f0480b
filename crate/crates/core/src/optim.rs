//! Fiber-parameter estimation from finesse-versus-power data and the
//! phonon-number search.

use std::collections::HashMap;
use std::sync::Mutex;

use argmin::core::{CostFunction, Executor, Gradient, State, TerminationReason};
use argmin::solver::linesearch::MoreThuenteLineSearch;
use argmin::solver::quasinewton::LBFGS;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cavity::{brillouin_temporal_gain, CavityFiberConfig, MechOscillator, SingleModeParams};
use crate::constants::{C, TWO_PI};
use crate::error::{Error, Result};
use crate::linear::{damping_and_shift, steady_state, threshold_power};
use crate::noise::{phonon_number, thermal_estimate, NoiseEnv};
use crate::spectroscopy::{finesse_vs_power, FinessePoint, ForwardMode, SweepSpec};

/// Longest fiber for which a single Stokes mode is a fair description (m).
pub const MAX_SEARCH_FIBER: f64 = 1.6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiberParams {
    /// Brillouin gain coefficient (m/W).
    pub g_b: f64,
    /// Attenuation (1/m).
    pub alpha: f64,
    /// Free-space to fiber coupling efficiency.
    pub beta: f64,
}

impl FiberParams {
    pub fn from_config(c: &CavityFiberConfig) -> Self {
        Self {
            g_b: c.g_b,
            alpha: c.alpha_loss,
            beta: c.beta_mm,
        }
    }

    pub fn apply(&self, c: &CavityFiberConfig) -> CavityFiberConfig {
        CavityFiberConfig {
            g_b: self.g_b,
            alpha_loss: self.alpha,
            beta_mm: self.beta,
            ..c.clone()
        }
    }

    fn to_array(self) -> [f64; 3] {
        [self.g_b, self.alpha, self.beta]
    }

    fn from_array(a: [f64; 3]) -> Self {
        Self {
            g_b: a[0],
            alpha: a[1],
            beta: a[2],
        }
    }
}

const PARAM_NAMES: [&str; 3] = ["g_b", "alpha", "beta"];
const MAX_RESTARTS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSpec {
    /// (input power W, finesse)
    pub data: Vec<(f64, f64)>,
    pub base: CavityFiberConfig,
    pub initial: FiberParams,
    /// Lower and upper bounds, ordered as g_b, alpha, beta.
    pub bounds: [(f64, f64); 3],
    pub mode: ForwardMode,
    pub sweep: SweepSpec,
    pub max_iters: u64,
}

impl FitSpec {
    /// Factor-2 bounds on the gain, ±25% on attenuation and coupling.
    pub fn new(data: Vec<(f64, f64)>, base: CavityFiberConfig, initial: FiberParams, mode: ForwardMode) -> Self {
        let bounds = [
            (0.5 * initial.g_b, 2.0 * initial.g_b),
            (0.75 * initial.alpha, 1.25 * initial.alpha),
            (0.75 * initial.beta, (1.25 * initial.beta).min(1.0)),
        ];
        Self {
            data,
            base,
            initial,
            bounds,
            mode,
            sweep: SweepSpec::default(),
            max_iters: 50,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.data.len() < 5 {
            return Err(Error::invalid("data", "need at least 5 points"));
        }
        if self.data.iter().any(|&(p, f)| !(p > 0.0 && f > 0.0)) {
            return Err(Error::invalid("data", "powers and finesses must be positive"));
        }
        for ((lo, hi), x) in self.bounds.iter().zip(self.initial.to_array()) {
            if !(lo < hi && *lo <= x && x <= *hi) {
                return Err(Error::invalid("bounds", format!("[{lo}, {hi}] must contain {x}")));
            }
        }
        self.base.validate()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FitResult {
    pub params: FiberParams,
    pub ssr: f64,
    pub iterations: u64,
    pub evaluations: usize,
    pub converged: bool,
    pub termination: String,
    /// Parameters whose optimum sits on a bound.
    pub bound_hits: Vec<String>,
    pub bounds: [(f64, f64); 3],
    pub model: Vec<FinessePoint>,
}

fn logistic(u: f64) -> f64 {
    1.0 / (1.0 + (-u).exp())
}

struct FitProblem<'a> {
    spec: &'a FitSpec,
    powers: Vec<f64>,
    data: Vec<f64>,
    cache: Mutex<HashMap<[u64; 3], Vec<FinessePoint>>>,
}

impl FitProblem<'_> {
    fn params(&self, u: &[f64]) -> FiberParams {
        let mut x = [0.0; 3];
        for k in 0..3 {
            let (lo, hi) = self.spec.bounds[k];
            x[k] = lo + (hi - lo) * logistic(u[k]);
        }
        FiberParams::from_array(x)
    }

    fn forward(&self, x: FiberParams) -> Result<Vec<FinessePoint>> {
        let key = x.to_array().map(f64::to_bits);
        if let Some(hit) = self.cache.lock().unwrap().get(&key) {
            return Ok(hit.clone());
        }
        let cfg = x.apply(&self.spec.base);
        let pts = finesse_vs_power(&cfg, &self.powers, &self.spec.sweep, self.spec.mode)?;
        self.cache.lock().unwrap().insert(key, pts.clone());
        Ok(pts)
    }

    fn ssr(&self, x: FiberParams) -> Result<f64> {
        let model = self.forward(x)?;
        // a failed fit counts as zero finesse
        Ok(model
            .iter()
            .zip(&self.data)
            .map(|(m, d)| {
                let f = if m.ok() { m.finesse_a } else { 0.0 };
                (f - d).powi(2)
            })
            .sum())
    }
}

/// Borrowing handle so the cache outlives the solver run.
struct FitObjective<'a, 'b>(&'a FitProblem<'b>);

impl CostFunction for FitObjective<'_, '_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, u: &Vec<f64>) -> std::result::Result<f64, argmin::core::Error> {
        Ok(self.0.ssr(self.0.params(u))?)
    }
}

impl Gradient for FitObjective<'_, '_> {
    type Param = Vec<f64>;
    type Gradient = Vec<f64>;

    fn gradient(&self, u: &Vec<f64>) -> std::result::Result<Vec<f64>, argmin::core::Error> {
        let h = 1e-4;
        let mut g = vec![0.0; u.len()];
        for k in 0..u.len() {
            let mut a = u.clone();
            let mut b = u.clone();
            a[k] += h;
            b[k] -= h;
            g[k] = (self.cost(&a)? - self.cost(&b)?) / (2.0 * h);
        }
        Ok(g)
    }
}

/// Bounded least-squares fit of gain, attenuation and coupling to measured
/// finesse. Bounds are enforced by a logistic change of variables and the
/// unconstrained problem is solved with L-BFGS.
pub fn fit_fiber_params(spec: &FitSpec) -> Result<FitResult> {
    spec.validate()?;
    let mut data = spec.data.clone();
    data.sort_by(|a, b| a.0.total_cmp(&b.0));
    let problem = FitProblem {
        spec,
        powers: data.iter().map(|d| d.0).collect(),
        data: data.iter().map(|d| d.1).collect(),
        cache: Mutex::new(HashMap::new()),
    };
    let u0: Vec<f64> = spec
        .initial
        .to_array()
        .iter()
        .zip(&spec.bounds)
        .map(|(&x, &(lo, hi))| {
            let t = ((x - lo) / (hi - lo)).clamp(1e-6, 1.0 - 1e-6);
            (t / (1.0 - t)).ln()
        })
        .collect();
    let mut u = u0;
    let mut best = f64::INFINITY;
    let mut iterations = 0;
    let mut termination = String::new();
    let mut converged = false;
    // a stale quasi-Newton memory can stall the line search; restart from
    // the best point while that keeps paying off
    for _ in 0..=MAX_RESTARTS {
        let solver = LBFGS::new(MoreThuenteLineSearch::new(), 7)
            .with_tolerance_grad(1e-8)
            .and_then(|s| s.with_tolerance_cost(1e-12))
            .map_err(|e| Error::Optimizer(e.to_string()))?;
        let res = Executor::new(FitObjective(&problem), solver)
            .configure(|s| s.param(u.clone()).max_iters(spec.max_iters.saturating_sub(iterations).max(1)))
            .run()
            .map_err(|e| Error::Optimizer(e.to_string()))?;
        let state = res.state();
        let reason = state.get_termination_reason().cloned();
        iterations += state.get_iter();
        termination = reason.as_ref().map_or_else(|| "not run".to_string(), |r| r.text().to_string());
        converged = matches!(reason, Some(TerminationReason::SolverConverged));
        let cost = state.get_best_cost();
        if let Some(p) = state.get_best_param() {
            u = p.clone();
        }
        let stalled = matches!(reason, Some(TerminationReason::SolverExit(_)));
        let gain = best - cost;
        best = best.min(cost);
        if !stalled || iterations >= spec.max_iters || !(gain > 1e-9 * cost.max(1e-300)) {
            break;
        }
    }
    let params = problem.params(&u);
    let bound_hits = u
        .iter()
        .zip(PARAM_NAMES)
        .filter(|(&v, _)| {
            let t = logistic(v);
            !(1e-3..=1.0 - 1e-3).contains(&t)
        })
        .map(|(_, n)| n.to_string())
        .collect();
    let model = problem.forward(params)?;
    let ssr = problem.ssr(params)?;
    let evaluations = problem.cache.lock().unwrap().len();
    Ok(FitResult {
        params,
        ssr,
        iterations,
        evaluations,
        converged,
        termination,
        bound_hits,
        bounds: spec.bounds,
        model,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeOptions {
    /// Population size per dimension.
    pub pop_per_dim: usize,
    pub crossover: f64,
    pub mutation: f64,
    pub max_generations: usize,
    /// Stop when the population spread falls below this fraction of its mean.
    pub rel_tol: f64,
    pub seed: u64,
}

impl Default for DeOptions {
    fn default() -> Self {
        Self {
            pop_per_dim: 15,
            crossover: 0.7,
            mutation: 0.8,
            max_generations: 200,
            rel_tol: 1e-3,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeResult {
    pub x: Vec<f64>,
    pub fun: f64,
    pub generations: usize,
    pub evaluations: usize,
    pub converged: bool,
    /// Final population and its objective values.
    #[serde(skip)]
    pub population: Vec<(Vec<f64>, f64)>,
}

/// Differential evolution, rand/1/bin. Mutants leaving the box are
/// redrawn uniformly in the offending coordinate. Trial vectors are drawn
/// sequentially from one seeded stream and evaluated in parallel, so the
/// result depends only on the seed.
pub fn differential_evolution<F>(f: F, bounds: &[(f64, f64)], opts: &DeOptions) -> Result<DeResult>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let dim = bounds.len();
    if dim == 0 || bounds.iter().any(|&(lo, hi)| !(lo < hi)) {
        return Err(Error::invalid("bounds", "need lo < hi in every dimension"));
    }
    let np = (opts.pop_per_dim * dim).max(4);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let draw = |rng: &mut ChaCha8Rng, k: usize| rng.gen_range(bounds[k].0..bounds[k].1);
    let mut pop: Vec<Vec<f64>> = (0..np).map(|_| (0..dim).map(|k| draw(&mut rng, k)).collect()).collect();
    let mut fit: Vec<f64> = pop.par_iter().map(|x| f(x)).collect();
    let mut evaluations = np;
    let mut generations = 0;
    let mut converged = false;
    while generations < opts.max_generations {
        generations += 1;
        let trials: Vec<Vec<f64>> = (0..np)
            .map(|i| {
                // three distinct members other than i
                let idx = rand::seq::index::sample(&mut rng, np - 1, 3);
                let skip = |j: usize| if j >= i { j + 1 } else { j };
                let (a, b, c) = (skip(idx.index(0)), skip(idx.index(1)), skip(idx.index(2)));
                let j_rand = rng.gen_range(0..dim);
                (0..dim)
                    .map(|k| {
                        if k == j_rand || rng.gen::<f64>() < opts.crossover {
                            let v = pop[a][k] + opts.mutation * (pop[b][k] - pop[c][k]);
                            if v < bounds[k].0 || v > bounds[k].1 {
                                draw(&mut rng, k)
                            } else {
                                v
                            }
                        } else {
                            pop[i][k]
                        }
                    })
                    .collect()
            })
            .collect();
        let scores: Vec<f64> = trials.par_iter().map(|x| f(x)).collect();
        evaluations += np;
        for (i, (t, s)) in trials.into_iter().zip(scores).enumerate() {
            if s <= fit[i] {
                pop[i] = t;
                fit[i] = s;
            }
        }
        let mean = fit.iter().sum::<f64>() / np as f64;
        let sd = (fit.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / np as f64).sqrt();
        if sd <= opts.rel_tol * mean.abs() {
            converged = true;
            break;
        }
    }
    let best = (0..np).min_by(|&a, &b| fit[a].total_cmp(&fit[b])).unwrap_or(0);
    Ok(DeResult {
        x: pop[best].clone(),
        fun: fit[best],
        generations,
        evaluations,
        converged,
        population: pop.into_iter().zip(fit).collect(),
    })
}

/// Objective value for candidates outside the cooling region.
pub const PENALTY: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CoolingSearchSpec {
    /// Fiber length (m); the cavity is all fiber.
    pub l_fib: f64,
    pub n_refr: f64,
    pub lambda: f64,
    pub mfd: f64,
    pub g_b: f64,
    pub mass: f64,
    pub q: f64,
    pub temperature: f64,
    /// When false the gain is switched off in the dynamics while the power
    /// scale stays tied to the gain-on threshold.
    pub sbs: bool,
    /// κ_ex/κ. Irrelevant when noise enters through the total loss port.
    pub coupling_ratio: f64,
    pub power_ratio: (f64, f64),
    pub finesse: (f64, f64),
    /// Mechanical frequency range (Hz).
    pub f_m: (f64, f64),
    pub noise: NoiseEnv,
    pub de: DeOptions,
}

impl Default for CoolingSearchSpec {
    fn default() -> Self {
        Self::new(MAX_SEARCH_FIBER)
    }
}

impl CoolingSearchSpec {
    pub fn new(l_fib: f64) -> Self {
        Self {
            l_fib,
            n_refr: 1.4496,
            lambda: 1064e-9,
            mfd: 6.6e-6,
            g_b: 6.71e-12,
            mass: 1e-12,
            q: 1e9,
            temperature: 77.0,
            sbs: true,
            coupling_ratio: 1.0,
            power_ratio: (1e-3, 10.0),
            finesse: (20.0, 150.0),
            f_m: (1e3, 3e5),
            noise: NoiseEnv::cryogenic(l_fib),
            de: DeOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.l_fib > 0.0 && self.l_fib <= MAX_SEARCH_FIBER) {
            return Err(Error::invalid("l_fib", format!("must lie in (0, {MAX_SEARCH_FIBER}] m")));
        }
        if !(self.coupling_ratio > 0.0 && self.coupling_ratio <= 1.0) {
            return Err(Error::invalid("coupling_ratio", "must lie in (0, 1]"));
        }
        if !(20.0 <= self.finesse.0 && self.finesse.0 < self.finesse.1 && self.finesse.1 <= 150.0) {
            return Err(Error::invalid("finesse", "bounds must lie within [20, 150]"));
        }
        if !(0.0 < self.power_ratio.0 && self.power_ratio.0 < self.power_ratio.1) {
            return Err(Error::invalid("power_ratio", "need 0 < lo < hi"));
        }
        if !(0.0 < self.f_m.0 && self.f_m.0 < self.f_m.1) {
            return Err(Error::invalid("f_m", "need 0 < lo < hi"));
        }
        if !(self.mass > 0.0 && self.q > 0.0 && self.temperature > 0.0) {
            return Err(Error::invalid("mechanics", "mass, Q and temperature must be positive"));
        }
        self.noise.validate()
    }

    /// Search box; power ratio and frequency are searched in log10.
    fn search_bounds(&self) -> [(f64, f64); 3] {
        [
            (self.power_ratio.0.log10(), self.power_ratio.1.log10()),
            self.finesse,
            (self.f_m.0.log10(), self.f_m.1.log10()),
        ]
    }

    /// Single-mode parameters on resonance at input power zero.
    fn cavity(&self, finesse: f64) -> Result<SingleModeParams> {
        let l_opt = self.n_refr * self.l_fib;
        let fsr = C / (2.0 * l_opt);
        let kappa = std::f64::consts::PI * fsr / finesse;
        let omega_l = TWO_PI * C / self.lambda;
        let geometry = CavityFiberConfig {
            l_fib: self.l_fib,
            n_refr: self.n_refr,
            lambda_p: self.lambda,
            mfd: self.mfd,
            g_b: self.g_b,
            ..CavityFiberConfig::default()
        };
        Ok(SingleModeParams {
            kappa,
            kappa_ex: self.coupling_ratio * kappa,
            delta: 0.0,
            g_om: omega_l / l_opt,
            g_b: brillouin_temporal_gain(&geometry)?,
            a_in: 0.0,
            omega_l,
        })
    }

    fn env(&self) -> NoiseEnv {
        NoiseEnv {
            length: self.l_fib,
            lambda: self.lambda,
            ..self.noise
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoolingPoint {
    pub power_ratio: f64,
    pub finesse: f64,
    /// Hz.
    pub f_m: f64,
    pub p_in: f64,
    /// rad/s.
    pub kappa: f64,
    /// rad/s.
    pub delta_opt: f64,
    pub gamma_opt: f64,
    pub q_eff: f64,
    pub n_f: f64,
}

/// Best occupancy for one candidate, or `None` when it is penalized.
pub fn evaluate_cooling(spec: &CoolingSearchSpec, power_ratio: f64, finesse: f64, f_m: f64) -> Result<Option<CoolingPoint>> {
    let base = spec.cavity(finesse)?;
    let kappa = base.kappa;
    let p_in = power_ratio * threshold_power(&base, 0.0);
    let base = if spec.sbs { base } else { base.without_sbs() }.with_power(p_in);
    let mech = MechOscillator::from_q(spec.mass, f_m, spec.q, spec.temperature);
    let env = spec.env();

    let scan = 201;
    let mut peak = (f64::NEG_INFINITY, 0.0);
    for i in 0..scan {
        let delta = 2.0 * kappa * i as f64 / (scan - 1) as f64;
        let p = base.with_delta(delta);
        let d = damping_and_shift(&p, &mech, &steady_state(&p))?;
        if d.gamma_opt > peak.0 {
            peak = (d.gamma_opt, delta);
        }
    }
    if !(peak.0 > 0.0) || thermal_estimate(&mech, peak.0) > 100.0 {
        return Ok(None);
    }
    let mut best: Option<CoolingPoint> = None;
    let n = 100;
    for i in 0..n {
        let delta = peak.1 - 0.1 * kappa + 0.2 * kappa * i as f64 / (n - 1) as f64;
        let p = base.with_delta(delta);
        let r = phonon_number(&p, &steady_state(&p), &mech, &env)?;
        if !(r.valid && r.gamma_opt > 0.0) {
            continue;
        }
        if best.map_or(true, |b| r.n_f < b.n_f) {
            best = Some(CoolingPoint {
                power_ratio,
                finesse,
                f_m,
                p_in,
                kappa,
                delta_opt: delta,
                gamma_opt: r.gamma_opt,
                q_eff: r.q_eff,
                n_f: r.n_f,
            });
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, Serialize)]
pub struct CoolingResult {
    pub best: CoolingPoint,
    pub generations: usize,
    pub evaluations: usize,
    pub converged: bool,
    pub seed: u64,
}

/// Minimize the occupancy over power ratio, finesse and mechanical frequency.
pub fn minimize_phonons(spec: &CoolingSearchSpec) -> Result<CoolingResult> {
    spec.validate()?;
    let eval = |x: &[f64]| evaluate_cooling(spec, 10f64.powf(x[0]), x[1], 10f64.powf(x[2]));
    let objective = |x: &[f64]| match eval(x) {
        Ok(Some(pt)) => pt.n_f,
        _ => PENALTY,
    };
    let de = differential_evolution(objective, &spec.search_bounds(), &spec.de)?;
    if de.fun >= PENALTY {
        return Err(Error::Optimizer("no cooling region found".into()));
    }
    let best = eval(&de.x)?
        .ok_or_else(|| Error::Optimizer("best candidate left the cooling region".into()))?;
    Ok(CoolingResult {
        best,
        generations: de.generations,
        evaluations: de.evaluations,
        converged: de.converged,
        seed: spec.de.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn de_finds_shifted_sphere_minimum() {
        let f = |x: &[f64]| (x[0] - 0.3).powi(2) + (x[1] + 1.2).powi(2) + 1.0;
        let r = differential_evolution(f, &[(-2.0, 2.0), (-2.0, 2.0)], &DeOptions::default()).unwrap();
        assert!(r.converged);
        assert_relative_eq!(r.x[0], 0.3, epsilon = 0.05);
        assert_relative_eq!(r.x[1], -1.2, epsilon = 0.05);
        assert_relative_eq!(r.fun, 1.0, epsilon = 1e-3);
    }

    #[test]
    fn de_is_reproducible() {
        let f = |x: &[f64]| (x[0] * 3.0).sin() + x[1] * x[1];
        let o = DeOptions {
            max_generations: 20,
            ..DeOptions::default()
        };
        let a = differential_evolution(f, &[(-2.0, 2.0), (-1.0, 1.0)], &o).unwrap();
        let b = differential_evolution(f, &[(-2.0, 2.0), (-1.0, 1.0)], &o).unwrap();
        assert_eq!(a.x, b.x);
        assert_eq!(a.fun.to_bits(), b.fun.to_bits());
    }

    #[test]
    fn de_stays_in_bounds() {
        let f = |x: &[f64]| -x[0];
        let r = differential_evolution(f, &[(0.0, 1.0)], &DeOptions::default()).unwrap();
        assert!(r.population.iter().all(|(x, _)| (0.0..=1.0).contains(&x[0])));
        assert!(r.x[0] > 0.99);
    }

    #[test]
    fn fit_spec_bounds() {
        let cfg = CavityFiberConfig::default();
        let init = FiberParams::from_config(&cfg);
        let spec = FitSpec::new(vec![(0.01, 11.0); 5], cfg, init, ForwardMode::Fast);
        spec.validate().unwrap();
        assert_relative_eq!(spec.bounds[0].1 / spec.bounds[0].0, 4.0);
        let short = FitSpec {
            data: vec![(0.01, 11.0); 3],
            ..spec.clone()
        };
        assert!(short.validate().is_err());
    }

    #[test]
    fn search_rejects_long_fiber() {
        assert!(CoolingSearchSpec::new(2.0).validate().is_err());
        CoolingSearchSpec::new(0.1).validate().unwrap();
    }

    #[test]
    fn cooling_point_respects_gates() {
        let spec = CoolingSearchSpec::new(0.4);
        let pt = evaluate_cooling(&spec, 2.0, 100.0, 50e3).unwrap();
        if let Some(pt) = pt {
            assert!(pt.q_eff > 100.0 && pt.gamma_opt > 0.0);
        }
    }
}
