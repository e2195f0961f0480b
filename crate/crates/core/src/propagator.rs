//! Time-domain integration of the coupled pump/Stokes traveling-wave
//! equations on the uniform-transit grid.
//!
//! Node 0 sits on the input mirror (free-space units), nodes `1..=N+1` are
//! fiber nodes with node `N+1` on the far mirror. Every step moves forward
//! waves one node towards `+z` and backward waves one node towards `-z`,
//! applying the predictor-corrector gain/loss update inside each fiber
//! element.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::cavity::CavityFiberConfig;
use crate::constants::{C, ETA0, HBAR};
use crate::error::{Error, Result};

/// Largest allowed |E| relative to the input amplitude.
pub const BLOW_UP_FACTOR: f64 = 1e3;

pub const DEFAULT_SEED_RATIO: f64 = 1e-9;

/// Four traveling-wave amplitude arrays (V/m in the local medium).
#[derive(Debug, Clone, PartialEq)]
pub struct FieldLattice {
    pub ep_fwd: Vec<Complex64>,
    pub ep_bwd: Vec<Complex64>,
    pub es_fwd: Vec<Complex64>,
    pub es_bwd: Vec<Complex64>,
    /// Simulated time (s).
    pub t: f64,
    pub steps: u64,
}

impl FieldLattice {
    pub fn empty(n_elements: usize) -> Self {
        let zeros = vec![Complex64::new(0.0, 0.0); n_elements + 2];
        Self {
            ep_fwd: zeros.clone(),
            ep_bwd: zeros.clone(),
            es_fwd: zeros.clone(),
            es_bwd: zeros,
            t: 0.0,
            steps: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.ep_fwd.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ep_fwd.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        [&self.ep_fwd, &self.ep_bwd, &self.es_fwd, &self.es_bwd]
            .iter()
            .all(|v| v.iter().all(|z| z.re.is_finite() && z.im.is_finite()))
    }
}

/// Laser detuning `omega_cav - omega_L` as a function of time (rad/s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Detuning {
    Fixed(f64),
    /// `start + rate * (t - t0)`.
    Ramp { start: f64, rate: f64, t0: f64 },
}

impl Detuning {
    pub fn at(&self, t: f64) -> f64 {
        match *self {
            Detuning::Fixed(d) => d,
            Detuning::Ramp { start, rate, t0 } => start + rate * (t - t0),
        }
    }
}

/// Prescribed outward displacement of the input mirror.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum MirrorMotion {
    /// `amplitude * sin(omega * (t - t0))`.
    Sine { amplitude: f64, omega: f64, t0: f64 },
}

impl MirrorMotion {
    pub fn at(&self, t: f64) -> f64 {
        match *self {
            MirrorMotion::Sine { amplitude, omega, t0 } => amplitude * (omega * (t - t0)).sin(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriveSpec {
    /// Input power (W).
    pub p_in: f64,
    pub detuning: Detuning,
    /// Stokes seed power relative to the input power, injected every step.
    pub seed_power_ratio: f64,
    pub motion: Option<MirrorMotion>,
}

impl DriveSpec {
    pub fn new(p_in: f64, delta: f64) -> Self {
        Self {
            p_in,
            detuning: Detuning::Fixed(delta),
            seed_power_ratio: DEFAULT_SEED_RATIO,
            motion: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p_in >= 0.0 && self.p_in.is_finite()) {
            return Err(Error::invalid("p_in", "input power must be finite and nonnegative"));
        }
        if !(self.seed_power_ratio >= 0.0 && self.seed_power_ratio < 1e-6) {
            return Err(Error::invalid("seed_power_ratio", "must lie in [0, 1e-6)"));
        }
        Ok(())
    }
}

/// Radiation-pressure force on the input mirror, split by field (N).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct ForceSample {
    pub pump: f64,
    pub stokes: f64,
}

impl ForceSample {
    pub fn total(&self) -> f64 {
        self.pump + self.stokes
    }
}

/// Observables produced by one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepOutput {
    /// Time at the end of the step (s).
    pub t: f64,
    pub p_refl_pump: f64,
    pub p_refl_stokes: f64,
    pub force: ForceSample,
}

impl StepOutput {
    /// Detector power: pump and Stokes add incoherently.
    pub fn p_reflected(&self) -> f64 {
        self.p_refl_pump + self.p_refl_stokes
    }
}

/// Precomputed coefficients plus scratch buffers for stepping lattices of one
/// cavity configuration.
#[derive(Debug, Clone)]
pub struct Propagator {
    config: CavityFiberConfig,
    n: usize,
    dt: f64,
    t_rt: f64,
    att: f64,
    cdz: f64,
    t_in: f64,
    t_out: f64,
    r1a: f64,
    t1a: f64,
    r2a: f64,
    /// power = k * |E|^2
    k_free: f64,
    k_fib: f64,
    omega_l: f64,
    scratch: FieldLattice,
    steps_since_check: usize,
}

impl Propagator {
    pub fn new(config: &CavityFiberConfig) -> Result<Self> {
        config.validate()?;
        let n = config.n_elements;
        let dz = config.dz_fiber();
        let k_free = config.free_area() / (2.0 * ETA0);
        let k_fib = config.n_refr * config.fiber_area() / (2.0 * ETA0);
        // field rescaling free space -> fiber keeps power; mode matching
        // loses beta_mm per round trip, split over the two crossings
        let scale = (k_free / k_fib).sqrt();
        let cross = config.beta_mm.powf(0.25);
        Ok(Self {
            config: config.clone(),
            n,
            dt: config.dt(),
            t_rt: config.round_trip_steps() as f64 * config.dt(),
            att: 1.0 - 0.5 * config.alpha_loss * dz,
            cdz: config.c_b() * dz,
            t_in: cross * scale,
            t_out: cross / scale,
            r1a: config.r1.sqrt(),
            t1a: (1.0 - config.r1).sqrt(),
            r2a: config.r2.sqrt(),
            k_free,
            k_fib,
            omega_l: config.omega_l(),
            scratch: FieldLattice::empty(n),
            steps_since_check: 0,
        })
    }

    pub fn config(&self) -> &CavityFiberConfig {
        &self.config
    }

    pub fn empty_lattice(&self) -> FieldLattice {
        FieldLattice::empty(self.n)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Grid round-trip time `2 (N + 1) dt`.
    pub fn round_trip_time(&self) -> f64 {
        self.t_rt
    }

    pub fn round_trip_steps(&self) -> usize {
        2 * (self.n + 1)
    }

    /// Free spectral range of the grid (Hz).
    pub fn fsr(&self) -> f64 {
        1.0 / self.t_rt
    }

    /// Free-space field amplitude carrying power `p`.
    pub fn free_field(&self, p: f64) -> f64 {
        (p / self.k_free).sqrt()
    }

    /// Power carried by node `i` of a traveling wave with amplitude `e`.
    pub fn node_power(&self, i: usize, e: Complex64) -> f64 {
        if i == 0 {
            self.k_free * e.norm_sqr()
        } else {
            self.k_fib * e.norm_sqr()
        }
    }

    /// Advance one time step with the mirror position taken from the drive.
    pub fn step(&mut self, lattice: &mut FieldLattice, drive: &DriveSpec) -> Result<StepOutput> {
        let t_next = lattice.t + self.dt;
        let x = drive.motion.map_or(0.0, |m| m.at(t_next));
        self.step_with_x(lattice, drive, x)
    }

    /// Advance one time step with an explicit outward mirror displacement `x` (m).
    pub fn step_with_x(&mut self, lattice: &mut FieldLattice, drive: &DriveSpec, x: f64) -> Result<StepOutput> {
        debug_assert_eq!(lattice.len(), self.n + 2);
        self.propagate(lattice);
        std::mem::swap(lattice, &mut self.scratch);
        lattice.t = self.scratch.t + self.dt;
        lattice.steps = self.scratch.steps + 1;
        let out = self.apply_boundaries(lattice, drive, x);

        self.steps_since_check += 1;
        if self.steps_since_check >= self.round_trip_steps() {
            self.steps_since_check = 0;
            self.check_blow_up(lattice, drive.p_in)?;
        }
        Ok(out)
    }

    /// Bulk propagation from `lattice` into the scratch buffers.
    fn propagate(&mut self, lattice: &FieldLattice) {
        let n = self.n;
        let (att, cdz) = (self.att, self.cdz);
        let old = lattice;
        let new = &mut self.scratch;

        // free-space element, crossing the interface
        new.ep_fwd[1] = old.ep_fwd[0] * self.t_in;
        new.es_fwd[1] = old.es_fwd[0] * self.t_in;
        new.ep_bwd[0] = old.ep_bwd[1] * self.t_out;
        new.es_bwd[0] = old.es_bwd[1] * self.t_out;

        for k in 1..=n {
            // forward pump against backward Stokes
            let pf = old.ep_fwd[k];
            let sb = old.es_bwd[k + 1];
            let pf0 = pf * (att - cdz * sb.norm_sqr());
            let sb0 = sb * (att + cdz * pf.norm_sqr());
            let pf_mid = 0.5 * (pf + pf0);
            let sb_mid = 0.5 * (sb + sb0);
            new.ep_fwd[k + 1] = pf * (att - cdz * sb_mid.norm_sqr());
            new.es_bwd[k] = sb * (att + cdz * pf_mid.norm_sqr());

            // backward pump against forward Stokes
            let pb = old.ep_bwd[k + 1];
            let sf = old.es_fwd[k];
            let pb0 = pb * (att - cdz * sf.norm_sqr());
            let sf0 = sf * (att + cdz * pb.norm_sqr());
            let pb_mid = 0.5 * (pb + pb0);
            let sf_mid = 0.5 * (sf + sf0);
            new.ep_bwd[k] = pb * (att - cdz * sf_mid.norm_sqr());
            new.es_fwd[k + 1] = sf * (att + cdz * pb_mid.norm_sqr());
        }
    }

    /// Mirror reflections, input coupling and Stokes seeding on a freshly
    /// propagated lattice; `x` is the outward input-mirror displacement.
    pub fn apply_boundaries(&self, lattice: &mut FieldLattice, drive: &DriveSpec, x: f64) -> StepOutput {
        let last = self.n + 1;
        let e_in = self.free_field(drive.p_in);

        // far mirror
        lattice.ep_bwd[last] = lattice.ep_fwd[last] * self.r2a;
        let mut sb = lattice.es_fwd[last] * self.r2a;
        if drive.seed_power_ratio > 0.0 && drive.p_in > 0.0 {
            let seed = drive.seed_power_ratio * drive.p_in / self.k_fib;
            let mag2 = sb.norm_sqr();
            sb = if mag2 > 0.0 {
                sb * ((mag2 + seed) / mag2).sqrt()
            } else {
                Complex64::new(seed.sqrt(), 0.0)
            };
        }
        lattice.es_bwd[last] = sb;

        // input mirror; the detuning phase is lumped here once per round trip
        let delta = drive.detuning.at(lattice.t);
        let theta = -delta * self.t_rt + 2.0 * self.omega_l / C * x;
        let b0 = lattice.ep_bwd[0] * Complex64::from_polar(1.0, theta);
        lattice.ep_fwd[0] = self.t1a * e_in + self.r1a * b0;
        let refl = -self.r1a * e_in + self.t1a * b0;
        let s0 = lattice.es_bwd[0];
        lattice.es_fwd[0] = self.r1a * s0;
        let refl_s = self.t1a * s0;

        StepOutput {
            t: lattice.t,
            p_refl_pump: self.k_free * refl.norm_sqr(),
            p_refl_stokes: self.k_free * refl_s.norm_sqr(),
            force: self.record_force(lattice, drive.p_in),
        }
    }

    /// Radiation-pressure force on the input mirror from the cavity side,
    /// with the transmitted input beam's share removed.
    pub fn record_force(&self, lattice: &FieldLattice, p_in: f64) -> ForceSample {
        let pump = self.k_free * (lattice.ep_fwd[0].norm_sqr() + lattice.ep_bwd[0].norm_sqr())
            - (1.0 - self.config.r1) * p_in;
        let stokes = self.k_free * (lattice.es_fwd[0].norm_sqr() + lattice.es_bwd[0].norm_sqr());
        ForceSample {
            pump: pump / C,
            stokes: stokes / C,
        }
    }

    fn check_blow_up(&self, lattice: &FieldLattice, p_in: f64) -> Result<()> {
        if !lattice.is_finite() {
            return Err(Error::BlowUp {
                t: lattice.t,
                limit: BLOW_UP_FACTOR,
            });
        }
        if p_in <= 0.0 {
            return Ok(());
        }
        let limit = BLOW_UP_FACTOR * BLOW_UP_FACTOR * p_in;
        let arrays = [&lattice.ep_fwd, &lattice.ep_bwd, &lattice.es_fwd, &lattice.es_bwd];
        for v in arrays {
            for (i, e) in v.iter().enumerate() {
                if self.node_power(i, *e) > limit {
                    return Err(Error::BlowUp {
                        t: lattice.t,
                        limit: BLOW_UP_FACTOR,
                    });
                }
            }
        }
        Ok(())
    }

    /// Stored (pump, Stokes) photon numbers over one round trip of samples.
    pub fn photon_numbers(&self, lattice: &FieldLattice) -> (f64, f64) {
        let last = self.n + 1;
        let mut pump = self.k_free * lattice.ep_fwd[0].norm_sqr();
        let mut stokes = self.k_free * lattice.es_fwd[0].norm_sqr();
        let mut pump_fib = 0.0;
        let mut stokes_fib = 0.0;
        for i in 1..=self.n {
            pump_fib += lattice.ep_fwd[i].norm_sqr();
            stokes_fib += lattice.es_fwd[i].norm_sqr();
        }
        for i in 1..=last {
            pump_fib += lattice.ep_bwd[i].norm_sqr();
            stokes_fib += lattice.es_bwd[i].norm_sqr();
        }
        pump += self.k_fib * pump_fib;
        stokes += self.k_fib * stokes_fib;
        let per_photon = HBAR * self.omega_l;
        (pump * self.dt / per_photon, stokes * self.dt / per_photon)
    }

    /// Stored optical energy (J), pump plus Stokes.
    pub fn stored_energy(&self, lattice: &FieldLattice) -> f64 {
        let (p, s) = self.photon_numbers(lattice);
        (p + s) * HBAR * self.omega_l
    }

    /// Traveling-wave powers along the fiber (pump fwd, pump bwd, Stokes fwd,
    /// Stokes bwd) at fiber nodes `1..=N+1`.
    pub fn fiber_powers(&self, lattice: &FieldLattice) -> Vec<[f64; 4]> {
        (1..=self.n + 1)
            .map(|i| {
                [
                    self.k_fib * lattice.ep_fwd[i].norm_sqr(),
                    self.k_fib * lattice.ep_bwd[i].norm_sqr(),
                    self.k_fib * lattice.es_fwd[i].norm_sqr(),
                    self.k_fib * lattice.es_bwd[i].norm_sqr(),
                ]
            })
            .collect()
    }

    /// Run `steps` steps, calling `observe` after each.
    pub fn run(
        &mut self,
        lattice: &mut FieldLattice,
        drive: &DriveSpec,
        steps: usize,
        mut observe: impl FnMut(&StepOutput),
    ) -> Result<StepOutput> {
        let mut last = None;
        for _ in 0..steps {
            let out = self.step(lattice, drive)?;
            observe(&out);
            last = Some(out);
        }
        Ok(last.unwrap_or(StepOutput {
            t: lattice.t,
            p_refl_pump: 0.0,
            p_refl_stokes: 0.0,
            force: self.record_force(lattice, drive.p_in),
        }))
    }
}

/// Stopping rule for [`run_to_equilibrium`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EquilibriumOptions {
    /// Relative change of pump and Stokes photon numbers over one round trip.
    pub rel_tol: f64,
    pub max_round_trips: usize,
    /// Consecutive round trips that must satisfy `rel_tol`.
    pub patience: usize,
}

impl Default for EquilibriumOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-8,
            max_round_trips: 200_000,
            patience: 3,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EquilibriumResult {
    /// Forward pump power leaving the input mirror into the cavity (W).
    pub p_pump_circ: f64,
    /// Forward Stokes power at the same place (W).
    pub p_stokes_circ: f64,
    /// Detector power, pump plus Stokes (W).
    pub p_reflected: f64,
    pub pump_photons: f64,
    pub stokes_photons: f64,
    pub converged: bool,
    /// Time at which the stopping rule was met (or the budget ran out).
    pub converged_t: f64,
    pub round_trips: usize,
    pub last_change: f64,
    /// `(t, pump photons, Stokes photons)` once per round trip.
    #[serde(skip)]
    pub history: Vec<(f64, f64, f64)>,
    #[serde(skip)]
    pub lattice: FieldLattice,
}

impl EquilibriumResult {
    /// Time at which the Stokes photon number first reached half its final
    /// value; `None` when no Stokes field built up above the seed.
    pub fn stokes_buildup_time(&self) -> Option<f64> {
        let target = 0.5 * self.stokes_photons;
        if !(self.stokes_photons > 1e-6 * self.pump_photons) {
            return None;
        }
        self.history.iter().find(|h| h.2 >= target).map(|h| h.0)
    }

    pub fn require_converged(self) -> Result<Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::NotConverged {
                round_trips: self.round_trips,
                last_change: self.last_change,
            })
        }
    }
}

fn rel_change(new: f64, old: f64) -> f64 {
    let scale = new.abs().max(old.abs());
    if scale == 0.0 {
        0.0
    } else {
        (new - old).abs() / scale
    }
}

/// Integrate from an empty cavity until the photon numbers settle.
pub fn run_to_equilibrium(
    config: &CavityFiberConfig,
    drive: &DriveSpec,
    opts: &EquilibriumOptions,
) -> Result<EquilibriumResult> {
    let mut prop = Propagator::new(config)?;
    let lattice = prop.empty_lattice();
    equilibrate(&mut prop, lattice, drive, opts)
}

/// Continue integrating `lattice` until the photon numbers settle.
pub fn equilibrate(
    prop: &mut Propagator,
    mut lattice: FieldLattice,
    drive: &DriveSpec,
    opts: &EquilibriumOptions,
) -> Result<EquilibriumResult> {
    drive.validate()?;
    let steps = prop.round_trip_steps();
    let mut prev = prop.photon_numbers(&lattice);
    let mut streak = 0;
    let mut last_change = f64::INFINITY;
    let mut last_out = None;
    let mut round_trips = 0;
    let mut converged = false;
    let mut history = Vec::new();
    while round_trips < opts.max_round_trips {
        last_out = Some(prop.run(&mut lattice, drive, steps, |_| {})?);
        round_trips += 1;
        let now = prop.photon_numbers(&lattice);
        last_change = rel_change(now.0, prev.0).max(rel_change(now.1, prev.1));
        prev = now;
        history.push((lattice.t, now.0, now.1));
        if now.0 > 0.0 && last_change < opts.rel_tol {
            streak += 1;
            if streak >= opts.patience {
                converged = true;
                break;
            }
        } else {
            streak = 0;
        }
    }
    let out = last_out.expect("at least one round trip");
    Ok(EquilibriumResult {
        p_pump_circ: prop.node_power(0, lattice.ep_fwd[0]),
        p_stokes_circ: prop.node_power(0, lattice.es_fwd[0]),
        p_reflected: out.p_reflected(),
        pump_photons: prev.0,
        stokes_photons: prev.1,
        converged,
        converged_t: lattice.t,
        round_trips,
        last_change,
        history,
        lattice,
    })
}

/// Brillouin threshold of the spatial model from sub-threshold runs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdEstimate {
    pub p_th: f64,
    /// (input power W, Stokes photons) used in the extrapolation.
    pub samples: Vec<(f64, f64)>,
}

/// Below threshold the seeded Stokes field is a linear amplifier, so
/// `P_in / N_S` falls linearly to zero at threshold. Four equilibria
/// between 0.6 and 0.9 of `guess` are extrapolated; the guess is lowered
/// until all four are below threshold.
pub fn spatial_threshold(
    config: &CavityFiberConfig,
    delta: f64,
    guess: f64,
    opts: &EquilibriumOptions,
) -> Result<ThresholdEstimate> {
    if !(guess > 0.0 && guess.is_finite()) {
        return Err(Error::invalid("guess", "must be positive and finite"));
    }
    let mut scale = guess;
    for _ in 0..8 {
        let samples = [0.6, 0.7, 0.8, 0.9]
            .iter()
            .map(|f| {
                let r = run_to_equilibrium(config, &DriveSpec::new(f * scale, delta), opts)?;
                Ok((f * scale, r.stokes_photons, r.stokes_photons / r.pump_photons.max(1e-300)))
            })
            .collect::<Result<Vec<_>>>()?;
        if samples.iter().any(|s| s.2 > 1e-4) {
            scale *= 0.7;
            continue;
        }
        let n = samples.len() as f64;
        let xs: Vec<f64> = samples.iter().map(|s| s.0).collect();
        let ys: Vec<f64> = samples.iter().map(|s| s.0 / s.1).collect();
        let mx = xs.iter().sum::<f64>() / n;
        let my = ys.iter().sum::<f64>() / n;
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        let slope = sxy / sxx;
        if !(slope < 0.0) {
            return Err(Error::Optimizer("Stokes level does not rise with power".into()));
        }
        return Ok(ThresholdEstimate {
            p_th: mx - my / slope,
            samples: samples.iter().map(|s| (s.0, s.1)).collect(),
        });
    }
    Err(Error::Optimizer("no sub-threshold power found below the guess".into()))
}
