use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use fibercav::cavity::single_mode_from_config;
use fibercav::config::RunConfig;
use fibercav::constants::TWO_PI;
use fibercav::drive::{langevin_run, sweep_damping, DemodSpec, LangevinSpec};
use fibercav::linear::steady_state;
use fibercav::noise::phonon_number;
use fibercav::optim::{fit_fiber_params, minimize_phonons, FiberParams, FitSpec};
use fibercav::report::{output_path, read_finesse_data, Manifest, Table};
use fibercav::spectroscopy::{dynamic_sweep, equilibrium_spectrum, finesse_vs_power, lowpass, ForwardMode};
use fibercav::{Error, Result};

#[derive(Parser)]
#[command(name = "fibercav", version, about = "Brillouin fiber cavity optomechanics simulator")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; defaults are used for missing keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for CSV and manifest files.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Worker threads for independent sweep points.
    #[arg(long, global = true, env = "FIBERCAV_JOBS")]
    jobs: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SpectrumMode {
    Dynamic,
    Equilibrium,
}

#[derive(Subcommand)]
enum Command {
    /// Reflected power against laser detuning.
    Spectrum {
        /// Input power (mW); defaults to drive.power_mw.
        #[arg(long)]
        power: Option<f64>,
        #[arg(long, value_enum, default_value = "equilibrium")]
        mode: SpectrumMode,
        /// Detuning points for the equilibrium spectrum.
        #[arg(long, default_value_t = 201)]
        points: usize,
    },
    /// Fitted Airy finesse against input power.
    Finesse {
        /// Input powers (mW), comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        powers: Vec<f64>,
        #[arg(long, value_enum)]
        forward: Option<Forward>,
    },
    /// Optomechanical damping and spring shift from prescribed mirror motion.
    Damping {
        /// Mechanical frequency Ω_m/2π (Hz); defaults to mechanics.f_m.
        #[arg(long)]
        omega_m: Option<f64>,
        /// Input powers (mW), comma separated.
        #[arg(long, value_delimiter = ',')]
        powers: Vec<f64>,
        /// Also run the same sweep with the Brillouin gain switched off.
        #[arg(long)]
        no_sbs: bool,
        /// Detunings in units of κ: `start:stop:n` or a comma list.
        #[arg(long, default_value = "-2:2:41", allow_hyphen_values = true)]
        deltas: String,
    },
    /// Stochastic simulation of the coupled cavity and oscillator.
    Langevin {
        #[arg(long)]
        realizations: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Detunings in units of κ: `start:stop:n` or a comma list.
        #[arg(long, default_value = "0.5", allow_hyphen_values = true)]
        deltas: String,
    },
    /// Final phonon number against detuning from the linear model.
    Phonons {
        /// Detunings in units of κ: `start:stop:n` or a comma list.
        #[arg(long, default_value = "-2:2:401", allow_hyphen_values = true)]
        delta_scan: String,
    },
    /// Fit gain, attenuation and coupling to measured finesse.
    Fit {
        /// CSV with columns P_in_W, finesse.
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum)]
        forward: Option<Forward>,
    },
    /// Differential-evolution search for the lowest phonon number.
    CoolSearch,
}

#[derive(Clone, Copy, ValueEnum)]
enum Forward {
    Full,
    Fast,
}

impl From<Forward> for ForwardMode {
    fn from(f: Forward) -> Self {
        match f {
            Forward::Full => ForwardMode::Full,
            Forward::Fast => ForwardMode::Fast,
        }
    }
}

fn parse_list(s: &str) -> Result<Vec<f64>> {
    let bad = || Error::Config(format!("cannot parse `{s}` as a list or start:stop:n range"));
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        [a, b, n] => {
            let (a, b): (f64, f64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
            let n: usize = n.trim().parse().map_err(|_| bad())?;
            match n {
                0 => Err(bad()),
                1 => Ok(vec![a]),
                _ => Ok((0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()),
            }
        }
        [_] => s.split(',').map(|v| v.trim().parse().map_err(|_| bad())).collect(),
        _ => Err(bad()),
    }
}

struct Run<'a> {
    cfg: &'a RunConfig,
    out: &'a Path,
    manifest: Manifest<'a>,
}

impl Run<'_> {
    fn table(&mut self, stem: &str, t: &Table) -> Result<()> {
        let path = output_path(self.out, stem, "csv");
        t.save(&path)?;
        self.manifest.outputs.push(path.display().to_string());
        Ok(())
    }

    fn kappa(&self) -> Result<f64> {
        Ok(single_mode_from_config(&self.cfg.cavity, 0.0, 0.0)?.kappa)
    }
}

fn execute(cli: Cli) -> Result<()> {
    let cfg = match &cli.common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(j) = cli.common.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(j.max(1))
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    std::fs::create_dir_all(&cli.common.out)?;
    let name = match &cli.cmd {
        Command::Spectrum { .. } => "spectrum",
        Command::Finesse { .. } => "finesse",
        Command::Damping { .. } => "damping",
        Command::Langevin { .. } => "langevin",
        Command::Phonons { .. } => "phonons",
        Command::Fit { .. } => "fit",
        Command::CoolSearch => "cool-search",
    };
    let mut run = Run {
        cfg: &cfg,
        out: &cli.common.out,
        manifest: Manifest::new(name, &cfg, std::env::args().skip(1).collect())?,
    };
    let cavity = &cfg.cavity;
    match cli.cmd {
        Command::Spectrum { power, mode, points } => {
            let p_in = power.map_or(cfg.drive.p_in(), |p| p * 1e-3);
            let mut t = Table::new(["delta_Hz", "P_refl_W"]);
            match mode {
                SpectrumMode::Dynamic => {
                    let trace = dynamic_sweep(cavity, p_in, &cfg.sweep)?;
                    let y = lowpass(&trace.p_reflected(), trace.dt, cfg.sweep.f_cut);
                    for (i, v) in y.into_iter().enumerate() {
                        t.push(vec![trace.detuning_hz(i), v]);
                    }
                }
                SpectrumMode::Equilibrium => {
                    let fsr = 1.0 / cavity.round_trip_time();
                    let n = points.max(2);
                    let deltas: Vec<f64> =
                        (0..n).map(|i| TWO_PI * fsr * (i as f64 / (n - 1) as f64 - 0.5)).collect();
                    for pt in equilibrium_spectrum(cavity, p_in, &deltas, &cfg.drive.equilibrium)? {
                        t.push(vec![pt.delta_hz, pt.p_refl]);
                    }
                }
            }
            run.table("spectrum", &t)?;
        }
        Command::Finesse { powers, forward } => {
            let mode = forward.map_or(cfg.optimizer.fit_mode, Into::into);
            let powers: Vec<f64> = powers.iter().map(|p| p * 1e-3).collect();
            let pts = finesse_vs_power(cavity, &powers, &cfg.sweep, mode)?;
            let mut t = Table::new(["P_in_W", "finesse", "R_eff", "fit_residual"]);
            for p in &pts {
                t.push(vec![p.p_in, p.finesse_a, p.r_eff, p.fit_residual]);
            }
            run.table("finesse", &t)?;
            run.manifest.result = json!({ "failed_fits": pts.iter().filter(|p| !p.ok()).count() });
        }
        Command::Damping {
            omega_m,
            powers,
            no_sbs,
            deltas,
        } => {
            let mut mech_cfg = cfg.mechanics;
            if let Some(f) = omega_m {
                mech_cfg.f_m = f;
            }
            let mech = mech_cfg.oscillator();
            let kappa = run.kappa()?;
            let deltas: Vec<f64> = parse_list(&deltas)?.into_iter().map(|d| d * kappa).collect();
            let powers: Vec<f64> = if powers.is_empty() {
                vec![cfg.drive.p_in()]
            } else {
                powers.iter().map(|p| p * 1e-3).collect()
            };
            let spec: DemodSpec = cfg.drive.demod.clone();
            let mut t = Table::new([
                "delta_Hz",
                "P_in_W",
                "gamma_opt_rad_s",
                "d_omega_rad_s",
                "gamma_pump_rad_s",
                "gamma_stokes_rad_s",
                "gamma_opt_nosbs_rad_s",
                "d_omega_nosbs_rad_s",
            ]);
            let mut failures = 0;
            for &p in &powers {
                let sweep = sweep_damping(cavity, &mech, &deltas, p, &spec, no_sbs);
                for (i, r) in sweep.sbs.iter().enumerate() {
                    let base = sweep.no_sbs.as_ref().and_then(|b| b[i].as_ref().ok());
                    let (gb, db) = base.map_or((f64::NAN, f64::NAN), |b| (b.gamma_opt, b.d_omega));
                    match r {
                        Ok(r) => t.push(vec![
                            deltas[i] / TWO_PI,
                            p,
                            r.gamma_opt,
                            r.d_omega,
                            r.gamma_pump,
                            r.gamma_stokes,
                            gb,
                            db,
                        ]),
                        Err(e) => {
                            failures += 1;
                            eprintln!("damping: delta {:.4e} Hz, {p} W: {e}", deltas[i] / TWO_PI);
                            t.push(vec![deltas[i] / TWO_PI, p, f64::NAN, f64::NAN, f64::NAN, f64::NAN, gb, db]);
                        }
                    }
                }
            }
            run.table("damping", &t)?;
            run.manifest.result = json!({ "failed_points": failures });
        }
        Command::Langevin {
            realizations,
            seed,
            deltas,
        } => {
            let mut spec: LangevinSpec = cfg.drive.langevin.clone();
            if let Some(r) = realizations {
                spec.realizations = r;
            }
            if let Some(s) = seed {
                spec.seed = s;
            }
            let mech = cfg.mechanics.oscillator();
            let kappa = run.kappa()?;
            let mut t = Table::new(["delta_Hz", "mean_x2_m2", "stderr_m2", "realizations", "lasing", "x2_thermal_m2"]);
            let mut spectra = Table::new(["delta_Hz", "f_Hz", "S_xx_m2_per_Hz"]);
            for d in parse_list(&deltas)? {
                let delta = d * kappa;
                let r = langevin_run(cavity, &mech, delta, cfg.drive.p_in(), &spec)?;
                t.push(vec![
                    delta / TWO_PI,
                    r.mean_x2,
                    r.stderr,
                    r.n_realizations as f64,
                    r.n_lasing as f64,
                    mech.x_rms_thermal().powi(2),
                ]);
                for (f, s) in r.psd_freq.iter().zip(&r.psd) {
                    spectra.push(vec![delta / TWO_PI, *f, *s]);
                }
            }
            run.table("langevin", &t)?;
            run.table("langevin_psd", &spectra)?;
            run.manifest.result = json!({ "seed": spec.seed, "realizations": spec.realizations });
        }
        Command::Phonons { delta_scan } => {
            let mech = cfg.mechanics.oscillator();
            let env = cfg.noise_env();
            let base = single_mode_from_config(cavity, cfg.drive.p_in(), 0.0)?;
            let mut t = Table::new([
                "delta_Hz",
                "n_f",
                "gamma_opt_rad_s",
                "omega_eff_rad_s",
                "q_eff",
                "valid",
                "n_thermal",
                "n_pump_shot",
                "n_stokes_shot",
                "n_thermoptic",
            ]);
            for d in parse_list(&delta_scan)? {
                let p = base.with_delta(d * base.kappa);
                let r = phonon_number(&p, &steady_state(&p), &mech, &env)?;
                let c = r.contributions;
                t.push(vec![
                    p.delta / TWO_PI,
                    r.n_f,
                    r.gamma_opt,
                    r.omega_eff,
                    r.q_eff,
                    if r.valid { 1.0 } else { 0.0 },
                    c.thermal,
                    c.pump_shot,
                    c.stokes_shot,
                    c.thermoptic,
                ]);
            }
            run.table("phonons", &t)?;
        }
        Command::Fit { data, forward } => {
            let data = read_finesse_data(&data)?;
            let mode = forward.map_or(cfg.optimizer.fit_mode, Into::into);
            let mut spec = FitSpec::new(data.clone(), cavity.clone(), FiberParams::from_config(cavity), mode);
            spec.sweep = cfg.sweep;
            spec.max_iters = cfg.optimizer.fit_max_iters;
            let fit = fit_fiber_params(&spec)?;
            let mut sorted = data;
            sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut t = Table::new(["P_in_W", "finesse_data", "finesse_model"]);
            for ((p, f), m) in sorted.iter().zip(&fit.model) {
                t.push(vec![*p, *f, m.finesse_a]);
            }
            run.table("fit", &t)?;
            let mut params = Table::new(["g_B_m_per_W", "alpha_per_m", "beta", "ssr"]);
            params.push(vec![fit.params.g_b, fit.params.alpha, fit.params.beta, fit.ssr]);
            run.table("fit_params", &params)?;
            if !fit.bound_hits.is_empty() {
                eprintln!("fit: optimum on the bound for {}", fit.bound_hits.join(", "));
            }
            if !fit.converged {
                eprintln!("fit: not converged ({})", fit.termination);
            }
            run.manifest.result = json!({
                "names": ["g_b", "alpha", "beta"],
                "values": [fit.params.g_b, fit.params.alpha, fit.params.beta],
                "bounds": fit.bounds,
                "ssr": fit.ssr,
                "iterations": fit.iterations,
                "forward_runs": fit.evaluations,
                "converged": fit.converged,
                "termination": fit.termination,
                "bound_hits": fit.bound_hits,
            });
        }
        Command::CoolSearch => {
            let spec = &cfg.optimizer.search;
            let r = minimize_phonons(spec)?;
            let b = r.best;
            let mut t = Table::new([
                "L_fib_m",
                "power_ratio",
                "P_in_W",
                "finesse",
                "f_m_Hz",
                "delta_opt_Hz",
                "kappa_rad_s",
                "gamma_opt_rad_s",
                "q_eff",
                "n_f",
            ]);
            t.push(vec![
                spec.l_fib,
                b.power_ratio,
                b.p_in,
                b.finesse,
                b.f_m,
                b.delta_opt / TWO_PI,
                b.kappa,
                b.gamma_opt,
                b.q_eff,
                b.n_f,
            ]);
            run.table("cool_search", &t)?;
            run.manifest.result = json!({
                "names": ["power_ratio", "finesse", "f_m_Hz"],
                "values": [b.power_ratio, b.finesse, b.f_m],
                "bounds": [spec.power_ratio, spec.finesse, spec.f_m],
                "n_f": b.n_f,
                "generations": r.generations,
                "evaluations": r.evaluations,
                "converged": r.converged,
                "seed": r.seed,
            });
        }
    }
    let manifest = output_path(run.out, &format!("{name}.manifest"), "json");
    run.manifest.save(&manifest)?;
    for o in &run.manifest.outputs {
        println!("{o}");
    }
    println!("{}", manifest.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
