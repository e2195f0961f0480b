//! Fully coupled stochastic run: cavity fields plus a thermally driven
//! mirror. Compares the sampled variance with the prediction from optical
//! damping, k_B T/(m Ω²) · Γ_m/(Γ_m + Γ_opt).
//!
//! Defaults are a scaled-down version of the 5 m, 20 kHz setup (low Q and
//! short runs) so it finishes in minutes:
//! `cargo run --release --example langevin -- <delta/kappa> <realizations> <t_ms> <P mW>`

use fibercav::cavity::{single_mode_from_config, CavityFiberConfig, MechOscillator};
use fibercav::drive::{demodulate, langevin_run, DemodSpec, LangevinSpec};

fn main() -> fibercav::Result<()> {
    let args: Vec<f64> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let rel = args.first().copied().unwrap_or(0.5);
    let realizations = args.get(1).copied().unwrap_or(4.0) as usize;
    let t_total = args.get(2).copied().unwrap_or(3.0) * 1e-3;

    let cfg = CavityFiberConfig::default().with_elements(72);
    let p_in = args.get(3).copied().unwrap_or(45.0) * 1e-3;
    let mech = MechOscillator::from_q(2e-12, 20e3, 20.0, 300.0);
    let kappa = single_mode_from_config(&cfg, p_in, 0.0)?.kappa;
    let delta = rel * kappa;

    let demod = demodulate(&cfg, &mech, delta, p_in, &DemodSpec { periods: 4, ..DemodSpec::default() })?;
    let predicted = mech.x_rms_thermal().powi(2) * mech.gamma_m / (mech.gamma_m + demod.gamma_opt);

    let spec = LangevinSpec {
        t_total,
        burn_in: 0.2 * t_total,
        realizations,
        seed: 11,
        ..LangevinSpec::default()
    };
    let t = std::time::Instant::now();
    let free = langevin_run(&cfg, &mech, delta, p_in, &LangevinSpec { radiation_pressure: false, ..spec.clone() })?;
    let coupled = langevin_run(&cfg, &mech, delta, p_in, &spec)?;
    println!("L_fib {:.3} m, delta {:.2} kappa, Gamma_m {:.1} /s, Gamma_opt {:.1} /s", cfg.l_fib, rel, mech.gamma_m, demod.gamma_opt);
    println!("{:>14} {:>12} {:>12} {:>8}", "run", "<x2>_m2", "stderr", "z");
    let z = |m: f64, s: f64, e: f64| (m - e) / s;
    let thermal = mech.x_rms_thermal().powi(2);
    println!("{:>14} {:12.4e} {:12.4e} {:8.2}", "no force", free.mean_x2, free.stderr, z(free.mean_x2, free.stderr, thermal));
    println!("{:>14} {:12.4e} {:12.4e} {:8.2}", "coupled", coupled.mean_x2, coupled.stderr, z(coupled.mean_x2, coupled.stderr, predicted));
    println!("thermal {thermal:.4e}, predicted {predicted:.4e}, lasing runs {} ({:.1?})", coupled.n_lasing, t.elapsed());
    Ok(())
}
