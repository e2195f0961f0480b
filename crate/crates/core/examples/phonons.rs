//! Final phonon occupancy against detuning, split by noise source.
//!
//! `cargo run --release --example phonons -- <P mW> <f_m Hz> <mass kg>`

use fibercav::cavity::{single_mode_from_config, CavityFiberConfig, MechOscillator};
use fibercav::linear::steady_state;
use fibercav::noise::{phonon_number, thermal_estimate, NoiseEnv};

fn main() -> fibercav::Result<()> {
    let args: Vec<f64> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let p_in = args.first().copied().unwrap_or(30.0) * 1e-3;
    let f_m = args.get(1).copied().unwrap_or(100e3);
    let mass = args.get(2).copied().unwrap_or(1e-10);

    let cfg = CavityFiberConfig::default();
    let mech = MechOscillator::from_q(mass, f_m, 1e5, 300.0);
    let env = NoiseEnv::room(cfg.l_fib);
    let sm = single_mode_from_config(&cfg, p_in, 0.0)?;

    println!(
        "{:>8} {:>11} {:>11} {:>11} {:>11} {:>11} {:>9} {:>11}",
        "D/kappa", "n_f", "thermal", "pump", "stokes", "thermopt", "Q_eff", "n_thermal"
    );
    for i in 0..=12 {
        let rel = 0.125 * i as f64;
        let q = sm.with_delta(rel * sm.kappa);
        let s = steady_state(&q);
        let r = phonon_number(&q, &s, &mech, &env)?;
        let c = r.contributions;
        let flag = if r.valid { "" } else { "  (outside shortcut range)" };
        println!(
            "{rel:8.3} {:11.4e} {:11.4e} {:11.4e} {:11.4e} {:11.4e} {:9.3e} {:11.4e}{flag}",
            r.n_f,
            c.thermal,
            c.pump_shot,
            c.stokes_shot,
            c.thermoptic,
            r.q_eff,
            thermal_estimate(&mech, r.gamma_opt)
        );
    }
    Ok(())
}
