//! Integrate the spatial model to equilibrium at a few input powers and
//! compare the stored pump photons with the single-mode clamp 2κ/G_B.

use fibercav::cavity::{single_mode_from_config, CavityFiberConfig};
use fibercav::linear::{steady_state, threshold_power};
use fibercav::propagator::{run_to_equilibrium, DriveSpec, EquilibriumOptions};

fn main() -> fibercav::Result<()> {
    let cfg = CavityFiberConfig::default();
    let sm = single_mode_from_config(&cfg, 0.0, 0.0)?;
    println!("single-mode threshold at resonance: {:.2} mW", threshold_power(&sm, 0.0) * 1e3);
    println!("{:>8} {:>14} {:>14} {:>14} {:>10} {:>8}", "P_mW", "pump_ph", "model_ph", "stokes_ph", "t_ms", "conv");
    for p_in in [0.02, 0.03, 0.06, 0.075, 0.1] {
        let start = std::time::Instant::now();
        let res = run_to_equilibrium(&cfg, &DriveSpec::new(p_in, 0.0), &EquilibriumOptions::default())?;
        let model = steady_state(&sm.with_power(p_in));
        println!(
            "{:8.1} {:14.6e} {:14.6e} {:14.6e} {:10.3} {:>8} ({:.1?})",
            p_in * 1e3,
            res.pump_photons,
            model.pump_photons(),
            res.stokes_photons,
            res.converged_t * 1e3,
            res.converged,
            start.elapsed()
        );
    }
    Ok(())
}
