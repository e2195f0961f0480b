//! Optomechanical damping from prescribed mirror motion in the spatial model,
//! with and without Brillouin gain, next to the linear model.
//!
//! `cargo run --release --example damping_regimes -- <f_m Hz> <P mW> <delta/kappa>...`
//! e.g. `-- 6100 45 -0.8 -0.5 0.5 0.8`

use fibercav::cavity::{single_mode_from_config, CavityFiberConfig, MechOscillator};
use fibercav::drive::{sweep_damping, DemodSpec};
use fibercav::linear::{damping_and_shift, steady_state};

fn main() -> fibercav::Result<()> {
    let args: Vec<f64> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let f_m = args.first().copied().unwrap_or(6.1e3);
    let p_in = args.get(1).copied().unwrap_or(45.0) * 1e-3;
    let rel: Vec<f64> = if args.len() > 2 { args[2..].to_vec() } else { vec![-0.8, -0.5, 0.5, 0.8] };

    let cfg = CavityFiberConfig::default();
    let mech = MechOscillator::from_q(1e-10, f_m, 1e4, 300.0);
    let sm = single_mode_from_config(&cfg, p_in, 0.0)?;
    let deltas: Vec<f64> = rel.iter().map(|d| d * sm.kappa).collect();
    let spec = DemodSpec {
        periods: 4,
        ..DemodSpec::default()
    };
    let sweep = sweep_damping(&cfg, &mech, &deltas, p_in, &spec, true);
    println!(
        "{:>8} {:>12} {:>12} {:>12} {:>12} {:>12}",
        "D/kappa", "G_sim", "G_model", "G_sim_noSBS", "G_mod_noSBS", "dW_sim"
    );
    let baseline = sweep.no_sbs.as_ref().expect("baseline requested");
    for (i, d) in rel.iter().enumerate() {
        let q = sm.with_delta(deltas[i]);
        let lin = damping_and_shift(&q, &mech, &steady_state(&q))?;
        let q0 = q.without_sbs();
        let lin0 = damping_and_shift(&q0, &mech, &steady_state(&q0))?;
        let sim = sweep.sbs[i].as_ref().map(|r| (r.gamma_opt, r.d_omega)).unwrap_or((f64::NAN, f64::NAN));
        let sim0 = baseline[i].as_ref().map(|r| r.gamma_opt).unwrap_or(f64::NAN);
        println!(
            "{d:8.3} {:12.4e} {:12.4e} {:12.4e} {:12.4e} {:12.4e}",
            sim.0, lin.gamma_opt, sim0, lin0.gamma_opt, sim.1
        );
    }
    Ok(())
}
