//! Brillouin threshold of the spatial model against the single-mode
//! formula, for a few input-mirror reflectivities.
//!
//! `cargo run --release --example threshold -- 0.8 0.85 0.9`

use fibercav::cavity::{single_mode_from_config, CavityFiberConfig};
use fibercav::linear::threshold_power;
use fibercav::propagator::{spatial_threshold, EquilibriumOptions};

fn main() -> fibercav::Result<()> {
    let r1s: Vec<f64> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let r1s = if r1s.is_empty() { vec![0.8, 0.85, 0.9] } else { r1s };
    println!("{:>6} {:>12} {:>12} {:>12}", "R1", "kappa/2pi_Hz", "Pth_model_mW", "Pth_sim_mW");
    let mut pts = Vec::new();
    for r1 in r1s {
        let cfg = CavityFiberConfig { r1, ..CavityFiberConfig::default() };
        let sm = single_mode_from_config(&cfg, 0.0, 0.0)?;
        let model = threshold_power(&sm, 0.0);
        let est = spatial_threshold(&cfg, 0.0, model, &EquilibriumOptions::default())?;
        println!("{r1:6.3} {:12.4e} {:12.3} {:12.3}", sm.kappa / std::f64::consts::TAU, model * 1e3, est.p_th * 1e3);
        pts.push((sm.kappa.ln(), est.p_th.ln()));
    }
    if pts.len() >= 2 {
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
        println!("log-log slope dlnP_th/dln(kappa) = {slope:.3}");
    }
    Ok(())
}
