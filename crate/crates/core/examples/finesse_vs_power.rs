//! Swept-laser finesse against input power, spatial model next to the
//! single-mode shortcut.
//!
//! `cargo run --release --example finesse_vs_power -- 10 30 50 80`

use fibercav::cavity::{derive_cavity, CavityFiberConfig};
use fibercav::spectroscopy::{finesse_vs_power, ForwardMode, SweepSpec};

fn main() -> fibercav::Result<()> {
    let powers_mw: Vec<f64> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let powers: Vec<f64> = if powers_mw.is_empty() {
        vec![0.01, 0.03, 0.05, 0.08]
    } else {
        powers_mw.iter().map(|p| p * 1e-3).collect()
    };
    let cfg = CavityFiberConfig::default();
    println!("cold-cavity finesse {:.3}", derive_cavity(&cfg)?.finesse_a);
    let sweep = SweepSpec::default();
    let full = finesse_vs_power(&cfg, &powers, &sweep, ForwardMode::Full)?;
    let fast = finesse_vs_power(&cfg, &powers, &sweep, ForwardMode::Fast)?;
    println!("{:>8} {:>10} {:>10} {:>10}", "P_mW", "F_full", "F_fast", "resid");
    for (a, b) in full.iter().zip(&fast) {
        println!("{:8.1} {:10.3} {:10.3} {:10.2e}", a.p_in * 1e3, a.finesse_a, b.finesse_a, a.fit_residual);
        if let Some(e) = &a.error {
            println!("         fit failed: {e}");
        }
    }
    Ok(())
}
