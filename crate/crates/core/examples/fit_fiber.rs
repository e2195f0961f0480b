//! Recover gain, attenuation and coupling from a finesse-versus-power curve.
//! Synthetic data come from the single-mode forward model with 1% noise.
//!
//! `cargo run --release --example fit_fiber [-- --save data.csv]`

use fibercav::cavity::CavityFiberConfig;
use fibercav::optim::{fit_fiber_params, FiberParams, FitSpec};
use fibercav::report::Table;
use fibercav::spectroscopy::{finesse_vs_power, ForwardMode, SweepSpec};
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};

fn main() -> fibercav::Result<()> {
    let base = CavityFiberConfig::default();
    let truth = FiberParams {
        g_b: 1.67e-11,
        alpha: 6.31e-4,
        beta: 0.67,
    };
    let powers: Vec<f64> = (1..=10).map(|i| 0.01 * i as f64).collect();
    let clean = finesse_vs_power(&truth.apply(&base), &powers, &SweepSpec::default(), ForwardMode::Fast)?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
    let noise = Normal::new(0.0, 0.01).unwrap();
    let data: Vec<(f64, f64)> = clean.iter().map(|p| (p.p_in, p.finesse_a * (1.0 + noise.sample(&mut rng)))).collect();
    let args: Vec<String> = std::env::args().collect();
    if let Some(i) = args.iter().position(|a| a == "--save") {
        let mut t = Table::new(["P_in_W", "finesse"]);
        for &(p, f) in &data {
            t.push(vec![p, f]);
        }
        t.save(std::path::Path::new(&args[i + 1]))?;
    }

    let spec = FitSpec::new(data.clone(), base.clone(), FiberParams::from_config(&base), ForwardMode::Fast);
    let t = std::time::Instant::now();
    let fit = fit_fiber_params(&spec)?;
    println!("{:>8} {:>12} {:>12} {:>8}", "param", "truth", "fitted", "err_%");
    for (name, a, b) in [
        ("g_b", truth.g_b, fit.params.g_b),
        ("alpha", truth.alpha, fit.params.alpha),
        ("beta", truth.beta, fit.params.beta),
    ] {
        println!("{name:>8} {a:12.4e} {b:12.4e} {:8.2}", 100.0 * (b / a - 1.0));
    }
    println!(
        "ssr {:.3e}, {} iterations, {} forward runs, converged {} ({}), bounds hit {:?} ({:.1?})",
        fit.ssr,
        fit.iterations,
        fit.evaluations,
        fit.converged,
        fit.termination,
        fit.bound_hits,
        t.elapsed()
    );
    println!("{:>8} {:>10} {:>10}", "P_mW", "data", "model");
    for ((p, f), m) in data.iter().zip(&fit.model) {
        println!("{:8.1} {:10.3} {:10.3}", p * 1e3, f, m.finesse_a);
    }
    Ok(())
}
