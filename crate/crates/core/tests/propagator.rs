use fibercav::cavity::CavityFiberConfig;
use fibercav::constants::{C, HBAR, TWO_PI};
use fibercav::cavity::single_mode_from_config;
use fibercav::linear::threshold_power;
use fibercav::propagator::{equilibrate, run_to_equilibrium, DriveSpec, EquilibriumOptions, FieldLattice, Propagator};

/// Nearly transparent mirrors: one pass through the fiber.
fn single_pass(alpha: f64, g_b: f64) -> CavityFiberConfig {
    CavityFiberConfig {
        r1: 1e-12,
        r2: 1e-12,
        beta_mm: 1.0,
        alpha_loss: alpha,
        g_b,
        ..CavityFiberConfig::default()
    }
}

/// Powers after the fields have crossed the fiber `trips` times.
fn settle(cfg: &CavityFiberConfig, drive: &DriveSpec, trips: usize) -> (Propagator, FieldLattice, f64) {
    let mut prop = Propagator::new(cfg).unwrap();
    let mut lat = prop.empty_lattice();
    let out = prop.run(&mut lat, drive, trips * prop.round_trip_steps(), |_| {}).unwrap();
    (prop, lat, out.p_refl_stokes)
}

#[test]
fn single_pass_gain_matches_undepleted_pump() {
    let p_in = 0.05;
    let base = single_pass(0.03, 0.0);
    let (l, area) = (base.l_fib, base.fiber_area());
    for (alpha, g_l) in [(0.0, 2.0), (0.03, 2.0), (0.03, 1.0)] {
        // pump decays as exp(-alpha z), so the gain integrates to
        // g_B I_0 (1 - exp(-alpha L)) / alpha
        let eff_len = if alpha > 0.0 { (1.0 - (-alpha * l).exp()) / alpha } else { l };
        let g_b = g_l * area / (p_in * eff_len);
        let cfg = single_pass(alpha, g_b);
        let drive = DriveSpec::new(p_in, 0.0);
        let (_, _, p_out) = settle(&cfg, &drive, 3);
        let seed = drive.seed_power_ratio * p_in;
        let expect = seed * (g_l - alpha * l).exp();
        let err = (p_out / expect - 1.0).abs();
        assert!(err < 0.01, "alpha {alpha}, gL {g_l}: {p_out:e} vs {expect:e}");
    }
}

#[test]
fn single_pass_powers_are_monotone_when_depleted() {
    let p_in = 0.05;
    let base = single_pass(5e-3, 0.0);
    let g_b = 25.0 * base.fiber_area() / (p_in * base.l_fib);
    let cfg = single_pass(5e-3, g_b);
    // depletion reshapes the pump over several transits
    let (prop, lat, p_out) = settle(&cfg, &DriveSpec::new(p_in, 0.0), 30);
    assert!(p_out > 0.1 * p_in, "Stokes should deplete the pump, got {p_out:e}");
    let powers = prop.fiber_powers(&lat);
    for w in powers.windows(2) {
        assert!(w[1][0] <= w[0][0] * (1.0 + 1e-12), "pump grows along z");
        assert!(w[1][3] <= w[0][3] * (1.0 + 1e-12), "backward Stokes grows along z");
    }
}

fn short_cavity() -> CavityFiberConfig {
    CavityFiberConfig::default().with_elements(12)
}

#[test]
fn detuning_by_one_fsr_is_invisible() {
    let cfg = short_cavity();
    let prop = Propagator::new(&cfg).unwrap();
    let opts = EquilibriumOptions::default();
    for delta in [0.0, 3e6, -7e6] {
        let a = run_to_equilibrium(&cfg, &DriveSpec::new(0.02, delta), &opts).unwrap();
        let b = run_to_equilibrium(&cfg, &DriveSpec::new(0.02, delta + TWO_PI * prop.fsr()), &opts).unwrap();
        assert!((a.p_reflected / b.p_reflected - 1.0).abs() < 1e-6, "{} vs {}", a.p_reflected, b.p_reflected);
    }
}

#[test]
fn half_wavelength_displacement_is_invisible() {
    let cfg = short_cavity();
    let drive = DriveSpec::new(0.02, 2e6);
    let mut prop = Propagator::new(&cfg).unwrap();
    let (mut a, mut b) = (prop.empty_lattice(), prop.empty_lattice());
    let steps = 400 * prop.round_trip_steps();
    let (mut pa, mut pb) = (0.0, 0.0);
    for _ in 0..steps {
        pa = prop.step_with_x(&mut a, &drive, 0.0).unwrap().p_reflected();
        pb = prop.step_with_x(&mut b, &drive, 0.5 * cfg.lambda_p).unwrap().p_reflected();
    }
    assert!((pa / pb - 1.0).abs() < 1e-9, "{pa} vs {pb}");
}

/// Photons gained over one round trip at equilibrium minus the net photon
/// flux through the input mirror (and the seed), relative to the input.
fn photon_imbalance(cfg: &CavityFiberConfig, p_in: f64) -> f64 {
    let drive = DriveSpec::new(p_in, 0.0);
    let mut prop = Propagator::new(cfg).unwrap();
    let empty = prop.empty_lattice();
    let mut lat = equilibrate(&mut prop, empty, &drive, &EquilibriumOptions::default()).unwrap().lattice;
    let per_photon = HBAR * cfg.omega_l();
    let seed = drive.seed_power_ratio * p_in;
    let before = prop.photon_numbers(&lat);
    let mut net = 0.0;
    for _ in 0..prop.round_trip_steps() {
        let out = prop.step(&mut lat, &drive).unwrap();
        net += (p_in + seed - out.p_reflected()) * prop.dt() / per_photon;
    }
    let after = prop.photon_numbers(&lat);
    let change = (after.0 + after.1) - (before.0 + before.1);
    (change - net) / (p_in * prop.round_trip_time() / per_photon)
}

#[test]
fn photon_bookkeeping_without_losses() {
    // only the input mirror couples to the outside
    let lossless = CavityFiberConfig {
        alpha_loss: 0.0,
        beta_mm: 1.0,
        r2: 1.0,
        ..CavityFiberConfig::default().with_elements(40)
    };
    let linear = CavityFiberConfig { g_b: 0.0, ..lossless.clone() };
    assert!(photon_imbalance(&linear, 0.02).abs() < 1e-9);

    // the gain step conserves photons to first order in the element length
    let p_th = threshold_power(&single_mode_from_config(&lossless, 0.0, 0.0).unwrap(), 0.0);
    let coarse = photon_imbalance(&lossless, 1.3 * p_th);
    let fine = photon_imbalance(&lossless.refined(2), 1.3 * p_th);
    assert!(coarse.abs() < 1e-3, "{coarse:e}");
    let order = (coarse / fine).log2();
    assert!((order - 1.0).abs() < 0.1, "{coarse:e} -> {fine:e}");
}

#[test]
fn grid_refinement_changes_equilibrium_little() {
    let coarse = CavityFiberConfig::default();
    let fine = coarse.refined(2);
    let opts = EquilibriumOptions { rel_tol: 1e-7, ..EquilibriumOptions::default() };
    for p_in in [0.02, 0.045] {
        let a = run_to_equilibrium(&coarse, &DriveSpec::new(p_in, 0.0), &opts).unwrap();
        let b = run_to_equilibrium(&fine, &DriveSpec::new(p_in, 0.0), &opts).unwrap();
        for (x, y, what) in [(a.p_pump_circ, b.p_pump_circ, "pump"), (a.p_reflected, b.p_reflected, "reflected")] {
            assert!((x / y - 1.0).abs() < 5e-3, "{what} at {p_in} W: {x:e} vs {y:e}");
        }
        if a.p_stokes_circ > 1e-3 * a.p_pump_circ {
            assert!((a.p_stokes_circ / b.p_stokes_circ - 1.0).abs() < 5e-3);
        }
    }
}

#[test]
fn seed_level_does_not_set_the_steady_state() {
    let cfg = CavityFiberConfig::default();
    let opts = EquilibriumOptions { rel_tol: 1e-7, ..EquilibriumOptions::default() };
    let run = |ratio: f64| {
        let mut d = DriveSpec::new(0.075, 0.0);
        d.seed_power_ratio = ratio;
        run_to_equilibrium(&cfg, &d, &opts).unwrap()
    };
    let mid = run(1e-9);
    assert!(mid.stokes_photons > 0.1 * mid.pump_photons);
    for ratio in [1e-11, 1e-7] {
        let r = run(ratio);
        assert!((r.pump_photons / mid.pump_photons - 1.0).abs() < 0.01, "seed {ratio}");
        assert!((r.stokes_photons / mid.stokes_photons - 1.0).abs() < 0.01, "seed {ratio}");
    }
}

#[test]
fn round_trip_time_matches_optical_path() {
    let cfg = CavityFiberConfig::default();
    let prop = Propagator::new(&cfg).unwrap();
    let t = 2.0 * (cfg.l_free + cfg.n_refr * cfg.l_fib) / C;
    assert!((prop.round_trip_time() / t - 1.0).abs() < 1e-4);
    assert!((prop.round_trip_time() - 2.0 * (cfg.n_elements as f64 + 1.0) * cfg.dt()).abs() < 1e-18);
}
