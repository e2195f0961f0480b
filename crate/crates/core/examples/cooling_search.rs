//! Differential-evolution search for the lowest phonon number at each fiber
//! length, with and without Brillouin gain.
//!
//! `cargo run --release --example cooling_search -- 1.6 0.1`

use fibercav::optim::{minimize_phonons, CoolingSearchSpec};

fn main() -> fibercav::Result<()> {
    let lengths: Vec<f64> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let lengths = if lengths.is_empty() { vec![0.1, 0.2, 0.4, 0.8, 1.6] } else { lengths };
    println!("{:>6} {:>6} {:>8} {:>8} {:>10} {:>9} {:>8} {:>10}", "L_m", "SBS", "P/P_th", "F", "f_m_kHz", "D/kappa", "Q_eff", "n_f");
    for l in lengths {
        for sbs in [true, false] {
            let mut spec = CoolingSearchSpec::new(l);
            if !sbs {
                spec.sbs = false;
            }
            match minimize_phonons(&spec) {
                Ok(r) => {
                    let b = r.best;
                    println!(
                        "{:6.2} {:>6} {:8.3} {:8.2} {:10.3} {:9.3} {:8.1} {:10.4}",
                        l,
                        sbs,
                        b.power_ratio,
                        b.finesse,
                        b.f_m * 1e-3,
                        b.delta_opt / b.kappa,
                        b.q_eff,
                        b.n_f
                    );
                }
                Err(e) => println!("{l:6.2} {sbs:>6} {e}"),
            }
        }
    }
    Ok(())
}
