//! Finite-size key rate against distance with the modulation variance
//! optimized at every point, next to the PLOB bound.
//!
//! cargo run --release --example key_rate_curve [-- beta]

use rsec::keyrate::{optimize_modulation_variance, BetaModel, LinkParams, VaSearch};

fn main() -> rsec::Result<()> {
    let beta: f64 = std::env::args().nth(1).map_or(0.95, |s| s.parse().expect("beta"));
    let model = BetaModel::Constant(beta);
    let search = VaSearch::default();
    println!("beta = {beta}, N_total = 2^40, N_data = 2^39");
    println!(
        "{:>6} {:>8} {:>7} {:>11} {:>11} {:>8}",
        "L_km", "V_A", "snr", "K_finite", "K_plob", "ratio"
    );
    for l in [0.0, 5.0, 10.0, 15.0, 20.0, 27.0, 33.93, 40.0, 50.0, 60.0, 80.0] {
        let r = optimize_modulation_variance(&LinkParams::reference(l, 1.0), &model, &search)?;
        if r.no_key {
            println!("{l:>6} {:>8} {:>7} {:>11}", "-", "-", "no key");
            continue;
        }
        println!(
            "{l:>6} {:>8.3} {:>7.3} {:>11.4e} {:>11.4e} {:>8.4}",
            r.modulation_variance,
            r.snr_at_link,
            r.k_finite,
            r.k_plob,
            r.k_finite / r.k_plob
        );
    }
    Ok(())
}
