//! Quantization efficiency of RSEC and SEC over a range of SNRs.
//!
//! For every SNR the grid step is optimized on 2^20 calibration samples and
//! the per-slice error rates, slice entropy and beta_s are printed. The last
//! column evaluates the same error rates against the Gaussian entropy of an
//! unrotated sample, which overstates H for rotated data.
//!
//! cargo run --release --example quantization_efficiency [-- m]

use std::time::Instant;

use rsec::channel::{generate_block, CalibrationSet};
use rsec::quantizer::{optimize_grid, protocol_entropy, slice_entropy, GridSearch};
use rsec::recon::quantization_efficiency;
use rsec::{ChannelParams, Protocol};

fn main() -> rsec::Result<()> {
    let m: u32 = std::env::args().nth(1).map_or(5, |s| s.parse().expect("m"));
    let samples = 1 << 20;
    let d = 8;
    println!("m = {m}, {samples} calibration samples, d = {d}");
    println!(
        "{:>6} {:>5} {:>8} {:>7} {:>8} {:>9}  e_1..e_m",
        "snr", "proto", "step/sY", "H", "beta_s", "gauss_H"
    );
    for snr in [0.5, 0.75, 1.0, 1.5, 2.0, 3.0, 5.0] {
        let params = ChannelParams::from_snr(snr)?;
        let block = generate_block(samples, &params, 2024)?;
        for protocol in Protocol::ALL {
            let start = Instant::now();
            let set = CalibrationSet::prepare(&block, protocol, d)?;
            let best = optimize_grid(m, &params, protocol, &set, &GridSearch::default())?;
            let h = protocol_entropy(protocol, &best.grid, params.total_variance(), d)?;
            let ber = set.slice_errors(&best.grid)?;
            let gauss = quantization_efficiency(&ber, slice_entropy(&best.grid, params.total_variance())?, &params)?;
            let e: Vec<String> = best.errors.iter().map(|e| format!("{e:.4}")).collect();
            println!(
                "{snr:>6} {:>5} {:>8.4} {h:>7.4} {:>8.4} {gauss:>9.4}  {}  ({:.1}s)",
                protocol.to_string(),
                best.grid.step() / params.total_variance().sqrt(),
                best.beta_s,
                e.join(" "),
                start.elapsed().as_secs_f64()
            );
        }
    }
    Ok(())
}
