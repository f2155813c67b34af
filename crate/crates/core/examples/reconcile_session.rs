//! A full reconciliation session: calibrate, pick codes for each slice, then
//! correct a stream of blocks and report FER and efficiency.
//!
//! cargo run --release --example reconcile_session [-- rsec|sec snr log2_n blocks]

use rsec::recon::{prepare_session, run_session, SessionConfig};
use rsec::Protocol;

fn main() -> rsec::Result<()> {
    let mut args = std::env::args().skip(1);
    let protocol = match args.next().as_deref() {
        None | Some("sec") => Protocol::Sec,
        Some("rsec") => Protocol::Rsec,
        Some(other) => panic!("unknown protocol {other}"),
    };
    let snr: f64 = args.next().map_or(3.0, |s| s.parse().expect("snr"));
    let log_n: u32 = args.next().map_or(14, |s| s.parse().expect("log2 n"));
    let blocks: usize = args.next().map_or(50, |s| s.parse().expect("blocks"));

    let cfg = SessionConfig {
        n: 1 << log_n,
        blocks,
        master_seed: 42,
        ..SessionConfig::new(protocol, snr)
    };
    let session = prepare_session(&cfg)?;
    println!(
        "{protocol} snr {snr}: step {:.4}, decode order {:?}, beta_s {:.4}",
        session.grid().step(),
        session.order,
        session.calibration.beta_s
    );

    let out = run_session(&session, false)?;
    println!(
        "{:>5} {:>9} {:>8} {:>7} {:>9} {:>9}",
        "slice", "e_calib", "rate", "FER", "raw BER", "resid"
    );
    for s in &out.slices {
        if s.disclosed {
            println!("{:>5} {:>9.5} {:>8}", s.slice, s.calibrated_error, "clear");
        } else {
            println!(
                "{:>5} {:>9.5} {:>8.4} {:>7.3} {:>9.5} {:>9.2e}",
                s.slice, s.calibrated_error, s.rate, s.fer, s.raw_ber, s.residual_ber
            );
        }
    }
    println!(
        "blocks {}/{} passed, FER {:.3}, beta {:.4}, {:.4} bits/pulse",
        out.blocks_passed,
        out.blocks_attempted,
        out.fer,
        out.beta,
        out.bits_per_pulse()
    );
    Ok(())
}
