//! Long run at 16 Mb blocks for the high-SNR efficiency table. Slow: each
//! block decodes five slices of 2^24 bits, so expect hours on one core.
//!
//! cargo run --release --example long_block_reconciliation [-- blocks]

use std::time::Instant;

use rsec::recon::{prepare_session, run_session, SessionConfig};
use rsec::Protocol;

/// `(snr, published efficiency)` pairs.
const TABLE: [(f64, f64); 4] = [(3.0, 0.9485), (5.12, 0.9553), (7.0, 0.9560), (14.57, 0.9502)];

fn main() -> rsec::Result<()> {
    let blocks: usize = std::env::args().nth(1).map_or(20, |s| s.parse().expect("blocks"));
    println!(
        "{:>6} {:>9} {:>9} {:>7} {:>7}",
        "snr", "beta", "target", "FER", "within"
    );
    for (snr, target) in TABLE {
        let start = Instant::now();
        let cfg = SessionConfig {
            n: 1 << 24,
            blocks,
            master_seed: 24,
            ..SessionConfig::new(Protocol::Rsec, snr)
        };
        let out = run_session(&prepare_session(&cfg)?, false)?;
        println!(
            "{snr:>6} {:>9.4} {target:>9.4} {:>7.3} {:>7}  ({:.0}s)",
            out.beta,
            out.fer,
            (out.beta - target).abs() <= 0.01,
            start.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
