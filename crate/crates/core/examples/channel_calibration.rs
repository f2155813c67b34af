//! Per-slice error rates of both protocols on one calibration block, written
//! as CSV to stdout.
//!
//! cargo run --release --example channel_calibration [-- snr step]

use rsec::channel::{generate_block, CalibrationSet};
use rsec::{ChannelParams, Protocol, SliceGrid};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let snr: f64 = args.next().map_or(1.0, |s| s.parse().expect("snr"));
    let params = ChannelParams::from_snr(snr)?;
    let sigma_y = params.total_variance().sqrt();
    let step: f64 = args.next().map_or(0.25 * sigma_y, |s| s.parse().expect("step"));

    let block = generate_block(1 << 18, &params, 11)?;
    let grid = SliceGrid::new(5, step)?;
    eprintln!(
        "snr {snr}, step {step:.4} ({:.3} sigma_Y), {} samples",
        step / sigma_y,
        block.len()
    );

    let mut out = csv::Writer::from_writer(std::io::stdout());
    for protocol in Protocol::ALL {
        let set = CalibrationSet::prepare(&block, protocol, 8)?;
        let ber = set.slice_errors(&grid)?;
        eprintln!("{protocol}: plug-in H(S) = {:.4} bits", set.empirical_entropy(&grid));
        for row in ber.csv_rows(snr) {
            out.serialize((protocol.to_string(), row))?;
        }
    }
    out.flush()?;
    Ok(())
}
