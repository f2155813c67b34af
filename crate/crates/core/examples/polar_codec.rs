//! Frame error rate of CRC-aided SC decoding over a BSC, against the rate
//! the construction picks for a 10% frame error target.
//!
//! cargo run --release --example polar_codec [-- log2_n frames]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rsec::polar::{construct_bsc, encode, sc_decode, select_info_count, CRC_WIDTH};

fn main() -> rsec::Result<()> {
    let mut args = std::env::args().skip(1);
    let log_n: u32 = args.next().map_or(12, |s| s.parse().expect("log2 n"));
    let frames: usize = args.next().map_or(200, |s| s.parse().expect("frames"));
    let n = 1usize << log_n;
    let mut rng = ChaCha8Rng::seed_from_u64(9);

    println!("n = {n}, {frames} frames per point");
    println!("{:>6} {:>8} {:>8} {:>8} {:>8}", "e", "k", "rate", "1-h(e)", "FER");
    for e in [0.01, 0.03, 0.05, 0.1, 0.2] {
        let k = select_info_count(e, n, 0.1)?;
        let code = construct_bsc(n, e, k)?.with_crc(CRC_WIDTH)?;
        let frozen_values: Vec<u8> = (0..code.frozen().len()).map(|_| rng.random_range(0..2)).collect();
        let llr_mag = ((1.0 - e) / e).ln();
        let mut failures = 0;
        for _ in 0..frames {
            let payload: Vec<u8> = (0..code.info().len() - CRC_WIDTH)
                .map(|_| rng.random_range(0..2))
                .collect();
            let info = rsec::polar::crc_attach(&payload);
            let x = encode(&info, &code, &frozen_values)?;
            let llr: Vec<f64> = x
                .iter()
                .map(|&b| {
                    let flipped = b ^ u8::from(rng.random_bool(e));
                    if flipped == 0 {
                        llr_mag
                    } else {
                        -llr_mag
                    }
                })
                .collect();
            let out = sc_decode(&llr, &code, &frozen_values)?;
            if !out.crc_ok || out.payload != payload {
                failures += 1;
            }
        }
        println!(
            "{e:>6} {k:>8} {:>8.4} {:>8.4} {:>8.3}",
            code.rate_pre_crc(),
            1.0 - rsec::binary_entropy(e),
            failures as f64 / frames as f64
        );
    }
    Ok(())
}
