//! One RSEC rotation step by hand: Bob's vector is mapped onto a random
//! point of the form (+-1, ..., +-1)/sqrt(d) and Alice applies the same map.
//!
//! cargo run --release --example rotation

use rsec::channel::generate_block;
use rsec::rotation::{rsec_rotate, vector_seed};
use rsec::ChannelParams;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn main() -> rsec::Result<()> {
    let d = 8;
    let params = ChannelParams::from_snr(1.0)?;
    let block = generate_block(d * 4, &params, 3)?;

    for (i, (x, y)) in block.x.chunks(d).zip(block.y.chunks(d)).enumerate() {
        let r = rsec_rotate(x, y, vector_seed(block.seed, i as u64))?;
        println!("vector {i}: b = {:?}", r.b);
        println!("  y      = {:>7.3?}", y);
        println!("  M y    = {:>7.3?}", r.y_rot);
        println!("  M x    = {:>7.3?}", r.x_rot);
        let noise_before: Vec<f64> = y.iter().zip(x).map(|(a, b)| a - b).collect();
        let noise_after: Vec<f64> = r.y_rot.iter().zip(&r.x_rot).map(|(a, b)| a - b).collect();
        println!(
            "  |y| = {:.6}, |My| = {:.6}, |y-x| = {:.6}, |My-Mx| = {:.6}",
            norm(y),
            norm(&r.y_rot),
            norm(&noise_before),
            norm(&noise_after)
        );
    }

    let m = rsec::rotation::build_orthogonal_map(&[1.0, 0.0], &[0.0, 1.0])?;
    println!("map taking (1,0) to (0,1): {:?}", m.to_dense());
    Ok(())
}
