//! Synthesizes a dual-polarized double-directional channel and writes it to
//! a `dp-chanest-v1` channel file.
//!
//! Run with: `cargo run --example synthesize_channel [-- <out-path>]`

use std::f64::consts::PI;

use dp_chanest::channel::{assemble_channel, sample_params, stack_channel, ArrayGeometry};
use dp_chanest::{io, linalg};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "channel.txt".to_string());

    // 4x8 transmit URA, 2-element receive ULA, four paths.
    let geometry = ArrayGeometry::new(2, 4, 8)?;
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let params = sample_params(&mut rng, 4, 10.0)?;

    println!("geometry: M_r={} M_x={} M_y={}", geometry.m_r, geometry.m_x, geometry.m_y);
    println!("path  theta[deg]  phi[deg]  vartheta[deg]  |b_VV|");
    for p in 0..params.k() {
        println!(
            "{:<5} {:>9.2} {:>9.2} {:>13.2} {:>7.3}",
            p + 1,
            params.theta[p] * 180.0 / PI,
            params.phi[p] * 180.0 / PI,
            params.vartheta[p] * 180.0 / PI,
            params.b[[0, p]].norm()
        );
    }

    let h = assemble_channel(&params, &geometry);
    println!("channel: {}x{}, ||H||_F = {:.4}", h.nrows(), h.ncols(), linalg::frob(&h));

    // The stacked form is what every estimator works on.
    let stacked = stack_channel(&h, &geometry)?;
    println!(
        "stacked form: {}x{} (rank at most min(K, 4) = {})",
        stacked.matrix.nrows(),
        stacked.matrix.ncols(),
        params.k().min(4)
    );

    io::write_channel_file(std::path::Path::new(&out), &h, &geometry)?;
    println!("wrote {out}");
    Ok(())
}
