//! Folding/subspace parameter estimation, including the beyond-receive-array
//! regime where the path count exceeds the number of receive antennas.
//!
//! Run with: `cargo run --example imdf_estimation`

use dp_chanest::channel::{
    assemble_channel, generate_pilots, ls_estimate, sample_params, simulate_rx, ArrayGeometry,
};
use dp_chanest::harness::{match_angles, nmse};
use dp_chanest::identifiability::choose_folding;
use dp_chanest::imdf::estimate_channel_imdf;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let geometry = ArrayGeometry::new(2, 4, 8)?;
    // Five paths on a two-element receive array: folding makes this feasible.
    let k = 5;
    let mut rng = ChaCha8Rng::seed_from_u64(11);

    let plan = choose_folding(&geometry, k)?;
    println!(
        "folding plan for K={k}: P=({},{},{}) Q=({},{},{}) -> {}x{} folded, {} columns stacked",
        plan.p_r, plan.p_x, plan.p_y, plan.q_r, plan.q_x, plan.q_y,
        plan.rows(), plan.cols(), 8 * plan.cols(),
    );

    let params = sample_params(&mut rng, k, 10.0)?;
    let h = assemble_channel(&params, &geometry);
    let pilots = generate_pilots(&geometry, 2 * geometry.m_t())?;

    for snr_db in [f64::INFINITY, 30.0, 20.0, 10.0] {
        let x = simulate_rx(&h, &pilots, snr_db, &mut rng);
        let h_ls = ls_estimate(&x, &pilots)?;
        let estimate = estimate_channel_imdf(&h_ls, &geometry, k)?;
        let report = match_angles(&params, &estimate)?;
        let label = if snr_db.is_infinite() { "inf".into() } else { format!("{snr_db}") };
        println!(
            "SNR {label:>4} dB: NMSE {:.3e} (LS {:.3e}), theta RMSE {:.2e} rad{}",
            nmse(&estimate.h_hat, &h)?,
            nmse(&h_ls, &h)?,
            report.theta_rmse,
            if estimate.diagnostics.subspace_gap_warning { "  [weak subspace gap]" } else { "" },
        );
    }
    Ok(())
}
