//! Small Monte-Carlo NMSE-vs-SNR sweep over all four estimators.
//!
//! This is a reduced version of the benchmark the `dp-chanest bench`
//! subcommand runs from a TOML config; it writes the same CSV format.
//!
//! Run with: `cargo run --release --example nmse_sweep [-- <out-csv>]`

use dp_chanest::harness::{parse_config, run_monte_carlo};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "nmse_sweep.csv".to_string());

    let cfg = parse_config(
        r#"
        trials = 20
        master_seed = 2024
        snr_grid_db = [0.0, 10.0, 20.0, 30.0]
        methods = ["parafac", "imdf", "fft", "ls"]
        assumed_k = "known"

        [geometry]
        mr = 2
        mx = 4
        my = 8

        [k_mode]
        uniform = { min = 1, max = 6 }
        "#,
    )?;

    let results = run_monte_carlo(&cfg)?;
    println!("method    snr_db   mean_nmse     failures");
    for row in &results.rows {
        println!(
            "{:<9} {:>6} {:>12.4e} {:>8}",
            row.method.name(),
            row.snr_db,
            row.mean_nmse,
            row.failure_count
        );
    }
    results.write_csv(std::path::Path::new(&out))?;
    println!("wrote {out}");
    Ok(())
}
