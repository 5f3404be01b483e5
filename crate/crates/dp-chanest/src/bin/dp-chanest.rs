//! Command-line front end: `bench` (Monte-Carlo sweep), `bound`
//! (identifiability report), `estimate` (one-shot estimation on a channel
//! file).

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use dp_chanest::baselines::{fft_peak_pick, GridSpec};
use dp_chanest::cpd::{estimate_channel_parafac, CpdOptions, ParamEstimate};
use dp_chanest::harness::{load_config, run_monte_carlo, Method};
use dp_chanest::identifiability::imdf_max_paths;
use dp_chanest::imdf::estimate_channel_imdf;
use dp_chanest::{io, ArrayGeometry};

#[derive(Parser)]
#[command(name = "dp-chanest", version, about = "Dual-polarized double-directional channel estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte-Carlo NMSE-vs-SNR sweep and write a CSV.
    Bench {
        /// TOML benchmark configuration.
        #[arg(long)]
        config: PathBuf,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Print identifiability bounds for a geometry.
    Bound {
        /// Receive ULA element count.
        #[arg(long)]
        mr: usize,
        /// Transmit URA horizontal dimension.
        #[arg(long)]
        mx: usize,
        /// Transmit URA vertical dimension.
        #[arg(long)]
        my: usize,
        /// Also print machine-readable key=value lines.
        #[arg(long)]
        machine: bool,
    },
    /// Estimate multipath parameters from a channel file.
    Estimate {
        /// Channel file in dp-chanest-v1 format.
        #[arg(long = "in")]
        input: PathBuf,
        /// Number of paths to estimate.
        #[arg(long)]
        k: usize,
        /// Estimator to run.
        #[arg(long, value_enum)]
        method: Method,
    },
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}

fn run() -> Result<(), Box<dyn std::error::Error>> {
    match Cli::parse().command {
        Command::Bench { config, out } => {
            let cfg = load_config(&config)?;
            let results = run_monte_carlo(&cfg)?;
            results.write_csv(&out)?;
            println!("wrote {} ({} rows)", out.display(), results.rows.len());
        }
        Command::Bound { mr, mx, my, machine } => {
            let geometry = ArrayGeometry::new(mr, mx, my)?;
            let report = imdf_max_paths(&geometry);
            println!("{report}");
            if machine {
                println!("m_r={mr}");
                println!("m_x={mx}");
                println!("m_y={my}");
                println!("kruskal_max_K={}", report.kruskal_max_k);
                println!("imdf_max_K={}", report.imdf_max_k);
                let p = report.best_plan;
                println!("plan_p_r={}", p.p_r);
                println!("plan_p_x={}", p.p_x);
                println!("plan_p_y={}", p.p_y);
                println!("plan_q_r={}", p.q_r);
                println!("plan_q_x={}", p.q_x);
                println!("plan_q_y={}", p.q_y);
            }
        }
        Command::Estimate { input, k, method } => {
            let (h, geometry) = io::read_channel_file(&input)?;
            let estimate = match method {
                Method::Parafac => {
                    estimate_channel_parafac(&h, &geometry, k, &CpdOptions::default())?
                }
                Method::Imdf => estimate_channel_imdf(&h, &geometry, k)?,
                Method::Fft => fft_peak_pick(&h, &geometry, k, &GridSpec::default())?,
                Method::Ls => {
                    return Err("the channel file already is the LS estimate; \
                                pick one of parafac, imdf, fft"
                        .into())
                }
            };
            print_estimate(method, &estimate);
        }
    }
    Ok(())
}

fn print_estimate(method: Method, est: &ParamEstimate) {
    println!("method     {method}");
    println!("paths      {}", est.k());
    println!("residual   {:.6e}", est.diagnostics.residual);
    if est.diagnostics.iterations > 0 {
        println!("iterations {}", est.diagnostics.iterations);
    }
    if est.diagnostics.feasibility_warning {
        println!("warning    K exceeds the Kruskal uniqueness bound");
    }
    if est.diagnostics.subspace_gap_warning {
        println!("warning    weak signal-subspace gap");
    }
    if est.diagnostics.placeholder_paths > 0 {
        println!("warning    {} placeholder path(s)", est.diagnostics.placeholder_paths);
    }
    println!("path  theta[rad]    phi[rad]      vartheta[rad]");
    for p in 0..est.k() {
        println!(
            "{:<5} {:<13.6} {:<13.6} {:<13.6}",
            p + 1,
            est.theta[p],
            est.phi[p],
            est.vartheta[p]
        );
    }
    println!("path-loss matrix B (rows VV, VH, HV, HH):");
    for row in 0..4 {
        let cells: Vec<String> = (0..est.k())
            .map(|p| {
                let z = est.b[[row, p]];
                format!("{:+.4}{:+.4}j", z.re, z.im)
            })
            .collect();
        println!("  {}", cells.join("  "));
    }
}
