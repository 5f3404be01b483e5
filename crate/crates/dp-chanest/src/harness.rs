//! Monte-Carlo benchmark harness: seeded trials, NMSE/RMSE metrics,
//! aggregation and CSV emission.
//!
//! Every trial owns an independent RNG stream derived from
//! `(master_seed, trial_index)`, so the sweep is a pure function of its
//! configuration: trials may run concurrently and are merged in index order.
//! Within a trial all methods consume the identical LS channel estimate,
//! which makes the per-method comparison paired.
//!
//! The emitted CSV has one row per `(method, snr_db)` cell with the columns
//! `method, snr_db, trials, mean_nmse, mean_theta_rmse, mean_phi_rmse,
//! mean_vartheta_rmse, mean_runtime_s, failure_count`. Everything except
//! `mean_runtime_s` (wall-clock) is bit-reproducible under a fixed seed.

use std::io::Write as _;
use std::path::Path;
use std::time::Instant;

use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Deserialize;

use crate::baselines::{fft_peak_pick, GridSpec};
use crate::channel::{
    assemble_channel, generate_pilots, ls_estimate, noise_variance_for_snr, sample_params,
    simulate_rx_with_variance, ArrayGeometry, PathParams,
};
use crate::cpd::{estimate_channel_parafac, CpdOptions, ParamEstimate};
use crate::error::{Error, Result};
use crate::imdf::estimate_channel_imdf;
use crate::linalg;

/// Estimators the harness can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Parafac,
    Imdf,
    Fft,
    Ls,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Parafac => "parafac",
            Method::Imdf => "imdf",
            Method::Fft => "fft",
            Method::Ls => "ls",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// How the true path count is drawn per trial.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KMode {
    /// Same K for every trial.
    Fixed(usize),
    /// K uniform on `min..=max` per trial.
    Uniform { min: usize, max: usize },
}

/// What K the estimators are told.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AssumedK {
    /// Estimators receive the true K of each trial.
    Known,
    /// Estimators receive a fixed (over)estimate.
    Fixed(usize),
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub mr: usize,
    pub mx: usize,
    pub my: usize,
}

fn default_kappa() -> f64 {
    10.0
}

/// Full benchmark configuration. Unknown keys are rejected.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrialConfig {
    pub geometry: GeometryConfig,
    pub k_mode: KMode,
    pub assumed_k: AssumedK,
    pub snr_grid_db: Vec<f64>,
    pub trials: usize,
    pub master_seed: u64,
    /// Rician factor for the path gains.
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    /// Pilot length N; defaults to the minimum 2*M_t.
    #[serde(default)]
    pub pilot_length: Option<usize>,
    pub methods: Vec<Method>,
}

impl TrialConfig {
    pub fn geometry(&self) -> Result<ArrayGeometry> {
        ArrayGeometry::new(self.geometry.mr, self.geometry.mx, self.geometry.my)
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry()?;
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.snr_grid_db.is_empty() {
            return Err(Error::Config("snr_grid_db must be nonempty".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("methods must be nonempty".into()));
        }
        for (i, m) in self.methods.iter().enumerate() {
            if self.methods[..i].contains(m) {
                return Err(Error::Config(format!("duplicate method '{m}'")));
            }
        }
        match self.k_mode {
            KMode::Fixed(k) if k == 0 => {
                return Err(Error::Config("k_mode.fixed must be at least 1".into()))
            }
            KMode::Uniform { min, max } if min == 0 || min > max => {
                return Err(Error::Config(format!(
                    "k_mode.uniform needs 1 <= min <= max, got {min}..{max}"
                )))
            }
            _ => {}
        }
        if let AssumedK::Fixed(k) = self.assumed_k {
            if k == 0 {
                return Err(Error::Config("assumed_k.fixed must be at least 1".into()));
            }
        }
        if !(self.kappa >= 0.0) {
            return Err(Error::Config("kappa must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Parses a TOML benchmark configuration.
pub fn parse_config(text: &str) -> Result<TrialConfig> {
    let cfg: TrialConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Loads and validates a configuration file.
pub fn load_config(path: &Path) -> Result<TrialConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Io { path: path.to_path_buf(), source: e })?;
    parse_config(&text)
}

/// Normalized MSE: `||H_hat - H||_F^2 / ||H||_F^2`.
pub fn nmse(h_hat: &Array2<Complex64>, h: &Array2<Complex64>) -> Result<f64> {
    if h_hat.dim() != h.dim() {
        return Err(Error::Dimension(format!(
            "nmse: shapes {:?} vs {:?}",
            h_hat.dim(),
            h.dim()
        )));
    }
    let denom = linalg::frob(h);
    if denom == 0.0 {
        return Err(Error::ZeroReference);
    }
    Ok((linalg::frob(&(h_hat - h)) / denom).powi(2))
}

/// Result of matching estimated paths to ground truth.
#[derive(Debug, Clone)]
pub struct MatchReport {
    /// `assignment[i]` is the estimate index matched to truth path `i`.
    pub assignment: Vec<usize>,
    pub theta_rmse: f64,
    pub phi_rmse: f64,
    pub vartheta_rmse: f64,
    /// Estimated paths left unmatched (overestimated K).
    pub extra_paths: usize,
}

fn sq_diff(a: f64, b: f64) -> f64 {
    // NaN marks an undefined angle (single-antenna DOA); it carries no cost.
    let d = a - b;
    if d.is_nan() {
        0.0
    } else {
        d * d
    }
}

/// Minimum-cost assignment of estimated paths to true paths over summed
/// squared angle differences; RMSE is computed over matched pairs only.
pub fn match_angles(truth: &PathParams, est: &ParamEstimate) -> Result<MatchReport> {
    let k_true = truth.k();
    let k_est = est.k();
    if k_est < k_true {
        return Err(Error::InvalidArgument(format!(
            "match_angles: estimate has {k_est} paths but truth has {k_true}"
        )));
    }
    let pair_cost = |t: usize, e: usize| {
        sq_diff(est.theta[e], truth.theta[t])
            + sq_diff(est.phi[e], truth.phi[t])
            + sq_diff(est.vartheta[e], truth.vartheta[t])
    };
    // Exhaustive search over injections truth -> estimate; path counts are
    // single digits here.
    let mut best_cost = f64::INFINITY;
    let mut best: Vec<usize> = (0..k_true).collect();
    let mut current = Vec::with_capacity(k_true);
    let mut used = vec![false; k_est];
    fn recurse(
        t: usize,
        k_true: usize,
        k_est: usize,
        cost_so_far: f64,
        pair_cost: &impl Fn(usize, usize) -> f64,
        current: &mut Vec<usize>,
        used: &mut Vec<bool>,
        best_cost: &mut f64,
        best: &mut Vec<usize>,
    ) {
        if cost_so_far >= *best_cost {
            return;
        }
        if t == k_true {
            *best_cost = cost_so_far;
            best.clone_from(current);
            return;
        }
        for e in 0..k_est {
            if used[e] {
                continue;
            }
            used[e] = true;
            current.push(e);
            recurse(
                t + 1,
                k_true,
                k_est,
                cost_so_far + pair_cost(t, e),
                pair_cost,
                current,
                used,
                best_cost,
                best,
            );
            current.pop();
            used[e] = false;
        }
    }
    recurse(
        0,
        k_true,
        k_est,
        0.0,
        &pair_cost,
        &mut current,
        &mut used,
        &mut best_cost,
        &mut best,
    );

    let mean_sq = |f: &dyn Fn(usize, usize) -> f64| {
        best.iter()
            .enumerate()
            .map(|(t, &e)| f(t, e))
            .sum::<f64>()
            / k_true as f64
    };
    let theta_rmse = mean_sq(&|t, e| {
        let d = est.theta[e] - truth.theta[t];
        d * d
    })
    .sqrt();
    let phi_rmse = mean_sq(&|t, e| {
        let d = est.phi[e] - truth.phi[t];
        d * d
    })
    .sqrt();
    let vartheta_rmse = mean_sq(&|t, e| {
        let d = est.vartheta[e] - truth.vartheta[t];
        d * d
    })
    .sqrt();
    Ok(MatchReport {
        assignment: best,
        theta_rmse,
        phi_rmse,
        vartheta_rmse,
        extra_paths: k_est - k_true,
    })
}

/// Outcome of one method on one trial cell.
#[derive(Debug, Clone)]
pub struct MethodOutcome {
    pub nmse: f64,
    pub theta_rmse: f64,
    pub phi_rmse: f64,
    pub vartheta_rmse: f64,
    /// Wall-clock seconds around the estimator call only.
    pub runtime_s: f64,
    /// Error message when the method failed on this trial.
    pub error: Option<String>,
}

/// One trial cell: every enabled method against the same LS estimate.
#[derive(Debug, Clone)]
pub struct SnrCell {
    pub snr_db: f64,
    pub outcomes: Vec<(Method, MethodOutcome)>,
}

/// All cells of one Monte-Carlo trial.
#[derive(Debug, Clone)]
pub struct TrialResult {
    pub trial_index: usize,
    pub true_k: usize,
    pub cells: Vec<SnrCell>,
}

/// Runs one seeded trial across the whole SNR grid.
///
/// Deterministic given `(cfg, trial_index)`: the trial owns stream
/// `trial_index` of a ChaCha generator seeded with the master seed.
pub fn run_trial(cfg: &TrialConfig, trial_index: usize) -> Result<TrialResult> {
    let geometry = cfg.geometry()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.master_seed);
    rng.set_stream(trial_index as u64);

    let true_k = match cfg.k_mode {
        KMode::Fixed(k) => k,
        KMode::Uniform { min, max } => rng.random_range(min..=max),
    };
    let params = sample_params(&mut rng, true_k, cfg.kappa)?;
    let h = assemble_channel(&params, &geometry);
    let n = cfg.pilot_length.unwrap_or(2 * geometry.m_t());
    let pilots = generate_pilots(&geometry, n)?;
    let assumed_k = match cfg.assumed_k {
        AssumedK::Known => true_k,
        AssumedK::Fixed(k) => k,
    };

    // Common random numbers across the SNR grid: one unit-variance noise
    // realization per trial, scaled per cell. This pairs the cells, so
    // per-trial error curves vary smoothly in SNR.
    let clean = h.dot(&pilots.s);
    let unit_noise = {
        let zero = Array2::zeros(h.dim());
        simulate_rx_with_variance(&zero, &pilots, 1.0, &mut rng)
    };

    let mut cells = Vec::with_capacity(cfg.snr_grid_db.len());
    for &snr_db in &cfg.snr_grid_db {
        let sigma = noise_variance_for_snr(&h, &pilots, snr_db).sqrt();
        let x = &clean + &unit_noise.mapv(|z| z * sigma);
        let h_ls = ls_estimate(&x, &pilots)?;
        let als_seed: u64 = rng.random();
        let mut outcomes = Vec::with_capacity(cfg.methods.len());
        for &method in &cfg.methods {
            let start = Instant::now();
            let estimate: Result<Option<ParamEstimate>> = match method {
                Method::Ls => Ok(None),
                Method::Parafac => {
                    // Benchmark-grade ALS budget: with K >= 4 the 4-column
                    // stacked matrix is exactly interpolable, so past the
                    // noise floor extra sweeps only chase an exact noise fit.
                    let opts = CpdOptions {
                        max_iters: 300,
                        tol: 1e-8,
                        restarts: 5,
                        rng_seed: als_seed,
                    };
                    estimate_channel_parafac(&h_ls, &geometry, assumed_k, &opts).map(Some)
                }
                Method::Imdf => estimate_channel_imdf(&h_ls, &geometry, assumed_k).map(Some),
                Method::Fft => {
                    fft_peak_pick(&h_ls, &geometry, assumed_k, &GridSpec::default()).map(Some)
                }
            };
            let runtime_s = start.elapsed().as_secs_f64();
            let outcome = match estimate {
                Ok(None) => MethodOutcome {
                    nmse: nmse(&h_ls, &h)?,
                    theta_rmse: f64::NAN,
                    phi_rmse: f64::NAN,
                    vartheta_rmse: f64::NAN,
                    runtime_s,
                    error: None,
                },
                Ok(Some(est)) => {
                    let report = match_angles(&params, &est)?;
                    MethodOutcome {
                        nmse: nmse(&est.h_hat, &h)?,
                        theta_rmse: report.theta_rmse,
                        phi_rmse: report.phi_rmse,
                        vartheta_rmse: report.vartheta_rmse,
                        runtime_s,
                        error: None,
                    }
                }
                Err(e) => MethodOutcome {
                    nmse: f64::NAN,
                    theta_rmse: f64::NAN,
                    phi_rmse: f64::NAN,
                    vartheta_rmse: f64::NAN,
                    runtime_s,
                    error: Some(e.to_string()),
                },
            };
            outcomes.push((method, outcome));
        }
        cells.push(SnrCell { snr_db, outcomes });
    }
    Ok(TrialResult { trial_index, true_k, cells })
}

/// One aggregated CSV row.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub method: Method,
    pub snr_db: f64,
    pub trials: usize,
    pub mean_nmse: f64,
    pub mean_theta_rmse: f64,
    pub mean_phi_rmse: f64,
    pub mean_vartheta_rmse: f64,
    pub mean_runtime_s: f64,
    pub failure_count: usize,
}

/// Aggregated sweep results in CSV row order.
#[derive(Debug, Clone)]
pub struct SweepResults {
    pub rows: Vec<SweepRow>,
    pub trial_results: Vec<TrialResult>,
}

pub const CSV_HEADER: &str = "method,snr_db,trials,mean_nmse,mean_theta_rmse,mean_phi_rmse,\
                              mean_vartheta_rmse,mean_runtime_s,failure_count";

impl SweepResults {
    pub fn row(&self, method: Method, snr_db: f64) -> Option<&SweepRow> {
        self.rows
            .iter()
            .find(|r| r.method == method && r.snr_db == snr_db)
    }

    /// Renders the CSV, header first, rows in `(method, snr)` order.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        out.push_str("method,snr_db,trials,mean_nmse,mean_theta_rmse,mean_phi_rmse,");
        out.push_str("mean_vartheta_rmse,mean_runtime_s,failure_count\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                r.method,
                r.snr_db,
                r.trials,
                r.mean_nmse,
                r.mean_theta_rmse,
                r.mean_phi_rmse,
                r.mean_vartheta_rmse,
                r.mean_runtime_s,
                r.failure_count
            ));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut file = std::fs::File::create(path)
            .map_err(|e| Error::Io { path: path.to_path_buf(), source: e })?;
        file.write_all(self.to_csv_string().as_bytes())
            .map_err(|e| Error::Io { path: path.to_path_buf(), source: e })
    }
}

/// Runs the full Monte-Carlo sweep, trials in parallel, and aggregates the
/// per-cell means in trial-index order.
pub fn run_monte_carlo(cfg: &TrialConfig) -> Result<SweepResults> {
    cfg.validate()?;
    let trial_results: Vec<TrialResult> = (0..cfg.trials)
        .into_par_iter()
        .map(|i| run_trial(cfg, i))
        .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::new();
    for &method in &cfg.methods {
        for (snr_idx, &snr_db) in cfg.snr_grid_db.iter().enumerate() {
            let mut sums = [0.0f64; 5];
            let mut successes = 0usize;
            let mut failures = 0usize;
            for trial in &trial_results {
                let (_, outcome) = trial.cells[snr_idx]
                    .outcomes
                    .iter()
                    .find(|(m, _)| *m == method)
                    .expect("method present in every cell");
                if outcome.error.is_some() {
                    failures += 1;
                    continue;
                }
                successes += 1;
                sums[0] += outcome.nmse;
                sums[1] += outcome.theta_rmse;
                sums[2] += outcome.phi_rmse;
                sums[3] += outcome.vartheta_rmse;
                sums[4] += outcome.runtime_s;
            }
            let mean = |total: f64| {
                if successes > 0 {
                    total / successes as f64
                } else {
                    f64::NAN
                }
            };
            rows.push(SweepRow {
                method,
                snr_db,
                trials: cfg.trials,
                mean_nmse: mean(sums[0]),
                mean_theta_rmse: mean(sums[1]),
                mean_phi_rmse: mean(sums[2]),
                mean_vartheta_rmse: mean(sums[3]),
                mean_runtime_s: mean(sums[4]),
                failure_count: failures,
            });
        }
    }
    Ok(SweepResults { rows, trial_results })
}
