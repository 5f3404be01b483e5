//! Canonical polyadic decomposition of the stacked channel by alternating
//! least squares, with closed-form angle extraction and a final path-loss
//! refit.
//!
//! The stacked channel is a 4-way tensor of rank at most K:
//!
//! ```text
//! min || stacked - (V_y^* ⊙ V_x^* ⊙ V_r) B^T ||_F^2
//! ```
//!
//! ALS performs an exact least-squares update of each factor in turn, so the
//! objective is nonincreasing at every iteration; the recorded residual
//! history enforces this. The fitted factors carry an arbitrary nonzero
//! column scale, which is pushed into `B` by normalizing each steering factor
//! to unit first entry. Angles come from the aggregate phase difference of
//! each Vandermonde column, and the path losses are refit against steering
//! matrices rebuilt from the extracted angles, which removes the scaling
//! ambiguity entirely.

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::channel::{
    assemble_channel, steering_matrix_r, steering_matrix_x, steering_matrix_y, ArrayGeometry,
    PathParams, StackedChannel,
};
use crate::error::{Error, Result};
use crate::identifiability::kruskal_check;
use crate::linalg;

/// Options for the alternating-least-squares fit.
#[derive(Debug, Clone, Copy)]
pub struct CpdOptions {
    /// Hard iteration cap per restart.
    pub max_iters: usize,
    /// Stop when the relative objective decrease falls below this.
    pub tol: f64,
    /// Number of random restarts; the best final residual wins.
    pub restarts: usize,
    /// Seed for the restart initializations.
    pub rng_seed: u64,
}

impl Default for CpdOptions {
    fn default() -> Self {
        Self { max_iters: 2000, tol: 1e-10, restarts: 5, rng_seed: 0x5eed }
    }
}

/// Fitted CPD factors of the stacked channel.
///
/// `v_r`, `v_x`, `v_y` are the estimated steering matrices (model convention,
/// i.e. the data carries their conjugates for x and y), each normalized to
/// unit first entry; `b` absorbs the scales. `fit_residual` is the relative
/// Frobenius misfit, in [0, 1] for any input.
#[derive(Debug, Clone)]
pub struct CpdFactors {
    pub v_r: Array2<Complex64>,
    pub v_x: Array2<Complex64>,
    pub v_y: Array2<Complex64>,
    pub b: Array2<Complex64>,
    pub fit_residual: f64,
    /// Accepted relative residual after each sweep, starting at the initial point.
    pub residual_history: Vec<f64>,
    /// Sweeps executed by the winning restart.
    pub iterations: usize,
    /// Whether the winning restart reached the relative-decrease tolerance.
    pub converged: bool,
    /// Set when K fails the Kruskal-type uniqueness condition for the geometry.
    pub feasibility_warning: bool,
}

/// Per-estimate diagnostics shared by all parametric estimators.
#[derive(Debug, Clone, Default)]
pub struct EstimateDiagnostics {
    /// Relative Frobenius residual of the model fit.
    pub residual: f64,
    /// Iterations used by the iterative stage, if any.
    pub iterations: usize,
    /// Whether the iterative stage converged before its cap.
    pub converged: bool,
    /// K exceeds the identifiability bound for the geometry.
    pub feasibility_warning: bool,
    /// The signal-subspace singular-value gap was weak (sigma_K/sigma_{K+1} < 10).
    pub subspace_gap_warning: bool,
    /// Number of paths whose elevation estimate was clipped into [0, pi/2].
    pub phi_clipped: usize,
    /// Paths filled with zero-gain placeholders (peak search exhausted).
    pub placeholder_paths: usize,
}

/// Estimated multipath parameters with the reconstructed channel.
#[derive(Debug, Clone)]
pub struct ParamEstimate {
    /// DOA estimates in radians; NaN marks the undefined single-antenna case.
    pub theta: Vec<f64>,
    /// Elevation DOD estimates in [0, pi/2].
    pub phi: Vec<f64>,
    /// Azimuth DOD estimates, clipped into [-pi/2, pi/2].
    pub vartheta: Vec<f64>,
    /// Refit path-loss matrix, 4 x K.
    pub b: Array2<Complex64>,
    /// Channel reconstructed from the estimated parameters.
    pub h_hat: Array2<Complex64>,
    pub diagnostics: EstimateDiagnostics,
}

impl ParamEstimate {
    /// Estimated path count.
    pub fn k(&self) -> usize {
        self.theta.len()
    }
}

/// One ALS run state: factors in data convention (x/y conjugated).
#[derive(Clone)]
struct AlsState {
    a_r: Array2<Complex64>,
    a_x: Array2<Complex64>,
    a_y: Array2<Complex64>,
    a_b: Array2<Complex64>,
}

impl AlsState {
    /// `self + step * (next - self)` on every factor.
    fn extrapolate(&self, next: &AlsState, step: f64) -> AlsState {
        let mix = |a: &Array2<Complex64>, b: &Array2<Complex64>| {
            Array2::from_shape_fn(a.dim(), |(i, j)| a[[i, j]] + (b[[i, j]] - a[[i, j]]) * step)
        };
        AlsState {
            a_r: mix(&self.a_r, &next.a_r),
            a_x: mix(&self.a_x, &next.a_x),
            a_y: mix(&self.a_y, &next.a_y),
            a_b: mix(&self.a_b, &next.a_b),
        }
    }
}

fn random_factor<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Array2<Complex64> {
    Array2::from_shape_fn((rows, cols), |_| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        Complex64::new(re, im)
    })
}

/// Mode-n unfolding of the stacked matrix seen as an
/// `m_r x m_x x m_y x n_cols` tensor, remaining indices in increasing mode
/// order with the lowest varying fastest.
fn unfoldings(stacked: &Array2<Complex64>, g: &ArrayGeometry) -> [Array2<Complex64>; 4] {
    let (d1, d2, d3, d4) = (g.m_r, g.m_x, g.m_y, stacked.ncols());
    let at = |i1: usize, i2: usize, i3: usize, i4: usize| stacked[[i1 + d1 * (i2 + d2 * i3), i4]];
    let mut t1 = Array2::zeros((d1, d2 * d3 * d4));
    let mut t2 = Array2::zeros((d2, d1 * d3 * d4));
    let mut t3 = Array2::zeros((d3, d1 * d2 * d4));
    let mut t4 = Array2::zeros((d4, d1 * d2 * d3));
    for i4 in 0..d4 {
        for i3 in 0..d3 {
            for i2 in 0..d2 {
                for i1 in 0..d1 {
                    let v = at(i1, i2, i3, i4);
                    t1[[i1, i2 + d2 * (i3 + d3 * i4)]] = v;
                    t2[[i2, i1 + d1 * (i3 + d3 * i4)]] = v;
                    t3[[i3, i1 + d1 * (i2 + d2 * i4)]] = v;
                    t4[[i4, i1 + d1 * (i2 + d2 * i3)]] = v;
                }
            }
        }
    }
    [t1, t2, t3, t4]
}

/// Khatri-Rao chain of all factors except `skip`, highest mode leftmost.
fn kr_except(state: &AlsState, skip: usize) -> Array2<Complex64> {
    let factors = [&state.a_r, &state.a_x, &state.a_y, &state.a_b];
    let mut acc: Option<Array2<Complex64>> = None;
    for mode in (0..4).rev() {
        if mode == skip {
            continue;
        }
        acc = Some(match acc {
            None => factors[mode].clone(),
            Some(prev) => linalg::khatri_rao(&prev, factors[mode]).expect("equal column counts"),
        });
    }
    acc.expect("at least one factor in the chain")
}

/// Exact LS update of one factor: minimizes the objective over that factor
/// with the others fixed, using the Gramian normal equations.
fn update_factor(t_n: &Array2<Complex64>, z: &Array2<Complex64>, state: &AlsState, skip: usize) -> Array2<Complex64> {
    let k = z.ncols();
    let factors = [&state.a_r, &state.a_x, &state.a_y, &state.a_b];
    let mut gram = Array2::from_elem((k, k), Complex64::new(1.0, 0.0));
    for (mode, f) in factors.iter().enumerate() {
        if mode == skip {
            continue;
        }
        let g = linalg::conj_t(f).dot(*f);
        for i in 0..k {
            for j in 0..k {
                gram[[i, j]] *= g[[i, j]];
            }
        }
    }
    let m = t_n.dot(&z.mapv(|v| v.conj()));
    // A gram^T = M  =>  gram A^T = M^T; pinv handles rank-deficient Gramians.
    let at = linalg::ls_solve(&gram, &m.t().to_owned()).expect("square Gramian solve");
    at.t().to_owned()
}

fn model_residual(stacked: &Array2<Complex64>, state: &AlsState, norm: f64) -> f64 {
    let z = kr_except(state, 3);
    let model = z.dot(&state.a_b.t());
    linalg::frob(&(stacked - &model)) / norm
}

/// Fits the rank-K CPD of the stacked channel by alternating least squares.
///
/// Runs `opts.restarts` random initializations and keeps the best final
/// residual. Factor columns are normalized to unit first entry with scales
/// pushed into `b`.
pub fn cpd_als(stacked: &StackedChannel, k: usize, opts: &CpdOptions) -> Result<CpdFactors> {
    cpd_als_matrix(&stacked.matrix, &stacked.geometry, k, opts)
}

/// ALS core over a stacked matrix with any number of gain columns (4 for the
/// plain stacked channel, 8 for its forward-backward extension).
pub(crate) fn cpd_als_matrix(
    matrix: &Array2<Complex64>,
    geometry: &ArrayGeometry,
    k: usize,
    opts: &CpdOptions,
) -> Result<CpdFactors> {
    if k == 0 {
        return Err(Error::InvalidArgument("K must be at least 1".into()));
    }
    if matrix.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NonFinite("stacked channel"));
    }
    let g = *geometry;
    let n_gain = matrix.ncols();
    if matrix.nrows() != g.m_t() * g.m_r || n_gain == 0 {
        return Err(Error::Dimension(format!(
            "stacked matrix is {:?}, expected ({}, >=1)",
            matrix.dim(),
            g.m_t() * g.m_r
        )));
    }
    let feasibility_warning = !kruskal_check(&g, k);
    let norm = linalg::frob(matrix);
    if norm == 0.0 {
        // Zero input: all-ones steering factors, zero gains, residual 0.
        let ones = |rows: usize| Array2::from_elem((rows, k), Complex64::new(1.0, 0.0));
        return Ok(CpdFactors {
            v_r: ones(g.m_r),
            v_x: ones(g.m_x),
            v_y: ones(g.m_y),
            b: Array2::zeros((n_gain, k)),
            fit_residual: 0.0,
            residual_history: vec![0.0],
            iterations: 0,
            converged: true,
            feasibility_warning,
        });
    }

    let t = unfoldings(matrix, &g);
    let mut best: Option<(f64, AlsState, Vec<f64>, usize, bool)> = None;

    for restart in 0..opts.restarts.max(1) {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.rng_seed);
        rng.set_stream(restart as u64);
        let mut state = AlsState {
            a_r: random_factor(&mut rng, g.m_r, k),
            a_x: random_factor(&mut rng, g.m_x, k),
            a_y: random_factor(&mut rng, g.m_y, k),
            a_b: random_factor(&mut rng, n_gain, k),
        };
        let mut res = model_residual(matrix, &state, norm);
        let mut history = vec![res];
        let mut converged = false;
        let mut iterations = 0;
        for iter in 0..opts.max_iters {
            let prev = state.clone();
            for mode in 0..4 {
                let z = kr_except(&state, mode);
                let updated = update_factor(&t[mode], &z, &state, mode);
                match mode {
                    0 => state.a_r = updated,
                    1 => state.a_x = updated,
                    2 => state.a_y = updated,
                    _ => state.a_b = updated,
                }
            }
            let mut new_res = model_residual(matrix, &state, norm);
            // Line-search extrapolation along the sweep direction; taken only
            // when it lowers the objective, so monotonicity is preserved.
            // This breaks the long plateaus ALS is prone to when a factor has
            // fewer rows than K.
            if iter >= 2 {
                let step = (iter as f64).cbrt();
                let stretched = prev.extrapolate(&state, step);
                let stretched_res = model_residual(matrix, &stretched, norm);
                if stretched_res < new_res {
                    state = stretched;
                    new_res = stretched_res;
                }
            }
            if new_res > res {
                // Rounding floor reached; keep the last monotone iterate.
                state = prev;
                converged = true;
                break;
            }
            iterations += 1;
            let decrease = res - new_res;
            res = new_res;
            history.push(res);
            if decrease <= opts.tol * res.max(f64::MIN_POSITIVE) {
                converged = true;
                break;
            }
        }
        let replace = match &best {
            None => true,
            Some((best_res, ..)) => res < *best_res,
        };
        if replace {
            best = Some((res, state, history, iterations, converged));
        }
    }

    let (fit_residual, mut state, residual_history, iterations, converged) =
        best.expect("at least one restart ran");

    // Push column scales into B: unit first entry on each steering factor.
    for col in 0..k {
        let mut scale = Complex64::new(1.0, 0.0);
        for f in [&mut state.a_r, &mut state.a_x, &mut state.a_y] {
            let head = f[[0, col]];
            if head.norm() > 0.0 {
                for row in 0..f.nrows() {
                    f[[row, col]] /= head;
                }
                scale *= head;
            }
        }
        for row in 0..4 {
            state.a_b[[row, col]] *= scale;
        }
    }

    Ok(CpdFactors {
        v_r: state.a_r,
        v_x: state.a_x.mapv(|z| z.conj()),
        v_y: state.a_y.mapv(|z| z.conj()),
        b: state.a_b,
        fit_residual,
        residual_history,
        iterations,
        converged,
        feasibility_warning,
    })
}

/// Aggregate phase difference of a Vandermonde column: the angle of
/// `conj(first M-1 entries) . (last M-1 entries)`.
fn phase_step(col: &Array1<Complex64>) -> f64 {
    let m = col.len();
    let mut acc = Complex64::default();
    for i in 0..m - 1 {
        acc += col[i].conj() * col[i + 1];
    }
    acc.arg()
}

pub(crate) fn extract_angles_full(
    factors: &CpdFactors,
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>, usize)> {
    let k = factors.v_r.ncols();
    let mut theta = Vec::with_capacity(k);
    let mut phi = Vec::with_capacity(k);
    let mut vartheta = Vec::with_capacity(k);
    let mut clipped = 0;
    for path in 0..k {
        let v_r = factors.v_r.column(path).to_owned();
        let v_x = factors.v_x.column(path).to_owned();
        let v_y = factors.v_y.column(path).to_owned();
        for col in [&v_r, &v_x, &v_y] {
            if col.iter().map(|z| z.norm_sqr()).sum::<f64>() == 0.0 {
                return Err(Error::ZeroColumn { path });
            }
        }
        // theta is undefined for a single receive antenna.
        theta.push(if v_r.len() >= 2 {
            (phase_step(&v_r) / std::f64::consts::PI).clamp(-1.0, 1.0).asin()
        } else {
            f64::NAN
        });
        let mut dx = if v_x.len() >= 2 { phase_step(&v_x) } else { 0.0 };
        // The x-step pi*sin(phi)*cos(vartheta) lives in [0, pi] and can sit
        // at the wrap point itself (phi near pi/2, vartheta near 0), where
        // noise flips the principal-value phase to -pi. Unwrap onto the
        // model's half circle.
        if dx < -std::f64::consts::FRAC_PI_2 {
            dx += 2.0 * std::f64::consts::PI;
        }
        let dy = if v_y.len() >= 2 { phase_step(&v_y) } else { 0.0 };
        let sin_phi = (dx * dx + dy * dy).sqrt() / std::f64::consts::PI;
        if sin_phi > 1.0 {
            clipped += 1;
        }
        phi.push(sin_phi.min(1.0).asin());
        // At zenith the azimuth is unidentifiable; below rounding noise the
        // atan2(0,0) = 0 convention applies. The clamp keeps the azimuth
        // inside the model sector when noise flips the sign of dx.
        let vt = if sin_phi < 1e-12 { 0.0 } else { dy.atan2(dx) };
        vartheta.push(vt.clamp(-std::f64::consts::FRAC_PI_2, std::f64::consts::FRAC_PI_2));
    }
    Ok((theta, phi, vartheta, clipped))
}

/// Closed-form angle extraction from fitted CPD factors.
///
/// Returns `(theta, phi, vartheta)` per path. The output is invariant to any
/// nonzero complex scaling of the factor columns.
pub fn extract_angles(factors: &CpdFactors) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let (theta, phi, vartheta, _) = extract_angles_full(factors)?;
    Ok((theta, phi, vartheta))
}

/// Refits path losses over the subset of paths whose steering columns grow
/// the rank of the refit matrix.
///
/// Estimated angle sets can put several steering columns into a common
/// subspace: clipping may collapse two paths onto one steering vector, and
/// with a 2-element receive array any three paths sharing the transmit
/// angles span only two dimensions. Such paths would make the refit rank
/// deficient, so each column is kept only if its residual against the span
/// of the already kept columns exceeds 1e-6 of its norm; dropped paths get a
/// zero gain column and the survivors absorb the combined gain.
pub(crate) fn refit_unique_paths(
    stacked: &StackedChannel,
    theta: &[f64],
    phi: &[f64],
    vartheta: &[f64],
) -> Result<(Array2<Complex64>, usize)> {
    let g = stacked.geometry;
    let k = theta.len();
    let v_r = steering_matrix_r(theta, g.m_r);
    let v_x = steering_matrix_x(phi, vartheta, g.m_x);
    let v_y = steering_matrix_y(phi, vartheta, g.m_y);
    let z = crate::linalg::khatri_rao(
        &crate::linalg::khatri_rao(&v_y.mapv(|v| v.conj()), &v_x.mapv(|v| v.conj()))?,
        &v_r,
    )?;
    let mut keep: Vec<usize> = Vec::with_capacity(k);
    let mut basis: Vec<Array1<Complex64>> = Vec::with_capacity(k);
    for p in 0..k {
        let mut resid = z.column(p).to_owned();
        let norm0 = resid.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        for q in &basis {
            let inner: Complex64 = q.iter().zip(resid.iter()).map(|(a, b)| a.conj() * b).sum();
            for (r, b) in resid.iter_mut().zip(q.iter()) {
                *r -= inner * b;
            }
        }
        let norm_res = resid.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        if norm_res > 1e-6 * norm0 {
            keep.push(p);
            basis.push(resid.mapv(|v| v / norm_res));
        }
    }
    let pick = |v: &[f64]| keep.iter().map(|&p| v[p]).collect::<Vec<f64>>();
    let b_kept = refine_pathloss(stacked, &pick(theta), &pick(phi), &pick(vartheta))?;
    let mut b = Array2::zeros((4, k));
    for (col, &p) in keep.iter().enumerate() {
        for row in 0..4 {
            b[[row, p]] = b_kept[[row, col]];
        }
    }
    Ok((b, k - keep.len()))
}

/// Least-squares path-loss refit against steering matrices rebuilt from the
/// extracted angles (no scaling ambiguity remains).
pub fn refine_pathloss(
    stacked: &StackedChannel,
    theta: &[f64],
    phi: &[f64],
    vartheta: &[f64],
) -> Result<Array2<Complex64>> {
    let g = stacked.geometry;
    let k = theta.len();
    if phi.len() != k || vartheta.len() != k {
        return Err(Error::Dimension("angle lists disagree on K".into()));
    }
    let v_r = steering_matrix_r(theta, g.m_r);
    let v_x = steering_matrix_x(phi, vartheta, g.m_x);
    let v_y = steering_matrix_y(phi, vartheta, g.m_y);
    let z = linalg::khatri_rao(
        &linalg::khatri_rao(&v_y.mapv(|v| v.conj()), &v_x.mapv(|v| v.conj()))?,
        &v_r,
    )?;
    let sv = linalg::singular_values(&z)?;
    let tol = linalg::rank_tolerance(sv[0], z.nrows(), z.ncols());
    if sv[k - 1] <= tol {
        return Err(Error::RankDeficient { k, ratio: sv[k - 1] / sv[0].max(f64::MIN_POSITIVE) });
    }
    let bt = linalg::ls_solve(&z, &stacked.matrix)?;
    Ok(bt.t().to_owned())
}

/// Full tensor-method pipeline: stack, fit, extract angles, refit gains,
/// reconstruct the channel.
pub fn estimate_channel_parafac(
    h_ls: &Array2<Complex64>,
    geometry: &ArrayGeometry,
    k: usize,
    opts: &CpdOptions,
) -> Result<ParamEstimate> {
    let stacked = crate::channel::stack_channel(h_ls, geometry)?;
    let norm = linalg::frob(&stacked.matrix);

    // The fit runs on the forward-backward extended matrix: the conjugated,
    // index-reversed snapshots share the steering factors and double the gain
    // columns, which both averages the noise and keeps the rank-K model from
    // interpolating it when K reaches the plain matrix's column count.
    let extended = crate::channel::fb_extend_stacked(&stacked);

    // Even so, a bad draw shows up as a structured model that explains the
    // data much worse than the raw fit does. That mismatch is observable
    // without ground truth, so retry with fresh restarts and keep the attempt
    // whose extracted-angle model fits best.
    let mut chosen: Option<(f64, CpdFactors, Vec<f64>, Vec<f64>, Vec<f64>, usize, Array2<Complex64>, usize)> =
        None;
    for attempt in 0..5u64 {
        let attempt_opts = CpdOptions {
            rng_seed: opts.rng_seed ^ attempt.wrapping_mul(0x9e37_79b9_7f4a_7c15),
            ..*opts
        };
        let factors = cpd_als_matrix(&extended, geometry, k, &attempt_opts)?;
        let (theta, phi, vartheta, phi_clipped) = extract_angles_full(&factors)?;
        let (b, dropped) = refit_unique_paths(&stacked, &theta, &phi, &vartheta)?;
        let model = crate::channel::stacked_from_params(
            &PathParams {
                theta: theta.clone(),
                phi: phi.clone(),
                vartheta: vartheta.clone(),
                b: b.clone(),
            },
            geometry,
        );
        let structured = if norm > 0.0 {
            linalg::frob(&(&stacked.matrix - &model)) / norm
        } else {
            0.0
        };
        let fit = factors.fit_residual;
        let accept = structured <= 1.1 * fit + 1e-12 && factors.converged;
        let better = match &chosen {
            None => true,
            Some((best, ..)) => structured < *best,
        };
        if better {
            chosen = Some((structured, factors, theta, phi, vartheta, phi_clipped, b, dropped));
        }
        if accept {
            break;
        }
    }
    let (_, factors, theta, phi, vartheta, phi_clipped, b, dropped) =
        chosen.expect("at least one attempt ran");

    let params = PathParams {
        theta: theta.clone(),
        phi: phi.clone(),
        vartheta: vartheta.clone(),
        b: b.clone(),
    };
    let h_hat = assemble_channel(&params, geometry);
    Ok(ParamEstimate {
        theta,
        phi,
        vartheta,
        b,
        h_hat,
        diagnostics: EstimateDiagnostics {
            residual: factors.fit_residual,
            iterations: factors.iterations,
            converged: factors.converged,
            feasibility_warning: factors.feasibility_warning,
            phi_clipped,
            placeholder_paths: dropped,
            ..Default::default()
        },
    })
}
