//! Dual-polarized double-directional channel synthesis.
//!
//! The transmitter is an `M_x x M_y` DP uniform rectangular array, the
//! receiver an `M_r`-element DP uniform linear array, both at half-wavelength
//! spacing. Each of the four polarization blocks of the `2M_r x 2M_t` channel
//! is `V_r diag(beta) V_t^H`; vectorizing the blocks and stacking them as
//! columns gives the tall matrix
//!
//! ```text
//! stacked = (V_y^* ⊙ V_x^* ⊙ V_r) B^T        // (M_y M_x M_r) x 4
//! ```
//!
//! with the receive index fastest in the stacked rows. All synthesis here is
//! deterministic given an RNG seed; Monte-Carlo workers own independent
//! streams derived from `(master seed, trial index)`.

use std::f64::consts::PI;

use ndarray::{Array1, Array2, Array3};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg;

/// Receive/transmit array dimensions; fixes every matrix shape downstream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ArrayGeometry {
    /// Receive DP-ULA element count.
    pub m_r: usize,
    /// Transmit DP-URA horizontal dimension.
    pub m_x: usize,
    /// Transmit DP-URA vertical dimension.
    pub m_y: usize,
}

impl ArrayGeometry {
    pub fn new(m_r: usize, m_x: usize, m_y: usize) -> Result<Self> {
        if m_r == 0 || m_x == 0 || m_y == 0 {
            return Err(Error::InvalidArgument(
                "array dimensions must all be at least 1".into(),
            ));
        }
        Ok(Self { m_r, m_x, m_y })
    }

    /// Total transmit element count `M_t = M_x * M_y`.
    pub fn m_t(&self) -> usize {
        self.m_x * self.m_y
    }
}

/// Ground-truth multipath parameters.
///
/// `b` is the 4 x K path-loss matrix with row order (V_r,V_t), (V_r,H_t),
/// (H_r,V_t), (H_r,H_t).
#[derive(Debug, Clone)]
pub struct PathParams {
    /// DOAs in radians, one per path, in (-pi/2, pi/2).
    pub theta: Vec<f64>,
    /// Elevation DODs in radians, in [0, pi/2].
    pub phi: Vec<f64>,
    /// Azimuth DODs in radians, in (-pi/2, pi/2).
    pub vartheta: Vec<f64>,
    /// Complex path losses, 4 x K.
    pub b: Array2<Complex64>,
}

impl PathParams {
    pub fn new(
        theta: Vec<f64>,
        phi: Vec<f64>,
        vartheta: Vec<f64>,
        b: Array2<Complex64>,
    ) -> Result<Self> {
        let k = theta.len();
        if phi.len() != k || vartheta.len() != k || b.dim() != (4, k) {
            return Err(Error::Dimension(format!(
                "path params disagree on K: theta {}, phi {}, vartheta {}, B {:?}",
                theta.len(),
                phi.len(),
                vartheta.len(),
                b.dim()
            )));
        }
        if k == 0 {
            return Err(Error::InvalidArgument("need at least one path".into()));
        }
        for col in 0..k {
            if (0..4).all(|row| b[[row, col]].norm() == 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "path-loss column {col} is identically zero"
                )));
            }
        }
        Ok(Self { theta, phi, vartheta, b })
    }

    /// Path count.
    pub fn k(&self) -> usize {
        self.theta.len()
    }
}

/// The `(M_y M_x M_r) x 4` stacked form of the channel tensor.
///
/// Column order is VV, VH, HV, HH; rows are linearized with the receive index
/// fastest, then `m_x`, then `m_y`.
#[derive(Debug, Clone)]
pub struct StackedChannel {
    pub matrix: Array2<Complex64>,
    pub geometry: ArrayGeometry,
}

/// Row-orthogonal pilot block: `S` is `2M_t x N` with `S S^H = N I`.
#[derive(Debug, Clone)]
pub struct PilotBlock {
    pub s: Array2<Complex64>,
}

impl PilotBlock {
    /// Pilot length `N`.
    pub fn len(&self) -> usize {
        self.s.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.s.ncols() == 0
    }
}

/// Receive-ULA steering vector: entry `m` (0-based) is `exp(j pi m sin(theta))`.
pub fn steering_ula(theta: f64, m: usize) -> Array1<Complex64> {
    let step = PI * theta.sin();
    Array1::from_shape_fn(m, |i| Complex64::from_polar(1.0, step * i as f64))
}

/// Horizontal URA factor: entry `l_x` is `exp(j pi l_x sin(phi) cos(vartheta))`.
pub fn steering_vx(phi: f64, vartheta: f64, m_x: usize) -> Array1<Complex64> {
    let step = PI * phi.sin() * vartheta.cos();
    Array1::from_shape_fn(m_x, |i| Complex64::from_polar(1.0, step * i as f64))
}

/// Vertical URA factor: entry `l_y` is `exp(j pi l_y sin(phi) sin(vartheta))`.
pub fn steering_vy(phi: f64, vartheta: f64, m_y: usize) -> Array1<Complex64> {
    let step = PI * phi.sin() * vartheta.sin();
    Array1::from_shape_fn(m_y, |i| Complex64::from_polar(1.0, step * i as f64))
}

/// Transmit-URA steering vector `v_y ⊗ v_x` (the `x` index varies fastest).
pub fn steering_ura(phi: f64, vartheta: f64, geometry: &ArrayGeometry) -> Array1<Complex64> {
    let vx = steering_vx(phi, vartheta, geometry.m_x);
    let vy = steering_vy(phi, vartheta, geometry.m_y);
    let mut v = Array1::zeros(geometry.m_t());
    for ly in 0..geometry.m_y {
        for lx in 0..geometry.m_x {
            v[ly * geometry.m_x + lx] = vy[ly] * vx[lx];
        }
    }
    v
}

/// Receive steering matrix `V_r`, one column per path.
///
/// A NaN DOA marks the undefined single-antenna case and yields the scalar 1.
pub(crate) fn steering_matrix_r(theta: &[f64], m_r: usize) -> Array2<Complex64> {
    let mut v = Array2::zeros((m_r, theta.len()));
    for (k, &t) in theta.iter().enumerate() {
        let col = if t.is_nan() {
            Array1::from_elem(m_r, Complex64::new(1.0, 0.0))
        } else {
            steering_ula(t, m_r)
        };
        for i in 0..m_r {
            v[[i, k]] = col[i];
        }
    }
    v
}

pub(crate) fn steering_matrix_x(phi: &[f64], vartheta: &[f64], m_x: usize) -> Array2<Complex64> {
    let mut v = Array2::zeros((m_x, phi.len()));
    for k in 0..phi.len() {
        let col = steering_vx(phi[k], vartheta[k], m_x);
        for i in 0..m_x {
            v[[i, k]] = col[i];
        }
    }
    v
}

pub(crate) fn steering_matrix_y(phi: &[f64], vartheta: &[f64], m_y: usize) -> Array2<Complex64> {
    let mut v = Array2::zeros((m_y, phi.len()));
    for k in 0..phi.len() {
        let col = steering_vy(phi[k], vartheta[k], m_y);
        for i in 0..m_y {
            v[[i, k]] = col[i];
        }
    }
    v
}

/// Assembles the full `2M_r x 2M_t` four-block channel matrix.
///
/// Block (p, q) is `V_r diag(b_row(p,q)) V_t^H` with blocks laid out
/// `[[VV, VH], [HV, HH]]`.
pub fn assemble_channel(params: &PathParams, geometry: &ArrayGeometry) -> Array2<Complex64> {
    let k = params.k();
    let (m_r, m_t) = (geometry.m_r, geometry.m_t());
    let v_r = steering_matrix_r(&params.theta, m_r);
    let mut v_t = Array2::zeros((m_t, k));
    for p in 0..k {
        let col = steering_ura(params.phi[p], params.vartheta[p], geometry);
        for i in 0..m_t {
            v_t[[i, p]] = col[i];
        }
    }
    let mut h = Array2::zeros((2 * m_r, 2 * m_t));
    for (block, (row_block, col_block)) in [(0, 0), (0, 1), (1, 0), (1, 1)].into_iter().enumerate()
    {
        for i in 0..m_r {
            for j in 0..m_t {
                let mut acc = Complex64::default();
                for p in 0..k {
                    acc += params.b[[block, p]] * v_r[[i, p]] * v_t[[j, p]].conj();
                }
                h[[row_block * m_r + i, col_block * m_t + j]] = acc;
            }
        }
    }
    h
}

/// Vectorizes the four polarization blocks of `h` and stacks them as columns.
pub fn stack_channel(h: &Array2<Complex64>, geometry: &ArrayGeometry) -> Result<StackedChannel> {
    let (m_r, m_t) = (geometry.m_r, geometry.m_t());
    if h.dim() != (2 * m_r, 2 * m_t) {
        return Err(Error::Dimension(format!(
            "stack_channel: H is {:?}, expected ({}, {})",
            h.dim(),
            2 * m_r,
            2 * m_t
        )));
    }
    let mut stacked = Array2::zeros((m_t * m_r, 4));
    for (block, (row_block, col_block)) in [(0, 0), (0, 1), (1, 0), (1, 1)].into_iter().enumerate()
    {
        for j in 0..m_t {
            for i in 0..m_r {
                stacked[[j * m_r + i, block]] = h[[row_block * m_r + i, col_block * m_t + j]];
            }
        }
    }
    Ok(StackedChannel { matrix: stacked, geometry: *geometry })
}

/// Inverse of [`stack_channel`].
pub fn unstack_channel(stacked: &StackedChannel) -> Array2<Complex64> {
    let g = &stacked.geometry;
    let (m_r, m_t) = (g.m_r, g.m_t());
    let mut h = Array2::zeros((2 * m_r, 2 * m_t));
    for (block, (row_block, col_block)) in [(0, 0), (0, 1), (1, 0), (1, 1)].into_iter().enumerate()
    {
        for j in 0..m_t {
            for i in 0..m_r {
                h[[row_block * m_r + i, col_block * m_t + j]] = stacked.matrix[[j * m_r + i, block]];
            }
        }
    }
    h
}

/// Reshapes each stacked column into an `M_r x M_x x M_y` snapshot tensor.
///
/// Snapshot `(p,q)` is `sum_k beta_k^{(p,q)} v_r,k ∘ v_x,k^* ∘ v_y,k^*`.
pub fn snapshot_tensors(stacked: &StackedChannel) -> [Array3<Complex64>; 4] {
    let g = &stacked.geometry;
    let dims = (g.m_r, g.m_x, g.m_y);
    std::array::from_fn(|block| {
        let col = stacked.matrix.column(block).to_owned();
        linalg::tensorize3(&col, dims).expect("stacked column length matches geometry")
    })
}

/// Appends the forward-backward copy of each stacked column: the conjugated,
/// index-reversed snapshot has the same steering factors with transformed
/// gains, so the result is a `(M_y M_x M_r) x 8` matrix of the same rank-K
/// model with twice the gain columns.
pub fn fb_extend_stacked(stacked: &StackedChannel) -> Array2<Complex64> {
    let g = &stacked.geometry;
    let (d1, d2, d3) = (g.m_r, g.m_x, g.m_y);
    let cols = stacked.matrix.ncols();
    let mut out = Array2::zeros((stacked.matrix.nrows(), 2 * cols));
    for c in 0..cols {
        for i3 in 0..d3 {
            for i2 in 0..d2 {
                for i1 in 0..d1 {
                    let idx = i1 + d1 * (i2 + d2 * i3);
                    let rev = (d1 - 1 - i1) + d1 * ((d2 - 1 - i2) + d2 * (d3 - 1 - i3));
                    out[[idx, c]] = stacked.matrix[[idx, c]];
                    out[[idx, cols + c]] = stacked.matrix[[rev, c]].conj();
                }
            }
        }
    }
    out
}

/// Draws multipath parameters: angles uniform over the simulated sector,
/// path losses Rician with factor `kappa`.
///
/// Angle ranges are theta, vartheta ~ U(-pi/3, pi/3) and phi ~ U(0, pi/2).
/// Each gain is `sqrt(kappa/(1+kappa)) e^{j psi} + sqrt(1/(1+kappa)) CN(0,1)`
/// with psi uniform on [0, 2pi). Paths whose three angles all coincide within
/// 1e-9 rad are redrawn.
pub fn sample_params<R: Rng>(rng: &mut R, k: usize, kappa: f64) -> Result<PathParams> {
    if k == 0 {
        return Err(Error::InvalidArgument("need at least one path".into()));
    }
    if !(kappa >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "Rician factor must be nonnegative, got {kappa}"
        )));
    }
    let mut theta = vec![0.0; k];
    let mut phi = vec![0.0; k];
    let mut vartheta = vec![0.0; k];
    for p in 0..k {
        loop {
            let t = rng.random_range(-PI / 3.0..PI / 3.0);
            let f = rng.random_range(0.0..PI / 2.0);
            let v = rng.random_range(-PI / 3.0..PI / 3.0);
            let coincides = (0..p).any(|q| {
                (theta[q] - t).abs() < 1e-9
                    && (phi[q] - f).abs() < 1e-9
                    && (vartheta[q] - v).abs() < 1e-9
            });
            if !coincides {
                theta[p] = t;
                phi[p] = f;
                vartheta[p] = v;
                break;
            }
        }
    }
    let (los, diffuse) = if kappa.is_infinite() {
        (1.0, 0.0)
    } else {
        ((kappa / (1.0 + kappa)).sqrt(), (1.0 / (1.0 + kappa)).sqrt())
    };
    let mut b = Array2::zeros((4, k));
    for col in 0..k {
        for row in 0..4 {
            let psi = rng.random_range(0.0..2.0 * PI);
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            let scatter = Complex64::new(re, im) / 2f64.sqrt();
            b[[row, col]] = Complex64::from_polar(los, psi) + diffuse * scatter;
        }
    }
    PathParams::new(theta, phi, vartheta, b)
}

/// Row-orthogonal unit-modulus pilots: the first `2M_t` rows of an `N`-point
/// DFT matrix, so `S S^H = N I` exactly.
pub fn generate_pilots(geometry: &ArrayGeometry, n: usize) -> Result<PilotBlock> {
    let rows = 2 * geometry.m_t();
    if n < rows {
        return Err(Error::InvalidArgument(format!(
            "pilot length {n} is below the minimum 2*M_t = {rows}"
        )));
    }
    let w = -2.0 * PI / n as f64;
    let s = Array2::from_shape_fn((rows, n), |(m, t)| {
        Complex64::from_polar(1.0, w * ((m * t) % n) as f64)
    });
    Ok(PilotBlock { s })
}

/// Per-entry noise variance that realizes `snr_db` for the pilot block
/// `X = H S`: `10 log10(||H S||_F^2 / (2 M_r N sigma^2)) = snr_db`.
pub fn noise_variance_for_snr(h: &Array2<Complex64>, pilots: &PilotBlock, snr_db: f64) -> f64 {
    if snr_db.is_infinite() {
        return 0.0;
    }
    let hs = h.dot(&pilots.s);
    let signal_power = hs.iter().map(|z| z.norm_sqr()).sum::<f64>();
    signal_power / (hs.len() as f64 * 10f64.powf(snr_db / 10.0))
}

/// `X = H S + noise` with i.i.d. circular complex Gaussian noise of the given
/// per-entry variance.
pub fn simulate_rx_with_variance<R: Rng>(
    h: &Array2<Complex64>,
    pilots: &PilotBlock,
    sigma2: f64,
    rng: &mut R,
) -> Array2<Complex64> {
    let mut x = h.dot(&pilots.s);
    if sigma2 > 0.0 {
        let std = (sigma2 / 2.0).sqrt();
        for z in x.iter_mut() {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            *z += Complex64::new(std * re, std * im);
        }
    }
    x
}

/// Received pilot block at the requested SNR; `snr_db = f64::INFINITY`
/// disables noise entirely.
pub fn simulate_rx<R: Rng>(
    h: &Array2<Complex64>,
    pilots: &PilotBlock,
    snr_db: f64,
    rng: &mut R,
) -> Array2<Complex64> {
    let sigma2 = noise_variance_for_snr(h, pilots, snr_db);
    simulate_rx_with_variance(h, pilots, sigma2, rng)
}

/// Matched-filter least-squares channel estimate `H_hat = X S^H / N`.
pub fn ls_estimate(x: &Array2<Complex64>, pilots: &PilotBlock) -> Result<Array2<Complex64>> {
    if x.ncols() != pilots.len() {
        return Err(Error::Dimension(format!(
            "ls_estimate: X has {} columns but pilots have length {}",
            x.ncols(),
            pilots.len()
        )));
    }
    let n = pilots.len() as f64;
    let sh = linalg::conj_t(&pilots.s);
    Ok(x.dot(&sh).mapv(|z| z / n))
}

/// The model-side stacked matrix `(V_y^* ⊙ V_x^* ⊙ V_r) B^T` built directly
/// from parameters.
pub fn stacked_from_params(params: &PathParams, geometry: &ArrayGeometry) -> Array2<Complex64> {
    let v_r = steering_matrix_r(&params.theta, geometry.m_r);
    let v_x = steering_matrix_x(&params.phi, &params.vartheta, geometry.m_x);
    let v_y = steering_matrix_y(&params.phi, &params.vartheta, geometry.m_y);
    let kr = linalg::khatri_rao(
        &linalg::khatri_rao(&v_y.mapv(|z| z.conj()), &v_x.mapv(|z| z.conj()))
            .expect("equal column counts"),
        &v_r,
    )
    .expect("equal column counts");
    kr.dot(&params.b.t())
}
