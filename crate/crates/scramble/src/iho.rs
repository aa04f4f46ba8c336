//! Two coupled inverted harmonic oscillators treated exactly through Gaussian states.
//!
//! Frequencies are stored as real magnitudes with an `inverted` flag; an inverted
//! mode has potential `-m ω² x²/2` and evolves with `cosh`/`sinh` instead of `cos`/`sin`.
//! Units have `ħ = 1` and the vacuum covariance is `I/2`.

use faer::linalg::solvers::DenseSolveCore;
use faer::{Mat, Side};

use crate::correlators::{DecayCurve, TimeGrid};
use crate::error::{Error, Result};
use crate::linalg::{c64, eig_hermitian, ComplexMatrix, HermitianOperator};

/// Entries of an evolved covariance above this are rejected.
pub const BLOWUP_LIMIT: f64 = 1e100;

/// Parameters of `Σ p_i²/2m_i ∓ m_i ω_i² x_i²/2 + δ x_1 x_2` and of the initial product state.
#[derive(Clone, Debug, PartialEq)]
pub struct IhoParams {
    pub m1: f64,
    pub m2: f64,
    pub omega1: f64,
    pub omega2: f64,
    pub inverted1: bool,
    pub inverted2: bool,
    pub delta: f64,
    /// `<x_1²>` in the initial state.
    pub c1_sq: f64,
    /// `<x_2²>` in the initial state.
    pub c2_sq: f64,
}

impl IhoParams {
    /// Both oscillators inverted, initial state `exp(-x_1²/m_2 - x_2²/m_1)`.
    pub fn new(m1: f64, m2: f64, omega1: f64, omega2: f64, delta: f64) -> Result<Self> {
        let p = Self {
            m1,
            m2,
            omega1,
            omega2,
            inverted1: true,
            inverted2: true,
            delta,
            c1_sq: gaussian_moment(m2)?,
            c2_sq: gaussian_moment(m1)?,
        };
        p.validate()?;
        Ok(p)
    }

    /// Heavy slow oscillator weakly coupled to a light unstable one:
    /// `m1 = 1e5, m2 = 1, ω1 = 0, ω2 = 1, δ = 1e-5`.
    pub fn early_scrambling() -> Self {
        Self::new(1e5, 1.0, 0.0, 1.0, 1e-5).expect("reference parameters are valid")
    }

    pub fn with_inverted(mut self, inverted1: bool, inverted2: bool) -> Self {
        self.inverted1 = inverted1;
        self.inverted2 = inverted2;
        self
    }

    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = delta;
        self
    }

    /// Overrides the initial widths; the state stays a pure product Gaussian.
    pub fn with_moments(mut self, c1_sq: f64, c2_sq: f64) -> Result<Self> {
        self.c1_sq = c1_sq;
        self.c2_sq = c2_sq;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.m1, self.m2, self.omega1, self.omega2, self.delta, self.c1_sq, self.c2_sq]
            .iter()
            .all(|x| x.is_finite());
        if !finite {
            return Err(Error::NonFinite("oscillator parameters"));
        }
        if !(self.m1 > 0.0 && self.m2 > 0.0) {
            return Err(Error::InvalidArgument("masses must be positive".into()));
        }
        if self.omega1 < 0.0 || self.omega2 < 0.0 {
            return Err(Error::InvalidArgument("frequencies are magnitudes and must be nonnegative".into()));
        }
        if !(self.c1_sq > 0.0 && self.c2_sq > 0.0) {
            return Err(Error::InvalidArgument("position moments must be positive".into()));
        }
        Ok(())
    }

    /// Signed curvature of the potential of oscillator 1.
    pub fn k1(&self) -> f64 {
        stiffness(self.m1, self.omega1, self.inverted1)
    }

    pub fn k2(&self) -> f64 {
        stiffness(self.m2, self.omega2, self.inverted2)
    }

    pub fn hamiltonian(&self) -> Result<QuadraticHamiltonian> {
        QuadraticHamiltonian::new(
            vec![self.m1, self.m2],
            vec![self.k1(), self.delta, self.delta, self.k2()],
            vec![0.0, 0.0],
        )
    }

    pub fn initial_state(&self) -> Result<GaussianState> {
        GaussianState::pure_product(&[self.c1_sq, self.c2_sq])
    }
}

fn stiffness(m: f64, omega: f64, inverted: bool) -> f64 {
    let k = m * omega * omega;
    if inverted {
        -k
    } else {
        k
    }
}

/// `<x²>` of the normalized density `|ψ|²` for `ψ ∝ exp(-x²/w)`.
pub fn gaussian_moment(width_param: f64) -> Result<f64> {
    if !(width_param > 0.0) || !width_param.is_finite() {
        return Err(Error::InvalidArgument(format!("width must be positive, got {width_param}")));
    }
    Ok(width_param / 4.0)
}

/// Decoupling map `x_1 = (y_1 + y_2)/√2`, `x_2 = (η y_1 - ξ y_2)/√2`.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalModeData {
    pub eta: f64,
    pub xi: f64,
    pub d: f64,
    pub m_tilde1: f64,
    pub m_tilde2: f64,
    /// Signed curvature `m̃_1 ω̃_1²` of the first normal mode.
    pub k_tilde1: f64,
    pub k_tilde2: f64,
}

impl NormalModeData {
    /// Jacobian of `(y_1, y_2) -> (x_1, x_2)`, row-major.
    pub fn transform(&self) -> [[f64; 2]; 2] {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        [[r, r], [r * self.eta, -r * self.xi]]
    }
}

/// Normal modes of the coupled pair. Requires `δ ≠ 0`.
pub fn normal_modes(p: &IhoParams) -> Result<NormalModeData> {
    p.validate()?;
    if p.delta == 0.0 {
        return Err(Error::InvalidArgument(
            "delta = 0: the oscillators are already decoupled, use them as normal modes directly".into(),
        ));
    }
    let ratio = p.m1 / p.m2;
    let (k1, k2) = (p.k1(), p.k2());
    let d = (ratio * k2 - k1) / p.delta;
    let root = d.hypot(2.0 * ratio.sqrt());
    // Take the larger root directly and the other from η ξ = m1/m2.
    let (eta, xi) = if d >= 0.0 {
        let eta = (root + d) / 2.0;
        (eta, ratio / eta)
    } else {
        let xi = (root - d) / 2.0;
        (ratio / xi, xi)
    };
    Ok(NormalModeData {
        eta,
        xi,
        d,
        m_tilde1: (p.m1 + eta * eta * p.m2) / 2.0,
        m_tilde2: (p.m1 + xi * xi * p.m2) / 2.0,
        k_tilde1: (k1 + eta * eta * k2) / 2.0 + p.delta * eta,
        k_tilde2: (k1 + xi * xi * k2) / 2.0 - p.delta * xi,
    })
}

/// `H = Σ p_i²/2m_i + x^T K x / 2 + f^T x` with diagonal masses.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticHamiltonian {
    masses: Vec<f64>,
    potential: Vec<f64>,
    linear: Vec<f64>,
}

/// Linearized flow over time `t`: `S` and `∫_0^t S(-u) du`, both in `(x.., p..)` order.
#[derive(Clone, Debug)]
pub struct Flow {
    pub s: Mat<f64>,
    pub drive: Mat<f64>,
}

impl QuadraticHamiltonian {
    /// `potential` is the row-major symmetric curvature matrix `K`.
    pub fn new(masses: Vec<f64>, potential: Vec<f64>, linear: Vec<f64>) -> Result<Self> {
        let n = masses.len();
        if n == 0 {
            return Err(Error::InvalidArgument("no modes".into()));
        }
        if potential.len() != n * n || linear.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{n} masses, {} potential entries, {} linear terms",
                potential.len(),
                linear.len()
            )));
        }
        if masses.iter().any(|&m| !(m > 0.0) || !m.is_finite()) {
            return Err(Error::InvalidArgument("masses must be positive".into()));
        }
        if potential.iter().chain(&linear).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("quadratic Hamiltonian"));
        }
        for i in 0..n {
            for j in 0..i {
                let (a, b) = (potential[i * n + j], potential[j * n + i]);
                if (a - b).abs() > 1e-12 * a.abs().max(b.abs()).max(1.0) {
                    return Err(Error::NotHermitian { max_asymmetry: (a - b).abs() });
                }
            }
        }
        Ok(Self { masses, potential, linear })
    }

    pub fn n_modes(&self) -> usize {
        self.masses.len()
    }

    pub fn with_linear(&self, linear: Vec<f64>) -> Result<Self> {
        Self::new(self.masses.clone(), self.potential.clone(), linear)
    }

    pub fn flow(&self, t: f64) -> Result<Flow> {
        let n = self.n_modes();
        let rt: Vec<f64> = self.masses.iter().map(|m| m.sqrt()).collect();
        // Mass-weighted curvature M^{-1/2} K M^{-1/2} = R diag(ν) R^T.
        let nm = Mat::<f64>::from_fn(n, n, |i, j| self.potential[i * n + j] / (rt[i] * rt[j]));
        let eig = nm
            .self_adjoint_eigen(Side::Lower)
            .map_err(|e| Error::Decomposition(format!("{e:?}")))?;
        let r = eig.U();
        let mut c = vec![0.0; n];
        let mut s = vec![0.0; n];
        let mut cm1 = vec![0.0; n];
        let mut mu = vec![0.0; n];
        for k in 0..n {
            mu[k] = -eig.S().column_vector()[k];
            let rate = mu[k].max(0.0).sqrt() * t.abs();
            if rate > 700.0 {
                return Err(Error::Blowup { magnitude: f64::INFINITY });
            }
            (c[k], s[k], cm1[k]) = mode_functions(mu[k], t);
        }
        // Mode block [[a, b], [g, h]] mapped back to (x, p):
        // x = M^{-1/2} R u, p = M^{1/2} R π.
        let assemble = |a: &[f64], b: &[f64], g: &[f64], h: &[f64]| {
            Mat::<f64>::from_fn(2 * n, 2 * n, |row, col| {
                let (i, pi) = (row % n, row >= n);
                let (j, pj) = (col % n, col >= n);
                let (diag, left, right) = match (pi, pj) {
                    (false, false) => (a, 1.0 / rt[i], rt[j]),
                    (false, true) => (b, 1.0 / rt[i], 1.0 / rt[j]),
                    (true, false) => (g, rt[i], rt[j]),
                    (true, true) => (h, rt[i], 1.0 / rt[j]),
                };
                let mut acc = 0.0;
                for k in 0..n {
                    acc += r[(i, k)] * diag[k] * r[(j, k)];
                }
                left * acc * right
            })
        };
        let mu_s: Vec<f64> = (0..n).map(|k| mu[k] * s[k]).collect();
        let neg_cm1: Vec<f64> = cm1.iter().map(|x| -x).collect();
        let neg_mu_cm1: Vec<f64> = (0..n).map(|k| -mu[k] * cm1[k]).collect();
        Ok(Flow { s: assemble(&c, &s, &mu_s, &c), drive: assemble(&s, &neg_cm1, &neg_mu_cm1, &s) })
    }

    /// Constant force term `(0.., -f..)` of the equations of motion.
    fn force(&self) -> Vec<f64> {
        let n = self.n_modes();
        let mut b = vec![0.0; 2 * n];
        for i in 0..n {
            b[n + i] = -self.linear[i];
        }
        b
    }
}

/// `(c, s, ∫s)` for `ü = μ u`: cosh/sinh when `μ > 0`, cos/sin when `μ < 0`.
fn mode_functions(mu: f64, t: f64) -> (f64, f64, f64) {
    if mu > 0.0 {
        let w = mu.sqrt();
        let h = (w * t / 2.0).sinh();
        ((w * t).cosh(), (w * t).sinh() / w, 2.0 * h * h / mu)
    } else if mu < 0.0 {
        let w = (-mu).sqrt();
        let h = (w * t / 2.0).sin();
        ((w * t).cos(), (w * t).sin() / w, 2.0 * h * h / -mu)
    } else {
        (1.0, t, t * t / 2.0)
    }
}

fn mat_vec(m: &Mat<f64>, v: &[f64]) -> Vec<f64> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)] * v[j]).sum()).collect()
}

/// Gaussian state: means and symmetrized covariance in `(x_1.., p_1..)` order.
///
/// A factor `F` with `cov = F F^T` is carried along the evolution. Determinants are
/// taken from `F` because strongly squeezed states lose `det cov` to cancellation.
#[derive(Clone, Debug)]
pub struct GaussianState {
    mean: Vec<f64>,
    cov: Mat<f64>,
    factor: Mat<f64>,
}

impl GaussianState {
    /// Validates symmetry and the uncertainty relation `cov + iΩ/2 ≥ 0`.
    pub fn new(mean: Vec<f64>, cov_row_major: Vec<f64>) -> Result<Self> {
        let m = mean.len();
        if m == 0 || m % 2 != 0 || cov_row_major.len() != m * m {
            return Err(Error::DimensionMismatch(format!(
                "mean of length {m} with {} covariance entries",
                cov_row_major.len()
            )));
        }
        if mean.iter().chain(&cov_row_major).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("gaussian state"));
        }
        let cov = Mat::from_fn(m, m, |i, j| cov_row_major[i * m + j]);
        check(&cov)?;
        let factor = cov
            .llt(Side::Lower)
            .map_err(|_| Error::InvalidArgument("covariance is not positive definite".into()))?
            .L()
            .to_owned();
        Ok(Self { mean, cov, factor })
    }

    /// Zero-mean pure product state with the given position variances.
    pub fn pure_product(x_variances: &[f64]) -> Result<Self> {
        let n = x_variances.len();
        if n == 0 || x_variances.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidArgument("position variances must be positive".into()));
        }
        let mut factor = Mat::<f64>::zeros(2 * n, 2 * n);
        for (i, &v) in x_variances.iter().enumerate() {
            factor[(i, i)] = v.sqrt();
            factor[(n + i, n + i)] = 0.5 / v.sqrt();
        }
        Ok(Self::from_factor(vec![0.0; 2 * n], factor))
    }

    fn from_factor(mean: Vec<f64>, factor: Mat<f64>) -> Self {
        let cov = &factor * factor.transpose();
        let m = cov.nrows();
        let cov = Mat::from_fn(m, m, |i, j| 0.5 * (cov[(i, j)] + cov[(j, i)]));
        Self { mean, cov, factor }
    }

    pub fn n_modes(&self) -> usize {
        self.mean.len() / 2
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn cov(&self) -> &Mat<f64> {
        &self.cov
    }

    pub fn cov_entry(&self, i: usize, j: usize) -> f64 {
        self.cov[(i, j)]
    }

    /// `Tr ρ² = 1 / (2^n sqrt(det cov))`.
    pub fn purity(&self) -> f64 {
        // det cov = det(F F^T) = prod R_ii² for F^T = Q R.
        let qr = self.factor.transpose().to_owned().qr();
        let r = qr.R();
        let root_det: f64 = (0..self.mean.len()).map(|i| r[(i, i)].abs()).product();
        1.0 / (2f64.powi(self.n_modes() as i32) * root_det)
    }

    /// Marginal on the listed modes.
    pub fn reduced(&self, modes: &[usize]) -> Result<Self> {
        let n = self.n_modes();
        if modes.is_empty() || modes.iter().any(|&k| k >= n) {
            return Err(Error::InvalidArgument(format!("modes {modes:?} out of range for {n} modes")));
        }
        let k = modes.len();
        let idx: Vec<usize> = modes.iter().copied().chain(modes.iter().map(|&m| m + n)).collect();
        Ok(Self {
            mean: idx.iter().map(|&i| self.mean[i]).collect(),
            cov: Mat::from_fn(2 * k, 2 * k, |a, b| self.cov[(idx[a], idx[b])]),
            factor: Mat::from_fn(2 * k, self.factor.ncols(), |a, b| self.factor[(idx[a], b)]),
        })
    }

    /// `Tr(ρ_1 ρ_2) = exp(-Δ^T (σ_1 + σ_2)^{-1} Δ / 2) / sqrt(det(σ_1 + σ_2))`;
    /// the squared overlap when both states are pure.
    pub fn overlap(&self, other: &Self) -> Result<f64> {
        if self.mean.len() != other.mean.len() {
            return Err(Error::DimensionMismatch("states have different mode counts".into()));
        }
        let sum = &self.cov + &other.cov;
        let delta: Vec<f64> = self.mean.iter().zip(&other.mean).map(|(a, b)| a - b).collect();
        let inv = sum.partial_piv_lu().inverse();
        let w = mat_vec(&inv, &delta);
        let quad: f64 = delta.iter().zip(&w).map(|(a, b)| a * b).sum();
        Ok((-0.5 * quad).exp() / sum.determinant().sqrt())
    }

    fn transformed(&self, flow: &Flow, force: &[f64]) -> Result<Self> {
        let shifted: Vec<f64> = {
            let push = mat_vec(&flow.drive, force);
            self.mean.iter().zip(&push).map(|(a, b)| a + b).collect()
        };
        let mean = mat_vec(&flow.s, &shifted);
        let next = Self::from_factor(mean, &flow.s * &self.factor);
        let (mean, cov) = (&next.mean, &next.cov);
        let m = cov.nrows();
        let magnitude = (0..m)
            .flat_map(|i| (0..m).map(move |j| (i, j)))
            .map(|(i, j)| cov[(i, j)].abs())
            .chain(mean.iter().map(|x| x.abs()))
            .fold(0.0, f64::max);
        if !(magnitude <= BLOWUP_LIMIT) {
            return Err(Error::Blowup { magnitude });
        }
        Ok(next)
    }
}

/// Symmetry within `1e-12` and `cov + iΩ/2 ≥ 0` within `1e-8`, relative to the largest variance.
fn check(cov: &Mat<f64>) -> Result<()> {
    let m = cov.nrows();
    let n = m / 2;
    let scale = (0..m).map(|i| cov[(i, i)].abs()).fold(1.0, f64::max);
    for i in 0..m {
        for j in 0..i {
            let gap = (cov[(i, j)] - cov[(j, i)]).abs();
            if gap > 1e-12 * scale {
                return Err(Error::NotHermitian { max_asymmetry: gap });
            }
        }
    }
    let h = ComplexMatrix::from_fn(m, m, |i, j| {
        let omega = if j == i + n && i < n {
            1.0
        } else if i == j + n && j < n {
            -1.0
        } else {
            0.0
        };
        c64::new(cov[(i, j)], 0.5 * omega)
    });
    let low = eig_hermitian(&HermitianOperator::new(h)?)?.eigenvalues()[0];
    if low < -1e-8 * scale {
        return Err(Error::InvalidArgument(format!(
            "covariance violates the uncertainty relation (lowest eigenvalue {low:.3e})"
        )));
    }
    Ok(())
}

/// Evolves a Gaussian state for time `t`: affine flow for the means, `S cov S^T` for the covariance.
pub fn evolve_gaussian(state: &GaussianState, h: &QuadraticHamiltonian, t: f64) -> Result<GaussianState> {
    if state.n_modes() != h.n_modes() {
        return Err(Error::DimensionMismatch(format!(
            "state has {} modes, Hamiltonian {}",
            state.n_modes(),
            h.n_modes()
        )));
    }
    if !t.is_finite() {
        return Err(Error::NonFinite("evolution time"));
    }
    if t == 0.0 {
        return Ok(state.clone());
    }
    let flow = h.flow(t)?;
    state.transformed(&flow, &h.force())
}

/// Haar-averaged OTOC for the pure product state: the purity of either reduced oscillator.
///
/// The purity is read off oscillator 1, whose covariance stays of order one when it is
/// the slow heavy mode; the light unstable mode has entries growing like `e^{2ωt}`, and
/// its determinant would be lost to cancellation.
pub fn iho_otoc(p: &IhoParams, grid: &TimeGrid) -> Result<DecayCurve> {
    p.validate()?;
    let h = p.hamiltonian()?;
    let s0 = p.initial_state()?;
    let values = grid
        .times()
        .iter()
        .map(|&t| Ok(evolve_gaussian(&s0, &h, t)?.reduced(&[0])?.purity()))
        .collect::<Result<Vec<f64>>>()?;
    DecayCurve::from_values("iho_otoc", grid, values)
}

fn mode2_hamiltonian(p: &IhoParams, force: f64) -> Result<QuadraticHamiltonian> {
    QuadraticHamiltonian::new(vec![p.m2], vec![p.k2()], vec![force])
}

/// `M_1(t) = |<ψ_2| e^{i(H_2 + δc_1 x_2)t} e^{-i(H_2 - δc_1 x_2)t} |ψ_2>|²`, and `M = 1/2 + M_1/2`.
/// Returns `(M, M_1)`.
///
/// Both branches share the same linear flow, so the overlap is evaluated after pulling
/// both states back by `S(t)^{-1}`: same initial covariance, means differing by
/// `∫_0^t S(-u) du Δb`. This avoids inverting the exponentially stretched covariance.
pub fn iho_le_exact(p: &IhoParams, grid: &TimeGrid) -> Result<(DecayCurve, DecayCurve)> {
    p.validate()?;
    let f = p.delta * p.c1_sq.sqrt();
    let h = mode2_hamiltonian(p, 0.0)?;
    let psi = GaussianState::pure_product(&[p.c2_sq])?;
    let inv = psi.cov.partial_piv_lu().inverse();
    let mut m1 = Vec::with_capacity(grid.len());
    for &t in grid.times() {
        let flow = h.flow(t)?;
        // Force difference between the two branches: (0, -(f - (-f))).
        let v = mat_vec(&flow.drive, &[0.0, -2.0 * f]);
        let magnitude = v.iter().fold(0.0, |a: f64, x| a.max(x.abs()));
        if !(magnitude <= BLOWUP_LIMIT) {
            return Err(Error::Blowup { magnitude });
        }
        // Equal pure covariances: |<a|b>|² = exp(-v^T σ^{-1} v / 4).
        let w = mat_vec(&inv, &v);
        let quad: f64 = v.iter().zip(&w).map(|(a, b)| a * b).sum();
        m1.push((-0.25 * quad).exp());
    }
    let m: Vec<f64> = m1.iter().map(|x| 0.5 + 0.5 * x).collect();
    Ok((
        DecayCurve::from_values("iho_le", grid, m)?,
        DecayCurve::from_values("iho_le_m1", grid, m1)?,
    ))
}

/// Second-order expansion data of the echo operator, `U_t = exp[-i(Σδ + Γδ²/2)]`.
#[derive(Clone, Debug, PartialEq)]
pub struct BchTerms {
    pub sigma_x_coeff: f64,
    pub sigma_p_coeff: f64,
    pub sigma_const: f64,
    pub gamma: f64,
}

/// `Σ(t) = ∫_0^t 2x(t') dt'` and `Γ(t)` for a single oscillator; the `O(δ)` shift of
/// `x(t)` is dropped, so `sigma_const` is zero.
pub fn bch_terms(m: f64, omega: f64, inverted: bool, t: f64) -> Result<BchTerms> {
    if !(m > 0.0) || !(omega > 0.0) {
        return Err(Error::InvalidArgument("bch terms need positive mass and frequency".into()));
    }
    let w = omega;
    let (sx, cp, g) = if inverted {
        let (sh, ch) = ((w * t).sinh(), (w * t).cosh());
        (2.0 * sh / w, 2.0 * (ch - 1.0) / (m * w * w), 4.0 * t / (m * w * w) - 4.0 * sh / (m * w * w * w))
    } else {
        let (sn, cs) = ((w * t).sin(), (w * t).cos());
        (2.0 * sn / w, 2.0 * (1.0 - cs) / (m * w * w), 4.0 * sn / (m * w * w * w) - 4.0 * t / (m * w * w))
    };
    Ok(BchTerms { sigma_x_coeff: sx, sigma_p_coeff: cp, sigma_const: 0.0, gamma: g })
}

/// Closed-form second-order echo `M_1 = 1 - 4δ²c_1²c_2² sinh²(ω_2 t)/ω_2²`
/// (`sin²` for a regular oscillator), with the expansion terms at each time.
pub fn iho_le_bch(p: &IhoParams, grid: &TimeGrid) -> Result<(DecayCurve, Vec<BchTerms>)> {
    p.validate()?;
    if !(p.omega2 > 0.0) {
        return Err(Error::InvalidArgument("the expansion needs omega2 > 0".into()));
    }
    let w = p.omega2;
    let amp = 4.0 * p.delta * p.delta * p.c1_sq * p.c2_sq / (w * w);
    let mut values = Vec::with_capacity(grid.len());
    let mut terms = Vec::with_capacity(grid.len());
    for &t in grid.times() {
        let osc = if p.inverted2 { (w * t).sinh() } else { (w * t).sin() };
        values.push(1.0 - amp * osc * osc);
        terms.push(bch_terms(p.m2, w, p.inverted2, t)?);
    }
    Ok((DecayCurve::from_values("iho_le_bch", grid, values)?, terms))
}

/// Wavefunction on a uniform grid together with its spatial derivative.
#[derive(Clone, Debug)]
pub struct SampledWave {
    pub xs: Vec<f64>,
    pub psi: Vec<c64>,
    pub dpsi: Vec<c64>,
}

/// Reference propagation of a single oscillator `p²/2m ∓ mω²x²/2 + f x` by direct
/// trapezoidal quadrature of the position-space propagator over `source = (lo, hi, n)`.
///
/// Slow and only accurate for moderate `ωt`; intended as an independent check of
/// [`evolve_gaussian`]. The global phase from the force term is dropped.
pub fn propagate_by_quadrature(
    m: f64,
    omega: f64,
    inverted: bool,
    force: f64,
    psi0: &dyn Fn(f64) -> c64,
    source: (f64, f64, usize),
    xs: &[f64],
    t: f64,
) -> Result<SampledWave> {
    if !(m > 0.0 && omega > 0.0 && t > 0.0) || source.2 < 2 {
        return Err(Error::InvalidArgument("quadrature needs m, omega, t > 0 and two nodes".into()));
    }
    let k = m * omega * omega;
    let (a, b, centre) = if inverted {
        (m * omega / (omega * t).sinh(), (omega * t).cosh(), force / k)
    } else {
        let sn = (omega * t).sin();
        if sn.abs() < 1e-12 {
            return Err(Error::InvalidArgument("propagator is singular at multiples of the half period".into()));
        }
        (m * omega / sn, (omega * t).cos(), -force / k)
    };
    let (lo, hi, n) = source;
    let h = (hi - lo) / (n - 1) as f64;
    let nodes: Vec<(f64, c64)> = (0..n)
        .map(|j| {
            let x = lo + h * j as f64;
            let w = if j == 0 || j == n - 1 { 0.5 * h } else { h };
            (x - centre, psi0(x) * w)
        })
        .collect();
    let pref = (c64::new(a, 0.0) / c64::new(0.0, 2.0 * std::f64::consts::PI)).sqrt();
    let i = c64::new(0.0, 1.0);
    let mut psi = Vec::with_capacity(xs.len());
    let mut dpsi = Vec::with_capacity(xs.len());
    for &x in xs {
        let xo = x - centre;
        let mut acc = c64::new(0.0, 0.0);
        let mut dacc = c64::new(0.0, 0.0);
        for &(xp, f) in &nodes {
            let phase = 0.5 * a * ((xo * xo + xp * xp) * b - 2.0 * xo * xp);
            let term = c64::from_polar(1.0, phase) * f;
            acc += term;
            dacc += term * (i * a * (xo * b - xp));
        }
        psi.push(pref * acc);
        dpsi.push(pref * dacc);
    }
    Ok(SampledWave { xs: xs.to_vec(), psi, dpsi })
}

impl SampledWave {
    /// `(<x>, <p>, var x, var p, symmetrized cov(x, p))` by the trapezoid rule.
    pub fn moments(&self) -> (f64, f64, f64, f64, f64) {
        let n = self.xs.len();
        let h = (self.xs[n - 1] - self.xs[0]) / (n - 1) as f64;
        let (mut norm, mut mx, mut mx2, mut mp, mut mp2, mut mxp) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        for j in 0..n {
            let w = if j == 0 || j == n - 1 { 0.5 * h } else { h };
            let (x, p, d) = (self.xs[j], self.psi[j], self.dpsi[j]);
            let rho = p.norm_sqr();
            norm += w * rho;
            mx += w * x * rho;
            mx2 += w * x * x * rho;
            // <p> = Re ∫ ψ* (-i ψ'), <p²> = ∫ |ψ'|², <xp + px>/2 = Re ∫ ψ* x (-i ψ').
            let pp = (p.conj() * c64::new(0.0, -1.0) * d).re;
            mp += w * pp;
            mp2 += w * d.norm_sqr();
            mxp += w * x * pp;
        }
        let (mx, mp) = (mx / norm, mp / norm);
        (mx, mp, mx2 / norm - mx * mx, mp2 / norm - mp * mp, mxp / norm - mx * mp)
    }

    /// `|<self|other>|²` normalized; both waves must share the grid.
    pub fn overlap(&self, other: &Self) -> f64 {
        let n = self.xs.len();
        let h = (self.xs[n - 1] - self.xs[0]) / (n - 1) as f64;
        let weight = |j: usize| if j == 0 || j == n - 1 { 0.5 * h } else { h };
        let mut ab = c64::new(0.0, 0.0);
        let (mut aa, mut bb) = (0.0, 0.0);
        for j in 0..n {
            ab += self.psi[j].conj() * other.psi[j] * weight(j);
            aa += self.psi[j].norm_sqr() * weight(j);
            bb += other.psi[j].norm_sqr() * weight(j);
        }
        ab.norm_sqr() / (aa * bb)
    }
}
