//! Out-of-time-order correlators, Loschmidt echoes and reduced purities.
//!
//! All time evolution goes through a Hermitian eigendecomposition: operators
//! are rotated into the eigenbasis once and each time point only multiplies
//! matrix elements by phases `exp(i (E_j - E_k) t)`.

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::ensembles::{sample_gue, sample_haar_unitary, NoiseRealization, RngStream};
use crate::error::{Error, Result};
use crate::linalg::{
    c64, gemm, gemm_adj_lhs, gemm_adj_rhs, hs_inner, trace_of_product, BipartitePartition, ComplexMatrix,
    EigenDecomposition, HermitianOperator,
};
use crate::models::SykModel;

/// Imaginary parts up to this size (relative to max(1, |value|)) are discarded.
pub const IMAG_TOLERANCE: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    times: Vec<f64>,
}

impl TimeGrid {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::InvalidArgument("empty time grid".into()));
        }
        if times.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return Err(Error::InvalidArgument("times must be finite and nonnegative".into()));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument("times must be strictly ascending".into()));
        }
        Ok(Self { times })
    }

    /// `n_points` equally spaced times from 0 to `t_max` inclusive.
    pub fn uniform(t_max: f64, n_points: usize) -> Result<Self> {
        if n_points < 2 || !(t_max > 0.0) || !t_max.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "uniform grid needs t_max > 0 and n_points >= 2, got {t_max}, {n_points}"
            )));
        }
        let dt = t_max / (n_points - 1) as f64;
        Self::new((0..n_points).map(|k| k as f64 * dt).collect())
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn starts_at_zero(&self) -> bool {
        self.times[0] == 0.0
    }
}

/// Sampled correlator with per-point statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayCurve {
    pub label: String,
    pub times: Vec<f64>,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    pub n_realizations: usize,
    /// Divisor that was applied to the raw values (1 when not normalized).
    pub scale: f64,
    /// `Z_{β/2}^2 / Z_β` with trace-normalized partition functions, where applicable.
    pub thermal_prefactor: Option<f64>,
    /// Largest discarded imaginary part.
    pub max_imag_residue: f64,
}

impl DecayCurve {
    pub fn from_values(label: &str, grid: &TimeGrid, values: Vec<f64>) -> Result<Self> {
        Self::from_realizations(label, grid, &[values])
    }

    /// Mean and standard error over realizations, accumulated in index order.
    pub fn from_realizations(label: &str, grid: &TimeGrid, samples: &[Vec<f64>]) -> Result<Self> {
        let n = samples.len();
        if n == 0 {
            return Err(Error::InvalidArgument("no realizations".into()));
        }
        if samples.iter().any(|s| s.len() != grid.len()) {
            return Err(Error::DimensionMismatch("realization length differs from grid".into()));
        }
        let mut mean = vec![0.0; grid.len()];
        for s in samples {
            for (m, v) in mean.iter_mut().zip(s) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= n as f64;
        }
        let mut stderr = vec![0.0; grid.len()];
        if n > 1 {
            for s in samples {
                for ((e, v), m) in stderr.iter_mut().zip(s).zip(&mean) {
                    *e += (v - m) * (v - m);
                }
            }
            for e in &mut stderr {
                *e = (*e / (n - 1) as f64).sqrt() / (n as f64).sqrt();
            }
        }
        if mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::NonFinite("DecayCurve::from_realizations"));
        }
        Ok(Self {
            label: label.to_string(),
            times: grid.times().to_vec(),
            mean,
            stderr,
            n_realizations: n,
            scale: 1.0,
            thermal_prefactor: None,
            max_imag_residue: 0.0,
        })
    }

    pub fn grid(&self) -> TimeGrid {
        TimeGrid { times: self.times.clone() }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn raw(&self) -> Vec<f64> {
        self.mean.iter().map(|m| m * self.scale).collect()
    }

    /// Divides by the value at `t = 0`.
    pub fn normalized(&self) -> Result<Self> {
        if self.times.first() != Some(&0.0) {
            return Err(Error::InvalidArgument("normalization needs a grid starting at t = 0".into()));
        }
        let f0 = self.mean[0];
        if f0 == 0.0 || !f0.is_finite() {
            return Err(Error::InvalidArgument("zero value at t = 0; cannot normalize".into()));
        }
        let mut out = self.clone();
        for (m, e) in out.mean.iter_mut().zip(out.stderr.iter_mut()) {
            *m /= f0;
            *e /= f0.abs();
        }
        out.scale *= f0;
        Ok(out)
    }

    /// `1 - mean`, keeping the statistics.
    pub fn complement(&self, label: &str) -> Self {
        let mut out = self.clone();
        out.label = label.to_string();
        out.mean = self.mean.iter().map(|m| 1.0 - m).collect();
        out
    }

    pub fn with_label(mut self, label: &str) -> Self {
        self.label = label.to_string();
        self
    }
}

fn real_part(z: c64, residue: &mut f64) -> Result<f64> {
    let tol = IMAG_TOLERANCE * z.re.abs().max(1.0);
    if z.im.abs() > tol || !z.re.is_finite() {
        if !z.re.is_finite() {
            return Err(Error::NonFinite("correlator"));
        }
        return Err(Error::ImaginaryResidue { residue: z.im.abs() });
    }
    *residue = residue.max(z.im.abs());
    Ok(z.re)
}

/// Placement of the thermal weights inside the four-point function.
#[derive(Clone, Debug, PartialEq)]
pub enum Regularization {
    /// `Tr[y A^†(t) y B^† y A(t) y B]` with `y^4 = exp(-βH)/Z`.
    ThermalCircle,
    /// `Tr[ρ A^†(t) B^† A(t) B]` with `ρ = exp(-βH)/Z`.
    Unregularized,
    /// Every `y` replaced by the projector onto the given state; `beta` is ignored.
    PureState(Vec<c64>),
}

struct EigenOtoc<'a> {
    dec: &'a EigenDecomposition,
    a: Mat<c64>,
    b: Mat<c64>,
}

impl<'a> EigenOtoc<'a> {
    fn new(dec: &'a EigenDecomposition, a: &ComplexMatrix, b: &ComplexMatrix) -> Result<Self> {
        let d = dec.dim();
        for (m, name) in [(a, "A"), (b, "B")] {
            if m.nrows() != d || m.ncols() != d {
                return Err(Error::DimensionMismatch(format!(
                    "operator {name} is {}x{}, Hamiltonian has dimension {d}",
                    m.nrows(),
                    m.ncols()
                )));
            }
        }
        Ok(Self { dec, a: dec.to_eigenbasis(a)?.into_mat(), b: dec.to_eigenbasis(b)?.into_mat() })
    }

    /// `A(t)` in the eigenbasis, optionally sandwiched by diagonal weights.
    fn evolved(&self, t: f64, left: &[f64], right: &[f64]) -> Mat<c64> {
        let e = self.dec.eigenvalues();
        let ph: Vec<c64> = e.iter().map(|&x| c64::new(0.0, x * t).exp()).collect();
        let d = e.len();
        Mat::from_fn(d, d, |j, k| self.a[(j, k)] * ph[j] * ph[k].conj() * (left[j] * right[k]))
    }

    fn thermal_circle(&self, t: f64, y: &[f64]) -> c64 {
        let x = self.evolved(t, y, y);
        let p = gemm(self.b.as_ref(), x.as_ref());
        let q = gemm(x.as_ref(), self.b.as_ref());
        frobenius_inner(p.as_ref(), q.as_ref())
    }

    fn unregularized(&self, t: f64, w: &[f64]) -> c64 {
        let ones = vec![1.0; w.len()];
        let x = self.evolved(t, &ones, &ones);
        let p = gemm(self.b.as_ref(), x.as_ref());
        let q = gemm(x.as_ref(), self.b.as_ref());
        let mut acc = c64::new(0.0, 0.0);
        for (i, &wi) in w.iter().enumerate() {
            for k in 0..w.len() {
                acc += p[(k, i)].conj() * q[(k, i)] * wi;
            }
        }
        acc
    }

    fn pure_state(&self, t: f64, psi: &[c64]) -> c64 {
        let ones = vec![1.0; psi.len()];
        let x = self.evolved(t, &ones, &ones);
        let ea = expectation(x.as_ref(), psi);
        let eb = expectation(self.b.as_ref(), psi);
        ea.conj() * eb.conj() * ea * eb
    }
}

/// `Tr(a^† b)`.
fn frobenius_inner(a: faer::MatRef<'_, c64>, b: faer::MatRef<'_, c64>) -> c64 {
    let mut acc = c64::new(0.0, 0.0);
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            acc += a[(i, j)].conj() * b[(i, j)];
        }
    }
    acc
}

/// `<ψ|M|ψ>`.
fn expectation(m: faer::MatRef<'_, c64>, psi: &[c64]) -> c64 {
    let mut acc = c64::new(0.0, 0.0);
    for k in 0..psi.len() {
        let mut col = c64::new(0.0, 0.0);
        for j in 0..psi.len() {
            col += psi[j].conj() * m[(j, k)];
        }
        acc += col * psi[k];
    }
    acc
}

fn normalize_state(psi: &[c64], d: usize) -> Result<()> {
    if psi.len() != d {
        return Err(Error::DimensionMismatch(format!("state of length {} for dimension {d}", psi.len())));
    }
    let n: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
    if (n - 1.0).abs() > 1e-8 {
        return Err(Error::InvalidArgument(format!("state is not normalized (norm^2 = {n})")));
    }
    Ok(())
}

/// Regularized OTOC `Tr[y A^†(t) y B^† y A(t) y B]` for operators already embedded in the full space.
pub fn otoc_regularized(
    hdec: &EigenDecomposition,
    a: &ComplexMatrix,
    b: &ComplexMatrix,
    beta: f64,
    grid: &TimeGrid,
    normalize: bool,
) -> Result<DecayCurve> {
    otoc_with(hdec, a, b, beta, grid, &Regularization::ThermalCircle, normalize)
}

pub fn otoc_with(
    hdec: &EigenDecomposition,
    a: &ComplexMatrix,
    b: &ComplexMatrix,
    beta: f64,
    grid: &TimeGrid,
    reg: &Regularization,
    normalize: bool,
) -> Result<DecayCurve> {
    let mut times = grid.times().to_vec();
    if normalize {
        times.push(0.0);
    }
    let mut raw = otoc_values(hdec, a, b, beta, &times, reg)?;
    let mut residue = 0.0;
    let f0 = if normalize { Some(real_part(raw.pop().unwrap(), &mut residue)?) } else { None };
    let values = raw.into_iter().map(|z| real_part(z, &mut residue)).collect::<Result<Vec<f64>>>()?;
    let mut curve = DecayCurve::from_values("otoc", grid, values)?;
    curve.max_imag_residue = residue;
    if let Some(f0) = f0 {
        if f0 == 0.0 {
            return Err(Error::InvalidArgument("OTOC vanishes at t = 0; cannot normalize".into()));
        }
        for m in &mut curve.mean {
            *m /= f0;
        }
        curve.scale = f0;
    }
    Ok(curve)
}

/// Complex correlator values at each time, before any reality check.
fn otoc_values(
    hdec: &EigenDecomposition,
    a: &ComplexMatrix,
    b: &ComplexMatrix,
    beta: f64,
    times: &[f64],
    reg: &Regularization,
) -> Result<Vec<c64>> {
    let eo = EigenOtoc::new(hdec, a, b)?;
    let eval: Box<dyn Fn(f64) -> c64> = match reg {
        Regularization::ThermalCircle => {
            let y = hdec.thermal_weights(beta, 0.25)?;
            Box::new(move |t| eo.thermal_circle(t, &y))
        }
        Regularization::Unregularized => {
            let w = hdec.thermal_weights(beta, 1.0)?;
            Box::new(move |t| eo.unregularized(t, &w))
        }
        Regularization::PureState(psi) => {
            normalize_state(psi, hdec.dim())?;
            let rotated = hdec.vectors().adjoint().apply(psi)?;
            Box::new(move |t| eo.pure_state(t, &rotated))
        }
    };
    Ok(times.iter().map(|&t| eval(t)).collect())
}

/// Exact average over Haar unitaries on the first factor:
/// `(1/d_A) Tr_B[Tr_A(P) Tr_A(P)^†]` with `P = e^{-iHt} y B^† y e^{iHt}`.
pub fn otoc_haar_exact_a(
    hdec: &EigenDecomposition,
    b: &ComplexMatrix,
    part: BipartitePartition,
    beta: f64,
    grid: &TimeGrid,
) -> Result<DecayCurve> {
    if hdec.dim() != part.dim() {
        return Err(Error::DimensionMismatch("Hamiltonian vs partition".into()));
    }
    let bt = hdec.to_eigenbasis(&part.embed_b(b)?)?.into_mat();
    let y = hdec.thermal_weights(beta, 0.25)?;
    let d = hdec.dim();
    let m = Mat::<c64>::from_fn(d, d, |j, k| bt[(k, j)].conj() * (y[j] * y[k]));
    let u = hdec.vectors().as_ref();
    let e = hdec.eigenvalues();
    let mut values = Vec::with_capacity(grid.len());
    for &t in grid.times() {
        let ph: Vec<c64> = e.iter().map(|&x| c64::new(0.0, -x * t).exp()).collect();
        let mt = Mat::<c64>::from_fn(d, d, |j, k| m[(j, k)] * ph[j] * ph[k].conj());
        let um = gemm(u, mt.as_ref());
        let p = ComplexMatrix::from_mat(gemm_adj_rhs(um.as_ref(), u));
        let tr = crate::linalg::partial_trace(&p, part, crate::linalg::Subsystem::A)?;
        values.push(tr.frobenius_norm().powi(2) / part.d_a as f64);
    }
    DecayCurve::from_values("otoc_haar_a", grid, values)
}

/// Exact average over Haar unitaries on both factors at complex time `z`:
/// `(1/(d_A d_B)) Σ T[(β,α),(γ,δ)] T[(δ,γ),(α,β)]`, `T[(β,α),(γ,δ)] = Tr(W'_{βα} W_{γδ})`,
/// with `W = e^{-iHz} y`, `W' = y e^{iHz}` cut into `d_B x d_B` blocks.
pub fn otoc_haar_exact_complex(hdec: &EigenDecomposition, part: BipartitePartition, beta: f64, z: c64) -> Result<c64> {
    if hdec.dim() != part.dim() {
        return Err(Error::DimensionMismatch("Hamiltonian vs partition".into()));
    }
    let y = hdec.thermal_weights(beta, 0.25)?;
    let fwd = hdec.phases(z)?;
    let bwd = hdec.phases(-z)?;
    let dw: Vec<c64> = fwd.iter().zip(&y).map(|(p, y)| p * y).collect();
    let dwp: Vec<c64> = bwd.iter().zip(&y).map(|(p, y)| p * y).collect();
    let w = hdec.apply_function(&dw);
    let wp = hdec.apply_function(&dwp);
    let (da, db) = (part.d_a, part.d_b);
    let (w, wp) = (w.as_mat(), wp.as_mat());
    let n = da * da;
    let mut tmat = vec![c64::new(0.0, 0.0); n * n];
    for beta_i in 0..da {
        for alpha in 0..da {
            for gamma in 0..da {
                for delta in 0..da {
                    let mut acc = c64::new(0.0, 0.0);
                    for k in 0..db {
                        for l in 0..db {
                            acc += wp[(beta_i * db + k, alpha * db + l)] * w[(gamma * db + l, delta * db + k)];
                        }
                    }
                    tmat[(beta_i * da + alpha) * n + gamma * da + delta] = acc;
                }
            }
        }
    }
    let mut f = c64::new(0.0, 0.0);
    for alpha in 0..da {
        for beta_i in 0..da {
            for gamma in 0..da {
                for delta in 0..da {
                    f += tmat[(beta_i * da + alpha) * n + gamma * da + delta]
                        * tmat[(delta * da + gamma) * n + alpha * da + beta_i];
                }
            }
        }
    }
    Ok(f / (da * db) as f64)
}

/// Real-time curve of [`otoc_haar_exact_complex`] (unnormalized).
pub fn otoc_haar_exact(hdec: &EigenDecomposition, part: BipartitePartition, beta: f64, grid: &TimeGrid) -> Result<DecayCurve> {
    let mut residue = 0.0;
    let mut values = Vec::with_capacity(grid.len());
    for &t in grid.times() {
        let f = otoc_haar_exact_complex(hdec, part, beta, c64::new(t, 0.0))?;
        values.push(real_part(f, &mut residue)?);
    }
    let mut curve = DecayCurve::from_values("otoc_haar", grid, values)?;
    curve.max_imag_residue = residue;
    Ok(curve)
}

/// Monte Carlo average over Haar unitaries `A` on the first factor and `B` on the second.
///
/// For [`Regularization::PureState`] each sample is divided by the exact Haar
/// average at `t = 0`, `Tr(ρ_A(0)^2) Tr(ρ_B(0)^2) / (d_A d_B)`; for a product
/// state the mean is then the purity `Tr(ρ_B(t)^2)`. Other regularizations
/// report raw values.
pub fn otoc_haar_mc(
    hdec: &EigenDecomposition,
    part: BipartitePartition,
    beta: f64,
    grid: &TimeGrid,
    n_samples: usize,
    rng: &mut RngStream,
    reg: &Regularization,
) -> Result<DecayCurve> {
    if n_samples == 0 {
        return Err(Error::InvalidArgument("n_samples must be at least 1".into()));
    }
    if hdec.dim() != part.dim() {
        return Err(Error::DimensionMismatch("Hamiltonian vs partition".into()));
    }
    let mut samples = Vec::with_capacity(n_samples);
    match reg {
        Regularization::PureState(psi) => {
            normalize_state(psi, part.dim())?;
            let states: Vec<Vec<c64>> = grid.times().iter().map(|&t| evolve_state(hdec, psi, t)).collect::<Result<_>>()?;
            let rho_a: Vec<ComplexMatrix> = states.iter().map(|s| reduced_density(s, part, false)).collect();
            let rho_b0 = reduced_density(psi, part, true);
            let pa0 = reduced_density(psi, part, false).frobenius_norm().powi(2);
            let pb0 = rho_b0.frobenius_norm().powi(2);
            let norm = (part.d_a * part.d_b) as f64 / (pa0 * pb0);
            for _ in 0..n_samples {
                let a = sample_haar_unitary(part.d_a, rng)?;
                let b = sample_haar_unitary(part.d_b, rng)?;
                let eb = hs_inner(&rho_b0, &b)?.norm_sqr();
                let row: Vec<f64> = rho_a.iter().map(|r| hs_inner(r, &a).unwrap().norm_sqr() * eb * norm).collect();
                samples.push(row);
            }
            DecayCurve::from_realizations("otoc_haar_mc", grid, &samples)
        }
        _ => {
            // Single draws are complex; only the average is real.
            let mut imag = vec![0.0; grid.len()];
            for _ in 0..n_samples {
                let a = part.embed_a(&sample_haar_unitary(part.d_a, rng)?)?;
                let b = part.embed_b(&sample_haar_unitary(part.d_b, rng)?)?;
                let z = otoc_values(hdec, &a, &b, beta, grid.times(), reg)?;
                for (acc, v) in imag.iter_mut().zip(&z) {
                    *acc += v.im;
                }
                samples.push(z.iter().map(|v| v.re).collect());
            }
            let mut curve = DecayCurve::from_realizations("otoc_haar_mc", grid, &samples)?;
            curve.max_imag_residue = imag.iter().fold(0.0, |m: f64, v| m.max((v / n_samples as f64).abs()));
            Ok(curve)
        }
    }
}

/// `e^{-iHt} ψ`.
pub fn evolve_state(hdec: &EigenDecomposition, psi: &[c64], t: f64) -> Result<Vec<c64>> {
    let u = hdec.vectors();
    let rotated = u.adjoint().apply(psi)?;
    let ph = hdec.phases(c64::new(t, 0.0))?;
    let evolved: Vec<c64> = rotated.iter().zip(&ph).map(|(a, p)| a * p).collect();
    u.apply(&evolved)
}

/// Reduced density matrix of a pure state; `keep_b` selects which factor survives.
fn reduced_density(psi: &[c64], part: BipartitePartition, keep_b: bool) -> ComplexMatrix {
    let (da, db) = (part.d_a, part.d_b);
    if keep_b {
        ComplexMatrix::from_fn(db, db, |k, l| (0..da).map(|i| psi[i * db + k] * psi[i * db + l].conj()).sum())
    } else {
        ComplexMatrix::from_fn(da, da, |i, j| (0..db).map(|k| psi[i * db + k] * psi[j * db + k].conj()).sum())
    }
}

/// `Tr(ρ_B^2)` of a normalized pure state.
pub fn purity_reduced(state: &[c64], part: BipartitePartition) -> Result<f64> {
    normalize_state(state, part.dim())?;
    // The smaller factor gives the cheaper Gram matrix; both purities agree.
    let rho = reduced_density(state, part, part.d_b <= part.d_a);
    Ok(rho.frobenius_norm().powi(2))
}

/// Precomputed data for `|Tr(ρ e^{iH_1 t} e^{-iH_2 t})|^2`.
struct EchoKernel {
    e1: Vec<f64>,
    e2: Vec<f64>,
    g: Mat<c64>,
}

impl EchoKernel {
    fn new(d1: &EigenDecomposition, d2: &EigenDecomposition, rho: &ComplexMatrix) -> Self {
        let u1 = d1.vectors().as_ref();
        let u2 = d2.vectors().as_ref();
        let w = gemm_adj_lhs(u1, u2);
        let ru1 = gemm(rho.as_ref(), u1);
        let r = gemm_adj_lhs(u2, ru1.as_ref());
        let d = d1.dim();
        let g = Mat::<c64>::from_fn(d, d, |j, k| w[(j, k)] * r[(k, j)]);
        Self { e1: d1.eigenvalues().to_vec(), e2: d2.eigenvalues().to_vec(), g }
    }

    fn eval(&self, t: f64) -> f64 {
        let p1: Vec<c64> = self.e1.iter().map(|&e| c64::new(0.0, e * t).exp()).collect();
        let p2: Vec<c64> = self.e2.iter().map(|&e| c64::new(0.0, -e * t).exp()).collect();
        let mut acc = c64::new(0.0, 0.0);
        for (k, pk) in p2.iter().enumerate() {
            let mut col = c64::new(0.0, 0.0);
            for (j, pj) in p1.iter().enumerate() {
                col += pj * self.g[(j, k)];
            }
            acc += col * pk;
        }
        acc.norm_sqr()
    }

    fn curve(&self, grid: &TimeGrid) -> Vec<f64> {
        grid.times().iter().map(|&t| self.eval(t)).collect()
    }
}

fn check_same_dim(ops: &[&HermitianOperator]) -> Result<usize> {
    let d = ops[0].dim();
    if ops.iter().any(|o| o.dim() != d) {
        return Err(Error::DimensionMismatch("operators differ in dimension".into()));
    }
    Ok(d)
}

/// `|<e^{i(H+V1)t} e^{-i(H+V2)t}>_β|^2` with the normalized thermal state of `H` at inverse temperature `beta`.
pub fn loschmidt_echo(
    h: &HermitianOperator,
    v1: &HermitianOperator,
    v2: &HermitianOperator,
    beta: f64,
    grid: &TimeGrid,
) -> Result<DecayCurve> {
    check_same_dim(&[h, v1, v2])?;
    let rho = h.eig()?.thermal_weight(beta, 1.0)?;
    let d1 = h.add(v1)?.eig()?;
    let d2 = h.add(v2)?.eig()?;
    let kernel = EchoKernel::new(&d1, &d2, &rho);
    DecayCurve::from_values("loschmidt_echo", grid, kernel.curve(grid))
}

/// Which inverse temperature the echo uses, given the correlator's `β`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeTemperature {
    /// `β/2`.
    #[default]
    Effective,
    /// `β`.
    Bare,
}

impl LeTemperature {
    pub fn beta(self, beta: f64) -> f64 {
        match self {
            Self::Effective => beta / 2.0,
            Self::Bare => beta,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LeOptions {
    pub temperature: LeTemperature,
    /// Channel indices whose sign is fixed to +1 instead of drawn.
    pub fixed_channels: Vec<usize>,
}

pub enum NoiseSampling<'a> {
    /// Every admissible sign vector paired with every other.
    Exhaustive,
    /// Independent pairs of sign vectors.
    MonteCarlo { n_pairs: usize, rng: &'a mut RngStream },
}

/// How the two sign vectors of a coarse-grained echo relate.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignPairing {
    /// Independent draws, coincidences allowed.
    Independent,
    /// The second vector is redrawn until it differs from the first.
    #[default]
    Distinct,
    /// Each perturbation is built from its own fresh GUE couplings carrying the
    /// norms of the given ones, so the two are uncorrelated (the many-channel limit).
    Resampled,
}

struct EchoSetup {
    rho: ComplexMatrix,
    prefactor: f64,
}

fn echo_setup(h_b: &HermitianOperator, beta: f64, opts: &LeOptions) -> Result<EchoSetup> {
    let dec = h_b.eig()?;
    let b_le = opts.temperature.beta(beta);
    let rho = dec.thermal_weight(b_le, 1.0)?;
    let ln_d = (h_b.dim() as f64).ln();
    let lnz = |b: f64| dec.log_partition(b) - ln_d;
    let prefactor = (2.0 * lnz(beta / 2.0) - lnz(beta)).exp();
    Ok(EchoSetup { rho, prefactor })
}

fn draw_signs(k: usize, fixed: &[usize], rng: &mut RngStream) -> Vec<i8> {
    (0..k).map(|c| if fixed.contains(&c) { 1 } else { rng.sign() }).collect()
}

fn check_noise_inputs(h_b: &HermitianOperator, couplings: &[HermitianOperator], delta: f64, opts: &LeOptions) -> Result<()> {
    if couplings.is_empty() {
        return Err(Error::InvalidArgument("empty coupling list".into()));
    }
    let mut all = vec![h_b];
    all.extend(couplings.iter());
    check_same_dim(&all)?;
    if !(delta >= 0.0) || !delta.is_finite() {
        return Err(Error::InvalidArgument(format!("delta must be finite and >= 0, got {delta}")));
    }
    if opts.fixed_channels.iter().any(|&c| c >= couplings.len()) {
        return Err(Error::InvalidArgument("fixed channel index out of range".into()));
    }
    Ok(())
}

fn perturbed(h_b: &HermitianOperator, couplings: &[HermitianOperator], delta: f64, signs: &[i8]) -> Result<EigenDecomposition> {
    if delta == 0.0 {
        return h_b.eig();
    }
    let v = NoiseRealization::from_signs(couplings, delta, signs)?;
    h_b.add(&v.operator)?.eig()
}

/// Echo averaged over pairs of sign-noise perturbations (`β` is the correlator's inverse temperature).
pub fn noise_averaged_le(
    h_b: &HermitianOperator,
    couplings_b: &[HermitianOperator],
    delta: f64,
    beta: f64,
    grid: &TimeGrid,
    n_pairs: usize,
    rng: &mut RngStream,
) -> Result<DecayCurve> {
    noise_averaged_le_with(
        h_b,
        couplings_b,
        delta,
        beta,
        grid,
        NoiseSampling::MonteCarlo { n_pairs, rng },
        &LeOptions::default(),
    )
}

pub fn noise_averaged_le_with(
    h_b: &HermitianOperator,
    couplings_b: &[HermitianOperator],
    delta: f64,
    beta: f64,
    grid: &TimeGrid,
    sampling: NoiseSampling<'_>,
    opts: &LeOptions,
) -> Result<DecayCurve> {
    check_noise_inputs(h_b, couplings_b, delta, opts)?;
    let setup = echo_setup(h_b, beta, opts)?;
    let k = couplings_b.len();
    let mut curve = match sampling {
        NoiseSampling::Exhaustive => {
            let free: Vec<usize> = (0..k).filter(|c| !opts.fixed_channels.contains(c)).collect();
            if free.len() > 12 {
                return Err(Error::InvalidArgument("too many free channels for exhaustive enumeration".into()));
            }
            let n = 1usize << free.len();
            let decs: Vec<EigenDecomposition> = (0..n)
                .map(|mask| {
                    let mut signs = vec![1i8; k];
                    for (bit, &c) in free.iter().enumerate() {
                        if mask >> bit & 1 == 1 {
                            signs[c] = -1;
                        }
                    }
                    perturbed(h_b, couplings_b, delta, &signs)
                })
                .collect::<Result<_>>()?;
            let mut acc = vec![0.0; grid.len()];
            for i in 0..n {
                for v in acc.iter_mut() {
                    *v += 1.0;
                }
                for j in (i + 1)..n {
                    let c = EchoKernel::new(&decs[i], &decs[j], &setup.rho).curve(grid);
                    for (a, v) in acc.iter_mut().zip(c) {
                        *a += 2.0 * v;
                    }
                }
            }
            let total = (n * n) as f64;
            let mut curve = DecayCurve::from_values("noise_averaged_le", grid, acc.into_iter().map(|v| v / total).collect())?;
            curve.n_realizations = n * n;
            curve
        }
        NoiseSampling::MonteCarlo { n_pairs, rng } => {
            if n_pairs == 0 {
                return Err(Error::InvalidArgument("n_pairs must be at least 1".into()));
            }
            let mut samples = Vec::with_capacity(n_pairs);
            for _ in 0..n_pairs {
                let s1 = draw_signs(k, &opts.fixed_channels, rng);
                let s2 = draw_signs(k, &opts.fixed_channels, rng);
                if s1 == s2 {
                    samples.push(vec![1.0; grid.len()]);
                    continue;
                }
                let d1 = perturbed(h_b, couplings_b, delta, &s1)?;
                let d2 = perturbed(h_b, couplings_b, delta, &s2)?;
                samples.push(EchoKernel::new(&d1, &d2, &setup.rho).curve(grid));
            }
            DecayCurve::from_realizations("noise_averaged_le", grid, &samples)?
        }
    };
    curve.thermal_prefactor = Some(setup.prefactor);
    Ok(curve)
}

/// Echo for a single pair of sign-noise perturbations with distinct sign vectors.
pub fn coarse_grained_le(
    h_b: &HermitianOperator,
    couplings_b: &[HermitianOperator],
    delta: f64,
    beta: f64,
    grid: &TimeGrid,
    rng: &mut RngStream,
) -> Result<DecayCurve> {
    coarse_grained_le_with(h_b, couplings_b, delta, beta, grid, rng, SignPairing::Distinct, &LeOptions::default())
}

#[allow(clippy::too_many_arguments)]
pub fn coarse_grained_le_with(
    h_b: &HermitianOperator,
    couplings_b: &[HermitianOperator],
    delta: f64,
    beta: f64,
    grid: &TimeGrid,
    rng: &mut RngStream,
    pairing: SignPairing,
    opts: &LeOptions,
) -> Result<DecayCurve> {
    check_noise_inputs(h_b, couplings_b, delta, opts)?;
    let k = couplings_b.len();
    if pairing == SignPairing::Distinct && opts.fixed_channels.len() >= k {
        return Err(Error::InvalidArgument("distinct sign vectors need at least one free channel".into()));
    }
    let setup = echo_setup(h_b, beta, opts)?;
    if pairing == SignPairing::Resampled {
        let mut fresh = || -> Result<EigenDecomposition> {
            let mut v = HermitianOperator::zeros(h_b.dim());
            for c in couplings_b {
                let w = sample_gue(h_b.dim(), rng)?;
                let n = w.hs_norm();
                v = v.add(&w.scaled(delta * c.hs_norm() / n))?;
            }
            h_b.add(&v)?.eig()
        };
        let d1 = fresh()?;
        let d2 = fresh()?;
        let mut curve = DecayCurve::from_values("coarse_grained_le", grid, EchoKernel::new(&d1, &d2, &setup.rho).curve(grid))?;
        curve.thermal_prefactor = Some(setup.prefactor);
        return Ok(curve);
    }
    let s1 = draw_signs(k, &opts.fixed_channels, rng);
    let mut s2 = draw_signs(k, &opts.fixed_channels, rng);
    while pairing == SignPairing::Distinct && s2 == s1 {
        s2 = draw_signs(k, &opts.fixed_channels, rng);
    }
    let values = if s1 == s2 {
        vec![1.0; grid.len()]
    } else {
        let d1 = perturbed(h_b, couplings_b, delta, &s1)?;
        let d2 = perturbed(h_b, couplings_b, delta, &s2)?;
        EchoKernel::new(&d1, &d2, &setup.rho).curve(grid)
    };
    let mut curve = DecayCurve::from_values("coarse_grained_le", grid, values)?;
    curve.thermal_prefactor = Some(setup.prefactor);
    Ok(curve)
}

/// Sector-resolved spectrum of an SYK Hamiltonian together with the probe
/// creation operators rotated into the sector eigenbases.
pub struct SykSpectrum {
    energies: Vec<Vec<f64>>,
    probe_a: Vec<Mat<c64>>,
    probe_b: Vec<Mat<c64>>,
}

impl SykSpectrum {
    pub fn new(model: &SykModel) -> Result<Self> {
        let blocks = model.sector_blocks()?;
        let decs: Vec<EigenDecomposition> = blocks.iter().map(|b| b.h.eig()).collect::<Result<_>>()?;
        let (a, b) = model.probe_sites();
        let rotate = |site: usize| -> Result<Vec<Mat<c64>>> {
            let c = model.creation_blocks(site)?;
            Ok(c.iter()
                .enumerate()
                .map(|(k, m)| {
                    let right = gemm(m.as_ref(), decs[k].vectors().as_ref());
                    gemm_adj_lhs(decs[k + 1].vectors().as_ref(), right.as_ref())
                })
                .collect())
        };
        Ok(Self {
            energies: decs.iter().map(|d| d.eigenvalues().to_vec()).collect(),
            probe_a: rotate(a)?,
            probe_b: rotate(b)?,
        })
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut all: Vec<f64> = self.energies.iter().flatten().copied().collect();
        all.sort_by(f64::total_cmp);
        all
    }

    /// Standard deviation of the many-body spectrum.
    pub fn bandwidth(&self) -> f64 {
        let e = self.eigenvalues();
        let n = e.len() as f64;
        let m = e.iter().sum::<f64>() / n;
        (e.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n).sqrt()
    }

    fn weights(&self, beta: f64) -> Result<Vec<Vec<f64>>> {
        let all = self.eigenvalues();
        if !(beta >= 0.0) {
            return Err(Error::InvalidArgument(format!("beta must be >= 0, got {beta}")));
        }
        let e0 = all[0];
        let ln_z = all.iter().map(|&e| (-beta * (e - e0)).exp()).sum::<f64>().ln();
        Ok(self
            .energies
            .iter()
            .map(|es| es.iter().map(|&e| (0.25 * (-beta * (e - e0) - ln_z)).exp()).collect())
            .collect())
    }

    /// `Tr[(y X_a(t) y X_b)^2]` with `X = c + c^†`.
    fn value(&self, t: f64, y: &[Vec<f64>]) -> c64 {
        let n_blocks = self.probe_a.len();
        let up: Vec<Mat<c64>> = (0..n_blocks)
            .map(|k| {
                let (lo, hi) = (&self.energies[k], &self.energies[k + 1]);
                let m = &self.probe_a[k];
                let phl: Vec<c64> = lo.iter().map(|&e| c64::new(0.0, -e * t).exp()).collect();
                let phh: Vec<c64> = hi.iter().map(|&e| c64::new(0.0, e * t).exp()).collect();
                Mat::from_fn(hi.len(), lo.len(), |j, l| m[(j, l)] * phh[j] * phl[l] * (y[k + 1][j] * y[k][l]))
            })
            .collect();
        let db = &self.probe_b;
        let mut total = c64::new(0.0, 0.0);
        for k in 0..=n_blocks {
            let dim = self.energies[k].len();
            let mut diag = Mat::<c64>::zeros(dim, dim);
            if k < n_blocks {
                diag += gemm_adj_lhs(up[k].as_ref(), db[k].as_ref());
            }
            if k > 0 {
                diag += gemm_adj_rhs(up[k - 1].as_ref(), db[k - 1].as_ref());
            }
            total += trace_of_product(diag.as_ref(), diag.as_ref());
            if k + 2 <= n_blocks {
                let raise = gemm(up[k + 1].as_ref(), db[k].as_ref());
                let lowered = gemm(db[k + 1].as_ref(), up[k].as_ref());
                total += frobenius_inner(lowered.as_ref(), raise.as_ref()) * 2.0;
            }
        }
        total
    }

    pub fn otoc(&self, beta: f64, grid: &TimeGrid, normalize: bool) -> Result<DecayCurve> {
        let y = self.weights(beta)?;
        let mut residue = 0.0;
        let mut values = Vec::with_capacity(grid.len());
        for &t in grid.times() {
            values.push(real_part(self.value(t, &y), &mut residue)?);
        }
        let mut curve = DecayCurve::from_values("syk_otoc", grid, values)?;
        curve.max_imag_residue = residue;
        if normalize {
            let f0 = real_part(self.value(0.0, &y), &mut residue)?;
            if f0 == 0.0 {
                return Err(Error::InvalidArgument("OTOC vanishes at t = 0; cannot normalize".into()));
            }
            for m in &mut curve.mean {
                *m /= f0;
            }
            curve.scale = f0;
        }
        Ok(curve)
    }
}

/// OTOC of `c_a + c_a^†` and `c_b + c_b^†` on the probe sites, computed sector by sector.
pub fn syk_otoc(model: &SykModel, beta: f64, grid: &TimeGrid, normalize: bool) -> Result<DecayCurve> {
    SykSpectrum::new(model)?.otoc(beta, grid, normalize)
}
