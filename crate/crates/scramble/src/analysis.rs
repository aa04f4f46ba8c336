//! Decay-model fitting: early exponential growth, exponential and Gaussian
//! decays, model selection and the quadratic rate law.
//!
//! All fits are (weighted) linear least squares on a log scale.

use serde::{Deserialize, Serialize};

use crate::correlators::DecayCurve;
use crate::error::{Error, Result};

/// Default window for early growth, in units of `1 - F`.
pub const GROWTH_WINDOW: (f64, f64) = (1e-5, 0.1);
/// Default window for decays, in units of the plateau-subtracted normalized amplitude.
pub const DECAY_WINDOW: (f64, f64) = (0.2, 0.8);
/// Fraction of the grid (from the end) averaged to estimate the plateau.
pub const PLATEAU_TAIL_FRACTION: f64 = 0.1;
pub const MIN_WINDOW_POINTS: usize = 5;
/// Relative residual difference below which model selection is flagged ambiguous.
pub const TIE_TOLERANCE: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitModel {
    EarlyGrowth,
    Exponential,
    Gaussian,
    QuadraticRateLaw,
    LinearRateLaw,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub model: FitModel,
    /// Rate (1/time), or the coefficient of a rate law.
    pub rate_lambda: f64,
    /// Growth prefactor, or the decay amplitude `c`.
    pub prefactor_epsilon: f64,
    pub plateau: f64,
    pub window: (f64, f64),
    pub r_squared: f64,
    /// Sum of squared residuals of the curve values over the window.
    pub residual_sum: f64,
    pub n_points: usize,
    pub weighted: bool,
    /// `(1/λ) ln(1/ε)` for early-growth fits.
    pub scrambling_time: Option<f64>,
    /// Set by model selection when both models fit equally well.
    pub ambiguous: bool,
}

impl DecayFit {
    /// Model value at time (or coupling) `x`.
    pub fn predict(&self, x: f64) -> f64 {
        match self.model {
            FitModel::EarlyGrowth => 1.0 - self.prefactor_epsilon * (self.rate_lambda * x).exp(),
            FitModel::Exponential => self.plateau + self.prefactor_epsilon * (-self.rate_lambda * x).exp(),
            FitModel::Gaussian => self.plateau + self.prefactor_epsilon * (-(self.rate_lambda * x).powi(2)).exp(),
            FitModel::QuadraticRateLaw => self.rate_lambda * x * x,
            FitModel::LinearRateLaw => self.rate_lambda * x,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitOptions {
    /// Explicit time window; `None` selects the module default.
    pub window: Option<(f64, f64)>,
    pub subtract_plateau: bool,
    /// Use `1/stderr^2` weights when every point in the window has a positive stderr.
    pub weighted: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { window: None, subtract_plateau: true, weighted: true }
    }
}

struct Line {
    intercept: f64,
    slope: f64,
    r_squared: f64,
}

fn weighted_line(x: &[f64], y: &[f64], w: &[f64]) -> Result<Line> {
    let sw: f64 = w.iter().sum();
    let mx = x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let my = y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for i in 0..x.len() {
        let dx = x[i] - mx;
        let dy = y[i] - my;
        sxx += w[i] * dx * dx;
        sxy += w[i] * dx * dy;
        syy += w[i] * dy * dy;
    }
    if sxx <= 0.0 {
        return Err(Error::Fit("degenerate abscissa".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = (0..x.len()).map(|i| w[i] * (y[i] - intercept - slope * x[i]).powi(2)).sum();
    let r_squared = if syy > 0.0 { (1.0 - ss_res / syy).clamp(0.0, 1.0) } else { 1.0 };
    Ok(Line { intercept, slope, r_squared })
}

/// Mean over the last [`PLATEAU_TAIL_FRACTION`] of the grid.
pub fn plateau_estimate(curve: &DecayCurve) -> f64 {
    let n = curve.mean.len();
    let k = ((n as f64 * PLATEAU_TAIL_FRACTION).round() as usize).clamp(1, n);
    curve.mean[n - k..].iter().sum::<f64>() / k as f64
}

fn indices_in_time(curve: &DecayCurve, (lo, hi): (f64, f64)) -> Vec<usize> {
    (0..curve.len()).filter(|&i| curve.times[i] >= lo && curve.times[i] <= hi).collect()
}

/// Contiguous run starting at the first value `<= hi` (after `start`) and ending
/// before the first value `< lo`.
fn contiguous_window(values: &[f64], lo: f64, hi: f64, descending: bool) -> Vec<usize> {
    let inside_start = |v: f64| if descending { v <= hi } else { v >= lo };
    let past_end = |v: f64| if descending { v < lo } else { v > hi };
    let Some(start) = values.iter().position(|&v| inside_start(v)) else { return Vec::new() };
    let mut out = Vec::new();
    for (i, &v) in values.iter().enumerate().skip(start) {
        if past_end(v) {
            break;
        }
        out.push(i);
    }
    out
}

fn weights_for(curve: &DecayCurve, idx: &[usize], values: &[f64], opts: &FitOptions) -> (Vec<f64>, bool) {
    if opts.weighted && idx.iter().all(|&i| curve.stderr[i] > 0.0) {
        // Variance of log(v) is (stderr / v)^2 to first order.
        (idx.iter().map(|&i| (values[i] / curve.stderr[i]).powi(2)).collect(), true)
    } else {
        (vec![1.0; idx.len()], false)
    }
}

fn check_points(idx: &[usize], what: &str) -> Result<()> {
    if idx.len() < MIN_WINDOW_POINTS {
        return Err(Error::Fit(format!(
            "{what}: {} points in window, need at least {MIN_WINDOW_POINTS}",
            idx.len()
        )));
    }
    Ok(())
}

/// Fits `1 - F ≈ ε e^{λt}` on a log scale.
pub fn fit_early_growth(curve: &DecayCurve, window: Option<(f64, f64)>) -> Result<DecayFit> {
    fit_early_growth_with(curve, &FitOptions { window, ..FitOptions::default() })
}

pub fn fit_early_growth_with(curve: &DecayCurve, opts: &FitOptions) -> Result<DecayFit> {
    let v: Vec<f64> = curve.mean.iter().map(|m| 1.0 - m).collect();
    let idx = match opts.window {
        Some(w) => indices_in_time(curve, w),
        None => contiguous_window(&v, GROWTH_WINDOW.0, GROWTH_WINDOW.1, false),
    };
    check_points(&idx, "early growth")?;
    if idx.iter().any(|&i| v[i] <= 0.0) {
        return Err(Error::Fit("early growth: nonpositive 1 - F in window".into()));
    }
    let x: Vec<f64> = idx.iter().map(|&i| curve.times[i]).collect();
    let y: Vec<f64> = idx.iter().map(|&i| v[i].ln()).collect();
    let (w, weighted) = weights_for(curve, &idx, &v, opts);
    let line = weighted_line(&x, &y, &w)?;
    let lambda = line.slope;
    let eps = line.intercept.exp();
    let residual_sum = idx.iter().map(|&i| (v[i] - eps * (lambda * curve.times[i]).exp()).powi(2)).sum();
    let scrambling_time = if lambda > 0.0 { Some((1.0 / eps).ln() / lambda) } else { None };
    Ok(DecayFit {
        model: FitModel::EarlyGrowth,
        rate_lambda: lambda,
        prefactor_epsilon: eps,
        plateau: 1.0,
        window: (x[0], x[x.len() - 1]),
        r_squared: line.r_squared,
        residual_sum,
        n_points: idx.len(),
        weighted,
        scrambling_time,
        ambiguous: false,
    })
}

fn fit_decay(curve: &DecayCurve, model: FitModel, opts: &FitOptions) -> Result<DecayFit> {
    let plateau = if opts.subtract_plateau { plateau_estimate(curve) } else { 0.0 };
    let v: Vec<f64> = curve.mean.iter().map(|m| m - plateau).collect();
    let idx = match opts.window {
        Some(w) => indices_in_time(curve, w),
        None => {
            let top = v[0];
            if !(top > 0.0) {
                return Err(Error::Fit("curve does not start above its plateau".into()));
            }
            let amp: Vec<f64> = v.iter().map(|x| x / top).collect();
            contiguous_window(&amp, DECAY_WINDOW.0, DECAY_WINDOW.1, true)
        }
    };
    let name = if model == FitModel::Gaussian { "gaussian" } else { "exponential" };
    check_points(&idx, name)?;
    if idx.iter().any(|&i| v[i] <= 0.0) {
        return Err(Error::Fit(format!("{name}: nonpositive value after plateau subtraction")));
    }
    let x: Vec<f64> = idx
        .iter()
        .map(|&i| if model == FitModel::Gaussian { curve.times[i].powi(2) } else { curve.times[i] })
        .collect();
    let y: Vec<f64> = idx.iter().map(|&i| v[i].ln()).collect();
    let (w, weighted) = weights_for(curve, &idx, &v, opts);
    let line = weighted_line(&x, &y, &w)?;
    if line.slope >= 0.0 {
        return Err(Error::Fit(format!("{name}: curve is not decaying in the window")));
    }
    let lambda = if model == FitModel::Gaussian { (-line.slope).sqrt() } else { -line.slope };
    let c = line.intercept.exp();
    let mut fit = DecayFit {
        model,
        rate_lambda: lambda,
        prefactor_epsilon: c,
        plateau,
        window: (curve.times[idx[0]], curve.times[idx[idx.len() - 1]]),
        r_squared: line.r_squared,
        residual_sum: 0.0,
        n_points: idx.len(),
        weighted,
        scrambling_time: None,
        ambiguous: false,
    };
    fit.residual_sum = idx.iter().map(|&i| (curve.mean[i] - fit.predict(curve.times[i])).powi(2)).sum();
    Ok(fit)
}

/// Fits `F - plateau = c e^{-λt}`.
pub fn fit_exponential(curve: &DecayCurve, window: Option<(f64, f64)>) -> Result<DecayFit> {
    fit_decay(curve, FitModel::Exponential, &FitOptions { window, ..FitOptions::default() })
}

/// Fits `F - plateau = c e^{-(λt)^2}`.
pub fn fit_gaussian(curve: &DecayCurve, window: Option<(f64, f64)>) -> Result<DecayFit> {
    fit_decay(curve, FitModel::Gaussian, &FitOptions { window, ..FitOptions::default() })
}

pub fn fit_exponential_with(curve: &DecayCurve, opts: &FitOptions) -> Result<DecayFit> {
    fit_decay(curve, FitModel::Exponential, opts)
}

pub fn fit_gaussian_with(curve: &DecayCurve, opts: &FitOptions) -> Result<DecayFit> {
    fit_decay(curve, FitModel::Gaussian, opts)
}

/// Runs both decay fits on the default window and keeps the one with the smaller residual sum.
pub fn model_select(curve: &DecayCurve) -> Result<DecayFit> {
    model_select_with(curve, &FitOptions::default())
}

pub fn model_select_with(curve: &DecayCurve, opts: &FitOptions) -> Result<DecayFit> {
    let below = curve.mean.iter().filter(|&&m| m < 0.9).count();
    if below < 20 {
        return Err(Error::Fit(format!("model selection needs 20 points below 0.9, found {below}")));
    }
    let exp = fit_exponential_with(curve, opts);
    let gau = fit_gaussian_with(curve, opts);
    match (exp, gau) {
        (Ok(e), Ok(g)) => {
            let tie = (e.residual_sum - g.residual_sum).abs() <= TIE_TOLERANCE * e.residual_sum.max(g.residual_sum);
            let mut best = if g.residual_sum < e.residual_sum { g } else { e };
            best.ambiguous = tie;
            Ok(best)
        }
        (Ok(e), Err(_)) => Ok(e),
        (Err(_), Ok(g)) => Ok(g),
        (Err(e), Err(g)) => Err(Error::Fit(format!("both fits rejected: exponential: {e}; gaussian: {g}"))),
    }
}

fn fit_power_through_origin(points: &[(f64, f64)], power: i32, model: FitModel) -> Result<DecayFit> {
    if points.len() < 4 {
        return Err(Error::Fit(format!("rate law needs at least 4 points, got {}", points.len())));
    }
    let sxx: f64 = points.iter().map(|(g, _)| g.powi(2 * power)).sum();
    if sxx <= 0.0 {
        return Err(Error::Fit("all couplings are zero".into()));
    }
    let c = points.iter().map(|(g, l)| g.powi(power) * l).sum::<f64>() / sxx;
    let mean = points.iter().map(|p| p.1).sum::<f64>() / points.len() as f64;
    let ss_res: f64 = points.iter().map(|(g, l)| (l - c * g.powi(power)).powi(2)).sum();
    let ss_tot: f64 = points.iter().map(|(_, l)| (l - mean).powi(2)).sum();
    let r_squared = if ss_tot > 0.0 { (1.0 - ss_res / ss_tot).clamp(0.0, 1.0) } else { 1.0 };
    let gs: Vec<f64> = points.iter().map(|p| p.0).collect();
    Ok(DecayFit {
        model,
        rate_lambda: c,
        prefactor_epsilon: 0.0,
        plateau: 0.0,
        window: (gs.iter().cloned().fold(f64::INFINITY, f64::min), gs.iter().cloned().fold(f64::NEG_INFINITY, f64::max)),
        r_squared,
        residual_sum: ss_res,
        n_points: points.len(),
        weighted: false,
        scrambling_time: None,
        ambiguous: false,
    })
}

/// Least-squares `λ = c g^2` over `(g, λ)` points.
pub fn fit_rate_law(points: &[(f64, f64)]) -> Result<DecayFit> {
    fit_power_through_origin(points, 2, FitModel::QuadraticRateLaw)
}

/// Least-squares `λ = c g`, for comparison with [`fit_rate_law`].
pub fn fit_linear_rate_law(points: &[(f64, f64)]) -> Result<DecayFit> {
    fit_power_through_origin(points, 1, FitModel::LinearRateLaw)
}
