//! One function per experiment kind. Each returns its curves in a fixed order.

use std::collections::BTreeMap;

use rayon::prelude::*;
use scramble::correlators::*;
use scramble::ensembles::*;
use scramble::iho::{iho_le_bch, iho_le_exact, iho_otoc, IhoParams};
use scramble::linalg::{BipartitePartition, ComplexMatrix, HermitianOperator, Subsystem};
use scramble::models::{build_bipartite_with, build_syk, DeformedSites, LocalA};

use crate::config::{DeformedKind, ExperimentKind, ProbeKind, Resolved};
use crate::error::{LabError, LabResult};

/// How a curve is summarized in the manifest.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FitTarget {
    /// Decay fit on the stored values.
    Decay,
    /// Early-growth fit of a curve stored as `1 - F`.
    GrowthOfComplement,
    None,
}

pub struct ExperimentOutput {
    pub curves: Vec<(DecayCurve, FitTarget)>,
    pub extras: BTreeMap<String, f64>,
}

/// Evaluates `f` for every realization on the current rayon pool and returns
/// the results in realization order. Realization `r` draws from stream
/// `stream_offset + r` of the configured seed.
pub fn realizations<T, F>(cfg: &Resolved, f: F) -> LabResult<Vec<T>>
where
    T: Send,
    F: Fn(&mut RngStream) -> scramble::Result<T> + Sync,
{
    let out: Vec<scramble::Result<T>> = (0..cfg.n_realizations)
        .into_par_iter()
        .map(|r| f(&mut RngStream::new(cfg.seed, cfg.stream_offset + r as u64)))
        .collect();
    out.into_iter()
        .enumerate()
        .map(|(index, res)| res.map_err(|source| LabError::Realization { index, source }))
        .collect()
}

fn mean_of(xs: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.collect();
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn run(cfg: &Resolved) -> LabResult<ExperimentOutput> {
    match cfg.experiment {
        ExperimentKind::RmtOtocLe => rmt_otoc_le(cfg),
        ExperimentKind::FiniteTemp => finite_temp(cfg),
        ExperimentKind::Iho => iho(cfg),
        ExperimentKind::Syk => syk(cfg),
        ExperimentKind::HaarCheck => haar_check(cfg),
    }
}

fn probe(kind: ProbeKind, d: usize, rng: &mut RngStream) -> scramble::Result<HermitianOperator> {
    match kind {
        ProbeKind::Traceless => sample_traceless_hermitian(d, rng),
        ProbeKind::Gue => sample_random_hermitian(d, rng),
    }
}

fn rmt_otoc_le(cfg: &Resolved) -> LabResult<ExperimentOutput> {
    let grid = cfg.grid()?;
    let opts = LeOptions { temperature: cfg.le_temperature, fixed_channels: Vec::new() };
    let runs = realizations(cfg, |rng| {
        let model = build_bipartite_with(cfg.d_b, cfg.delta, LocalA::Gue, rng)?;
        let a = probe(cfg.probes, model.part.d_a, rng)?;
        let b = probe(cfg.probes, model.part.d_b, rng)?;
        let hdec = model.h_total.eig()?;
        let a = model.part.embed_a(a.matrix())?;
        let b = model.part.embed_b(b.matrix())?;
        let otoc = otoc_regularized(&hdec, &a, &b, cfg.beta, &grid, true)?;
        let le = coarse_grained_le_with(
            &model.h_b,
            &model.couplings_b,
            cfg.delta,
            cfg.beta,
            &grid,
            rng,
            cfg.sign_pairing,
            &opts,
        )?;
        Ok((otoc, le))
    })?;
    let otoc: Vec<Vec<f64>> = runs.iter().map(|(o, _)| o.mean.clone()).collect();
    let le: Vec<Vec<f64>> = runs.iter().map(|(_, l)| l.mean.clone()).collect();
    let mut le_curve = DecayCurve::from_realizations("le", &grid, &le)?;
    let prefactor = mean_of(runs.iter().map(|(_, l)| l.thermal_prefactor.unwrap_or(1.0)));
    le_curve.thermal_prefactor = Some(prefactor);
    let mut otoc_curve = DecayCurve::from_realizations("otoc", &grid, &otoc)?;
    otoc_curve.max_imag_residue = runs.iter().map(|(o, _)| o.max_imag_residue).fold(0.0, f64::max);
    let mut extras = BTreeMap::new();
    extras.insert("otoc_t0_mean".into(), mean_of(runs.iter().map(|(o, _)| o.scale)));
    Ok(ExperimentOutput { curves: vec![(otoc_curve, FitTarget::Decay), (le_curve, FitTarget::Decay)], extras })
}

fn finite_temp(cfg: &Resolved) -> LabResult<ExperimentOutput> {
    let grid = cfg.grid()?;
    let opts = LeOptions { temperature: cfg.le_temperature, fixed_channels: vec![0] };
    let runs = realizations(cfg, |rng| {
        let model = build_bipartite_with(cfg.d_b, cfg.delta, LocalA::Zero, rng)?;
        let hdec = model.h_total.eig()?;
        let otoc = otoc_haar_exact(&hdec, model.part, cfg.beta, &grid)?;
        let le = noise_averaged_le_with(
            &model.h_b,
            &model.couplings_b,
            cfg.delta,
            cfg.beta,
            &grid,
            NoiseSampling::Exhaustive,
            &opts,
        )?;
        let f0 = otoc_haar_exact_complex(&hdec, model.part, cfg.beta, scramble::linalg::c64::new(0.0, 0.0))?.re;
        Ok((otoc.mean.iter().map(|v| v / f0).collect::<Vec<f64>>(), f0, le))
    })?;
    let otoc: Vec<Vec<f64>> = runs.iter().map(|r| r.0.clone()).collect();
    let le: Vec<Vec<f64>> = runs.iter().map(|r| r.2.mean.clone()).collect();
    let otoc_curve = DecayCurve::from_realizations("otoc_haar", &grid, &otoc)?;
    let mut le_curve = DecayCurve::from_realizations("le", &grid, &le)?;
    let prefactor = mean_of(runs.iter().map(|r| r.2.thermal_prefactor.unwrap_or(1.0)));
    le_curve.thermal_prefactor = Some(prefactor);
    let mut extras = BTreeMap::new();
    extras.insert("otoc_t0_mean".into(), mean_of(runs.iter().map(|r| r.1)));
    extras.insert("le_thermal_prefactor_mean".into(), prefactor);
    Ok(ExperimentOutput { curves: vec![(otoc_curve, FitTarget::Decay), (le_curve, FitTarget::Decay)], extras })
}

pub fn iho_params(cfg: &Resolved) -> scramble::Result<IhoParams> {
    let i = &cfg.iho;
    Ok(IhoParams::new(i.m1, i.m2, i.omega1, i.omega2, i.delta)?.with_inverted(i.inverted1, i.inverted2))
}

fn iho(cfg: &Resolved) -> LabResult<ExperimentOutput> {
    let grid = cfg.grid()?;
    let p = iho_params(cfg)?;
    let f = iho_otoc(&p, &grid)?;
    let (_, m1) = iho_le_exact(&p, &grid)?;
    let (bch, _) = iho_le_bch(&p, &grid)?;
    let mut extras = BTreeMap::new();
    let a = p.delta.powi(2) * p.c1_sq * p.c2_sq;
    extras.insert("c1_sq".into(), p.c1_sq);
    extras.insert("c2_sq".into(), p.c2_sq);
    extras.insert("otoc_growth_coefficient".into(), 2.0 * a);
    extras.insert("echo_growth_coefficient".into(), 4.0 * a);
    Ok(ExperimentOutput {
        curves: vec![
            (f.complement("one_minus_otoc"), FitTarget::GrowthOfComplement),
            (m1.complement("one_minus_m1"), FitTarget::GrowthOfComplement),
            (bch.complement("one_minus_m1_bch"), FitTarget::None),
        ],
        extras,
    })
}

fn syk(cfg: &Resolved) -> LabResult<ExperimentOutput> {
    let grid = cfg.grid()?;
    let deformed = match cfg.deformed_sites {
        DeformedKind::Probes => DeformedSites::Probes,
        DeformedKind::FirstProbe => DeformedSites::FirstProbe,
    };
    let runs = realizations(cfg, |rng| {
        let model = build_syk(cfg.n_fermions, cfg.variance_scale, cfg.g, cfg.probe_sites, rng)?
            .with_deformed_sites(deformed.clone())?;
        let spec = SykSpectrum::new(&model)?;
        Ok((spec.otoc(cfg.beta, &grid, true)?, spec.bandwidth()))
    })?;
    let samples: Vec<Vec<f64>> = runs.iter().map(|r| r.0.mean.clone()).collect();
    let mut curve = DecayCurve::from_realizations("otoc", &grid, &samples)?;
    curve.max_imag_residue = runs.iter().map(|r| r.0.max_imag_residue).fold(0.0, f64::max);
    let mut extras = BTreeMap::new();
    extras.insert("bandwidth_mean".into(), mean_of(runs.iter().map(|r| r.1)));
    Ok(ExperimentOutput { curves: vec![(curve, FitTarget::Decay)], extras })
}

/// Checkpoints at which the Monte Carlo error is recorded.
pub fn haar_checkpoints(n_draws: usize) -> Vec<usize> {
    let mut c = vec![n_draws / 100, n_draws / 10, n_draws];
    c.retain(|&n| n > 0);
    c.dedup();
    c
}

/// Largest entrywise deviation of the Monte Carlo average from the exact
/// average, at each checkpoint, for one random operator.
pub fn haar_mc_errors(part: BipartitePartition, n_draws: usize, rng: &mut RngStream) -> scramble::Result<Vec<f64>> {
    let d = part.dim();
    let o = ComplexMatrix::from_fn(d, d, |_, _| rng.complex_normal());
    let exact = haar_average_conjugation(&o, part, Subsystem::A)?;
    let checkpoints = haar_checkpoints(n_draws);
    let mut acc = ComplexMatrix::zeros(d, d);
    let mut errors = Vec::with_capacity(checkpoints.len());
    for k in 1..=n_draws {
        let u = part.embed_a(&sample_haar_unitary(part.d_a, rng)?)?;
        acc = acc.add(&u.adjoint().matmul(&o)?.matmul(&u)?)?;
        if checkpoints.contains(&k) {
            errors.push(acc.scale_real(1.0 / k as f64).max_abs_diff(&exact)?);
        }
    }
    Ok(errors)
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

fn haar_check(cfg: &Resolved) -> LabResult<ExperimentOutput> {
    let part = BipartitePartition::new(cfg.d_a, cfg.d_b)?;
    let errs = realizations(cfg, |rng| haar_mc_errors(part, cfg.n_draws, rng))?;
    let checkpoints: Vec<f64> = haar_checkpoints(cfg.n_draws).iter().map(|&n| n as f64).collect();
    let grid = TimeGrid::new(checkpoints.clone())?;
    let curve = DecayCurve::from_realizations("max_error", &grid, &errs)?;
    let mut extras = BTreeMap::new();
    extras.insert("slope".into(), log_log_slope(&checkpoints, &curve.mean));
    extras.insert("worst_final_error".into(), errs.iter().map(|e| *e.last().unwrap()).fold(0.0, f64::max));
    Ok(ExperimentOutput { curves: vec![(curve, FitTarget::None)], extras })
}
