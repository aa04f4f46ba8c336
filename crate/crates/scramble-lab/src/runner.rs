use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use scramble::analysis::*;
use scramble::correlators::DecayCurve;
use scramble::ensembles::RNG_ALGORITHM;

use crate::config::{ExperimentConfig, FitChoice, Resolved};
use crate::error::{LabError, LabResult};
use crate::experiments::{self, FitTarget};
use crate::persist::*;

/// Stream-index distance between consecutive sweep values.
pub const SWEEP_STREAM_STRIDE: u64 = 1 << 32;

#[derive(Clone, Debug)]
pub struct RunOptions {
    /// Worker threads; `None` uses the rayon default.
    pub threads: Option<usize>,
    pub out_dir: PathBuf,
}

#[derive(Debug)]
pub struct RunReport {
    pub manifest: ResultManifest,
    pub manifest_path: PathBuf,
    pub curves: Vec<DecayCurve>,
}

fn pool(threads: Option<usize>) -> LabResult<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        if n == 0 {
            return Err(LabError::Config("--threads must be at least 1".into()));
        }
        b = b.num_threads(n);
    }
    b.build().map_err(|e| LabError::Config(format!("cannot start worker pool: {e}")))
}

fn fit_options(cfg: &Resolved, window: Option<(f64, f64)>) -> FitOptions {
    FitOptions { window, subtract_plateau: cfg.fit.subtract_plateau, weighted: cfg.fit.weighted }
}

/// Summary fit of one curve according to the configured model choice.
pub fn fit_curve(cfg: &Resolved, curve: &DecayCurve, target: FitTarget) -> Option<FitRecord> {
    let result = match target {
        FitTarget::None => return None,
        FitTarget::Decay => {
            let opts = fit_options(cfg, cfg.fit.time_window_decay);
            match cfg.fit.model {
                FitChoice::Auto => model_select_with(curve, &opts),
                FitChoice::Exponential => fit_exponential_with(curve, &opts),
                FitChoice::Gaussian => fit_gaussian_with(curve, &opts),
            }
        }
        FitTarget::GrowthOfComplement => {
            let opts = fit_options(cfg, cfg.fit.time_window_growth);
            fit_early_growth_with(&curve.complement(&curve.label), &opts)
        }
    };
    let (fit, error) = match result {
        Ok(f) => (Some(f), None),
        Err(e) => (None, Some(e.to_string())),
    };
    Some(FitRecord { curve: curve.label.clone(), fit, error })
}

fn now_unix() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

/// Runs one experiment, writes its curves and manifest into `opts.out_dir`.
pub fn run_experiment(cfg: &Resolved, opts: &RunOptions) -> LabResult<RunReport> {
    // Matrix kernels stay single-threaded so results do not depend on the pool size.
    faer::set_global_parallelism(faer::Par::Seq);
    let pool = pool(opts.threads)?;
    let started = now_unix();
    let clock = Instant::now();
    let output = pool.install(|| experiments::run(cfg))?;
    let hash = cfg.hash12();
    ensure_dir(&opts.out_dir)?;
    let name = cfg.experiment.name();
    let mut curves = Vec::new();
    let mut records = Vec::new();
    let mut fits = Vec::new();
    for (curve, target) in output.curves {
        let file = curve_file_name(name, &curve.label, &hash);
        write_curve(&opts.out_dir.join(&file), &curve)?;
        records.push(CurveRecord {
            label: curve.label.clone(),
            file,
            n_points: curve.len(),
            n_realizations: curve.n_realizations,
            scale: curve.scale,
            thermal_prefactor: curve.thermal_prefactor,
            max_imag_residue: curve.max_imag_residue,
        });
        fits.extend(fit_curve(cfg, &curve, target));
        curves.push(curve);
    }
    let manifest = ResultManifest {
        schema_version: SCHEMA_VERSION,
        experiment: name.to_string(),
        config_hash: hash,
        config: cfg.clone(),
        rng_algorithm: RNG_ALGORITHM.to_string(),
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        threads: pool.current_num_threads(),
        started_unix_seconds: started,
        wall_clock_seconds: clock.elapsed().as_secs_f64(),
        curves: records,
        fits,
        extras: output.extras,
        sweep: None,
    };
    let manifest_path = manifest.write(&opts.out_dir)?;
    Ok(RunReport { manifest, manifest_path, curves })
}

/// One sub-run per value with per-value stream offsets, plus a `(value, λ)` table
/// built from the first curve of each sub-run.
pub fn sweep(base: &ExperimentConfig, parameter: &str, values: &[f64], opts: &RunOptions) -> LabResult<(ResultManifest, PathBuf)> {
    if values.is_empty() {
        return Err(LabError::Config("sweep needs at least one value".into()));
    }
    let clock = Instant::now();
    let started = now_unix();
    let base_resolved = base.resolve()?;
    let mut resolved = Vec::with_capacity(values.len());
    for (k, &v) in values.iter().enumerate() {
        let mut c = base.clone();
        c.set_parameter(parameter, v)?;
        let mut r = c.resolve()?;
        r.stream_offset = base_resolved.stream_offset + k as u64 * SWEEP_STREAM_STRIDE;
        resolved.push(r);
    }
    let mut rows = Vec::with_capacity(values.len());
    let mut curve_label = String::new();
    let mut threads = 0;
    for (r, &v) in resolved.iter().zip(values) {
        let report = run_experiment(r, opts)?;
        threads = report.manifest.threads;
        let first = report.manifest.fits.first();
        curve_label = first.map(|f| f.curve.clone()).unwrap_or_default();
        let fit = first.and_then(|f| f.fit.as_ref());
        rows.push(SweepRow {
            value: v,
            manifest: report.manifest.file_name(),
            model: fit.map(|f| serde_json::to_value(f.model).unwrap().as_str().unwrap_or_default().to_string()),
            rate_lambda: fit.map(|f| f.rate_lambda),
            r_squared: fit.map(|f| f.r_squared),
        });
    }
    let points: Vec<(f64, f64)> = rows.iter().filter_map(|r| r.rate_lambda.map(|l| (r.value, l))).collect();
    let (rate_law, linear_law) = if parameter == "g" && points.len() >= 4 {
        (fit_rate_law(&points).ok(), fit_linear_rate_law(&points).ok())
    } else {
        (None, None)
    };
    let hash = {
        use sha2::{Digest, Sha256};
        let key = serde_json::to_vec(&(&base_resolved, parameter, values)).expect("sweep key serializes");
        hex::encode(Sha256::digest(&key))[..12].to_string()
    };
    let name = base.experiment.name();
    let table_file = format!("{name}_sweep_{parameter}_{hash}.csv");
    write_sweep_table(&opts.out_dir.join(&table_file), &rows)?;
    let manifest = ResultManifest {
        schema_version: SCHEMA_VERSION,
        experiment: name.to_string(),
        config_hash: hash,
        config: base_resolved,
        rng_algorithm: RNG_ALGORITHM.to_string(),
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        threads,
        started_unix_seconds: started,
        wall_clock_seconds: clock.elapsed().as_secs_f64(),
        curves: Vec::new(),
        fits: Vec::new(),
        extras: Default::default(),
        sweep: Some(SweepRecord {
            parameter: parameter.to_string(),
            curve: curve_label,
            rows,
            table_file,
            rate_law,
            linear_law,
        }),
    };
    let path = manifest.write(&opts.out_dir)?;
    Ok((manifest, path))
}

/// Re-fits a stored curve file. `complement` fits `1 - values`, for curves stored as `1 - F`.
pub fn refit(path: &Path, model: Option<FitModel>, window: Option<(f64, f64)>, complement: bool) -> LabResult<DecayFit> {
    let label = path.file_stem().and_then(|s| s.to_str()).unwrap_or("curve");
    let mut curve = read_curve(path, label)?;
    if complement {
        curve = curve.complement(label);
    }
    let opts = FitOptions { window, ..FitOptions::default() };
    let fit = match model {
        None => model_select_with(&curve, &opts),
        Some(FitModel::Exponential) => fit_exponential_with(&curve, &opts),
        Some(FitModel::Gaussian) => fit_gaussian_with(&curve, &opts),
        Some(FitModel::EarlyGrowth) => fit_early_growth_with(&curve, &opts),
        Some(other) => {
            return Err(LabError::Config(format!("{other:?} is not a curve model")));
        }
    }?;
    Ok(fit)
}
