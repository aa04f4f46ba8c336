use std::path::{Path, PathBuf};

use scramble::correlators::{LeTemperature, SignPairing};
use serde::{Deserialize, Serialize};

use crate::error::{LabError, LabResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    RmtOtocLe,
    Iho,
    Syk,
    HaarCheck,
    FiniteTemp,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::RmtOtocLe => "rmt_otoc_le",
            Self::Iho => "iho",
            Self::Syk => "syk",
            Self::HaarCheck => "haar_check",
            Self::FiniteTemp => "finite_temp",
        }
    }
}

impl std::str::FromStr for ExperimentKind {
    type Err = LabError;

    fn from_str(s: &str) -> LabResult<Self> {
        Ok(match s {
            "rmt_otoc_le" => Self::RmtOtocLe,
            "iho" => Self::Iho,
            "syk" => Self::Syk,
            "haar_check" => Self::HaarCheck,
            "finite_temp" => Self::FiniteTemp,
            other => return Err(LabError::Config(format!("unknown experiment '{other}'"))),
        })
    }
}

/// OTOC probe operators for the bipartite random-matrix model.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeKind {
    #[default]
    Traceless,
    Gue,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeformedKind {
    #[default]
    Probes,
    FirstProbe,
}

/// Which decay model the summary fit of each curve uses.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitChoice {
    #[default]
    Auto,
    Exponential,
    Gaussian,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub t_max: Option<f64>,
    pub n_points: Option<usize>,
}

/// Model parameters; unset values take per-experiment defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub d_a: Option<usize>,
    pub d_b: Option<usize>,
    pub delta: Option<f64>,
    pub beta: Option<f64>,
    pub n_fermions: Option<usize>,
    pub g: Option<f64>,
    pub probe_sites: Option<(usize, usize)>,
    pub variance_scale: Option<f64>,
    pub deformed_sites: Option<DeformedKind>,
    pub probes: Option<ProbeKind>,
    pub sign_pairing: Option<SignPairing>,
    pub le_temperature: Option<LeTemperature>,
    /// Haar check: number of random test operators.
    pub n_operators: Option<usize>,
    /// Haar check: Monte Carlo draws per operator.
    pub n_draws: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IhoConfig {
    pub m1: Option<f64>,
    pub m2: Option<f64>,
    pub omega1: Option<f64>,
    pub omega2: Option<f64>,
    pub delta: Option<f64>,
    pub inverted1: Option<bool>,
    pub inverted2: Option<bool>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub model: FitChoice,
    pub growth_window: Option<(f64, f64)>,
    pub decay_window: Option<(f64, f64)>,
    pub subtract_plateau: Option<bool>,
    pub weighted: Option<bool>,
}

/// Contents of a TOML experiment file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default)]
    pub seed: u64,
    pub n_realizations: Option<usize>,
    pub output_path: Option<PathBuf>,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub iho: IhoConfig,
    #[serde(default)]
    pub fit: FitConfig,
}

impl ExperimentConfig {
    pub fn new(experiment: ExperimentKind) -> Self {
        Self {
            experiment,
            seed: 0,
            n_realizations: None,
            output_path: None,
            grid: GridConfig::default(),
            model: ModelConfig::default(),
            iho: IhoConfig::default(),
            fit: FitConfig::default(),
        }
    }

    pub fn from_toml(text: &str) -> LabResult<Self> {
        toml::from_str(text).map_err(|e| LabError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> LabResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LabError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Sets one sweepable parameter by name; `delta` targets the oscillator coupling for IHO runs.
    pub fn set_parameter(&mut self, name: &str, value: f64) -> LabResult<()> {
        let as_count = |v: f64| -> LabResult<usize> {
            if v >= 0.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(LabError::Config(format!("{name} must be a nonnegative integer, got {v}")))
            }
        };
        match name {
            "delta" if self.experiment == ExperimentKind::Iho => self.iho.delta = Some(value),
            "delta" => self.model.delta = Some(value),
            "beta" => self.model.beta = Some(value),
            "g" => self.model.g = Some(value),
            "d_b" => self.model.d_b = Some(as_count(value)?),
            "n_fermions" => self.model.n_fermions = Some(as_count(value)?),
            other => {
                return Err(LabError::Config(format!(
                    "'{other}' is not sweepable (delta, beta, g, d_b, n_fermions)"
                )))
            }
        }
        Ok(())
    }

    /// Fills every unset parameter with its default and validates the result.
    pub fn resolve(&self) -> LabResult<Resolved> {
        let m = &self.model;
        let r = match self.experiment {
            ExperimentKind::RmtOtocLe => {
                let delta = m.delta.unwrap_or(0.1);
                Resolved {
                    d_a: 2,
                    d_b: m.d_b.unwrap_or(128),
                    delta,
                    beta: m.beta.unwrap_or(0.0),
                    t_max: self.grid.t_max.unwrap_or(0.3 / delta.max(1e-3)),
                    n_points: self.grid.n_points.unwrap_or(200),
                    n_realizations: self.n_realizations.unwrap_or(20),
                    sign_pairing: m.sign_pairing.unwrap_or(SignPairing::Resampled),
                    ..Resolved::base(self)
                }
            }
            ExperimentKind::FiniteTemp => Resolved {
                d_a: 2,
                d_b: m.d_b.unwrap_or(8),
                delta: m.delta.unwrap_or(0.1),
                beta: m.beta.unwrap_or(0.5),
                t_max: self.grid.t_max.unwrap_or(2.0),
                n_points: self.grid.n_points.unwrap_or(101),
                n_realizations: self.n_realizations.unwrap_or(10),
                ..Resolved::base(self)
            },
            ExperimentKind::Iho => Resolved {
                t_max: self.grid.t_max.unwrap_or(8.0),
                n_points: self.grid.n_points.unwrap_or(161),
                n_realizations: 1,
                ..Resolved::base(self)
            },
            ExperimentKind::Syk => {
                let g = m.g.unwrap_or(1.0);
                Resolved {
                    n_fermions: m.n_fermions.unwrap_or(10),
                    g,
                    beta: m.beta.unwrap_or(0.0),
                    t_max: self.grid.t_max.unwrap_or(if g < 1.0 { 2.5 / (g * g) } else { 15.0 }),
                    n_points: self.grid.n_points.unwrap_or(200),
                    n_realizations: self.n_realizations.unwrap_or(20),
                    ..Resolved::base(self)
                }
            }
            ExperimentKind::HaarCheck => Resolved {
                d_a: m.d_a.unwrap_or(2),
                d_b: m.d_b.unwrap_or(4),
                n_operators: m.n_operators.unwrap_or(10),
                n_draws: m.n_draws.unwrap_or(100_000),
                n_realizations: m.n_operators.unwrap_or(10),
                t_max: 0.0,
                n_points: 0,
                ..Resolved::base(self)
            },
        };
        r.validate()?;
        Ok(r)
    }
}

/// Fully specified parameter set; this is what the manifest echoes and what the file hash covers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Resolved {
    pub experiment: ExperimentKind,
    pub seed: u64,
    /// Offset added to every realization's stream index (used by sweeps).
    pub stream_offset: u64,
    pub n_realizations: usize,
    pub t_max: f64,
    pub n_points: usize,
    pub d_a: usize,
    pub d_b: usize,
    pub delta: f64,
    pub beta: f64,
    pub n_fermions: usize,
    pub g: f64,
    pub probe_sites: (usize, usize),
    pub variance_scale: f64,
    pub deformed_sites: DeformedKind,
    pub probes: ProbeKind,
    pub sign_pairing: SignPairing,
    pub le_temperature: LeTemperature,
    pub n_operators: usize,
    pub n_draws: usize,
    pub iho: IhoResolved,
    pub fit: FitResolved,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IhoResolved {
    pub m1: f64,
    pub m2: f64,
    pub omega1: f64,
    pub omega2: f64,
    pub delta: f64,
    pub inverted1: bool,
    pub inverted2: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResolved {
    pub model: FitChoice,
    pub growth_window: (f64, f64),
    pub decay_window: (f64, f64),
    pub plateau_tail_fraction: f64,
    pub min_window_points: usize,
    pub tie_tolerance: f64,
    /// Explicit time windows, if any; otherwise the amplitude windows above apply.
    pub time_window_growth: Option<(f64, f64)>,
    pub time_window_decay: Option<(f64, f64)>,
    pub subtract_plateau: bool,
    pub weighted: bool,
}

impl Resolved {
    fn base(c: &ExperimentConfig) -> Self {
        use scramble::analysis as an;
        let m = &c.model;
        let i = &c.iho;
        Self {
            experiment: c.experiment,
            seed: c.seed,
            stream_offset: 0,
            n_realizations: 1,
            t_max: 1.0,
            n_points: 2,
            d_a: 0,
            d_b: 0,
            delta: 0.0,
            beta: 0.0,
            n_fermions: 0,
            g: 1.0,
            probe_sites: m.probe_sites.unwrap_or((0, 1)),
            variance_scale: m.variance_scale.unwrap_or(1.0),
            deformed_sites: m.deformed_sites.unwrap_or_default(),
            probes: m.probes.unwrap_or_default(),
            sign_pairing: m.sign_pairing.unwrap_or_default(),
            le_temperature: m.le_temperature.unwrap_or_default(),
            n_operators: 0,
            n_draws: 0,
            iho: IhoResolved {
                m1: i.m1.unwrap_or(1e5),
                m2: i.m2.unwrap_or(1.0),
                omega1: i.omega1.unwrap_or(0.0),
                omega2: i.omega2.unwrap_or(1.0),
                delta: i.delta.unwrap_or(1e-5),
                inverted1: i.inverted1.unwrap_or(true),
                inverted2: i.inverted2.unwrap_or(true),
            },
            fit: FitResolved {
                model: c.fit.model,
                growth_window: an::GROWTH_WINDOW,
                decay_window: an::DECAY_WINDOW,
                plateau_tail_fraction: an::PLATEAU_TAIL_FRACTION,
                min_window_points: an::MIN_WINDOW_POINTS,
                tie_tolerance: an::TIE_TOLERANCE,
                time_window_growth: c.fit.growth_window,
                time_window_decay: c.fit.decay_window,
                subtract_plateau: c.fit.subtract_plateau.unwrap_or(true),
                weighted: c.fit.weighted.unwrap_or(true),
            },
        }
    }

    fn validate(&self) -> LabResult<()> {
        let bad = |msg: String| Err(LabError::Config(msg));
        if self.n_realizations == 0 {
            return bad("n_realizations must be at least 1".into());
        }
        if self.experiment != ExperimentKind::HaarCheck {
            if !(self.t_max > 0.0) || !self.t_max.is_finite() {
                return bad(format!("t_max must be positive, got {}", self.t_max));
            }
            if self.n_points < 2 {
                return bad(format!("n_points must be at least 2, got {}", self.n_points));
            }
        }
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return bad(format!("beta must be finite and >= 0, got {}", self.beta));
        }
        if !(self.delta >= 0.0) || !self.delta.is_finite() {
            return bad(format!("delta must be finite and >= 0, got {}", self.delta));
        }
        match self.experiment {
            ExperimentKind::RmtOtocLe | ExperimentKind::FiniteTemp => {
                if !(2..=1024).contains(&self.d_b) {
                    return bad(format!("d_b must lie in [2, 1024], got {}", self.d_b));
                }
            }
            ExperimentKind::Syk => {
                if !(4..=scramble::models::MAX_SYK_FERMIONS).contains(&self.n_fermions) {
                    return bad(format!(
                        "n_fermions must lie in [4, {}], got {}",
                        scramble::models::MAX_SYK_FERMIONS,
                        self.n_fermions
                    ));
                }
                if !(self.g > 0.0 && self.g <= 1.0) {
                    return bad(format!("g must lie in (0, 1], got {}", self.g));
                }
                let (a, b) = self.probe_sites;
                if a == b || a >= self.n_fermions || b >= self.n_fermions {
                    return bad(format!("invalid probe sites ({a}, {b})"));
                }
                if !(self.variance_scale > 0.0) {
                    return bad("variance_scale must be positive".into());
                }
            }
            ExperimentKind::HaarCheck => {
                if self.d_a == 0 || self.d_b == 0 || self.d_a * self.d_b > 64 {
                    return bad(format!("haar check needs 1 <= d_a d_b <= 64, got {}x{}", self.d_a, self.d_b));
                }
                if self.n_draws < 100 {
                    return bad(format!("n_draws must be at least 100, got {}", self.n_draws));
                }
            }
            ExperimentKind::Iho => {
                let i = &self.iho;
                if !(i.m1 > 0.0 && i.m2 > 0.0) || !(i.omega1 >= 0.0 && i.omega2 >= 0.0) || i.delta == 0.0 {
                    return bad("IHO needs positive masses, nonnegative frequencies and nonzero delta".into());
                }
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> LabResult<scramble::correlators::TimeGrid> {
        Ok(scramble::correlators::TimeGrid::uniform(self.t_max, self.n_points)?)
    }

    /// Hex digest prefix of the canonical JSON form.
    pub fn hash12(&self) -> String {
        use sha2::{Digest, Sha256};
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))[..12].to_string()
    }
}
