//! Experiment configuration (TOML or JSON) and its validation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::sampling::EnvMode;
use crate::env_model::{EnvironmentModel, ModelSpec};
use crate::error::{Error, Result};
use crate::stable_limits::{CkMethod, Effort};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Simulate,
    Constants,
    LimitCheck,
    IglehartTail,
    ZTail,
    ValleyStats,
    OccupationTail,
    QuenchedGate,
    InterarrivalDiag,
    GoodEnv,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Simulate => "simulate",
            ExperimentKind::Constants => "constants",
            ExperimentKind::LimitCheck => "limit_check",
            ExperimentKind::IglehartTail => "iglehart_tail",
            ExperimentKind::ZTail => "z_tail",
            ExperimentKind::ValleyStats => "valley_stats",
            ExperimentKind::OccupationTail => "occupation_tail",
            ExperimentKind::QuenchedGate => "quenched_gate",
            ExperimentKind::InterarrivalDiag => "interarrival_diag",
            ExperimentKind::GoodEnv => "good_env",
        }
    }

    fn default_env_mode(self) -> EnvMode {
        match self {
            ExperimentKind::Simulate | ExperimentKind::LimitCheck => EnvMode::Iid,
            _ => EnvMode::Conditioned,
        }
    }
}

/// Valley decomposition parameters; `a` is estimated when absent.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValleyConfig {
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default)]
    pub a: Option<f64>,
}

fn default_gamma() -> f64 {
    1.0
}

impl Default for ValleyConfig {
    fn default() -> Self {
        ValleyConfig { gamma: 1.0, a: None }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

/// Gate thresholds. Defaults are the desk-scale acceptance values.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub cf_distance: f64,
    pub kappa1_ratio: f64,
    pub slope: f64,
    pub plateau_flatness: f64,
    pub plateau_vs_constant: f64,
    pub occupation_band: (f64, f64),
    pub valley_ratio: (f64, f64),
    pub no_frequency: f64,
    pub censored_fraction: f64,
    pub omega1_rate: f64,
    pub quenched_rel: f64,
    pub quenched_seconds: f64,
    /// Minimum exceedance count for a tail point to be usable.
    pub min_tail_count: u64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            cf_distance: 0.1,
            kappa1_ratio: 0.3,
            slope: 0.1,
            plateau_flatness: 0.2,
            plateau_vs_constant: 0.25,
            occupation_band: (0.7, 1.3),
            valley_ratio: (0.9, 1.1),
            no_frequency: 0.95,
            censored_fraction: 1e-3,
            omega1_rate: 1e-3,
            quenched_rel: 1e-8,
            quenched_seconds: 10.0,
            min_tail_count: 1000,
        }
    }
}

/// Ω_t parameters: e₁ ≤ C log t, drops and rises ≤ α log t.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GoodEnvConfig {
    #[serde(default = "default_good_c")]
    pub c: f64,
    #[serde(default)]
    pub alpha: Option<f64>,
    /// The Ω⁽¹⁾ rate gate applies at this t when it is on the ladder.
    #[serde(default = "default_gate_t")]
    pub gate_t: f64,
}

fn default_good_c() -> f64 {
    10.0
}
fn default_gate_t() -> f64 {
    1e6
}

impl Default for GoodEnvConfig {
    fn default() -> Self {
        GoodEnvConfig {
            c: default_good_c(),
            alpha: None,
            gate_t: default_gate_t(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub dir: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub model: ModelSpec,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub env_mode: Option<EnvMode>,
    #[serde(default)]
    pub n: Vec<u64>,
    /// Replicates per n (walk experiments) or per sample pool.
    #[serde(default)]
    pub replicates: Option<u64>,
    /// Sample count for tail studies and pools.
    #[serde(default)]
    pub samples: Option<u64>,
    /// Step budget per walk.
    #[serde(default)]
    pub budget: Option<u64>,
    #[serde(default)]
    pub fast: Option<bool>,
    /// Excursions at least this high are crossed by the decomposition sampler.
    #[serde(default)]
    pub fast_min_height: Option<f64>,
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub valleys: ValleyConfig,
    #[serde(default)]
    pub effort: Option<Effort>,
    #[serde(default)]
    pub c_k_method: Option<CkMethod>,
    #[serde(default)]
    pub cf_grid: Option<GridConfig>,
    #[serde(default)]
    pub t_ladder: Vec<f64>,
    #[serde(default)]
    pub good_env: GoodEnvConfig,
    #[serde(default)]
    pub gate_windows: Option<usize>,
    #[serde(default)]
    pub gate_max_len: Option<usize>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub output: OutputConfig,
}

pub const DEFAULT_BUDGET: u64 = 100_000_000_000;

impl ExperimentConfig {
    /// Minimal config for `kind` on `model`; every optional field defaulted.
    pub fn new(kind: ExperimentKind, model: ModelSpec, seed: u64) -> Self {
        ExperimentConfig {
            kind,
            model,
            seed: Some(seed),
            env_mode: None,
            n: Vec::new(),
            replicates: None,
            samples: None,
            budget: None,
            fast: None,
            fast_min_height: None,
            workers: None,
            valleys: ValleyConfig::default(),
            effort: None,
            c_k_method: None,
            cf_grid: None,
            t_ladder: Vec::new(),
            good_env: GoodEnvConfig::default(),
            gate_windows: None,
            gate_max_len: None,
            tolerances: Tolerances::default(),
            output: OutputConfig::default(),
        }
    }

    /// Parse TOML, or JSON when the text starts with '{'.
    pub fn parse(text: &str) -> Result<Self> {
        if text.trim_start().starts_with('{') {
            Ok(serde_json::from_str(text)?)
        } else {
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn seed(&self) -> Result<u64> {
        self.seed.ok_or_else(|| Error::Config("seed is mandatory".into()))
    }

    pub fn env_mode(&self) -> EnvMode {
        self.env_mode.unwrap_or(self.kind.default_env_mode())
    }

    pub fn budget(&self) -> u64 {
        self.budget.unwrap_or(DEFAULT_BUDGET)
    }

    pub fn fast(&self) -> bool {
        self.fast.unwrap_or(true)
    }

    pub fn fast_min_height(&self) -> f64 {
        self.fast_min_height.unwrap_or(3.0)
    }

    pub fn effort(&self) -> Effort {
        self.effort.unwrap_or_default()
    }

    pub fn cf_grid(&self) -> GridConfig {
        self.cf_grid.unwrap_or(GridConfig {
            lo: -2.0,
            hi: 2.0,
            points: 41,
        })
    }

    pub fn workers(&self) -> usize {
        self.workers
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
            .max(1)
    }

    fn replicates_required(&self) -> Result<u64> {
        match self.replicates {
            Some(r) if r > 0 => Ok(r),
            Some(_) => Err(Error::Config("replicates must be positive".into())),
            None => Err(Error::Config(format!("{} needs `replicates`", self.kind.name()))),
        }
    }

    fn samples_required(&self) -> Result<u64> {
        match self.samples {
            Some(s) if s > 0 => Ok(s),
            Some(_) => Err(Error::Config("samples must be positive".into())),
            None => Err(Error::Config(format!("{} needs `samples`", self.kind.name()))),
        }
    }

    /// Check the fields `kind` uses and build the model.
    pub fn validate(&self) -> Result<EnvironmentModel> {
        self.seed()?;
        let model = self.model.build()?;
        let kappa = model.kappa();
        if self.budget == Some(0) {
            return Err(Error::Config("budget must be positive".into()));
        }
        if self.workers == Some(0) {
            return Err(Error::Config("workers must be positive".into()));
        }
        if !(self.valleys.gamma > 0.0) || self.valleys.a.is_some_and(|a| !(a > 0.0)) {
            return Err(Error::Config("valleys.gamma and valleys.a must be positive".into()));
        }
        let needs_n = |min: u64| -> Result<()> {
            if self.n.is_empty() {
                return Err(Error::Config(format!("{} needs a nonempty `n` list", self.kind.name())));
            }
            if let Some(&bad) = self.n.iter().find(|&&n| n < min) {
                return Err(Error::Config(format!("n = {bad} is below the minimum {min}")));
            }
            Ok(())
        };
        match self.kind {
            ExperimentKind::Simulate => {
                needs_n(1)?;
                self.replicates_required()?;
            }
            ExperimentKind::LimitCheck => {
                needs_n(3)?;
                self.replicates_required()?;
                let g = self.cf_grid();
                if g.points == 0 || !(g.lo < g.hi) {
                    return Err(Error::Config("cf_grid needs lo < hi and points > 0".into()));
                }
                if kappa >= 2.0 {
                    return Err(Error::Config(format!("limit_check needs kappa < 2, model has {kappa}")));
                }
            }
            ExperimentKind::InterarrivalDiag => {
                needs_n(3)?;
                self.replicates_required()?;
                if !(1.0 - 1e-6..2.0).contains(&kappa) {
                    return Err(Error::Config(format!("interarrival_diag needs 1 <= kappa < 2, model has {kappa}")));
                }
            }
            ExperimentKind::ValleyStats => {
                needs_n(3)?;
                self.replicates_required()?;
                self.samples_required()?;
            }
            ExperimentKind::IglehartTail | ExperimentKind::ZTail => {
                self.samples_required()?;
            }
            ExperimentKind::OccupationTail => {
                self.samples_required()?;
                if self.env_mode() != EnvMode::Conditioned {
                    return Err(Error::Config("occupation_tail runs under the conditioned environment".into()));
                }
            }
            ExperimentKind::GoodEnv => {
                self.samples_required()?;
                if self.t_ladder.is_empty() {
                    return Err(Error::Config("good_env needs a nonempty t_ladder".into()));
                }
                let min_t = std::f64::consts::E.powf(std::f64::consts::E);
                if let Some(t) = self.t_ladder.iter().find(|&&t| !(t >= min_t)) {
                    return Err(Error::Config(format!("t = {t} is below e^e")));
                }
                if self.t_ladder.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::Config("t_ladder must be increasing".into()));
                }
                let (lo, hi) = good_alpha_range(kappa);
                let a = self.good_env.alpha.unwrap_or(0.5 * (lo + hi));
                if !(a > lo && a < hi) || !(self.good_env.c > 0.0) {
                    return Err(Error::Config(format!("good_env needs C > 0 and alpha in ({lo}, {hi})")));
                }
            }
            ExperimentKind::QuenchedGate => {
                if self.gate_windows == Some(0) || self.gate_max_len.is_some_and(|l| l < 2) {
                    return Err(Error::Config("gate_windows must be positive and gate_max_len at least 2".into()));
                }
            }
            ExperimentKind::Constants => {}
        }
        Ok(model)
    }

    /// SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> Result<String> {
        let bytes = serde_json::to_vec(self)?;
        let d = Sha256::digest(&bytes);
        Ok(d.iter().map(|b| format!("{b:02x}")).collect())
    }
}

/// Admissible α for the good-environment events: (max(0, 1−κ), min(1, 2−κ)).
pub fn good_alpha_range(kappa: f64) -> (f64, f64) {
    ((1.0 - kappa).max(0.0), (2.0 - kappa).min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    const LIMIT: &str = r#"
kind = "limit_check"
seed = 7
n = [1000]
replicates = 10

[model]
family = "beta"
alpha = 2.8
beta = 1.2
"#;

    #[test]
    fn parses_toml_and_json() {
        let c = ExperimentConfig::parse(LIMIT).unwrap();
        assert_eq!(c.kind, ExperimentKind::LimitCheck);
        assert_eq!(c.env_mode(), EnvMode::Iid);
        c.validate().unwrap();
        let json = serde_json::to_string(&c).unwrap();
        assert_eq!(ExperimentConfig::parse(&json).unwrap(), c);
        assert_eq!(c.digest().unwrap().len(), 64);
    }

    #[test]
    fn validation_errors() {
        let mut c = ExperimentConfig::parse(LIMIT).unwrap();
        c.replicates = Some(0);
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = ExperimentConfig::parse(LIMIT).unwrap();
        c.seed = None;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = ExperimentConfig::new(ExperimentKind::GoodEnv, c.model.clone(), 1);
        c.samples = Some(10);
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        assert!(ExperimentConfig::parse("kind = \"limit_check\"\nbogus = 1").is_err());
    }

    #[test]
    fn digest_tracks_every_field() {
        let a = ExperimentConfig::parse(LIMIT).unwrap();
        let mut b = a.clone();
        b.tolerances.cf_distance = 0.2;
        assert_ne!(a.digest().unwrap(), b.digest().unwrap());
        assert_eq!(a.digest().unwrap(), a.clone().digest().unwrap());
    }
}
