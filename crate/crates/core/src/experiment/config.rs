//! Experiment configuration, read from TOML.
//!
//! ```toml
//! schema_version = 1
//! model = "mean"
//! p = 100
//! k = 2
//! replicates = 500
//! seed = 7
//! epsilon = 0.1
//! lambda_grid = [20.0, 25.0]
//!
//! [signal]
//! kind = "block"
//!
//! [[tests]]
//! name = "threshold"
//!
//! [output]
//! csv = "phase.csv"
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::detectors::{default_scan_size, ScanStrategy};
use crate::error::{Error, Result};
use crate::priors::prior_block_size_presets;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    Mean,
    Covariance,
}

/// Shape of the alternative; its strength comes from the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SignalConfig {
    /// `k × k` constant block.
    Block,
    /// Least-favorable prior with block size `m` (defaults to the highly
    /// sparse preset).
    LeastFavorable {
        #[serde(default)]
        m: Option<usize>,
    },
    Permutation,
    Zero,
}

fn one() -> f64 {
    1.0
}

fn default_strategy() -> ScanStrategy {
    ScanStrategy::Auto { restarts: 8, iters: 20 }
}

fn default_c_tau() -> f64 {
    crate::detectors::DEFAULT_C_TAU
}

fn default_c_n() -> f64 {
    crate::detectors::DEFAULT_C_N
}

fn default_calibration_reps() -> usize {
    200
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum TestSpec {
    Threshold {
        #[serde(default = "one")]
        cut_factor: f64,
        #[serde(default)]
        label: Option<String>,
    },
    Chi2Scan {
        #[serde(default = "one")]
        c_scan: f64,
        #[serde(default)]
        m: Option<usize>,
        #[serde(default = "default_strategy")]
        strategy: ScanStrategy,
        #[serde(default)]
        label: Option<String>,
    },
    CovThreshold {
        #[serde(default = "default_c_tau")]
        c_tau: f64,
        #[serde(default = "default_c_n")]
        c_n: f64,
        #[serde(default = "one")]
        cut_factor: f64,
        #[serde(default)]
        label: Option<String>,
    },
    CovChi2Scan {
        #[serde(default = "one")]
        c_scan: f64,
        #[serde(default)]
        m: Option<usize>,
        #[serde(default = "default_strategy")]
        strategy: ScanStrategy,
        /// Null replicates used to calibrate the scan threshold; 0 uses the
        /// Gaussian-scale formula.
        #[serde(default = "default_calibration_reps")]
        calibration_reps: usize,
        #[serde(default)]
        label: Option<String>,
    },
}

impl TestSpec {
    pub fn name(&self) -> &'static str {
        match self {
            TestSpec::Threshold { .. } => "threshold",
            TestSpec::Chi2Scan { .. } => "chi2_scan",
            TestSpec::CovThreshold { .. } => "cov_threshold",
            TestSpec::CovChi2Scan { .. } => "cov_chi2_scan",
        }
    }

    pub fn label(&self) -> String {
        let l = match self {
            TestSpec::Threshold { label, .. }
            | TestSpec::Chi2Scan { label, .. }
            | TestSpec::CovThreshold { label, .. }
            | TestSpec::CovChi2Scan { label, .. } => label,
        };
        l.clone().unwrap_or_else(|| self.name().to_string())
    }

    fn model(&self) -> Model {
        match self {
            TestSpec::Threshold { .. } | TestSpec::Chi2Scan { .. } => Model::Mean,
            TestSpec::CovThreshold { .. } | TestSpec::CovChi2Scan { .. } => Model::Covariance,
        }
    }

    /// Scan size for the scan-based tests.
    pub fn scan_size(&self, p: usize, k: usize) -> Option<usize> {
        match self {
            TestSpec::Chi2Scan { c_scan, m, .. } | TestSpec::CovChi2Scan { c_scan, m, .. } => {
                Some(m.unwrap_or_else(|| default_scan_size(p, k, *c_scan)))
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub csv: Option<PathBuf>,
    #[serde(default)]
    pub plot: Option<PathBuf>,
}

fn default_epsilon() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub model: Model,
    pub p: usize,
    pub k: usize,
    #[serde(default)]
    pub n: Option<usize>,
    pub signal: SignalConfig,
    /// Signal strengths as spectral-norm levels `λ`.
    #[serde(default)]
    pub lambda_grid: Option<Vec<f64>>,
    /// Signal strengths as least-favorable amplitudes `t` (`λ = k t`).
    #[serde(default)]
    pub t_grid: Option<Vec<f64>>,
    pub tests: Vec<TestSpec>,
    pub replicates: usize,
    pub seed: u64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default)]
    pub output: OutputConfig,
}

fn field(name: &str, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("field `{name}`: {msg}"))
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    /// The `λ` grid, converting `t_grid` when that is what was given.
    pub fn levels(&self) -> Vec<f64> {
        match (&self.lambda_grid, &self.t_grid) {
            (Some(l), _) => l.clone(),
            (None, Some(t)) => t.iter().map(|t| t * self.k as f64).collect(),
            (None, None) => Vec::new(),
        }
    }

    /// Block size of the least-favorable signal, after applying the preset.
    pub fn prior_block_size(&self) -> Option<usize> {
        match self.signal {
            SignalConfig::LeastFavorable { m } => {
                let dim = self.signal_dim();
                Some(m.unwrap_or_else(|| prior_block_size_presets(dim, self.k, 0.05).0))
            }
            _ => None,
        }
    }

    /// Dimension of the signal matrix: `p`, or `p/2` for a symmetrized
    /// least-favorable covariance perturbation.
    pub fn signal_dim(&self) -> usize {
        match (self.model, &self.signal) {
            (Model::Covariance, SignalConfig::LeastFavorable { .. }) => self.p / 2,
            _ => self.p,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(field(
                "schema_version",
                format!("unsupported version {}, expected {SCHEMA_VERSION}", self.schema_version),
            ));
        }
        if self.p < 2 {
            return Err(field("p", "must be >= 2"));
        }
        if self.k == 0 || self.k > self.p {
            return Err(field("k", format!("must lie in [1, p={}]", self.p)));
        }
        if self.replicates == 0 {
            return Err(field("replicates", "must be >= 1"));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(field("epsilon", "must lie in (0, 1)"));
        }
        match (&self.lambda_grid, &self.t_grid) {
            (Some(_), Some(_)) => return Err(field("lambda_grid", "give either lambda_grid or t_grid, not both")),
            (None, None) => return Err(field("lambda_grid", "one of lambda_grid or t_grid is required")),
            (Some(g), None) | (None, Some(g)) => {
                let name = if self.lambda_grid.is_some() { "lambda_grid" } else { "t_grid" };
                if g.is_empty() {
                    return Err(field(name, "must be nonempty"));
                }
                if g.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                    return Err(field(name, "values must be finite and > 0"));
                }
            }
        }
        if self.t_grid.is_some() && !matches!(self.signal, SignalConfig::LeastFavorable { .. }) {
            return Err(field("t_grid", "only applies to the least_favorable signal"));
        }
        match self.model {
            Model::Mean => {
                if self.n.is_some() {
                    return Err(field("n", "only applies to the covariance model"));
                }
            }
            Model::Covariance => {
                match self.n {
                    Some(n) if n >= 2 => {}
                    _ => return Err(field("n", "covariance model needs n >= 2")),
                }
                match self.signal {
                    SignalConfig::Permutation => {
                        return Err(field("signal.kind", "permutation is not a covariance perturbation"))
                    }
                    SignalConfig::LeastFavorable { .. } => {
                        if self.p % 2 != 0 {
                            return Err(field("p", "least_favorable covariance signal needs even p"));
                        }
                        // A draw has spectral norm at most m·t = m·λ/k; below 1
                        // every Σ = I + symmetrized draw is positive definite.
                        let m = self.prior_block_size().unwrap_or(self.k) as f64;
                        let worst = self.levels().iter().fold(0.0f64, |a, &l| a.max(l * m / self.k as f64));
                        if worst >= 1.0 {
                            let name = if self.t_grid.is_some() { "t_grid" } else { "lambda_grid" };
                            return Err(field(
                                name,
                                format!("least_favorable covariance needs m·lambda/k < 1, got {worst}"),
                            ));
                        }
                    }
                    _ => {}
                }
            }
        }
        if let Some(m) = self.prior_block_size() {
            let dim = self.signal_dim();
            if m < self.k || m > dim {
                return Err(field("signal.m", format!("must lie in [k={}, {dim}]", self.k)));
            }
        }
        if self.tests.is_empty() {
            return Err(field("tests", "at least one test is required"));
        }
        let mut labels = std::collections::BTreeSet::new();
        for (i, t) in self.tests.iter().enumerate() {
            let name = format!("tests[{i}]");
            if t.model() != self.model {
                return Err(field(&name, format!("test `{}` does not apply to this model", t.name())));
            }
            if !labels.insert(t.label()) {
                return Err(field(&name, format!("duplicate test label `{}`", t.label())));
            }
            match t {
                TestSpec::Threshold { cut_factor, .. } if !(*cut_factor > 0.0) => {
                    return Err(field(&format!("{name}.cut_factor"), "must be > 0"));
                }
                TestSpec::CovThreshold { c_tau, cut_factor, .. } if !(*c_tau > 0.0 && *cut_factor > 0.0) => {
                    return Err(field(&name, "c_tau and cut_factor must be > 0"));
                }
                TestSpec::Chi2Scan { strategy, .. } | TestSpec::CovChi2Scan { strategy, .. } => {
                    if self.epsilon >= 0.5 {
                        return Err(field("epsilon", "scan tests need epsilon < 1/2"));
                    }
                    let m = t.scan_size(self.p, self.k).unwrap_or(0);
                    if m == 0 || m > self.p {
                        return Err(field(&format!("{name}.m"), format!("must lie in [1, {}]", self.p)));
                    }
                    if let ScanStrategy::RandomRestarts { restarts: 0, .. } | ScanStrategy::Auto { restarts: 0, .. } =
                        strategy
                    {
                        return Err(field(&format!("{name}.strategy"), "restarts must be >= 1"));
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }
}
