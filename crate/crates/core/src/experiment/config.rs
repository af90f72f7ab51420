//! Flat TOML configuration.
//!
//! ```toml
//! scenario = "ggm_risk"      # kraft_audit | ggm_risk | risk_validity |
//!                            # subset_code_audit | regression_risk | divergence_table
//! p = 2
//! n = 200
//! reps = 200
//! seed = 1
//! precision = [[1.0, 0.0], [0.0, 1.0]]   # ggm scenarios, default identity
//! coefficients = [5.0, 0.0, 0.0]         # subset/regression, default zeros
//! sigma = 1.0                            # regression_risk
//! delta = 0.2                            # subset_code_audit, default 1/sqrt(n)
//! box_radius = 3.0                       # subset_code_audit
//! k_max = 30                             # kraft_audit shells / subset support cap
//! conservative = true                    # ggm scenarios
//! design_seed = 7                        # regression_risk fixed design
//! out_dir = "out"
//! plot = true
//! ```
//!
//! Unknown keys are rejected and every validation problem is reported at once.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::gauss::SymMatrix;
use crate::ggm::{assumption_check, delta_choice};
use crate::regression::{MAX_SEARCH_K, MAX_SEARCH_P};
use crate::subset::MAX_GRID_SUPPORT;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    KraftAudit,
    GgmRisk,
    RiskValidity,
    SubsetCodeAudit,
    RegressionRisk,
    DivergenceTable,
}

impl Scenario {
    pub const ALL: [Scenario; 6] = [
        Scenario::KraftAudit,
        Scenario::GgmRisk,
        Scenario::RiskValidity,
        Scenario::SubsetCodeAudit,
        Scenario::RegressionRisk,
        Scenario::DivergenceTable,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::KraftAudit => "kraft_audit",
            Scenario::GgmRisk => "ggm_risk",
            Scenario::RiskValidity => "risk_validity",
            Scenario::SubsetCodeAudit => "subset_code_audit",
            Scenario::RegressionRisk => "regression_risk",
            Scenario::DivergenceTable => "divergence_table",
        }
    }
}

/// Configuration as written; every field optional so that defaults can
/// depend on the scenario.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub scenario: Option<Scenario>,
    pub p: Option<usize>,
    pub n: Option<usize>,
    pub reps: Option<usize>,
    pub seed: Option<u64>,
    pub precision: Option<Vec<Vec<f64>>>,
    pub coefficients: Option<Vec<f64>>,
    pub sigma: Option<f64>,
    pub delta: Option<f64>,
    pub box_radius: Option<f64>,
    pub k_max: Option<usize>,
    pub conservative: Option<bool>,
    pub design_seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub plot: Option<bool>,
}

impl ConfigFile {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(vec![e.to_string()]))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(vec![format!("cannot read {}: {e}", path.display())]))?;
        Self::from_toml(&text)
    }
}

/// Fully resolved and validated configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub p: usize,
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
    pub precision: Vec<Vec<f64>>,
    pub coefficients: Vec<f64>,
    pub sigma: f64,
    pub delta: f64,
    pub box_radius: f64,
    pub k_max: usize,
    pub conservative: bool,
    pub design_seed: u64,
    pub out_dir: PathBuf,
    pub plot: bool,
}

impl ExperimentConfig {
    /// Fills defaults for `scenario` and validates. `scenario` must agree with
    /// the file's own `scenario` key when both are present.
    pub fn resolve(file: ConfigFile, scenario: Option<Scenario>) -> Result<Self> {
        let mut errors = Vec::new();
        let scenario = match (file.scenario, scenario) {
            (Some(a), Some(b)) if a != b => {
                errors.push(format!("config scenario {} does not match requested {}", a.name(), b.name()));
                a
            }
            (Some(a), _) | (None, Some(a)) => a,
            (None, None) => return Err(Error::Config(vec!["no scenario given".into()])),
        };
        let (dp, dn, dreps, dk) = match scenario {
            Scenario::KraftAudit => (1, 1, 1, 30),
            Scenario::GgmRisk => (2, 200, 200, 0),
            Scenario::RiskValidity => (2, 100, 1000, 0),
            Scenario::SubsetCodeAudit => (3, 20, 500, 3),
            Scenario::RegressionRisk => (3, 30, 300, 3),
            Scenario::DivergenceTable => (1, 1, 100, 0),
        };
        let p = file.p.unwrap_or(dp);
        let n = file.n.unwrap_or(dn);
        let reps = file.reps.unwrap_or(dreps);
        let k_max = file.k_max.unwrap_or(match scenario {
            Scenario::SubsetCodeAudit => p.min(MAX_GRID_SUPPORT),
            Scenario::RegressionRisk => p.min(MAX_SEARCH_K),
            _ => dk,
        });
        let precision = file.precision.clone().unwrap_or_else(|| {
            (0..p).map(|i| (0..p).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
        });
        let coefficients = file.coefficients.clone().unwrap_or_else(|| vec![0.0; p]);
        let delta = file.delta.unwrap_or(if n > 0 { 1.0 / (n as f64).sqrt() } else { 0.0 });
        let config = ExperimentConfig {
            scenario,
            p,
            n,
            reps,
            seed: file.seed.unwrap_or(0),
            precision,
            coefficients,
            sigma: file.sigma.unwrap_or(1.0),
            delta,
            box_radius: file.box_radius.unwrap_or(3.0),
            k_max,
            conservative: file.conservative.unwrap_or(true),
            design_seed: file.design_seed.unwrap_or(0),
            out_dir: file.out_dir.clone().unwrap_or_else(|| PathBuf::from("out")),
            plot: file.plot.unwrap_or(false),
        };
        config.validate(&file, &mut errors);
        if errors.is_empty() {
            Ok(config)
        } else {
            Err(Error::Config(errors))
        }
    }

    fn validate(&self, file: &ConfigFile, errors: &mut Vec<String>) {
        let mut unused = |key: &str, present: bool| {
            if present {
                errors.push(format!("key `{key}` is not used by scenario {}", self.scenario.name()));
            }
        };
        match self.scenario {
            Scenario::KraftAudit => {
                unused("n", file.n.is_some());
                unused("precision", file.precision.is_some());
                unused("coefficients", file.coefficients.is_some());
            }
            Scenario::GgmRisk | Scenario::RiskValidity | Scenario::DivergenceTable => {
                unused("coefficients", file.coefficients.is_some());
                unused("box_radius", file.box_radius.is_some());
            }
            Scenario::SubsetCodeAudit | Scenario::RegressionRisk => {
                unused("precision", file.precision.is_some());
                unused("conservative", file.conservative.is_some());
            }
        }
        if self.p == 0 {
            errors.push("p must be positive".into());
        }
        if self.n == 0 {
            errors.push("n must be positive".into());
        }
        if self.reps == 0 {
            errors.push("reps must be positive".into());
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            errors.push("sigma must be positive and finite".into());
        }
        if !(self.box_radius > 0.0 && self.box_radius.is_finite()) {
            errors.push("box_radius must be positive and finite".into());
        }
        match self.scenario {
            Scenario::KraftAudit => {
                if self.p > 12 {
                    errors.push("kraft_audit supports p ≤ 12".into());
                }
            }
            Scenario::GgmRisk | Scenario::RiskValidity => {
                let limit = if self.scenario == Scenario::RiskValidity { 3 } else { 8 };
                if self.p > limit {
                    errors.push(format!("{} supports p ≤ {limit}", self.scenario.name()));
                }
                self.validate_precision(errors, true);
            }
            Scenario::DivergenceTable => {
                if self.p > 8 {
                    errors.push("divergence_table supports p ≤ 8".into());
                }
            }
            Scenario::SubsetCodeAudit => {
                if self.p > 4 {
                    errors.push("subset_code_audit supports p ≤ 4".into());
                }
                if self.n <= self.p {
                    errors.push(format!("n must exceed p (n = {}, p = {})", self.n, self.p));
                }
                if self.k_max > self.p.min(MAX_GRID_SUPPORT) {
                    errors.push(format!("k_max must be at most {}", self.p.min(MAX_GRID_SUPPORT)));
                }
                if !(self.delta > 0.0 && self.delta.is_finite()) {
                    errors.push("delta must be positive and finite".into());
                }
                self.validate_coefficients(errors);
            }
            Scenario::RegressionRisk => {
                if self.p > MAX_SEARCH_P {
                    errors.push(format!("regression_risk supports p ≤ {MAX_SEARCH_P}"));
                }
                if self.n <= self.p {
                    errors.push(format!("n must exceed p (n = {}, p = {})", self.n, self.p));
                }
                if self.k_max != self.p.min(MAX_SEARCH_K) {
                    errors.push(format!("regression_risk searches k_max = {}", self.p.min(MAX_SEARCH_K)));
                }
                self.validate_coefficients(errors);
            }
        }
    }

    fn validate_coefficients(&self, errors: &mut Vec<String>) {
        if self.coefficients.len() != self.p {
            errors.push(format!("coefficients has length {}, expected p = {}", self.coefficients.len(), self.p));
        }
        if self.coefficients.iter().any(|c| !c.is_finite()) {
            errors.push("coefficients must be finite".into());
        }
    }

    fn validate_precision(&self, errors: &mut Vec<String>, needs_assumption: bool) {
        let theta = match self.precision_matrix() {
            Ok(t) => t,
            Err(e) => {
                errors.push(format!("precision: {e}"));
                return;
            }
        };
        if theta.dim() != self.p {
            errors.push(format!("precision is {}×{}, expected p = {}", theta.dim(), theta.dim(), self.p));
            return;
        }
        if !theta.is_pd() {
            errors.push("precision must be positive definite".into());
        } else if needs_assumption && self.n > 0 {
            let delta = delta_choice(self.p, self.n as f64);
            if !assumption_check(&theta, delta).holds {
                errors.push(format!(
                    "precision ± {delta:.4} (entrywise) leaves the positive definite cone; increase n or the diagonal"
                ));
            }
        }
    }

    pub fn precision_matrix(&self) -> Result<SymMatrix<f64>> {
        SymMatrix::from_rows(&self.precision)
    }

    /// SHA-256 of the canonical JSON form, hex encoded. Output location and
    /// plot switch do not affect the trials and are left out.
    pub fn hash(&self) -> String {
        let keyed = ExperimentConfig { out_dir: PathBuf::new(), plot: false, ..self.clone() };
        let canonical = serde_json::to_vec(&keyed).expect("config serializes");
        hex::encode(Sha256::digest(&canonical))
    }
}
