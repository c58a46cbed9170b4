//! Experiment configuration files (TOML).

use std::path::Path;
use std::sync::Arc;

use angelesco::ensemble::{BaseMeasure, EnsembleSpec, IntegrationMode, QuadratureRule};
use angelesco::field::{ExternalField, FieldComponent};
use angelesco::measure::Discretization;
use angelesco::system::{IntervalSystem, MultiIndexSequence};
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub intervals: Vec<[f64; 2]>,
    pub masses: Vec<f64>,
    /// One per interval; all zero when omitted.
    #[serde(default)]
    pub fields: Vec<FieldSpec>,
    /// One per interval; all Lebesgue when omitted.
    #[serde(default)]
    pub bases: Vec<BaseSpec>,
    pub sequence: SequenceSpec,
    #[serde(default = "default_grid")]
    pub grid: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub eqm: EqmParams,
    #[serde(default)]
    pub fekete: FeketeParams,
    #[serde(default)]
    pub sample: SampleParams,
    #[serde(default)]
    pub mop: MopParams,
    #[serde(default)]
    pub zconst: ZconstParams,
    #[serde(default)]
    pub ldp: LdpParams,
    #[serde(default)]
    pub bm: BmParams,
    #[serde(default)]
    pub verify: VerifyParams,
}

fn default_grid() -> usize {
    400
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldSpec {
    Zero,
    Constant { value: f64 },
    Quadratic { center: f64, scale: f64 },
    Samples { xs: Vec<f64>, ys: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BaseSpec {
    Lebesgue,
    Samples {
        xs: Vec<f64>,
        ys: Vec<f64>,
    },
    /// `((x - a)/(b - a))^k`.
    Power {
        k: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum SequenceSpec {
    /// `n(d) = step * d`, split in proportion to the masses.
    Proportional {
        step: usize,
    },
    Explicit {
        indices: Vec<Vec<usize>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EqmParams {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for EqmParams {
    fn default() -> Self {
        Self {
            tol: angelesco::equilibrium::DEFAULT_TOL,
            max_iter: angelesco::equilibrium::DEFAULT_MAX_ITER,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeketeParams {
    pub d_max: usize,
    pub n_starts: usize,
    pub tol: f64,
}

impl Default for FeketeParams {
    fn default() -> Self {
        Self {
            d_max: 4,
            n_starts: 4,
            tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleParams {
    pub d: usize,
    pub n_samples: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub chains: usize,
}

impl Default for SampleParams {
    fn default() -> Self {
        Self {
            d: 1,
            n_samples: 100,
            burn_in: angelesco::ensemble::DEFAULT_BURN_IN,
            thin: angelesco::ensemble::DEFAULT_THIN,
            chains: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MopParams {
    pub d: usize,
    pub z_points: Vec<f64>,
    /// Monte Carlo sample count used when the quadrature limit is exceeded.
    pub mc_samples: usize,
}

impl Default for MopParams {
    fn default() -> Self {
        Self {
            d: 1,
            z_points: vec![-1.5, 0.0, 1.5],
            mc_samples: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ZconstParams {
    pub d_list: Vec<usize>,
    pub rule: QuadratureRule,
    pub epsilon: f64,
}

impl Default for ZconstParams {
    fn default() -> Self {
        Self {
            d_list: vec![1, 2],
            rule: QuadratureRule::default(),
            epsilon: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LdpParams {
    pub n_list: Vec<usize>,
    pub q_shift_trials: usize,
}

impl Default for LdpParams {
    fn default() -> Self {
        Self {
            n_list: vec![50, 100, 200],
            q_shift_trials: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BmParams {
    pub degrees: Vec<usize>,
    /// Multiply by `e^{-2nQ}` at degree `n`.
    pub weighted: bool,
}

impl Default for BmParams {
    fn default() -> Self {
        Self {
            degrees: vec![4, 8, 16],
            weighted: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyParams {
    /// Empty means all.
    pub criteria: Vec<usize>,
}

/// A configuration that failed to load or validate.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

impl From<angelesco::Error> for ConfigError {
    fn from(e: angelesco::Error) -> Self {
        ConfigError(format!("{}: {e}", e.name()))
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ConfigError(e.to_string()))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(ConfigError(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Canonical TOML text; the config hash is taken over this.
    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.spec()?;
        if self.grid < 2 {
            return Err(ConfigError(format!("grid {} is too coarse", self.grid)));
        }
        Ok(())
    }

    pub fn system(&self) -> Result<IntervalSystem, ConfigError> {
        Ok(IntervalSystem::new(
            self.intervals.iter().map(|iv| (iv[0], iv[1])).collect(),
            self.masses.clone(),
        )?)
    }

    pub fn field(&self) -> Result<ExternalField, ConfigError> {
        let p = self.intervals.len();
        if self.fields.is_empty() {
            return Ok(ExternalField::zero(p));
        }
        if self.fields.len() != p {
            return Err(ConfigError(format!(
                "{} fields for {p} intervals",
                self.fields.len()
            )));
        }
        let comps = self
            .fields
            .iter()
            .map(|f| {
                Ok(match f {
                    FieldSpec::Zero => FieldComponent::Zero,
                    FieldSpec::Constant { value } => FieldComponent::Constant(*value),
                    FieldSpec::Quadratic { center, scale } => FieldComponent::Quadratic {
                        center: *center,
                        scale: *scale,
                    },
                    FieldSpec::Samples { xs, ys } => {
                        FieldComponent::samples(xs.clone(), ys.clone())?
                    }
                })
            })
            .collect::<Result<Vec<_>, ConfigError>>()?;
        Ok(ExternalField::new(comps))
    }

    pub fn sequence(&self) -> MultiIndexSequence {
        match &self.sequence {
            SequenceSpec::Proportional { step } => {
                MultiIndexSequence::proportional(&self.masses, *step)
            }
            SequenceSpec::Explicit { indices } => MultiIndexSequence::explicit(indices.clone()),
        }
    }

    pub fn spec(&self) -> Result<EnsembleSpec, ConfigError> {
        let sys = self.system()?;
        let p = sys.p();
        if !self.bases.is_empty() && self.bases.len() != p {
            return Err(ConfigError(format!(
                "{} base measures for {p} intervals",
                self.bases.len()
            )));
        }
        let disc = Discretization::new(&sys, self.grid)?;
        let tau = (0..p)
            .map(|i| {
                let g = Arc::clone(disc.grid(i));
                Ok(match self.bases.get(i).unwrap_or(&BaseSpec::Lebesgue) {
                    BaseSpec::Lebesgue => BaseMeasure::lebesgue(g),
                    BaseSpec::Samples { xs, ys } => BaseMeasure::samples(g, xs, ys)?,
                    BaseSpec::Power { k } => BaseMeasure::power(g, *k)?,
                })
            })
            .collect::<Result<Vec<_>, ConfigError>>()?;
        Ok(EnsembleSpec::new(sys, self.field()?, tau, self.sequence())?)
    }

    /// Quadrature when the dimension allows it, Monte Carlo otherwise.
    pub fn mop_mode(&self, n: usize) -> IntegrationMode {
        if n <= angelesco::ensemble::MAX_QUADRATURE_N {
            IntegrationMode::Quadrature {
                rule: self.zconst.rule,
            }
        } else {
            IntegrationMode::MonteCarlo {
                samples: self.mop.mc_samples,
                seed: self.seed,
            }
        }
    }
}
