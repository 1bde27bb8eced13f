//! Versioned TOML run configuration.
//!
//! Every section maps onto a validated library type. Unknown keys are
//! rejected, and the resolved configuration (defaults filled in, seed
//! override applied) is echoed next to every output.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use levyheat::coefficients::{CoefficientFamily, CoefficientSpec, InitialCondition};
use levyheat::noise::{SpaceTimeDomain, StableParams, TruncationSpec};
use levyheat::solvers::{GridSpec, MildOptions, ProblemSpec};
use serde::{Deserialize, Serialize};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    pub params: StableParams,
    pub truncation: TruncationSpec,
    pub domain: SpaceTimeDomain,
    pub grid: GridSpec,
    #[serde(default = "zero_family")]
    pub drift: CoefficientFamily,
    #[serde(default = "zero_family")]
    pub noise_coef: CoefficientFamily,
    #[serde(default = "zero_init")]
    pub init: InitialCondition,
    #[serde(default)]
    pub solve: SolveConfig,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub experiments: Vec<ExperimentConfig>,
}

fn zero_family() -> CoefficientFamily {
    CoefficientFamily::Zero
}

fn zero_init() -> InitialCondition {
    InitialCondition::Zero
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverChoice {
    Mild,
    Galerkin,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveConfig {
    #[serde(default = "default_solver")]
    pub solver: SolverChoice,
    #[serde(default = "default_modes")]
    pub modes: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_window_steps")]
    pub window_steps: usize,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            solver: default_solver(),
            modes: default_modes(),
            tol: default_tol(),
            max_iter: default_max_iter(),
            window_steps: default_window_steps(),
        }
    }
}

fn default_solver() -> SolverChoice {
    SolverChoice::Mild
}
fn default_modes() -> usize {
    32
}
fn default_tol() -> f64 {
    MildOptions::default().tol
}
fn default_max_iter() -> usize {
    MildOptions::default().max_iter
}
fn default_window_steps() -> usize {
    MildOptions::default().window_steps
}
fn default_paths() -> usize {
    200
}
fn default_p() -> f64 {
    2.0
}

/// Overrides applied to the base problem for one side of a comparison.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemOverride {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift: Option<CoefficientFamily>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<InitialCondition>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ExperimentConfig {
    StoppingLaw {
        cutoff: f64,
        #[serde(default = "default_paths")]
        n_paths: usize,
    },
    JumpMoment {
        #[serde(default = "default_p")]
        p: f64,
        #[serde(default = "default_paths")]
        n_paths: usize,
    },
    KernelSuite {
        #[serde(default = "default_kernel_samples")]
        n_samples: usize,
        #[serde(default = "default_kernel_quad")]
        n_quad: usize,
    },
    DeterministicOracle {
        #[serde(default = "default_oracle_modes")]
        modes: usize,
        #[serde(default = "default_oracle_tol")]
        tol: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        grid: Option<GridSpec>,
    },
    Consistency {
        k_small: f64,
        k_large: f64,
        #[serde(default = "default_paths")]
        n_paths: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        grid: Option<GridSpec>,
    },
    GalerkinConvergence {
        modes: Vec<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        grid: Option<GridSpec>,
    },
    Comparison {
        #[serde(default = "default_paths")]
        n_paths: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tolerance: Option<f64>,
        #[serde(default)]
        lower: ProblemOverride,
        #[serde(default)]
        upper: ProblemOverride,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        grid: Option<GridSpec>,
    },
    Nonnegativity {
        #[serde(default = "default_paths")]
        n_paths: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tolerance: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        init: Option<InitialCondition>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        grid: Option<GridSpec>,
    },
    Moment {
        #[serde(default = "default_p")]
        p: f64,
        #[serde(default = "default_paths")]
        n_paths: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        grid: Option<GridSpec>,
    },
}

fn default_kernel_samples() -> usize {
    1000
}
fn default_kernel_quad() -> usize {
    2000
}
fn default_oracle_modes() -> usize {
    64
}
fn default_oracle_tol() -> f64 {
    1e-4
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in config {}", path.display()))
    }

    pub fn parse(text: &str) -> anyhow::Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(ConfigError::from)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Structural checks; coefficient audits run where the problem is used.
    pub fn validate(&self) -> anyhow::Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(ConfigError(format!(
                "unsupported config version {} (expected {CONFIG_VERSION})",
                self.version
            ))
            .into());
        }
        self.params.validate()?;
        self.truncation.validate()?;
        self.domain.validate()?;
        self.grid.validate()?;
        self.init.validate(self.domain.length)?;
        if self.solve.modes == 0 {
            return Err(ConfigError("solve.modes must be at least 1".into()).into());
        }
        Ok(())
    }

    pub fn problem(&self) -> ProblemSpec {
        ProblemSpec {
            params: self.params,
            truncation: self.truncation,
            domain: self.domain,
            drift: CoefficientSpec::new(self.drift.clone()),
            noise_coef: CoefficientSpec::new(self.noise_coef.clone()),
            init: self.init.clone(),
        }
    }

    pub fn with_override(&self, o: &ProblemOverride) -> ProblemSpec {
        let mut p = self.problem();
        if let Some(d) = &o.drift {
            p.drift = CoefficientSpec::new(d.clone());
        }
        if let Some(i) = &o.init {
            p.init = i.clone();
        }
        p
    }

    pub fn mild_options(&self) -> MildOptions {
        MildOptions {
            tol: self.solve.tol,
            max_iter: self.solve.max_iter,
            window_steps: self.solve.window_steps,
            ..MildOptions::default()
        }
    }

    pub fn to_toml(&self) -> anyhow::Result<String> {
        Ok(toml::to_string(self)?)
    }
}

/// Malformed or inconsistent configuration; maps to the validation exit code.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

impl From<toml::de::Error> for ConfigError {
    fn from(e: toml::de::Error) -> Self {
        ConfigError(e.to_string())
    }
}

pub fn ensure_experiments(cfg: &RunConfig) -> anyhow::Result<()> {
    if cfg.experiments.is_empty() {
        bail!(ConfigError("verify needs at least one [[experiments]] entry".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
version = 1
seed = 7

[params]
alpha = 1.5
c_plus = 0.5
c_minus = 0.5

[truncation]
small_cutoff = 0.05
big_cutoff = 1.0

[domain]
horizon = 1.0
length = 1.0

[grid]
n_t = 16
n_x = 8
"#;

    #[test]
    fn minimal_config_resolves_defaults() {
        let cfg = RunConfig::parse(MINIMAL).unwrap();
        assert_eq!(cfg.drift, CoefficientFamily::Zero);
        assert_eq!(cfg.solve.solver, SolverChoice::Mild);
        assert_eq!(cfg.solve.tol, MildOptions::default().tol);
        assert!(cfg.experiments.is_empty());
    }

    #[test]
    fn effective_config_round_trips() {
        let text = format!(
            "{MINIMAL}\n[drift]\nfamily = \"sine_modulated\"\namplitude = 0.5\nfrequency = 2.0\n\n\
             [[experiments]]\nkind = \"comparison\"\nlower = {{ drift = {{ family = \"shifted\", delta = -0.5, base = {{ family = \"zero\" }} }} }}\n\n\
             [[experiments]]\nkind = \"moment\"\ngrid = {{ n_t = 8, n_x = 8 }}\n"
        );
        let cfg = RunConfig::parse(&text).unwrap();
        let echoed = cfg.to_toml().unwrap();
        assert_eq!(RunConfig::parse(&echoed).unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_and_missing_version_are_rejected() {
        assert!(RunConfig::parse(&format!("{MINIMAL}\nextra = 1\n")).is_err());
        assert!(RunConfig::parse(&MINIMAL.replace("version = 1", "")).is_err());
        assert!(RunConfig::parse(&MINIMAL.replace("version = 1", "version = 9")).is_err());
        let bad_family = format!("{MINIMAL}\n[drift]\nfamily = \"cubic\"\n");
        assert!(RunConfig::parse(&bad_family).is_err());
    }

    #[test]
    fn inverted_truncation_is_a_validation_error() {
        let text = MINIMAL.replace("small_cutoff = 0.05", "small_cutoff = 2.0");
        let err = RunConfig::parse(&text).unwrap_err();
        assert!(err.downcast_ref::<levyheat::Error>().is_some(), "{err:#}");
    }

    #[test]
    fn shipped_configs_parse() {
        for text in [
            include_str!("../../../configs/laws.toml"),
            include_str!("../../../configs/positivity.toml"),
        ] {
            let cfg = RunConfig::parse(text).unwrap();
            assert!(!cfg.experiments.is_empty());
        }
    }
}
