//! Strong solutions of the truncated equation on a space-time grid.
//!
//! [`mild`] iterates the mild (heat-kernel) formulation to a fixed point;
//! [`galerkin`] projects onto the first `m` Dirichlet sine modes and integrates
//! the resulting jump-driven system exactly in its linear part. Both read the
//! same [`NoiseRealization`], so their outputs can be compared path by path.

pub mod galerkin;
pub mod mild;
pub mod weak;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::coefficients::{validate_hypothesis, AuditConfig, CoefficientSpec, InitialCondition};
use crate::error::{Error, Result};
use crate::noise::{NoiseRealization, SpaceTimeDomain, StableParams, TruncationSpec};

pub use galerkin::{
    project_grid_row, project_noise, solve_galerkin, spectral_to_grid, ProjectedPath, SpectralSolution,
};
pub use mild::{solve_mild, MildOptions, MildSolver, WindowStats};
pub use weak::{weak_form_residual, TestFunction};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub n_t: usize,
    pub n_x: usize,
}

impl GridSpec {
    pub fn new(n_t: usize, n_x: usize) -> Result<Self> {
        let g = GridSpec { n_t, n_x };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_t < 2 || self.n_x < 2 {
            return Err(Error::param(format!(
                "grid needs n_t >= 2 and n_x >= 2, got {}x{}",
                self.n_t, self.n_x
            )));
        }
        Ok(())
    }

    pub fn dt(&self, dom: &SpaceTimeDomain) -> f64 {
        dom.horizon / self.n_t as f64
    }

    pub fn dx(&self, dom: &SpaceTimeDomain) -> f64 {
        dom.length / self.n_x as f64
    }

    pub fn times(&self, dom: &SpaceTimeDomain) -> Vec<f64> {
        let dt = self.dt(dom);
        (0..=self.n_t).map(|i| i as f64 * dt).collect()
    }

    pub fn nodes(&self, dom: &SpaceTimeDomain) -> Vec<f64> {
        let dx = self.dx(dom);
        (0..=self.n_x).map(|k| k as f64 * dx).collect()
    }
}

/// One full instance of the truncated equation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub params: StableParams,
    pub truncation: TruncationSpec,
    pub domain: SpaceTimeDomain,
    pub drift: CoefficientSpec,
    pub noise_coef: CoefficientSpec,
    pub init: InitialCondition,
}

impl ProblemSpec {
    /// Parameter checks plus the Lipschitz/growth audit of both coefficients;
    /// the noise coefficient is also audited for monotonicity on request.
    pub fn validate(&self, require_monotone: bool) -> Result<()> {
        self.params.validate()?;
        self.truncation.validate()?;
        self.domain.validate()?;
        self.init.validate(self.domain.length)?;
        let cfg = AuditConfig {
            horizon: self.domain.horizon,
            length: self.domain.length,
            ..AuditConfig::default()
        };
        validate_hypothesis(&self.drift, false, &cfg)?;
        validate_hypothesis(&self.noise_coef, require_monotone, &cfg)?;
        Ok(())
    }

    pub fn with_cutoff(&self, big_cutoff: f64) -> Self {
        let mut p = self.clone();
        p.truncation.big_cutoff = big_cutoff;
        p
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("problem serializes");
        hex::encode(Sha256::digest(&json))
    }

    pub(crate) fn check_noise(&self, noise: &NoiseRealization) -> Result<()> {
        if noise.params != self.params || noise.domain != self.domain || noise.truncation != self.truncation {
            return Err(Error::Precondition {
                hypothesis: "noise sampled under the problem's parameters",
                detail: format!(
                    "noise (params {:?}, cutoffs {}..{}, domain {:?}) does not match problem (params {:?}, cutoffs {}..{}, domain {:?})",
                    noise.params,
                    noise.truncation.small_cutoff,
                    noise.truncation.big_cutoff,
                    noise.domain,
                    self.params,
                    self.truncation.small_cutoff,
                    self.truncation.big_cutoff,
                    self.domain
                ),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverTag {
    Mild,
    Galerkin { modes: usize },
}

/// Solution values `u(t_i, x_k)` on the grid, row-major in time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSolution {
    pub values: Vec<f64>,
    pub problem: ProblemSpec,
    pub grid: GridSpec,
    pub solver: SolverTag,
    pub seed: u64,
    /// Per-window Picard statistics (mild solver only).
    pub windows: Vec<WindowStats>,
    /// `u(tau-, x)` at each noise impulse, in `NoiseRealization::impulses`
    /// order (mild solver only).
    pub impulse_states: Vec<f64>,
}

impl GridSolution {
    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.grid.n_x + 1;
        &self.values[i * w..(i + 1) * w]
    }

    pub fn at(&self, i: usize, k: usize) -> f64 {
        self.values[i * (self.grid.n_x + 1) + k]
    }

    pub fn times(&self) -> Vec<f64> {
        self.grid.times(&self.problem.domain)
    }

    pub fn nodes(&self) -> Vec<f64> {
        self.grid.nodes(&self.problem.domain)
    }

    pub fn picard_iterations(&self) -> Vec<usize> {
        self.windows.iter().map(|w| w.iterations).collect()
    }

    /// Rows are times, columns are grid nodes; first column is `t`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t");
        for x in self.nodes() {
            let _ = write!(out, ",{x:.16e}");
        }
        out.push('\n');
        for (i, t) in self.times().into_iter().enumerate() {
            let _ = write!(out, "{t:.16e}");
            for v in self.row(i) {
                let _ = write!(out, ",{v:.16e}");
            }
            out.push('\n');
        }
        out
    }

    pub fn metadata(&self) -> SolutionMetadata {
        SolutionMetadata {
            problem_hash: self.problem.hash(),
            seed: self.seed,
            grid: self.grid,
            solver: self.solver,
            picard_iterations: self.picard_iterations(),
            max_contraction_ratio: self.windows.iter().map(|w| w.ratio).fold(0.0, f64::max),
            impulses: self.impulse_states.len(),
        }
    }

    /// `int |u(t_i, x)|^p dx` by the trapezoid rule on the nodes.
    pub fn lp_norm_pow(&self, i: usize, p: f64) -> f64 {
        let dx = self.grid.dx(&self.problem.domain);
        let row = self.row(i);
        let inner: f64 = row[1..row.len() - 1].iter().map(|v| v.abs().powf(p)).sum();
        (inner + 0.5 * (row[0].abs().powf(p) + row[row.len() - 1].abs().powf(p))) * dx
    }

    /// `max_i sup_k |self - other|` over rows `0..rows`.
    pub fn sup_distance(&self, other: &GridSolution, rows: usize) -> f64 {
        let w = self.grid.n_x + 1;
        self.values[..rows * w]
            .iter()
            .zip(&other.values[..rows * w])
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// JSON sidecar written next to a solution CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionMetadata {
    pub problem_hash: String,
    pub seed: u64,
    pub grid: GridSpec,
    pub solver: SolverTag,
    pub picard_iterations: Vec<usize>,
    pub max_contraction_ratio: f64,
    pub impulses: usize,
}

/// `H`-norm of the difference of two rows, trapezoid rule.
pub(crate) fn l2_row_distance(a: &[f64], b: &[f64], dx: f64) -> f64 {
    let n = a.len();
    let mut acc = 0.0;
    for k in 0..n {
        let d = a[k] - b[k];
        let w = if k == 0 || k == n - 1 { 0.5 } else { 1.0 };
        acc += w * d * d;
    }
    (acc * dx).sqrt()
}
