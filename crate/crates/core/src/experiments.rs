//! Seeded Monte Carlo checks of the qualitative properties of the equation.
//!
//! Every experiment derives one seed per path from a master seed with
//! [`path_seed`], runs the paths in parallel and reduces them in path order,
//! so a report depends only on its inputs and the master seed, never on the
//! number of worker threads. Wall-clock time is kept out of the serialized
//! report for the same reason.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::coefficients::{dominates, AuditConfig, CoefficientSpec, InitialCondition};
use crate::error::{Error, Result};
use crate::kernel::{KernelEvaluator, KernelMethod};
use crate::noise::{sample_noise, survival_probability, window_moment, SpaceTimeDomain, StableParams, TruncationSpec};
use crate::seed::{path_seed, rng_from_seed, DERIVATION};
use crate::solvers::{
    l2_row_distance, solve_galerkin, spectral_to_grid, GridSolution, GridSpec, MildOptions, MildSolver, ProblemSpec,
};

/// Relative tolerance of the cross-cutoff consistency check.
pub const CONSISTENCY_RTOL: f64 = 1e-12;
/// Factor between the deterministic grid error and the comparison tolerance.
pub const CALIBRATION_FACTOR: f64 = 10.0;
/// Accepted band for the moment ratio under doubling of the path count.
pub const MOMENT_RATIO_BAND: (f64, f64) = (0.8, 1.25);
/// Slack allowed between successive Galerkin errors.
pub const GALERKIN_SLACK: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Value(f64),
    Predicate(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedRule {
    pub master: u64,
    pub derivation: String,
}

/// Per-path statistics; `values` line up with the report's `columns`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathStat {
    pub index: usize,
    pub seed: u64,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub name: String,
    pub inputs_hash: String,
    pub n_paths: usize,
    pub estimates: BTreeMap<String, f64>,
    pub confidence_interval: Option<[f64; 2]>,
    pub target: Target,
    pub pass: bool,
    pub seeds: SeedRule,
    pub flags: Vec<String>,
    pub columns: Vec<String>,
    pub per_path: Vec<PathStat>,
    /// Wall-clock time; not serialized so that reports stay reproducible.
    #[serde(skip)]
    pub runtime_seconds: f64,
}

impl ExperimentReport {
    fn new(name: &str, inputs: &serde_json::Value, master: u64) -> Self {
        let bytes = serde_json::to_vec(inputs).expect("inputs serialize");
        ExperimentReport {
            name: name.to_string(),
            inputs_hash: hex::encode(Sha256::digest(&bytes)),
            n_paths: 0,
            estimates: BTreeMap::new(),
            confidence_interval: None,
            target: Target::Predicate(String::new()),
            pass: false,
            seeds: SeedRule {
                master,
                derivation: DERIVATION.to_string(),
            },
            flags: Vec::new(),
            columns: Vec::new(),
            per_path: Vec::new(),
            runtime_seconds: 0.0,
        }
    }

    fn estimate(&mut self, key: &str, value: f64) {
        self.estimates.insert(key.to_string(), value);
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// `index,seed,<columns>` with one row per path.
    pub fn per_path_csv(&self) -> String {
        let mut out = String::from("index,seed");
        for c in &self.columns {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        for p in &self.per_path {
            let _ = write!(out, "{},{}", p.index, p.seed);
            for v in &p.values {
                let _ = write!(out, ",{v:.16e}");
            }
            out.push('\n');
        }
        out
    }
}

/// `int (w+)^2 dx` over a grid row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PositivePartEnergy {
    pub value: f64,
}

/// Midpoint rule on the node-centred cells of an equispaced grid (the end
/// nodes own half cells), applied to `(w+)^2`.
pub fn positive_part_energy(w: &[f64], dx: f64) -> PositivePartEnergy {
    let n = w.len();
    let mut acc = 0.0;
    for (k, v) in w.iter().enumerate() {
        let p = v.max(0.0);
        let weight = if k == 0 || k == n - 1 { 0.5 } else { 1.0 };
        acc += weight * p * p;
    }
    PositivePartEnergy { value: acc * dx }
}

fn require_paths(n_paths: usize) -> Result<()> {
    if n_paths == 0 {
        return Err(Error::param("experiment needs at least one path"));
    }
    Ok(())
}

/// Runs `f(index, seed)` for every path in parallel and returns the results
/// in path order. The first failing path (by index) is reported.
fn map_paths<T, F>(n_paths: usize, master: u64, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, u64) -> Result<T> + Sync,
{
    let results: Vec<Result<T>> = (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let seed = path_seed(master, i as u64);
            f(i, seed).map_err(|e| Error::Path {
                index: i,
                seed,
                source: Box::new(e),
            })
        })
        .collect();
    results.into_iter().collect()
}

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Sampling window used for the stopping-law experiment at cutoff `k`:
/// jumps below `k / 2` cannot trigger the stopping time and jumps above
/// `1e4 k` are left out, which changes the survival probability by at most
/// `T L (1e4 k)^{-alpha} / alpha`.
pub fn stopping_law_truncation(k: f64) -> Result<TruncationSpec> {
    TruncationSpec::new(0.5 * k, 1e4 * k)
}

/// Empirical `P[R_K > T]` against `exp(-T L K^{-alpha} / alpha)`.
pub fn run_stopping_law(
    params: &StableParams,
    k: f64,
    dom: &SpaceTimeDomain,
    n_paths: usize,
    seed: u64,
) -> Result<ExperimentReport> {
    run_stopping_law_with(params, k, &stopping_law_truncation(k)?, dom, n_paths, seed)
}

pub fn run_stopping_law_with(
    params: &StableParams,
    k: f64,
    trunc: &TruncationSpec,
    dom: &SpaceTimeDomain,
    n_paths: usize,
    seed: u64,
) -> Result<ExperimentReport> {
    let clock = Instant::now();
    require_paths(n_paths)?;
    params.validate()?;
    trunc.validate()?;
    dom.validate()?;
    if !(k < trunc.big_cutoff) {
        return Err(Error::Unobservable {
            requested: k,
            sampled: trunc.big_cutoff,
        });
    }
    let target = survival_probability(params, k, dom)?;
    let times = map_paths(n_paths, seed, |_, s| {
        sample_noise(params, trunc, dom, s)?.stopping_time(k)
    })?;

    let inputs = json!({ "params": params, "cutoff": k, "truncation": trunc, "domain": dom, "n_paths": n_paths });
    let mut r = ExperimentReport::new("stopping_law", &inputs, seed);
    let survived = times.iter().filter(|&&t| t > dom.horizon).count();
    let n = n_paths as f64;
    let p = survived as f64 / n;
    let half = 3.0 * (p * (1.0 - p) / n).sqrt();
    r.n_paths = n_paths;
    r.estimate("survival_frequency", p);
    r.estimate("survived", survived as f64);
    r.estimate("target", target);
    r.estimate(
        "sampling_bias_bound",
        dom.area() * trunc.big_cutoff.powf(-params.alpha) / params.alpha,
    );
    r.confidence_interval = Some([p - half, p + half]);
    r.target = Target::Value(target);
    r.pass = (p - target).abs() <= half;
    r.columns = vec!["stopping_time".into()];
    r.per_path = times
        .iter()
        .enumerate()
        .map(|(i, &t)| PathStat {
            index: i,
            seed: path_seed(seed, i as u64),
            values: vec![t],
        })
        .collect();
    r.runtime_seconds = clock.elapsed().as_secs_f64();
    Ok(r)
}

/// Mean of `sum_j |z_j|^p / (T L)` against `int_{eps<|z|<=K} |z|^p nu(dz)`.
pub fn run_jump_moment(
    params: &StableParams,
    trunc: &TruncationSpec,
    dom: &SpaceTimeDomain,
    p: f64,
    n_paths: usize,
    seed: u64,
) -> Result<ExperimentReport> {
    let clock = Instant::now();
    require_paths(n_paths)?;
    let target = window_moment(params, trunc, p)?;
    let sums = map_paths(n_paths, seed, |_, s| {
        let noise = sample_noise(params, trunc, dom, s)?;
        Ok(noise.jumps.iter().map(|j| j.z.abs().powf(p)).sum::<f64>() / dom.area())
    })?;
    let (mean, se) = mean_and_se(&sums);

    let inputs = json!({ "params": params, "truncation": trunc, "domain": dom, "p": p, "n_paths": n_paths });
    let mut r = ExperimentReport::new("jump_moment", &inputs, seed);
    r.n_paths = n_paths;
    r.estimate("mean", mean);
    r.estimate("standard_error", se);
    r.estimate("target", target);
    r.confidence_interval = Some([mean - 3.0 * se, mean + 3.0 * se]);
    r.target = Target::Value(target);
    r.pass = (mean - target).abs() <= 3.0 * se;
    r.columns = vec!["moment_per_area".into()];
    r.per_path = sums
        .iter()
        .enumerate()
        .map(|(i, &v)| PathStat {
            index: i,
            seed: path_seed(seed, i as u64),
            values: vec![v],
        })
        .collect();
    r.runtime_seconds = clock.elapsed().as_secs_f64();
    Ok(r)
}

/// Semigroup residual accepted by the kernel suite.
pub const SEMIGROUP_TOL: f64 = 1e-8;

/// Randomized sweep of symmetry, cross-representation agreement, the
/// semigroup identity, mass and positivity.
pub fn run_kernel_suite(ke: &KernelEvaluator, n_samples: usize, n_quad: usize, seed: u64) -> Result<ExperimentReport> {
    let clock = Instant::now();
    require_paths(n_samples)?;
    ke.validate()?;
    let l = ke.length;
    let l2 = l * l;
    let log_uniform =
        |rng: &mut rand_chacha::ChaCha8Rng, lo: f64, hi: f64| (lo.ln() + rng.random::<f64>() * (hi / lo).ln()).exp();
    let mut rng = rng_from_seed(seed);
    let samples: Vec<[f64; 6]> = (0..n_samples)
        .map(|_| {
            [
                log_uniform(&mut rng, 1e-3 * l2, l2),
                l * rng.random::<f64>(),
                l * rng.random::<f64>(),
                log_uniform(&mut rng, 1e-3 * l2, 0.5 * l2),
                log_uniform(&mut rng, 1e-3 * l2, 0.5 * l2),
                l * rng.random::<f64>(),
            ]
        })
        .collect();
    let spectral = (*ke).with_method(KernelMethod::Spectral);
    let rows: Vec<Result<[f64; 5]>> = samples
        .par_iter()
        .map(|&[t, x, y, s, t2, z]| {
            let sym = (spectral.eval(t, x, y)? - spectral.eval(t, y, x)?).abs();
            let a = ke.eval_with(KernelMethod::ImageSum, t, x, y)?;
            let b = ke.eval_with(KernelMethod::Spectral, t, x, y)?;
            let semi = ke.check_semigroup(s, t2, x, z, n_quad)?;
            let mass = ke.convolve(t, |_| 1.0, n_quad)?.at(x)?;
            Ok([sym, (a - b).abs(), semi, mass, a.min(b)])
        })
        .collect();
    let rows: Vec<[f64; 5]> = rows.into_iter().collect::<Result<_>>()?;
    let col_max = |c: usize| rows.iter().map(|r| r[c]).fold(f64::NEG_INFINITY, f64::max);
    let (sym, agree, semi, mass) = (col_max(0), col_max(1), col_max(2), col_max(3));
    let min_value = rows.iter().map(|r| r[4]).fold(f64::INFINITY, f64::min);
    let min_mass = rows.iter().map(|r| r[3]).fold(f64::INFINITY, f64::min);

    let inputs = json!({ "kernel": ke, "n_samples": n_samples, "n_quad": n_quad });
    let mut r = ExperimentReport::new("kernel_suite", &inputs, seed);
    r.n_paths = n_samples;
    r.estimate("max_spectral_asymmetry", sym);
    r.estimate("max_representation_gap", agree);
    r.estimate("max_semigroup_residual", semi);
    r.estimate("max_mass", mass);
    r.estimate("min_mass", min_mass);
    r.estimate("min_value", min_value);
    r.target = Target::Predicate(format!(
        "asymmetry = 0, gap <= {:e}, semigroup <= {SEMIGROUP_TOL:e}, 0 <= mass <= 1 + {:e}, value >= -{:e}",
        2.0 * ke.abs_tol,
        ke.abs_tol,
        ke.abs_tol
    ));
    r.pass = sym == 0.0
        && agree <= 2.0 * ke.abs_tol
        && semi <= SEMIGROUP_TOL
        && mass <= 1.0 + ke.abs_tol
        && min_mass >= 0.0
        && min_value >= -ke.abs_tol;
    r.columns = [
        "t",
        "x",
        "y",
        "asymmetry",
        "representation_gap",
        "semigroup_residual",
        "mass",
    ]
    .map(String::from)
    .to_vec();
    r.per_path = samples
        .iter()
        .zip(&rows)
        .enumerate()
        .map(|(i, (s, row))| PathStat {
            index: i,
            seed,
            values: vec![s[0], s[1], s[2], row[0], row[1], row[2], row[3]],
        })
        .collect();
    r.runtime_seconds = clock.elapsed().as_secs_f64();
    Ok(r)
}

/// The heat problem `f = phi = 0`, `u_0 = sin(pi x / L)` on `dom`.
pub fn heat_oracle_problem(dom: &SpaceTimeDomain) -> Result<ProblemSpec> {
    Ok(ProblemSpec {
        params: StableParams::symmetric(1.5)?,
        truncation: TruncationSpec::new(0.5, 1.0)?,
        domain: *dom,
        drift: CoefficientSpec::zero(),
        noise_coef: CoefficientSpec::zero(),
        init: InitialCondition::sine(1, 1.0),
    })
}

fn heat_oracle_error(sol: &GridSolution) -> f64 {
    let l = sol.problem.domain.length;
    let lam = std::f64::consts::PI * std::f64::consts::PI / (2.0 * l * l);
    let nodes = sol.nodes();
    let mut err: f64 = 0.0;
    for (i, t) in sol.times().into_iter().enumerate() {
        let decay = (-lam * t).exp();
        for (k, &x) in nodes.iter().enumerate() {
            let exact = decay * (std::f64::consts::PI * x / l).sin();
            err = err.max((sol.at(i, k) - exact).abs());
        }
    }
    err
}

fn empty_noise(p: &ProblemSpec) -> crate::noise::NoiseRealization {
    crate::noise::NoiseRealization {
        params: p.params,
        truncation: p.truncation,
        domain: p.domain,
        jumps: Vec::new(),
        compensator_mu: 0.0,
        seed: 0,
        gaussian: Vec::new(),
    }
}

/// Sup-error of the mild solver on the analytic heat solution at `grid`.
pub fn deterministic_grid_error(dom: &SpaceTimeDomain, grid: &GridSpec) -> Result<f64> {
    let p = heat_oracle_problem(dom)?;
    let sol = MildSolver::new(*dom, *grid, MildOptions::default())?.solve(&p, &empty_noise(&p))?;
    Ok(heat_oracle_error(&sol))
}

/// Both solvers against `e^{-pi^2 t / (2 L^2)} sin(pi x / L)`.
pub fn run_deterministic_oracle(
    dom: &SpaceTimeDomain,
    grid: &GridSpec,
    modes: usize,
    tol: f64,
) -> Result<ExperimentReport> {
    let clock = Instant::now();
    let p = heat_oracle_problem(dom)?;
    let noise = empty_noise(&p);
    let mild = MildSolver::new(*dom, *grid, MildOptions::default())?.solve(&p, &noise)?;
    let gal = spectral_to_grid(&solve_galerkin(&p, &noise, modes, grid)?, grid)?;
    let (em, eg) = (heat_oracle_error(&mild), heat_oracle_error(&gal));

    let inputs = json!({ "domain": dom, "grid": grid, "modes": modes, "tol": tol });
    let mut r = ExperimentReport::new("deterministic_oracle", &inputs, 0);
    r.n_paths = 1;
    r.estimate("mild_sup_error", em);
    r.estimate("galerkin_sup_error", eg);
    r.target = Target::Predicate(format!("both sup-errors <= {tol:e}"));
    r.pass = em <= tol && eg <= tol;
    r.runtime_seconds = clock.elapsed().as_secs_f64();
    Ok(r)
}

fn audit_config(dom: &SpaceTimeDomain) -> AuditConfig {
    AuditConfig {
        horizon: dom.horizon,
        length: dom.length,
        ..AuditConfig::default()
    }
}

/// Initial data sampled on the grid nodes and on a four times finer grid.
fn init_samples(init: &InitialCondition, length: f64, n_x: usize) -> Vec<(f64, f64)> {
    let n = 4 * n_x;
    (0..=n)
        .map(|k| {
            let x = k as f64 * length / n as f64;
            (x, init.eval(x, length))
        })
        .collect()
}

/// Pathwise check that `u <= v` when `u_0 <= v_0`, `f <= g`, and both share
/// a non-decreasing noise coefficient and the noise path. `tol` defaults to
/// the calibrated tolerance, ten times the deterministic grid error.
pub fn run_comparison(
    lower: &ProblemSpec,
    upper: &ProblemSpec,
    grid: &GridSpec,
    n_paths: usize,
    seed: u64,
    tol: Option<f64>,
) -> Result<ExperimentReport> {
    let clock = Instant::now();
    require_paths(n_paths)?;
    grid.validate()?;
    if lower.params != upper.params || lower.truncation != upper.truncation || lower.domain != upper.domain {
        return Err(Error::Precondition {
            hypothesis: "both problems share the noise law and domain",
            detail: "params, truncation and domain must coincide".into(),
        });
    }
    if lower.noise_coef != upper.noise_coef {
        return Err(Error::Precondition {
            hypothesis: "shared noise coefficient",
            detail: format!("{:?} vs {:?}", lower.noise_coef.family, upper.noise_coef.family),
        });
    }
    lower.validate(true)?;
    upper.validate(true)?;
    let dom = lower.domain;
    dominates(&lower.drift, &upper.drift, &audit_config(&dom))?;
    let lo = init_samples(&lower.init, dom.length, grid.n_x);
    let hi = init_samples(&upper.init, dom.length, grid.n_x);
    if let Some(((x, a), (_, b))) = lo.iter().zip(&hi).find(|((_, a), (_, b))| a > b) {
        return Err(Error::Precondition {
            hypothesis: "u_0 <= v_0",
            detail: format!("u_0({x}) = {a} > v_0({x}) = {b}"),
        });
    }

    let det_error = deterministic_grid_error(&dom, grid)?;
    let tol = tol.unwrap_or(CALIBRATION_FACTOR * det_error);
    let solver = MildSolver::new(dom, *grid, MildOptions::default())?;
    let dx = grid.dx(&dom);
    let stats = map_paths(n_paths, seed, |_, s| {
        let noise = sample_noise(&lower.params, &lower.truncation, &dom, s)?;
        let u = solver.solve(lower, &noise)?;
        let v = solver.solve(upper, &noise)?;
        let mut violation: f64 = 0.0;
        let mut energy: f64 = 0.0;
        let mut w = vec![0.0; grid.n_x + 1];
        for i in 0..=grid.n_t {
            for (k, wk) in w.iter_mut().enumerate() {
                *wk = u.at(i, k) - v.at(i, k);
                violation = violation.max(*wk);
            }
            energy = energy.max(positive_part_energy(&w, dx).value);
        }
        Ok([violation, energy])
    })?;

    let inputs = json!({ "lower": lower, "upper": upper, "grid": grid, "n_paths": n_paths, "tol": tol });
    let mut r = ExperimentReport::new("comparison", &inputs, seed);
    let max_violation = stats.iter().map(|s| s[0]).fold(0.0, f64::max);
    let max_energy = stats.iter().map(|s| s[1]).fold(0.0, f64::max);
    let energy_bound = tol * tol * dom.length;
    r.n_paths = n_paths;
    r.estimate("max_violation", max_violation);
    r.estimate("max_positive_part_energy", max_energy);
    r.estimate("tolerance", tol);
    r.estimate("deterministic_grid_error", det_error);
    r.estimate("energy_bound", energy_bound);
    r.target = Target::Predicate("max (u - v)+ <= tol and ||(u - v)+||^2 <= tol^2 L on every path".into());
    r.pass = max_violation <= tol && max_energy <= energy_bound;
    r.columns = vec!["max_violation".into(), "max_positive_part_energy".into()];
    r.per_path = stats
        .iter()
        .enumerate()
        .map(|(i, s)| PathStat {
            index: i,
            seed: path_seed(seed, i as u64),
            values: s.to_vec(),
        })
        .collect();
    r.runtime_seconds = clock.elapsed().as_secs_f64();
    Ok(r)
}

/// Pathwise check that `u >= 0` when `u_0 >= 0` and `f(t,x,0) = phi(t,x,0) = 0`.
pub fn run_nonnegativity(
    problem: &ProblemSpec,
    grid: &GridSpec,
    n_paths: usize,
    seed: u64,
    tol: Option<f64>,
) -> Result<ExperimentReport> {
    let clock = Instant::now();
    require_paths(n_paths)?;
    grid.validate()?;
    problem.validate(false)?;
    if !problem.drift.fixes_origin() || !problem.noise_coef.fixes_origin() {
        return Err(Error::Precondition {
            hypothesis: "f(t, x, 0) = phi(t, x, 0) = 0",
            detail: format!(
                "drift {:?} and noise coefficient {:?} must both vanish at u = 0",
                problem.drift.family, problem.noise_coef.family
            ),
        });
    }
    let dom = problem.domain;
    if let Some((x, v)) = init_samples(&problem.init, dom.length, grid.n_x)
        .into_iter()
        .find(|(_, v)| *v < 0.0)
    {
        return Err(Error::Precondition {
            hypothesis: "u_0 >= 0",
            detail: format!("u_0({x}) = {v}"),
        });
    }
    let det_error = deterministic_grid_error(&dom, grid)?;
    let tol = tol.unwrap_or(CALIBRATION_FACTOR * det_error);
    let solver = MildSolver::new(dom, *grid, MildOptions::default())?;
    let mins = map_paths(n_paths, seed, |_, s| {
        let noise = sample_noise(&problem.params, &problem.truncation, &dom, s)?;
        let u = solver.solve(problem, &noise)?;
        let min = u.values.iter().copied().fold(f64::INFINITY, f64::min);
        let max_abs = u.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        Ok([min, max_abs])
    })?;

    let inputs = json!({ "problem": problem, "grid": grid, "n_paths": n_paths, "tol": tol });
    let mut r = ExperimentReport::new("nonnegativity", &inputs, seed);
    let min = mins.iter().map(|m| m[0]).fold(f64::INFINITY, f64::min);
    r.n_paths = n_paths;
    r.estimate("min_over_paths", min);
    r.estimate("max_abs_over_paths", mins.iter().map(|m| m[1]).fold(0.0, f64::max));
    r.estimate("tolerance", tol);
    r.estimate("deterministic_grid_error", det_error);
    r.target = Target::Predicate("min u >= -tol on every path".into());
    r.pass = min >= -tol;
    r.columns = vec!["min_u".into(), "max_abs_u".into()];
    r.per_path = mins
        .iter()
        .enumerate()
        .map(|(i, m)| PathStat {
            index: i,
            seed: path_seed(seed, i as u64),
            values: m.to_vec(),
        })
        .collect();
    r.runtime_seconds = clock.elapsed().as_secs_f64();
    Ok(r)
}

/// Solves at cutoffs `k_small < k_large` on coupled noise paths and compares
/// the solutions on the grid times before `R_{k_small}`.
///
/// Only symmetric noise is accepted: for `c_+ != c_-` the compensators at the
/// two cutoffs differ by a deterministic drift, so the solutions are not
/// expected to coincide.
pub fn run_consistency(
    problem: &ProblemSpec,
    k_small: f64,
    k_large: f64,
    grid: &GridSpec,
    n_paths: usize,
    seed: u64,
) -> Result<ExperimentReport> {
    let clock = Instant::now();
    require_paths(n_paths)?;
    grid.validate()?;
    problem.validate(false)?;
    if !problem.params.is_symmetric() {
        return Err(Error::Precondition {
            hypothesis: "symmetric noise (c_+ = c_-)",
            detail: "for asymmetric noise the compensators at two cutoffs differ by a deterministic drift, \
                     so pathwise equality before the stopping time does not hold"
                .into(),
        });
    }
    let trunc = problem.truncation;
    if !(trunc.small_cutoff < k_small && k_small < k_large && k_large <= trunc.big_cutoff) {
        return Err(Error::param(format!(
            "need small_cutoff < k_small < k_large <= big_cutoff, got {} < {k_small} < {k_large} <= {}",
            trunc.small_cutoff, trunc.big_cutoff
        )));
    }
    let dom = problem.domain;
    let p_small = problem.with_cutoff(k_small);
    let p_large = problem.with_cutoff(k_large);
    let solver = MildSolver::new(dom, *grid, MildOptions::default())?;
    let times = grid.times(&dom);
    let width = grid.n_x + 1;
    let stats = map_paths(n_paths, seed, |_, s| {
        let noise = sample_noise(&problem.params, &trunc, &dom, s)?;
        let stop = noise.stopping_time(k_small)?;
        let a = solver.solve(&p_large, &noise.restrict(k_large)?)?;
        let b = solver.solve(&p_small, &noise.restrict(k_small)?)?;
        let rows = times.iter().filter(|&&t| t < stop).count();
        let diff = a.sup_distance(&b, rows);
        let scale = a.values[..rows * width].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let rel = if diff == 0.0 {
            0.0
        } else {
            diff / scale.max(f64::MIN_POSITIVE)
        };
        Ok([rel, stop, rows as f64])
    })?;

    let inputs =
        json!({ "problem": problem, "k_small": k_small, "k_large": k_large, "grid": grid, "n_paths": n_paths });
    let mut r = ExperimentReport::new("consistency", &inputs, seed);
    let worst = stats.iter().map(|s| s[0]).fold(0.0, f64::max);
    let vacuous = stats.iter().filter(|s| s[1] == 0.0).count();
    let full = stats.iter().filter(|s| s[1] > dom.horizon).count();
    if vacuous > 0 {
        r.flags.push(format!("vacuous: {vacuous} path(s) with R = 0"));
    }
    r.n_paths = n_paths;
    r.estimate("max_relative_difference", worst);
    r.estimate("paths_without_big_jump", full as f64);
    r.target = Target::Value(CONSISTENCY_RTOL);
    r.pass = worst <= CONSISTENCY_RTOL;
    r.columns = ["relative_difference", "stopping_time", "rows_compared"]
        .map(String::from)
        .to_vec();
    r.per_path = stats
        .iter()
        .enumerate()
        .map(|(i, s)| PathStat {
            index: i,
            seed: path_seed(seed, i as u64),
            values: s.to_vec(),
        })
        .collect();
    r.runtime_seconds = clock.elapsed().as_secs_f64();
    Ok(r)
}

/// `E(m) = max_i ||u_mild(t_i) - u_m(t_i)||_H` on one noise path, for each
/// `m` in `m_list`.
pub fn run_galerkin_convergence(
    problem: &ProblemSpec,
    seed: u64,
    m_list: &[usize],
    grid: &GridSpec,
) -> Result<ExperimentReport> {
    let clock = Instant::now();
    grid.validate()?;
    if m_list.len() < 2 {
        return Err(Error::param("Galerkin convergence needs at least two mode counts"));
    }
    if m_list[0] == 0 || m_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::param(format!(
            "mode counts must be positive and increasing, got {m_list:?}"
        )));
    }
    let m_max = *m_list.last().expect("non-empty");
    if m_max > grid.n_x / 4 {
        return Err(Error::param(format!(
            "largest mode count {m_max} exceeds n_x / 4 = {}",
            grid.n_x / 4
        )));
    }
    problem.validate(false)?;
    let dom = problem.domain;
    let noise_seed = path_seed(seed, 0);
    let noise = sample_noise(&problem.params, &problem.truncation, &dom, noise_seed)?;
    let mild = MildSolver::new(dom, *grid, MildOptions::default())?.solve(problem, &noise)?;
    let dx = grid.dx(&dom);
    let errors: Vec<Result<f64>> = m_list
        .par_iter()
        .map(|&m| {
            let gal = spectral_to_grid(&solve_galerkin(problem, &noise, m, grid)?, grid)?;
            Ok((0..=grid.n_t)
                .map(|i| l2_row_distance(mild.row(i), gal.row(i), dx))
                .fold(0.0, f64::max))
        })
        .collect();
    let errors: Vec<f64> = errors.into_iter().collect::<Result<_>>()?;

    let inputs = json!({ "problem": problem, "m_list": m_list, "grid": grid });
    let mut r = ExperimentReport::new("galerkin_convergence", &inputs, seed);
    let trend = errors.windows(2).all(|w| w[1] <= (1.0 + GALERKIN_SLACK) * w[0]);
    let first = errors[0];
    let last = *errors.last().expect("non-empty");
    r.n_paths = 1;
    for (m, e) in m_list.iter().zip(&errors) {
        r.estimate(&format!("error_m{m:03}"), *e);
    }
    r.estimate("jumps", noise.jumps.len() as f64);
    r.target = Target::Predicate(format!(
        "E(m) non-increasing up to {}% slack and E(m_max) < E(m_min) / 2",
        GALERKIN_SLACK * 100.0
    ));
    r.pass = trend && last < 0.5 * first;
    r.columns = vec!["modes".into(), "error".into()];
    r.per_path = m_list
        .iter()
        .zip(&errors)
        .enumerate()
        .map(|(i, (&m, &e))| PathStat {
            index: i,
            seed: noise_seed,
            values: vec![m as f64, e],
        })
        .collect();
    r.runtime_seconds = clock.elapsed().as_secs_f64();
    Ok(r)
}

/// Monte Carlo `sup_i E ||u(t_i)||_p^p`, with the first half of the paths
/// as the reference for the doubling-stability ratio.
pub fn run_moment_estimate(
    problem: &ProblemSpec,
    grid: &GridSpec,
    n_paths: usize,
    p: f64,
    seed: u64,
) -> Result<ExperimentReport> {
    let clock = Instant::now();
    if n_paths < 2 {
        return Err(Error::param("moment estimate needs at least two paths"));
    }
    let alpha = problem.params.alpha;
    if !(p > alpha) {
        return Err(Error::Divergent { p, alpha });
    }
    if p > 2.0 {
        return Err(Error::param(format!("moment order must lie in (alpha, 2], got {p}")));
    }
    grid.validate()?;
    problem.validate(false)?;
    let dom = problem.domain;
    let solver = MildSolver::new(dom, *grid, MildOptions::default())?;
    let norms = map_paths(n_paths, seed, |_, s| {
        let noise = sample_noise(&problem.params, &problem.truncation, &dom, s)?;
        let u = solver.solve(problem, &noise)?;
        Ok((0..=grid.n_t).map(|i| u.lp_norm_pow(i, p)).collect::<Vec<f64>>())
    })?;

    let rows = grid.n_t + 1;
    let means = |paths: &[Vec<f64>]| -> Vec<f64> {
        let n = paths.len() as f64;
        (0..rows).map(|i| paths.iter().map(|v| v[i]).sum::<f64>() / n).collect()
    };
    let argmax = |m: &[f64]| {
        m.iter().enumerate().fold(
            (0usize, f64::NEG_INFINITY),
            |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc },
        )
    };
    let half = n_paths / 2;
    let (i_full, sup_full) = argmax(&means(&norms));
    let (_, sup_half) = argmax(&means(&norms[..half]));
    let at_sup: Vec<f64> = norms.iter().map(|v| v[i_full]).collect();
    let (mean, se) = mean_and_se(&at_sup);
    let ratio = if sup_full == 0.0 && sup_half == 0.0 {
        1.0
    } else {
        sup_full / sup_half
    };

    let inputs = json!({ "problem": problem, "grid": grid, "n_paths": n_paths, "p": p });
    let mut r = ExperimentReport::new("moment_estimate", &inputs, seed);
    if sup_full == 0.0 {
        r.flags.push("zero solution".into());
    }
    r.n_paths = n_paths;
    r.estimate("sup_moment", sup_full);
    r.estimate("sup_moment_half_paths", sup_half);
    r.estimate("doubling_ratio", ratio);
    r.estimate("argmax_time", i_full as f64 * grid.dt(&dom));
    r.confidence_interval = Some([mean - 3.0 * se, mean + 3.0 * se]);
    r.target = Target::Predicate(format!(
        "finite and doubling ratio in [{}, {}]",
        MOMENT_RATIO_BAND.0, MOMENT_RATIO_BAND.1
    ));
    r.pass = sup_full.is_finite() && (MOMENT_RATIO_BAND.0..=MOMENT_RATIO_BAND.1).contains(&ratio);
    r.columns = vec!["sup_t_norm".into(), "norm_at_argmax".into()];
    r.per_path = norms
        .iter()
        .enumerate()
        .map(|(i, v)| PathStat {
            index: i,
            seed: path_seed(seed, i as u64),
            values: vec![v.iter().copied().fold(0.0, f64::max), v[i_full]],
        })
        .collect();
    r.runtime_seconds = clock.elapsed().as_secs_f64();
    Ok(r)
}
