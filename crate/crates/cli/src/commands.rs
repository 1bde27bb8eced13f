use std::fs;
use std::path::Path;
use std::time::Instant;

use anyhow::Context;
use levyheat::experiments::{
    run_comparison, run_consistency, run_deterministic_oracle, run_galerkin_convergence, run_jump_moment,
    run_kernel_suite, run_moment_estimate, run_nonnegativity, run_stopping_law,
};
use levyheat::noise::{expected_jump_count, sample_noise, NoiseRealization};
use levyheat::seed::path_seed;
use levyheat::solvers::galerkin::eigenvalue;
use levyheat::solvers::{solve_galerkin, spectral_to_grid, GridSolution, MildSolver};
use levyheat::{CoefficientFamily, ExperimentReport, InitialCondition, KernelEvaluator};
use serde::Serialize;
use serde_json::json;

use crate::config::{ensure_experiments, ExperimentConfig, RunConfig, SolverChoice};

/// A selected experiment that ran but did not meet its target.
#[derive(Debug)]
pub struct ExperimentFailure {
    pub report: String,
}

impl std::fmt::Display for ExperimentFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "experiment {} did not pass", self.report)
    }
}

impl std::error::Error for ExperimentFailure {}

fn write(dir: &Path, name: &str, contents: &str) -> anyhow::Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
}

fn json_string(value: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

fn prepare(cfg: &RunConfig, out: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write(out, "config.toml", &cfg.to_toml()?)
}

/// The single noise path used by `sample-noise` and `solve`.
fn noise_path(cfg: &RunConfig) -> levyheat::Result<NoiseRealization> {
    sample_noise(&cfg.params, &cfg.truncation, &cfg.domain, path_seed(cfg.seed, 0))
}

pub fn sample_noise_cmd(cfg: &RunConfig, out: &Path) -> anyhow::Result<()> {
    prepare(cfg, out)?;
    let noise = noise_path(cfg)?;
    write(out, "noise.csv", &noise.to_columnar())?;
    let meta = json!({
        "master_seed": cfg.seed,
        "path_seed": noise.seed,
        "jumps": noise.jumps.len(),
        "expected_jumps": expected_jump_count(&cfg.params, &cfg.truncation, &cfg.domain),
        "gaussian_impulses": noise.gaussian.len(),
        "compensator_mu": noise.compensator_mu,
        "params": cfg.params,
        "truncation": cfg.truncation,
        "domain": cfg.domain,
    });
    write(out, "noise.json", &json_string(&meta))?;
    println!(
        "sampled {} jumps into {}",
        noise.jumps.len(),
        out.join("noise.csv").display()
    );
    Ok(())
}

/// `A exp(-lambda_n t) sin(n pi x / L)` when the problem is pure heat flow
/// from a single sine mode.
fn analytic_heat(cfg: &RunConfig) -> Option<impl Fn(f64, f64) -> f64> {
    let (mode, amplitude) = match cfg.init {
        InitialCondition::SineMode { mode, amplitude } => (mode, amplitude),
        _ => return None,
    };
    if cfg.drift != CoefficientFamily::Zero || cfg.noise_coef != CoefficientFamily::Zero {
        return None;
    }
    let length = cfg.domain.length;
    let lambda = eigenvalue(mode as usize, length);
    let k = mode as f64 * std::f64::consts::PI / length;
    Some(move |t: f64, x: f64| amplitude * (-lambda * t).exp() * (k * x).sin())
}

fn sup_error(sol: &GridSolution, exact: &impl Fn(f64, f64) -> f64) -> f64 {
    let nodes = sol.nodes();
    let mut err: f64 = 0.0;
    for (i, t) in sol.times().into_iter().enumerate() {
        for (k, &x) in nodes.iter().enumerate() {
            err = err.max((sol.at(i, k) - exact(t, x)).abs());
        }
    }
    err
}

pub fn solve_cmd(cfg: &RunConfig, out: &Path) -> anyhow::Result<()> {
    prepare(cfg, out)?;
    let problem = cfg.problem();
    problem.validate(false)?;
    let noise = noise_path(cfg)?;
    let exact = analytic_heat(cfg);
    let mut solutions = Vec::new();

    if matches!(cfg.solve.solver, SolverChoice::Mild | SolverChoice::Both) {
        let sol = MildSolver::new(cfg.domain, cfg.grid, cfg.mild_options())?
            .solve(&problem, &noise)
            .context("mild solver")?;
        solutions.push(("mild", sol));
    }
    if matches!(cfg.solve.solver, SolverChoice::Galerkin | SolverChoice::Both) {
        let spectral = solve_galerkin(&problem, &noise, cfg.solve.modes, &cfg.grid).context("Galerkin solver")?;
        solutions.push(("galerkin", spectral_to_grid(&spectral, &cfg.grid)?));
    }
    for (name, sol) in &solutions {
        write(out, &format!("{name}.csv"), &sol.to_csv())?;
        let mut meta = serde_json::to_value(sol.metadata())?;
        if let Some(f) = &exact {
            meta["analytic_sup_error"] = json!(sup_error(sol, f));
        }
        write(out, &format!("{name}.json"), &json_string(&meta))?;
    }
    if let [(_, a), (_, b)] = &solutions[..] {
        let rows = cfg.grid.n_t + 1;
        let d = a.sup_distance(b, rows);
        write(
            out,
            "discrepancy.json",
            &json_string(&json!({ "max_discrepancy": d, "modes": cfg.solve.modes, "grid": cfg.grid })),
        )?;
        println!("max |mild - galerkin| = {d:e}");
    }
    for (name, _) in &solutions {
        println!("wrote {}", out.join(format!("{name}.csv")).display());
    }
    Ok(())
}

fn run_experiment(cfg: &RunConfig, e: &ExperimentConfig) -> levyheat::Result<ExperimentReport> {
    let seed = cfg.seed;
    let base = cfg.problem();
    let grid_or = |g: &Option<_>| g.unwrap_or(cfg.grid);
    match e {
        ExperimentConfig::StoppingLaw { cutoff, n_paths } => {
            run_stopping_law(&cfg.params, *cutoff, &cfg.domain, *n_paths, seed)
        }
        ExperimentConfig::JumpMoment { p, n_paths } => {
            run_jump_moment(&cfg.params, &cfg.truncation, &cfg.domain, *p, *n_paths, seed)
        }
        ExperimentConfig::KernelSuite { n_samples, n_quad } => {
            run_kernel_suite(&KernelEvaluator::new(cfg.domain.length), *n_samples, *n_quad, seed)
        }
        ExperimentConfig::DeterministicOracle { modes, tol, grid } => {
            run_deterministic_oracle(&cfg.domain, &grid_or(grid), *modes, *tol)
        }
        ExperimentConfig::Consistency {
            k_small,
            k_large,
            n_paths,
            grid,
        } => run_consistency(&base, *k_small, *k_large, &grid_or(grid), *n_paths, seed),
        ExperimentConfig::GalerkinConvergence { modes, grid } => {
            run_galerkin_convergence(&base, seed, modes, &grid_or(grid))
        }
        ExperimentConfig::Comparison {
            n_paths,
            tolerance,
            lower,
            upper,
            grid,
        } => run_comparison(
            &cfg.with_override(lower),
            &cfg.with_override(upper),
            &grid_or(grid),
            *n_paths,
            seed,
            *tolerance,
        ),
        ExperimentConfig::Nonnegativity {
            n_paths,
            tolerance,
            init,
            grid,
        } => {
            let mut p = base;
            if let Some(i) = init {
                p.init = i.clone();
            }
            run_nonnegativity(&p, &grid_or(grid), *n_paths, seed, *tolerance)
        }
        ExperimentConfig::Moment { p, n_paths, grid } => run_moment_estimate(&base, &grid_or(grid), *n_paths, *p, seed),
    }
}

/// Runs every selected experiment, writes `NN_<name>.json` and `.csv` per
/// report plus `timings.json`, and fails on the first report that did not pass.
pub fn verify_cmd(cfg: &RunConfig, out: &Path) -> anyhow::Result<()> {
    ensure_experiments(cfg)?;
    prepare(cfg, out)?;
    let mut timings = Vec::new();
    let mut first_failure = None;
    for (i, e) in cfg.experiments.iter().enumerate() {
        let clock = Instant::now();
        let report = run_experiment(cfg, e).with_context(|| format!("experiment {}", i + 1))?;
        let stem = format!("{:02}_{}", i + 1, report.name);
        write(out, &format!("{stem}.json"), &report.to_json())?;
        write(out, &format!("{stem}.csv"), &report.per_path_csv())?;
        let seconds = clock.elapsed().as_secs_f64();
        timings.push(json!({ "report": stem, "seconds": seconds }));
        println!("{stem}: {} ({seconds:.2} s)", if report.pass { "pass" } else { "FAIL" });
        if !report.pass && first_failure.is_none() {
            first_failure = Some(stem);
        }
    }
    write(out, "timings.json", &json_string(&timings))?;
    match first_failure {
        Some(report) => Err(ExperimentFailure { report }.into()),
        None => Ok(()),
    }
}
