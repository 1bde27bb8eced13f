//! Desk-scale acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use levyheat::coefficients::{CoefficientSpec, InitialCondition};
use levyheat::experiments::{
    run_comparison, run_consistency, run_deterministic_oracle, run_galerkin_convergence, run_jump_moment,
    run_kernel_suite, run_moment_estimate, run_nonnegativity, run_stopping_law,
};
use levyheat::kernel::KernelEvaluator;
use levyheat::noise::{SpaceTimeDomain, StableParams, TruncationSpec};
use levyheat::solvers::{GridSpec, ProblemSpec};
use levyheat::{ExperimentReport, Result};

const SEED: u64 = 20_240_611;

struct Outcome {
    id: usize,
    title: &'static str,
    pass: bool,
    detail: String,
    seconds: f64,
    budget: Option<f64>,
}

fn unit_domain() -> SpaceTimeDomain {
    SpaceTimeDomain::new(1.0, 1.0).unwrap()
}

fn bump(center: f64, width: f64, height: f64) -> InitialCondition {
    InitialCondition::Bump { center, width, height }
}

fn problem(params: StableParams, drift: CoefficientSpec, phi: CoefficientSpec, init: InitialCondition) -> ProblemSpec {
    ProblemSpec {
        params,
        truncation: TruncationSpec::new(0.05, 1.0).unwrap(),
        domain: unit_domain(),
        drift,
        noise_coef: phi,
        init,
    }
}

fn est(r: &ExperimentReport, key: &str) -> f64 {
    r.estimates[key]
}

/// Every report of the suite, in criterion order.
fn suite() -> Result<Vec<ExperimentReport>> {
    let dom = unit_domain();
    let sym = StableParams::symmetric(1.5)?;
    let pos = StableParams::positive(1.5)?;
    let fine = GridSpec::new(256, 128)?;
    let mut out = vec![
        run_stopping_law(&sym, 1.0, &dom, 10_000, SEED)?,
        run_jump_moment(&sym, &TruncationSpec::new(0.01, 1.0)?, &dom, 2.0, 10_000, SEED)?,
        run_kernel_suite(&KernelEvaluator::new(1.0), 1000, 2000, SEED)?,
        run_deterministic_oracle(&dom, &GridSpec::new(512, 256)?, 64, 1e-4)?,
    ];

    let coupled = problem(
        sym,
        CoefficientSpec::sine_modulated(0.5, 2.0),
        CoefficientSpec::clipped_linear(1.0, 2.0),
        bump(0.5, 0.3, 1.0),
    );
    out.push(run_consistency(&coupled, 0.5, 1.0, &fine, 100, SEED)?);

    let galerkin = problem(
        sym,
        CoefficientSpec::sine_modulated(0.5, 2.0),
        CoefficientSpec::clipped_linear(0.5, 1.0),
        bump(0.4, 0.25, 1.0),
    );
    out.push(run_galerkin_convergence(&galerkin, SEED, &[4, 8, 16, 32], &fine)?);

    let g = CoefficientSpec::sine_modulated(0.5, 2.0);
    let phi = CoefficientSpec::clipped_linear(1.0, 2.0);
    let upper = problem(pos, g.clone(), phi.clone(), bump(0.5, 0.3, 1.0));
    let lower = problem(pos, g.shifted(-0.5), phi.clone(), bump(0.5, 0.3, 0.8));
    out.push(run_comparison(&lower, &upper, &fine, 200, SEED, None)?);

    let positive = problem(pos, g.clone(), phi.clone(), bump(0.5, 0.3, 1.0));
    out.push(run_nonnegativity(&positive, &fine, 200, SEED, None)?);
    let from_zero = problem(pos, g, phi, InitialCondition::Zero);
    out.push(run_nonnegativity(&from_zero, &fine, 20, SEED, None)?);

    // bounded noise coefficient: with phi constant the squared norm has
    // infinite variance and the doubling ratio depends on the seed
    let moments = problem(
        sym,
        CoefficientSpec::sine_modulated(0.5, 2.0),
        CoefficientSpec::clipped_linear(0.5, 1.0),
        bump(0.5, 0.3, 1.0),
    );
    out.push(run_moment_estimate(&moments, &GridSpec::new(128, 64)?, 200, 2.0, SEED)?);
    Ok(out)
}

fn judge(reports: &[ExperimentReport]) -> Vec<Outcome> {
    let mut v = Vec::new();
    let mut push = |id, title, pass, detail: String, seconds, budget| {
        v.push(Outcome {
            id,
            title,
            pass,
            detail,
            seconds,
            budget,
        });
    };
    let r = &reports[0];
    let ci = r.confidence_interval.unwrap();
    push(
        1,
        "stopping law P[R_K > T]",
        r.pass,
        format!(
            "freq {:.5} in [{:.5}, {:.5}], target {:.5}",
            est(r, "survival_frequency"),
            ci[0],
            ci[1],
            est(r, "target")
        ),
        r.runtime_seconds,
        Some(10.0),
    );
    let r = &reports[1];
    let ci = r.confidence_interval.unwrap();
    push(
        2,
        "truncated moment identity",
        r.pass,
        format!(
            "mean {:.5} in [{:.5}, {:.5}], target {:.5}",
            est(r, "mean"),
            ci[0],
            ci[1],
            est(r, "target")
        ),
        r.runtime_seconds,
        Some(10.0),
    );
    let r = &reports[2];
    push(
        3,
        "kernel suite",
        r.pass,
        format!(
            "asym {:e}, gap {:.2e}, semigroup {:.2e}, mass {:.12}",
            est(r, "max_spectral_asymmetry"),
            est(r, "max_representation_gap"),
            est(r, "max_semigroup_residual"),
            est(r, "max_mass")
        ),
        r.runtime_seconds,
        Some(30.0),
    );
    let r = &reports[3];
    push(
        4,
        "deterministic oracle",
        r.pass,
        format!(
            "mild {:.2e}, galerkin {:.2e}",
            est(r, "mild_sup_error"),
            est(r, "galerkin_sup_error")
        ),
        r.runtime_seconds,
        Some(30.0),
    );
    let r = &reports[4];
    push(
        5,
        "consistency across cutoffs",
        r.pass,
        format!(
            "max rel diff {:.2e} over {} paths ({} without a big jump)",
            est(r, "max_relative_difference"),
            r.n_paths,
            est(r, "paths_without_big_jump")
        ),
        r.runtime_seconds,
        Some(120.0),
    );
    let r = &reports[5];
    let errors: Vec<String> = r
        .per_path
        .iter()
        .map(|s| format!("E({})={:.3e}", s.values[0], s.values[1]))
        .collect();
    push(
        6,
        "Galerkin convergence",
        r.pass,
        errors.join(" "),
        r.runtime_seconds,
        Some(120.0),
    );
    let r = &reports[6];
    push(
        7,
        "comparison principle",
        r.pass,
        format!(
            "max (u-v)+ {:.2e}, max energy {:.2e}, tol {:.2e}",
            est(r, "max_violation"),
            est(r, "max_positive_part_energy"),
            est(r, "tolerance")
        ),
        r.runtime_seconds,
        Some(300.0),
    );
    let (r, z) = (&reports[7], &reports[8]);
    let zero_exact = est(z, "max_abs_over_paths") == 0.0;
    push(
        8,
        "non-negativity",
        r.pass && z.pass && zero_exact,
        format!(
            "min u {:.2e} (tol {:.2e}); zero start max |u| = {:e}",
            est(r, "min_over_paths"),
            est(r, "tolerance"),
            est(z, "max_abs_over_paths")
        ),
        r.runtime_seconds + z.runtime_seconds,
        Some(300.0),
    );
    let r = &reports[9];
    push(
        9,
        "moment stability",
        r.pass,
        format!(
            "sup_t E||u||^2: {:.4} (100 paths) -> {:.4} (200 paths), ratio {:.4}, at t = {}",
            est(r, "sup_moment_half_paths"),
            est(r, "sup_moment"),
            est(r, "doubling_ratio"),
            est(r, "argmax_time")
        ),
        r.runtime_seconds,
        None,
    );
    v
}

fn serialize(reports: &[ExperimentReport]) -> Vec<String> {
    reports.iter().map(|r| r.to_json() + &r.per_path_csv()).collect()
}

fn run_in_pool(threads: usize) -> Result<Vec<ExperimentReport>> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .expect("thread pool")
        .install(suite)
}

fn main() -> ExitCode {
    let first = match run_in_pool(1) {
        Ok(r) => r,
        Err(e) => {
            println!("acceptance suite aborted: {e}");
            return ExitCode::FAILURE;
        }
    };
    let mut outcomes = judge(&first);

    let clock = Instant::now();
    let (pass, detail) = match run_in_pool(4) {
        Ok(second) => {
            let (a, b) = (serialize(&first), serialize(&second));
            let differing: Vec<&str> = first
                .iter()
                .zip(a.iter().zip(&b))
                .filter(|(_, (x, y))| x != y)
                .map(|(r, _)| r.name.as_str())
                .collect();
            let bytes: usize = a.iter().map(String::len).sum();
            if differing.is_empty() {
                (
                    true,
                    format!("{} reports, {bytes} bytes identical at 1 and 4 threads", a.len()),
                )
            } else {
                (false, format!("reports differ: {differing:?}"))
            }
        }
        Err(e) => (false, format!("second run failed: {e}")),
    };
    outcomes.push(Outcome {
        id: 10,
        title: "determinism across thread counts",
        pass,
        detail,
        seconds: clock.elapsed().as_secs_f64(),
        budget: None,
    });

    let mut all = true;
    for o in &outcomes {
        let in_budget = o.budget.is_none_or(|b| o.seconds <= b);
        let ok = o.pass && in_budget;
        all &= ok;
        let budget = o.budget.map(|b| format!(" / {b:.0} s")).unwrap_or_default();
        println!(
            "criterion {:>2} {:<34} {}  {}  [{:.2} s{budget}]",
            o.id,
            o.title,
            if ok { "PASS" } else { "FAIL" },
            o.detail,
            o.seconds
        );
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
