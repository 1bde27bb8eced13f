//! Residual of the weak (variational) form on a computed solution.
//!
//! For a test function `psi` with `psi(0) = psi(L) = psi'(0) = psi'(L) = 0`,
//!
//! ```text
//! <u(t), psi> - <u_0, psi> - int_0^t <u(s), psi''/2> + <f(s, ., u(s)), psi> - mu <phi(s, ., u(s)), psi> ds
//!     - sum_{tau_j <= t} phi(tau_j, x_j, u(tau_j-, x_j)) psi(x_j) z_j = 0.
//! ```
//!
//! Space integrals use the trapezoid rule on the solution nodes and time
//! integrals the trapezoid rule on the grid times.

use std::fmt;

use super::GridSolution;
use crate::error::{Error, Result};
use crate::noise::NoiseRealization;

type RealFn = Box<dyn Fn(f64) -> f64 + Send + Sync>;

/// A twice-differentiable test function with its first two derivatives.
pub struct TestFunction {
    value: RealFn,
    first: RealFn,
    second: RealFn,
}

impl fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("TestFunction")
    }
}

const BOUNDARY_TOL: f64 = 1e-12;

impl TestFunction {
    /// Checks that the function and its derivative vanish at both ends.
    pub fn new(value: RealFn, first: RealFn, second: RealFn, length: f64) -> Result<Self> {
        let ends = [value(0.0), value(length), first(0.0), first(length)];
        if let Some(bad) = ends.iter().find(|v| !(v.abs() <= BOUNDARY_TOL)) {
            return Err(Error::param(format!(
                "test function must satisfy psi(0) = psi(L) = psi'(0) = psi'(L) = 0 (found {bad})"
            )));
        }
        Ok(TestFunction { value, first, second })
    }

    /// `sin^3(pi x / L)`.
    pub fn sin_cubed(length: f64) -> Self {
        let k = std::f64::consts::PI / length;
        TestFunction {
            value: Box::new(move |x| (k * x).sin().powi(3)),
            first: Box::new(move |x| 3.0 * k * (k * x).sin().powi(2) * (k * x).cos()),
            second: Box::new(move |x| {
                let (s, c) = (k * x).sin_cos();
                k * k * (6.0 * s * c * c - 3.0 * s * s * s)
            }),
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        (self.value)(x)
    }

    pub fn first(&self, x: f64) -> f64 {
        (self.first)(x)
    }

    pub fn second(&self, x: f64) -> f64 {
        (self.second)(x)
    }
}

fn trapezoid(row: &[f64], dx: f64) -> f64 {
    let n = row.len();
    (row[1..n - 1].iter().sum::<f64>() + 0.5 * (row[0] + row[n - 1])) * dx
}

/// Absolute weak-form residual at the grid time nearest `t`.
///
/// Left limits at impulses come from the solver's recorded impulse states
/// when present, else from linear interpolation of the previous grid row.
pub fn weak_form_residual(sol: &GridSolution, noise: &NoiseRealization, test: &TestFunction, t: f64) -> Result<f64> {
    sol.problem.check_noise(noise)?;
    let dom = sol.problem.domain;
    let dt = sol.grid.dt(&dom);
    let dx = sol.grid.dx(&dom);
    let pos = t / dt;
    let i_end = pos.round();
    if !(t >= 0.0 && t <= dom.horizon) || (pos - i_end).abs() > 1e-9 {
        return Err(Error::param(format!(
            "residual time {t} is not a grid time in [0, {}]",
            dom.horizon
        )));
    }
    let i_end = i_end as usize;
    let nodes = sol.nodes();
    let times = sol.times();
    let psi: Vec<f64> = nodes.iter().map(|&x| test.value(x)).collect();
    let psi2: Vec<f64> = nodes.iter().map(|&x| test.second(x)).collect();
    let mu = noise.compensator_mu;
    let p = &sol.problem;

    let mut integrand = vec![0.0; nodes.len()];
    let mut inner_at = |i: usize| -> f64 {
        let row = sol.row(i);
        for (k, &x) in nodes.iter().enumerate() {
            let u = row[k];
            let mut v = 0.5 * u * psi2[k] + p.drift.evaluate(times[i], x, u) * psi[k];
            if mu != 0.0 {
                v -= mu * p.noise_coef.evaluate(times[i], x, u) * psi[k];
            }
            integrand[k] = v;
        }
        trapezoid(&integrand, dx)
    };
    let mut time_integral = 0.0;
    if i_end > 0 {
        let mut prev = inner_at(0);
        for i in 1..=i_end {
            let cur = inner_at(i);
            time_integral += 0.5 * dt * (prev + cur);
            prev = cur;
        }
    }

    let impulses = noise.impulses();
    let recorded = sol.impulse_states.len() == impulses.len();
    let mut jump_sum = 0.0;
    for (j, imp) in impulses.iter().enumerate() {
        if imp.tau > times[i_end] {
            break;
        }
        let left = if recorded {
            sol.impulse_states[j]
        } else {
            let i = ((imp.tau / dt).ceil() as usize).saturating_sub(1);
            interpolate(sol.row(i), imp.x, dx)
        };
        jump_sum += p.noise_coef.evaluate(imp.tau, imp.x, left) * test.value(imp.x) * imp.z;
    }

    let weighted = |i: usize| -> f64 {
        let row: Vec<f64> = sol.row(i).iter().zip(&psi).map(|(u, s)| u * s).collect();
        trapezoid(&row, dx)
    };
    Ok((weighted(i_end) - weighted(0) - time_integral - jump_sum).abs())
}

fn interpolate(row: &[f64], x: f64, dx: f64) -> f64 {
    let n = row.len() - 1;
    let pos = (x / dx).clamp(0.0, n as f64);
    let k = (pos.floor() as usize).min(n - 1);
    let frac = pos - k as f64;
    row[k] * (1.0 - frac) + row[k + 1] * frac
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{CoefficientSpec, InitialCondition};
    use crate::noise::{SpaceTimeDomain, StableParams, TruncationSpec};
    use crate::solvers::{solve_mild, GridSpec, ProblemSpec};

    fn heat(init: InitialCondition) -> (ProblemSpec, NoiseRealization) {
        let p = ProblemSpec {
            params: StableParams::symmetric(1.5).unwrap(),
            truncation: TruncationSpec::new(0.05, 1.0).unwrap(),
            domain: SpaceTimeDomain::new(1.0, 1.0).unwrap(),
            drift: CoefficientSpec::zero(),
            noise_coef: CoefficientSpec::zero(),
            init,
        };
        let noise = NoiseRealization {
            params: p.params,
            truncation: p.truncation,
            domain: p.domain,
            jumps: vec![],
            compensator_mu: 0.0,
            seed: 0,
            gaussian: vec![],
        };
        (p, noise)
    }

    #[test]
    fn sin_cubed_derivatives_match_finite_differences() {
        let psi = TestFunction::sin_cubed(2.0);
        let h = 1e-4;
        for x in [0.1, 0.7, 1.3, 1.9] {
            let d1 = (psi.value(x + h) - psi.value(x - h)) / (2.0 * h);
            let d2 = (psi.value(x + h) - 2.0 * psi.value(x) + psi.value(x - h)) / (h * h);
            assert!((d1 - psi.first(x)).abs() < 1e-6);
            assert!((d2 - psi.second(x)).abs() < 1e-5);
        }
    }

    #[test]
    fn boundary_conditions_are_enforced() {
        let k = std::f64::consts::PI;
        // sin vanishes at the ends but its derivative does not
        let bad = TestFunction::new(
            Box::new(move |x| (k * x).sin()),
            Box::new(move |x| k * (k * x).cos()),
            Box::new(move |x| -k * k * (k * x).sin()),
            1.0,
        );
        assert!(matches!(bad, Err(Error::Parameter(_))));
        let good = TestFunction::new(
            Box::new(move |x| (k * x).sin().powi(2)),
            Box::new(move |x| k * (2.0 * k * x).sin()),
            Box::new(move |x| 2.0 * k * k * (2.0 * k * x).cos()),
            1.0,
        );
        assert!(good.is_ok());
    }

    #[test]
    fn zero_solution_has_zero_residual() {
        let (p, noise) = heat(InitialCondition::Zero);
        let sol = solve_mild(&p, &noise, &GridSpec::new(8, 8).unwrap(), 1e-12, 10).unwrap();
        let r = weak_form_residual(&sol, &noise, &TestFunction::sin_cubed(1.0), 1.0).unwrap();
        assert_eq!(r, 0.0);
    }

    #[test]
    fn heat_residual_is_small_and_shrinks() {
        let (p, noise) = heat(InitialCondition::sine(1, 1.0));
        let psi = TestFunction::sin_cubed(1.0);
        let residual = |n_t, n_x| {
            let sol = solve_mild(&p, &noise, &GridSpec::new(n_t, n_x).unwrap(), 1e-13, 20).unwrap();
            weak_form_residual(&sol, &noise, &psi, 0.5).unwrap()
        };
        let coarse = residual(64, 32);
        let fine = residual(128, 64);
        assert!(fine < coarse, "{fine} vs {coarse}");
        assert!(residual(512, 256) < 1e-3);
        let sol = solve_mild(&p, &noise, &GridSpec::new(8, 8).unwrap(), 1e-12, 10).unwrap();
        assert!(weak_form_residual(&sol, &noise, &psi, 0.3).is_err());
    }
}
