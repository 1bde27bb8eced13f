//! Picard iteration on the mild form.
//!
//! The grid state at `t_i` is split as `u_i = S_i + sum_{j in A_i} a_j G_{t_i - tau_j}(., x_j)`,
//! where `S_i` is a field resolved on the grid and `A_i` are the impulses of
//! the step `(t_{i-1}, t_i]`. Their kernels are still narrower than the grid
//! at `t_i`, so they are evaluated exactly; one step later they are added to
//! `S` at their exact propagated profile. `S` itself advances by the
//! semigroup:
//!
//! ```text
//! S_{i+1} = P (S_i + dt/2 F_i) + dt/2 F_{i+1} + sum_{j in A_i} a_j G_{t_{i+1} - tau_j}(., x_j)
//! F = f(t, x, u) - mu phi(t, x, u)
//! a_j = phi(tau_j, x_j, u(tau_j-, x_j)) z_j
//! ```
//!
//! with `P` the trapezoid discretization of `G_dt`. The left limit
//! `u(tau_j-, x_j)` is the time/space interpolation of `S` plus the exact
//! kernels of every earlier impulse that is not yet folded into `S`.
//!
//! The unknowns of a window of steps (grid rows and impulse left limits) are
//! found by Picard iteration of this map, swept forward in time so that each
//! sweep already uses the updated rows and amplitudes of earlier steps. Only
//! the implicit end-of-step forcing lags one iterate behind. Windows whose
//! observed contraction ratio reaches `halving_ratio` are split in half and
//! retried.

use serde::{Deserialize, Serialize};

use super::{GridSolution, GridSpec, ProblemSpec, SolverTag};
use crate::error::{Error, Result};
use crate::kernel::KernelEvaluator;
use crate::noise::{NoiseRealization, SpaceTimeDomain};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MildOptions {
    /// Exit when successive iterates differ by at most `tol * max(1, sup |u|)`.
    pub tol: f64,
    pub max_iter: usize,
    pub window_steps: usize,
    pub halving_ratio: f64,
}

impl Default for MildOptions {
    fn default() -> Self {
        MildOptions {
            tol: 1e-13,
            max_iter: 200,
            window_steps: 8,
            halving_ratio: 0.9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowStats {
    pub start_step: usize,
    pub steps: usize,
    pub iterations: usize,
    /// Largest ratio of successive sup-norm increments.
    pub ratio: f64,
    pub final_increment: f64,
}

struct Impulse {
    tau: f64,
    x: f64,
    z: f64,
    step: usize,
    /// Kernel profile on interior nodes at the end of its own step.
    spike: Vec<f64>,
    /// Profile one step later, when it is folded into the resolved field.
    fold: Option<Vec<f64>>,
    /// `(l, G_{tau - tau_l}(x, x_l))` for unfolded earlier impulses `l`.
    pairs: Vec<(usize, f64)>,
}

/// Precomputed propagator for one domain and grid; reusable across paths.
pub struct MildSolver {
    domain: SpaceTimeDomain,
    grid: GridSpec,
    kernel: KernelEvaluator,
    options: MildOptions,
    /// Interior propagator, `(n_x - 1)^2`, row-major.
    prop: Vec<f64>,
}

enum WindowFailure {
    Halve,
    Fatal(Error),
}

impl From<Error> for WindowFailure {
    fn from(e: Error) -> Self {
        WindowFailure::Fatal(e)
    }
}

struct WindowResult {
    rows: Vec<Vec<f64>>,
    resolved_end: Vec<f64>,
    states: Vec<f64>,
    stats: WindowStats,
}

pub fn solve_mild(
    problem: &ProblemSpec,
    noise: &NoiseRealization,
    grid: &GridSpec,
    tol: f64,
    max_iter: usize,
) -> Result<GridSolution> {
    let options = MildOptions {
        tol,
        max_iter,
        ..MildOptions::default()
    };
    MildSolver::new(problem.domain, *grid, options)?.solve(problem, noise)
}

impl MildSolver {
    pub fn new(domain: SpaceTimeDomain, grid: GridSpec, options: MildOptions) -> Result<Self> {
        domain.validate()?;
        grid.validate()?;
        if !(options.tol > 0.0) || options.max_iter == 0 || options.window_steps == 0 {
            return Err(Error::param(
                "mild solver needs tol > 0, max_iter >= 1, window_steps >= 1",
            ));
        }
        let kernel = KernelEvaluator::new(domain.length);
        let dt = grid.dt(&domain);
        let dx = grid.dx(&domain);
        let m = grid.n_x - 1;
        let mut prop = vec![0.0; m * m];
        for a in 0..m {
            let xa = (a + 1) as f64 * dx;
            for b in a..m {
                let g = kernel.eval(dt, xa, (b + 1) as f64 * dx)? * dx;
                prop[a * m + b] = g;
                prop[b * m + a] = g;
            }
        }
        Ok(MildSolver {
            domain,
            grid,
            kernel,
            options,
            prop,
        })
    }

    pub fn options(&self) -> &MildOptions {
        &self.options
    }

    fn dt(&self) -> f64 {
        self.grid.dt(&self.domain)
    }

    fn dx(&self) -> f64 {
        self.grid.dx(&self.domain)
    }

    fn step_of(&self, tau: f64) -> usize {
        let dt = self.dt();
        let last = self.grid.n_t - 1;
        let mut i = ((tau / dt).ceil() as usize).saturating_sub(1).min(last);
        while i > 0 && tau <= i as f64 * dt {
            i -= 1;
        }
        while i < last && tau > (i + 1) as f64 * dt {
            i += 1;
        }
        i
    }

    fn profile(&self, age: f64, x: f64) -> Result<Vec<f64>> {
        let dx = self.dx();
        let m = self.grid.n_x - 1;
        if age <= 0.0 {
            // impulse sits exactly on the grid time: its kernel is still a delta
            return Ok(vec![0.0; m]);
        }
        (0..m).map(|k| self.kernel.eval(age, (k + 1) as f64 * dx, x)).collect()
    }

    fn prepare(&self, noise: &NoiseRealization) -> Result<(Vec<Impulse>, Vec<usize>)> {
        let dt = self.dt();
        let n_t = self.grid.n_t;
        let mut impulses = Vec::new();
        for rec in noise.impulses() {
            let step = self.step_of(rec.tau);
            let spike = self.profile((step + 1) as f64 * dt - rec.tau, rec.x)?;
            let fold = if step + 2 <= n_t {
                Some(self.profile((step + 2) as f64 * dt - rec.tau, rec.x)?)
            } else {
                None
            };
            impulses.push(Impulse {
                tau: rec.tau,
                x: rec.x,
                z: rec.z,
                step,
                spike,
                fold,
                pairs: Vec::new(),
            });
        }
        // first impulse index of each step, plus a sentinel
        let mut starts = vec![impulses.len(); n_t + 1];
        for (j, imp) in impulses.iter().enumerate().rev() {
            starts[imp.step] = j;
        }
        for i in (0..n_t).rev() {
            starts[i] = starts[i].min(starts[i + 1]);
        }
        for j in 0..impulses.len() {
            let step = impulses[j].step;
            let from = if step == 0 { 0 } else { starts[step - 1] };
            let mut pairs = Vec::new();
            for l in from..j {
                let age = impulses[j].tau - impulses[l].tau;
                if age > 0.0 {
                    let w = self.kernel.eval(age, impulses[j].x, impulses[l].x)?;
                    if w != 0.0 {
                        pairs.push((l, w));
                    }
                }
            }
            impulses[j].pairs = pairs;
        }
        Ok((impulses, starts))
    }

    fn apply_prop(&self, input: &[f64], out: &mut [f64]) {
        let m = self.grid.n_x - 1;
        out[0] = 0.0;
        out[m + 1] = 0.0;
        for a in 0..m {
            let row = &self.prop[a * m..(a + 1) * m];
            let mut acc = 0.0;
            for (p, v) in row.iter().zip(&input[1..=m]) {
                acc += p * v;
            }
            out[a + 1] = acc;
        }
    }

    fn interp(&self, field: &[f64], x: f64) -> f64 {
        let n = self.grid.n_x;
        let pos = (x / self.dx()).clamp(0.0, n as f64);
        let k = (pos.floor() as usize).min(n - 1);
        let frac = pos - k as f64;
        field[k] * (1.0 - frac) + field[k + 1] * frac
    }

    fn forcing(&self, problem: &ProblemSpec, mu: f64, t: f64, u: &[f64], out: &mut [f64]) {
        let dx = self.dx();
        let n = self.grid.n_x;
        out[0] = 0.0;
        out[n] = 0.0;
        for k in 1..n {
            let x = k as f64 * dx;
            let mut v = problem.drift.evaluate(t, x, u[k]);
            if mu != 0.0 {
                v -= mu * problem.noise_coef.evaluate(t, x, u[k]);
            }
            out[k] = v;
        }
    }

    pub fn solve(&self, problem: &ProblemSpec, noise: &NoiseRealization) -> Result<GridSolution> {
        problem.check_noise(noise)?;
        if problem.domain != self.domain {
            return Err(Error::param("problem domain differs from the solver's domain"));
        }
        let n = self.grid.n_x;
        let n_t = self.grid.n_t;
        let dx = self.dx();
        let mu = noise.compensator_mu;
        let (impulses, starts) = self.prepare(noise)?;

        let mut u0: Vec<f64> = (0..=n)
            .map(|k| problem.init.eval(k as f64 * dx, self.domain.length))
            .collect();
        u0[0] = 0.0;
        u0[n] = 0.0;

        let mut values = Vec::with_capacity((n_t + 1) * (n + 1));
        values.extend_from_slice(&u0);
        let mut amps = vec![0.0; impulses.len()];
        let mut states = vec![0.0; impulses.len()];
        let mut windows = Vec::new();

        let mut resolved = u0.clone();
        let mut current = u0;
        let mut step = 0;
        while step < n_t {
            let mut width = self.options.window_steps.min(n_t - step);
            let result = loop {
                match self.run_window(
                    problem, mu, &impulses, &starts, step, width, &resolved, &current, &mut amps,
                ) {
                    Ok(r) => break r,
                    Err(WindowFailure::Halve) => width = (width / 2).max(1),
                    Err(WindowFailure::Fatal(e)) => return Err(e),
                }
            };
            for j in starts[step]..starts[step + width] {
                states[j] = result.states[j - starts[step]];
            }
            for row in &result.rows {
                values.extend_from_slice(row);
            }
            current = result.rows.last().cloned().expect("window has at least one step");
            resolved = result.resolved_end;
            windows.push(result.stats);
            step += width;
        }

        Ok(GridSolution {
            values,
            problem: problem.clone(),
            grid: self.grid,
            solver: SolverTag::Mild,
            seed: noise.seed,
            windows,
            impulse_states: states,
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn run_window(
        &self,
        problem: &ProblemSpec,
        mu: f64,
        impulses: &[Impulse],
        starts: &[usize],
        start: usize,
        width: usize,
        resolved_start: &[f64],
        current_start: &[f64],
        amps: &mut [f64],
    ) -> std::result::Result<WindowResult, WindowFailure> {
        let n = self.grid.n_x;
        let dt = self.dt();
        let end = start + width;
        let j0 = starts[start];
        let j1 = starts[end];
        let opts = &self.options;

        let mut forcing_start = vec![0.0; n + 1];
        self.forcing(problem, mu, start as f64 * dt, current_start, &mut forcing_start);

        let mut rows_old: Vec<Vec<f64>> = vec![current_start.to_vec(); width];
        let mut states_old: Vec<f64> = impulses[j0..j1]
            .iter()
            .map(|imp| self.interp(current_start, imp.x))
            .collect();
        let mut rows_new = rows_old.clone();
        let mut states_new = states_old.clone();
        let mut f_here = vec![0.0; n + 1];
        let mut f_next = vec![0.0; n + 1];
        let mut resolved = vec![0.0; n + 1];
        let mut resolved_next = vec![0.0; n + 1];
        let mut tmp = vec![0.0; n + 1];

        let mut prev_increment = f64::NAN;
        let mut ratio: f64 = 0.0;
        let mut iterations = 0;
        loop {
            iterations += 1;
            // forward sweep: rows and amplitudes earlier in the window are
            // taken from this sweep, only the implicit end-of-step forcing
            // uses the previous iterate
            resolved.copy_from_slice(resolved_start);
            f_here.copy_from_slice(&forcing_start);
            for i in start..end {
                let r = i - start;
                let t_next = (i + 1) as f64 * dt;
                self.forcing(problem, mu, t_next, &rows_old[r], &mut f_next);
                for k in 0..=n {
                    tmp[k] = resolved[k] + 0.5 * dt * f_here[k];
                }
                self.apply_prop(&tmp, &mut resolved_next);
                for k in 1..n {
                    resolved_next[k] += 0.5 * dt * f_next[k];
                }

                let t_i = i as f64 * dt;
                for j in starts[i]..starts[i + 1] {
                    let imp = &impulses[j];
                    let theta = (imp.tau - t_i) / dt;
                    let mut left =
                        (1.0 - theta) * self.interp(&resolved, imp.x) + theta * self.interp(&resolved_next, imp.x);
                    for &(l, w) in &imp.pairs {
                        left += w * amps[l];
                    }
                    states_new[j - j0] = left;
                    amps[j] = problem.noise_coef.evaluate(imp.tau, imp.x, left) * imp.z;
                }

                // fold the previous step's impulses into the resolved field
                if i > 0 {
                    for l in starts[i - 1]..starts[i] {
                        if let Some(fold) = &impulses[l].fold {
                            let a = amps[l];
                            for k in 1..n {
                                resolved_next[k] += a * fold[k - 1];
                            }
                        }
                    }
                }

                let row = &mut rows_new[r];
                row.copy_from_slice(&resolved_next);
                for j in starts[i]..starts[i + 1] {
                    let a = amps[j];
                    if a != 0.0 {
                        for k in 1..n {
                            row[k] += a * impulses[j].spike[k - 1];
                        }
                    }
                }
                row[0] = 0.0;
                row[n] = 0.0;
                if row.iter().any(|v| !v.is_finite()) {
                    return Err(WindowFailure::Fatal(Error::BlowUp { t: t_next }));
                }
                self.forcing(problem, mu, t_next, row, &mut f_here);
                std::mem::swap(&mut resolved, &mut resolved_next);
            }

            let mut increment: f64 = 0.0;
            let mut scale: f64 = 1.0;
            for (new, old) in rows_new.iter().zip(&rows_old) {
                for (a, b) in new.iter().zip(old) {
                    increment = increment.max((a - b).abs());
                    scale = scale.max(a.abs());
                }
            }
            for (a, b) in states_new.iter().zip(&states_old) {
                increment = increment.max((a - b).abs());
                scale = scale.max(a.abs());
            }
            if states_new.iter().any(|v| !v.is_finite()) {
                return Err(WindowFailure::Fatal(Error::BlowUp { t: start as f64 * dt }));
            }

            let threshold = opts.tol * scale;
            if prev_increment > 100.0 * threshold {
                ratio = ratio.max(increment / prev_increment);
            }
            if increment <= threshold {
                return Ok(WindowResult {
                    rows: rows_new,
                    resolved_end: resolved,
                    states: states_new,
                    stats: WindowStats {
                        start_step: start,
                        steps: width,
                        iterations,
                        ratio,
                        final_increment: increment,
                    },
                });
            }
            let stalled = iterations >= 3 && ratio >= opts.halving_ratio;
            if width > 1 && (stalled || iterations >= opts.max_iter) {
                return Err(WindowFailure::Halve);
            }
            if iterations >= opts.max_iter {
                return Err(WindowFailure::Fatal(Error::NonContraction {
                    start_step: start,
                    steps: width,
                    ratio,
                    iterations,
                }));
            }
            prev_increment = increment;
            std::mem::swap(&mut rows_old, &mut rows_new);
            std::mem::swap(&mut states_old, &mut states_new);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{CoefficientSpec, InitialCondition};
    use crate::noise::{sample_noise, JumpRecord, StableParams, TruncationSpec};
    use std::f64::consts::PI;

    fn problem(drift: CoefficientSpec, noise_coef: CoefficientSpec, init: InitialCondition) -> ProblemSpec {
        ProblemSpec {
            params: StableParams::symmetric(1.5).unwrap(),
            truncation: TruncationSpec::new(0.05, 1.0).unwrap(),
            domain: SpaceTimeDomain::new(1.0, 1.0).unwrap(),
            drift,
            noise_coef,
            init,
        }
    }

    fn handmade_noise(p: &ProblemSpec, jumps: Vec<JumpRecord>) -> NoiseRealization {
        NoiseRealization {
            params: p.params,
            truncation: p.truncation,
            domain: p.domain,
            jumps,
            compensator_mu: 0.0,
            seed: 0,
            gaussian: vec![],
        }
    }

    #[test]
    fn heat_flow_of_first_mode() {
        let p = problem(
            CoefficientSpec::zero(),
            CoefficientSpec::zero(),
            InitialCondition::sine(1, 1.0),
        );
        let noise = handmade_noise(&p, vec![]);
        let grid = GridSpec::new(128, 64).unwrap();
        let sol = solve_mild(&p, &noise, &grid, 1e-13, 50).unwrap();
        let peak = sol.at(128, 32);
        assert!((peak - 0.007191883355826368).abs() < 1e-6, "{peak}");
        assert!(sol.picard_iterations().iter().all(|&k| k <= 2));
    }

    #[test]
    fn zero_problem_stays_zero_in_one_iteration() {
        let p = problem(
            CoefficientSpec::clipped_linear(1.0, 2.0),
            CoefficientSpec::clipped_linear(0.5, 1.0),
            InitialCondition::Zero,
        );
        let noise = sample_noise(&p.params, &p.truncation, &p.domain, 3).unwrap();
        let sol = solve_mild(&p, &noise, &GridSpec::new(32, 16).unwrap(), 1e-13, 50).unwrap();
        assert!(sol.values.iter().all(|&v| v == 0.0));
        assert!(sol.picard_iterations().iter().all(|&k| k == 1));
    }

    #[test]
    fn single_jump_adds_kernel() {
        // phi = 2, one jump: u(t) = heat flow of u0 + 2 z G_{t - tau}(., x_j)
        let p = problem(
            CoefficientSpec::zero(),
            CoefficientSpec::constant(2.0),
            InitialCondition::Zero,
        );
        let noise = handmade_noise(
            &p,
            vec![JumpRecord {
                tau: 0.301,
                x: 0.4,
                z: 0.7,
            }],
        );
        let grid = GridSpec::new(64, 64).unwrap();
        let sol = solve_mild(&p, &noise, &grid, 1e-13, 50).unwrap();
        let ke = KernelEvaluator::new(1.0);
        let dt = 1.0 / 64.0;
        for i in [20usize, 30, 40, 64] {
            for k in [10usize, 26, 40] {
                let t = i as f64 * dt;
                let expect = if t > 0.301 {
                    1.4 * ke.eval(t - 0.301, k as f64 / 64.0, 0.4).unwrap()
                } else {
                    0.0
                };
                assert!(
                    (sol.at(i, k) - expect).abs() < 1e-6,
                    "i={i} k={k}: {} vs {expect}",
                    sol.at(i, k)
                );
            }
        }
    }

    #[test]
    fn multiplicative_jump_uses_left_limit() {
        // phi(u) = u, u0 = sin(pi x): the jump amplitude is z * u(tau-, x_j)
        let p = problem(
            CoefficientSpec::zero(),
            CoefficientSpec::affine(0.0, 1.0),
            InitialCondition::sine(1, 1.0),
        );
        let noise = handmade_noise(
            &p,
            vec![JumpRecord {
                tau: 0.2003,
                x: 0.5,
                z: 0.3,
            }],
        );
        let grid = GridSpec::new(256, 128).unwrap();
        let sol = solve_mild(&p, &noise, &grid, 1e-13, 50).unwrap();
        let expect = (-PI * PI * 0.2003 / 2.0).exp();
        assert!(
            (sol.impulse_states[0] - expect).abs() < 1e-4,
            "{}",
            sol.impulse_states[0]
        );
    }

    #[test]
    fn deterministic_and_bitwise_repeatable() {
        let p = problem(
            CoefficientSpec::sine_modulated(0.5, 2.0),
            CoefficientSpec::clipped_linear(1.0, 2.0),
            InitialCondition::Bump {
                center: 0.5,
                width: 0.3,
                height: 1.0,
            },
        );
        let noise = sample_noise(&p.params, &p.truncation, &p.domain, 17).unwrap();
        let grid = GridSpec::new(64, 32).unwrap();
        let a = solve_mild(&p, &noise, &grid, 1e-13, 100).unwrap();
        let b = solve_mild(&p, &noise, &grid, 1e-13, 100).unwrap();
        assert_eq!(a.values, b.values);
        assert!(a.windows.iter().all(|w| w.ratio < 1.0), "{:?}", a.windows);
        for i in 0..=64 {
            assert_eq!(a.at(i, 0), 0.0);
            assert_eq!(a.at(i, 32), 0.0);
        }
    }

    #[test]
    fn superposition_with_additive_noise() {
        let sigma = CoefficientSpec::constant(0.8);
        let init = InitialCondition::Bump {
            center: 0.4,
            width: 0.3,
            height: 1.0,
        };
        let full = problem(CoefficientSpec::zero(), sigma.clone(), init.clone());
        let conv = problem(CoefficientSpec::zero(), sigma, InitialCondition::Zero);
        let heat = problem(CoefficientSpec::zero(), CoefficientSpec::zero(), init);
        let noise = sample_noise(&full.params, &full.truncation, &full.domain, 8).unwrap();
        let grid = GridSpec::new(64, 32).unwrap();
        let u = solve_mild(&full, &noise, &grid, 1e-13, 100).unwrap();
        let s = solve_mild(&conv, &noise, &grid, 1e-13, 100).unwrap();
        let h = solve_mild(&heat, &noise, &grid, 1e-13, 100).unwrap();
        for idx in 0..u.values.len() {
            let scale = 1.0 + u.values[idx].abs() + s.values[idx].abs();
            assert!((u.values[idx] - s.values[idx] - h.values[idx]).abs() < 1e-12 * scale);
        }
    }

    #[test]
    fn rejects_mismatched_noise() {
        let p = problem(CoefficientSpec::zero(), CoefficientSpec::zero(), InitialCondition::Zero);
        let other = p.with_cutoff(0.5);
        let noise = sample_noise(&other.params, &other.truncation, &other.domain, 1).unwrap();
        assert!(matches!(
            solve_mild(&p, &noise, &GridSpec::new(8, 8).unwrap(), 1e-12, 10),
            Err(Error::Precondition { .. })
        ));
    }

    #[test]
    fn non_contraction_is_reported() {
        // a huge Lipschitz drift on a coarse step cannot contract
        let p = problem(
            CoefficientSpec::affine(0.0, 5000.0),
            CoefficientSpec::zero(),
            InitialCondition::sine(1, 1.0),
        );
        let noise = handmade_noise(&p, vec![]);
        let opts = MildOptions {
            max_iter: 30,
            window_steps: 1,
            ..MildOptions::default()
        };
        let err = MildSolver::new(p.domain, GridSpec::new(4, 8).unwrap(), opts)
            .unwrap()
            .solve(&p, &noise)
            .unwrap_err();
        assert!(
            matches!(err, Error::NonContraction { .. } | Error::BlowUp { .. }),
            "{err:?}"
        );
    }
}
