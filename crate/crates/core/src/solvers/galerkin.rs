//! Spectral Galerkin projection onto the first `m` Dirichlet sine modes.
//!
//! With `e_n(x) = sqrt(2/L) sin(n pi x / L)` and `lambda_n = n^2 pi^2 / (2 L^2)`
//! the projected equation is
//!
//! ```text
//! da_n = -lambda_n a_n dt + <f(t, ., u) - mu phi(t, ., u), e_n> dt
//!        + sum_k <phi(t, ., u(t-)) e_k, e_n> e_k(x_j) z_j     at each impulse (tau_j, x_j, z_j)
//! ```
//!
//! Between events (grid times and impulse times) the system is advanced by
//! the second-order exponential Runge-Kutta scheme of Cox and Matthews, so
//! the linear part is integrated exactly. Impulses are applied at their exact
//! times. Inner products use the composite midpoint rule on `N_q` nodes,
//! which is exact for products of two basis functions of index below `N_q`.

use serde::{Deserialize, Serialize};

use super::{GridSolution, GridSpec, ProblemSpec, SolverTag};
use crate::error::{Error, Result};
use crate::noise::NoiseRealization;

/// `e_n(x)`.
pub fn basis(n: usize, x: f64, length: f64) -> f64 {
    (2.0 / length).sqrt() * (n as f64 * std::f64::consts::PI * x / length).sin()
}

/// `lambda_n`, the `n`-th eigenvalue of `-(1/2) d^2/dx^2` with Dirichlet ends.
pub fn eigenvalue(n: usize, length: f64) -> f64 {
    let k = n as f64 * std::f64::consts::PI / length;
    0.5 * k * k
}

/// `int_0^L e_n(x) dx`.
pub fn basis_integral(n: usize, length: f64) -> f64 {
    let np = n as f64 * std::f64::consts::PI;
    let parity = if n % 2 == 1 { 2.0 } else { 0.0 };
    (2.0 * length).sqrt() * parity / np
}

/// Galerkin coefficient paths `a_n(t_i)`, `n = 1..=modes`, at the grid times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralSolution {
    /// Row-major `(n_t + 1) x modes`.
    pub coeffs: Vec<f64>,
    pub modes: usize,
    pub grid: GridSpec,
    pub problem: ProblemSpec,
    pub seed: u64,
    /// `u(tau-, x)` at each noise impulse, in `NoiseRealization::impulses` order.
    pub impulse_states: Vec<f64>,
}

impl SpectralSolution {
    pub fn length(&self) -> f64 {
        self.problem.domain.length
    }

    pub fn basis(&self, n: usize, x: f64) -> f64 {
        basis(n, x, self.length())
    }

    pub fn lambda(&self, n: usize) -> f64 {
        eigenvalue(n, self.length())
    }

    /// Coefficients at grid time `t_i`; entry `n - 1` is `a_n`.
    pub fn row(&self, i: usize) -> &[f64] {
        &self.coeffs[i * self.modes..(i + 1) * self.modes]
    }

    pub fn coeff(&self, i: usize, n: usize) -> f64 {
        self.row(i)[n - 1]
    }

    /// `u_m(t_i, x) = sum_n a_n(t_i) e_n(x)`.
    pub fn eval(&self, i: usize, x: f64) -> f64 {
        self.row(i)
            .iter()
            .enumerate()
            .map(|(n, a)| a * self.basis(n + 1, x))
            .sum()
    }
}

/// One projected coordinate `L_n(t) = sum_{tau_j <= t} e_n(x_j) z_j - mu c_n t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectedPath {
    pub mode: usize,
    /// `(tau_j, e_n(x_j) z_j)` in time order.
    pub jumps: Vec<(f64, f64)>,
    /// `mu int_0^L e_n`, subtracted per unit time.
    pub compensator_rate: f64,
}

impl ProjectedPath {
    pub fn value(&self, t: f64) -> f64 {
        let jumps: f64 = self
            .jumps
            .iter()
            .take_while(|(tau, _)| *tau <= t)
            .map(|(_, inc)| inc)
            .sum();
        jumps - self.compensator_rate * t
    }
}

pub fn project_noise(noise: &NoiseRealization, m: usize) -> Result<Vec<ProjectedPath>> {
    if m == 0 {
        return Err(Error::param("projection needs at least one mode"));
    }
    let length = noise.domain.length;
    let impulses = noise.impulses();
    Ok((1..=m)
        .map(|n| ProjectedPath {
            mode: n,
            jumps: impulses.iter().map(|j| (j.tau, basis(n, j.x, length) * j.z)).collect(),
            compensator_rate: noise.compensator_mu * basis_integral(n, length),
        })
        .collect())
}

/// Trapezoid projection of nodal values on an equispaced grid of `[0, L]`.
/// Exact for sine polynomials of degree below `values.len() - 1`.
pub fn project_grid_row(values: &[f64], m: usize, length: f64) -> Vec<f64> {
    let n_x = values.len() - 1;
    let dx = length / n_x as f64;
    (1..=m)
        .map(|n| {
            (1..n_x)
                .map(|k| values[k] * basis(n, k as f64 * dx, length))
                .sum::<f64>()
                * dx
        })
        .collect()
}

/// Synthesizes `u_m` on the nodes of `grid`, which must share the solution's
/// time steps. Boundary values are exactly zero.
pub fn spectral_to_grid(sol: &SpectralSolution, grid: &GridSpec) -> Result<GridSolution> {
    grid.validate()?;
    if grid.n_t != sol.grid.n_t {
        return Err(Error::param(format!(
            "synthesis grid has {} time steps, solution has {}",
            grid.n_t, sol.grid.n_t
        )));
    }
    let n = grid.n_x;
    let length = sol.length();
    let dx = grid.dx(&sol.problem.domain);
    let table: Vec<Vec<f64>> = (1..=sol.modes)
        .map(|mode| (0..=n).map(|k| basis(mode, k as f64 * dx, length)).collect())
        .collect();
    let mut values = vec![0.0; (grid.n_t + 1) * (n + 1)];
    for i in 0..=grid.n_t {
        let row = &mut values[i * (n + 1)..(i + 1) * (n + 1)];
        for (a, e) in sol.row(i).iter().zip(&table) {
            for k in 1..n {
                row[k] += a * e[k];
            }
        }
    }
    Ok(GridSolution {
        values,
        problem: sol.problem.clone(),
        grid: *grid,
        solver: SolverTag::Galerkin { modes: sol.modes },
        seed: sol.seed,
        windows: Vec::new(),
        impulse_states: sol.impulse_states.clone(),
    })
}

struct Projector<'a> {
    problem: &'a ProblemSpec,
    m: usize,
    h: f64,
    nodes: Vec<f64>,
    /// `table[n * nq + q] = e_{n+1}(y_q)`
    table: Vec<f64>,
    lambda: Vec<f64>,
    mu: f64,
    active_forcing: bool,
}

impl Projector<'_> {
    fn nq(&self) -> usize {
        self.nodes.len()
    }

    fn synthesize(&self, a: &[f64], u: &mut [f64]) {
        let nq = self.nq();
        u.fill(0.0);
        for (n, an) in a.iter().enumerate() {
            if *an == 0.0 {
                continue;
            }
            let e = &self.table[n * nq..(n + 1) * nq];
            for (uq, eq) in u.iter_mut().zip(e) {
                *uq += an * eq;
            }
        }
    }

    fn project(&self, g: &[f64], out: &mut [f64]) {
        let nq = self.nq();
        for (n, o) in out.iter_mut().enumerate() {
            let e = &self.table[n * nq..(n + 1) * nq];
            *o = self.h * g.iter().zip(e).map(|(a, b)| a * b).sum::<f64>();
        }
    }

    /// `<f(t, ., u) - mu phi(t, ., u), e_n>` for the state `a`.
    fn forcing(&self, t: f64, a: &[f64], u: &mut [f64], g: &mut [f64], out: &mut [f64]) {
        if !self.active_forcing {
            out.fill(0.0);
            return;
        }
        self.synthesize(a, u);
        for q in 0..self.nq() {
            let y = self.nodes[q];
            let mut v = self.problem.drift.evaluate(t, y, u[q]);
            if self.mu != 0.0 {
                v -= self.mu * self.problem.noise_coef.evaluate(t, y, u[q]);
            }
            g[q] = v;
        }
        self.project(g, out);
    }
}

struct Workspace {
    u: Vec<f64>,
    g: Vec<f64>,
    f0: Vec<f64>,
    f1: Vec<f64>,
    stage: Vec<f64>,
}

/// Exponential RK2 step of length `span` starting at `t`.
fn advance(p: &Projector<'_>, t: f64, span: f64, a: &mut [f64], ws: &mut Workspace) {
    if span <= 0.0 {
        return;
    }
    p.forcing(t, a, &mut ws.u, &mut ws.g, &mut ws.f0);
    let mut phi2 = vec![0.0; p.m];
    for n in 0..p.m {
        let lam = p.lambda[n];
        let z = lam * span;
        let decay = (-z).exp();
        let phi1 = if z < 1e-8 {
            span * (1.0 - 0.5 * z)
        } else {
            -(-z).exp_m1() / lam
        };
        phi2[n] = if z < 1e-3 {
            span * (0.5 - z / 6.0 + z * z / 24.0)
        } else {
            ((-z).exp_m1() + z) / (lam * z)
        };
        ws.stage[n] = decay * a[n] + phi1 * ws.f0[n];
    }
    if !p.active_forcing {
        a.copy_from_slice(&ws.stage);
        return;
    }
    p.forcing(t + span, &ws.stage, &mut ws.u, &mut ws.g, &mut ws.f1);
    for n in 0..p.m {
        a[n] = ws.stage[n] + phi2[n] * (ws.f1[n] - ws.f0[n]);
    }
}

pub fn solve_galerkin(
    problem: &ProblemSpec,
    noise: &NoiseRealization,
    m: usize,
    grid: &GridSpec,
) -> Result<SpectralSolution> {
    problem.check_noise(noise)?;
    grid.validate()?;
    if m == 0 {
        return Err(Error::param("Galerkin projection needs at least one mode"));
    }
    let length = problem.domain.length;
    let nq = (4 * grid.n_x).max(4 * m).max(64);
    let h = length / nq as f64;
    let nodes: Vec<f64> = (0..nq).map(|q| (q as f64 + 0.5) * h).collect();
    let mut table = vec![0.0; m * nq];
    for n in 0..m {
        for q in 0..nq {
            table[n * nq + q] = basis(n + 1, nodes[q], length);
        }
    }
    let mu = noise.compensator_mu;
    let drift_zero = problem.drift.family == crate::coefficients::CoefficientFamily::Zero;
    let proj = Projector {
        problem,
        m,
        h,
        lambda: (1..=m).map(|n| eigenvalue(n, length)).collect(),
        nodes,
        table,
        mu,
        active_forcing: !(drift_zero && mu == 0.0),
    };
    let mut ws = Workspace {
        u: vec![0.0; nq],
        g: vec![0.0; nq],
        f0: vec![0.0; m],
        f1: vec![0.0; m],
        stage: vec![0.0; m],
    };

    let u0: Vec<f64> = proj.nodes.iter().map(|&y| problem.init.eval(y, length)).collect();
    let mut a = vec![0.0; m];
    proj.project(&u0, &mut a);

    let impulses = noise.impulses();
    let mut states = Vec::with_capacity(impulses.len());
    let dt = grid.dt(&problem.domain);
    let mut coeffs = Vec::with_capacity((grid.n_t + 1) * m);
    coeffs.extend_from_slice(&a);
    let mut w = vec![0.0; nq];
    let mut jump = vec![0.0; m];
    let mut next = 0;
    for i in 0..grid.n_t {
        let mut t = i as f64 * dt;
        let t_end = (i + 1) as f64 * dt;
        while next < impulses.len() && impulses[next].tau <= t_end {
            let imp = impulses[next];
            advance(&proj, t, imp.tau - t, &mut a, &mut ws);
            t = t.max(imp.tau);

            proj.synthesize(&a, &mut ws.u);
            let left: f64 = a
                .iter()
                .enumerate()
                .map(|(n, an)| an * basis(n + 1, imp.x, length))
                .sum();
            states.push(left);
            let ex: Vec<f64> = (1..=m).map(|n| basis(n, imp.x, length)).collect();
            for q in 0..nq {
                let delta: f64 = (0..m).map(|n| ex[n] * proj.table[n * nq + q]).sum();
                w[q] = problem.noise_coef.evaluate(imp.tau, proj.nodes[q], ws.u[q]) * delta;
            }
            proj.project(&w, &mut jump);
            for n in 0..m {
                a[n] += imp.z * jump[n];
            }
            next += 1;
        }
        advance(&proj, t, t_end - t, &mut a, &mut ws);
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::BlowUp { t: t_end });
        }
        coeffs.extend_from_slice(&a);
    }

    Ok(SpectralSolution {
        coeffs,
        modes: m,
        grid: *grid,
        problem: problem.clone(),
        seed: noise.seed,
        impulse_states: states,
    })
}
