//! Truncated alpha-stable space-time white noise on `[0,T] x [0,L]`.
//!
//! A realization is a finite marked point set `{(tau_j, x_j, z_j)}` drawn from
//! a Poisson random measure with intensity `dt dx nu(dz)`, where `nu` is the
//! Levy density `c+ z^{-alpha-1}` on `z > 0` and `c- |z|^{-alpha-1}` on `z < 0`,
//! restricted to sizes `eps < |z| <= K`. Integrals against the noise are
//! compensated by the constant drift density `mu = int z nu(dz)` over the same
//! size window.
//!
//! Jumps below `eps` are not drawn. Their compensated contribution has
//! variance density `eps^{2-alpha} / (2-alpha)`; when the Gaussian correction is
//! enabled it is replaced by one centred Gaussian impulse per lattice cell with
//! that variance.

use std::fmt::Write as _;
use std::io::BufRead;

use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::rng_from_seed;

/// Levy-measure triple `(alpha, c+, c-)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StableParams {
    pub alpha: f64,
    pub c_plus: f64,
    pub c_minus: f64,
}

impl StableParams {
    pub fn new(alpha: f64, c_plus: f64, c_minus: f64) -> Result<Self> {
        let p = StableParams { alpha, c_plus, c_minus };
        p.validate()?;
        Ok(p)
    }

    pub fn symmetric(alpha: f64) -> Result<Self> {
        Self::new(alpha, 0.5, 0.5)
    }

    /// Totally skewed to the right: only positive jumps.
    pub fn positive(alpha: f64) -> Result<Self> {
        Self::new(alpha, 1.0, 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 1.0 && self.alpha < 2.0) {
            return Err(Error::param(format!("alpha must lie in (1,2), got {}", self.alpha)));
        }
        if !(self.c_plus >= 0.0 && self.c_minus >= 0.0) {
            return Err(Error::param("tail weights must be non-negative"));
        }
        if (self.c_plus + self.c_minus - 1.0).abs() > 1e-12 {
            return Err(Error::param(format!(
                "tail weights must sum to 1, got {} + {}",
                self.c_plus, self.c_minus
            )));
        }
        Ok(())
    }

    pub fn is_symmetric(&self) -> bool {
        self.c_plus == self.c_minus
    }

    /// `nu(|z| > k) = k^{-alpha} / alpha`.
    pub fn tail_mass(&self, k: f64) -> f64 {
        k.powf(-self.alpha) / self.alpha
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianLattice {
    pub n_t: usize,
    pub n_x: usize,
}

impl Default for GaussianLattice {
    fn default() -> Self {
        GaussianLattice { n_t: 64, n_x: 64 }
    }
}

/// Jump-size window `(small_cutoff, big_cutoff]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruncationSpec {
    pub big_cutoff: f64,
    pub small_cutoff: f64,
    #[serde(default)]
    pub gaussian_correction: bool,
    #[serde(default)]
    pub gaussian_lattice: GaussianLattice,
}

impl TruncationSpec {
    pub fn new(small_cutoff: f64, big_cutoff: f64) -> Result<Self> {
        let t = TruncationSpec {
            big_cutoff,
            small_cutoff,
            gaussian_correction: false,
            gaussian_lattice: GaussianLattice::default(),
        };
        t.validate()?;
        Ok(t)
    }

    pub fn with_gaussian_correction(mut self, lattice: GaussianLattice) -> Self {
        self.gaussian_correction = true;
        self.gaussian_lattice = lattice;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.small_cutoff > 0.0 && self.small_cutoff < self.big_cutoff) {
            return Err(Error::param(format!(
                "need 0 < small_cutoff < big_cutoff, got {} and {}",
                self.small_cutoff, self.big_cutoff
            )));
        }
        if !self.big_cutoff.is_finite() {
            return Err(Error::param("big_cutoff must be finite"));
        }
        if self.gaussian_correction && (self.gaussian_lattice.n_t == 0 || self.gaussian_lattice.n_x == 0) {
            return Err(Error::param("gaussian lattice must have at least one cell"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceTimeDomain {
    pub horizon: f64,
    pub length: f64,
}

impl SpaceTimeDomain {
    pub fn new(horizon: f64, length: f64) -> Result<Self> {
        let d = SpaceTimeDomain { horizon, length };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0 && self.horizon.is_finite() && self.length > 0.0 && self.length.is_finite()) {
            return Err(Error::param(format!(
                "domain needs T > 0 and L > 0, got T={} L={}",
                self.horizon, self.length
            )));
        }
        Ok(())
    }

    pub fn area(&self) -> f64 {
        self.horizon * self.length
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpRecord {
    pub tau: f64,
    pub x: f64,
    pub z: f64,
}

/// One sampled path of the truncated noise.
///
/// Immutable once built; `jumps` is sorted by time with ties kept in
/// generation order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseRealization {
    pub params: StableParams,
    pub truncation: TruncationSpec,
    pub domain: SpaceTimeDomain,
    pub jumps: Vec<JumpRecord>,
    pub compensator_mu: f64,
    pub seed: u64,
    /// Gaussian impulses standing in for the neglected small jumps.
    /// Empty unless `truncation.gaussian_correction` is set.
    pub gaussian: Vec<JumpRecord>,
}

/// Expected number of sampled jumps, `T L (eps^{-alpha} - K^{-alpha}) / alpha`.
pub fn expected_jump_count(params: &StableParams, trunc: &TruncationSpec, dom: &SpaceTimeDomain) -> f64 {
    let a = params.alpha;
    dom.area() * (trunc.small_cutoff.powf(-a) - trunc.big_cutoff.powf(-a)) / a
}

/// Drift density `mu = int_{eps<|z|<=K} z nu(dz)`.
pub fn compensator_drift(params: &StableParams, trunc: &TruncationSpec) -> Result<f64> {
    params.validate()?;
    trunc.validate()?;
    Ok(window_drift(params, trunc.small_cutoff, trunc.big_cutoff))
}

fn window_drift(params: &StableParams, eps: f64, k: f64) -> f64 {
    let a = params.alpha;
    (params.c_plus - params.c_minus) * (eps.powf(1.0 - a) - k.powf(1.0 - a)) / (a - 1.0)
}

/// `int |z|^p nu^K(dz) = K^{p-alpha} / (p-alpha)` for `p > alpha`.
pub fn levy_moment(params: &StableParams, k: f64, p: f64) -> Result<f64> {
    params.validate()?;
    if !(k > 0.0) {
        return Err(Error::param(format!("cutoff must be positive, got {k}")));
    }
    if !(p > params.alpha) {
        return Err(Error::Divergent { p, alpha: params.alpha });
    }
    Ok(k.powf(p - params.alpha) / (p - params.alpha))
}

/// Same moment over the sampled window `eps < |z| <= K` only.
pub fn window_moment(params: &StableParams, trunc: &TruncationSpec, p: f64) -> Result<f64> {
    let upper = levy_moment(params, trunc.big_cutoff, p)?;
    let lower = levy_moment(params, trunc.small_cutoff, p)?;
    Ok(upper - lower)
}

/// Variance density of the compensated jumps that are not sampled.
pub fn neglected_variance_density(params: &StableParams, trunc: &TruncationSpec) -> f64 {
    let a = params.alpha;
    trunc.small_cutoff.powf(2.0 - a) / (2.0 - a)
}

/// `P[R_K > T] = exp(-T L K^{-alpha} / alpha)`.
pub fn survival_probability(params: &StableParams, k: f64, dom: &SpaceTimeDomain) -> Result<f64> {
    params.validate()?;
    if !(k > 0.0) {
        return Err(Error::param(format!("cutoff must be positive, got {k}")));
    }
    if !(dom.horizon >= 0.0 && dom.length > 0.0) {
        return Err(Error::param("domain needs T >= 0 and L > 0"));
    }
    if k.is_infinite() {
        return Ok(1.0);
    }
    Ok((-dom.horizon * dom.length * params.tail_mass(k)).exp())
}

/// Draws a realization. The draw order is fixed: Poisson count, then for each
/// jump `(tau, x, sign, magnitude)`, then the Gaussian lattice if enabled; the
/// generator is ChaCha8 seeded from `seed`.
pub fn sample_noise(
    params: &StableParams,
    trunc: &TruncationSpec,
    dom: &SpaceTimeDomain,
    seed: u64,
) -> Result<NoiseRealization> {
    params.validate()?;
    trunc.validate()?;
    dom.validate()?;

    let mut rng = rng_from_seed(seed);
    let lambda = expected_jump_count(params, trunc, dom);
    let count = if lambda > 0.0 {
        let dist = Poisson::new(lambda).map_err(|e| Error::param(format!("jump intensity {lambda}: {e}")))?;
        let n: f64 = dist.sample(&mut rng);
        n as usize
    } else {
        0
    };

    let a = params.alpha;
    let eps = trunc.small_cutoff;
    let k = trunc.big_cutoff;
    let lo = eps.powf(-a);
    let span = lo - k.powf(-a);
    let mut jumps = Vec::with_capacity(count);
    for _ in 0..count {
        let tau = dom.horizon * rng.random::<f64>();
        let x = dom.length * rng.random::<f64>();
        let positive = rng.random::<f64>() < params.c_plus;
        // u in (0, 1]
        let u = 1.0 - rng.random::<f64>();
        let mut mag = (lo - u * span).powf(-1.0 / a);
        if mag <= eps {
            mag = eps.next_up();
        }
        if mag > k {
            mag = k;
        }
        let z = if positive { mag } else { -mag };
        jumps.push(JumpRecord { tau, x, z });
    }
    // stable: ties keep generation order
    jumps.sort_by(|p, q| p.tau.total_cmp(&q.tau));

    let mut gaussian = Vec::new();
    if trunc.gaussian_correction {
        let lat = trunc.gaussian_lattice;
        let ct = dom.horizon / lat.n_t as f64;
        let cx = dom.length / lat.n_x as f64;
        let sd = (neglected_variance_density(params, trunc) * ct * cx).sqrt();
        for i in 0..lat.n_t {
            for j in 0..lat.n_x {
                let tau = (i as f64 + rng.random::<f64>()) * ct;
                let x = (j as f64 + rng.random::<f64>()) * cx;
                let g: f64 = StandardNormal.sample(&mut rng);
                gaussian.push(JumpRecord { tau, x, z: sd * g });
            }
        }
        gaussian.sort_by(|p, q| p.tau.total_cmp(&q.tau));
    }

    Ok(NoiseRealization {
        params: *params,
        truncation: *trunc,
        domain: *dom,
        jumps,
        compensator_mu: window_drift(params, eps, k),
        seed,
        gaussian,
    })
}

/// Deterministic midpoint rule used for compensator integrals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quadrature {
    pub n_t: usize,
    pub n_x: usize,
    /// The rule is re-run with `refine` times more cells per axis and the two
    /// values must agree within `atol + rtol |value|`.
    pub refine: usize,
    pub rtol: f64,
    pub atol: f64,
}

impl Default for Quadrature {
    fn default() -> Self {
        Quadrature {
            n_t: 64,
            n_x: 64,
            refine: 2,
            rtol: 1e-6,
            atol: 1e-12,
        }
    }
}

impl Quadrature {
    fn midpoint(&self, n_t: usize, n_x: usize, t_end: f64, length: f64, g: &impl Fn(f64, f64) -> f64) -> f64 {
        let ht = t_end / n_t as f64;
        let hx = length / n_x as f64;
        let mut acc = 0.0;
        for i in 0..n_t {
            let s = (i as f64 + 0.5) * ht;
            for j in 0..n_x {
                acc += g(s, (j as f64 + 0.5) * hx);
            }
        }
        acc * ht * hx
    }

    /// `int_0^{t_end} int_0^L g` with the refinement check.
    pub fn integrate(&self, t_end: f64, length: f64, g: &impl Fn(f64, f64) -> f64) -> Result<f64> {
        if self.n_t == 0 || self.n_x == 0 || self.refine == 0 {
            return Err(Error::param("quadrature needs positive resolution and refinement"));
        }
        if t_end == 0.0 {
            return Ok(0.0);
        }
        let coarse = self.midpoint(self.n_t, self.n_x, t_end, length, g);
        if self.refine == 1 {
            return if coarse.is_finite() {
                Ok(coarse)
            } else {
                Err(Error::Quadrature {
                    coarse,
                    refined: coarse,
                })
            };
        }
        let refined = self.midpoint(self.n_t * self.refine, self.n_x * self.refine, t_end, length, g);
        if !coarse.is_finite()
            || !refined.is_finite()
            || (refined - coarse).abs() > self.atol + self.rtol * refined.abs()
        {
            return Err(Error::Quadrature { coarse, refined });
        }
        Ok(refined)
    }
}

impl NoiseRealization {
    /// First time a jump exceeds `k` in magnitude, `+inf` if none does.
    pub fn stopping_time(&self, k: f64) -> Result<f64> {
        if k > self.truncation.big_cutoff {
            return Err(Error::Unobservable {
                requested: k,
                sampled: self.truncation.big_cutoff,
            });
        }
        Ok(self
            .jumps
            .iter()
            .find(|j| j.z.abs() > k)
            .map_or(f64::INFINITY, |j| j.tau))
    }

    /// Keeps only jumps with `|z| <= k_new` and re-compensates for the new
    /// window. Ordering and seed are preserved, so the result is pathwise
    /// coupled with `self` before the stopping time of `k_new`.
    pub fn restrict(&self, k_new: f64) -> Result<NoiseRealization> {
        if !(k_new > self.truncation.small_cutoff && k_new <= self.truncation.big_cutoff) {
            return Err(Error::param(format!(
                "restriction cutoff {k_new} outside ({}, {}]",
                self.truncation.small_cutoff, self.truncation.big_cutoff
            )));
        }
        let mut truncation = self.truncation;
        truncation.big_cutoff = k_new;
        Ok(NoiseRealization {
            params: self.params,
            truncation,
            domain: self.domain,
            jumps: self.jumps.iter().copied().filter(|j| j.z.abs() <= k_new).collect(),
            compensator_mu: window_drift(&self.params, truncation.small_cutoff, k_new),
            seed: self.seed,
            gaussian: self.gaussian.clone(),
        })
    }

    /// `Y(t)`: sum of the sampled jump sizes up to time `t`.
    pub fn cumulative_jumps(&self, t: f64) -> f64 {
        self.jumps.iter().take_while(|j| j.tau <= t).map(|j| j.z).sum()
    }

    /// Jumps and Gaussian impulses merged in time order. Solvers drive the
    /// equation with this list; the stopping time looks at `jumps` only.
    pub fn impulses(&self) -> Vec<JumpRecord> {
        if self.gaussian.is_empty() {
            return self.jumps.clone();
        }
        let mut all = Vec::with_capacity(self.jumps.len() + self.gaussian.len());
        all.extend_from_slice(&self.jumps);
        all.extend_from_slice(&self.gaussian);
        all.sort_by(|p, q| p.tau.total_cmp(&q.tau));
        all
    }

    /// Compensated integral `int_0^{t_end} int_0^L g dL`:
    /// `sum_{tau_j <= t_end} g(tau_j, x_j) z_j - mu int int g`.
    pub fn integrate(&self, g: impl Fn(f64, f64) -> f64, t_end: f64, quad: &Quadrature) -> Result<f64> {
        if !(t_end >= 0.0 && t_end <= self.domain.horizon) {
            return Err(Error::param(format!(
                "t_end={t_end} outside [0, {}]",
                self.domain.horizon
            )));
        }
        let jump_sum: f64 = self
            .jumps
            .iter()
            .chain(self.gaussian.iter())
            .filter(|j| j.tau <= t_end)
            .map(|j| g(j.tau, j.x) * j.z)
            .sum();
        if self.compensator_mu == 0.0 {
            return Ok(jump_sum);
        }
        let drift = quad.integrate(t_end, self.domain.length, &g)?;
        Ok(jump_sum - self.compensator_mu * drift)
    }

    /// Columnar text form: `#`-prefixed `key=value` header lines, a `tau,x,z`
    /// column line, one row per jump with 17 significant digits, and, when the
    /// Gaussian correction is on, a `# gaussian` marker followed by the
    /// impulses in the same row format.
    pub fn to_columnar(&self) -> String {
        let mut out = String::new();
        let t = &self.truncation;
        let _ = writeln!(out, "# levyheat-noise v1");
        let _ = writeln!(out, "# alpha={:.16e}", self.params.alpha);
        let _ = writeln!(out, "# c_plus={:.16e}", self.params.c_plus);
        let _ = writeln!(out, "# c_minus={:.16e}", self.params.c_minus);
        let _ = writeln!(out, "# big_cutoff={:.16e}", t.big_cutoff);
        let _ = writeln!(out, "# small_cutoff={:.16e}", t.small_cutoff);
        let _ = writeln!(out, "# gaussian_correction={}", t.gaussian_correction);
        let _ = writeln!(
            out,
            "# gaussian_lattice={}x{}",
            t.gaussian_lattice.n_t, t.gaussian_lattice.n_x
        );
        let _ = writeln!(out, "# horizon={:.16e}", self.domain.horizon);
        let _ = writeln!(out, "# length={:.16e}", self.domain.length);
        let _ = writeln!(out, "# seed={}", self.seed);
        let _ = writeln!(out, "# compensator_mu={:.16e}", self.compensator_mu);
        let _ = writeln!(out, "# jumps={}", self.jumps.len());
        let _ = writeln!(out, "tau,x,z");
        for j in &self.jumps {
            let _ = writeln!(out, "{:.16e},{:.16e},{:.16e}", j.tau, j.x, j.z);
        }
        if t.gaussian_correction {
            let _ = writeln!(out, "# gaussian={}", self.gaussian.len());
            for j in &self.gaussian {
                let _ = writeln!(out, "{:.16e},{:.16e},{:.16e}", j.tau, j.x, j.z);
            }
        }
        out
    }

    pub fn from_columnar(reader: impl BufRead) -> Result<NoiseRealization> {
        let mut header = std::collections::HashMap::new();
        let mut jumps = Vec::new();
        let mut gaussian = Vec::new();
        let mut in_gaussian = false;
        let mut seen_columns = false;
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            let lineno = idx + 1;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let rest = rest.trim();
                if let Some((key, value)) = rest.split_once('=') {
                    if key.trim() == "gaussian" {
                        in_gaussian = true;
                    }
                    header.insert(key.trim().to_string(), (lineno, value.trim().to_string()));
                }
                continue;
            }
            if line == "tau,x,z" {
                seen_columns = true;
                continue;
            }
            if !seen_columns {
                return Err(Error::Format {
                    line: lineno,
                    detail: "data row before the tau,x,z column line".into(),
                });
            }
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 3 {
                return Err(Error::Format {
                    line: lineno,
                    detail: format!("expected 3 columns, found {}", cols.len()),
                });
            }
            let parse = |s: &str| {
                s.trim().parse::<f64>().map_err(|e| Error::Format {
                    line: lineno,
                    detail: format!("bad number {s:?}: {e}"),
                })
            };
            let rec = JumpRecord {
                tau: parse(cols[0])?,
                x: parse(cols[1])?,
                z: parse(cols[2])?,
            };
            if in_gaussian {
                gaussian.push(rec);
            } else {
                jumps.push(rec);
            }
        }

        let get = |key: &str| -> Result<(usize, String)> {
            header.get(key).cloned().ok_or_else(|| Error::Format {
                line: 0,
                detail: format!("missing header key {key}"),
            })
        };
        let num = |key: &str| -> Result<f64> {
            let (line, v) = get(key)?;
            v.parse::<f64>().map_err(|e| Error::Format {
                line,
                detail: format!("{key}: {e}"),
            })
        };
        let (line, lattice) = get("gaussian_lattice")?;
        let (lt, lx) = lattice.split_once('x').ok_or_else(|| Error::Format {
            line,
            detail: "gaussian_lattice must be NTxNX".into(),
        })?;
        let lattice_err = |e: std::num::ParseIntError| Error::Format {
            line,
            detail: format!("gaussian_lattice: {e}"),
        };
        let (line_g, gflag) = get("gaussian_correction")?;
        let gaussian_correction = gflag.parse::<bool>().map_err(|e| Error::Format {
            line: line_g,
            detail: format!("gaussian_correction: {e}"),
        })?;
        let (line_s, seed) = get("seed")?;
        let seed = seed.parse::<u64>().map_err(|e| Error::Format {
            line: line_s,
            detail: format!("seed: {e}"),
        })?;

        let params = StableParams::new(num("alpha")?, num("c_plus")?, num("c_minus")?)?;
        let truncation = TruncationSpec {
            big_cutoff: num("big_cutoff")?,
            small_cutoff: num("small_cutoff")?,
            gaussian_correction,
            gaussian_lattice: GaussianLattice {
                n_t: lt.parse().map_err(lattice_err)?,
                n_x: lx.parse().map_err(lattice_err)?,
            },
        };
        truncation.validate()?;
        let domain = SpaceTimeDomain::new(num("horizon")?, num("length")?)?;
        Ok(NoiseRealization {
            params,
            truncation,
            domain,
            jumps,
            compensator_mu: num("compensator_mu")?,
            seed,
            gaussian,
        })
    }
}
