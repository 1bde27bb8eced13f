//! Dirichlet heat kernel of `d/dt - (1/2) d^2/dx^2` on `[0, L]`.
//!
//! Two representations are available:
//!
//! * image sum: `(2 pi t)^{-1/2} sum_k [exp(-(y-x+2kL)^2/2t) - exp(-(y+x+2kL)^2/2t)]`
//! * sine series: `(2/L) sum_{n>=1} sin(n pi x/L) sin(n pi y/L) exp(-n^2 pi^2 t / 2L^2)`
//!
//! The image sum converges fast for small `t` and the sine series for large
//! `t`. Each call picks the smallest truncation whose analytic tail bound is
//! below `abs_tol`; if that needs more terms than configured the call fails
//! instead of returning an uncertified value.

use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelMethod {
    ImageSum,
    Spectral,
    /// Image sum below `t = L^2 / pi`, sine series above.
    Auto,
}

impl KernelMethod {
    fn name(self) -> &'static str {
        match self {
            KernelMethod::ImageSum => "image_sum",
            KernelMethod::Spectral => "spectral",
            KernelMethod::Auto => "auto",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelEvaluator {
    pub length: f64,
    pub method: KernelMethod,
    pub image_terms: usize,
    pub spectral_modes: usize,
    pub abs_tol: f64,
}

impl KernelEvaluator {
    pub fn new(length: f64) -> Self {
        KernelEvaluator {
            length,
            method: KernelMethod::Auto,
            image_terms: 16,
            spectral_modes: 256,
            abs_tol: 1e-10,
        }
    }

    pub fn with_method(mut self, method: KernelMethod) -> Self {
        self.method = method;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.length > 0.0 && self.length.is_finite()) {
            return Err(Error::param(format!(
                "kernel length must be positive, got {}",
                self.length
            )));
        }
        if self.image_terms < 1 || self.spectral_modes < 1 || !(self.abs_tol > 0.0) {
            return Err(Error::param(
                "kernel needs image_terms >= 1, spectral_modes >= 1, abs_tol > 0",
            ));
        }
        Ok(())
    }

    pub fn crossover(&self) -> f64 {
        self.length * self.length / PI
    }

    fn resolve(&self, t: f64) -> KernelMethod {
        match self.method {
            KernelMethod::Auto if t < self.crossover() => KernelMethod::ImageSum,
            KernelMethod::Auto => KernelMethod::Spectral,
            m => m,
        }
    }

    /// Upper bound on the image-sum terms with `|k| > n`.
    pub fn image_tail_bound(&self, t: f64, n: usize) -> f64 {
        let l = self.length;
        // every omitted Gaussian has |argument| >= 2(|k|-1)L
        let a = 2.0 * l * l / t;
        let n = n as f64;
        let lead = (-a * n * n).exp();
        let ratio = (-a * (2.0 * n + 1.0)).exp();
        4.0 / (2.0 * PI * t).sqrt() * lead / (1.0 - ratio)
    }

    /// Upper bound on the sine-series terms with `n > modes`.
    pub fn spectral_tail_bound(&self, t: f64, modes: usize) -> f64 {
        let l = self.length;
        let c = PI * PI * t / (2.0 * l * l);
        let m = modes as f64 + 1.0;
        let lead = (-c * m * m).exp();
        let ratio = (-c * (2.0 * m + 1.0)).exp();
        if ratio >= 1.0 {
            return f64::INFINITY;
        }
        2.0 / l * lead / (1.0 - ratio)
    }

    fn image_terms_needed(&self, t: f64) -> Result<usize> {
        let mut n = 1;
        while self.image_tail_bound(t, n) > self.abs_tol {
            n += 1;
            if n > self.image_terms {
                return Err(Error::KernelAccuracy {
                    t,
                    method: "image_sum",
                    needed: n,
                    available: self.image_terms,
                    abs_tol: self.abs_tol,
                });
            }
        }
        Ok(n)
    }

    fn spectral_modes_needed(&self, t: f64) -> Result<usize> {
        if self.spectral_tail_bound(t, self.spectral_modes) > self.abs_tol {
            return Err(Error::KernelAccuracy {
                t,
                method: "spectral",
                needed: self.spectral_modes + 1,
                available: self.spectral_modes,
                abs_tol: self.abs_tol,
            });
        }
        // bisect for the smallest sufficient mode count
        let (mut lo, mut hi) = (1usize, self.spectral_modes);
        if self.spectral_tail_bound(t, lo) <= self.abs_tol {
            return Ok(lo);
        }
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if self.spectral_tail_bound(t, mid) <= self.abs_tol {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(hi)
    }

    /// Smallest `t` at which the sine series with the configured modes is
    /// certified, and largest `t` for the image sum.
    pub fn validity_range(&self, method: KernelMethod) -> (f64, f64) {
        match method {
            KernelMethod::Spectral => {
                let (mut lo, mut hi) = (1e-12 * self.length * self.length, 1e3 * self.length * self.length);
                for _ in 0..200 {
                    let mid = (lo * hi).sqrt();
                    if self.spectral_tail_bound(mid, self.spectral_modes) <= self.abs_tol {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                (hi, f64::INFINITY)
            }
            KernelMethod::ImageSum => {
                let (mut lo, mut hi) = (1e-12 * self.length * self.length, 1e6 * self.length * self.length);
                for _ in 0..200 {
                    let mid = (lo * hi).sqrt();
                    if self.image_tail_bound(mid, self.image_terms) <= self.abs_tol {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                (0.0, lo)
            }
            KernelMethod::Auto => (0.0, f64::INFINITY),
        }
    }

    fn check_point(&self, x: f64) -> Result<()> {
        if !(x >= 0.0 && x <= self.length) {
            return Err(Error::param(format!("point {x} outside [0, {}]", self.length)));
        }
        Ok(())
    }

    /// `G_t(x, y)` for `t > 0`.
    pub fn eval(&self, t: f64, x: f64, y: f64) -> Result<f64> {
        if t == 0.0 {
            return Err(Error::DeltaSingularity);
        }
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::param(format!("kernel time must be positive, got {t}")));
        }
        self.check_point(x)?;
        self.check_point(y)?;
        self.eval_with(self.resolve(t), t, x, y)
    }

    /// Evaluation with an explicit representation, bypassing `Auto`.
    pub fn eval_with(&self, method: KernelMethod, t: f64, x: f64, y: f64) -> Result<f64> {
        let l = self.length;
        if x == 0.0 || y == 0.0 || x == l || y == l {
            return Ok(0.0);
        }
        match method {
            KernelMethod::ImageSum => {
                let n = self.image_terms_needed(t)? as i64;
                let two_t = 2.0 * t;
                let mut acc = 0.0;
                for k in -n..=n {
                    let shift = 2.0 * k as f64 * l;
                    let d1 = y - x + shift;
                    let d2 = y + x + shift;
                    acc += (-d1 * d1 / two_t).exp() - (-d2 * d2 / two_t).exp();
                }
                Ok(acc / (2.0 * PI * t).sqrt())
            }
            KernelMethod::Spectral => {
                let modes = self.spectral_modes_needed(t)?;
                let c = PI * PI * t / (2.0 * l * l);
                let (ax, ay) = (PI * x / l, PI * y / l);
                let mut acc = 0.0;
                for n in 1..=modes {
                    let nf = n as f64;
                    acc += (nf * ax).sin() * (nf * ay).sin() * (-c * nf * nf).exp();
                }
                Ok(2.0 / l * acc)
            }
            KernelMethod::Auto => self.eval(t, x, y),
        }
    }

    /// `x -> int_0^L G_t(x,y) h(y) dy` by the trapezoid rule on `n_quad`
    /// uniform intervals. At `t = 0` the kernel is the identity.
    pub fn convolve<F: Fn(f64) -> f64>(&self, t: f64, h: F, n_quad: usize) -> Result<Convolution<'_, F>> {
        if n_quad < 2 {
            return Err(Error::param("convolution needs n_quad >= 2"));
        }
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::param(format!("convolution time must be >= 0, got {t}")));
        }
        Ok(Convolution { ke: self, t, h, n_quad })
    }

    /// `|int_0^L G_s(x,y) G_t(y,z) dy - G_{s+t}(x,z)|`.
    pub fn check_semigroup(&self, s: f64, t: f64, x: f64, z: f64, n_quad: usize) -> Result<f64> {
        if !(s > 0.0 && t > 0.0) {
            return Err(Error::param("semigroup check needs s, t > 0"));
        }
        if n_quad < 2 {
            return Err(Error::param("semigroup check needs n_quad >= 2"));
        }
        let h = self.length / n_quad as f64;
        let mut acc = 0.0;
        for q in 1..n_quad {
            let y = q as f64 * h;
            acc += self.eval(s, x, y)? * self.eval(t, y, z)?;
        }
        Ok((acc * h - self.eval(s + t, x, z)?).abs())
    }

    /// Quadrature value of `int |G_t(x,y)|^p dy` and the constant
    /// `C = value * t^{(p-1)/2}` that makes the power-law bound tight at `t`.
    pub fn lp_norm_bound_check(&self, t: f64, x: f64, p: f64, n_quad: usize) -> Result<LpNormCheck> {
        if !(p >= 1.0) {
            return Err(Error::param(format!("need p >= 1, got {p}")));
        }
        if !(t > 0.0) {
            return Err(Error::param("need t > 0"));
        }
        if n_quad < 2 {
            return Err(Error::param("need n_quad >= 2"));
        }
        let h = self.length / n_quad as f64;
        let mut acc = 0.0;
        for q in 1..n_quad {
            acc += self.eval(t, x, q as f64 * h)?.abs().powf(p);
        }
        let value = acc * h;
        Ok(LpNormCheck {
            value,
            constant: value * t.powf((p - 1.0) / 2.0),
        })
    }

    /// Largest fitted constant over a set of `(t, x)` samples.
    pub fn fit_lp_constant(&self, samples: &[(f64, f64)], p: f64, n_quad: usize) -> Result<f64> {
        let mut c: f64 = 0.0;
        for &(t, x) in samples {
            c = c.max(self.lp_norm_bound_check(t, x, p, n_quad)?.constant);
        }
        Ok(c)
    }

    /// Writes `t,x,y,value,method` rows for diagnostic inspection.
    pub fn write_diagnostics(&self, samples: &[(f64, f64, f64)], mut out: impl Write) -> Result<()> {
        writeln!(out, "t,x,y,value,method")?;
        for &(t, x, y) in samples {
            let method = self.resolve(t);
            let v = self.eval_with(method, t, x, y)?;
            writeln!(out, "{t:.16e},{x:.16e},{y:.16e},{v:.16e},{}", method.name())?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LpNormCheck {
    pub value: f64,
    pub constant: f64,
}

/// Lazily evaluated convolution `int G_t(x, y) h(y) dy`.
pub struct Convolution<'a, F> {
    ke: &'a KernelEvaluator,
    t: f64,
    h: F,
    n_quad: usize,
}

impl<F: Fn(f64) -> f64> Convolution<'_, F> {
    pub fn at(&self, x: f64) -> Result<f64> {
        if self.t == 0.0 {
            return Ok((self.h)(x));
        }
        let l = self.ke.length;
        let step = l / self.n_quad as f64;
        // endpoint nodes carry G = 0
        let mut acc = 0.0;
        for q in 1..self.n_quad {
            let y = q as f64 * step;
            acc += self.ke.eval(self.t, x, y)? * (self.h)(y);
        }
        let v = acc * step;
        if !v.is_finite() {
            return Err(Error::Quadrature { coarse: v, refined: v });
        }
        Ok(v)
    }

    pub fn sample(&self, xs: &[f64]) -> Result<Vec<f64>> {
        xs.iter().map(|&x| self.at(x)).collect()
    }
}
