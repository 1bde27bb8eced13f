//! Parametric registry of drift/noise coefficients and initial conditions.
//!
//! Coefficients are `(t, x, u) -> R` maps drawn from a closed set of
//! families. Each spec carries declared Lipschitz and linear-growth constants
//! and a monotonicity flag; [`validate_hypothesis`] audits those declarations
//! by random sampling plus the family's analytic extremes.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Witness};
use crate::seed::rng_from_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum CoefficientFamily {
    Zero,
    Constant {
        value: f64,
    },
    /// `a + b u`
    Affine {
        a: f64,
        b: f64,
    },
    /// `clamp(slope * u, -cap, cap)`
    ClippedLinear {
        slope: f64,
        cap: f64,
    },
    /// `amplitude * sin(frequency * u)`
    SineModulated {
        amplitude: f64,
        frequency: f64,
    },
    /// `base + delta`
    Shifted {
        base: Box<CoefficientFamily>,
        delta: f64,
    },
}

impl CoefficientFamily {
    /// Every family is autonomous; `t` and `x` are part of the interface.
    #[allow(clippy::only_used_in_recursion)]
    pub fn eval(&self, t: f64, x: f64, u: f64) -> f64 {
        match self {
            CoefficientFamily::Zero => 0.0,
            CoefficientFamily::Constant { value } => *value,
            CoefficientFamily::Affine { a, b } => a + b * u,
            CoefficientFamily::ClippedLinear { slope, cap } => (slope * u).clamp(-cap, *cap),
            CoefficientFamily::SineModulated { amplitude, frequency } => amplitude * (frequency * u).sin(),
            CoefficientFamily::Shifted { base, delta } => base.eval(t, x, u) + delta,
        }
    }

    pub fn lipschitz(&self) -> f64 {
        match self {
            CoefficientFamily::Zero | CoefficientFamily::Constant { .. } => 0.0,
            CoefficientFamily::Affine { b, .. } => b.abs(),
            CoefficientFamily::ClippedLinear { slope, .. } => slope.abs(),
            CoefficientFamily::SineModulated { amplitude, frequency } => (amplitude * frequency).abs(),
            CoefficientFamily::Shifted { base, .. } => base.lipschitz(),
        }
    }

    /// Smallest `G` with `|f(u)| <= G (1 + |u|)`.
    pub fn growth(&self) -> f64 {
        match self {
            CoefficientFamily::Zero => 0.0,
            CoefficientFamily::Constant { value } => value.abs(),
            CoefficientFamily::Affine { a, b } => a.abs().max(b.abs()),
            CoefficientFamily::ClippedLinear { slope, cap } => slope.abs().min(*cap),
            CoefficientFamily::SineModulated { amplitude, frequency } => {
                amplitude.abs().min((amplitude * frequency).abs())
            }
            CoefficientFamily::Shifted { base, delta } => base.growth() + delta.abs(),
        }
    }

    pub fn monotone(&self) -> bool {
        match self {
            CoefficientFamily::Zero | CoefficientFamily::Constant { .. } => true,
            CoefficientFamily::Affine { b, .. } => *b >= 0.0,
            CoefficientFamily::ClippedLinear { slope, .. } => *slope >= 0.0,
            CoefficientFamily::SineModulated { amplitude, frequency } => amplitude * frequency == 0.0,
            CoefficientFamily::Shifted { base, .. } => base.monotone(),
        }
    }

    /// Whether `f(t, x, 0) = 0` holds identically.
    pub fn fixes_origin(&self) -> bool {
        match self {
            CoefficientFamily::Zero => true,
            CoefficientFamily::Constant { value } => *value == 0.0,
            CoefficientFamily::Affine { a, .. } => *a == 0.0,
            CoefficientFamily::ClippedLinear { .. } | CoefficientFamily::SineModulated { .. } => true,
            CoefficientFamily::Shifted { base, delta } => *delta == 0.0 && base.fixes_origin(),
        }
    }

    /// Points where the family is least regular: kinks, steepest slopes.
    fn extremes(&self) -> Vec<f64> {
        let mut pts = vec![0.0, 1.0, -1.0, 1e3, -1e3];
        match self {
            CoefficientFamily::ClippedLinear { slope, cap } if *slope != 0.0 => {
                let corner = cap / slope.abs();
                pts.extend([corner, -corner, corner * 0.5, -corner * 0.5]);
            }
            CoefficientFamily::SineModulated { frequency, .. } if *frequency != 0.0 => {
                let period = 2.0 * std::f64::consts::PI / frequency.abs();
                pts.extend((0..8).map(|k| k as f64 * period / 8.0));
            }
            CoefficientFamily::Shifted { base, .. } => pts.extend(base.extremes()),
            _ => {}
        }
        pts
    }
}

/// A coefficient family with its declared regularity constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSpec {
    pub family: CoefficientFamily,
    pub lipschitz_bound: f64,
    pub growth_bound: f64,
    pub monotone_in_u: bool,
}

impl CoefficientSpec {
    /// Declares the family's analytic constants.
    pub fn new(family: CoefficientFamily) -> Self {
        CoefficientSpec {
            lipschitz_bound: family.lipschitz(),
            growth_bound: family.growth(),
            monotone_in_u: family.monotone(),
            family,
        }
    }

    pub fn zero() -> Self {
        Self::new(CoefficientFamily::Zero)
    }

    pub fn constant(value: f64) -> Self {
        Self::new(CoefficientFamily::Constant { value })
    }

    pub fn affine(a: f64, b: f64) -> Self {
        Self::new(CoefficientFamily::Affine { a, b })
    }

    pub fn clipped_linear(slope: f64, cap: f64) -> Self {
        Self::new(CoefficientFamily::ClippedLinear { slope, cap })
    }

    pub fn sine_modulated(amplitude: f64, frequency: f64) -> Self {
        Self::new(CoefficientFamily::SineModulated { amplitude, frequency })
    }

    pub fn shifted(&self, delta: f64) -> Self {
        Self::new(CoefficientFamily::Shifted {
            base: Box::new(self.family.clone()),
            delta,
        })
    }

    /// Overrides the declared constants, e.g. to model a wrong declaration.
    pub fn declared(mut self, lipschitz_bound: f64, growth_bound: f64, monotone_in_u: bool) -> Self {
        self.lipschitz_bound = lipschitz_bound;
        self.growth_bound = growth_bound;
        self.monotone_in_u = monotone_in_u;
        self
    }

    #[inline]
    pub fn evaluate(&self, t: f64, x: f64, u: f64) -> f64 {
        self.family.eval(t, x, u)
    }

    pub fn fixes_origin(&self) -> bool {
        self.family.fixes_origin()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuditConfig {
    pub samples: usize,
    pub seed: u64,
    pub u_range: f64,
    pub horizon: f64,
    pub length: f64,
}

impl Default for AuditConfig {
    fn default() -> Self {
        AuditConfig {
            samples: 10_000,
            seed: 0x5eed,
            u_range: 50.0,
            horizon: 1.0,
            length: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub samples: usize,
    pub max_lipschitz_ratio: f64,
    pub max_growth_ratio: f64,
    pub monotone_checked: bool,
}

const AUDIT_RTOL: f64 = 1e-9;

fn audit_points(spec: &CoefficientFamily, cfg: &AuditConfig) -> Vec<Witness> {
    let mut rng = rng_from_seed(cfg.seed);
    let mut pts = Vec::with_capacity(cfg.samples + 64);
    for _ in 0..cfg.samples {
        let t = cfg.horizon * rng.random::<f64>();
        let x = cfg.length * rng.random::<f64>();
        let u = cfg.u_range * (2.0 * rng.random::<f64>() - 1.0);
        // half the pairs are close together to probe local slopes
        let v = if rng.random::<bool>() {
            u + 1e-3 * (2.0 * rng.random::<f64>() - 1.0)
        } else {
            cfg.u_range * (2.0 * rng.random::<f64>() - 1.0)
        };
        pts.push(Witness { t, x, u, v });
    }
    for e in spec.extremes() {
        for d in [1e-6, -1e-6, 0.5, -0.5] {
            pts.push(Witness {
                t: 0.0,
                x: 0.5 * cfg.length,
                u: e,
                v: e + d,
            });
        }
    }
    pts
}

/// Audits the declared Lipschitz and growth constants and, when requested,
/// monotonicity in `u`. Any violation is reported with the offending sample.
pub fn validate_hypothesis(spec: &CoefficientSpec, require_monotone: bool, cfg: &AuditConfig) -> Result<AuditReport> {
    if require_monotone && !spec.monotone_in_u {
        return Err(Error::Hypothesis {
            hypothesis: "monotone noise coefficient",
            witness: Witness {
                t: 0.0,
                x: 0.0,
                u: 0.0,
                v: 0.0,
            },
            detail: format!("{:?} is not declared non-decreasing", spec.family),
        });
    }
    let mut max_lip: f64 = 0.0;
    let mut max_growth: f64 = 0.0;
    let pts = audit_points(&spec.family, cfg);
    for w in &pts {
        let fu = spec.evaluate(w.t, w.x, w.u);
        let fv = spec.evaluate(w.t, w.x, w.v);
        if !fu.is_finite() || !fv.is_finite() {
            return Err(Error::Hypothesis {
                hypothesis: "finite coefficient",
                witness: *w,
                detail: "non-finite value".into(),
            });
        }
        let du = (w.u - w.v).abs();
        let df = (fu - fv).abs();
        if du > 0.0 {
            let slope = df / du;
            max_lip = max_lip.max(slope);
            // allow for rounding in the difference itself
            let slack = 4.0 * f64::EPSILON * (fu.abs() + fv.abs() + spec.lipschitz_bound * (w.u.abs() + w.v.abs()));
            if df > spec.lipschitz_bound * du * (1.0 + AUDIT_RTOL) + slack + 1e-14 {
                return Err(Error::Hypothesis {
                    hypothesis: "Lipschitz continuity",
                    witness: *w,
                    detail: format!("slope {slope} exceeds declared bound {}", spec.lipschitz_bound),
                });
            }
        }
        let g = fu.abs() / (1.0 + w.u.abs());
        max_growth = max_growth.max(g);
        if fu.abs() > spec.growth_bound * (1.0 + w.u.abs()) * (1.0 + AUDIT_RTOL) + 1e-14 {
            return Err(Error::Hypothesis {
                hypothesis: "linear growth",
                witness: *w,
                detail: format!("|f(u)|/(1+|u|) = {g} exceeds declared bound {}", spec.growth_bound),
            });
        }
        if require_monotone {
            let (lo, hi, flo, fhi) = if w.u <= w.v {
                (w.u, w.v, fu, fv)
            } else {
                (w.v, w.u, fv, fu)
            };
            if lo < hi && flo > fhi + 1e-14 {
                return Err(Error::Hypothesis {
                    hypothesis: "monotone noise coefficient",
                    witness: *w,
                    detail: format!("f({lo}) = {flo} > f({hi}) = {fhi}"),
                });
            }
        }
    }
    Ok(AuditReport {
        samples: pts.len(),
        max_lipschitz_ratio: max_lip,
        max_growth_ratio: max_growth,
        monotone_checked: require_monotone,
    })
}

/// Randomized check of `f <= g` pointwise.
pub fn dominates(f: &CoefficientSpec, g: &CoefficientSpec, cfg: &AuditConfig) -> Result<AuditReport> {
    let mut pts = audit_points(&f.family, cfg);
    pts.extend(audit_points(&g.family, &AuditConfig { samples: 0, ..*cfg }));
    for w in &pts {
        for u in [w.u, w.v] {
            let fu = f.evaluate(w.t, w.x, u);
            let gu = g.evaluate(w.t, w.x, u);
            if fu > gu + 1e-14 {
                return Err(Error::Hypothesis {
                    hypothesis: "ordered drift coefficients",
                    witness: Witness { u, v: u, ..*w },
                    detail: format!("f = {fu} > g = {gu}"),
                });
            }
        }
    }
    Ok(AuditReport {
        samples: pts.len(),
        max_lipschitz_ratio: 0.0,
        max_growth_ratio: 0.0,
        monotone_checked: false,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialCondition {
    Zero,
    Constant {
        value: f64,
    },
    /// `amplitude * sin(mode pi x / L)`
    SineMode {
        mode: u32,
        amplitude: f64,
    },
    /// `height (1 - ((x - center)/width)^2)^2` on `|x - center| < width`
    Bump {
        center: f64,
        width: f64,
        height: f64,
    },
    /// Equispaced samples on `[0, L]`, linearly interpolated.
    Tabulated {
        values: Vec<f64>,
    },
}

impl InitialCondition {
    pub fn sine(mode: u32, amplitude: f64) -> Self {
        InitialCondition::SineMode { mode, amplitude }
    }

    pub fn eval(&self, x: f64, length: f64) -> f64 {
        match self {
            InitialCondition::Zero => 0.0,
            InitialCondition::Constant { value } => *value,
            InitialCondition::SineMode { mode, amplitude } => {
                amplitude * (*mode as f64 * std::f64::consts::PI * x / length).sin()
            }
            InitialCondition::Bump { center, width, height } => {
                let s = (x - center) / width;
                if s.abs() < 1.0 {
                    let w = 1.0 - s * s;
                    height * w * w
                } else {
                    0.0
                }
            }
            InitialCondition::Tabulated { values } => {
                let n = values.len() - 1;
                let pos = (x / length).clamp(0.0, 1.0) * n as f64;
                let i = (pos.floor() as usize).min(n.saturating_sub(1));
                let frac = pos - i as f64;
                values[i] * (1.0 - frac) + values[(i + 1).min(n)] * frac
            }
        }
    }

    /// Finite everywhere and vanishing at both endpoints.
    pub fn validate(&self, length: f64) -> Result<()> {
        if let InitialCondition::Tabulated { values } = self {
            if values.len() < 2 {
                return Err(Error::param("tabulated initial condition needs at least two values"));
            }
        }
        if let InitialCondition::Bump { width, .. } = self {
            if !(*width > 0.0) {
                return Err(Error::param("bump width must be positive"));
            }
        }
        let ends = [self.eval(0.0, length), self.eval(length, length)];
        if ends.iter().any(|v| v.abs() > 1e-12) {
            return Err(Error::param(format!(
                "initial condition must vanish at 0 and L, got {} and {}",
                ends[0], ends[1]
            )));
        }
        for k in 0..=1000 {
            if !self.eval(k as f64 * length / 1000.0, length).is_finite() {
                return Err(Error::param("initial condition is not finite"));
            }
        }
        Ok(())
    }

    pub fn sample(&self, xs: &[f64], length: f64) -> Vec<f64> {
        xs.iter().map(|&x| self.eval(x, length)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn evaluate_examples() {
        assert_eq!(CoefficientSpec::zero().evaluate(0.3, 0.2, 7.0), 0.0);
        assert_eq!(CoefficientSpec::affine(1.0, 0.5).evaluate(0.0, 0.0, 2.0), 2.0);
        assert_eq!(CoefficientSpec::clipped_linear(1.0, 3.0).evaluate(0.0, 0.0, 10.0), 3.0);
        assert_eq!(
            CoefficientSpec::clipped_linear(1.0, 3.0).evaluate(0.0, 0.0, -10.0),
            -3.0
        );
        let s = CoefficientSpec::affine(0.0, 1.0).shifted(-0.5);
        assert_eq!(s.evaluate(0.0, 0.0, 2.0), 1.5);
    }

    #[test]
    fn purity() {
        let s = CoefficientSpec::sine_modulated(0.7, 3.0);
        assert_eq!(s.evaluate(0.1, 0.2, 0.3).to_bits(), s.evaluate(0.1, 0.2, 0.3).to_bits());
    }

    #[test]
    fn audits_pass_for_analytic_declarations() {
        let cfg = AuditConfig::default();
        for spec in [
            CoefficientSpec::zero(),
            CoefficientSpec::constant(-2.0),
            CoefficientSpec::affine(0.3, -1.5),
            CoefficientSpec::clipped_linear(2.0, 1.0),
            CoefficientSpec::sine_modulated(0.5, 4.0),
            CoefficientSpec::affine(0.1, 0.5).shifted(-0.5),
        ] {
            let report = validate_hypothesis(&spec, false, &cfg).unwrap();
            assert!(report.samples >= 10_000);
        }
        assert!(validate_hypothesis(&CoefficientSpec::zero(), true, &cfg).is_ok());
        assert!(validate_hypothesis(&CoefficientSpec::clipped_linear(1.0, 2.0), true, &cfg).is_ok());
    }

    #[test]
    fn decreasing_affine_fails_monotone_audit() {
        // declare it monotone so the sampled check, not the flag, catches it
        let spec = CoefficientSpec::affine(0.0, -0.5).declared(0.5, 0.5, true);
        match validate_hypothesis(&spec, true, &AuditConfig::default()) {
            Err(Error::Hypothesis {
                hypothesis, witness, ..
            }) => {
                assert_eq!(hypothesis, "monotone noise coefficient");
                let f = |u| spec.evaluate(witness.t, witness.x, u);
                let (lo, hi) = (witness.u.min(witness.v), witness.u.max(witness.v));
                assert!(f(lo) > f(hi));
            }
            other => panic!("expected monotonicity failure, got {other:?}"),
        }
        let flagged = CoefficientSpec::affine(0.0, -0.5);
        assert!(validate_hypothesis(&flagged, true, &AuditConfig::default()).is_err());
    }

    #[test]
    fn understated_lipschitz_is_caught() {
        // true slope is 0.5 * 4 = 2; finite differences near u = 0 find ~2
        let spec = CoefficientSpec::sine_modulated(0.5, 4.0).declared(1.5, 0.5, false);
        let err = validate_hypothesis(&spec, false, &AuditConfig::default()).unwrap_err();
        match err {
            Error::Hypothesis {
                hypothesis, witness, ..
            } => {
                assert_eq!(hypothesis, "Lipschitz continuity");
                let df = (spec.evaluate(0.0, 0.0, witness.u) - spec.evaluate(0.0, 0.0, witness.v)).abs();
                assert!(df > 1.5 * (witness.u - witness.v).abs());
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn understated_growth_is_caught() {
        let spec = CoefficientSpec::constant(2.0).declared(0.0, 1.0, true);
        assert!(matches!(
            validate_hypothesis(&spec, false, &AuditConfig::default()),
            Err(Error::Hypothesis {
                hypothesis: "linear growth",
                ..
            })
        ));
    }

    #[test]
    fn dominance() {
        let cfg = AuditConfig::default();
        let g = CoefficientSpec::sine_modulated(0.3, 2.0);
        assert!(dominates(&g, &g, &cfg).is_ok());
        assert!(dominates(&g.shifted(-0.2), &g, &cfg).is_ok());
        let err = dominates(
            &CoefficientSpec::affine(0.0, 1.0),
            &CoefficientSpec::affine(0.0, 0.5),
            &cfg,
        )
        .unwrap_err();
        match err {
            Error::Hypothesis { witness, .. } => assert!(witness.u > 0.0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn initial_conditions() {
        let l = 1.0;
        assert!(InitialCondition::sine(1, 1.0).validate(l).is_ok());
        assert!(InitialCondition::Constant { value: 1.0 }.validate(l).is_err());
        assert!(InitialCondition::Constant { value: 0.0 }.validate(l).is_ok());
        let bump = InitialCondition::Bump {
            center: 0.5,
            width: 0.3,
            height: 2.0,
        };
        assert!(bump.validate(l).is_ok());
        assert_eq!(bump.eval(0.5, l), 2.0);
        assert_eq!(bump.eval(0.9, l), 0.0);
        let tab = InitialCondition::Tabulated {
            values: vec![0.0, 1.0, 0.0],
        };
        assert!(tab.validate(l).is_ok());
        assert!((tab.eval(0.25, l) - 0.5).abs() < 1e-15);
        assert!(InitialCondition::Tabulated { values: vec![1.0, 0.0] }
            .validate(l)
            .is_err());
    }

    #[test]
    fn origin_and_monotone_flags() {
        assert!(CoefficientSpec::clipped_linear(1.0, 2.0).fixes_origin());
        assert!(!CoefficientSpec::affine(0.1, 1.0).fixes_origin());
        assert!(!CoefficientSpec::sine_modulated(1.0, 1.0).monotone_in_u);
        assert!(CoefficientSpec::constant(0.4).monotone_in_u);
    }
}
