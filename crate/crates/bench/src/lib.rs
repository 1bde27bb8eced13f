//! Shared fixtures for the criterion benchmarks.

use levyheat::noise::sample_noise;
use levyheat::{
    CoefficientSpec, InitialCondition, NoiseRealization, ProblemSpec, SpaceTimeDomain, StableParams, TruncationSpec,
};

/// Symmetric noise with Lipschitz drift and a bounded noise coefficient.
pub fn problem(small_cutoff: f64) -> ProblemSpec {
    ProblemSpec {
        params: StableParams::symmetric(1.5).expect("alpha in range"),
        truncation: TruncationSpec::new(small_cutoff, 1.0).expect("cutoffs ordered"),
        domain: SpaceTimeDomain::new(1.0, 1.0).expect("positive domain"),
        drift: CoefficientSpec::sine_modulated(0.5, 2.0),
        noise_coef: CoefficientSpec::clipped_linear(0.5, 1.0),
        init: InitialCondition::Bump {
            center: 0.5,
            width: 0.3,
            height: 1.0,
        },
    }
}

pub fn noise(problem: &ProblemSpec, seed: u64) -> NoiseRealization {
    sample_noise(&problem.params, &problem.truncation, &problem.domain, seed).expect("valid noise parameters")
}
