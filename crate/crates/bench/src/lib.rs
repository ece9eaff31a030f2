//! Shared fixtures for the benchmarks.

use std::f64::consts::PI;

use optpot::{make_grid, sample_potential, PotentialSpec, SampledFunction};

/// Zero potential on `(0, π)`.
pub fn free(n: usize) -> SampledFunction {
    SampledFunction::zeros(make_grid(PI, n).expect("valid grid"))
}

/// Harmonic preset on `(0, 10)`.
pub fn harmonic(n: usize) -> SampledFunction {
    let grid = make_grid(10.0, n).expect("valid grid");
    sample_potential(&PotentialSpec::presets(10.0)[2].1, &grid).expect("analytic preset")
}
