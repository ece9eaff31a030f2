//! Closest potential realizing prescribed Dirichlet eigenvalues.
//!
//! Given a prior potential `V₀` on `(0, L)` and targets `E₁* < … < E_m*`,
//! the potential `V̂` minimizing `‖V - V₀‖` subject to `E_k(V) = E_k*`
//! satisfies `V̂ = V₀ + Σ c_j φ_j(V̂)²`. This crate discretizes the
//! Schrödinger operator `-d²/dx² + V` with 3-point finite differences and
//! solves for the coefficient vector `c`.
//!
//! - [`grid`]: grids, sampled functions and the trapezoid inner product.
//! - [`potential`]: preset and tabulated prior potentials.
//! - [`forward`]: Sturm-bisection eigensolver.
//! - [`derivative`]: eigenvalue gradients and the squared-mode Gram matrix.
//! - [`inverse`]: self-consistent iteration, Newton and homotopy.
//! - [`verify`]: residual of the coupled nonlinear system, independence of
//!   squared modes, and a brute-force minimality oracle.

pub mod derivative;
pub mod error;
pub mod forward;
pub mod grid;
pub mod inverse;
pub mod potential;
pub mod verify;

pub use derivative::{
    directional_derivative, eigenvalue_gradient, finite_difference_check, gram_matrix, GramMatrix,
};
pub use error::{Error, Result};
pub use forward::{
    assemble, count_below, lowest_eigenpairs, lowest_eigenvalues, EigenPair, Spectrum,
    TridiagonalOperator,
};
pub use grid::{inner_product, make_grid, Grid, SampledFunction};
pub use inverse::{
    reduced_residual, scf_fixed_point, solve_inverse, stationarity_residual, Coefficients,
    InverseSolution, JacobianKind, ScfState, SolveDiagnostics, SolverOptions, TargetSet,
};
pub use potential::{sample_potential, PotentialSpec};
pub use verify::{
    continuum_residual, independence_check, minimality_oracle, system_residual, MinimalityReport,
    OracleOptions, SystemResidual,
};
