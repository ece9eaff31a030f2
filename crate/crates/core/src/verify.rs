//! Independent checks on a computed optimal potential.
//!
//! - [`system_residual`]: how well `(σ, û)` solve the coupled system
//!   `-u_i'' + V₀ u_i = E_i u_i + Σ σ_j u_j² u_i` with the solver's own
//!   3-point second difference.
//! - [`continuum_residual`]: the same system with a fourth-order second
//!   difference, which measures the O(h²) distance to the differential
//!   equation and so exposes the discretization order under refinement.
//! - [`independence_check`]: smallest eigenvalue of the squared-mode Gram
//!   matrix.
//! - [`minimality_oracle`]: penalty-method minimization over a hat-function
//!   basis, restarted from random points, that knows nothing about the
//!   squared-mode structure of the optimum.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::derivative::gram_matrix;
use crate::error::{Error, Result};
use crate::forward::lowest_eigenpairs;
use crate::grid::{Grid, SampledFunction};
use crate::inverse::{InverseSolution, TargetSet};

/// Per-equation L2 residuals of the coupled system.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemResidual {
    pub per_equation: Vec<f64>,
    pub max_residual: f64,
}

#[derive(Clone, Copy)]
enum Stencil {
    ThreePoint,
    FivePoint,
}

/// `-u''` at interior node `i` with zero Dirichlet values. The five-point
/// stencil uses the odd reflection `u(-x) = -u(x)` for its ghost values.
fn neg_second_difference(u: &[f64], h: f64, stencil: Stencil) -> Vec<f64> {
    let n = u.len() as isize;
    // index -1 and n are the boundary nodes, -2 and n+1 the reflected ghosts
    let at = |i: isize| -> f64 {
        if i == -1 || i == n {
            0.0
        } else if i < 0 {
            -u[(-i - 2) as usize]
        } else if i >= n {
            -u[(2 * n - i) as usize]
        } else {
            u[i as usize]
        }
    };
    let at3 = |i: isize| -> f64 {
        if i < 0 || i >= n {
            0.0
        } else {
            u[i as usize]
        }
    };
    let h2 = h * h;
    (0..n)
        .map(|i| match stencil {
            Stencil::ThreePoint => (2.0 * at3(i) - at3(i - 1) - at3(i + 1)) / h2,
            Stencil::FivePoint => {
                (at(i - 2) - 16.0 * at3(i - 1) + 30.0 * at3(i) - 16.0 * at3(i + 1) + at(i + 2))
                    / (12.0 * h2)
            }
        })
        .collect()
}

fn coupled_residual(
    u_hat: &[SampledFunction],
    sigma: &[i8],
    v0: &SampledFunction,
    targets: &TargetSet,
    stencil: Stencil,
) -> Result<SystemResidual> {
    let m = u_hat.len();
    if sigma.len() != m || targets.len() != m {
        return Err(Error::InvalidArgument(format!(
            "{m} functions, {} signs and {} targets",
            sigma.len(),
            targets.len()
        )));
    }
    if let Some(s) = sigma.iter().find(|s| s.abs() > 1) {
        return Err(Error::InvalidArgument(format!(
            "sign {s} is not in {{-1, 0, 1}}"
        )));
    }
    let grid: Grid = *v0.grid();
    for u in u_hat {
        grid.ensure_same(u.grid())?;
    }
    let h = grid.spacing();
    let n = grid.len();

    // Σ_j σ_j u_j²
    let mut coupling = vec![0.0; n];
    for (s, u) in sigma.iter().zip(u_hat) {
        if *s != 0 {
            let s = f64::from(*s);
            coupling
                .iter_mut()
                .zip(u.values())
                .for_each(|(c, x)| *c += s * x * x);
        }
    }

    let per_equation: Vec<f64> = u_hat
        .iter()
        .zip(targets.values())
        .map(|(u, &energy)| {
            let u = u.values();
            let kinetic = neg_second_difference(u, h, stencil);
            let sum: f64 = (0..n)
                .map(|i| {
                    let r = kinetic[i] + v0.values()[i] * u[i] - energy * u[i] - coupling[i] * u[i];
                    r * r
                })
                .sum();
            (h * sum).sqrt()
        })
        .collect();
    let max_residual = per_equation.iter().fold(0.0, |m: f64, r| m.max(*r));
    Ok(SystemResidual {
        per_equation,
        max_residual,
    })
}

/// Residual of the discrete coupled system using the 3-point operator of
/// the eigensolver.
pub fn system_residual(
    u_hat: &[SampledFunction],
    sigma: &[i8],
    v0: &SampledFunction,
    targets: &TargetSet,
) -> Result<SystemResidual> {
    coupled_residual(u_hat, sigma, v0, targets, Stencil::ThreePoint)
}

/// Residual of the coupled differential system, with `u''` approximated to
/// fourth order. For a converged discrete solution this is dominated by
/// `(h²/12) u''''` and shrinks about 4x when `h` halves.
pub fn continuum_residual(
    u_hat: &[SampledFunction],
    sigma: &[i8],
    v0: &SampledFunction,
    targets: &TargetSet,
) -> Result<SystemResidual> {
    coupled_residual(u_hat, sigma, v0, targets, Stencil::FivePoint)
}

/// Smallest eigenvalue of the Gram matrix of `φ_1², …, φ_m²`.
pub fn independence_check(v: &SampledFunction, m: usize) -> Result<f64> {
    Ok(gram_matrix(v, m)?.smallest_eigenvalue())
}

/// Settings for [`minimality_oracle`].
#[derive(Debug, Clone, PartialEq)]
pub struct OracleOptions {
    /// Number of hat functions on the coarse sub-grid.
    pub basis_dim: usize,
    /// Random restarts, in addition to the start at the projected solution.
    pub trials: usize,
    pub seed: u64,
    /// Penalty weights, applied in order with warm starts.
    pub penalties: Vec<f64>,
    /// Largest constraint violation accepted after the final penalty.
    pub feasibility_tol: f64,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self {
            basis_dim: 32,
            trials: 5,
            seed: 0,
            penalties: vec![1e2, 1e4, 1e6, 1e8],
            feasibility_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinimalityReport {
    /// `‖V̂ - V₀‖` of the structured solution.
    pub solver_distance: f64,
    /// Best feasible distance found by the oracle.
    pub oracle_distance: f64,
    pub basis_dim: usize,
    /// `oracle_distance - solver_distance`.
    pub gap: f64,
    /// Feasible local minima, one entry per successful start (projection
    /// start first). Differing values indicate distinct local minima.
    pub local_minima: Vec<f64>,
    pub starts: usize,
}

struct HatProblem<'a> {
    v0: &'a SampledFunction,
    targets: &'a [f64],
    /// n × d sampled hat functions.
    basis: DMatrix<f64>,
    /// `h Bᵀ B`.
    mass: DMatrix<f64>,
    h: f64,
}

struct Evaluation {
    distance2: f64,
    violation: DVector<f64>,
    /// `∂E_k/∂a_i`, m × d.
    jacobian: DMatrix<f64>,
}

impl HatProblem<'_> {
    fn potential(&self, a: &DVector<f64>) -> SampledFunction {
        let shift = &self.basis * a;
        let values = self
            .v0
            .values()
            .iter()
            .zip(shift.iter())
            .map(|(v, s)| v + s)
            .collect();
        SampledFunction::from_raw(*self.v0.grid(), values)
    }

    fn evaluate(&self, a: &DVector<f64>) -> Option<Evaluation> {
        let m = self.targets.len();
        let spectrum = lowest_eigenpairs(&self.potential(a), m).ok()?;
        let violation = DVector::from_iterator(
            m,
            spectrum
                .pairs()
                .iter()
                .zip(self.targets)
                .map(|(p, t)| p.energy - t),
        );
        // chain rule: ∂E_k/∂a_i = <φ_k², B_i>
        let mut weights = DMatrix::zeros(self.basis.nrows(), m);
        for (k, pair) in spectrum.pairs().iter().enumerate() {
            for (i, p) in pair.phi.values().iter().enumerate() {
                weights[(i, k)] = self.h * p * p;
            }
        }
        let jacobian = (self.basis.transpose() * weights).transpose();
        Some(Evaluation {
            distance2: (a.transpose() * &self.mass * a)[(0, 0)],
            violation,
            jacobian,
        })
    }

    /// Levenberg–Marquardt on `aᵀMa + ρ ‖E(a) - E*‖²`.
    fn descend(&self, mut a: DVector<f64>, rho: f64) -> Option<(DVector<f64>, Evaluation)> {
        const MAX_ITER: usize = 200;
        let objective = |e: &Evaluation| e.distance2 + rho * e.violation.norm_squared();
        let mut current = self.evaluate(&a)?;
        let mut lambda = 1e-3;
        for _ in 0..MAX_ITER {
            let jt = current.jacobian.transpose();
            let gradient = &self.mass * &a * 2.0 + &jt * &current.violation * (2.0 * rho);
            let hessian = &self.mass * 2.0 + &jt * &current.jacobian * (2.0 * rho);
            let mut improved = false;
            while lambda < 1e16 {
                let mut damped = hessian.clone();
                for i in 0..damped.nrows() {
                    damped[(i, i)] += lambda * hessian[(i, i)].max(1e-300);
                }
                let Some(chol) = damped.cholesky() else {
                    lambda *= 4.0;
                    continue;
                };
                let step = chol.solve(&(-&gradient));
                let trial_a = &a + &step;
                match self.evaluate(&trial_a) {
                    Some(trial) if objective(&trial) < objective(&current) => {
                        let before = objective(&current);
                        let after = objective(&trial);
                        let small_step = step.norm() <= 1e-12 * (1.0 + a.norm());
                        a = trial_a;
                        current = trial;
                        lambda = (lambda / 3.0).max(1e-12);
                        improved = !(small_step || before - after <= 1e-15 * (1.0 + before));
                        break;
                    }
                    _ => lambda *= 4.0,
                }
            }
            if !improved {
                break;
            }
        }
        Some((a, current))
    }
}

/// Brute-force check that no potential in a hat-function basis reaches the
/// targets closer to `v0` than the structured solution.
pub fn minimality_oracle(
    v0: &SampledFunction,
    targets: &TargetSet,
    solution: &InverseSolution,
    opts: &OracleOptions,
) -> Result<MinimalityReport> {
    let m = targets.len();
    if opts.basis_dim < m {
        return Err(Error::InvalidArgument(format!(
            "basis_dim {} is smaller than the number of targets {m}",
            opts.basis_dim
        )));
    }
    if opts.trials == 0 || opts.penalties.is_empty() {
        return Err(Error::InvalidArgument(
            "oracle needs at least one trial and one penalty weight".into(),
        ));
    }
    let grid = *v0.grid();
    grid.ensure_same(solution.v_hat.grid())?;
    let d = opts.basis_dim;
    let h = grid.spacing();
    let coarse = grid.length() / (d + 1) as f64;
    let basis = DMatrix::from_fn(grid.len(), d, |row, col| {
        let x = grid.node(row);
        let center = (col + 1) as f64 * coarse;
        (1.0 - (x - center).abs() / coarse).max(0.0)
    });
    let mass = basis.transpose() * &basis * h;
    let problem = HatProblem {
        v0,
        targets: targets.values(),
        basis,
        mass,
        h,
    };

    let mut starts = Vec::with_capacity(opts.trials + 1);
    // projection of V̂ - V₀ onto the hat basis
    let difference = solution.v_hat.sub(v0)?;
    let rhs = problem.basis.transpose() * DVector::from_column_slice(difference.values()) * h;
    let projected = problem
        .mass
        .clone()
        .cholesky()
        .map(|c| c.solve(&rhs))
        .unwrap_or_else(|| DVector::zeros(d));
    starts.push(projected);
    let initial = crate::forward::lowest_eigenvalues(v0, m)?;
    let scale = initial
        .iter()
        .zip(targets.values())
        .fold(0.1_f64, |s, (e0, e)| s.max((e - e0).abs()));
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for _ in 0..opts.trials {
        starts.push(DVector::from_fn(d, |_, _| {
            scale * rng.random_range(-1.0..1.0)
        }));
    }

    let mut local_minima = Vec::new();
    let mut best_violation = f64::INFINITY;
    for start in &starts {
        let mut a = start.clone();
        let mut last = None;
        for &rho in &opts.penalties {
            match problem.descend(a.clone(), rho) {
                Some((next, eval)) => {
                    a = next;
                    last = Some(eval);
                }
                None => {
                    last = None;
                    break;
                }
            }
        }
        let Some(eval) = last else { continue };
        let violation = eval.violation.amax();
        best_violation = best_violation.min(violation);
        if violation <= opts.feasibility_tol {
            local_minima.push(eval.distance2.max(0.0).sqrt());
        }
    }

    if local_minima.is_empty() {
        return Err(Error::OracleInfeasible {
            starts: starts.len(),
            best_violation,
        });
    }
    let oracle_distance = local_minima.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(MinimalityReport {
        solver_distance: solution.distance,
        oracle_distance,
        basis_dim: d,
        gap: oracle_distance - solution.distance,
        local_minima,
        starts: starts.len(),
    })
}
