//! Closest potential with prescribed lowest eigenvalues.
//!
//! The minimizer has the form `V = V₀ + Σ c_j φ_j(V)²`, so the search runs
//! over the coefficient vector `c ∈ ℝ^m`:
//!
//! - for fixed `c`, a damped self-consistent iteration finds `V(c)`;
//! - Newton's method solves `E_k(V(c)) = E_k*` using the Gram matrix
//!   `<φ_k², φ_j²>` as Jacobian;
//! - the targets are reached by continuation from `E(V₀)`, halving the
//!   continuation step whenever a Newton solve fails.
//!
//! In terms of the coupled system `-u_i'' + V₀ u_i = E_i u_i + Σ σ_j u_j² u_i`,
//! `σ_j = -sign(c_j)` and `u_j = |c_j|^{1/2} φ_j(V̂)`.

use nalgebra::{DMatrix, DVector};

use crate::derivative::GramMatrix;
use crate::error::{Error, Result};
use crate::forward::{lowest_eigenpairs, lowest_eigenvalues, Spectrum};
use crate::grid::{inner_product, SampledFunction};

/// Strictly increasing target eigenvalues `E₁* < … < E_m*`.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetSet(Vec<f64>);

impl TargetSet {
    pub fn new(targets: Vec<f64>) -> Result<Self> {
        if targets.is_empty() {
            return Err(Error::InvalidArgument(
                "at least one target is required".into(),
            ));
        }
        if let Some(t) = targets.iter().find(|t| !t.is_finite()) {
            return Err(Error::InvalidArgument(format!("target {t} is not finite")));
        }
        if targets.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument(format!(
                "targets must be strictly increasing, got {targets:?}"
            )));
        }
        Ok(Self(targets))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Coefficients `c` in `V = V₀ + Σ c_j φ_j(V)²`.
#[derive(Debug, Clone, PartialEq)]
pub struct Coefficients(Vec<f64>);

impl Coefficients {
    pub fn new(c: Vec<f64>) -> Result<Self> {
        if c.is_empty() {
            return Err(Error::InvalidArgument("coefficient vector is empty".into()));
        }
        if let Some(x) = c.iter().find(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "coefficient {x} is not finite"
            )));
        }
        Ok(Self(c))
    }

    pub fn zeros(m: usize) -> Self {
        Self(vec![0.0; m])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// How the Newton Jacobian `∂E_k/∂c_j` is approximated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum JacobianKind {
    /// `<φ_k², φ_j²>` with the modes held fixed.
    #[default]
    Gram,
    /// Forward differences, one extra self-consistent solve per column.
    FiniteDifference,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    /// Sup-norm fixed-point residual accepted by the self-consistent loop.
    pub scf_tol: f64,
    pub scf_damping: f64,
    pub scf_max_iter: usize,
    /// Accepted `max_k |E_k(V) - E_k*|`.
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub homotopy_steps: usize,
    /// `|c_j|` below this counts as zero.
    pub sigma_threshold: f64,
    pub jacobian: JacobianKind,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            scf_tol: 1e-11,
            scf_damping: 0.5,
            scf_max_iter: 500,
            newton_tol: 1e-9,
            newton_max_iter: 50,
            homotopy_steps: 8,
            sigma_threshold: 1e-8,
            jacobian: JacobianKind::Gram,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("scf_tol", self.scf_tol),
            ("scf_damping", self.scf_damping),
            ("newton_tol", self.newton_tol),
            ("sigma_threshold", self.sigma_threshold),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if self.scf_damping > 1.0 {
            return Err(Error::InvalidArgument(format!(
                "scf_damping must lie in (0, 1], got {}",
                self.scf_damping
            )));
        }
        for (name, v) in [
            ("scf_max_iter", self.scf_max_iter),
            ("newton_max_iter", self.newton_max_iter),
            ("homotopy_steps", self.homotopy_steps),
        ] {
            if v == 0 {
                return Err(Error::InvalidArgument(format!("{name} must be positive")));
            }
        }
        Ok(())
    }
}

/// Converged self-consistent potential and its spectrum.
#[derive(Debug, Clone)]
pub struct ScfState {
    pub potential: SampledFunction,
    pub spectrum: Spectrum,
    pub iterations: usize,
    /// `‖V - (V₀ + Σ c_j φ_j(V)²)‖∞`.
    pub residual: f64,
}

/// Solves `V = V₀ + Σ c_j φ_j(V)²` by damped fixed-point iteration from `V₀`.
pub fn scf_fixed_point(
    c: &Coefficients,
    v0: &SampledFunction,
    opts: &SolverOptions,
) -> Result<ScfState> {
    opts.validate()?;
    scf_iterate(c.values(), v0, v0.clone(), opts, opts.scf_tol)
}

/// `V₀ + Σ c_j φ_j²` evaluated with the modes of `spectrum`.
fn scf_map(c: &[f64], v0: &SampledFunction, spectrum: &Spectrum) -> Vec<f64> {
    let mut out = v0.values().to_vec();
    for (cj, pair) in c.iter().zip(spectrum.pairs()) {
        if *cj == 0.0 {
            continue;
        }
        for (o, p) in out.iter_mut().zip(pair.phi.values()) {
            *o += cj * p * p;
        }
    }
    out
}

fn scf_iterate(
    c: &[f64],
    v0: &SampledFunction,
    start: SampledFunction,
    opts: &SolverOptions,
    tol: f64,
) -> Result<ScfState> {
    let m = c.len();
    let alpha = opts.scf_damping;
    let grid = *v0.grid();
    let mut v = start;
    let mut residual = f64::INFINITY;
    for iteration in 1..=opts.scf_max_iter {
        let spectrum = lowest_eigenpairs(&v, m)?;
        let mapped = scf_map(c, v0, &spectrum);
        residual = mapped
            .iter()
            .zip(v.values())
            .fold(0.0, |r: f64, (a, b)| r.max((a - b).abs()));
        if !residual.is_finite() {
            break;
        }
        if residual <= tol {
            return Ok(ScfState {
                potential: v,
                spectrum,
                iterations: iteration,
                residual,
            });
        }
        let next = v
            .values()
            .iter()
            .zip(&mapped)
            .map(|(old, new)| (1.0 - alpha) * old + alpha * new)
            .collect();
        v = SampledFunction::from_raw(grid, next);
    }
    Err(Error::NonConvergence {
        stage: "self-consistent iteration",
        iterations: opts.scf_max_iter,
        residual,
        detail: String::new(),
    })
}

/// Continues the fixed-point iteration below `scf_tol` until it stops
/// improving; returns the best state seen.
fn scf_polish(c: &[f64], v0: &SampledFunction, start: ScfState, opts: &SolverOptions) -> ScfState {
    const PATIENCE: usize = 25;
    let target = 1e-3 * opts.scf_tol;
    let alpha = opts.scf_damping;
    let grid = *v0.grid();
    let mut best = start;
    let mut v = best.potential.clone();
    let mut mapped = scf_map(c, v0, &best.spectrum);
    let mut since_best = 0;
    for _ in 0..opts.scf_max_iter {
        if best.residual <= target || since_best >= PATIENCE {
            break;
        }
        let next = v
            .values()
            .iter()
            .zip(&mapped)
            .map(|(old, new)| (1.0 - alpha) * old + alpha * new)
            .collect();
        v = SampledFunction::from_raw(grid, next);
        let Ok(spectrum) = lowest_eigenpairs(&v, c.len()) else {
            break;
        };
        mapped = scf_map(c, v0, &spectrum);
        let residual = mapped
            .iter()
            .zip(v.values())
            .fold(0.0, |r: f64, (a, b)| r.max((a - b).abs()));
        if residual < best.residual {
            best = ScfState {
                potential: v.clone(),
                spectrum,
                iterations: best.iterations + 1,
                residual,
            };
            since_best = 0;
        } else {
            since_best += 1;
        }
    }
    best
}

/// `F_k(c) = E_k(V(c)) - E_k*`.
pub fn reduced_residual(
    c: &Coefficients,
    v0: &SampledFunction,
    targets: &TargetSet,
    opts: &SolverOptions,
) -> Result<Vec<f64>> {
    if c.len() != targets.len() {
        return Err(Error::InvalidArgument(format!(
            "{} coefficients for {} targets",
            c.len(),
            targets.len()
        )));
    }
    let state = scf_fixed_point(c, v0, opts)?;
    Ok(state
        .spectrum
        .energies()
        .iter()
        .zip(targets.values())
        .map(|(e, t)| e - t)
        .collect())
}

/// Iteration counts collected during [`solve_inverse`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolveDiagnostics {
    pub homotopy_steps: usize,
    pub step_halvings: usize,
    pub newton_iterations: usize,
    pub scf_iterations: usize,
    /// Newton solves that switched from the Gram to the finite-difference
    /// Jacobian after stagnating.
    pub jacobian_fallbacks: usize,
    /// Sup-norm fixed-point residual at the returned potential.
    pub fixed_point_residual: f64,
}

/// Optimal potential and the associated solution of the coupled system.
#[derive(Debug, Clone)]
pub struct InverseSolution {
    pub v_hat: SampledFunction,
    /// Lowest `m` eigenpairs of `v_hat`.
    pub spectrum: Spectrum,
    pub coefficients: Coefficients,
    /// `-sign(c_j)`, or 0 when `|c_j|` is below the threshold.
    pub sigma: Vec<i8>,
    /// `|c_j|^{1/2} φ_j(V̂)`.
    pub u_hat: Vec<SampledFunction>,
    /// `‖V̂ - V₀‖`.
    pub distance: f64,
    /// `|E_k(V̂) - E_k*|`.
    pub constraint_residuals: Vec<f64>,
    pub stationarity_residual: f64,
    pub diagnostics: SolveDiagnostics,
}

impl InverseSolution {
    /// `V₀ - Σ σ_j u_j²`, which equals `v_hat` up to rounding.
    pub fn reconstruct(&self, v0: &SampledFunction) -> Result<SampledFunction> {
        let mut v = v0.clone();
        for (s, u) in self.sigma.iter().zip(&self.u_hat) {
            v = v.axpy(-f64::from(*s), &u.square())?;
        }
        Ok(v)
    }

    pub fn max_constraint_residual(&self) -> f64 {
        self.constraint_residuals.iter().fold(0.0, |m, r| m.max(*r))
    }
}

enum StepFailure {
    Scf(Error),
    Stagnation(f64),
    Budget(f64),
}

/// A Gram-Jacobian Newton solve that gains less than this factor over five
/// iterations switches to the finite-difference Jacobian.
const GRAM_MIN_GAIN: f64 = 0.5;

struct NewtonOutcome {
    c: Vec<f64>,
    state: ScfState,
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn mismatch(state: &ScfState, targets: &[f64]) -> Vec<f64> {
    state
        .spectrum
        .pairs()
        .iter()
        .zip(targets)
        .map(|(p, t)| p.energy - t)
        .collect()
}

/// Adds `Σ δ_j φ_j²` to `v`: the first-order guess for `V(c + δ)`.
fn predict(v: &SampledFunction, delta: &[f64], spectrum: &Spectrum) -> SampledFunction {
    let mut values = v.values().to_vec();
    for (d, pair) in delta.iter().zip(spectrum.pairs()) {
        for (o, p) in values.iter_mut().zip(pair.phi.values()) {
            *o += d * p * p;
        }
    }
    SampledFunction::from_raw(*v.grid(), values)
}

fn jacobian(
    kind: JacobianKind,
    c: &[f64],
    v0: &SampledFunction,
    state: &ScfState,
    opts: &SolverOptions,
    diagnostics: &mut SolveDiagnostics,
) -> Result<DMatrix<f64>> {
    match kind {
        JacobianKind::Gram => Ok(
            GramMatrix::from_spectrum(&state.spectrum, &state.potential)?
                .entries()
                .clone(),
        ),
        JacobianKind::FiniteDifference => {
            let m = c.len();
            let base = state.spectrum.energies();
            let mut jac = DMatrix::zeros(m, m);
            for j in 0..m {
                let step = 1e-6 * (1.0 + c[j].abs());
                let mut shifted = c.to_vec();
                shifted[j] += step;
                let mut delta = vec![0.0; m];
                delta[j] = step;
                let start = predict(&state.potential, &delta, &state.spectrum);
                let probe = scf_iterate(&shifted, v0, start, opts, opts.scf_tol)?;
                diagnostics.scf_iterations += probe.iterations;
                for (k, e) in probe.spectrum.energies().iter().enumerate() {
                    jac[(k, j)] = (e - base[k]) / step;
                }
            }
            Ok(jac)
        }
    }
}

fn newton(
    c0: &[f64],
    start: SampledFunction,
    v0: &SampledFunction,
    targets: &[f64],
    opts: &SolverOptions,
    diagnostics: &mut SolveDiagnostics,
) -> std::result::Result<NewtonOutcome, StepFailure> {
    let mut c = c0.to_vec();
    let mut start = start;
    let mut history: Vec<f64> = Vec::new();
    let mut kind = opts.jacobian;
    for iteration in 0..=opts.newton_max_iter {
        let state = scf_iterate(&c, v0, start, opts, opts.scf_tol).map_err(StepFailure::Scf)?;
        diagnostics.scf_iterations += state.iterations;
        let f = mismatch(&state, targets);
        let worst = max_abs(&f);
        if worst <= opts.newton_tol {
            return Ok(NewtonOutcome { c, state });
        }
        if iteration == opts.newton_max_iter {
            return Err(StepFailure::Budget(worst));
        }
        let five_back = history.len().checked_sub(5).map(|i| history[i]);
        if five_back.is_some_and(|r| worst > 0.9 * r) && kind == JacobianKind::FiniteDifference {
            return Err(StepFailure::Stagnation(worst));
        }
        if five_back.is_some_and(|r| worst > GRAM_MIN_GAIN * r) && kind == JacobianKind::Gram {
            // frozen modes are too crude at this |c|; differentiate through V(c)
            kind = JacobianKind::FiniteDifference;
            diagnostics.jacobian_fallbacks += 1;
            history.clear();
        }
        history.push(worst);

        let jac = jacobian(kind, &c, v0, &state, opts, diagnostics).map_err(StepFailure::Scf)?;
        let rhs = DVector::from_iterator(f.len(), f.iter().map(|x| -x));
        let delta: Vec<f64> = jac
            .lu()
            .solve(&rhs)
            .ok_or_else(|| {
                StepFailure::Scf(Error::Conditioning("singular Newton Jacobian".into()))
            })?
            .iter()
            .copied()
            .collect();
        c.iter_mut().zip(&delta).for_each(|(ci, d)| *ci += d);
        start = predict(&state.potential, &delta, &state.spectrum);
        diagnostics.newton_iterations += 1;
    }
    unreachable!("loop returns on its last iteration")
}

/// Closest potential to `v0` whose lowest eigenvalues equal `targets`.
pub fn solve_inverse(
    v0: &SampledFunction,
    targets: &TargetSet,
    opts: &SolverOptions,
) -> Result<InverseSolution> {
    opts.validate()?;
    let m = targets.len();
    let initial = lowest_eigenvalues(v0, m)?;
    let goal = targets.values();

    let full_step = 1.0 / opts.homotopy_steps as f64;
    let min_step = full_step / 64.0;
    let mut diagnostics = SolveDiagnostics::default();
    let mut progress = 0.0;
    let mut step = full_step;
    let mut c = vec![0.0; m];
    let mut start = v0.clone();
    let mut accepted: Option<ScfState> = None;

    while progress < 1.0 {
        let s = if progress + step >= 1.0 - 1e-12 {
            1.0
        } else {
            progress + step
        };
        let stage_targets: Vec<f64> = initial
            .iter()
            .zip(goal)
            .map(|(e0, e)| if s == 1.0 { *e } else { (1.0 - s) * e0 + s * e })
            .collect();
        match newton(
            &c,
            start.clone(),
            v0,
            &stage_targets,
            opts,
            &mut diagnostics,
        ) {
            Ok(outcome) => {
                c = outcome.c;
                start = outcome.state.potential.clone();
                accepted = Some(outcome.state);
                progress = s;
                diagnostics.homotopy_steps += 1;
                step = (2.0 * step).min(full_step);
            }
            Err(failure) => {
                let last_failure = match failure {
                    StepFailure::Scf(Error::NonConvergence { residual, .. }) => residual,
                    StepFailure::Scf(_) => f64::NAN,
                    StepFailure::Stagnation(r) | StepFailure::Budget(r) => r,
                };
                step *= 0.5;
                diagnostics.step_halvings += 1;
                if step < min_step {
                    return Err(Error::NonConvergence {
                        stage: "homotopy continuation",
                        iterations: diagnostics.newton_iterations,
                        residual: last_failure,
                        detail: format!(
                            "; reached s = {progress:.6} of 1 after {} accepted steps and {} halvings",
                            diagnostics.homotopy_steps, diagnostics.step_halvings
                        ),
                    });
                }
            }
        }
    }

    let mut state = accepted.expect("at least one homotopy step is accepted");
    let sigma: Vec<i8> = c
        .iter()
        .map(|&cj| {
            if cj.abs() < opts.sigma_threshold {
                0
            } else if cj > 0.0 {
                -1
            } else {
                1
            }
        })
        .collect();
    if c.iter().zip(&sigma).any(|(cj, s)| *s == 0 && *cj != 0.0) {
        // drop sub-threshold coefficients so V̂ = V₀ - Σ σ_j u_j² holds exactly
        c.iter_mut()
            .zip(&sigma)
            .filter(|(_, s)| **s == 0)
            .for_each(|(cj, _)| *cj = 0.0);
        state = scf_iterate(&c, v0, state.potential, opts, opts.scf_tol)?;
    }
    let state = if c.iter().all(|&cj| cj == 0.0) {
        state
    } else {
        scf_polish(&c, v0, state, opts)
    };
    diagnostics.fixed_point_residual = state.residual;

    let v_hat = state.potential;
    let spectrum = state.spectrum;
    let constraint_residuals = spectrum
        .energies()
        .iter()
        .zip(goal)
        .map(|(e, t)| (e - t).abs())
        .collect();
    let u_hat = c
        .iter()
        .zip(&sigma)
        .zip(spectrum.pairs())
        .map(|((cj, s), pair)| {
            if *s == 0 {
                SampledFunction::zeros(*v0.grid())
            } else {
                pair.phi.scale(cj.abs().sqrt())
            }
        })
        .collect();
    let difference = v_hat.sub(v0)?;
    let distance = inner_product(&difference, &difference)?.sqrt();
    let stationarity = stationarity_residual(&v_hat, v0, &spectrum)?;

    Ok(InverseSolution {
        v_hat,
        spectrum,
        coefficients: Coefficients(c),
        sigma,
        u_hat,
        distance,
        constraint_residuals,
        stationarity_residual: stationarity,
        diagnostics,
    })
}

/// Relative distance of `V̂ - V₀` from `span{φ_1(V̂)², …, φ_m(V̂)²}`.
///
/// Zero means the first-order optimality structure holds.
pub fn stationarity_residual(
    v_hat: &SampledFunction,
    v0: &SampledFunction,
    spectrum: &Spectrum,
) -> Result<f64> {
    let difference = v_hat.sub(v0)?;
    let norm = difference.norm();
    if norm == 0.0 {
        return Ok(0.0);
    }
    let squares = spectrum.squared_modes();
    let gram = GramMatrix::from_spectrum(spectrum, v_hat)?;
    let rhs = squares
        .iter()
        .map(|s| inner_product(s, &difference))
        .collect::<Result<Vec<_>>>()?;
    let weights = gram.solve(&rhs)?;
    let mut remainder = difference;
    for (w, s) in weights.iter().zip(&squares) {
        remainder = remainder.axpy(-w, s)?;
    }
    Ok(remainder.norm() / (norm + 1e-30))
}
