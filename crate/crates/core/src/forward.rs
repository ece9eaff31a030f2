//! Lowest Dirichlet eigenpairs of `-d²/dx² + V` on a uniform grid.
//!
//! The operator is the 3-point finite-difference matrix
//! `tridiag(-1/h², 2/h² + V_i, -1/h²)`. Eigenvalues are isolated by Sturm
//! bisection and eigenvectors by inverse iteration started from a twisted
//! factorization.
//!
//! Both the Sturm recurrence and the eigenvector recurrences are carried in
//! ratio form: with `a_i = 2 + h²(V_i - E)` the scaled pivots are
//! `R_i = 1 + s_i`, `s_i = h²(V_i - E) + s_{i-1} / R_{i-1}`. Forming
//! `2/h² + V_i` explicitly would round `V_i - E` at the scale of `2/h²`;
//! the ratio form keeps it at the scale of the potential.

use crate::error::{Error, Result};
use crate::grid::{dot, Grid, SampledFunction};

/// Bisection stops once the bracket is narrower than this times `1 + |E|`.
pub const BISECTION_REL_WIDTH: f64 = 1e-13;
/// Inverse iteration stops once `‖Tφ - Eφ‖ ≤ RESIDUAL_TOL · ‖T‖∞ ‖φ‖`.
pub const RESIDUAL_TOL: f64 = 1e-10;
/// Samples below this fraction of the peak are ignored when counting nodes.
const NODE_FLOOR: f64 = 1e-10;
const PIVOT_MIN: f64 = 1e-290;
const MAX_BISECTIONS: usize = 256;
const MAX_INVERSE_STEPS: usize = 4;

/// The discretized operator `H_V` with Dirichlet boundary values.
#[derive(Debug, Clone)]
pub struct TridiagonalOperator {
    grid: Grid,
    potential: Vec<f64>,
    diag: Vec<f64>,
    offdiag: f64,
}

impl TridiagonalOperator {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn offdiag(&self) -> f64 {
        self.offdiag
    }

    pub fn potential(&self) -> &[f64] {
        &self.potential
    }

    /// Maximum absolute row sum.
    pub fn inf_norm(&self) -> f64 {
        self.diag
            .iter()
            .fold(0.0, |m: f64, d| m.max(d.abs() + 2.0 * self.offdiag.abs()))
    }

    /// Gershgorin interval containing the whole spectrum.
    pub fn gershgorin_bounds(&self) -> (f64, f64) {
        let r = 2.0 * self.offdiag.abs();
        let lo = self.diag.iter().fold(f64::INFINITY, |m, &d| m.min(d - r));
        let hi = self
            .diag
            .iter()
            .fold(f64::NEG_INFINITY, |m, &d| m.max(d + r));
        (lo, hi)
    }

    /// `y = T x`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len();
        (0..n)
            .map(|i| {
                let left = if i > 0 { x[i - 1] } else { 0.0 };
                let right = if i + 1 < n { x[i + 1] } else { 0.0 };
                self.diag[i] * x[i] + self.offdiag * (left + right)
            })
            .collect()
    }

    fn h2(&self) -> f64 {
        let h = self.grid.spacing();
        h * h
    }

    /// `‖(T - E) x‖₂ / ‖x‖₂`.
    fn residual_norm(&self, x: &[f64], energy: f64) -> f64 {
        let tx = self.apply(x);
        let r: f64 = tx
            .iter()
            .zip(x)
            .map(|(t, v)| (t - energy * v).powi(2))
            .sum();
        (r / dot(x, x)).sqrt()
    }

    /// Rayleigh quotient from the energy form `Σ (Δx)²/h² + Σ V x²`, which
    /// avoids the cancellation in `xᵀ T x`.
    fn rayleigh_quotient(&self, x: &[f64]) -> f64 {
        let n = x.len();
        let mut kinetic = x[0] * x[0] + x[n - 1] * x[n - 1];
        for w in x.windows(2) {
            kinetic += (w[1] - w[0]).powi(2);
        }
        let potential: f64 = x.iter().zip(&self.potential).map(|(v, p)| p * v * v).sum();
        (kinetic / self.h2() + potential) / dot(x, x)
    }

    /// Forward pivots `R_i` of `(T - E) h²` in ratio form.
    fn forward_pivots(&self, energy: f64) -> Vec<f64> {
        let h2 = self.h2();
        let mut pivots = Vec::with_capacity(self.potential.len());
        let mut carry = 1.0;
        for &v in &self.potential {
            let s = h2 * (v - energy) + carry;
            let r = guard(1.0 + s);
            carry = s / r;
            pivots.push(r);
        }
        pivots
    }
}

fn guard(r: f64) -> f64 {
    if r.abs() < PIVOT_MIN {
        -PIVOT_MIN
    } else {
        r
    }
}

/// Builds the 3-point operator for potential `v`.
pub fn assemble(v: &SampledFunction) -> TridiagonalOperator {
    let grid = *v.grid();
    let h = grid.spacing();
    let inv_h2 = 1.0 / (h * h);
    TridiagonalOperator {
        grid,
        potential: v.values().to_vec(),
        diag: v.values().iter().map(|&p| 2.0 * inv_h2 + p).collect(),
        offdiag: -inv_h2,
    }
}

/// Number of eigenvalues of `op` strictly below `energy` (Sturm count).
pub fn count_below(op: &TridiagonalOperator, energy: f64) -> usize {
    let h2 = op.h2();
    let mut count = 0;
    let mut carry = 1.0;
    for &v in &op.potential {
        let s = h2 * (v - energy) + carry;
        let r = guard(1.0 + s);
        if r < 0.0 {
            count += 1;
        }
        carry = s / r;
    }
    count
}

/// Bracket `[lo, hi]` around the `k`-th eigenvalue (1-based), with
/// `count_below(lo) < k <= count_below(hi)`.
pub fn bisect_eigenvalue(op: &TridiagonalOperator, k: usize, start: (f64, f64)) -> (f64, f64) {
    let (mut lo, mut hi) = start;
    for _ in 0..MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= BISECTION_REL_WIDTH * (1.0 + mid.abs()) || mid <= lo || mid >= hi {
            break;
        }
        if count_below(op, mid) >= k {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    (lo, hi)
}

/// One Dirichlet eigenpair.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    /// 1-based index.
    pub k: usize,
    pub energy: f64,
    /// Normalized to unit discrete L2 norm, first significant sample positive.
    pub phi: SampledFunction,
    /// Interior sign changes.
    pub nodes: usize,
}

/// The lowest `m` eigenpairs in increasing order.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pairs: Vec<EigenPair>,
}

impl Spectrum {
    pub fn pairs(&self) -> &[EigenPair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn energies(&self) -> Vec<f64> {
        self.pairs.iter().map(|p| p.energy).collect()
    }

    /// `φ_k²` for every pair.
    pub fn squared_modes(&self) -> Vec<SampledFunction> {
        self.pairs.iter().map(|p| p.phi.square()).collect()
    }

    pub fn grid(&self) -> &Grid {
        self.pairs[0].phi.grid()
    }
}

/// Interior sign changes, ignoring samples negligible next to the peak.
pub fn count_nodes(values: &[f64]) -> usize {
    let peak = values.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
    let floor = NODE_FLOOR * peak;
    let mut last = 0.0;
    let mut changes = 0;
    for &v in values.iter().filter(|v| v.abs() > floor) {
        if last != 0.0 && (v > 0.0) != (last > 0.0) {
            changes += 1;
        }
        last = v;
    }
    changes
}

/// Lowest `m` eigenvalues only (no eigenvectors).
pub fn lowest_eigenvalues(v: &SampledFunction, m: usize) -> Result<Vec<f64>> {
    check_count(v.grid(), m)?;
    let op = assemble(v);
    let (mut lo, hi) = op.gershgorin_bounds();
    let mut out = Vec::with_capacity(m);
    for k in 1..=m {
        let (a, b) = bisect_eigenvalue(&op, k, (lo, hi));
        out.push(0.5 * (a + b));
        lo = a;
    }
    Ok(out)
}

fn check_count(grid: &Grid, m: usize) -> Result<()> {
    if m == 0 || m > grid.len() {
        return Err(Error::InvalidArgument(format!(
            "requested {m} eigenpairs on a grid with {} points",
            grid.len()
        )));
    }
    Ok(())
}

/// Lowest `m` eigenpairs of the discretized `H_V`.
pub fn lowest_eigenpairs(v: &SampledFunction, m: usize) -> Result<Spectrum> {
    check_count(v.grid(), m)?;
    let op = assemble(v);
    let grid = *v.grid();
    let tol = RESIDUAL_TOL * op.inf_norm();
    let (mut lo, hi) = op.gershgorin_bounds();
    let mut pairs: Vec<EigenPair> = Vec::with_capacity(m);

    for k in 1..=m {
        let (a, b) = bisect_eigenvalue(&op, k, (lo, hi));
        lo = a;
        let energy = 0.5 * (a + b);
        if let Some(prev) = pairs.last() {
            if energy <= prev.energy {
                return Err(Error::InternalConsistency(format!(
                    "eigenvalues {} and {k} are not separated ({energy} <= {})",
                    k - 1,
                    prev.energy
                )));
            }
        }

        let mut vector = eigenvector(&op, energy, tol)?;
        orthogonalize(&mut vector, &pairs);
        let mut nodes = count_nodes(&vector);
        if nodes != k - 1 {
            // second pass against lower modes, then a fresh inverse step
            orthogonalize(&mut vector, &pairs);
            inverse_step(&op, energy, &mut vector);
            orthogonalize(&mut vector, &pairs);
            nodes = count_nodes(&vector);
            if nodes != k - 1 {
                return Err(Error::InternalConsistency(format!(
                    "eigenfunction {k} has {nodes} nodes instead of {}; grid too coarse?",
                    k - 1
                )));
            }
        }
        normalize(&mut vector, grid.spacing());
        pairs.push(EigenPair {
            k,
            energy,
            phi: SampledFunction::from_raw(grid, vector),
            nodes,
        });
    }
    Ok(Spectrum { pairs })
}

/// Inverse iteration at shift `energy`, started from the twisted-factorization
/// vector, until the residual drops below `tol`.
fn eigenvector(op: &TridiagonalOperator, energy: f64, tol: f64) -> Result<Vec<f64>> {
    let mut x = twisted_vector(op, energy);
    let mut residual = op.residual_norm(&x, energy);
    for _ in 0..MAX_INVERSE_STEPS {
        if residual <= tol {
            return Ok(x);
        }
        inverse_step(op, energy, &mut x);
        residual = op.residual_norm(&x, energy);
    }
    if residual <= tol {
        return Ok(x);
    }
    // shift may sit on a rounding plateau; retry at the Rayleigh quotient
    let refined = op.rayleigh_quotient(&x);
    let x = twisted_vector(op, refined);
    let residual = op
        .residual_norm(&x, energy)
        .min(op.residual_norm(&x, refined));
    if residual <= tol {
        Ok(x)
    } else {
        Err(Error::InternalConsistency(format!(
            "inverse iteration at E = {energy} stalled with residual {residual:e} (tolerance {tol:e})"
        )))
    }
}

/// Solution of `(T - E) x = γ_k e_k` with the twist index `k` chosen to
/// minimize `|γ_k|`, scaled so `x_k = 1`.
fn twisted_vector(op: &TridiagonalOperator, energy: f64) -> Vec<f64> {
    let n = op.potential.len();
    let h2 = op.h2();
    let shifted: Vec<f64> = op.potential.iter().map(|&v| h2 * (v - energy)).collect();

    // forward: R_i = x_{i+1}/x_i with s_i = R_i - 1
    let mut fwd_s = vec![0.0; n];
    let mut fwd_r = vec![0.0; n];
    let mut carry = 1.0;
    for i in 0..n {
        let s = shifted[i] + carry;
        let r = guard(1.0 + s);
        fwd_s[i] = s;
        fwd_r[i] = r;
        carry = s / r;
    }
    // backward: Q_i = x_{i-1}/x_i with t_i = Q_i - 1
    let mut bwd_t = vec![0.0; n];
    let mut bwd_q = vec![0.0; n];
    let mut carry = 1.0;
    for i in (0..n).rev() {
        let t = shifted[i] + carry;
        let q = guard(1.0 + t);
        bwd_t[i] = t;
        bwd_q[i] = q;
        carry = t / q;
    }

    let twist = (0..n)
        .min_by(|&a, &b| {
            let ga = (fwd_s[a] + bwd_t[a] - shifted[a]).abs();
            let gb = (fwd_s[b] + bwd_t[b] - shifted[b]).abs();
            ga.total_cmp(&gb)
        })
        .unwrap_or(0);

    let mut x = vec![0.0; n];
    x[twist] = 1.0;
    for i in (0..twist).rev() {
        x[i] = x[i + 1] / fwd_r[i];
    }
    for i in twist + 1..n {
        x[i] = x[i - 1] / bwd_q[i];
    }
    let scale = x.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
    x.iter_mut().for_each(|v| *v /= scale);
    x
}

/// One step `x ← (T - E)⁻¹ x` through the ratio-form LU factorization,
/// rescaled to unit max norm.
fn inverse_step(op: &TridiagonalOperator, energy: f64, x: &mut [f64]) {
    let n = x.len();
    let h2 = op.h2();
    let pivots = op.forward_pivots(energy);
    // L y = h² x, with L unit lower bidiagonal, multipliers -1/R_{i-1}
    let mut y: Vec<f64> = x.iter().map(|v| h2 * v).collect();
    for i in 1..n {
        y[i] += y[i - 1] / pivots[i - 1];
    }
    // U z = y, U = upper bidiagonal with diag R_i and superdiag -1
    x[n - 1] = y[n - 1] / pivots[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = (y[i] + x[i + 1]) / pivots[i];
    }
    let scale = x.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
    if scale > 0.0 && scale.is_finite() {
        x.iter_mut().for_each(|v| *v /= scale);
    }
}

/// One Gram–Schmidt pass against already accepted (normalized) modes.
fn orthogonalize(x: &mut [f64], lower: &[EigenPair]) {
    for pair in lower {
        let phi = pair.phi.values();
        let h = pair.phi.grid().spacing();
        // phi has unit discrete norm: h Σ φ² = 1
        let overlap = h * dot(x, phi);
        x.iter_mut().zip(phi).for_each(|(v, p)| *v -= overlap * p);
    }
}

/// Scale to `h Σ x² = 1` with the first significant sample positive.
fn normalize(x: &mut [f64], h: f64) {
    let peak = x.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
    let first = x
        .iter()
        .copied()
        .find(|v| v.abs() > NODE_FLOOR * peak)
        .unwrap_or(1.0);
    let norm = (h * dot(x, x)).sqrt();
    let scale = first.signum() / norm;
    x.iter_mut().for_each(|v| *v *= scale);
}
