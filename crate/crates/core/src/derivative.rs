//! First-order response of eigenvalues to the potential.
//!
//! For a normalized eigenfunction, `dE_k(V)[h] = <φ_k², h>`, so `φ_k²` is the
//! gradient of `E_k` in L². The Gram matrix of squared eigenfunctions is the
//! Jacobian of `(E_1..E_m)` along the directions `φ_1²..φ_m²`.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::forward::{lowest_eigenpairs, lowest_eigenvalues, Spectrum};
use crate::grid::{inner_product, SampledFunction};

/// Gradient of `E_k` with respect to the potential, i.e. `φ_k(V)²`.
pub fn eigenvalue_gradient(v: &SampledFunction, k: usize) -> Result<SampledFunction> {
    check_index(k)?;
    let spectrum = lowest_eigenpairs(v, k)?;
    Ok(spectrum.pairs()[k - 1].phi.square())
}

/// `dE_k(V)[h]`.
pub fn directional_derivative(
    v: &SampledFunction,
    k: usize,
    direction: &SampledFunction,
) -> Result<f64> {
    v.grid().ensure_same(direction.grid())?;
    inner_product(&eigenvalue_gradient(v, k)?, direction)
}

/// Relative disagreement between the analytic derivative and the central
/// difference `[E_k(V + t h) - E_k(V - t h)] / 2t`.
pub fn finite_difference_check(
    v: &SampledFunction,
    k: usize,
    direction: &SampledFunction,
    step: f64,
) -> Result<f64> {
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "finite-difference step must be positive, got {step}"
        )));
    }
    let analytic = directional_derivative(v, k, direction)?;
    let plus = lowest_eigenvalues(&v.axpy(step, direction)?, k)?[k - 1];
    let minus = lowest_eigenvalues(&v.axpy(-step, direction)?, k)?[k - 1];
    let numeric = (plus - minus) / (2.0 * step);
    Ok((numeric - analytic).abs() / (1.0 + analytic.abs()))
}

fn check_index(k: usize) -> Result<()> {
    if k == 0 {
        Err(Error::InvalidArgument("eigenvalue index is 1-based".into()))
    } else {
        Ok(())
    }
}

/// `G_ij = <φ_i², φ_j²>` for the lowest `m` eigenfunctions of a potential.
#[derive(Debug, Clone)]
pub struct GramMatrix {
    entries: DMatrix<f64>,
    potential_hash: u64,
}

impl GramMatrix {
    pub fn from_spectrum(spectrum: &Spectrum, potential: &SampledFunction) -> Result<Self> {
        let squares = spectrum.squared_modes();
        let m = squares.len();
        let mut entries = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in i..m {
                let g = inner_product(&squares[i], &squares[j])?;
                entries[(i, j)] = g;
                entries[(j, i)] = g;
            }
        }
        Ok(Self {
            entries,
            potential_hash: potential_hash(potential),
        })
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    /// Hash of the potential samples this matrix was computed for.
    pub fn potential_hash(&self) -> u64 {
        self.potential_hash
    }

    /// Eigenvalues in increasing order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = self
            .entries
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    pub fn smallest_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }

    /// Solves `G x = b` by Cholesky factorization.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let ev = self.eigenvalues();
        let (lo, hi) = (ev[0], ev[ev.len() - 1]);
        if lo.is_nan() || lo <= 1e-13 * hi {
            return Err(Error::Conditioning(format!(
                "eigenvalues span [{lo:e}, {hi:e}]"
            )));
        }
        let chol = self
            .entries
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Conditioning("Cholesky factorization failed".into()))?;
        let b = nalgebra::DVector::from_column_slice(rhs);
        Ok(chol.solve(&b).iter().copied().collect())
    }
}

/// Gram matrix of the lowest `m` squared eigenfunctions of `v`.
pub fn gram_matrix(v: &SampledFunction, m: usize) -> Result<GramMatrix> {
    if m == 0 {
        return Err(Error::InvalidArgument("Gram matrix needs m >= 1".into()));
    }
    let spectrum = lowest_eigenpairs(v, m)?;
    GramMatrix::from_spectrum(&spectrum, v)
}

pub(crate) fn potential_hash(v: &SampledFunction) -> u64 {
    let mut hasher = DefaultHasher::new();
    v.grid().len().hash(&mut hasher);
    v.grid().length().to_bits().hash(&mut hasher);
    for x in v.values() {
        x.to_bits().hash(&mut hasher);
    }
    hasher.finish()
}
