//! Uniform interior grids on `(0, L)` and functions sampled on them.
//!
//! Functions are stored by their values at the `n` interior nodes. The
//! quadrature is the composite trapezoid rule with zero boundary values,
//! which reduces to `h * sum(f_i g_i)`.

use std::fmt;

use crate::error::{Error, Result};

/// Uniform discretization of `(0, L)` with `n` interior nodes `x_i = i h`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    length: f64,
    n: usize,
    h: f64,
}

impl Grid {
    pub fn new(length: f64, n: usize) -> Result<Self> {
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "interval length must be positive and finite, got {length}"
            )));
        }
        if n < 3 {
            return Err(Error::InvalidArgument(format!(
                "grid needs at least 3 interior points, got {n}"
            )));
        }
        Ok(Self {
            length,
            n,
            h: length / (n + 1) as f64,
        })
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn len(&self) -> usize {
        self.n
    }

    /// Always false; a grid has at least three nodes.
    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    /// Position of the interior node with zero-based index `i`.
    pub fn node(&self, i: usize) -> f64 {
        (i + 1) as f64 * self.h
    }

    pub fn nodes(&self) -> impl ExactSizeIterator<Item = f64> + '_ {
        (0..self.n).map(move |i| self.node(i))
    }

    pub(crate) fn ensure_same(&self, other: &Grid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch {
                left: self.to_string(),
                right: other.to_string(),
            })
        }
    }
}

impl fmt::Display for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Grid(L={}, n={})", self.length, self.n)
    }
}

/// Builds the grid for `(0, length)` with `n` interior points.
pub fn make_grid(length: f64, n: usize) -> Result<Grid> {
    Grid::new(length, n)
}

/// Real function given by its values at the interior nodes of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledFunction {
    grid: Grid,
    values: Vec<f64>,
}

impl SampledFunction {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} samples, got {}",
                grid.len(),
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "sample {i} is not finite ({})",
                values[i]
            )));
        }
        Ok(Self { grid, values })
    }

    /// Values produced internally from finite inputs by finite arithmetic.
    pub(crate) fn from_raw(grid: Grid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn zeros(grid: Grid) -> Self {
        Self::from_raw(grid, vec![0.0; grid.len()])
    }

    pub fn constant(grid: Grid, value: f64) -> Self {
        Self::from_raw(grid, vec![value; grid.len()])
    }

    /// Samples `f` at the interior nodes.
    ///
    /// Panics if `f` returns a non-finite value.
    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Self {
        let values: Vec<f64> = grid.nodes().map(f).collect();
        assert!(
            values.iter().all(|v| v.is_finite()),
            "sampled function produced a non-finite value"
        );
        Self::from_raw(grid, values)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_raw(self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.grid.ensure_same(&other.grid)?;
        Ok(Self::from_raw(
            self.grid,
            self.values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        ))
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, factor: f64) -> Self {
        self.map(|v| factor * v)
    }

    /// `self + alpha * other`.
    pub fn axpy(&self, alpha: f64, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + alpha * b)
    }

    pub fn square(&self) -> Self {
        self.map(|v| v * v)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Discrete L2 norm, `sqrt(<f, f>)`.
    pub fn norm(&self) -> f64 {
        (self.grid.h * self.values.iter().map(|v| v * v).sum::<f64>()).sqrt()
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        self.grid.ensure_same(&other.grid)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }
}

/// Trapezoid approximation of `∫ f g dx` with zero boundary values.
pub fn inner_product(f: &SampledFunction, g: &SampledFunction) -> Result<f64> {
    f.grid.ensure_same(&g.grid)?;
    Ok(f.grid.h * dot(&f.values, &g.values))
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
