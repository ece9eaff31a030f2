//! Prior potentials: analytic presets and tabulated sample files.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::grid::{Grid, SampledFunction};

/// Description of a potential on `(0, L)`.
#[derive(Debug, Clone, PartialEq)]
pub enum PotentialSpec {
    Zero,
    Constant(f64),
    /// `strength * (x - center)^2`.
    Harmonic {
        strength: f64,
        center: f64,
    },
    /// `depth` on `(left, right)`, zero elsewhere.
    SquareWell {
        depth: f64,
        left: f64,
        right: f64,
    },
    /// Two-column CSV `x,<column>`, linearly interpolated onto the grid.
    /// `column` defaults to `v`.
    Samples {
        path: PathBuf,
        column: Option<String>,
    },
}

impl PotentialSpec {
    /// The analytic presets with their reference parameters on `(0, length)`:
    /// zero, constant 5, harmonic `4 (x - L/2)²` and a depth −10 well on the
    /// middle half.
    pub fn presets(length: f64) -> [(&'static str, PotentialSpec); 4] {
        [
            ("zero", PotentialSpec::Zero),
            ("constant", PotentialSpec::Constant(5.0)),
            (
                "harmonic",
                PotentialSpec::Harmonic {
                    strength: 4.0,
                    center: length / 2.0,
                },
            ),
            (
                "square_well",
                PotentialSpec::SquareWell {
                    depth: -10.0,
                    left: 0.25 * length,
                    right: 0.75 * length,
                },
            ),
        ]
    }
}

pub fn sample_potential(spec: &PotentialSpec, grid: &Grid) -> Result<SampledFunction> {
    let grid = *grid;
    match spec {
        PotentialSpec::Zero => Ok(SampledFunction::zeros(grid)),
        PotentialSpec::Constant(c) => {
            check_finite("constant", *c)?;
            Ok(SampledFunction::constant(grid, *c))
        }
        PotentialSpec::Harmonic { strength, center } => {
            check_finite("harmonic strength", *strength)?;
            check_finite("harmonic center", *center)?;
            let (a, c) = (*strength, *center);
            Ok(SampledFunction::from_fn(grid, |x| a * (x - c) * (x - c)))
        }
        PotentialSpec::SquareWell { depth, left, right } => {
            check_finite("square well depth", *depth)?;
            let (l, r) = (*left, *right);
            if !(0.0 <= l && l < r && r <= grid.length()) {
                return Err(Error::InvalidArgument(format!(
                    "square well requires 0 <= left < right <= L, got left={l}, right={r}, L={}",
                    grid.length()
                )));
            }
            let d = *depth;
            Ok(SampledFunction::from_fn(grid, |x| {
                if l < x && x < r {
                    d
                } else {
                    0.0
                }
            }))
        }
        PotentialSpec::Samples { path, column } => {
            let table = read_samples(path, column.as_deref().unwrap_or("v"))?;
            if let Some(&(x, _)) = table.iter().find(|(x, _)| *x < 0.0 || *x > grid.length()) {
                return Err(Error::InputFormat {
                    path: path.clone(),
                    message: format!("x = {x} lies outside [0, {}]", grid.length()),
                });
            }
            let values = grid.nodes().map(|x| interpolate(&table, x)).collect();
            SampledFunction::new(grid, values)
        }
    }
}

fn check_finite(what: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "{what} must be finite, got {v}"
        )))
    }
}

/// Reads `(x, value)` pairs from a CSV with header `x,<column>,...`.
fn read_samples(path: &Path, column: &str) -> Result<Vec<(f64, f64)>> {
    let bad = |message: String| Error::InputFormat {
        path: path.to_path_buf(),
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| bad(e.to_string()))?;
    let headers = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
    let x_col = headers
        .iter()
        .position(|h| h == "x")
        .ok_or_else(|| bad("missing `x` column".into()))?;
    let v_col = headers
        .iter()
        .position(|h| h == column)
        .ok_or_else(|| bad(format!("missing `{column}` column")))?;

    let mut table = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| bad(e.to_string()))?;
        let field = |col: usize, name: &str| -> Result<f64> {
            let raw = record.get(col).unwrap_or("");
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| bad(format!("row {}: bad {name} value {raw:?}", row + 2)))
        };
        table.push((field(x_col, "x")?, field(v_col, column)?));
    }
    if table.is_empty() {
        return Err(bad("no data rows".into()));
    }
    if table.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(bad("rows must be sorted by strictly increasing x".into()));
    }
    Ok(table)
}

/// Piecewise-linear interpolation, clamped to the end samples.
fn interpolate(table: &[(f64, f64)], x: f64) -> f64 {
    let (x0, v0) = table[0];
    let (xn, vn) = table[table.len() - 1];
    if x <= x0 {
        return v0;
    }
    if x >= xn {
        return vn;
    }
    // first index with table x > x
    let j = table.partition_point(|&(xs, _)| xs <= x);
    let (xa, va) = table[j - 1];
    let (xb, vb) = table[j];
    let t = (x - xa) / (xb - xa);
    (1.0 - t) * va + t * vb
}
