//! The machine-readable `report.json` written by every run.

use std::fmt::Write as _;

use optpot::{JacobianKind, PotentialSpec, SolveDiagnostics, SolverOptions};
use serde::Serialize;

use crate::config::{Mode, RunConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PotentialEcho {
    Zero,
    Constant { value: f64 },
    Harmonic { strength: f64, center: f64 },
    SquareWell { depth: f64, left: f64, right: f64 },
    Samples { path: String, column: String },
}

impl From<&PotentialSpec> for PotentialEcho {
    fn from(spec: &PotentialSpec) -> Self {
        match spec {
            PotentialSpec::Zero => PotentialEcho::Zero,
            PotentialSpec::Constant(value) => PotentialEcho::Constant { value: *value },
            PotentialSpec::Harmonic { strength, center } => PotentialEcho::Harmonic {
                strength: *strength,
                center: *center,
            },
            PotentialSpec::SquareWell { depth, left, right } => PotentialEcho::SquareWell {
                depth: *depth,
                left: *left,
                right: *right,
            },
            PotentialSpec::Samples { path, column } => PotentialEcho::Samples {
                path: path.display().to_string(),
                column: column.clone().unwrap_or_else(|| "v".into()),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverEcho {
    pub scf_tol: f64,
    pub scf_damping: f64,
    pub scf_max_iter: usize,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub homotopy_steps: usize,
    pub sigma_threshold: f64,
    pub jacobian: &'static str,
}

impl From<&SolverOptions> for SolverEcho {
    fn from(o: &SolverOptions) -> Self {
        Self {
            scf_tol: o.scf_tol,
            scf_damping: o.scf_damping,
            scf_max_iter: o.scf_max_iter,
            newton_tol: o.newton_tol,
            newton_max_iter: o.newton_max_iter,
            homotopy_steps: o.homotopy_steps,
            sigma_threshold: o.sigma_threshold,
            jacobian: match o.jacobian {
                JacobianKind::Gram => "gram",
                JacobianKind::FiniteDifference => "finite_difference",
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleEcho {
    pub basis_dim: usize,
    pub trials: usize,
    pub seed: u64,
}

/// The validated configuration, minus the output location.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfigEcho {
    pub mode: Mode,
    #[serde(rename = "L")]
    pub length: f64,
    pub n: usize,
    pub h: f64,
    pub m: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub targets: Option<Vec<f64>>,
    pub potential: PotentialEcho,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverEcho>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleEcho>,
}

impl Serialize for Mode {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl From<&RunConfig> for ConfigEcho {
    fn from(c: &RunConfig) -> Self {
        let solves = c.mode != Mode::Forward;
        Self {
            mode: c.mode,
            length: c.length,
            n: c.n,
            h: c.length / (c.n + 1) as f64,
            m: c.m,
            targets: c.targets.as_ref().map(|t| t.values().to_vec()),
            potential: (&c.potential).into(),
            solver: solves.then(|| (&c.solver).into()),
            oracle: (c.mode == Mode::Verify).then_some(OracleEcho {
                basis_dim: c.oracle.basis_dim,
                trials: c.oracle.trials,
                seed: c.seed,
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticsEcho {
    pub homotopy_steps: usize,
    pub step_halvings: usize,
    pub newton_iterations: usize,
    pub scf_iterations: usize,
    pub jacobian_fallbacks: usize,
    pub fixed_point_residual: f64,
}

impl From<&SolveDiagnostics> for DiagnosticsEcho {
    fn from(d: &SolveDiagnostics) -> Self {
        Self {
            homotopy_steps: d.homotopy_steps,
            step_halvings: d.step_halvings,
            newton_iterations: d.newton_iterations,
            scf_iterations: d.scf_iterations,
            jacobian_fallbacks: d.jacobian_fallbacks,
            fixed_point_residual: d.fixed_point_residual,
        }
    }
}

/// Inverse-problem results. Residuals and distances are recomputed from
/// the written `potential.csv`, `u_hat.csv` and `sigma.json`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InverseReport {
    pub coefficients: Vec<f64>,
    pub sigma: Vec<i8>,
    pub distance: f64,
    pub eigenvalues_v_hat: Vec<f64>,
    pub constraint_residuals: Vec<f64>,
    pub max_constraint_residual: f64,
    pub stationarity_residual: f64,
    pub reconstruction_error: f64,
    pub diagnostics: DiagnosticsEcho,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MinimalityEcho {
    pub solver_distance: f64,
    pub oracle_distance: f64,
    /// `oracle_distance - solver_distance`; negative means the oracle won.
    pub gap: f64,
    pub ratio: f64,
    pub starts: usize,
    pub local_minima: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub system_residuals: Vec<f64>,
    pub max_system_residual: f64,
    pub continuum_residuals: Vec<f64>,
    pub max_continuum_residual: f64,
    pub gram_smallest_eigenvalue: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub minimality: Option<MinimalityEcho>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub notice: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Failure {
    pub kind: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stage: Option<&'static str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub residual: Option<f64>,
}

impl From<&optpot::Error> for Failure {
    fn from(e: &optpot::Error) -> Self {
        use optpot::Error as E;
        let kind = match e {
            E::InvalidArgument(_) => "invalid_argument",
            E::GridMismatch { .. } => "grid_mismatch",
            E::InputFormat { .. } => "input_format",
            E::NonConvergence { .. } => "non_convergence",
            E::InternalConsistency(_) => "internal_consistency",
            E::Conditioning(_) => "conditioning",
            E::OracleInfeasible { .. } => "oracle_infeasible",
        };
        let (stage, iterations, residual) = match e {
            E::NonConvergence {
                stage,
                iterations,
                residual,
                ..
            } => (Some(*stage), Some(*iterations), Some(*residual)),
            _ => (None, None, None),
        };
        Self {
            kind,
            message: e.to_string(),
            stage,
            iterations,
            residual,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub status: Status,
    pub config: ConfigEcho,
    pub eigenvalues_v0: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inverse: Option<InverseReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verify: Option<VerifyReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<Failure>,
    pub artifacts: Vec<String>,
    pub wall_time_seconds: f64,
}

impl RunReport {
    pub fn new(config: &RunConfig) -> Self {
        Self {
            status: Status::Ok,
            config: config.into(),
            eigenvalues_v0: Vec::new(),
            inverse: None,
            verify: None,
            failure: None,
            artifacts: Vec::new(),
            wall_time_seconds: 0.0,
        }
    }

    /// 0 on success, 2 when a solver stage failed.
    pub fn exit_code(&self) -> u8 {
        match self.status {
            Status::Ok => 0,
            Status::Failed => 2,
        }
    }

    pub fn to_json(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("report serializes");
        out.push('\n');
        out
    }

    /// Short human-readable summary.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        let c = &self.config;
        let _ = writeln!(
            s,
            "mode {} on (0, {}) with n = {}, m = {}",
            c.mode, c.length, c.n, c.m
        );
        let _ = writeln!(s, "E(V0) = {:?}", self.eigenvalues_v0);
        if let Some(inv) = &self.inverse {
            let _ = writeln!(s, "c = {:?}", inv.coefficients);
            let _ = writeln!(s, "sigma = {:?}", inv.sigma);
            let _ = writeln!(s, "distance = {}", inv.distance);
            let _ = writeln!(
                s,
                "max constraint residual = {:e}, stationarity = {:e}",
                inv.max_constraint_residual, inv.stationarity_residual
            );
        }
        if let Some(v) = &self.verify {
            let _ = writeln!(
                s,
                "system residual = {:e}, continuum residual = {:e}, Gram min eigenvalue = {:e}",
                v.max_system_residual, v.max_continuum_residual, v.gram_smallest_eigenvalue
            );
            if let Some(mm) = &v.minimality {
                let _ = writeln!(
                    s,
                    "oracle distance = {} (solver/oracle = {})",
                    mm.oracle_distance, mm.ratio
                );
            }
            if let Some(notice) = &v.notice {
                let _ = writeln!(s, "notice: {notice}");
            }
        }
        if let Some(f) = &self.failure {
            let _ = writeln!(s, "FAILED ({}): {}", f.kind, f.message);
        }
        let _ = write!(s, "wall time {:.3} s", self.wall_time_seconds);
        s
    }
}
