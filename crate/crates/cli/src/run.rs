//! Pipeline execution and artifact output.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use optpot::{
    continuum_residual, independence_check, lowest_eigenpairs, make_grid, minimality_oracle,
    sample_potential, solve_inverse, stationarity_residual, system_residual, Grid, OracleOptions,
    PotentialSpec, SampledFunction, TargetSet,
};

use crate::config::{Mode, RunConfig};
use crate::error::CliError;
use crate::report::{Failure, InverseReport, MinimalityEcho, RunReport, Status, VerifyReport};

pub const REPORT_FILE: &str = "report.json";
pub const POTENTIAL_FILE: &str = "potential.csv";
pub const EIGENFUNCTIONS_FILE: &str = "eigenfunctions.csv";
pub const U_HAT_FILE: &str = "u_hat.csv";
pub const SIGMA_FILE: &str = "sigma.json";

fn core(e: optpot::Error) -> CliError {
    match e {
        optpot::Error::InputFormat { .. } | optpot::Error::InvalidArgument(_) => CliError::Input(e),
        other => CliError::Solver(other),
    }
}

/// Executes the configured pipeline and writes its artifacts to
/// `config.output_dir`.
///
/// Solver failures are recorded in the returned report (and in
/// `report.json`) rather than returned as errors; use
/// [`RunReport::exit_code`] to map them.
pub fn run(config: &RunConfig) -> Result<RunReport, CliError> {
    let start = Instant::now();
    let grid = make_grid(config.length, config.n).map_err(CliError::Input)?;
    let v0 = sample_potential(&config.potential, &grid).map_err(core)?;
    fs::create_dir_all(&config.output_dir).map_err(|source| CliError::Output {
        path: config.output_dir.clone(),
        source,
    })?;

    let mut out = Artifacts {
        dir: &config.output_dir,
        written: Vec::new(),
    };
    let mut report = RunReport::new(config);
    match pipeline(config, &v0, &mut out, &mut report) {
        Ok(()) => {}
        Err(CliError::Solver(e)) => {
            report.status = Status::Failed;
            report.failure = Some(Failure::from(&e));
        }
        Err(other) => return Err(other),
    }

    out.written.push(REPORT_FILE.to_owned());
    report.artifacts = out.written;
    report.wall_time_seconds = start.elapsed().as_secs_f64();
    let path = config.output_dir.join(REPORT_FILE);
    fs::write(&path, report.to_json()).map_err(|source| CliError::Output { path, source })?;
    Ok(report)
}

struct Artifacts<'a> {
    dir: &'a Path,
    written: Vec<String>,
}

impl Artifacts<'_> {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Writes `x` followed by the given columns, one row per grid node.
    fn csv(
        &mut self,
        name: &str,
        grid: &Grid,
        columns: &[(String, &[f64])],
    ) -> Result<(), CliError> {
        let path = self.path(name);
        let io_err = |e: csv::Error| CliError::Output {
            path: path.clone(),
            source: e.into(),
        };
        let mut w = csv::Writer::from_path(&path).map_err(io_err)?;
        let mut header = vec!["x".to_owned()];
        header.extend(columns.iter().map(|(name, _)| name.clone()));
        w.write_record(&header).map_err(io_err)?;
        for (i, x) in grid.nodes().enumerate() {
            let mut row = vec![x.to_string()];
            row.extend(columns.iter().map(|(_, col)| col[i].to_string()));
            w.write_record(&row).map_err(io_err)?;
        }
        w.flush().map_err(|source| CliError::Output {
            path: path.clone(),
            source,
        })?;
        self.written.push(name.to_owned());
        Ok(())
    }

    fn text(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        let path = self.path(name);
        fs::write(&path, contents).map_err(|source| CliError::Output { path, source })?;
        self.written.push(name.to_owned());
        Ok(())
    }

    fn reload(&self, name: &str, column: &str, grid: &Grid) -> Result<SampledFunction, CliError> {
        let spec = PotentialSpec::Samples {
            path: self.path(name),
            column: Some(column.to_owned()),
        };
        sample_potential(&spec, grid).map_err(|e| {
            CliError::Solver(optpot::Error::InternalConsistency(format!(
                "cannot reload written artifact: {e}"
            )))
        })
    }
}

fn pipeline(
    config: &RunConfig,
    v0: &SampledFunction,
    out: &mut Artifacts<'_>,
    report: &mut RunReport,
) -> Result<(), CliError> {
    let grid = *v0.grid();
    let m = config.m;
    let spectrum0 = lowest_eigenpairs(v0, m).map_err(core)?;
    report.eigenvalues_v0 = spectrum0.energies();

    let Some(targets) = &config.targets else {
        out.csv(POTENTIAL_FILE, &grid, &[("v0".into(), v0.values())])?;
        let modes: Vec<(String, &[f64])> = spectrum0
            .pairs()
            .iter()
            .map(|p| (format!("phi_{}", p.k), p.phi.values()))
            .collect();
        out.csv(EIGENFUNCTIONS_FILE, &grid, &modes)?;
        return Ok(());
    };

    let solution = solve_inverse(v0, targets, &config.solver).map_err(core)?;

    out.csv(
        POTENTIAL_FILE,
        &grid,
        &[
            ("v0".into(), v0.values()),
            ("v_hat".into(), solution.v_hat.values()),
        ],
    )?;
    let modes: Vec<(String, &[f64])> = solution
        .spectrum
        .pairs()
        .iter()
        .map(|p| (format!("phi_{}", p.k), p.phi.values()))
        .collect();
    out.csv(EIGENFUNCTIONS_FILE, &grid, &modes)?;
    let u_cols: Vec<(String, &[f64])> = solution
        .u_hat
        .iter()
        .enumerate()
        .map(|(j, u)| (format!("u_{}", j + 1), u.values()))
        .collect();
    out.csv(U_HAT_FILE, &grid, &u_cols)?;
    out.text(
        SIGMA_FILE,
        &format!(
            "{}\n",
            serde_json::to_string(&solution.sigma).expect("sigma serializes")
        ),
    )?;

    // everything below is recomputed from the files just written
    let v0_file = out.reload(POTENTIAL_FILE, "v0", &grid)?;
    let v_hat = out.reload(POTENTIAL_FILE, "v_hat", &grid)?;
    let u_hat = (1..=m)
        .map(|j| out.reload(U_HAT_FILE, &format!("u_{j}"), &grid))
        .collect::<Result<Vec<_>, _>>()?;
    let sigma = read_sigma(&out.path(SIGMA_FILE), m)?;

    let spectrum = lowest_eigenpairs(&v_hat, m).map_err(core)?;
    let eigenvalues_v_hat = spectrum.energies();
    let constraint_residuals: Vec<f64> = eigenvalues_v_hat
        .iter()
        .zip(targets.values())
        .map(|(e, t)| e - t)
        .collect();
    let reconstructed = u_hat
        .iter()
        .zip(&sigma)
        .try_fold(v0_file.clone(), |acc, (u, &s)| {
            acc.axpy(-f64::from(s), &u.square())
        })
        .map_err(core)?;

    report.inverse = Some(InverseReport {
        coefficients: solution.coefficients.values().to_vec(),
        sigma: sigma.clone(),
        distance: v_hat.sub(&v0_file).map_err(core)?.norm(),
        eigenvalues_v_hat,
        max_constraint_residual: constraint_residuals
            .iter()
            .fold(0.0, |a: f64, r| a.max(r.abs())),
        constraint_residuals,
        stationarity_residual: stationarity_residual(&v_hat, &v0_file, &spectrum).map_err(core)?,
        reconstruction_error: reconstructed.max_abs_diff(&v_hat).map_err(core)?,
        diagnostics: (&solution.diagnostics).into(),
    });

    if config.mode == Mode::Verify {
        report.verify = Some(verify(
            config, &v0_file, targets, &u_hat, &sigma, &v_hat, &solution,
        )?);
    }
    Ok(())
}

fn read_sigma(path: &Path, m: usize) -> Result<Vec<i8>, CliError> {
    let broken = |message: String| {
        CliError::Solver(optpot::Error::InternalConsistency(format!(
            "cannot reload {}: {message}",
            path.display()
        )))
    };
    let text = fs::read_to_string(path).map_err(|e| broken(e.to_string()))?;
    let sigma: Vec<i8> = serde_json::from_str(&text).map_err(|e| broken(e.to_string()))?;
    if sigma.len() != m {
        return Err(broken(format!(
            "expected {m} entries, found {}",
            sigma.len()
        )));
    }
    Ok(sigma)
}

fn verify(
    config: &RunConfig,
    v0: &SampledFunction,
    targets: &TargetSet,
    u_hat: &[SampledFunction],
    sigma: &[i8],
    v_hat: &SampledFunction,
    solution: &optpot::InverseSolution,
) -> Result<VerifyReport, CliError> {
    let discrete = system_residual(u_hat, sigma, v0, targets).map_err(core)?;
    let continuum = continuum_residual(u_hat, sigma, v0, targets).map_err(core)?;
    let gram_smallest_eigenvalue = independence_check(v_hat, config.m).map_err(core)?;

    let opts = OracleOptions {
        basis_dim: config.oracle.basis_dim,
        trials: config.oracle.trials,
        seed: config.seed,
        ..Default::default()
    };
    let (minimality, notice) = match minimality_oracle(v0, targets, solution, &opts) {
        Ok(r) => (
            Some(MinimalityEcho {
                ratio: r.solver_distance / r.oracle_distance,
                solver_distance: r.solver_distance,
                oracle_distance: r.oracle_distance,
                gap: r.gap,
                starts: r.starts,
                local_minima: r.local_minima,
            }),
            None,
        ),
        Err(e @ optpot::Error::OracleInfeasible { .. }) => (None, Some(e.to_string())),
        Err(e) => return Err(core(e)),
    };

    Ok(VerifyReport {
        system_residuals: discrete.per_equation,
        max_system_residual: discrete.max_residual,
        continuum_residuals: continuum.per_equation,
        max_continuum_residual: continuum.max_residual,
        gram_smallest_eigenvalue,
        minimality,
        notice,
    })
}
