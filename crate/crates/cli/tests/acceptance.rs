//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails.

use std::f64::consts::PI;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use optpot::{
    continuum_residual, directional_derivative, finite_difference_check, gram_matrix,
    lowest_eigenpairs, lowest_eigenvalues, make_grid, minimality_oracle, sample_potential,
    solve_inverse, system_residual, InverseSolution, OracleOptions, PotentialSpec, SampledFunction,
    SolverOptions, TargetSet,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn ensure(ok: bool, message: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(message())
    }
}

fn free(n: usize) -> SampledFunction {
    SampledFunction::zeros(make_grid(PI, n).unwrap())
}

/// A converged inverse run, kept for the minimality criterion.
struct Solved {
    v0: SampledFunction,
    targets: TargetSet,
    solution: InverseSolution,
}

fn forward_accuracy() -> Check {
    let n = 2000;
    let h = PI / (n + 1) as f64;
    let energies = lowest_eigenvalues(&free(n), 5).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for (i, e) in energies.iter().enumerate() {
        let k = (i + 1) as f64;
        let bound = k.powi(4) * h * h / 6.0;
        let err = (e - k * k).abs();
        ensure(err <= bound, || {
            format!("k={k}: |E-k²| = {err:.1e} > {bound:e}")
        })?;
        worst = worst.max(err / bound);
    }
    let fine = lowest_eigenvalues(&free(2 * n + 1), 1).map_err(|e| e.to_string())?;
    let ratio = (energies[0] - 1.0).abs() / (fine[0] - 1.0).abs();
    ensure((3.5..=4.5).contains(&ratio), || {
        format!("E₁ error ratio {ratio}")
    })?;
    Ok(format!(
        "max err/bound {worst:.3}, E₁ error ratio {ratio:.4}"
    ))
}

fn shift_identity() -> Check {
    let mut worst: f64 = 0.0;
    for length in [PI, 10.0] {
        let grid = make_grid(length, 2000).unwrap();
        let spec = &PotentialSpec::presets(length)[3].1;
        let v0 = sample_potential(spec, &grid).map_err(|e| e.to_string())?;
        let shifted = v0.map(|v| v + 7.0);
        let a = lowest_eigenvalues(&v0, 5).map_err(|e| e.to_string())?;
        let b = lowest_eigenvalues(&shifted, 5).map_err(|e| e.to_string())?;
        for (k, (x, y)) in a.iter().zip(&b).enumerate() {
            let dev = (y - x - 7.0).abs();
            ensure(dev <= 1e-10, || {
                format!("L={length} k={}: deviation {dev:.1e}", k + 1)
            })?;
            worst = worst.max(dev);
        }
    }
    Ok(format!("max deviation {worst:.1e}"))
}

fn oscillation_and_orthonormality() -> Check {
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for length in [PI, 10.0] {
        let grid = make_grid(length, 2000).unwrap();
        for (name, spec) in PotentialSpec::presets(length) {
            let v = sample_potential(&spec, &grid).map_err(|e| e.to_string())?;
            let spectrum = lowest_eigenpairs(&v, 5).map_err(|e| e.to_string())?;
            for p in spectrum.pairs() {
                let nodes = optpot::forward::count_nodes(p.phi.values());
                ensure(nodes == p.k - 1, || {
                    format!("{name} L={length} k={}: {nodes} nodes", p.k)
                })?;
                for q in spectrum.pairs() {
                    let target = if p.k == q.k { 1.0 } else { 0.0 };
                    let dev = (optpot::inner_product(&p.phi, &q.phi).unwrap() - target).abs();
                    ensure(dev <= 1e-8, || {
                        format!("{name} L={length} <φ{},φ{}> off by {dev:.1e}", p.k, q.k)
                    })?;
                    worst = worst.max(dev);
                }
            }
            cases += 1;
        }
    }
    Ok(format!(
        "{cases} potentials, max Gram deviation {worst:.1e}"
    ))
}

fn random_smooth(grid: optpot::Grid, rng: &mut ChaCha8Rng, scale: f64) -> SampledFunction {
    let amps: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
    let offset = rng.random_range(-1.0..1.0);
    let l = grid.length();
    SampledFunction::from_fn(grid, |x| {
        scale
            * (offset
                + amps
                    .iter()
                    .enumerate()
                    .map(|(j, a)| a * ((j + 1) as f64 * PI * x / l).cos())
                    .sum::<f64>())
    })
}

fn eigenvalue_derivative() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_101);
    let mut worst: f64 = 0.0;
    let mut worst_const: f64 = 0.0;
    for case in 0..20 {
        let length = if rng.random_bool(0.5) { PI } else { 10.0 };
        let n = [500, 1000, 2000][rng.random_range(0..3)];
        let grid = make_grid(length, n).unwrap();
        let v = if case % 2 == 0 {
            let (_, spec) = PotentialSpec::presets(length)[rng.random_range(0..4)].clone();
            sample_potential(&spec, &grid).unwrap()
        } else {
            random_smooth(grid, &mut rng, 5.0)
        };
        let k = rng.random_range(1..=5);
        let h = random_smooth(grid, &mut rng, 1.0);
        let err = finite_difference_check(&v, k, &h, 1e-4).map_err(|e| e.to_string())?;
        ensure(err <= 1e-4, || {
            format!("case {case} (L={length}, n={n}, k={k}): {err:.1e}")
        })?;
        worst = worst.max(err);

        let one = SampledFunction::constant(grid, 1.0);
        let d = directional_derivative(&v, k, &one).map_err(|e| e.to_string())?;
        let dev = (d - 1.0).abs();
        ensure(dev <= 1e-10, || {
            format!("case {case}: constant direction gives {d}")
        })?;
        worst_const = worst_const.max(dev);
    }
    Ok(format!(
        "20 cases, max relative error {worst:.1e}, constant direction off by {worst_const:.1e}"
    ))
}

fn closed_form_gram() -> Check {
    let v = free(2000);
    let g = gram_matrix(&v, 2).map_err(|e| e.to_string())?;
    let expected = [[1.5 / PI, 1.0 / PI], [1.0 / PI, 1.5 / PI]];
    let mut worst: f64 = 0.0;
    for (i, row) in expected.iter().enumerate() {
        for (j, want) in row.iter().enumerate() {
            let dev = (g.get(i, j) - want).abs();
            ensure(dev <= 1e-6, || format!("G[{i}][{j}] off by {dev:.1e}"))?;
            worst = worst.max(dev);
        }
    }
    let mut worst_eig: f64 = 0.0;
    for m in 2..=6 {
        let lo = gram_matrix(&v, m)
            .map_err(|e| e.to_string())?
            .smallest_eigenvalue();
        let dev = (lo - 0.5 / PI).abs();
        ensure(dev <= 1e-6, || format!("m={m}: smallest eigenvalue {lo}"))?;
        worst_eig = worst_eig.max(dev);
    }
    Ok(format!(
        "entries off by {worst:.1e}, smallest eigenvalue (m=2..6) off by {worst_eig:.1e}"
    ))
}

fn trivial_case() -> Check {
    let mut worst: f64 = 0.0;
    for length in [PI, 10.0] {
        let grid = make_grid(length, 2000).unwrap();
        let v0 = sample_potential(&PotentialSpec::presets(length)[2].1, &grid).unwrap();
        let targets = TargetSet::new(lowest_eigenvalues(&v0, 3).unwrap()).unwrap();
        let sol =
            solve_inverse(&v0, &targets, &SolverOptions::default()).map_err(|e| e.to_string())?;
        ensure(sol.distance <= 1e-8, || {
            format!("distance {}", sol.distance)
        })?;
        ensure(sol.sigma.iter().all(|&s| s == 0), || {
            format!("sigma {:?}", sol.sigma)
        })?;
        let dev = sol.v_hat.max_abs_diff(&v0).unwrap();
        ensure(dev <= 1e-8, || format!("|V̂ - V₀| = {dev:.1e}"))?;
        worst = worst.max(dev).max(sol.distance);
    }
    Ok(format!("distance and |V̂ - V₀| at most {worst:.1e}"))
}

/// Residual thresholds shared by the two nontrivial inverse criteria.
fn inverse_case(
    targets: &[f64],
    store: &mut Vec<Solved>,
) -> Result<(InverseSolution, String), String> {
    let v0 = free(2000);
    let targets = TargetSet::new(targets.to_vec()).unwrap();
    let sol = solve_inverse(&v0, &targets, &SolverOptions::default()).map_err(|e| e.to_string())?;
    let constraint = sol.max_constraint_residual();
    ensure(constraint <= 1e-9, || {
        format!("constraint residual {constraint:.1e}")
    })?;
    ensure(sol.stationarity_residual <= 1e-6, || {
        format!("stationarity residual {:e}", sol.stationarity_residual)
    })?;
    let reconstruction = sol
        .reconstruct(&v0)
        .unwrap()
        .max_abs_diff(&sol.v_hat)
        .unwrap();
    ensure(reconstruction <= 1e-12, || {
        format!("reconstruction {reconstruction:.1e}")
    })?;

    let coarse = continuum_residual(&sol.u_hat, &sol.sigma, &v0, &targets).unwrap();
    let discrete = system_residual(&sol.u_hat, &sol.sigma, &v0, &targets).unwrap();
    let v0_fine = free(4001);
    let fine_sol =
        solve_inverse(&v0_fine, &targets, &SolverOptions::default()).map_err(|e| e.to_string())?;
    let fine = continuum_residual(&fine_sol.u_hat, &fine_sol.sigma, &v0_fine, &targets).unwrap();
    let ratio = coarse.max_residual / fine.max_residual;
    ensure((3.0..=5.0).contains(&ratio), || {
        format!("residual ratio under doubling {ratio}")
    })?;

    let detail = format!(
        "c = {:?}, σ = {:?}, constraint {constraint:.1e}, stationarity {:.1e}, reconstruction {reconstruction:.1e}, system residual {:.1e} (discrete) {:.1e} (continuum), doubling ratio {ratio:.3}",
        sol.coefficients.values(),
        sol.sigma,
        sol.stationarity_residual,
        discrete.max_residual,
        coarse.max_residual,
    );
    store.push(Solved {
        v0,
        targets,
        solution: sol.clone(),
    });
    Ok((sol, detail))
}

fn single_target(store: &mut Vec<Solved>) -> Check {
    let (sol, detail) = inverse_case(&[2.0], store)?;
    ensure(sol.sigma == [-1], || format!("σ = {:?}", sol.sigma))?;
    Ok(detail)
}

fn two_targets(store: &mut Vec<Solved>) -> Check {
    let (sol, detail) = inverse_case(&[2.0, 5.0], store)?;
    let active: i32 = sol.sigma.iter().map(|&s| i32::from(s).abs()).sum();
    ensure(active >= 1, || format!("σ = {:?}", sol.sigma))?;
    Ok(detail)
}

fn minimality(store: &[Solved]) -> Check {
    ensure(store.len() == 2, || {
        "criteria 7 and 8 did not both produce a solution".to_owned()
    })?;
    let opts = OracleOptions {
        basis_dim: 32,
        trials: 5,
        seed: 42,
        ..Default::default()
    };
    let mut lines = Vec::new();
    for s in store {
        let r =
            minimality_oracle(&s.v0, &s.targets, &s.solution, &opts).map_err(|e| e.to_string())?;
        ensure(r.solver_distance <= r.oracle_distance * 1.02, || {
            format!(
                "m={}: solver {} > 1.02 × oracle {}",
                s.targets.len(),
                r.solver_distance,
                r.oracle_distance
            )
        })?;
        lines.push(format!(
            "m={}: solver {:.6} vs oracle {:.6}",
            s.targets.len(),
            r.solver_distance,
            r.oracle_distance
        ));
    }
    Ok(lines.join(", "))
}

fn run_cli(config: &Path, output: &Path) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_optpot"))
        .arg("--config")
        .arg(config)
        .arg("--output")
        .arg(output)
        .arg("--quiet")
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.code() == Some(0), || {
        format!(
            "exit {:?}: {}",
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        )
    })
}

fn without_wall_time(dir: &Path) -> Result<String, String> {
    let text = fs::read_to_string(dir.join("report.json")).map_err(|e| e.to_string())?;
    Ok(text
        .lines()
        .filter(|l| !l.trim_start().starts_with("\"wall_time_seconds\""))
        .collect::<Vec<_>>()
        .join("\n"))
}

fn cli_round_trip() -> Check {
    let tmp = std::env::temp_dir().join(format!("optpot-acceptance-{}", std::process::id()));
    fs::create_dir_all(&tmp).map_err(|e| e.to_string())?;
    let result = (|| {
        let inverse = tmp.join("inverse.toml");
        fs::write(
            &inverse,
            "mode = \"inverse\"\nL = \"pi\"\nn = 2000\ntargets = [2, 5]\n[potential]\nkind = \"zero\"\n",
        )
        .map_err(|e| e.to_string())?;
        let (a, b) = (tmp.join("run-a"), tmp.join("run-b"));
        run_cli(&inverse, &a)?;
        run_cli(&inverse, &b)?;
        ensure(without_wall_time(&a)? == without_wall_time(&b)?, || {
            "report.json differs between identical runs".to_owned()
        })?;

        let forward = tmp.join("forward.toml");
        fs::write(
            &forward,
            format!(
                "mode = \"forward\"\nL = \"pi\"\nn = 2000\nm = 2\n[potential]\nkind = \"samples\"\npath = {:?}\ncolumn = \"v_hat\"\n",
                a.join("potential.csv").display().to_string()
            ),
        )
        .map_err(|e| e.to_string())?;
        let back = tmp.join("forward");
        run_cli(&forward, &back)?;
        let report: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(back.join("report.json")).unwrap()).unwrap();
        let energies: Vec<f64> = report["eigenvalues_v0"]
            .as_array()
            .ok_or("no eigenvalues in forward report")?
            .iter()
            .map(|v| v.as_f64().unwrap())
            .collect();
        let mut worst: f64 = 0.0;
        for (e, t) in energies.iter().zip([2.0, 5.0]) {
            let dev = (e - t).abs();
            ensure(dev <= 1e-8, || format!("reloaded E = {e}, target {t}"))?;
            worst = worst.max(dev);
        }
        Ok(format!(
            "reloaded targets within {worst:.1e}, report.json identical modulo wall time"
        ))
    })();
    let _ = fs::remove_dir_all(&tmp);
    result
}

fn main() -> ExitCode {
    let mut solved = Vec::new();
    let mut failures = 0;
    let mut criterion =
        |id: u32, name: &str, budget: Option<Duration>, check: &mut dyn FnMut() -> Check| {
            let start = Instant::now();
            let outcome = catch_unwind(AssertUnwindSafe(check))
                .unwrap_or_else(|_| Err("panicked".to_owned()));
            let elapsed = start.elapsed();
            let outcome = match (outcome, budget) {
                (Ok(_), Some(limit)) if elapsed > limit => Err(format!(
                    "runtime {:.2} s exceeds {} s",
                    elapsed.as_secs_f64(),
                    limit.as_secs()
                )),
                (o, _) => o,
            };
            let (tag, detail) = match outcome {
                Ok(d) => ("PASS", d),
                Err(d) => {
                    failures += 1;
                    ("FAIL", d)
                }
            };
            println!(
                "[{tag}] criterion {id:>2} {name} ({:.2} s): {detail}",
                elapsed.as_secs_f64()
            );
        };

    criterion(
        1,
        "forward accuracy",
        Some(Duration::from_secs(2)),
        &mut forward_accuracy,
    );
    criterion(2, "shift identity", None, &mut shift_identity);
    criterion(
        3,
        "oscillation and orthonormality",
        None,
        &mut oscillation_and_orthonormality,
    );
    criterion(
        4,
        "eigenvalue derivative",
        Some(Duration::from_secs(10)),
        &mut eigenvalue_derivative,
    );
    criterion(5, "closed-form Gram matrix", None, &mut closed_form_gram);
    criterion(6, "trivial targets", None, &mut trivial_case);
    criterion(
        7,
        "inverse, one target",
        Some(Duration::from_secs(30)),
        &mut || single_target(&mut solved),
    );
    criterion(8, "inverse, two targets", None, &mut || {
        two_targets(&mut solved)
    });
    criterion(
        9,
        "minimality vs oracle",
        Some(Duration::from_secs(300)),
        &mut || minimality(&solved),
    );
    criterion(10, "CLI round trip", None, &mut cli_round_trip);

    if failures == 0 {
        println!("acceptance: all 10 criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failures} of 10 criteria failed");
        ExitCode::FAILURE
    }
}
