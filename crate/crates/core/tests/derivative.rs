use std::f64::consts::PI;

use optpot::{
    directional_derivative, finite_difference_check, gram_matrix, lowest_eigenvalues, make_grid,
    sample_potential, Grid, PotentialSpec, SampledFunction,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn presets(length: f64) -> Vec<PotentialSpec> {
    vec![
        PotentialSpec::Zero,
        PotentialSpec::Constant(-3.0),
        PotentialSpec::Harmonic {
            strength: 4.0,
            center: length / 2.0,
        },
        PotentialSpec::SquareWell {
            depth: -10.0,
            left: 0.25 * length,
            right: 0.75 * length,
        },
    ]
}

fn random_direction(grid: Grid, rng: &mut ChaCha8Rng) -> SampledFunction {
    let amps: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
    let l = grid.length();
    SampledFunction::from_fn(grid, |x| {
        amps.iter()
            .enumerate()
            .map(|(j, a)| a * ((j + 1) as f64 * PI * x / l).sin())
            .sum::<f64>()
            + 0.3
    })
}

#[test]
fn central_differences_match_on_square_well() {
    let g = make_grid(PI, 2000).unwrap();
    let v = sample_potential(&presets(PI)[3], &g).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..3 {
        let h = random_direction(g, &mut rng);
        let err = finite_difference_check(&v, 2, &h, 1e-4).unwrap();
        assert!(err <= 1e-4, "{err}");
    }
}

#[test]
fn every_preset_and_mode_passes_the_difference_check() {
    let g = make_grid(PI, 1000).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for spec in presets(PI) {
        let v = sample_potential(&spec, &g).unwrap();
        for k in 1..=5 {
            let h = random_direction(g, &mut rng);
            let err = finite_difference_check(&v, k, &h, 1e-4).unwrap();
            assert!(err <= 1e-4, "{spec:?} k={k}: {err}");
        }
    }
}

#[test]
fn constant_direction_is_exact() {
    let g = make_grid(PI, 1500).unwrap();
    for spec in presets(PI) {
        let v = sample_potential(&spec, &g).unwrap();
        let one = SampledFunction::constant(g, 1.0);
        for k in 1..=3 {
            assert!(finite_difference_check(&v, k, &one, 1e-4).unwrap() <= 1e-10);
            assert!((directional_derivative(&v, k, &one).unwrap() - 1.0).abs() <= 1e-6);
        }
    }
}

#[test]
fn derivative_is_linear_in_direction() {
    let g = make_grid(PI, 800).unwrap();
    let v = SampledFunction::from_fn(g, |x| 2.0 * (3.0 * x).cos());
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let a = random_direction(g, &mut rng);
    let b = random_direction(g, &mut rng);
    let (alpha, beta) = (1.7, -0.4);
    let combo = a.scale(alpha).axpy(beta, &b).unwrap();
    for k in 1..=3 {
        let lhs = directional_derivative(&v, k, &combo).unwrap();
        let rhs = alpha * directional_derivative(&v, k, &a).unwrap()
            + beta * directional_derivative(&v, k, &b).unwrap();
        assert!((lhs - rhs).abs() <= 1e-12, "{}", lhs - rhs);
    }
}

#[test]
fn gram_of_squared_modes_is_positive_definite() {
    for length in [PI, 10.0] {
        let g = make_grid(length, 1200).unwrap();
        for spec in presets(length) {
            let v = sample_potential(&spec, &g).unwrap();
            for m in 1..=6 {
                let gram = gram_matrix(&v, m).unwrap();
                for i in 0..m {
                    for j in 0..m {
                        assert_eq!(gram.get(i, j), gram.get(j, i));
                    }
                    // rows of <φ_k², 1> = 1 are checked via the diagonal being positive
                    assert!(gram.get(i, i) > 0.0);
                }
                assert!(gram.smallest_eigenvalue() > 0.0, "{spec:?} m={m}");
            }
        }
    }
}

#[test]
fn harmonic_gram_smallest_eigenvalue() {
    let g = make_grid(10.0, 2000).unwrap();
    let v = sample_potential(
        &PotentialSpec::Harmonic {
            strength: 4.0,
            center: 5.0,
        },
        &g,
    )
    .unwrap();
    let lo = gram_matrix(&v, 4).unwrap().smallest_eigenvalue();
    assert!(lo > 0.0);
}

#[test]
fn squared_modes_have_unit_mass() {
    let g = make_grid(PI, 1000).unwrap();
    let v = sample_potential(&presets(PI)[2], &g).unwrap();
    let one = SampledFunction::constant(g, 1.0);
    for k in 1..=5 {
        let d = directional_derivative(&v, k, &one).unwrap();
        assert!((d - 1.0).abs() <= 1e-6);
    }
}

#[test]
fn finite_difference_oracle_is_independent_of_gradient() {
    // one-sided differences of eigenvalues alone, no eigenvectors involved
    let g = make_grid(PI, 2000).unwrap();
    let v = SampledFunction::zeros(g);
    let h = SampledFunction::from_fn(g, |x| (2.0 * x).cos());
    let t = 1e-4;
    let plus = lowest_eigenvalues(&v.axpy(t, &h).unwrap(), 1).unwrap()[0];
    let minus = lowest_eigenvalues(&v.axpy(-t, &h).unwrap(), 1).unwrap()[0];
    let numeric = (plus - minus) / (2.0 * t);
    assert!((numeric + 0.5).abs() < 1e-4, "{numeric}");
}
