mod common;

use common::*;
use mcc_core::*;
use ndarray::Array2;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn nu_strategy() -> impl Strategy<Value = Nu> {
    prop_oneof![
        Just(Nu::Finite(1)),
        Just(Nu::Finite(2)),
        Just(Nu::Finite(4)),
        Just(Nu::Infinity)
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn dual_solution_matches_brute_force_primal(seed in any::<u64>(), nu in nu_strategy(), p1 in 3usize..5, p2 in 3usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dims = GridDims::for_image(p1, p2);
        let idx = IndexSet::new(1, 1, dims).unwrap();
        let truth = random_field(&mut rng, p1, p2, 1.5, -0.5);
        let psi = random_field(&mut rng, p1, p2, 0.7, 0.0);
        let moments = compute_moments(&truth, &idx).unwrap();
        let sol = solve_dual(&moments, &psi, nu, &SolverConfig::default()).unwrap();
        prop_assert!(sol.report.converged);
        let brute = primal_oracle(truth.values(), psi.values(), 1, 1, nu);
        prop_assert!(max_abs_diff(&brute, sol.field.values()) <= 1e-6);
    }

    #[test]
    fn solution_has_the_stationary_form(seed in any::<u64>(), nu in nu_strategy()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (p1, p2) = (7, 6);
        let idx = IndexSet::new(3, 2, GridDims::for_image(p1, p2)).unwrap();
        let moments = compute_moments(&random_field(&mut rng, p1, p2, 1.0, 0.0), &idx).unwrap();
        let psi = random_field(&mut rng, p1, p2, 1.0, 0.0);
        let sol = solve_dual(&moments, &psi, nu, &SolverConfig::default()).unwrap();
        prop_assert!(sol.report.converged);
        let q = direct_eval(sol.poly.coeffs(), idx.grid);
        let expected = match nu {
            Nu::Finite(v) => psi.values() / &q.mapv(|x| x.powi(i32::from(v))),
            Nu::Infinity => psi.values() * &q.mapv(|x| (-x).exp()),
        };
        prop_assert!(max_abs_diff(&expected, sol.field.values()) <= 1e-10 * max_abs(&expected));

        let (direct, imag) = direct_moments(sol.field.values(), idx.n1, idx.n2);
        prop_assert!(max_abs_diff(&direct, moments.coeffs()) <= 1e-8);
        prop_assert!(imag <= 1e-12);
    }
}

/// Zero-moment perturbation: a double-even field minus its own projection onto Λ.
fn null_direction(rng: &mut ChaCha8Rng, p1: usize, p2: usize, n1: usize, n2: usize) -> Array2<f64> {
    let g = random_field(rng, p1, p2, 1.0, 0.0).into_values();
    let (c, _) = direct_moments(&g, n1, n2);
    &g - &direct_eval(&c, GridDims::for_image(p1, p2))
}

#[test]
fn flat_prior_kl_solution_is_the_maximum_entropy_field() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let (p1, p2) = (9, 8);
    let idx = IndexSet::new(3, 3, GridDims::for_image(p1, p2)).unwrap();
    let moments = compute_moments(&random_field(&mut rng, p1, p2, 1.0, 0.0), &idx).unwrap();
    let sol = solve_dual(
        &moments,
        &uniform_prior(idx.grid),
        Nu::Finite(1),
        &SolverConfig::default(),
    )
    .unwrap();
    let phi = sol.field.values();

    // 1/Φ is itself a polynomial on Λ
    let inverse = phi.mapv(|v| 1.0 / v);
    assert!(max_abs_diff(&inverse, &direct_eval(sol.poly.coeffs(), idx.grid)) < 1e-10);

    // mean(log Φ) cannot grow along any moment-preserving perturbation
    let entropy = |f: &Array2<f64>| f.mapv(f64::ln).mean().unwrap();
    let h0 = entropy(phi);
    for _ in 0..20 {
        let d = null_direction(&mut rng, p1, p2, idx.n1, idx.n2);
        let (dm, _) = direct_moments(&d, idx.n1, idx.n2);
        assert!(max_abs(&dm) < 1e-12);
        let t = 0.2 * phi.iter().copied().fold(f64::INFINITY, f64::min) / max_abs(&d);
        for s in [t, -t, 0.1 * t] {
            assert!(entropy(&(phi + &(&d * s))) <= h0 + 1e-12);
        }
    }
}

#[test]
fn solution_minimises_divergence_along_feasible_perturbations() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let (p1, p2) = (8, 7);
    let idx = IndexSet::new(2, 3, GridDims::for_image(p1, p2)).unwrap();
    let moments = compute_moments(&random_field(&mut rng, p1, p2, 1.0, 0.0), &idx).unwrap();
    let psi = random_field(&mut rng, p1, p2, 1.0, 0.0);
    for nu in [Nu::Finite(1), Nu::Finite(3), Nu::Infinity] {
        let sol = solve_dual(&moments, &psi, nu, &SolverConfig::default()).unwrap();
        let d0 = alpha_divergence(&sol.field, &psi, nu).unwrap();
        for _ in 0..10 {
            let d = null_direction(&mut rng, p1, p2, idx.n1, idx.n2);
            let t = 0.1 * sol.field.min() / max_abs(&d);
            let moved = GridField::new(sol.field.values() + &(&d * t)).unwrap();
            assert!(alpha_divergence(&moved, &psi, nu).unwrap() >= d0 - 1e-12, "nu = {nu}");
        }
    }
}

#[test]
fn scaling_the_moments_rescales_the_dual_polynomial() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let (p1, p2) = (8, 8);
    let idx = IndexSet::new(3, 2, GridDims::for_image(p1, p2)).unwrap();
    let base = random_field(&mut rng, p1, p2, 1.0, 0.0);
    let psi = uniform_prior(idx.grid);
    let cfg = SolverConfig {
        grad_tol: 1e-11,
        ..SolverConfig::default()
    };
    for gamma in [0.25, 3.0] {
        let scaled = GridField::new(base.values() * gamma).unwrap();
        for nu in [Nu::Finite(1), Nu::Finite(2), Nu::Infinity] {
            let a = solve_dual(&compute_moments(&base, &idx).unwrap(), &psi, nu, &cfg).unwrap();
            let b = solve_dual(&compute_moments(&scaled, &idx).unwrap(), &psi, nu, &cfg).unwrap();
            let expected = match nu {
                Nu::Finite(v) => a.poly.coeffs() * gamma.powf(-1.0 / f64::from(v)),
                Nu::Infinity => {
                    let mut q = a.poly.coeffs().clone();
                    q[[0, 0]] -= gamma.ln();
                    q
                }
            };
            assert!(
                max_abs_diff(&expected, b.poly.coeffs()) < 1e-8,
                "nu = {nu}, gamma = {gamma}"
            );
            assert!(max_abs_diff(&(a.field.values() * gamma), b.field.values()) < 1e-8 * gamma);
        }
    }
}

#[test]
fn certificate_flags_suboptimal_and_infeasible_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(34);
    let (p1, p2) = (6, 6);
    let idx = IndexSet::new(2, 2, GridDims::for_image(p1, p2)).unwrap();
    let truth = random_field(&mut rng, p1, p2, 1.0, 0.0);
    let moments = compute_moments(&truth, &idx).unwrap();
    let psi = uniform_prior(idx.grid);
    let sol = solve_dual(&moments, &psi, Nu::Finite(2), &SolverConfig::default()).unwrap();
    let good = verify_duality(&sol.poly, &moments, &psi, Nu::Finite(2)).unwrap();
    assert!(good.moment_residual <= 1e-8 && good.min_q > 0.0);
    // the optimum is the closest moment-matching field, so it beats the truth
    assert!(good.divergence <= alpha_divergence(&truth, &psi, Nu::Finite(2)).unwrap());

    let mut shifted = sol.poly.coeffs().clone();
    shifted[[1, 0]] += 0.01;
    let off = verify_duality(
        &DualPolynomial::new(shifted, idx).unwrap(),
        &moments,
        &psi,
        Nu::Finite(2),
    )
    .unwrap();
    assert!(off.moment_residual > 1e-5);

    let mut negative = sol.poly.coeffs().clone();
    negative[[0, 0]] = -1.0;
    let bad = verify_duality(
        &DualPolynomial::new(negative, idx).unwrap(),
        &moments,
        &psi,
        Nu::Finite(2),
    )
    .unwrap();
    assert!(bad.min_q < 0.0 && bad.moment_residual.is_infinite());
}

#[test]
fn threaded_solves_match_serial_solves() {
    let mut rng = ChaCha8Rng::seed_from_u64(35);
    let img = random_image(&mut rng, 33, 30);
    let idx = IndexSet::new(6, 5, img.grid_dims()).unwrap();
    let moments = compute_moments(&lift(&mirror(&img)).unwrap(), &idx).unwrap();
    let psi = uniform_prior(idx.grid);
    let serial = solve_dual(&moments, &psi, Nu::Finite(1), &SolverConfig::default()).unwrap();
    let threaded = solve_dual(
        &moments,
        &psi,
        Nu::Finite(1),
        &SolverConfig {
            fft_threads: 3,
            ..SolverConfig::default()
        },
    )
    .unwrap();
    assert!(max_abs_diff(serial.poly.coeffs(), threaded.poly.coeffs()) < 1e-12);
}
