use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use robust_power::cvar::{cvar_objective, empirical_cvar, value_at_risk, SampleBatch};
use robust_power::fading::FadingModel;
use robust_power::oracle::{
    fd_level_gradient, grid_var_level, power_objective, power_oracle, LevelObjective, LevelProblem,
};
use robust_power::policy::optimal_power;
use robust_power::radius::{confidence_from_radius, radius_from_confidence, AmbiguityRadius};
use robust_power::var_levels::{
    classify, solve_var_level, var_supergradient_step, z_subgradient, Branch, LevelParams,
    Quadrature, SampleSet,
};

fn batch_strategy() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-100.0..100.0_f64, 1..120)
}

proptest! {
    #[test]
    fn cvar_at_one_is_the_mean(xs in batch_strategy()) {
        let b = SampleBatch::new(xs).unwrap();
        prop_assert_eq!(empirical_cvar(&b, 1.0).unwrap(), b.mean());
    }

    #[test]
    fn cvar_nonincreasing_in_phi(xs in batch_strategy(), a in 0.01..1.0_f64, b in 0.01..1.0_f64) {
        let batch = SampleBatch::new(xs).unwrap();
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(empirical_cvar(&batch, lo).unwrap() >= empirical_cvar(&batch, hi).unwrap() - 1e-12);
    }

    #[test]
    fn cvar_translation_and_scaling(xs in batch_strategy(), phi in 0.01..=1.0_f64, c in -50.0..50.0_f64, s in 0.01..20.0_f64) {
        let base = empirical_cvar(&SampleBatch::new(xs.clone()).unwrap(), phi).unwrap();
        let shifted = SampleBatch::new(xs.iter().map(|x| x + c).collect()).unwrap();
        let scaled = SampleBatch::new(xs.iter().map(|x| s * x).collect()).unwrap();
        let tol = 1e-12 * (1.0 + base.abs() + c.abs()) * 100.0;
        prop_assert!((empirical_cvar(&shifted, phi).unwrap() - base - c).abs() <= tol);
        prop_assert!((empirical_cvar(&scaled, phi).unwrap() - s * base).abs() <= 1e-12 * (1.0 + s * base.abs()) * 100.0);
    }

    #[test]
    fn cvar_between_mean_and_max(xs in batch_strategy(), phi in 0.01..=1.0_f64) {
        let b = SampleBatch::new(xs.clone()).unwrap();
        let c = empirical_cvar(&b, phi).unwrap();
        let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(c >= b.mean() - 1e-9 && c <= max + 1e-9);
    }

    #[test]
    fn cvar_is_minimum_of_objective(xs in batch_strategy(), phi in 0.01..=1.0_f64) {
        let b = SampleBatch::new(xs.clone()).unwrap();
        let c = empirical_cvar(&b, phi).unwrap();
        // the objective is piecewise linear with breakpoints at the samples
        let grid_min = xs
            .iter()
            .map(|&z| cvar_objective(z, &b, phi).unwrap())
            .fold(f64::INFINITY, f64::min);
        prop_assert!((c - grid_min).abs() <= 1e-9 * (1.0 + c.abs()));
        let var = value_at_risk(&b, phi).unwrap();
        prop_assert!((cvar_objective(var, &b, phi).unwrap() - c).abs() <= 1e-9 * (1.0 + c.abs()));
    }

    #[test]
    fn policy_matches_brute_force(
        h in 0.0..4.0_f64, lambda in 0.01..5.0_f64, mu in 0.01..5.0_f64,
        phi in 0.01..=1.0_f64, nv in 0.05..10.0_f64, z in -5.0..10.0_f64,
    ) {
        let p = optimal_power(h, lambda, mu, phi, nv, z).unwrap();
        let got = power_objective(p, h, lambda, mu, phi, nv, z);
        let (_, best) = power_oracle(h, lambda, mu, phi, nv, z);
        prop_assert!(best - got <= 1e-6);
        prop_assert!(p >= z.max(0.0));
        // any grid point on [0, 10 lambda phi / mu] does no better
        let top = 10.0 * lambda * phi / mu;
        for k in 0..=200 {
            let q = top * k as f64 / 200.0;
            prop_assert!(power_objective(q, h, lambda, mu, phi, nv, z) <= got + 1e-6);
        }
    }

    #[test]
    fn policy_monotone_in_gain_and_price(
        h in 0.0..4.0_f64, dh in 0.0..2.0_f64, lambda in 0.01..5.0_f64, mu in 0.01..5.0_f64,
        dmu in 0.0..2.0_f64, phi in 0.01..=1.0_f64, nv in 0.05..10.0_f64, z in -5.0..10.0_f64,
    ) {
        let p = optimal_power(h, lambda, mu, phi, nv, z).unwrap();
        prop_assert!(optimal_power(h + dh, lambda, mu, phi, nv, z).unwrap() >= p);
        prop_assert!(optimal_power(h, lambda, mu + dmu, phi, nv, z).unwrap() <= p);
    }

    #[test]
    fn radius_round_trip(phi in 1e-6..=1.0_f64) {
        let r = radius_from_confidence(phi).unwrap();
        let back = confidence_from_radius(r).level().unwrap();
        prop_assert!((back - phi).abs() <= 1e-12);
    }

    #[test]
    fn radius_maps_are_monotone(a in 0.0..20.0_f64, b in 0.0..20.0_f64) {
        prop_assume!(a < b);
        let fa = confidence_from_radius(AmbiguityRadius::new(a).unwrap()).level().unwrap();
        let fb = confidence_from_radius(AmbiguityRadius::new(b).unwrap()).level().unwrap();
        prop_assert!(fa > fb);
    }

    #[test]
    fn level_solution_is_nonnegative_and_in_branch(
        lambda in 0.05..5.0_f64, mu in 0.02..2.0_f64, phi in 0.05..=1.0_f64, nv in 0.1..5.0_f64,
    ) {
        let params = LevelParams::new(lambda, mu, phi, nv).unwrap();
        let q = Quadrature::new(FadingModel::unit_rayleigh());
        let sol = solve_var_level(&params, &q, 1e-9).unwrap();
        prop_assert!(sol.z >= 0.0);
        let level = params.water_level();
        match sol.branch.branch {
            Branch::AtZero => prop_assert_eq!(sol.z, 0.0),
            Branch::Low => prop_assert!(sol.z <= level * (1.0 + 1e-12)),
            Branch::High => prop_assert!(sol.z >= level * (1.0 - 1e-12)),
        }
        if phi == 1.0 {
            prop_assert_eq!(sol.z, 0.0);
        }
    }
}

#[test]
fn subgradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let model = FadingModel::<f64>::unit_rayleigh();
    let cases = [
        (1.0, 0.2, 0.6, 1.0),
        (2.0, 0.5, 0.3, 0.5),
        (0.5, 0.05, 0.8, 2.0),
        (1.0, 1.0, 0.9, 1.0),
    ];
    for &(lambda, mu, phi, nv) in &cases {
        let h = model.sample_n(&mut rng, 200_000);
        let problem = LevelProblem {
            lambda,
            mu,
            phi,
            noise_var: nv,
        };
        let obj = LevelObjective::new(problem, &h).unwrap();
        let set = SampleSet::from_samples(h).unwrap();
        let params = LevelParams::new(lambda, mu, phi, nv).unwrap();
        let level = params.water_level();
        for k in 1..12 {
            let z = level * k as f64 / 6.0;
            let (fd, se) = fd_level_gradient(&obj, z, 1e-4 * level);
            let g = z_subgradient(z, &params, &set);
            assert!(
                (g - fd).abs() <= 3.0 * se + 1e-9,
                "({lambda}, {mu}, {phi}, {nv}) z = {z}: {g} vs {fd} +- {se}"
            );
        }
    }
}

#[test]
fn table_one_terminal_matches_cvar_component_grid() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let h = FadingModel::<f64>::unit_rayleigh().sample_n(&mut rng, 1_000_000);
    let (lambda, mu, phi, nv) = (1.0, 1.0, 0.9, 1.0);
    let component = |z: f64| {
        let s: f64 = h
            .iter()
            .map(|&h| (optimal_power(h, lambda, mu, phi, nv, z).unwrap() - z).max(0.0))
            .sum();
        z + s / (phi * h.len() as f64)
    };
    let argmin = (0..=1000)
        .map(|k| k as f64 * 1e-3)
        .map(|z| (z, component(z)))
        .fold((0.0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a })
        .0;
    let tol = 1e-6;
    let params = LevelParams::new(lambda, mu, phi, nv).unwrap();
    let z = solve_var_level(&params, &SampleSet::from_samples(h.clone()).unwrap(), tol)
        .unwrap()
        .z;
    assert!((z - argmin).abs() <= 2.0 * tol, "{z} vs {argmin}");

    // the full level objective agrees as well
    let obj = LevelObjective::new(
        LevelProblem {
            lambda,
            mu,
            phi,
            noise_var: nv,
        },
        &h,
    )
    .unwrap();
    assert!((grid_var_level(&obj, 1e-7) - z).abs() <= 2.0 * tol);
}

#[test]
fn vanishing_water_level_drives_level_to_zero() {
    let q = Quadrature::new(FadingModel::<f64>::unit_rayleigh());
    let mut prev = f64::INFINITY;
    for k in 0..8 {
        let lambda = 10f64.powi(-k);
        let params = LevelParams::new(lambda, 1.0, 0.5, 1.0).unwrap();
        let z = solve_var_level(&params, &q, 1e-12).unwrap().z;
        assert!(z <= prev);
        prev = z;
    }
    assert_eq!(prev, 0.0);
}

#[test]
fn supergradient_iterates_average_to_solved_level() {
    let (lambda, mu, phi, nv) = (1.0 / 3.0, 0.0377, 0.9, 1.0);
    let model = FadingModel::<f64>::unit_rayleigh();
    let params = LevelParams::new(lambda, mu, phi, nv).unwrap();
    let q = Quadrature::new(model);
    assert_eq!(classify(&params, &q).branch, Branch::Low);
    let target = solve_var_level(&params, &q, 1e-12).unwrap().z;

    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let iters = 100_000;
    let mut z = 0.0;
    let mut tail = 0.0;
    for t in 1..=iters {
        let h = model.sample(&mut rng);
        z = var_supergradient_step(z, h, lambda, mu, phi, nv, 20.0 / (t as f64).sqrt()).unwrap();
        if t > iters - iters / 5 {
            tail += z;
        }
    }
    let avg = tail / (iters / 5) as f64;
    assert!((avg - target).abs() <= 0.05 * target, "{avg} vs {target}");
}
