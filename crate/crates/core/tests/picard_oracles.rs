use mvlab_core::coefficients::GrowthProfile;
use mvlab_core::engine::{mean_stats, moment_stats, simulate};
use mvlab_core::models::{growth_profile_of, linear_moment_oracle, lipschitz_profile_of, LinearMeanField};
use mvlab_core::picard::{error_bound, growth_invariant_check, picard_solve, GrowthCheck, PicardOptions};
use mvlab_core::{InitialLaw, MeasureFlow, ModelSpec, ParticleCloud, SimConfig, TimeFunction, TimeGrid};
use proptest::prelude::*;

fn contractive() -> (LinearMeanField, ModelSpec) {
    let p = LinearMeanField {
        a: -1.0,
        b_mf: 0.5,
        c0: 0.5,
        ..Default::default()
    };
    (p, ModelSpec::linear(p))
}

fn dirac_flow(cfg: &SimConfig) -> MeasureFlow {
    MeasureFlow::constant(cfg.grid, ParticleCloud::dirac_zero(1, cfg.n_particles).unwrap())
}

#[test]
fn non_interacting_model_is_a_fixed_point_after_one_step() {
    let m = ModelSpec::linear(LinearMeanField {
        a: -1.0,
        c0: 0.3,
        ..Default::default()
    });
    let cfg = SimConfig::new(TimeGrid::new(0.0, 0.01, 50).unwrap(), 200, 2);
    let state = picard_solve(&m, &InitialLaw::scalar(1.0), &cfg, None, &PicardOptions::new(5, 1e-12, 2.0)).unwrap();
    assert!(state.converged);
    assert_eq!(state.iterations(), 2);
    assert_eq!(state.iterates[1], state.iterates[2]);
    assert_eq!(state.distances[1], 0.0);
}

#[test]
fn contractive_iteration_converges_to_the_oracle() {
    let (p, m) = contractive();
    let cfg = SimConfig::new(TimeGrid::new(0.0, 0.01, 200).unwrap(), 5000, 3);
    let opts = PicardOptions::new(12, 1e-4, 2.0).with_profile(lipschitz_profile_of(&m, 2.0).unwrap());
    let state = picard_solve(&m, &InitialLaw::scalar(1.0), &cfg, Some(dirac_flow(&cfg)), &opts).unwrap();
    assert!(state.converged, "{:?}", state.distances);
    assert!(state.distances.windows(2).all(|w| w[1] < w[0]), "{:?}", state.distances);

    let (mean, second) = linear_moment_oracle(&p, 1.0, 1.0, &cfg.grid);
    let ms = mean_stats(state.last()).unwrap();
    let vs = moment_stats(state.last(), 2.0).unwrap();
    for k in 0..cfg.grid.len() {
        assert!((ms.value[k] - mean[k]).abs() <= 3.0 * ms.mc_sigma[k] + 1e-12);
        assert!((vs.value[k] - second[k]).abs() <= 3.0 * vs.mc_sigma[k] + 1e-12);
    }
    for (n, (d, b)) in state.distances.iter().zip(&state.bound_curve).enumerate() {
        assert!(*d <= b + 5.0 * state.mc_noise_floor, "n={n}: {d} > {b}");
    }

    // One more iterate past convergence barely moves.
    let more = PicardOptions {
        n_max: state.iterations() + 1,
        tol: 0.0,
        ..opts
    };
    let extra = picard_solve(&m, &InitialLaw::scalar(1.0), &cfg, Some(dirac_flow(&cfg)), &more).unwrap();
    assert!(*extra.distances.last().unwrap() <= 2.0 * extra.mc_noise_floor);
}

#[test]
fn starting_at_the_fixed_point_only_sees_resampling() {
    let (_, m) = contractive();
    let init = InitialLaw::Gaussian {
        mean: vec![1.0],
        cov: vec![vec![0.25]],
    };
    let cfg = SimConfig::new(TimeGrid::new(0.0, 0.01, 100).unwrap(), 4000, 8);
    let fixed = picard_solve(&m, &init, &cfg, None, &PicardOptions::new(20, 1e-6, 2.0)).unwrap();
    assert!(fixed.converged);
    let fresh = SimConfig { seed: 99, ..cfg };
    let again = picard_solve(&m, &init, &fresh, Some(fixed.last().clone()), &PicardOptions::new(1, 0.0, 2.0)).unwrap();
    assert!(
        again.distances[0] <= 2.0 * again.mc_noise_floor,
        "{} vs floor {}",
        again.distances[0],
        again.mc_noise_floor
    );
}

proptest! {
    #[test]
    fn error_bound_is_monotone(inner in 0.0..20.0f64, extra in 0.0..5.0f64, delta in 0.0..3.0f64, c in 0.1..3.0f64, p in 2.0..6.0f64, n in 0usize..12) {
        let b = error_bound(inner, delta, c, p, n);
        prop_assert!(b >= 0.0 && b.is_finite());
        prop_assert!(error_bound(inner, delta, c, p, n + 1) <= b * (1.0 + 1e-12));
        prop_assert!(error_bound(inner + extra, delta, c, p, n) >= b * (1.0 - 1e-12));
        prop_assert!(error_bound(inner, delta + extra, c, p, n) >= b * (1.0 - 1e-12));
    }
}

#[test]
fn ou_flow_is_in_the_growth_set() {
    let m = ModelSpec::linear(LinearMeanField {
        a: -1.0,
        c0: 0.5,
        ..Default::default()
    });
    let init = InitialLaw::Gaussian {
        mean: vec![1.0],
        cov: vec![vec![0.25]],
    };
    let cfg = SimConfig::new(TimeGrid::new(0.0, 0.01, 200).unwrap(), 10_000, 6);
    let e = simulate(&m, &init, &cfg, None).unwrap();
    let growth = growth_profile_of(&m, 2.0).unwrap();
    // The bound is the exact second moment here, so only sampling error separates them.
    let check = growth_invariant_check(e.flow(), &growth, init.moment(2.0).unwrap(), 0.05).unwrap();
    assert_eq!(check, GrowthCheck::Member);
}

#[test]
fn synthetic_growth_violation_is_reported() {
    let grid = TimeGrid::new(0.0, 0.1, 10).unwrap();
    let c = TimeFunction::constant;
    let growth = GrowthProfile {
        alpha: vec![1.0],
        beta: vec![0.0],
        kappa: vec![c(1.0)],
        kappa_hat: vec![c(1.0)],
        upsilon: vec![c(-1.0)],
        upsilon_hat: vec![c(0.0)],
        p: 2.0,
        c_pp: 1.0,
    };
    let clouds: Vec<ParticleCloud> = (0..grid.len())
        .map(|k| ParticleCloud::from_scalars(vec![1.0 + 0.01 * k as f64]).unwrap())
        .collect();
    let flow = MeasureFlow::new(grid, clouds).unwrap();
    match growth_invariant_check(&flow, &growth, 1.0, 0.0).unwrap() {
        GrowthCheck::Violated { t, .. } => assert!((t - 0.1).abs() < 1e-12),
        GrowthCheck::Member => panic!("should be violated"),
    }
}
