use mvlab_core::engine::{mean_stats, moment_stats, pathwise_exponent_flow, simulate, simulate_coupled, EngineError};
use mvlab_core::models::{linear_moment_oracle, IntegralKernel, KernelFn, LinearMeanField};
use mvlab_core::{InitialLaw, MeasureFlow, ModelSpec, ParticleCloud, SimConfig, TimeGrid};
use std::sync::Arc;

fn lin(p: LinearMeanField) -> ModelSpec {
    ModelSpec::linear(p)
}

fn decay() -> ModelSpec {
    lin(LinearMeanField {
        a: -1.0,
        ..Default::default()
    })
}

#[test]
fn euler_error_halves_with_the_step() {
    let err = |dt: f64| {
        let cfg = SimConfig::new(TimeGrid::with_horizon(0.0, dt, 1.0).unwrap(), 2, 0);
        let e = simulate(&decay(), &InitialLaw::scalar(1.0), &cfg, None).unwrap();
        (e.flow().clouds().last().unwrap().coords()[0] - (-1.0f64).exp()).abs()
    };
    let ratio = err(1e-2) / err(5e-3);
    assert!((1.7..=2.3).contains(&ratio), "{ratio}");
}

#[test]
fn mean_reverting_kernel_keeps_a_consensus() {
    let b0: KernelFn = Arc::new(|_t, x, y, out| out[0] = y[0] - x[0]);
    let s0: KernelFn = Arc::new(|_t, _x, _y, out| out[0] = 0.0);
    let m = ModelSpec::integral_map(1, 1, IntegralKernel::new(b0, s0)).unwrap();
    let cfg = SimConfig::new(TimeGrid::new(0.0, 0.01, 50).unwrap(), 5, 3);
    let e = simulate(&m, &InitialLaw::scalar(1.0), &cfg, None).unwrap();
    assert!(e.flow().clouds().iter().all(|c| c.coords().iter().all(|x| *x == 1.0)));
}

#[test]
fn identical_coupling_has_zero_difference() {
    let m = lin(LinearMeanField {
        a: -0.5,
        b_mf: 0.3,
        c0: 0.4,
        c1: 0.2,
        c2: 0.1,
    });
    let init = InitialLaw::Gaussian {
        mean: vec![1.0],
        cov: vec![vec![0.5]],
    };
    let cfg = SimConfig::new(TimeGrid::new(0.0, 0.01, 100).unwrap(), 500, 9);
    let (a, b) = simulate_coupled(&m, &m, &init, &init, &cfg).unwrap();
    let d = a.difference(&b).unwrap();
    assert!(d.clouds().iter().all(|c| c.coords().iter().all(|y| *y == 0.0)));
}

#[test]
fn coupled_decay_difference() {
    let cfg = SimConfig::new(TimeGrid::new(0.0, 1e-3, 2000).unwrap(), 3, 1);
    let (a, b) = simulate_coupled(&decay(), &decay(), &InitialLaw::scalar(1.0), &InitialLaw::scalar(2.0), &cfg).unwrap();
    let d = a.difference(&b).unwrap();
    for (k, c) in d.clouds().iter().enumerate() {
        let t = d.grid().time(k);
        assert!((c.coords()[0].abs() - (-t).exp()).abs() < 1e-3);
    }
}

#[test]
fn multiplicative_noise_keeps_paths_proportional() {
    let m = lin(LinearMeanField {
        c1: 1.0,
        ..Default::default()
    });
    let cfg = SimConfig::new(TimeGrid::new(0.0, 0.01, 200).unwrap(), 50, 4);
    let (a, b) = simulate_coupled(&m, &m, &InitialLaw::scalar(1.0), &InitialLaw::scalar(2.0), &cfg).unwrap();
    for (x, y) in a.flow().clouds().iter().zip(b.flow().clouds()) {
        for (u, v) in x.coords().iter().zip(y.coords()) {
            assert_eq!(*v, 2.0 * u);
        }
    }
}

#[test]
fn results_do_not_depend_on_the_thread_count() {
    let m = lin(LinearMeanField {
        a: -1.0,
        b_mf: 0.5,
        c0: 0.5,
        c1: 0.3,
        c2: 0.1,
    });
    let init = InitialLaw::Gaussian {
        mean: vec![0.5],
        cov: vec![vec![1.0]],
    };
    let cfg = SimConfig::new(TimeGrid::new(0.0, 0.01, 100).unwrap(), 3000, 77);
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| simulate(&m, &init, &cfg, None).unwrap())
    };
    assert_eq!(run(1), run(4));
    assert_eq!(run(1), run(1));
}

#[test]
fn interacting_mean_tracks_the_oracle() {
    let p = LinearMeanField {
        a: -1.0,
        b_mf: 0.5,
        c0: 0.5,
        c1: 0.2,
        c2: 0.1,
    };
    let init = InitialLaw::Gaussian {
        mean: vec![1.0],
        cov: vec![vec![0.25]],
    };
    let cfg = SimConfig::new(TimeGrid::new(0.0, 1e-2, 200).unwrap(), 10_000, 5);
    let e = simulate(&lin(p), &init, &cfg, None).unwrap();
    let (m, v) = linear_moment_oracle(&p, 1.0, 1.25, &cfg.grid);
    let mean = mean_stats(e.flow()).unwrap();
    let second = moment_stats(e.flow(), 2.0).unwrap();
    for k in 0..cfg.grid.len() {
        assert!((mean.value[k] - m[k]).abs() <= 3.0 * mean.mc_sigma[k] + 1e-12, "mean at {k}");
        assert!(
            (second.value[k] - v[k]).abs() <= 3.0 * second.mc_sigma[k] + 1e-12,
            "second moment at {k}"
        );
    }
}

#[test]
fn moment_curve_examples() {
    let g = TimeGrid::new(0.0, 1.0, 3).unwrap();
    let one = MeasureFlow::constant(g, ParticleCloud::from_scalars(vec![1.0]).unwrap());
    assert!(moment_stats(&one, 2.0).unwrap().value.iter().all(|v| *v == 1.0));
    let pm = MeasureFlow::constant(g, ParticleCloud::from_scalars(vec![1.0, -1.0]).unwrap());
    assert!(moment_stats(&pm, 3.0).unwrap().value.iter().all(|v| *v == 1.0));
}

#[test]
fn geometric_pathwise_exponent() {
    let (a, s) = (1.0, 0.5);
    let m = lin(LinearMeanField {
        a: -a,
        c1: s,
        ..Default::default()
    });
    let cfg = SimConfig::new(TimeGrid::new(0.0, 0.01, 3000).unwrap(), 400, 21).recording_every(10);
    let (x, y) = simulate_coupled(&m, &m, &InitialLaw::scalar(1.0), &InitialLaw::scalar(2.0), &cfg).unwrap();
    let est = pathwise_exponent_flow(&x.difference(&y).unwrap(), 1.0, (15.0, 30.0)).unwrap();
    let truth = -a - s * s / 2.0;
    assert!((est.mean - truth).abs() < 0.15, "{} vs {truth}", est.mean);
    assert_eq!(est.excluded, 0);
}

#[test]
fn frozen_flow_must_share_the_grid() {
    let cfg = SimConfig::new(TimeGrid::new(0.0, 0.1, 10).unwrap(), 4, 1);
    let other = MeasureFlow::constant(TimeGrid::new(0.0, 0.1, 5).unwrap(), ParticleCloud::dirac_zero(1, 4).unwrap());
    let m = lin(LinearMeanField {
        a: -1.0,
        b_mf: 1.0,
        ..Default::default()
    });
    assert!(matches!(
        simulate(&m, &InitialLaw::scalar(1.0), &cfg, Some(&other)),
        Err(EngineError::FrozenFlow { .. })
    ));
    assert!(matches!(
        simulate(&m, &InitialLaw::scalar(1.0), &SimConfig::new(cfg.grid, 1, 1), None),
        Err(EngineError::TooFewParticles)
    ));
}
