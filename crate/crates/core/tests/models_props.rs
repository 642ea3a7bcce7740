use mvlab_core::models::{linear_moment_oracle, IntegralKernel, KernelFn, LinearMeanField, PowerDrift};
use mvlab_core::{ModelSpec, ParticleCloud, TimeGrid};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

#[test]
fn power_drift_is_dissipative() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..1000 {
        let l = rng.random_range(1..4);
        let pd = PowerDrift {
            b_hat: (0..l).map(|_| rng.random_range(0.0..3.0)).collect(),
            alpha_hat: (0..l).map(|_| rng.random_range(0.1..4.0)).collect(),
            c_hat: vec![],
            interactions: vec![],
            sigma: 0.0,
        };
        let (mut b, mut bt) = ([0.0], [0.0]);
        for _ in 0..100 {
            let x: f64 = rng.random_range(-10.0..10.0);
            let xt: f64 = if rng.random_bool(0.05) {
                0.0
            } else {
                rng.random_range(-10.0..10.0)
            };
            pd.power_part(&[x], &mut b);
            pd.power_part(&[xt], &mut bt);
            assert!((x - xt) * (b[0] - bt[0]) <= 0.0, "x={x} xt={xt} pd={pd:?}");
        }
    }
}

fn generic_model() -> ModelSpec {
    let b0: KernelFn = Arc::new(|_t, x, y, out| out[0] = y[0].sin() - x[0] * y[0] * y[0]);
    let s0: KernelFn = Arc::new(|_t, x, y, out| out[0] = 1.0 + (x[0] - y[0]).cos());
    ModelSpec::integral_map(1, 1, IntegralKernel::new(b0, s0)).unwrap()
}

proptest! {
    #[test]
    fn integral_map_is_permutation_invariant(mut ys in prop::collection::vec(-3.0..3.0f64, 2..50), x in -3.0..3.0f64, seed in 0u64..1000) {
        let m = generic_model();
        let a = ParticleCloud::from_scalars(ys.clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in (1..ys.len()).rev() {
            ys.swap(i, rng.random_range(0..=i));
        }
        let b = ParticleCloud::from_scalars(ys).unwrap();
        for (u, v) in [(m.eval_drift(0.0, &[x], &a).unwrap(), m.eval_drift(0.0, &[x], &b).unwrap()),
                       (m.eval_diffusion(0.0, &[x], &a).unwrap(), m.eval_diffusion(0.0, &[x], &b).unwrap())] {
            prop_assert!((u[0] - v[0]).abs() <= 1e-12 * u[0].abs().max(1.0));
        }
    }

    #[test]
    fn integral_map_is_linear_in_the_measure(ya in prop::collection::vec(-3.0..3.0f64, 1..30), yb in prop::collection::vec(-3.0..3.0f64, 1..30), x in -3.0..3.0f64) {
        let m = generic_model();
        let (na, nb) = (ya.len() as f64, yb.len() as f64);
        let joint: Vec<f64> = ya.iter().chain(&yb).copied().collect();
        let da = m.eval_drift(0.0, &[x], &ParticleCloud::from_scalars(ya).unwrap()).unwrap()[0];
        let db = m.eval_drift(0.0, &[x], &ParticleCloud::from_scalars(yb).unwrap()).unwrap()[0];
        let dj = m.eval_drift(0.0, &[x], &ParticleCloud::from_scalars(joint).unwrap()).unwrap()[0];
        let mix = (na * da + nb * db) / (na + nb);
        prop_assert!((dj - mix).abs() <= 1e-12 * dj.abs().max(1.0), "{dj} vs {mix}");
    }
}

#[test]
fn oracle_matches_ou_closed_forms() {
    let grid = TimeGrid::new(0.0, 0.01, 300).unwrap();
    for (a, c0, c1) in [(-1.0, 0.5, 0.0), (-0.3, 0.0, 0.4), (0.2, 1.0, 0.0)] {
        let model = LinearMeanField {
            a,
            c0,
            c1,
            ..Default::default()
        };
        let (m0, v0) = (0.7, 1.3);
        let (m, v) = linear_moment_oracle(&model, m0, v0, &grid);
        for k in 0..grid.len() {
            let t = grid.time(k);
            let mean = m0 * (a * t).exp();
            let r = 2.0 * a + c1 * c1;
            let second = v0 * (r * t).exp() + c0 * c0 * ((r * t).exp() - 1.0) / r;
            assert!((m[k] - mean).abs() < 1e-8 * mean.abs().max(1.0));
            assert!((v[k] - second).abs() < 1e-8 * second.abs().max(1.0), "t={t}: {} vs {second}", v[k]);
        }
    }
}
