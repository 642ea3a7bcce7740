use itertools::Itertools;
use mvlab_core::measures::{essential_bracket, moment, wasserstein_1d, wasserstein_exact, ParticleCloud, Sample};
use proptest::prelude::*;

fn brute_force(a: &ParticleCloud, b: &ParticleCloud, p: f64) -> f64 {
    let n = a.len();
    let cost = |i: usize, j: usize| {
        let d: f64 = a
            .point(i)
            .iter()
            .zip(b.point(j))
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt();
        d.powf(p)
    };
    (0..n)
        .permutations(n)
        .map(|perm| perm.iter().enumerate().map(|(i, &j)| cost(i, j)).sum::<f64>() / n as f64)
        .fold(f64::INFINITY, f64::min)
        .powf(1.0 / p)
}

fn cloud(dim: usize, n: usize) -> impl Strategy<Value = ParticleCloud> {
    prop::collection::vec(-5.0..5.0f64, dim * n).prop_map(move |c| ParticleCloud::new(dim, c).unwrap())
}

fn pair() -> impl Strategy<Value = (ParticleCloud, ParticleCloud, f64)> {
    (1usize..=3, 1usize..=7, 1u32..=3).prop_flat_map(|(dim, n, p)| (cloud(dim, n), cloud(dim, n), Just(p as f64)))
}

fn triple() -> impl Strategy<Value = (ParticleCloud, ParticleCloud, ParticleCloud, f64)> {
    (1usize..=3, 1usize..=6, 1.0..4.0f64).prop_flat_map(|(dim, n, p)| (cloud(dim, n), cloud(dim, n), cloud(dim, n), Just(p)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn exact_matches_enumeration((a, b, p) in pair()) {
        let exact = wasserstein_exact(&a, &b, p, 8).unwrap();
        let brute = brute_force(&a, &b, p);
        prop_assert!((exact - brute).abs() <= 1e-12 * brute.max(1.0), "{exact} vs {brute}");
        if a.dim() == 1 {
            let sorted = wasserstein_1d(&a, &b, p).unwrap();
            prop_assert!((sorted - brute).abs() <= 1e-12 * brute.max(1.0));
        }
    }

    #[test]
    fn metric_axioms((a, b, c, p) in triple()) {
        let d = |x: &ParticleCloud, y: &ParticleCloud| wasserstein_exact(x, y, p, 8).unwrap();
        prop_assert_eq!(d(&a, &a), 0.0);
        prop_assert!((d(&a, &b) - d(&b, &a)).abs() < 1e-12);
        prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c) + 1e-9);
    }

    #[test]
    fn monotone_in_order((a, b, p) in pair(), extra in 0.0..3.0f64) {
        let lo = wasserstein_exact(&a, &b, p, 8).unwrap();
        let hi = wasserstein_exact(&a, &b, p + extra, 8).unwrap();
        prop_assert!(lo <= hi * (1.0 + 1e-12) + 1e-12);
    }

    #[test]
    fn distance_to_origin_is_the_moment((a, _b, p) in pair()) {
        let zero = ParticleCloud::dirac_zero(a.dim(), a.len()).unwrap();
        let d = wasserstein_exact(&a, &zero, p, 8).unwrap();
        prop_assert_eq!(d, moment(&a, p).unwrap().powf(1.0 / p));
    }

    #[test]
    fn bracket_orders_climb_to_the_supremum(v in prop::collection::vec(0.0..10.0f64, 1..40)) {
        let s = Sample::new(v).unwrap();
        let sup = essential_bracket(&s, f64::INFINITY).unwrap();
        let b: Vec<f64> = [8.0, 16.0, 32.0].iter().map(|p| essential_bracket(&s, *p).unwrap()).collect();
        prop_assert!(b[0] <= b[1] * (1.0 + 1e-12) && b[1] <= b[2] * (1.0 + 1e-12) && b[2] <= sup * (1.0 + 1e-12));
        prop_assert!(sup - b[2] <= sup - b[0] + 1e-12);
    }
}

#[test]
fn documented_examples() {
    let c = |v: &[f64]| ParticleCloud::from_scalars(v.to_vec()).unwrap();
    assert_eq!(wasserstein_1d(&c(&[0.0, 1.0]), &c(&[1.0, 0.0]), 2.0).unwrap(), 0.0);
    assert!((wasserstein_1d(&c(&[0.0]), &c(&[3.0]), 2.0).unwrap() - 3.0).abs() < 1e-15);
    assert!((moment(&c(&[1.0, -1.0]), 3.0).unwrap() - 1.0).abs() < 1e-15);
}
