use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rcit::wchi2::{
    cumulants_of_weights, empirical_survival_oracle, hall_buckley_eagleson, imhof_survival, lindsay_pilla_basak,
    moments_from_cumulants, satterthwaite_welch, wood_f, Imhof, Survival,
};
use rcit::WeightedChiSquareDist;

fn weights() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.05..1.0f64, 1..8)
}

fn methods(dist: &WeightedChiSquareDist) -> Vec<(&'static str, Box<dyn Survival>)> {
    vec![
        ("sw", Box::new(satterthwaite_welch(dist).unwrap())),
        ("hbe", Box::new(hall_buckley_eagleson(dist).unwrap())),
        ("woodf", Box::new(wood_f(dist).unwrap())),
        ("lpb", Box::new(lindsay_pilla_basak(dist).unwrap())),
        ("imhof", Box::new(Imhof::new(dist, 1e-6).unwrap())),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn survival_monotone_and_bounded(w in weights()) {
        let dist = WeightedChiSquareDist::new(w).unwrap();
        for (name, m) in methods(&dist) {
            prop_assert!((m.survival(0.0) - 1.0).abs() < 1e-6, "{} at 0", name);
            let mut prev = 1.0 + 1e-6;
            for i in 0..40 {
                let s = m.survival(i as f64 * 0.5);
                prop_assert!((0.0..=1.0).contains(&s));
                prop_assert!(s <= prev + 2e-6, "{} not monotone at {}", name, i);
                prev = s;
            }
        }
    }

    #[test]
    fn scale_equivariance(w in weights(), c in 0.1..10.0f64, x in 0.1..6.0f64) {
        let dist = WeightedChiSquareDist::new(w).unwrap();
        let scaled = dist.scaled(c).unwrap();
        for ((name, a), (_, b)) in methods(&dist).into_iter().zip(methods(&scaled)) {
            prop_assert!((a.survival(x) - b.survival(c * x)).abs() < 1e-5, "{}", name);
        }
    }

    #[test]
    fn lpb_moment_fidelity(w in weights()) {
        let dist = WeightedChiSquareDist::new(w).unwrap();
        let lpb = lindsay_pilla_basak(&dist).unwrap();
        if let Some(mix) = lpb.mixture() {
            let r = 2 * mix.components();
            let target = moments_from_cumulants(&cumulants_of_weights(&dist, r));
            for (a, b) in mix.moments(r).iter().zip(&target) {
                prop_assert!((a - b).abs() <= 1e-6 * b.abs());
            }
        }
    }
}

#[test]
fn imhof_matches_monte_carlo() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for w in [vec![0.3], vec![0.9, 0.2, 0.2], vec![0.5; 6], vec![1.0, 0.01]] {
        let dist = WeightedChiSquareDist::new(w).unwrap();
        let mean: f64 = dist.weights().iter().sum();
        for x in [0.5 * mean, mean, 2.5 * mean] {
            let draws = 200_000;
            let mc = empirical_survival_oracle(&dist, x, draws, &mut rng).unwrap();
            let im = imhof_survival(&dist, x, 1e-6).unwrap();
            let se = (im * (1.0 - im) / draws as f64).sqrt();
            assert!((mc - im).abs() < 3.0 * se + 1e-6, "{mc} vs {im} (se {se})");
        }
    }
}
