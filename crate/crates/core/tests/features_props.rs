use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rcit::features::{apply_fourier_map, median_bandwidth, sample_fourier_map, standardize_columns};
use rcit::DataMatrix;

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-50.0..50.0f64, rows * cols).prop_map(move |v| DMatrix::from_vec(rows, cols, v))
}

#[test]
fn kernel_approximation_at_5000_features() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for trial in 0..100 {
        let p = 1 + trial % 3;
        let sigma = [0.5, 1.0, 4.0][trial % 3];
        let pts = DMatrix::from_fn(2, p, |_, _| rand::Rng::random_range(&mut rng, -1.0..1.0));
        let data = DataMatrix::from_matrix(pts.clone()).unwrap();
        let map = sample_fourier_map(p, 5000, sigma, &mut rng).unwrap();
        let f = apply_fourier_map(&map, &data).unwrap();
        let approx = f.values().row(0).dot(&f.values().row(1)) / 5000.0;
        let dist2 = (pts.row(0) - pts.row(1)).norm_squared();
        let exact = (-dist2 / sigma).exp();
        assert!((approx - exact).abs() < 0.05, "trial {trial}: {approx} vs {exact}");
    }
}

proptest! {
    #[test]
    fn fourier_output_bounded(m in matrix(7, 3), seed in any::<u64>(), sigma in 0.01..100.0f64) {
        let data = DataMatrix::from_matrix(m).unwrap();
        let map = sample_fourier_map(3, 16, sigma, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let f = apply_fourier_map(&map, &data).unwrap();
        prop_assert!(f.values().iter().all(|v| v.abs() <= std::f64::consts::SQRT_2 + 1e-15));
    }

    #[test]
    fn median_invariant_to_row_order(m in matrix(12, 2), seed in any::<u64>()) {
        let data = DataMatrix::from_matrix(m).unwrap();
        let mut rows: Vec<usize> = (0..12).collect();
        rows.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let shuffled = data.select_rows(&rows).unwrap();
        prop_assert_eq!(median_bandwidth(&data, 500).unwrap(), median_bandwidth(&shuffled, 500).unwrap());
    }

    #[test]
    fn standardize_idempotent(m in matrix(9, 3)) {
        let once = standardize_columns(&DataMatrix::from_matrix(m).unwrap()).unwrap();
        let twice = standardize_columns(&once).unwrap();
        for (a, b) in once.values().iter().zip(twice.values().iter()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
