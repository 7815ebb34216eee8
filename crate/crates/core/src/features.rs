//! Random Fourier features for the Gaussian RBF kernel
//! `k(x, y) = exp(-|x - y|^2 / sigma)`, together with the sample matrix type
//! used throughout the crate and the median-distance bandwidth heuristic.

use std::f64::consts::{PI, SQRT_2};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::error::{Error, Result};

/// An `n x p` real sample matrix with named columns.
///
/// Entries are always finite. A matrix may have zero columns, which is how
/// an empty conditioning set is represented.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    values: DMatrix<f64>,
    column_names: Vec<String>,
}

impl DataMatrix {
    pub fn new(values: DMatrix<f64>, column_names: Vec<String>) -> Result<Self> {
        if column_names.len() != values.ncols() {
            return Err(Error::invalid(format!(
                "{} column names for {} columns",
                column_names.len(),
                values.ncols()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            let (row, col) = (pos % values.nrows(), pos / values.nrows());
            return Err(Error::invalid(format!("non-finite value at row {row}, column {col}")));
        }
        Ok(DataMatrix { values, column_names })
    }

    /// Wraps a matrix, naming columns `{prefix}1`, `{prefix}2`, ...
    pub fn with_prefix(values: DMatrix<f64>, prefix: &str) -> Result<Self> {
        let names = (1..=values.ncols()).map(|j| format!("{prefix}{j}")).collect();
        Self::new(values, names)
    }

    pub fn from_matrix(values: DMatrix<f64>) -> Result<Self> {
        Self::with_prefix(values, "V")
    }

    /// Builds from column vectors. All columns must have the same length.
    pub fn from_columns(columns: &[Vec<f64>], names: &[&str]) -> Result<Self> {
        let n = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != n) {
            return Err(Error::invalid("columns have different lengths"));
        }
        let values = DMatrix::from_fn(n, columns.len(), |i, j| columns[j][i]);
        Self::new(values, names.iter().map(|s| s.to_string()).collect())
    }

    /// A matrix with `n` rows and no columns.
    pub fn empty(n: usize) -> Self {
        DataMatrix {
            values: DMatrix::zeros(n, 0),
            column_names: Vec::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn p(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_values(self) -> DMatrix<f64> {
        self.values
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.values.column(j).iter().copied().collect()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.column_names.iter().position(|c| c == name)
    }

    pub fn select_columns(&self, idx: &[usize]) -> Result<DataMatrix> {
        if let Some(&bad) = idx.iter().find(|&&j| j >= self.p()) {
            return Err(Error::invalid(format!("column index {bad} out of range")));
        }
        let values = DMatrix::from_fn(self.n(), idx.len(), |i, k| self.values[(i, idx[k])]);
        let names = idx.iter().map(|&j| self.column_names[j].clone()).collect();
        Ok(DataMatrix {
            values,
            column_names: names,
        })
    }

    pub fn select_named(&self, names: &[&str]) -> Result<DataMatrix> {
        let idx = names
            .iter()
            .map(|name| {
                self.column_index(name)
                    .ok_or_else(|| Error::invalid(format!("unknown column '{name}'")))
            })
            .collect::<Result<Vec<_>>>()?;
        self.select_columns(&idx)
    }

    pub fn select_rows(&self, rows: &[usize]) -> Result<DataMatrix> {
        if let Some(&bad) = rows.iter().find(|&&i| i >= self.n()) {
            return Err(Error::invalid(format!("row index {bad} out of range")));
        }
        let values = DMatrix::from_fn(rows.len(), self.p(), |i, j| self.values[(rows[i], j)]);
        Ok(DataMatrix {
            values,
            column_names: self.column_names.clone(),
        })
    }

    /// Horizontal concatenation `[self, other]`.
    pub fn hstack(&self, other: &DataMatrix) -> Result<DataMatrix> {
        if self.n() != other.n() {
            return Err(Error::invalid(format!("row mismatch: {} vs {}", self.n(), other.n())));
        }
        let p = self.p();
        let values = DMatrix::from_fn(self.n(), p + other.p(), |i, j| {
            if j < p {
                self.values[(i, j)]
            } else {
                other.values[(i, j - p)]
            }
        });
        let mut names = self.column_names.clone();
        names.extend(other.column_names.iter().cloned());
        Ok(DataMatrix {
            values,
            column_names: names,
        })
    }
}

/// Median-distance bandwidth: the squared median of pairwise Euclidean
/// distances among the first `min(n, max_samples)` rows. Returns 1 when the
/// median distance is zero.
pub fn median_bandwidth(data: &DataMatrix, max_samples: usize) -> Result<f64> {
    if max_samples < 2 {
        return Err(Error::invalid("max_samples must be at least 2"));
    }
    if data.n() < 2 {
        return Err(Error::invalid("median bandwidth needs at least 2 rows"));
    }
    let m = data.n().min(max_samples);
    let x = data.values();
    let p = data.p();
    let mut dists = Vec::with_capacity(m * (m - 1) / 2);
    for i in 0..m {
        for j in (i + 1)..m {
            let mut s = 0.0;
            for c in 0..p {
                let d = x[(i, c)] - x[(j, c)];
                s += d * d;
            }
            dists.push(s.sqrt());
        }
    }
    let med = median_in_place(&mut dists);
    if med > 0.0 {
        Ok(med * med)
    } else {
        Ok(1.0)
    }
}

fn median_in_place(v: &mut [f64]) -> f64 {
    let len = v.len();
    let mid = len / 2;
    let (_, upper, _) = v.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *upper;
    if len % 2 == 1 {
        upper
    } else {
        let lower = v[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    }
}

/// Frequencies, phases and bandwidth of the map `z -> sqrt(2) cos(W z + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierFeatureMap {
    /// `d x p`, one row per feature.
    frequencies: DMatrix<f64>,
    phases: DVector<f64>,
    bandwidth: f64,
}

impl FourierFeatureMap {
    pub fn new(frequencies: DMatrix<f64>, phases: DVector<f64>, bandwidth: f64) -> Result<Self> {
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(Error::invalid(format!("bandwidth must be positive, got {bandwidth}")));
        }
        if frequencies.nrows() != phases.len() {
            return Err(Error::invalid(format!(
                "{} frequency rows but {} phases",
                frequencies.nrows(),
                phases.len()
            )));
        }
        if phases.iter().any(|&b| !(0.0..2.0 * PI).contains(&b)) {
            return Err(Error::invalid("phases must lie in [0, 2*pi)"));
        }
        if frequencies.iter().any(|w| !w.is_finite()) {
            return Err(Error::invalid("non-finite frequency"));
        }
        Ok(FourierFeatureMap {
            frequencies,
            phases,
            bandwidth,
        })
    }

    pub fn frequencies(&self) -> &DMatrix<f64> {
        &self.frequencies
    }

    pub fn phases(&self) -> &DVector<f64> {
        &self.phases
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn num_features(&self) -> usize {
        self.phases.len()
    }

    pub fn input_dim(&self) -> usize {
        self.frequencies.ncols()
    }
}

/// Draws a feature map for inputs of dimension `p` with `d` features.
/// Frequencies are `N(0, 2/sigma)` so that the expected feature inner
/// product equals `exp(-|x-y|^2 / sigma)`.
pub fn sample_fourier_map<R: Rng + ?Sized>(p: usize, d: usize, sigma: f64, rng: &mut R) -> Result<FourierFeatureMap> {
    if p == 0 {
        return Err(Error::invalid("input dimension must be at least 1"));
    }
    if d == 0 {
        return Err(Error::invalid("feature count must be at least 1"));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::invalid(format!("sigma must be positive, got {sigma}")));
    }
    let normal = Normal::new(0.0, (2.0 / sigma).sqrt()).map_err(|e| Error::invalid(e.to_string()))?;
    let frequencies = DMatrix::from_fn(d, p, |_, _| normal.sample(rng));
    let uniform = Uniform::new(0.0, 2.0 * PI).map_err(|e| Error::invalid(e.to_string()))?;
    let phases = DVector::from_fn(d, |_, _| uniform.sample(rng));
    FourierFeatureMap::new(frequencies, phases, sigma)
}

/// Evaluates the map on every row: entry `(i, j)` is `sqrt(2) cos(w_j . x_i + b_j)`.
pub fn apply_fourier_map(map: &FourierFeatureMap, data: &DataMatrix) -> Result<DataMatrix> {
    if data.p() != map.input_dim() {
        return Err(Error::invalid(format!(
            "data has {} columns, map expects {}",
            data.p(),
            map.input_dim()
        )));
    }
    let mut proj = data.values() * map.frequencies.transpose();
    for (j, mut col) in proj.column_iter_mut().enumerate() {
        let b = map.phases[j];
        for v in col.iter_mut() {
            *v = SQRT_2 * (*v + b).cos();
        }
    }
    DataMatrix::with_prefix(proj, "f")
}

/// Centers each column and scales it to unit sample (n-1) variance.
/// Constant columns become zero.
pub fn standardize_columns(data: &DataMatrix) -> Result<DataMatrix> {
    let n = data.n();
    if n < 2 {
        return Err(Error::invalid("standardization needs at least 2 rows"));
    }
    let mut values = data.values().clone();
    for mut col in values.column_iter_mut() {
        let mean = col.iter().sum::<f64>() / n as f64;
        let ss: f64 = col.iter().map(|v| (v - mean) * (v - mean)).sum();
        let sd = (ss / (n - 1) as f64).sqrt();
        // constant up to rounding
        if sd <= 1e-14 * mean.abs().max(f64::MIN_POSITIVE) || sd == 0.0 {
            col.fill(0.0);
        } else {
            for v in col.iter_mut() {
                *v = (*v - mean) / sd;
            }
        }
    }
    DataMatrix::new(values, data.column_names().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(n: usize, p: usize, seed: u64) -> DataMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0).unwrap();
        DataMatrix::from_matrix(DMatrix::from_fn(n, p, |_, _| normal.sample(&mut rng))).unwrap()
    }

    #[test]
    fn rejects_non_finite() {
        let m = DMatrix::from_row_slice(2, 1, &[1.0, f64::NAN]);
        assert!(DataMatrix::from_matrix(m).is_err());
    }

    #[test]
    fn bandwidth_single_pair() {
        let d = DataMatrix::from_columns(&[vec![0.0, 2.0]], &["x"]).unwrap();
        assert_eq!(median_bandwidth(&d, 500).unwrap(), 4.0);
    }

    #[test]
    fn bandwidth_identical_rows_falls_back() {
        let d = DataMatrix::from_columns(&[vec![3.0; 5], vec![1.0; 5]], &["a", "b"]).unwrap();
        assert_eq!(median_bandwidth(&d, 500).unwrap(), 1.0);
    }

    #[test]
    fn bandwidth_brute_force() {
        let d = random_matrix(10, 2, 11);
        let x = d.values();
        let mut all = Vec::new();
        for i in 0..10 {
            for j in 0..10 {
                if i < j {
                    all.push(((x[(i, 0)] - x[(j, 0)]).powi(2) + (x[(i, 1)] - x[(j, 1)]).powi(2)).sqrt());
                }
            }
        }
        assert_eq!(all.len(), 45);
        all.sort_by(f64::total_cmp);
        let med = all[22];
        let got = median_bandwidth(&d, 500).unwrap();
        assert!((got - med * med).abs() < 1e-12);
    }

    #[test]
    fn bandwidth_errors() {
        let d = DataMatrix::from_columns(&[vec![1.0]], &["x"]).unwrap();
        assert!(median_bandwidth(&d, 500).is_err());
        let d = random_matrix(5, 1, 1);
        assert!(median_bandwidth(&d, 1).is_err());
    }

    #[test]
    fn bandwidth_uses_prefix_only() {
        let mut d = random_matrix(20, 1, 3).into_values();
        let head = DataMatrix::from_matrix(d.rows(0, 6).into_owned()).unwrap();
        d[(15, 0)] = 1e6;
        let full = DataMatrix::from_matrix(d).unwrap();
        assert_eq!(median_bandwidth(&full, 6).unwrap(), median_bandwidth(&head, 6).unwrap());
    }

    #[test]
    fn sampling_is_deterministic() {
        let a = sample_fourier_map(3, 7, 1.5, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = sample_fourier_map(3, 7, 1.5, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn frequency_variance_matches_bandwidth() {
        let map = sample_fourier_map(1, 10_000, 2.0, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let w: Vec<f64> = map.frequencies().iter().copied().collect();
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        let var = w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (w.len() - 1) as f64;
        assert!((var - 1.0).abs() < 0.05, "variance {var}");
        assert!(map.phases().iter().all(|&b| (0.0..2.0 * PI).contains(&b)));
    }

    #[test]
    fn sampling_preconditions() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(sample_fourier_map(2, 0, 1.0, &mut rng).is_err());
        assert!(sample_fourier_map(2, 3, 0.0, &mut rng).is_err());
        assert!(sample_fourier_map(2, 3, -1.0, &mut rng).is_err());
    }

    #[test]
    fn zero_map_gives_sqrt_two() {
        let map = FourierFeatureMap::new(DMatrix::zeros(3, 2), DVector::zeros(3), 1.0).unwrap();
        let f = apply_fourier_map(&map, &random_matrix(4, 2, 2)).unwrap();
        assert!(f.values().iter().all(|&v| (v - SQRT_2).abs() < 1e-15));
    }

    #[test]
    fn phase_pi_gives_minus_sqrt_two() {
        // w.x + b = 0.5 * 2 + (pi - 1) = pi
        let map = FourierFeatureMap::new(
            DMatrix::from_element(1, 1, 0.5),
            DVector::from_element(1, PI - 1.0),
            1.0,
        )
        .unwrap();
        let x = DataMatrix::from_columns(&[vec![2.0]], &["x"]).unwrap();
        let f = apply_fourier_map(&map, &x).unwrap();
        assert!((f.values()[(0, 0)] + SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch() {
        let map = sample_fourier_map(3, 4, 1.0, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert!(apply_fourier_map(&map, &random_matrix(5, 2, 0)).is_err());
    }

    #[test]
    fn approximates_rbf_kernel() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let sigma = 3.0;
        let map = sample_fourier_map(2, 2000, sigma, &mut rng).unwrap();
        let pts = random_matrix(10, 2, 5);
        let f = apply_fourier_map(&map, &pts).unwrap();
        let fv = f.values();
        for i in 0..10 {
            for j in 0..10 {
                let approx = fv.row(i).dot(&fv.row(j)) / 2000.0;
                let dx = pts.values().row(i) - pts.values().row(j);
                let exact = (-dx.norm_squared() / sigma).exp();
                assert!((approx - exact).abs() < 0.05, "{approx} vs {exact}");
            }
        }
    }

    #[test]
    fn standardize_two_points() {
        let d = DataMatrix::from_columns(&[vec![1.0, 3.0]], &["x"]).unwrap();
        let s = standardize_columns(&d).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((s.values()[(0, 0)] + h).abs() < 1e-15);
        assert!((s.values()[(1, 0)] - h).abs() < 1e-15);
    }

    #[test]
    fn standardize_constant_column() {
        let d = DataMatrix::from_columns(&[vec![5.0; 3]], &["x"]).unwrap();
        let s = standardize_columns(&d).unwrap();
        assert!(s.values().iter().all(|&v| v == 0.0));
        let one = DataMatrix::from_columns(&[vec![5.0]], &["x"]).unwrap();
        assert!(standardize_columns(&one).is_err());
    }

    #[test]
    fn standardize_moments() {
        let d = random_matrix(100, 3, 8);
        let s = standardize_columns(&d).unwrap();
        for col in s.values().column_iter() {
            let mean = col.mean();
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 99.0;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn hstack_and_select() {
        let a = DataMatrix::from_columns(&[vec![1.0, 2.0]], &["a"]).unwrap();
        let b = DataMatrix::from_columns(&[vec![3.0, 4.0]], &["b"]).unwrap();
        let ab = a.hstack(&b).unwrap();
        assert_eq!(ab.column_names(), &["a".to_string(), "b".to_string()]);
        assert_eq!(ab.select_named(&["b"]).unwrap(), b);
        assert!(ab.select_named(&["c"]).is_err());
        assert_eq!(ab.select_rows(&[1]).unwrap().values()[(0, 1)], 4.0);
        assert!(a.hstack(&DataMatrix::empty(3)).is_err());
    }
}
