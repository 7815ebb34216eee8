//! RCIT, RCoT and the Fisher z baseline.
//!
//! Both randomized tests share one pipeline: standardize the inputs, pick a
//! median-heuristic bandwidth per block, draw random Fourier features,
//! standardize the features, residualize the A- and B-side features on the
//! conditioning features with a ridge regression, and compare
//! `n * |Cov(resA, resB)|_F^2` against a weighted sum of chi-squares whose
//! weights are the eigenvalues of the covariance of the per-sample outer
//! products.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::features::{
    apply_fourier_map, median_bandwidth, sample_fourier_map, standardize_columns, DataMatrix, FourierFeatureMap,
};
use crate::wchi2::{
    hall_buckley_eagleson, imhof_estimate, lindsay_pilla_basak, satterthwaite_welch, wood_f, Survival,
    WeightedChiSquareDist,
};

/// How the p-value is obtained from the statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ApproxMethod {
    Lpb,
    Hbe,
    Sw,
    WoodF,
    Imhof,
    /// Row permutations of the B-side residuals.
    Perm,
}

impl ApproxMethod {
    pub const ALL: [ApproxMethod; 6] = [
        ApproxMethod::Lpb,
        ApproxMethod::Hbe,
        ApproxMethod::Sw,
        ApproxMethod::WoodF,
        ApproxMethod::Imhof,
        ApproxMethod::Perm,
    ];

    pub fn label(self) -> &'static str {
        match self {
            ApproxMethod::Lpb => "lpb",
            ApproxMethod::Hbe => "hbe",
            ApproxMethod::Sw => "sw",
            ApproxMethod::WoodF => "woodf",
            ApproxMethod::Imhof => "imhof",
            ApproxMethod::Perm => "perm",
        }
    }
}

impl fmt::Display for ApproxMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for ApproxMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ApproxMethod::ALL
            .into_iter()
            .find(|m| m.label().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::invalid(format!("unknown approximation '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CiTestConfig {
    /// Fourier features for the X (or (X, Z)) and Y blocks.
    pub num_features_xy: usize,
    /// Fourier features for the conditioning block.
    pub num_features_z: usize,
    pub ridge: f64,
    pub approx_method: ApproxMethod,
    /// Rows used by the median bandwidth heuristic.
    pub median_subsample: usize,
    /// Only used by [`ApproxMethod::Perm`].
    pub permutations: usize,
    pub seed: u64,
}

impl Default for CiTestConfig {
    fn default() -> Self {
        CiTestConfig {
            num_features_xy: 5,
            num_features_z: 25,
            ridge: 1e-10,
            approx_method: ApproxMethod::Lpb,
            median_subsample: 500,
            permutations: 500,
            seed: 0,
        }
    }
}

impl CiTestConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_approx(mut self, method: ApproxMethod) -> Self {
        self.approx_method = method;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_features_xy == 0 || self.num_features_z == 0 {
            return Err(Error::invalid("feature counts must be at least 1"));
        }
        if !(self.ridge > 0.0 && self.ridge.is_finite()) {
            return Err(Error::invalid("ridge must be positive"));
        }
        if self.median_subsample < 2 {
            return Err(Error::invalid("median_subsample must be at least 2"));
        }
        if self.approx_method == ApproxMethod::Perm && self.permutations == 0 {
            return Err(Error::invalid("permutation count must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CiTestResult {
    pub statistic: f64,
    pub p_value: f64,
    /// Test name: `rcot`, `rcit` or `fisher-z`.
    pub method: String,
    /// Null approximation, absent for Fisher z.
    pub approx: Option<ApproxMethod>,
    pub eigenvalues: Vec<f64>,
    pub n: usize,
    #[serde(with = "duration_ms", rename = "elapsed_ms")]
    pub elapsed: Duration,
    /// Set when the requested null approximation could not be used as is.
    pub fallback_flag: bool,
}

mod duration_ms {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64() * 1e3)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let ms = f64::deserialize(d)?;
        Ok(Duration::from_secs_f64(ms.max(0.0) / 1e3))
    }
}

/// Residuals of a ridge regression of `features` on `conditioning`, both
/// column-centered: `F_c - C_c (S_CC + ridge I)^-1 S_CF` with `S` the
/// `1/(n-1)` sample covariances. With no conditioning columns this is the
/// centered `F`.
pub fn ridge_residualize(features: &DataMatrix, conditioning: &DataMatrix, ridge: f64) -> Result<DataMatrix> {
    if features.n() != conditioning.n() {
        return Err(Error::invalid(format!(
            "row mismatch: {} feature rows, {} conditioning rows",
            features.n(),
            conditioning.n()
        )));
    }
    if !(ridge > 0.0) {
        return Err(Error::invalid("ridge must be positive"));
    }
    let out = ridge_residual_values(features.values(), conditioning.values(), ridge)?;
    DataMatrix::new(out, features.column_names().to_vec())
}

fn column_means(m: &DMatrix<f64>) -> DVector<f64> {
    let n = m.nrows().max(1) as f64;
    DVector::from_iterator(m.ncols(), m.column_iter().map(|c| c.sum() / n))
}

fn ridge_residual_values(f: &DMatrix<f64>, c: &DMatrix<f64>, ridge: f64) -> Result<DMatrix<f64>> {
    let n = f.nrows();
    if n < 2 {
        return Err(Error::invalid("residualization needs at least 2 rows"));
    }
    let mean_f = column_means(f);
    let mut out = f.clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        col.add_scalar_mut(-mean_f[j]);
    }
    if c.ncols() == 0 {
        return Ok(out);
    }
    let mean_c = column_means(c);
    let scale = 1.0 / (n - 1) as f64;
    // Centered cross products without materializing centered copies of C.
    let mut gram = c.tr_mul(c);
    gram -= &mean_c * mean_c.transpose() * n as f64;
    gram *= scale;
    for i in 0..gram.nrows() {
        gram[(i, i)] += ridge;
    }
    let mut cross = c.tr_mul(f);
    cross -= &mean_c * mean_f.transpose() * n as f64;
    cross *= scale;
    let coef = match gram.clone().cholesky() {
        Some(ch) => ch.solve(&cross),
        None => gram
            .lu()
            .solve(&cross)
            .ok_or_else(|| Error::Numerical("singular ridge system".into()))?,
    };
    // F_c - C_c B = (F - C B) - 1 (mean_F - B^T mean_C)^T; the mean part of F
    // has already been removed from `out`.
    let fitted = c * &coef;
    let offset = coef.transpose() * &mean_c;
    for j in 0..out.ncols() {
        let off = offset[j];
        for i in 0..n {
            out[(i, j)] -= fitted[(i, j)] - off;
        }
    }
    Ok(out)
}

/// `resA^T resB / (n-1)`, the (uncentered) cross-covariance of residuals.
pub fn partial_cross_covariance(res_a: &DataMatrix, res_b: &DataMatrix) -> Result<DMatrix<f64>> {
    check_pair(res_a, res_b)?;
    Ok(res_a.values().tr_mul(res_b.values()) / (res_a.n() - 1) as f64)
}

fn check_pair(a: &DataMatrix, b: &DataMatrix) -> Result<()> {
    if a.n() != b.n() {
        return Err(Error::invalid(format!("row mismatch: {} vs {}", a.n(), b.n())));
    }
    if a.n() < 2 {
        return Err(Error::invalid("need at least 2 rows"));
    }
    Ok(())
}

/// `n * |resA^T resB / (n-1)|_F^2`.
pub fn cov_frobenius_statistic(res_a: &DataMatrix, res_b: &DataMatrix) -> Result<f64> {
    let cov = partial_cross_covariance(res_a, res_b)?;
    Ok(res_a.n() as f64 * cov.norm_squared())
}

const OUTER_PRODUCT_CHUNK: usize = 8192;

/// `(1/n) sum_r vec(a_r b_r^T) vec(a_r b_r^T)^T`, symmetrized. Entry
/// `(i * mB + j, k * mB + l)` is `mean(a_i b_j a_k b_l)`.
pub fn estimate_null_covariance(res_a: &DataMatrix, res_b: &DataMatrix) -> Result<DMatrix<f64>> {
    check_pair(res_a, res_b)?;
    let (a, b) = (res_a.values(), res_b.values());
    let (n, ma, mb) = (a.nrows(), a.ncols(), b.ncols());
    let l = ma * mb;
    let mut pi = DMatrix::zeros(l, l);
    let mut start = 0;
    while start < n {
        let rows = OUTER_PRODUCT_CHUNK.min(n - start);
        let prod = DMatrix::from_fn(rows, l, |r, col| a[(start + r, col / mb)] * b[(start + r, col % mb)]);
        pi += prod.tr_mul(&prod);
        start += rows;
    }
    pi /= n as f64;
    let sym = (&pi + pi.transpose()) * 0.5;
    Ok(sym)
}

/// Eigenvalues of the estimated outer-product covariance, negatives clamped to zero.
pub fn estimate_null_weights(res_a: &DataMatrix, res_b: &DataMatrix) -> Result<WeightedChiSquareDist> {
    let pi = estimate_null_covariance(res_a, res_b)?;
    let eig = SymmetricEigen::new(pi);
    let mut values: Vec<f64> = eig.eigenvalues.iter().map(|&v| v.max(0.0)).collect();
    values.sort_by(|a, b| b.total_cmp(a));
    WeightedChiSquareDist::new(values)
}

/// Survival of `statistic` under the weighted chi-square null. Returns the
/// p-value and whether a fallback was involved. Degenerate (all-zero)
/// weights give `p = 1` with the flag set.
pub fn null_p_value(weights: &WeightedChiSquareDist, statistic: f64, method: ApproxMethod) -> Result<(f64, bool)> {
    if weights.is_degenerate() {
        return Ok((1.0, true));
    }
    let (p, flag) = match method {
        ApproxMethod::Lpb => {
            let lpb = lindsay_pilla_basak(weights)?;
            (lpb.survival(statistic), lpb.fallback_used())
        }
        ApproxMethod::Hbe => (hall_buckley_eagleson(weights)?.survival(statistic), false),
        ApproxMethod::Sw => (satterthwaite_welch(weights)?.survival(statistic), false),
        ApproxMethod::WoodF => {
            let w = wood_f(weights)?;
            (w.survival(statistic), w.fallback_used())
        }
        ApproxMethod::Imhof => match imhof_estimate(weights, statistic, 1e-6) {
            Ok(e) => (e.survival, false),
            Err(Error::Accuracy { estimate, .. }) => (estimate, true),
            Err(e) => return Err(e),
        },
        ApproxMethod::Perm => {
            return Err(Error::invalid("permutation p-values need the residuals"));
        }
    };
    if !p.is_finite() {
        return Err(Error::Numerical(format!("{method} produced a non-finite p-value")));
    }
    Ok((p.clamp(0.0, 1.0), flag))
}

/// Feature maps drawn for one test invocation.
#[derive(Debug, Clone, PartialEq)]
pub struct CiFeatureMaps {
    /// On X for RCoT, on the concatenation (X, Z) for RCIT.
    pub a: FourierFeatureMap,
    pub b: FourierFeatureMap,
    /// Absent when the conditioning set is empty.
    pub c: Option<FourierFeatureMap>,
}

impl CiFeatureMaps {
    /// The same maps with the roles of the A and B sides exchanged.
    pub fn swapped(&self) -> Self {
        CiFeatureMaps {
            a: self.b.clone(),
            b: self.a.clone(),
            c: self.c.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Rcot,
    Rcit,
}

impl Variant {
    pub fn label(self) -> &'static str {
        match self {
            Variant::Rcot => "rcot",
            Variant::Rcit => "rcit",
        }
    }
}

fn check_inputs(x: &DataMatrix, y: &DataMatrix, z: &DataMatrix) -> Result<()> {
    let n = x.n();
    if y.n() != n || z.n() != n {
        return Err(Error::invalid(format!(
            "row mismatch: x {}, y {}, z {}",
            x.n(),
            y.n(),
            z.n()
        )));
    }
    if n < 2 {
        return Err(Error::invalid("need at least 2 samples"));
    }
    if x.p() == 0 || y.p() == 0 {
        return Err(Error::invalid("x and y need at least one column"));
    }
    Ok(())
}

struct Standardized {
    a: DataMatrix,
    b: DataMatrix,
    c: DataMatrix,
}

fn standardize_blocks(variant: Variant, x: &DataMatrix, y: &DataMatrix, z: &DataMatrix) -> Result<Standardized> {
    let xs = standardize_columns(x)?;
    let b = standardize_columns(y)?;
    let c = if z.p() > 0 {
        standardize_columns(z)?
    } else {
        DataMatrix::empty(z.n())
    };
    let a = match variant {
        Variant::Rcot => xs,
        Variant::Rcit if c.p() > 0 => xs.hstack(&c)?,
        Variant::Rcit => xs,
    };
    Ok(Standardized { a, b, c })
}

/// Draws the feature maps the test would use for these inputs and seed.
pub fn sample_feature_maps(
    variant: Variant,
    x: &DataMatrix,
    y: &DataMatrix,
    z: &DataMatrix,
    cfg: &CiTestConfig,
) -> Result<CiFeatureMaps> {
    cfg.validate()?;
    check_inputs(x, y, z)?;
    let s = standardize_blocks(variant, x, y, z)?;
    maps_for(&s, cfg)
}

fn maps_for(s: &Standardized, cfg: &CiTestConfig) -> Result<CiFeatureMaps> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let sigma_a = median_bandwidth(&s.a, cfg.median_subsample)?;
    let sigma_b = median_bandwidth(&s.b, cfg.median_subsample)?;
    let a = sample_fourier_map(s.a.p(), cfg.num_features_xy, sigma_a, &mut rng)?;
    let b = sample_fourier_map(s.b.p(), cfg.num_features_xy, sigma_b, &mut rng)?;
    let c = if s.c.p() > 0 {
        let sigma_c = median_bandwidth(&s.c, cfg.median_subsample)?;
        Some(sample_fourier_map(s.c.p(), cfg.num_features_z, sigma_c, &mut rng)?)
    } else {
        None
    };
    Ok(CiFeatureMaps { a, b, c })
}

fn featurize(map: &FourierFeatureMap, data: &DataMatrix) -> Result<DataMatrix> {
    standardize_columns(&apply_fourier_map(map, data)?)
}

/// Ridge residuals of the A- and B-side features for fixed maps.
pub fn feature_residuals(
    variant: Variant,
    x: &DataMatrix,
    y: &DataMatrix,
    z: &DataMatrix,
    maps: &CiFeatureMaps,
    ridge: f64,
) -> Result<(DataMatrix, DataMatrix)> {
    check_inputs(x, y, z)?;
    let s = standardize_blocks(variant, x, y, z)?;
    residuals_for(&s, maps, ridge)
}

fn residuals_for(s: &Standardized, maps: &CiFeatureMaps, ridge: f64) -> Result<(DataMatrix, DataMatrix)> {
    let fa = featurize(&maps.a, &s.a)?;
    let fb = featurize(&maps.b, &s.b)?;
    let fc = match (&maps.c, s.c.p()) {
        (Some(map), p) if p > 0 => featurize(map, &s.c)?,
        (None, 0) => DataMatrix::empty(s.c.n()),
        _ => return Err(Error::invalid("conditioning map does not match the conditioning set")),
    };
    Ok((ridge_residualize(&fa, &fc, ridge)?, ridge_residualize(&fb, &fc, ridge)?))
}

/// Randomized conditional correlation test of `x` and `y` given `z`.
pub fn rcot(x: &DataMatrix, y: &DataMatrix, z: &DataMatrix, cfg: &CiTestConfig) -> Result<CiTestResult> {
    run_randomized(Variant::Rcot, x, y, z, cfg, None)
}

/// Randomized conditional independence test; the A-side features are drawn
/// on the concatenation `(x, z)`.
pub fn rcit(x: &DataMatrix, y: &DataMatrix, z: &DataMatrix, cfg: &CiTestConfig) -> Result<CiTestResult> {
    run_randomized(Variant::Rcit, x, y, z, cfg, None)
}

/// Runs either variant with caller-supplied feature maps.
pub fn randomized_test_with_maps(
    variant: Variant,
    x: &DataMatrix,
    y: &DataMatrix,
    z: &DataMatrix,
    cfg: &CiTestConfig,
    maps: &CiFeatureMaps,
) -> Result<CiTestResult> {
    run_randomized(variant, x, y, z, cfg, Some(maps))
}

fn run_randomized(
    variant: Variant,
    x: &DataMatrix,
    y: &DataMatrix,
    z: &DataMatrix,
    cfg: &CiTestConfig,
    maps: Option<&CiFeatureMaps>,
) -> Result<CiTestResult> {
    let start = Instant::now();
    cfg.validate()?;
    check_inputs(x, y, z)?;
    let s = standardize_blocks(variant, x, y, z)?;
    let owned;
    let maps = match maps {
        Some(m) => m,
        None => {
            owned = maps_for(&s, cfg)?;
            &owned
        }
    };
    let (res_a, res_b) = residuals_for(&s, maps, cfg.ridge)?;
    drop(s);
    let statistic = cov_frobenius_statistic(&res_a, &res_b)?;
    let weights = estimate_null_weights(&res_a, &res_b)?;

    let (p_value, fallback_flag) = if cfg.approx_method == ApproxMethod::Perm {
        (
            permutation_p_value(&res_a, &res_b, statistic, cfg)?,
            weights.is_degenerate(),
        )
    } else {
        null_p_value(&weights, statistic, cfg.approx_method)?
    };

    Ok(CiTestResult {
        statistic,
        p_value,
        method: variant.label().to_string(),
        approx: Some(cfg.approx_method),
        eigenvalues: weights.weights().to_vec(),
        n: x.n(),
        elapsed: start.elapsed(),
        fallback_flag,
    })
}

/// `(1 + #{permuted >= observed}) / (R + 1)` over row permutations of `res_b`.
fn permutation_p_value(res_a: &DataMatrix, res_b: &DataMatrix, observed: f64, cfg: &CiTestConfig) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let n = res_a.n();
    let (a, b) = (res_a.values(), res_b.values());
    let mut order: Vec<usize> = (0..n).collect();
    let mut exceed = 0usize;
    let mut permuted = DMatrix::zeros(n, b.ncols());
    for _ in 0..cfg.permutations {
        order.shuffle(&mut rng);
        for j in 0..b.ncols() {
            for (i, &src) in order.iter().enumerate() {
                permuted[(i, j)] = b[(src, j)];
            }
        }
        let cov = a.tr_mul(&permuted) / (n - 1) as f64;
        if n as f64 * cov.norm_squared() >= observed {
            exceed += 1;
        }
    }
    Ok((1 + exceed) as f64 / (cfg.permutations + 1) as f64)
}

/// Which conditional independence test to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TestKind {
    #[serde(rename = "rcot")]
    Rcot,
    #[serde(rename = "rcit")]
    Rcit,
    #[serde(rename = "fisher-z")]
    FisherZ,
}

impl TestKind {
    pub fn label(self) -> &'static str {
        match self {
            TestKind::Rcot => "rcot",
            TestKind::Rcit => "rcit",
            TestKind::FisherZ => "fisher-z",
        }
    }

    /// Runs the test; `cfg` is ignored by Fisher z.
    pub fn run(self, x: &DataMatrix, y: &DataMatrix, z: &DataMatrix, cfg: &CiTestConfig) -> Result<CiTestResult> {
        match self {
            TestKind::Rcot => rcot(x, y, z, cfg),
            TestKind::Rcit => rcit(x, y, z, cfg),
            TestKind::FisherZ => fisher_z(x, y, z),
        }
    }
}

impl fmt::Display for TestKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for TestKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rcot" => Ok(TestKind::Rcot),
            "rcit" => Ok(TestKind::Rcit),
            "fisher-z" | "fisherz" | "fz" | "fzt" => Ok(TestKind::FisherZ),
            _ => Err(Error::invalid(format!("unknown test '{s}'"))),
        }
    }
}

/// Fisher z test of zero partial correlation between single columns `x`
/// and `y` given `z`. The reported statistic is `|sqrt(n - |z| - 3) atanh(r)|`.
pub fn fisher_z(x: &DataMatrix, y: &DataMatrix, z: &DataMatrix) -> Result<CiTestResult> {
    let start = Instant::now();
    check_inputs(x, y, z)?;
    if x.p() != 1 || y.p() != 1 {
        return Err(Error::invalid("Fisher z needs single-column x and y"));
    }
    let n = x.n();
    let k = z.p();
    if n <= k + 3 {
        return Err(Error::invalid(format!(
            "Fisher z needs n > |z| + 3 (n = {n}, |z| = {k})"
        )));
    }
    let r = partial_correlation(x.values(), y.values(), z.values())?;
    let (statistic, p_value, flag) = fisher_z_from_r(r, n, k);
    Ok(CiTestResult {
        statistic,
        p_value,
        method: "fisher-z".to_string(),
        approx: None,
        eigenvalues: Vec::new(),
        n,
        elapsed: start.elapsed(),
        fallback_flag: flag,
    })
}

/// Statistic, two-sided p-value and degenerate flag for a partial correlation `r`.
pub fn fisher_z_from_r(r: f64, n: usize, k: usize) -> (f64, f64, bool) {
    if !(r.abs() < 1.0) {
        return (f64::INFINITY, 0.0, true);
    }
    let stat = ((n - k - 3) as f64).sqrt() * r.atanh();
    let p = erfc(stat.abs() / std::f64::consts::SQRT_2);
    (stat.abs(), p.clamp(0.0, 1.0), false)
}

/// Correlation of the least-squares residuals of `x` and `y` on `[1, z]`.
pub fn partial_correlation(x: &DMatrix<f64>, y: &DMatrix<f64>, z: &DMatrix<f64>) -> Result<f64> {
    let n = x.nrows();
    let design = DMatrix::from_fn(n, z.ncols() + 1, |i, j| if j == 0 { 1.0 } else { z[(i, j - 1)] });
    let rx = ols_residuals(&design, x)?;
    let ry = ols_residuals(&design, y)?;
    let (sxy, sxx, syy) = (rx.dot(&ry), rx.norm_squared(), ry.norm_squared());
    // a residual at rounding level means the column is explained exactly
    let negligible = |res: f64, t: &DMatrix<f64>| res <= 1e-24 * t.norm_squared().max(f64::MIN_POSITIVE);
    if negligible(sxx, x) || negligible(syy, y) {
        return Ok(0.0);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

fn ols_residuals(design: &DMatrix<f64>, target: &DMatrix<f64>) -> Result<DVector<f64>> {
    let t = target.column(0).into_owned();
    let qr = design.clone().qr();
    let r = qr.r();
    let scale = r.diagonal().amax();
    if r.diagonal().iter().any(|d| d.abs() <= 1e-12 * scale) {
        return Err(Error::Numerical("collinear conditioning set".into()));
    }
    let qt_t = qr.q().tr_mul(&t);
    let coef = r
        .solve_upper_triangular(&qt_t)
        .ok_or_else(|| Error::Numerical("collinear conditioning set".into()))?;
    Ok(t - design * coef)
}
