//! Calibration, power and runtime harnesses.
//!
//! Every trial owns a seed derived from `(master seed, n, k, trial)`, so a
//! suite gives the same reports whether it runs sequentially or in parallel,
//! and a shorter suite reproduces the prefix of a longer one.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::citest::{CiTestConfig, TestKind};
use crate::error::{Error, Result};
use crate::seed::{derive_seed, rng_for};
use crate::synth::{gen_pnl_alt, gen_pnl_null, PnlSample};
use crate::wchi2::{
    empirical_survival_oracle, hall_buckley_eagleson, lindsay_pilla_basak, satterthwaite_welch, survival_quantile,
    wood_f, Imhof, Survival, WeightedChiSquareDist,
};

/// Smallest trial count accepted by the suites.
pub const MIN_TRIALS: usize = 50;

fn check_p_values(p: &[f64]) -> Result<()> {
    if p.is_empty() {
        return Err(Error::invalid("empty p-value list"));
    }
    if p.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::invalid("p-values must lie in [0, 1]"));
    }
    Ok(())
}

/// `sup_t |F_n(t) - t|` for the empirical CDF of `p_values`, evaluated on
/// both sides of every jump.
pub fn ks_uniformity(p_values: &[f64]) -> Result<f64> {
    check_p_values(p_values)?;
    let mut sorted = p_values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let d = sorted
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let above = (i + 1) as f64 / n - p;
            let below = p - i as f64 / n;
            above.max(below)
        })
        .fold(0.0, f64::max);
    Ok(d.min(1.0))
}

/// Asymptotic Kolmogorov tail `P(D_n > d)` with Stephens' small-sample
/// correction.
pub fn ks_p_value(d: f64, n: usize) -> f64 {
    if d <= 0.0 {
        return 1.0;
    }
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Distance `d` at which [`ks_p_value`] equals `alpha`.
pub fn ks_critical_value(alpha: f64, n: usize) -> f64 {
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if ks_p_value(mid, n) > alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Two-sample KS distance `sup_t |F_a(t) - F_b(t)|`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("empty sample"));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let t = a[i].min(b[j]);
        while i < a.len() && a[i] <= t {
            i += 1;
        }
        while j < b.len() && b[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}

/// Area under the empirical CDF of the p-values over `[0, 1]`.
pub fn aupc(p_values: &[f64]) -> Result<f64> {
    check_p_values(p_values)?;
    let mut sorted = p_values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    // F_n equals i/n on [p_(i), p_(i+1)).
    let mut area = 0.0;
    for (i, &p) in sorted.iter().enumerate() {
        let next = sorted.get(i + 1).copied().unwrap_or(1.0);
        area += (i + 1) as f64 / n * (next - p);
    }
    Ok(area.clamp(0.0, 1.0))
}

/// A test to evaluate: the kind plus its configuration. The configuration's
/// seed is replaced per trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestSpec {
    pub kind: TestKind,
    pub config: CiTestConfig,
}

impl TestSpec {
    pub fn new(kind: TestKind) -> Self {
        TestSpec {
            kind,
            config: CiTestConfig::default(),
        }
    }

    pub fn with_config(kind: TestKind, config: CiTestConfig) -> Self {
        TestSpec { kind, config }
    }

    pub fn label(&self) -> String {
        match self.kind {
            TestKind::FisherZ => self.kind.label().to_string(),
            _ => format!("{}-{}", self.kind.label(), self.config.approx_method),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DesignKind {
    /// Post non-linear null model.
    Null,
    /// Post non-linear model with a hidden common cause.
    Alt,
    /// Alternative model with the rows of X permuted.
    Perm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Design {
    pub kind: DesignKind,
    pub test: TestSpec,
    pub n: usize,
    pub k: usize,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub design: Design,
    pub p_values: Vec<f64>,
    pub ks_statistic: f64,
    /// Kolmogorov tail probability of `ks_statistic`.
    pub ks_p_value: f64,
    pub aupc: f64,
    pub mean_runtime_ms: f64,
    /// Trials whose null approximation fell back to another method.
    pub fallback_count: usize,
    pub seed: u64,
}

impl ExperimentReport {
    fn from_trials(design: Design, trials: Vec<TrialOutcome>, seed: u64) -> Result<Self> {
        let p_values: Vec<f64> = trials.iter().map(|t| t.p_value).collect();
        let runtime = trials.iter().map(|t| t.runtime_ms).sum::<f64>() / trials.len() as f64;
        let ks = ks_uniformity(&p_values)?;
        Ok(ExperimentReport {
            ks_statistic: ks,
            ks_p_value: ks_p_value(ks, p_values.len()),
            aupc: aupc(&p_values)?,
            mean_runtime_ms: runtime,
            fallback_count: trials.iter().filter(|t| t.fallback).count(),
            p_values,
            design,
            seed,
        })
    }

    /// One CSV summary row matching [`ExperimentReport::CSV_HEADER`].
    pub fn csv_row(&self) -> String {
        format!(
            "{:?},{},{},{},{},{},{},{},{},{}",
            self.design.kind,
            self.design.test.label(),
            self.design.n,
            self.design.k,
            self.design.trials,
            self.ks_statistic,
            self.ks_p_value,
            self.aupc,
            self.mean_runtime_ms,
            self.fallback_count
        )
        .to_lowercase()
    }

    pub const CSV_HEADER: &'static str =
        "design,test,n,k,trials,ks_statistic,ks_p_value,aupc,mean_runtime_ms,fallback_count";
}

struct TrialOutcome {
    p_value: f64,
    runtime_ms: f64,
    fallback: bool,
}

/// Seed of trial `trial` for a condition `(n, k)`.
pub fn trial_seed(master: u64, n: usize, k: usize, trial: usize) -> u64 {
    derive_seed(derive_seed(derive_seed(master, n as u64), k as u64), trial as u64)
}

fn generate(kind: DesignKind, n: usize, k: usize, seed: u64) -> Result<PnlSample> {
    let mut rng = rng_for(seed, 0);
    match kind {
        DesignKind::Null => gen_pnl_null(n, k, &mut rng),
        DesignKind::Alt => gen_pnl_alt(n, k, &mut rng),
        DesignKind::Perm => {
            let mut s = gen_pnl_alt(n, k, &mut rng)?;
            let identity: Vec<usize> = (0..n).collect();
            let mut order = identity.clone();
            while order == identity {
                order.shuffle(&mut rng);
            }
            s.x = s.x.select_rows(&order)?;
            Ok(s)
        }
    }
}

fn run_trial(spec: &TestSpec, sample: &PnlSample, seed: u64) -> Result<TrialOutcome> {
    let cfg = CiTestConfig {
        seed: derive_seed(seed, 1),
        ..spec.config.clone()
    };
    let start = Instant::now();
    let r = spec.kind.run(&sample.x, &sample.y, &sample.z, &cfg)?;
    Ok(TrialOutcome {
        p_value: r.p_value,
        runtime_ms: start.elapsed().as_secs_f64() * 1e3,
        fallback: r.fallback_flag,
    })
}

/// Runs every test on `trials` datasets per `(n, k)` condition. The same
/// datasets are shared by all tests of a condition.
pub fn run_suite(
    kind: DesignKind,
    tests: &[TestSpec],
    sizes: &[usize],
    k_values: &[usize],
    trials: usize,
    seed: u64,
) -> Result<Vec<ExperimentReport>> {
    if trials < MIN_TRIALS {
        return Err(Error::invalid(format!("need at least {MIN_TRIALS} trials")));
    }
    if tests.is_empty() || sizes.is_empty() || k_values.is_empty() {
        return Err(Error::invalid("tests, sizes and k values must be non-empty"));
    }
    let mut reports = Vec::with_capacity(tests.len() * sizes.len() * k_values.len());
    for &n in sizes {
        for &k in k_values {
            let outcomes: Vec<Vec<TrialOutcome>> = (0..trials)
                .into_par_iter()
                .map(|t| {
                    let ts = trial_seed(seed, n, k, t);
                    let sample = generate(kind, n, k, ts)?;
                    tests.iter().map(|spec| run_trial(spec, &sample, ts)).collect()
                })
                .collect::<Result<_>>()?;
            let mut per_test: Vec<Vec<TrialOutcome>> = tests.iter().map(|_| Vec::with_capacity(trials)).collect();
            for row in outcomes {
                for (i, o) in row.into_iter().enumerate() {
                    per_test[i].push(o);
                }
            }
            for (spec, outcomes) in tests.iter().zip(per_test) {
                let design = Design {
                    kind,
                    test: spec.clone(),
                    n,
                    k,
                    trials,
                };
                reports.push(ExperimentReport::from_trials(design, outcomes, seed)?);
            }
        }
    }
    Ok(reports)
}

/// Type I error calibration on the post non-linear null model.
pub fn run_calibration_suite(
    tests: &[TestSpec],
    sizes: &[usize],
    k_values: &[usize],
    trials: usize,
    seed: u64,
) -> Result<Vec<ExperimentReport>> {
    run_suite(DesignKind::Null, tests, sizes, k_values, trials, seed)
}

/// Power on the hidden-common-cause alternative.
pub fn run_power_suite(
    tests: &[TestSpec],
    sizes: &[usize],
    k_values: &[usize],
    trials: usize,
    seed: u64,
) -> Result<Vec<ExperimentReport>> {
    run_suite(DesignKind::Alt, tests, sizes, k_values, trials, seed)
}

/// Calibration on alternative-model data whose X rows are permuted, which
/// restores the null.
pub fn run_permutation_calibration(
    tests: &[TestSpec],
    n: usize,
    k_values: &[usize],
    trials: usize,
    seed: u64,
) -> Result<Vec<ExperimentReport>> {
    run_suite(DesignKind::Perm, tests, &[n], k_values, trials, seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuntimeRow {
    pub test: String,
    pub n: usize,
    pub k: usize,
    pub repeats: usize,
    pub mean_ms: f64,
    pub min_ms: f64,
    pub max_ms: f64,
}

/// Wall-clock time of single test calls on null data with `k = 1`. One
/// warm-up call per condition is excluded; data generation is not timed.
/// Runs sequentially so timings do not compete for cores.
pub fn run_runtime_benchmark(
    tests: &[TestSpec],
    sizes: &[usize],
    repeats: usize,
    seed: u64,
) -> Result<Vec<RuntimeRow>> {
    if repeats < 3 {
        return Err(Error::invalid("need at least 3 repeats"));
    }
    if tests.is_empty() || sizes.is_empty() {
        return Err(Error::invalid("tests and sizes must be non-empty"));
    }
    let k = 1;
    let mut rows = Vec::new();
    for spec in tests {
        for &n in sizes {
            let ts = trial_seed(seed, n, k, 0);
            let sample = generate(DesignKind::Null, n, k, ts)?;
            run_trial(spec, &sample, ts)?;
            let mut times = Vec::with_capacity(repeats);
            for r in 0..repeats {
                let t = run_trial(spec, &sample, derive_seed(ts, r as u64 + 2))?;
                times.push(t.runtime_ms);
            }
            rows.push(RuntimeRow {
                test: spec.label(),
                n,
                k,
                repeats,
                mean_ms: times.iter().sum::<f64>() / repeats as f64,
                min_ms: times.iter().copied().fold(f64::INFINITY, f64::min),
                max_ms: times.iter().copied().fold(0.0, f64::max),
            });
        }
    }
    Ok(rows)
}

/// Weight vectors of length `Uniform{1..=max_len}` with entries `Uniform(0, 1)`.
pub fn random_weight_sets(sets: usize, max_len: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if sets == 0 || max_len == 0 {
        return Err(Error::invalid("need at least one set of at least one weight"));
    }
    let mut rng = rng_for(seed, 0);
    Ok((0..sets)
        .map(|_| {
            let l = rng.random_range(1..=max_len);
            (0..l).map(|_| rng.random_range(0.0..1.0)).collect()
        })
        .collect())
}

/// Survival of each approximation at one Imhof quantile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullAccuracyRow {
    pub set: usize,
    pub num_weights: usize,
    /// Upper tail probability whose Imhof quantile is evaluated.
    pub level: f64,
    pub quantile: f64,
    pub imhof: f64,
    pub sw: f64,
    pub hbe: f64,
    pub woodf: f64,
    pub woodf_fallback: bool,
    pub lpb: f64,
    pub lpb_fallback: bool,
    /// Monte-Carlo estimate, when requested.
    pub monte_carlo: Option<f64>,
    /// `|monte_carlo - imhof|` in binomial standard errors.
    pub monte_carlo_z: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullAccuracyReport {
    pub weights: Vec<Vec<f64>>,
    pub rows: Vec<NullAccuracyRow>,
    pub max_error_sw: f64,
    pub max_error_hbe: f64,
    /// Over rows without a Wood F fallback.
    pub max_error_woodf: f64,
    pub max_error_lpb: f64,
    pub woodf_fallbacks: usize,
    pub max_monte_carlo_z: Option<f64>,
}

/// Compares SW, HBE, Wood F and LPB with Imhof at the Imhof quantiles of
/// `levels`. With `mc_draws > 0` a Monte-Carlo estimate (seeded per set)
/// checks Imhof as well. Sets run in parallel.
pub fn run_null_accuracy(
    weight_sets: &[Vec<f64>],
    levels: &[f64],
    mc_draws: usize,
    seed: u64,
) -> Result<NullAccuracyReport> {
    if weight_sets.is_empty() || levels.is_empty() {
        return Err(Error::invalid("weight sets and levels must be non-empty"));
    }
    let per_set: Vec<Vec<NullAccuracyRow>> = weight_sets
        .par_iter()
        .enumerate()
        .map(|(set, w)| {
            let dist = WeightedChiSquareDist::new(w.clone())?;
            let imhof = Imhof::new(&dist, 1e-7)?;
            let sw = satterthwaite_welch(&dist)?;
            let hbe = hall_buckley_eagleson(&dist)?;
            let wf = wood_f(&dist)?;
            let lpb = lindsay_pilla_basak(&dist)?;
            let mut rng = rng_for(seed, set as u64 + 1);
            levels
                .iter()
                .map(|&level| {
                    let x = survival_quantile(&|x| imhof.survival(x), level, 1e-9)?;
                    let exact = imhof.survival(x);
                    let mc = if mc_draws > 0 {
                        Some(empirical_survival_oracle(&dist, x, mc_draws, &mut rng)?)
                    } else {
                        None
                    };
                    let se = (exact * (1.0 - exact) / mc_draws as f64).sqrt();
                    Ok(NullAccuracyRow {
                        set,
                        num_weights: w.len(),
                        level,
                        quantile: x,
                        imhof: exact,
                        sw: sw.survival(x),
                        hbe: hbe.survival(x),
                        woodf: wf.survival(x),
                        woodf_fallback: wf.fallback_used(),
                        lpb: lpb.survival(x),
                        lpb_fallback: lpb.fallback_used(),
                        monte_carlo: mc,
                        monte_carlo_z: mc.map(|m| (m - exact).abs() / se),
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let rows: Vec<NullAccuracyRow> = per_set.into_iter().flatten().collect();
    let max_err = |f: &dyn Fn(&NullAccuracyRow) -> Option<f64>| {
        rows.iter()
            .filter_map(|r| f(r).map(|v| (v - r.imhof).abs()))
            .fold(0.0, f64::max)
    };
    let fallback_sets: std::collections::BTreeSet<usize> =
        rows.iter().filter(|r| r.woodf_fallback).map(|r| r.set).collect();
    Ok(NullAccuracyReport {
        max_error_sw: max_err(&|r| Some(r.sw)),
        max_error_hbe: max_err(&|r| Some(r.hbe)),
        max_error_woodf: max_err(&|r| (!r.woodf_fallback).then_some(r.woodf)),
        max_error_lpb: max_err(&|r| Some(r.lpb)),
        woodf_fallbacks: fallback_sets.len(),
        max_monte_carlo_z: rows.iter().filter_map(|r| r.monte_carlo_z).reduce(f64::max),
        weights: weight_sets.to_vec(),
        rows,
    })
}
