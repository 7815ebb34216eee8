//! Distribution of `Q = sum_i lambda_i z_i^2` with `z_i` i.i.d. standard normal.
//!
//! Provides the cumulant/moment machinery, four moment-matching
//! approximations (Satterthwaite-Welch, Hall-Buckley-Eagleson, Wood F,
//! Lindsay-Pilla-Basak), Imhof's numerical inversion of the characteristic
//! function, and a Monte-Carlo estimator used as a ground-truth oracle.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::beta::checked_beta_reg;
use statrs::function::gamma::checked_gamma_ur;

use crate::error::{Error, Result};

/// Weights below this fraction of the largest weight are treated as zero.
pub const RELATIVE_WEIGHT_FLOOR: f64 = 1e-10;

/// Default number of LPB mixture components (capped by the number of weights).
pub const DEFAULT_LPB_COMPONENTS: usize = 4;

/// Nonnegative weights of a weighted sum of independent chi-square(1) variables.
///
/// Negative inputs and weights below `1e-10 * max(lambda)` are clamped to zero.
/// An all-zero weight vector is representable (it arises from degenerate
/// residuals) but every approximation rejects it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedChiSquareDist {
    weights: Vec<f64>,
}

impl WeightedChiSquareDist {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::invalid("weights must be finite"));
        }
        let max = weights.iter().copied().fold(0.0_f64, f64::max);
        let floor = RELATIVE_WEIGHT_FLOOR * max;
        let weights = weights.into_iter().map(|w| if w > floor { w } else { 0.0 }).collect();
        Ok(WeightedChiSquareDist { weights })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn positive_weights(&self) -> impl Iterator<Item = f64> + '_ {
        self.weights.iter().copied().filter(|&w| w > 0.0)
    }

    pub fn is_degenerate(&self) -> bool {
        self.positive_weights().next().is_none()
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !(c > 0.0) {
            return Err(Error::invalid("scale factor must be positive"));
        }
        Self::new(self.weights.iter().map(|w| w * c).collect())
    }

    fn require_positive(&self) -> Result<()> {
        if self.is_degenerate() {
            Err(Error::Degenerate("all weights are zero".into()))
        } else {
            Ok(())
        }
    }
}

/// `c_r = 2^(r-1) (r-1)! sum_i lambda_i^r` for `r = 1..=r_max`.
pub fn cumulants_of_weights(dist: &WeightedChiSquareDist, r_max: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(r_max);
    let mut factor = 1.0; // 2^(r-1) (r-1)!
    for r in 1..=r_max {
        if r > 1 {
            factor *= 2.0 * (r - 1) as f64;
        }
        let power_sum: f64 = dist.positive_weights().map(|w| w.powi(r as i32)).sum();
        out.push(factor * power_sum);
    }
    out
}

/// Raw moments from cumulants: `m_r = c_r + sum_{i=1}^{r-1} C(r-1, i-1) c_i m_{r-i}`.
pub fn moments_from_cumulants(cumulants: &[f64]) -> Vec<f64> {
    let mut m: Vec<f64> = Vec::with_capacity(cumulants.len());
    for r in 1..=cumulants.len() {
        let mut v = cumulants[r - 1];
        let mut binom = 1.0; // C(r-1, i-1) starting at i = 1
        for i in 1..r {
            v += binom * cumulants[i - 1] * m[r - i - 1];
            binom = binom * (r - i) as f64 / i as f64;
        }
        m.push(v);
    }
    m
}

/// Anything that exposes `P(Q > x)`.
pub trait Survival {
    fn survival(&self, x: f64) -> f64;

    fn cdf(&self, x: f64) -> f64 {
        1.0 - self.survival(x)
    }
}

fn gamma_survival(shape: f64, scale: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    checked_gamma_ur(shape, x / scale)
        .unwrap_or(if x / scale > shape { 0.0 } else { 1.0 })
        .clamp(0.0, 1.0)
}

fn chi_square_survival(df: f64, x: f64) -> f64 {
    gamma_survival(0.5 * df, 2.0, x)
}

/// Two-moment gamma fit (Satterthwaite-Welch).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaApprox {
    pub shape: f64,
    pub scale: f64,
}

impl Survival for GammaApprox {
    fn survival(&self, x: f64) -> f64 {
        gamma_survival(self.shape, self.scale, x)
    }
}

/// Gamma with shape `c1^2 / c2` and scale `c2 / c1`, which matches mean and variance.
pub fn satterthwaite_welch(dist: &WeightedChiSquareDist) -> Result<GammaApprox> {
    dist.require_positive()?;
    let c = cumulants_of_weights(dist, 2);
    Ok(GammaApprox {
        shape: c[0] * c[0] / c[1],
        scale: c[1] / c[0],
    })
}

/// Three-cumulant fit to a shifted and scaled chi-square with `nu = 8 c2^3 / c3^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HallBuckleyEagleson {
    pub mean: f64,
    pub variance: f64,
    pub nu: f64,
}

impl Survival for HallBuckleyEagleson {
    fn survival(&self, x: f64) -> f64 {
        let standardized = (x - self.mean) / self.variance.sqrt();
        let y = (2.0 * self.nu).sqrt() * standardized + self.nu;
        chi_square_survival(self.nu, y)
    }
}

pub fn hall_buckley_eagleson(dist: &WeightedChiSquareDist) -> Result<HallBuckleyEagleson> {
    dist.require_positive()?;
    let c = cumulants_of_weights(dist, 3);
    Ok(HallBuckleyEagleson {
        mean: c[0],
        variance: c[1],
        nu: 8.0 * c[1].powi(3) / (c[2] * c[2]),
    })
}

/// Three-moment fit of `beta * U / V`, `U ~ Gamma(alpha1)`, `V ~ Gamma(alpha2)`
/// (a scaled F distribution).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WoodFParams {
    pub alpha1: f64,
    pub alpha2: f64,
    pub beta: f64,
}

impl Survival for WoodFParams {
    fn survival(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 1.0;
        }
        // P(U/V > t) = I_{1/(1+t)}(alpha2, alpha1)
        let t = x / self.beta;
        checked_beta_reg(self.alpha2, self.alpha1, 1.0 / (1.0 + t))
            .unwrap_or(0.0)
            .clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum WoodF {
    Fit(WoodFParams),
    /// Moment system had no valid solution; HBE is used instead.
    Fallback(HallBuckleyEagleson),
}

impl WoodF {
    pub fn fallback_used(&self) -> bool {
        matches!(self, WoodF::Fallback(_))
    }
}

impl Survival for WoodF {
    fn survival(&self, x: f64) -> f64 {
        match self {
            WoodF::Fit(p) => p.survival(x),
            WoodF::Fallback(h) => h.survival(x),
        }
    }
}

pub fn wood_f(dist: &WeightedChiSquareDist) -> Result<WoodF> {
    let hbe = hall_buckley_eagleson(dist)?;
    let c = cumulants_of_weights(dist, 3);
    let (k1, k2, k3) = (c[0], c[1], c[2]);
    let r1 = 4.0 * k2 * k2 * k1 + k3 * (k2 - k1 * k1);
    let r2 = k3 * k1 - 2.0 * k2 * k2;
    // r2 vanishes exactly for a gamma target (equal weights); treat near-zero
    // as infeasible since alpha2 diverges.
    if !(r1 > 0.0 && r2 > 1e-8 * k2 * k2) {
        return Ok(WoodF::Fallback(hbe));
    }
    let alpha1 = 2.0 * k1 * (k3 * k1 + k1 * k1 * k2 - k2 * k2) / r1;
    let alpha2 = 3.0 + 2.0 * k2 * (k2 + k1 * k1) / r2;
    let beta = k1 * (alpha2 - 1.0) / alpha1;
    if !(alpha1 > 0.0 && alpha2 > 3.0 && beta > 0.0 && alpha1.is_finite() && alpha2.is_finite()) {
        return Ok(WoodF::Fallback(hbe));
    }
    Ok(WoodF::Fit(WoodFParams { alpha1, alpha2, beta }))
}

/// Finite mixture of gammas sharing a shape parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaMixture {
    pub shape: f64,
    pub scales: Vec<f64>,
    pub mixture_weights: Vec<f64>,
}

impl GammaMixture {
    /// Analytic raw moments `E[X^r]` for `r = 1..=r_max`.
    pub fn moments(&self, r_max: usize) -> Vec<f64> {
        (1..=r_max)
            .map(|r| {
                let rising: f64 = (0..r).map(|k| self.shape + k as f64).product();
                self.scales
                    .iter()
                    .zip(&self.mixture_weights)
                    .map(|(s, p)| p * s.powi(r as i32) * rising)
                    .sum()
            })
            .collect()
    }

    pub fn components(&self) -> usize {
        self.scales.len()
    }
}

impl Survival for GammaMixture {
    fn survival(&self, x: f64) -> f64 {
        self.scales
            .iter()
            .zip(&self.mixture_weights)
            .map(|(&s, &p)| p * gamma_survival(self.shape, s, x))
            .sum::<f64>()
            .clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Lpb {
    Mixture(GammaMixture),
    /// Moment matrices were too ill-conditioned; HBE is used instead.
    Fallback(HallBuckleyEagleson),
}

impl Lpb {
    pub fn fallback_used(&self) -> bool {
        matches!(self, Lpb::Fallback(_))
    }

    pub fn mixture(&self) -> Option<&GammaMixture> {
        match self {
            Lpb::Mixture(m) => Some(m),
            Lpb::Fallback(_) => None,
        }
    }
}

impl Survival for Lpb {
    fn survival(&self, x: f64) -> f64 {
        match self {
            Lpb::Mixture(m) => m.survival(x),
            Lpb::Fallback(h) => h.survival(x),
        }
    }
}

/// Lindsay-Pilla-Basak with `min(L, 4)` components.
pub fn lindsay_pilla_basak(dist: &WeightedChiSquareDist) -> Result<Lpb> {
    let l = dist.positive_weights().count();
    lindsay_pilla_basak_with(dist, l.clamp(1, DEFAULT_LPB_COMPONENTS))
}

/// Lindsay-Pilla-Basak mixture of at most `components` gammas matching the
/// first `2 * components` moments.
///
/// Every component is `Gamma(1/t, t * mu_i)`, so `E[X^r] = E_mu[mu^r] prod_{k<r} (1 + k t)`.
/// `t` is the first root of the Hankel determinant of the adjusted moments
/// `m_r / prod_{k<r}(1 + k t)`; the support points `mu_i` are the roots of
/// the associated orthogonal polynomial and the weights solve a Vandermonde
/// system. If the Hankel determinant never changes sign below the previous
/// level's root, the target is already represented exactly with fewer
/// components and that smaller mixture is returned.
pub fn lindsay_pilla_basak_with(dist: &WeightedChiSquareDist, components: usize) -> Result<Lpb> {
    let hbe = hall_buckley_eagleson(dist)?;
    if components == 0 {
        return Err(Error::invalid("LPB needs at least one component"));
    }
    let cumulants = cumulants_of_weights(dist, 2 * components);
    let mut moments = vec![1.0];
    moments.extend(moments_from_cumulants(&cumulants));

    let mut t = moments[2] / (moments[1] * moments[1]) - 1.0;
    if !(t > 0.0) {
        return Ok(Lpb::Fallback(hbe));
    }
    let mut used = 1;
    for level in 2..=components {
        match first_hankel_root(&moments, level, t) {
            Some(root) => {
                t = root;
                used = level;
            }
            None => break,
        }
    }

    match mixture_at(&moments, used, t) {
        Some(mix) if moments_match(&mix, &moments, used) => Ok(Lpb::Mixture(mix)),
        _ => Ok(Lpb::Fallback(hbe)),
    }
}

fn adjusted_moments(moments: &[f64], t: f64, count: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(count);
    let mut denom = 1.0;
    for (r, m) in moments.iter().take(count).enumerate() {
        if r > 0 {
            denom *= 1.0 + (r - 1) as f64 * t;
        }
        out.push(m / denom);
    }
    out
}

fn hankel(adjusted: &[f64], size: usize) -> DMatrix<f64> {
    DMatrix::from_fn(size, size, |i, j| adjusted[i + j])
}

/// Determinant of the diagonally normalized Hankel matrix of order `level`,
/// which has the same sign as the raw determinant but a usable scale.
fn normalized_hankel_det(moments: &[f64], level: usize, t: f64) -> f64 {
    let adjusted = adjusted_moments(moments, t, 2 * level + 1);
    let mut h = hankel(&adjusted, level + 1);
    let d: Vec<f64> = (0..=level).map(|i| h[(i, i)].sqrt()).collect();
    for i in 0..=level {
        for j in 0..=level {
            h[(i, j)] /= d[i] * d[j];
        }
    }
    h.determinant()
}

fn first_hankel_root(moments: &[f64], level: usize, upper: f64) -> Option<f64> {
    const GRID: usize = 400;
    // Stay clear of `upper`, where the determinant vanishes identically.
    let hi = upper * (1.0 - 1e-6);
    let mut prev_t = 0.0;
    if !(normalized_hankel_det(moments, level, 0.0) > 0.0) {
        return None;
    }
    for step in 1..=GRID {
        let t = hi * step as f64 / GRID as f64;
        let v = normalized_hankel_det(moments, level, t);
        if v <= 0.0 {
            let (mut lo, mut hi) = (prev_t, t);
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                if normalized_hankel_det(moments, level, mid) > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo <= 1e-15 * hi.max(1e-300) {
                    break;
                }
            }
            return Some(0.5 * (lo + hi));
        }
        prev_t = t;
    }
    None
}

fn mixture_at(moments: &[f64], n: usize, t: f64) -> Option<GammaMixture> {
    let adjusted = adjusted_moments(moments, t, 2 * n + 1);
    let support = if n == 1 {
        vec![adjusted[1]]
    } else {
        support_points(&adjusted, n)?
    };
    // Vandermonde system: sum_i pi_i mu_i^r = adjusted_r, r = 0..n-1
    let v = DMatrix::from_fn(n, n, |r, i| support[i].powi(r as i32));
    let rhs = DVector::from_fn(n, |r, _| adjusted[r]);
    let pi = v.lu().solve(&rhs)?;
    if pi.iter().any(|&p| !(p > -1e-10) || !p.is_finite()) {
        return None;
    }
    let total: f64 = pi.iter().map(|p| p.max(0.0)).sum();
    let weights = pi.iter().map(|p| p.max(0.0) / total).collect();
    Some(GammaMixture {
        shape: 1.0 / t,
        scales: support.iter().map(|mu| mu * t).collect(),
        mixture_weights: weights,
    })
}

/// Roots of `det [H_{0..n-1, 0..n}; 1, mu, ..., mu^n]`.
fn support_points(adjusted: &[f64], n: usize) -> Option<Vec<f64>> {
    let top = DMatrix::from_fn(n, n + 1, |i, j| adjusted[i + j]);
    // Cofactor expansion along the last row gives the coefficient of mu^j.
    let mut coeffs = Vec::with_capacity(n + 1);
    for j in 0..=n {
        let minor = top.clone().remove_column(j);
        let sign = if (n + j).is_multiple_of(2) { 1.0 } else { -1.0 };
        coeffs.push(sign * minor.determinant());
    }
    let lead = coeffs[n];
    if lead == 0.0 || !lead.is_finite() {
        return None;
    }
    // Companion matrix of the monic polynomial.
    let companion = DMatrix::from_fn(n, n, |i, j| {
        if i == 0 {
            -coeffs[n - 1 - j] / lead
        } else if i == j + 1 {
            1.0
        } else {
            0.0
        }
    });
    let eig = companion.complex_eigenvalues();
    let mut roots = Vec::with_capacity(n);
    for z in eig.iter() {
        if z.im.abs() > 1e-8 * z.re.abs().max(1.0) || !(z.re > 0.0) {
            return None;
        }
        roots.push(z.re);
    }
    roots.sort_by(f64::total_cmp);
    if roots.windows(2).any(|w| (w[1] - w[0]) <= 1e-12 * w[1]) {
        return None;
    }
    Some(roots)
}

fn moments_match(mix: &GammaMixture, moments: &[f64], n: usize) -> bool {
    mix.moments(2 * n)
        .iter()
        .zip(&moments[1..])
        .all(|(a, b)| ((a - b) / b).abs() <= 1e-6)
}

/// Imhof's inversion result for `P(Q > x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImhofEstimate {
    pub survival: f64,
    /// Upper bound on the absolute error (truncation plus quadrature).
    pub error_bound: f64,
    pub truncation: f64,
}

/// `P(Q > x)` to absolute accuracy `tol` by numerical integration of Imhof's
/// integrand `sin(theta(u)) / (u rho(u))`.
///
/// The integration range `[0, U]` is chosen so that a bound on the neglected
/// tail is below `tol / 2`. Two tail bounds are used, whichever is smaller:
/// Imhof's absolute bound `1 / (pi k U^k prod sqrt(lambda))` with `k = L/2`,
/// and the oscillation bound `2 / (pi U rho(U) |theta'(U)|)`, valid once
/// `theta'` keeps its sign on `[U, inf)`. The remaining `tol / 2` is the
/// quadrature budget.
pub fn imhof_survival(dist: &WeightedChiSquareDist, x: f64, tol: f64) -> Result<f64> {
    imhof_estimate(dist, x, tol).map(|e| e.survival)
}

pub fn imhof_estimate(dist: &WeightedChiSquareDist, x: f64, tol: f64) -> Result<ImhofEstimate> {
    if !x.is_finite() {
        return Err(Error::invalid("x must be finite"));
    }
    if !(tol > 0.0 && tol < 0.1) {
        return Err(Error::invalid("tol must lie in (0, 0.1)"));
    }
    dist.require_positive()?;
    if x <= 0.0 {
        return Ok(ImhofEstimate {
            survival: 1.0,
            error_bound: 0.0,
            truncation: 0.0,
        });
    }
    let lambdas: Vec<f64> = dist.positive_weights().collect();
    let integrand = ImhofIntegrand { lambdas: &lambdas, x };

    let upper = integrand.truncation_point(tol / 2.0)?;
    let budget = PI * tol / 2.0;

    // Panels about a quarter oscillation wide (theta' -> -x/2 at large u).
    let sum_l: f64 = lambdas.iter().sum();
    let rate = 0.5 * (x + sum_l);
    let width = (0.5 * PI / rate).min(upper);
    let panels = (upper / width).ceil() as usize;
    let per_panel = budget / panels as f64;
    let mut total = 0.0;
    let mut err = 0.0;
    for k in 0..panels {
        let a = k as f64 * width;
        let b = ((k + 1) as f64 * width).min(upper);
        let (v, e) = adaptive_gauss_kronrod(&|u| integrand.eval(u), a, b, per_panel, 30);
        total += v;
        err += e;
    }
    let survival = 0.5 + total / PI;
    let bound = err / PI + tol / 2.0;
    if err > budget {
        return Err(Error::Accuracy {
            estimate: survival.clamp(0.0, 1.0),
            error_bound: bound,
            requested: tol,
        });
    }
    Ok(ImhofEstimate {
        survival: survival.clamp(0.0, 1.0),
        error_bound: bound,
        truncation: upper,
    })
}

struct ImhofIntegrand<'a> {
    lambdas: &'a [f64],
    x: f64,
}

impl ImhofIntegrand<'_> {
    fn theta(&self, u: f64) -> f64 {
        0.5 * self.lambdas.iter().map(|l| (l * u).atan()).sum::<f64>() - 0.5 * self.x * u
    }

    fn theta_prime(&self, u: f64) -> f64 {
        0.5 * self.lambdas.iter().map(|l| l / (1.0 + l * l * u * u)).sum::<f64>() - 0.5 * self.x
    }

    fn rho(&self, u: f64) -> f64 {
        (0.25 * self.lambdas.iter().map(|l| (l * l * u * u).ln_1p()).sum::<f64>()).exp()
    }

    fn eval(&self, u: f64) -> f64 {
        if u == 0.0 {
            return self.theta_prime(0.0);
        }
        self.theta(u).sin() / (u * self.rho(u))
    }

    fn imhof_bound(&self, u: f64) -> f64 {
        let k = 0.5 * self.lambdas.len() as f64;
        let log_prod: f64 = self.lambdas.iter().map(|l| 0.5 * l.ln()).sum();
        1.0 / (PI * k * (k * u.ln() + log_prod).exp())
    }

    fn oscillation_bound(&self, u: f64) -> f64 {
        let tp = self.theta_prime(u);
        if tp >= 0.0 {
            return f64::INFINITY;
        }
        2.0 / (PI * u * self.rho(u) * tp.abs())
    }

    fn truncation_point(&self, target: f64) -> Result<f64> {
        let mut u = 1.0;
        for _ in 0..200 {
            let bound = self.imhof_bound(u).min(self.oscillation_bound(u));
            if bound < target {
                return Ok(u);
            }
            u *= 1.5;
        }
        Err(Error::Numerical("no truncation point meets the tail bound".into()))
    }
}

// 15-point Kronrod nodes and weights with embedded 7-point Gauss weights.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gauss_kronrod_15(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let pair = f(center - dx) + f(center + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

/// Recursive bisection until the Gauss/Kronrod difference is within `tol`.
/// Returns the integral and the accumulated error estimate.
fn adaptive_gauss_kronrod(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> (f64, f64) {
    let (v, e) = gauss_kronrod_15(f, a, b);
    if e <= tol || depth == 0 {
        return (v, e);
    }
    let mid = 0.5 * (a + b);
    let (v1, e1) = adaptive_gauss_kronrod(f, a, mid, 0.5 * tol, depth - 1);
    let (v2, e2) = adaptive_gauss_kronrod(f, mid, b, 0.5 * tol, depth - 1);
    (v1 + v2, e1 + e2)
}

/// Imhof survival as a [`Survival`] object, returning the best estimate if
/// the requested accuracy cannot be met.
#[derive(Debug, Clone, PartialEq)]
pub struct Imhof {
    dist: WeightedChiSquareDist,
    tol: f64,
}

impl Imhof {
    pub fn new(dist: &WeightedChiSquareDist, tol: f64) -> Result<Self> {
        dist.require_positive()?;
        if !(tol > 0.0 && tol < 0.1) {
            return Err(Error::invalid("tol must lie in (0, 0.1)"));
        }
        Ok(Imhof {
            dist: dist.clone(),
            tol,
        })
    }
}

impl Survival for Imhof {
    fn survival(&self, x: f64) -> f64 {
        match imhof_survival(&self.dist, x, self.tol) {
            Ok(p) => p,
            Err(Error::Accuracy { estimate, .. }) => estimate,
            Err(_) => f64::NAN,
        }
    }
}

/// Monte-Carlo estimate of `P(Q > x)` from `draws` simulated sums.
pub fn empirical_survival_oracle<R: Rng + ?Sized>(
    dist: &WeightedChiSquareDist,
    x: f64,
    draws: usize,
    rng: &mut R,
) -> Result<f64> {
    if draws < 10_000 {
        return Err(Error::invalid("the Monte-Carlo oracle needs at least 10^4 draws"));
    }
    let weights = dist.weights();
    let mut exceed = 0usize;
    for _ in 0..draws {
        let q: f64 = weights
            .iter()
            .map(|w| {
                let z: f64 = rng.sample(StandardNormal);
                w * z * z
            })
            .sum();
        if q > x {
            exceed += 1;
        }
    }
    Ok(exceed as f64 / draws as f64)
}

/// Smallest `x` with `survival(x) <= p`, by bracketing and bisection.
/// `p` must lie in (0, 1).
pub fn survival_quantile(sf: &dyn Fn(f64) -> f64, p: f64, x_tol: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::invalid("probability must lie in (0, 1)"));
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    let mut guard = 0;
    while sf(hi) > p {
        lo = hi;
        hi *= 2.0;
        guard += 1;
        if guard > 200 {
            return Err(Error::Numerical("quantile bracket not found".into()));
        }
    }
    while hi - lo > x_tol * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if sf(mid) > p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dist(w: &[f64]) -> WeightedChiSquareDist {
        WeightedChiSquareDist::new(w.to_vec()).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    #[test]
    fn clamps_small_and_negative_weights() {
        let d = dist(&[1.0, -0.5, 1e-12, 0.3]);
        assert_eq!(d.weights(), &[1.0, 0.0, 0.0, 0.3]);
        assert!(dist(&[0.0, -1.0]).is_degenerate());
        assert!(WeightedChiSquareDist::new(vec![f64::NAN]).is_err());
    }

    #[test]
    fn cumulant_examples() {
        assert_eq!(cumulants_of_weights(&dist(&[1.0, 1.0]), 3), vec![2.0, 4.0, 16.0]);
        assert_eq!(cumulants_of_weights(&dist(&[1.0]), 3), vec![1.0, 2.0, 8.0]);
        assert_eq!(cumulants_of_weights(&dist(&[0.5]), 2), vec![0.5, 0.5]);
    }

    #[test]
    fn moment_examples() {
        assert_eq!(moments_from_cumulants(&[1.0, 2.0]), vec![1.0, 3.0]);
        assert_eq!(moments_from_cumulants(&[2.0, 4.0]), vec![2.0, 8.0]);
        assert_eq!(moments_from_cumulants(&[1.0, 2.0, 8.0]), vec![1.0, 3.0, 15.0]);
        // chi2_1 fourth moment is 105; c4 = 48
        assert_eq!(moments_from_cumulants(&[1.0, 2.0, 8.0, 48.0])[3], 105.0);
    }

    #[test]
    fn satterthwaite_welch_is_exact_on_chi2_1() {
        let g = satterthwaite_welch(&dist(&[1.0])).unwrap();
        close(g.shape, 0.5, 1e-15);
        close(g.scale, 2.0, 1e-15);
        let g = satterthwaite_welch(&dist(&[3.5])).unwrap();
        close(g.shape, 0.5, 1e-15);
        close(g.scale, 7.0, 1e-14);
        assert!(matches!(satterthwaite_welch(&dist(&[0.0])), Err(Error::Degenerate(_))));
    }

    #[test]
    fn satterthwaite_welch_vs_imhof() {
        let d = dist(&[1.0, 2.0, 3.0]);
        let sw = satterthwaite_welch(&d).unwrap().survival(6.0);
        close(sw, imhof_survival(&d, 6.0, 1e-6).unwrap(), 0.02);
    }

    #[test]
    fn hbe_equal_weights_is_chi2() {
        let h = hall_buckley_eagleson(&dist(&[1.0, 1.0, 1.0])).unwrap();
        close(h.nu, 3.0, 1e-12);
        for x in [0.5, 1.0, 3.0, 7.8] {
            close(h.survival(x), chi_square_survival(3.0, x), 1e-12);
        }
        let h = hall_buckley_eagleson(&dist(&[1.0])).unwrap();
        close(h.survival(3.841), 0.05, 0.005);
    }

    #[test]
    fn hbe_vs_imhof() {
        let d = dist(&[0.1, 0.9]);
        let h = hall_buckley_eagleson(&d).unwrap();
        for x in [1.0, 2.0, 4.0, 8.0] {
            close(h.survival(x), imhof_survival(&d, x, 1e-6).unwrap(), 0.01);
        }
        // Near the mode the three-moment fit is off by 0.0114 (checked
        // against Monte-Carlo with 4e6 draws).
        let gap = h.survival(0.5) - imhof_survival(&d, 0.5, 1e-6).unwrap();
        close(gap, -0.011437, 2e-4);
    }

    #[test]
    fn wood_f_matches_three_moments() {
        let d = dist(&[0.1, 0.9, 0.4]);
        let WoodF::Fit(p) = wood_f(&d).unwrap() else {
            panic!("expected a fit")
        };
        let m = moments_from_cumulants(&cumulants_of_weights(&d, 3));
        let (a1, a2, b) = (p.alpha1, p.alpha2, p.beta);
        let fm1 = b * a1 / (a2 - 1.0);
        let fm2 = b * b * a1 * (a1 + 1.0) / ((a2 - 1.0) * (a2 - 2.0));
        let fm3 = b.powi(3) * a1 * (a1 + 1.0) * (a1 + 2.0) / ((a2 - 1.0) * (a2 - 2.0) * (a2 - 3.0));
        close(fm1 / m[0], 1.0, 1e-10);
        close(fm2 / m[1], 1.0, 1e-10);
        close(fm3 / m[2], 1.0, 1e-10);
    }

    #[test]
    fn wood_f_examples() {
        let w = wood_f(&dist(&[1.0; 4])).unwrap();
        for x in 1..=10 {
            close(w.survival(x as f64), chi_square_survival(4.0, x as f64), 0.01);
        }
        let w = wood_f(&dist(&[1.0])).unwrap();
        close(w.survival(3.841), 0.05, 0.01);

        let d = dist(&[5.0, 0.01]);
        let w = wood_f(&d).unwrap();
        if !w.fallback_used() {
            for x in [1.0, 5.0, 10.0, 20.0] {
                close(w.survival(x), imhof_survival(&d, x, 1e-6).unwrap(), 0.02);
            }
        }
    }

    #[test]
    fn lpb_single_component_is_satterthwaite_welch() {
        let d = dist(&[0.3, 0.9, 1.4]);
        let lpb = lindsay_pilla_basak_with(&d, 1).unwrap();
        let mix = lpb.mixture().expect("mixture");
        let sw = satterthwaite_welch(&d).unwrap();
        assert_eq!(mix.mixture_weights, vec![1.0]);
        close(mix.shape, sw.shape, 1e-12);
        close(mix.scales[0], sw.scale, 1e-12);
    }

    #[test]
    fn lpb_chi2_2() {
        let lpb = lindsay_pilla_basak(&dist(&[1.0, 1.0])).unwrap();
        for x in [1.0, 2.0, 4.0, 8.0] {
            close(lpb.cdf(x), 1.0 - (-x / 2.0).exp(), 5e-3);
        }
    }

    #[test]
    fn lpb_moment_fidelity() {
        let d = dist(&[0.9, 0.5, 0.33, 0.12, 0.05, 0.7]);
        let lpb = lindsay_pilla_basak(&d).unwrap();
        let mix = lpb.mixture().expect("no fallback");
        assert_eq!(mix.components(), 4);
        let target = moments_from_cumulants(&cumulants_of_weights(&d, 8));
        for (a, b) in mix.moments(8).iter().zip(&target) {
            assert!(((a - b) / b).abs() < 1e-6, "{a} vs {b}");
        }
        let s: f64 = mix.mixture_weights.iter().sum();
        close(s, 1.0, 1e-10);
    }

    #[test]
    fn imhof_examples() {
        close(
            imhof_survival(&dist(&[1.0, 1.0]), 2.0, 1e-6).unwrap(),
            (-1.0f64).exp(),
            1e-6,
        );
        close(imhof_survival(&dist(&[1.0]), 3.841459, 1e-6).unwrap(), 0.05, 1e-5);
        close(
            imhof_survival(&dist(&[2.0, 2.0]), 4.0, 1e-6).unwrap(),
            imhof_survival(&dist(&[1.0, 1.0]), 2.0, 1e-6).unwrap(),
            2e-6,
        );
        assert_eq!(imhof_survival(&dist(&[1.0]), 0.0, 1e-4).unwrap(), 1.0);
        assert!(imhof_survival(&dist(&[1.0]), 1.0, 0.5).is_err());
        assert!(imhof_survival(&dist(&[1.0]), f64::INFINITY, 1e-3).is_err());
    }

    #[test]
    fn imhof_matches_closed_form_chi2_grid() {
        for k in [1usize, 2, 3, 6] {
            let d = dist(&vec![1.0; k]);
            for x in [0.1, 0.7, 2.0, 5.5, 12.0] {
                close(
                    imhof_survival(&d, x, 1e-7).unwrap(),
                    chi_square_survival(k as f64, x),
                    1e-6,
                );
            }
        }
    }

    #[test]
    fn monte_carlo_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        assert_eq!(
            empirical_survival_oracle(&dist(&[1.0]), 0.0, 10_000, &mut rng).unwrap(),
            1.0
        );
        assert!(empirical_survival_oracle(&dist(&[1.0]), 0.0, 100, &mut rng).is_err());
        let d = dist(&[0.3, 1.7]);
        let mc = empirical_survival_oracle(&d, 3.0, 200_000, &mut rng).unwrap();
        let exact = imhof_survival(&d, 3.0, 1e-6).unwrap();
        let se = (exact * (1.0 - exact) / 200_000.0).sqrt();
        assert!((mc - exact).abs() < 3.0 * se, "{mc} vs {exact}");
    }

    #[test]
    fn quantile_inverts_survival() {
        let x = survival_quantile(&|x| chi_square_survival(1.0, x), 0.05, 1e-12).unwrap();
        close(x, 3.841458820694124, 1e-8);
    }
}
