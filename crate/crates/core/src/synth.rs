//! Simulation designs: post non-linear null and alternative models, random
//! linear-Gaussian DAGs with optional non-linear distortion, latent and
//! selection mechanisms, and an exact discrete counterexample where the
//! mixture of conditional joints equals the mixture of conditional products
//! although every conditional slice is dependent.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::DataMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NonlinearityId {
    Identity,
    Square,
    Cube,
    Tanh,
    /// `exp(-|u|)`
    NegExp,
}

impl NonlinearityId {
    pub const ALL: [NonlinearityId; 5] = [
        NonlinearityId::Identity,
        NonlinearityId::Square,
        NonlinearityId::Cube,
        NonlinearityId::Tanh,
        NonlinearityId::NegExp,
    ];

    pub fn sample<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self::ALL[rng.random_range(0..Self::ALL.len())]
    }

    pub fn apply(self, u: f64) -> f64 {
        match self {
            NonlinearityId::Identity => u,
            NonlinearityId::Square => u * u,
            NonlinearityId::Cube => u * u * u,
            NonlinearityId::Tanh => u.tanh(),
            NonlinearityId::NegExp => (-u.abs()).exp(),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            NonlinearityId::Identity => "identity",
            NonlinearityId::Square => "square",
            NonlinearityId::Cube => "cube",
            NonlinearityId::Tanh => "tanh",
            NonlinearityId::NegExp => "negexp",
        }
    }
}

impl fmt::Display for NonlinearityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for NonlinearityId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|g| g.label() == s)
            .ok_or_else(|| Error::invalid(format!("unknown nonlinearity '{s}'")))
    }
}

/// One draw of `(x, y, z)` from a post non-linear model.
#[derive(Debug, Clone, PartialEq)]
pub struct PnlSample {
    pub x: DataMatrix,
    pub y: DataMatrix,
    pub z: DataMatrix,
    pub g1: NonlinearityId,
    pub g2: NonlinearityId,
}

impl PnlSample {
    /// All columns side by side: `x, y, z1..zk`.
    pub fn to_data(&self) -> Result<DataMatrix> {
        self.x.hstack(&self.y)?.hstack(&self.z)
    }
}

fn normal_matrix<R: Rng + ?Sized>(n: usize, p: usize, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(n, p, |_, _| rng.sample(StandardNormal))
}

fn check_pnl(n: usize, k: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::invalid("need at least 2 samples"));
    }
    if k < 1 {
        return Err(Error::invalid("conditioning size must be at least 1"));
    }
    Ok(())
}

fn pnl_parts(x: Vec<f64>, y: Vec<f64>, z: DMatrix<f64>, g1: NonlinearityId, g2: NonlinearityId) -> Result<PnlSample> {
    Ok(PnlSample {
        x: DataMatrix::from_columns(&[x], &["X"])?,
        y: DataMatrix::from_columns(&[y], &["Y"])?,
        z: DataMatrix::with_prefix(z, "Z")?,
        g1,
        g2,
    })
}

/// `X = g1(mean(Z) + e1)`, `Y = g2(mean(Z) + e2)`, so `X` and `Y` are
/// independent given `Z`.
pub fn gen_pnl_null<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Result<PnlSample> {
    let g1 = NonlinearityId::sample(rng);
    let g2 = NonlinearityId::sample(rng);
    gen_pnl_null_with(n, k, g1, g2, rng)
}

pub fn gen_pnl_null_with<R: Rng + ?Sized>(
    n: usize,
    k: usize,
    g1: NonlinearityId,
    g2: NonlinearityId,
    rng: &mut R,
) -> Result<PnlSample> {
    check_pnl(n, k)?;
    let z = normal_matrix(n, k, rng);
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let common = z.row(i).sum() / k as f64;
        let e1: f64 = rng.sample(StandardNormal);
        let e2: f64 = rng.sample(StandardNormal);
        x.push(g1.apply(common + e1));
        y.push(g2.apply(common + e2));
    }
    pnl_parts(x, y, z, g1, g2)
}

/// Standard deviation of the hidden common noise in the alternative model
/// (variance 1/16).
pub const ALT_SHARED_NOISE_SD: f64 = 0.25;

/// `X = g1(eb + e1)`, `Y = g2(eb + e2)` with hidden `eb ~ N(0, 1/16)` and
/// `Z ~ N(0, I_k)` unrelated to both, so `X` and `Y` stay dependent given `Z`.
pub fn gen_pnl_alt<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Result<PnlSample> {
    let g1 = NonlinearityId::sample(rng);
    let g2 = NonlinearityId::sample(rng);
    gen_pnl_alt_with(n, k, g1, g2, rng)
}

pub fn gen_pnl_alt_with<R: Rng + ?Sized>(
    n: usize,
    k: usize,
    g1: NonlinearityId,
    g2: NonlinearityId,
    rng: &mut R,
) -> Result<PnlSample> {
    check_pnl(n, k)?;
    let shared = Normal::new(0.0, ALT_SHARED_NOISE_SD).expect("valid sd");
    let z = normal_matrix(n, k, rng);
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let eb = shared.sample(rng);
        let e1: f64 = rng.sample(StandardNormal);
        let e2: f64 = rng.sample(StandardNormal);
        x.push(g1.apply(eb + e1));
        y.push(g2.apply(eb + e2));
    }
    pnl_parts(x, y, z, g1, g2)
}

/// A weighted DAG. `weights[(i, r)]` is the coefficient of parent `r` in the
/// structural equation of vertex `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dag {
    num_vertices: usize,
    weights: DMatrix<f64>,
    vertex_names: Vec<String>,
}

impl Dag {
    /// Validates shape and acyclicity.
    pub fn new(weights: DMatrix<f64>, vertex_names: Vec<String>) -> Result<Self> {
        let v = weights.nrows();
        if weights.ncols() != v {
            return Err(Error::invalid("weight matrix must be square"));
        }
        if vertex_names.len() != v {
            return Err(Error::invalid("one name per vertex required"));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::invalid("non-finite edge weight"));
        }
        let dag = Dag {
            num_vertices: v,
            weights,
            vertex_names,
        };
        if (0..v).any(|i| dag.weights[(i, i)] != 0.0) {
            return Err(Error::invalid("self-loop"));
        }
        if dag.topological_order().is_none() {
            return Err(Error::invalid("graph contains a directed cycle"));
        }
        Ok(dag)
    }

    /// Unweighted DAG (all coefficients 1) from `(parent, child)` pairs.
    pub fn from_edges(v: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut w = DMatrix::zeros(v, v);
        for &(from, to) in edges {
            if from >= v || to >= v {
                return Err(Error::invalid(format!("edge ({from}, {to}) out of range")));
            }
            w[(to, from)] = 1.0;
        }
        Self::new(w, default_names(v))
    }

    pub fn num_vertices(&self) -> usize {
        self.num_vertices
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn vertex_names(&self) -> &[String] {
        &self.vertex_names
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.weights[(to, from)] != 0.0
    }

    pub fn parents(&self, v: usize) -> Vec<usize> {
        (0..self.num_vertices).filter(|&r| self.has_edge(r, v)).collect()
    }

    pub fn children(&self, v: usize) -> Vec<usize> {
        (0..self.num_vertices).filter(|&c| self.has_edge(v, c)).collect()
    }

    /// `(parent, child)` pairs.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for child in 0..self.num_vertices {
            for parent in 0..self.num_vertices {
                if self.has_edge(parent, child) {
                    out.push((parent, child));
                }
            }
        }
        out
    }

    pub fn topological_order(&self) -> Option<Vec<usize>> {
        let v = self.num_vertices;
        let mut indegree: Vec<usize> = (0..v).map(|i| self.parents(i).len()).collect();
        let mut ready: Vec<usize> = (0..v).rev().filter(|&i| indegree[i] == 0).collect();
        let mut order = Vec::with_capacity(v);
        while let Some(u) = ready.pop() {
            order.push(u);
            for c in self.children(u).into_iter().rev() {
                indegree[c] -= 1;
                if indegree[c] == 0 {
                    ready.push(c);
                }
            }
        }
        (order.len() == v).then_some(order)
    }

    /// `(I - A)^-1 (I - A)^-T`, the covariance of the linear Gaussian model.
    pub fn implied_covariance(&self) -> Result<DMatrix<f64>> {
        let v = self.num_vertices;
        let inv = (DMatrix::identity(v, v) - &self.weights)
            .try_inverse()
            .ok_or_else(|| Error::Numerical("I - A is singular".into()))?;
        Ok(&inv * inv.transpose())
    }
}

pub fn default_names(v: usize) -> Vec<String> {
    (1..=v).map(|i| format!("X{i}")).collect()
}

/// Random DAG over `v` vertices: each lower-triangle cell is an edge with
/// probability `expected_neighbors / (v - 1)`, with coefficient drawn from
/// `Uniform([-1, -0.1] U [0.1, 1])`.
pub fn gen_random_dag<R: Rng + ?Sized>(v: usize, expected_neighbors: f64, rng: &mut R) -> Result<Dag> {
    if v < 2 {
        return Err(Error::invalid("need at least 2 vertices"));
    }
    if !(expected_neighbors > 0.0 && expected_neighbors <= (v - 1) as f64) {
        return Err(Error::invalid(format!(
            "expected neighborhood size must lie in (0, {}]",
            v - 1
        )));
    }
    let prob = expected_neighbors / (v - 1) as f64;
    let mut w = DMatrix::zeros(v, v);
    for i in 1..v {
        for r in 0..i {
            if rng.random_bool(prob) {
                let magnitude = rng.random_range(0.1..=1.0);
                w[(i, r)] = if rng.random_bool(0.5) { magnitude } else { -magnitude };
            }
        }
    }
    Dag::new(w, default_names(v))
}

/// Samples `n` rows of the linear structural model, optionally passing each
/// column through an independently drawn nonlinearity afterwards.
pub fn simulate_dag_data<R: Rng + ?Sized>(dag: &Dag, n: usize, nonlinear: bool, rng: &mut R) -> Result<DataMatrix> {
    let linear = simulate_linear(dag, n, rng)?;
    let tags: Vec<NonlinearityId> = if nonlinear {
        (0..dag.num_vertices()).map(|_| NonlinearityId::sample(rng)).collect()
    } else {
        vec![NonlinearityId::Identity; dag.num_vertices()]
    };
    transform_columns(linear, &tags, dag)
}

/// As [`simulate_dag_data`] with the per-column nonlinearities given.
pub fn simulate_dag_data_with<R: Rng + ?Sized>(
    dag: &Dag,
    n: usize,
    tags: &[NonlinearityId],
    rng: &mut R,
) -> Result<DataMatrix> {
    if tags.len() != dag.num_vertices() {
        return Err(Error::invalid("one nonlinearity per vertex required"));
    }
    let linear = simulate_linear(dag, n, rng)?;
    transform_columns(linear, tags, dag)
}

fn simulate_linear<R: Rng + ?Sized>(dag: &Dag, n: usize, rng: &mut R) -> Result<DMatrix<f64>> {
    if n < 1 {
        return Err(Error::invalid("need at least 1 sample"));
    }
    let v = dag.num_vertices();
    let mut x = normal_matrix(n, v, rng);
    let order = dag.topological_order().expect("validated acyclic");
    for &i in &order {
        for r in dag.parents(i) {
            let w = dag.weights()[(i, r)];
            for row in 0..n {
                x[(row, i)] += w * x[(row, r)];
            }
        }
    }
    Ok(x)
}

fn transform_columns(mut x: DMatrix<f64>, tags: &[NonlinearityId], dag: &Dag) -> Result<DataMatrix> {
    for (j, g) in tags.iter().enumerate() {
        if *g != NonlinearityId::Identity {
            x.column_mut(j).apply(|v| *v = g.apply(*v));
        }
    }
    DataMatrix::new(x, dag.vertex_names().to_vec())
}

/// What [`apply_latent_and_selection`] did.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SelectionMetadata {
    /// Vertices removed from the output.
    pub latents: Vec<usize>,
    pub latent_names: Vec<String>,
    /// `(vertex, q)`: rows below the `q`-quantile of the vertex were dropped.
    pub selection: Vec<(usize, f64)>,
    pub rows_before: usize,
    pub rows_after: usize,
    /// Vertex index of each output column.
    pub kept_vertices: Vec<usize>,
}

/// Chooses 0-3 latent common causes (vertices with at least two children)
/// and, among the remaining vertices, 0-3 colliders (at least two parents)
/// as selection variables; applies truncation for each selection variable
/// with `q ~ Uniform(0.1, 0.5)` and drops the latent columns.
pub fn apply_latent_and_selection<R: Rng + ?Sized>(
    data: &DataMatrix,
    dag: &Dag,
    rng: &mut R,
) -> Result<(DataMatrix, SelectionMetadata)> {
    apply_latent_and_selection_with(data, dag, true, true, rng)
}

/// [`apply_latent_and_selection`] with either step switched off. A disabled
/// step draws nothing from `rng`.
pub fn apply_latent_and_selection_with<R: Rng + ?Sized>(
    data: &DataMatrix,
    dag: &Dag,
    latents: bool,
    selection: bool,
    rng: &mut R,
) -> Result<(DataMatrix, SelectionMetadata)> {
    if data.p() != dag.num_vertices() {
        return Err(Error::invalid("data columns must match DAG vertices"));
    }
    let v = dag.num_vertices();
    let mut hidden = Vec::new();
    if latents {
        let eligible: Vec<usize> = (0..v).filter(|&i| dag.children(i).len() >= 2).collect();
        let want = rng.random_range(0..=3usize);
        hidden = choose(&eligible, want, rng);
        hidden.sort_unstable();
    }
    let mut chosen = Vec::new();
    if selection {
        let eligible: Vec<usize> = (0..v)
            .filter(|i| !hidden.contains(i) && dag.parents(*i).len() >= 2)
            .collect();
        let want = rng.random_range(0..=3usize);
        chosen = choose(&eligible, want, rng);
        chosen.sort_unstable();
    }
    let truncation: Vec<(usize, f64)> = chosen.into_iter().map(|s| (s, rng.random_range(0.1..0.5))).collect();
    apply_selection_choices(data, &hidden, &truncation)
}

fn choose<R: Rng + ?Sized>(pool: &[usize], want: usize, rng: &mut R) -> Vec<usize> {
    let k = want.min(pool.len());
    sample_indices(rng, pool.len(), k)
        .into_iter()
        .map(|i| pool[i])
        .collect()
}

/// Deterministic core of [`apply_latent_and_selection`]: truncates
/// sequentially for each `(vertex, q)` by removing the `floor(q * m)` rows
/// with the smallest values (`m` the current row count), then drops the
/// latent columns. Row order is preserved.
pub fn apply_selection_choices(
    data: &DataMatrix,
    latents: &[usize],
    selection: &[(usize, f64)],
) -> Result<(DataMatrix, SelectionMetadata)> {
    let p = data.p();
    if latents.iter().chain(selection.iter().map(|(s, _)| s)).any(|&i| i >= p) {
        return Err(Error::invalid("vertex index out of range"));
    }
    if selection.iter().any(|(_, q)| !(0.0..1.0).contains(q)) {
        return Err(Error::invalid("selection quantile must lie in [0, 1)"));
    }
    let mut rows: Vec<usize> = (0..data.n()).collect();
    let values = data.values();
    for &(s, q) in selection {
        let drop = (q * rows.len() as f64).floor() as usize;
        let mut ranked = rows.clone();
        ranked.sort_by(|&a, &b| values[(a, s)].total_cmp(&values[(b, s)]).then(a.cmp(&b)));
        let mut dropped = vec![false; data.n()];
        for &r in &ranked[..drop] {
            dropped[r] = true;
        }
        rows.retain(|&r| !dropped[r]);
    }
    let kept: Vec<usize> = (0..p).filter(|i| !latents.contains(i)).collect();
    let out = data.select_rows(&rows)?.select_columns(&kept)?;
    let meta = SelectionMetadata {
        latents: latents.to_vec(),
        latent_names: latents.iter().map(|&i| data.column_names()[i].clone()).collect(),
        selection: selection.to_vec(),
        rows_before: data.n(),
        rows_after: rows.len(),
        kept_vertices: kept,
    };
    Ok((out, meta))
}

/// The binary `(X, Y, Z)` distribution whose XY-marginal coincides with the
/// mixture of conditional products although `X` and `Y` are dependent
/// given each value of `Z`. Indexing is `[z][x]`, `[z][y]` and `[z][x][y]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Table1Joint {
    pub p_z: [f64; 2],
    pub p_x_given_z: [[f64; 2]; 2],
    pub p_y_given_z: [[f64; 2]; 2],
    pub p_xy_given_z: [[[f64; 2]; 2]; 2],
}

pub fn table1_joint() -> Table1Joint {
    Table1Joint {
        p_z: [0.2, 0.8],
        p_x_given_z: [[0.5, 0.5], [0.3, 0.7]],
        p_y_given_z: [[0.3, 0.7], [0.4, 0.6]],
        p_xy_given_z: [[[0.2, 0.3], [0.1, 0.4]], [[0.1075, 0.1925], [0.2925, 0.4075]]],
    }
}

impl Table1Joint {
    pub fn joint(&self, x: usize, y: usize, z: usize) -> f64 {
        self.p_z[z] * self.p_xy_given_z[z][x][y]
    }

    /// `P(X = x, Y = y) = sum_z P(z) P(x, y | z)`.
    pub fn marginal_xy(&self, x: usize, y: usize) -> f64 {
        (0..2).map(|z| self.joint(x, y, z)).sum()
    }

    /// `sum_z P(z) P(x | z) P(y | z)`.
    pub fn mixture_of_products(&self, x: usize, y: usize) -> f64 {
        (0..2)
            .map(|z| self.p_z[z] * self.p_x_given_z[z][x] * self.p_y_given_z[z][y])
            .sum()
    }

    /// `P(X = x | Z = z)` obtained by summing the conditional joint over `y`.
    pub fn x_given_z_from_joint(&self, x: usize, z: usize) -> f64 {
        self.p_xy_given_z[z][x].iter().sum()
    }

    pub fn y_given_z_from_joint(&self, y: usize, z: usize) -> f64 {
        (0..2).map(|x| self.p_xy_given_z[z][x][y]).sum()
    }

    /// True when `P(x, y | z) = P(x | z) P(y | z)` for every cell at this `z`.
    pub fn conditionally_independent_at(&self, z: usize, tol: f64) -> bool {
        (0..2).all(|x| {
            (0..2).all(|y| (self.p_xy_given_z[z][x][y] - self.p_x_given_z[z][x] * self.p_y_given_z[z][y]).abs() <= tol)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use crate::citest::partial_correlation;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn corr(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    #[test]
    fn nonlinearities() {
        assert_eq!(NonlinearityId::Square.apply(-3.0), 9.0);
        assert_eq!(NonlinearityId::Cube.apply(-2.0), -8.0);
        assert_eq!(NonlinearityId::NegExp.apply(-2.0), (-2.0f64).exp());
        assert_eq!(NonlinearityId::NegExp.apply(2.0), (-2.0f64).exp());
        for g in NonlinearityId::ALL {
            assert_eq!(g.label().parse::<NonlinearityId>().unwrap(), g);
        }
        let mut r = rng(1);
        let mut seen = [0usize; 5];
        for _ in 0..5000 {
            let g = NonlinearityId::sample(&mut r);
            seen[NonlinearityId::ALL.iter().position(|&h| h == g).unwrap()] += 1;
        }
        assert!(seen.iter().all(|&c| (900..1100).contains(&c)), "{seen:?}");
    }

    #[test]
    fn pnl_shapes_and_reproducibility() {
        let a = gen_pnl_null(50, 3, &mut rng(2)).unwrap();
        assert_eq!((a.x.n(), a.x.p(), a.y.p(), a.z.p()), (50, 1, 1, 3));
        let b = gen_pnl_null(50, 3, &mut rng(2)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_data().unwrap().p(), 5);
        assert!(gen_pnl_null(50, 0, &mut rng(2)).is_err());
        assert!(gen_pnl_alt(1, 1, &mut rng(2)).is_err());
    }

    #[test]
    fn linear_null_has_vanishing_partial_correlation() {
        use NonlinearityId::Identity;
        let s = gen_pnl_null_with(10_000, 1, Identity, Identity, &mut rng(3)).unwrap();
        let r = partial_correlation(s.x.values(), s.y.values(), s.z.values()).unwrap();
        assert!(r.abs() < 0.05, "r = {r}");
    }

    #[test]
    fn alternative_keeps_z_independent() {
        let s = gen_pnl_alt(10_000, 2, &mut rng(4)).unwrap();
        assert!(corr(&s.z.column(0), &s.x.column(0)).abs() < 0.05);
        assert!(corr(&s.z.column(1), &s.y.column(0)).abs() < 0.05);
    }

    #[test]
    fn linear_alternative_correlation() {
        use NonlinearityId::Identity;
        assert_eq!(ALT_SHARED_NOISE_SD.powi(2), 1.0 / 16.0);
        let s = gen_pnl_alt_with(1_000_000, 1, Identity, Identity, &mut rng(5)).unwrap();
        let r = corr(&s.x.column(0), &s.y.column(0));
        assert!((r - 1.0 / 17.0).abs() < 0.01, "r = {r}");
    }

    #[test]
    fn random_dag_edge_count_and_weights() {
        let mut r = rng(6);
        let mut total = 0usize;
        for _ in 0..500 {
            let dag = gen_random_dag(20, 2.0, &mut r).unwrap();
            let w = dag.weights();
            for i in 0..20 {
                for j in i..20 {
                    assert_eq!(w[(i, j)], 0.0);
                }
            }
            for &x in w.iter().filter(|x| **x != 0.0) {
                assert!((0.1..=1.0).contains(&x.abs()));
            }
            total += dag.edges().len();
        }
        let mean = total as f64 / 500.0;
        assert!((mean - 20.0).abs() < 1.0, "mean edges {mean}");
        assert!(gen_random_dag(1, 0.5, &mut r).is_err());
        assert!(gen_random_dag(5, 5.0, &mut r).is_err());
    }

    #[test]
    fn dag_rejects_cycles() {
        assert!(Dag::from_edges(3, &[(0, 1), (1, 2), (2, 0)]).is_err());
        let dag = Dag::from_edges(3, &[(2, 1), (1, 0)]).unwrap();
        assert_eq!(dag.topological_order().unwrap(), vec![2, 1, 0]);
    }

    fn sample_cov(x: &DMatrix<f64>) -> DMatrix<f64> {
        let n = x.nrows() as f64;
        let mut c = x.clone();
        for mut col in c.column_iter_mut() {
            let m = col.mean();
            col.add_scalar_mut(-m);
        }
        c.tr_mul(&c) / (n - 1.0)
    }

    #[test]
    fn empty_dag_gives_white_noise() {
        let dag = Dag::new(DMatrix::zeros(4, 4), default_names(4)).unwrap();
        let d = simulate_dag_data(&dag, 100_000, false, &mut rng(7)).unwrap();
        let c = sample_cov(d.values());
        assert!((c - DMatrix::<f64>::identity(4, 4)).amax() < 0.05);
    }

    #[test]
    fn linear_covariance_matches_structure() {
        let dag = gen_random_dag(6, 2.5, &mut rng(8)).unwrap();
        let d = simulate_dag_data(&dag, 100_000, false, &mut rng(9)).unwrap();
        let got = sample_cov(d.values());
        let want = dag.implied_covariance().unwrap();
        for i in 0..6 {
            for j in 0..6 {
                let scale = (want[(i, i)] * want[(j, j)]).sqrt();
                assert!((got[(i, j)] - want[(i, j)]).abs() < 0.05 * scale.max(want[(i, j)].abs()));
            }
        }
    }

    #[test]
    fn identity_tags_equal_linear_output() {
        let dag = gen_random_dag(5, 2.0, &mut rng(10)).unwrap();
        let linear = simulate_dag_data(&dag, 200, false, &mut rng(11)).unwrap();
        let forced = simulate_dag_data_with(&dag, 200, &[NonlinearityId::Identity; 5], &mut rng(11)).unwrap();
        assert_eq!(linear, forced);
    }

    #[test]
    fn selection_no_op() {
        let dag = gen_random_dag(5, 2.0, &mut rng(12)).unwrap();
        let d = simulate_dag_data(&dag, 100, false, &mut rng(13)).unwrap();
        let (out, meta) = apply_selection_choices(&d, &[], &[]).unwrap();
        assert_eq!(out, d);
        assert_eq!(meta.rows_after, 100);
    }

    #[test]
    fn selection_halves_rows() {
        let dag = Dag::from_edges(3, &[(0, 2), (1, 2)]).unwrap();
        let d = simulate_dag_data(&dag, 101, false, &mut rng(14)).unwrap();
        let (out, meta) = apply_selection_choices(&d, &[], &[(2, 0.5)]).unwrap();
        assert!((out.n() as i64 - 50).abs() <= 1);
        let threshold = out.column(2).into_iter().fold(f64::INFINITY, f64::min);
        let below = d.column(2).into_iter().filter(|&v| v < threshold).count();
        assert_eq!(below, 101 - out.n());
        assert_eq!(meta.selection, vec![(2, 0.5)]);
    }

    #[test]
    fn latents_are_dropped() {
        let dag = Dag::from_edges(3, &[(0, 1), (0, 2)]).unwrap();
        let d = simulate_dag_data(&dag, 20, false, &mut rng(15)).unwrap();
        let (out, meta) = apply_selection_choices(&d, &[0], &[]).unwrap();
        assert_eq!(out.column_names(), &["X2".to_string(), "X3".to_string()]);
        assert_eq!(meta.latent_names, vec!["X1".to_string()]);
        assert_eq!(meta.kept_vertices, vec![1, 2]);
    }

    #[test]
    fn random_latent_selection_respects_eligibility() {
        let mut r = rng(16);
        for _ in 0..50 {
            let dag = gen_random_dag(12, 3.0, &mut r).unwrap();
            let d = simulate_dag_data(&dag, 200, true, &mut r).unwrap();
            let (out, meta) = apply_latent_and_selection(&d, &dag, &mut r).unwrap();
            assert!(meta.latents.len() <= 3 && meta.selection.len() <= 3);
            for &l in &meta.latents {
                assert!(dag.children(l).len() >= 2);
            }
            for &(s, q) in &meta.selection {
                assert!(dag.parents(s).len() >= 2 && !meta.latents.contains(&s));
                assert!((0.1..0.5).contains(&q));
            }
            assert_eq!(out.p(), 12 - meta.latents.len());
            assert_eq!(out.n(), meta.rows_after);
        }
    }

    #[test]
    fn table1_values() {
        let t = table1_joint();
        assert!((t.marginal_xy(0, 0) - 0.126).abs() < 1e-12);
        let total: f64 = (0..2)
            .flat_map(|x| (0..2).map(move |y| (x, y)))
            .map(|(x, y)| t.marginal_xy(x, y))
            .sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert_eq!(t.p_xy_given_z[0][0][0], 0.2);
        assert!((t.p_x_given_z[0][0] * t.p_y_given_z[0][0] - 0.15).abs() < 1e-15);
        for z in 0..2 {
            for v in 0..2 {
                assert!((t.x_given_z_from_joint(v, z) - t.p_x_given_z[z][v]).abs() < 1e-12);
                assert!((t.y_given_z_from_joint(v, z) - t.p_y_given_z[z][v]).abs() < 1e-12);
            }
        }
    }
}
