//! PC-stable structure discovery, d-separation and structural Hamming
//! distance.

use std::collections::{BTreeMap, HashSet, VecDeque};
use std::fmt;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::citest::{CiTestConfig, TestKind};
use crate::error::{Error, Result};
use crate::eval::TestSpec;
use crate::features::DataMatrix;
use crate::seed::{derive_seed, rng_for};
use crate::synth::{gen_random_dag, simulate_dag_data, Dag};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeMark {
    /// `from -> to`
    Directed,
    /// `from - to`
    Undirected,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub from: String,
    pub to: String,
    pub mark: EdgeMark,
}

/// Status of an unordered vertex pair `{i, j}` as seen from `i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PairStatus {
    Absent,
    Undirected,
    /// `i -> j`
    Forward,
    /// `j -> i`
    Backward,
}

/// Partially directed graph. `arrow[i][j]` means the edge between `i` and `j`
/// allows travel `i -> j`; an undirected edge sets both directions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cpdag {
    num_vertices: usize,
    vertex_names: Vec<String>,
    arrow: Vec<bool>,
}

#[derive(Serialize, Deserialize)]
struct CpdagJson {
    vertex_names: Vec<String>,
    edges: Vec<Edge>,
}

impl Cpdag {
    /// Graph without edges.
    pub fn empty(vertex_names: Vec<String>) -> Self {
        let v = vertex_names.len();
        Cpdag {
            num_vertices: v,
            vertex_names,
            arrow: vec![false; v * v],
        }
    }

    /// Complete undirected graph.
    pub fn complete(vertex_names: Vec<String>) -> Self {
        let mut g = Self::empty(vertex_names);
        for i in 0..g.num_vertices {
            for j in 0..g.num_vertices {
                if i != j {
                    g.set(i, j, true);
                }
            }
        }
        g
    }

    /// Every edge of `dag` directed as in `dag`.
    pub fn from_dag(dag: &Dag) -> Self {
        let mut g = Self::empty(dag.vertex_names().to_vec());
        for (p, c) in dag.edges() {
            g.set(p, c, true);
        }
        g
    }

    /// Builds a graph from `(from, to, mark)` index triples, rejecting
    /// self-loops, duplicate pairs and directed cycles.
    pub fn from_index_edges(vertex_names: Vec<String>, edges: &[(usize, usize, EdgeMark)]) -> Result<Self> {
        let mut g = Self::empty(vertex_names);
        let v = g.num_vertices;
        for &(a, b, mark) in edges {
            if a >= v || b >= v {
                return Err(Error::invalid(format!("edge ({a}, {b}) out of range")));
            }
            if a == b {
                return Err(Error::invalid("self-loop"));
            }
            if g.adjacent(a, b) {
                return Err(Error::invalid(format!("duplicate edge between {a} and {b}")));
            }
            g.set(a, b, true);
            if mark == EdgeMark::Undirected {
                g.set(b, a, true);
            }
        }
        if g.has_directed_cycle() {
            return Err(Error::invalid("directed edges contain a cycle"));
        }
        Ok(g)
    }

    pub fn num_vertices(&self) -> usize {
        self.num_vertices
    }

    pub fn vertex_names(&self) -> &[String] {
        &self.vertex_names
    }

    fn set(&mut self, i: usize, j: usize, on: bool) {
        self.arrow[i * self.num_vertices + j] = on;
    }

    fn get(&self, i: usize, j: usize) -> bool {
        self.arrow[i * self.num_vertices + j]
    }

    pub fn adjacent(&self, i: usize, j: usize) -> bool {
        self.get(i, j) || self.get(j, i)
    }

    pub fn is_directed(&self, from: usize, to: usize) -> bool {
        self.get(from, to) && !self.get(to, from)
    }

    pub fn is_undirected(&self, i: usize, j: usize) -> bool {
        self.get(i, j) && self.get(j, i)
    }

    pub fn status(&self, i: usize, j: usize) -> PairStatus {
        match (self.get(i, j), self.get(j, i)) {
            (false, false) => PairStatus::Absent,
            (true, true) => PairStatus::Undirected,
            (true, false) => PairStatus::Forward,
            (false, true) => PairStatus::Backward,
        }
    }

    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        (0..self.num_vertices)
            .filter(|&j| j != i && self.adjacent(i, j))
            .collect()
    }

    pub fn num_edges(&self) -> usize {
        (0..self.num_vertices)
            .map(|i| (i + 1..self.num_vertices).filter(|&j| self.adjacent(i, j)).count())
            .sum()
    }

    fn remove_edge(&mut self, i: usize, j: usize) {
        self.set(i, j, false);
        self.set(j, i, false);
    }

    /// Turns an undirected edge into `from -> to`.
    fn orient(&mut self, from: usize, to: usize) {
        debug_assert!(self.is_undirected(from, to));
        self.set(to, from, false);
    }

    /// Is there a directed path `from -> ... -> to` using only directed edges?
    pub fn has_directed_path(&self, from: usize, to: usize) -> bool {
        let mut seen = vec![false; self.num_vertices];
        let mut stack = vec![from];
        while let Some(u) = stack.pop() {
            if u == to {
                return true;
            }
            if std::mem::replace(&mut seen[u], true) {
                continue;
            }
            stack.extend((0..self.num_vertices).filter(|&w| self.is_directed(u, w)));
        }
        false
    }

    fn has_directed_cycle(&self) -> bool {
        (0..self.num_vertices)
            .any(|u| (0..self.num_vertices).any(|w| self.is_directed(u, w) && self.has_directed_path(w, u)))
    }

    /// `(from, to, mark)` triples; undirected edges are listed once with
    /// `from < to`.
    pub fn index_edges(&self) -> Vec<(usize, usize, EdgeMark)> {
        let mut out = Vec::new();
        for i in 0..self.num_vertices {
            for j in 0..self.num_vertices {
                match self.status(i, j) {
                    PairStatus::Forward => out.push((i, j, EdgeMark::Directed)),
                    PairStatus::Undirected if i < j => out.push((i, j, EdgeMark::Undirected)),
                    _ => {}
                }
            }
        }
        out
    }

    pub fn edges(&self) -> Vec<Edge> {
        self.index_edges()
            .into_iter()
            .map(|(a, b, mark)| Edge {
                from: self.vertex_names[a].clone(),
                to: self.vertex_names[b].clone(),
                mark,
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = CpdagJson {
            vertex_names: self.vertex_names.clone(),
            edges: self.edges(),
        };
        serde_json::to_string_pretty(&doc).map_err(|e| Error::invalid(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: CpdagJson = serde_json::from_str(text).map_err(|e| Error::invalid(e.to_string()))?;
        let index = name_index(&doc.vertex_names)?;
        let edges = doc
            .edges
            .iter()
            .map(|e| Ok((lookup(&index, &e.from)?, lookup(&index, &e.to)?, e.mark)))
            .collect::<Result<Vec<_>>>()?;
        Self::from_index_edges(doc.vertex_names, &edges)
    }

    /// Header row of vertex names, then one row per vertex with `1` in
    /// column `j` when the edge allows travel to `j`.
    pub fn to_adjacency_csv(&self) -> String {
        let mut out = self.vertex_names.join(",");
        out.push('\n');
        for i in 0..self.num_vertices {
            let row: Vec<&str> = (0..self.num_vertices)
                .map(|j| if self.get(i, j) { "1" } else { "0" })
                .collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_adjacency_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::invalid("empty adjacency CSV"))?;
        let names: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
        name_index(&names)?;
        let v = names.len();
        let mut g = Self::empty(names);
        let mut rows = 0;
        for (i, line) in lines.enumerate() {
            if i >= v {
                return Err(Error::invalid("too many adjacency rows"));
            }
            let cells: Vec<&str> = line.split(',').map(str::trim).collect();
            if cells.len() != v {
                return Err(Error::invalid(format!(
                    "adjacency row {} has {} cells",
                    i + 1,
                    cells.len()
                )));
            }
            for (j, c) in cells.iter().enumerate() {
                match *c {
                    "0" => {}
                    "1" if i != j => g.set(i, j, true),
                    _ => return Err(Error::invalid(format!("bad adjacency entry {c:?} at ({i}, {j})"))),
                }
            }
            rows += 1;
        }
        if rows != v {
            return Err(Error::invalid("adjacency matrix must be square"));
        }
        if g.has_directed_cycle() {
            return Err(Error::invalid("directed edges contain a cycle"));
        }
        Ok(g)
    }
}

impl fmt::Display for Cpdag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in self.edges() {
            let sym = match e.mark {
                EdgeMark::Directed => "->",
                EdgeMark::Undirected => "--",
            };
            writeln!(f, "{} {sym} {}", e.from, e.to)?;
        }
        Ok(())
    }
}

fn name_index(names: &[String]) -> Result<BTreeMap<&str, usize>> {
    let mut index = BTreeMap::new();
    for (i, n) in names.iter().enumerate() {
        if index.insert(n.as_str(), i).is_some() {
            return Err(Error::invalid(format!("duplicate vertex name {n:?}")));
        }
    }
    Ok(index)
}

fn lookup(index: &BTreeMap<&str, usize>, name: &str) -> Result<usize> {
    index
        .get(name)
        .copied()
        .ok_or_else(|| Error::invalid(format!("unknown vertex {name:?}")))
}

/// Serialized form of a ground-truth DAG.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DagJson {
    pub vertex_names: Vec<String>,
    pub edges: Vec<WeightedEdge>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedEdge {
    pub from: String,
    pub to: String,
    #[serde(default = "unit_weight")]
    pub weight: f64,
}

fn unit_weight() -> f64 {
    1.0
}

impl DagJson {
    pub fn from_dag(dag: &Dag) -> Self {
        let names = dag.vertex_names();
        DagJson {
            vertex_names: names.to_vec(),
            edges: dag
                .edges()
                .into_iter()
                .map(|(p, c)| WeightedEdge {
                    from: names[p].clone(),
                    to: names[c].clone(),
                    weight: dag.weights()[(c, p)],
                })
                .collect(),
        }
    }

    /// Rejects unknown names, zero weights, self-loops and cycles.
    pub fn to_dag(&self) -> Result<Dag> {
        let index = name_index(&self.vertex_names)?;
        let v = self.vertex_names.len();
        let mut w = nalgebra::DMatrix::zeros(v, v);
        for e in &self.edges {
            let (p, c) = (lookup(&index, &e.from)?, lookup(&index, &e.to)?);
            if e.weight == 0.0 {
                return Err(Error::invalid(format!("edge {} -> {} has zero weight", e.from, e.to)));
            }
            if w[(c, p)] != 0.0 {
                return Err(Error::invalid(format!("duplicate edge {} -> {}", e.from, e.to)));
            }
            w[(c, p)] = e.weight;
        }
        Dag::new(w, self.vertex_names.clone())
    }
}

/// Is `x` d-separated from `y` given `z` in `dag`?
pub fn d_separated(dag: &Dag, x: usize, y: usize, z: &[usize]) -> Result<bool> {
    let v = dag.num_vertices();
    if x >= v || y >= v || z.iter().any(|&s| s >= v) {
        return Err(Error::invalid("vertex index out of range"));
    }
    if x == y {
        return Err(Error::invalid("x and y must differ"));
    }
    if z.contains(&x) || z.contains(&y) {
        return Err(Error::invalid("conditioning set must exclude x and y"));
    }
    let mut in_z = vec![false; v];
    for &s in z {
        in_z[s] = true;
    }
    // ancestors of z, z included
    let mut anc = in_z.clone();
    let mut stack: Vec<usize> = z.to_vec();
    while let Some(u) = stack.pop() {
        for p in dag.parents(u) {
            if !anc[p] {
                anc[p] = true;
                stack.push(p);
            }
        }
    }
    // (vertex, arrived from a child) reachability
    let mut seen = HashSet::new();
    let mut queue = VecDeque::from([(x, true)]);
    while let Some((u, up)) = queue.pop_front() {
        if !seen.insert((u, up)) {
            continue;
        }
        if u == y {
            return Ok(false);
        }
        if up {
            if !in_z[u] {
                queue.extend(dag.parents(u).into_iter().map(|p| (p, true)));
                queue.extend(dag.children(u).into_iter().map(|c| (c, false)));
            }
        } else {
            if !in_z[u] {
                queue.extend(dag.children(u).into_iter().map(|c| (c, false)));
            }
            if anc[u] {
                queue.extend(dag.parents(u).into_iter().map(|p| (p, true)));
            }
        }
    }
    Ok(true)
}

/// A conditional independence test over the columns of some dataset.
pub trait CiTest {
    fn num_vertices(&self) -> usize;
    fn vertex_names(&self) -> Vec<String>;
    /// p-value for `x ⊥ y | s`; larger means more evidence of independence.
    fn p_value(&self, x: usize, y: usize, s: &[usize]) -> Result<f64>;
}

/// d-separation in a known DAG: p = 1 when separated, 0 otherwise.
pub struct OracleCiTest<'a> {
    pub dag: &'a Dag,
}

impl CiTest for OracleCiTest<'_> {
    fn num_vertices(&self) -> usize {
        self.dag.num_vertices()
    }

    fn vertex_names(&self) -> Vec<String> {
        self.dag.vertex_names().to_vec()
    }

    fn p_value(&self, x: usize, y: usize, s: &[usize]) -> Result<f64> {
        Ok(if d_separated(self.dag, x, y, s)? { 1.0 } else { 0.0 })
    }
}

/// Runs a [`TestKind`] on data columns. The seed of each call depends only
/// on the unordered pair and the set, so results do not depend on the order
/// in which PC asks.
pub struct DataCiTest<'a> {
    pub data: &'a DataMatrix,
    pub kind: TestKind,
    pub config: CiTestConfig,
}

impl<'a> DataCiTest<'a> {
    pub fn new(data: &'a DataMatrix, spec: &TestSpec) -> Self {
        DataCiTest {
            data,
            kind: spec.kind,
            config: spec.config.clone(),
        }
    }
}

impl CiTest for DataCiTest<'_> {
    fn num_vertices(&self) -> usize {
        self.data.p()
    }

    fn vertex_names(&self) -> Vec<String> {
        self.data.column_names().to_vec()
    }

    fn p_value(&self, x: usize, y: usize, s: &[usize]) -> Result<f64> {
        let (a, b) = (x.min(y), x.max(y));
        let mut set = s.to_vec();
        set.sort_unstable();
        let mut seed = derive_seed(derive_seed(self.config.seed, a as u64), b as u64);
        for &k in &set {
            seed = derive_seed(seed, k as u64 + 1);
        }
        let cfg = CiTestConfig {
            seed,
            ..self.config.clone()
        };
        let xa = self.data.select_columns(&[a])?;
        let yb = self.data.select_columns(&[b])?;
        let zs = if set.is_empty() {
            DataMatrix::empty(self.data.n())
        } else {
            self.data.select_columns(&set)?
        };
        Ok(self.kind.run(&xa, &yb, &zs, &cfg)?.p_value)
    }
}

/// Separating sets found by the skeleton phase, keyed by `(min, max)`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SepsetMap {
    sets: BTreeMap<(usize, usize), Vec<usize>>,
}

impl SepsetMap {
    pub fn get(&self, i: usize, j: usize) -> Option<&[usize]> {
        self.sets.get(&(i.min(j), i.max(j))).map(Vec::as_slice)
    }

    fn insert(&mut self, i: usize, j: usize, set: Vec<usize>) {
        self.sets.insert((i.min(j), i.max(j)), set);
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(usize, usize), &Vec<usize>)> {
        self.sets.iter()
    }
}

#[derive(Debug, Clone)]
pub struct PcOutput {
    pub cpdag: Cpdag,
    pub sepsets: SepsetMap,
    pub num_tests: usize,
}

fn for_each_subset(items: &[usize], size: usize, f: &mut dyn FnMut(&[usize]) -> Result<()>) -> Result<()> {
    fn rec(
        items: &[usize],
        size: usize,
        start: usize,
        cur: &mut Vec<usize>,
        f: &mut dyn FnMut(&[usize]) -> Result<()>,
    ) -> Result<()> {
        if cur.len() == size {
            return f(cur);
        }
        for i in start..items.len() {
            if items.len() - i < size - cur.len() {
                break;
            }
            cur.push(items[i]);
            rec(items, size, i + 1, cur, f)?;
            cur.pop();
        }
        Ok(())
    }
    rec(items, size, 0, &mut Vec::with_capacity(size), f)
}

/// PC-stable. Conditioning sets grow level by level, each drawn from the
/// adjacencies frozen at the start of the level. Among separating sets of
/// the deciding level the one with the largest p-value is kept, so the
/// output does not depend on vertex order for a deterministic test.
pub fn pc<C: CiTest + ?Sized>(ci: &C, alpha: f64, max_condition_size: Option<usize>) -> Result<PcOutput> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid("alpha must lie in (0, 1)"));
    }
    let v = ci.num_vertices();
    let names = ci.vertex_names();
    if names.len() != v {
        return Err(Error::invalid("one name per vertex required"));
    }
    let cap = max_condition_size.unwrap_or(usize::MAX).min(v.saturating_sub(2));
    let mut g = Cpdag::complete(names);
    let mut sepsets = SepsetMap::default();
    let mut num_tests = 0;

    for level in 0..=cap {
        let frozen: Vec<Vec<usize>> = (0..v).map(|i| g.neighbors(i)).collect();
        let mut any_candidate = false;
        let mut removals = Vec::new();
        for i in 0..v {
            for &j in frozen[i].iter().filter(|&&j| j > i) {
                let mut best: Option<(f64, Vec<usize>)> = None;
                let mut tested = HashSet::new();
                for (a, b) in [(i, j), (j, i)] {
                    let pool: Vec<usize> = frozen[a].iter().copied().filter(|&k| k != b).collect();
                    if pool.len() < level {
                        continue;
                    }
                    any_candidate = true;
                    for_each_subset(&pool, level, &mut |s| {
                        if !tested.insert(s.to_vec()) {
                            return Ok(());
                        }
                        let p = ci.p_value(i, j, s)?;
                        num_tests += 1;
                        let better = match &best {
                            None => true,
                            Some((bp, bs)) => p > *bp || (p == *bp && s < bs.as_slice()),
                        };
                        if better {
                            best = Some((p, s.to_vec()));
                        }
                        Ok(())
                    })?;
                }
                if let Some((p, s)) = best {
                    if p > alpha {
                        removals.push((i, j, s));
                    }
                }
            }
        }
        for (i, j, s) in removals {
            g.remove_edge(i, j);
            sepsets.insert(i, j, s);
        }
        if !any_candidate {
            break;
        }
    }

    orient_v_structures(&mut g, &sepsets);
    apply_meek_rules(&mut g);
    Ok(PcOutput {
        cpdag: g,
        sepsets,
        num_tests,
    })
}

/// Orients `i -> k <- j` for every unshielded triple whose separating set
/// misses `k`. An edge asked to point both ways stays undirected.
fn orient_v_structures(g: &mut Cpdag, sepsets: &SepsetMap) {
    let v = g.num_vertices();
    let mut forced = Vec::new();
    for k in 0..v {
        let nb = g.neighbors(k);
        for (ai, &i) in nb.iter().enumerate() {
            for &j in &nb[ai + 1..] {
                if g.adjacent(i, j) {
                    continue;
                }
                if sepsets.get(i, j).is_some_and(|s| !s.contains(&k)) {
                    forced.push((i, k));
                    forced.push((j, k));
                }
            }
        }
    }
    apply_orientations(g, forced);
}

/// Applies a batch of `a -> b` orientations at once, so the result does not
/// depend on the order of the batch. Edges forced both ways, edges that are
/// no longer undirected and edges that would close a directed cycle are left
/// as they were. Returns the number of edges oriented.
fn apply_orientations(g: &mut Cpdag, forced: Vec<(usize, usize)>) -> usize {
    let set: HashSet<(usize, usize)> = forced.into_iter().collect();
    let mut batch: Vec<(usize, usize)> = set
        .iter()
        .copied()
        .filter(|&(a, b)| !set.contains(&(b, a)) && g.is_undirected(a, b) && !g.has_directed_path(b, a))
        .collect();
    batch.sort_unstable();
    for &(a, b) in &batch {
        g.orient(a, b);
    }
    // orientations that only close a cycle together are undone together
    let cyclic: Vec<(usize, usize)> = batch
        .iter()
        .copied()
        .filter(|&(a, b)| g.has_directed_path(b, a))
        .collect();
    for &(a, b) in &cyclic {
        g.set(b, a, true);
    }
    batch.len() - cyclic.len()
}

/// Meek's rules R1-R4 until nothing changes. Every round collects what the
/// rules force on the current graph and applies it as one batch. Only
/// undirected edges are touched, so arrowheads are never overwritten.
pub fn apply_meek_rules(g: &mut Cpdag) {
    let v = g.num_vertices();
    loop {
        let mut forced = Vec::new();
        for a in 0..v {
            for b in 0..v {
                if a != b && g.is_undirected(a, b) && meek_orients(g, a, b) {
                    forced.push((a, b));
                }
            }
        }
        if forced.is_empty() || apply_orientations(g, forced) == 0 {
            break;
        }
    }
}

/// Does some rule force the undirected edge `a - b` to become `a -> b`?
fn meek_orients(g: &Cpdag, a: usize, b: usize) -> bool {
    let v = g.num_vertices();
    // R1: c -> a - b, c and b nonadjacent
    if (0..v).any(|c| c != b && g.is_directed(c, a) && !g.adjacent(c, b)) {
        return true;
    }
    // R2: a -> c -> b
    if (0..v).any(|c| g.is_directed(a, c) && g.is_directed(c, b)) {
        return true;
    }
    // R3: a - c -> b, a - d -> b, c and d nonadjacent
    let r3: Vec<usize> = (0..v)
        .filter(|&c| c != b && g.is_undirected(a, c) && g.is_directed(c, b))
        .collect();
    for (i, &c) in r3.iter().enumerate() {
        if r3[i + 1..].iter().any(|&d| !g.adjacent(c, d)) {
            return true;
        }
    }
    // R4: a - d -> c -> b, a adjacent to c, d and b nonadjacent
    for c in 0..v {
        if c == a || !g.adjacent(a, c) || !g.is_directed(c, b) {
            continue;
        }
        if (0..v).any(|d| d != b && d != c && g.is_undirected(a, d) && g.is_directed(d, c) && !g.adjacent(d, b)) {
            return true;
        }
    }
    false
}

/// The Markov equivalence class of `dag` as a CPDAG: its skeleton, its
/// v-structures and everything Meek's rules then force.
pub fn cpdag_of_dag(dag: &Dag) -> Cpdag {
    let v = dag.num_vertices();
    let mut g = Cpdag::empty(dag.vertex_names().to_vec());
    for (p, c) in dag.edges() {
        g.set(p, c, true);
        g.set(c, p, true);
    }
    for k in 0..v {
        let parents = dag.parents(k);
        for (ai, &i) in parents.iter().enumerate() {
            for &j in &parents[ai + 1..] {
                if !dag.has_edge(i, j) && !dag.has_edge(j, i) {
                    g.set(k, i, false);
                    g.set(k, j, false);
                }
            }
        }
    }
    apply_meek_rules(&mut g);
    g
}

/// Number of vertex pairs whose status (absent, undirected, or either
/// direction) differs between the two graphs.
pub fn structural_hamming_distance(g1: &Cpdag, g2: &Cpdag) -> Result<usize> {
    if g1.num_vertices() != g2.num_vertices() {
        return Err(Error::invalid("graphs have different vertex counts"));
    }
    let v = g1.num_vertices();
    Ok((0..v)
        .flat_map(|i| (i + 1..v).map(move |j| (i, j)))
        .filter(|&(i, j)| g1.status(i, j) != g2.status(i, j))
        .count())
}

/// What PC is run with in a discovery experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum DiscoveryTest {
    /// d-separation in the generating DAG.
    Oracle,
    Data(TestSpec),
}

impl DiscoveryTest {
    pub fn label(&self) -> String {
        match self {
            DiscoveryTest::Oracle => "oracle".into(),
            DiscoveryTest::Data(spec) => spec.label(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscoverySummary {
    pub test: String,
    /// One SHD per DAG, in DAG order.
    pub shd: Vec<usize>,
    pub mean_shd: f64,
    /// 95% t interval for the mean SHD.
    pub shd_ci: (f64, f64),
    pub mean_runtime_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscoveryReport {
    pub num_dags: usize,
    pub num_vertices: usize,
    pub expected_neighbors: f64,
    pub n: usize,
    pub alpha: f64,
    pub seed: u64,
    pub summaries: Vec<DiscoverySummary>,
}

/// Mean and 95% t interval of `xs`.
pub fn mean_confidence_interval(xs: &[f64]) -> (f64, (f64, f64)) {
    let m = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / m;
    if xs.len() < 2 {
        return (mean, (mean, mean));
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0);
    let t = StudentsT::new(0.0, 1.0, m - 1.0)
        .expect("positive degrees of freedom")
        .inverse_cdf(0.975);
    let half = t * (var / m).sqrt();
    (mean, (mean - half, mean + half))
}

/// Paired t-test of `mean(a - b) < 0`: returns the mean difference, the t
/// statistic and the one-sided p-value. Identical samples give p = 1 if the
/// difference is zero.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<(f64, f64, f64)> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::invalid("need two paired samples of equal length >= 2"));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let m = d.len() as f64;
    let mean = d.iter().sum::<f64>() / m;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0);
    if var == 0.0 {
        let p = if mean < 0.0 { 0.0 } else { 1.0 };
        let t = if mean == 0.0 {
            0.0
        } else {
            mean.signum() * f64::INFINITY
        };
        return Ok((mean, t, p));
    }
    let t = mean / (var / m).sqrt();
    let p = StudentsT::new(0.0, 1.0, m - 1.0)
        .expect("positive degrees of freedom")
        .cdf(t);
    Ok((mean, t, p))
}

/// Generates `num_dags` random DAGs, simulates nonlinear data from each and
/// scores PC under every test against the true CPDAG. DAGs run in parallel.
pub fn run_discovery_experiment(
    num_dags: usize,
    v: usize,
    expected_neighbors: f64,
    n: usize,
    tests: &[DiscoveryTest],
    alpha: f64,
    seed: u64,
) -> Result<DiscoveryReport> {
    if num_dags < 10 {
        return Err(Error::invalid("need at least 10 DAGs"));
    }
    if tests.is_empty() {
        return Err(Error::invalid("no tests given"));
    }
    let per_dag: Vec<Vec<(usize, f64)>> = (0..num_dags)
        .into_par_iter()
        .map(|d| {
            let ds = derive_seed(seed, d as u64);
            let dag = gen_random_dag(v, expected_neighbors, &mut rng_for(ds, 0))?;
            let data = simulate_dag_data(&dag, n, true, &mut rng_for(ds, 1))?;
            let truth = cpdag_of_dag(&dag);
            tests
                .iter()
                .map(|t| {
                    let start = Instant::now();
                    let out = match t {
                        DiscoveryTest::Oracle => pc(&OracleCiTest { dag: &dag }, alpha, None)?,
                        DiscoveryTest::Data(spec) => {
                            let spec = TestSpec {
                                kind: spec.kind,
                                config: spec.config.clone().with_seed(derive_seed(ds, 2)),
                            };
                            pc(&DataCiTest::new(&data, &spec), alpha, None)?
                        }
                    };
                    let ms = start.elapsed().as_secs_f64() * 1e3;
                    Ok((structural_hamming_distance(&out.cpdag, &truth)?, ms))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let summaries = tests
        .iter()
        .enumerate()
        .map(|(ti, t)| {
            let shd: Vec<usize> = per_dag.iter().map(|r| r[ti].0).collect();
            let as_f: Vec<f64> = shd.iter().map(|&s| s as f64).collect();
            let (mean, ci) = mean_confidence_interval(&as_f);
            DiscoverySummary {
                test: t.label(),
                mean_shd: mean,
                shd_ci: ci,
                mean_runtime_ms: per_dag.iter().map(|r| r[ti].1).sum::<f64>() / num_dags as f64,
                shd,
            }
        })
        .collect();
    Ok(DiscoveryReport {
        num_dags,
        num_vertices: v,
        expected_neighbors,
        n,
        alpha,
        seed,
        summaries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(v: usize) -> Vec<String> {
        crate::synth::default_names(v)
    }

    #[test]
    fn d_separation_canonical() {
        let chain = Dag::from_edges(3, &[(0, 2), (2, 1)]).unwrap();
        assert!(d_separated(&chain, 0, 1, &[2]).unwrap());
        assert!(!d_separated(&chain, 0, 1, &[]).unwrap());
        let collider = Dag::from_edges(3, &[(0, 2), (1, 2)]).unwrap();
        assert!(d_separated(&collider, 0, 1, &[]).unwrap());
        assert!(!d_separated(&collider, 0, 1, &[2]).unwrap());
        // conditioning on a descendant of the collider opens it
        let desc = Dag::from_edges(4, &[(0, 2), (1, 2), (2, 3)]).unwrap();
        assert!(!d_separated(&desc, 0, 1, &[3]).unwrap());
        assert!(d_separated(&chain, 0, 0, &[]).is_err());
        assert!(d_separated(&chain, 0, 1, &[0]).is_err());
        assert!(d_separated(&chain, 0, 7, &[]).is_err());
    }

    #[test]
    fn pc_oracle_small_graphs() {
        let chain = Dag::from_edges(3, &[(0, 2), (2, 1)]).unwrap();
        let out = pc(&OracleCiTest { dag: &chain }, 0.05, None).unwrap();
        assert!(out.cpdag.is_undirected(0, 2) && out.cpdag.is_undirected(1, 2));
        assert!(!out.cpdag.adjacent(0, 1));
        assert_eq!(out.sepsets.get(1, 0), Some(&[2usize][..]));

        let collider = Dag::from_edges(3, &[(0, 2), (1, 2)]).unwrap();
        let out = pc(&OracleCiTest { dag: &collider }, 0.05, None).unwrap();
        assert!(out.cpdag.is_directed(0, 2) && out.cpdag.is_directed(1, 2));
        assert_eq!(out.cpdag, cpdag_of_dag(&collider));
    }

    #[test]
    fn meek_rule_one_propagates() {
        // 0 -> 2 <- 1, 2 -> 3 is forced
        let dag = Dag::from_edges(4, &[(0, 2), (1, 2), (2, 3)]).unwrap();
        let g = cpdag_of_dag(&dag);
        assert!(g.is_directed(2, 3));
        assert_eq!(pc(&OracleCiTest { dag: &dag }, 0.05, None).unwrap().cpdag, g);
    }

    #[test]
    fn shd_examples() {
        let g = Cpdag::from_index_edges(names(2), &[(0, 1, EdgeMark::Undirected)]).unwrap();
        let h = Cpdag::from_index_edges(names(2), &[(0, 1, EdgeMark::Directed)]).unwrap();
        assert_eq!(structural_hamming_distance(&g, &g).unwrap(), 0);
        assert_eq!(structural_hamming_distance(&g, &h).unwrap(), 1);
        assert_eq!(
            structural_hamming_distance(&Cpdag::empty(names(4)), &Cpdag::complete(names(4))).unwrap(),
            6
        );
        assert!(structural_hamming_distance(&g, &Cpdag::empty(names(3))).is_err());
    }

    #[test]
    fn cpdag_validation() {
        let n = names(3);
        assert!(Cpdag::from_index_edges(n.clone(), &[(0, 0, EdgeMark::Directed)]).is_err());
        assert!(Cpdag::from_index_edges(n.clone(), &[(0, 1, EdgeMark::Directed), (1, 0, EdgeMark::Directed)]).is_err());
        let cyc = [
            (0, 1, EdgeMark::Directed),
            (1, 2, EdgeMark::Directed),
            (2, 0, EdgeMark::Directed),
        ];
        assert!(Cpdag::from_index_edges(n, &cyc).is_err());
    }

    #[test]
    fn serialization_round_trips() {
        let g = Cpdag::from_index_edges(
            names(4),
            &[
                (0, 1, EdgeMark::Undirected),
                (1, 2, EdgeMark::Directed),
                (3, 2, EdgeMark::Directed),
            ],
        )
        .unwrap();
        assert_eq!(Cpdag::from_json(&g.to_json().unwrap()).unwrap(), g);
        assert_eq!(Cpdag::from_adjacency_csv(&g.to_adjacency_csv()).unwrap(), g);
        assert!(Cpdag::from_adjacency_csv("A,B\n0,1\n").is_err());
        assert!(Cpdag::from_adjacency_csv("A,B\n0,2\n0,0\n").is_err());

        let dag = Dag::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        let json = serde_json::to_string(&DagJson::from_dag(&dag)).unwrap();
        let back: DagJson = serde_json::from_str(&json).unwrap();
        assert_eq!(back.to_dag().unwrap(), dag);
        let cyclic = DagJson {
            vertex_names: names(2),
            edges: vec![
                WeightedEdge {
                    from: "X1".into(),
                    to: "X2".into(),
                    weight: 1.0,
                },
                WeightedEdge {
                    from: "X2".into(),
                    to: "X1".into(),
                    weight: 1.0,
                },
            ],
        };
        assert!(cyclic.to_dag().is_err());
    }

    #[test]
    fn paired_t() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [2.0, 2.5, 4.5, 5.0];
        let (mean, t, p) = paired_t_test(&a, &b).unwrap();
        // d = (-1, -0.5, -1.5, -1): mean -1, sd 0.408248, t = -4.898979
        assert!((mean + 1.0).abs() < 1e-12);
        assert!((t + 4.898979485566356).abs() < 1e-9);
        // scipy.stats.t.cdf(-4.898979485566356, 3)
        assert!((p - 0.008142).abs() < 1e-5);
        let (m, (lo, hi)) = mean_confidence_interval(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        // t_{0.975, 2} = 4.302653
        assert!((hi - lo - 2.0 * 4.302652729749464 / 3f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn experiment_contract() {
        let tests = vec![
            DiscoveryTest::Oracle,
            DiscoveryTest::Data(TestSpec::new(TestKind::FisherZ)),
        ];
        let a = run_discovery_experiment(10, 6, 2.0, 200, &tests, 0.05, 5).unwrap();
        assert_eq!(a.summaries.len(), 2);
        assert!(a.summaries[0].shd.iter().all(|&s| s == 0));
        let b = run_discovery_experiment(10, 6, 2.0, 200, &tests, 0.05, 5).unwrap();
        assert_eq!(a.summaries[1].shd, b.summaries[1].shd);
        assert!(run_discovery_experiment(9, 6, 2.0, 200, &tests, 0.05, 5).is_err());
    }
}
