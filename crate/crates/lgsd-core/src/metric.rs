//! Induced pseudometric over an adjacency graph and its verifiers.
//!
//! Raw cosine language distance is not a metric (no triangle inequality), but
//! the shortest-path distance it induces over adjacent state pairs is a valid
//! pseudometric, and any representation that respects the per-edge bound
//! automatically respects the induced distance on all pairs. This module
//! computes that induced distance and checks both facts on concrete
//! instances.

use crate::describer::StateKey;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Undirected weighted graph over discretized states. Edge weights are the
/// language distance between the endpoints; an edge exists only between
/// states adjacent under the environment dynamics.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AdjacencyGraph {
    pub nodes: Vec<StateKey>,
    pub edges: Vec<(usize, usize, f64)>,
}

impl AdjacencyGraph {
    /// Index-only graph with trivial node keys.
    pub fn with_n_nodes(n: usize, edges: Vec<(usize, usize, f64)>) -> Self {
        AdjacencyGraph { nodes: (0..n).map(|i| vec![i as i64]).collect(), edges }
    }

    pub fn n(&self) -> usize {
        self.nodes.len()
    }

    pub fn validate(&self) -> Result<()> {
        for &(i, j, w) in &self.edges {
            if i >= self.n() || j >= self.n() {
                return Err(Error::Shape(format!("edge ({i},{j}) out of range")));
            }
            if !w.is_finite() || w < 0.0 {
                return Err(Error::Config(format!("edge ({i},{j}) has invalid weight {w}")));
            }
            if i == j && w > 0.0 {
                return Err(Error::Config(format!("positive self-loop at node {i}")));
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let g: AdjacencyGraph = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        g.validate()?;
        Ok(g)
    }
}

/// All-pairs induced distance matrix; `+inf` where no finite path exists.
#[derive(Clone, Debug)]
pub struct InducedMetric {
    pub n: usize,
    d: Vec<f64>,
}

impl InducedMetric {
    pub fn from_matrix(n: usize, d: Vec<f64>) -> Result<Self> {
        if d.len() != n * n {
            return Err(Error::Shape(format!("matrix length {} != {n}x{n}", d.len())));
        }
        Ok(InducedMetric { n, d })
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d[i * self.n + j]
    }

    fn set(&mut self, i: usize, j: usize, v: f64) {
        self.d[i * self.n + j] = v;
    }
}

/// Shortest-path closure of the graph (Floyd-Warshall). Relaxation passes
/// repeat until a full pass changes nothing, so at the fixpoint
/// `d[i][j] <= d[i][k] + d[k][j]` holds exactly in floating point, not just
/// up to rounding of intermediate passes.
pub fn induced_pseudometric(graph: &AdjacencyGraph) -> Result<InducedMetric> {
    graph.validate()?;
    let n = graph.n();
    let mut m = InducedMetric { n, d: vec![f64::INFINITY; n * n] };
    for i in 0..n {
        m.set(i, i, 0.0);
    }
    for &(i, j, w) in &graph.edges {
        if w < m.get(i, j) {
            m.set(i, j, w);
            m.set(j, i, w);
        }
    }
    loop {
        let mut changed = false;
        for k in 0..n {
            for i in 0..n {
                let dik = m.get(i, k);
                if dik.is_infinite() {
                    continue;
                }
                for j in 0..n {
                    let cand = dik + m.get(k, j);
                    if cand < m.get(i, j) {
                        m.set(i, j, cand);
                        changed = true;
                    }
                }
            }
        }
        if !changed {
            break;
        }
    }
    Ok(m)
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum MetricViolation {
    NonZeroDiagonal { i: usize, value: f64 },
    Asymmetry { i: usize, j: usize, dij: f64, dji: f64 },
    Triangle { i: usize, j: usize, k: usize, direct: f64, via: f64 },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MetricReport {
    pub n: usize,
    pub checked_triples: u64,
    pub violations: Vec<MetricViolation>,
}

impl MetricReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks the pseudometric axioms exactly (zero tolerance) over all finite
/// entries: zero diagonal, symmetry, and the triangle inequality.
pub fn verify_pseudometric(m: &InducedMetric) -> MetricReport {
    let n = m.n;
    let mut violations = Vec::new();
    let mut checked = 0u64;
    for i in 0..n {
        if m.get(i, i) != 0.0 {
            violations.push(MetricViolation::NonZeroDiagonal { i, value: m.get(i, i) });
        }
    }
    for i in 0..n {
        for j in i + 1..n {
            if m.get(i, j) != m.get(j, i) {
                violations.push(MetricViolation::Asymmetry {
                    i,
                    j,
                    dij: m.get(i, j),
                    dji: m.get(j, i),
                });
            }
        }
    }
    for i in 0..n {
        for k in 0..n {
            let dik = m.get(i, k);
            if dik.is_infinite() {
                continue;
            }
            for j in 0..n {
                let dkj = m.get(k, j);
                let dij = m.get(i, j);
                if dkj.is_infinite() || dij.is_infinite() {
                    continue;
                }
                checked += 1;
                let via = dik + dkj;
                if dij > via {
                    violations.push(MetricViolation::Triangle { i, j, k, direct: dij, via });
                }
            }
        }
    }
    MetricReport { n, checked_triples: checked, violations }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Claim1Report {
    /// Whether every edge satisfies `|phi(i) - phi(j)| <= w`.
    pub premise_ok: bool,
    pub premise_violations: Vec<(usize, usize, f64, f64)>,
    /// Pairs with a finite induced distance where the conclusion
    /// `|phi(x) - phi(y)| <= d~(x, y)` fails. Only meaningful when the
    /// premise holds.
    pub conclusion_violations: Vec<(usize, usize, f64, f64)>,
    pub checked_pairs: u64,
}

impl Claim1Report {
    pub fn holds(&self) -> bool {
        self.premise_ok && self.conclusion_violations.is_empty()
    }
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Checks the implication: if the per-edge Lipschitz premise holds, then the
/// same bound holds for every finite pair under the induced distance.
/// A tiny tolerance absorbs floating-point rounding in norm sums; the
/// implication itself is exact in real arithmetic.
pub fn verify_claim1(graph: &AdjacencyGraph, phi: &[Vec<f64>]) -> Result<Claim1Report> {
    graph.validate()?;
    if phi.len() != graph.n() {
        return Err(Error::Shape(format!(
            "phi table has {} rows for {} nodes",
            phi.len(),
            graph.n()
        )));
    }
    const TOL: f64 = 1e-12;
    let mut premise_violations = Vec::new();
    for &(i, j, w) in &graph.edges {
        let dist = euclid(&phi[i], &phi[j]);
        if dist > w + TOL {
            premise_violations.push((i, j, dist, w));
        }
    }
    let premise_ok = premise_violations.is_empty();
    let mut conclusion_violations = Vec::new();
    let mut checked = 0u64;
    if premise_ok {
        let m = induced_pseudometric(graph)?;
        for i in 0..graph.n() {
            for j in i + 1..graph.n() {
                let dt = m.get(i, j);
                if dt.is_infinite() {
                    continue;
                }
                checked += 1;
                let dist = euclid(&phi[i], &phi[j]);
                if dist > dt + TOL {
                    conclusion_violations.push((i, j, dist, dt));
                }
            }
        }
    }
    Ok(Claim1Report { premise_ok, premise_violations, conclusion_violations, checked_pairs: checked })
}

/// Scales a candidate representation down until the per-edge premise holds.
/// Used by tests and the verification suite to build premise-satisfying
/// instances from arbitrary embeddings.
pub fn project_to_premise(graph: &AdjacencyGraph, phi: &mut [Vec<f64>]) {
    let mut scale = 1.0_f64;
    for &(i, j, w) in &graph.edges {
        let dist = euclid(&phi[i], &phi[j]);
        if dist > 0.0 {
            scale = scale.min(w / dist);
        }
    }
    let scale = scale * (1.0 - 1e-9);
    for row in phi.iter_mut() {
        for v in row.iter_mut() {
            *v *= scale;
        }
    }
}
