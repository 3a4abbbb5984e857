//! Ground-truth generation: Erdős–Rényi DAGs, linear-Gaussian mechanisms and
//! observational data.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "DagRepr", into = "DagRepr")]
pub struct Dag {
    node_count: usize,
    edges: BTreeSet<(usize, usize)>,
}

#[derive(Serialize, Deserialize)]
struct DagRepr {
    d: usize,
    edges: Vec<[usize; 2]>,
}

impl TryFrom<DagRepr> for Dag {
    type Error = Error;

    fn try_from(r: DagRepr) -> Result<Self> {
        Dag::new(r.d, r.edges.into_iter().map(|[p, c]| (p, c)))
    }
}

impl From<Dag> for DagRepr {
    fn from(dag: Dag) -> Self {
        DagRepr {
            d: dag.node_count,
            edges: dag.edges.iter().map(|&(p, c)| [p, c]).collect(),
        }
    }
}

impl Dag {
    /// Validates node range, self-loops and acyclicity.
    pub fn new(node_count: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if node_count == 0 {
            return Err(Error::InvalidArgument("a DAG needs at least one node".into()));
        }
        let edges: BTreeSet<_> = edges.into_iter().collect();
        for &(p, c) in &edges {
            if p >= node_count || c >= node_count {
                return Err(Error::InvalidArgument(format!(
                    "edge ({p}, {c}) out of range for {node_count} nodes"
                )));
            }
            if p == c {
                return Err(Error::InvalidArgument(format!("self-loop on node {p}")));
            }
        }
        let dag = Dag { node_count, edges };
        dag.topological_order()?;
        Ok(dag)
    }

    pub fn empty(node_count: usize) -> Self {
        assert!(node_count > 0, "a DAG needs at least one node");
        Dag {
            node_count,
            edges: BTreeSet::new(),
        }
    }

    /// Builds a DAG from per-node parent lists.
    pub fn from_parent_sets(parents: &[Vec<usize>]) -> Result<Self> {
        let edges = parents
            .iter()
            .enumerate()
            .flat_map(|(c, ps)| ps.iter().map(move |&p| (p, c)));
        Dag::new(parents.len(), edges)
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edges(&self) -> &BTreeSet<(usize, usize)> {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, parent: usize, child: usize) -> bool {
        self.edges.contains(&(parent, child))
    }

    pub fn adjacent(&self, a: usize, b: usize) -> bool {
        self.has_edge(a, b) || self.has_edge(b, a)
    }

    pub fn parents(&self, child: usize) -> Vec<usize> {
        self.edges
            .iter()
            .filter(|&&(_, c)| c == child)
            .map(|&(p, _)| p)
            .collect()
    }

    /// Adds an edge, refusing it if it would create a cycle.
    pub fn add_edge(&mut self, parent: usize, child: usize) -> Result<()> {
        if parent >= self.node_count || child >= self.node_count || parent == child {
            return Err(Error::InvalidArgument(format!("invalid edge ({parent}, {child})")));
        }
        if self.edges.insert((parent, child)) && self.topological_order().is_err() {
            self.edges.remove(&(parent, child));
            return Err(Error::Cyclic);
        }
        Ok(())
    }

    pub fn remove_edge(&mut self, parent: usize, child: usize) -> bool {
        self.edges.remove(&(parent, child))
    }

    /// Kahn's algorithm; smallest ready index first.
    pub fn topological_order(&self) -> Result<Vec<usize>> {
        let d = self.node_count;
        let mut indegree = vec![0usize; d];
        let mut children = vec![Vec::new(); d];
        for &(p, c) in &self.edges {
            indegree[c] += 1;
            children[p].push(c);
        }
        let mut ready: BTreeSet<usize> = (0..d).filter(|&i| indegree[i] == 0).collect();
        let mut order = Vec::with_capacity(d);
        while let Some(v) = ready.pop_first() {
            order.push(v);
            for &c in &children[v] {
                indegree[c] -= 1;
                if indegree[c] == 0 {
                    ready.insert(c);
                }
            }
        }
        if order.len() == d {
            Ok(order)
        } else {
            Err(Error::Cyclic)
        }
    }
}

/// Ground-truth Bayesian network with linear-Gaussian mechanisms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthBn {
    pub dag: Dag,
    #[serde(with = "weight_map")]
    pub edge_weights: BTreeMap<(usize, usize), f64>,
    pub noise_variances: Vec<f64>,
}

mod weight_map {
    use std::collections::BTreeMap;

    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(
        map: &BTreeMap<(usize, usize), f64>,
        s: S,
    ) -> Result<S::Ok, S::Error> {
        let rows: Vec<(usize, usize, f64)> = map.iter().map(|(&(p, c), &w)| (p, c, w)).collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> Result<BTreeMap<(usize, usize), f64>, D::Error> {
        let rows: Vec<(usize, usize, f64)> = Vec::deserialize(d)?;
        Ok(rows.into_iter().map(|(p, c, w)| ((p, c), w)).collect())
    }
}

/// Observational data, stored as one vector per variable.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    rows: usize,
    columns: Vec<Vec<f64>>,
}

impl DataMatrix {
    pub fn from_columns(columns: Vec<Vec<f64>>) -> Result<Self> {
        let rows = columns.first().map_or(0, Vec::len);
        if columns.is_empty() {
            return Err(Error::InvalidArgument("data needs at least one column".into()));
        }
        if columns.iter().any(|c| c.len() != rows) {
            return Err(Error::InvalidArgument("ragged data columns".into()));
        }
        if columns.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("data contains non-finite values".into()));
        }
        Ok(Self { rows, columns })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::InvalidArgument("ragged data rows".into()));
        }
        let columns = (0..d).map(|j| rows.iter().map(|r| r[j]).collect()).collect();
        Self::from_columns(columns)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.columns[j]
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.columns[col][row]
    }

    /// Headerless CSV, one row per observation, 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for r in 0..self.rows {
            for (j, col) in self.columns.iter().enumerate() {
                if j > 0 {
                    out.push(',');
                }
                write!(out, "{:.16e}", col[r]).unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let rows = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .enumerate()
            .map(|(i, line)| {
                line.split(',')
                    .map(|field| {
                        field.trim().parse::<f64>().map_err(|e| {
                            Error::Format(format!("row {}: {field:?}: {e}", i + 1))
                        })
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        if rows.is_empty() {
            return Err(Error::Format("empty data file".into()));
        }
        Self::from_rows(&rows)
    }
}

/// Samples a DAG-restricted Erdős–Rényi graph: a uniform random topological
/// order, then each forward pair independently with probability
/// `avg_edges_per_node * d / C(d, 2)`, clamped to `[0, 1]`.
pub fn generate_er_dag(d: usize, avg_edges_per_node: f64, seed: u64) -> Result<Dag> {
    if d == 0 {
        return Err(Error::InvalidArgument("d must be at least 1".into()));
    }
    if !(avg_edges_per_node >= 0.0) {
        return Err(Error::InvalidArgument("avg_edges_per_node must be >= 0".into()));
    }
    let mut rng = rng_from_seed(seed);
    let mut order: Vec<usize> = (0..d).collect();
    order.shuffle(&mut rng);
    let p = edge_probability(d, avg_edges_per_node);
    let mut edges = BTreeSet::new();
    for i in 0..d {
        for j in (i + 1)..d {
            if rng.random::<f64>() < p {
                edges.insert((order[i], order[j]));
            }
        }
    }
    Ok(Dag { node_count: d, edges })
}

pub fn edge_probability(d: usize, avg_edges_per_node: f64) -> f64 {
    let pairs = (d * d.saturating_sub(1) / 2) as f64;
    if pairs == 0.0 {
        return 0.0;
    }
    (avg_edges_per_node * d as f64 / pairs).clamp(0.0, 1.0)
}

/// Edge weights uniform on `±[0.5, 2.0]`, noise variances uniform on `[0.5, 2.0]`.
pub fn generate_mechanisms(dag: &Dag, seed: u64) -> GroundTruthBn {
    let mut rng = rng_from_seed(seed);
    let edge_weights = dag
        .edges()
        .iter()
        .map(|&e| {
            let magnitude = rng.random_range(0.5..=2.0);
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            (e, sign * magnitude)
        })
        .collect();
    let noise_variances = (0..dag.node_count())
        .map(|_| rng.random_range(0.5..=2.0))
        .collect();
    GroundTruthBn {
        dag: dag.clone(),
        edge_weights,
        noise_variances,
    }
}

/// Ancestral sampling in topological order.
pub fn sample_data(bn: &GroundTruthBn, n: usize, seed: u64) -> Result<DataMatrix> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    let d = bn.dag.node_count();
    let mut rng = rng_from_seed(seed);
    let mut columns = vec![Vec::new(); d];
    for v in bn.dag.topological_order()? {
        let sd = bn.noise_variances[v].sqrt();
        let noise = Normal::new(0.0, sd)
            .map_err(|e| Error::InvalidArgument(format!("noise variance of node {v}: {e}")))?;
        let parents: Vec<(usize, f64)> = bn
            .dag
            .parents(v)
            .into_iter()
            .map(|p| (p, bn.edge_weights[&(p, v)]))
            .collect();
        let col = (0..n)
            .map(|r| {
                let mean: f64 = parents.iter().map(|&(p, w)| w * columns[p][r]).sum();
                mean + noise.sample(&mut rng)
            })
            .collect();
        columns[v] = col;
    }
    DataMatrix::from_columns(columns)
}
