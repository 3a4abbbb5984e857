//! Posterior sampling over orderings and evaluation against a known graph.
//!
//! Each node has a [`MarginalBackend`] answering marginal queries over its
//! parent indicators. An ordering is scored by marginalizing every
//! predecessor and zeroing every successor; order MCMC explores orderings,
//! and DAGs are drawn from an ordering by sequential conditioning.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bge::LocalScorer;
use crate::circuit::Circuit;
use crate::dp::{build_table, select_candidates, CandidateSet, DpTable};
use crate::error::{Error, Result};
use crate::logspace::log_sum_exp;
use crate::pattern::{QueryPattern, State};
use crate::synthesis::{rng_from_seed, Dag};
use crate::trainer::{learn_node_circuit, TrainConfig, TrainingReport};

/// Tolerance on conditionals before a backend is declared inconsistent.
const PROB_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Ordering {
    sigma: Vec<usize>,
    rank: Vec<usize>,
}

impl Ordering {
    pub fn new(sigma: Vec<usize>) -> Result<Self> {
        let mut rank = vec![usize::MAX; sigma.len()];
        for (pos, &node) in sigma.iter().enumerate() {
            if node >= sigma.len() || rank[node] != usize::MAX {
                return Err(Error::InvalidArgument(format!("{sigma:?} is not a permutation")));
            }
            rank[node] = pos;
        }
        Ok(Self { sigma, rank })
    }

    pub fn identity(d: usize) -> Self {
        Self {
            sigma: (0..d).collect(),
            rank: (0..d).collect(),
        }
    }

    pub fn random(d: usize, rng: &mut impl Rng) -> Self {
        let mut sigma: Vec<usize> = (0..d).collect();
        sigma.shuffle(rng);
        Self::new(sigma).expect("shuffle keeps a permutation")
    }

    pub fn len(&self) -> usize {
        self.sigma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigma.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.sigma
    }

    /// Position of `node` in the ordering.
    pub fn rank(&self, node: usize) -> usize {
        self.rank[node]
    }

    pub fn precedes(&self, a: usize, b: usize) -> bool {
        self.rank[a] < self.rank[b]
    }

    /// Swaps the nodes at positions `i` and `i + 1`.
    pub fn swap_adjacent(&mut self, i: usize) {
        self.sigma.swap(i, i + 1);
        self.rank[self.sigma[i]] = i;
        self.rank[self.sigma[i + 1]] = i + 1;
    }

    /// Whether every edge of `dag` points forward in this ordering.
    pub fn is_consistent(&self, dag: &Dag) -> bool {
        dag.edges().iter().all(|&(p, c)| self.precedes(p, c))
    }
}

impl TryFrom<Vec<usize>> for Ordering {
    type Error = Error;

    fn try_from(sigma: Vec<usize>) -> Result<Self> {
        Self::new(sigma)
    }
}

impl From<Ordering> for Vec<usize> {
    fn from(o: Ordering) -> Self {
        o.sigma
    }
}

/// Per-node source of marginal masses.
#[derive(Debug, Clone)]
pub enum MarginalBackend {
    Circuit(Circuit),
    Table(DpTable),
}

impl MarginalBackend {
    pub fn query(&self, pattern: &QueryPattern) -> Result<f64> {
        match self {
            Self::Circuit(c) => c.evaluate(pattern),
            Self::Table(t) => t.query(pattern),
        }
    }

    /// Whether `node` may ever be a parent. A restricted table only
    /// considers its candidates; other nodes are held at Zero.
    pub fn admits(&self, node: usize) -> bool {
        match self {
            Self::Circuit(_) => true,
            Self::Table(t) => t.candidates().contains(node),
        }
    }
}

/// Which marginalizer answers ordering queries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    /// A trained circuit per node.
    Pc,
    /// An exact table over every other node.
    DpFull,
    /// An exact table over the best `size` singleton candidates.
    DpRestricted(usize),
}

impl BackendKind {
    pub fn name(self) -> String {
        match self {
            Self::Pc => "pc".into(),
            Self::DpFull => "dp_full".into(),
            Self::DpRestricted(k) => format!("dp_restricted({k})"),
        }
    }
}

impl std::fmt::Display for BackendKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.name())
    }
}

impl std::str::FromStr for BackendKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pc" => Ok(Self::Pc),
            "dp_full" => Ok(Self::DpFull),
            _ => s
                .strip_prefix("dp_restricted(")
                .and_then(|r| r.strip_suffix(')'))
                .and_then(|k| k.parse().ok())
                .map(Self::DpRestricted)
                .ok_or_else(|| Error::InvalidArgument(format!("unknown backend {s:?}"))),
        }
    }
}

/// Exact tables for every node.
pub fn dp_backends(scorer: &LocalScorer, restrict: Option<usize>) -> Result<Vec<MarginalBackend>> {
    let d = scorer.node_count();
    (0..d)
        .map(|i| {
            let candidates = match restrict {
                Some(k) if k < d - 1 => select_candidates(scorer, i, k)?,
                _ => CandidateSet::full(i, d),
            };
            Ok(MarginalBackend::Table(build_table(scorer, &candidates)?))
        })
        .collect()
}

/// Trained circuits for every node, with their training reports.
pub fn pc_backends(scorer: &LocalScorer, config: &TrainConfig) -> Result<(Vec<MarginalBackend>, Vec<TrainingReport>)> {
    let mut backends = Vec::new();
    let mut reports = Vec::new();
    for i in 0..scorer.node_count() {
        let (circuit, report) = learn_node_circuit(scorer, i, config)?;
        backends.push(MarginalBackend::Circuit(circuit));
        reports.push(report);
    }
    Ok((backends, reports))
}

/// The marginal/zero pattern for `target` under `order`: admitted
/// predecessors marginalized, everything else Zero.
pub fn ordering_pattern(backend: &MarginalBackend, target: usize, order: &Ordering) -> QueryPattern {
    let d = order.len();
    let mut pattern = QueryPattern::filled(target, d - 1, State::Zero);
    for pos in 0..d - 1 {
        let node = pattern.node_at(pos);
        if order.precedes(node, target) && backend.admits(node) {
            pattern.set(pos, State::Marginalized);
        }
    }
    pattern
}

fn check_backends(backends: &[MarginalBackend], order: &Ordering) -> Result<()> {
    if backends.len() != order.len() {
        return Err(Error::InvalidArgument(format!(
            "{} backends for an ordering of {} nodes",
            backends.len(),
            order.len()
        )));
    }
    Ok(())
}

fn node_term(backends: &[MarginalBackend], node: usize, order: &Ordering) -> Result<f64> {
    backends[node].query(&ordering_pattern(&backends[node], node, order))
}

/// Log of the summed score of every DAG consistent with `order`.
pub fn score_ordering(backends: &[MarginalBackend], order: &Ordering) -> Result<f64> {
    check_backends(backends, order)?;
    (0..order.len()).map(|i| node_term(backends, i, order)).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct McmcConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    /// Number of DAGs drawn per retained ordering.
    pub dags_per_ordering: usize,
    pub seed: u64,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self {
            iterations: 20_000,
            burn_in: 5_000,
            thin: 15,
            dags_per_ordering: 1,
            seed: 0,
        }
    }
}

impl McmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations <= self.burn_in {
            return Err(Error::InvalidArgument("iterations must exceed burn-in".into()));
        }
        if self.thin == 0 || self.dags_per_ordering == 0 {
            return Err(Error::InvalidArgument("thin and dags per ordering must be positive".into()));
        }
        Ok(())
    }
}

/// Metropolis-Hastings over orderings. Each step proposes one of the `d - 1`
/// adjacent transpositions or staying put, uniformly.
///
/// Iteration `t` is retained when `t >= burn_in` and `(t - burn_in) % thin
/// == 0`. Every iteration consumes the same random draws whatever `thin` is,
/// so thinning commutes with sampling.
pub fn order_mcmc(backends: &[MarginalBackend], config: &McmcConfig) -> Result<Vec<Ordering>> {
    config.validate()?;
    let d = backends.len();
    let mut rng = rng_from_seed(config.seed);
    let mut order = Ordering::random(d, &mut rng);
    let mut terms = (0..d)
        .map(|i| node_term(backends, i, &order))
        .collect::<Result<Vec<f64>>>()?;
    let mut kept = Vec::new();
    for t in 0..config.iterations {
        // Index d - 1 is a null move; without it a flat target makes the
        // chain alternate parity and never mix.
        let i = rng.random_range(0..d);
        let u: f64 = rng.random();
        if i + 1 < d {
            let (a, b) = (order.as_slice()[i], order.as_slice()[i + 1]);
            order.swap_adjacent(i);
            let new_a = node_term(backends, a, &order)?;
            let new_b = node_term(backends, b, &order)?;
            let delta = new_a + new_b - terms[a] - terms[b];
            if acceptance_probability(delta) > u {
                terms[a] = new_a;
                terms[b] = new_b;
            } else {
                order.swap_adjacent(i);
            }
        }
        if t >= config.burn_in && (t - config.burn_in).is_multiple_of(config.thin) {
            kept.push(order.clone());
        }
    }
    Ok(kept)
}

/// Metropolis acceptance probability for a log-score change under a
/// symmetric proposal.
pub fn acceptance_probability(delta: f64) -> f64 {
    if delta >= 0.0 {
        1.0
    } else {
        delta.exp()
    }
}

/// Draws a complete parent pattern for `target` consistent with `order`.
///
/// Predecessors are assigned one at a time in pattern order, each with
/// probability `exp(q(One) - q(Marginalized))` given earlier assignments.
pub fn sample_parents(
    backend: &MarginalBackend,
    target: usize,
    order: &Ordering,
    rng: &mut impl Rng,
) -> Result<QueryPattern> {
    let mut pattern = ordering_pattern(backend, target, order);
    let mut current = backend.query(&pattern)?;
    for pos in 0..pattern.len() {
        if pattern.get(pos) != State::Marginalized {
            continue;
        }
        let with_one = backend.query(&pattern.with(pos, State::One))?;
        let with_zero = backend.query(&pattern.with(pos, State::Zero))?;
        let p_one = (with_one - current).exp();
        let p_zero = (with_zero - current).exp();
        for p in [p_one, p_zero] {
            if !(-PROB_TOLERANCE..=1.0 + PROB_TOLERANCE).contains(&p) {
                return Err(Error::InconsistentBackend {
                    parent: pattern.node_at(pos),
                    value: p,
                });
            }
        }
        if rng.random::<f64>() < p_one {
            pattern.set(pos, State::One);
            current = with_one;
        } else {
            pattern.set(pos, State::Zero);
            current = with_zero;
        }
    }
    Ok(pattern)
}

/// Draws one DAG consistent with `order`.
pub fn sample_dag(backends: &[MarginalBackend], order: &Ordering, rng: &mut impl Rng) -> Result<Dag> {
    check_backends(backends, order)?;
    let parents = (0..order.len())
        .map(|i| sample_parents(&backends[i], i, order, rng).map(|p| p.parents()))
        .collect::<Result<Vec<_>>>()?;
    Dag::from_parent_sets(&parents)
}

/// Runs order MCMC and draws DAGs from the retained orderings.
pub fn sample_posterior(backends: &[MarginalBackend], config: &McmcConfig) -> Result<Vec<Dag>> {
    let orderings = order_mcmc(backends, config)?;
    let mut rng = rng_from_seed(config.seed ^ 0x5eed_da65);
    let mut dags = Vec::with_capacity(orderings.len() * config.dags_per_ordering);
    for order in &orderings {
        for _ in 0..config.dags_per_ordering {
            dags.push(sample_dag(backends, order, &mut rng)?);
        }
    }
    Ok(dags)
}

/// Completed partially directed graph of a Markov equivalence class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cpdag {
    pub node_count: usize,
    pub directed: BTreeSet<(usize, usize)>,
    /// Stored as `(a, b)` with `a < b`.
    pub undirected: BTreeSet<(usize, usize)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairMark {
    Absent,
    Undirected,
    Forward,
    Backward,
}

impl Cpdag {
    fn is_directed(&self, a: usize, b: usize) -> bool {
        self.directed.contains(&(a, b))
    }

    fn is_undirected(&self, a: usize, b: usize) -> bool {
        self.undirected.contains(&(a.min(b), a.max(b)))
    }

    fn adjacent(&self, a: usize, b: usize) -> bool {
        self.is_directed(a, b) || self.is_directed(b, a) || self.is_undirected(a, b)
    }

    fn orient(&mut self, a: usize, b: usize) {
        self.undirected.remove(&(a.min(b), a.max(b)));
        self.directed.insert((a, b));
    }

    /// Edge mark between `a < b`.
    pub fn mark(&self, a: usize, b: usize) -> PairMark {
        if self.is_directed(a, b) {
            PairMark::Forward
        } else if self.is_directed(b, a) {
            PairMark::Backward
        } else if self.is_undirected(a, b) {
            PairMark::Undirected
        } else {
            PairMark::Absent
        }
    }

    pub fn edge_count(&self) -> usize {
        self.directed.len() + self.undirected.len()
    }
}

/// Skeleton plus v-structures, closed under Meek's orientation rules 1-3.
pub fn dag_to_cpdag(dag: &Dag) -> Cpdag {
    let d = dag.node_count();
    let mut g = Cpdag {
        node_count: d,
        directed: BTreeSet::new(),
        undirected: dag.edges().iter().map(|&(a, b)| (a.min(b), a.max(b))).collect(),
    };
    for c in 0..d {
        let parents = dag.parents(c);
        for (i, &a) in parents.iter().enumerate() {
            for &b in &parents[i + 1..] {
                if !dag.adjacent(a, b) {
                    g.orient(a, c);
                    g.orient(b, c);
                }
            }
        }
    }
    loop {
        let mut changed = false;
        let undirected: Vec<(usize, usize)> = g.undirected.iter().copied().collect();
        for (x, y) in undirected {
            for (a, b) in [(x, y), (y, x)] {
                if g.is_undirected(a, b) && meek_orients(&g, a, b) {
                    g.orient(a, b);
                    changed = true;
                }
            }
        }
        if !changed {
            return g;
        }
    }
}

/// Whether one of Meek's rules 1-3 forces the undirected edge `a - b` to `a -> b`.
fn meek_orients(g: &Cpdag, a: usize, b: usize) -> bool {
    let d = g.node_count;
    // Rule 1: c -> a - b with c, b non-adjacent.
    if (0..d).any(|c| g.is_directed(c, a) && !g.adjacent(c, b) && c != b) {
        return true;
    }
    // Rule 2: a -> c -> b.
    if (0..d).any(|c| g.is_directed(a, c) && g.is_directed(c, b)) {
        return true;
    }
    // Rule 3: a - c -> b and a - e -> b with c, e non-adjacent.
    let middles: Vec<usize> = (0..d)
        .filter(|&c| g.is_undirected(a, c) && g.is_directed(c, b))
        .collect();
    middles
        .iter()
        .enumerate()
        .any(|(i, &c)| middles[i + 1..].iter().any(|&e| !g.adjacent(c, e)))
}

/// Pairs whose CPDAG marks differ.
pub fn shd(a: &Cpdag, b: &Cpdag) -> usize {
    let d = a.node_count;
    let mut count = 0;
    for i in 0..d {
        for j in i + 1..d {
            if a.mark(i, j) != b.mark(i, j) {
                count += 1;
            }
        }
    }
    count
}

pub fn expected_shd(samples: &[Dag], truth: &Dag) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("no DAG samples".into()));
    }
    let reference = dag_to_cpdag(truth);
    let total: usize = samples.iter().map(|s| shd(&dag_to_cpdag(s), &reference)).sum();
    Ok(total as f64 / samples.len() as f64)
}

/// Fraction of samples containing each directed edge, indexed `[parent][child]`.
pub fn edge_marginals(samples: &[Dag], d: usize) -> Vec<Vec<f64>> {
    let mut m = vec![vec![0.0; d]; d];
    for s in samples {
        for &(p, c) in s.edges() {
            m[p][c] += 1.0;
        }
    }
    let n = samples.len().max(1) as f64;
    for row in &mut m {
        for v in row {
            *v /= n;
        }
    }
    m
}

/// Area under the ROC curve of `scores` against `labels`, tied scores
/// contributing half.
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let positives = labels.iter().filter(|&&l| l).count();
    let negatives = labels.len() - positives;
    if positives == 0 {
        return Err(Error::DegenerateTruth("no positive pairs"));
    }
    if negatives == 0 {
        return Err(Error::DegenerateTruth("no negative pairs"));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let (mut tp, mut fp, mut area) = (0usize, 0usize, 0.0);
    let mut i = 0;
    while i < idx.len() {
        let (tp0, fp0) = (tp, fp);
        let mut j = i;
        while j < idx.len() && scores[idx[j]] == scores[idx[i]] {
            if labels[idx[j]] {
                tp += 1;
            } else {
                fp += 1;
            }
            j += 1;
        }
        area += (fp - fp0) as f64 * (tp + tp0) as f64 / 2.0;
        i = j;
    }
    Ok(area / (positives * negatives) as f64)
}

/// AUROC of posterior edge marginals over all ordered pairs.
pub fn edge_auroc(samples: &[Dag], truth: &Dag) -> Result<f64> {
    let d = truth.node_count();
    let marginals = edge_marginals(samples, d);
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for p in 0..d {
        for c in 0..d {
            if p != c {
                scores.push(marginals[p][c]);
                labels.push(truth.has_edge(p, c));
            }
        }
    }
    auroc(&scores, &labels)
}

/// Log of the mean of `exp(score)` over the sampled graphs, scored on
/// held-out data.
pub fn mll(samples: &[Dag], test_scorer: &LocalScorer) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("no DAG samples".into()));
    }
    let scores = samples
        .iter()
        .map(|s| test_scorer.score_graph(s))
        .collect::<Result<Vec<_>>>()?;
    Ok(log_sum_exp(&scores) - (samples.len() as f64).ln())
}

pub fn mean_edges(samples: &[Dag]) -> f64 {
    let total: usize = samples.iter().map(Dag::edge_count).sum();
    total as f64 / samples.len().max(1) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub method: String,
    pub d: usize,
    pub seed: u64,
    pub e_shd: f64,
    pub auroc: f64,
    pub mll: f64,
    pub mean_edges: f64,
}

impl MetricsRow {
    pub const HEADER: &'static str = "method,d,seed,e_shd,auroc,mll,mean_edges";

    pub fn compute(
        method: &str,
        seed: u64,
        samples: &[Dag],
        truth: &Dag,
        test_scorer: &LocalScorer,
    ) -> Result<Self> {
        Ok(Self {
            method: method.to_string(),
            d: truth.node_count(),
            seed,
            e_shd: expected_shd(samples, truth)?,
            auroc: edge_auroc(samples, truth)?,
            mll: mll(samples, test_scorer)?,
            mean_edges: mean_edges(samples),
        })
    }

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{:.16e},{:.16e},{:.16e},{:.16e}",
            self.method, self.d, self.seed, self.e_shd, self.auroc, self.mll, self.mean_edges
        )
    }
}

pub fn dags_to_jsonl(samples: &[Dag]) -> Result<String> {
    let mut out = String::new();
    for s in samples {
        out.push_str(&serde_json::to_string(s)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn dags_from_jsonl(text: &str) -> Result<Vec<Dag>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::CircuitConfig;
    use crate::dp::{build_table, CandidateSet};
    use crate::synthesis::{generate_er_dag, generate_mechanisms, sample_data};

    fn scorer(d: usize, seed: u64) -> LocalScorer {
        let dag = generate_er_dag(d, 1.5, seed).unwrap();
        let data = sample_data(&generate_mechanisms(&dag, seed + 1), 60, seed + 2).unwrap();
        LocalScorer::from_data(&data).unwrap()
    }

    fn tables(s: &LocalScorer) -> Vec<MarginalBackend> {
        let d = s.node_count();
        (0..d)
            .map(|i| MarginalBackend::Table(build_table(s, &CandidateSet::full(i, d)).unwrap()))
            .collect()
    }

    #[test]
    fn ordering_rejects_non_permutations() {
        assert!(Ordering::new(vec![0, 0]).is_err());
        assert!(Ordering::new(vec![0, 2]).is_err());
        let mut o = Ordering::new(vec![2, 0, 1]).unwrap();
        assert!(o.precedes(2, 1));
        o.swap_adjacent(1);
        assert_eq!(o.as_slice(), &[2, 1, 0]);
        assert_eq!(o.rank(0), 2);
    }

    #[test]
    fn single_node_scores_empty_parent_set() {
        let data = crate::synthesis::DataMatrix::from_columns(vec![vec![0.3, -1.0, 2.0, 0.1]]).unwrap();
        let s = LocalScorer::from_data(&data).unwrap();
        let b = tables(&s);
        let v = score_ordering(&b, &Ordering::identity(1)).unwrap();
        assert!((v - s.local_score_parents(0, &[]).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn first_node_contributes_all_zero_mass() {
        let s = scorer(4, 3);
        let b = tables(&s);
        let o = Ordering::new(vec![2, 0, 3, 1]).unwrap();
        let p = ordering_pattern(&b[2], 2, &o);
        assert_eq!(p.count(State::Zero), 3);
        assert!((node_term(&b, 2, &o).unwrap() - s.local_score_parents(2, &[]).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn score_increasing_proposals_always_accept() {
        assert_eq!(acceptance_probability(0.0), 1.0);
        assert_eq!(acceptance_probability(3.5), 1.0);
        assert!((acceptance_probability(-1.0) - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn thinning_commutes_with_sampling() {
        let b = tables(&scorer(4, 9));
        let base = McmcConfig {
            iterations: 600,
            burn_in: 100,
            thin: 1,
            dags_per_ordering: 1,
            seed: 5,
        };
        let all = order_mcmc(&b, &base).unwrap();
        let thinned = order_mcmc(&b, &McmcConfig { thin: 7, ..base }).unwrap();
        let expected: Vec<Ordering> = all.into_iter().step_by(7).collect();
        assert_eq!(thinned, expected);
        assert!(order_mcmc(&b, &McmcConfig { iterations: 100, ..base }).is_err());
    }

    #[test]
    fn first_position_has_no_parents() {
        let b = tables(&scorer(4, 1));
        let o = Ordering::new(vec![3, 1, 0, 2]).unwrap();
        let mut rng = rng_from_seed(0);
        for _ in 0..20 {
            assert!(sample_parents(&b[3], 3, &o, &mut rng).unwrap().parents().is_empty());
        }
    }

    #[test]
    fn conditionals_multiply_to_complete_mass() {
        let c = Circuit::new(CircuitConfig::new(4, 3, 2, -1.0)).unwrap();
        let backend = MarginalBackend::Circuit(c);
        let o = Ordering::new(vec![1, 4, 0, 2, 3]).unwrap();
        let start = backend.query(&ordering_pattern(&backend, 2, &o)).unwrap();
        let mut rng = rng_from_seed(4);
        for _ in 0..20 {
            let p = sample_parents(&backend, 2, &o, &mut rng).unwrap();
            assert!(p.is_complete());
            assert!(p.parents().iter().all(|&j| o.precedes(j, 2)));
            // Replay the draw, multiplying the conditionals taken.
            let mut replay = ordering_pattern(&backend, 2, &o);
            let mut log_prob = 0.0;
            let mut current = start;
            for pos in 0..replay.len() {
                if replay.get(pos) == State::Marginalized {
                    replay.set(pos, p.get(pos));
                    let next = backend.query(&replay).unwrap();
                    log_prob += next - current;
                    current = next;
                }
            }
            let direct = backend.query(&p).unwrap() - start;
            assert!((log_prob.exp() - direct.exp()).abs() < 1e-8);
        }
    }

    #[test]
    fn restricted_tables_never_sample_outside_candidates() {
        let s = scorer(5, 2);
        let t = build_table(&s, &CandidateSet::new(0, vec![2, 4]).unwrap()).unwrap();
        let backend = MarginalBackend::Table(t);
        let o = Ordering::new(vec![4, 3, 2, 1, 0]).unwrap();
        let mut rng = rng_from_seed(8);
        for _ in 0..50 {
            let p = sample_parents(&backend, 0, &o, &mut rng).unwrap();
            assert!(p.parents().iter().all(|&j| j == 2 || j == 4));
        }
    }

    #[test]
    fn cpdag_basic_shapes() {
        let chain = dag_to_cpdag(&Dag::new(3, [(0, 1), (1, 2)]).unwrap());
        assert!(chain.directed.is_empty());
        assert_eq!(chain.undirected.len(), 2);
        let collider = dag_to_cpdag(&Dag::new(3, [(0, 2), (1, 2)]).unwrap());
        assert_eq!(collider.directed, [(0, 2), (1, 2)].into_iter().collect());
        let single = dag_to_cpdag(&Dag::new(2, [(0, 1)]).unwrap());
        assert_eq!(single.mark(0, 1), PairMark::Undirected);
        // Collider followed by a chain: the tail edge is forced by rule 1.
        let forced = dag_to_cpdag(&Dag::new(4, [(0, 2), (1, 2), (2, 3)]).unwrap());
        assert_eq!(forced.mark(2, 3), PairMark::Forward);
    }

    #[test]
    fn shd_examples() {
        let truth = Dag::new(2, [(0, 1)]).unwrap();
        assert_eq!(expected_shd(&[truth.clone(), truth.clone()], &truth).unwrap(), 0.0);
        assert_eq!(expected_shd(&[Dag::empty(2)], &truth).unwrap(), 1.0);
        assert!(expected_shd(&[], &truth).is_err());
    }

    #[test]
    fn auroc_examples() {
        let truth = Dag::new(3, [(0, 1), (1, 2)]).unwrap();
        assert_eq!(edge_auroc(&[truth.clone()], &truth).unwrap(), 1.0);
        assert_eq!(edge_auroc(&[Dag::empty(3)], &truth).unwrap(), 0.5);
        assert!(matches!(
            edge_auroc(&[truth.clone()], &Dag::empty(3)),
            Err(Error::DegenerateTruth(_))
        ));
    }

    #[test]
    fn mll_single_and_duplicated() {
        let s = scorer(4, 6);
        let g = Dag::new(4, [(0, 1), (2, 3)]).unwrap();
        let h = Dag::new(4, [(1, 3)]).unwrap();
        assert!((mll(&[g.clone()], &s).unwrap() - s.score_graph(&g).unwrap()).abs() < 1e-12);
        let once = mll(&[g.clone(), h.clone()], &s).unwrap();
        let twice = mll(&[g.clone(), h.clone(), g, h], &s).unwrap();
        assert!((once - twice).abs() < 1e-12);
    }

    #[test]
    fn jsonl_and_csv_round_trip() {
        let dags = vec![Dag::new(3, [(0, 2)]).unwrap(), Dag::empty(3)];
        let text = dags_to_jsonl(&dags).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert_eq!(dags_from_jsonl(&text).unwrap(), dags);
        let row = MetricsRow {
            method: "pc".into(),
            d: 3,
            seed: 1,
            e_shd: 0.1,
            auroc: 0.75,
            mll: -12.5,
            mean_edges: 1.0,
        };
        let line = row.to_csv_row();
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), MetricsRow::HEADER.split(',').count());
        assert_eq!(fields[4].parse::<f64>().unwrap(), 0.75);
    }
}
