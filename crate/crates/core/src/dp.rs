//! Exact marginalization over a candidate parent set by dynamic programming.
//!
//! The table holds one log-mass per ternary assignment of the candidates
//! (digit `i` is the state of the `i`-th candidate: 0 = Zero, 1 = One,
//! 2 = Marginalized). Fully assigned entries are local scores; every other
//! entry is the log-sum of the two entries obtained by fixing its lowest
//! marginalized digit to Zero and to One. Both operands have a smaller
//! index, so a single ascending sweep fills the table.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bge::LocalScorer;
use crate::error::{Error, Result};
use crate::logspace::log_add_exp;
use crate::pattern::{QueryPattern, State};

pub const DEFAULT_TABLE_CAP: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateSet {
    target: usize,
    members: Vec<usize>,
}

impl CandidateSet {
    pub fn new(target: usize, members: Vec<usize>) -> Result<Self> {
        if members.contains(&target) {
            return Err(Error::InvalidArgument(format!(
                "target {target} cannot be its own candidate parent"
            )));
        }
        let mut seen = members.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != members.len() {
            return Err(Error::InvalidArgument("duplicate candidate parents".into()));
        }
        Ok(Self { target, members })
    }

    /// Every node except the target.
    pub fn full(target: usize, node_count: usize) -> Self {
        Self {
            target,
            members: (0..node_count).filter(|&j| j != target).collect(),
        }
    }

    pub fn target(&self) -> usize {
        self.target
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, node: usize) -> bool {
        self.members.contains(&node)
    }
}

/// Picks the `size` nodes with the largest singleton score gain
/// `score({j}) - score({})`, ties broken by ascending index. Members are
/// returned in ascending node order.
pub fn select_candidates(scorer: &LocalScorer, target: usize, size: usize) -> Result<CandidateSet> {
    let d = scorer.node_count();
    if target >= d {
        return Err(Error::InvalidArgument(format!("target {target} out of range")));
    }
    if size > d - 1 {
        return Err(Error::InvalidArgument(format!(
            "candidate size {size} exceeds the {} other nodes",
            d - 1
        )));
    }
    let base = scorer.local_score_parents(target, &[])?;
    let mut gains = (0..d)
        .filter(|&j| j != target)
        .map(|j| Ok((j, scorer.local_score_parents(target, &[j])? - base)))
        .collect::<Result<Vec<_>>>()?;
    gains.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut members: Vec<usize> = gains.into_iter().take(size).map(|(j, _)| j).collect();
    members.sort_unstable();
    CandidateSet::new(target, members)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TableHeader {
    node_count: usize,
    candidates: CandidateSet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DpTable {
    node_count: usize,
    candidates: CandidateSet,
    /// Position in `candidates` of each node, if it is a candidate.
    digit_of: Vec<Option<usize>>,
    masses: Vec<f64>,
}

pub fn build_table(scorer: &LocalScorer, candidates: &CandidateSet) -> Result<DpTable> {
    build_table_with_cap(scorer, candidates, DEFAULT_TABLE_CAP)
}

pub fn build_table_with_cap(
    scorer: &LocalScorer,
    candidates: &CandidateSet,
    cap: usize,
) -> Result<DpTable> {
    let target = candidates.target();
    build_table_from_scores(scorer.node_count(), candidates, cap, |mask| {
        scorer.score_mask(target, mask)
    })
}

/// Builds a table from an arbitrary complete-pattern score, given as a
/// function of the parent bitmask over node indices.
pub fn build_table_from_scores<F>(
    node_count: usize,
    candidates: &CandidateSet,
    cap: usize,
    score: F,
) -> Result<DpTable>
where
    F: Fn(u64) -> Result<f64> + Sync,
{
    let m = candidates.len();
    if m > cap {
        return Err(Error::TableTooLarge { size: m, cap });
    }
    if candidates.target() >= node_count || candidates.members().iter().any(|&j| j >= node_count) {
        return Err(Error::InvalidArgument("candidate set out of range".into()));
    }
    let pow3 = powers_of_three(m);

    let base: Vec<(usize, f64)> = (0..1usize << m)
        .into_par_iter()
        .map(|bits| {
            let mut mask = 0u64;
            let mut idx = 0usize;
            for (i, &node) in candidates.members().iter().enumerate() {
                if bits >> i & 1 == 1 {
                    mask |= 1 << node;
                    idx += pow3[i];
                }
            }
            score(mask).map(|s| (idx, s))
        })
        .collect::<Result<_>>()?;

    let size = pow3[m];
    let mut masses = vec![f64::NAN; size];
    for (idx, s) in base {
        masses[idx] = s;
    }
    for idx in 0..size {
        if let Some(b) = lowest_marginalized_digit(idx, m) {
            let zero = idx - 2 * pow3[b];
            let one = idx - pow3[b];
            masses[idx] = log_add_exp(masses[zero], masses[one]);
        }
    }
    Ok(DpTable::from_masses(node_count, candidates.clone(), masses))
}

fn powers_of_three(m: usize) -> Vec<usize> {
    let mut p = vec![1usize; m + 1];
    for i in 1..=m {
        p[i] = p[i - 1] * 3;
    }
    p
}

fn lowest_marginalized_digit(mut idx: usize, m: usize) -> Option<usize> {
    for b in 0..m {
        if idx % 3 == 2 {
            return Some(b);
        }
        idx /= 3;
    }
    None
}

impl DpTable {
    fn from_masses(node_count: usize, candidates: CandidateSet, masses: Vec<f64>) -> Self {
        let mut digit_of = vec![None; node_count];
        for (i, &node) in candidates.members().iter().enumerate() {
            digit_of[node] = Some(i);
        }
        Self {
            node_count,
            candidates,
            digit_of,
            masses,
        }
    }

    pub fn candidates(&self) -> &CandidateSet {
        &self.candidates
    }

    pub fn target(&self) -> usize {
        self.candidates.target()
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    /// Ternary index of a per-candidate state assignment.
    pub fn index_of(&self, digits: &[State]) -> usize {
        digits.iter().rev().fold(0, |acc, s| {
            acc * 3
                + match s {
                    State::Zero => 0,
                    State::One => 1,
                    State::Marginalized => 2,
                }
        })
    }

    /// Per-candidate states for a ternary index.
    pub fn digits_of(&self, mut idx: usize) -> Vec<State> {
        (0..self.candidates.len())
            .map(|_| {
                let s = match idx % 3 {
                    0 => State::Zero,
                    1 => State::One,
                    _ => State::Marginalized,
                };
                idx /= 3;
                s
            })
            .collect()
    }

    /// Constant-time lookup. Positions outside the candidate set must be Zero.
    pub fn query(&self, pattern: &QueryPattern) -> Result<f64> {
        if pattern.target() != self.target() || pattern.len() + 1 != self.node_count {
            return Err(Error::PatternLength {
                expected: self.node_count - 1,
                got: pattern.len(),
            });
        }
        let pow3 = powers_of_three(self.candidates.len());
        let mut idx = 0;
        for (pos, &state) in pattern.states().iter().enumerate() {
            let node = pattern.node_at(pos);
            match (self.digit_of[node], state) {
                (_, State::Zero) => {}
                (Some(i), State::One) => idx += pow3[i],
                (Some(i), State::Marginalized) => idx += 2 * pow3[i],
                (None, s) => {
                    return Err(Error::OutsideCandidates {
                        node,
                        state: s.name(),
                    })
                }
            }
        }
        Ok(self.masses[idx])
    }

    /// Masses as little-endian f64 in ternary index order.
    pub fn masses_to_bytes(&self) -> Vec<u8> {
        self.masses.iter().flat_map(|m| m.to_le_bytes()).collect()
    }

    /// JSON sidecar describing the candidate set.
    pub fn sidecar_json(&self) -> String {
        serde_json::to_string(&TableHeader {
            node_count: self.node_count,
            candidates: self.candidates.clone(),
        })
        .expect("header serializes")
    }

    pub fn from_parts(sidecar: &str, bytes: &[u8]) -> Result<Self> {
        let header: TableHeader = serde_json::from_str(sidecar)?;
        let candidates = CandidateSet::new(header.candidates.target, header.candidates.members)?;
        let expected = powers_of_three(candidates.len())[candidates.len()];
        if bytes.len() != expected * 8 {
            return Err(Error::Format(format!(
                "mass blob has {} bytes, expected {}",
                bytes.len(),
                expected * 8
            )));
        }
        if candidates.target() >= header.node_count
            || candidates.members().iter().any(|&j| j >= header.node_count)
        {
            return Err(Error::Format("candidate set out of range".into()));
        }
        let masses = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Self::from_masses(header.node_count, candidates, masses))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bge::LocalScorer;
    use crate::synthesis::{generate_mechanisms, sample_data, Dag};

    fn chain_scorer() -> LocalScorer {
        let dag = Dag::new(3, [(0, 1), (1, 2)]).unwrap();
        let mut bn = generate_mechanisms(&dag, 0);
        bn.edge_weights.insert((0, 1), 2.0);
        bn.edge_weights.insert((1, 2), 2.0);
        bn.noise_variances = vec![1.0, 0.5, 0.5];
        let data = sample_data(&bn, 200, 1).unwrap();
        LocalScorer::from_data(&data).unwrap()
    }

    #[test]
    fn candidate_set_validation() {
        assert!(CandidateSet::new(1, vec![0, 1]).is_err());
        assert!(CandidateSet::new(1, vec![0, 2, 0]).is_err());
        assert_eq!(CandidateSet::full(1, 4).members(), &[0, 2, 3]);
    }

    #[test]
    fn selection_edge_sizes() {
        let s = chain_scorer();
        assert_eq!(select_candidates(&s, 2, 2).unwrap().members(), &[0, 1]);
        assert!(select_candidates(&s, 2, 0).unwrap().is_empty());
        assert!(select_candidates(&s, 2, 3).is_err());
    }

    #[test]
    fn chain_selects_direct_parent() {
        let s = chain_scorer();
        let base = s.local_score_parents(2, &[]).unwrap();
        let gain_x = s.local_score_parents(2, &[0]).unwrap() - base;
        let gain_y = s.local_score_parents(2, &[1]).unwrap() - base;
        assert!(gain_y > gain_x);
        assert_eq!(select_candidates(&s, 2, 1).unwrap().members(), &[1]);
    }

    #[test]
    fn table_counts_and_cap() {
        let s = chain_scorer();
        let t = build_table(&s, &CandidateSet::full(0, 3)).unwrap();
        assert_eq!(t.len(), 9);
        let complete = (0..9).filter(|&i| !t.digits_of(i).contains(&State::Marginalized)).count();
        assert_eq!(complete, 4);
        assert!(matches!(
            build_table_with_cap(&s, &CandidateSet::full(0, 3), 1),
            Err(Error::TableTooLarge { size: 2, cap: 1 })
        ));
    }

    #[test]
    fn query_respects_candidate_restriction() {
        let s = chain_scorer();
        let t = build_table(&s, &CandidateSet::new(2, vec![1]).unwrap()).unwrap();
        let ok = QueryPattern::parse(2, "0m").unwrap();
        assert!(t.query(&ok).is_ok());
        let complete = QueryPattern::parse(2, "01").unwrap();
        assert_eq!(t.query(&complete).unwrap(), s.local_score_parents(2, &[1]).unwrap());
        for bad in ["10", "m0", "m1"] {
            let p = QueryPattern::parse(2, bad).unwrap();
            assert!(matches!(t.query(&p), Err(Error::OutsideCandidates { node: 0, .. })));
        }
        assert!(t.query(&QueryPattern::parse(1, "00").unwrap()).is_err());
    }

    #[test]
    fn binary_dump_round_trips() {
        let s = chain_scorer();
        let t = build_table(&s, &CandidateSet::full(1, 3)).unwrap();
        let back = DpTable::from_parts(&t.sidecar_json(), &t.masses_to_bytes()).unwrap();
        assert_eq!(back, t);
        assert!(DpTable::from_parts(&t.sidecar_json(), &t.masses_to_bytes()[..8]).is_err());
    }

    #[test]
    fn toy_two_candidate_table() {
        let cands = CandidateSet::new(2, vec![0, 1]).unwrap();
        let t = build_table_from_scores(3, &cands, 16, |mask| Ok(-(mask.count_ones() as f64)))
            .unwrap();
        let all = QueryPattern::parse(2, "mm").unwrap();
        let expected_all = (1.0 + 2.0 * (-1f64).exp() + (-2f64).exp()).ln();
        assert!((t.query(&all).unwrap() - expected_all).abs() < 1e-12);
        assert!((expected_all - 0.626523).abs() < 1e-6);
        let first_marg = QueryPattern::parse(2, "m0").unwrap();
        let expected = (1.0 + (-1f64).exp()).ln();
        assert!((t.query(&first_marg).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 0.313262).abs() < 1e-6);
        assert_eq!(t.query(&QueryPattern::parse(2, "11").unwrap()).unwrap(), -2.0);
    }

    #[test]
    fn index_and_digits_are_inverse() {
        let s = chain_scorer();
        let t = build_table(&s, &CandidateSet::full(1, 3)).unwrap();
        for i in 0..t.len() {
            assert_eq!(t.index_of(&t.digits_of(i)), i);
        }
    }
}
