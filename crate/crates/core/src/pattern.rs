//! Parent-set indicator patterns.
//!
//! A [`QueryPattern`] describes, for a fixed child node, the state of every
//! other node's parent indicator: fixed to zero, fixed to one, or summed out.
//! A pattern without summed-out positions is a complete parent set. Position
//! `p` refers to node `p` when `p < target` and to node `p + 1` otherwise.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum State {
    Zero,
    One,
    Marginalized,
}

impl State {
    pub fn as_char(self) -> char {
        match self {
            State::Zero => '0',
            State::One => '1',
            State::Marginalized => 'm',
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            State::Zero => "Zero",
            State::One => "One",
            State::Marginalized => "Marginalized",
        }
    }

    pub fn from_char(c: char) -> Result<State> {
        match c {
            '0' => Ok(State::Zero),
            '1' => Ok(State::One),
            'm' => Ok(State::Marginalized),
            other => Err(Error::PatternChar(other)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct QueryPattern {
    target: usize,
    states: Vec<State>,
}

impl QueryPattern {
    /// Builds a pattern for `target`; `states` has one entry per other node.
    pub fn new(target: usize, states: Vec<State>) -> Self {
        Self { target, states }
    }

    pub fn filled(target: usize, len: usize, state: State) -> Self {
        Self::new(target, vec![state; len])
    }

    /// Complete pattern whose One positions are exactly `parents` (node indices).
    pub fn from_parents(target: usize, node_count: usize, parents: &[usize]) -> Result<Self> {
        if target >= node_count {
            return Err(Error::InvalidArgument(format!(
                "target {target} out of range for {node_count} nodes"
            )));
        }
        let mut pattern = Self::filled(target, node_count - 1, State::Zero);
        for &p in parents {
            let pos = pattern.position_of(p).ok_or_else(|| {
                Error::InvalidArgument(format!("node {p} cannot be a parent of {target}"))
            })?;
            if pos >= pattern.len() {
                return Err(Error::InvalidArgument(format!("parent {p} out of range")));
            }
            pattern.states[pos] = State::One;
        }
        Ok(pattern)
    }

    /// Parses a string over `{0, 1, m}`.
    pub fn parse(target: usize, s: &str) -> Result<Self> {
        let states = s.chars().map(State::from_char).collect::<Result<Vec<_>>>()?;
        Ok(Self::new(target, states))
    }

    pub fn target(&self) -> usize {
        self.target
    }

    pub fn states(&self) -> &[State] {
        &self.states
    }

    pub fn states_mut(&mut self) -> &mut [State] {
        &mut self.states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn get(&self, pos: usize) -> State {
        self.states[pos]
    }

    pub fn set(&mut self, pos: usize, state: State) {
        self.states[pos] = state;
    }

    pub fn with(&self, pos: usize, state: State) -> Self {
        let mut out = self.clone();
        out.states[pos] = state;
        out
    }

    /// Node index referred to by position `pos`.
    pub fn node_at(&self, pos: usize) -> usize {
        if pos < self.target {
            pos
        } else {
            pos + 1
        }
    }

    /// Position of `node` in this pattern, `None` for the target itself.
    pub fn position_of(&self, node: usize) -> Option<usize> {
        use std::cmp::Ordering::*;
        match node.cmp(&self.target) {
            Less => Some(node),
            Equal => None,
            Greater => Some(node - 1),
        }
    }

    pub fn is_complete(&self) -> bool {
        !self.states.contains(&State::Marginalized)
    }

    pub fn count(&self, state: State) -> usize {
        self.states.iter().filter(|&&s| s == state).count()
    }

    /// Node indices in state One, ascending.
    pub fn parents(&self) -> Vec<usize> {
        self.states
            .iter()
            .enumerate()
            .filter(|(_, &s)| s == State::One)
            .map(|(pos, _)| self.node_at(pos))
            .collect()
    }

    /// Bitmask over node indices of the One positions. Requires fewer than 65 nodes.
    pub fn parent_mask(&self) -> u64 {
        self.states
            .iter()
            .enumerate()
            .filter(|(_, &s)| s == State::One)
            .fold(0u64, |acc, (pos, _)| acc | (1u64 << self.node_at(pos)))
    }

    /// All complete patterns agreeing with `self` on its assigned positions.
    pub fn completions(&self) -> Vec<QueryPattern> {
        let free: Vec<usize> = (0..self.len())
            .filter(|&p| self.states[p] == State::Marginalized)
            .collect();
        (0..1usize << free.len())
            .map(|bits| {
                let mut out = self.clone();
                for (i, &p) in free.iter().enumerate() {
                    out.states[p] = if bits >> i & 1 == 1 { State::One } else { State::Zero };
                }
                out
            })
            .collect()
    }
}

impl fmt::Display for QueryPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.states {
            write!(f, "{}", s.as_char())?;
        }
        Ok(())
    }
}

/// Parses with target 0; callers that care about the target use [`QueryPattern::parse`].
impl FromStr for QueryPattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::parse(0, s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn positions_skip_the_target() {
        let p = QueryPattern::filled(2, 4, State::Zero);
        assert_eq!(p.node_at(1), 1);
        assert_eq!(p.node_at(2), 3);
        assert_eq!(p.position_of(2), None);
        assert_eq!(p.position_of(4), Some(3));
    }

    #[test]
    fn from_parents_round_trips() {
        let p = QueryPattern::from_parents(1, 5, &[4, 0]).unwrap();
        assert_eq!(p.to_string(), "1001");
        assert_eq!(p.parents(), vec![0, 4]);
        assert_eq!(p.parent_mask(), 0b10001);
        assert!(QueryPattern::from_parents(1, 5, &[1]).is_err());
    }

    #[test]
    fn parse_rejects_foreign_characters() {
        assert!(QueryPattern::parse(0, "01m").is_ok());
        assert!(matches!(
            QueryPattern::parse(0, "0120"),
            Err(Error::PatternChar('2'))
        ));
    }

    #[test]
    fn completions_enumerate_marginalized_positions() {
        let p = QueryPattern::parse(0, "m1m").unwrap();
        let all: Vec<String> = p.completions().iter().map(|c| c.to_string()).collect();
        assert_eq!(all, vec!["010", "110", "011", "111"]);
    }
}
