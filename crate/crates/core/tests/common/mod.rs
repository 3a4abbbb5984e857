#![allow(dead_code)]

use std::collections::BTreeSet;

use pcmarg::synthesis::Dag;

/// Every DAG on `d` nodes.
pub fn all_dags(d: usize) -> Vec<Dag> {
    let pairs: Vec<(usize, usize)> = (0..d).flat_map(|i| (i + 1..d).map(move |j| (i, j))).collect();
    let mut out = Vec::new();
    for mut code in 0..3usize.pow(pairs.len() as u32) {
        let mut edges = Vec::new();
        for &(i, j) in &pairs {
            match code % 3 {
                1 => edges.push((i, j)),
                2 => edges.push((j, i)),
                _ => {}
            }
            code /= 3;
        }
        if let Ok(dag) = Dag::new(d, edges) {
            out.push(dag);
        }
    }
    out
}

pub type ClassKey = (BTreeSet<(usize, usize)>, BTreeSet<(usize, usize, usize)>);

pub fn class_key(dag: &Dag) -> ClassKey {
    let skeleton = dag.edges().iter().map(|&(a, b)| (a.min(b), a.max(b))).collect();
    let mut colliders = BTreeSet::new();
    for c in 0..dag.node_count() {
        let ps = dag.parents(c);
        for (i, &a) in ps.iter().enumerate() {
            for &b in &ps[i + 1..] {
                if !dag.adjacent(a, b) {
                    colliders.insert((a.min(b), a.max(b), c));
                }
            }
        }
    }
    (skeleton, colliders)
}
