//! Trains one circuit per node on a synthetic 8-node network and reports
//! agreement with the exact DP marginalizer.

use std::time::Instant;

use pcmarg::bge::LocalScorer;
use pcmarg::dp::{build_table, CandidateSet};
use pcmarg::synthesis::{generate_er_dag, generate_mechanisms, rng_from_seed, sample_data};
use pcmarg::trainer::{learn_node_circuit_with_table, sample_marginal_zero, TrainConfig};

fn main() -> pcmarg::Result<()> {
    let d: usize = std::env::args().nth(1).map_or(8, |s| s.parse().unwrap());
    let dag = generate_er_dag(d, 2.0, 0)?;
    let bn = generate_mechanisms(&dag, 1);
    let data = sample_data(&bn, 100, 2)?;
    let scorer = LocalScorer::from_data(&data)?;
    let config: TrainConfig = match std::env::args().nth(2) {
        Some(json) => serde_json::from_str(&json)?,
        None => TrainConfig::scaled(),
    };
    let nodes: usize = std::env::args().nth(3).map_or(d, |s| s.parse().unwrap());
    for target in 0..nodes {
        let start = Instant::now();
        let table = build_table(&scorer, &CandidateSet::full(target, d))?;
        let (circuit, report) = learn_node_circuit_with_table(&scorer, &table, &config)?;
        let probes = sample_marginal_zero(d - 1, 200, table.candidates(), &mut rng_from_seed(99))?;
        let preds = circuit.evaluate_batch(&probes)?;
        let exact: Vec<f64> = probes.iter().map(|p| table.query(p)).collect::<Result<_, _>>()?;
        if std::env::var_os("SHOW_HISTORY").is_some() {
            print!("{}", report.to_csv());
        }
        let last = report.history.last().unwrap();
        println!(
            "node {target}: p1 epochs {} probe {:.3} -> {:.3}, final val {:.4}, spearman {:.4}, range {:.1}, {:.1}s",
            report.phase_epochs(1),
            report.probe_after_phase1.unwrap(),
            report.probe_after_phase2.unwrap(),
            last.val_loss,
            spearman(&preds, &exact),
            exact.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - exact.iter().cloned().fold(f64::INFINITY, f64::min),
            start.elapsed().as_secs_f64()
        );
    }
    Ok(())
}

fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut r = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        for t in i..=j {
            r[idx[t]] = (i + j) as f64 / 2.0;
        }
        i = j + 1;
    }
    r
}

fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let (ra, rb) = (ranks(a), ranks(b));
    let n = ra.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}
