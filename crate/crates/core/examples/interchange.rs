//! Compares posterior metrics across marginal backends on one synthetic problem.

use std::time::Instant;

use pcmarg::bge::LocalScorer;
use pcmarg::harness::{dp_backends, pc_backends, sample_posterior, McmcConfig, MetricsRow};
use pcmarg::synthesis::{generate_er_dag, generate_mechanisms, sample_data};
use pcmarg::trainer::TrainConfig;

fn main() -> pcmarg::Result<()> {
    let mut args = std::env::args().skip(1);
    let d: usize = args.next().map_or(10, |s| s.parse().unwrap());
    let seed: u64 = args.next().map_or(0, |s| s.parse().unwrap());
    let restrict: usize = args.next().map_or(6, |s| s.parse().unwrap());
    let config: TrainConfig = match args.next() {
        Some(json) => serde_json::from_str(&json)?,
        None => TrainConfig::scaled(),
    };
    let dag = generate_er_dag(d, 2.0, seed)?;
    let bn = generate_mechanisms(&dag, seed + 1);
    let train = LocalScorer::from_data(&sample_data(&bn, 100, seed + 2)?)?;
    let test = LocalScorer::from_data(&sample_data(&bn, 1000, seed + 3)?)?;
    let mcmc = McmcConfig {
        seed,
        ..McmcConfig::default()
    };
    println!("{}", MetricsRow::HEADER);
    let start = Instant::now();
    let (pc, _) = pc_backends(&train, &config)?;
    eprintln!("trained in {:.1}s", start.elapsed().as_secs_f64());
    for (name, backends) in [
        ("dp_full".to_string(), dp_backends(&train, None)?),
        (format!("dp_restricted({restrict})"), dp_backends(&train, Some(restrict))?),
        ("pc".to_string(), pc),
    ] {
        let t = Instant::now();
        let samples = sample_posterior(&backends, &mcmc)?;
        let row = MetricsRow::compute(&name, seed, &samples, &dag, &test)?;
        println!("{}", row.to_csv_row());
        eprintln!("{name} sampled in {:.1}s", t.elapsed().as_secs_f64());
    }
    Ok(())
}
