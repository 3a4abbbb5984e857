use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use pcmarg::bge::LocalScorer;
use pcmarg::circuit::Circuit;
use pcmarg::dp::DpTable;
use pcmarg::harness::{
    dags_to_jsonl, dp_backends, sample_posterior, BackendKind, MarginalBackend, McmcConfig, MetricsRow,
};
use pcmarg::synthesis::{generate_er_dag, generate_mechanisms, sample_data, Dag, DataMatrix};
use pcmarg::trainer::{derive_seed, learn_node_circuit, TrainConfig};
use pcmarg::QueryPattern;

use crate::config::ExperimentConfig;
use crate::files::{emit, read, read_string};
use crate::Common;

/// Bad command-line input, reported with exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn load(common: &Common) -> Result<ExperimentConfig> {
    let mut config = ExperimentConfig::load(common.config.as_deref())?;
    if let Some(seed) = common.seed {
        config.seeds = vec![seed];
    }
    if let Some(out) = &common.out {
        config.out = out.clone();
    }
    config.validate()?;
    Ok(config)
}

fn train_config(config: &ExperimentConfig, seed: u64) -> TrainConfig {
    let mut t = config.train.clone();
    t.seed = derive_seed(t.seed, 0, seed);
    t
}

fn mcmc_config(config: &ExperimentConfig, seed: u64) -> McmcConfig {
    McmcConfig {
        seed: derive_seed(config.mcmc.seed, 1, seed),
        ..config.mcmc
    }
}

fn data_scorer(path: &Path, d: usize) -> Result<LocalScorer> {
    let data = DataMatrix::from_csv(&read_string(path)?).with_context(|| format!("parsing {}", path.display()))?;
    if data.cols() != d {
        bail!("{} has {} columns, config says d = {d}", path.display(), data.cols());
    }
    Ok(LocalScorer::from_data(&data)?)
}

fn circuit_path(dir: &Path, node: usize) -> PathBuf {
    dir.join("circuits").join(format!("node-{node}.pc"))
}

/// File-name form of a backend name: `dp_restricted(6)` becomes `dp_restricted_6`.
fn slug(kind: BackendKind) -> String {
    kind.name()
        .chars()
        .filter_map(|c| match c {
            '(' => Some('_'),
            ')' => None,
            c => Some(c),
        })
        .collect()
}

fn dp_dir(dir: &Path, kind: BackendKind) -> PathBuf {
    dir.join("dp").join(slug(kind))
}

pub fn generate(common: &Common) -> Result<()> {
    let config = load(common)?;
    for &seed in &config.seeds {
        let dir = config.seed_dir(seed);
        let dag = generate_er_dag(config.d, config.avg_edges, derive_seed(seed, 0, 100))?;
        let bn = generate_mechanisms(&dag, derive_seed(seed, 0, 101));
        let train = sample_data(&bn, config.n_train, derive_seed(seed, 0, 102))?;
        let test = sample_data(&bn, config.n_test, derive_seed(seed, 0, 103))?;
        emit(&dir.join("truth.json"), serde_json::to_string(&dag)?.as_bytes())?;
        emit(&dir.join("mechanisms.json"), serde_json::to_string(&bn)?.as_bytes())?;
        emit(&dir.join("train.csv"), train.to_csv().as_bytes())?;
        emit(&dir.join("test.csv"), test.to_csv().as_bytes())?;
    }
    Ok(())
}

pub fn train(common: &Common) -> Result<()> {
    let config = load(common)?;
    if config.d < 2 {
        bail!("training needs at least two nodes");
    }
    for &seed in &config.seeds {
        let dir = config.seed_dir(seed);
        let scorer = data_scorer(&dir.join("train.csv"), config.d)?;
        let tc = train_config(&config, seed);
        for node in 0..config.d {
            let (circuit, report) = learn_node_circuit(&scorer, node, &tc)?;
            emit(&circuit_path(&dir, node), &circuit.to_bytes())?;
            emit(
                &dir.join("reports").join(format!("node-{node}.csv")),
                report.to_csv().as_bytes(),
            )?;
        }
    }
    Ok(())
}

pub fn build_dp(common: &Common, backend: &str) -> Result<()> {
    let config = load(common)?;
    let kind: BackendKind = backend.parse().map_err(|e| UsageError(format!("{e}")))?;
    let restrict = match kind {
        BackendKind::DpFull => None,
        BackendKind::DpRestricted(k) => Some(k),
        BackendKind::Pc => return Err(UsageError("build-dp needs a dp backend".into()).into()),
    };
    for &seed in &config.seeds {
        let dir = config.seed_dir(seed);
        let scorer = data_scorer(&dir.join("train.csv"), config.d)?;
        let out = dp_dir(&dir, kind);
        for (node, b) in dp_backends(&scorer, restrict)?.into_iter().enumerate() {
            let MarginalBackend::Table(t) = b else { unreachable!() };
            emit(&out.join(format!("node-{node}.bin")), &t.masses_to_bytes())?;
            emit(&out.join(format!("node-{node}.json")), t.sidecar_json().as_bytes())?;
        }
    }
    Ok(())
}

fn load_table(sidecar: &Path) -> Result<DpTable> {
    let bytes = read(&sidecar.with_extension("bin"))?;
    DpTable::from_parts(&read_string(sidecar)?, &bytes).with_context(|| format!("loading {}", sidecar.display()))
}

pub fn query(file: &Path, pattern: &str) -> Result<()> {
    let value = if file.extension().is_some_and(|e| e == "json") {
        let table = load_table(file)?;
        let p = QueryPattern::parse(table.target(), pattern).map_err(|e| UsageError(e.to_string()))?;
        if p.len() != table.node_count() - 1 {
            return Err(UsageError(format!("pattern has {} states, expected {}", p.len(), table.node_count() - 1)).into());
        }
        table.query(&p)?
    } else {
        let circuit = Circuit::from_bytes(&read(file)?).with_context(|| format!("loading {}", file.display()))?;
        let p = QueryPattern::parse(0, pattern).map_err(|e| UsageError(e.to_string()))?;
        if p.len() != circuit.variables() {
            return Err(UsageError(format!("pattern has {} states, expected {}", p.len(), circuit.variables())).into());
        }
        circuit.evaluate(&p)?
    };
    println!("{value:.16e}");
    Ok(())
}

fn backends_for(config: &ExperimentConfig, dir: &Path, scorer: &LocalScorer, kind: BackendKind) -> Result<Vec<MarginalBackend>> {
    match kind {
        BackendKind::Pc => (0..config.d)
            .map(|node| {
                let path = circuit_path(dir, node);
                let bytes = read(&path).context("circuits missing; run `pcmarg train` first")?;
                Ok(MarginalBackend::Circuit(Circuit::from_bytes(&bytes)?))
            })
            .collect(),
        BackendKind::DpFull | BackendKind::DpRestricted(_) => {
            let stored = dp_dir(dir, kind);
            if stored.join("node-0.json").exists() {
                (0..config.d)
                    .map(|node| Ok(MarginalBackend::Table(load_table(&stored.join(format!("node-{node}.json")))?)))
                    .collect()
            } else {
                let restrict = match kind {
                    BackendKind::DpRestricted(k) => Some(k),
                    _ => None,
                };
                Ok(dp_backends(scorer, restrict)?)
            }
        }
    }
}

pub fn eval(common: &Common, only: Option<&str>) -> Result<()> {
    let config = load(common)?;
    let kinds = match only {
        Some(b) => vec![b.parse::<BackendKind>().map_err(|e| UsageError(e.to_string()))?],
        None => config.backend_kinds()?,
    };
    let mut csv = format!("{}\n", MetricsRow::HEADER);
    for &seed in &config.seeds {
        let dir = config.seed_dir(seed);
        let truth_text = read_string(&dir.join("truth.json"))?;
        let truth: Dag = serde_json::from_str(&truth_text)?;
        println!("truth {}  {}", crate::files::digest(truth_text.as_bytes()), dir.join("truth.json").display());
        let scorer = data_scorer(&dir.join("train.csv"), config.d)?;
        let test = data_scorer(&dir.join("test.csv"), config.d)?;
        for &kind in &kinds {
            let backends = backends_for(&config, &dir, &scorer, kind)?;
            let samples = sample_posterior(&backends, &mcmc_config(&config, seed))?;
            emit(
                &dir.join("samples").join(format!("{}.jsonl", slug(kind))),
                dags_to_jsonl(&samples)?.as_bytes(),
            )?;
            let row = MetricsRow::compute(&kind.name(), seed, &samples, &truth, &test)?;
            if ![row.e_shd, row.auroc, row.mll, row.mean_edges].iter().all(|v| v.is_finite()) {
                bail!("non-finite metrics for {kind} at seed {seed}: {row:?}");
            }
            csv.push_str(&row.to_csv_row());
            csv.push('\n');
        }
    }
    emit(&config.out.join("metrics.csv"), csv.as_bytes())
}

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

pub fn report(common: &Common) -> Result<()> {
    let config = load(common)?;
    let path = config.out.join("metrics.csv");
    let text = read_string(&path)?;
    let mut lines = text.lines();
    if lines.next() != Some(MetricsRow::HEADER) {
        bail!("{} does not start with the metrics header", path.display());
    }
    let mut groups: BTreeMap<(String, usize), Vec<[f64; 4]>> = BTreeMap::new();
    for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 7 {
            bail!("{}:{}: expected 7 fields", path.display(), i + 2);
        }
        let num = |s: &str| s.parse::<f64>().map_err(|e| anyhow!("{}:{}: {e}", path.display(), i + 2));
        let d = f[1].parse::<usize>().map_err(|e| anyhow!("{}:{}: {e}", path.display(), i + 2))?;
        groups
            .entry((f[0].to_string(), d))
            .or_default()
            .push([num(f[3])?, num(f[4])?, num(f[5])?, num(f[6])?]);
    }
    let mut out = String::from(
        "method,d,runs,e_shd_mean,e_shd_se,auroc_mean,auroc_se,mll_mean,mll_se,mean_edges_mean,mean_edges_se\n",
    );
    for ((method, d), rows) in &groups {
        out.push_str(&format!("{method},{d},{}", rows.len()));
        for k in 0..4 {
            let col: Vec<f64> = rows.iter().map(|r| r[k]).collect();
            let (m, se) = mean_and_se(&col);
            out.push_str(&format!(",{m:.16e},{se:.16e}"));
        }
        out.push('\n');
    }
    emit(&config.out.join("summary.csv"), out.as_bytes())
}
