//! Two-phase regression of a node's log local score onto a circuit.
//!
//! Phase one fits complete parent sets scored directly. Phase two walks a
//! curriculum `k = 1..=L`: at each step the training set mixes `(k, 0)` and
//! `(k, 1)` marginal queries labeled by an exact DP table with freshly
//! sampled complete parent sets labeled by the scorer. Both phases minimize
//! the mean squared error between circuit and label in the log domain.

use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bge::LocalScorer;
use crate::circuit::{Circuit, CircuitConfig};
use crate::dp::{build_table, select_candidates, CandidateSet, DpTable};
use crate::error::{Error, Result};
use crate::pattern::{QueryPattern, State};
use crate::synthesis::rng_from_seed;

/// Samples per batched pass. Fixed so that the reduction order, and
/// therefore every trained parameter, is independent of the thread count.
const CHUNK: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    #[default]
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Phase1Config {
    pub train_size: usize,
    pub val_size: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub plateau_factor: f64,
    pub plateau_patience: usize,
    pub plateau_threshold: f64,
    pub max_epochs: usize,
    pub min_lr: f64,
}

impl Default for Phase1Config {
    fn default() -> Self {
        Self {
            train_size: 10_000,
            val_size: 1_000,
            batch_size: 500,
            lr: 1e-1,
            plateau_factor: 0.5,
            plateau_patience: 5,
            plateau_threshold: 1e-3,
            max_epochs: 100,
            min_lr: 1e-5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Phase2Config {
    pub total_train: usize,
    pub total_val: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Largest number of marginalized variables trained on (`L`).
    pub marginal_limit: usize,
    pub epochs_per_iter: usize,
    /// Overrides the run-wide optimizer for this phase.
    pub optimizer: Option<Optimizer>,
}

impl Default for Phase2Config {
    fn default() -> Self {
        Self {
            total_train: 20_000,
            total_val: 2_000,
            batch_size: 500,
            lr: 5e-3,
            marginal_limit: 7,
            epochs_per_iter: 20,
            optimizer: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub latent: usize,
    pub init_multiplier: f64,
    pub phase1: Phase1Config,
    pub phase2: Phase2Config,
    /// Teacher candidate-set size; `None` uses every other node.
    pub candidate_size: Option<usize>,
    pub optimizer: Optimizer,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            latent: 256,
            init_multiplier: -10.0,
            phase1: Phase1Config::default(),
            phase2: Phase2Config::default(),
            candidate_size: None,
            optimizer: Optimizer::Sgd,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Settings used for 16-node graphs.
    pub fn d16() -> Self {
        Self::default()
    }

    /// Settings used for 20-node graphs: narrower circuit, larger batches,
    /// doubled data.
    pub fn d20() -> Self {
        let mut c = Self::default();
        c.latent = 64;
        c.phase1.batch_size = 1000;
        c.phase1.train_size *= 2;
        c.phase1.val_size *= 2;
        c.phase2.batch_size = 1000;
        c.phase2.total_train *= 2;
        c.phase2.total_val *= 2;
        c.candidate_size = Some(8);
        c
    }

    /// Desk-scale settings for graphs of around eight to twelve nodes.
    pub fn scaled() -> Self {
        let mut c = Self::default();
        c.latent = 64;
        c.phase1.train_size = 2000;
        c.phase1.val_size = 500;
        c.phase1.batch_size = 100;
        c.phase2.batch_size = 100;
        c.phase2.total_train = 4000;
        c.phase2.total_val = 800;
        c.phase2.marginal_limit = 4;
        c.phase2.epochs_per_iter = 20;
        c
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidArgument(msg.into()));
        if self.latent == 0 {
            return bad("latent width must be positive");
        }
        if self.phase2.marginal_limit == 0 {
            return bad("marginal limit L must be at least 1");
        }
        if self.phase1.batch_size == 0 || self.phase2.batch_size == 0 {
            return bad("batch sizes must be positive");
        }
        if self.phase1.train_size == 0 || self.phase2.total_train < 2 {
            return bad("training sets must be non-empty");
        }
        if !(self.phase1.plateau_factor > 0.0 && self.phase1.plateau_factor < 1.0) {
            return bad("plateau factor must lie in (0, 1)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    Scorer,
    DpTeacher,
}

#[derive(Debug, Clone, Default)]
pub struct LabeledSet {
    pub patterns: Vec<QueryPattern>,
    pub labels: Vec<f64>,
    pub provenance: Vec<Provenance>,
}

impl LabeledSet {
    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    pub fn scored(scorer: &LocalScorer, patterns: Vec<QueryPattern>) -> Result<Self> {
        let labels = patterns
            .iter()
            .map(|p| scorer.local_score(p.target(), p))
            .collect::<Result<Vec<_>>>()?;
        let provenance = vec![Provenance::Scorer; patterns.len()];
        Ok(Self {
            patterns,
            labels,
            provenance,
        })
    }

    pub fn from_teacher(table: &DpTable, patterns: Vec<QueryPattern>) -> Result<Self> {
        let labels = patterns.iter().map(|p| table.query(p)).collect::<Result<Vec<_>>>()?;
        let provenance = vec![Provenance::DpTeacher; patterns.len()];
        Ok(Self {
            patterns,
            labels,
            provenance,
        })
    }

    pub fn extend(&mut self, other: LabeledSet) {
        self.patterns.extend(other.patterns);
        self.labels.extend(other.labels);
        self.provenance.extend(other.provenance);
    }
}

/// Complete patterns with each position One independently with probability
/// 1/3, so a vector with `T` ones is drawn with probability `2^(M-T) / 3^M`.
pub fn sample_complete(target: usize, m: usize, count: usize, rng: &mut impl Rng) -> Vec<QueryPattern> {
    (0..count)
        .map(|_| {
            let states = (0..m)
                .map(|_| if rng.random_range(0..3) == 0 { State::One } else { State::Zero })
                .collect();
            QueryPattern::new(target, states)
        })
        .collect()
}

/// `(k, 0)` queries, or `(k, 1)` when `with_one` is set, drawn uniformly
/// from the candidate set. Positions outside the candidates stay Zero.
pub fn sample_marginal_queries(
    m: usize,
    k: usize,
    count: usize,
    with_one: bool,
    candidates: &CandidateSet,
    rng: &mut impl Rng,
) -> Result<Vec<QueryPattern>> {
    let needed = k + usize::from(with_one);
    if needed > candidates.len() {
        return Err(Error::InvalidArgument(format!(
            "cannot place {needed} non-zero states in a candidate set of size {}",
            candidates.len()
        )));
    }
    let target = candidates.target();
    let template = QueryPattern::filled(target, m, State::Zero);
    let positions: Vec<usize> = candidates
        .members()
        .iter()
        .map(|&node| {
            template
                .position_of(node)
                .filter(|&p| p < m)
                .ok_or_else(|| Error::InvalidArgument(format!("candidate {node} out of range")))
        })
        .collect::<Result<_>>()?;
    Ok((0..count)
        .map(|_| {
            let mut p = template.clone();
            let picked = index::sample(rng, positions.len(), needed);
            for (i, idx) in picked.iter().enumerate() {
                let state = if i < k { State::Marginalized } else { State::One };
                p.set(positions[idx], state);
            }
            p
        })
        .collect())
}

/// Marginal/zero queries with a uniformly drawn number of marginalized
/// candidates, mirroring the predecessor sets met when scoring orderings.
pub fn sample_marginal_zero(
    m: usize,
    count: usize,
    candidates: &CandidateSet,
    rng: &mut impl Rng,
) -> Result<Vec<QueryPattern>> {
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let k = rng.random_range(0..=candidates.len());
        out.extend(sample_marginal_queries(m, k, 1, false, candidates, rng)?);
    }
    Ok(out)
}

/// Mean over the set of `(circuit(pattern) - label)^2`.
pub fn mse(circuit: &Circuit, set: &LabeledSet) -> Result<f64> {
    if set.is_empty() {
        return Ok(0.0);
    }
    for p in &set.patterns {
        if p.len() != circuit.variables() {
            return Err(Error::PatternLength {
                expected: circuit.variables(),
                got: p.len(),
            });
        }
    }
    let indices: Vec<usize> = (0..set.len()).collect();
    let partials: Vec<f64> = indices
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut ws = circuit.batch_workspace(chunk.len());
            let refs: Vec<&[State]> = chunk.iter().map(|&i| set.patterns[i].states()).collect();
            circuit.forward_batch(&refs, &mut ws);
            ws.roots()
                .iter()
                .zip(chunk)
                .map(|(p, &i)| (p - set.labels[i]).powi(2))
                .sum()
        })
        .collect();
    Ok(partials.iter().sum::<f64>() / set.len() as f64)
}

/// Loss and gradient of the mean squared error over `batch`.
pub fn loss_and_gradient(circuit: &Circuit, set: &LabeledSet, batch: &[usize]) -> (f64, Vec<f64>) {
    let factor = 2.0 / batch.len() as f64;
    let partials: Vec<(f64, Vec<f64>)> = batch
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut ws = circuit.batch_workspace(chunk.len());
            let refs: Vec<&[State]> = chunk.iter().map(|&i| set.patterns[i].states()).collect();
            circuit.forward_batch(&refs, &mut ws);
            let errors: Vec<f64> = ws
                .roots()
                .iter()
                .zip(chunk)
                .map(|(p, &i)| p - set.labels[i])
                .collect();
            let loss = errors.iter().map(|e| e * e).sum();
            let scale: Vec<f64> = errors.iter().map(|e| factor * e).collect();
            let mut grad = vec![0.0; circuit.num_params()];
            circuit.backward_batch(&mut ws, &scale, &mut grad);
            (loss, grad)
        })
        .collect();
    let mut grad = vec![0.0; circuit.num_params()];
    let mut loss = 0.0;
    for (l, g) in partials {
        loss += l;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    (loss / batch.len() as f64, grad)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub phase: u8,
    pub iteration: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrainingReport {
    pub target: usize,
    pub history: Vec<EpochRecord>,
    /// Mean absolute log-error against the teacher on marginal/zero probes.
    pub probe_after_phase1: Option<f64>,
    pub probe_after_phase2: Option<f64>,
}

impl TrainingReport {
    pub fn csv_header() -> &'static str {
        "epoch,phase,iteration,train_loss,val_loss,lr"
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::csv_header());
        out.push('\n');
        for r in &self.history {
            out.push_str(&format!(
                "{},{},{},{:.16e},{:.16e},{:.16e}\n",
                r.epoch, r.phase, r.iteration, r.train_loss, r.val_loss, r.lr
            ));
        }
        out
    }

    pub fn phase_epochs(&self, phase: u8) -> usize {
        self.history.iter().filter(|r| r.phase == phase).count()
    }
}

struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl AdamState {
    fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    fn direction(&mut self, grad: &[f64]) -> Vec<f64> {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        self.t += 1;
        let c1 = 1.0 - B1.powi(self.t);
        let c2 = 1.0 - B2.powi(self.t);
        grad.iter()
            .enumerate()
            .map(|(i, &g)| {
                self.m[i] = B1 * self.m[i] + (1.0 - B1) * g;
                self.v[i] = B2 * self.v[i] + (1.0 - B2) * g * g;
                (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + 1e-8)
            })
            .collect()
    }
}

struct Stepper {
    optimizer: Optimizer,
    adam: Option<AdamState>,
}

impl Stepper {
    fn new(optimizer: Optimizer, len: usize) -> Self {
        let adam = (optimizer == Optimizer::Adam).then(|| AdamState::new(len));
        Self { optimizer, adam }
    }

    fn step(&mut self, circuit: &mut Circuit, grad: &[f64], lr: f64) {
        match (self.optimizer, self.adam.as_mut()) {
            (Optimizer::Adam, Some(state)) => {
                let dir = state.direction(grad);
                circuit.apply_gradient(&dir, lr);
            }
            _ => circuit.apply_gradient(grad, lr),
        }
    }
}

/// One pass over `train` in shuffled mini-batches. Returns the mean batch loss.
fn run_epoch(
    circuit: &mut Circuit,
    train: &LabeledSet,
    batch_size: usize,
    lr: f64,
    stepper: &mut Stepper,
    rng: &mut ChaCha8Rng,
    phase: &'static str,
    epoch: usize,
) -> Result<f64> {
    let mut order: Vec<usize> = (0..train.len()).collect();
    order.shuffle(rng);
    let mut total = 0.0;
    for (b, batch) in order.chunks(batch_size).enumerate() {
        let (loss, grad) = loss_and_gradient(circuit, train, batch);
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteLoss {
                phase,
                epoch,
                batch: b,
                loss,
            });
        }
        total += loss * batch.len() as f64;
        stepper.step(circuit, &grad, lr);
    }
    Ok(total / train.len() as f64)
}

/// Learning rate after `plateaus` reductions.
pub fn scheduled_lr(initial: f64, factor: f64, plateaus: u32) -> f64 {
    initial * factor.powi(plateaus as i32)
}

/// Baseline regression on complete parent sets.
pub fn phase1_train(
    circuit: &mut Circuit,
    scorer: &LocalScorer,
    target: usize,
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<EpochRecord>> {
    let cfg = &config.phase1;
    let m = circuit.variables();
    let train = LabeledSet::scored(scorer, sample_complete(target, m, cfg.train_size, rng))?;
    let val = LabeledSet::scored(scorer, sample_complete(target, m, cfg.val_size.max(1), rng))?;
    fit_with_plateau(circuit, &train, &val, cfg, config.optimizer, rng)
}

/// Mini-batch regression with the validation-plateau schedule; restores the
/// best-validation parameters before returning.
pub fn fit_with_plateau(
    circuit: &mut Circuit,
    train: &LabeledSet,
    val: &LabeledSet,
    cfg: &Phase1Config,
    optimizer: Optimizer,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<EpochRecord>> {
    let mut stepper = Stepper::new(optimizer, circuit.num_params());
    let mut lr = cfg.lr;
    let mut best_val = mse(circuit, val)?;
    let mut best_params = circuit.params().to_vec();
    let mut plateau_ref = best_val;
    let mut stale = 0;
    let mut history = Vec::new();
    for epoch in 0..cfg.max_epochs {
        if lr < cfg.min_lr {
            break;
        }
        let train_loss = run_epoch(circuit, train, cfg.batch_size, lr, &mut stepper, rng, "phase 1", epoch)?;
        let val_loss = mse(circuit, val)?;
        history.push(EpochRecord {
            epoch,
            phase: 1,
            iteration: 0,
            train_loss,
            val_loss,
            lr,
        });
        if val_loss < best_val {
            best_val = val_loss;
            best_params.copy_from_slice(circuit.params());
        }
        if val_loss < plateau_ref - cfg.plateau_threshold {
            plateau_ref = val_loss;
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.plateau_patience {
                lr *= cfg.plateau_factor;
                stale = 0;
            }
        }
    }
    circuit.set_params(&best_params)?;
    Ok(history)
}

/// Splits `total` into (marginal, complete) halves and the marginal half into
/// `(k, 0)` and `(k, 1)` counts. `(k, 1)` is impossible once `k` covers the
/// whole candidate set; its share then goes to `(k, 0)`.
fn phase2_counts(total: usize, k: usize, candidates: usize) -> (usize, usize, usize) {
    let marginal = total / 2;
    let complete = total - marginal;
    if k < candidates {
        let with_zero = marginal - marginal / 2;
        (with_zero, marginal / 2, complete)
    } else {
        (marginal, 0, complete)
    }
}

fn phase2_set(
    scorer: &LocalScorer,
    table: &DpTable,
    m: usize,
    k: usize,
    total: usize,
    rng: &mut ChaCha8Rng,
) -> Result<LabeledSet> {
    let cands = table.candidates();
    let (zero, one, complete) = phase2_counts(total, k, cands.len());
    let mut set = LabeledSet::from_teacher(table, sample_marginal_queries(m, k, zero, false, cands, rng)?)?;
    if one > 0 {
        set.extend(LabeledSet::from_teacher(
            table,
            sample_marginal_queries(m, k, one, true, cands, rng)?,
        )?);
    }
    set.extend(LabeledSet::scored(scorer, sample_complete(cands.target(), m, complete, rng))?);
    Ok(set)
}

/// Marginal curriculum for `k = 1..=L`, capped at the candidate-set size.
pub fn phase2_train(
    circuit: &mut Circuit,
    scorer: &LocalScorer,
    table: &DpTable,
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
    first_epoch: usize,
) -> Result<Vec<EpochRecord>> {
    let cfg = &config.phase2;
    let m = circuit.variables();
    let limit = cfg.marginal_limit.min(table.candidates().len());
    let mut stepper = Stepper::new(cfg.optimizer.unwrap_or(config.optimizer), circuit.num_params());
    let mut history = Vec::new();
    let mut epoch = first_epoch;
    for k in 1..=limit {
        let train = phase2_set(scorer, table, m, k, cfg.total_train, rng)?;
        let val = phase2_set(scorer, table, m, k, cfg.total_val.max(2), rng)?;
        let mut best_val = mse(circuit, &val)?;
        let mut best_params = circuit.params().to_vec();
        for _ in 0..cfg.epochs_per_iter {
            let train_loss = run_epoch(circuit, &train, cfg.batch_size, cfg.lr, &mut stepper, rng, "phase 2", epoch)?;
            let val_loss = mse(circuit, &val)?;
            history.push(EpochRecord {
                epoch,
                phase: 2,
                iteration: k,
                train_loss,
                val_loss,
                lr: cfg.lr,
            });
            if val_loss < best_val {
                best_val = val_loss;
                best_params.copy_from_slice(circuit.params());
            }
            epoch += 1;
        }
        circuit.set_params(&best_params)?;
    }
    Ok(history)
}

/// Mean absolute log-error between circuit and table on `patterns`.
pub fn probe_error(circuit: &Circuit, table: &DpTable, patterns: &[QueryPattern]) -> Result<f64> {
    let preds = circuit.evaluate_batch(patterns)?;
    let mut total = 0.0;
    for (p, pred) in patterns.iter().zip(preds) {
        total += (pred - table.query(p)?).abs();
    }
    Ok(total / patterns.len().max(1) as f64)
}

/// Seed for an independent stream of node `target`.
pub fn derive_seed(base: u64, target: usize, stream: u64) -> u64 {
    base.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (target as u64).wrapping_mul(0xBF58_476D_1CE4_E5B9)
        ^ stream.wrapping_mul(0x94D0_49BB_1331_11EB)
}

/// Teacher candidate set for `target` under `config`.
pub fn teacher_candidates(scorer: &LocalScorer, target: usize, config: &TrainConfig) -> Result<CandidateSet> {
    let d = scorer.node_count();
    match config.candidate_size {
        Some(size) if size < d - 1 => select_candidates(scorer, target, size),
        _ => Ok(CandidateSet::full(target, d)),
    }
}

/// Builds and trains the circuit for one node, given its teacher table.
pub fn learn_node_circuit_with_table(
    scorer: &LocalScorer,
    table: &DpTable,
    config: &TrainConfig,
) -> Result<(Circuit, TrainingReport)> {
    config.validate()?;
    let d = scorer.node_count();
    let target = table.target();
    if d < 2 {
        return Err(Error::InvalidArgument("a circuit needs at least one potential parent".into()));
    }
    let m = d - 1;
    let mut circuit = Circuit::new(CircuitConfig::new(
        m,
        config.latent,
        derive_seed(config.seed, target, 0),
        config.init_multiplier,
    ))?;
    let mut rng = rng_from_seed(derive_seed(config.seed, target, 1));
    let probes = sample_marginal_zero(m, 200, table.candidates(), &mut rng_from_seed(derive_seed(config.seed, target, 2)))?;

    let mut history = phase1_train(&mut circuit, scorer, target, config, &mut rng)?;
    let probe_after_phase1 = Some(probe_error(&circuit, table, &probes)?);
    let first = history.len();
    history.extend(phase2_train(&mut circuit, scorer, table, config, &mut rng, first)?);
    let probe_after_phase2 = Some(probe_error(&circuit, table, &probes)?);
    Ok((
        circuit,
        TrainingReport {
            target,
            history,
            probe_after_phase1,
            probe_after_phase2,
        },
    ))
}

/// Full per-node pipeline: teacher candidates, teacher table, training.
pub fn learn_node_circuit(
    scorer: &LocalScorer,
    target: usize,
    config: &TrainConfig,
) -> Result<(Circuit, TrainingReport)> {
    let candidates = teacher_candidates(scorer, target, config)?;
    let table = build_table(scorer, &candidates)?;
    learn_node_circuit_with_table(scorer, &table, config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_complete_sample() {
        let mut rng = rng_from_seed(0);
        assert!(sample_complete(0, 4, 0, &mut rng).is_empty());
    }

    #[test]
    fn k_zero_is_all_zero() {
        let mut rng = rng_from_seed(0);
        let cands = CandidateSet::full(2, 5);
        let ps = sample_marginal_queries(4, 0, 3, false, &cands, &mut rng).unwrap();
        assert!(ps.iter().all(|p| p.to_string() == "0000"));
    }

    #[test]
    fn marginal_queries_have_exact_counts() {
        let mut rng = rng_from_seed(1);
        let cands = CandidateSet::full(0, 8);
        for k in 0..6 {
            for with_one in [false, true] {
                for p in sample_marginal_queries(7, k, 50, with_one, &cands, &mut rng).unwrap() {
                    assert_eq!(p.count(State::Marginalized), k);
                    assert_eq!(p.count(State::One), usize::from(with_one));
                }
            }
        }
        assert!(sample_marginal_queries(7, 7, 1, true, &cands, &mut rng).is_err());
        assert!(sample_marginal_queries(7, 8, 1, false, &cands, &mut rng).is_err());
    }

    #[test]
    fn marginal_queries_stay_inside_candidates() {
        let mut rng = rng_from_seed(2);
        let cands = CandidateSet::new(3, vec![0, 2, 5, 7, 9, 11, 13, 17]).unwrap();
        for p in sample_marginal_queries(19, 5, 200, true, &cands, &mut rng).unwrap() {
            for pos in 0..19 {
                if !cands.contains(p.node_at(pos)) {
                    assert_eq!(p.get(pos), State::Zero);
                }
            }
        }
    }

    #[test]
    fn plateau_schedule_arithmetic() {
        assert!((scheduled_lr(0.1, 0.5, 2) - 0.025).abs() < 1e-15);
    }

    #[test]
    fn phase2_split_is_even() {
        assert_eq!(phase2_counts(4000, 1, 7), (1000, 1000, 2000));
        assert_eq!(phase2_counts(4000, 7, 7), (2000, 0, 2000));
        assert_eq!(phase2_counts(801, 2, 7), (200, 200, 401));
    }

    #[test]
    fn large_presets() {
        let a = TrainConfig::d16();
        assert_eq!(
            (a.latent, a.phase1.batch_size, a.phase1.train_size, a.phase1.val_size),
            (256, 500, 10_000, 1_000)
        );
        assert_eq!((a.phase2.total_train, a.phase2.total_val), (20_000, 2_000));
        assert_eq!((a.phase2.marginal_limit, a.phase2.epochs_per_iter), (7, 20));
        let b = TrainConfig::d20();
        assert_eq!((b.latent, b.phase1.batch_size, b.phase1.train_size), (64, 1000, 20_000));
        assert_eq!((b.phase2.total_train, b.phase2.total_val), (40_000, 4_000));
    }

    #[test]
    fn config_json_defaults_fill_in() {
        let c: TrainConfig = serde_json::from_str(r#"{"latent": 8, "phase2": {"marginal_limit": 3}}"#).unwrap();
        assert_eq!(c.latent, 8);
        assert_eq!(c.phase2.marginal_limit, 3);
        assert_eq!(c.phase2.epochs_per_iter, 20);
        assert_eq!(c.init_multiplier, -10.0);
    }

    #[test]
    fn loss_is_zero_iff_predictions_match() {
        let c = Circuit::new(CircuitConfig::new(3, 2, 0, -1.0)).unwrap();
        let patterns = vec![QueryPattern::parse(0, "010").unwrap(), QueryPattern::parse(0, "m11").unwrap()];
        let labels = c.evaluate_batch(&patterns).unwrap();
        let mut set = LabeledSet {
            patterns,
            labels,
            provenance: vec![Provenance::Scorer; 2],
        };
        let (loss, grad) = loss_and_gradient(&c, &set, &[0, 1]);
        assert_eq!(loss, 0.0);
        assert!(grad.iter().all(|&g| g == 0.0));
        set.labels[1] += 1.0;
        assert!(mse(&c, &set).unwrap() > 0.0);
    }
}
