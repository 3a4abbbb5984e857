//! Log BGe local scores for linear-Gaussian networks.
//!
//! The scorer keeps the sufficient statistics of the data together with the
//! normal-Wishart hyperparameters and evaluates the closed-form marginal
//! likelihood of a node given a parent set. Scores are memoized per
//! `(child, parent mask)`.

use dashmap::DashMap;
use nalgebra::{Cholesky, DMatrix, DVector};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::pattern::{QueryPattern, State};
use crate::synthesis::{DataMatrix, Dag};

/// Mean and centered scatter matrix of a data set.
#[derive(Debug, Clone, PartialEq)]
pub struct ScatterStats {
    pub n: usize,
    pub mean: DVector<f64>,
    pub scatter: DMatrix<f64>,
}

pub fn compute_stats(data: &DataMatrix) -> Result<ScatterStats> {
    let n = data.rows();
    if n == 0 {
        return Err(Error::InvalidArgument("statistics need at least one row".into()));
    }
    let d = data.cols();
    let mean = DVector::from_iterator(
        d,
        (0..d).map(|j| data.column(j).iter().sum::<f64>() / n as f64),
    );
    let mut scatter = DMatrix::zeros(d, d);
    for a in 0..d {
        let ca = data.column(a);
        for b in a..d {
            let cb = data.column(b);
            let s: f64 = ca
                .iter()
                .zip(cb)
                .map(|(x, y)| (x - mean[a]) * (y - mean[b]))
                .sum();
            scatter[(a, b)] = s;
            scatter[(b, a)] = s;
        }
    }
    Ok(ScatterStats { n, mean, scatter })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StructuralPrior {
    #[default]
    Uniform,
}

impl StructuralPrior {
    pub fn log_prior(self, _parents: &[usize]) -> f64 {
        match self {
            StructuralPrior::Uniform => 0.0,
        }
    }
}

/// Normal-Wishart hyperparameters. `None` fields take the usual defaults:
/// `alpha_w = d + 2` and a prior scale of `t * I` with
/// `t = alpha_mu * (alpha_w - d - 1) / (alpha_mu + 1)`.
#[derive(Debug, Clone, Default)]
pub struct BgeParams {
    pub alpha_mu: Option<f64>,
    pub alpha_w: Option<f64>,
    pub prior_scale: Option<DMatrix<f64>>,
}

#[derive(Debug)]
pub struct LocalScorer {
    stats: ScatterStats,
    alpha_mu: f64,
    alpha_w: f64,
    prior_scale: DMatrix<f64>,
    posterior_scale: DMatrix<f64>,
    structural_prior: StructuralPrior,
    cache: DashMap<(usize, u64), f64>,
}

impl LocalScorer {
    pub fn new(stats: ScatterStats, params: BgeParams) -> Result<Self> {
        let d = stats.mean.len();
        if d > 64 {
            return Err(Error::InvalidArgument("at most 64 variables are supported".into()));
        }
        let alpha_mu = params.alpha_mu.unwrap_or(1.0);
        let alpha_w = params.alpha_w.unwrap_or(d as f64 + 2.0);
        if !(alpha_mu > 0.0) {
            return Err(Error::InvalidArgument("alpha_mu must be positive".into()));
        }
        if !(alpha_w > d as f64 - 1.0) {
            return Err(Error::InvalidArgument(format!("alpha_w must exceed d - 1 = {}", d - 1)));
        }
        let prior_scale = match params.prior_scale {
            Some(t) => t,
            None => {
                let t = alpha_mu * (alpha_w - d as f64 - 1.0) / (alpha_mu + 1.0);
                DMatrix::identity(d, d) * t
            }
        };
        if prior_scale.shape() != (d, d) || Cholesky::new(prior_scale.clone()).is_none() {
            return Err(Error::InvalidArgument(
                "prior scale must be a positive definite d x d matrix".into(),
            ));
        }
        // Prior mean is zero.
        let n = stats.n as f64;
        let shift = n * alpha_mu / (n + alpha_mu);
        let posterior_scale = &prior_scale + &stats.scatter + &stats.mean * stats.mean.transpose() * shift;
        Ok(Self {
            stats,
            alpha_mu,
            alpha_w,
            prior_scale,
            posterior_scale,
            structural_prior: StructuralPrior::Uniform,
            cache: DashMap::new(),
        })
    }

    pub fn from_data(data: &DataMatrix) -> Result<Self> {
        Self::new(compute_stats(data)?, BgeParams::default())
    }

    pub fn node_count(&self) -> usize {
        self.stats.mean.len()
    }

    pub fn stats(&self) -> &ScatterStats {
        &self.stats
    }

    pub fn alpha_mu(&self) -> f64 {
        self.alpha_mu
    }

    pub fn alpha_w(&self) -> f64 {
        self.alpha_w
    }

    pub fn prior_scale(&self) -> &DMatrix<f64> {
        &self.prior_scale
    }

    pub fn structural_prior(&self) -> StructuralPrior {
        self.structural_prior
    }

    /// Score of a complete parent pattern. Marginalized positions are rejected.
    pub fn local_score(&self, child: usize, pattern: &QueryPattern) -> Result<f64> {
        if pattern.target() != child || pattern.len() + 1 != self.node_count() {
            return Err(Error::PatternLength {
                expected: self.node_count() - 1,
                got: pattern.len(),
            });
        }
        if pattern.states().contains(&State::Marginalized) {
            return Err(Error::InvalidArgument(
                "local scores are defined on complete patterns only".into(),
            ));
        }
        self.score_mask(child, pattern.parent_mask())
    }

    /// Score of `child` with the given parents, in any order.
    pub fn local_score_parents(&self, child: usize, parents: &[usize]) -> Result<f64> {
        let d = self.node_count();
        let mut mask = 0u64;
        for &p in parents {
            if p >= d || p == child {
                return Err(Error::InvalidArgument(format!("invalid parent {p} of {child}")));
            }
            mask |= 1 << p;
        }
        if child >= d {
            return Err(Error::InvalidArgument(format!("child {child} out of range")));
        }
        self.score_mask(child, mask)
    }

    /// Score with parents given as a bitmask over node indices.
    pub fn score_mask(&self, child: usize, mask: u64) -> Result<f64> {
        if let Some(v) = self.cache.get(&(child, mask)) {
            return Ok(*v);
        }
        let parents: Vec<usize> = (0..self.node_count()).filter(|&j| mask >> j & 1 == 1).collect();
        let score = self.structural_prior.log_prior(&parents) + self.log_likelihood(child, &parents);
        if !score.is_finite() {
            return Err(Error::NonFiniteScore { child, parents });
        }
        self.cache.insert((child, mask), score);
        Ok(score)
    }

    fn log_likelihood(&self, child: usize, parents: &[usize]) -> f64 {
        let d = self.node_count() as f64;
        let n = self.stats.n as f64;
        let l = parents.len() as f64;
        let mut family = parents.to_vec();
        family.push(child);
        family.sort_unstable();

        let a = self.alpha_w - d + l + 1.0;
        let mut score = 0.5 * (self.alpha_mu / (n + self.alpha_mu)).ln()
            + ln_gamma((n + a) / 2.0)
            - ln_gamma(a / 2.0)
            - 0.5 * n * std::f64::consts::PI.ln();
        score += 0.5 * a * log_det_sub(&self.prior_scale, &family)
            - 0.5 * (a - 1.0) * log_det_sub(&self.prior_scale, parents);
        score += 0.5 * (n + a - 1.0) * log_det_sub(&self.posterior_scale, parents)
            - 0.5 * (n + a) * log_det_sub(&self.posterior_scale, &family);
        score
    }

    /// Sum of local scores over the DAG's families.
    pub fn score_graph(&self, dag: &Dag) -> Result<f64> {
        if dag.node_count() != self.node_count() {
            return Err(Error::InvalidArgument(format!(
                "graph has {} nodes, scorer has {}",
                dag.node_count(),
                self.node_count()
            )));
        }
        (0..dag.node_count())
            .map(|i| self.local_score_parents(i, &dag.parents(i)))
            .sum()
    }

    pub fn cache_len(&self) -> usize {
        self.cache.len()
    }

    /// Cached scores as CSV lines `child,pattern,score`, sorted by key.
    pub fn dump_cache_csv(&self) -> String {
        let d = self.node_count();
        let mut rows: Vec<((usize, u64), f64)> =
            self.cache.iter().map(|e| (*e.key(), *e.value())).collect();
        rows.sort_by_key(|r| r.0);
        let mut out = String::from("child,pattern,score\n");
        for ((child, mask), score) in rows {
            let bits: String = (0..d)
                .filter(|&j| j != child)
                .map(|j| if mask >> j & 1 == 1 { '1' } else { '0' })
                .collect();
            out.push_str(&format!("{child},{bits},{score:.16e}\n"));
        }
        out
    }
}

/// Log-determinant of the principal submatrix on `idx`; 0 for an empty index
/// set, NaN when the submatrix is not positive definite.
fn log_det_sub(m: &DMatrix<f64>, idx: &[usize]) -> f64 {
    if idx.is_empty() {
        return 0.0;
    }
    let k = idx.len();
    let sub = DMatrix::from_fn(k, k, |r, c| m[(idx[r], idx[c])]);
    match Cholesky::new(sub) {
        Some(ch) => 2.0 * ch.l_dirty().diagonal().iter().map(|x| x.ln()).sum::<f64>(),
        None => f64::NAN,
    }
}
