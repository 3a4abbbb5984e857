//! Layered, smooth and decomposable unnormalized probabilistic circuit.
//!
//! Layout, bottom to top:
//!
//! * leaf layer: `M̂ x N` unnormalized Bernoulli leaves, row `r` holding
//!   pattern position `permutation[r]` (rows `>= M` are padding);
//! * `log2(M̂)` pairs of a product layer (`P[i][j] = X[2i][j] * X[2i+1][j]`)
//!   and a sum layer (`S[i][j] = sum_k w[i][j][k] * P[i][k]`);
//! * a root sum over the `N` nodes of the last row.
//!
//! All parameters live in the log domain and are unconstrained, so the
//! circuit represents an unnormalized function of the parent indicators.
//! Padding rows are fixed unit leaves that are always summed out and
//! contribute exactly `0` in the log domain.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::logspace::{log_add_exp, log_sum_exp};
use crate::pattern::{QueryPattern, State};
use crate::synthesis::rng_from_seed;

mod batch;

pub use batch::BatchWorkspace;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CircuitConfig {
    /// Number of indicator variables `M`.
    pub variables: usize,
    /// Latent width `N`.
    pub latent: usize,
    pub seed: u64,
    /// Parameters start as `init_multiplier * ln(U(0, 1))`.
    pub init_multiplier: f64,
}

impl CircuitConfig {
    pub fn new(variables: usize, latent: usize, seed: u64, init_multiplier: f64) -> Self {
        Self {
            variables,
            latent,
            seed,
            init_multiplier,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.variables == 0 || self.latent == 0 {
            return Err(Error::InvalidArgument(
                "circuit needs at least one variable and one latent".into(),
            ));
        }
        if !self.init_multiplier.is_finite() {
            return Err(Error::InvalidArgument("init multiplier must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerKind {
    Leaf,
    Product,
    Sum,
    Root,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerShape {
    pub kind: LayerKind,
    pub rows: usize,
    pub cols: usize,
    /// Parameters this layer owns in the flat blob.
    pub params: usize,
}

/// Per-layer activations of one forward pass.
#[derive(Debug, Clone)]
pub struct LogValueGrid {
    pub leaves: Vec<f64>,
    pub products: Vec<Vec<f64>>,
    pub sums: Vec<Vec<f64>>,
    pub root: f64,
}

#[derive(Debug, Clone)]
pub struct Circuit {
    config: CircuitConfig,
    padded: usize,
    permutation: Vec<usize>,
    /// Flat log-parameters: leaves `[row][col][state]`, then each sum layer
    /// `[row][out][in]`, then the root weights.
    params: Vec<f64>,
    sum_offsets: Vec<usize>,
    sum_rows: Vec<usize>,
    root_offset: usize,
    /// `exp(w - max_k w)` per sum node, refreshed on every parameter change.
    shifted_weights: Vec<f64>,
    weight_max: Vec<f64>,
}

/// Reusable buffers for forward and backward passes.
#[derive(Debug, Clone)]
pub struct Workspace {
    leaves: Vec<f64>,
    products: Vec<Vec<f64>>,
    /// `exp(P - max)` per product node, and the per-row maxima.
    scaled: Vec<Vec<f64>>,
    row_max: Vec<Vec<f64>>,
    sums: Vec<Vec<f64>>,
    /// Linear-domain inner sums of each sum node (`0` flags the exact fallback).
    inner: Vec<Vec<f64>>,
    root_scaled: Vec<f64>,
    root_max: f64,
    root_inner: f64,
    root: f64,
    resp_up: Vec<f64>,
    resp_down: Vec<f64>,
}

const HALF_LN: f64 = -std::f64::consts::LN_2;

impl Circuit {
    pub fn new(config: CircuitConfig) -> Result<Self> {
        config.validate()?;
        let m = config.variables;
        let n = config.latent;
        let padded = m.next_power_of_two();
        let mut rng = rng_from_seed(config.seed);
        let mut permutation: Vec<usize> = (0..m).collect();
        permutation.shuffle(&mut rng);

        let mut sum_offsets = Vec::new();
        let mut sum_rows = Vec::new();
        let mut offset = padded * n * 2;
        let mut rows = padded;
        while rows > 1 {
            rows /= 2;
            sum_offsets.push(offset);
            sum_rows.push(rows);
            offset += rows * n * n;
        }
        let root_offset = offset;
        let total = root_offset + n;

        let mut params = Vec::with_capacity(total);
        for i in 0..total {
            let leaf_row = i / (2 * n);
            if i < padded * n * 2 && leaf_row >= m {
                params.push(HALF_LN);
            } else {
                let u: f64 = 1.0 - rng.random::<f64>();
                params.push(config.init_multiplier * u.ln());
            }
        }

        let mut circuit = Self {
            config,
            padded,
            permutation,
            params,
            sum_offsets,
            sum_rows,
            root_offset,
            shifted_weights: Vec::new(),
            weight_max: Vec::new(),
        };
        circuit.refresh();
        Ok(circuit)
    }

    pub fn config(&self) -> &CircuitConfig {
        &self.config
    }

    pub fn variables(&self) -> usize {
        self.config.variables
    }

    pub fn latent(&self) -> usize {
        self.config.latent
    }

    pub fn padded_variables(&self) -> usize {
        self.padded
    }

    pub fn permutation(&self) -> &[usize] {
        &self.permutation
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    /// Whether the flat parameter at `index` is a fixed padding leaf.
    pub fn is_fixed(&self, index: usize) -> bool {
        index < self.padded * self.latent() * 2 && index / (2 * self.latent()) >= self.variables()
    }

    /// Replaces all parameters. Padding leaves are reset to their fixed value.
    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} parameters, got {}",
                self.params.len(),
                params.len()
            )));
        }
        self.params.copy_from_slice(params);
        self.reset_padding();
        self.refresh();
        Ok(())
    }

    /// `params -= step * grad`, skipping padding leaves.
    pub fn apply_gradient(&mut self, grad: &[f64], step: f64) {
        debug_assert_eq!(grad.len(), self.params.len());
        for (p, g) in self.params.iter_mut().zip(grad) {
            *p -= step * g;
        }
        self.reset_padding();
        self.refresh();
    }

    fn reset_padding(&mut self) {
        let n = self.latent();
        for r in self.variables()..self.padded {
            self.params[r * n * 2..(r + 1) * n * 2].fill(HALF_LN);
        }
    }

    fn refresh(&mut self) {
        let n = self.latent();
        let start = self.sum_offsets.first().copied().unwrap_or(self.root_offset);
        let nodes = (self.params.len() - start) / n;
        self.shifted_weights.resize(nodes * n, 0.0);
        self.weight_max.resize(nodes, 0.0);
        for (node, chunk) in self.params[start..].chunks_exact(n).enumerate() {
            let max = chunk.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            self.weight_max[node] = max;
            for (k, &w) in chunk.iter().enumerate() {
                self.shifted_weights[node * n + k] = if max == f64::NEG_INFINITY {
                    0.0
                } else {
                    (w - max).exp()
                };
            }
        }
    }

    /// Rows per layer from the leaves up to (excluding) the root scalar.
    pub fn layer_rows(&self) -> Vec<usize> {
        let mut rows = vec![self.padded];
        for &r in &self.sum_rows {
            rows.push(r);
            rows.push(r);
        }
        rows
    }

    pub fn layer_shapes(&self) -> Vec<LayerShape> {
        let n = self.latent();
        let mut shapes = vec![LayerShape {
            kind: LayerKind::Leaf,
            rows: self.padded,
            cols: n,
            params: self.padded * n * 2,
        }];
        for &r in &self.sum_rows {
            shapes.push(LayerShape {
                kind: LayerKind::Product,
                rows: r,
                cols: n,
                params: 0,
            });
            shapes.push(LayerShape {
                kind: LayerKind::Sum,
                rows: r,
                cols: n,
                params: r * n * n,
            });
        }
        shapes.push(LayerShape {
            kind: LayerKind::Root,
            rows: 1,
            cols: 1,
            params: n,
        });
        shapes
    }

    /// Parameter index of leaf `(row, col)` for `state` (0 or 1).
    pub fn leaf_index(&self, row: usize, col: usize, state: usize) -> usize {
        (row * self.latent() + col) * 2 + state
    }

    /// Parameter index of `w[row][out][inp]` in sum layer `layer`.
    pub fn sum_index(&self, layer: usize, row: usize, out: usize, inp: usize) -> usize {
        let n = self.latent();
        self.sum_offsets[layer] + (row * n + out) * n + inp
    }

    pub fn root_index(&self, k: usize) -> usize {
        self.root_offset + k
    }

    pub fn sum_layer_count(&self) -> usize {
        self.sum_rows.len()
    }

    pub fn workspace(&self) -> Workspace {
        let n = self.latent();
        let per_layer = |f: &dyn Fn(usize) -> usize| -> Vec<Vec<f64>> {
            self.sum_rows.iter().map(|&r| vec![0.0; f(r)]).collect()
        };
        Workspace {
            leaves: vec![0.0; self.padded * n],
            products: per_layer(&|r| r * n),
            scaled: per_layer(&|r| r * n),
            row_max: per_layer(&|r| r),
            sums: per_layer(&|r| r * n),
            inner: per_layer(&|r| r * n),
            root_scaled: vec![0.0; n],
            root_max: 0.0,
            root_inner: 0.0,
            root: 0.0,
            resp_up: vec![0.0; self.padded * n],
            resp_down: vec![0.0; self.padded * n],
        }
    }

    fn check_pattern(&self, pattern: &QueryPattern) -> Result<()> {
        if pattern.len() != self.variables() {
            return Err(Error::PatternLength {
                expected: self.variables(),
                got: pattern.len(),
            });
        }
        Ok(())
    }

    /// Log-value of the circuit on `pattern`; Marginalized positions are summed out.
    pub fn evaluate(&self, pattern: &QueryPattern) -> Result<f64> {
        self.check_pattern(pattern)?;
        let mut ws = self.workspace();
        Ok(self.forward(pattern.states(), &mut ws))
    }

    /// Log normalizing constant: every position summed out.
    pub fn normalizing_constant(&self) -> f64 {
        let states = vec![State::Marginalized; self.variables()];
        let mut ws = self.workspace();
        self.forward(&states, &mut ws)
    }

    /// Elementwise equal to [`Circuit::evaluate`], computed in parallel.
    pub fn evaluate_batch(&self, patterns: &[QueryPattern]) -> Result<Vec<f64>> {
        for p in patterns {
            self.check_pattern(p)?;
        }
        Ok(patterns
            .par_iter()
            .map_init(|| self.workspace(), |ws, p| self.forward(p.states(), ws))
            .collect())
    }

    /// Full forward pass returning every layer's activations.
    pub fn forward_grid(&self, pattern: &QueryPattern) -> Result<LogValueGrid> {
        self.check_pattern(pattern)?;
        let mut ws = self.workspace();
        let root = self.forward(pattern.states(), &mut ws);
        Ok(LogValueGrid {
            leaves: ws.leaves,
            products: ws.products,
            sums: ws.sums,
            root,
        })
    }

    /// Gradient of the root log-value with respect to every log-parameter.
    pub fn backward(&self, pattern: &QueryPattern) -> Result<Vec<f64>> {
        self.check_pattern(pattern)?;
        let mut ws = self.workspace();
        let mut grad = vec![0.0; self.params.len()];
        self.forward(pattern.states(), &mut ws);
        self.backward_into(pattern.states(), &mut ws, 1.0, &mut grad);
        Ok(grad)
    }

    /// Forward pass over raw states; `states.len()` must equal `M`.
    pub fn forward(&self, states: &[State], ws: &mut Workspace) -> f64 {
        let n = self.latent();
        let m = self.variables();
        for r in 0..self.padded {
            let row = &mut ws.leaves[r * n..(r + 1) * n];
            if r >= m {
                row.fill(0.0);
                continue;
            }
            let state = states[self.permutation[r]];
            let base = r * n * 2;
            for (j, out) in row.iter_mut().enumerate() {
                let t0 = self.params[base + 2 * j];
                let t1 = self.params[base + 2 * j + 1];
                *out = match state {
                    State::Zero => t0,
                    State::One => t1,
                    State::Marginalized => log_add_exp(t0, t1),
                };
            }
        }

        let mut weight_node = 0;
        for layer in 0..self.sum_rows.len() {
            let rows = self.sum_rows[layer];
            let below: &[f64] = if layer == 0 { &ws.leaves } else { &ws.sums[layer - 1] };
            let products = &mut ws.products[layer];
            for i in 0..rows {
                for j in 0..n {
                    products[i * n + j] = below[2 * i * n + j] + below[(2 * i + 1) * n + j];
                }
            }
            let products = &ws.products[layer];
            let scaled = &mut ws.scaled[layer];
            let row_max = &mut ws.row_max[layer];
            let sums = &mut ws.sums[layer];
            let inner = &mut ws.inner[layer];
            for i in 0..rows {
                let prow = &products[i * n..(i + 1) * n];
                let pmax = prow.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                row_max[i] = pmax;
                let srow = &mut scaled[i * n..(i + 1) * n];
                if pmax == f64::NEG_INFINITY {
                    srow.fill(0.0);
                    sums[i * n..(i + 1) * n].fill(f64::NEG_INFINITY);
                    inner[i * n..(i + 1) * n].fill(0.0);
                    weight_node += n;
                    continue;
                }
                for (s, &p) in srow.iter_mut().zip(prow) {
                    *s = (p - pmax).exp();
                }
                for j in 0..n {
                    let w = &self.shifted_weights[weight_node * n..(weight_node + 1) * n];
                    let acc = dot(w, srow);
                    let idx = i * n + j;
                    if acc > f64::MIN_POSITIVE && acc.is_finite() {
                        inner[idx] = acc;
                        sums[idx] = pmax + self.weight_max[weight_node] + acc.ln();
                    } else {
                        inner[idx] = 0.0;
                        let off = self.sum_offsets[layer] + idx * n;
                        let terms: Vec<f64> = (0..n).map(|k| self.params[off + k] + prow[k]).collect();
                        sums[idx] = log_sum_exp(&terms);
                    }
                    weight_node += 1;
                }
            }
        }

        let top: &[f64] = match ws.sums.last() {
            Some(s) => s,
            None => &ws.leaves[..n],
        };
        let tmax = top.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        ws.root_max = tmax;
        if tmax == f64::NEG_INFINITY {
            ws.root_scaled.fill(0.0);
            ws.root_inner = 0.0;
            ws.root = f64::NEG_INFINITY;
            return ws.root;
        }
        for (s, &t) in ws.root_scaled.iter_mut().zip(top) {
            *s = (t - tmax).exp();
        }
        let w = &self.shifted_weights[weight_node * n..(weight_node + 1) * n];
        let acc = dot(w, &ws.root_scaled);
        if acc > f64::MIN_POSITIVE && acc.is_finite() {
            ws.root_inner = acc;
            ws.root = tmax + self.weight_max[weight_node] + acc.ln();
        } else {
            ws.root_inner = 0.0;
            let terms: Vec<f64> = (0..n).map(|k| self.params[self.root_offset + k] + top[k]).collect();
            ws.root = log_sum_exp(&terms);
        }
        ws.root
    }

    /// Adds `scale * d(root log-value)/d(param)` into `grad`. Requires the
    /// workspace of a forward pass on the same states.
    pub fn backward_into(&self, states: &[State], ws: &mut Workspace, scale: f64, grad: &mut [f64]) {
        let n = self.latent();
        let m = self.variables();
        if ws.root == f64::NEG_INFINITY {
            return;
        }
        let layers = self.sum_rows.len();
        let root_node = self.weight_max.len() - 1;

        // Root: softmax responsibilities of the top row.
        {
            let top: &[f64] = match ws.sums.last() {
                Some(s) => s,
                None => &ws.leaves[..n],
            };
            let resp = &mut ws.resp_up[..n];
            for k in 0..n {
                let q = if ws.root_inner > 0.0 {
                    self.shifted_weights[root_node * n + k] * ws.root_scaled[k] / ws.root_inner
                } else {
                    (self.params[self.root_offset + k] + top[k] - ws.root).exp()
                };
                grad[self.root_offset + k] += scale * q;
                resp[k] = q;
            }
        }

        // `resp_up` holds responsibilities of the current sum layer's nodes.
        let mut node_base = root_node;
        for layer in (0..layers).rev() {
            let rows = self.sum_rows[layer];
            node_base -= rows * n;
            let products = &ws.products[layer];
            let scaled = &ws.scaled[layer];
            let sums = &ws.sums[layer];
            let inner = &ws.inner[layer];
            let prod_resp = &mut ws.resp_down[..rows * n];
            prod_resp.fill(0.0);
            for i in 0..rows {
                for j in 0..n {
                    let idx = i * n + j;
                    let r = ws.resp_up[idx];
                    if r == 0.0 || sums[idx] == f64::NEG_INFINITY {
                        continue;
                    }
                    let node = node_base + idx;
                    let off = self.sum_offsets[layer] + idx * n;
                    if inner[idx] > 0.0 {
                        let w = &self.shifted_weights[node * n..(node + 1) * n];
                        let c = r / inner[idx];
                        for k in 0..n {
                            let q = c * w[k] * scaled[i * n + k];
                            grad[off + k] += scale * q;
                            prod_resp[i * n + k] += q;
                        }
                    } else {
                        for k in 0..n {
                            let q = r * (self.params[off + k] + products[i * n + k] - sums[idx]).exp();
                            grad[off + k] += scale * q;
                            prod_resp[i * n + k] += q;
                        }
                    }
                }
            }
            // Products pass responsibility to both children unchanged.
            let child_resp = &mut ws.resp_up[..2 * rows * n];
            for i in (0..rows).rev() {
                for j in 0..n {
                    let r = ws.resp_down[i * n + j];
                    child_resp[2 * i * n + j] = r;
                    child_resp[(2 * i + 1) * n + j] = r;
                }
            }
        }

        for r in 0..m {
            let state = states[self.permutation[r]];
            let base = r * n * 2;
            for j in 0..n {
                let rho = ws.resp_up[r * n + j];
                match state {
                    State::Zero => grad[base + 2 * j] += scale * rho,
                    State::One => grad[base + 2 * j + 1] += scale * rho,
                    State::Marginalized => {
                        let t0 = self.params[base + 2 * j];
                        let t1 = self.params[base + 2 * j + 1];
                        let v = ws.leaves[r * n + j];
                        grad[base + 2 * j] += scale * rho * (t0 - v).exp();
                        grad[base + 2 * j + 1] += scale * rho * (t1 - v).exp();
                    }
                }
            }
        }
    }

    /// Variable scope of every node row, per layer (leaf, product, sum, ...).
    /// Padding rows carry the pseudo-variables `M..M̂`.
    pub fn scopes(&self) -> Vec<Vec<BTreeSet<usize>>> {
        let leaf: Vec<BTreeSet<usize>> = (0..self.padded)
            .map(|r| {
                let var = if r < self.variables() { self.permutation[r] } else { r };
                BTreeSet::from([var])
            })
            .collect();
        let mut layers = vec![leaf];
        for _ in &self.sum_rows {
            let below = layers.last().unwrap();
            let prod: Vec<BTreeSet<usize>> = below
                .chunks(2)
                .map(|pair| pair[0].union(&pair[1]).copied().collect())
                .collect();
            layers.push(prod.clone());
            layers.push(prod);
        }
        layers
    }

    /// Checks decomposability of every product node, smoothness of every sum
    /// node, and that the root covers every variable exactly once.
    pub fn audit_scopes(&self) -> Result<()> {
        let leaf_scopes = self.scopes().remove(0);
        let mut seen = BTreeSet::new();
        for s in &leaf_scopes {
            if s.len() != 1 || !seen.insert(*s.iter().next().unwrap()) {
                return Err(Error::Format("leaf rows do not partition the variables".into()));
            }
        }
        let mut below = leaf_scopes;
        for _ in &self.sum_rows {
            let mut products = Vec::with_capacity(below.len() / 2);
            for i in 0..below.len() / 2 {
                let (a, b) = (&below[2 * i], &below[2 * i + 1]);
                if !a.is_disjoint(b) {
                    return Err(Error::Format(format!("product row {i} is not decomposable")));
                }
                products.push(a.union(b).copied().collect::<BTreeSet<_>>());
            }
            // Each sum node in row i mixes all N product nodes of row i,
            // which share the row scope by construction.
            below = products;
        }
        if below.len() != 1 || below[0].len() != self.padded {
            return Err(Error::Format("root scope does not cover all variables".into()));
        }
        Ok(())
    }

    /// Serialized form: a single-line JSON header, `\n`, then the parameter
    /// blob as little-endian f64 in layer order.
    pub fn to_bytes(&self) -> Vec<u8> {
        let header = CircuitHeader {
            config: self.config,
            permutation: self.permutation.clone(),
            padded: self.padded,
            layers: self.layer_shapes(),
            param_count: self.params.len(),
        };
        let mut out = serde_json::to_vec(&header).expect("header serializes");
        out.push(b'\n');
        for p in &self.params {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let split = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::Format("missing circuit header terminator".into()))?;
        let header: CircuitHeader = serde_json::from_slice(&bytes[..split])?;
        let blob = &bytes[split + 1..];
        let mut circuit = Circuit::new(header.config)?;
        let mut sorted = header.permutation.clone();
        sorted.sort_unstable();
        if sorted != (0..header.config.variables).collect::<Vec<_>>() {
            return Err(Error::Format("permutation is not a permutation of 0..M".into()));
        }
        if header.padded != circuit.padded
            || header.param_count != circuit.params.len()
            || header.layers != circuit.layer_shapes()
            || blob.len() != header.param_count * 8
        {
            return Err(Error::Format("circuit header does not match parameter blob".into()));
        }
        circuit.permutation = header.permutation;
        for (p, chunk) in circuit.params.iter_mut().zip(blob.chunks_exact(8)) {
            *p = f64::from_le_bytes(chunk.try_into().unwrap());
        }
        circuit.refresh();
        Ok(circuit)
    }
}

/// Dot product with eight independent accumulators, combined in a fixed order.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 8];
    let split = a.len() - a.len() % 8;
    for (ca, cb) in a[..split].chunks_exact(8).zip(b[..split].chunks_exact(8)) {
        for l in 0..8 {
            acc[l] += ca[l] * cb[l];
        }
    }
    let mut tail = 0.0;
    for (x, y) in a[split..].iter().zip(&b[split..]) {
        tail += x * y;
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail
}

#[derive(Debug, Serialize, Deserialize)]
struct CircuitHeader {
    config: CircuitConfig,
    permutation: Vec<usize>,
    padded: usize,
    layers: Vec<LayerShape>,
    param_count: usize,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn circuit(m: usize, n: usize, seed: u64) -> Circuit {
        Circuit::new(CircuitConfig::new(m, n, seed, -1.0)).unwrap()
    }

    #[test]
    fn layer_rows_halve() {
        let c = circuit(8, 4, 0);
        assert_eq!(c.layer_rows(), vec![8, 4, 4, 2, 2, 1, 1]);
        assert_eq!(c.layer_shapes().len(), 1 + 2 * 3 + 1);
        let single = circuit(1, 3, 0);
        assert_eq!(single.layer_rows(), vec![1]);
    }

    #[test]
    fn seven_variables_pad_to_eight() {
        let c = circuit(7, 3, 1);
        assert_eq!(c.padded_variables(), 8);
        for j in 0..3 {
            assert_eq!(c.params()[c.leaf_index(7, j, 0)], HALF_LN);
            assert_eq!(c.params()[c.leaf_index(7, j, 1)], HALF_LN);
        }
        // Pad leaves evaluate to exactly 0 in every pattern.
        let grid = c.forward_grid(&QueryPattern::filled(0, 7, State::One)).unwrap();
        assert!(grid.leaves[7 * 3..8 * 3].iter().all(|&v| v == 0.0));
        assert!(c.is_fixed(c.leaf_index(7, 0, 0)));
        assert!(!c.is_fixed(c.leaf_index(6, 2, 1)));
    }

    #[test]
    fn builds_are_deterministic() {
        let a = circuit(6, 5, 42);
        let b = circuit(6, 5, 42);
        assert_eq!(a.params(), b.params());
        assert_eq!(a.permutation(), b.permutation());
        assert_ne!(a.params(), circuit(6, 5, 43).params());
    }

    #[test]
    fn half_leaves_marginalize_to_one() {
        let mut c = circuit(1, 1, 0);
        let mut p = c.params().to_vec();
        p[0] = 0.5f64.ln();
        p[1] = 0.5f64.ln();
        p[2] = 0.0;
        c.set_params(&p).unwrap();
        let v = c.evaluate(&QueryPattern::parse(0, "m").unwrap()).unwrap();
        assert!(v.abs() < 1e-15);
    }

    #[test]
    fn zero_state_ignores_theta_one() {
        let c = circuit(4, 3, 2);
        let pattern = QueryPattern::parse(0, "0m10").unwrap();
        let grad = c.backward(&pattern).unwrap();
        let row = c.permutation().iter().position(|&v| v == 0).unwrap();
        for j in 0..3 {
            assert_eq!(grad[c.leaf_index(row, j, 1)], 0.0);
        }
        let root_sum: f64 = (0..3).map(|k| grad[c.root_index(k)]).sum();
        assert!((root_sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn scopes_pass_audit() {
        for m in [1, 2, 3, 5, 8, 11] {
            circuit(m, 2, m as u64).audit_scopes().unwrap();
        }
    }

    #[test]
    fn serialization_is_bit_exact() {
        let c = circuit(5, 3, 9);
        let back = Circuit::from_bytes(&c.to_bytes()).unwrap();
        assert_eq!(back.params(), c.params());
        assert_eq!(back.permutation(), c.permutation());
        let p = QueryPattern::parse(0, "m10m1").unwrap();
        assert_eq!(back.evaluate(&p).unwrap().to_bits(), c.evaluate(&p).unwrap().to_bits());
        let mut bad = c.to_bytes();
        bad.pop();
        assert!(Circuit::from_bytes(&bad).is_err());
    }

    #[test]
    fn rejects_wrong_length_and_bad_config() {
        let c = circuit(4, 2, 0);
        assert!(c.evaluate(&QueryPattern::parse(0, "000").unwrap()).is_err());
        assert!(Circuit::new(CircuitConfig::new(0, 2, 0, -1.0)).is_err());
        assert!(Circuit::new(CircuitConfig::new(2, 0, 0, -1.0)).is_err());
    }
}
