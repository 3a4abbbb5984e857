//! Column-batched forward and backward passes used during training.
//!
//! Activations are stored `[row][col][sample]`, so every sum layer row is a
//! single `N x N` by `N x B` matrix product. Results agree with the
//! per-pattern path up to floating-point reassociation; the per-pattern path
//! stays the reference for query answering.

use matrixmultiply::dgemm;

use super::Circuit;
use crate::logspace::{log_add_exp, log_sum_exp};
use crate::pattern::State;

#[derive(Debug, Clone)]
pub struct BatchWorkspace {
    capacity: usize,
    len: usize,
    states: Vec<State>,
    leaves: Vec<f64>,
    products: Vec<Vec<f64>>,
    scaled: Vec<Vec<f64>>,
    row_max: Vec<Vec<f64>>,
    sums: Vec<Vec<f64>>,
    inner: Vec<Vec<f64>>,
    root_scaled: Vec<f64>,
    root_inner: Vec<f64>,
    root: Vec<f64>,
    resp: Vec<f64>,
    resp_prod: Vec<f64>,
    ratio: Vec<f64>,
    outer: Vec<f64>,
}

impl BatchWorkspace {
    /// Root log-values of the last forward pass.
    pub fn roots(&self) -> &[f64] {
        &self.root[..self.len]
    }
}

/// `C = A * B` for row-major operands with the given strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    c: &mut [f64],
    rsc: usize,
) {
    assert!(a.len() > (m - 1) * rsa + (k - 1) * csa);
    assert!(b.len() > (k - 1) * rsb + (n - 1) * csb);
    assert!(c.len() >= (m - 1) * rsc + n);
    // SAFETY: the asserts above bound every index the kernel touches.
    unsafe {
        dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            0.0,
            c.as_mut_ptr(),
            rsc as isize,
            1,
        );
    }
}

impl Circuit {
    pub fn batch_workspace(&self, capacity: usize) -> BatchWorkspace {
        let n = self.latent();
        let cap = capacity.max(1);
        let per_layer = |f: &dyn Fn(usize) -> usize| -> Vec<Vec<f64>> {
            self.sum_rows.iter().map(|&r| vec![0.0; f(r)]).collect()
        };
        BatchWorkspace {
            capacity: cap,
            len: 0,
            states: vec![State::Zero; self.variables() * cap],
            leaves: vec![0.0; self.padded * n * cap],
            products: per_layer(&|r| r * n * cap),
            scaled: per_layer(&|r| r * n * cap),
            row_max: per_layer(&|r| r * cap),
            sums: per_layer(&|r| r * n * cap),
            inner: per_layer(&|r| r * n * cap),
            root_scaled: vec![0.0; n * cap],
            root_inner: vec![0.0; cap],
            root: vec![0.0; cap],
            resp: vec![0.0; self.padded * n * cap],
            resp_prod: vec![0.0; self.padded * n * cap],
            ratio: vec![0.0; self.padded * n * cap],
            outer: vec![0.0; n * n],
        }
    }

    /// Forward pass over up to `ws.capacity` patterns, given as state slices.
    pub fn forward_batch(&self, patterns: &[&[State]], ws: &mut BatchWorkspace) {
        let n = self.latent();
        let m = self.variables();
        let bsz = patterns.len();
        assert!(bsz <= ws.capacity, "batch exceeds workspace capacity");
        ws.len = bsz;
        if bsz == 0 {
            return;
        }
        for (b, p) in patterns.iter().enumerate() {
            assert_eq!(p.len(), m, "pattern length must equal the variable count");
            ws.states[b * m..(b + 1) * m].copy_from_slice(p);
        }

        for r in 0..self.padded {
            let row = &mut ws.leaves[r * n * bsz..(r + 1) * n * bsz];
            if r >= m {
                row.fill(0.0);
                continue;
            }
            let var = self.permutation[r];
            let base = r * n * 2;
            for j in 0..n {
                let t0 = self.params[base + 2 * j];
                let t1 = self.params[base + 2 * j + 1];
                let marg = log_add_exp(t0, t1);
                let out = &mut row[j * bsz..(j + 1) * bsz];
                for (b, o) in out.iter_mut().enumerate() {
                    *o = match ws.states[b * m + var] {
                        State::Zero => t0,
                        State::One => t1,
                        State::Marginalized => marg,
                    };
                }
            }
        }

        let mut node_base = 0;
        for layer in 0..self.sum_rows.len() {
            let rows = self.sum_rows[layer];
            let below: &[f64] = if layer == 0 { &ws.leaves } else { &ws.sums[layer - 1] };
            let products = &mut ws.products[layer];
            for i in 0..rows {
                let (lo, hi) = (2 * i * n * bsz, (2 * i + 1) * n * bsz);
                let out = &mut products[i * n * bsz..(i + 1) * n * bsz];
                for (idx, o) in out.iter_mut().enumerate() {
                    *o = below[lo + idx] + below[hi + idx];
                }
            }
            let products = &ws.products[layer];
            let scaled = &mut ws.scaled[layer];
            let row_max = &mut ws.row_max[layer];
            for i in 0..rows {
                let maxes = &mut row_max[i * bsz..(i + 1) * bsz];
                maxes.fill(f64::NEG_INFINITY);
                for k in 0..n {
                    let src = &products[(i * n + k) * bsz..(i * n + k + 1) * bsz];
                    for (mx, &v) in maxes.iter_mut().zip(src) {
                        *mx = mx.max(v);
                    }
                }
                for k in 0..n {
                    let off = (i * n + k) * bsz;
                    for b in 0..bsz {
                        let mx = maxes[b];
                        scaled[off + b] = if mx == f64::NEG_INFINITY {
                            0.0
                        } else {
                            (products[off + b] - mx).exp()
                        };
                    }
                }
            }
            let scaled = &ws.scaled[layer];
            let inner = &mut ws.inner[layer];
            let sums = &mut ws.sums[layer];
            for i in 0..rows {
                let w = &self.shifted_weights[(node_base + i * n) * n..(node_base + (i + 1) * n) * n];
                let e = &scaled[i * n * bsz..(i + 1) * n * bsz];
                let out = &mut inner[i * n * bsz..(i + 1) * n * bsz];
                gemm(n, n, bsz, w, (n, 1), e, (bsz, 1), out, bsz);
                for j in 0..n {
                    let node = node_base + i * n + j;
                    let wmax = self.weight_max[node];
                    for b in 0..bsz {
                        let idx = (i * n + j) * bsz + b;
                        let mx = row_max[i * bsz + b];
                        let acc = inner[idx];
                        if mx == f64::NEG_INFINITY {
                            inner[idx] = 0.0;
                            sums[idx] = f64::NEG_INFINITY;
                        } else if acc > f64::MIN_POSITIVE && acc.is_finite() {
                            sums[idx] = mx + wmax + acc.ln();
                        } else {
                            inner[idx] = 0.0;
                            let off = self.sum_offsets[layer] + (i * n + j) * n;
                            let terms: Vec<f64> = (0..n)
                                .map(|k| self.params[off + k] + products[(i * n + k) * bsz + b])
                                .collect();
                            sums[idx] = log_sum_exp(&terms);
                        }
                    }
                }
            }
            node_base += rows * n;
        }

        let top: &[f64] = match ws.sums.last() {
            Some(s) => &s[..n * bsz],
            None => &ws.leaves[..n * bsz],
        };
        let root_w = &self.shifted_weights[node_base * n..(node_base + 1) * n];
        let wmax = self.weight_max[node_base];
        for b in 0..bsz {
            let mx = (0..n).map(|k| top[k * bsz + b]).fold(f64::NEG_INFINITY, f64::max);
            if mx == f64::NEG_INFINITY {
                for k in 0..n {
                    ws.root_scaled[k * bsz + b] = 0.0;
                }
                ws.root_inner[b] = 0.0;
                ws.root[b] = f64::NEG_INFINITY;
                continue;
            }
            let mut acc = 0.0;
            for k in 0..n {
                let e = (top[k * bsz + b] - mx).exp();
                ws.root_scaled[k * bsz + b] = e;
                acc += root_w[k] * e;
            }
            if acc > f64::MIN_POSITIVE && acc.is_finite() {
                ws.root_inner[b] = acc;
                ws.root[b] = mx + wmax + acc.ln();
            } else {
                ws.root_inner[b] = 0.0;
                let terms: Vec<f64> = (0..n)
                    .map(|k| self.params[self.root_offset + k] + top[k * bsz + b])
                    .collect();
                ws.root[b] = log_sum_exp(&terms);
            }
        }
    }

    /// Accumulates `sum_b scale[b] * d(root_b)/d(param)` into `grad`, after
    /// [`Circuit::forward_batch`] on the same workspace.
    pub fn backward_batch(&self, ws: &mut BatchWorkspace, scale: &[f64], grad: &mut [f64]) {
        let n = self.latent();
        let m = self.variables();
        let bsz = ws.len;
        assert_eq!(scale.len(), bsz);
        if bsz == 0 {
            return;
        }
        let layers = self.sum_rows.len();
        let root_node = self.weight_max.len() - 1;

        {
            let top: &[f64] = match ws.sums.last() {
                Some(s) => &s[..n * bsz],
                None => &ws.leaves[..n * bsz],
            };
            let root_w = &self.shifted_weights[root_node * n..(root_node + 1) * n];
            for b in 0..bsz {
                let live = ws.root[b] != f64::NEG_INFINITY && scale[b] != 0.0;
                for k in 0..n {
                    let q = if !live {
                        0.0
                    } else if ws.root_inner[b] > 0.0 {
                        root_w[k] * ws.root_scaled[k * bsz + b] / ws.root_inner[b]
                    } else {
                        (self.params[self.root_offset + k] + top[k * bsz + b] - ws.root[b]).exp()
                    };
                    grad[self.root_offset + k] += scale[b] * q;
                    ws.resp[k * bsz + b] = scale[b] * q;
                }
            }
        }

        let mut node_base = root_node;
        for layer in (0..layers).rev() {
            let rows = self.sum_rows[layer];
            node_base -= rows * n;
            let products = &ws.products[layer];
            let scaled = &ws.scaled[layer];
            let sums = &ws.sums[layer];
            let inner = &ws.inner[layer];
            for i in 0..rows {
                let off_layer = self.sum_offsets[layer] + i * n * n;
                let w = &self.shifted_weights[(node_base + i * n) * n..(node_base + (i + 1) * n) * n];
                let resp = &ws.resp[i * n * bsz..(i + 1) * n * bsz];
                let ratio = &mut ws.ratio[..n * bsz];
                let prod_resp = &mut ws.resp_prod[i * n * bsz..(i + 1) * n * bsz];
                let e = &scaled[i * n * bsz..(i + 1) * n * bsz];
                let mut fallback = Vec::new();
                for idx in 0..n * bsz {
                    let r = resp[idx];
                    let gi = i * n * bsz + idx;
                    ratio[idx] = if r == 0.0 || sums[gi] == f64::NEG_INFINITY {
                        0.0
                    } else if inner[gi] > 0.0 {
                        r / inner[gi]
                    } else {
                        fallback.push(idx);
                        0.0
                    };
                }
                // grad_w[j][k] += W[j][k] * sum_b ratio[j][b] * e[k][b]
                gemm(n, bsz, n, ratio, (bsz, 1), e, (1, bsz), &mut ws.outer, n);
                for jk in 0..n * n {
                    grad[off_layer + jk] += w[jk] * ws.outer[jk];
                }
                // prod_resp[k][b] = e[k][b] * sum_j W[j][k] * ratio[j][b]
                gemm(n, n, bsz, w, (1, n), ratio, (bsz, 1), prod_resp, bsz);
                for (pr, &ev) in prod_resp.iter_mut().zip(e) {
                    *pr *= ev;
                }
                for idx in fallback {
                    let (j, b) = (idx / bsz, idx % bsz);
                    let gi = i * n * bsz + idx;
                    let off = off_layer + j * n;
                    for k in 0..n {
                        let q = resp[idx]
                            * (self.params[off + k] + products[(i * n + k) * bsz + b] - sums[gi]).exp();
                        grad[off + k] += q;
                        prod_resp[k * bsz + b] += q;
                    }
                }
            }
            for i in 0..rows {
                let src = i * n * bsz..(i + 1) * n * bsz;
                let (lo, hi) = (2 * i * n * bsz, (2 * i + 1) * n * bsz);
                ws.resp[lo..lo + n * bsz].copy_from_slice(&ws.resp_prod[src.clone()]);
                ws.resp[hi..hi + n * bsz].copy_from_slice(&ws.resp_prod[src]);
            }
        }

        for r in 0..m {
            let var = self.permutation[r];
            let base = r * n * 2;
            for j in 0..n {
                let t0 = self.params[base + 2 * j];
                let t1 = self.params[base + 2 * j + 1];
                let marg = log_add_exp(t0, t1);
                let (p0, p1) = ((t0 - marg).exp(), (t1 - marg).exp());
                let (mut g0, mut g1) = (0.0, 0.0);
                let resp = &ws.resp[(r * n + j) * bsz..(r * n + j + 1) * bsz];
                for (b, &rho) in resp.iter().enumerate() {
                    match ws.states[b * m + var] {
                        State::Zero => g0 += rho,
                        State::One => g1 += rho,
                        State::Marginalized => {
                            g0 += rho * p0;
                            g1 += rho * p1;
                        }
                    }
                }
                grad[base + 2 * j] += g0;
                grad[base + 2 * j + 1] += g1;
            }
        }
    }
}
