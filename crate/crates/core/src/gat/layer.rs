use std::cmp::Ordering;

use crate::error::{Error, Result};

use super::graph::GatGraph;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    /// Per-head ReLU, heads concatenated.
    Hidden,
    /// Heads averaged, then sigmoid.
    Output,
}

/// `(neighbour, alpha)` pairs of one node in one head.
pub type AttentionRow = Vec<(usize, f64)>;

/// One multi-head graph attention layer. `w[k]` is `out_dim x in_dim`
/// row-major; `a[k]` is `[a_src; a_dst]` of length `2 * out_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct GatLayer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub heads: usize,
    pub kind: LayerKind,
    pub leaky_slope: f64,
    pub w: Vec<Vec<f64>>,
    pub a: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub w: Vec<Vec<f64>>,
    pub a: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub(crate) struct HeadCache {
    /// `n x out_dim` transformed features.
    z: Vec<f64>,
    /// Per node: neighbours in summation order.
    order: Vec<Vec<usize>>,
    /// Per node: attention logits before LeakyReLU, aligned with `order`.
    u: Vec<Vec<f64>>,
    alpha: Vec<Vec<f64>>,
    /// `n x out_dim` attention-weighted sums.
    agg: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct LayerCache {
    input: Vec<f64>,
    heads: Vec<HeadCache>,
    /// Layer output: concatenated ReLU for hidden layers, sigmoid for output.
    output: Vec<f64>,
}

impl LayerCache {
    pub fn output(&self) -> &[f64] {
        &self.output
    }

    /// Signs of every LeakyReLU input and every ReLU input. Two parameter
    /// settings with equal patterns lie in the same smooth piece.
    pub fn activation_pattern(&self, kind: LayerKind) -> Vec<bool> {
        let mut p = Vec::new();
        for h in &self.heads {
            for row in &h.u {
                p.extend(row.iter().map(|v| *v > 0.0));
            }
            if kind == LayerKind::Hidden {
                p.extend(h.agg.iter().map(|v| *v > 0.0));
            }
        }
        p
    }
}

pub(crate) fn leaky(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        slope * x
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn cmp_rows(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    Ordering::Equal
}

impl GatLayer {
    pub fn zeros(in_dim: usize, out_dim: usize, heads: usize, kind: LayerKind, leaky_slope: f64) -> Self {
        Self {
            in_dim,
            out_dim,
            heads,
            kind,
            leaky_slope,
            w: vec![vec![0.0; out_dim * in_dim]; heads],
            a: vec![vec![0.0; 2 * out_dim]; heads],
        }
    }

    /// Width of the layer output per node.
    pub fn output_dim(&self) -> usize {
        match self.kind {
            LayerKind::Hidden => self.heads * self.out_dim,
            LayerKind::Output => self.out_dim,
        }
    }

    pub fn param_count(&self) -> usize {
        self.heads * (self.out_dim * self.in_dim + 2 * self.out_dim)
    }

    pub fn zero_grads(&self) -> LayerGrads {
        LayerGrads {
            w: vec![vec![0.0; self.out_dim * self.in_dim]; self.heads],
            a: vec![vec![0.0; 2 * self.out_dim]; self.heads],
        }
    }

    fn check_input(&self, g: &GatGraph, h: &[f64]) -> Result<()> {
        if h.len() != g.len() * self.in_dim {
            return Err(Error::DimensionMismatch(format!(
                "layer expects {} x {} inputs, got {} values",
                g.len(),
                self.in_dim,
                h.len()
            )));
        }
        Ok(())
    }

    fn head_forward(&self, k: usize, g: &GatGraph, h: &[f64]) -> HeadCache {
        let (n, din, dout) = (g.len(), self.in_dim, self.out_dim);
        let w = &self.w[k];
        let mut z = vec![0.0; n * dout];
        for i in 0..n {
            let hi = &h[i * din..(i + 1) * din];
            for r in 0..dout {
                z[i * dout + r] = w[r * din..(r + 1) * din].iter().zip(hi).map(|(a, b)| a * b).sum();
            }
        }
        let (a_src, a_dst) = self.a[k].split_at(dout);
        let dot = |v: &[f64], i: usize| -> f64 { v.iter().zip(&z[i * dout..(i + 1) * dout]).map(|(a, b)| a * b).sum() };
        let s: Vec<f64> = (0..n).map(|i| dot(a_src, i)).collect();
        let t: Vec<f64> = (0..n).map(|j| dot(a_dst, j)).collect();

        let mut order = Vec::with_capacity(n);
        let mut us = Vec::with_capacity(n);
        let mut alphas = Vec::with_capacity(n);
        let mut agg = vec![0.0; n * dout];
        for i in 0..n {
            // summation order depends only on values, never on node labels
            let mut nb: Vec<(usize, f64)> = g.neighbors(i).iter().map(|&j| (j, s[i] + t[j])).collect();
            nb.sort_by(|(ja, ua), (jb, ub)| {
                ua.total_cmp(ub).then_with(|| cmp_rows(&z[ja * dout..(ja + 1) * dout], &z[jb * dout..(jb + 1) * dout]))
            });
            let e: Vec<f64> = nb.iter().map(|(_, u)| leaky(*u, self.leaky_slope)).collect();
            let m = e.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let ex: Vec<f64> = e.iter().map(|v| (v - m).exp()).collect();
            let denom: f64 = ex.iter().sum();
            let alpha: Vec<f64> = ex.iter().map(|v| v / denom).collect();
            let out = &mut agg[i * dout..(i + 1) * dout];
            for ((j, _), al) in nb.iter().zip(&alpha) {
                for (o, zj) in out.iter_mut().zip(&z[j * dout..(j + 1) * dout]) {
                    *o += al * zj;
                }
            }
            order.push(nb.iter().map(|(j, _)| *j).collect());
            us.push(nb.iter().map(|(_, u)| *u).collect());
            alphas.push(alpha);
        }
        HeadCache { z, order, u: us, alpha: alphas, agg }
    }

    /// Attention coefficients per head and node; each row sums to one.
    pub fn attention_coefficients(&self, g: &GatGraph, h: &[f64]) -> Result<Vec<Vec<AttentionRow>>> {
        self.check_input(g, h)?;
        Ok((0..self.heads)
            .map(|k| {
                let hc = self.head_forward(k, g, h);
                hc.order
                    .iter()
                    .zip(&hc.alpha)
                    .map(|(o, a)| o.iter().copied().zip(a.iter().copied()).collect())
                    .collect()
            })
            .collect())
    }

    pub fn forward(&self, g: &GatGraph, h: &[f64]) -> Result<LayerCache> {
        self.check_input(g, h)?;
        let n = g.len();
        let dout = self.out_dim;
        let heads: Vec<HeadCache> = (0..self.heads).map(|k| self.head_forward(k, g, h)).collect();
        let output = match self.kind {
            LayerKind::Hidden => {
                let width = self.heads * dout;
                let mut out = vec![0.0; n * width];
                for i in 0..n {
                    for (k, hc) in heads.iter().enumerate() {
                        for r in 0..dout {
                            out[i * width + k * dout + r] = hc.agg[i * dout + r].max(0.0);
                        }
                    }
                }
                out
            }
            LayerKind::Output => {
                let mut out = vec![0.0; n * dout];
                for (o, idx) in out.iter_mut().zip(0..) {
                    let mean = heads.iter().map(|hc| hc.agg[idx]).sum::<f64>() / self.heads as f64;
                    *o = sigmoid(mean);
                }
                out
            }
        };
        Ok(LayerCache { input: h.to_vec(), heads, output })
    }

    /// Given the loss gradient with respect to this layer's output, return
    /// parameter gradients and the gradient with respect to the input.
    pub fn backward(&self, g: &GatGraph, cache: &LayerCache, d_out: &[f64]) -> (LayerGrads, Vec<f64>) {
        let (n, din, dout) = (g.len(), self.in_dim, self.out_dim);
        let h = &cache.input;
        let mut grads = self.zero_grads();
        let mut dh = vec![0.0; n * din];
        for (k, hc) in cache.heads.iter().enumerate() {
            let mut dagg = vec![0.0; n * dout];
            match self.kind {
                LayerKind::Hidden => {
                    let width = self.heads * dout;
                    for i in 0..n {
                        for r in 0..dout {
                            if hc.agg[i * dout + r] > 0.0 {
                                dagg[i * dout + r] = d_out[i * width + k * dout + r];
                            }
                        }
                    }
                }
                LayerKind::Output => {
                    for idx in 0..n * dout {
                        let s = cache.output[idx];
                        dagg[idx] = d_out[idx] * s * (1.0 - s) / self.heads as f64;
                    }
                }
            }

            let mut dz = vec![0.0; n * dout];
            let mut ds = vec![0.0; n];
            let mut dt = vec![0.0; n];
            for i in 0..n {
                let di = &dagg[i * dout..(i + 1) * dout];
                let order = &hc.order[i];
                let alpha = &hc.alpha[i];
                let dalpha: Vec<f64> = order
                    .iter()
                    .map(|&j| di.iter().zip(&hc.z[j * dout..(j + 1) * dout]).map(|(a, b)| a * b).sum())
                    .collect();
                for (&j, al) in order.iter().zip(alpha) {
                    for (dzj, d) in dz[j * dout..(j + 1) * dout].iter_mut().zip(di) {
                        *dzj += al * d;
                    }
                }
                let mix: f64 = alpha.iter().zip(&dalpha).map(|(a, d)| a * d).sum();
                for ((&j, al), (da, u)) in order.iter().zip(alpha).zip(dalpha.iter().zip(&hc.u[i])) {
                    let de = al * (da - mix);
                    let du = if *u > 0.0 { de } else { self.leaky_slope * de };
                    ds[i] += du;
                    dt[j] += du;
                }
            }

            let (a_src, a_dst) = self.a[k].split_at(dout);
            let ga = &mut grads.a[k];
            for i in 0..n {
                let zi = &hc.z[i * dout..(i + 1) * dout];
                for r in 0..dout {
                    ga[r] += ds[i] * zi[r];
                    ga[dout + r] += dt[i] * zi[r];
                    dz[i * dout + r] += ds[i] * a_src[r] + dt[i] * a_dst[r];
                }
            }

            let w = &self.w[k];
            let gw = &mut grads.w[k];
            for j in 0..n {
                let hj = &h[j * din..(j + 1) * din];
                let dhj = &mut dh[j * din..(j + 1) * din];
                for r in 0..dout {
                    let d = dz[j * dout + r];
                    if d == 0.0 {
                        continue;
                    }
                    let row = r * din;
                    for c in 0..din {
                        gw[row + c] += d * hj[c];
                        dhj[c] += d * w[row + c];
                    }
                }
            }
        }
        (grads, dh)
    }
}
