//! Message-passing value network with hand-written reverse mode.
//!
//! ```text
//! h0_v      = node features
//! m_uv      = W_m [h_u ; e_uv] + b_m                    (per layer)
//! a_v       = max_u m_uv        (elementwise, 0 without in-edges)
//! h_v'      = tanh(W_u [h_v ; a_v] + b_u)
//! z         = tanh(W_e [h_ego ; f_ego] + b_e)
//! y         = head(z)          (tanh MLP, linear scalar output)
//! V         = return_scale * y
//! ```

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::features::{TrafficGraph, EDGE_DIM, EGO_DIM, NODE_DIM};
use super::CriticError;
use crate::seed;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Arch {
    pub node_dim: usize,
    pub edge_dim: usize,
    pub ego_dim: usize,
    pub layers: usize,
    pub hidden: usize,
    pub embed: usize,
    pub head: Vec<usize>,
}

impl Default for Arch {
    fn default() -> Self {
        Self {
            node_dim: NODE_DIM,
            edge_dim: EDGE_DIM,
            ego_dim: EGO_DIM,
            layers: 3,
            hidden: 80,
            embed: 80,
            head: vec![256, 128, 64],
        }
    }
}

impl Arch {
    fn layer_in(&self, k: usize) -> usize {
        if k == 0 {
            self.node_dim
        } else {
            self.hidden
        }
    }

    fn node_out(&self) -> usize {
        self.layer_in(self.layers)
    }

    /// Named parameter blocks as `(name, rows, cols)`, in storage order.
    pub fn blocks(&self) -> Vec<(String, usize, usize)> {
        let mut out = Vec::new();
        for k in 0..self.layers {
            let d = self.layer_in(k);
            out.push((format!("mp{k}.msg.w"), self.hidden, d + self.edge_dim));
            out.push((format!("mp{k}.msg.b"), self.hidden, 1));
            out.push((format!("mp{k}.upd.w"), self.hidden, d + self.hidden));
            out.push((format!("mp{k}.upd.b"), self.hidden, 1));
        }
        out.push(("embed.w".into(), self.embed, self.node_out() + self.ego_dim));
        out.push(("embed.b".into(), self.embed, 1));
        let mut width = self.embed;
        for (i, &h) in self.head.iter().chain(std::iter::once(&1)).enumerate() {
            out.push((format!("head{i}.w"), h, width));
            out.push((format!("head{i}.b"), h, 1));
            width = h;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
}

impl Block {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValueNet {
    pub arch: Arch,
    pub layout: Vec<Block>,
    /// All parameters, block after block, weights row-major.
    pub params: Vec<f64>,
    pub return_scale: f64,
}

/// Intermediate values of one forward pass.
#[derive(Debug, Clone)]
pub struct Cache {
    /// Node states per layer, `n × d_k`, for k = 0..=layers.
    h: Vec<Vec<f64>>,
    /// Winning edge per node and channel, `usize::MAX` when there is none.
    arg: Vec<Vec<usize>>,
    agg: Vec<Vec<f64>>,
    z_in: Vec<f64>,
    /// Head activations; index 0 is the embedding.
    acts: Vec<Vec<f64>>,
    pub output: f64,
}

fn layout_of(arch: &Arch) -> Vec<Block> {
    let mut offset = 0;
    arch.blocks()
        .into_iter()
        .map(|(name, rows, cols)| {
            let b = Block { name, rows, cols, offset };
            offset += rows * cols;
            b
        })
        .collect()
}

/// `out = W x + b` for a row-major `W`.
fn affine(w: &[f64], b: &[f64], x: &[f64], out: &mut [f64]) {
    let cols = x.len();
    for (r, o) in out.iter_mut().enumerate() {
        let row = &w[r * cols..(r + 1) * cols];
        *o = b[r] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// Accumulates `gW += d ⊗ x`, `gb += d` and returns `Wᵀ d` into `dx`.
fn affine_back(w: &[f64], x: &[f64], d: &[f64], gw: &mut [f64], gb: &mut [f64], dx: &mut [f64]) {
    let cols = x.len();
    for (r, &dr) in d.iter().enumerate() {
        if dr == 0.0 {
            continue;
        }
        gb[r] += dr;
        let row = &w[r * cols..(r + 1) * cols];
        let grow = &mut gw[r * cols..(r + 1) * cols];
        for c in 0..cols {
            grow[c] += dr * x[c];
            dx[c] += dr * row[c];
        }
    }
}

impl ValueNet {
    /// All-zero parameters.
    pub fn zeros(arch: Arch, return_scale: f64) -> Self {
        let layout = layout_of(&arch);
        let n = layout.iter().map(Block::len).sum();
        Self { arch, layout, params: vec![0.0; n], return_scale }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init(arch: Arch, return_scale: f64, seed_value: u64) -> Self {
        let mut net = Self::zeros(arch, return_scale);
        let mut rng = seed::derived_rng(seed_value, seed::tags::MODEL_INIT);
        for b in &net.layout {
            if b.cols == 1 {
                continue;
            }
            let limit = (6.0 / (b.rows + b.cols) as f64).sqrt();
            for p in &mut net.params[b.range()] {
                *p = rng.random_range(-limit..=limit);
            }
        }
        net
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn block(&self, name: &str) -> Option<&Block> {
        self.layout.iter().find(|b| b.name == name)
    }

    fn slice(&self, idx: usize) -> &[f64] {
        &self.params[self.layout[idx].range()]
    }

    fn embed_index(&self) -> usize {
        4 * self.arch.layers
    }

    fn check(&self, graph: &TrafficGraph) -> Result<(), CriticError> {
        if self.arch.node_dim != NODE_DIM || self.arch.edge_dim != EDGE_DIM || self.arch.ego_dim != EGO_DIM {
            return Err(CriticError::Dimension("network feature sizes do not match the graph".into()));
        }
        if graph.nodes.is_empty() {
            return Err(CriticError::Dimension("graph has no ego node".into()));
        }
        if let Some(e) = graph.edges.iter().find(|e| e.src >= graph.nodes.len() || e.dst >= graph.nodes.len()) {
            return Err(CriticError::Dimension(format!("edge {}->{} out of range", e.src, e.dst)));
        }
        Ok(())
    }

    pub fn value(&self, graph: &TrafficGraph) -> Result<f64, CriticError> {
        Ok(self.forward(graph)?.output * self.return_scale)
    }

    /// Raw network output (before `return_scale`) with cached intermediates.
    pub fn forward(&self, graph: &TrafficGraph) -> Result<Cache, CriticError> {
        self.check(graph)?;
        let a = &self.arch;
        let n = graph.nodes.len();
        let hd = a.hidden;
        let mut h = vec![graph.nodes.iter().flatten().copied().collect::<Vec<f64>>()];
        let (mut args, mut aggs) = (Vec::new(), Vec::new());
        for k in 0..a.layers {
            let d = a.layer_in(k);
            let hin = &h[k];
            let (mw, mb) = (self.slice(4 * k), self.slice(4 * k + 1));
            let (uw, ub) = (self.slice(4 * k + 2), self.slice(4 * k + 3));
            let mut msg = vec![0.0; graph.edges.len() * hd];
            let mut input = vec![0.0; d + a.edge_dim];
            for (i, e) in graph.edges.iter().enumerate() {
                input[..d].copy_from_slice(&hin[e.src * d..(e.src + 1) * d]);
                input[d..].copy_from_slice(&e.features);
                affine(mw, mb, &input, &mut msg[i * hd..(i + 1) * hd]);
            }
            let mut agg = vec![0.0; n * hd];
            let mut arg = vec![usize::MAX; n * hd];
            for (i, e) in graph.edges.iter().enumerate() {
                for c in 0..hd {
                    let slot = e.dst * hd + c;
                    let m = msg[i * hd + c];
                    if arg[slot] == usize::MAX || m > agg[slot] {
                        agg[slot] = m;
                        arg[slot] = i;
                    }
                }
            }
            let mut hout = vec![0.0; n * hd];
            let mut upd_in = vec![0.0; d + hd];
            for v in 0..n {
                upd_in[..d].copy_from_slice(&hin[v * d..(v + 1) * d]);
                upd_in[d..].copy_from_slice(&agg[v * hd..(v + 1) * hd]);
                let out = &mut hout[v * hd..(v + 1) * hd];
                affine(uw, ub, &upd_in, out);
                out.iter_mut().for_each(|x| *x = x.tanh());
            }
            args.push(arg);
            aggs.push(agg);
            h.push(hout);
        }
        let dk = a.node_out();
        let mut z_in = h[a.layers][..dk].to_vec();
        z_in.extend_from_slice(&graph.ego);
        let ei = self.embed_index();
        let mut z = vec![0.0; a.embed];
        affine(self.slice(ei), self.slice(ei + 1), &z_in, &mut z);
        z.iter_mut().for_each(|x| *x = x.tanh());
        let mut acts = vec![z];
        let depth = a.head.len() + 1;
        for i in 0..depth {
            let bi = ei + 2 + 2 * i;
            let mut out = vec![0.0; self.layout[bi].rows];
            affine(self.slice(bi), self.slice(bi + 1), acts.last().expect("non-empty"), &mut out);
            if i + 1 < depth {
                out.iter_mut().for_each(|x| *x = x.tanh());
            }
            acts.push(out);
        }
        let output = acts.last().expect("non-empty")[0];
        Ok(Cache { h, arg: args, agg: aggs, z_in, acts, output })
    }

    /// Gradient of `d_out * y` with respect to every parameter, where `y` is
    /// the raw output cached in `cache`.
    pub fn backward(&self, graph: &TrafficGraph, cache: &Cache, d_out: f64) -> Vec<f64> {
        let a = &self.arch;
        let mut g = vec![0.0; self.params.len()];
        if d_out == 0.0 {
            return g;
        }
        let ei = self.embed_index();
        let depth = a.head.len() + 1;
        let mut d_act = vec![d_out];
        for i in (0..depth).rev() {
            let bi = ei + 2 + 2 * i;
            let out = &cache.acts[i + 1];
            let d_pre: Vec<f64> = if i + 1 < depth {
                d_act.iter().zip(out).map(|(d, y)| d * (1.0 - y * y)).collect()
            } else {
                d_act.clone()
            };
            let x = &cache.acts[i];
            let mut dx = vec![0.0; x.len()];
            let (gw, gb) = split_pair(&mut g, &self.layout[bi], &self.layout[bi + 1]);
            affine_back(self.slice(bi), x, &d_pre, gw, gb, &mut dx);
            d_act = dx;
        }
        let z = &cache.acts[0];
        let d_pre: Vec<f64> = d_act.iter().zip(z).map(|(d, y)| d * (1.0 - y * y)).collect();
        let mut dz_in = vec![0.0; cache.z_in.len()];
        {
            let (gw, gb) = split_pair(&mut g, &self.layout[ei], &self.layout[ei + 1]);
            affine_back(self.slice(ei), &cache.z_in, &d_pre, gw, gb, &mut dz_in);
        }
        let n = graph.nodes.len();
        let hd = a.hidden;
        let dk = a.node_out();
        let mut dh = vec![0.0; n * dk];
        dh[..dk].copy_from_slice(&dz_in[..dk]);
        for k in (0..a.layers).rev() {
            let d = a.layer_in(k);
            let hin = &cache.h[k];
            let hout = &cache.h[k + 1];
            let agg = &cache.agg[k];
            let mut dh_in = vec![0.0; n * d];
            let mut d_agg = vec![0.0; n * hd];
            let mut upd_in = vec![0.0; d + hd];
            let mut d_upd_in = vec![0.0; d + hd];
            for v in 0..n {
                let d_pre: Vec<f64> = (0..hd)
                    .map(|c| {
                        let y = hout[v * hd + c];
                        dh[v * hd + c] * (1.0 - y * y)
                    })
                    .collect();
                if d_pre.iter().all(|x| *x == 0.0) {
                    continue;
                }
                upd_in[..d].copy_from_slice(&hin[v * d..(v + 1) * d]);
                upd_in[d..].copy_from_slice(&agg[v * hd..(v + 1) * hd]);
                d_upd_in.iter_mut().for_each(|x| *x = 0.0);
                let (gw, gb) = split_pair(&mut g, &self.layout[4 * k + 2], &self.layout[4 * k + 3]);
                affine_back(self.slice(4 * k + 2), &upd_in, &d_pre, gw, gb, &mut d_upd_in);
                for c in 0..d {
                    dh_in[v * d + c] += d_upd_in[c];
                }
                d_agg[v * hd..(v + 1) * hd].copy_from_slice(&d_upd_in[d..]);
            }
            let mut d_msg = vec![0.0; graph.edges.len() * hd];
            for (slot, &e) in cache.arg[k].iter().enumerate() {
                if e != usize::MAX {
                    d_msg[e * hd + slot % hd] += d_agg[slot];
                }
            }
            let mut input = vec![0.0; d + a.edge_dim];
            let mut d_input = vec![0.0; d + a.edge_dim];
            for (i, e) in graph.edges.iter().enumerate() {
                let dm = &d_msg[i * hd..(i + 1) * hd];
                if dm.iter().all(|x| *x == 0.0) {
                    continue;
                }
                input[..d].copy_from_slice(&hin[e.src * d..(e.src + 1) * d]);
                input[d..].copy_from_slice(&e.features);
                d_input.iter_mut().for_each(|x| *x = 0.0);
                let (gw, gb) = split_pair(&mut g, &self.layout[4 * k], &self.layout[4 * k + 1]);
                affine_back(self.slice(4 * k), &input, dm, gw, gb, &mut d_input);
                for c in 0..d {
                    dh_in[e.src * d + c] += d_input[c];
                }
            }
            dh = dh_in;
        }
        g
    }

    /// Gradient of `upstream * V` with respect to every parameter.
    pub fn value_gradient(&self, graph: &TrafficGraph, upstream: f64) -> Result<Vec<f64>, CriticError> {
        let cache = self.forward(graph)?;
        Ok(self.backward(graph, &cache, upstream * self.return_scale))
    }
}

/// Disjoint mutable views of a weight block and the bias block after it.
fn split_pair<'a>(g: &'a mut [f64], w: &Block, b: &Block) -> (&'a mut [f64], &'a mut [f64]) {
    debug_assert_eq!(w.offset + w.len(), b.offset);
    let (head, tail) = g[w.offset..].split_at_mut(w.len());
    (head, &mut tail[..b.len()])
}
