use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::graph::{Graph, ParamId, ParamStore, Var};
use super::tensor::Tensor;
use crate::error::Result;
use crate::rng::RngStream;

/// Parameter initialization.
///
/// `FanIn`: affine weights and biases ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in));
/// recurrent tensors ~ U(-1/sqrt(hidden), 1/sqrt(hidden)).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitScheme {
    #[default]
    FanIn,
    Zeros,
}

pub fn init_bound(fan_in: usize) -> f64 {
    1.0 / libm::sqrt(fan_in.max(1) as f64)
}

fn init_tensor(rng: &mut RngStream, rows: usize, cols: usize, bound: f64, scheme: InitScheme) -> Tensor {
    match scheme {
        InitScheme::Zeros => Tensor::zeros(rows, cols),
        InitScheme::FanIn => {
            let data = (0..rows * cols).map(|_| rng.uniform(-bound, bound)).collect();
            Tensor::from_vec(rows, cols, data).expect("sized buffer")
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Affine {
    pub weight: ParamId,
    pub bias: ParamId,
    pub input: usize,
    pub output: usize,
}

impl Affine {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut RngStream,
        name: &str,
        input: usize,
        output: usize,
        scheme: InitScheme,
    ) -> Self {
        let bound = init_bound(input);
        let weight = store.add(format!("{name}.weight"), init_tensor(rng, input, output, bound, scheme));
        let bias = store.add(format!("{name}.bias"), init_tensor(rng, 1, output, bound, scheme));
        Self { weight, bias, input, output }
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: Var) -> Result<Var> {
        let w = g.param(self.weight);
        let b = g.param(self.bias);
        let y = g.matmul(x, w)?;
        g.add_row(y, b)
    }

    pub fn param_count(&self) -> usize {
        self.input * self.output + self.output
    }
}

/// Affine layers with ELU between them (none after the last).
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Affine>,
    pub alpha: f64,
}

impl Mlp {
    /// `widths = [in, h1, ..., out]`.
    pub fn new(store: &mut ParamStore, rng: &mut RngStream, name: &str, widths: &[usize], scheme: InitScheme) -> Self {
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| Affine::new(store, rng, &format!("{name}.{i}"), w[0], w[1], scheme))
            .collect();
        Self { layers, alpha: 1.0 }
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: Var) -> Result<Var> {
        let mut h = x;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(g, h)?;
            if i + 1 < self.layers.len() {
                h = g.elu(h, self.alpha);
            }
        }
        Ok(h)
    }

    pub fn input(&self) -> usize {
        self.layers.first().map_or(0, |l| l.input)
    }

    pub fn output(&self) -> usize {
        self.layers.last().map_or(0, |l| l.output)
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w: Vec<usize> = self.layers.iter().map(|l| l.input).collect();
        w.push(self.output());
        w
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Affine::param_count).sum()
    }

    /// Multiplies the last layer's weights by `k` (small-output init for policy heads).
    pub fn scale_output(&self, store: &mut ParamStore, k: f64) {
        if let Some(last) = self.layers.last() {
            store.get_mut(last.weight).data_mut().iter_mut().for_each(|x| *x *= k);
            store.get_mut(last.bias).data_mut().iter_mut().for_each(|x| *x *= k);
        }
    }
}

/// GRU cell with separate input-path and hidden-path biases per gate:
///
/// ```text
/// r  = sigmoid(x W_ir + b_ir + h W_hr + b_hr)
/// u  = sigmoid(x W_iz + b_iz + h W_hz + b_hz)
/// n  = tanh(x W_in + b_in + r * (h W_hn + b_hn))
/// h' = (1 - u) * n + u * h
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct GruCell {
    pub input: usize,
    pub hidden: usize,
    /// Reset, update, candidate: (W_i, W_h, b_i, b_h).
    gates: [(ParamId, ParamId, ParamId, ParamId); 3],
}

impl GruCell {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut RngStream,
        name: &str,
        input: usize,
        hidden: usize,
        scheme: InitScheme,
    ) -> Self {
        let bound = init_bound(hidden);
        let mut gate = |tag: &str| {
            (
                store.add(format!("{name}.w_i{tag}"), init_tensor(rng, input, hidden, bound, scheme)),
                store.add(format!("{name}.w_h{tag}"), init_tensor(rng, hidden, hidden, bound, scheme)),
                store.add(format!("{name}.b_i{tag}"), init_tensor(rng, 1, hidden, bound, scheme)),
                store.add(format!("{name}.b_h{tag}"), init_tensor(rng, 1, hidden, bound, scheme)),
            )
        };
        let gates = [gate("r"), gate("z"), gate("n")];
        Self { input, hidden, gates }
    }

    fn affine_pair(&self, g: &mut Graph<'_>, x: Var, h: Var, gate: usize) -> Result<(Var, Var)> {
        let (wi, wh, bi, bh) = self.gates[gate];
        let wi = g.param(wi);
        let wh = g.param(wh);
        let bi = g.param(bi);
        let bh = g.param(bh);
        let xi = g.matmul(x, wi)?;
        let xi = g.add_row(xi, bi)?;
        let hh = g.matmul(h, wh)?;
        let hh = g.add_row(hh, bh)?;
        Ok((xi, hh))
    }

    pub fn step(&self, g: &mut Graph<'_>, x: Var, h: Var) -> Result<Var> {
        let (xr, hr) = self.affine_pair(g, x, h, 0)?;
        let r = g.add(xr, hr)?;
        let r = g.sigmoid(r);
        let (xz, hz) = self.affine_pair(g, x, h, 1)?;
        let u = g.add(xz, hz)?;
        let u = g.sigmoid(u);
        let (xn, hn) = self.affine_pair(g, x, h, 2)?;
        let gated = g.mul(r, hn)?;
        let n = g.add(xn, gated)?;
        let n = g.tanh(n);
        // h' = n + u * (h - n)
        let diff = g.sub(h, n)?;
        let mix = g.mul(u, diff)?;
        g.add(n, mix)
    }

    pub fn param_count(&self) -> usize {
        3 * (self.input * self.hidden + self.hidden * self.hidden + 2 * self.hidden)
    }
}

/// Diagonal Gaussian with a state-independent learnable log standard deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianHead {
    pub log_std: ParamId,
    pub dim: usize,
}

impl GaussianHead {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize, init_std: f64) -> Self {
        let log_std = store.add(format!("{name}.log_std"), Tensor::filled(1, dim, libm::log(init_std)));
        Self { log_std, dim }
    }

    pub fn std(&self, store: &ParamStore) -> Vec<f64> {
        store.get(self.log_std).data().iter().map(|l| libm::exp(*l)).collect()
    }

    pub fn param_count(&self) -> usize {
        self.dim
    }
}
