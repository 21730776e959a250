use std::sync::Arc;

use rand::Rng;

use crate::diffcore::{CustomBackward, GradError, Tape, Var};

/// Dense tanh network over a flat parameter vector.
///
/// Layer `l` stores its weights row-major (`out × in`) followed by its bias.
/// Hidden layers use tanh; the output layer is tanh-squashed when `out_tanh`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mlp {
    pub sizes: Vec<usize>,
    pub out_tanh: bool,
}

/// Post-activation values of every layer, input first.
#[derive(Debug, Clone)]
pub struct MlpCache {
    pub acts: Vec<Vec<f64>>,
}

impl MlpCache {
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("cache holds the input")
    }
}

impl Mlp {
    pub fn new(input: usize, hidden: &[usize], output: usize, out_tanh: bool) -> Self {
        let mut sizes = vec![input];
        sizes.extend_from_slice(hidden);
        sizes.push(output);
        Mlp { sizes, out_tanh }
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn n_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn n_params(&self) -> usize {
        self.sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// The same network with the output squashing switched.
    pub fn with_out_tanh(&self, out_tanh: bool) -> Self {
        Mlp {
            sizes: self.sizes.clone(),
            out_tanh,
        }
    }

    /// Uniform Glorot weights, zero biases; the last layer is scaled by `out_scale`.
    pub fn init(&self, rng: &mut impl Rng, out_scale: f64) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.n_params());
        for (l, w) in self.sizes.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let mut bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            if l + 1 == self.n_layers() {
                bound *= out_scale;
            }
            for _ in 0..fan_in * fan_out {
                p.push(rng.random_range(-bound..=bound));
            }
            p.extend(std::iter::repeat_n(0.0, fan_out));
        }
        p
    }

    fn squash(&self, layer: usize) -> bool {
        layer + 1 < self.n_layers() || self.out_tanh
    }

    pub fn forward_cached(&self, params: &[f64], x: &[f64]) -> MlpCache {
        debug_assert_eq!(params.len(), self.n_params());
        debug_assert_eq!(x.len(), self.input_dim());
        let mut acts = Vec::with_capacity(self.sizes.len());
        acts.push(x.to_vec());
        let mut off = 0;
        for (l, w) in self.sizes.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let (weights, rest) = params[off..].split_at(n_in * n_out);
            let bias = &rest[..n_out];
            let prev = &acts[l];
            let squash = self.squash(l);
            let y: Vec<f64> = (0..n_out)
                .map(|o| {
                    let row = &weights[o * n_in..(o + 1) * n_in];
                    let z = bias[o] + row.iter().zip(prev).map(|(a, b)| a * b).sum::<f64>();
                    if squash {
                        z.tanh()
                    } else {
                        z
                    }
                })
                .collect();
            acts.push(y);
            off += n_in * n_out + n_out;
        }
        MlpCache { acts }
    }

    pub fn forward(&self, params: &[f64], x: &[f64]) -> Vec<f64> {
        self.forward_cached(params, x).acts.pop().unwrap()
    }

    /// Vector-Jacobian product: accumulates `dyᵀ ∂y/∂θ` into `dparams` and
    /// `dyᵀ ∂y/∂x` into `dx`, each when given.
    pub fn backward(
        &self,
        params: &[f64],
        cache: &MlpCache,
        dy: &[f64],
        mut dparams: Option<&mut [f64]>,
        dx: Option<&mut [f64]>,
    ) {
        let mut offsets = Vec::with_capacity(self.n_layers());
        let mut off = 0;
        for w in self.sizes.windows(2) {
            offsets.push(off);
            off += w[0] * w[1] + w[1];
        }
        let mut delta: Vec<f64> = dy.to_vec();
        for l in (0..self.n_layers()).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            if self.squash(l) {
                for (d, y) in delta.iter_mut().zip(&cache.acts[l + 1]) {
                    *d *= 1.0 - y * y;
                }
            }
            let weights = &params[offsets[l]..offsets[l] + n_in * n_out];
            let prev = &cache.acts[l];
            if let Some(dp) = dparams.as_deref_mut() {
                let (dw, rest) = dp[offsets[l]..].split_at_mut(n_in * n_out);
                for o in 0..n_out {
                    let d = delta[o];
                    if d != 0.0 {
                        for (g, &a) in dw[o * n_in..(o + 1) * n_in].iter_mut().zip(prev) {
                            *g += d * a;
                        }
                        rest[o] += d;
                    }
                }
            }
            if l == 0 && dx.is_none() {
                break;
            }
            let mut next = vec![0.0; n_in];
            for o in 0..n_out {
                let d = delta[o];
                if d != 0.0 {
                    for (g, &w) in next.iter_mut().zip(&weights[o * n_in..(o + 1) * n_in]) {
                        *g += d * w;
                    }
                }
            }
            delta = next;
        }
        if let Some(dx) = dx {
            for (g, d) in dx.iter_mut().zip(&delta) {
                *g += d;
            }
        }
    }

    /// Records one forward pass as a single block on `tape`. With
    /// `ext_offset = Some(k)` the parameter gradient is accumulated into the
    /// tape's external buffer starting at slot `k`; with `None` the
    /// parameters act as constants.
    pub fn record<'t>(
        &self,
        tape: &'t Tape,
        params: &Arc<Vec<f64>>,
        ext_offset: Option<usize>,
        x: &[Var<'t>],
    ) -> Result<Vec<Var<'t>>, GradError> {
        let xv: Vec<f64> = x.iter().map(|v| v.value()).collect();
        let cache = self.forward_cached(params, &xv);
        let out = cache.output().to_vec();
        let op = MlpBlock {
            net: self.clone(),
            params: Arc::clone(params),
            cache,
            ext_offset,
        };
        tape.custom(x, &out, Box::new(op))
    }
}

struct MlpBlock {
    net: Mlp,
    params: Arc<Vec<f64>>,
    cache: MlpCache,
    ext_offset: Option<usize>,
}

impl CustomBackward for MlpBlock {
    fn backward(&self, out_adj: &[f64], in_adj: &mut [f64], ext_adj: &mut [f64]) {
        let dp = self
            .ext_offset
            .map(|k| &mut ext_adj[k..k + self.net.n_params()]);
        self.net
            .backward(&self.params, &self.cache, out_adj, dp, Some(in_adj));
    }
}
