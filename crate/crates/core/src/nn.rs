//! Minimal fully connected network with tanh hidden layers and a linear
//! output, operating on flat parameter slices so that parameter blocks can be
//! optimized and serialized as plain vectors.

use rand::Rng;
use rand_distr::StandardNormal;

/// Layer widths from input to output, e.g. `[obs, 32, 32, act]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mlp {
    sizes: Vec<usize>,
}

/// Activations cached by [`Mlp::forward`] for the backward pass.
#[derive(Debug, Clone, Default)]
pub struct Workspace {
    acts: Vec<Vec<f64>>,
    delta: Vec<f64>,
    next: Vec<f64>,
}

impl Mlp {
    pub fn new(sizes: Vec<usize>) -> Self {
        assert!(sizes.len() >= 2 && sizes.iter().all(|&s| s > 0), "bad layer sizes");
        Self { sizes }
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn n_params(&self) -> usize {
        self.sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn workspace(&self) -> Workspace {
        Workspace {
            acts: self.sizes.iter().map(|&s| vec![0.0; s]).collect(),
            delta: Vec::new(),
            next: Vec::new(),
        }
    }

    /// Gaussian fan-in initialization; the output layer is scaled by
    /// `output_gain` so a fresh network starts near zero output.
    pub fn init<R: Rng + ?Sized>(&self, rng: &mut R, output_gain: f64) -> Vec<f64> {
        let mut params = Vec::with_capacity(self.n_params());
        let layers = self.sizes.len() - 1;
        for (l, w) in self.sizes.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let gain = if l + 1 == layers { output_gain } else { 1.0 };
            let scale = gain / (fan_in as f64).sqrt();
            for _ in 0..fan_in * fan_out {
                let z: f64 = rng.sample(StandardNormal);
                params.push(z * scale);
            }
            params.extend(std::iter::repeat_n(0.0, fan_out));
        }
        params
    }

    /// Runs the network, leaving every layer's activation in `ws`.
    pub fn forward<'w>(&self, params: &[f64], x: &[f64], ws: &'w mut Workspace) -> &'w [f64] {
        debug_assert_eq!(params.len(), self.n_params());
        debug_assert_eq!(x.len(), self.input_dim());
        if ws.acts.len() != self.sizes.len() {
            *ws = self.workspace();
        }
        ws.acts[0].copy_from_slice(x);
        let layers = self.sizes.len() - 1;
        let mut off = 0;
        for l in 0..layers {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let (w, rest) = params[off..].split_at(n_in * n_out);
            let b = &rest[..n_out];
            off += n_in * n_out + n_out;
            let (prev, cur) = ws.acts.split_at_mut(l + 1);
            let input = &prev[l];
            let out = &mut cur[0];
            for o in 0..n_out {
                let row = &w[o * n_in..(o + 1) * n_in];
                let mut s = b[o];
                for (wi, xi) in row.iter().zip(input.iter()) {
                    s += wi * xi;
                }
                out[o] = if l + 1 < layers { s.tanh() } else { s };
            }
        }
        &ws.acts[layers]
    }

    /// Adds `d loss / d params` to `grad` given `d loss / d output`, using the
    /// activations of the most recent forward pass in `ws`.
    pub fn backward(&self, params: &[f64], ws: &mut Workspace, grad_out: &[f64], grad: &mut [f64]) {
        let layers = self.sizes.len() - 1;
        // parameter offsets of each layer
        let mut offsets = Vec::with_capacity(layers);
        let mut off = 0;
        for l in 0..layers {
            offsets.push(off);
            off += self.sizes[l] * self.sizes[l + 1] + self.sizes[l + 1];
        }
        let Workspace { acts, delta, next } = ws;
        delta.clear();
        delta.extend_from_slice(grad_out);
        for l in (0..layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let off = offsets[l];
            let input = &acts[l];
            let w = &params[off..off + n_in * n_out];
            {
                let (gw, gb) = grad[off..off + n_in * n_out + n_out].split_at_mut(n_in * n_out);
                for o in 0..n_out {
                    let d = delta[o];
                    if d == 0.0 {
                        continue;
                    }
                    gb[o] += d;
                    for (g, xi) in gw[o * n_in..(o + 1) * n_in].iter_mut().zip(input.iter()) {
                        *g += d * xi;
                    }
                }
            }
            if l == 0 {
                break;
            }
            next.clear();
            next.resize(n_in, 0.0);
            for o in 0..n_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                for (nx, wi) in next.iter_mut().zip(&w[o * n_in..(o + 1) * n_in]) {
                    *nx += d * wi;
                }
            }
            // through tanh of the previous layer
            for (nx, a) in next.iter_mut().zip(input.iter()) {
                *nx *= 1.0 - a * a;
            }
            std::mem::swap(delta, next);
        }
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n_params: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }

    /// Descends along `grad`.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= self.lr * mh / (vh.sqrt() + self.eps);
        }
    }
}

/// Rescales `grad` in place so its Euclidean norm is at most `max_norm`.
pub fn clip_norm(grad: &mut [f64], max_norm: f64) {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= s);
    }
}
