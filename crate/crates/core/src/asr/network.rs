//! GRU acoustic model with hand-written backpropagation through time.
//!
//! Layout: a gated recurrent layer (optionally bidirectional) over feature
//! frames, followed by one affine layer producing per-frame class logits
//! and a log-softmax. Gate order inside every `3H`-row block is
//! reset, update, candidate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::scalar::{log_sum_exp, Real};

/// `y = W x + b` with `W` stored row-major as `rows x cols`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    pub rows: usize,
    pub cols: usize,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> Dense<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            weight: vec![T::zero(); rows * cols],
            bias: vec![T::zero(); rows],
        }
    }

    fn uniform(rows: usize, cols: usize, bound: f64, rng: &mut impl Rng) -> Self {
        let mut draw = |n: usize| (0..n).map(|_| T::lit(rng.random_range(-bound..bound))).collect();
        Self {
            rows,
            cols,
            weight: draw(rows * cols),
            bias: draw(rows),
        }
    }

    /// `out (n x rows) = input (n x cols) * W^T + b`.
    fn apply_rows(&self, input: &[T], n: usize) -> Vec<T> {
        let mut out: Vec<T> = (0..n).flat_map(|_| self.bias.iter().copied()).collect();
        T::gemm(n, self.cols, self.rows, T::one(), input, false, &self.weight, true, T::one(), &mut out);
        out
    }

    /// Accumulates `dW += d_out^T * input` and `db += sum(d_out)` over `n` rows.
    fn accumulate_grad(&self, grad: &mut Dense<T>, d_out: &[T], input: &[T], n: usize) {
        T::gemm(self.rows, n, self.cols, T::one(), d_out, true, input, false, T::one(), &mut grad.weight);
        for row in d_out.chunks_exact(self.rows) {
            for (g, &d) in grad.bias.iter_mut().zip(row) {
                *g += d;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GruLayer<T> {
    /// `3H x D` input projection.
    pub input: Dense<T>,
    /// `3H x H` recurrent projection.
    pub recurrent: Dense<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    pub input_dim: usize,
    pub hidden: usize,
    pub forward: GruLayer<T>,
    pub backward: Option<GruLayer<T>>,
    /// `C x (H or 2H)` output layer.
    pub output: Dense<T>,
}

/// Identifies one parameter tensor; used for pruning and serialization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TensorInfo {
    pub name: &'static str,
    /// Weight matrices of the affine (fully connected) projections.
    pub fully_connected: bool,
}

const TENSORS: [TensorInfo; 4] = [
    TensorInfo { name: "input.weight", fully_connected: true },
    TensorInfo { name: "input.bias", fully_connected: false },
    TensorInfo { name: "recurrent.weight", fully_connected: false },
    TensorInfo { name: "recurrent.bias", fully_connected: false },
];

#[inline]
fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

/// Dot product with independent accumulators so the loop vectorizes.
#[inline]
fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    const LANES: usize = 8;
    let mut acc = [T::zero(); LANES];
    let chunks = a.len() / LANES;
    for c in 0..chunks {
        let (x, y) = (&a[c * LANES..(c + 1) * LANES], &b[c * LANES..(c + 1) * LANES]);
        for l in 0..LANES {
            acc[l] += x[l] * y[l];
        }
    }
    let mut s = acc.iter().copied().sum::<T>();
    for i in chunks * LANES..a.len() {
        s += a[i] * b[i];
    }
    s
}

#[inline]
fn axpy<T: Real>(alpha: T, x: &[T], y: &mut [T]) {
    for (v, &xi) in y.iter_mut().zip(x) {
        *v += alpha * xi;
    }
}

/// Activations saved by the forward pass of one direction.
struct GruTrace<T> {
    steps: usize,
    /// Inputs in processing order, `steps x D`.
    inputs: Vec<T>,
    /// `(steps + 1) x H`, row 0 is the zero initial state.
    states: Vec<T>,
    reset: Vec<T>,
    update: Vec<T>,
    candidate: Vec<T>,
    /// Recurrent candidate term `W_hn h + b_hn` before gating.
    recur_candidate: Vec<T>,
}

impl<T: Real> GruLayer<T> {
    fn zeros_like(&self) -> Self {
        Self {
            input: Dense::zeros(self.input.rows, self.input.cols),
            recurrent: Dense::zeros(self.recurrent.rows, self.recurrent.cols),
        }
    }

    fn run(&self, inputs: Vec<T>, steps: usize) -> GruTrace<T> {
        let h = self.recurrent.cols;
        let projected = self.input.apply_rows(&inputs, steps);
        let mut states = vec![T::zero(); (steps + 1) * h];
        let mut reset = vec![T::zero(); steps * h];
        let mut update = vec![T::zero(); steps * h];
        let mut candidate = vec![T::zero(); steps * h];
        let mut recur_candidate = vec![T::zero(); steps * h];
        let mut rec = vec![T::zero(); 3 * h];
        let w = &self.recurrent.weight;
        for t in 0..steps {
            let (done, rest) = states.split_at_mut((t + 1) * h);
            let prev = &done[t * h..];
            let next = &mut rest[..h];
            for (i, r) in rec.iter_mut().enumerate() {
                *r = dot(&w[i * h..(i + 1) * h], prev) + self.recurrent.bias[i];
            }
            let xp = &projected[t * 3 * h..(t + 1) * 3 * h];
            for j in 0..h {
                let r = sigmoid(xp[j] + rec[j]);
                let z = sigmoid(xp[h + j] + rec[h + j]);
                let hn = rec[2 * h + j];
                let n = (xp[2 * h + j] + r * hn).tanh();
                next[j] = (T::one() - z) * n + z * prev[j];
                reset[t * h + j] = r;
                update[t * h + j] = z;
                candidate[t * h + j] = n;
                recur_candidate[t * h + j] = hn;
            }
        }
        GruTrace {
            steps,
            inputs,
            states,
            reset,
            update,
            candidate,
            recur_candidate,
        }
    }

    /// Backpropagates `d_states` (`steps x H`, gradient w.r.t. each output state).
    fn backprop(&self, trace: &GruTrace<T>, d_states: &[T], grad: &mut GruLayer<T>) {
        let h = self.recurrent.cols;
        let steps = trace.steps;
        let mut d_proj = vec![T::zero(); steps * 3 * h];
        let mut d_rec = vec![T::zero(); steps * 3 * h];
        let mut carry = vec![T::zero(); h];
        let one = T::one();
        for t in (0..steps).rev() {
            let prev = &trace.states[t * h..(t + 1) * h];
            let dp = &mut d_proj[t * 3 * h..(t + 1) * 3 * h];
            let dr = &mut d_rec[t * 3 * h..(t + 1) * 3 * h];
            for j in 0..h {
                let k = t * h + j;
                let (r, z, n, hn) = (trace.reset[k], trace.update[k], trace.candidate[k], trace.recur_candidate[k]);
                let dh = d_states[k] + carry[j];
                let dn = dh * (one - z);
                let dz = dh * (prev[j] - n);
                let da_n = dn * (one - n * n);
                let da_r = da_n * hn * r * (one - r);
                let da_z = dz * z * (one - z);
                dp[j] = da_r;
                dp[h + j] = da_z;
                dp[2 * h + j] = da_n;
                dr[j] = da_r;
                dr[h + j] = da_z;
                dr[2 * h + j] = da_n * r;
                carry[j] = dh * z;
            }
            let w = &self.recurrent.weight;
            for (i, &g) in dr.iter().enumerate() {
                if g != T::zero() {
                    axpy(g, &w[i * h..(i + 1) * h], &mut carry);
                }
            }
        }
        self.recurrent
            .accumulate_grad(&mut grad.recurrent, &d_rec, &trace.states[..steps * h], steps);
        self.input
            .accumulate_grad(&mut grad.input, &d_proj, &trace.inputs, steps);
    }
}

/// Everything the backward pass needs from one forward pass.
pub struct ForwardTrace<T> {
    frames: usize,
    fwd: GruTrace<T>,
    bwd: Option<GruTrace<T>>,
    /// `frames x (H or 2H)` concatenated hidden states.
    hidden: Vec<T>,
    /// `frames x C` log probabilities.
    pub log_probs: Vec<T>,
}

fn reverse_rows<T: Copy>(data: &[T], width: usize) -> Vec<T> {
    data.chunks_exact(width).rev().flatten().copied().collect()
}

impl<T: Real> Network<T> {
    pub fn new(input_dim: usize, hidden: usize, classes: usize, bidirectional: bool, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound = 1.0 / (hidden as f64).sqrt();
        let layer = |rng: &mut ChaCha8Rng| GruLayer {
            input: Dense::uniform(3 * hidden, input_dim, bound, rng),
            recurrent: Dense::uniform(3 * hidden, hidden, bound, rng),
        };
        let forward = layer(&mut rng);
        let backward = bidirectional.then(|| layer(&mut rng));
        let width = if bidirectional { 2 * hidden } else { hidden };
        let output = Dense::uniform(classes, width, 1.0 / (width as f64).sqrt(), &mut rng);
        Self {
            input_dim,
            hidden,
            forward,
            backward,
            output,
        }
    }

    pub fn classes(&self) -> usize {
        self.output.rows
    }

    pub fn bidirectional(&self) -> bool {
        self.backward.is_some()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            input_dim: self.input_dim,
            hidden: self.hidden,
            forward: self.forward.zeros_like(),
            backward: self.backward.as_ref().map(GruLayer::zeros_like),
            output: Dense::zeros(self.output.rows, self.output.cols),
        }
    }

    /// Parameter tensors in a fixed order with their descriptions.
    pub fn tensors(&self) -> Vec<(String, TensorInfo, &Vec<T>)> {
        let mut out = Vec::new();
        let dirs = std::iter::once(("fwd", &self.forward)).chain(self.backward.as_ref().map(|b| ("bwd", b)));
        for (prefix, layer) in dirs {
            let parts = [&layer.input.weight, &layer.input.bias, &layer.recurrent.weight, &layer.recurrent.bias];
            for (info, t) in TENSORS.iter().zip(parts) {
                out.push((format!("{prefix}.{}", info.name), *info, t));
            }
        }
        out.push((
            "output.weight".into(),
            TensorInfo { name: "output.weight", fully_connected: true },
            &self.output.weight,
        ));
        out.push((
            "output.bias".into(),
            TensorInfo { name: "output.bias", fully_connected: false },
            &self.output.bias,
        ));
        out
    }

    /// Mutable tensors in the same order as [`Network::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut Vec<T>> {
        let mut out = Vec::new();
        for layer in std::iter::once(&mut self.forward).chain(self.backward.as_mut()) {
            out.push(&mut layer.input.weight);
            out.push(&mut layer.input.bias);
            out.push(&mut layer.recurrent.weight);
            out.push(&mut layer.recurrent.bias);
        }
        out.push(&mut self.output.weight);
        out.push(&mut self.output.bias);
        out
    }

    pub fn forward(&self, features: &[T], frames: usize) -> ForwardTrace<T> {
        assert_eq!(features.len(), frames * self.input_dim, "feature shape mismatch");
        let h = self.hidden;
        let fwd = self.forward.run(features.to_vec(), frames);
        let bwd = self
            .backward
            .as_ref()
            .map(|layer| layer.run(reverse_rows(features, self.input_dim), frames));
        let width = self.output.cols;
        let mut hidden = vec![T::zero(); frames * width];
        for t in 0..frames {
            hidden[t * width..t * width + h].copy_from_slice(&fwd.states[(t + 1) * h..(t + 2) * h]);
            if let Some(b) = &bwd {
                let src = frames - t;
                hidden[t * width + h..(t + 1) * width].copy_from_slice(&b.states[src * h..(src + 1) * h]);
            }
        }
        let mut log_probs = self.output.apply_rows(&hidden, frames);
        let c = self.classes();
        for row in log_probs.chunks_exact_mut(c) {
            let z = log_sum_exp(row);
            for v in row.iter_mut() {
                *v -= z;
            }
        }
        ForwardTrace {
            frames,
            fwd,
            bwd,
            hidden,
            log_probs,
        }
    }

    /// Accumulates parameter gradients into `grad` given `d loss / d log_probs`.
    pub fn backward(&self, trace: &ForwardTrace<T>, d_log_probs: &[T], grad: &mut Network<T>) {
        let (frames, c, h) = (trace.frames, self.classes(), self.hidden);
        let width = self.output.cols;
        // through the log-softmax: dz = g - softmax * sum(g)
        let mut d_logits = vec![T::zero(); frames * c];
        for t in 0..frames {
            let lp = &trace.log_probs[t * c..(t + 1) * c];
            let g = &d_log_probs[t * c..(t + 1) * c];
            let total: T = g.iter().copied().sum();
            for k in 0..c {
                d_logits[t * c + k] = g[k] - lp[k].exp() * total;
            }
        }
        self.output
            .accumulate_grad(&mut grad.output, &d_logits, &trace.hidden, frames);
        let mut d_hidden = vec![T::zero(); frames * width];
        T::gemm(frames, c, width, T::one(), &d_logits, false, &self.output.weight, false, T::zero(), &mut d_hidden);

        let mut d_fwd = vec![T::zero(); frames * h];
        for t in 0..frames {
            d_fwd[t * h..(t + 1) * h].copy_from_slice(&d_hidden[t * width..t * width + h]);
        }
        self.forward.backprop(&trace.fwd, &d_fwd, &mut grad.forward);
        if let (Some(layer), Some(bt), Some(g)) = (&self.backward, &trace.bwd, grad.backward.as_mut()) {
            let mut d_bwd = vec![T::zero(); frames * h];
            for t in 0..frames {
                let step = frames - 1 - t;
                d_bwd[step * h..(step + 1) * h].copy_from_slice(&d_hidden[t * width + h..(t + 1) * width]);
            }
            layer.backprop(bt, &d_bwd, g);
        }
    }
}
