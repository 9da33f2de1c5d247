//! Dense-layer building blocks over a flat parameter vector.
//!
//! Every trainable array of a model lives in one contiguous `Vec<f64>`.
//! Layers only remember offsets into it, which makes optimizer state,
//! finite-difference checks and checkpointing operate on plain slices.
//! Backward passes accumulate (`+=`) into a gradient slice of the same
//! layout.

use rand::Rng;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl ParamEntry {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Named, shaped views into a flat parameter vector.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParamLayout {
    entries: Vec<ParamEntry>,
    len: usize,
}

impl ParamLayout {
    pub fn new() -> Self {
        Self::default()
    }

    /// Reserves a new array and returns its offset.
    pub fn push(&mut self, name: impl Into<String>, shape: &[usize]) -> usize {
        let offset = self.len;
        let entry = ParamEntry {
            name: name.into(),
            shape: shape.to_vec(),
            offset,
        };
        self.len += entry.len();
        self.entries.push(entry);
        offset
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn entries(&self) -> &[ParamEntry] {
        &self.entries
    }

    pub fn get(&self, name: &str) -> Option<&ParamEntry> {
        self.entries.iter().find(|e| e.name == name)
    }
}

/// Affine map `y = W x + b` with `W` stored row-major (`n_out × n_in`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Linear {
    pub weight: usize,
    pub bias: usize,
    pub n_in: usize,
    pub n_out: usize,
}

impl Linear {
    pub fn register(layout: &mut ParamLayout, name: &str, n_in: usize, n_out: usize) -> Self {
        let weight = layout.push(format!("{name}.weight"), &[n_out, n_in]);
        let bias = layout.push(format!("{name}.bias"), &[n_out]);
        Self {
            weight,
            bias,
            n_in,
            n_out,
        }
    }

    /// Uniform in ±`scale`/√fan_in for weights and biases.
    pub fn init_uniform<R: Rng + ?Sized>(&self, params: &mut [f64], scale: f64, rng: &mut R) {
        let bound = scale / (self.n_in as f64).sqrt();
        let n = self.n_in * self.n_out;
        for p in &mut params[self.weight..self.weight + n] {
            *p = rng.random_range(-bound..=bound);
        }
        for p in &mut params[self.bias..self.bias + self.n_out] {
            *p = rng.random_range(-bound..=bound);
        }
    }

    pub fn zero(&self, params: &mut [f64]) {
        params[self.weight..self.weight + self.n_in * self.n_out].fill(0.0);
        params[self.bias..self.bias + self.n_out].fill(0.0);
    }

    pub fn forward(&self, params: &[f64], x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n_in);
        debug_assert_eq!(y.len(), self.n_out);
        let w = &params[self.weight..self.weight + self.n_in * self.n_out];
        let b = &params[self.bias..self.bias + self.n_out];
        for (o, (row, bo)) in y.iter_mut().zip(w.chunks_exact(self.n_in).zip(b)) {
            *o = bo + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
    }

    pub fn apply(&self, params: &[f64], x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n_out];
        self.forward(params, x, &mut y);
        y
    }

    /// Accumulates parameter gradients into `grad` and, when requested,
    /// the input gradient into `dx`.
    pub fn backward(
        &self,
        params: &[f64],
        x: &[f64],
        dy: &[f64],
        grad: &mut [f64],
        dx: Option<&mut [f64]>,
    ) {
        let n = self.n_in * self.n_out;
        {
            let gw = &mut grad[self.weight..self.weight + n];
            for (grow, &d) in gw.chunks_exact_mut(self.n_in).zip(dy) {
                if d != 0.0 {
                    for (g, xi) in grow.iter_mut().zip(x) {
                        *g += d * xi;
                    }
                }
            }
        }
        for (g, d) in grad[self.bias..self.bias + self.n_out].iter_mut().zip(dy) {
            *g += d;
        }
        if let Some(dx) = dx {
            let w = &params[self.weight..self.weight + n];
            for (row, &d) in w.chunks_exact(self.n_in).zip(dy) {
                if d != 0.0 {
                    for (g, wi) in dx.iter_mut().zip(row) {
                        *g += d * wi;
                    }
                }
            }
        }
    }
}

/// Exponential linear unit with unit scale.
#[inline]
pub fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

#[inline]
pub fn elu_grad(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        x.exp()
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

/// Feed-forward network: hidden layers with ELU activations and a linear
/// output layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mlp {
    pub hidden: Vec<Linear>,
    pub output: Linear,
}

/// Pre-activations of every hidden layer, kept for the backward pass.
#[derive(Debug, Clone, Default)]
pub struct MlpCache {
    input: Vec<f64>,
    pre: Vec<Vec<f64>>,
    post: Vec<Vec<f64>>,
}

impl Mlp {
    pub fn register(
        layout: &mut ParamLayout,
        name: &str,
        n_in: usize,
        width: usize,
        depth: usize,
        n_out: usize,
    ) -> Self {
        let mut hidden = Vec::with_capacity(depth);
        let mut fan_in = n_in;
        for i in 0..depth {
            hidden.push(Linear::register(
                layout,
                &format!("{name}.hidden{i}"),
                fan_in,
                width,
            ));
            fan_in = width;
        }
        let output = Linear::register(layout, &format!("{name}.out"), fan_in, n_out);
        Self { hidden, output }
    }

    pub fn n_in(&self) -> usize {
        self.hidden.first().unwrap_or(&self.output).n_in
    }

    pub fn n_out(&self) -> usize {
        self.output.n_out
    }

    pub fn forward(&self, params: &[f64], x: &[f64]) -> Vec<f64> {
        let mut h = x.to_vec();
        for layer in &self.hidden {
            h = layer.apply(params, &h);
            h.iter_mut().for_each(|v| *v = elu(*v));
        }
        self.output.apply(params, &h)
    }

    pub fn forward_cached(&self, params: &[f64], x: &[f64]) -> (Vec<f64>, MlpCache) {
        let mut cache = MlpCache {
            input: x.to_vec(),
            pre: Vec::with_capacity(self.hidden.len()),
            post: Vec::with_capacity(self.hidden.len()),
        };
        let mut h = x.to_vec();
        for layer in &self.hidden {
            let pre = layer.apply(params, &h);
            h = pre.iter().map(|&v| elu(v)).collect();
            cache.pre.push(pre);
            cache.post.push(h.clone());
        }
        (self.output.apply(params, &h), cache)
    }

    /// Accumulates parameter gradients and adds the input gradient to `dx`.
    pub fn backward(
        &self,
        params: &[f64],
        cache: &MlpCache,
        dout: &[f64],
        grad: &mut [f64],
        dx: &mut [f64],
    ) {
        let last_in = cache.post.last().unwrap_or(&cache.input);
        if self.hidden.is_empty() {
            self.output.backward(params, last_in, dout, grad, Some(dx));
            return;
        }
        let mut dh = vec![0.0; self.output.n_in];
        self.output
            .backward(params, last_in, dout, grad, Some(&mut dh));
        for (i, layer) in self.hidden.iter().enumerate().rev() {
            let dpre: Vec<f64> = dh
                .iter()
                .zip(&cache.pre[i])
                .map(|(d, &p)| d * elu_grad(p))
                .collect();
            let input = if i == 0 {
                &cache.input
            } else {
                &cache.post[i - 1]
            };
            if i == 0 {
                layer.backward(params, input, &dpre, grad, Some(dx));
            } else {
                let mut dprev = vec![0.0; layer.n_in];
                layer.backward(params, input, &dpre, grad, Some(&mut dprev));
                dh = dprev;
            }
        }
    }
}
