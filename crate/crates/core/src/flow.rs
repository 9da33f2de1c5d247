//! Conditional coupling layers with spline transforms.
//!
//! A coupling layer copies the first half of its input and transforms the
//! second half element-wise with splines whose parameters come from a
//! conditioner network fed with the copied half concatenated with the
//! conditioning vector. Layers are separated by fixed permutations; the last
//! layer has none.
//!
//! The sampling direction (`forward`) maps base noise `u` to a sample `x`;
//! the density direction (`inverse`) maps `x` back to `u`.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Mlp, MlpCache, ParamLayout};
use crate::spline::{self, build_spline_params, raw_len, rqs_forward, rqs_inverse};

/// Scale of the uniform init of conditioner output layers, relative to the
/// usual ±1/√fan_in. Small values start every spline close to identity.
pub const OUTPUT_INIT_SCALE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowConfig {
    /// Flow dimensionality, twice the prediction horizon.
    pub dim: usize,
    pub n_layers: usize,
    pub k_bins: usize,
    pub support_b: f64,
    pub cond_dim: usize,
    pub conditioner_hidden: usize,
    pub conditioner_depth: usize,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            dim: 24,
            n_layers: 10,
            k_bins: 8,
            support_b: 15.0,
            cond_dim: 16,
            conditioner_hidden: 32,
            conditioner_depth: 5,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim < 2 || !self.dim.is_multiple_of(2) {
            return Err(Error::invalid(format!(
                "flow dim must be even and >= 2, got {}",
                self.dim
            )));
        }
        if self.n_layers == 0 {
            return Err(Error::invalid("n_layers must be >= 1"));
        }
        if self.k_bins < 2 {
            return Err(Error::invalid("k_bins must be >= 2"));
        }
        if !(self.support_b > 0.0 && self.support_b.is_finite()) {
            return Err(Error::invalid("support_b must be positive"));
        }
        if self.cond_dim == 0 || self.conditioner_hidden == 0 {
            return Err(Error::invalid(
                "cond_dim and conditioner_hidden must be positive",
            ));
        }
        Ok(())
    }

    /// Number of pass-through coordinates.
    pub fn split(&self) -> usize {
        self.dim / 2
    }

    pub fn n_transformed(&self) -> usize {
        self.dim - self.split()
    }

    pub fn conditioner_in(&self) -> usize {
        self.split() + self.cond_dim
    }

    pub fn conditioner_out(&self) -> usize {
        self.n_transformed() * raw_len(self.k_bins)
    }
}

/// Fixed reordering `out[i] = v[perm[i]]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Permutation(Vec<usize>);

impl Permutation {
    pub fn new(indices: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; indices.len()];
        for &i in &indices {
            if i >= indices.len() || std::mem::replace(&mut seen[i], true) {
                return Err(Error::invalid("permutation is not a bijection"));
            }
        }
        Ok(Self(indices))
    }

    pub fn identity(dim: usize) -> Self {
        Self((0..dim).collect())
    }

    /// Uniformly random non-identity permutation (for `dim >= 2`).
    pub fn random<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Self {
        let mut idx: Vec<usize> = (0..dim).collect();
        loop {
            idx.shuffle(rng);
            if dim < 2 || idx.iter().enumerate().any(|(i, &v)| i != v) {
                return Self(idx);
            }
        }
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        self.0.iter().map(|&i| v[i]).collect()
    }

    pub fn invert(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        for (&i, &x) in self.0.iter().zip(v) {
            out[i] = x;
        }
        out
    }
}

pub fn apply_permutation(v: &[f64], perm: &Permutation) -> Vec<f64> {
    perm.apply(v)
}

pub fn invert_permutation(v: &[f64], perm: &Permutation) -> Vec<f64> {
    perm.invert(v)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CouplingLayer {
    pub conditioner: Mlp,
    pub permutation: Option<Permutation>,
}

/// Values recorded during an inverse coupling pass for backpropagation.
pub(crate) struct CouplingTrace {
    x: Vec<f64>,
    theta: Vec<f64>,
    cache: MlpCache,
}

fn check_finite(v: &[f64], layer: usize, what: &str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::numeric(
            format!("flow layer {layer}"),
            format!("non-finite {what}"),
        ))
    }
}

impl CouplingLayer {
    fn conditioner_input(&self, cfg: &FlowConfig, v: &[f64], c: &[f64]) -> Vec<f64> {
        let mut input = Vec::with_capacity(cfg.conditioner_in());
        input.extend_from_slice(&v[..cfg.split()]);
        input.extend_from_slice(c);
        input
    }

    pub fn forward(
        &self,
        params: &[f64],
        cfg: &FlowConfig,
        index: usize,
        u: &[f64],
        c: &[f64],
    ) -> Result<(Vec<f64>, f64)> {
        let d = cfg.split();
        let theta = self
            .conditioner
            .forward(params, &self.conditioner_input(cfg, u, c));
        check_finite(&theta, index, "conditioner output")?;
        let r = raw_len(cfg.k_bins);
        let mut x = u.to_vec();
        let mut logdet = 0.0;
        for (j, raw) in theta.chunks_exact(r).enumerate() {
            let p = build_spline_params(raw, cfg.k_bins, cfg.support_b)?;
            let (y, ld) = rqs_forward(u[d + j], &p);
            x[d + j] = y;
            logdet += ld;
        }
        check_finite(&x, index, "output")?;
        Ok((x, logdet))
    }

    pub fn inverse(
        &self,
        params: &[f64],
        cfg: &FlowConfig,
        index: usize,
        x: &[f64],
        c: &[f64],
    ) -> Result<(Vec<f64>, f64)> {
        let theta = self
            .conditioner
            .forward(params, &self.conditioner_input(cfg, x, c));
        self.inverse_with_theta(cfg, index, x, &theta)
    }

    fn inverse_with_theta(
        &self,
        cfg: &FlowConfig,
        index: usize,
        x: &[f64],
        theta: &[f64],
    ) -> Result<(Vec<f64>, f64)> {
        check_finite(theta, index, "conditioner output")?;
        let d = cfg.split();
        let r = raw_len(cfg.k_bins);
        let mut u = x.to_vec();
        let mut logdet = 0.0;
        for (j, raw) in theta.chunks_exact(r).enumerate() {
            let p = build_spline_params(raw, cfg.k_bins, cfg.support_b)?;
            let (v, ld) = rqs_inverse(x[d + j], &p)
                .map_err(|e| Error::numeric(format!("flow layer {index}"), e.to_string()))?;
            u[d + j] = v;
            logdet += ld;
        }
        check_finite(&u, index, "output")?;
        if !logdet.is_finite() {
            return Err(Error::numeric(
                format!("flow layer {index}"),
                "log-determinant overflow",
            ));
        }
        Ok((u, logdet))
    }

    pub(crate) fn inverse_traced(
        &self,
        params: &[f64],
        cfg: &FlowConfig,
        index: usize,
        x: &[f64],
        c: &[f64],
    ) -> Result<(Vec<f64>, f64, CouplingTrace)> {
        let (theta, cache) = self
            .conditioner
            .forward_cached(params, &self.conditioner_input(cfg, x, c));
        let (u, ld) = self.inverse_with_theta(cfg, index, x, &theta)?;
        Ok((
            u,
            ld,
            CouplingTrace {
                x: x.to_vec(),
                theta,
                cache,
            },
        ))
    }

    /// Gradients of an inverse pass: `gu` on the output, `gld` on its
    /// log-determinant. Returns the input gradient; adds to `gc` and `grad`.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn inverse_backward(
        &self,
        params: &[f64],
        cfg: &FlowConfig,
        trace: &CouplingTrace,
        gu: &[f64],
        gld: f64,
        gc: &mut [f64],
        grad: &mut [f64],
    ) -> Result<Vec<f64>> {
        let d = cfg.split();
        let r = raw_len(cfg.k_bins);
        let mut gx = gu.to_vec();
        let mut gtheta = vec![0.0; trace.theta.len()];
        for (j, (raw, graw)) in trace
            .theta
            .chunks_exact(r)
            .zip(gtheta.chunks_exact_mut(r))
            .enumerate()
        {
            let (_, _, gy) = spline::rqs_inverse_backward(
                trace.x[d + j],
                raw,
                cfg.k_bins,
                cfg.support_b,
                gu[d + j],
                gld,
                graw,
            )?;
            gx[d + j] = gy;
        }
        let mut ginput = vec![0.0; cfg.conditioner_in()];
        self.conditioner
            .backward(params, &trace.cache, &gtheta, grad, &mut ginput);
        for (g, gi) in gx[..d].iter_mut().zip(&ginput[..d]) {
            *g += gi;
        }
        for (g, gi) in gc.iter_mut().zip(&ginput[d..]) {
            *g += gi;
        }
        Ok(gx)
    }
}

/// The layer stack, holding offsets into the model's parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Flow {
    pub config: FlowConfig,
    pub layers: Vec<CouplingLayer>,
}

pub(crate) struct FlowTrace {
    layers: Vec<CouplingTrace>,
}

impl Flow {
    /// Registers conditioner parameters; permutations are drawn from `rng`.
    pub fn register<R: Rng + ?Sized>(
        layout: &mut ParamLayout,
        config: &FlowConfig,
        rng: &mut R,
    ) -> Self {
        let layers = (0..config.n_layers)
            .map(|i| CouplingLayer {
                conditioner: Mlp::register(
                    layout,
                    &format!("flow{i}.conditioner"),
                    config.conditioner_in(),
                    config.conditioner_hidden,
                    config.conditioner_depth,
                    config.conditioner_out(),
                ),
                permutation: (i + 1 < config.n_layers)
                    .then(|| Permutation::random(config.dim, rng)),
            })
            .collect();
        Self {
            config: config.clone(),
            layers,
        }
    }

    pub fn init<R: Rng + ?Sized>(&self, params: &mut [f64], rng: &mut R) {
        for layer in &self.layers {
            for h in &layer.conditioner.hidden {
                h.init_uniform(params, 1.0, rng);
            }
            layer
                .conditioner
                .output
                .init_uniform(params, OUTPUT_INIT_SCALE, rng);
        }
    }

    /// Noise to sample: coupling, then permutation, layer by layer.
    pub fn forward(&self, params: &[f64], u: &[f64], c: &[f64]) -> Result<(Vec<f64>, f64)> {
        let mut v = u.to_vec();
        let mut logdet = 0.0;
        for (i, layer) in self.layers.iter().enumerate() {
            let (x, ld) = layer.forward(params, &self.config, i, &v, c)?;
            logdet += ld;
            v = match &layer.permutation {
                Some(p) => p.apply(&x),
                None => x,
            };
        }
        Ok((v, logdet))
    }

    /// Sample to noise; the returned log-determinant is that of the inverse.
    pub fn inverse(&self, params: &[f64], x: &[f64], c: &[f64]) -> Result<(Vec<f64>, f64)> {
        let mut v = x.to_vec();
        let mut logdet = 0.0;
        for (i, layer) in self.layers.iter().enumerate().rev() {
            if let Some(p) = &layer.permutation {
                v = p.invert(&v);
            }
            let (u, ld) = layer.inverse(params, &self.config, i, &v, c)?;
            logdet += ld;
            v = u;
        }
        Ok((v, logdet))
    }

    pub(crate) fn inverse_traced(
        &self,
        params: &[f64],
        x: &[f64],
        c: &[f64],
    ) -> Result<(Vec<f64>, f64, FlowTrace)> {
        let mut v = x.to_vec();
        let mut logdet = 0.0;
        let mut traces = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate().rev() {
            if let Some(p) = &layer.permutation {
                v = p.invert(&v);
            }
            let (u, ld, trace) = layer.inverse_traced(params, &self.config, i, &v, c)?;
            traces.push(trace);
            logdet += ld;
            v = u;
        }
        traces.reverse();
        Ok((v, logdet, FlowTrace { layers: traces }))
    }

    /// Backward of [`Flow::inverse_traced`]; returns the gradient on `x`.
    pub(crate) fn inverse_backward(
        &self,
        params: &[f64],
        trace: &FlowTrace,
        gu: &[f64],
        gld: f64,
        gc: &mut [f64],
        grad: &mut [f64],
    ) -> Result<Vec<f64>> {
        let mut g = gu.to_vec();
        for (layer, t) in self.layers.iter().zip(&trace.layers) {
            let gin = layer.inverse_backward(params, &self.config, t, &g, gld, gc, grad)?;
            g = match &layer.permutation {
                Some(p) => p.apply(&gin),
                None => gin,
            };
        }
        Ok(g)
    }
}

/// `ln N(u; 0, I)`.
pub fn standard_normal_log_density(u: &[f64]) -> f64 {
    let sq: f64 = u.iter().map(|v| v * v).sum();
    -0.5 * sq - 0.5 * u.len() as f64 * (2.0 * std::f64::consts::PI).ln()
}
