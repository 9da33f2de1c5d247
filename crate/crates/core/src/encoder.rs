//! Recurrent motion encoder.
//!
//! Each observed displacement is embedded linearly, fed through a stack of
//! GRU cells, and the top cell's final state goes through an ELU and a
//! linear head to give the conditioning vector.
//!
//! GRU step (gate order `r, z, n` in the stacked weight matrices):
//!
//! ```text
//! r  = σ(W_ir x + b_ir + W_hr h + b_hr)
//! z  = σ(W_iz x + b_iz + W_hz h + b_hz)
//! n  = tanh(W_in x + b_in + r ⊙ (W_hn h + b_hn))
//! h' = (1 - z) ⊙ n + z ⊙ h
//! ```

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{elu, elu_grad, sigmoid, Linear, ParamLayout};
use crate::Point;

/// Number of stacked GRU cells.
pub const GRU_LAYERS: usize = 3;

/// Relative displacements `abs[t+1] - abs[t]`.
pub fn to_displacements(abs: &[Point]) -> Result<Vec<Point>> {
    if abs.len() < 2 {
        return Err(Error::invalid(format!(
            "need at least 2 positions to form displacements, got {}",
            abs.len()
        )));
    }
    Ok(abs
        .windows(2)
        .map(|w| [w[1][0] - w[0][0], w[1][1] - w[0][1]])
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct GruCell {
    input: Linear,
    hidden: Linear,
    size: usize,
}

struct GruStep {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    gh: Vec<f64>,
    r: Vec<f64>,
    z: Vec<f64>,
    n: Vec<f64>,
}

impl GruCell {
    fn step(&self, params: &[f64], x: &[f64], h: &[f64]) -> (Vec<f64>, GruStep) {
        let hs = self.size;
        let gi = self.input.apply(params, x);
        let gh = self.hidden.apply(params, h);
        let mut r = vec![0.0; hs];
        let mut z = vec![0.0; hs];
        let mut n = vec![0.0; hs];
        let mut h_new = vec![0.0; hs];
        for j in 0..hs {
            r[j] = sigmoid(gi[j] + gh[j]);
            z[j] = sigmoid(gi[hs + j] + gh[hs + j]);
            n[j] = (gi[2 * hs + j] + r[j] * gh[2 * hs + j]).tanh();
            h_new[j] = (1.0 - z[j]) * n[j] + z[j] * h[j];
        }
        let cache = GruStep {
            x: x.to_vec(),
            h_prev: h.to_vec(),
            gh,
            r,
            z,
            n,
        };
        (h_new, cache)
    }

    /// Returns `(dx, dh_prev)` given the gradient on the new hidden state.
    fn backward(
        &self,
        params: &[f64],
        step: &GruStep,
        dh: &[f64],
        grad: &mut [f64],
    ) -> (Vec<f64>, Vec<f64>) {
        let hs = self.size;
        let mut dgi = vec![0.0; 3 * hs];
        let mut dgh = vec![0.0; 3 * hs];
        let mut dh_prev = vec![0.0; hs];
        for j in 0..hs {
            let (r, z, n) = (step.r[j], step.z[j], step.n[j]);
            let dn = dh[j] * (1.0 - z);
            let dz = dh[j] * (step.h_prev[j] - n);
            dh_prev[j] = dh[j] * z;
            let dn_pre = dn * (1.0 - n * n);
            let dr = dn_pre * step.gh[2 * hs + j];
            let dr_pre = dr * r * (1.0 - r);
            let dz_pre = dz * z * (1.0 - z);
            dgi[j] = dr_pre;
            dgh[j] = dr_pre;
            dgi[hs + j] = dz_pre;
            dgh[hs + j] = dz_pre;
            dgi[2 * hs + j] = dn_pre;
            dgh[2 * hs + j] = dn_pre * r;
        }
        let mut dx = vec![0.0; self.input.n_in];
        self.input
            .backward(params, &step.x, &dgi, grad, Some(&mut dx));
        self.hidden
            .backward(params, &step.h_prev, &dgh, grad, Some(&mut dh_prev));
        (dx, dh_prev)
    }
}

/// Encoder parameter offsets: 2→H embedding, GRU stack of width H, H→H head.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MotionEncoder {
    embed: Linear,
    cells: Vec<GruCell>,
    head: Linear,
    size: usize,
}

/// Intermediate values of one [`MotionEncoder::forward_cached`] call.
pub struct EncoderCache {
    inputs: Vec<Point>,
    steps: Vec<Vec<GruStep>>,
    top: Vec<f64>,
    activated: Vec<f64>,
}

impl MotionEncoder {
    pub fn register(layout: &mut ParamLayout, size: usize) -> Self {
        let embed = Linear::register(layout, "encoder.embed", 2, size);
        let cells = (0..GRU_LAYERS)
            .map(|l| GruCell {
                input: Linear::register(layout, &format!("encoder.gru{l}.input"), size, 3 * size),
                hidden: Linear::register(layout, &format!("encoder.gru{l}.hidden"), size, 3 * size),
                size,
            })
            .collect();
        let head = Linear::register(layout, "encoder.head", size, size);
        Self {
            embed,
            cells,
            head,
            size,
        }
    }

    pub fn output_len(&self) -> usize {
        self.size
    }

    pub fn init<R: Rng + ?Sized>(&self, params: &mut [f64], rng: &mut R) {
        self.embed.init_uniform(params, 1.0, rng);
        for c in &self.cells {
            // PyTorch-style GRU init scales by 1/√hidden for both matrices.
            c.input.init_uniform(params, 1.0, rng);
            c.hidden.init_uniform(params, 1.0, rng);
        }
        self.head.init_uniform(params, 1.0, rng);
    }

    pub fn encode(&self, params: &[f64], o_rel: &[Point]) -> Result<Vec<f64>> {
        self.forward_cached(params, o_rel).map(|(c, _)| c)
    }

    pub fn forward_cached(
        &self,
        params: &[f64],
        o_rel: &[Point],
    ) -> Result<(Vec<f64>, EncoderCache)> {
        if o_rel.is_empty() {
            return Err(Error::invalid("cannot encode an empty observed trajectory"));
        }
        let mut hidden = vec![vec![0.0; self.size]; self.cells.len()];
        let mut steps = Vec::with_capacity(o_rel.len());
        for d in o_rel {
            let mut x = self.embed.apply(params, d);
            let mut per_layer = Vec::with_capacity(self.cells.len());
            for (cell, h) in self.cells.iter().zip(hidden.iter_mut()) {
                let (h_new, cache) = cell.step(params, &x, h);
                per_layer.push(cache);
                *h = h_new.clone();
                x = h_new;
            }
            steps.push(per_layer);
        }
        let top = hidden.pop().expect("at least one GRU layer");
        let activated: Vec<f64> = top.iter().map(|&v| elu(v)).collect();
        let c = self.head.apply(params, &activated);
        if c.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric("encoder", "non-finite conditioning vector"));
        }
        Ok((
            c,
            EncoderCache {
                inputs: o_rel.to_vec(),
                steps,
                top,
                activated,
            },
        ))
    }

    /// Backpropagates `dc` (gradient on the output) through time into `grad`.
    pub fn backward(&self, params: &[f64], cache: &EncoderCache, dc: &[f64], grad: &mut [f64]) {
        let mut dact = vec![0.0; self.size];
        self.head
            .backward(params, &cache.activated, dc, grad, Some(&mut dact));
        let n_layers = self.cells.len();
        let mut carry = vec![vec![0.0; self.size]; n_layers];
        carry[n_layers - 1] = dact
            .iter()
            .zip(&cache.top)
            .map(|(d, &v)| d * elu_grad(v))
            .collect();
        for (t, per_layer) in cache.steps.iter().enumerate().rev() {
            let mut from_above: Option<Vec<f64>> = None;
            for l in (0..n_layers).rev() {
                let mut dh = std::mem::take(&mut carry[l]);
                if let Some(extra) = from_above.take() {
                    dh.iter_mut().zip(&extra).for_each(|(a, b)| *a += b);
                }
                let (dx, dh_prev) = self.cells[l].backward(params, &per_layer[l], &dh, grad);
                carry[l] = dh_prev;
                from_above = Some(dx);
            }
            let d_embed = from_above.expect("at least one GRU layer");
            self.embed
                .backward(params, &cache.inputs[t], &d_embed, grad, None);
        }
    }
}
