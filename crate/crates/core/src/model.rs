//! The complete forecaster: motion encoder plus conditional flow.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::encoder::MotionEncoder;
use crate::error::{Error, Result};
use crate::flow::{standard_normal_log_density, Flow, FlowConfig, Permutation};
use crate::nn::ParamLayout;
use crate::Point;

/// Encoder and flow parameters in one flat vector, plus the fixed
/// permutations and the output scale `alpha` used during training.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowModel {
    config: FlowConfig,
    layout: ParamLayout,
    params: Vec<f64>,
    encoder: MotionEncoder,
    flow: Flow,
    alpha: f64,
}

impl FlowModel {
    pub fn new(config: FlowConfig, seed: u64) -> Result<Self> {
        Self::with_rng(config, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn with_rng<R: Rng + ?Sized>(config: FlowConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let (layout, encoder, flow) = Self::structure(&config, rng);
        let mut params = vec![0.0; layout.len()];
        encoder.init(&mut params, rng);
        flow.init(&mut params, rng);
        Ok(Self {
            config,
            layout,
            params,
            encoder,
            flow,
            alpha: 1.0,
        })
    }

    fn structure<R: Rng + ?Sized>(
        config: &FlowConfig,
        rng: &mut R,
    ) -> (ParamLayout, MotionEncoder, Flow) {
        let mut layout = ParamLayout::new();
        let encoder = MotionEncoder::register(&mut layout, config.cond_dim);
        let flow = Flow::register(&mut layout, config, rng);
        (layout, encoder, flow)
    }

    /// Named parameter arrays of a model with this configuration.
    pub fn layout_for(config: &FlowConfig) -> Result<ParamLayout> {
        config.validate()?;
        Ok(Self::structure(config, &mut ChaCha8Rng::seed_from_u64(0)).0)
    }

    /// Rebuilds a model from stored parts (used by checkpoint loading).
    pub fn from_parts(
        config: FlowConfig,
        permutations: Vec<Permutation>,
        params: Vec<f64>,
        alpha: f64,
    ) -> Result<Self> {
        config.validate()?;
        let (layout, encoder, mut flow) =
            Self::structure(&config, &mut ChaCha8Rng::seed_from_u64(0));
        if permutations.len() + 1 != config.n_layers {
            return Err(Error::ConfigMismatch(format!(
                "{} layers need {} permutations, found {}",
                config.n_layers,
                config.n_layers - 1,
                permutations.len()
            )));
        }
        for (layer, p) in flow.layers.iter_mut().zip(permutations) {
            if p.len() != config.dim {
                return Err(Error::ConfigMismatch(format!(
                    "permutation of length {} for dim {}",
                    p.len(),
                    config.dim
                )));
            }
            layer.permutation = Some(p);
        }
        if params.len() != layout.len() {
            return Err(Error::ConfigMismatch(format!(
                "expected {} parameters, found {}",
                layout.len(),
                params.len()
            )));
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::invalid(format!(
                "alpha must be positive, got {alpha}"
            )));
        }
        Ok(Self {
            config,
            layout,
            params,
            encoder,
            flow,
            alpha,
        })
    }

    pub fn config(&self) -> &FlowConfig {
        &self.config
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn flow(&self) -> &Flow {
        &self.flow
    }

    pub fn permutations(&self) -> Vec<&Permutation> {
        self.flow
            .layers
            .iter()
            .filter_map(|l| l.permutation.as_ref())
            .collect()
    }

    /// Output scale: samples live in `alpha`-scaled displacement space.
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn set_alpha(&mut self, alpha: f64) -> Result<()> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::invalid(format!(
                "alpha must be positive, got {alpha}"
            )));
        }
        self.alpha = alpha;
        Ok(())
    }

    /// Zeroes every conditioner output layer (identity splines) and resets
    /// permutations to identity, making the whole flow the identity map.
    pub fn force_identity(&mut self) {
        let dim = self.config.dim;
        for layer in &mut self.flow.layers {
            layer.conditioner.output.zero(&mut self.params);
            if layer.permutation.is_some() {
                layer.permutation = Some(Permutation::identity(dim));
            }
        }
    }

    pub fn encode(&self, o_rel: &[Point]) -> Result<Vec<f64>> {
        self.encoder.encode(&self.params, o_rel)
    }

    fn check_cond(&self, c: &[f64]) -> Result<()> {
        if c.len() != self.config.cond_dim {
            return Err(Error::invalid(format!(
                "conditioning vector has length {}, expected {}",
                c.len(),
                self.config.cond_dim
            )));
        }
        Ok(())
    }

    fn check_point(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.config.dim {
            return Err(Error::invalid(format!(
                "flow input has length {}, expected {}",
                z.len(),
                self.config.dim
            )));
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("flow input is not finite"));
        }
        Ok(())
    }

    pub fn coupling_forward(&self, layer: usize, u: &[f64], c: &[f64]) -> Result<(Vec<f64>, f64)> {
        self.flow.layers[layer].forward(&self.params, &self.config, layer, u, c)
    }

    pub fn coupling_inverse(&self, layer: usize, x: &[f64], c: &[f64]) -> Result<(Vec<f64>, f64)> {
        self.flow.layers[layer].inverse(&self.params, &self.config, layer, x, c)
    }

    /// Full sampling-direction map with its log-determinant.
    pub fn flow_forward(&self, u: &[f64], c: &[f64]) -> Result<(Vec<f64>, f64)> {
        self.check_point(u)?;
        self.check_cond(c)?;
        self.flow.forward(&self.params, u, c)
    }

    /// Full density-direction map with the inverse log-determinant.
    pub fn flow_inverse(&self, z: &[f64], c: &[f64]) -> Result<(Vec<f64>, f64)> {
        self.check_point(z)?;
        self.check_cond(c)?;
        self.flow.inverse(&self.params, z, c)
    }

    /// Draws `n` samples in flow space with their log-likelihoods
    /// `ln N(u) - Σ forward log-determinants`.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        c: &[f64],
        n_samples: usize,
        rng: &mut R,
    ) -> Result<Vec<(Vec<f64>, f64)>> {
        self.check_cond(c)?;
        (0..n_samples)
            .map(|_| {
                let u: Vec<f64> = (0..self.config.dim)
                    .map(|_| rng.sample(StandardNormal))
                    .collect();
                let (z, logdet) = self.flow.forward(&self.params, &u, c)?;
                Ok((z, standard_normal_log_density(&u) - logdet))
            })
            .collect()
    }

    /// Exact log-density of a flow-space point.
    pub fn log_prob(&self, z: &[f64], c: &[f64]) -> Result<f64> {
        let (u, logdet) = self.flow_inverse(z, c)?;
        let lp = standard_normal_log_density(&u) + logdet;
        if !lp.is_finite() {
            return Err(Error::numeric("log_prob", "non-finite log-density"));
        }
        Ok(lp)
    }

    /// `-weight · ln p(z | encode(o_rel))`, accumulating its parameter
    /// gradient into `grad`.
    pub fn weighted_nll_grad(
        &self,
        o_rel: &[Point],
        z: &[f64],
        weight: f64,
        grad: &mut [f64],
    ) -> Result<f64> {
        self.check_point(z)?;
        let (c, enc_cache) = self.encoder.forward_cached(&self.params, o_rel)?;
        let (u, logdet, trace) = self.flow.inverse_traced(&self.params, z, &c)?;
        let lp = standard_normal_log_density(&u) + logdet;
        if !lp.is_finite() {
            return Err(Error::numeric("log_prob", "non-finite log-density"));
        }
        // d(-w lp)/du = w u ; d(-w lp)/dlogdet = -w
        let gu: Vec<f64> = u.iter().map(|v| weight * v).collect();
        let mut gc = vec![0.0; self.config.cond_dim];
        self.flow
            .inverse_backward(&self.params, &trace, &gu, -weight, &mut gc, grad)?;
        self.encoder.backward(&self.params, &enc_cache, &gc, grad);
        Ok(-weight * lp)
    }
}
