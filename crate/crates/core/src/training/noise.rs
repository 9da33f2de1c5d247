use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Training-time scaling and dequantization noise.
///
/// Targets are scaled by `alpha`; entries that are zero before scaling get
/// Gaussian noise with std `beta`, all others std `gamma`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    /// Entries with `|x| <= zero_epsilon` count as zero.
    #[serde(default)]
    pub zero_epsilon: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            alpha: 10.0,
            beta: 0.2,
            gamma: 0.02,
            zero_epsilon: 0.0,
        }
    }
}

impl NoiseConfig {
    pub fn drone() -> Self {
        Self {
            alpha: 3.0,
            beta: 0.002,
            gamma: 0.002,
            zero_epsilon: 0.0,
        }
    }

    /// Scaling only, no noise.
    pub fn none(alpha: f64) -> Self {
        Self {
            alpha,
            beta: 0.0,
            gamma: 0.0,
            zero_epsilon: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite())
            || !(self.beta >= 0.0)
            || !(self.gamma >= 0.0)
            || !(self.zero_epsilon >= 0.0)
        {
            return Err(Error::invalid(format!(
                "noise needs alpha > 0 and beta, gamma >= 0, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// `alpha · x + ε`, with `ε` drawn per entry. Noise is drawn for every
/// entry in order, so the rng stream does not depend on the data.
pub fn inject_noise<R: Rng + ?Sized>(x_rel: &[f64], cfg: &NoiseConfig, rng: &mut R) -> Vec<f64> {
    x_rel
        .iter()
        .map(|&x| {
            let e: f64 = rng.sample(StandardNormal);
            let std = if x.abs() <= cfg.zero_epsilon {
                cfg.beta
            } else {
                cfg.gamma
            };
            cfg.alpha * x + std * e
        })
        .collect()
}

/// Maps flow samples back to displacement units.
pub fn unscale(z: &[f64], alpha: f64) -> Vec<f64> {
    z.iter().map(|v| v / alpha).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn no_noise_unit_scale_is_identity() {
        let x = [0.0, 1.5, -2.0, 0.0];
        let out = inject_noise(
            &x,
            &NoiseConfig::none(1.0),
            &mut ChaCha8Rng::seed_from_u64(0),
        );
        assert_eq!(out, x.to_vec());
    }

    #[test]
    fn noise_std_per_entry_class() {
        let cfg = NoiseConfig::default();
        assert_eq!((cfg.alpha, cfg.beta, cfg.gamma), (10.0, 0.2, 0.02));
        let x = [0.0, 0.7];
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 100_000;
        let (mut s0, mut s1) = (0.0, 0.0);
        for _ in 0..n {
            let out = inject_noise(&x, &cfg, &mut rng);
            s0 += out[0].powi(2);
            s1 += (out[1] - 7.0).powi(2);
        }
        let (sd0, sd1) = ((s0 / n as f64).sqrt(), (s1 / n as f64).sqrt());
        assert!((sd0 / 0.2 - 1.0).abs() < 0.02, "{sd0}");
        assert!((sd1 / 0.02 - 1.0).abs() < 0.02, "{sd1}");
    }

    #[test]
    fn unscale_examples() {
        let v = [1.25, -3.0];
        assert_eq!(unscale(&v, 1.0), v.to_vec());
        assert_eq!(unscale(&[10.0, 20.0, -30.0], 10.0), vec![1.0, 2.0, -3.0]);
        let scaled: Vec<f64> = v.iter().map(|x| x * 7.3).collect();
        for (a, b) in unscale(&scaled, 7.3).iter().zip(v) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
