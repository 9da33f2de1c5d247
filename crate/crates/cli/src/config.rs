use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use trajflow::data::{AugmentConfig, DatasetFormat};
use trajflow::flow::FlowConfig;
use trajflow::training::{NoiseConfig, TrainConfig};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    /// Training scenes.
    #[serde(default)]
    pub train: Vec<PathBuf>,
    /// Validation scenes; when empty, a seeded split of the training
    /// windows is held out instead.
    #[serde(default)]
    pub val: Vec<PathBuf>,
    /// Scenes scored by `evaluate` when no `--dataset` is given.
    #[serde(default)]
    pub test: Vec<PathBuf>,
    pub format: DatasetFormat,
    /// Coordinate scale applied on load; defaults to the format's scale.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
    pub t_obs: usize,
    pub t_pred: usize,
    /// Window stride in samples.
    pub step: usize,
    /// Shortest ground-truth future accepted by evaluation windows.
    #[serde(default = "one")]
    pub min_future: usize,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    pub samples: usize,
    /// Keep the `top_k` most likely of `samples` candidates.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top_k: Option<usize>,
    pub oracle_fraction: f64,
    /// Horizons for the oracle table, in seconds.
    pub oracle_horizons: Vec<f64>,
    /// Time between consecutive samples, in seconds.
    pub step_seconds: f64,
    pub seed: u64,
}

/// Desk-scale model used by `gradcheck`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradcheckSection {
    pub flow: FlowConfig,
    pub t_obs: usize,
    pub batch: usize,
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for GradcheckSection {
    fn default() -> Self {
        Self {
            flow: FlowConfig {
                dim: 4,
                n_layers: 2,
                k_bins: 8,
                support_b: 3.0,
                cond_dim: 16,
                conditioner_hidden: 16,
                conditioner_depth: 2,
            },
            t_obs: 6,
            batch: 4,
            tolerance: 1e-3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub output_dir: PathBuf,
    pub data: DataSection,
    pub flow: FlowConfig,
    pub noise: NoiseConfig,
    /// Speed augmentation; training runs without it when the section is absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub augment: Option<AugmentConfig>,
    pub train: TrainConfig,
    pub eval: EvalSection,
    #[serde(default)]
    pub gradcheck: GradcheckSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Profile {
    EthUcy,
    Drone,
}

impl RunConfig {
    /// Shipped hyperparameter profiles.
    pub fn profile(profile: Profile) -> Self {
        let eth = Self {
            output_dir: PathBuf::from("runs/eth-ucy"),
            data: DataSection {
                train: Vec::new(),
                val: Vec::new(),
                test: Vec::new(),
                format: DatasetFormat::EthUcyText,
                scale: None,
                t_obs: 8,
                t_pred: 12,
                step: 1,
                min_future: 1,
            },
            flow: FlowConfig::default(),
            noise: NoiseConfig::default(),
            augment: Some(AugmentConfig::default()),
            train: TrainConfig {
                augment: None,
                ..TrainConfig::default()
            },
            eval: EvalSection {
                samples: 20,
                top_k: None,
                oracle_fraction: 0.1,
                oracle_horizons: vec![1.0, 2.0, 3.0, 4.0],
                step_seconds: 0.4,
                seed: 0,
            },
            gradcheck: GradcheckSection::default(),
        };
        match profile {
            Profile::EthUcy => eth,
            Profile::Drone => Self {
                output_dir: PathBuf::from("runs/drone"),
                data: DataSection {
                    format: DatasetFormat::DroneText,
                    ..eth.data
                },
                noise: NoiseConfig::drone(),
                augment: Some(AugmentConfig::drone()),
                ..eth
            },
        }
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Parses and validates; relative dataset paths and `output_dir` are
    /// taken relative to `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self, String> {
        let mut cfg: Self = toml::from_str(text).map_err(|e| e.to_string())?;
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        cfg.data.train.iter_mut().for_each(resolve);
        cfg.data.val.iter_mut().for_each(resolve);
        cfg.data.test.iter_mut().for_each(resolve);
        resolve(&mut cfg.output_dir);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), String> {
        let d = &self.data;
        if d.t_obs < 2 || d.t_pred == 0 || d.step == 0 {
            return Err("data: need t_obs >= 2, t_pred >= 1 and step >= 1".into());
        }
        if self.flow.dim != 2 * d.t_pred {
            return Err(format!(
                "flow.dim = {} but data.t_pred = {} needs dim {}",
                self.flow.dim,
                d.t_pred,
                2 * d.t_pred
            ));
        }
        if let Some(s) = d.scale {
            if !(s > 0.0 && s.is_finite()) {
                return Err(format!("data.scale must be positive, got {s}"));
            }
        }
        for p in d.train.iter().chain(&d.val).chain(&d.test) {
            if !p.exists() {
                return Err(format!("dataset {} does not exist", p.display()));
            }
        }
        if self.train.augment.is_some() {
            return Err("put augmentation settings in the [augment] section".into());
        }
        self.flow.validate().map_err(|e| format!("flow: {e}"))?;
        self.noise.validate().map_err(|e| format!("noise: {e}"))?;
        if let Some(a) = &self.augment {
            a.validate().map_err(|e| format!("augment: {e}"))?;
        }
        self.train.validate().map_err(|e| format!("train: {e}"))?;
        if !(self.train.learning_rate > 0.0) {
            return Err("train.learning_rate must be positive".into());
        }
        let e = &self.eval;
        if e.samples == 0 || e.top_k.is_some_and(|k| k == 0 || k > e.samples) {
            return Err("eval: need samples >= 1 and 1 <= top_k <= samples".into());
        }
        if !(e.oracle_fraction > 0.0 && e.oracle_fraction <= 1.0) || !(e.step_seconds > 0.0) {
            return Err(
                "eval: oracle_fraction must lie in (0, 1] and step_seconds be positive".into(),
            );
        }
        self.gradcheck
            .flow
            .validate()
            .map_err(|e| format!("gradcheck.flow: {e}"))?;
        if self.gradcheck.t_obs < 2 || self.gradcheck.batch == 0 {
            return Err("gradcheck: need t_obs >= 2 and batch >= 1".into());
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config is always representable")
    }

    /// SHA-256 of the canonical TOML form.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn scale(&self) -> f64 {
        self.data
            .scale
            .unwrap_or_else(|| self.data.format.default_scale())
    }

    /// Training settings with the augmentation section folded in.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            augment: self.augment.clone(),
            ..self.train.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profiles_round_trip_through_toml() {
        for p in [Profile::EthUcy, Profile::Drone] {
            let cfg = RunConfig::profile(p);
            let text = cfg.to_toml();
            let back: RunConfig = toml::from_str(&text).unwrap();
            assert_eq!(back, cfg);
            assert_eq!(back.to_toml(), text);
        }
    }

    #[test]
    fn eth_profile_carries_training_hyperparameters() {
        let c = RunConfig::profile(Profile::EthUcy);
        assert_eq!((c.data.t_obs, c.data.t_pred), (8, 12));
        assert_eq!(
            (c.noise.alpha, c.noise.beta, c.noise.gamma),
            (10.0, 0.2, 0.02)
        );
        assert_eq!(
            (c.train.learning_rate, c.train.batch_size, c.train.epochs),
            (1e-3, 128, 150)
        );
        assert_eq!(
            (c.flow.n_layers, c.flow.k_bins, c.flow.support_b),
            (10, 8, 15.0)
        );
        let a = c.augment.as_ref().unwrap();
        assert_eq!((a.mu, a.sigma, a.s_min, a.s_max), (1.0, 0.5, 0.3, 1.7));
        c.validate().unwrap();
    }

    #[test]
    fn unknown_key_is_named() {
        let mut text = RunConfig::profile(Profile::EthUcy).to_toml();
        text = text.replace("[noise]\n", "[noise]\nalpah = 3.0\n");
        let err = RunConfig::parse(&text, Path::new(".")).unwrap_err();
        assert!(err.contains("alpah"), "{err}");
    }

    #[test]
    fn horizon_mismatch_rejected() {
        let mut c = RunConfig::profile(Profile::EthUcy);
        c.data.t_pred = 8;
        assert!(c.validate().unwrap_err().contains("flow.dim"));
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::profile(Profile::EthUcy);
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.train.seed = 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
