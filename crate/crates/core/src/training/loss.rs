use rand::Rng;
use rayon::prelude::*;

use super::noise::{inject_noise, NoiseConfig};
use crate::data::TrajectoryWindow;
use crate::error::{Error, Result};
use crate::model::FlowModel;
use crate::Point;

/// Samples per work unit when spreading a batch over threads. Fixed so the
/// floating-point reduction order does not depend on the thread count.
const CHUNK: usize = 8;

/// One training pair in the flow's coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub observed_rel: Vec<Point>,
    /// Future displacements, flattened and unscaled.
    pub future: Vec<f64>,
}

impl Example {
    /// Expects a rotation-normalized window.
    pub fn from_window(w: &TrajectoryWindow) -> Self {
        Self {
            observed_rel: w.observed_rel.clone(),
            future: w.future_flat(),
        }
    }
}

fn tag(i: usize, e: Error) -> Error {
    match e {
        Error::Numeric { context, detail } => Error::Numeric {
            context: format!("sample {i}: {context}"),
            detail,
        },
        Error::InvalidInput(msg) => Error::InvalidInput(format!("sample {i}: {msg}")),
        other => other,
    }
}

/// Flow-space targets: scaled by `alpha`, plus noise when `noise` is given.
fn targets<R: Rng + ?Sized>(
    model: &FlowModel,
    batch: &[Example],
    noise: Option<(&NoiseConfig, &mut R)>,
) -> Vec<Vec<f64>> {
    match noise {
        Some((cfg, rng)) => batch
            .iter()
            .map(|e| inject_noise(&e.future, cfg, rng))
            .collect(),
        None => batch
            .iter()
            .map(|e| e.future.iter().map(|v| model.alpha() * v).collect())
            .collect(),
    }
}

/// Mean negative log-likelihood of the batch.
///
/// Without `noise` the targets are only scaled by the model's alpha
/// (inference semantics).
pub fn nll_loss<R: Rng + ?Sized>(
    model: &FlowModel,
    batch: &[Example],
    noise: Option<(&NoiseConfig, &mut R)>,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::invalid("nll_loss needs a non-empty batch"));
    }
    let targets = targets(model, batch, noise);
    let idx: Vec<usize> = (0..batch.len()).collect();
    let sums: Vec<Result<f64>> = idx
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut s = 0.0;
            for &i in chunk {
                let c = model
                    .encode(&batch[i].observed_rel)
                    .map_err(|e| tag(i, e))?;
                s -= model.log_prob(&targets[i], &c).map_err(|e| tag(i, e))?;
            }
            Ok(s)
        })
        .collect();
    let mut total = 0.0;
    for s in sums {
        total += s?;
    }
    let loss = total / batch.len() as f64;
    if !loss.is_finite() {
        return Err(Error::numeric("nll_loss", "non-finite batch loss"));
    }
    Ok(loss)
}

/// Mean NLL over `(batch[i], targets[i])` and its gradient with respect to
/// every model parameter.
pub fn loss_and_grad(
    model: &FlowModel,
    batch: &[Example],
    targets: &[Vec<f64>],
) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() || batch.len() != targets.len() {
        return Err(Error::invalid(
            "loss_and_grad needs matching non-empty batch and targets",
        ));
    }
    let n_params = model.params().len();
    let weight = 1.0 / batch.len() as f64;
    let idx: Vec<usize> = (0..batch.len()).collect();
    let parts: Vec<Result<(f64, Vec<f64>)>> = idx
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut grad = vec![0.0; n_params];
            let mut loss = 0.0;
            for &i in chunk {
                loss += model
                    .weighted_nll_grad(&batch[i].observed_rel, &targets[i], weight, &mut grad)
                    .map_err(|e| tag(i, e))?;
            }
            Ok((loss, grad))
        })
        .collect();
    let mut loss = 0.0;
    let mut grad = vec![0.0; n_params];
    for part in parts {
        let (l, g) = part?;
        loss += l;
        grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
    }
    if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::numeric(
            "loss_and_grad",
            "non-finite loss or gradient",
        ));
    }
    Ok((loss, grad))
}

/// Targets for `loss_and_grad` with training noise.
pub(crate) fn noisy_targets<R: Rng + ?Sized>(
    model: &FlowModel,
    batch: &[Example],
    noise: &NoiseConfig,
    rng: &mut R,
) -> Vec<Vec<f64>> {
    targets(model, batch, Some((noise, rng)))
}

pub(crate) fn clean_targets(model: &FlowModel, batch: &[Example]) -> Vec<Vec<f64>> {
    targets::<rand_chacha::ChaCha8Rng>(model, batch, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::FlowConfig;
    use rand_chacha::ChaCha8Rng;

    fn batch(n: usize) -> Vec<Example> {
        (0..n)
            .map(|i| Example {
                observed_rel: vec![[0.3, 0.1 * i as f64], [0.4, 0.0]],
                future: vec![0.1 * i as f64, 0.2, -0.3, 0.05],
            })
            .collect()
    }

    fn tiny(seed: u64) -> FlowModel {
        let cfg = FlowConfig {
            dim: 4,
            n_layers: 2,
            k_bins: 4,
            support_b: 3.0,
            cond_dim: 16,
            conditioner_hidden: 8,
            conditioner_depth: 2,
        };
        FlowModel::new(cfg, seed).unwrap()
    }

    #[test]
    fn identity_flow_nll_at_origin() {
        let mut m = FlowModel::new(FlowConfig::default(), 0).unwrap();
        m.force_identity();
        let b = vec![Example {
            observed_rel: vec![[1.0, 0.0]],
            future: vec![0.0; 24],
        }];
        let nll = nll_loss::<ChaCha8Rng>(&m, &b, None).unwrap();
        assert!((nll - 12.0 * (2.0 * std::f64::consts::PI).ln()).abs() < 1e-9);
        assert!((nll - 22.0545).abs() < 1e-4);
    }

    #[test]
    fn batch_loss_is_mean_of_sample_losses() {
        let m = tiny(1);
        let b = batch(11);
        let total = nll_loss::<ChaCha8Rng>(&m, &b, None).unwrap();
        let singles: f64 = b
            .iter()
            .map(|e| nll_loss::<ChaCha8Rng>(&m, std::slice::from_ref(e), None).unwrap())
            .sum::<f64>()
            / 11.0;
        assert!((total - singles).abs() < 1e-12);
        let (l, _) = loss_and_grad(&m, &b, &clean_targets(&m, &b)).unwrap();
        assert!((l - total).abs() < 1e-12);
    }

    #[test]
    fn duplicated_batch_has_same_gradient() {
        let m = tiny(2);
        let b = batch(5);
        let (_, g1) = loss_and_grad(&m, &b, &clean_targets(&m, &b)).unwrap();
        let doubled: Vec<Example> = b.iter().chain(&b).cloned().collect();
        let (_, g2) = loss_and_grad(&m, &doubled, &clean_targets(&m, &doubled)).unwrap();
        for (a, b) in g1.iter().zip(&g2) {
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn empty_batch_is_rejected() {
        assert!(nll_loss::<ChaCha8Rng>(&tiny(0), &[], None).is_err());
    }

    #[test]
    fn numeric_errors_name_the_sample() {
        let m = tiny(0);
        let mut b = batch(3);
        b[2].future[1] = f64::INFINITY;
        let err = loss_and_grad(&m, &b, &clean_targets(&m, &b)).unwrap_err();
        assert!(err.to_string().contains("sample 2: flow input"), "{err}");
        b[2].future[1] = 0.0;
        b[1].observed_rel = vec![[f64::NAN, 0.0]];
        let err = nll_loss::<ChaCha8Rng>(&m, &b, None).unwrap_err();
        assert!(err.to_string().contains("sample 1"), "{err}");
    }
}
