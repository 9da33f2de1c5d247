use rand::Rng;

use super::metrics::PredictionSet;
use crate::data::{decode_prediction, rotation_normalize, TrajectoryWindow};
use crate::error::{Error, Result};
use crate::model::FlowModel;
use crate::Point;

/// Log-density correction from flow space (displacements scaled by alpha)
/// back to plain displacements.
fn alpha_correction(model: &FlowModel) -> f64 {
    model.config().dim as f64 * model.alpha().ln()
}

fn check_horizon(model: &FlowModel, window: &TrajectoryWindow) -> Result<()> {
    let t_pred = model.config().dim / 2;
    if window.t_future() > t_pred {
        return Err(Error::invalid(format!(
            "window has {} future steps; the model predicts {t_pred}",
            window.t_future()
        )));
    }
    Ok(())
}

/// Draws `n_samples` futures for `window` and decodes them to absolute
/// positions in the window's original frame. Log-likelihoods are densities
/// of the relative displacements.
pub fn predict_samples<R: Rng + ?Sized>(
    model: &FlowModel,
    window: &TrajectoryWindow,
    n_samples: usize,
    rng: &mut R,
) -> Result<PredictionSet> {
    check_horizon(model, window)?;
    let norm = rotation_normalize(window);
    let c = model.encode(&norm.observed_rel)?;
    let alpha = model.alpha();
    let shift = alpha_correction(model);
    let mut samples = Vec::with_capacity(n_samples);
    let mut lls = Vec::with_capacity(n_samples);
    for (z, ll) in model.sample(&c, n_samples, rng)? {
        let z_rel: Vec<f64> = z.iter().map(|v| v / alpha).collect();
        samples.push(decode_prediction(&z_rel, norm.anchor, norm.rotation));
        lls.push(ll + shift);
    }
    let truth = if window.t_future() == 0 {
        // Nothing to score against; keep the set well-formed.
        vec![samples.first().map_or([0.0, 0.0], |s| s[0])]
    } else {
        window.denormalized().future_abs
    };
    PredictionSet::new(samples, lls, truth)
}

/// Samples `n_candidates` futures and keeps the `k` most likely, most
/// likely first; ties keep sampling order.
pub fn top_k_predict<R: Rng + ?Sized>(
    model: &FlowModel,
    window: &TrajectoryWindow,
    n_candidates: usize,
    k: usize,
    rng: &mut R,
) -> Result<PredictionSet> {
    if k == 0 || k > n_candidates {
        return Err(Error::invalid(format!(
            "top-k needs 1 <= k <= n_candidates, got k={k}, n_candidates={n_candidates}"
        )));
    }
    let all = predict_samples(model, window, n_candidates, rng)?;
    if k == n_candidates {
        return Ok(all);
    }
    let keep = &super::metrics::rank_by_likelihood(&all)[..k];
    PredictionSet::new(
        keep.iter().map(|&i| all.samples[i].clone()).collect(),
        keep.iter().map(|&i| all.log_likelihoods[i]).collect(),
        all.ground_truth,
    )
}

/// Log-density of an absolute future track given the window's observations,
/// on the same scale as the likelihoods of [`predict_samples`].
pub fn track_log_likelihood(
    model: &FlowModel,
    window: &TrajectoryWindow,
    track_abs: &[Point],
) -> Result<f64> {
    if 2 * track_abs.len() != model.config().dim {
        return Err(Error::invalid(format!(
            "track has {} steps; the model predicts {}",
            track_abs.len(),
            model.config().dim / 2
        )));
    }
    let original = window.denormalized();
    let probe = TrajectoryWindow::new(
        original.agent_id,
        original.start_frame,
        original.observed_abs,
        track_abs.to_vec(),
    )?;
    let norm = rotation_normalize(&probe);
    let c = model.encode(&norm.observed_rel)?;
    let z: Vec<f64> = norm
        .future_flat()
        .iter()
        .map(|v| v * model.alpha())
        .collect();
    Ok(model.log_prob(&z, &c)? + alpha_correction(model))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::FlowConfig;
    use crate::synthetic::three_mode_windows;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model() -> FlowModel {
        let mut m = FlowModel::new(
            FlowConfig {
                dim: 6,
                n_layers: 3,
                k_bins: 5,
                support_b: 6.0,
                cond_dim: 16,
                conditioner_hidden: 16,
                conditioner_depth: 2,
            },
            9,
        )
        .unwrap();
        for p in m.params_mut() {
            *p *= 3.0;
        }
        m.set_alpha(2.5).unwrap();
        m
    }

    #[test]
    fn emitted_likelihoods_match_rescoring() {
        let m = model();
        let w = &three_mode_windows(3, 4, 3, 0.1, 2)[1];
        let ps = predict_samples(&m, w, 30, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        for (s, ll) in ps.samples.iter().zip(&ps.log_likelihoods) {
            let again = track_log_likelihood(&m, w, s).unwrap();
            assert!((again - ll).abs() < 1e-6, "{again} vs {ll}");
        }
    }

    #[test]
    fn top_k_is_the_sorted_prefix() {
        let m = model();
        let w = &three_mode_windows(1, 4, 3, 0.1, 3)[0];
        let all = predict_samples(&m, w, 40, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let top = top_k_predict(&m, w, 40, 7, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let mut sorted = all.log_likelihoods.clone();
        sorted.sort_by(|a, b| b.total_cmp(a));
        assert_eq!(top.log_likelihoods, sorted[..7].to_vec());
        let best = top_k_predict(&m, w, 40, 1, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(best.log_likelihoods[0], sorted[0]);
        let plain = top_k_predict(&m, w, 40, 40, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(plain, all);
        assert!(top_k_predict(&m, w, 4, 5, &mut ChaCha8Rng::seed_from_u64(5)).is_err());
    }

    #[test]
    fn seeded_prediction_is_deterministic() {
        let m = model();
        let w = &three_mode_windows(1, 4, 3, 0.1, 3)[0];
        let a = predict_samples(&m, w, 1, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        let b = predict_samples(&m, w, 1, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn identity_model_predicts_around_the_anchor() {
        let mut m = model();
        m.force_identity();
        m.set_alpha(1e4).unwrap();
        let w = &three_mode_windows(1, 4, 3, 0.1, 3)[0];
        let ps = predict_samples(&m, w, 5, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        for s in &ps.samples {
            for p in s {
                assert!((p[0] - w.anchor[0]).abs() < 1e-2 && (p[1] - w.anchor[1]).abs() < 1e-2);
            }
        }
    }
}
