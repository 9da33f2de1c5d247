use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::window::TrajectoryWindow;
use crate::error::{Error, Result};
use crate::Point;

/// Truncated-normal speed scaling: `s ~ N(mu, sigma²)` restricted to
/// `[s_min, s_max]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentConfig {
    pub mu: f64,
    pub sigma: f64,
    pub s_min: f64,
    pub s_max: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            mu: 1.0,
            sigma: 0.5,
            s_min: 0.3,
            s_max: 1.7,
        }
    }
}

impl AugmentConfig {
    pub fn drone() -> Self {
        Self {
            mu: 1.0,
            sigma: 0.2,
            s_min: 0.8,
            s_max: 1.2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.mu, self.sigma, self.s_min, self.s_max]
            .iter()
            .all(|v| v.is_finite());
        if !finite || !(self.s_min <= self.mu && self.mu <= self.s_max) || self.sigma < 0.0 {
            return Err(Error::invalid(format!(
                "augmentation needs s_min <= mu <= s_max and sigma >= 0, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// Draws a scale factor by rejection from the untruncated normal.
pub fn sample_scale<R: Rng + ?Sized>(cfg: &AugmentConfig, rng: &mut R) -> f64 {
    if cfg.sigma == 0.0 {
        return cfg.mu;
    }
    let normal = Normal::new(cfg.mu, cfg.sigma).expect("sigma checked positive");
    loop {
        let s = normal.sample(rng);
        if (cfg.s_min..=cfg.s_max).contains(&s) {
            return s;
        }
    }
}

fn mean(positions: &[Point]) -> Point {
    let n = positions.len() as f64;
    let (sx, sy) = positions
        .iter()
        .fold((0.0, 0.0), |(a, b), p| (a + p[0], b + p[1]));
    [sx / n, sy / n]
}

/// `mean + s · (p − mean)` for every position.
pub fn scale_about_mean(positions: &[Point], s: f64) -> Vec<Point> {
    if positions.is_empty() {
        return Vec::new();
    }
    let m = mean(positions);
    positions
        .iter()
        .map(|p| [m[0] + s * (p[0] - m[0]), m[1] + s * (p[1] - m[1])])
        .collect()
}

pub fn scale_augment<R: Rng + ?Sized>(
    positions: &[Point],
    cfg: &AugmentConfig,
    rng: &mut R,
) -> Vec<Point> {
    scale_about_mean(positions, sample_scale(cfg, rng))
}

/// Scales observed and future positions jointly about the window mean.
pub fn augment_window<R: Rng + ?Sized>(
    w: &TrajectoryWindow,
    cfg: &AugmentConfig,
    rng: &mut R,
) -> TrajectoryWindow {
    let all: Vec<Point> = w
        .observed_abs
        .iter()
        .chain(&w.future_abs)
        .copied()
        .collect();
    let scaled = scale_augment(&all, cfg, rng);
    let (obs, fut) = scaled.split_at(w.t_obs());
    let mut out = TrajectoryWindow::new(w.agent_id, w.start_frame, obs.to_vec(), fut.to_vec())
        .expect("window shape is unchanged");
    out.rotation = w.rotation;
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pts() -> Vec<Point> {
        vec![[0.0, 1.0], [1.0, 1.5], [2.5, 2.0], [4.0, 2.0]]
    }

    #[test]
    fn unit_scale_is_identity() {
        let cfg = AugmentConfig {
            mu: 1.0,
            sigma: 0.0,
            s_min: 1.0,
            s_max: 1.0,
        };
        let out = scale_augment(&pts(), &cfg, &mut ChaCha8Rng::seed_from_u64(0));
        for (a, b) in out.iter().zip(pts()) {
            assert!((a[0] - b[0]).abs() < 1e-15 && (a[1] - b[1]).abs() < 1e-15);
        }
    }

    #[test]
    fn scaling_keeps_mean_and_directions() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cfg = AugmentConfig::default();
        for _ in 0..100 {
            let s = sample_scale(&cfg, &mut rng);
            assert!((0.3..=1.7).contains(&s));
            let out = scale_about_mean(&pts(), s);
            let (m0, m1) = (mean(&pts()), mean(&out));
            assert!((m0[0] - m1[0]).abs() < 1e-12 && (m0[1] - m1[1]).abs() < 1e-12);
            for (a, b) in pts().windows(2).zip(out.windows(2)) {
                let da = [a[1][0] - a[0][0], a[1][1] - a[0][1]];
                let db = [b[1][0] - b[0][0], b[1][1] - b[0][1]];
                let cos =
                    (da[0] * db[0] + da[1] * db[1]) / ((da[0].hypot(da[1])) * (db[0].hypot(db[1])));
                assert!((cos - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn truncated_normal_moments() {
        // Mean of N(1, 0.5²) truncated to [0.3, 1.7] is 1 by symmetry.
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let cfg = AugmentConfig::default();
        let n = 200_000;
        let m: f64 = (0..n).map(|_| sample_scale(&cfg, &mut rng)).sum::<f64>() / n as f64;
        assert!((m - 1.0).abs() < 5e-3);
    }

    #[test]
    fn config_validation() {
        assert!(AugmentConfig::default().validate().is_ok());
        assert!(AugmentConfig::drone().validate().is_ok());
        let bad = AugmentConfig {
            mu: 2.0,
            ..AugmentConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
