//! Synthetic data sets with known structure.

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::data::{Trajectory, TrajectoryWindow};
use crate::Point;

/// Isotropic Gaussian mixture in the plane.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture2 {
    pub weights: Vec<f64>,
    pub means: Vec<Point>,
    pub stds: Vec<f64>,
}

impl GaussianMixture2 {
    /// Two well separated components of unequal size and spread.
    pub fn toy() -> Self {
        Self {
            weights: vec![0.4, 0.6],
            means: vec![[-1.5, -0.5], [1.2, 0.8]],
            stds: vec![0.45, 0.7],
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        let mut u: f64 = rng.random();
        let mut k = self.weights.len() - 1;
        for (i, w) in self.weights.iter().enumerate() {
            if u < *w {
                k = i;
                break;
            }
            u -= w;
        }
        let e0: f64 = rng.sample(StandardNormal);
        let e1: f64 = rng.sample(StandardNormal);
        [
            self.means[k][0] + self.stds[k] * e0,
            self.means[k][1] + self.stds[k] * e1,
        ]
    }

    pub fn log_density(&self, x: Point) -> f64 {
        let terms: Vec<f64> = self
            .weights
            .iter()
            .zip(&self.means)
            .zip(&self.stds)
            .map(|((w, m), s)| {
                let d2 = (x[0] - m[0]).powi(2) + (x[1] - m[1]).powi(2);
                w.ln() - (TAU * s * s).ln() - d2 / (2.0 * s * s)
            })
            .collect();
        let top = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        top + terms.iter().map(|t| (t - top).exp()).sum::<f64>().ln()
    }

    /// Monte Carlo estimate of the differential entropy in nats.
    pub fn entropy_mc(&self, n: usize, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        -(0..n)
            .map(|_| self.log_density(self.sample(&mut rng)))
            .sum::<f64>()
            / n as f64
    }
}

/// Windows whose observed part is the fixed step `(0,0) → (1,0)` and whose
/// single future displacement is a mixture draw. Rotation normalization
/// leaves them unchanged, so the flow sees the mixture directly.
pub fn mixture_windows(mix: &GaussianMixture2, n: usize, seed: u64) -> Vec<TrajectoryWindow> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let x = mix.sample(&mut rng);
            TrajectoryWindow::new(
                i as i64,
                0,
                vec![[0.0, 0.0], [1.0, 0.0]],
                vec![[1.0 + x[0], x[1]]],
            )
            .expect("two observed points")
        })
        .collect()
}

fn heading<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.random_range(-PI..PI)
}

/// Straight-line tracks at constant velocity, sampled every 10 frames.
/// A `standing_fraction` of agents never moves, which puts much of the data
/// on a lower-dimensional set.
pub fn constant_velocity_tracks(
    n_agents: usize,
    len: usize,
    standing_fraction: f64,
    seed: u64,
) -> Vec<Trajectory> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_agents)
        .map(|i| {
            let p0 = [rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0)];
            let v = if rng.random::<f64>() < standing_fraction {
                [0.0, 0.0]
            } else {
                let (s, c) = heading(&mut rng).sin_cos();
                let speed = rng.random_range(0.2..1.0);
                [speed * c, speed * s]
            };
            let positions = (0..len)
                .map(|t| [p0[0] + t as f64 * v[0], p0[1] + t as f64 * v[1]])
                .collect();
            let frames = (0..len as i64).map(|t| 10 * t).collect();
            Trajectory::new(i as i64, frames, positions).expect("valid synthetic track")
        })
        .collect()
}

/// Probabilities of the straight, left-turn and right-turn modes.
pub const THREE_MODE_WEIGHTS: [f64; 3] = [0.6, 0.25, 0.15];
/// Heading change per future step of the turning modes, in radians.
pub const THREE_MODE_TURN: f64 = 0.35;

/// Straight observed tracks at a random speed and heading whose future
/// either continues straight or turns left or right, with per-step
/// position noise of std `noise`.
pub fn three_mode_windows(
    n: usize,
    t_obs: usize,
    t_pred: usize,
    noise: f64,
    seed: u64,
) -> Vec<TrajectoryWindow> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let jitter = Normal::new(0.0, noise).expect("noise std must be finite and >= 0");
    (0..n)
        .map(|i| {
            let speed = rng.random_range(0.3..0.6);
            let theta = heading(&mut rng);
            let p0 = [rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)];
            let observed: Vec<Point> = (0..t_obs)
                .map(|t| {
                    let d = t as f64 * speed;
                    [p0[0] + d * theta.cos(), p0[1] + d * theta.sin()]
                })
                .collect();
            let u: f64 = rng.random();
            let omega = if u < THREE_MODE_WEIGHTS[0] {
                0.0
            } else if u < THREE_MODE_WEIGHTS[0] + THREE_MODE_WEIGHTS[1] {
                THREE_MODE_TURN
            } else {
                -THREE_MODE_TURN
            };
            let mut p = *observed.last().expect("t_obs >= 1");
            let future = (0..t_pred)
                .map(|t| {
                    let h = theta + omega * (t + 1) as f64;
                    p = [
                        p[0] + speed * h.cos() + jitter.sample(&mut rng),
                        p[1] + speed * h.sin() + jitter.sample(&mut rng),
                    ];
                    p
                })
                .collect();
            TrajectoryWindow::new(i as i64, 0, observed, future).expect("t_obs >= 2")
        })
        .collect()
}

/// Gently curving tracks with speeds drawn uniformly from `speed_range`;
/// the future continues the observed speed and turn rate.
pub fn speed_diverse_windows(
    n: usize,
    t_obs: usize,
    t_pred: usize,
    speed_range: (f64, f64),
    noise: f64,
    seed: u64,
) -> Vec<TrajectoryWindow> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let jitter = Normal::new(0.0, noise).expect("noise std must be finite and >= 0");
    (0..n)
        .map(|i| {
            let speed = rng.random_range(speed_range.0..=speed_range.1);
            let omega = rng.random_range(-0.1..0.1);
            let mut h = heading(&mut rng);
            let mut p = [rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)];
            let mut pts = Vec::with_capacity(t_obs + t_pred);
            pts.push(p);
            for _ in 1..t_obs + t_pred {
                h += omega;
                p = [
                    p[0] + speed * h.cos() + jitter.sample(&mut rng),
                    p[1] + speed * h.sin() + jitter.sample(&mut rng),
                ];
                pts.push(p);
            }
            let future = pts.split_off(t_obs);
            TrajectoryWindow::new(i as i64, 0, pts, future).expect("t_obs >= 2")
        })
        .collect()
}
