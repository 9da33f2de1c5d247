use serde::Serialize;

use crate::error::{Error, Result};
use crate::Point;

/// Sampled future tracks for one window with their log-likelihoods and the
/// ground truth, all in the same (absolute) frame. The ground truth may be
/// shorter than the tracks.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    pub samples: Vec<Vec<Point>>,
    pub log_likelihoods: Vec<f64>,
    pub ground_truth: Vec<Point>,
}

impl PredictionSet {
    pub fn new(
        samples: Vec<Vec<Point>>,
        log_likelihoods: Vec<f64>,
        ground_truth: Vec<Point>,
    ) -> Result<Self> {
        if samples.is_empty() || samples.len() != log_likelihoods.len() {
            return Err(Error::invalid(format!(
                "need at least one sample and one log-likelihood per sample, got {} and {}",
                samples.len(),
                log_likelihoods.len()
            )));
        }
        let len = samples[0].len();
        if samples.iter().any(|s| s.len() != len) {
            return Err(Error::invalid("sampled tracks differ in length"));
        }
        if ground_truth.is_empty() || ground_truth.len() > len {
            return Err(Error::invalid(format!(
                "ground truth has {} steps; tracks have {len}",
                ground_truth.len()
            )));
        }
        Ok(Self {
            samples,
            log_likelihoods,
            ground_truth,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Per-sample ADE against the available ground truth.
    pub fn ades(&self) -> Vec<f64> {
        self.samples
            .iter()
            .map(|s| ade(s, &self.ground_truth))
            .collect()
    }

    pub fn fdes(&self) -> Vec<f64> {
        self.samples
            .iter()
            .map(|s| fde(s, &self.ground_truth))
            .collect()
    }
}

fn dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Mean distance over the ground truth's timesteps.
pub fn ade(sample: &[Point], truth: &[Point]) -> f64 {
    truth
        .iter()
        .zip(sample)
        .map(|(&t, &s)| dist(s, t))
        .sum::<f64>()
        / truth.len() as f64
}

/// Distance at the last ground-truth timestep.
pub fn fde(sample: &[Point], truth: &[Point]) -> f64 {
    let i = truth.len() - 1;
    dist(sample[i], truth[i])
}

pub fn min_ade(ps: &PredictionSet) -> f64 {
    ps.ades().into_iter().fold(f64::INFINITY, f64::min)
}

pub fn min_fde(ps: &PredictionSet) -> f64 {
    ps.fdes().into_iter().fold(f64::INFINITY, f64::min)
}

/// How the best samples are chosen for [`oracle_top_fraction`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Selection {
    /// Best samples by displacement error at the evaluated timestep.
    PerStep,
    /// Best samples by ADE over the whole available ground truth.
    WholeTrack,
}

/// Mean displacement error at timestep `step` (1-based) of the best
/// `ceil(fraction · N)` samples. `None` when the ground truth does not
/// reach `step`.
pub fn oracle_top_fraction(
    ps: &PredictionSet,
    fraction: f64,
    step: usize,
    selection: Selection,
) -> Result<Option<f64>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::invalid(format!(
            "fraction must lie in (0, 1], got {fraction}"
        )));
    }
    if step == 0 {
        return Err(Error::invalid("timesteps are counted from 1"));
    }
    if step > ps.ground_truth.len() {
        return Ok(None);
    }
    let keep = ((fraction * ps.len() as f64).ceil() as usize).clamp(1, ps.len());
    let errs: Vec<f64> = ps
        .samples
        .iter()
        .map(|s| dist(s[step - 1], ps.ground_truth[step - 1]))
        .collect();
    let mut order: Vec<usize> = (0..ps.len()).collect();
    match selection {
        Selection::PerStep => order.sort_by(|&a, &b| errs[a].total_cmp(&errs[b])),
        Selection::WholeTrack => {
            let ades = ps.ades();
            order.sort_by(|&a, &b| ades[a].total_cmp(&ades[b]));
        }
    }
    Ok(Some(
        order[..keep].iter().map(|&i| errs[i]).sum::<f64>() / keep as f64,
    ))
}

/// Sample indices by descending log-likelihood; ties keep index order.
pub fn rank_by_likelihood(ps: &PredictionSet) -> Vec<usize> {
    let mut order: Vec<usize> = (0..ps.len()).collect();
    order.sort_by(|&a, &b| ps.log_likelihoods[b].total_cmp(&ps.log_likelihoods[a]));
    order
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankPoint {
    /// 1 is the most likely sample.
    pub rank: usize,
    pub mean_ade: f64,
    pub mean_fde: f64,
}

/// Mean ADE and FDE of the rank-r sample across windows, for every rank.
pub fn likelihood_rank_curve(sets: &[PredictionSet]) -> Result<Vec<RankPoint>> {
    let Some(first) = sets.first() else {
        return Err(Error::invalid("rank curve needs at least one window"));
    };
    let n = first.len();
    if sets.iter().any(|s| s.len() != n) {
        return Err(Error::invalid(
            "every window needs the same number of samples",
        ));
    }
    let mut ade_sum = vec![0.0; n];
    let mut fde_sum = vec![0.0; n];
    for ps in sets {
        let (ades, fdes) = (ps.ades(), ps.fdes());
        for (r, &i) in rank_by_likelihood(ps).iter().enumerate() {
            ade_sum[r] += ades[i];
            fde_sum[r] += fdes[i];
        }
    }
    let m = sets.len() as f64;
    Ok((0..n)
        .map(|r| RankPoint {
            rank: r + 1,
            mean_ade: ade_sum[r] / m,
            mean_fde: fde_sum[r] / m,
        })
        .collect())
}
