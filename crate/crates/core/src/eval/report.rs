use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::metrics::{min_ade, min_fde, oracle_top_fraction, PredictionSet, RankPoint, Selection};
use super::predict::{predict_samples, top_k_predict};
use crate::data::TrajectoryWindow;
use crate::error::Result;
use crate::model::FlowModel;

/// Per-window evaluation output.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowResult {
    pub agent_id: i64,
    pub start_frame: i64,
    pub min_ade: f64,
    pub min_fde: f64,
    /// Oracle error per requested step, per-step selection.
    pub oracle: Vec<Option<f64>>,
    /// Oracle error per requested step, whole-track selection.
    pub oracle_track: Vec<Option<f64>>,
    pub predictions: PredictionSet,
}

/// Averages over windows. Oracle means skip windows whose ground truth does
/// not reach the step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsSummary {
    pub n_windows: usize,
    pub min_ade: f64,
    pub min_fde: f64,
    pub oracle_steps: Vec<usize>,
    pub oracle: Vec<Option<f64>>,
    pub oracle_track: Vec<Option<f64>>,
}

/// Prediction steps covering each horizon in seconds, rounding up.
pub fn horizon_steps(seconds: &[f64], step_seconds: f64) -> Vec<usize> {
    seconds
        .iter()
        .map(|s| ((s / step_seconds) - 1e-9).ceil().max(1.0) as usize)
        .collect()
}

/// Samples and scores every window. With `top_k = Some(k)` each window keeps
/// the `k` most likely of `n_samples` candidates. Window `i` draws from the
/// ChaCha stream `i` of `seed`, so results do not depend on thread count.
pub fn evaluate_windows(
    model: &FlowModel,
    windows: &[TrajectoryWindow],
    n_samples: usize,
    top_k: Option<usize>,
    oracle_steps: &[usize],
    oracle_fraction: f64,
    seed: u64,
) -> Result<Vec<WindowResult>> {
    windows
        .par_iter()
        .enumerate()
        .map(|(i, w)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let ps = match top_k {
                Some(k) => top_k_predict(model, w, n_samples, k, &mut rng)?,
                None => predict_samples(model, w, n_samples, &mut rng)?,
            };
            let oracle = |sel| {
                oracle_steps
                    .iter()
                    .map(|&s| oracle_top_fraction(&ps, oracle_fraction, s, sel))
                    .collect::<Result<Vec<_>>>()
            };
            Ok(WindowResult {
                agent_id: w.agent_id,
                start_frame: w.start_frame,
                min_ade: min_ade(&ps),
                min_fde: min_fde(&ps),
                oracle: oracle(Selection::PerStep)?,
                oracle_track: oracle(Selection::WholeTrack)?,
                predictions: ps,
            })
        })
        .collect()
}

fn mean_some(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let (sum, n) = values
        .flatten()
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

impl MetricsSummary {
    pub fn from_results(results: &[WindowResult], oracle_steps: &[usize]) -> Self {
        let n = results.len().max(1) as f64;
        let column = |pick: fn(&WindowResult) -> &Vec<Option<f64>>| {
            (0..oracle_steps.len())
                .map(|j| mean_some(results.iter().map(|r| pick(r)[j])))
                .collect()
        };
        Self {
            n_windows: results.len(),
            min_ade: results.iter().map(|r| r.min_ade).sum::<f64>() / n,
            min_fde: results.iter().map(|r| r.min_fde).sum::<f64>() / n,
            oracle_steps: oracle_steps.to_vec(),
            oracle: column(|r| &r.oracle),
            oracle_track: column(|r| &r.oracle_track),
        }
    }
}

fn header_lines(text: &mut String, header: &str) {
    for line in header.lines() {
        writeln!(text, "# {line}").expect("write to string");
    }
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"))
}

/// Columnar report: per-scene minADE/minFDE with an unweighted scene
/// average, then oracle errors per step for both selection rules.
pub fn write_metrics_report(
    path: impl AsRef<Path>,
    scenes: &[(String, MetricsSummary)],
    header: &str,
) -> Result<()> {
    let mut t = String::new();
    header_lines(&mut t, header);
    writeln!(
        t,
        "{:<16} {:>8} {:>10} {:>10}",
        "scene", "windows", "minADE", "minFDE"
    )
    .unwrap();
    for (name, s) in scenes {
        writeln!(
            t,
            "{:<16} {:>8} {:>10.4} {:>10.4}",
            name, s.n_windows, s.min_ade, s.min_fde
        )
        .unwrap();
    }
    if scenes.len() > 1 {
        let k = scenes.len() as f64;
        let avg = |f: fn(&MetricsSummary) -> f64| scenes.iter().map(|(_, s)| f(s)).sum::<f64>() / k;
        let total: usize = scenes.iter().map(|(_, s)| s.n_windows).sum();
        writeln!(
            t,
            "{:<16} {:>8} {:>10.4} {:>10.4}",
            "AVG",
            total,
            avg(|s| s.min_ade),
            avg(|s| s.min_fde)
        )
        .unwrap();
    }
    for (title, pick) in [
        (
            "oracle (per-step selection)",
            (|s: &MetricsSummary| &s.oracle) as fn(&MetricsSummary) -> &Vec<Option<f64>>,
        ),
        ("oracle (whole-track selection)", |s: &MetricsSummary| {
            &s.oracle_track
        }),
    ] {
        writeln!(t).unwrap();
        writeln!(t, "# {title}").unwrap();
        let steps = scenes
            .first()
            .map(|(_, s)| s.oracle_steps.clone())
            .unwrap_or_default();
        write!(t, "{:<16}", "scene").unwrap();
        for s in &steps {
            write!(t, " {:>10}", format!("step{s}")).unwrap();
        }
        writeln!(t).unwrap();
        for (name, s) in scenes {
            write!(t, "{name:<16}").unwrap();
            for v in pick(s) {
                write!(t, " {:>10}", cell(*v)).unwrap();
            }
            writeln!(t).unwrap();
        }
        if scenes.len() > 1 {
            write!(t, "{:<16}", "AVG").unwrap();
            for j in 0..steps.len() {
                write!(
                    t,
                    " {:>10}",
                    cell(mean_some(scenes.iter().map(|(_, s)| pick(s)[j])))
                )
                .unwrap();
            }
            writeln!(t).unwrap();
        }
    }
    std::fs::write(path, t)?;
    Ok(())
}

/// `rank,mean_ade,mean_fde` rows.
pub fn write_rank_curve(path: impl AsRef<Path>, curve: &[RankPoint], header: &str) -> Result<()> {
    let mut t = String::new();
    header_lines(&mut t, header);
    t.push_str("rank,mean_ade,mean_fde\n");
    for p in curve {
        writeln!(t, "{},{},{}", p.rank, p.mean_ade, p.mean_fde).unwrap();
    }
    std::fs::write(path, t)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::FlowConfig;
    use crate::synthetic::three_mode_windows;

    #[test]
    fn horizon_rounding() {
        assert_eq!(horizon_steps(&[1.0, 2.0, 3.0, 4.0], 0.4), vec![3, 5, 8, 10]);
        assert_eq!(horizon_steps(&[0.8], 0.4), vec![2]);
    }

    #[test]
    fn evaluation_is_deterministic_and_reported() {
        let model = FlowModel::new(
            FlowConfig {
                dim: 6,
                n_layers: 2,
                k_bins: 4,
                support_b: 5.0,
                cond_dim: 16,
                conditioner_hidden: 8,
                conditioner_depth: 1,
            },
            0,
        )
        .unwrap();
        let ws = three_mode_windows(12, 4, 3, 0.05, 0);
        let run = || evaluate_windows(&model, &ws, 20, None, &[1, 3], 0.1, 7).unwrap();
        let (a, b) = (run(), run());
        assert_eq!(a, b);
        let s = MetricsSummary::from_results(&a, &[1, 3]);
        assert_eq!(s.n_windows, 12);
        assert!(s.oracle.iter().all(|v| v.is_some()));

        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("report.txt");
        write_metrics_report(&p, &[("a".into(), s.clone()), ("b".into(), s)], "hash x").unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("# hash x\n"));
        assert!(text.contains("AVG"));
        assert!(text.contains("step3"));
    }

    #[test]
    fn rank_curve_csv() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("rank.csv");
        let curve = vec![RankPoint {
            rank: 1,
            mean_ade: 0.5,
            mean_fde: 1.0,
        }];
        write_rank_curve(&p, &curve, "v").unwrap();
        assert_eq!(
            std::fs::read_to_string(&p).unwrap(),
            "# v\nrank,mean_ade,mean_fde\n1,0.5,1\n"
        );
    }
}
