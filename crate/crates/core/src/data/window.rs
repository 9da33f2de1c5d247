use std::fmt::Write as _;
use std::path::Path;

use super::dataset::Trajectory;
use crate::encoder::to_displacements;
use crate::error::{Error, Result};
use crate::Point;

/// An (observed, future) slice of one track.
///
/// `rotation` is the angle of the stored (normalized) frame relative to the
/// original one: original = R(rotation) · (stored − anchor) + anchor.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryWindow {
    pub agent_id: i64,
    pub start_frame: i64,
    pub observed_abs: Vec<Point>,
    pub future_abs: Vec<Point>,
    pub anchor: Point,
    pub rotation: f64,
    pub observed_rel: Vec<Point>,
    /// First entry is `future_abs[0] - anchor`.
    pub future_rel: Vec<Point>,
}

fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

fn rotate_about(p: Point, angle: f64, center: Point) -> Point {
    if angle == 0.0 {
        return p;
    }
    let (s, c) = angle.sin_cos();
    let d = sub(p, center);
    [
        center[0] + c * d[0] - s * d[1],
        center[1] + s * d[0] + c * d[1],
    ]
}

impl TrajectoryWindow {
    /// A window in the original frame (rotation 0). `future_abs` may be empty.
    pub fn new(
        agent_id: i64,
        start_frame: i64,
        observed_abs: Vec<Point>,
        future_abs: Vec<Point>,
    ) -> Result<Self> {
        let observed_rel = to_displacements(&observed_abs)?;
        let anchor = *observed_abs.last().expect("checked by to_displacements");
        let future_rel = future_abs
            .iter()
            .scan(anchor, |prev, &p| {
                let d = sub(p, *prev);
                *prev = p;
                Some(d)
            })
            .collect();
        Ok(Self {
            agent_id,
            start_frame,
            observed_abs,
            future_abs,
            anchor,
            rotation: 0.0,
            observed_rel,
            future_rel,
        })
    }

    fn with_positions(&self, observed_abs: Vec<Point>, future_abs: Vec<Point>) -> Result<Self> {
        let mut w = Self::new(self.agent_id, self.start_frame, observed_abs, future_abs)?;
        w.rotation = self.rotation;
        Ok(w)
    }

    pub fn t_obs(&self) -> usize {
        self.observed_abs.len()
    }

    pub fn t_future(&self) -> usize {
        self.future_abs.len()
    }

    /// Future displacements flattened as `[dx0, dy0, dx1, dy1, ...]`.
    pub fn future_flat(&self) -> Vec<f64> {
        self.future_rel.iter().flatten().copied().collect()
    }

    /// The same window expressed in the original (un-normalized) frame.
    pub fn denormalized(&self) -> Self {
        let back = |ps: &[Point]| rotate_back(ps, self.rotation, self.anchor);
        let mut w = self
            .with_positions(back(&self.observed_abs), back(&self.future_abs))
            .expect("window shape is unchanged");
        w.rotation = 0.0;
        w
    }
}

/// Slices tracks into windows of `t_obs` observed and `t_pred` future steps.
///
/// With `min_future = None` (training) only full-length windows are
/// produced. With `Some(m)` (evaluation) a track too short for any full
/// window still yields one window from its start when at least `m` future
/// steps remain.
pub fn window_trajectories(
    trajs: &[Trajectory],
    t_obs: usize,
    t_pred: usize,
    step: usize,
    min_future: Option<usize>,
) -> Result<Vec<TrajectoryWindow>> {
    if t_obs < 2 || t_pred < 1 || step < 1 {
        return Err(Error::invalid(format!(
            "need t_obs >= 2, t_pred >= 1, step >= 1 (got {t_obs}, {t_pred}, {step})"
        )));
    }
    if let Some(m) = min_future {
        if m < 1 || m > t_pred {
            return Err(Error::invalid(format!(
                "min_future must lie in 1..={t_pred}"
            )));
        }
    }
    let full = t_obs + t_pred;
    let mut out = Vec::new();
    for t in trajs {
        let n = t.len();
        if n >= full {
            for start in (0..=n - full).step_by(step) {
                out.push(TrajectoryWindow::new(
                    t.agent_id,
                    t.frames[start],
                    t.positions[start..start + t_obs].to_vec(),
                    t.positions[start + t_obs..start + full].to_vec(),
                )?);
            }
        } else if let Some(m) = min_future {
            if n >= t_obs + m {
                out.push(TrajectoryWindow::new(
                    t.agent_id,
                    t.frames[0],
                    t.positions[..t_obs].to_vec(),
                    t.positions[t_obs..].to_vec(),
                )?);
            }
        }
    }
    Ok(out)
}

/// Rotates the window about its anchor so the last observed displacement
/// points along +x. A zero last displacement leaves the window unrotated.
pub fn rotation_normalize(w: &TrajectoryWindow) -> TrajectoryWindow {
    let last = *w.observed_rel.last().expect("window has observations");
    let angle = if last == [0.0, 0.0] {
        0.0
    } else {
        last[1].atan2(last[0])
    };
    if angle == 0.0 {
        return w.clone();
    }
    let turn = |ps: &[Point]| -> Vec<Point> {
        ps.iter()
            .map(|&p| rotate_about(p, -angle, w.anchor))
            .collect()
    };
    let mut out = w
        .with_positions(turn(&w.observed_abs), turn(&w.future_abs))
        .expect("window shape is unchanged");
    out.rotation = w.rotation + angle;
    out
}

/// Maps positions from a normalized frame back to the original one.
pub fn rotate_back(predicted_abs: &[Point], rotation: f64, anchor: Point) -> Vec<Point> {
    predicted_abs
        .iter()
        .map(|&p| rotate_about(p, rotation, anchor))
        .collect()
}

/// Flow-space displacements (already divided by alpha) to absolute
/// positions: cumulative sum from the anchor, then rotate back.
pub fn decode_prediction(z_rel: &[f64], anchor: Point, rotation: f64) -> Vec<Point> {
    let mut pos = anchor;
    let path: Vec<Point> = z_rel
        .chunks_exact(2)
        .map(|d| {
            pos = [pos[0] + d[0], pos[1] + d[1]];
            pos
        })
        .collect();
    rotate_back(&path, rotation, anchor)
}

/// Window cache: one window per row,
/// `agent_id start_frame n_obs n_future x y ...` with absolute positions in
/// the original frame (observed first, then future).
pub fn write_windows(
    path: impl AsRef<Path>,
    windows: &[TrajectoryWindow],
    header: &str,
) -> Result<()> {
    let mut text = String::new();
    for line in header.lines() {
        writeln!(text, "# {line}").expect("write to string");
    }
    writeln!(text, "# agent_id start_frame n_obs n_future x y ...").expect("write to string");
    for w in windows {
        let w = w.denormalized();
        write!(
            text,
            "{} {} {} {}",
            w.agent_id,
            w.start_frame,
            w.t_obs(),
            w.t_future()
        )
        .expect("write to string");
        for p in w.observed_abs.iter().chain(&w.future_abs) {
            write!(text, " {} {}", p[0], p[1]).expect("write to string");
        }
        text.push('\n');
    }
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_windows(path: impl AsRef<Path>) -> Result<Vec<TrajectoryWindow>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: &str| Error::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            msg: msg.to_string(),
        };
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() < 4 {
            return Err(err("expected agent_id start_frame n_obs n_future"));
        }
        let ints: Vec<i64> = f[..4]
            .iter()
            .map(|s| s.parse::<i64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| err("header fields must be integers"))?;
        let (n_obs, n_fut) = (ints[2] as usize, ints[3] as usize);
        if ints[2] < 2 || ints[3] < 0 || f.len() != 4 + 2 * (n_obs + n_fut) {
            return Err(err("position count does not match n_obs/n_future"));
        }
        let coords: Vec<f64> = f[4..]
            .iter()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| err("coordinates must be numbers"))?;
        let pts: Vec<Point> = coords.chunks_exact(2).map(|c| [c[0], c[1]]).collect();
        out.push(TrajectoryWindow::new(
            ints[0],
            ints[1],
            pts[..n_obs].to_vec(),
            pts[n_obs..].to_vec(),
        )?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn track(n: usize) -> Trajectory {
        let frames = (0..n as i64).map(|i| i * 10).collect();
        let positions = (0..n)
            .map(|i| [i as f64 * 0.4, (i as f64 * 0.3).sin()])
            .collect();
        Trajectory::new(1, frames, positions).unwrap()
    }

    fn random_window(rng: &mut ChaCha8Rng) -> TrajectoryWindow {
        let mut pts: Vec<Point> = Vec::new();
        let mut p = [rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0)];
        for _ in 0..20 {
            p = [
                p[0] + rng.random_range(-1.0..1.0),
                p[1] + rng.random_range(-1.0..1.0),
            ];
            pts.push(p);
        }
        TrajectoryWindow::new(0, 0, pts[..8].to_vec(), pts[8..].to_vec()).unwrap()
    }

    fn max_dist(a: &[Point], b: &[Point]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(p, q)| (p[0] - q[0]).abs().max((p[1] - q[1]).abs()))
            .fold(0.0, f64::max)
    }

    #[test]
    fn window_counts() {
        assert_eq!(
            window_trajectories(&[track(22)], 8, 12, 1, None)
                .unwrap()
                .len(),
            3
        );
        assert_eq!(
            window_trajectories(&[track(19)], 8, 12, 1, None)
                .unwrap()
                .len(),
            0
        );
        let eval = window_trajectories(&[track(10)], 8, 12, 1, Some(2)).unwrap();
        assert_eq!(eval.len(), 1);
        assert_eq!(eval[0].t_future(), 2);
        assert!(window_trajectories(&[track(9)], 8, 12, 1, Some(2))
            .unwrap()
            .is_empty());
        assert_eq!(
            window_trajectories(&[track(40)], 8, 12, 5, None)
                .unwrap()
                .len(),
            5
        );
        assert!(window_trajectories(&[track(40)], 1, 12, 1, None).is_err());
    }

    #[test]
    fn window_relative_forms() {
        let w = &window_trajectories(&[track(20)], 8, 12, 1, None).unwrap()[0];
        assert_eq!(w.observed_rel.len(), 7);
        assert_eq!(w.future_rel.len(), 12);
        assert_eq!(w.anchor, w.observed_abs[7]);
        let decoded = decode_prediction(&w.future_flat(), w.anchor, w.rotation);
        assert!(max_dist(&decoded, &w.future_abs) < 1e-9);
    }

    #[test]
    fn rotation_examples() {
        let w =
            TrajectoryWindow::new(0, 0, vec![[1.0, 1.0], [1.0, 3.0]], vec![[1.0, 4.0]]).unwrap();
        let r = rotation_normalize(&w);
        assert!((r.observed_rel[0][0] - 2.0).abs() < 1e-12);
        assert!(r.observed_rel[0][1].abs() < 1e-12);
        assert!((r.rotation - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
        assert!((r.future_rel[0][0] - 1.0).abs() < 1e-12);

        let aligned =
            TrajectoryWindow::new(0, 0, vec![[0.0, 0.0], [3.0, 0.0]], vec![[4.0, 1.0]]).unwrap();
        assert_eq!(rotation_normalize(&aligned), aligned);

        let still =
            TrajectoryWindow::new(0, 0, vec![[2.0, 2.0], [2.0, 2.0]], vec![[2.0, 3.0]]).unwrap();
        assert_eq!(rotation_normalize(&still).rotation, 0.0);
    }

    #[test]
    fn rotation_round_trip_and_distances() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..200 {
            let w = random_window(&mut rng);
            let r = rotation_normalize(&w);
            let last = r.observed_rel.last().unwrap();
            assert!(last[1].abs() < 1e-12 && last[0] >= 0.0);
            let back = r.denormalized();
            assert!(max_dist(&back.observed_abs, &w.observed_abs) < 1e-12);
            assert!(max_dist(&back.future_abs, &w.future_abs) < 1e-12);
            let all = |w: &TrajectoryWindow| -> Vec<Point> {
                w.observed_abs
                    .iter()
                    .chain(&w.future_abs)
                    .copied()
                    .collect()
            };
            let (a, b) = (all(&w), all(&r));
            for i in 0..a.len() {
                for j in 0..i {
                    let da = ((a[i][0] - a[j][0]).powi(2) + (a[i][1] - a[j][1]).powi(2)).sqrt();
                    let db = ((b[i][0] - b[j][0]).powi(2) + (b[i][1] - b[j][1]).powi(2)).sqrt();
                    assert!((da - db).abs() < 1e-9);
                }
            }
            // decode in the rotated frame, re-encode, compare displacements
            let decoded = decode_prediction(&r.future_flat(), r.anchor, r.rotation);
            assert!(max_dist(&decoded, &w.future_abs) < 1e-9);
            let mut chain = vec![w.anchor];
            chain.extend(&decoded);
            let re = to_displacements(&chain).unwrap();
            assert!(max_dist(&re, &w.future_rel) < 1e-9);
        }
    }

    #[test]
    fn rotate_back_preserves_norms() {
        let anchor = [1.5, -2.0];
        let pts = vec![[3.0, 4.0], [-1.0, 0.5], [1.5, -2.0]];
        assert_eq!(rotate_back(&pts, 0.0, anchor), pts);
        let turned = rotate_back(&pts, 1.234, anchor);
        for (p, q) in pts.iter().zip(&turned) {
            let n = |v: &Point| ((v[0] - anchor[0]).powi(2) + (v[1] - anchor[1]).powi(2)).sqrt();
            assert!((n(p) - n(q)).abs() < 1e-12);
        }
    }

    #[test]
    fn decode_examples() {
        let d = decode_prediction(&[1.0, 0.0, 1.0, 0.0], [0.0, 0.0], 0.0);
        assert_eq!(d, vec![[1.0, 0.0], [2.0, 0.0]]);
        let z = decode_prediction(&[0.0; 6], [3.0, -1.0], 0.7);
        assert!(z.iter().all(|p| *p == [3.0, -1.0]));
    }

    #[test]
    fn window_file_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let windows: Vec<_> = (0..5).map(|_| random_window(&mut rng)).collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.txt");
        write_windows(&path, &windows, "test").unwrap();
        assert_eq!(read_windows(&path).unwrap(), windows);
    }
}
