use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Point;

/// Text layouts accepted by [`load_dataset`]. Both are whitespace-separated
/// `frame_id agent_id x y` rows; they differ in units and default scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetFormat {
    /// Pedestrian tracks in meters.
    EthUcyText,
    /// Aerial tracks in pixels.
    DroneText,
}

impl DatasetFormat {
    /// Load-time scale conventionally applied to this format.
    pub fn default_scale(self) -> f64 {
        match self {
            DatasetFormat::EthUcyText => 1.0,
            DatasetFormat::DroneText => 0.2,
        }
    }
}

impl std::str::FromStr for DatasetFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "eth-ucy-text" => Ok(DatasetFormat::EthUcyText),
            "drone-text" => Ok(DatasetFormat::DroneText),
            other => Err(Error::invalid(format!(
                "unknown dataset format {other:?} (expected eth-ucy-text or drone-text)"
            ))),
        }
    }
}

/// One agent's track: strictly increasing frames with a constant stride.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub agent_id: i64,
    pub frames: Vec<i64>,
    pub positions: Vec<Point>,
}

impl Trajectory {
    pub fn new(agent_id: i64, frames: Vec<i64>, positions: Vec<Point>) -> Result<Self> {
        if frames.len() != positions.len() {
            return Err(Error::invalid("frames and positions differ in length"));
        }
        if positions.len() < 2 {
            return Err(Error::invalid("a trajectory needs at least 2 positions"));
        }
        let stride = frames[1] - frames[0];
        if stride <= 0 || frames.windows(2).any(|w| w[1] - w[0] != stride) {
            return Err(Error::invalid(
                "frames must increase with a constant stride",
            ));
        }
        if positions.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid("positions must be finite"));
        }
        Ok(Self {
            agent_id,
            frames,
            positions,
        })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn stride(&self) -> i64 {
        self.frames[1] - self.frames[0]
    }

    /// Multiplies every coordinate by `factor`. Not idempotent.
    pub fn scaled(mut self, factor: f64) -> Self {
        for p in &mut self.positions {
            p[0] *= factor;
            p[1] *= factor;
        }
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DroppedAgent {
    pub agent_id: i64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LoadedDataset {
    pub trajectories: Vec<Trajectory>,
    pub dropped: Vec<DroppedAgent>,
}

fn parse_integral(field: &str) -> Option<i64> {
    if let Ok(v) = field.parse::<i64>() {
        return Some(v);
    }
    let v: f64 = field.parse().ok()?;
    (v.is_finite() && v.fract() == 0.0 && v.abs() < 9.0e15).then_some(v as i64)
}

/// Parses dataset text. `path` only labels error messages.
pub fn parse_dataset(text: &str, path: &Path) -> Result<LoadedDataset> {
    let mut by_agent: BTreeMap<i64, Vec<(i64, Point)>> = BTreeMap::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            msg,
        };
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(err(format!(
                "expected 4 fields (frame_id agent_id x y), found {}",
                fields.len()
            )));
        }
        let frame = parse_integral(fields[0])
            .ok_or_else(|| err(format!("frame id {:?} is not an integer", fields[0])))?;
        let agent = parse_integral(fields[1])
            .ok_or_else(|| err(format!("agent id {:?} is not an integer", fields[1])))?;
        let mut xy = [0.0; 2];
        for (slot, f) in xy.iter_mut().zip(&fields[2..]) {
            *slot = f
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| err(format!("coordinate {f:?} is not a finite number")))?;
        }
        by_agent.entry(agent).or_default().push((frame, xy));
    }

    let mut out = LoadedDataset::default();
    for (agent_id, mut rows) in by_agent {
        rows.sort_by_key(|(f, _)| *f);
        let (frames, positions): (Vec<i64>, Vec<Point>) = rows.into_iter().unzip();
        match Trajectory::new(agent_id, frames, positions) {
            Ok(t) => out.trajectories.push(t),
            Err(e) => out.dropped.push(DroppedAgent {
                agent_id,
                reason: e.to_string(),
            }),
        }
    }
    Ok(out)
}

/// Reads a `frame_id agent_id x y` file and groups rows into trajectories.
/// Agents with fewer than two rows or an irregular frame stride are listed
/// in [`LoadedDataset::dropped`].
pub fn load_dataset(path: impl AsRef<Path>, format: DatasetFormat) -> Result<LoadedDataset> {
    load_dataset_scaled(path, format, 1.0)
}

pub fn load_dataset_scaled(
    path: impl AsRef<Path>,
    _format: DatasetFormat,
    scale: f64,
) -> Result<LoadedDataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let mut data = parse_dataset(&text, path)?;
    if scale != 1.0 {
        data.trajectories = data
            .trajectories
            .into_iter()
            .map(|t| t.scaled(scale))
            .collect();
    }
    Ok(data)
}

/// Writes trajectories as rows ordered by frame, then agent.
pub fn write_dataset(path: impl AsRef<Path>, trajs: &[Trajectory]) -> Result<()> {
    let mut rows: Vec<(i64, i64, Point)> = trajs
        .iter()
        .flat_map(|t| {
            t.frames
                .iter()
                .zip(&t.positions)
                .map(move |(&f, &p)| (f, t.agent_id, p))
        })
        .collect();
    rows.sort_by_key(|&(f, a, _)| (f, a));
    let mut text = String::new();
    for (f, a, p) in rows {
        writeln!(text, "{f}\t{a}\t{}\t{}", p[0], p[1]).expect("write to string");
    }
    std::fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<LoadedDataset> {
        parse_dataset(text, Path::new("mem"))
    }

    #[test]
    fn empty_input() {
        assert!(parse("").unwrap().trajectories.is_empty());
        assert!(parse("# only a comment\n\n")
            .unwrap()
            .trajectories
            .is_empty());
    }

    #[test]
    fn interleaved_agents_are_grouped_and_sorted() {
        let text = "20 2 1.0 1.0\n10 1 0.0 0.0\n10 2 0.5 0.5\n0 1 -1 0\n20 1 1 0\n0.0 2.0 0 0\n";
        let data = parse(text).unwrap();
        assert_eq!(data.trajectories.len(), 2);
        let a = &data.trajectories[0];
        assert_eq!(a.agent_id, 1);
        assert_eq!(a.frames, vec![0, 10, 20]);
        assert_eq!(a.positions, vec![[-1.0, 0.0], [0.0, 0.0], [1.0, 0.0]]);
        assert_eq!(data.trajectories[1].frames, vec![0, 10, 20]);
    }

    #[test]
    fn irregular_stride_is_reported() {
        let data = parse("0 1 0 0\n10 1 1 0\n30 1 2 0\n0 2 0 0\n").unwrap();
        assert!(data.trajectories.is_empty());
        assert_eq!(data.dropped.len(), 2);
        assert_eq!(data.dropped[0].agent_id, 1);
        assert!(data.dropped[0].reason.contains("stride"));
    }

    #[test]
    fn malformed_row_names_line() {
        match parse("0 1 0 0\n# c\n10 1 abc 0\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            parse("0 1 0\n"),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(parse("0.5 1 0 0\n"), Err(Error::Parse { .. })));
    }

    #[test]
    fn write_then_load_preserves_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.txt");
        let trajs = vec![
            Trajectory::new(
                3,
                vec![0, 10, 20],
                vec![[0.1, 0.2], [1.0 / 3.0, -2.5], [1e-7, 7.0]],
            )
            .unwrap(),
            Trajectory::new(9, vec![10, 20], vec![[5.0, 5.0], [6.0, 4.0]]).unwrap(),
        ];
        write_dataset(&path, &trajs).unwrap();
        let loaded = load_dataset(&path, DatasetFormat::EthUcyText).unwrap();
        assert_eq!(loaded.trajectories, trajs);
        assert!(loaded.dropped.is_empty());
    }

    #[test]
    fn load_time_scaling() {
        let t = Trajectory::new(1, vec![0, 1], vec![[10.0, 5.0], [15.0, -20.0]]).unwrap();
        assert_eq!(t.clone().scaled(1.0), t);
        let once = t.clone().scaled(0.2);
        assert!((once.positions[0][0] - 10.0 / 5.0).abs() < 1e-15);
        assert!((once.positions[1][1] - (-20.0 / 5.0)).abs() < 1e-15);
        assert_ne!(once.clone().scaled(0.2), once);
        assert_eq!(DatasetFormat::DroneText.default_scale(), 0.2);
        assert_eq!(
            "drone-text".parse::<DatasetFormat>().unwrap(),
            DatasetFormat::DroneText
        );
        assert!("csv".parse::<DatasetFormat>().is_err());
    }
}
