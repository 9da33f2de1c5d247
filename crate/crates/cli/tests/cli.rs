use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use trajflow::data::write_dataset;
use trajflow::synthetic::constant_velocity_tracks;

const BIN: &str = env!("CARGO_BIN_EXE_trajflow");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn text(p: impl AsRef<Path>) -> String {
    std::fs::read_to_string(p).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    fn new(epochs: usize) -> Self {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(
            dir.path().join("train.txt"),
            &constant_velocity_tracks(30, 12, 0.2, 1),
        )
        .unwrap();
        write_dataset(
            dir.path().join("test.txt"),
            &constant_velocity_tracks(8, 10, 0.2, 2),
        )
        .unwrap();
        let cfg = format!(
            r#"output_dir = "run"

[data]
train = ["train.txt"]
test = ["test.txt"]
format = "eth-ucy-text"
t_obs = 4
t_pred = 4
step = 2

[flow]
dim = 8
n_layers = 2
k_bins = 6
support_b = 15.0
cond_dim = 8
conditioner_hidden = 16
conditioner_depth = 2

[noise]
alpha = 10.0
beta = 0.2
gamma = 0.02

[augment]
mu = 1.0
sigma = 0.5
s_min = 0.3
s_max = 1.7

[train]
learning_rate = 0.001
batch_size = 32
epochs = {epochs}
seed = 3
beta1 = 0.9
beta2 = 0.999
eps = 1e-8
validation_fraction = 0.2
validation_noise = true

[eval]
samples = 6
oracle_fraction = 0.5
oracle_horizons = [0.4, 0.8, 1.6]
step_seconds = 0.4
seed = 0
"#
        );
        std::fs::write(dir.path().join("run.toml"), cfg).unwrap();
        Self { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn train(&self, out: &str) -> Output {
        let out = self.path(out);
        run(&[
            "train",
            "--config",
            p(&self.path("run.toml")),
            "--out",
            p(&out),
        ])
    }
}

fn format_of(cfg: &str) -> String {
    let re = cfg.lines().find(|l| l.starts_with("format")).unwrap();
    re.to_string()
}

#[test]
fn format_names_match_fixture() {
    let o = run(&["init-config"]);
    assert_eq!(code(&o), 0);
    let cfg = String::from_utf8(o.stdout).unwrap();
    assert_eq!(format_of(&cfg), r#"format = "eth-ucy-text""#);
}

#[test]
fn train_writes_outputs_and_reruns_identically() {
    let f = Fixture::new(2);
    let o = f.train("a");
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for name in ["best.ckpt", "final.ckpt", "history.csv", "config.toml"] {
        assert!(f.path("a").join(name).exists(), "{name}");
    }
    let hist = text(f.path("a/history.csv"));
    assert!(hist.starts_with("# trajflow "));
    assert!(hist.contains("# config sha256 "));
    assert!(hist.contains("epoch,train_nll,val_nll"));
    assert_eq!(hist.lines().filter(|l| !l.starts_with('#')).count(), 3);

    let names = ["best.ckpt", "final.ckpt", "history.csv", "config.toml"];
    let first: Vec<Vec<u8>> = names
        .iter()
        .map(|n| std::fs::read(f.path("a").join(n)).unwrap())
        .collect();
    assert_eq!(code(&f.train("a")), 0);
    for (name, a) in names.iter().zip(&first) {
        let b = std::fs::read(f.path("a").join(name)).unwrap();
        assert_eq!(a, &b, "{name} differs between identical runs");
    }

    let o = run(&["inspect", "--checkpoint", p(&f.path("a/best.ckpt"))]);
    assert_eq!(code(&o), 0);
    let s = String::from_utf8(o.stdout).unwrap();
    assert!(s.contains("alpha        10"));
    assert!(s.contains("t_obs        4"));
}

#[test]
fn zero_epochs_saves_initialized_model() {
    let f = Fixture::new(0);
    assert_eq!(code(&f.train("z")), 0);
    assert!(f.path("z/final.ckpt").exists());
    assert!(!f.path("z/best.ckpt").exists());
    assert!(!f.path("z/history.csv").exists());
}

#[test]
fn predict_and_evaluate() {
    let f = Fixture::new(1);
    assert_eq!(code(&f.train("r")), 0);
    let ckpt = f.path("r/final.ckpt");
    let windows = f.path("windows.txt");
    let o = run(&[
        "export-windows",
        "--config",
        p(&f.path("run.toml")),
        "--test",
        "--out",
        p(&windows),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let n_windows = trajflow::data::read_windows(&windows).unwrap().len();
    assert!(n_windows > 0);

    let pred = f.path("pred.txt");
    let o = run(&[
        "predict",
        "--checkpoint",
        p(&ckpt),
        "--dataset",
        p(&windows),
        "--samples",
        "10",
        "--top-k",
        "3",
        "--out",
        p(&pred),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let body = text(&pred);
    assert!(body.contains("# config sha256 "));
    let rows: Vec<Vec<f64>> = body
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("window"))
        .map(|l| l.split_whitespace().map(|t| t.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 3 * n_windows);
    for r in &rows {
        assert_eq!(r.len(), 5 + 8);
    }
    for w in rows.chunks(3) {
        assert!(
            w[0][4] >= w[1][4] && w[1][4] >= w[2][4],
            "top-k rows sorted by likelihood"
        );
    }

    let ev = |out: &str| {
        let out = f.path(out);
        let o = run(&[
            "evaluate",
            "--checkpoint",
            p(&ckpt),
            "--config",
            p(&f.path("run.toml")),
            "--out",
            p(&out),
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        (
            text(out.join("metrics.txt")),
            text(out.join("rank_curve.csv")),
        )
    };
    let (m1, r1) = ev("e1");
    let (m2, r2) = ev("e2");
    assert_eq!(m1, m2);
    assert_eq!(r1, r2);
    assert!(m1.contains("# config sha256 "));
    assert!(m1.lines().any(|l| l.starts_with("test ")), "{m1}");
    assert!(r1.contains("rank,mean_ade,mean_fde"));
    assert_eq!(r1.lines().filter(|l| !l.starts_with('#')).count(), 1 + 6);
}

#[test]
fn gradcheck_passes_and_fails_at_zero_tolerance() {
    let o = run(&["gradcheck"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let o = run(&["gradcheck", "--tolerance", "0"]);
    assert_eq!(code(&o), 3);
}

#[test]
fn config_errors_exit_one() {
    let f = Fixture::new(1);
    let cfg = text(f.path("run.toml")).replace("[noise]\n", "[noise]\nalpah = 3.0\n");
    std::fs::write(f.path("bad.toml"), cfg).unwrap();
    let o = run(&["train", "--config", p(&f.path("bad.toml"))]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("alpah"));

    let o = run(&["train", "--config", p(&f.path("missing.toml"))]);
    assert_eq!(code(&o), 1);
    assert_eq!(code(&run(&["train"])), 1);
}

#[test]
fn corrupt_checkpoint_is_data_error() {
    let f = Fixture::new(1);
    std::fs::write(f.path("junk.ckpt"), b"not a checkpoint").unwrap();
    let o = run(&["inspect", "--checkpoint", p(&f.path("junk.ckpt"))]);
    assert_eq!(code(&o), 2);
}
