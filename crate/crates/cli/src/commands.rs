use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use trajflow::data::{
    load_dataset_scaled, read_windows, rotation_normalize, split_train_val, window_trajectories,
    write_windows, DatasetFormat, Trajectory, TrajectoryWindow,
};
use trajflow::eval::{
    evaluate_windows, horizon_steps, likelihood_rank_curve, predict_samples, top_k_predict,
    write_metrics_report, write_rank_curve, MetricsSummary,
};
use trajflow::synthetic::three_mode_windows;
use trajflow::training::{
    fit_with_callback, grad_check, load_checkpoint_with_meta, save_checkpoint_with_meta,
    write_history, CheckpointMeta, Example,
};
use trajflow::FlowModel;

use crate::config::{Profile, RunConfig};
use crate::{CliError, VERSION};

fn header(hash: &str, extra: &[String]) -> String {
    let mut h = format!("trajflow {VERSION}\nconfig sha256 {hash}");
    for line in extra {
        h.push('\n');
        h.push_str(line);
    }
    h
}

fn commented(header: &str, body: &str) -> String {
    let mut out = String::new();
    for line in header.lines() {
        writeln!(out, "# {line}").expect("write to string");
    }
    out.push_str(body);
    out
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Data(format!("cannot create {}: {e}", dir.display())))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn load_scenes(
    paths: &[PathBuf],
    format: DatasetFormat,
    scale: f64,
) -> Result<Vec<Trajectory>, CliError> {
    let mut out = Vec::new();
    for p in paths {
        let loaded = load_dataset_scaled(p, format, scale)
            .map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?;
        for d in &loaded.dropped {
            eprintln!(
                "{}: dropped agent {}: {}",
                p.display(),
                d.agent_id,
                d.reason
            );
        }
        out.extend(loaded.trajectories);
    }
    Ok(out)
}

fn training_windows(cfg: &RunConfig, paths: &[PathBuf]) -> Result<Vec<TrajectoryWindow>, CliError> {
    let d = &cfg.data;
    let trajs = load_scenes(paths, d.format, cfg.scale())?;
    Ok(window_trajectories(
        &trajs, d.t_obs, d.t_pred, d.step, None,
    )?)
}

fn meta(cfg: &RunConfig, hash: &str) -> CheckpointMeta {
    CheckpointMeta {
        t_obs: Some(cfg.data.t_obs),
        config_hash: Some(hash.to_string()),
        tool_version: Some(VERSION.to_string()),
    }
}

pub fn train(config: &Path, seed: Option<u64>, out: Option<PathBuf>) -> Result<(), CliError> {
    let mut cfg = RunConfig::load(config)?;
    if let Some(s) = seed {
        cfg.train.seed = s;
    }
    if let Some(o) = out {
        cfg.output_dir = o;
    }
    if cfg.data.train.is_empty() {
        return Err(CliError::Config("data.train lists no datasets".into()));
    }
    let hash = cfg.hash();
    let head = header(&hash, &[]);
    let dir = cfg.output_dir.clone();
    create_dir(&dir)?;
    write_text(&dir.join("config.toml"), &commented(&head, &cfg.to_toml()))?;

    let windows = training_windows(&cfg, &cfg.data.train)?;
    if windows.is_empty() {
        return Err(CliError::Data(format!(
            "no full windows of {} + {} steps in the training data",
            cfg.data.t_obs, cfg.data.t_pred
        )));
    }
    let (train, val) = if cfg.data.val.is_empty() {
        split_train_val(windows, cfg.train.validation_fraction, cfg.train.seed)
    } else {
        (windows, training_windows(&cfg, &cfg.data.val)?)
    };
    if train.is_empty() {
        return Err(CliError::Data(
            "no training windows left after the validation split".into(),
        ));
    }
    eprintln!(
        "{} training windows, {} validation windows",
        train.len(),
        val.len()
    );

    let mut model = FlowModel::new(cfg.flow.clone(), cfg.train.seed)?;
    model.set_alpha(cfg.noise.alpha)?;
    let meta = meta(&cfg, &hash);
    if cfg.train.epochs == 0 {
        save_checkpoint_with_meta(&model, &meta, dir.join("final.ckpt"))?;
        eprintln!(
            "epochs = 0: wrote the initialized model to {}",
            dir.join("final.ckpt").display()
        );
        return Ok(());
    }
    let res = fit_with_callback(&train, &val, model, &cfg.train_config(), &cfg.noise, |e| {
        eprintln!(
            "epoch {:>4}  train {:>10.4}  val {:>10.4}",
            e.epoch, e.train_nll, e.val_nll
        );
    })?;
    save_checkpoint_with_meta(&res.best, &meta, dir.join("best.ckpt"))?;
    save_checkpoint_with_meta(&res.final_model, &meta, dir.join("final.ckpt"))?;
    write_history(dir.join("history.csv"), &res.history, &head)?;
    if let Some(epoch) = res.diverged_at {
        return Err(CliError::Numeric(format!(
            "loss became non-finite in epoch {epoch}; checkpoints hold the last finite parameters"
        )));
    }
    if let Some(b) = res.best_epoch {
        eprintln!("best epoch {b}; outputs in {}", dir.display());
    }
    Ok(())
}

fn checkpoint_hash(meta: &CheckpointMeta) -> String {
    meta.config_hash.clone().unwrap_or_else(|| "unknown".into())
}

pub fn predict(
    checkpoint: &Path,
    dataset: &Path,
    samples: usize,
    top_k: Option<usize>,
    seed: u64,
    out: &Path,
) -> Result<(), CliError> {
    let (model, meta) = load_checkpoint_with_meta(checkpoint)?;
    let windows = read_windows(dataset)?;
    if samples == 0 || top_k.is_some_and(|k| k == 0 || k > samples) {
        return Err(CliError::Config(
            "need samples >= 1 and 1 <= top-k <= samples".into(),
        ));
    }
    let head = header(
        &checkpoint_hash(&meta),
        &[
            format!("checkpoint {}", checkpoint.display()),
            format!("samples {samples} top_k {top_k:?} seed {seed}"),
            "log_likelihood is the density of the relative future displacements".into(),
        ],
    );
    let mut body = String::from("window agent_id start_frame sample log_likelihood x y ...\n");
    for (i, w) in windows.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let ps = match top_k {
            Some(k) => top_k_predict(&model, w, samples, k, &mut rng)?,
            None => predict_samples(&model, w, samples, &mut rng)?,
        };
        for (j, (track, ll)) in ps.samples.iter().zip(&ps.log_likelihoods).enumerate() {
            write!(body, "{i} {} {} {j} {ll}", w.agent_id, w.start_frame).unwrap();
            for p in track {
                write!(body, " {} {}", p[0], p[1]).unwrap();
            }
            body.push('\n');
        }
    }
    write_text(out, &commented(&head, &body))
}

pub struct EvaluateArgs {
    pub checkpoint: PathBuf,
    pub config: Option<PathBuf>,
    pub datasets: Vec<PathBuf>,
    pub format: Option<DatasetFormat>,
    pub samples: Option<usize>,
    pub top_k: Option<usize>,
    pub seed: Option<u64>,
    pub out: PathBuf,
}

pub fn evaluate(args: EvaluateArgs) -> Result<(), CliError> {
    let (model, meta) = load_checkpoint_with_meta(&args.checkpoint)?;
    let t_pred = model.config().dim / 2;
    let (mut cfg, hash) = match &args.config {
        Some(p) => {
            let cfg = RunConfig::load(p)?;
            let h = cfg.hash();
            (cfg, h)
        }
        None => {
            let mut cfg = RunConfig::profile(Profile::EthUcy);
            cfg.data.t_pred = t_pred;
            cfg.data.t_obs = meta.t_obs.unwrap_or(cfg.data.t_obs);
            (cfg, checkpoint_hash(&meta))
        }
    };
    if cfg.data.t_pred != t_pred {
        return Err(CliError::Config(format!(
            "config predicts {} steps; the checkpoint predicts {t_pred}",
            cfg.data.t_pred
        )));
    }
    if let Some(f) = args.format {
        if args.config.is_none() {
            cfg.data.scale = None;
        }
        cfg.data.format = f;
    }
    let samples = args.samples.unwrap_or(cfg.eval.samples);
    let top_k = args.top_k.or(cfg.eval.top_k);
    let seed = args.seed.unwrap_or(cfg.eval.seed);
    if samples == 0 || top_k.is_some_and(|k| k == 0 || k > samples) {
        return Err(CliError::Config(
            "need samples >= 1 and 1 <= top-k <= samples".into(),
        ));
    }
    let datasets = if args.datasets.is_empty() {
        cfg.data.test.clone()
    } else {
        args.datasets.clone()
    };
    if datasets.is_empty() {
        return Err(CliError::Config(
            "no dataset given and data.test is empty".into(),
        ));
    }
    let steps = horizon_steps(&cfg.eval.oracle_horizons, cfg.eval.step_seconds);

    create_dir(&args.out)?;
    let mut scenes = Vec::new();
    let mut all_sets = Vec::new();
    for path in &datasets {
        let trajs = load_scenes(std::slice::from_ref(path), cfg.data.format, cfg.scale())?;
        let d = &cfg.data;
        let windows = window_trajectories(&trajs, d.t_obs, d.t_pred, d.step, Some(d.min_future))?;
        if windows.is_empty() {
            return Err(CliError::Data(format!(
                "{}: no evaluation windows",
                path.display()
            )));
        }
        let results = evaluate_windows(
            &model,
            &windows,
            samples,
            top_k,
            &steps,
            cfg.eval.oracle_fraction,
            seed,
        )?;
        let summary = MetricsSummary::from_results(&results, &steps);
        let name = path.file_stem().map_or_else(
            || path.display().to_string(),
            |s| s.to_string_lossy().into_owned(),
        );
        println!(
            "{name}: {} windows, minADE {:.4}, minFDE {:.4}",
            summary.n_windows, summary.min_ade, summary.min_fde
        );
        scenes.push((name, summary));
        all_sets.extend(results.into_iter().map(|r| r.predictions));
    }
    let head = header(
        &hash,
        &[
            format!("checkpoint {}", args.checkpoint.display()),
            format!(
                "samples {samples} top_k {top_k:?} seed {seed} oracle fraction {} steps {steps:?}",
                cfg.eval.oracle_fraction
            ),
        ],
    );
    write_metrics_report(args.out.join("metrics.txt"), &scenes, &head)?;
    write_rank_curve(
        args.out.join("rank_curve.csv"),
        &likelihood_rank_curve(&all_sets)?,
        &head,
    )?;
    Ok(())
}

pub fn gradcheck(
    config: Option<&Path>,
    tolerance: Option<f64>,
    seed: Option<u64>,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let (section, hash) = match config {
        Some(p) => {
            let cfg = RunConfig::load(p)?;
            let h = cfg.hash();
            (cfg.gradcheck, h)
        }
        None => {
            let cfg = RunConfig::profile(Profile::EthUcy);
            let h = cfg.hash();
            (cfg.gradcheck, h)
        }
    };
    let tol = tolerance.unwrap_or(section.tolerance);
    let seed = seed.unwrap_or(section.seed);
    let model = FlowModel::new(section.flow.clone(), seed)?;
    let batch: Vec<Example> = three_mode_windows(
        section.batch,
        section.t_obs,
        section.flow.dim / 2,
        0.05,
        seed,
    )
    .iter()
    .map(|w| Example::from_window(&rotation_normalize(w)))
    .collect();
    let report = grad_check(&model, &batch, tol)?;
    let text = commented(
        &header(&hash, &[format!("seed {seed}")]),
        &format!("{report}\n"),
    );
    print!("{text}");
    if let Some(p) = out {
        write_text(p, &text)?;
    }
    if report.passed {
        Ok(())
    } else {
        Err(CliError::Numeric(format!(
            "gradient check failed: max relative error {:.3e} >= {tol:.1e}",
            report.max_rel_err
        )))
    }
}

pub fn inspect(checkpoint: &Path) -> Result<(), CliError> {
    let (model, meta) = load_checkpoint_with_meta(checkpoint)?;
    let mut t = String::new();
    writeln!(t, "checkpoint   {}", checkpoint.display()).unwrap();
    writeln!(
        t,
        "written by   trajflow {}",
        meta.tool_version.as_deref().unwrap_or("unknown")
    )
    .unwrap();
    writeln!(t, "config hash  {}", checkpoint_hash(&meta)).unwrap();
    writeln!(
        t,
        "t_obs        {}",
        meta.t_obs.map_or("unknown".into(), |v| v.to_string())
    )
    .unwrap();
    writeln!(t, "alpha        {}", model.alpha()).unwrap();
    writeln!(t, "parameters   {}", model.params().len()).unwrap();
    writeln!(
        t,
        "\n[flow]\n{}",
        toml::to_string(model.config()).expect("flow config serializes")
    )
    .unwrap();
    for (i, p) in model.permutations().iter().enumerate() {
        writeln!(t, "permutation {i}: {:?}", p.indices()).unwrap();
    }
    writeln!(t).unwrap();
    for e in model.layout().entries() {
        let v = &model.params()[e.range()];
        let rms = (v.iter().map(|x| x * x).sum::<f64>() / v.len().max(1) as f64).sqrt();
        writeln!(
            t,
            "{:<36} {:>12} rms {rms:.4e}",
            e.name,
            format!("{:?}", e.shape)
        )
        .unwrap();
    }
    print!("{t}");
    Ok(())
}

pub fn export_windows(config: &Path, test: bool, out: &Path) -> Result<(), CliError> {
    let cfg = RunConfig::load(config)?;
    let d = &cfg.data;
    let (paths, min_future) = if test {
        (&d.test, Some(d.min_future))
    } else {
        (&d.train, None)
    };
    if paths.is_empty() {
        return Err(CliError::Config(format!(
            "data.{} lists no datasets",
            if test { "test" } else { "train" }
        )));
    }
    let trajs = load_scenes(paths, d.format, cfg.scale())?;
    let windows = window_trajectories(&trajs, d.t_obs, d.t_pred, d.step, min_future)?;
    let mode = if test { "evaluation" } else { "training" };
    write_windows(
        out,
        &windows,
        &header(&cfg.hash(), &[format!("{mode} windows")]),
    )?;
    eprintln!("wrote {} windows to {}", windows.len(), out.display());
    Ok(())
}

pub fn init_config(profile: Profile, out: Option<&Path>) -> Result<(), CliError> {
    let cfg = RunConfig::profile(profile);
    let text = commented(
        &format!("trajflow {VERSION} {profile:?} profile"),
        &cfg.to_toml(),
    );
    match out {
        Some(p) => write_text(p, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
