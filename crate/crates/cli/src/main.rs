mod config;
mod error;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use patmod::data::{
    io as dio, make_dataset, read_dataset, read_image, write_cloud, write_dataset, CloudFormat, Dataset, Sample,
    SplitKind,
};
use patmod::geometry::PointCloud;
use patmod::model::{Model, ModelConfig, RowMode, SplitReference};
use patmod::numerics::{Graph, Tensor};
use patmod::training::{
    evaluate_parallel, interpolate_latent, metrics_csv, sweep, sweep_csv, train, EvalOptions, SweepData,
    SweepParameter,
};

use config::RunConfig;
use error::CliError;

#[derive(Parser, Debug)]
#[command(name = "patmod", version, about = "Single-image point cloud reconstruction with learned region patterns")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
struct Common {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Extra `key=value` overrides, applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Overwrite existing outputs.
    #[arg(long)]
    force: bool,
}

#[derive(Args, Debug, Clone, Default)]
struct AblationFlags {
    #[arg(long)]
    no_local: bool,
    #[arg(long)]
    no_patterns: bool,
    #[arg(long)]
    no_shift: bool,
    #[arg(long)]
    no_l_region: bool,
    #[arg(long)]
    no_l_shape: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the synthetic dataset.
    GenData {
        #[command(flatten)]
        common: Common,
        /// Dataset directory (overrides data_dir).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a model and write its checkpoint and metrics.
    Train {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        ablations: AblationFlags,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        max_steps: Option<usize>,
    },
    /// Evaluate a checkpoint on one split of a dataset.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        /// train, seen or unseen.
        #[arg(long, default_value = "seen")]
        split: String,
        /// Common point count for the evaluation metrics.
        #[arg(long)]
        points: Option<usize>,
        /// Metrics CSV path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Reconstruct a point cloud from one PGM image.
    Reconstruct {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write S, every R'_m and U_m, and the learned patterns.
        #[arg(long)]
        dump_trace: bool,
    },
    /// Train and evaluate once per value of one hyperparameter.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// alpha, M, N or sampling_mode.
        #[arg(long)]
        parameter: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        values: Vec<String>,
        #[arg(long)]
        data: Option<PathBuf>,
        /// Sweep CSV path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Reconstruct along a straight line between two image features.
    Interpolate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        image_a: PathBuf,
        #[arg(long)]
        image_b: PathBuf,
        #[arg(long, default_value_t = 5)]
        steps: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

const RESOLVED: &str = "config.resolved";

fn resolve(common: &Common) -> Result<RunConfig, CliError> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    for kv in &common.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    Ok(cfg)
}

fn threads() -> Result<usize, CliError> {
    match std::env::var("PATMOD_THREADS") {
        Err(_) => Ok(1),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(CliError::Config(format!("PATMOD_THREADS must be a positive integer, got `{v}`"))),
        },
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn mkdir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| io_err(path, e))
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| io_err(path, e))
}

/// Refuses to overwrite `path` unless forced.
fn guard(path: &Path, force: bool) -> Result<(), CliError> {
    if path.exists() && !force {
        return Err(CliError::Io(format!("{} already exists (use --force to overwrite)", path.display())));
    }
    Ok(())
}

fn check_dataset(data: &Dataset, model: &ModelConfig) -> Result<(), CliError> {
    let want = [model.image_channels, model.image_size, model.image_size];
    let all = data.train.iter().chain(&data.test_seen).chain(&data.test_unseen);
    if let Some(s) = all.clone().find(|s| s.image.shape() != want) {
        return Err(CliError::Config(format!(
            "dataset image shape {:?} does not match the model input {:?}",
            s.image.shape(),
            want
        )));
    }
    Ok(())
}

fn load_model(path: &Path, common: &Common) -> Result<Model, CliError> {
    let model = Model::load_checkpoint(path)?;
    // An explicit configuration must describe the same network.
    if common.config.is_some() || !common.set.is_empty() {
        let cfg = resolve(common)?;
        if &cfg.model != model.config() {
            return Err(CliError::Config(format!(
                "checkpoint {} does not match the configuration\n  checkpoint: {}\n  config:     {}",
                path.display(),
                describe(model.config()),
                describe(&cfg.model)
            )));
        }
    }
    Ok(model)
}

fn describe(c: &ModelConfig) -> String {
    format!(
        "S={} F={} M={} N={} P={} H={} E={} image={}x{}x{} conv={:?} ablations={}",
        c.points,
        c.output_points,
        c.regions,
        c.patterns,
        c.pattern_points,
        c.image_feature,
        c.region_feature,
        c.image_channels,
        c.image_size,
        c.image_size,
        c.conv_channels,
        c.ablations.tag()
    )
}

fn load_image(path: &Path, model: &Model) -> Result<Tensor, CliError> {
    let img = read_image(path)?;
    let c = model.config();
    let want = [c.image_channels, c.image_size, c.image_size];
    if img.shape() != want {
        return Err(CliError::Config(format!(
            "image {} has shape {:?}, the model expects {:?}",
            path.display(),
            img.shape(),
            want
        )));
    }
    Ok(img)
}

fn write_both(dir: &Path, stem: &str, cloud: &PointCloud) -> Result<(), CliError> {
    write_cloud(&dir.join(format!("{stem}.xyz")), cloud, CloudFormat::XyzText)?;
    write_cloud(&dir.join(format!("{stem}.ply")), cloud, CloudFormat::PlyBinary)?;
    Ok(())
}

fn cmd_gen_data(common: &Common, out: Option<PathBuf>) -> Result<(), CliError> {
    let mut cfg = resolve(common)?;
    if let Some(o) = out {
        cfg.data_dir = o;
    }
    cfg.validate()?;
    guard(&cfg.data_dir, common.force)?;
    let data = make_dataset(&cfg.dataset_split())?;
    write_dataset(&cfg.data_dir, &data, common.force)?;
    write(&cfg.data_dir.join(RESOLVED), cfg.to_text())?;
    println!(
        "train {} test_seen {} test_unseen {} total {}",
        data.train.len(),
        data.test_seen.len(),
        data.test_unseen.len(),
        data.len()
    );
    Ok(())
}

struct TrainArgs {
    ablations: AblationFlags,
    data: Option<PathBuf>,
    out: Option<PathBuf>,
    epochs: Option<usize>,
    seed: Option<u64>,
    lr: Option<f64>,
    batch_size: Option<usize>,
    alpha: Option<f64>,
    max_steps: Option<usize>,
}

fn cmd_train(common: &Common, a: TrainArgs) -> Result<(), CliError> {
    let mut cfg = resolve(common)?;
    let ab = &mut cfg.model.ablations;
    ab.no_local |= a.ablations.no_local;
    ab.no_patterns |= a.ablations.no_patterns;
    ab.no_shift |= a.ablations.no_shift;
    ab.no_l_region |= a.ablations.no_l_region;
    ab.no_l_shape |= a.ablations.no_l_shape;
    let t = &mut cfg.train;
    t.epochs = a.epochs.unwrap_or(t.epochs);
    t.seed = a.seed.unwrap_or(t.seed);
    t.lr = a.lr.unwrap_or(t.lr);
    t.batch_size = a.batch_size.unwrap_or(t.batch_size);
    t.alpha = a.alpha.unwrap_or(t.alpha);
    t.max_steps = a.max_steps.or(t.max_steps);
    if let Some(d) = a.data {
        cfg.data_dir = d;
    }
    if let Some(o) = a.out {
        cfg.out_dir = o;
    }
    cfg.validate()?;

    let metrics_path = cfg.out_dir.join("metrics.csv");
    let ckpt = cfg.out_dir.join("checkpoint.bin");
    guard(&metrics_path, common.force)?;
    guard(&ckpt, common.force)?;
    let data = read_dataset(&cfg.data_dir, None)?;
    check_dataset(&data, &cfg.model)?;
    mkdir(&cfg.out_dir)?;
    write(&cfg.out_dir.join(RESOLVED), cfg.to_text())?;
    info!("model {}", describe(&cfg.model));

    let mut model = Model::new(cfg.model.clone(), cfg.train.seed)?;
    let mut tcfg = cfg.train.clone();
    tcfg.threads = threads()?;
    tcfg.checkpoint = Some(ckpt.clone());
    let evals: [(&str, &[Sample]); 2] = [("seen", &data.test_seen), ("unseen", &data.test_unseen)];
    let report = train(&mut model, &data.train, &evals, &tcfg, |_| true)?;
    write(&metrics_path, metrics_csv(&report.history))?;
    println!("trained {} steps over {} epochs; checkpoint {}", report.steps, report.epochs, ckpt.display());
    Ok(())
}

fn cmd_eval(
    common: &Common,
    checkpoint: &Path,
    data: Option<PathBuf>,
    split: &str,
    points: Option<usize>,
    out: Option<PathBuf>,
) -> Result<(), CliError> {
    let mut cfg = resolve(common)?;
    if let Some(d) = data {
        cfg.data_dir = d;
    }
    let kind: SplitKind = split.parse().map_err(CliError::Config)?;
    if points == Some(0) {
        return Err(CliError::Config("--points must be positive".into()));
    }
    let model = load_model(checkpoint, common)?;
    let out = out.unwrap_or_else(|| cfg.out_dir.join(format!("eval_{}.csv", kind.name())));
    guard(&out, common.force)?;
    let data = read_dataset(&cfg.data_dir, Some(kind))?;
    check_dataset(&data, model.config())?;
    let samples = data.split(kind);
    if samples.is_empty() {
        return Err(CliError::Config(format!("split {} of {} is empty", kind.name(), cfg.data_dir.display())));
    }
    let label = match kind {
        SplitKind::Train => "train",
        SplitKind::TestSeen => "seen",
        SplitKind::TestUnseen => "unseen",
    };
    let opts = EvalOptions { epoch: 0, alpha: cfg.train.alpha, points };
    let rows = evaluate_parallel(&model, samples, label, &opts, threads()?)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        mkdir(parent)?;
    }
    write(&out, metrics_csv(&rows))?;
    write(&out.with_extension("config"), cfg.to_text())?;
    for r in &rows {
        println!("{} {}: cd {:.6} iou {:.4}", r.split, r.class, r.cd_eval, r.iou);
    }
    Ok(())
}

fn cmd_reconstruct(common: &Common, checkpoint: &Path, image: &Path, out: &Path, dump: bool) -> Result<(), CliError> {
    let model = load_model(checkpoint, common)?;
    let img = load_image(image, &model)?;
    guard(&out.join("F.xyz"), common.force)?;
    mkdir(out)?;
    let f = model.predict(&img)?;
    write_both(out, "F", &f)?;
    if dump {
        let mut g = Graph::with_params(model.params());
        let trace = model.forward(&mut g, &img, SplitReference::Prediction, RowMode::Full)?;
        let cloud = |v| PointCloud::from_tensor(g.value(v));
        write_both(out, "S", &cloud(trace.s_cloud).map_err(|e| CliError::Config(e.to_string()))?)?;
        if let Some(local) = &trace.local {
            let r_prime = cloud(local.r_prime).map_err(|e| CliError::Config(e.to_string()))?;
            let u = cloud(local.u).map_err(|e| CliError::Config(e.to_string()))?;
            for (m, rows) in local.row_ranges.iter().enumerate() {
                let idx: Vec<usize> = rows.clone().collect();
                write_both(out, &format!("R_prime_{m}"), &r_prime.select(&idx))?;
                write_both(out, &format!("U_{m}"), &u.select(&idx))?;
            }
            for (n, &p) in local.patterns.iter().enumerate() {
                write_both(out, &format!("pattern_{n}"), &cloud(p).map_err(|e| CliError::Config(e.to_string()))?)?;
            }
        }
    }
    println!("wrote {} points to {}", f.len(), out.join("F.xyz").display());
    Ok(())
}

fn cmd_sweep(
    common: &Common,
    parameter: &str,
    values: &[String],
    data: Option<PathBuf>,
    out: Option<PathBuf>,
) -> Result<(), CliError> {
    let mut cfg = resolve(common)?;
    if let Some(d) = data {
        cfg.data_dir = d;
    }
    cfg.validate()?;
    let param: SweepParameter = parameter.parse().map_err(CliError::Config)?;
    if values.is_empty() {
        return Err(CliError::Config("--values is empty".into()));
    }
    let out = out.unwrap_or_else(|| cfg.out_dir.join(format!("sweep_{}.csv", param.name())));
    guard(&out, common.force)?;
    let dataset = read_dataset(&cfg.data_dir, None)?;
    check_dataset(&dataset, &cfg.model)?;
    let mut tcfg = cfg.train.clone();
    tcfg.threads = threads()?;
    let sd = SweepData { train: &dataset.train, seen: &dataset.test_seen, unseen: &dataset.test_unseen };
    let outcome = sweep(param, values, &cfg.model, &tcfg, &sd)?;
    for (v, reason) in &outcome.skipped {
        eprintln!("skipped {param}={v}: {reason}");
    }
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        mkdir(parent)?;
    }
    write(&out, sweep_csv(&outcome.rows))?;
    write(&out.with_extension("config"), cfg.to_text())?;
    println!("{} rows written to {}", outcome.rows.len(), out.display());
    Ok(())
}

fn cmd_interpolate(common: &Common, checkpoint: &Path, a: &Path, b: &Path, steps: usize, out: &Path) -> Result<(), CliError> {
    if steps < 2 {
        return Err(CliError::Config(format!("--steps must be at least 2, got {steps}")));
    }
    let model = load_model(checkpoint, common)?;
    let (ia, ib) = (load_image(a, &model)?, load_image(b, &model)?);
    mkdir(out)?;
    for (lambda, cloud) in interpolate_latent(&model, &ia, &ib, steps)? {
        let path = out.join(format!("lambda_{lambda:.4}.xyz"));
        guard(&path, common.force)?;
        write(&path, dio::xyz_bytes(&cloud))?;
    }
    println!("wrote {steps} reconstructions to {}", out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::GenData { common, out } => cmd_gen_data(&common, out),
        Command::Train { common, ablations, data, out, epochs, seed, lr, batch_size, alpha, max_steps } => cmd_train(
            &common,
            TrainArgs { ablations, data, out, epochs, seed, lr, batch_size, alpha, max_steps },
        ),
        Command::Eval { common, checkpoint, data, split, points, out } => {
            cmd_eval(&common, &checkpoint, data, &split, points, out)
        }
        Command::Reconstruct { common, checkpoint, image, out, dump_trace } => {
            cmd_reconstruct(&common, &checkpoint, &image, &out, dump_trace)
        }
        Command::Sweep { common, parameter, values, data, out } => cmd_sweep(&common, &parameter, &values, data, out),
        Command::Interpolate { common, checkpoint, image_a, image_b, steps, out } => {
            cmd_interpolate(&common, &checkpoint, &image_a, &image_b, steps, &out)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
