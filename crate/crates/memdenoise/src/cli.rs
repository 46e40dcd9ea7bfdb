//! `memdenoise` subcommands: train, fuse, eval, sweep, cost, classify.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use memdenoise_core::baselines::{FilterKind, FilterSpec};
use memdenoise_core::classify::{train_classifier, DEFAULT_HIDDEN};
use memdenoise_core::cnn::{self, CnnShape};
use memdenoise_core::crossbar::ProgramOptions;
use memdenoise_core::dense::{self, DenseDenoiser};
use memdenoise_core::device::{DeviceModel, Levels};
use memdenoise_core::fusion;
use memdenoise_core::hwcost::{self, ComponentBudget, DesignPoint, NetworkKind, Phase, Readout};
use memdenoise_core::noise::NoiseSpec;
use memdenoise_core::rng::child_seed;
use memdenoise_core::train::TrainConfig;
use memdenoise_core::{Dataset, Denoiser, Split};
use serde::Serialize;

use crate::checkpoint::{Checkpoint, Deployed, Model};
use crate::config::{ExperimentConfig, Network};
use crate::data::{self, DatasetKind};
use crate::drivers::{self, SharedDenoiser};
use crate::report::{self, AccuracyRow, Provenance, QualityRow, SweepRow, TrainLogRow};
use crate::{pnm, Error, Result};

#[derive(Debug, Parser)]
#[command(name = "memdenoise", version, about = "Memristive crossbar image denoising simulator")]
pub struct Cli {
    /// TOML experiment configuration; flags override its fields.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Dataset root (defaults to $MEMDENOISE_DATA, then ./data).
    #[arg(long, global = true)]
    pub data: Option<PathBuf>,
    #[arg(long, global = true)]
    pub dataset: Option<DatasetKind>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Test images used per noise.
    #[arg(long, global = true)]
    pub limit: Option<usize>,
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// Worker threads (results do not depend on this).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a denoiser and write a checkpoint plus its loss log.
    Train(TrainArgs),
    /// Train the fusion kernel over member checkpoints.
    Fuse(FuseArgs),
    /// Score noisy, denoised and filtered images.
    Eval(EvalArgs),
    /// Sweep device levels, variation, dropout and pruning.
    Sweep(SweepArgs),
    /// Hardware energy / area / latency estimates.
    Cost(CostArgs),
    /// Classification accuracy on clean, noisy and denoised images.
    Classify(ClassifyArgs),
}

#[derive(Debug, Clone, Args, Default)]
pub struct DeviceArgs {
    /// Conductance levels: `ideal` or a count >= 2.
    #[arg(long)]
    pub levels: Option<String>,
    /// Programming variation, as a fraction of the conductance range.
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub prune: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[arg(long, value_enum)]
    pub net: Option<Network>,
    /// Training corruption, e.g. `gaussian:0.1`, `sp:0.25`.
    #[arg(long)]
    pub noise: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Samples per epoch.
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
    /// Use only the first N training images.
    #[arg(long)]
    pub train_limit: Option<usize>,
    /// Re-program the weights through the device model after every epoch.
    #[arg(long)]
    pub device_in_loop: bool,
    /// Member checkpoints (fusion only).
    #[arg(long, num_args = 1..)]
    pub members: Vec<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub device: DeviceArgs,
}

#[derive(Debug, Clone, Args)]
pub struct FuseArgs {
    #[arg(long, num_args = 1.., required = true)]
    pub members: Vec<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub train_limit: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long, num_args = 1..)]
    pub noise: Vec<String>,
    /// Trained denoisers to score.
    #[arg(long, num_args = 1..)]
    pub checkpoint: Vec<PathBuf>,
    /// `none` (noisy input), `tune` (grid-tuned classical filters) or a
    /// filter such as `median:3`, `gauss:0.8`, `tv:0.1:50`.
    #[arg(long, num_args = 1..)]
    pub denoiser: Vec<String>,
    /// Also write the first N images of every row as PGM/PPM.
    #[arg(long)]
    pub dump: Option<usize>,
    #[command(flatten)]
    pub device: DeviceArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[arg(long, required = true)]
    pub checkpoint: PathBuf,
    /// Evaluation noise (defaults to the checkpoint's training noise).
    #[arg(long)]
    pub noise: Option<String>,
    #[arg(long, value_delimiter = ',')]
    pub levels: Vec<String>,
    #[arg(long, value_delimiter = ',')]
    pub sigma: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    pub dropout: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    pub prune: Vec<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct CostArgs {
    #[arg(long, value_delimiter = ',')]
    pub net: Vec<NetworkKind>,
    #[arg(long, value_delimiter = ',')]
    pub mode: Vec<Readout>,
    #[arg(long, value_delimiter = ',')]
    pub phase: Vec<Phase>,
    #[arg(long)]
    pub height: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub kernels: Option<usize>,
    /// TOML or JSON file overriding budget constants (SI units).
    #[arg(long)]
    pub budget: Option<PathBuf>,
    /// Print JSON instead of the text table.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Clone, Args)]
pub struct ClassifyArgs {
    #[arg(long, num_args = 1..)]
    pub noise: Vec<String>,
    #[arg(long, num_args = 1..)]
    pub checkpoint: Vec<PathBuf>,
    /// Classical filters to compare, e.g. `median:3`.
    #[arg(long, num_args = 1..)]
    pub filter: Vec<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub train_limit: Option<usize>,
    #[command(flatten)]
    pub device: DeviceArgs,
}

/// Parse arguments and run; `--help`/`--version` print and succeed.
pub fn run<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return Ok(());
        }
        Err(e) => return Err(Error::Usage(e.render().to_string())),
    };
    match cli.threads {
        Some(n) if n > 0 => drivers::with_threads(n, || dispatch(&cli)),
        Some(_) => Err(Error::Config("--threads must be at least 1".into())),
        None => dispatch(&cli),
    }
}

fn dispatch(cli: &Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if cli.data.is_some() {
        cfg.data_dir = cli.data.clone();
    }
    if let Some(d) = cli.dataset {
        cfg.dataset = d;
    }
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    if cli.limit.is_some() {
        cfg.limit = cli.limit;
    }
    if let Some(o) = &cli.out_dir {
        cfg.out_dir = o.clone();
    }
    match &cli.command {
        Command::Train(a) => cmd_train(cfg, a),
        Command::Fuse(a) => cmd_fuse(cfg, a),
        Command::Eval(a) => cmd_eval(cfg, a),
        Command::Sweep(a) => cmd_sweep(cfg, a),
        Command::Cost(a) => cmd_cost(cfg, a),
        Command::Classify(a) => cmd_classify(cfg, a),
    }
}

fn apply_device(cfg: &mut ExperimentConfig, d: &DeviceArgs) {
    if let Some(l) = &d.levels {
        cfg.device.levels = l.clone();
    }
    if let Some(s) = d.sigma {
        cfg.device.sigma = s;
    }
    if let Some(v) = d.dropout {
        cfg.sparsity.dropout = v;
    }
    if let Some(v) = d.prune {
        cfg.sparsity.prune = v;
    }
}

fn load_split(cfg: &ExperimentConfig, split: Split, limit: Option<usize>) -> Result<Dataset> {
    let d = data::load(cfg.dataset, &cfg.dataset_dir(), split)?;
    Ok(match limit {
        Some(n) => d.take(n),
        None => d,
    })
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(Error::io(dir))?;
    }
    fs::write(path, bytes).map_err(Error::io(path))
}

fn cmd_train(mut cfg: ExperimentConfig, a: &TrainArgs) -> Result<()> {
    if let Some(n) = a.net {
        cfg.network = n;
    }
    if cfg.network == Network::Fusion {
        let fuse = FuseArgs {
            members: a.members.clone(),
            epochs: a.epochs,
            samples: a.samples,
            train_limit: a.train_limit,
            out: a.out.clone(),
        };
        return cmd_fuse(cfg, &fuse);
    }
    if let Some(n) = &a.noise {
        cfg.noise = vec![n.clone()];
    }
    apply_device(&mut cfg, &a.device);
    let t = &mut cfg.train;
    t.epochs = a.epochs.or(t.epochs);
    t.samples = a.samples.or(t.samples);
    t.learning_rate = a.lr.or(t.learning_rate);
    t.batch = a.batch.or(t.batch);
    t.limit = a.train_limit.or(t.limit);
    cfg.validate(&[Split::Train])?;
    let specs = cfg.noise_specs()?;
    let [noise] = specs.as_slice() else {
        return Err(Error::Config("train needs exactly one --noise".into()));
    };
    let mut tc = cfg.train_config(cfg.network, *noise)?;
    tc.device_in_loop = a.device_in_loop;
    let hash = cfg.hash(&format!("train device_in_loop={}", a.device_in_loop));
    let seed = cfg.seed()?;
    let train = load_split(&cfg, Split::Train, cfg.train.limit)?;
    let (model, log) = match cfg.network {
        Network::Dense => {
            let t = dense::train(&tc, &train)?;
            (Model::Dense(t.net), t.log)
        }
        Network::Cnn => {
            let t = cnn::train(&tc, &train, CnnShape::default())?;
            (Model::Cnn(t.net), t.log)
        }
        Network::Fusion => unreachable!("handled above"),
    };
    let ck = Checkpoint {
        model,
        seed,
        device: tc.device,
        program: tc.program,
        train: Some(tc),
        epoch_rmse: log.epoch_rmse.clone(),
    };
    let stem = format!("{}-{}", ck.model.kind(), noise.slug());
    let out = a.out.clone().unwrap_or_else(|| cfg.out_dir.join(format!("{stem}.ckpt")));
    write_file(&out, &ck.to_bytes()?)?;
    let rows: Vec<TrainLogRow> = log
        .epoch_rmse
        .iter()
        .enumerate()
        .map(|(epoch, &rmse)| TrainLogRow {
            config_hash: hash.clone(),
            seed,
            epoch,
            rmse,
        })
        .collect();
    let log_path = out.with_extension("log.csv");
    write_file(&log_path, &report::to_csv(&rows)?)?;
    for r in &rows {
        println!("epoch {} rmse {:.6}", r.epoch, r.rmse);
    }
    println!("wrote {} and {}", out.display(), log_path.display());
    Ok(())
}

fn cmd_fuse(mut cfg: ExperimentConfig, a: &FuseArgs) -> Result<()> {
    let wanted = NoiseSpec::standard_set().len();
    if a.members.len() != wanted {
        return Err(Error::Dependency(format!(
            "fusion needs {wanted} trained dense member checkpoints (--members), got {}",
            a.members.len()
        )));
    }
    cfg.network = Network::Fusion;
    cfg.train.epochs = a.epochs.or(cfg.train.epochs);
    cfg.train.samples = a.samples.or(cfg.train.samples);
    cfg.train.limit = a.train_limit.or(cfg.train.limit);
    cfg.validate(&[Split::Train])?;
    let mut members = Vec::new();
    for p in &a.members {
        let ck = Checkpoint::load(p).map_err(|e| Error::Dependency(format!("member {}: {e}", p.display())))?;
        let (Model::Dense(net), Some(t)) = (ck.model, ck.train) else {
            return Err(Error::Dependency(format!(
                "member {} is not a trained dense checkpoint",
                p.display()
            )));
        };
        members.push((t.train_noise, net));
    }
    let seed = cfg.seed()?;
    let tc = cfg.train_config(Network::Fusion, NoiseSpec::gaussian(0.1))?;
    let specs: Vec<NoiseSpec> = members.iter().map(|m| m.0).collect();
    let deployed = members
        .iter()
        .enumerate()
        .map(|(i, (_, n))| n.deploy(&tc.device, tc.program, child_seed(seed, i as u64 + 1)))
        .collect::<memdenoise_core::Result<Vec<DenseDenoiser>>>()?;
    let train = load_split(&cfg, Split::Train, cfg.train.limit)?;
    let t = fusion::train(&tc, &deployed, &specs, &train)?;
    let hash = cfg.hash("fuse");
    let ck = Checkpoint {
        model: Model::Fusion {
            members,
            kernel: t.net,
        },
        seed,
        device: tc.device,
        program: tc.program,
        train: Some(tc),
        epoch_rmse: t.log.epoch_rmse.clone(),
    };
    let out = a.out.clone().unwrap_or_else(|| cfg.out_dir.join("fusion.ckpt"));
    write_file(&out, &ck.to_bytes()?)?;
    let rows: Vec<TrainLogRow> = t
        .log
        .epoch_rmse
        .iter()
        .enumerate()
        .map(|(epoch, &rmse)| TrainLogRow {
            config_hash: hash.clone(),
            seed,
            epoch,
            rmse,
        })
        .collect();
    let log_path = out.with_extension("log.csv");
    write_file(&log_path, &report::to_csv(&rows)?)?;
    println!("wrote {} and {}", out.display(), log_path.display());
    Ok(())
}

/// A checkpoint deployed under the configured device and sparsity.
fn deploy_checkpoint(cfg: &ExperimentConfig, path: &Path) -> Result<(String, Deployed)> {
    let ck = Checkpoint::load(path)?;
    let seed = cfg.seed()?;
    let dev = cfg.device_model()?;
    let mut deployed = ck.model.deploy(&dev, ProgramOptions::default(), seed)?;
    let (dropout, prune) = (cfg.sparsity.dropout, cfg.sparsity.prune);
    if dropout > 0.0 || prune > 0.0 {
        let Deployed::Dense(d) = deployed else {
            return Err(Error::Config("dropout/pruning apply to dense checkpoints only".into()));
        };
        deployed = Deployed::Dense(d.with_sparsity(dropout, prune, child_seed(seed, 0x5A))?);
    }
    let name = path
        .file_stem()
        .map_or_else(|| ck.model.kind().to_string(), |s| s.to_string_lossy().into_owned());
    Ok((name, deployed))
}

fn dump_images(dir: &Path, data: &Dataset, noise: &NoiseSpec, method: &str, den: Option<SharedDenoiser<'_>>, seed: u64, n: usize) -> Result<()> {
    fs::create_dir_all(dir).map_err(Error::io(dir))?;
    let ext = if data.shape().is_some_and(|s| s.channels == 3) {
        "ppm"
    } else {
        "pgm"
    };
    let method_slug = method
        .split(|c: char| !(c.is_ascii_alphanumeric() || c == '.'))
        .filter(|p| !p.is_empty())
        .collect::<Vec<_>>()
        .join("-");
    for (i, img) in data.images().iter().take(n).enumerate() {
        let noisy = noise.corrupt_indexed(img, seed, i as u64);
        let out = match den {
            Some(d) => d.denoise(&noisy)?,
            None => noisy,
        };
        pnm::write_image(img, &dir.join(format!("{i:04}-clean.{ext}")))?;
        pnm::write_image(&out, &dir.join(format!("{i:04}-{}-{method_slug}.{ext}", noise.slug())))?;
    }
    Ok(())
}

fn cmd_eval(mut cfg: ExperimentConfig, a: &EvalArgs) -> Result<()> {
    if !a.noise.is_empty() {
        cfg.noise = a.noise.clone();
    }
    apply_device(&mut cfg, &a.device);
    cfg.validate(&[Split::Test])?;
    let mut filters = Vec::new();
    let mut with_noisy = a.denoiser.is_empty() && a.checkpoint.is_empty();
    let mut tune = false;
    for d in &a.denoiser {
        match d.as_str() {
            "none" => with_noisy = true,
            "tune" => tune = true,
            other => filters.push(other.parse::<FilterSpec>()?),
        }
    }
    for p in &a.checkpoint {
        if !p.is_file() {
            return Err(Error::Config(format!("checkpoint {} not found", p.display())));
        }
    }
    let seed = cfg.seed()?;
    let hash = cfg.hash(&format!("eval {:?} {:?}", a.denoiser, a.checkpoint));
    let prov = Provenance {
        config_hash: &hash,
        seed,
    };
    let nets = a
        .checkpoint
        .iter()
        .map(|p| deploy_checkpoint(&cfg, p))
        .collect::<Result<Vec<_>>>()?;
    let test = load_split(&cfg, Split::Test, Some(cfg.limit.unwrap_or(1000)))?;
    let eval_seed = child_seed(seed, 0xE7A1);
    let mut rows = Vec::new();
    for noise in cfg.noise_specs()? {
        let mut methods: Vec<(String, Option<Box<dyn Denoiser + Sync + '_>>)> = Vec::new();
        if with_noisy {
            methods.push(("noisy".into(), None));
        }
        for (name, d) in &nets {
            methods.push((name.clone(), Some(Box::new(d))));
        }
        for f in &filters {
            methods.push((format!("{} ({f})", f.kind().name()), Some(Box::new(*f))));
        }
        if tune {
            for kind in FilterKind::ALL {
                let (best, _) = drivers::tune_filter(kind, &test, &noise, eval_seed)?;
                methods.push((format!("{} ({best})", kind.name()), Some(Box::new(best))));
            }
        }
        for (method, den) in &methods {
            let den = den.as_deref().map(|d| d as SharedDenoiser<'_>);
            let r = drivers::quality(&test, &noise, method, den, eval_seed)?;
            rows.push(QualityRow::new(prov, &r));
            if let Some(n) = a.dump {
                dump_images(&cfg.out_dir.join("images"), &test, &noise, method, den, eval_seed, n)?;
            }
        }
    }
    report::write_rows(&cfg.out_dir, "eval", &rows)?;
    print!("{}", report::quality_table(&rows));
    Ok(())
}

fn cmd_sweep(mut cfg: ExperimentConfig, a: &SweepArgs) -> Result<()> {
    if !a.checkpoint.is_file() {
        return Err(Error::Config(format!("checkpoint {} not found", a.checkpoint.display())));
    }
    let ck = Checkpoint::load(&a.checkpoint)?;
    let noise = match (&a.noise, &ck.train) {
        (Some(n), _) => n.parse::<NoiseSpec>()?,
        (None, Some(t)) => t.train_noise,
        (None, None) => return Err(Error::Config("sweep needs --noise".into())),
    };
    cfg.noise = vec![noise.to_string()];
    cfg.validate(&[Split::Test])?;
    let defaults = a.levels.is_empty() && a.sigma.is_empty() && a.dropout.is_empty() && a.prune.is_empty();
    let levels: Vec<Levels> = if defaults {
        [256, 128, 64, 16, 2].iter().map(|&l| Levels::Finite(l)).collect()
    } else {
        a.levels.iter().map(|l| l.parse()).collect::<memdenoise_core::Result<_>>()?
    };
    let sigmas = if defaults { vec![0.01, 0.025, 0.05] } else { a.sigma.clone() };
    let dropouts = if defaults { vec![0.1, 0.2, 0.3] } else { a.dropout.clone() };
    let prunes = if defaults { vec![0.1, 0.2, 0.3] } else { a.prune.clone() };
    if (!dropouts.is_empty() || !prunes.is_empty()) && !matches!(ck.model, Model::Dense(_)) {
        return Err(Error::Config("dropout/pruning sweeps need a dense checkpoint".into()));
    }
    let seed = cfg.seed()?;
    let hash = cfg.hash(&format!("sweep {levels:?} {sigmas:?} {dropouts:?} {prunes:?}"));
    let prov = Provenance {
        config_hash: &hash,
        seed,
    };
    let test = load_split(&cfg, Split::Test, Some(cfg.limit.unwrap_or(1000)))?;
    let eval_seed = child_seed(seed, 0xE7A1);
    let opts = ProgramOptions::default();
    let base = cfg.device_model()?;
    let mut rows = Vec::new();
    let mut score = |param: &str, value: String, d: &Deployed| -> Result<()> {
        let r = drivers::quality(&test, &noise, param, Some(d), eval_seed)?;
        rows.push(SweepRow::new(prov, param, value, &r));
        Ok(())
    };
    let ideal = ck.model.deploy(&base, opts, seed)?;
    score("ideal", "-".into(), &ideal)?;
    for l in &levels {
        score("levels", l.to_string(), &ck.model.deploy(&DeviceModel::new(*l, base.variation_sigma)?, opts, seed)?)?;
    }
    for &s in &sigmas {
        score("sigma", s.to_string(), &ck.model.deploy(&DeviceModel::new(base.levels, s)?, opts, seed)?)?;
    }
    if let Deployed::Dense(d) = &ideal {
        for &f in &dropouts {
            let masked = d.with_sparsity(f, 0.0, child_seed(seed, 0x5A))?;
            score("dropout", f.to_string(), &Deployed::Dense(masked))?;
        }
        for &f in &prunes {
            let masked = d.with_sparsity(0.0, f, child_seed(seed, 0x5A))?;
            score("prune", f.to_string(), &Deployed::Dense(masked))?;
        }
    }
    report::write_rows(&cfg.out_dir, "sweep", &rows)?;
    print!("{}", report::sweep_table(&rows));
    Ok(())
}

#[derive(Debug, Serialize)]
struct CostOutput<'a> {
    config_hash: String,
    seed: Option<u64>,
    budget: &'a ComponentBudget,
    reports: &'a [hwcost::HardwareCostReport],
}

pub fn load_budget(path: &Path) -> Result<ComponentBudget> {
    let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let budget: ComponentBudget = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
    } else {
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
    };
    budget.validate()?;
    Ok(budget)
}

fn cmd_cost(cfg: ExperimentConfig, a: &CostArgs) -> Result<()> {
    let budget = match &a.budget {
        Some(p) => load_budget(p)?,
        None => ComponentBudget::default(),
    };
    let (dh, dw) = match cfg.dataset {
        DatasetKind::Mnist => (28, 28),
        DatasetKind::Cifar10 => (32, 32),
    };
    let (h, w) = (a.height.unwrap_or(dh), a.width.unwrap_or(dw));
    if h == 0 || w == 0 {
        return Err(Error::Config("image size must be positive".into()));
    }
    let nets = if a.net.is_empty() { vec![NetworkKind::Dense, NetworkKind::Cnn] } else { a.net.clone() };
    let modes = if a.mode.is_empty() { vec![Readout::Sequential, Readout::Parallel] } else { a.mode.clone() };
    let phases = if a.phase.is_empty() { vec![Phase::Inference, Phase::Training] } else { a.phase.clone() };
    let shape = CnnShape {
        kernels: a.kernels.unwrap_or(CnnShape::default().kernels),
        ..CnnShape::default()
    };
    let mut reports = Vec::new();
    for &phase in &phases {
        for &net in &nets {
            for &mode in &modes {
                let point = match net {
                    NetworkKind::Dense => DesignPoint::dense(h, w, mode, phase),
                    NetworkKind::Cnn => DesignPoint::cnn(shape, h, w, mode, phase),
                };
                reports.push(hwcost::estimate(&point, &budget)?);
            }
        }
    }
    let out = CostOutput {
        config_hash: cfg.hash(&format!("cost {h}x{w} {shape:?} {budget:?}")),
        seed: cfg.seed,
        budget: &budget,
        reports: &reports,
    };
    let json = report::to_json(&out)?;
    write_file(&cfg.out_dir.join("cost.json"), &json)?;
    let table = report::cost_table(&reports);
    write_file(&cfg.out_dir.join("cost.txt"), table.as_bytes())?;
    if a.json {
        print!("{}", String::from_utf8_lossy(&json));
    } else {
        print!("{table}");
    }
    Ok(())
}

fn cmd_classify(mut cfg: ExperimentConfig, a: &ClassifyArgs) -> Result<()> {
    if !a.noise.is_empty() {
        cfg.noise = a.noise.clone();
    }
    apply_device(&mut cfg, &a.device);
    cfg.train.epochs = a.epochs.or(cfg.train.epochs);
    cfg.train.limit = a.train_limit.or(cfg.train.limit);
    cfg.validate(&[Split::Train, Split::Test])?;
    for p in &a.checkpoint {
        if !p.is_file() {
            return Err(Error::Config(format!("checkpoint {} not found", p.display())));
        }
    }
    let filters = a
        .filter
        .iter()
        .map(|f| f.parse::<FilterSpec>())
        .collect::<memdenoise_core::Result<Vec<_>>>()?;
    let seed = cfg.seed()?;
    let hash = cfg.hash(&format!("classify {:?} {:?} {:?}", a.checkpoint, a.filter, a.hidden));
    let prov = Provenance {
        config_hash: &hash,
        seed,
    };
    let nets = a
        .checkpoint
        .iter()
        .map(|p| deploy_checkpoint(&cfg, p))
        .collect::<Result<Vec<_>>>()?;
    let mut tc = TrainConfig::classifier(seed);
    if let Some(e) = cfg.train.epochs {
        tc.epochs = e;
    }
    let train = load_split(&cfg, Split::Train, cfg.train.limit)?;
    let clf = train_classifier(&train, &tc, a.hidden.unwrap_or(DEFAULT_HIDDEN))?.classifier;
    let test = load_split(&cfg, Split::Test, cfg.limit)?;
    let eval_seed = child_seed(seed, 0xE7A1);
    let mut rows = vec![AccuracyRow::new(prov, &drivers::accuracy(&clf, &test, None, None, eval_seed)?)];
    for noise in cfg.noise_specs()? {
        rows.push(AccuracyRow::new(prov, &drivers::accuracy(&clf, &test, None, Some(&noise), eval_seed)?));
        for (name, d) in &nets {
            let r = drivers::accuracy(&clf, &test, Some((name.as_str(), d)), Some(&noise), eval_seed)?;
            rows.push(AccuracyRow::new(prov, &r));
        }
        for f in &filters {
            let name = f.to_string();
            let r = drivers::accuracy(&clf, &test, Some((name.as_str(), f)), Some(&noise), eval_seed)?;
            rows.push(AccuracyRow::new(prov, &r));
        }
    }
    report::write_rows(&cfg.out_dir, "classify", &rows)?;
    print!("{}", report::accuracy_table(&rows));
    Ok(())
}
