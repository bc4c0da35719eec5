//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime error. Errors are
//! printed as a single `masknet: error[usage]: ...` or
//! `masknet: error[runtime]: ...` line on stderr.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::data::{
    load_cloud, write_cloud, DatasetConfig, Dataset, PairSample,
};
use crate::eval::{run_sweep, Method, Models, SweepConfig, SweepKind};
use crate::geom::{apply_transform, PointCloud, RigidTransform};
use crate::masknet::{apply_mask, denoise, Architecture, MaskNetParams, DEFAULT_THRESHOLD};
use crate::register::{
    feature_lk, mask_then_register, FeatureLkConfig, FeatureLkRegistrar, IcpConfig, IcpRegistrar, Registrar,
};
use crate::train::{load_checkpoint, train_denoiser, train_masknet, NetKind, TrainConfig};

/// Environment variable naming the default checkpoint directory.
pub const CHECKPOINT_DIR_ENV: &str = "MASKNET_CHECKPOINT_DIR";
pub const DEFAULT_MASK_CHECKPOINT: &str = "masknet.ckpt";
pub const DEFAULT_DENOISER_CHECKPOINT: &str = "denoiser.ckpt";

#[derive(Debug, Parser)]
#[command(name = "masknet", version, about = "Learned inlier masks for partial point cloud registration")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic pair dataset (clouds plus manifest.csv).
    Gen(GenArgs),
    /// Train the template mask network.
    Train(TrainArgs),
    /// Train the outlier-removal network.
    TrainDenoiser(TrainArgs),
    /// Predict the template inlier mask for a source cloud.
    Mask(MaskArgs),
    /// Register a source cloud onto a template.
    Register(RegisterArgs),
    /// Remove outliers from a noisy cloud using a clean reference.
    Denoise(DenoiseArgs),
    /// Run an evaluation sweep and write CSV + JSON reports.
    Sweep(SweepArgs),
}

/// Dataset settings shared by gen, train and sweep. Precedence: built-in
/// defaults, then `--config`, then `--set`, then dedicated flags.
#[derive(Debug, Args, Clone, Default)]
pub struct DatasetArgs {
    /// Flat `key = value` dataset config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one dataset key (repeatable), e.g. `--set n_points=512`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Number of pairs.
    #[arg(long)]
    pub count: Option<usize>,
    /// Dataset seed.
    #[arg(long = "data-seed")]
    pub data_seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, ValueEnum, PartialEq, Eq)]
pub enum CloudFormat {
    Xyz,
    Ply,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[command(flatten)]
    pub data: DatasetArgs,
    /// Output directory (created if missing).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "xyz")]
    pub format: CloudFormat,
}

#[derive(Debug, Clone, Copy, ValueEnum, PartialEq, Eq)]
pub enum ArchChoice {
    /// Encoder (64,64,64,128,1024), head (1024,512,256,128,1).
    Full,
    /// Encoder (64,64,64,128,256), head (256,128,64,32,1).
    Desk,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DatasetArgs,
    /// Checkpoint output path [default: $MASKNET_CHECKPOINT_DIR or . joined
    /// with masknet.ckpt / denoiser.ckpt].
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 300)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub lr: f64,
    /// Initialization and shuffling seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "full")]
    pub arch: ArchChoice,
    /// Custom encoder widths (comma-separated); overrides --arch.
    #[arg(long, value_delimiter = ',')]
    pub encoder: Option<Vec<usize>>,
    /// Custom head widths (comma-separated, ending in 1); overrides --arch.
    #[arg(long, value_delimiter = ',')]
    pub head: Option<Vec<usize>>,
    /// Write an intermediate checkpoint every N epochs.
    #[arg(long, default_value_t = 10)]
    pub checkpoint_every: usize,
    /// Held-out pairs scored during training (0 = off).
    #[arg(long, default_value_t = 0)]
    pub validation: usize,
    #[arg(long, default_value_t = 10)]
    pub eval_every: usize,
    /// Text log (includes wall time).
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// CSV log (deterministic).
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Print per-epoch progress to stderr.
    #[arg(long)]
    pub verbose: bool,
}

#[derive(Debug, Args)]
pub struct MaskArgs {
    /// Mask checkpoint [default: $MASKNET_CHECKPOINT_DIR/masknet.ckpt].
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub template: PathBuf,
    #[arg(long)]
    pub source: PathBuf,
    /// Inclusion threshold in (0, 1).
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    pub threshold: f64,
    /// Masked template output (.xyz or .ply).
    #[arg(long)]
    pub out: PathBuf,
    /// Per-point probability sidecar [default: <out>.probs].
    #[arg(long)]
    pub probs: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum, PartialEq, Eq)]
pub enum Backend {
    Icp,
    Flk,
    MaskIcp,
    MaskFlk,
}

#[derive(Debug, Args)]
pub struct RegisterArgs {
    #[arg(long, value_enum)]
    pub backend: Backend,
    /// Mask checkpoint; required by mask-icp and mask-flk.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Checkpoint whose encoder drives flk [default: the mask checkpoint's
    /// encoder, else a fixed untrained encoder].
    #[arg(long)]
    pub lk_checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub template: PathBuf,
    #[arg(long)]
    pub source: PathBuf,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    pub threshold: f64,
    #[arg(long, default_value_t = 10)]
    pub max_iters: usize,
    /// Write the registered source here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DenoiseArgs {
    /// Denoiser checkpoint [default: $MASKNET_CHECKPOINT_DIR/denoiser.ckpt].
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Clean reference cloud.
    #[arg(long)]
    pub template: PathBuf,
    /// Noisy cloud to clean.
    #[arg(long)]
    pub source: PathBuf,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    pub threshold: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, PartialEq, Eq)]
pub enum KindArg {
    MissingFraction,
    Misalignment,
    Outliers,
    Noise,
}

#[derive(Debug, Clone, Copy, ValueEnum, PartialEq, Eq)]
pub enum MethodArg {
    Icp,
    Flk,
    MaskIcp,
    MaskFlk,
    MaskOnly,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long, value_enum)]
    pub kind: KindArg,
    #[command(flatten)]
    pub data: DatasetArgs,
    /// Mask checkpoint (needed by mask methods outside outlier sweeps).
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Denoiser checkpoint (used by mask methods on outlier sweeps).
    #[arg(long)]
    pub denoiser: Option<PathBuf>,
    #[arg(long)]
    pub lk_checkpoint: Option<PathBuf>,
    /// Comma-separated methods.
    #[arg(long, value_enum, value_delimiter = ',', default_value = "icp,flk")]
    pub methods: Vec<MethodArg>,
    /// Comma-separated grid [default: the kind's standard grid].
    #[arg(long, value_delimiter = ',')]
    pub grid: Option<Vec<f64>>,
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    pub threshold: f64,
    /// Record wall time (makes timing columns non-deterministic).
    #[arg(long)]
    pub timing: bool,
    /// CSV report path.
    #[arg(long)]
    pub out: PathBuf,
    /// JSON summary path [default: <out> with .json extension].
    #[arg(long)]
    pub json: Option<PathBuf>,
}

/// Either a usage problem (exit 1) or a failure while running (exit 2).
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "masknet: error[usage]: {m}"),
            CliError::Runtime(m) => write!(f, "masknet: error[runtime]: {m}"),
        }
    }
}

fn usage(m: impl Into<String>) -> CliError {
    CliError::Usage(m.into())
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{e}");
                    return 0;
                }
                _ => 1,
            };
            let first = e.to_string();
            let first = first.lines().next().unwrap_or("").trim_start_matches("error: ");
            let _ = writeln!(err, "masknet: error[usage]: {first}");
            let _ = write!(err, "{}", e.render());
            return code;
        }
    };
    match execute(cli.command, out, err) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "{e}");
            e.exit_code()
        }
    }
}

pub fn execute(cmd: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    match cmd {
        Command::Gen(a) => cmd_gen(&a, out),
        Command::Train(a) => cmd_train(&a, NetKind::Mask, err),
        Command::TrainDenoiser(a) => cmd_train(&a, NetKind::Denoise, err),
        Command::Mask(a) => cmd_mask(&a, out),
        Command::Register(a) => cmd_register(&a, out),
        Command::Denoise(a) => cmd_denoise(&a, out),
        Command::Sweep(a) => cmd_sweep(&a, out),
    }
}

fn check_threshold(t: f64) -> Result<(), CliError> {
    if t > 0.0 && t < 1.0 {
        Ok(())
    } else {
        Err(usage(format!("--threshold must lie strictly between 0 and 1, got {t}")))
    }
}

fn default_checkpoint(name: &str) -> PathBuf {
    match std::env::var_os(CHECKPOINT_DIR_ENV) {
        Some(dir) if !dir.is_empty() => PathBuf::from(dir).join(name),
        _ => PathBuf::from(name),
    }
}

/// Explicit flag, else the env-var directory; `None` when neither is set.
fn resolve_checkpoint(flag: &Option<PathBuf>, name: &str) -> Option<PathBuf> {
    flag.clone().or_else(|| {
        std::env::var_os(CHECKPOINT_DIR_ENV)
            .filter(|d| !d.is_empty())
            .map(|d| PathBuf::from(d).join(name))
    })
}

fn load_net(path: &Path, want: NetKind) -> Result<MaskNetParams, CliError> {
    let ck = load_checkpoint(path).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
    if ck.kind != want {
        return Err(runtime(format!(
            "{}: checkpoint holds a {} network, expected {want}",
            path.display(),
            ck.kind
        )));
    }
    Ok(ck.params)
}

fn read_cloud(path: &Path) -> Result<PointCloud, CliError> {
    load_cloud(path).map_err(runtime)
}

/// Builds the dataset config from defaults, `--config`, `--set`, flags.
pub fn dataset_config(a: &DatasetArgs, base: DatasetConfig) -> Result<DatasetConfig, CliError> {
    let mut cfg = match &a.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| usage(format!("{}: {e}", p.display())))?;
            let mut c = base;
            for (i, raw) in text.lines().enumerate() {
                let line = raw.split('#').next().unwrap_or("").trim();
                if line.is_empty() {
                    continue;
                }
                let (k, v) = line
                    .split_once('=')
                    .ok_or_else(|| usage(format!("{}:{}: expected key = value", p.display(), i + 1)))?;
                c.set(k.trim(), v.trim())
                    .map_err(|e| usage(format!("{}:{}: {e}", p.display(), i + 1)))?;
            }
            c
        }
        None => base,
    };
    for kv in &a.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| usage(format!("--set expects KEY=VALUE, got '{kv}'")))?;
        cfg.set(k.trim(), v.trim()).map_err(|e| usage(e.to_string()))?;
    }
    if let Some(c) = a.count {
        cfg.count = c;
    }
    if let Some(s) = a.data_seed {
        cfg.seed = s;
    }
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    Ok(cfg)
}

fn bits(mask: &[bool]) -> String {
    mask.iter().map(|&b| if b { '1' } else { '0' }).collect()
}

/// 12 numbers, rotation row-major then translation, 17 significant digits.
pub fn format_transform(t: &RigidTransform) -> String {
    t.to_row_major()
        .iter()
        .map(|v| format!("{v:.16e}"))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn parse_transform(line: &str) -> Result<RigidTransform, String> {
    let v: Vec<f64> = line
        .split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|e| format!("bad number '{t}': {e}")))
        .collect::<Result<_, _>>()?;
    let arr: [f64; 12] = v
        .try_into()
        .map_err(|v: Vec<f64>| format!("expected 12 numbers, got {}", v.len()))?;
    Ok(RigidTransform::from_row_major(&arr))
}

pub const MANIFEST_HEADER: &str = "index,category,template,source,gt_transform,gt_mask,source_mask";

fn cmd_gen(a: &GenArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = dataset_config(&a.data, DatasetConfig::default())?;
    let ds = Dataset::new(cfg.clone()).map_err(runtime)?;
    fs::create_dir_all(&a.out).map_err(runtime)?;
    let ext = match a.format {
        CloudFormat::Xyz => "xyz",
        CloudFormat::Ply => "ply",
    };
    let mut manifest = String::from(MANIFEST_HEADER);
    manifest.push('\n');
    for i in 0..cfg.count {
        let s = ds.sample(i).map_err(runtime)?;
        let t_name = format!("{i:06}_template.{ext}");
        let s_name = format!("{i:06}_source.{ext}");
        write_cloud(&s.template, &a.out.join(&t_name)).map_err(runtime)?;
        write_cloud(&s.source, &a.out.join(&s_name)).map_err(runtime)?;
        let _ = writeln!(
            manifest,
            "{i},{},{t_name},{s_name},{},{},{}",
            s.category,
            format_transform(&s.gt_transform),
            bits(&s.gt_mask),
            bits(&s.source_mask)
        );
    }
    fs::write(a.out.join("manifest.csv"), manifest).map_err(runtime)?;
    fs::write(a.out.join("dataset.cfg"), cfg.to_text()).map_err(runtime)?;
    let _ = writeln!(out, "wrote {} pairs to {}", cfg.count, a.out.display());
    Ok(())
}

/// Reads a directory written by `gen` back into samples.
pub fn load_generated(dir: &Path) -> Result<Vec<PairSample>, String> {
    let text = fs::read_to_string(dir.join("manifest.csv")).map_err(|e| e.to_string())?;
    let mut lines = text.lines();
    if lines.next() != Some(MANIFEST_HEADER) {
        return Err("unexpected manifest header".into());
    }
    let parse_bits = |s: &str| -> Vec<bool> { s.chars().map(|c| c == '1').collect() };
    lines
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 7 {
                return Err(format!("bad manifest row '{line}'"));
            }
            Ok(PairSample {
                template: load_cloud(&dir.join(f[2])).map_err(|e| e.to_string())?,
                source: load_cloud(&dir.join(f[3])).map_err(|e| e.to_string())?,
                gt_transform: parse_transform(f[4])?,
                gt_mask: parse_bits(f[5]),
                source_mask: parse_bits(f[6]),
                category: f[1].to_string(),
            })
        })
        .collect()
}

fn cmd_train(a: &TrainArgs, kind: NetKind, err: &mut dyn Write) -> Result<(), CliError> {
    let base = match kind {
        NetKind::Mask => DatasetConfig::default(),
        NetKind::Denoise => DatasetConfig {
            keep_fraction: 1.0,
            outlier_fraction: 0.1,
            ..DatasetConfig::default()
        },
    };
    let dataset = dataset_config(&a.data, base)?;
    let mut architecture = match a.arch {
        ArchChoice::Full => Architecture::full(),
        ArchChoice::Desk => Architecture::desk(),
    };
    if let Some(e) = &a.encoder {
        architecture.encoder = e.clone();
    }
    if let Some(h) = &a.head {
        architecture.head = h.clone();
    }
    let name = match kind {
        NetKind::Mask => DEFAULT_MASK_CHECKPOINT,
        NetKind::Denoise => DEFAULT_DENOISER_CHECKPOINT,
    };
    let checkpoint = a.out.clone().unwrap_or_else(|| default_checkpoint(name));
    let cfg = TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch_size,
        learning_rate: a.lr,
        seed: a.seed,
        dataset,
        architecture,
        checkpoint_path: Some(checkpoint.clone()),
        checkpoint_every: a.checkpoint_every,
        validation_count: a.validation,
        eval_every: a.eval_every,
        log_path: a.log.clone(),
        csv_path: a.csv.clone(),
        verbose: a.verbose,
    };
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    let trained = match kind {
        NetKind::Mask => train_masknet(&cfg),
        NetKind::Denoise => train_denoiser(&cfg),
    }
    .map_err(runtime)?;
    let _ = writeln!(
        err,
        "trained {kind} network for {} epochs (final loss {:.6}); checkpoint {}",
        trained.checkpoint.epoch,
        trained.checkpoint.running_loss,
        checkpoint.display()
    );
    Ok(())
}

fn probs_text(probs: &[f64]) -> String {
    let mut s = String::with_capacity(probs.len() * 20);
    for p in probs {
        let _ = writeln!(s, "{p}");
    }
    s
}

fn cmd_mask(a: &MaskArgs, out: &mut dyn Write) -> Result<(), CliError> {
    check_threshold(a.threshold)?;
    let path = resolve_checkpoint(&a.checkpoint, DEFAULT_MASK_CHECKPOINT)
        .ok_or_else(|| usage(format!("--checkpoint is required (or set {CHECKPOINT_DIR_ENV})")))?;
    let net = load_net(&path, NetKind::Mask)?;
    let template = read_cloud(&a.template)?;
    let source = read_cloud(&a.source)?;
    let mask = net.predict_mask(&template, &source).map_err(runtime)?;
    let binary = mask.binary(a.threshold).map_err(runtime)?;
    let kept = apply_mask(&binary, &template).map_err(runtime)?;
    write_cloud(&kept, &a.out).map_err(runtime)?;
    let probs_path = a.probs.clone().unwrap_or_else(|| {
        let mut p = a.out.clone().into_os_string();
        p.push(".probs");
        PathBuf::from(p)
    });
    fs::write(&probs_path, probs_text(&mask.probs)).map_err(runtime)?;
    let _ = writeln!(out, "kept {} of {} template points", kept.len(), template.len());
    Ok(())
}

fn lk_encoder_for(
    lk_checkpoint: &Option<PathBuf>,
    mask: Option<&MaskNetParams>,
) -> Result<crate::encoder::EncoderParams, CliError> {
    if let Some(p) = lk_checkpoint {
        let ck = load_checkpoint(p).map_err(|e| runtime(format!("{}: {e}", p.display())))?;
        return Ok(ck.params.encoder);
    }
    Ok(Models {
        mask: mask.cloned(),
        ..Models::default()
    }
    .lk_encoder())
}

fn cmd_register(a: &RegisterArgs, out: &mut dyn Write) -> Result<(), CliError> {
    check_threshold(a.threshold)?;
    if a.max_iters == 0 {
        return Err(usage("--max-iters must be at least 1"));
    }
    let needs_mask = matches!(a.backend, Backend::MaskIcp | Backend::MaskFlk);
    let mask_net = if needs_mask {
        let path = a
            .checkpoint
            .clone()
            .ok_or_else(|| usage("mask-icp and mask-flk need --checkpoint"))?;
        Some(load_net(&path, NetKind::Mask)?)
    } else {
        match &a.checkpoint {
            Some(p) => Some(load_net(p, NetKind::Mask)?),
            None => None,
        }
    };
    let template = read_cloud(&a.template)?;
    let source = read_cloud(&a.source)?;
    let icp = IcpRegistrar::new(IcpConfig {
        max_iters: a.max_iters,
        ..IcpConfig::default()
    });
    let lk_cfg = FeatureLkConfig {
        max_iters: a.max_iters,
        ..FeatureLkConfig::default()
    };
    let result = match a.backend {
        Backend::Icp => icp.register(&source, &template).map_err(runtime)?,
        Backend::Flk => {
            let enc = lk_encoder_for(&a.lk_checkpoint, mask_net.as_ref())?;
            feature_lk(&enc, &source, &template, &lk_cfg).map_err(runtime)?
        }
        Backend::MaskIcp | Backend::MaskFlk => {
            let net = mask_net.as_ref().expect("checked");
            let flk;
            let backend: &dyn Registrar = if a.backend == Backend::MaskFlk {
                flk = FeatureLkRegistrar::new(lk_encoder_for(&a.lk_checkpoint, Some(net))?, lk_cfg);
                &flk
            } else {
                &icp
            };
            mask_then_register(net, backend, &template, &source, a.threshold)
                .map_err(runtime)?
                .result
        }
    };
    let _ = writeln!(out, "{}", format_transform(&result.transform));
    if let Some(path) = &a.out {
        write_cloud(&apply_transform(&result.transform, &source), path).map_err(runtime)?;
    }
    Ok(())
}

fn cmd_denoise(a: &DenoiseArgs, out: &mut dyn Write) -> Result<(), CliError> {
    check_threshold(a.threshold)?;
    let path = resolve_checkpoint(&a.checkpoint, DEFAULT_DENOISER_CHECKPOINT)
        .ok_or_else(|| usage(format!("--checkpoint is required (or set {CHECKPOINT_DIR_ENV})")))?;
    let net = load_net(&path, NetKind::Denoise)?;
    let template = read_cloud(&a.template)?;
    let source = read_cloud(&a.source)?;
    let (clean, _) = denoise(&net, &template, &source, a.threshold).map_err(runtime)?;
    write_cloud(&clean, &a.out).map_err(runtime)?;
    let _ = writeln!(out, "kept {} of {} points", clean.len(), source.len());
    Ok(())
}

fn cmd_sweep(a: &SweepArgs, out: &mut dyn Write) -> Result<(), CliError> {
    check_threshold(a.threshold)?;
    let kind = match a.kind {
        KindArg::MissingFraction => SweepKind::MissingFraction,
        KindArg::Misalignment => SweepKind::Misalignment,
        KindArg::Outliers => SweepKind::Outliers,
        KindArg::Noise => SweepKind::Noise,
    };
    let methods: Vec<Method> = a
        .methods
        .iter()
        .map(|m| match m {
            MethodArg::Icp => Method::Icp,
            MethodArg::Flk => Method::FeatureLk,
            MethodArg::MaskIcp => Method::MaskIcp,
            MethodArg::MaskFlk => Method::MaskFeatureLk,
            MethodArg::MaskOnly => Method::MaskOnly,
        })
        .collect();
    let mask = match &a.checkpoint {
        Some(p) => Some(load_net(p, NetKind::Mask)?),
        None => None,
    };
    let denoiser = match &a.denoiser {
        Some(p) => Some(load_net(p, NetKind::Denoise)?),
        None => None,
    };
    if methods.iter().any(|m| m.uses_mask()) && mask.is_none() && denoiser.is_none() {
        return Err(usage("mask methods need --checkpoint (or --denoiser for outlier sweeps)"));
    }
    let lk_encoder = match &a.lk_checkpoint {
        Some(p) => Some(lk_encoder_for(&Some(p.clone()), None)?),
        None => None,
    };
    let mut cfg = SweepConfig::new(kind);
    cfg.base = dataset_config(&a.data, DatasetConfig::default())?;
    if let Some(g) = &a.grid {
        cfg.grid = g.clone();
    }
    cfg.trials = a.trials;
    cfg.methods = methods;
    cfg.seed = a.seed;
    cfg.threshold = a.threshold;
    cfg.timing = a.timing;
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    let models = Models {
        mask,
        denoiser,
        lk_encoder,
    };
    let report = run_sweep(&cfg, &models).map_err(runtime)?;
    fs::write(&a.out, report.to_csv()).map_err(runtime)?;
    let json = a.json.clone().unwrap_or_else(|| a.out.with_extension("json"));
    fs::write(&json, report.to_json()).map_err(runtime)?;
    let _ = writeln!(out, "wrote {} rows to {} and {}", report.rows.len(), a.out.display(), json.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_capture(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let mut full = vec!["masknet"];
        full.extend_from_slice(args);
        let code = run(full, &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn transform_format_round_trips() {
        let t = RigidTransform::from_axis_angle(&crate::geom::Vec3::new(0.3, -1.0, 0.2), 0.7);
        let line = format_transform(&t);
        assert_eq!(line.split_whitespace().count(), 12);
        assert_eq!(parse_transform(&line).unwrap(), t);
        assert!(parse_transform("1 2 3").is_err());
    }

    #[test]
    fn usage_errors_exit_one() {
        let (code, _, err) = run_capture(&["frobnicate"]);
        assert_eq!(code, 1);
        assert!(err.starts_with("masknet: error[usage]:"));
        let (code, _, _) = run_capture(&["register", "--backend", "icp", "--template", "a.xyz"]);
        assert_eq!(code, 1);
        let (code, _, err) = run_capture(&[
            "mask", "--checkpoint", "x", "--template", "a", "--source", "b", "--out", "c", "--threshold", "0",
        ]);
        assert_eq!(code, 1, "{err}");
        let (code, out, _) = run_capture(&["--help"]);
        assert_eq!(code, 0);
        assert!(out.contains("sweep"));
    }

    #[test]
    fn runtime_errors_exit_two() {
        let dir = tempfile::tempdir().unwrap();
        let missing = dir.path().join("none.xyz");
        let (code, _, err) = run_capture(&[
            "register",
            "--backend",
            "icp",
            "--template",
            missing.to_str().unwrap(),
            "--source",
            missing.to_str().unwrap(),
        ]);
        assert_eq!(code, 2);
        assert!(err.starts_with("masknet: error[runtime]:"));
    }

    #[test]
    fn dataset_flags_override_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let cfg_path = dir.path().join("d.cfg");
        fs::write(&cfg_path, "n_points = 300\ncount = 9\nseed = 4\n").unwrap();
        let args = DatasetArgs {
            config: Some(cfg_path),
            set: vec!["keep_fraction=0.5".into()],
            count: Some(3),
            data_seed: None,
        };
        let cfg = dataset_config(&args, DatasetConfig::default()).unwrap();
        assert_eq!((cfg.n_points, cfg.count, cfg.seed, cfg.keep_fraction), (300, 3, 4, 0.5));
        let bad = DatasetArgs {
            set: vec!["bogus=1".into()],
            ..DatasetArgs::default()
        };
        assert!(matches!(dataset_config(&bad, DatasetConfig::default()), Err(CliError::Usage(_))));
    }
}
