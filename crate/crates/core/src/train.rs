//! Mask training loop and the on-disk checkpoint format.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::data::{DataError, Dataset, DatasetConfig, PairSample};
use crate::geom::PointCloud;
use crate::masknet::{Architecture, MaskError, MaskNetParams};
use crate::nn::{AdamConfig, DenseLayer, ParamTape};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("length mismatch: prediction has {pred} entries, ground truth {gt}")]
    LengthMismatch { pred: usize, gt: usize },
    #[error("non-finite loss at epoch {epoch}, step {step} (sample {sample}, loss {loss})")]
    NonFiniteLoss {
        epoch: usize,
        step: usize,
        sample: usize,
        loss: f64,
    },
    #[error("invalid training config: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Mask(#[from] MaskError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

/// Mean squared error `(1/N) sum_i (pred_i - gt_i)^2`.
pub fn mask_loss(pred: &[f64], gt: &[bool]) -> Result<f64, TrainError> {
    if pred.len() != gt.len() {
        return Err(TrainError::LengthMismatch {
            pred: pred.len(),
            gt: gt.len(),
        });
    }
    if pred.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = pred
        .iter()
        .zip(gt)
        .map(|(&p, &g)| (p - g as u8 as f64).powi(2))
        .sum();
    Ok(sum / pred.len() as f64)
}

/// `d loss / d pred_i = 2 (pred_i - gt_i) / N`.
pub fn mask_loss_grad(pred: &[f64], gt: &[bool]) -> Result<Vec<f64>, TrainError> {
    if pred.len() != gt.len() {
        return Err(TrainError::LengthMismatch {
            pred: pred.len(),
            gt: gt.len(),
        });
    }
    let n = pred.len() as f64;
    Ok(pred
        .iter()
        .zip(gt)
        .map(|(&p, &g)| 2.0 * (p - g as u8 as f64) / n)
        .collect())
}

/// Which cloud the mask runs over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NetKind {
    /// Mask over the template, conditioned on the partial source.
    Mask,
    /// Mask over the noisy source, conditioned on the clean template.
    Denoise,
}

impl NetKind {
    fn code(self) -> u8 {
        match self {
            NetKind::Mask => 0,
            NetKind::Denoise => 1,
        }
    }

    fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(NetKind::Mask),
            1 => Some(NetKind::Denoise),
            _ => None,
        }
    }

    /// `(per-point cloud, conditioning cloud, target)` for one sample.
    pub fn wiring<'a>(self, s: &'a PairSample) -> (&'a PointCloud, &'a PointCloud, &'a [bool]) {
        match self {
            NetKind::Mask => (&s.template, &s.source, &s.gt_mask),
            NetKind::Denoise => (&s.source, &s.template, &s.source_mask),
        }
    }
}

impl std::str::FromStr for NetKind {
    type Err = TrainError;
    fn from_str(s: &str) -> Result<Self, TrainError> {
        match s {
            "mask" => Ok(NetKind::Mask),
            "denoise" => Ok(NetKind::Denoise),
            other => Err(TrainError::Config(format!("unknown network kind '{other}'"))),
        }
    }
}

impl std::fmt::Display for NetKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            NetKind::Mask => "mask",
            NetKind::Denoise => "denoise",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub dataset: DatasetConfig,
    pub architecture: Architecture,
    /// Written every `checkpoint_every` epochs and at the end.
    pub checkpoint_path: Option<PathBuf>,
    pub checkpoint_every: usize,
    /// Held-out pairs (dataset seed + 1) scored every `eval_every` epochs;
    /// 0 disables validation.
    pub validation_count: usize,
    pub eval_every: usize,
    /// Text log with wall time.
    pub log_path: Option<PathBuf>,
    /// Per-epoch CSV (no timing columns, so reruns are byte-identical).
    pub csv_path: Option<PathBuf>,
    pub verbose: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 300,
            batch_size: 32,
            learning_rate: 1e-4,
            seed: 0,
            dataset: DatasetConfig::default(),
            architecture: Architecture::full(),
            checkpoint_path: None,
            checkpoint_every: 10,
            validation_count: 0,
            eval_every: 10,
            log_path: None,
            csv_path: None,
            verbose: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.into()));
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.checkpoint_every == 0 || self.eval_every == 0 {
            return bad("checkpoint_every and eval_every must be at least 1");
        }
        self.architecture.validate()?;
        self.dataset.validate()?;
        Ok(())
    }
}

/// Serializable ChaCha position.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        Self {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub kind: NetKind,
    pub params: MaskNetParams,
    pub epoch: u64,
    pub running_loss: f64,
    pub rng: RngState,
}

impl Checkpoint {
    /// Wraps parameters that did not come out of a training run.
    pub fn untrained(kind: NetKind, params: MaskNetParams) -> Self {
        Self {
            kind,
            params,
            epoch: 0,
            running_loss: f64::NAN,
            rng: RngState::capture(&ChaCha8Rng::seed_from_u64(0)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub steps: usize,
    pub loss: f64,
    pub val_loss: Option<f64>,
    /// Mean precision of the thresholded mask on the validation pairs.
    pub val_precision: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub checkpoint: Checkpoint,
    pub history: Vec<EpochStats>,
}

/// One optimizer step over `batch`; returns the mean loss before the update.
pub fn train_step(
    params: &mut MaskNetParams,
    tape: &mut ParamTape,
    adam: &AdamConfig,
    kind: NetKind,
    batch: &[&PairSample],
) -> Result<f64, TrainError> {
    tape.zero_grads();
    let scale = 1.0 / batch.len() as f64;
    let mut total = 0.0;
    for (i, s) in batch.iter().enumerate() {
        let (cloud, cond, gt) = kind.wiring(s);
        let fwd = params.forward_traced(cloud, cond)?;
        let loss = mask_loss(&fwd.probs, gt)?;
        if !loss.is_finite() {
            return Err(TrainError::NonFiniteLoss {
                epoch: 0,
                step: tape.step() as usize,
                sample: i,
                loss,
            });
        }
        total += loss;
        let mut d = mask_loss_grad(&fwd.probs, gt)?;
        d.iter_mut().for_each(|v| *v *= scale);
        params.backward(&fwd, &d, &mut tape.grads)?;
    }
    tape.adam_step(&mut params.layers_mut(), adam)
        .map_err(MaskError::from)?;
    Ok(total * scale)
}

/// Mean loss and mean mask precision of `params` on `samples`.
pub fn evaluate_loss(params: &MaskNetParams, kind: NetKind, samples: &[PairSample]) -> Result<(f64, f64), TrainError> {
    let mut loss = 0.0;
    let mut precision = 0.0;
    for s in samples {
        let (cloud, cond, gt) = kind.wiring(s);
        let mask = params.predict_mask(cloud, cond)?;
        loss += mask_loss(&mask.probs, gt)?;
        let pred = mask.binary(crate::masknet::DEFAULT_THRESHOLD)?;
        let tp = pred.iter().zip(gt).filter(|(&p, &g)| p && g).count();
        let pos = pred.iter().filter(|&&p| p).count();
        precision += if pos > 0 { tp as f64 / pos as f64 } else { 0.0 };
    }
    let n = samples.len().max(1) as f64;
    Ok((loss / n, precision / n))
}

fn open_log(path: &Option<PathBuf>) -> Result<Option<fs::File>, TrainError> {
    path.as_ref()
        .map(|p| fs::File::create(p).map_err(|e| TrainError::Data(DataError::Io(e))))
        .transpose()
}

fn run_training(cfg: &TrainConfig, kind: NetKind) -> Result<Trained, TrainError> {
    cfg.validate()?;
    let dataset = Dataset::new(cfg.dataset.clone())?;
    let samples: Vec<PairSample> = dataset.iter().collect::<Result<_, _>>()?;
    let validation: Vec<PairSample> = if cfg.validation_count > 0 {
        let vcfg = DatasetConfig {
            seed: cfg.dataset.seed.wrapping_add(1),
            count: cfg.validation_count,
            ..cfg.dataset.clone()
        };
        Dataset::new(vcfg)?.iter().collect::<Result<_, _>>()?
    } else {
        Vec::new()
    };

    let mut params = MaskNetParams::new(&cfg.architecture, cfg.seed)?;
    let mut tape = ParamTape::new(params.layers());
    let adam = AdamConfig {
        learning_rate: cfg.learning_rate,
        ..AdamConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_0f_ba7c4e5);
    let mut log = open_log(&cfg.log_path)?;
    let mut csv = open_log(&cfg.csv_path)?;
    if let Some(f) = csv.as_mut() {
        writeln!(f, "epoch,step,loss,val_loss,val_precision").map_err(DataError::Io)?;
    }
    let start = Instant::now();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut running_loss = f64::NAN;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&PairSample> = chunk.iter().map(|&i| &samples[i]).collect();
            let loss = train_step(&mut params, &mut tape, &adam, kind, &batch).map_err(|e| match e {
                TrainError::NonFiniteLoss { step, sample, loss, .. } => TrainError::NonFiniteLoss {
                    epoch,
                    step,
                    sample: chunk[sample],
                    loss,
                },
                other => other,
            })?;
            epoch_loss += loss * chunk.len() as f64;
        }
        running_loss = epoch_loss / samples.len() as f64;
        let (val_loss, val_precision) = if !validation.is_empty() && (epoch % cfg.eval_every == 0 || epoch == cfg.epochs) {
            let (l, p) = evaluate_loss(&params, kind, &validation)?;
            (Some(l), Some(p))
        } else {
            (None, None)
        };
        let stats = EpochStats {
            epoch,
            steps: tape.step() as usize,
            loss: running_loss,
            val_loss,
            val_precision,
        };
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        let line = format!(
            "epoch {epoch} step {} loss {:.6} val_loss {} val_precision {} wall {:.1}s",
            stats.steps,
            running_loss,
            opt(val_loss),
            opt(val_precision),
            start.elapsed().as_secs_f64()
        );
        if cfg.verbose {
            eprintln!("[{kind}] {line}");
        }
        if let Some(f) = log.as_mut() {
            writeln!(f, "{line}").map_err(DataError::Io)?;
        }
        if let Some(f) = csv.as_mut() {
            writeln!(f, "{epoch},{},{running_loss:.9},{},{}", stats.steps, opt(val_loss), opt(val_precision))
                .map_err(DataError::Io)?;
        }
        history.push(stats);
        if let Some(path) = &cfg.checkpoint_path {
            if epoch % cfg.checkpoint_every == 0 && epoch != cfg.epochs {
                let ck = Checkpoint {
                    kind,
                    params: params.clone(),
                    epoch: epoch as u64,
                    running_loss,
                    rng: RngState::capture(&rng),
                };
                save_checkpoint(&ck, path)?;
            }
        }
    }
    let checkpoint = Checkpoint {
        kind,
        params,
        epoch: cfg.epochs as u64,
        running_loss,
        rng: RngState::capture(&rng),
    };
    if let Some(path) = &cfg.checkpoint_path {
        save_checkpoint(&checkpoint, path)?;
    }
    Ok(Trained { checkpoint, history })
}

/// Trains the template mask against partial sources.
pub fn train_masknet(cfg: &TrainConfig) -> Result<Trained, TrainError> {
    run_training(cfg, NetKind::Mask)
}

/// Trains the outlier mask over noisy sources, conditioned on the clean
/// template. The dataset config should inject outliers.
pub fn train_denoiser(cfg: &TrainConfig) -> Result<Trained, TrainError> {
    if cfg.dataset.outlier_fraction <= 0.0 {
        return Err(TrainError::Config("denoiser training needs outlier_fraction > 0".into()));
    }
    run_training(cfg, NetKind::Denoise)
}

// ---------------------------------------------------------------------------
// Checkpoint file

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"MASKNET\x00";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CheckpointError {
    #[error("checkpoint io: {0}")]
    Io(String),
    #[error("not a checkpoint file (bad magic bytes)")]
    BadMagic,
    #[error("checkpoint checksum mismatch (file truncated or corrupted)")]
    ChecksumMismatch,
    #[error("checkpoint version {found}, this build reads version {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("shape mismatch at {layer}: {detail}")]
    ShapeMismatch { layer: String, detail: String },
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
}

impl From<std::io::Error> for CheckpointError {
    fn from(e: std::io::Error) -> Self {
        CheckpointError::Io(e.to_string())
    }
}

fn checksum(bytes: &[u8]) -> [u8; 8] {
    let digest = Sha256::digest(bytes);
    digest[..8].try_into().expect("8 bytes")
}

/// Layout (all little-endian): magic, version u32, kind u8, encoder depth
/// u32, layer count u32, `(in u32, out u32)` per layer, epoch u64, running
/// loss f64, RNG seed [u8; 32], stream u64, word position u128, then each
/// layer's weights (row-major) and bias as f64, then the first 8 bytes of
/// the SHA-256 of everything before it.
pub fn checkpoint_bytes(ck: &Checkpoint) -> Vec<u8> {
    let arch = ck.params.architecture();
    let layers = ck.params.layers();
    let mut out = Vec::with_capacity(64 + 8 * ck.params.param_count());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.push(ck.kind.code());
    out.extend_from_slice(&(arch.encoder.len() as u32).to_le_bytes());
    out.extend_from_slice(&(layers.len() as u32).to_le_bytes());
    for l in &layers {
        out.extend_from_slice(&(l.input_size() as u32).to_le_bytes());
        out.extend_from_slice(&(l.output_size() as u32).to_le_bytes());
    }
    out.extend_from_slice(&ck.epoch.to_le_bytes());
    out.extend_from_slice(&ck.running_loss.to_le_bytes());
    out.extend_from_slice(&ck.rng.seed);
    out.extend_from_slice(&ck.rng.stream.to_le_bytes());
    out.extend_from_slice(&ck.rng.word_pos.to_le_bytes());
    for l in &layers {
        for v in l.weights.iter().chain(l.bias.iter()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let sum = checksum(&out);
    out.extend_from_slice(&sum);
    out
}

/// Writes atomically (temporary file, then rename).
pub fn save_checkpoint(ck: &Checkpoint, path: &Path) -> Result<(), CheckpointError> {
    let bytes = checkpoint_bytes(ck);
    let tmp = path.with_extension("tmp");
    fs::File::create(&tmp)?.write_all(&bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let s = self
            .bytes
            .get(self.pos..self.pos + n)
            .ok_or_else(|| CheckpointError::Malformed("unexpected end of payload".into()))?;
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4")))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8")))
    }

    fn f64(&mut self) -> Result<f64, CheckpointError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8")))
    }
}

fn layer_name(i: usize, encoder_depth: usize) -> String {
    if i < encoder_depth {
        format!("encoder layer {i}")
    } else {
        format!("head layer {}", i - encoder_depth)
    }
}

/// Parses checkpoint bytes. With `expected`, the stored layer shapes must
/// match that architecture; the check happens before any tensor is read.
pub fn parse_checkpoint(bytes: &[u8], expected: Option<&Architecture>) -> Result<Checkpoint, CheckpointError> {
    if bytes.len() < CHECKPOINT_MAGIC.len() || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    if bytes.len() < 8 + 4 + 8 {
        return Err(CheckpointError::ChecksumMismatch);
    }
    let (payload, sum) = bytes.split_at(bytes.len() - 8);
    if checksum(payload) != sum {
        return Err(CheckpointError::ChecksumMismatch);
    }
    let mut r = Reader { bytes: payload, pos: 8 };
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::VersionMismatch {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let kind = NetKind::from_code(r.take(1)?[0])
        .ok_or_else(|| CheckpointError::Malformed("unknown network kind".into()))?;
    let enc_depth = r.u32()? as usize;
    let n_layers = r.u32()? as usize;
    if n_layers > 1024 || enc_depth == 0 || enc_depth >= n_layers {
        return Err(CheckpointError::Malformed(format!(
            "{n_layers} layers with encoder depth {enc_depth}"
        )));
    }
    let mut shapes = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        shapes.push((r.u32()? as usize, r.u32()? as usize));
    }
    let arch = Architecture {
        encoder: shapes[..enc_depth].iter().map(|s| s.1).collect(),
        head: shapes[enc_depth..].iter().map(|s| s.1).collect(),
    };
    if arch.layer_shapes() != shapes {
        return Err(CheckpointError::Malformed("layer shapes do not chain".into()));
    }
    if let Some(exp) = expected {
        let want = exp.layer_shapes();
        if want.len() != shapes.len() || exp.encoder.len() != enc_depth {
            return Err(CheckpointError::ShapeMismatch {
                layer: "architecture".into(),
                detail: format!(
                    "file has {} layers ({} encoder), expected {} ({} encoder)",
                    shapes.len(),
                    enc_depth,
                    want.len(),
                    exp.encoder.len()
                ),
            });
        }
        for (i, (got, w)) in shapes.iter().zip(&want).enumerate() {
            if got != w {
                return Err(CheckpointError::ShapeMismatch {
                    layer: layer_name(i, enc_depth),
                    detail: format!("file has {}x{}, expected {}x{}", got.0, got.1, w.0, w.1),
                });
            }
        }
    }
    let epoch = r.u64()?;
    let running_loss = r.f64()?;
    let seed: [u8; 32] = r.take(32)?.try_into().expect("32");
    let stream = r.u64()?;
    let word_pos = u128::from_le_bytes(r.take(16)?.try_into().expect("16"));
    let mut layers = Vec::with_capacity(n_layers);
    for &(input, output) in &shapes {
        let mut w = Vec::with_capacity(input * output);
        for _ in 0..input * output {
            w.push(r.f64()?);
        }
        let mut b = Vec::with_capacity(output);
        for _ in 0..output {
            b.push(r.f64()?);
        }
        let weights = Array2::from_shape_vec((output, input), w).expect("sized");
        layers.push(DenseLayer::new(weights, Array1::from(b)).map_err(|e| CheckpointError::Malformed(e.to_string()))?);
    }
    if r.pos != payload.len() {
        return Err(CheckpointError::Malformed("trailing bytes".into()));
    }
    let params = MaskNetParams::from_layers(&arch, layers).map_err(|e| CheckpointError::Malformed(e.to_string()))?;
    Ok(Checkpoint {
        kind,
        params,
        epoch,
        running_loss,
        rng: RngState {
            seed,
            stream,
            word_pos,
        },
    })
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, CheckpointError> {
    parse_checkpoint(&fs::read(path)?, None)
}

pub fn load_checkpoint_expecting(path: &Path, arch: &Architecture) -> Result<Checkpoint, CheckpointError> {
    parse_checkpoint(&fs::read(path)?, Some(arch))
}
