//! Evaluation harness: mask precision, registration sweeps, seen/unseen
//! comparisons and timing.

use std::fmt::Write as _;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::data::{random_transform_with, DataError, Dataset, DatasetConfig, PairSample, Split};
use crate::encoder::EncoderParams;
use crate::geom::{apply_transform, rotation_error_deg, translation_error, RigidTransform};
use crate::masknet::{denoise, refine_iteratively, Architecture, MaskError, MaskNetParams, DEFAULT_THRESHOLD};
use crate::register::{
    feature_lk, mask_then_register, FeatureLkConfig, FeatureLkRegistrar, IcpConfig, IcpRegistrar, Registrar,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no positive predictions; precision is undefined")]
    NoPositivePredictions,
    #[error("length mismatch: {pred} predictions, {gt} labels")]
    LengthMismatch { pred: usize, gt: usize },
    #[error("config: {0}")]
    Config(String),
    #[error("method {0} needs a {1} checkpoint")]
    MissingCheckpoint(Method, &'static str),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Mask(#[from] MaskError),
}

/// `TP / (TP + FP)` of a binary prediction.
pub fn precision(pred: &[bool], gt: &[bool]) -> Result<f64, EvalError> {
    if pred.len() != gt.len() {
        return Err(EvalError::LengthMismatch {
            pred: pred.len(),
            gt: gt.len(),
        });
    }
    let mut tp = 0usize;
    let mut fp = 0usize;
    for (&p, &g) in pred.iter().zip(gt) {
        if p {
            if g {
                tp += 1;
            } else {
                fp += 1;
            }
        }
    }
    if tp + fp == 0 {
        return Err(EvalError::NoPositivePredictions);
    }
    Ok(tp as f64 / (tp + fp) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Icp,
    FeatureLk,
    MaskIcp,
    MaskFeatureLk,
    /// Mask prediction only; reports precision, no registration.
    MaskOnly,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Icp,
        Method::FeatureLk,
        Method::MaskIcp,
        Method::MaskFeatureLk,
        Method::MaskOnly,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Icp => "icp",
            Method::FeatureLk => "flk",
            Method::MaskIcp => "mask-icp",
            Method::MaskFeatureLk => "mask-flk",
            Method::MaskOnly => "mask-only",
        }
    }

    pub fn uses_mask(self) -> bool {
        matches!(self, Method::MaskIcp | Method::MaskFeatureLk | Method::MaskOnly)
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = EvalError;
    fn from_str(s: &str) -> Result<Self, EvalError> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| EvalError::Config(format!("unknown method '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    /// Grid value: fraction of template points missing from the source.
    MissingFraction,
    /// Grid value: exact initial rotation angle in degrees.
    Misalignment,
    /// Grid value: number of outlier points added to the source.
    Outliers,
    /// Grid value: Gaussian noise standard deviation.
    Noise,
}

impl SweepKind {
    pub fn name(self) -> &'static str {
        match self {
            SweepKind::MissingFraction => "missing_fraction",
            SweepKind::Misalignment => "misalignment",
            SweepKind::Outliers => "outliers",
            SweepKind::Noise => "noise",
        }
    }

    pub fn default_grid(self) -> Vec<f64> {
        match self {
            SweepKind::MissingFraction => (1..=7).map(|i| i as f64 / 10.0).collect(),
            SweepKind::Misalignment => (0..=5).map(|i| 15.0 * i as f64).collect(),
            SweepKind::Outliers => (0..=10).map(|i| 10.0 * i as f64).collect(),
            SweepKind::Noise => (0..=6).map(|i| i as f64 / 100.0).collect(),
        }
    }
}

impl std::str::FromStr for SweepKind {
    type Err = EvalError;
    fn from_str(s: &str) -> Result<Self, EvalError> {
        match s {
            "missing_fraction" | "missing" => Ok(SweepKind::MissingFraction),
            "misalignment" => Ok(SweepKind::Misalignment),
            "outliers" => Ok(SweepKind::Outliers),
            "noise" => Ok(SweepKind::Noise),
            other => Err(EvalError::Config(format!("unknown sweep kind '{other}'"))),
        }
    }
}

/// Networks available to the methods.
#[derive(Debug, Clone, Default)]
pub struct Models {
    pub mask: Option<MaskNetParams>,
    pub denoiser: Option<MaskNetParams>,
    /// Feature extractor for feature_lk; falls back to the mask network's
    /// encoder, then the denoiser's, then to [`fixed_lk_encoder`].
    pub lk_encoder: Option<EncoderParams>,
}

/// Deterministic untrained encoder used when no trained one is supplied.
pub fn fixed_lk_encoder() -> EncoderParams {
    let arch = Architecture {
        encoder: vec![64, 64, 64, 128, 256],
        head: vec![256, 1],
    };
    MaskNetParams::new(&arch, 0).expect("valid").encoder
}

impl Models {
    pub fn lk_encoder(&self) -> EncoderParams {
        self.lk_encoder
            .clone()
            .or_else(|| self.mask.as_ref().map(|m| m.encoder.clone()))
            .or_else(|| self.denoiser.as_ref().map(|m| m.encoder.clone()))
            .unwrap_or_else(fixed_lk_encoder)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub kind: SweepKind,
    pub grid: Vec<f64>,
    pub trials: usize,
    pub methods: Vec<Method>,
    /// Pair generator; the swept field is overridden per grid value.
    pub base: DatasetConfig,
    pub threshold: f64,
    pub seed: u64,
    /// Measure wall time per method (timing columns are `nan` otherwise,
    /// which keeps reports byte-deterministic).
    pub timing: bool,
    pub icp: IcpConfig,
    pub lk: FeatureLkConfig,
}

impl SweepConfig {
    pub fn new(kind: SweepKind) -> Self {
        Self {
            kind,
            grid: kind.default_grid(),
            trials: 100,
            methods: vec![Method::Icp, Method::FeatureLk, Method::MaskIcp, Method::MaskFeatureLk],
            base: DatasetConfig::default(),
            threshold: DEFAULT_THRESHOLD,
            seed: 0,
            timing: false,
            icp: IcpConfig::default(),
            lk: FeatureLkConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        if self.grid.is_empty() {
            return Err(EvalError::Config("empty grid".into()));
        }
        if self.grid.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(EvalError::Config("grid must be strictly increasing".into()));
        }
        if self.trials == 0 {
            return Err(EvalError::Config("trials must be at least 1".into()));
        }
        if self.methods.is_empty() {
            return Err(EvalError::Config("no methods selected".into()));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(EvalError::Config("threshold must lie in (0, 1)".into()));
        }
        Ok(())
    }

    /// Dataset config for one grid value.
    pub fn dataset_for(&self, value: f64) -> Result<DatasetConfig, EvalError> {
        let mut d = DatasetConfig {
            count: self.trials,
            seed: self.seed,
            ..self.base.clone()
        };
        match self.kind {
            SweepKind::MissingFraction => d.keep_fraction = 1.0 - value,
            SweepKind::Misalignment => d.rot_max_deg = 0.0,
            SweepKind::Outliers => {
                let src = (d.keep_fraction * d.n_points as f64).round();
                d.outlier_fraction = value / src;
            }
            SweepKind::Noise => d.noise_sigma = value,
        }
        d.validate()?;
        Ok(d)
    }

    /// Canonical text of everything that determines the report.
    pub fn canonical_text(&self) -> String {
        format!(
            "kind={}\ngrid={:?}\ntrials={}\nmethods={:?}\nthreshold={}\nseed={}\nicp={:?}\nlk={:?}\n{}",
            self.kind.name(),
            self.grid,
            self.trials,
            self.methods,
            self.threshold,
            self.seed,
            self.icp,
            self.lk,
            self.base.to_text()
        )
    }
}

/// Generates trial `index` for `value`. Trials share their index-derived
/// randomness across grid values so curves compare like with like.
pub fn trial_pair(cfg: &SweepConfig, dataset: &Dataset, value: f64, index: usize) -> Result<PairSample, EvalError> {
    let mut s = dataset.sample(index)?;
    if cfg.kind == SweepKind::Misalignment {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x6d15_a119);
        rng.set_stream(index as u64);
        let direction = random_transform_with(90.0, 0.0, &mut rng);
        let axis = crate::geom::se3_log(&direction)
            .map(|t| t.omega)
            .unwrap_or_else(|_| crate::geom::Vec3::z());
        let axis = if axis.norm() > 0.0 { axis } else { crate::geom::Vec3::z() };
        let rot = RigidTransform::from_axis_angle(&axis, value.to_radians());
        // rotate about the partial scan's own position so the translation
        // component stays as generated
        let c = s.source.centroid();
        let about = RigidTransform::from_translation(c)
            .compose(&rot)
            .compose(&RigidTransform::from_translation(-c));
        s.source = apply_transform(&about, &s.source);
        s.gt_transform = about.compose(&s.gt_transform);
    }
    Ok(s)
}

/// Outcome of one method on one pair.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub rot_err_deg: f64,
    pub trans_err: f64,
    pub precision: Option<f64>,
    pub time_ms: f64,
}

/// Whether mask methods clean the source (outlier sweeps with a denoiser)
/// instead of masking the template.
fn denoises(cfg: &SweepConfig, models: &Models, sample: &PairSample) -> bool {
    models.denoiser.is_some() && (cfg.kind == SweepKind::Outliers || sample.source_mask.iter().any(|&b| !b))
}

pub fn run_method(
    method: Method,
    cfg: &SweepConfig,
    models: &Models,
    lk_encoder: &EncoderParams,
    sample: &PairSample,
) -> Result<TrialOutcome, EvalError> {
    let truth = sample.registration_truth();
    let start = Instant::now();
    let icp = IcpRegistrar::new(cfg.icp.clone());
    let flk = FeatureLkRegistrar::new(lk_encoder.clone(), cfg.lk.clone());
    let (transform, precision_value) = match method {
        Method::Icp => (
            Some(icp.register(&sample.source, &sample.template).map_err(MaskError::from)?.transform),
            None,
        ),
        Method::FeatureLk => (
            Some(
                feature_lk(lk_encoder, &sample.source, &sample.template, &cfg.lk)
                    .map_err(MaskError::from)?
                    .transform,
            ),
            None,
        ),
        Method::MaskIcp | Method::MaskFeatureLk | Method::MaskOnly => {
            let backend: &dyn Registrar = if method == Method::MaskFeatureLk { &flk } else { &icp };
            if denoises(cfg, models, sample) {
                let net = models.denoiser.as_ref().expect("checked");
                let (clean, mask) = denoise(net, &sample.template, &sample.source, cfg.threshold)?;
                let p = precision(&mask.binary(cfg.threshold)?, &sample.source_mask).ok();
                if method == Method::MaskOnly {
                    (None, p)
                } else {
                    if clean.is_empty() {
                        return Err(MaskError::EmptyMask.into());
                    }
                    let r = backend.register(&clean, &sample.template).map_err(MaskError::from)?;
                    (Some(r.transform), p)
                }
            } else {
                let net = models
                    .mask
                    .as_ref()
                    .ok_or(EvalError::MissingCheckpoint(method, "mask"))?;
                if method == Method::MaskOnly {
                    let m = net.predict_mask(&sample.template, &sample.source)?;
                    (None, precision(&m.binary(cfg.threshold)?, &sample.gt_mask).ok())
                } else {
                    let r = mask_then_register(net, backend, &sample.template, &sample.source, cfg.threshold)?;
                    (Some(r.result.transform), precision(&r.mask, &sample.gt_mask).ok())
                }
            }
        }
    };
    let time_ms = start.elapsed().as_secs_f64() * 1e3;
    let (rot, trans) = match transform {
        Some(t) => (rotation_error_deg(&t, &truth), translation_error(&t, &truth)),
        None => (f64::NAN, f64::NAN),
    };
    Ok(TrialOutcome {
        rot_err_deg: rot,
        trans_err: trans,
        precision: precision_value,
        time_ms,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub method: Method,
    pub trials_total: usize,
    pub trials_ok: usize,
    pub trials_failed: usize,
    pub mean_rot_err_deg: f64,
    pub median_rot_err_deg: f64,
    pub mean_trans_err: f64,
    pub median_trans_err: f64,
    pub mask_precision: f64,
    pub mean_time_ms: f64,
    pub std_time_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub kind: SweepKind,
    pub variable: String,
    pub grid: Vec<f64>,
    pub seed: u64,
    pub fingerprint: String,
    pub rows: Vec<SweepRow>,
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() / 2;
    if s.len() % 2 == 1 {
        s[m]
    } else {
        0.5 * (s[m - 1] + s[m])
    }
}

fn std_dev(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return if v.is_empty() { f64::NAN } else { 0.0 };
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

/// Hex SHA-256 of the sweep config plus every network's parameters.
pub fn fingerprint(cfg: &SweepConfig, models: &Models) -> String {
    let mut h = Sha256::new();
    h.update(cfg.canonical_text().as_bytes());
    let nets = [
        ("mask", models.mask.as_ref()),
        ("denoiser", models.denoiser.as_ref()),
    ];
    for (name, net) in nets {
        h.update(name.as_bytes());
        if let Some(net) = net {
            for l in net.layers() {
                for v in l.weights.iter().chain(l.bias.iter()) {
                    h.update(v.to_le_bytes());
                }
            }
        }
    }
    if let Some(enc) = &models.lk_encoder {
        h.update(b"lk");
        for l in &enc.mlp.layers {
            for v in l.weights.iter().chain(l.bias.iter()) {
                h.update(v.to_le_bytes());
            }
        }
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn check_models(cfg: &SweepConfig, models: &Models) -> Result<(), EvalError> {
    for &m in &cfg.methods {
        if m.uses_mask() {
            let needs_denoiser = cfg.kind == SweepKind::Outliers && models.mask.is_none();
            if models.mask.is_none() && models.denoiser.is_none() {
                return Err(EvalError::MissingCheckpoint(m, "mask"));
            }
            if needs_denoiser && models.denoiser.is_none() {
                return Err(EvalError::MissingCheckpoint(m, "denoiser"));
            }
        }
    }
    Ok(())
}

/// Runs every method on `trials` pairs per grid value.
pub fn run_sweep(cfg: &SweepConfig, models: &Models) -> Result<SweepReport, EvalError> {
    cfg.validate()?;
    check_models(cfg, models)?;
    let lk_encoder = models.lk_encoder();
    let mut rows = Vec::new();
    for &value in &cfg.grid {
        let dataset = Dataset::new(cfg.dataset_for(value)?)?;
        let mut per_method: Vec<Vec<Result<TrialOutcome, EvalError>>> =
            (0..cfg.methods.len()).map(|_| Vec::new()).collect();
        for i in 0..cfg.trials {
            let pair = trial_pair(cfg, &dataset, value, i)?;
            for (mi, &m) in cfg.methods.iter().enumerate() {
                per_method[mi].push(run_method(m, cfg, models, &lk_encoder, &pair));
            }
        }
        for (mi, &m) in cfg.methods.iter().enumerate() {
            let ok: Vec<&TrialOutcome> = per_method[mi].iter().filter_map(|r| r.as_ref().ok()).collect();
            let rot: Vec<f64> = ok.iter().map(|o| o.rot_err_deg).filter(|v| v.is_finite()).collect();
            let trans: Vec<f64> = ok.iter().map(|o| o.trans_err).filter(|v| v.is_finite()).collect();
            let prec: Vec<f64> = ok.iter().filter_map(|o| o.precision).collect();
            let times: Vec<f64> = ok.iter().map(|o| o.time_ms).collect();
            let (mt, st) = if cfg.timing {
                (mean(&times), std_dev(&times))
            } else {
                (f64::NAN, f64::NAN)
            };
            rows.push(SweepRow {
                value,
                method: m,
                trials_total: cfg.trials,
                trials_ok: ok.len(),
                trials_failed: cfg.trials - ok.len(),
                mean_rot_err_deg: mean(&rot),
                median_rot_err_deg: median(&rot),
                mean_trans_err: mean(&trans),
                median_trans_err: median(&trans),
                mask_precision: mean(&prec),
                mean_time_ms: mt,
                std_time_ms: st,
            });
        }
    }
    Ok(SweepReport {
        kind: cfg.kind,
        variable: cfg.kind.name().to_string(),
        grid: cfg.grid.clone(),
        seed: cfg.seed,
        fingerprint: fingerprint(cfg, models),
        rows,
    })
}

/// `nan` for non-finite values, fixed nine decimals otherwise.
pub fn fmt_num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.9}")
    } else {
        "nan".into()
    }
}

pub const SWEEP_CSV_HEADER: &str = "sweep,value,method,trials_total,trials_ok,trials_failed,mean_rot_err_deg,median_rot_err_deg,mean_trans_err,median_trans_err,mask_precision,mean_time_ms,std_time_ms";

impl SweepReport {
    pub fn row(&self, value: f64, method: Method) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.value == value && r.method == method)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        s.push_str(SWEEP_CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                self.variable,
                fmt_num(r.value),
                r.method,
                r.trials_total,
                r.trials_ok,
                r.trials_failed,
                fmt_num(r.mean_rot_err_deg),
                fmt_num(r.median_rot_err_deg),
                fmt_num(r.mean_trans_err),
                fmt_num(r.median_trans_err),
                fmt_num(r.mask_precision),
                fmt_num(r.mean_time_ms),
                fmt_num(r.std_time_ms)
            );
        }
        s
    }

    /// JSON summary; `inputs_hash` covers the CSV bytes as well.
    pub fn to_json(&self) -> String {
        let csv = self.to_csv();
        let inputs_hash: String = Sha256::digest(format!("{}\n{}", self.fingerprint, csv).as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect();
        let v = serde_json::json!({
            "sweep": self.variable,
            "grid": self.grid,
            "seed": self.seed,
            "fingerprint": self.fingerprint,
            "inputs_hash": inputs_hash,
            "rows": self.rows,
        });
        serde_json::to_string_pretty(&v).expect("serializable") + "\n"
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitDelta {
    pub value: f64,
    pub method: Method,
    pub seen_rot: f64,
    pub unseen_rot: f64,
    pub delta_rot: f64,
    pub seen_trans: f64,
    pub unseen_trans: f64,
    pub delta_trans: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitReport {
    pub seen: SweepReport,
    pub unseen: SweepReport,
    pub deltas: Vec<SplitDelta>,
}

impl SplitReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("value,method,seen_mean_rot_err_deg,unseen_mean_rot_err_deg,delta_rot_err_deg,seen_mean_trans_err,unseen_mean_trans_err,delta_trans_err\n");
        for d in &self.deltas {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                fmt_num(d.value),
                d.method,
                fmt_num(d.seen_rot),
                fmt_num(d.unseen_rot),
                fmt_num(d.delta_rot),
                fmt_num(d.seen_trans),
                fmt_num(d.unseen_trans),
                fmt_num(d.delta_trans)
            );
        }
        s
    }
}

/// Runs the same sweep on two category lists. Self-comparison (identical
/// lists) is allowed; partial overlap is a config error.
pub fn split_eval(seen: &[String], unseen: &[String], cfg: &SweepConfig, models: &Models) -> Result<SplitReport, EvalError> {
    if seen.is_empty() || unseen.is_empty() {
        return Err(EvalError::Config("empty category list".into()));
    }
    let identical = seen == unseen;
    if !identical && seen.iter().any(|c| unseen.contains(c)) {
        return Err(EvalError::Config("seen and unseen category lists overlap".into()));
    }
    let with = |cats: &[String]| SweepConfig {
        base: DatasetConfig {
            shapes: cats.to_vec(),
            split: Split::All,
            ..cfg.base.clone()
        },
        ..cfg.clone()
    };
    let seen_report = run_sweep(&with(seen), models)?;
    let unseen_report = run_sweep(&with(unseen), models)?;
    let deltas = seen_report
        .rows
        .iter()
        .zip(&unseen_report.rows)
        .map(|(a, b)| SplitDelta {
            value: a.value,
            method: a.method,
            seen_rot: a.mean_rot_err_deg,
            unseen_rot: b.mean_rot_err_deg,
            delta_rot: b.mean_rot_err_deg - a.mean_rot_err_deg,
            seen_trans: a.mean_trans_err,
            unseen_trans: b.mean_trans_err,
            delta_trans: b.mean_trans_err - a.mean_trans_err,
        })
        .collect();
    Ok(SplitReport {
        seen: seen_report,
        unseen: unseen_report,
        deltas,
    })
}

/// Mean and sample standard deviation of `f`'s wall time in milliseconds
/// over `trials` runs, after one unmeasured warm-up run.
pub fn time_method<F: FnMut()>(mut f: F, trials: usize) -> Result<(f64, f64), EvalError> {
    if trials < 5 {
        return Err(EvalError::Config("timing needs at least 5 trials".into()));
    }
    f();
    let mut times = Vec::with_capacity(trials);
    for _ in 0..trials {
        let t = Instant::now();
        f();
        times.push(t.elapsed().as_secs_f64() * 1e3);
    }
    Ok((mean(&times), std_dev(&times)))
}

/// Mean rotation and translation error after each refinement iteration.
pub fn refinement_errors(
    params: &MaskNetParams,
    registrar: &dyn Registrar,
    pairs: &[PairSample],
    threshold: f64,
    max_iters: usize,
) -> Result<Vec<(f64, f64)>, EvalError> {
    let mut rot = vec![Vec::new(); max_iters];
    let mut trans = vec![Vec::new(); max_iters];
    for s in pairs {
        let truth = s.registration_truth();
        let r = match refine_iteratively(params, &s.template, &s.source, registrar, threshold, max_iters) {
            Ok(r) => r,
            Err(_) => continue,
        };
        for (k, t) in r.trajectory.iter().enumerate() {
            rot[k].push(rotation_error_deg(t, &truth));
            trans[k].push(translation_error(t, &truth));
        }
    }
    Ok(rot.iter().zip(&trans).map(|(r, t)| (mean(r), mean(t))).collect())
}
