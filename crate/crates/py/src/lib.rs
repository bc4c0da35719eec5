//! Python bindings. Clouds cross the boundary as lists of `[x, y, z]`
//! rows and transforms as 12 floats (rotation row-major, then translation).

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use masknet::data::{self as mdata, DatasetConfig, ShapeSpec};
use masknet::eval::fixed_lk_encoder;
use masknet::geom::{apply_transform, PointCloud, RigidTransform};
use masknet::masknet::{self as mnet, Architecture, MaskNetParams, DEFAULT_THRESHOLD};
use masknet::register::{self as reg, FeatureLkConfig, FeatureLkRegistrar, IcpConfig, IcpRegistrar, Registrar};
use masknet::train::{self as mtrain, Checkpoint, NetKind, TrainConfig};

type Rows = Vec<[f64; 3]>;

fn val_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn cloud(rows: &Rows) -> PyResult<PointCloud> {
    PointCloud::from_rows(rows).map_err(val_err)
}

fn transform(v: Vec<f64>) -> PyResult<RigidTransform> {
    let arr: [f64; 12] = v
        .try_into()
        .map_err(|v: Vec<f64>| PyValueError::new_err(format!("expected 12 numbers, got {}", v.len())))?;
    Ok(RigidTransform::from_row_major(&arr))
}

/// Trained or freshly initialized mask network.
#[pyclass(name = "MaskNet", module = "masknet")]
struct PyMaskNet {
    params: MaskNetParams,
    kind: NetKind,
}

#[pymethods]
impl PyMaskNet {
    /// New network with random weights. `arch` is "full" or "desk" unless
    /// `encoder` and `head` widths are given.
    #[new]
    #[pyo3(signature = (seed=0, arch="desk", encoder=None, head=None))]
    fn new(seed: u64, arch: &str, encoder: Option<Vec<usize>>, head: Option<Vec<usize>>) -> PyResult<Self> {
        let mut a = match arch {
            "full" => Architecture::full(),
            "desk" => Architecture::desk(),
            other => return Err(PyValueError::new_err(format!("unknown architecture '{other}'"))),
        };
        if let Some(e) = encoder {
            a.encoder = e;
        }
        if let Some(h) = head {
            a.head = h;
        }
        Ok(Self {
            params: MaskNetParams::new(&a, seed).map_err(val_err)?,
            kind: NetKind::Mask,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let ck = mtrain::load_checkpoint(&path).map_err(|e| PyIOError::new_err(format!("{}: {e}", path.display())))?;
        Ok(Self {
            params: ck.params,
            kind: ck.kind,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        let ck = Checkpoint::untrained(self.kind, self.params.clone());
        mtrain::save_checkpoint(&ck, &path).map_err(|e| PyIOError::new_err(e.to_string()))
    }

    /// "mask" or "denoise".
    #[getter]
    fn kind(&self) -> String {
        self.kind.to_string()
    }

    #[getter]
    fn encoder_widths(&self) -> Vec<usize> {
        self.params.architecture().encoder
    }

    #[getter]
    fn head_widths(&self) -> Vec<usize> {
        self.params.architecture().head
    }

    fn param_count(&self) -> usize {
        self.params.param_count()
    }

    /// Per-template-point inclusion probabilities.
    fn predict_mask(&self, template: Rows, source: Rows) -> PyResult<Vec<f64>> {
        Ok(self
            .params
            .predict_mask(&cloud(&template)?, &cloud(&source)?)
            .map_err(val_err)?
            .probs)
    }

    /// Template rows whose probability reaches `threshold`.
    #[pyo3(signature = (template, source, threshold=DEFAULT_THRESHOLD))]
    fn masked_template(&self, template: Rows, source: Rows, threshold: f64) -> PyResult<Rows> {
        let t = cloud(&template)?;
        let m = self.params.predict_mask(&t, &cloud(&source)?).map_err(val_err)?;
        let bits = m.binary(threshold).map_err(val_err)?;
        Ok(mnet::apply_mask(&bits, &t).map_err(val_err)?.to_rows())
    }

    /// Keeps the points of `noisy` that the denoiser judges to be inliers.
    #[pyo3(signature = (reference, noisy, threshold=DEFAULT_THRESHOLD))]
    fn denoise(&self, reference: Rows, noisy: Rows, threshold: f64) -> PyResult<Rows> {
        let (clean, _) =
            mnet::denoise(&self.params, &cloud(&reference)?, &cloud(&noisy)?, threshold).map_err(val_err)?;
        Ok(clean.to_rows())
    }

    fn __repr__(&self) -> String {
        let a = self.params.architecture();
        format!("MaskNet(kind={}, encoder={:?}, head={:?})", self.kind, a.encoder, a.head)
    }
}

/// Samples `n` surface points of a random shape from `family`.
#[pyfunction]
#[pyo3(signature = (family, n, seed=0))]
fn sample_shape(family: &str, n: usize, seed: u64) -> PyResult<Rows> {
    let spec = ShapeSpec::from_seed(family, seed).map_err(val_err)?;
    Ok(mdata::sample_shape(&spec, n).map_err(val_err)?.to_rows())
}

#[pyfunction]
fn load_cloud(path: PathBuf) -> PyResult<Rows> {
    Ok(mdata::load_cloud(&path).map_err(|e| PyIOError::new_err(e.to_string()))?.to_rows())
}

#[pyfunction]
fn write_cloud(rows: Rows, path: PathBuf) -> PyResult<()> {
    mdata::write_cloud(&cloud(&rows)?, &path).map_err(|e| PyIOError::new_err(e.to_string()))
}

#[pyfunction]
fn transform_cloud(t: Vec<f64>, rows: Rows) -> PyResult<Rows> {
    Ok(apply_transform(&transform(t)?, &cloud(&rows)?).to_rows())
}

/// Rotation error in degrees between two transforms.
#[pyfunction]
fn rotation_error_deg(estimate: Vec<f64>, truth: Vec<f64>) -> PyResult<f64> {
    Ok(masknet::geom::rotation_error_deg(&transform(estimate)?, &transform(truth)?))
}

/// Least-squares rigid transform mapping `a[i]` onto `b[i]`.
#[pyfunction]
fn kabsch(a: Rows, b: Rows) -> PyResult<Vec<f64>> {
    let a = cloud(&a)?;
    let b = cloud(&b)?;
    Ok(reg::kabsch(a.points(), b.points()).map_err(val_err)?.to_row_major().to_vec())
}

/// Estimates the transform taking `source` onto `template`.
///
/// `backend` is one of icp, flk, mask-icp, mask-flk; the mask backends need
/// `net`.
#[pyfunction]
#[pyo3(signature = (backend, template, source, net=None, threshold=DEFAULT_THRESHOLD, max_iters=10))]
fn register(
    backend: &str,
    template: Rows,
    source: Rows,
    net: Option<PyRef<'_, PyMaskNet>>,
    threshold: f64,
    max_iters: usize,
) -> PyResult<Vec<f64>> {
    let t = cloud(&template)?;
    let s = cloud(&source)?;
    let icp = IcpRegistrar::new(IcpConfig {
        max_iters,
        ..IcpConfig::default()
    });
    let lk = |enc| {
        FeatureLkRegistrar::new(
            enc,
            FeatureLkConfig {
                max_iters,
                ..FeatureLkConfig::default()
            },
        )
    };
    let encoder = net.as_ref().map(|n| n.params.encoder.clone()).unwrap_or_else(fixed_lk_encoder);
    let result = match backend {
        "icp" => icp.register(&s, &t),
        "flk" => lk(encoder).register(&s, &t),
        "mask-icp" | "mask-flk" => {
            let n = net.as_ref().ok_or_else(|| PyValueError::new_err(format!("{backend} needs net")))?;
            let flk = lk(encoder);
            let r: &dyn Registrar = if backend == "mask-icp" { &icp } else { &flk };
            return Ok(reg::mask_then_register(&n.params, r, &t, &s, threshold)
                .map_err(val_err)?
                .result
                .transform
                .to_row_major()
                .to_vec());
        }
        other => return Err(PyValueError::new_err(format!("unknown backend '{other}'"))),
    };
    Ok(result.map_err(val_err)?.transform.to_row_major().to_vec())
}

fn dataset_config(config: Option<&Bound<'_, PyDict>>) -> PyResult<DatasetConfig> {
    let mut cfg = DatasetConfig::default();
    if let Some(d) = config {
        for (k, v) in d.iter() {
            let key: String = k.extract()?;
            let value = match v.extract::<Vec<String>>() {
                Ok(list) => list.join(","),
                Err(_) => v.str()?.to_string(),
            };
            cfg.set(&key, &value).map_err(val_err)?;
        }
    }
    cfg.validate().map_err(val_err)?;
    Ok(cfg)
}

/// Generates pair `index` of the dataset described by `config` (keys as in
/// the dataset config file). Returns a dict with template, source, gt_mask,
/// source_mask, gt_transform and category.
#[pyfunction]
#[pyo3(signature = (index, config=None))]
fn generate_pair<'py>(py: Python<'py>, index: usize, config: Option<&Bound<'py, PyDict>>) -> PyResult<Bound<'py, PyDict>> {
    let ds = mdata::Dataset::new(dataset_config(config)?).map_err(val_err)?;
    let s = ds.sample(index).map_err(val_err)?;
    let d = PyDict::new(py);
    d.set_item("template", s.template.to_rows())?;
    d.set_item("source", s.source.to_rows())?;
    d.set_item("gt_mask", s.gt_mask.clone())?;
    d.set_item("source_mask", s.source_mask.clone())?;
    d.set_item("gt_transform", s.gt_transform.to_row_major().to_vec())?;
    d.set_item("registration_truth", s.registration_truth().to_row_major().to_vec())?;
    d.set_item("category", s.category.clone())?;
    Ok(d)
}

/// Trains a mask (or, with `kind="denoise"`, an outlier-removal) network.
#[pyfunction]
#[pyo3(signature = (config=None, epochs=10, batch_size=32, lr=1e-4, seed=0, kind="mask", arch=None, checkpoint=None))]
#[allow(clippy::too_many_arguments)]
fn train(
    py: Python<'_>,
    config: Option<&Bound<'_, PyDict>>,
    epochs: usize,
    batch_size: usize,
    lr: f64,
    seed: u64,
    kind: &str,
    arch: Option<PyRef<'_, PyMaskNet>>,
    checkpoint: Option<PathBuf>,
) -> PyResult<(PyMaskNet, Vec<f64>)> {
    let kind: NetKind = kind.parse().map_err(val_err)?;
    let cfg = TrainConfig {
        epochs,
        batch_size,
        learning_rate: lr,
        seed,
        dataset: dataset_config(config)?,
        architecture: arch.map(|a| a.params.architecture()).unwrap_or_else(Architecture::desk),
        checkpoint_path: checkpoint,
        ..TrainConfig::default()
    };
    cfg.validate().map_err(val_err)?;
    let trained = py
        .detach(|| match kind {
            NetKind::Mask => mtrain::train_masknet(&cfg),
            NetKind::Denoise => mtrain::train_denoiser(&cfg),
        })
        .map_err(val_err)?;
    let losses = trained.history.iter().map(|e| e.loss).collect();
    Ok((
        PyMaskNet {
            params: trained.checkpoint.params,
            kind,
        },
        losses,
    ))
}

#[pymodule]
#[pyo3(name = "masknet")]
fn masknet_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMaskNet>()?;
    m.add_function(wrap_pyfunction!(sample_shape, m)?)?;
    m.add_function(wrap_pyfunction!(load_cloud, m)?)?;
    m.add_function(wrap_pyfunction!(write_cloud, m)?)?;
    m.add_function(wrap_pyfunction!(transform_cloud, m)?)?;
    m.add_function(wrap_pyfunction!(rotation_error_deg, m)?)?;
    m.add_function(wrap_pyfunction!(kabsch, m)?)?;
    m.add_function(wrap_pyfunction!(register, m)?)?;
    m.add_function(wrap_pyfunction!(generate_pair, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add("DEFAULT_THRESHOLD", DEFAULT_THRESHOLD)?;
    Ok(())
}
