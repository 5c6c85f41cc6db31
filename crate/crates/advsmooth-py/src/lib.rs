//! Python bindings for the laboratory's core operations.
//!
//! The module mirrors the JSON-first conventions of the command line: model
//! specs, loss variants, grid specs and training experiments are passed as
//! JSON strings with exactly the schema the config files use, and structured
//! results come back as plain dicts/lists so no Python-side classes need to
//! track the Rust types. Vectors are `list[float]`, labels are `1`/`-1`,
//! norms are the strings `"2"` and `"inf"`.
//!
//! Build the importable shared library with
//! `cargo build --release -p advsmooth-py --features extension-module`
//! and rename `libadvsmooth.so` to `advsmooth.so` somewhere on `sys.path`
//! (see `python/smoke_test.py`).

use nalgebra::DVector;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use serde_json::Value;

use advsmooth_core::attack::{
    dual_norm_adv_loss, dual_norm_adv_loss_grad, exact_l2_attack, exact_linf_attack, NormBall,
    NormKind, PgdConfig,
};
use advsmooth_core::entropy::{local_entropy_exact, QuadratureSpec};
use advsmooth_core::model::{
    make_model, BinaryLabel, InputPoint, LabeledDataset, LabeledExample, Model as CoreModel,
    ModelSpec, ParamVector,
};
use advsmooth_core::probe::{probe_report, Region, RegionPredicate};
use advsmooth_core::surface::{dataset_objective, sample_surface, GridSpec, LossVariant};
use advsmooth_core::train::{adversarial_train, make_synthetic_dataset, ExperimentConfig};
use advsmooth_core::verify::{self, CheckSuite};

fn core_err(e: advsmooth_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_json<T: serde::de::DeserializeOwned>(what: &str, json: &str) -> PyResult<T> {
    serde_json::from_str(json).map_err(|e| PyValueError::new_err(format!("{what}: {e}")))
}

fn parse_norm(p: &str) -> PyResult<NormKind> {
    match p {
        "2" => Ok(NormKind::L2),
        "inf" => Ok(NormKind::LInf),
        other => Err(PyValueError::new_err(format!(
            "norm must be \"2\" or \"inf\", got {other:?}"
        ))),
    }
}

fn parse_label(y: i8) -> PyResult<BinaryLabel> {
    match y {
        1 => Ok(BinaryLabel::Pos),
        -1 => Ok(BinaryLabel::Neg),
        other => Err(PyValueError::new_err(format!(
            "label must be 1 or -1, got {other}"
        ))),
    }
}

fn to_param(theta: Vec<f64>) -> PyResult<ParamVector> {
    ParamVector::new(theta).map_err(core_err)
}

fn to_input(x: Vec<f64>) -> PyResult<InputPoint> {
    InputPoint::new(x).map_err(core_err)
}

/// Convert any serializable core result into plain Python objects.
fn json_to_py(py: Python<'_>, v: &Value) -> PyResult<PyObject> {
    Ok(match v {
        Value::Null => py.None(),
        Value::Bool(b) => (*b).into_pyobject(py)?.to_owned().into_any().unbind(),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                i.into_pyobject(py)?.into_any().unbind()
            } else if let Some(u) = n.as_u64() {
                u.into_pyobject(py)?.into_any().unbind()
            } else {
                n.as_f64()
                    .unwrap_or(f64::NAN)
                    .into_pyobject(py)?
                    .into_any()
                    .unbind()
            }
        }
        Value::String(s) => s.as_str().into_pyobject(py)?.into_any().unbind(),
        Value::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(json_to_py(py, item)?)?;
            }
            list.into_any().unbind()
        }
        Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, val) in map {
                dict.set_item(k, json_to_py(py, val)?)?;
            }
            dict.into_any().unbind()
        }
    })
}

fn serialize_to_py<T: serde::Serialize>(py: Python<'_>, value: &T) -> PyResult<PyObject> {
    let v = serde_json::to_value(value)
        .map_err(|e| PyValueError::new_err(format!("serialization failed: {e}")))?;
    json_to_py(py, &v)
}

/// A differentiable toy model (linear logistic, swish-head logistic, or a
/// small MLP) with deterministically seeded initial parameters.
#[pyclass(frozen)]
struct Model {
    inner: CoreModel,
}

#[pymethods]
impl Model {
    /// `Model(spec_json, seed=0)`, e.g.
    /// `Model('{"kind": {"type": "linear_logistic"}, "input_dim": 2}')`.
    #[new]
    #[pyo3(signature = (spec_json, seed = 0))]
    fn new(spec_json: &str, seed: u64) -> PyResult<Self> {
        let spec: ModelSpec = parse_json("model spec", spec_json)?;
        Ok(Model {
            inner: make_model(spec, seed).map_err(core_err)?,
        })
    }

    fn input_dim(&self) -> usize {
        self.inner.input_dim()
    }

    fn param_dim(&self) -> usize {
        self.inner.param_dim()
    }

    /// Seeded initial parameters chosen at construction.
    fn init_params(&self) -> Vec<f64> {
        self.inner.init_params().to_vec()
    }

    /// Pointwise loss at (theta, x, y).
    fn loss(&self, theta: Vec<f64>, x: Vec<f64>, y: i8) -> PyResult<f64> {
        self.inner
            .loss(&to_param(theta)?, &to_input(x)?, parse_label(y)?)
            .map_err(core_err)
    }

    /// Gradients of the pointwise loss: `(loss, grad_theta, grad_x)`.
    fn loss_and_grads(
        &self,
        theta: Vec<f64>,
        x: Vec<f64>,
        y: i8,
    ) -> PyResult<(f64, Vec<f64>, Vec<f64>)> {
        let grads = self
            .inner
            .loss_and_grads(&to_param(theta)?, &to_input(x)?, parse_label(y)?)
            .map_err(core_err)?;
        Ok((
            grads.loss,
            grads.grad_theta.iter().copied().collect(),
            grads.grad_x.iter().copied().collect(),
        ))
    }

    fn __repr__(&self) -> String {
        format!(
            "Model(kind={:?}, input_dim={}, param_dim={})",
            self.inner.spec().kind,
            self.inner.input_dim(),
            self.inner.param_dim()
        )
    }
}

/// A labeled binary-classification dataset with a uniform input dimension.
#[pyclass(frozen)]
struct Dataset {
    inner: LabeledDataset,
}

#[pymethods]
impl Dataset {
    /// Build from `[(x, y), ...]` pairs with `y` in `{1, -1}`.
    #[staticmethod]
    fn from_examples(examples: Vec<(Vec<f64>, i8)>) -> PyResult<Self> {
        let mut rows = Vec::with_capacity(examples.len());
        for (x, y) in examples {
            rows.push(LabeledExample {
                x: to_input(x)?,
                y: parse_label(y)?,
            });
        }
        Ok(Dataset {
            inner: LabeledDataset::new(rows).map_err(core_err)?,
        })
    }

    /// Seeded standard-normal inputs labeled by the sign of the first
    /// coordinate; `test=True` returns the held-out half of the stream.
    #[staticmethod]
    #[pyo3(signature = (n_per_split, input_dim, seed, test = false))]
    fn synthetic(n_per_split: usize, input_dim: usize, seed: u64, test: bool) -> PyResult<Self> {
        let (train, held_out) =
            make_synthetic_dataset(n_per_split, input_dim, seed).map_err(core_err)?;
        Ok(Dataset {
            inner: if test { held_out } else { train },
        })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn input_dim(&self) -> usize {
        self.inner.input_dim()
    }

    /// The i-th example as `(x, y)`.
    fn example(&self, i: usize) -> PyResult<(Vec<f64>, i8)> {
        if i >= self.inner.len() {
            return Err(PyValueError::new_err(format!(
                "index {i} out of range for {} examples",
                self.inner.len()
            )));
        }
        let ex = self.inner.get(i);
        Ok((ex.x.to_vec(), ex.y.value() as i8))
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset(len={}, input_dim={})",
            self.inner.len(),
            self.inner.input_dim()
        )
    }
}

/// Closed-form worst-case perturbation of the linear logistic loss.
///
/// Returns a dict with `delta`, `x_prime`, `achieved_loss`, `on_boundary`,
/// `degenerate` and `iterations`.
#[pyfunction]
fn exact_attack(
    py: Python<'_>,
    theta: Vec<f64>,
    x: Vec<f64>,
    y: i8,
    p: &str,
    epsilon: f64,
) -> PyResult<PyObject> {
    let theta = DVector::from_vec(theta);
    let x = DVector::from_vec(x);
    let y = parse_label(y)?;
    let result = match parse_norm(p)? {
        NormKind::L2 => exact_l2_attack(&theta, &x, y, epsilon),
        NormKind::LInf => exact_linf_attack(&theta, &x, y, epsilon),
    }
    .map_err(core_err)?;
    serialize_to_py(py, &result)
}

/// Worst-case linear logistic loss through the dual norm, with its
/// parameter gradient: `(value, grad)`.
#[pyfunction]
fn adversarial_loss(
    theta: Vec<f64>,
    x: Vec<f64>,
    y: i8,
    p: &str,
    epsilon: f64,
) -> PyResult<(f64, Vec<f64>)> {
    let theta = DVector::from_vec(theta);
    let x = DVector::from_vec(x);
    let y = parse_label(y)?;
    let p = parse_norm(p)?;
    let value = dual_norm_adv_loss(&theta, &x, y, epsilon, p).map_err(core_err)?;
    let grad = dual_norm_adv_loss_grad(&theta, &x, y, epsilon, p).map_err(core_err)?;
    Ok((value, grad.iter().copied().collect()))
}

/// Projected-gradient attack on any model's pointwise loss. Same result
/// dict as [`exact_attack`].
#[pyfunction]
#[pyo3(signature = (model, theta, x, y, p, epsilon, steps, step_size = None, random_init = false, seed = 0))]
#[allow(clippy::too_many_arguments)]
fn pgd_attack(
    py: Python<'_>,
    model: &Model,
    theta: Vec<f64>,
    x: Vec<f64>,
    y: i8,
    p: &str,
    epsilon: f64,
    steps: usize,
    step_size: Option<f64>,
    random_init: bool,
    seed: u64,
) -> PyResult<PyObject> {
    let ball = NormBall::new(parse_norm(p)?, epsilon).map_err(core_err)?;
    let step = step_size.unwrap_or((epsilon / 4.0).max(f64::MIN_POSITIVE));
    let cfg = PgdConfig::new(steps, step, random_init, seed).map_err(core_err)?;
    let result = advsmooth_core::attack::pgd_attack(
        &model.inner,
        &to_param(theta)?,
        &to_input(x)?,
        parse_label(y)?,
        &ball,
        &cfg,
    )
    .map_err(core_err)?;
    serialize_to_py(py, &result)
}

/// Mean loss of a variant (JSON, e.g. `{"variant": "adv_l2", "epsilon": 0.6}`)
/// over a dataset at one parameter point.
#[pyfunction]
#[pyo3(signature = (model, dataset, variant_json, theta, seed = 0))]
fn dataset_loss(
    model: &Model,
    dataset: &Dataset,
    variant_json: &str,
    theta: Vec<f64>,
    seed: u64,
) -> PyResult<f64> {
    let variant: LossVariant = parse_json("loss variant", variant_json)?;
    dataset_objective(
        &model.inner,
        &dataset.inner,
        &variant,
        &DVector::from_vec(theta),
        seed,
    )
    .map_err(core_err)
}

/// Gaussian-smoothed (local-entropy) objective of a base variant over a
/// dataset, via tensor-product Gauss–Legendre quadrature.
///
/// Returns a dict with `value`, `gradient`, `hessian`, `mean`, `covariance`
/// and `sigma1_bound`.
#[pyfunction]
#[pyo3(signature = (model, dataset, base_json, theta, gamma, half_width = 6.0, points_per_axis = 64, seed = 0))]
#[allow(clippy::too_many_arguments)]
fn local_entropy(
    py: Python<'_>,
    model: &Model,
    dataset: &Dataset,
    base_json: &str,
    theta: Vec<f64>,
    gamma: f64,
    half_width: f64,
    points_per_axis: usize,
    seed: u64,
) -> PyResult<PyObject> {
    let base: LossVariant = parse_json("base loss variant", base_json)?;
    let combined = LossVariant::Entropy {
        gamma,
        quad: QuadratureSpec {
            half_width,
            points_per_axis,
        },
        base: Box::new(base.clone()),
    };
    combined.validate().map_err(core_err)?;
    let quad = QuadratureSpec {
        half_width,
        points_per_axis,
    };
    let model = &model.inner;
    let data = &dataset.inner;
    let lossfn =
        |t: &DVector<f64>| dataset_objective(model, data, &base, t, seed).unwrap_or(f64::NAN);
    let report = local_entropy_exact(&lossfn, &DVector::from_vec(theta), gamma, &quad)
        .map_err(core_err)?;
    serialize_to_py(py, &report)
}

/// Sample a loss variant over a 2-D parameter grid; `grid_json` has the
/// config-file `grid` schema. Returns the full grid record as a dict
/// (axes, row-major values, gradient norms, discontinuity flags).
#[pyfunction]
#[pyo3(signature = (model, dataset, grid_json, seed = 0))]
fn surface(
    py: Python<'_>,
    model: &Model,
    dataset: &Dataset,
    grid_json: &str,
    seed: u64,
) -> PyResult<PyObject> {
    let spec: GridSpec = parse_json("grid spec", grid_json)?;
    let grid = sample_surface(&model.inner, &dataset.inner, &spec, seed).map_err(core_err)?;
    serialize_to_py(py, &grid)
}

/// Full smoothness battery: sampled moduli over a box region, attack
/// curvature, worst-case Hessian spectral norm and sharpness. Returns the
/// report as a dict.
#[pyfunction]
#[pyo3(signature = (model, dataset, lo, hi, p, epsilon, reference_theta,
                    min_norm = None, pgd_steps = 10, n_samples = 500,
                    min_separation = 0.01, sharpness_radius = 0.1, seed = 0))]
#[allow(clippy::too_many_arguments)]
fn probe(
    py: Python<'_>,
    model: &Model,
    dataset: &Dataset,
    lo: Vec<f64>,
    hi: Vec<f64>,
    p: &str,
    epsilon: f64,
    reference_theta: Vec<f64>,
    min_norm: Option<f64>,
    pgd_steps: usize,
    n_samples: usize,
    min_separation: f64,
    sharpness_radius: f64,
    seed: u64,
) -> PyResult<PyObject> {
    let mut region = Region::new_box(lo, hi).map_err(core_err)?;
    if let Some(theta_min) = min_norm {
        region = region
            .with_predicate(RegionPredicate::NormAtLeast { theta_min })
            .map_err(core_err)?;
    }
    let ball = NormBall::new(parse_norm(p)?, epsilon).map_err(core_err)?;
    let pgd = PgdConfig::new(
        pgd_steps,
        (epsilon / 4.0).max(f64::MIN_POSITIVE),
        false,
        seed,
    )
    .map_err(core_err)?;
    let report = probe_report(
        &model.inner,
        &dataset.inner,
        &region,
        &ball,
        &pgd,
        &to_param(reference_theta)?,
        n_samples,
        min_separation,
        sharpness_radius,
        seed,
    )
    .map_err(core_err)?;
    serialize_to_py(py, &report)
}

/// Run one adversarial-training experiment from the JSON config used by the
/// command line. Returns a dict with `best_epoch`, `best_test_robust_acc`,
/// `best_theta`, `final_theta`, `config_sha256` and per-epoch `metrics`.
#[pyfunction]
fn train(py: Python<'_>, config_json: &str) -> PyResult<PyObject> {
    let cfg: ExperimentConfig = parse_json("experiment config", config_json)?;
    cfg.validate().map_err(core_err)?;
    let result = adversarial_train(&cfg, |_| {}).map_err(core_err)?;
    let value = serde_json::json!({
        "best_epoch": result.best_epoch,
        "best_test_robust_acc": result.best_test_robust_acc,
        "best_theta": result.best_theta.to_vec(),
        "final_theta": result.final_theta.to_vec(),
        "config_sha256": result.config_sha256,
        "metrics": result.metrics,
    });
    json_to_py(py, &value)
}

/// Run the seeded check battery; `suite` is `"attacks"`,
/// `"smoothness_probes"`, `"entropy_sgd"` or `None` for all. Returns a list
/// of dicts, one per check.
#[pyfunction]
#[pyo3(signature = (suite = None))]
fn verify_lemmas(py: Python<'_>, suite: Option<&str>) -> PyResult<PyObject> {
    let outcomes = match suite {
        None => verify::run_all(),
        Some("attacks") => verify::run_attack_checks(),
        Some("smoothness_probes") => verify::run_probe_checks(),
        Some("entropy_sgd") => verify::run_entropy_checks(),
        Some(other) => {
            return Err(PyValueError::new_err(format!(
                "unknown suite {other:?}; expected {}, {} or {}",
                CheckSuite::Attacks,
                CheckSuite::SmoothnessProbes,
                CheckSuite::EntropySgd
            )))
        }
    };
    serialize_to_py(py, &outcomes)
}

#[pymodule]
fn advsmooth(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<Model>()?;
    m.add_class::<Dataset>()?;
    m.add_function(wrap_pyfunction!(exact_attack, m)?)?;
    m.add_function(wrap_pyfunction!(adversarial_loss, m)?)?;
    m.add_function(wrap_pyfunction!(pgd_attack, m)?)?;
    m.add_function(wrap_pyfunction!(dataset_loss, m)?)?;
    m.add_function(wrap_pyfunction!(local_entropy, m)?)?;
    m.add_function(wrap_pyfunction!(surface, m)?)?;
    m.add_function(wrap_pyfunction!(probe, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(verify_lemmas, m)?)?;
    Ok(())
}
