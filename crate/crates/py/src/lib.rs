//! Python bindings: `import fraclab_py`.

use fraclab::allen_cahn::{self as ac, Symmetry};
use fraclab::kernel::{self as kern, HeatMethod, KernelParams, KsMethod};
use fraclab::minmax::{self, EnergyMode};
use fraclab::perimeter::{self, PerimeterParams, SetIndicator as CoreSet, Shape};
use fraclab::{fractional_ops, Error};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use serde::Serialize;
use serde_json::Value;

fn err(e: Error) -> PyErr {
    match e {
        Error::InvalidTorus(_) | Error::InvalidGrid(_) | Error::ShapeMismatch(_) | Error::InvalidParameter { .. } => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn value_to_py<'py>(py: Python<'py>, v: &Value) -> PyResult<Bound<'py, PyAny>> {
    Ok(match v {
        Value::Null => py.None().into_bound(py),
        Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any(),
        Value::Number(n) => match n.as_i64() {
            Some(i) => i.into_pyobject(py)?.into_any(),
            None => n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any(),
        },
        Value::String(s) => s.into_pyobject(py)?.into_any(),
        Value::Array(a) => {
            let list = PyList::empty(py);
            for x in a {
                list.append(value_to_py(py, x)?)?;
            }
            list.into_any()
        }
        Value::Object(o) => {
            let dict = PyDict::new(py);
            for (k, x) in o {
                dict.set_item(k, value_to_py(py, x)?)?;
            }
            dict.into_any()
        }
    })
}

fn to_dict<'py, T: Serialize>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    let value = serde_json::to_value(v).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    value_to_py(py, &value)
}

/// Flat torus with a uniform grid.
#[pyclass(frozen, skip_from_py_object, module = "fraclab_py")]
#[derive(Clone)]
struct Domain {
    inner: fraclab::Domain,
}

#[pymethods]
impl Domain {
    #[new]
    fn new(side_lengths: Vec<f64>, points_per_axis: Vec<usize>) -> PyResult<Self> {
        let torus = fraclab::FlatTorus::new(side_lengths).map_err(err)?;
        let grid = fraclab::GridSpec::new(points_per_axis).map_err(err)?;
        Ok(Self {
            inner: fraclab::Domain::new(torus, grid).map_err(err)?,
        })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn shape(&self) -> Vec<usize> {
        self.inner.shape().to_vec()
    }

    #[getter]
    fn side_lengths(&self) -> Vec<f64> {
        self.inner.torus.side_lengths().to_vec()
    }

    #[getter]
    fn h(&self) -> f64 {
        self.inner.h()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    /// Grid point coordinates in flat (row-major) order.
    fn points(&self) -> Vec<Vec<f64>> {
        (0..self.inner.len()).map(|f| self.inner.point(f)).collect()
    }

    fn constant(&self, c: f64) -> GridField {
        GridField {
            inner: self.inner.constant(c),
        }
    }

    /// Field from flat grid values.
    fn field(&self, values: Vec<f64>) -> PyResult<GridField> {
        Ok(GridField {
            inner: self.inner.field(values).map_err(err)?,
        })
    }

    /// a · cos(2π k·x / L)
    fn mode(&self, k: Vec<i64>, amplitude: f64) -> PyResult<GridField> {
        if k.len() != self.inner.dim() {
            return Err(PyValueError::new_err("k needs one entry per axis"));
        }
        let sides = self.inner.torus.side_lengths().to_vec();
        let tau = 2.0 * std::f64::consts::PI;
        Ok(GridField {
            inner: self
                .inner
                .sample(|x| amplitude * x.iter().zip(&k).zip(&sides).map(|((x, k), l)| tau * *k as f64 * x / l).sum::<f64>().cos()),
        })
    }

    fn __repr__(&self) -> String {
        format!("Domain(side_lengths={:?}, points_per_axis={:?})", self.inner.torus.side_lengths(), self.inner.shape())
    }
}

#[pyclass(frozen, skip_from_py_object, module = "fraclab_py")]
#[derive(Clone)]
struct GridField {
    inner: fraclab::GridField,
}

#[pymethods]
impl GridField {
    #[getter]
    fn values(&self) -> Vec<f64> {
        self.inner.values.clone()
    }

    #[getter]
    fn domain(&self) -> Domain {
        Domain {
            inner: self.inner.domain.clone(),
        }
    }

    fn integral(&self) -> f64 {
        self.inner.integral()
    }

    fn sup_norm(&self) -> f64 {
        self.inner.sup_norm()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

/// ±1 indicator of a set.
#[pyclass(frozen, skip_from_py_object, module = "fraclab_py")]
#[derive(Clone)]
struct SetIndicator {
    inner: CoreSet,
}

#[pymethods]
impl SetIndicator {
    /// {a ≤ x_axis < b}
    #[staticmethod]
    fn stripe(domain: &Domain, axis: usize, a: f64, b: f64) -> PyResult<Self> {
        Ok(Self {
            inner: CoreSet::from_shape(&domain.inner, Shape::Stripe { axis, a, b }).map_err(err)?,
        })
    }

    #[staticmethod]
    fn ball(domain: &Domain, center: Vec<f64>, radius: f64) -> PyResult<Self> {
        Ok(Self {
            inner: CoreSet::from_shape(&domain.inner, Shape::Ball { center, radius }).map_err(err)?,
        })
    }

    /// {u > 0}
    #[staticmethod]
    fn threshold(u: &GridField) -> Self {
        Self {
            inner: CoreSet::threshold(&u.inner),
        }
    }

    fn complement(&self) -> Self {
        Self {
            inner: self.inner.complement(),
        }
    }

    #[getter]
    fn field(&self) -> GridField {
        GridField {
            inner: self.inner.field.clone(),
        }
    }

    fn volume(&self) -> f64 {
        self.inner.volume()
    }
}

#[pyclass(frozen, skip_from_py_object, module = "fraclab_py")]
#[derive(Clone)]
struct ACParams {
    inner: ac::ACParams,
}

#[pymethods]
impl ACParams {
    #[new]
    #[pyo3(signature = (s, epsilon, flow_dt=None, tol_residual=None, max_iters=None))]
    fn new(s: f64, epsilon: f64, flow_dt: Option<f64>, tol_residual: Option<f64>, max_iters: Option<usize>) -> PyResult<Self> {
        let mut p = ac::ACParams::new(s, epsilon).map_err(err)?;
        if let Some(v) = flow_dt {
            p.flow_dt = v;
        }
        if let Some(v) = tol_residual {
            p.tol_residual = v;
        }
        if let Some(v) = max_iters {
            p.max_iters = v;
        }
        p.validate().map_err(err)?;
        Ok(Self { inner: p })
    }

    #[getter]
    fn s(&self) -> f64 {
        self.inner.s
    }

    #[getter]
    fn epsilon(&self) -> f64 {
        self.inner.epsilon
    }

    #[getter]
    fn flow_dt(&self) -> f64 {
        self.inner.flow_dt
    }

    #[getter]
    fn tol_residual(&self) -> f64 {
        self.inner.tol_residual
    }

    #[getter]
    fn max_iters(&self) -> usize {
        self.inner.max_iters
    }
}

#[pyclass(frozen, module = "fraclab_py")]
struct ACSolution {
    inner: ac::ACSolution,
}

#[pymethods]
impl ACSolution {
    #[getter]
    fn field(&self) -> GridField {
        GridField {
            inner: self.inner.field().clone(),
        }
    }

    #[getter]
    fn converged(&self) -> bool {
        self.inner.converged
    }

    #[getter]
    fn residual_norm(&self) -> f64 {
        self.inner.residual_norm
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.inner.iterations
    }

    #[getter]
    fn energy_history(&self) -> Vec<f64> {
        self.inner.energy_history.clone()
    }

    #[getter]
    fn energy<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_dict(py, &self.inner.energy)
    }
}

fn heat_method(name: &str) -> PyResult<HeatMethod> {
    match name {
        "spectral" => Ok(HeatMethod::Spectral),
        "lattice" => Ok(HeatMethod::Lattice),
        _ => Err(PyValueError::new_err("method must be 'spectral' or 'lattice'")),
    }
}

fn ks_method(name: &str) -> PyResult<KsMethod> {
    match name {
        "lattice_riesz" => Ok(KsMethod::LatticeRiesz),
        "subordination" => Ok(KsMethod::Subordination),
        "ewald" => Ok(KsMethod::Ewald),
        _ => Err(PyValueError::new_err("method must be 'lattice_riesz', 'subordination' or 'ewald'")),
    }
}

/// Heat kernel H(x, y, t) of the torus.
#[pyfunction]
#[pyo3(signature = (domain, x, y, t, method="spectral"))]
fn heat_kernel(domain: &Domain, x: Vec<f64>, y: Vec<f64>, t: f64, method: &str) -> PyResult<f64> {
    kern::heat_kernel(&domain.inner.torus, &x, &y, t, heat_method(method)?).map_err(err)
}

/// K_s(x, y); returns (value, error_bound).
#[pyfunction]
#[pyo3(signature = (domain, x, y, s, method="ewald"))]
fn ks_kernel(domain: &Domain, x: Vec<f64>, y: Vec<f64>, s: f64, method: &str) -> PyResult<(f64, f64)> {
    let params = KernelParams::new(s).map_err(err)?;
    let v = kern::ks_kernel(&domain.inner.torus, &x, &y, &params, ks_method(method)?).map_err(err)?;
    Ok((v.value, v.error_bound))
}

/// Spectral, double-integral and extension seminorms with their ratios.
#[pyfunction]
fn seminorm_all<'py>(py: Python<'py>, u: &GridField, s: f64) -> PyResult<Bound<'py, PyAny>> {
    to_dict(py, &fractional_ops::seminorm_all(&u.inner, s).map_err(err)?)
}

#[pyfunction]
fn frac_laplacian(u: &GridField, s: f64) -> GridField {
    GridField {
        inner: fractional_ops::frac_laplacian_spectral(&u.inner, s),
    }
}

#[pyfunction]
#[pyo3(signature = (set, s, method="auto"))]
fn per_s(set: &SetIndicator, s: f64, method: &str) -> PyResult<f64> {
    let method = serde_json::from_value(Value::String(method.into()))
        .map_err(|_| PyValueError::new_err("method must be 'auto', 'grid' or 'exact'"))?;
    perimeter::per_s(&set.inner, s, &PerimeterParams { method }).map_err(err)
}

#[pyfunction]
fn classical_perimeter(set: &SetIndicator) -> f64 {
    perimeter::classical_perimeter(&set.inner)
}

/// Nonlocal mean curvature at a boundary point.
#[pyfunction]
fn nmc<'py>(py: Python<'py>, set: &SetIndicator, point: Vec<f64>, s: f64) -> PyResult<Bound<'py, PyAny>> {
    to_dict(py, &perimeter::nmc(&set.inner, &point, s, &PerimeterParams::default()).map_err(err)?)
}

#[pyfunction]
fn energy<'py>(py: Python<'py>, u: &GridField, params: &ACParams) -> PyResult<Bound<'py, PyAny>> {
    to_dict(py, &ac::energy(&u.inner, &params.inner, None).map_err(err)?)
}

#[pyfunction]
fn residual(u: &GridField, params: &ACParams) -> GridField {
    GridField {
        inner: ac::residual(&u.inner, &params.inner),
    }
}

#[pyfunction]
#[pyo3(signature = (u0, params, odd=false))]
fn gradient_flow(u0: &GridField, params: &ACParams, odd: bool) -> PyResult<ACSolution> {
    let sym = if odd { Symmetry::Odd } else { Symmetry::None };
    Ok(ACSolution {
        inner: ac::gradient_flow_with(&u0.inner, &params.inner, sym).map_err(err)?,
    })
}

#[pyfunction]
#[pyo3(signature = (u, params, k_max=16, region=None))]
fn morse_index<'py>(py: Python<'py>, u: &GridField, params: &ACParams, k_max: usize, region: Option<&SetIndicator>) -> PyResult<Bound<'py, PyAny>> {
    let rep = ac::morse_index(&u.inner, &params.inner, region.map(|r| &r.inner), k_max).map_err(err)?;
    to_dict(py, &rep)
}

/// 1D layer at ε = 1; returns a dict with x, v and diagnostics.
#[pyfunction]
fn layer_1d<'py>(py: Python<'py>, s: f64, half_length: f64, grid: usize) -> PyResult<Bound<'py, PyAny>> {
    let l = ac::layer_1d(s, half_length, grid).map_err(err)?;
    let (x, v): (Vec<f64>, Vec<f64>) = l.half_period.iter().copied().unzip();
    let out = serde_json::json!({
        "x": x,
        "v": v,
        "residual_sup": l.residual_sup,
        "oddness_defect": l.oddness_defect(),
        "monotone": l.is_monotone(),
    });
    value_to_py(py, &out)
}

fn energy_mode(epsilon: Option<f64>) -> EnergyMode {
    match epsilon {
        Some(epsilon) => EnergyMode::Ac { epsilon },
        None => EnergyMode::SharpInterface,
    }
}

/// Max member energy of the p-sweepout; sharp interface unless `epsilon` is given.
#[pyfunction]
#[pyo3(signature = (domain, p, s, sphere_samples=200, seed=0, cover_seed=0, epsilon=None))]
fn sweepout_max_energy<'py>(
    py: Python<'py>,
    domain: &Domain,
    p: usize,
    s: f64,
    sphere_samples: usize,
    seed: u64,
    cover_seed: u64,
    epsilon: Option<f64>,
) -> PyResult<Bound<'py, PyAny>> {
    let cover = minmax::ball_cover(&domain.inner, p, cover_seed).map_err(err)?;
    let row = minmax::sweepout_max_energy(&domain.inner, &cover, s, energy_mode(epsilon), sphere_samples, seed).map_err(err)?;
    to_dict(py, &row)
}

#[pyfunction]
#[pyo3(signature = (domain, p_values, s, sphere_samples=200, seed=0, cover_seed=0, epsilon=None))]
#[allow(clippy::too_many_arguments)]
fn scaling_experiment<'py>(
    py: Python<'py>,
    domain: &Domain,
    p_values: Vec<usize>,
    s: f64,
    sphere_samples: usize,
    seed: u64,
    cover_seed: u64,
    epsilon: Option<f64>,
) -> PyResult<Bound<'py, PyAny>> {
    let rep = py
        .detach(|| minmax::scaling_experiment(&domain.inner, &p_values, s, energy_mode(epsilon), sphere_samples, seed, cover_seed))
        .map_err(err)?;
    to_dict(py, &rep)
}

#[pyfunction]
#[pyo3(signature = (domain, p, s, eps_list, sphere_samples=200, seed=0))]
fn epsilon_limit_experiment<'py>(
    py: Python<'py>,
    domain: &Domain,
    p: usize,
    s: f64,
    eps_list: Vec<f64>,
    sphere_samples: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let rows = py
        .detach(|| minmax::epsilon_limit_experiment(&domain.inner, p, s, &eps_list, sphere_samples, seed))
        .map_err(err)?;
    to_dict(py, &rows)
}

#[pymodule]
fn fraclab_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<Domain>()?;
    m.add_class::<GridField>()?;
    m.add_class::<SetIndicator>()?;
    m.add_class::<ACParams>()?;
    m.add_class::<ACSolution>()?;
    m.add_function(wrap_pyfunction!(heat_kernel, m)?)?;
    m.add_function(wrap_pyfunction!(ks_kernel, m)?)?;
    m.add_function(wrap_pyfunction!(seminorm_all, m)?)?;
    m.add_function(wrap_pyfunction!(frac_laplacian, m)?)?;
    m.add_function(wrap_pyfunction!(per_s, m)?)?;
    m.add_function(wrap_pyfunction!(classical_perimeter, m)?)?;
    m.add_function(wrap_pyfunction!(nmc, m)?)?;
    m.add_function(wrap_pyfunction!(energy, m)?)?;
    m.add_function(wrap_pyfunction!(residual, m)?)?;
    m.add_function(wrap_pyfunction!(gradient_flow, m)?)?;
    m.add_function(wrap_pyfunction!(morse_index, m)?)?;
    m.add_function(wrap_pyfunction!(layer_1d, m)?)?;
    m.add_function(wrap_pyfunction!(sweepout_max_energy, m)?)?;
    m.add_function(wrap_pyfunction!(scaling_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(epsilon_limit_experiment, m)?)?;
    Ok(())
}
