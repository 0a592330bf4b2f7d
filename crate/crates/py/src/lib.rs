//! Python bindings: surfaces, formation design, Delaunay and rank checks,
//! and simulation.

use nalgebra::Vector3;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use shield_core::geometry::{self, CapClass};
use shield_core::rigidity::{verify_rank_prediction, Framework};
use shield_core::simulator::{self, StudyConfig};
use shield_core::{builder, ControlGains, FormationSpec, Method, QuadricSurface, ShieldError};

fn err(e: ShieldError) -> PyErr {
    match e {
        ShieldError::InvalidInput(_) | ShieldError::OutOfRange { .. } | ShieldError::Degenerate(_) => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn vec3(p: (f64, f64, f64)) -> Vector3<f64> {
    Vector3::new(p.0, p.1, p.2)
}

fn tuple3(p: &Vector3<f64>) -> (f64, f64, f64) {
    (p.x, p.y, p.z)
}

fn parse_method(name: &str) -> PyResult<Method> {
    match name {
        "euler" => Ok(Method::Euler),
        "rk4" => Ok(Method::Rk4),
        "rk4-imex" | "rk4_imex" => Ok(Method::Rk4Imex),
        other => Err(PyValueError::new_err(format!("unknown method {other:?}"))),
    }
}

#[pyclass(name = "Surface", module = "shield", from_py_object)]
#[derive(Clone)]
struct PySurface {
    inner: QuadricSurface,
}

#[pymethods]
impl PySurface {
    #[staticmethod]
    #[pyo3(signature = (r, center = (0.0, 0.0, 0.0)))]
    fn sphere(r: f64, center: (f64, f64, f64)) -> PyResult<Self> {
        Ok(Self { inner: QuadricSurface::semi_sphere(r).map_err(err)?.with_center(vec3(center)) })
    }

    #[staticmethod]
    #[pyo3(signature = (a, b, c, center = (0.0, 0.0, 0.0)))]
    fn ellipsoid(a: f64, b: f64, c: f64, center: (f64, f64, f64)) -> PyResult<Self> {
        Ok(Self { inner: QuadricSurface::semi_ellipsoid(a, b, c).map_err(err)?.with_center(vec3(center)) })
    }

    #[staticmethod]
    #[pyo3(signature = (a, height, b = None))]
    fn cylinder(a: f64, height: f64, b: Option<f64>) -> PyResult<Self> {
        Ok(Self { inner: QuadricSurface::elliptic_cylinder(a, b.unwrap_or(a), height).map_err(err)? })
    }

    #[staticmethod]
    #[pyo3(signature = (a, c, b = None))]
    fn cone(a: f64, c: f64, b: Option<f64>) -> PyResult<Self> {
        Ok(Self { inner: QuadricSurface::elliptic_cone(a, b.unwrap_or(a), c).map_err(err)? })
    }

    fn residual(&self, p: (f64, f64, f64)) -> f64 {
        self.inner.residual(&vec3(p))
    }

    fn gradient(&self, p: (f64, f64, f64)) -> (f64, f64, f64) {
        tuple3(&self.inner.gradient(&vec3(p)))
    }

    fn total_area(&self) -> f64 {
        self.inner.total_area()
    }

    fn boundary_length(&self) -> f64 {
        self.inner.boundary_length()
    }

    fn h_max(&self) -> f64 {
        self.inner.h_max()
    }

    #[getter]
    fn q(&self) -> (f64, f64, f64) {
        (self.inner.q[0], self.inner.q[1], self.inner.q[2])
    }

    fn __repr__(&self) -> String {
        format!("Surface({:?}, q={:?})", self.inner.kind, self.inner.q)
    }
}

#[pyclass(name = "Gains", module = "shield", from_py_object)]
#[derive(Clone)]
struct PyGains {
    inner: ControlGains,
}

#[pymethods]
impl PyGains {
    #[new]
    #[pyo3(signature = (kappa1 = 0.1, kappa2 = 1000.0, kappa3 = 1e-3, barrier_eps = None))]
    fn new(kappa1: f64, kappa2: f64, kappa3: f64, barrier_eps: Option<f64>) -> PyResult<Self> {
        let inner = ControlGains { barrier_eps, ..ControlGains::new(kappa1, kappa2, kappa3) };
        inner.validate().map_err(err)?;
        Ok(Self { inner })
    }

    fn __repr__(&self) -> String {
        let g = &self.inner;
        format!("Gains({}, {}, {}, barrier_eps={:?})", g.kappa1, g.kappa2, g.kappa3, g.barrier_eps)
    }
}

#[pyclass(name = "Formation", module = "shield", from_py_object)]
#[derive(Clone)]
struct PyFormation {
    inner: FormationSpec,
}

#[pymethods]
impl PyFormation {
    #[staticmethod]
    #[pyo3(signature = (surface, n, edge_slack = None))]
    fn design(surface: &PySurface, n: usize, edge_slack: Option<f64>) -> PyResult<Self> {
        Ok(Self { inner: builder::design(&surface.inner, n, edge_slack).map_err(err)? })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self { inner: FormationSpec::from_json(text).map_err(err)? })
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[getter]
    fn positions(&self) -> Vec<(f64, f64, f64)> {
        self.inner.positions.iter().map(tuple3).collect()
    }

    #[getter]
    fn edges(&self) -> Vec<(usize, usize, f64)> {
        self.inner.edges.iter().map(|e| (e.i, e.j, e.target)).collect()
    }

    /// `(h_k, n_k, d_k)` per ring.
    #[getter]
    fn rings(&self) -> Vec<(f64, usize, f64)> {
        self.inner.rings.iter().map(|r| (r.height, r.count, r.spacing)).collect()
    }

    #[getter]
    fn d_global(&self) -> f64 {
        self.inner.d_global
    }

    #[getter]
    fn node_count(&self) -> usize {
        self.inner.node_count()
    }

    #[getter]
    fn edge_count(&self) -> usize {
        self.inner.edge_count()
    }

    fn edge_bounds_ok(&self) -> bool {
        self.inner.edge_bounds_ok()
    }

    fn is_connected(&self) -> bool {
        self.inner.is_connected()
    }

    /// Violations as `((i, j, k), node)` pairs.
    fn delaunay_violations(&self) -> PyResult<Vec<((usize, usize, usize), usize)>> {
        let report = geometry::check_delaunay(&self.inner).map_err(err)?;
        Ok(report.violations.iter().map(|v| ((v.triangle[0], v.triangle[1], v.triangle[2]), v.node)).collect())
    }

    #[pyo3(signature = (kappa1 = 0.1, kappa2 = 1000.0))]
    fn rank<'py>(&self, py: Python<'py>, kappa1: f64, kappa2: f64) -> PyResult<Bound<'py, PyDict>> {
        let fw = Framework::from_spec(&self.inner).map_err(err)?;
        let r = verify_rank_prediction(&fw, kappa1, kappa2);
        let d = PyDict::new(py);
        d.set_item("n", r.n)?;
        d.set_item("n_e", r.n_e)?;
        d.set_item("s", r.s)?;
        d.set_item("predicted_rank", r.predicted_rank)?;
        d.set_item("measured_rank", r.measured_rank)?;
        d.set_item("agrees", r.agrees)?;
        Ok(d)
    }

    fn __repr__(&self) -> String {
        format!("Formation(N={}, N_e={}, d={:.4})", self.inner.node_count(), self.inner.edge_count(), self.inner.d_global)
    }
}

#[pyfunction]
fn max_interdistance(n: usize, area: f64, boundary: f64) -> PyResult<f64> {
    builder::max_interdistance(n, area, boundary).map_err(err)
}

/// `"inside"`, `"outside"` or `"boundary"` for `d` against the circumcircle cap of `a, b, c`.
#[pyfunction]
fn in_cap_test(a: (f64, f64, f64), b: (f64, f64, f64), c: (f64, f64, f64), d: (f64, f64, f64)) -> PyResult<&'static str> {
    Ok(match geometry::in_cap_test(&vec3(a), &vec3(b), &vec3(c), &vec3(d)).map_err(err)? {
        CapClass::Inside => "inside",
        CapClass::Outside => "outside",
        CapClass::OnBoundary => "boundary",
    })
}

#[pyfunction]
fn random_initial_conditions(formation: &PyFormation, delta: f64, seed: u64) -> PyResult<Vec<(f64, f64, f64)>> {
    let p = simulator::random_initial_conditions(&formation.inner, delta, seed).map_err(err)?;
    Ok(p.iter().map(tuple3).collect())
}

/// Integrates from `initial` and returns the sampled series as a dict.
#[pyfunction]
#[pyo3(signature = (formation, gains, initial, t_end, dt = simulator::DEFAULT_DT, method = "rk4-imex"))]
fn simulate<'py>(
    py: Python<'py>,
    formation: &PyFormation,
    gains: &PyGains,
    initial: Vec<(f64, f64, f64)>,
    t_end: f64,
    dt: f64,
    method: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let p0: Vec<Vector3<f64>> = initial.into_iter().map(vec3).collect();
    let method = parse_method(method)?;
    let traj = py
        .detach(|| simulator::integrate(&formation.inner, &gains.inner, &p0, dt, t_end, method))
        .map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("t", traj.times.clone())?;
    d.set_item("e_norm", traj.edge_error_norm.clone())?;
    d.set_item("fs_norm", traj.surface_residual_norm.clone())?;
    d.set_item("potential", traj.potential.clone())?;
    d.set_item("final_state", traj.final_state().iter().map(tuple3).collect::<Vec<_>>())?;
    d.set_item("monotone", traj.potential_monotone(1e-9))?;
    d.set_item("min_z", traj.min_z)?;
    Ok(d)
}

/// Rows of `(delta, t, mean_e, sd_e, mean_fs, sd_fs)`.
#[pyfunction]
#[pyo3(signature = (formation, gains, deltas, runs_per_delta = 5, sample_times = vec![8.0, 16.0, 30.0], seed = 0, t_end = 30.0, dt = simulator::DEFAULT_DT))]
#[allow(clippy::too_many_arguments)]
fn statistical_study(
    py: Python<'_>,
    formation: &PyFormation,
    gains: &PyGains,
    deltas: Vec<f64>,
    runs_per_delta: usize,
    sample_times: Vec<f64>,
    seed: u64,
    t_end: f64,
    dt: f64,
) -> PyResult<Vec<(f64, f64, f64, f64, f64, f64)>> {
    let cfg = StudyConfig { deltas, runs_per_delta, sample_times, base_seed: seed, dt, t_end, method: Method::default() };
    let rows = py.detach(|| simulator::statistical_study(&formation.inner, &gains.inner, &cfg)).map_err(err)?;
    Ok(rows.iter().map(|r| (r.delta, r.t, r.mean_e, r.sd_e, r.mean_fs, r.sd_fs)).collect())
}

#[pymodule]
fn shield(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySurface>()?;
    m.add_class::<PyGains>()?;
    m.add_class::<PyFormation>()?;
    m.add_function(wrap_pyfunction!(max_interdistance, m)?)?;
    m.add_function(wrap_pyfunction!(in_cap_test, m)?)?;
    m.add_function(wrap_pyfunction!(random_initial_conditions, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(statistical_study, m)?)?;
    Ok(())
}
