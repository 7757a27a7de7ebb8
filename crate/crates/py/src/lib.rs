//! Python bindings: grids, heat states, the W entropy, μ(τ) and the experiment runner.

use std::f64::consts::PI;
use std::sync::Arc;

use entropy_lab_core::cli::{experiments::default_base, list_experiments, main_with_args};
use entropy_lab_core::entropy::{entropy_report, w_functional};
use entropy_lab_core::geometry::{build_grid, distance_values, ManifoldGrid, ManifoldKind, ScalarField};
use entropy_lab_core::harnack::{liyau_defect, sharp_defect};
use entropy_lab_core::heat::{delta_init, HeatSolver, HeatState, KernelOracle, OracleKind};
use entropy_lab_core::logsob::{gaussian_start, minimize_mu, mu_curve, EnergyForm, MuOptions, MuResult};
use entropy_lab_core::LabError;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn err(e: LabError) -> PyErr {
    PyValueError::new_err(e.to_string())
}

#[pyclass(name = "Grid", module = "entropy_lab", frozen)]
struct PyGrid {
    grid: Arc<ManifoldGrid>,
}

#[pymethods]
impl PyGrid {
    /// kind: circle, torus, sphere, box or disc. Unset dimensions take the CLI defaults.
    #[new]
    #[pyo3(signature = (kind, n0, n1 = 1, length = None, lx = None, ly = None, radius = None))]
    fn new(kind: &str, n0: usize, n1: usize, length: Option<f64>, lx: Option<f64>, ly: Option<f64>, radius: Option<f64>) -> PyResult<Self> {
        let kind = match kind {
            "circle" => ManifoldKind::Circle { length: length.unwrap_or(2.0 * PI) },
            "torus" => ManifoldKind::FlatTorus { lx: lx.unwrap_or(2.0 * PI), ly: ly.unwrap_or(2.0 * PI) },
            "sphere" => match radius {
                None => ManifoldKind::unit_sphere(),
                Some(a) => ManifoldKind::WarpedSurface {
                    warp: entropy_lab_core::geometry::WarpProfile::Sine { scale: a },
                    radius: PI * a,
                    outer: entropy_lab_core::geometry::OuterEnd::Pole,
                },
            },
            "box" => ManifoldKind::EuclideanBox { lx: lx.unwrap_or(8.0), ly: ly.unwrap_or(8.0) },
            "disc" => ManifoldKind::EuclideanDisc { radius: radius.unwrap_or(1.0) },
            other => return Err(PyValueError::new_err(format!("unknown manifold kind '{other}'"))),
        };
        Ok(PyGrid { grid: Arc::new(build_grid(kind, [n0, n1]).map_err(err)?) })
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.grid.kind.name()
    }

    #[getter]
    fn shape(&self) -> (usize, usize) {
        (self.grid.shape[0], self.grid.shape[1])
    }

    #[getter]
    fn dim(&self) -> usize {
        self.grid.dim
    }

    #[getter]
    fn node_volumes(&self) -> Vec<f64> {
        self.grid.node_volumes.clone()
    }

    fn total_volume(&self) -> f64 {
        self.grid.total_volume()
    }

    fn __len__(&self) -> usize {
        self.grid.len()
    }

    /// Geodesic distance of every node from the default base point.
    fn distance(&self) -> PyResult<Vec<f64>> {
        distance_values(&self.grid, default_base(&self.grid)).map_err(err)
    }

    /// The exact heat kernel at time t, where an oracle exists. On the box it is the Gaussian of the plane.
    fn kernel(&self, t: f64) -> PyResult<PyHeatState> {
        let base = default_base(&self.grid);
        let euclidean = matches!(self.grid.kind, ManifoldKind::EuclideanBox { .. }).then(|| KernelOracle::new(OracleKind::Euclidean));
        let oracle = KernelOracle::for_grid(&self.grid)
            .or(euclidean)
            .ok_or_else(|| PyValueError::new_err(format!("no kernel oracle on {}", self.grid.kind.name())))?;
        let u = ScalarField::new(self.grid.clone(), oracle.values(&self.grid, base, t).map_err(err)?).map_err(err)?;
        Ok(PyHeatState { state: HeatState::new(u, t, 0.0).map_err(err)? })
    }

    /// A unit-mass Gaussian at the base point standing in for the kernel at t0.
    fn delta(&self, t0: f64) -> PyResult<PyHeatState> {
        Ok(PyHeatState { state: delta_init(&self.grid, default_base(&self.grid), t0).map_err(err)? })
    }

    /// A heat state from node values (must be positive with unit mass).
    #[pyo3(signature = (values, t, tau0 = 0.0))]
    fn state(&self, values: Vec<f64>, t: f64, tau0: f64) -> PyResult<PyHeatState> {
        let u = ScalarField::new(self.grid.clone(), values).map_err(err)?;
        Ok(PyHeatState { state: HeatState::new(u, t, tau0).map_err(err)? })
    }

    fn __repr__(&self) -> String {
        format!("Grid({}, shape={:?})", self.grid.kind.name(), self.grid.shape)
    }
}

#[pyclass(name = "HeatState", module = "entropy_lab", frozen)]
struct PyHeatState {
    state: HeatState,
}

#[pymethods]
impl PyHeatState {
    #[getter]
    fn t(&self) -> f64 {
        self.state.t
    }

    #[getter]
    fn tau(&self) -> f64 {
        self.state.tau()
    }

    #[getter]
    fn values(&self) -> Vec<f64> {
        self.state.u.values.clone()
    }

    fn mass(&self) -> f64 {
        self.state.mass()
    }

    fn step(&self, dt: f64) -> PyResult<PyHeatState> {
        Ok(PyHeatState { state: HeatSolver::default().step(&self.state, dt).map_err(err)? })
    }

    /// count steps of size dt; the first entry is this state.
    fn trajectory(&self, dt: f64, count: usize) -> PyResult<Vec<PyHeatState>> {
        let traj = HeatSolver::default().trajectory(&self.state, dt, count).map_err(err)?;
        Ok(traj.into_iter().map(|state| PyHeatState { state }).collect())
    }

    fn w(&self) -> PyResult<f64> {
        w_functional(&self.state).map_err(err)
    }

    /// W, its two terms, the predicted dW/dt and the boundary term.
    fn report<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let r = entropy_report(&self.state).map_err(err)?;
        let d = PyDict::new(py);
        d.set_item("t", r.t)?;
        d.set_item("tau", r.tau)?;
        d.set_item("w", r.w)?;
        d.set_item("nash_term", r.nash_term)?;
        d.set_item("dirichlet_term", r.dirichlet_term)?;
        d.set_item("predicted_dwdt", r.predicted_dwdt)?;
        d.set_item("boundary_term", r.boundary_term)?;
        Ok(d)
    }

    fn sharp_defect(&self) -> PyResult<Vec<f64>> {
        Ok(sharp_defect(&self.state).map_err(err)?.values)
    }

    fn liyau_defect(&self) -> PyResult<Vec<f64>> {
        Ok(liyau_defect(&self.state).map_err(err)?.values)
    }
}

fn energy_form(grid: &ManifoldGrid) -> EnergyForm {
    if grid.is_closed() && grid.is_flat() {
        EnergyForm::Spectral
    } else {
        EnergyForm::Grid
    }
}

fn mu_dict<'py>(py: Python<'py>, tau: f64, r: &MuResult) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("tau", tau)?;
    d.set_item("mu", r.mu)?;
    d.set_item("converged", r.converged)?;
    d.set_item("iterations", r.iterations)?;
    d.set_item("el_residual", r.el_residual)?;
    d.set_item("psi", r.psi.values.clone())?;
    Ok(d)
}

/// μ(τ) from a Gaussian start at the base point.
#[pyfunction]
fn mu<'py>(py: Python<'py>, grid: &PyGrid, tau: f64) -> PyResult<Bound<'py, PyDict>> {
    let g = &grid.grid;
    let d = distance_values(g, default_base(g)).map_err(err)?;
    let opts = MuOptions { form: energy_form(g), ..MuOptions::default() };
    let r = minimize_mu(g, tau, &gaussian_start(g, &d, tau), &opts).map_err(err)?;
    mu_dict(py, tau, &r)
}

/// μ over an ascending list of τ, best of several starts at each.
#[pyfunction(name = "mu_curve")]
fn py_mu_curve<'py>(py: Python<'py>, grid: &PyGrid, taus: Vec<f64>) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let g = &grid.grid;
    let d = distance_values(g, default_base(g)).map_err(err)?;
    let opts = MuOptions { form: energy_form(g), ..MuOptions::default() };
    let curve = mu_curve(g, &taus, &d, &opts).map_err(err)?;
    curve.iter().map(|e| mu_dict(py, e.tau, &e.result)).collect()
}

#[pyfunction]
fn experiments() -> Vec<String> {
    list_experiments()
}

/// Runs the command line with the given arguments (without the program name); returns the exit code.
#[pyfunction]
fn run(py: Python<'_>, args: Vec<String>) -> i32 {
    let argv: Vec<String> = std::iter::once("entropy-lab".to_string()).chain(args).collect();
    py.detach(|| main_with_args(argv))
}

#[pymodule]
fn entropy_lab(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGrid>()?;
    m.add_class::<PyHeatState>()?;
    m.add_function(wrap_pyfunction!(mu, m)?)?;
    m.add_function(wrap_pyfunction!(py_mu_curve, m)?)?;
    m.add_function(wrap_pyfunction!(experiments, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
