//! Python bindings for the differential-game toolkit.
//!
//! The module exposes the main pipeline end to end: load and validate a
//! game spec, construct an admissible solution, audit it, simulate the
//! closed loop, accumulate discounted costs, and certify the Nash property
//! by dynamic programming. Phase-plane helpers (equilibria, linearization,
//! orbit integration, the determinant sandwich) are included for the
//! gradient-flow analysis.
//!
//! All heavy lifting stays in the core crate; this layer only converts
//! between Python and Rust types. Reports cross the boundary as plain
//! dicts and solutions/specs as opaque handles with JSON round-trips.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

use dgsolve::equilibrium_solver as solver;
use dgsolve::game_model::{classify_regime, validate_game, GameSpec as CoreSpec, Regime};
use dgsolve::game_simulator as sim;
use dgsolve::hj_system;
use dgsolve::nash_verifier as nash;
use dgsolve::phase_plane as phase;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

/// A validated two-player game specification.
#[pyclass(name = "GameSpec", frozen)]
struct PyGameSpec {
    inner: CoreSpec,
}

#[pymethods]
impl PyGameSpec {
    /// Parse a spec from its JSON representation.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner: CoreSpec = serde_json::from_str(text).map_err(value_err)?;
        Ok(PyGameSpec { inner })
    }

    /// Constant-slope two-player game with unit control weights.
    #[staticmethod]
    #[pyo3(signature = (kappa1, kappa2, c_bound=4.0, half_width=5.0))]
    fn constant_slopes(kappa1: f64, kappa2: f64, c_bound: f64, half_width: f64) -> PyResult<Self> {
        let inner =
            CoreSpec::constant_slopes(kappa1, kappa2, c_bound, half_width).map_err(value_err)?;
        Ok(PyGameSpec { inner })
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string_pretty(&self.inner).map_err(runtime_err)
    }

    #[getter]
    fn players(&self) -> usize {
        self.inner.players
    }

    #[getter]
    fn half_width(&self) -> f64 {
        self.inner.half_width
    }

    #[getter]
    fn c_bound(&self) -> f64 {
        self.inner.c_bound
    }

    /// Check the standing assumptions; returns (ok, human-readable report).
    fn validate(&self) -> PyResult<(bool, String)> {
        let report = validate_game(&self.inner).map_err(value_err)?;
        Ok((report.is_empty(), report.to_string()))
    }

    /// Regime tag: "cooperative-increasing", "cooperative-decreasing",
    /// "conflicting", "linear-example" or "general".
    fn regime(&self) -> String {
        match classify_regime(&self.inner) {
            Regime::CooperativeIncreasing => "cooperative-increasing".into(),
            Regime::CooperativeDecreasing => "cooperative-decreasing".into(),
            Regime::Conflicting { .. } => "conflicting".into(),
            Regime::LinearExample { .. } => "linear-example".into(),
            Regime::General => "general".into(),
        }
    }

    fn __repr__(&self) -> String {
        format!(
            "GameSpec(players={}, C={}, L={})",
            self.inner.players, self.inner.c_bound, self.inner.half_width
        )
    }
}

fn audit_dict<'py>(
    py: Python<'py>,
    report: &solver::AdmissibilityReport,
) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("pass", report.pass)?;
    d.set_item("residual_max", report.residual_max)?;
    d.set_item("residual_ok", report.residual_ok)?;
    d.set_item("growth_slope", report.growth_slope)?;
    d.set_item("growth_ok", report.growth_ok)?;
    d.set_item("jumps_ok", report.jumps_ok)?;
    d.set_item("jump_count", report.jumps.len())?;
    Ok(d)
}

/// A sampled candidate solution of the stationary value system.
#[pyclass(name = "Solution", frozen)]
struct PySolution {
    inner: solver::PiecewiseSolution,
}

#[pymethods]
impl PySolution {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner: solver::PiecewiseSolution = serde_json::from_str(text).map_err(value_err)?;
        inner.validate().map_err(value_err)?;
        Ok(PySolution { inner })
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string_pretty(&self.inner).map_err(runtime_err)
    }

    #[getter]
    fn grid(&self) -> Vec<f64> {
        self.inner.grid.clone()
    }

    /// Gradient samples as a list of (p1, p2) pairs.
    #[getter]
    fn p(&self) -> Vec<(f64, f64)> {
        self.inner.p_samples.iter().map(|p| (p[0], p[1])).collect()
    }

    /// Value samples as a list of (u1, u2) pairs.
    #[getter]
    fn u(&self) -> Vec<(f64, f64)> {
        self.inner.u_samples.iter().map(|u| (u[0], u[1])).collect()
    }

    /// Interpolated gradient at `x`.
    fn p_at(&self, x: f64) -> (f64, f64) {
        let p = self.inner.p_at(x);
        (p[0], p[1])
    }

    /// Interpolated values at `x`.
    fn u_at(&self, x: f64) -> (f64, f64) {
        let u = self.inner.u_at(x);
        (u[0], u[1])
    }

    /// Equilibrium feedback controls at `x` (player-wise `-p_i/k_i`).
    fn feedback(&self, spec: &PyGameSpec, x: f64) -> (f64, f64) {
        let p = self.inner.p_at(x);
        (
            -p[0] / spec.inner.k[0].value(x),
            -p[1] / spec.inner.k[1].value(x),
        )
    }

    /// Audit against the admissibility conditions; returns a dict.
    fn audit<'py>(&self, py: Python<'py>, spec: &PyGameSpec) -> PyResult<Bound<'py, PyDict>> {
        audit_dict(py, &solver::audit(&self.inner, &spec.inner))
    }

    fn __repr__(&self) -> String {
        format!(
            "Solution(nodes={}, jumps={})",
            self.inner.grid.len(),
            self.inner.jumps.len()
        )
    }
}

/// Construct an admissible solution of the game's stationary system.
#[pyfunction]
#[pyo3(signature = (spec, tol=1e-8))]
fn solve(spec: &PyGameSpec, tol: f64) -> PyResult<PySolution> {
    let inner =
        solver::construct_admissible(&spec.inner, &solver::default_nu_schedule(), tol)
            .map_err(runtime_err)?;
    Ok(PySolution { inner })
}

/// Periodic solution of the antisymmetric linear game through (-alpha, alpha).
#[pyfunction]
#[pyo3(signature = (kappa, alpha, half_width=10.0))]
fn periodic_solution(kappa: f64, alpha: f64, half_width: f64) -> PyResult<PySolution> {
    let inner = solver::periodic_solution(kappa, alpha, half_width).map_err(runtime_err)?;
    Ok(PySolution { inner })
}

/// The two canonical rejected profiles, audited. Returns a list of dicts
/// with the profile label and its audit.
#[pyfunction]
fn counterexamples(py: Python<'_>) -> PyResult<Bound<'_, PyList>> {
    let out = PyList::empty(py);
    for (label, (spec, profile)) in [
        ("inadmissible-jump", solver::jump_counterexample()),
        ("superlinear-growth", solver::growth_counterexample()),
    ] {
        let d = PyDict::new(py);
        d.set_item("label", label)?;
        d.set_item("audit", audit_dict(py, &solver::audit(&profile, &spec))?)?;
        out.append(d)?;
    }
    Ok(out)
}

/// Closed-loop trajectory under the equilibrium feedback.
#[pyclass(name = "Trajectory", frozen)]
struct PyTrajectory {
    inner: sim::Trajectory,
}

#[pymethods]
impl PyTrajectory {
    #[getter]
    fn t(&self) -> Vec<f64> {
        self.inner.t_samples.clone()
    }

    #[getter]
    fn x(&self) -> Vec<f64> {
        self.inner.x_samples.clone()
    }

    #[getter]
    fn controls(&self) -> Vec<(f64, f64)> {
        self.inner.control_samples.iter().map(|a| (a[0], a[1])).collect()
    }

    /// Events as (t, x, kind) with kind in {"hit-jump-point",
    /// "reached-equilibrium", "truncated", "window-exceeded"}.
    fn events(&self) -> Vec<(f64, f64, String)> {
        self.inner
            .events
            .iter()
            .map(|e| {
                let kind = match e.kind {
                    sim::EventKind::HitJumpPoint => "hit-jump-point",
                    sim::EventKind::ReachedEquilibrium => "reached-equilibrium",
                    sim::EventKind::Truncated => "truncated",
                    sim::EventKind::WindowExceeded => "window-exceeded",
                };
                (e.t, e.x, kind.to_string())
            })
            .collect()
    }

    fn final_state(&self) -> f64 {
        self.inner.final_state()
    }

    /// Dense state reconstruction at time `t`.
    fn state_at(&self, t: f64) -> f64 {
        self.inner.state_at(t)
    }

    fn __repr__(&self) -> String {
        format!(
            "Trajectory(samples={}, horizon={})",
            self.inner.t_samples.len(),
            self.inner.horizon
        )
    }
}

/// Simulate the closed loop from `y` over `[0, horizon]`.
#[pyfunction]
#[pyo3(signature = (solution, spec, y, horizon=40.0))]
fn simulate(
    solution: &PySolution,
    spec: &PyGameSpec,
    y: f64,
    horizon: f64,
) -> PyResult<PyTrajectory> {
    let inner = sim::simulate(&solution.inner, &spec.inner, y, horizon).map_err(value_err)?;
    Ok(PyTrajectory { inner })
}

/// Discounted cost of each player along a trajectory; list of dicts with
/// running/control split and the truncation tail bound.
#[pyfunction]
fn evaluate_cost<'py>(
    py: Python<'py>,
    spec: &PyGameSpec,
    trajectory: &PyTrajectory,
    solution: &PySolution,
) -> PyResult<Bound<'py, PyList>> {
    let out = PyList::empty(py);
    for c in sim::evaluate_cost(&spec.inner, &trajectory.inner, &solution.inner) {
        let d = PyDict::new(py);
        d.set_item("player", c.player)?;
        d.set_item("running_cost", c.running_cost)?;
        d.set_item("control_cost", c.control_cost)?;
        d.set_item("total", c.total)?;
        d.set_item("tail_bound", c.tail_bound)?;
        out.append(d)?;
    }
    Ok(out)
}

/// Certify the Nash property by per-player dynamic programming. Returns a
/// dict report; `grid_n`/`dt`/`tol_dp` control the discretization.
#[pyfunction]
#[pyo3(signature = (solution, spec, probes, grid_n=801, dt=0.01, tol_dp=1e-2))]
fn check_nash<'py>(
    py: Python<'py>,
    solution: &PySolution,
    spec: &PyGameSpec,
    probes: Vec<f64>,
    grid_n: usize,
    dt: f64,
    tol_dp: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let options = nash::NashOptions {
        dp: nash::DpOptions { grid_n, dt, ..nash::DpOptions::default() },
        tol_dp,
    };
    let report = nash::check_nash(&solution.inner, &spec.inner, &probes, &options)
        .map_err(runtime_err)?;
    let d = PyDict::new(py);
    d.set_item("pass", report.pass)?;
    d.set_item("tol_dp", report.tol_dp)?;
    let certs = PyList::empty(py);
    for cert in &report.certificates {
        let c = PyDict::new(py);
        c.set_item("player", cert.player)?;
        c.set_item("min_gap", cert.min_gap)?;
        c.set_item("max_gap", cert.max_gap)?;
        c.set_item("richardson_error", cert.richardson_error)?;
        c.set_item("pass", cert.pass)?;
        let gaps = PyList::empty(py);
        for g in &cert.gaps {
            let e = PyDict::new(py);
            e.set_item("y", g.y)?;
            e.set_item("value_dp", g.value_dp)?;
            e.set_item("value_candidate", g.value_candidate)?;
            e.set_item("gap", g.gap)?;
            gaps.append(e)?;
        }
        c.set_item("gaps", gaps)?;
        certs.append(c)?;
    }
    d.set_item("certificates", certs)?;
    Ok(d)
}

/// Determinant of the gradient-system coefficient matrix.
#[pyfunction]
fn delta(p1: f64, p2: f64) -> f64 {
    hj_system::delta([p1, p2])
}

/// Equilibria of the frozen-slope planar field.
#[pyfunction]
fn find_equilibria(kappa1: f64, kappa2: f64) -> Vec<(f64, f64)> {
    phase::find_equilibria(kappa1, kappa2)
        .into_iter()
        .map(|p| (p[0], p[1]))
        .collect()
}

/// Linearization at an equilibrium: dict with the Jacobian and eigenvalues
/// as (re, im) pairs.
#[pyfunction]
fn linearize<'py>(
    py: Python<'py>,
    kappa1: f64,
    kappa2: f64,
    point: (f64, f64),
) -> PyResult<Bound<'py, PyDict>> {
    let lin = phase::linearize(kappa1, kappa2, [point.0, point.1]).map_err(value_err)?;
    let d = PyDict::new(py);
    d.set_item("jacobian", lin.jacobian.to_vec())?;
    d.set_item("eigenvalues", lin.eigenvalues.to_vec())?;
    Ok(d)
}

/// Integrate one orbit of the frozen-slope rescaled gradient flow from
/// `p0` over the span `s_max` (negative integrates backward). Returns a
/// dict with samples and the termination tag.
#[pyfunction]
#[pyo3(signature = (kappa, p0, s_max=50.0))]
fn integrate_orbit<'py>(
    py: Python<'py>,
    kappa: (f64, f64),
    p0: (f64, f64),
    s_max: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let orbit = phase::integrate_orbit(
        phase::SlopeField::Constant { kappa: [kappa.0, kappa.1] },
        [p0.0, p0.1],
        (0.0, s_max),
        &phase::OrbitOptions::default(),
    )
    .map_err(runtime_err)?;
    let window = phase::x_window(&orbit);
    let d = PyDict::new(py);
    d.set_item("s", orbit.s_samples.clone())?;
    d.set_item(
        "p",
        orbit.p_samples.iter().map(|p| (p[0], p[1])).collect::<Vec<_>>(),
    )?;
    d.set_item("x", orbit.x_samples.clone())?;
    d.set_item("termination", orbit.termination.tag())?;
    d.set_item("x_min", window.x_min)?;
    d.set_item("x_max", window.x_max)?;
    if let Some(expo) = orbit.blowup_fit_exponent() {
        d.set_item("blowup_exponent", expo)?;
    }
    Ok(d)
}

#[pymodule]
fn dgsolve_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGameSpec>()?;
    m.add_class::<PySolution>()?;
    m.add_class::<PyTrajectory>()?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(periodic_solution, m)?)?;
    m.add_function(wrap_pyfunction!(counterexamples, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_cost, m)?)?;
    m.add_function(wrap_pyfunction!(check_nash, m)?)?;
    m.add_function(wrap_pyfunction!(delta, m)?)?;
    m.add_function(wrap_pyfunction!(find_equilibria, m)?)?;
    m.add_function(wrap_pyfunction!(linearize, m)?)?;
    m.add_function(wrap_pyfunction!(integrate_orbit, m)?)?;
    Ok(())
}
