//! Python bindings: scenarios, the three solves, and the thermal helpers.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use reserve_opt::cli::{empirical_onset, Config};
use reserve_opt::problems::{build_capacity, build_delivery, build_reference, Scenario};
use reserve_opt::profiles::{self, ControlProfile, Instruction, InstructionSequence};
use reserve_opt::solver::{self, SolverConfig};
use reserve_opt::{thermal, Error};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Infeasible { .. } => PyRuntimeError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

#[pyclass(name = "Scenario", module = "reserve_opt_py", from_py_object)]
#[derive(Clone)]
struct PyScenario {
    inner: Scenario,
}

#[pymethods]
impl PyScenario {
    /// The desk-scale building used throughout the experiments.
    #[staticmethod]
    fn baseline() -> Self {
        Self { inner: Scenario::baseline() }
    }

    #[staticmethod]
    fn from_config(path: PathBuf) -> PyResult<Self> {
        let inner = Config::load(&path).and_then(|c| c.scenario()).map_err(to_py)?;
        Ok(Self { inner })
    }

    fn to_json(&self) -> PyResult<String> {
        Config::from_parts(&self.inner, SolverConfig::default(), None).to_json().map_err(to_py)
    }

    #[getter]
    fn horizon(&self) -> f64 {
        self.inner.horizon
    }

    #[getter]
    fn x_hat(&self) -> f64 {
        self.inner.x_hat
    }

    #[setter]
    fn set_x_hat(&mut self, v: f64) -> PyResult<()> {
        self.update(|s| s.x_hat = v)
    }

    #[getter]
    fn x0(&self) -> f64 {
        self.inner.x0
    }

    #[setter]
    fn set_x0(&mut self, v: f64) -> PyResult<()> {
        self.update(|s| s.x0 = v)
    }

    /// Benefit-cost ratio `R / P`; setting it moves `R`.
    #[getter]
    fn ratio(&self) -> f64 {
        self.inner.ratio()
    }

    #[setter]
    fn set_ratio(&mut self, v: f64) -> PyResult<()> {
        self.update(|s| s.econ.payment = v * s.econ.price)
    }

    #[getter]
    fn alpha_alt(&self) -> f64 {
        self.inner.alpha_alt
    }

    #[setter]
    fn set_alpha_alt(&mut self, v: f64) -> PyResult<()> {
        self.update(|s| s.alpha_alt = v)
    }

    fn landmark_t2(&self) -> PyResult<f64> {
        thermal::landmark_t2(&self.inner).map_err(to_py)
    }

    fn landmark_t_check(&self) -> PyResult<f64> {
        thermal::landmark_t_check(&self.inner).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        let s = &self.inner;
        format!("Scenario(T={}, X_hat={}, x0={}, R/P={})", s.horizon, s.x_hat, s.x0, s.ratio())
    }
}

impl PyScenario {
    fn update(&mut self, f: impl FnOnce(&mut Scenario)) -> PyResult<()> {
        let mut next = self.inner.clone();
        f(&mut next);
        next.validate().map_err(to_py)?;
        self.inner = next;
        Ok(())
    }
}

#[pyclass(name = "Solution", module = "reserve_opt_py", from_py_object)]
#[derive(Clone)]
struct PySolution {
    inner: solver::Solution,
}

#[pymethods]
impl PySolution {
    #[getter]
    fn kind(&self) -> &'static str {
        self.inner.kind.as_str()
    }

    #[getter]
    fn objective(&self) -> f64 {
        self.inner.objective
    }

    #[getter]
    fn breakpoints(&self) -> Vec<f64> {
        self.inner.control.breakpoints().to_vec()
    }

    #[getter]
    fn control(&self) -> Vec<f64> {
        self.inner.control.values().to_vec()
    }

    /// `(t, x)` samples of the temperature trajectory.
    #[getter]
    fn trajectory(&self) -> Vec<(f64, f64)> {
        self.inner.trajectory.samples.clone()
    }

    #[getter]
    fn nnp(&self) -> Option<f64> {
        self.inner.economics.nnp
    }

    #[getter]
    fn total_cost(&self) -> f64 {
        self.inner.economics.total_cost
    }

    #[getter]
    fn converged(&self) -> bool {
        self.inner.converged
    }

    fn feasible(&self, tol: f64) -> bool {
        self.inner.report.feasible(tol)
    }

    /// First grid time after which the control stays at full power.
    fn full_power_onset(&self) -> Option<f64> {
        empirical_onset(&self.inner.control)
    }

    fn value_at(&self, t: f64) -> f64 {
        self.inner.control.value_at(t)
    }

    fn __repr__(&self) -> String {
        format!("Solution(kind={}, objective={:.6})", self.kind(), self.inner.objective)
    }
}

fn config(n_p: usize, seed: u64, multistart: usize) -> SolverConfig {
    SolverConfig { n_p, rng_seed: seed, multistart, ..SolverConfig::default() }
}

#[pyfunction]
#[pyo3(signature = (scenario, n_p=72, seed=0, multistart=5))]
fn solve_reference(scenario: &PyScenario, n_p: usize, seed: u64, multistart: usize) -> PyResult<PySolution> {
    let p = build_reference(&scenario.inner, n_p).map_err(to_py)?;
    let inner = solver::solve(&p, &config(n_p, seed, multistart)).map_err(to_py)?;
    Ok(PySolution { inner })
}

#[pyfunction]
#[pyo3(signature = (scenario, reference, n_p=72, seed=0, multistart=5))]
fn solve_capacity(
    scenario: &PyScenario,
    reference: &PySolution,
    n_p: usize,
    seed: u64,
    multistart: usize,
) -> PyResult<PySolution> {
    let p = build_capacity(&scenario.inner, &reference.inner.control, n_p).map_err(to_py)?;
    let inner = solver::solve(&p, &config(n_p, seed, multistart)).map_err(to_py)?;
    Ok(PySolution { inner })
}

/// `instructions` holds `(ask, start, end)` triples in normalized units.
#[pyfunction]
#[pyo3(signature = (scenario, reference, instructions, n_p=72, seed=0, multistart=5))]
fn solve_delivery(
    scenario: &PyScenario,
    reference: &PySolution,
    instructions: Vec<(f64, f64, f64)>,
    n_p: usize,
    seed: u64,
    multistart: usize,
) -> PyResult<PySolution> {
    let items = instructions.into_iter().map(|(ask, start, end)| Instruction { ask, start, end }).collect();
    let ins = InstructionSequence::new(items).map_err(to_py)?;
    let p = build_delivery(&scenario.inner, &reference.inner.control, &ins, n_p).map_err(to_py)?;
    let inner = solver::solve(&p, &config(n_p, seed, multistart)).map_err(to_py)?;
    Ok(PySolution { inner })
}

/// Exact temperature samples for a step control.
#[pyfunction]
#[pyo3(signature = (scenario, breakpoints, values, x0, sub_samples=1))]
fn simulate(
    scenario: &PyScenario,
    breakpoints: Vec<f64>,
    values: Vec<f64>,
    x0: f64,
    sub_samples: usize,
) -> PyResult<Vec<(f64, f64)>> {
    let u = ControlProfile::new(breakpoints, values).map_err(to_py)?;
    let traj = thermal::simulate(&u, x0, &scenario.inner.thermal, sub_samples).map_err(to_py)?;
    Ok(traj.samples)
}

#[pyfunction]
fn steady_state_control(scenario: &PyScenario, x: f64) -> PyResult<f64> {
    thermal::steady_state_control(x, &scenario.inner.thermal).map_err(to_py)
}

#[pyfunction]
fn normalized_net_profit(alternative: &PySolution, reference: &PySolution, ratio: f64) -> PyResult<f64> {
    profiles::normalized_net_profit(&alternative.inner.control, &reference.inner.control, ratio).map_err(to_py)
}

#[pymodule]
pub fn reserve_opt_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyScenario>()?;
    m.add_class::<PySolution>()?;
    m.add_function(wrap_pyfunction!(solve_reference, m)?)?;
    m.add_function(wrap_pyfunction!(solve_capacity, m)?)?;
    m.add_function(wrap_pyfunction!(solve_delivery, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(steady_state_control, m)?)?;
    m.add_function(wrap_pyfunction!(normalized_net_profit, m)?)?;
    Ok(())
}
