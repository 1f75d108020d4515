//! Python bindings. Results come back as plain dicts and lists.

use cascadia::cascade::{argmax, TieBreakRule};
use cascadia::example::{repro_example, Golden, Regime};
use cascadia::graph::{build_graph, Graph};
use cascadia::opf::{solve, verify_kkt, OpfProblem};
use cascadia::power_flow::{compute_full_ptdf, PtdfSystem};
use cascadia::scenarios::{monte_carlo_tail, run_pipeline, CascadeParams, ExperimentConfig, TailOptions, DEFAULT_PARTITION_REPLICAS};
use cascadia::Error;
use nalgebra::DVector;
use pyo3::exceptions::{PyArithmeticError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;
use serde_json::json;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::NumericalFailure(_) | Error::NoStabilization { .. } | Error::BudgetExceeded { .. } => {
            PyArithmeticError::new_err(e.to_string())
        }
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn parse_rule(rule: &str) -> PyResult<TieBreakRule> {
    rule.parse().map_err(|e: String| PyValueError::new_err(e))
}

/// A connected network with its intact-graph PTDF.
#[pyclass(module = "cascadia", frozen)]
struct Network {
    graph: Graph,
    ptdf: PtdfSystem,
}

impl Network {
    fn demand(&self, demand: Vec<f64>) -> PyResult<DVector<f64>> {
        if demand.len() != self.graph.node_count() {
            return Err(PyValueError::new_err(format!(
                "demand has {} entries, graph has {} nodes",
                demand.len(),
                self.graph.node_count()
            )));
        }
        Ok(DVector::from_vec(demand))
    }
}

#[pymethods]
impl Network {
    /// `edges` are 1-based `(tail, head)` pairs.
    #[new]
    fn new(nodes: usize, edges: Vec<(usize, usize)>) -> PyResult<Self> {
        let graph = build_graph(nodes, &edges).map_err(py_err)?;
        graph.require_connected().map_err(py_err)?;
        let ptdf = compute_full_ptdf(&graph).map_err(py_err)?;
        Ok(Self { graph, ptdf })
    }

    #[getter]
    fn node_count(&self) -> usize {
        self.graph.node_count()
    }

    #[getter]
    fn edge_count(&self) -> usize {
        self.graph.edge_count()
    }

    /// PTDF rows, one per edge.
    fn ptdf(&self) -> Vec<Vec<f64>> {
        self.ptdf.matrix().row_iter().map(|r| r.iter().copied().collect()).collect()
    }

    /// Optimal dispatch after orienting edges along the planning flow.
    #[pyo3(signature = (demand, lam, max_node = None))]
    fn opf<'py>(&self, py: Python<'py>, demand: Vec<f64>, lam: f64, max_node: Option<usize>) -> PyResult<Bound<'py, PyAny>> {
        let d = self.demand(demand)?;
        let hub = max_node.unwrap_or_else(|| argmax(&d));
        let (ptdf, flips) = self.ptdf.oriented_for(&d, hub);
        let problem = OpfProblem::new(ptdf, d, lam).map_err(py_err)?;
        let sol = solve(&problem).map_err(py_err)?;
        let kkt = verify_kkt(&problem, &sol);
        to_py(
            py,
            &json!({
                "generation": sol.generation,
                "active_set": sol.active_set,
                "multipliers": sol.multipliers,
                "kkt_residual": sol.kkt_residual,
                "kkt_accepted": kkt.accepted(),
                "flipped_edges": flips,
            }),
        )
    }

    /// Full pipeline: orientation, limits, dispatch, cascade from `first_edge`.
    #[pyo3(signature = (demand, first_edge, lam, lam_star = None, rule = "break_all", max_node = None))]
    #[allow(clippy::too_many_arguments)]
    fn cascade<'py>(
        &self,
        py: Python<'py>,
        demand: Vec<f64>,
        first_edge: usize,
        lam: f64,
        lam_star: Option<f64>,
        rule: &str,
        max_node: Option<usize>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let d = self.demand(demand)?;
        let hub = max_node.unwrap_or_else(|| argmax(&d));
        let params = CascadeParams { lambda: lam, lambda_star: lam_star.unwrap_or(lam), rule: parse_rule(rule)? };
        let out = run_pipeline(&self.ptdf, &d, hub, first_edge, &params).map_err(py_err)?;
        to_py(
            py,
            &json!({
                "failure_sequence": out.trace.failure_sequence(),
                "failure_size": out.trace.failure_size,
                "disconnected_from_max": out.trace.disconnected_from_max,
                "end_demand": out.trace.end_demand,
                "active_set": out.active_set,
                "flipped_edges": out.flips,
            }),
        )
    }

    /// Monte Carlo tail summary (Hill index, empirical and theoretical constants).
    #[pyo3(signature = (alpha = 1.5, lam = 0.5, lam_star = None, rule = "break_all", replicas = 100_000, seed = 0, hill_k = None, partition_replicas = None))]
    #[allow(clippy::too_many_arguments)]
    fn tail<'py>(
        &self,
        py: Python<'py>,
        alpha: f64,
        lam: f64,
        lam_star: Option<f64>,
        rule: &str,
        replicas: usize,
        seed: u64,
        hill_k: Option<usize>,
        partition_replicas: Option<usize>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let cfg = ExperimentConfig {
            alpha,
            lambda: lam,
            lambda_star: lam_star.unwrap_or(lam),
            rule: parse_rule(rule)?,
            replicas,
            seed,
        };
        let opts = TailOptions { hill_k, partition_replicas: partition_replicas.unwrap_or(DEFAULT_PARTITION_REPLICAS) };
        let graph = &self.graph;
        let run = py.detach(|| monte_carlo_tail(graph, &cfg, &opts)).map_err(py_err)?;
        to_py(py, &run.estimate)
    }
}

/// Re-run the six-node reference instance; `regime` is "default" or "high-emergency".
#[pyfunction]
#[pyo3(signature = (regime = "default"))]
fn reproduce_example<'py>(py: Python<'py>, regime: &str) -> PyResult<Bound<'py, PyAny>> {
    let regime = match regime {
        "default" => Regime::Default,
        "high-emergency" | "high_emergency" => Regime::HighEmergency,
        other => return Err(PyValueError::new_err(format!("unknown regime '{other}'"))),
    };
    let report = repro_example(regime, &Golden::default()).map_err(py_err)?;
    to_py(py, &json!({ "passed": report.passed(), "report": report }))
}

#[pymodule]
#[pyo3(name = "cascadia")]
fn cascadia_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Network>()?;
    m.add_function(wrap_pyfunction!(reproduce_example, m)?)?;
    Ok(())
}
