//! Emergency stage: an exogenous edge failure followed by repeated flow
//! redistribution, per-component balance restoration and removal of the
//! edges with maximal relative exceedance.

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{connected_components, ComponentPartition, Graph};
use crate::power_flow::{ptdf_of_mask, LimitSet, PtdfSystem};

/// Relative tolerance separating exceedance ties from near-ties.
pub const TIE_REL_TOL: f64 = 1e-9;
/// An edge fails only if its exceedance is above `1 + FAILURE_TOL`, so that
/// flows sitting exactly at the emergency limit survive rounding noise.
pub const FAILURE_TOL: f64 = 1e-9;
/// Imbalance (relative to the larger side) below which a component is
/// considered balanced.
pub const BALANCE_TOL: f64 = 1e-12;
/// Flow on a zero-capacity edge, relative to total demand, that counts as
/// a violation.
pub const ZERO_CAPACITY_FLOW_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreakRule {
    /// Fail every maximizer simultaneously.
    BreakAll,
    SmallestLabel,
    LargestLabel,
}

impl TieBreakRule {
    pub const ALL: [TieBreakRule; 3] = [Self::BreakAll, Self::SmallestLabel, Self::LargestLabel];

    /// Apply the rule to a maximizer set (edge labels).
    pub fn apply(&self, maximizers: &[usize]) -> Vec<usize> {
        let mut m = maximizers.to_vec();
        m.sort_unstable();
        m.dedup();
        match self {
            Self::BreakAll => m,
            Self::SmallestLabel => m.first().map(|&e| vec![e]).unwrap_or_default(),
            Self::LargestLabel => m.last().map(|&e| vec![e]).unwrap_or_default(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::BreakAll => "break_all",
            Self::SmallestLabel => "smallest_label",
            Self::LargestLabel => "largest_label",
        }
    }
}

impl fmt::Display for TieBreakRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TieBreakRule {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.replace('-', "_").as_str() {
            "break_all" => Ok(Self::BreakAll),
            "smallest_label" => Ok(Self::SmallestLabel),
            "largest_label" => Ok(Self::LargestLabel),
            other => Err(format!("unknown tie-break rule '{other}'")),
        }
    }
}

/// Demands, generations and flows at one cascade step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkState {
    pub demand: Vec<f64>,
    pub generation: Vec<f64>,
    pub surviving: Vec<bool>,
    /// `None` on removed edges.
    pub flow: Vec<Option<f64>>,
}

impl NetworkState {
    pub fn demand_vec(&self) -> DVector<f64> {
        DVector::from_vec(self.demand.clone())
    }

    pub fn generation_vec(&self) -> DVector<f64> {
        DVector::from_vec(self.generation.clone())
    }
}

/// Balance factor applied to one component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentTheta {
    pub nodes: Vec<usize>,
    /// `Σd / Σg`; infinite when the component has no generation.
    pub theta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeStep {
    pub failed_edges: Vec<usize>,
    pub thetas: Vec<ComponentTheta>,
    /// Relative exceedance after this step's redistribution, `None` on
    /// removed edges.
    pub psi: Vec<Option<f64>>,
    /// Edges attaining the maximal exceedance (empty if nothing exceeds).
    pub maximizers: Vec<usize>,
    pub max_psi: f64,
    pub state: NetworkState,
}

impl CascadeStep {
    /// Whether balance restoration rescaled anything at this step.
    pub fn rescaled(&self) -> bool {
        self.thetas.iter().any(|t| t.theta != 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeTrace {
    pub steps: Vec<CascadeStep>,
    pub end_demand: Vec<f64>,
    pub end_components: ComponentPartition,
    pub failure_size: f64,
    /// Nodes outside the end component of the max-demand node.
    pub disconnected_from_max: usize,
}

impl CascadeTrace {
    /// Per-step failed edge sets.
    pub fn failure_sequence(&self) -> Vec<Vec<usize>> {
        self.steps.iter().map(|s| s.failed_edges.clone()).collect()
    }

    pub fn failed_edges(&self) -> Vec<usize> {
        let mut out: Vec<usize> = self.steps.iter().flat_map(|s| s.failed_edges.iter().cloned()).collect();
        out.sort_unstable();
        out
    }
}

/// Rescale whichever of demand or generation is in surplus, per component.
pub fn restore_balance(
    demand: &DVector<f64>,
    generation: &DVector<f64>,
    parts: &ComponentPartition,
) -> (DVector<f64>, DVector<f64>, Vec<ComponentTheta>) {
    let mut d = demand.clone();
    let mut g = generation.clone();
    let mut thetas = Vec::with_capacity(parts.component_count);
    for nodes in parts.members() {
        let sd: f64 = nodes.iter().map(|&v| d[v - 1]).sum();
        let sg: f64 = nodes.iter().map(|&v| g[v - 1]).sum();
        let theta = if (sd - sg).abs() <= BALANCE_TOL * sd.max(sg) {
            1.0
        } else if sg == 0.0 {
            for &v in &nodes {
                d[v - 1] = 0.0;
            }
            f64::INFINITY
        } else if sd == 0.0 {
            for &v in &nodes {
                g[v - 1] = 0.0;
            }
            0.0
        } else {
            let theta = sd / sg;
            if theta >= 1.0 {
                for &v in &nodes {
                    d[v - 1] /= theta;
                }
            } else {
                for &v in &nodes {
                    g[v - 1] *= theta;
                }
            }
            theta
        };
        thetas.push(ComponentTheta { nodes, theta });
    }
    (d, g, thetas)
}

/// `|f_e| / F_e` on surviving edges. Zero-capacity edges get `+∞` when they
/// carry flow above `ZERO_CAPACITY_FLOW_TOL · scale`, else zero.
pub fn exceedances(flow: &[Option<f64>], limits: &LimitSet, scale: f64) -> Vec<Option<f64>> {
    flow.iter()
        .zip(&limits.emergency)
        .map(|(f, &cap)| {
            f.map(|f| {
                if cap > 0.0 {
                    f.abs() / cap
                } else if f.abs() > ZERO_CAPACITY_FLOW_TOL * scale {
                    f64::INFINITY
                } else {
                    0.0
                }
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub max_psi: f64,
    /// Edges within `rel_tol` of the maximum, whenever the maximum exceeds one.
    pub maximizers: Vec<usize>,
    pub failed: Vec<usize>,
}

pub fn select_failures(psi: &[Option<f64>], rule: TieBreakRule, rel_tol: f64) -> Selection {
    let max_psi = psi.iter().flatten().cloned().fold(0.0_f64, f64::max);
    if max_psi <= 1.0 + FAILURE_TOL {
        return Selection { max_psi, maximizers: Vec::new(), failed: Vec::new() };
    }
    let cut = if max_psi.is_infinite() { f64::INFINITY } else { (1.0 - rel_tol) * max_psi };
    let maximizers: Vec<usize> = psi
        .iter()
        .enumerate()
        .filter(|(_, p)| p.is_some_and(|p| p >= cut))
        .map(|(e, _)| e + 1)
        .collect();
    let failed = rule.apply(&maximizers);
    Selection { max_psi, maximizers, failed }
}

/// Run the cascade triggered by the failure of `first_edge` from the
/// operational state `(demand, generation)`.
pub fn run_cascade(
    graph: &Graph,
    demand: &DVector<f64>,
    generation: &DVector<f64>,
    limits: &LimitSet,
    first_edge: usize,
    rule: TieBreakRule,
) -> Result<CascadeTrace> {
    let n = graph.node_count();
    let m = graph.edge_count();
    if first_edge == 0 || first_edge > m {
        return Err(Error::InvalidEdge(first_edge));
    }
    for v in [demand, generation] {
        if v.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: v.len() });
        }
    }
    if limits.emergency.len() != m {
        return Err(Error::DimensionMismatch { expected: m, got: limits.emergency.len() });
    }
    let scale = demand.sum().max(generation.sum());

    let mut surviving = vec![true; m];
    let mut d = demand.clone();
    let mut g = generation.clone();
    let mut failing = vec![first_edge];
    let mut steps = Vec::new();
    loop {
        for &e in &failing {
            surviving[e - 1] = false;
        }
        let parts = connected_components(graph, &surviving);
        let (d_new, g_new, thetas) = restore_balance(&d, &g, &parts);
        d = d_new;
        g = g_new;
        let ptdf = ptdf_of_mask(graph, &surviving);
        let flow = flows_on(&ptdf, &d, &g);
        let psi = exceedances(&flow, limits, scale);
        let sel = select_failures(&psi, rule, TIE_REL_TOL);
        steps.push(CascadeStep {
            failed_edges: failing.clone(),
            thetas,
            psi,
            maximizers: sel.maximizers,
            max_psi: sel.max_psi,
            state: NetworkState {
                demand: d.iter().cloned().collect(),
                generation: g.iter().cloned().collect(),
                surviving: surviving.clone(),
                flow,
            },
        });
        if sel.failed.is_empty() {
            break;
        }
        failing = sel.failed;
    }

    let end_components = connected_components(graph, &surviving);
    let failure_size = (demand - &d).sum();
    let hub = argmax(demand);
    let hub_comp = end_components.component_of(hub);
    let disconnected_from_max = end_components.assignment.iter().filter(|&&c| c != hub_comp).count();
    Ok(CascadeTrace {
        steps,
        end_demand: d.iter().cloned().collect(),
        end_components,
        failure_size,
        disconnected_from_max,
    })
}

fn flows_on(p: &PtdfSystem, d: &DVector<f64>, g: &DVector<f64>) -> Vec<Option<f64>> {
    let f = p.apply(&(d - g));
    f.iter().zip(p.surviving()).map(|(&x, &alive)| alive.then_some(x)).collect()
}

/// 1-based index of the largest entry (smallest index on ties).
pub fn argmax(v: &DVector<f64>) -> usize {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i] > v[best] {
            best = i;
        }
    }
    best + 1
}

pub fn total_failure_size(trace: &CascadeTrace) -> f64 {
    trace.failure_size
}
