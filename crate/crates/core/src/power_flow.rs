//! DC power flow: PTDF matrices, flows and planning-stage limits.
//!
//! Susceptances are all one, so the PTDF of a (possibly partial) topology is
//! `V = C_s (C_s^T C_s)^+` with `C_s` the incidence rows of surviving edges.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{incidence_matrix, FlowSigns, Graph};
use crate::linalg::sym_psd_pinv;

/// Planning flows with magnitude at or below this fraction of the largest
/// planning flow are snapped to zero capacity.
pub const ZERO_CAPACITY_REL_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct PtdfSystem {
    /// `m x n`; rows of removed edges are identically zero.
    v: DMatrix<f64>,
    surviving: Vec<bool>,
    graph: Graph,
}

impl PtdfSystem {
    /// Full `m x n` matrix, zero rows at removed edges.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.v
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn surviving(&self) -> &[bool] {
        &self.surviving
    }

    pub fn is_surviving(&self, edge: usize) -> bool {
        self.surviving[edge - 1]
    }

    pub fn surviving_edges(&self) -> Vec<usize> {
        (1..=self.surviving.len()).filter(|&e| self.surviving[e - 1]).collect()
    }

    pub fn node_count(&self) -> usize {
        self.v.ncols()
    }

    pub fn edge_count(&self) -> usize {
        self.v.nrows()
    }

    /// Row of edge `edge` (1-based) as a column vector.
    pub fn row(&self, edge: usize) -> DVector<f64> {
        self.v.row(edge - 1).transpose()
    }

    /// `V x` over all rows (removed rows give zero).
    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.v * x
    }

    /// Same topology with the listed edges reversed. Negating a row is exact,
    /// so this matches recomputation bit for bit.
    pub fn with_flipped(&self, flips: &[usize]) -> PtdfSystem {
        let mut out = self.clone();
        for &e in flips {
            out.v.row_mut(e - 1).neg_mut();
        }
        out.graph = self.graph.with_flipped(flips);
        out
    }

    /// Signs needed by orientation normalization for demand `d`, with the hub
    /// node taken to be node `hub` (1-based).
    pub fn flow_signs(&self, d: &DVector<f64>, hub: usize) -> FlowSigns {
        FlowSigns {
            unit: self.v.column(hub - 1).iter().cloned().collect(),
            demand: self.apply(d).iter().cloned().collect(),
        }
    }

    /// Reorient the underlying graph so that `V d >= 0` and return the new
    /// system together with the flipped edge labels.
    pub fn oriented_for(&self, d: &DVector<f64>, hub: usize) -> (PtdfSystem, Vec<usize>) {
        let flips = crate::graph::edges_to_flip(&self.flow_signs(d, hub));
        (self.with_flipped(&flips), flips)
    }
}

/// PTDF of the subgraph that keeps the edges flagged in `surviving`.
pub fn compute_ptdf(g: &Graph, surviving: &[bool]) -> Result<PtdfSystem> {
    let m = g.edge_count();
    if surviving.len() != m {
        return Err(Error::DimensionMismatch { expected: m, got: surviving.len() });
    }
    if !surviving.iter().any(|&s| s) {
        return Err(Error::PreconditionViolated("no surviving edges".into()));
    }
    Ok(ptdf_of_mask(g, surviving))
}

/// Like [`compute_ptdf`] but also accepts an empty edge set (zero matrix).
pub(crate) fn ptdf_of_mask(g: &Graph, surviving: &[bool]) -> PtdfSystem {
    let mut c = incidence_matrix(g);
    for (e, &alive) in surviving.iter().enumerate() {
        if !alive {
            c.row_mut(e).fill(0.0);
        }
    }
    let lap = c.transpose() * &c;
    let v = &c * sym_psd_pinv(&lap);
    PtdfSystem { v, surviving: surviving.to_vec(), graph: g.clone() }
}

pub fn compute_full_ptdf(g: &Graph) -> Result<PtdfSystem> {
    compute_ptdf(g, &g.all_edges_mask())
}

/// Edge flows `V (d - g)`; `None` marks removed edges.
pub fn flow(p: &PtdfSystem, d: &DVector<f64>, g: &DVector<f64>) -> Result<Vec<Option<f64>>> {
    let n = p.node_count();
    for len in [d.len(), g.len()] {
        if len != n {
            return Err(Error::DimensionMismatch { expected: n, got: len });
        }
    }
    let f = p.apply(&(d - g));
    Ok(f.iter()
        .zip(p.surviving())
        .map(|(&x, &alive)| alive.then_some(x))
        .collect())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LimitSet {
    /// Operational limits `lambda |V d|`.
    pub operational: Vec<f64>,
    /// Emergency limits `lambda_star |V d|`.
    pub emergency: Vec<f64>,
    pub lambda: f64,
    pub lambda_star: f64,
}

pub fn validate_loading(lambda: f64, lambda_star: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda < 1.0) || !(lambda_star >= lambda) || !lambda_star.is_finite() {
        return Err(Error::InvalidLoadingFactor { lambda, lambda_star });
    }
    Ok(())
}

/// Planning flows `V d` with near-zero entries snapped to exactly zero.
pub fn planning_flows(p: &PtdfSystem, d: &DVector<f64>) -> DVector<f64> {
    let mut f = p.apply(d);
    let scale = f.iter().fold(0.0_f64, |a, x| a.max(x.abs()));
    for x in f.iter_mut() {
        if x.abs() <= ZERO_CAPACITY_REL_TOL * scale {
            *x = 0.0;
        }
    }
    f
}

/// Limits set at the planning stage, where generation is `mean(d) e` and the
/// planning flow therefore equals `V d`.
pub fn planning_stage(p: &PtdfSystem, d: &DVector<f64>, lambda: f64, lambda_star: f64) -> Result<LimitSet> {
    validate_loading(lambda, lambda_star)?;
    if d.len() != p.node_count() {
        return Err(Error::DimensionMismatch { expected: p.node_count(), got: d.len() });
    }
    if d.iter().any(|&x| x < 0.0 || !x.is_finite()) || d.iter().all(|&x| x == 0.0) {
        return Err(Error::InvalidDemand("demand must be nonnegative and nonzero".into()));
    }
    let pl = planning_flows(p, d);
    let abs: Vec<f64> = pl.iter().map(|x| x.abs()).collect();
    Ok(LimitSet {
        operational: abs.iter().map(|x| lambda * x).collect(),
        emergency: abs.iter().map(|x| lambda_star * x).collect(),
        lambda,
        lambda_star,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_graph;
    use crate::linalg::ones;

    fn two_node() -> Graph {
        build_graph(2, &[(2, 1)]).unwrap()
    }

    #[test]
    fn two_node_ptdf_by_hand() {
        // L = [[1,-1],[-1,1]], L+ = L/4, C = [1,-1] => V = C L+ = [1/2, -1/2]
        let p = compute_full_ptdf(&two_node()).unwrap();
        assert!((p.matrix()[(0, 0)] - 0.5).abs() < 1e-15);
        assert!((p.matrix()[(0, 1)] + 0.5).abs() < 1e-15);
    }

    #[test]
    fn flow_of_balanced_injection_is_zero() {
        let p = compute_full_ptdf(&two_node()).unwrap();
        let d = DVector::from_vec(vec![0.3, 0.7]);
        let f = flow(&p, &d, &d).unwrap();
        assert_eq!(f, vec![Some(0.0)]);
        assert!(flow(&p, &d, &DVector::zeros(3)).is_err());
    }

    #[test]
    fn planning_limits_two_node() {
        // orient 1 -> 2 first: (V e1) = -1/2 < 0 so the edge flips to 2 -> 1
        let g = build_graph(2, &[(1, 2)]).unwrap();
        let p = compute_full_ptdf(&g).unwrap();
        let d = DVector::from_vec(vec![1.0, 0.0]);
        assert!((p.apply(&d)[0] + 0.5).abs() < 1e-15);
        let (po, flips) = p.oriented_for(&d, 1);
        assert_eq!(flips, vec![1]);
        assert_eq!(po.graph().edges()[0].tail, 2);
        assert!((po.apply(&d)[0] - 0.5).abs() < 1e-15);
        let lim = planning_stage(&po, &d, 0.5, 0.55).unwrap();
        assert!((lim.operational[0] - 0.25).abs() < 1e-15);
        assert!((lim.emergency[0] - 0.275).abs() < 1e-15);
        assert!(matches!(planning_stage(&po, &d, 1.2, 1.3), Err(Error::InvalidLoadingFactor { .. })));
        assert!(planning_stage(&po, &d, 0.5, 0.4).is_err());
    }

    #[test]
    fn kernel_contains_ones_after_failures() {
        let g = build_graph(4, &[(1, 2), (2, 3), (3, 4), (4, 1)]).unwrap();
        let p = compute_ptdf(&g, &[true, false, true, false]).unwrap();
        let r = p.apply(&ones(4));
        assert!(r.iter().all(|x| x.abs() < 1e-10));
        assert_eq!(flow(&p, &ones(4), &DVector::zeros(4)).unwrap()[1], None);
    }

    #[test]
    fn flipped_rows_match_recomputation_exactly() {
        let g = build_graph(4, &[(1, 2), (2, 3), (3, 4), (4, 1), (1, 3)]).unwrap();
        let p = compute_full_ptdf(&g).unwrap();
        let q = compute_full_ptdf(&g.with_flipped(&[2, 5])).unwrap();
        assert_eq!(p.with_flipped(&[2, 5]).matrix(), q.matrix());
    }
}
