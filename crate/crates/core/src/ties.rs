//! Exact characterization of exceedance ties between two edges.
//!
//! With dispatch `g* = A d` and `d = e_1 + εγ`, edges `j` and `k` have equal
//! exceedance for every small ε iff the quadratic form `dᵀ Q (A - I) d`
//! vanishes identically in ε, i.e. iff its three coefficients vanish.
//! All vectors here are in max-first coordinates (big node first).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{max_abs, unit};
use crate::opf::projection_matrix;
use crate::power_flow::ptdf_of_mask;
use crate::scenarios::PipelineOutcome;

/// Relative tolerance on the three coefficients.
pub const CONDITION_REL_TOL: f64 = 1e-8;
/// Relative tolerance on `‖B + Bᵀ‖` in the skew-symmetry test.
pub const SKEW_REL_TOL: f64 = 1e-9;
/// Dead zone (relative to squared total demand) for the flow-sign product.
pub const SIGN_DEAD_ZONE: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct TieQuery {
    pub edge_j: usize,
    pub edge_k: usize,
    pub v_j: Vec<f64>,
    pub v_k: Vec<f64>,
    pub v_j_r: Vec<f64>,
    pub v_k_r: Vec<f64>,
    /// `f_j f_k ≥ 0` at the analyzed step.
    pub same_sign: bool,
    pub a_matrix: DMatrix<f64>,
    pub gamma: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TieConditions {
    pub c0: bool,
    pub c1: bool,
    pub c2: bool,
    /// `e₁ᵀBe₁`, `e₁ᵀ(B + Bᵀ)γ`, `γᵀBγ` with `B = Q(A - I)`.
    pub residuals: [f64; 3],
    pub tolerance: f64,
}

impl TieConditions {
    pub fn all(&self) -> bool {
        self.c0 && self.c1 && self.c2
    }
}

fn outer(a: &[f64], b: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(a.len(), b.len(), |r, c| a[r] * b[c])
}

/// `v_jᵀ v_k⁽ʳ⁾ ∓ v_kᵀ v_j⁽ʳ⁾`, minus when the flows share a sign.
pub fn q_matrix(q: &TieQuery) -> DMatrix<f64> {
    let a = outer(&q.v_j, &q.v_k_r);
    let b = outer(&q.v_k, &q.v_j_r);
    if q.same_sign {
        a - b
    } else {
        a + b
    }
}

fn shifted(q: &DMatrix<f64>, a: &DMatrix<f64>) -> DMatrix<f64> {
    q * (a - DMatrix::identity(a.nrows(), a.ncols()))
}

pub fn tie_conditions(q: &DMatrix<f64>, a: &DMatrix<f64>, gamma: &[f64]) -> Result<TieConditions> {
    let n = q.nrows();
    if q.ncols() != n || a.nrows() != n || a.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, got: a.nrows() });
    }
    if gamma.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: gamma.len() });
    }
    let b = shifted(q, a);
    let e1 = unit(n, 0);
    let g = DVector::from_column_slice(gamma);
    let r0 = e1.dot(&(&b * &e1));
    let r1 = e1.dot(&((&b + b.transpose()) * &g));
    let r2 = g.dot(&(&b * &g));
    let tolerance = CONDITION_REL_TOL * max_abs(q) * max_abs(&(a - DMatrix::identity(n, n)));
    Ok(TieConditions {
        c0: r0.abs() <= tolerance,
        c1: r1.abs() <= tolerance,
        c2: r2.abs() <= tolerance,
        residuals: [r0, r1, r2],
        tolerance,
    })
}

/// Whether `Q(A - I)` is skew-symmetric, which forces a tie for every γ.
pub fn skew_symmetry_check(q: &DMatrix<f64>, a: &DMatrix<f64>) -> bool {
    let b = shifted(q, a);
    max_abs(&(&b + b.transpose())) <= SKEW_REL_TOL * max_abs(&b)
}

/// Permute a node vector to max-first coordinates.
pub fn to_max_first(v: &[f64], hub: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(v.len());
    out.push(v[hub - 1]);
    out.extend(v.iter().enumerate().filter(|(k, _)| *k != hub - 1).map(|(_, &x)| x));
    out
}

fn matrix_to_max_first(a: &DMatrix<f64>, hub: usize) -> DMatrix<f64> {
    let n = a.nrows();
    let order: Vec<usize> = std::iter::once(hub - 1).chain((0..n).filter(|&k| k != hub - 1)).collect();
    DMatrix::from_fn(n, n, |r, c| a[(order[r], order[c])])
}

/// Build the tie query for edges `j`, `k` at cascade step `step` (0-based)
/// of a big-jump pipeline run. Refuses when the surviving graph is
/// disconnected or balance restoration has rescaled anything up to that step.
pub fn tie_query_at(
    outcome: &PipelineOutcome,
    step: usize,
    edge_j: usize,
    edge_k: usize,
    hub: usize,
    gamma: &[f64],
) -> Result<TieQuery> {
    let steps = &outcome.trace.steps;
    let st = steps
        .get(step)
        .ok_or_else(|| Error::PreconditionViolated(format!("cascade has no step {}", step + 1)))?;
    if steps[..=step].iter().any(|s| s.rescaled() || s.thetas.len() > 1) {
        return Err(Error::Inapplicable("surviving graph is disconnected or was rebalanced".into()));
    }
    for e in [edge_j, edge_k] {
        if e == 0 || e > st.state.surviving.len() || !st.state.surviving[e - 1] {
            return Err(Error::InvalidEdge(e));
        }
    }
    let n = outcome.ptdf.node_count();
    let vr = ptdf_of_mask(outcome.graph(), &st.state.surviving);
    let a = projection_matrix(&outcome.ptdf, &outcome.dispatch.active_set, outcome.limits.lambda);
    let fj = st.state.flow[edge_j - 1].unwrap_or(0.0);
    let fk = st.state.flow[edge_k - 1].unwrap_or(0.0);
    let scale: f64 = st.state.demand.iter().sum();
    let same_sign = fj * fk >= -SIGN_DEAD_ZONE * scale * scale;
    let row = |p: &crate::power_flow::PtdfSystem, e: usize| to_max_first(p.row(e).as_slice(), hub);
    debug_assert_eq!(gamma.len(), n);
    Ok(TieQuery {
        edge_j,
        edge_k,
        v_j: row(&outcome.ptdf, edge_j),
        v_k: row(&outcome.ptdf, edge_k),
        v_j_r: row(&vr, edge_j),
        v_k_r: row(&vr, edge_k),
        same_sign,
        a_matrix: matrix_to_max_first(&a, hub),
        gamma: gamma.to_vec(),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairAnalysis {
    pub step: usize,
    pub edge_j: usize,
    pub edge_k: usize,
    pub q: Vec<Vec<f64>>,
    pub conditions: TieConditions,
    pub skew_symmetric: bool,
}

pub fn analyze_pair(query: &TieQuery, step: usize) -> Result<PairAnalysis> {
    let q = q_matrix(query);
    let conditions = tie_conditions(&q, &query.a_matrix, &query.gamma)?;
    let skew_symmetric = skew_symmetry_check(&q, &query.a_matrix);
    Ok(PairAnalysis {
        step,
        edge_j: query.edge_j,
        edge_k: query.edge_k,
        q: q.row_iter().map(|r| r.iter().cloned().collect()).collect(),
        conditions,
        skew_symmetric,
    })
}
