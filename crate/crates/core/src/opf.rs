//! Operational-stage dispatch: the DC-OPF quadratic program
//!
//! ```text
//! min ½‖g‖²  s.t.  eᵀg = eᵀd,  (1-λ)Vd ≤ Vg ≤ (1+λ)Vd
//! ```
//!
//! solved as the Euclidean projection of `mean(d)·e` onto the feasible
//! polytope. Hyperplane `0` is the balance constraint, `1..=m` are the lower
//! flow bounds and `m+1..=2m` the upper ones. The graph must already be
//! oriented so that `Vd ≥ 0`.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{independent_rows, DEPENDENT_ROW_REL_TOL, max_abs_vec, ones, project_affine, solve_gram, stack_rows};
use crate::power_flow::{planning_flows, validate_loading, PtdfSystem};

/// Tightness tolerance for hyperplane membership, relative to the largest
/// demand. Rounding in `V g` stays below 1e-15 of that scale, while genuine
/// slacks of small-ε profiles shrink linearly with ε, so a tolerance relative
/// to each edge's own flow would absorb them.
pub const TIGHTNESS_TOL: f64 = 1e-14;
/// Acceptance threshold for the KKT certificate (scaled residual).
pub const KKT_TOL: f64 = 1e-7;
/// Most negative generation tolerated (relative to demand scale).
pub const NONNEG_TOL: f64 = 1e-9;
/// Largest constraint count the face enumeration accepts.
pub const ENUMERATION_LIMIT: usize = 23;

#[derive(Debug, Clone)]
pub struct OpfProblem {
    ptdf: PtdfSystem,
    demand: DVector<f64>,
    /// `V d` with near-zero entries snapped to zero.
    planning: DVector<f64>,
    lower: DVector<f64>,
    upper: DVector<f64>,
    lambda: f64,
    total: f64,
}

/// Lagrange multipliers in the form `g + Vᵀ(ν - μ) + δ e = 0`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Multipliers {
    pub mu: Vec<f64>,
    pub nu: Vec<f64>,
    pub delta: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OpfSolution {
    pub generation: Vec<f64>,
    /// Sorted indices of hyperplanes containing the solution; always has 0.
    pub active_set: Vec<usize>,
    pub multipliers: Multipliers,
    pub kkt_residual: f64,
    pub pivots: usize,
}

impl OpfSolution {
    pub fn generation_vec(&self) -> DVector<f64> {
        DVector::from_vec(self.generation.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktReport {
    pub stationarity: f64,
    pub dual_feasibility: f64,
    pub complementarity_lower: f64,
    pub complementarity_upper: f64,
    pub balance: f64,
    pub bounds: f64,
    pub max: f64,
}

impl KktReport {
    pub fn accepted(&self) -> bool {
        self.max <= KKT_TOL
    }
}

/// Knobs for the active-set iteration.
#[derive(Debug, Clone, Copy, Default)]
pub struct SolveOptions {
    /// Randomize the order in which tied blocking/dropping candidates are
    /// considered.
    pub shuffle_seed: Option<u64>,
}

impl OpfProblem {
    pub fn new(ptdf: PtdfSystem, demand: DVector<f64>, lambda: f64) -> Result<Self> {
        validate_loading(lambda, lambda)?;
        let n = ptdf.node_count();
        if demand.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: demand.len() });
        }
        if demand.iter().any(|&x| x < 0.0 || !x.is_finite()) {
            return Err(Error::InvalidDemand("demand must be finite and nonnegative".into()));
        }
        let total = demand.sum();
        if total <= 0.0 {
            return Err(Error::InvalidDemand("total demand must be positive".into()));
        }
        let planning = planning_flows(&ptdf, &demand);
        if let Some(e) = planning.iter().position(|&x| x < 0.0) {
            return Err(Error::PreconditionViolated(format!(
                "edge {} carries planning flow against its orientation; orient the graph first",
                e + 1
            )));
        }
        let lower = planning.map(|x| (1.0 - lambda) * x);
        let upper = planning.map(|x| (1.0 + lambda) * x);
        Ok(Self { ptdf, demand, planning, lower, upper, lambda, total })
    }

    pub fn ptdf(&self) -> &PtdfSystem {
        &self.ptdf
    }

    pub fn demand(&self) -> &DVector<f64> {
        &self.demand
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn lower(&self) -> &DVector<f64> {
        &self.lower
    }

    pub fn upper(&self) -> &DVector<f64> {
        &self.upper
    }

    pub fn planning(&self) -> &DVector<f64> {
        &self.planning
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn mean_demand(&self) -> f64 {
        self.total / self.n() as f64
    }

    fn n(&self) -> usize {
        self.ptdf.node_count()
    }

    fn m(&self) -> usize {
        self.ptdf.edge_count()
    }

    pub fn constraint_count(&self) -> usize {
        2 * self.m() + 1
    }

    fn scale(&self) -> f64 {
        max_abs_vec(&self.demand).max(1e-300)
    }

    /// Edge (1-based) of a flow hyperplane index.
    fn edge_of(&self, idx: usize) -> usize {
        if idx > self.m() {
            idx - self.m()
        } else {
            idx
        }
    }

    fn is_zero_edge(&self, edge: usize) -> bool {
        self.planning[edge - 1] == 0.0
    }

    /// Hyperplane normal as used in the geometric description (`e` or `v_e`).
    fn hyperplane_row(&self, idx: usize) -> DVector<f64> {
        if idx == 0 {
            ones(self.n())
        } else {
            self.ptdf.row(self.edge_of(idx))
        }
    }

    fn hyperplane_rhs(&self, idx: usize) -> f64 {
        let m = self.m();
        match idx {
            0 => self.total,
            i if i <= m => self.lower[i - 1],
            i => self.upper[i - m - 1],
        }
    }

    /// Inequality in `aᵀg ≥ b` form.
    fn inequality(&self, idx: usize) -> (DVector<f64>, f64) {
        let m = self.m();
        if idx <= m {
            (self.ptdf.row(idx), self.lower[idx - 1])
        } else {
            (-self.ptdf.row(idx - m), -self.upper[idx - m - 1])
        }
    }

    fn target(&self) -> DVector<f64> {
        ones(self.n()) * self.mean_demand()
    }
}

/// Hyperplane indices whose constraint holds with equality at `g`.
///
/// A flow hyperplane is tight when its residual is at most `tol` times the
/// largest demand.
pub fn active_index_set(p: &OpfProblem, g: &DVector<f64>, tol: f64) -> Vec<usize> {
    let m = p.m();
    let vg = p.ptdf.apply(g);
    let bound = tol * p.scale();
    let mut out = vec![0];
    for side in 0..2 {
        for e in 1..=m {
            if !p.ptdf.is_surviving(e) {
                continue;
            }
            let idx = e + side * m;
            if (vg[e - 1] - p.hyperplane_rhs(idx)).abs() <= bound {
                out.push(idx);
            }
        }
    }
    out
}

/// Collapse the upper index of zero-capacity edges, whose lower and upper
/// hyperplanes coincide.
pub fn canonical_active_set(p: &OpfProblem, active: &[usize]) -> Vec<usize> {
    let m = p.m();
    let set: BTreeSet<usize> = active.iter().cloned().collect();
    set.iter()
        .cloned()
        .filter(|&i| !(i > m && p.is_zero_edge(i - m) && set.contains(&(i - m))))
        .collect()
}

struct WorkingSet {
    /// Constraint ids; equality ids are `0` and lower ids of zero edges.
    ids: Vec<usize>,
}

impl WorkingSet {
    fn rows(&self, p: &OpfProblem) -> (DMatrix<f64>, DVector<f64>) {
        let mut rows = Vec::with_capacity(self.ids.len());
        let mut rhs = Vec::with_capacity(self.ids.len());
        for &i in &self.ids {
            if i == 0 {
                rows.push(ones(p.n()));
                rhs.push(p.total);
            } else {
                let (a, b) = p.inequality(i);
                rows.push(a);
                rhs.push(b);
            }
        }
        (stack_rows(&rows, p.n()), DVector::from_vec(rhs))
    }
}

/// Solve the dispatch problem with the default pivoting order.
pub fn solve(p: &OpfProblem) -> Result<OpfSolution> {
    solve_with(p, SolveOptions::default())
}

pub fn solve_with(p: &OpfProblem, opts: SolveOptions) -> Result<OpfSolution> {
    let n = p.n();
    let m = p.m();
    let scale = p.scale();
    let target = p.target();
    let mut rng = opts.shuffle_seed.map(ChaCha8Rng::seed_from_u64);

    // Equalities: balance plus the coinciding bounds of zero-capacity edges.
    let zero_edges: Vec<usize> =
        (1..=m).filter(|&e| p.ptdf.is_surviving(e) && p.is_zero_edge(e)).collect();
    let mut eq_rows = vec![ones(n)];
    eq_rows.extend(zero_edges.iter().map(|&e| p.ptdf.row(e)));
    let eq_keep = independent_rows(&eq_rows);
    let mut equalities: Vec<usize> = Vec::new();
    for k in eq_keep {
        equalities.push(if k == 0 { 0 } else { zero_edges[k - 1] });
    }
    let is_equality = |i: usize, eqs: &[usize]| eqs.contains(&i) || (i >= 1 && i <= m && zero_edges.contains(&i));

    let mut candidates: Vec<usize> = (1..=m)
        .filter(|&e| p.ptdf.is_surviving(e) && !p.is_zero_edge(e))
        .flat_map(|e| [e, e + m])
        .collect();
    candidates.sort_unstable();

    let mut g = p.demand.clone();
    let mut work = WorkingSet { ids: equalities.clone() };
    let max_pivots = 10 * p.constraint_count();
    let mut pivots = 0;

    let step_tol = 1e-13 * scale;
    let mult_tol = 1e-12 * scale;

    let final_multipliers = loop {
        if pivots > max_pivots {
            return Err(Error::NumericalFailure(format!("active-set iteration exceeded {max_pivots} pivots")));
        }
        let (mat, rhs) = work.rows(p);
        let g_hat = project_affine(&target, &mat, &rhs);
        let step = &g_hat - &g;
        if step.norm() <= step_tol {
            g = g_hat;
            let gram = &mat * mat.transpose();
            let lam = solve_gram(&gram, &(&mat * &g));
            // most negative multiplier among inequalities leaves the set
            let mut order: Vec<usize> = (0..work.ids.len()).collect();
            if let Some(r) = rng.as_mut() {
                order.shuffle(r);
            }
            let mut drop: Option<(usize, f64)> = None;
            for pos in order {
                let id = work.ids[pos];
                if is_equality(id, &equalities) {
                    continue;
                }
                if lam[pos] < -mult_tol && drop.is_none_or(|(_, best)| lam[pos] < best) {
                    drop = Some((pos, lam[pos]));
                }
            }
            match drop {
                Some((pos, _)) => {
                    work.ids.remove(pos);
                    pivots += 1;
                    continue;
                }
                None => break lam,
            }
        }

        let mut alpha = 1.0;
        let mut blocking: Option<usize> = None;
        let mut order = candidates.clone();
        if let Some(r) = rng.as_mut() {
            order.shuffle(r);
        }
        let pn = step.norm();
        let gram = &mat * mat.transpose();
        for &i in &order {
            if work.ids.contains(&i) {
                continue;
            }
            let (a, b) = p.inequality(i);
            let ap = a.dot(&step);
            // a normal in the span of the working rows is orthogonal to any
            // exact step; a negative product there is rounding noise
            if ap < -1e-12 * a.norm() * pn && !in_row_space(&mat, &gram, &a) {
                let t = ((b - a.dot(&g)) / ap).max(0.0);
                if t < alpha {
                    alpha = t;
                    blocking = Some(i);
                }
            }
        }
        g += &step * alpha;
        if let Some(i) = blocking {
            work.ids.push(i);
            pivots += 1;
        }
    };

    let multipliers = assemble_multipliers(p, &work.ids, &final_multipliers);
    if let Some((i, &gi)) = g.iter().enumerate().find(|(_, &x)| x < -NONNEG_TOL * scale) {
        return Err(Error::NumericalFailure(format!(
            "generation at node {} is negative ({gi:e}); nonnegativity would bind",
            i + 1
        )));
    }
    let active_set = active_index_set(p, &g, TIGHTNESS_TOL);
    let mut sol = OpfSolution {
        generation: g.iter().cloned().collect(),
        active_set,
        multipliers,
        kkt_residual: 0.0,
        pivots,
    };
    sol.kkt_residual = verify_kkt(p, &sol).max;
    if sol.kkt_residual > KKT_TOL {
        return Err(Error::NumericalFailure(format!("KKT residual {:e} above tolerance", sol.kkt_residual)));
    }
    Ok(sol)
}

fn in_row_space(mat: &DMatrix<f64>, gram: &DMatrix<f64>, a: &DVector<f64>) -> bool {
    let y = solve_gram(gram, &(mat * a));
    let r = a - mat.transpose() * y;
    r.norm() <= DEPENDENT_ROW_REL_TOL * a.norm()
}

/// Map working-set multipliers (`g = Σ λ_i a_i`) onto `(μ, ν, δ)`.
fn assemble_multipliers(p: &OpfProblem, ids: &[usize], lam: &DVector<f64>) -> Multipliers {
    let m = p.m();
    let mut mu = vec![0.0; m];
    let mut nu = vec![0.0; m];
    let mut delta = 0.0;
    for (pos, &id) in ids.iter().enumerate() {
        let l = lam[pos];
        if id == 0 {
            delta = -l;
        } else if id <= m {
            if p.is_zero_edge(id) {
                // free sign: split into the two coinciding bounds
                if l >= 0.0 {
                    mu[id - 1] += l;
                } else {
                    nu[id - 1] += -l;
                }
            } else {
                mu[id - 1] += l.max(0.0);
            }
        } else {
            nu[id - m - 1] += l.max(0.0);
        }
    }
    Multipliers { mu, nu, delta }
}

/// Residuals of stationarity, dual feasibility, complementary slackness and
/// primal feasibility, each normalized by the demand scale.
pub fn verify_kkt(p: &OpfProblem, s: &OpfSolution) -> KktReport {
    let n = p.n();
    let m = p.m();
    let scale = p.scale();
    let g = DVector::from_vec(s.generation.clone());
    let mu = DVector::from_vec(s.multipliers.mu.clone());
    let nu = DVector::from_vec(s.multipliers.nu.clone());
    let v = p.ptdf.matrix();

    let stat = &g + v.transpose() * (&nu - &mu) + ones(n) * s.multipliers.delta;
    let stationarity = max_abs_vec(&stat) / scale;

    let dual_feasibility =
        mu.iter().chain(nu.iter()).fold(0.0_f64, |a, &x| a.max(-x)) / scale;

    let vg = v * &g;
    let mut comp_lo = 0.0_f64;
    let mut comp_hi = 0.0_f64;
    let mut bounds = 0.0_f64;
    for e in 0..m {
        if !p.ptdf.is_surviving(e + 1) {
            continue;
        }
        let slack_lo = vg[e] - p.lower[e];
        let slack_hi = p.upper[e] - vg[e];
        comp_lo = comp_lo.max((mu[e] * slack_lo).abs());
        comp_hi = comp_hi.max((nu[e] * slack_hi).abs());
        bounds = bounds.max(-slack_lo).max(-slack_hi);
    }
    let complementarity_lower = comp_lo / (scale * scale);
    let complementarity_upper = comp_hi / (scale * scale);
    let bounds = bounds.max(0.0) / scale;
    let balance = (g.sum() - p.total).abs() / scale;

    let max = [stationarity, dual_feasibility, complementarity_lower, complementarity_upper, balance, bounds]
        .into_iter()
        .fold(0.0_f64, f64::max);
    KktReport {
        stationarity,
        dual_feasibility,
        complementarity_lower,
        complementarity_upper,
        balance,
        bounds,
        max,
    }
}

/// Projection matrix `A_I` onto the face indexed by `index_set`:
///
/// `A_I = J/n + Mᵀ (M Mᵀ)⁻¹ [(1-λ) V_{I₁}; (1+λ) V_{I₂}]`, `M = [V_{I₁}; V_{I₂}]`
///
/// with dependent rows of `M` removed first (lower rows take precedence).
pub fn projection_matrix(p: &PtdfSystem, index_set: &[usize], lambda: f64) -> DMatrix<f64> {
    let n = p.node_count();
    let m = p.edge_count();
    let mut set: Vec<usize> = index_set.iter().cloned().filter(|&i| i != 0).collect();
    set.sort_unstable();
    set.dedup();
    let mut rows = Vec::new();
    let mut factors = Vec::new();
    for &i in &set {
        let (edge, f) = if i <= m { (i, 1.0 - lambda) } else { (i - m, 1.0 + lambda) };
        rows.push(p.row(edge));
        factors.push(f);
    }
    let keep = independent_rows(&rows);
    let mut a = DMatrix::from_element(n, n, 1.0 / n as f64);
    if keep.is_empty() {
        return a;
    }
    let kept: Vec<DVector<f64>> = keep.iter().map(|&k| rows[k].clone()).collect();
    let mm = stack_rows(&kept, n);
    let scaled: Vec<DVector<f64>> = keep.iter().map(|&k| &rows[k] * factors[k]).collect();
    let rhs = stack_rows(&scaled, n);
    let gram = &mm * mm.transpose();
    let inv = match gram.clone().cholesky() {
        Some(ch) => ch.inverse(),
        None => crate::linalg::sym_psd_pinv(&gram),
    };
    a += mm.transpose() * inv * rhs;
    a
}

/// `g* = (1-λ) d + λ mean(d) e`, valid whenever `C d ≥ 0`.
pub fn closed_form_generation(d: &DVector<f64>, lambda: f64, incidence: &DMatrix<f64>) -> Result<DVector<f64>> {
    if incidence.ncols() != d.len() {
        return Err(Error::DimensionMismatch { expected: incidence.ncols(), got: d.len() });
    }
    let cd = incidence * d;
    let tol = 1e-12 * max_abs_vec(d).max(1e-300);
    if let Some(e) = cd.iter().position(|&x| x < -tol) {
        return Err(Error::PreconditionViolated(format!("(C d) at edge {} is negative", e + 1)));
    }
    let mean = d.sum() / d.len() as f64;
    Ok(d * (1.0 - lambda) + ones(d.len()) * (lambda * mean))
}

/// Exhaustive oracle: project the target onto the affine hull of every
/// candidate face, keep feasible candidates and return the closest one.
pub fn face_enumeration_oracle(p: &OpfProblem) -> Result<OpfSolution> {
    let total = p.constraint_count();
    if total > ENUMERATION_LIMIT {
        return Err(Error::BudgetExceeded { constraints: total, limit: ENUMERATION_LIMIT });
    }
    let n = p.n();
    let m = p.m();
    let target = p.target();
    let scale = p.scale();
    let feas_tol = 1e-9 * scale;
    let mut best: Option<(f64, DVector<f64>)> = None;

    for mask in 0u32..(1u32 << (2 * m)) {
        let mut ids = vec![0usize];
        let mut skip = false;
        for bit in 0..2 * m {
            if mask & (1 << bit) != 0 {
                let idx = bit + 1;
                if !p.ptdf.is_surviving(p.edge_of(idx)) {
                    skip = true;
                    break;
                }
                ids.push(idx);
            }
        }
        if skip {
            continue;
        }
        let rows: Vec<DVector<f64>> = ids.iter().map(|&i| p.hyperplane_row(i)).collect();
        let keep = independent_rows(&rows);
        let kept: Vec<DVector<f64>> = keep.iter().map(|&k| rows[k].clone()).collect();
        let rhs = DVector::from_iterator(keep.len(), keep.iter().map(|&k| p.hyperplane_rhs(ids[k])));
        let cand = project_affine(&target, &stack_rows(&kept, n), &rhs);
        if !is_feasible(p, &cand, feas_tol) {
            continue;
        }
        let obj = (&cand - &target).norm_squared();
        if best.as_ref().is_none_or(|(b, _)| obj < *b) {
            best = Some((obj, cand));
        }
    }
    let (_, g) = best.ok_or_else(|| Error::NumericalFailure("no feasible face found".into()))?;
    let active_set = active_index_set(p, &g, TIGHTNESS_TOL);
    let multipliers = least_squares_multipliers(p, &g, &active_set);
    let mut sol = OpfSolution { generation: g.iter().cloned().collect(), active_set, multipliers, kkt_residual: 0.0, pivots: 0 };
    sol.kkt_residual = verify_kkt(p, &sol).max;
    Ok(sol)
}

fn is_feasible(p: &OpfProblem, g: &DVector<f64>, tol: f64) -> bool {
    if (g.sum() - p.total).abs() > tol {
        return false;
    }
    let vg = p.ptdf.apply(g);
    (0..p.m()).all(|e| !p.ptdf.is_surviving(e + 1) || (vg[e] >= p.lower[e] - tol && vg[e] <= p.upper[e] + tol))
}

fn least_squares_multipliers(p: &OpfProblem, g: &DVector<f64>, active: &[usize]) -> Multipliers {
    let m = p.m();
    let ids: Vec<usize> = active
        .iter()
        .cloned()
        .filter(|&i| !(i > m && p.is_zero_edge(i - m)))
        .collect();
    let rows: Vec<DVector<f64>> = ids
        .iter()
        .map(|&i| if i == 0 { ones(p.n()) } else { p.inequality(i).0 })
        .collect();
    let keep = independent_rows(&rows);
    let kept_ids: Vec<usize> = keep.iter().map(|&k| ids[k]).collect();
    let kept: Vec<DVector<f64>> = keep.iter().map(|&k| rows[k].clone()).collect();
    let mat = stack_rows(&kept, p.n());
    let lam = solve_gram(&(&mat * mat.transpose()), &(&mat * g));
    assemble_multipliers(p, &kept_ids, &lam)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_graph, incidence_matrix};
    use crate::linalg::unit;
    use crate::power_flow::compute_full_ptdf;

    fn oriented(edges: &[(usize, usize)], n: usize, d: &DVector<f64>) -> PtdfSystem {
        let g = build_graph(n, edges).unwrap();
        compute_full_ptdf(&g).unwrap().oriented_for(d, 1).0
    }

    #[test]
    fn two_node_big_demand() {
        let d = unit(2, 0);
        let p = OpfProblem::new(oriented(&[(1, 2)], 2, &d), d, 0.5).unwrap();
        let s = solve(&p).unwrap();
        assert!((s.generation[0] - 0.75).abs() < 1e-12);
        assert!((s.generation[1] - 0.25).abs() < 1e-12);
        let o = face_enumeration_oracle(&p).unwrap();
        assert!((o.generation[0] - 0.75).abs() < 1e-12);
        assert_eq!(s.active_set, vec![0, 1]);
    }

    #[test]
    fn balance_only_projection_is_mean() {
        let g = build_graph(3, &[(1, 2), (2, 3)]).unwrap();
        let p = compute_full_ptdf(&g).unwrap();
        let a = projection_matrix(&p, &[0], 0.3);
        let d = DVector::from_vec(vec![0.2, 1.0, 3.0]);
        let ad = a * &d;
        for x in ad.iter() {
            assert!((x - 1.4).abs() < 1e-12);
        }
    }

    #[test]
    fn closed_form_precondition() {
        let g = build_graph(2, &[(2, 1)]).unwrap();
        let c = incidence_matrix(&g);
        let d = DVector::from_vec(vec![0.2, 1.0]);
        assert!(matches!(closed_form_generation(&d, 0.5, &c), Err(Error::PreconditionViolated(_))));
        let u = DVector::from_vec(vec![0.7, 0.7]);
        let gu = closed_form_generation(&u, 0.4, &c).unwrap();
        assert!((gu - u).norm() < 1e-15);
    }

    #[test]
    fn kkt_detects_perturbation() {
        let d = DVector::from_vec(vec![1.0, 0.05, 0.1, 0.02]);
        let p = OpfProblem::new(oriented(&[(1, 2), (2, 3), (3, 4), (4, 1), (1, 3)], 4, &d), d, 0.4).unwrap();
        let mut s = solve(&p).unwrap();
        assert!(verify_kkt(&p, &s).accepted());
        s.generation[2] += 1e-3;
        assert!(verify_kkt(&p, &s).max > 1e-4);
    }

    #[test]
    fn unconstrained_optimum_stationarity() {
        let d = DVector::from_vec(vec![1.0, 0.5, 0.25]);
        let p = OpfProblem::new(oriented(&[(1, 2), (2, 3)], 3, &d), d, 0.5).unwrap();
        let mean = p.mean_demand();
        let sol = OpfSolution {
            generation: vec![mean; 3],
            active_set: vec![0],
            multipliers: Multipliers { mu: vec![0.0; 2], nu: vec![0.0; 2], delta: -mean },
            kkt_residual: 0.0,
            pivots: 0,
        };
        assert!(verify_kkt(&p, &sol).stationarity < 1e-15);
    }

    #[test]
    fn unoriented_problem_is_rejected() {
        let g = build_graph(2, &[(1, 2)]).unwrap();
        let p = compute_full_ptdf(&g).unwrap();
        assert!(matches!(OpfProblem::new(p, unit(2, 0), 0.5), Err(Error::PreconditionViolated(_))));
    }

    #[test]
    fn oracle_budget() {
        let mut edges = Vec::new();
        for a in 1..=6 {
            for b in (a + 1)..=6 {
                edges.push((a, b));
            }
        }
        let d = DVector::from_vec(vec![1.0, 0.1, 0.2, 0.3, 0.1, 0.1]);
        let p = OpfProblem::new(oriented(&edges, 6, &d), d, 0.5).unwrap();
        assert!(matches!(face_enumeration_oracle(&p), Err(Error::BudgetExceeded { .. })));
    }
}
