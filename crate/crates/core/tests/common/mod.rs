//! Independent oracles and generators shared by the integration tests.
#![allow(dead_code)]

use std::collections::VecDeque;

use cascadia::graph::{build_graph, Graph};
use cascadia::scenarios::random_connected_graph;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const REFERENCE_EDGES: [(usize, usize); 11] =
    [(2, 1), (3, 1), (4, 1), (5, 1), (2, 3), (2, 4), (2, 5), (6, 2), (4, 3), (5, 3), (5, 4)];

pub fn reference_graph() -> Graph {
    build_graph(6, &REFERENCE_EDGES).unwrap()
}

pub fn two_node() -> Graph {
    build_graph(2, &[(2, 1)]).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random connected graph with `lo..=hi` nodes.
pub fn random_graph(seed: u64, lo: usize, hi: usize) -> Graph {
    let mut r = rng(seed);
    let n = r.random_range(lo..=hi);
    let extra = r.random_range(0.0..0.8);
    random_connected_graph(&mut r, n, extra)
}

/// Component label of every node by breadth-first search over surviving edges.
pub fn bfs_components(g: &Graph, surviving: &[bool]) -> Vec<usize> {
    let n = g.node_count();
    let mut adj = vec![Vec::new(); n + 1];
    for (k, e) in g.edges().iter().enumerate() {
        if surviving[k] {
            adj[e.tail].push(e.head);
            adj[e.head].push(e.tail);
        }
    }
    let mut label = vec![0; n + 1];
    let mut next = 0;
    for s in 1..=n {
        if label[s] != 0 {
            continue;
        }
        next += 1;
        label[s] = next;
        let mut q = VecDeque::from([s]);
        while let Some(u) = q.pop_front() {
            for &w in &adj[u] {
                if label[w] == 0 {
                    label[w] = next;
                    q.push_back(w);
                }
            }
        }
    }
    label[1..].to_vec()
}

/// Incidence matrix built entry by entry: +1 at the head, -1 at the tail.
pub fn incidence(g: &Graph) -> DMatrix<f64> {
    let mut c = DMatrix::zeros(g.edge_count(), g.node_count());
    for (k, e) in g.edges().iter().enumerate() {
        c[(k, e.head - 1)] = 1.0;
        c[(k, e.tail - 1)] = -1.0;
    }
    c
}

/// PTDF via `L⁺ = (L + J/n_c)⁻¹ - J/n_c` on each component, so no
/// eigendecomposition is involved. Removed edges give zero rows.
pub fn ptdf_oracle(g: &Graph, surviving: &[bool]) -> DMatrix<f64> {
    let n = g.node_count();
    let mut c = incidence(g);
    for (k, &alive) in surviving.iter().enumerate() {
        if !alive {
            c.row_mut(k).fill(0.0);
        }
    }
    let l = c.transpose() * &c;
    let labels = bfs_components(g, surviving);
    let mut lplus = DMatrix::zeros(n, n);
    for comp in 1..=*labels.iter().max().unwrap() {
        let nodes: Vec<usize> = (0..n).filter(|&i| labels[i] == comp).collect();
        let k = nodes.len();
        let sub = DMatrix::from_fn(k, k, |r, s| l[(nodes[r], nodes[s])] + 1.0 / k as f64);
        let inv = sub.try_inverse().unwrap();
        for r in 0..k {
            for s in 0..k {
                lplus[(nodes[r], nodes[s])] = inv[(r, s)] - 1.0 / k as f64;
            }
        }
    }
    c * lplus
}

pub fn max_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

pub fn max_diff_vec(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

pub fn e1(n: usize) -> DVector<f64> {
    let mut v = DVector::zeros(n);
    v[0] = 1.0;
    v
}

/// Random γ with `γ₁ = 0`, `γ ≥ 0`, `Σγ = 1`.
pub fn random_gamma(r: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut g: Vec<f64> = std::iter::once(0.0).chain((1..n).map(|_| r.random_range(0.01..1.0))).collect();
    let s: f64 = g.iter().sum();
    g.iter_mut().for_each(|x| *x /= s);
    g
}

/// Reference-graph PTDF, in thirtieths.
#[rustfmt::skip]
pub const V_30: [[i32; 6]; 11] = [
    [7, -5, 1, 1, 1, -5],
    [6, 0, -6, 0, 0, 0],
    [6, 0, 0, -6, 0, 0],
    [6, 0, 0, 0, -6, 0],
    [1, -5, 7, 1, 1, -5],
    [1, -5, 1, 7, 1, -5],
    [1, -5, 1, 1, 7, -5],
    [5, 5, 5, 5, 5, -25],
    [0, 0, 6, -6, 0, 0],
    [0, 0, 6, 0, -6, 0],
    [0, 0, 0, 6, -6, 0],
];

/// PTDF after edge 7 fails, in ninetieths.
#[rustfmt::skip]
pub const V2_90: [[i32; 6]; 11] = [
    [22, -20, 4, 4, 10, -20],
    [18, 0, -18, 0, 0, 0],
    [18, 0, 0, -18, 0, 0],
    [17, 5, -1, -1, -25, 5],
    [4, -20, 22, 4, 10, -20],
    [4, -20, 4, 22, 10, -20],
    [0, 0, 0, 0, 0, 0],
    [15, 15, 15, 15, 15, -75],
    [0, 0, 18, -18, 0, 0],
    [-1, 5, 17, -1, -25, 5],
    [-1, 5, -1, 17, -25, 5],
];

/// PTDF after edges 7, 10 and 11 fail, in twenty-fourths.
#[rustfmt::skip]
pub const V4_24: [[i32; 6]; 11] = [
    [6, -6, 0, 0, 6, -6],
    [5, -1, -7, -1, 5, -1],
    [5, -1, -1, -7, 5, -1],
    [4, 4, 4, 4, -20, 4],
    [1, -5, 7, 1, 1, -5],
    [1, -5, 1, 7, 1, -5],
    [0, 0, 0, 0, 0, 0],
    [4, 4, 4, 4, 4, -20],
    [0, 0, 6, -6, 0, 0],
    [0, 0, 0, 0, 0, 0],
    [0, 0, 0, 0, 0, 0],
];

pub fn scaled(rows: &[[i32; 6]; 11], denom: f64) -> DMatrix<f64> {
    DMatrix::from_fn(11, 6, |r, c| rows[r][c] as f64 / denom)
}

pub fn mask_without(m: usize, removed: &[usize]) -> Vec<bool> {
    (1..=m).map(|e| !removed.contains(&e)).collect()
}

/// Outcome of comparing the exact tie conditions with simulated exceedances
/// on one random instance.
#[derive(Debug, Default)]
pub struct TieAudit {
    pub pairs: usize,
    pub ties: usize,
    pub mismatches: Vec<String>,
    pub skipped: bool,
}

pub const TIE_AUDIT_TOL: f64 = 1e-8;

/// Run one random big-jump instance at each of `eps` and check, for every
/// pair of finite-capacity edges at every step where the tie analysis
/// applies, that the conditions hold iff the simulated exceedances agree.
pub fn tie_audit(seed: u64, eps: &[f64]) -> TieAudit {
    use cascadia::cascade::TieBreakRule;
    use cascadia::power_flow::compute_full_ptdf;
    use cascadia::scenarios::{profile_demand, run_pipeline, CascadeParams};
    use cascadia::ties::{analyze_pair, tie_query_at};

    let g = random_graph(seed, 3, 6);
    let mut r = rng(seed.wrapping_add(0x71e5));
    let n = g.node_count();
    let gamma = random_gamma(&mut r, n);
    let hub = r.random_range(1..=n);
    let first = r.random_range(1..=g.edge_count());
    let lambda = r.random_range(0.2..0.8);
    let params = CascadeParams { lambda, lambda_star: lambda, rule: TieBreakRule::BreakAll };
    let base = compute_full_ptdf(&g).unwrap();
    let mut outs = Vec::new();
    for &e in eps {
        match run_pipeline(&base, &profile_demand(&gamma, e, hub).unwrap(), hub, first, &params) {
            Ok(o) => outs.push(o),
            Err(_) => return TieAudit { skipped: true, ..Default::default() },
        }
    }
    let work = &outs[eps.len() / 2];
    let mut audit = TieAudit::default();
    if outs.iter().any(|o| o.active_set != outs[0].active_set) {
        audit.skipped = true;
        return audit;
    }
    let seqs: Vec<_> = outs.iter().map(|o| o.trace.failure_sequence()).collect();
    let prefix = (0..seqs.iter().map(Vec::len).min().unwrap())
        .take_while(|&s| seqs.iter().all(|q| q[s] == seqs[0][s]))
        .count();
    for step in 0..prefix {
        let alive = &work.trace.steps[step].state.surviving;
        let edges: Vec<usize> = (1..=alive.len())
            .filter(|&e| alive[e - 1] && outs.iter().all(|o| o.limits.emergency[e - 1] > 1e-12))
            .collect();
        for (a, &j) in edges.iter().enumerate() {
            for &k in &edges[a + 1..] {
                let query = match tie_query_at(work, step, j, k, hub, &gamma) {
                    Ok(q) => q,
                    Err(cascadia::Error::Inapplicable(_)) => return audit,
                    Err(e) => panic!("seed {seed}: {e}"),
                };
                let cond = analyze_pair(&query, step).unwrap().conditions;
                let equal = outs.iter().all(|o| {
                    let psi = &o.trace.steps[step].psi;
                    let (x, y) = (psi[j - 1].unwrap(), psi[k - 1].unwrap());
                    (x - y).abs() <= TIE_AUDIT_TOL * x.max(y)
                });
                audit.pairs += 1;
                audit.ties += equal as usize;
                if cond.all() != equal {
                    audit.mismatches.push(format!(
                        "seed {seed} step {} pair ({j},{k}): conditions {:?}, simulated tie {equal}",
                        step + 1,
                        cond.residuals
                    ));
                }
            }
        }
    }
    audit
}
