//! The six-node reference instance with known PTDF matrices, cascade order
//! and exceedance values, plus a self-check that diffs a fresh run against
//! them.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::cascade::TieBreakRule;
use crate::error::Result;
use crate::graph::{build_graph, Graph};
use crate::linalg::max_abs;
use crate::power_flow::{compute_full_ptdf, compute_ptdf};
use crate::scenarios::{profile_demand, run_pipeline, CascadeParams, PipelineOutcome};
use crate::ties::{analyze_pair, tie_query_at};

pub const EDGES: [(usize, usize); 11] =
    [(2, 1), (3, 1), (4, 1), (5, 1), (2, 3), (2, 4), (2, 5), (6, 2), (4, 3), (5, 3), (5, 4)];
pub const GAMMA: [f64; 6] = [0.0, 0.10, 0.30, 0.28, 0.27, 0.05];
pub const EPSILON: f64 = 1e-4;
pub const LAMBDA: f64 = 0.5;
pub const LAMBDA_STAR: f64 = 0.55;
pub const FIRST_EDGE: usize = 7;
/// Emergency factor above `5λ/4`, where the triple tie no longer exceeds.
pub const HIGH_EMERGENCY_LAMBDA_STAR: f64 = 0.7;

/// Entrywise tolerance for golden matrices.
pub const MATRIX_TOL: f64 = 1e-9;
/// Tolerance on the tied exceedance at the final step.
pub const TIE_PSI_TOL: f64 = 1e-6;
/// Relative tolerance on exceedances whose reference is the ε → 0 limit.
pub const LIMIT_PSI_REL_TOL: f64 = 1e-3;

const V_FULL: [[i32; 6]; 11] = [
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

const V_AFTER_7: [[i32; 6]; 11] = [
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

const V_AFTER_7_11: [[i32; 6]; 11] = [
    [59, -55, 11, 5, 35, -55],
    [48, 0, -48, 0, 0, 0],
    [49, -5, 1, -65, 25, -5],
    [44, 20, -4, 20, -100, 20],
    [11, -55, 59, 5, 35, -55],
    [10, -50, 10, 70, 10, -50],
    [0, 0, 0, 0, 0, 0],
    [40, 40, 40, 40, 40, -200],
    [1, -5, 49, -65, 25, -5],
    [-4, 20, 44, 20, -100, 20],
    [0, 0, 0, 0, 0, 0],
];

const V_AFTER_7_10_11: [[i32; 6]; 11] = [
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

fn scaled(rows: &[[i32; 6]; 11], denom: f64) -> DMatrix<f64> {
    DMatrix::from_fn(11, 6, |r, c| rows[r][c] as f64 / denom)
}

pub fn graph() -> Graph {
    build_graph(6, &EDGES).expect("reference graph is valid")
}

/// PTDF of the intact graph, in thirtieths.
pub fn v_full() -> DMatrix<f64> {
    scaled(&V_FULL, 30.0)
}

/// After edge 7 fails, in ninetieths.
pub fn v_after_7() -> DMatrix<f64> {
    scaled(&V_AFTER_7, 90.0)
}

/// After edges 7 and 11 fail, in 240ths.
pub fn v_after_7_11() -> DMatrix<f64> {
    scaled(&V_AFTER_7_11, 240.0)
}

/// After edges 7, 10 and 11 fail, in twenty-fourths.
pub fn v_after_7_10_11() -> DMatrix<f64> {
    scaled(&V_AFTER_7_10_11, 24.0)
}

pub fn mask_without(removed: &[usize]) -> Vec<bool> {
    (1..=EDGES.len()).map(|e| !removed.contains(&e)).collect()
}

/// Expected exceedances in the ε → 0 limit, as `(step, edge, ψ · λ*/λ)`.
/// Step 2 is the redistribution right after the initial failure.
pub const LIMIT_EXCEEDANCES: [(usize, usize, f64); 13] = [
    (2, 1, 22.0 / 21.0),
    (2, 4, 17.0 / 18.0),
    (2, 5, 4.0 / 3.0),
    (2, 6, 4.0 / 3.0),
    (3, 1, 59.0 / 56.0),
    (3, 3, 49.0 / 48.0),
    (3, 4, 44.0 / 48.0),
    (3, 5, 11.0 / 8.0),
    (3, 6, 10.0 / 8.0),
    (4, 1, 30.0 / 28.0),
    (4, 2, 25.0 / 24.0),
    (4, 4, 20.0 / 24.0),
    (4, 8, 1.0),
];

/// Edges tied at step 4 (after edges 7, 11, 10 have failed), with exceedance `5λ/(4λ*)`.
pub const TIED_EDGES: [usize; 3] = [5, 6, 9];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    /// `λ* < 5λ/4`: the triple tie exceeds and fails.
    Default,
    /// `λ* ≥ 5λ/4`: the cascade stops after edge 10.
    HighEmergency,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReproReport {
    pub lambda: f64,
    pub lambda_star: f64,
    pub failure_sequence: Vec<Vec<usize>>,
    pub checks: Vec<Check>,
}

impl ReproReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Golden data the self-check compares against; tests may corrupt a copy.
#[derive(Debug, Clone)]
pub struct Golden {
    pub v_full: DMatrix<f64>,
    pub v_after_7_10_11: DMatrix<f64>,
}

impl Default for Golden {
    fn default() -> Self {
        Self { v_full: v_full(), v_after_7_10_11: v_after_7_10_11() }
    }
}

pub fn run_example(lambda: f64, lambda_star: f64, rule: TieBreakRule) -> Result<PipelineOutcome> {
    let d = profile_demand(&GAMMA, EPSILON, 1)?;
    let base = compute_full_ptdf(&graph())?;
    run_pipeline(&base, &d, 1, FIRST_EDGE, &CascadeParams { lambda, lambda_star, rule })
}

fn matrix_check(name: &str, got: &DMatrix<f64>, want: &DMatrix<f64>) -> Check {
    let diff = max_abs(&(got - want));
    Check { name: name.into(), passed: diff <= MATRIX_TOL, detail: format!("max |Δ| = {diff:.3e}") }
}

/// Run the reference instance and diff it against `golden`.
pub fn repro_example(regime: Regime, golden: &Golden) -> Result<ReproReport> {
    let lambda = LAMBDA;
    let lambda_star = match regime {
        Regime::Default => LAMBDA_STAR,
        Regime::HighEmergency => HIGH_EMERGENCY_LAMBDA_STAR,
    };
    let g = graph();
    let mut checks = vec![
        matrix_check("ptdf_full", compute_full_ptdf(&g)?.matrix(), &golden.v_full),
        matrix_check(
            "ptdf_after_7_10_11",
            compute_ptdf(&g, &mask_without(&[7, 10, 11]))?.matrix(),
            &golden.v_after_7_10_11,
        ),
    ];
    let out = run_example(lambda, lambda_star, TieBreakRule::BreakAll)?;
    checks.push(Check {
        name: "orientation".into(),
        passed: out.flips.is_empty(),
        detail: format!("flipped edges {:?}", out.flips),
    });
    let seq = out.trace.failure_sequence();
    let expected: Vec<Vec<usize>> = match regime {
        Regime::Default => vec![vec![7], vec![11], vec![10], TIED_EDGES.to_vec()],
        Regime::HighEmergency => vec![vec![7], vec![11], vec![10]],
    };
    let prefix_ok = seq.len() >= expected.len() && seq[..expected.len()] == expected[..];
    let order_ok = match regime {
        Regime::Default => prefix_ok,
        Regime::HighEmergency => seq == expected,
    };
    checks.push(Check {
        name: "cascade_order".into(),
        passed: order_ok,
        detail: format!("observed {seq:?}, expected {}{expected:?}", if regime == Regime::Default { "prefix " } else { "" }),
    });

    let ratio = lambda / lambda_star;
    for &(step, edge, factor) in &LIMIT_EXCEEDANCES {
        let got = out.trace.steps.get(step - 2).and_then(|s| s.psi[edge - 1]);
        let want = factor * ratio;
        let passed = got.is_some_and(|p| ((p - want) / want).abs() <= LIMIT_PSI_REL_TOL);
        checks.push(Check {
            name: format!("psi_step{step}_edge{edge}"),
            passed,
            detail: format!("got {got:?}, expected {want:.6}"),
        });
    }

    let tie_psi = 1.25 * ratio;
    let step4 = out.trace.steps.get(2);
    for &e in &TIED_EDGES {
        let got = step4.and_then(|s| s.psi[e - 1]);
        checks.push(Check {
            name: format!("tied_psi_edge{e}"),
            passed: got.is_some_and(|p| (p - tie_psi).abs() <= TIE_PSI_TOL),
            detail: format!("got {got:?}, expected {tie_psi:.9}"),
        });
    }
    if regime == Regime::Default {
        let maximizers = step4.map(|s| s.maximizers.clone()).unwrap_or_default();
        checks.push(Check {
            name: "tied_maximizers".into(),
            passed: maximizers == TIED_EDGES,
            detail: format!("{maximizers:?}"),
        });
    }

    for (j, k) in [(5, 6), (5, 9), (6, 9)] {
        let verdict = tie_query_at(&out, 2, j, k, 1, &GAMMA).and_then(|q| analyze_pair(&q, 2));
        let (passed, detail) = match verdict {
            Ok(a) => (a.skew_symmetric && a.conditions.all(), format!("skew = {}, conditions = {:?}", a.skew_symmetric, a.conditions.residuals)),
            Err(e) => (false, e.to_string()),
        };
        checks.push(Check { name: format!("skew_symmetric_{j}_{k}"), passed, detail });
    }

    Ok(ReproReport { lambda, lambda_star, failure_sequence: seq, checks })
}
