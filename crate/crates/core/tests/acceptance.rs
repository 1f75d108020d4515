//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Every tolerance, sample size and seed is pinned below. A criterion that
//! fails is reported as FAIL; the process exits nonzero unless the failure
//! is listed in `KNOWN_FAILURES` (each entry is explained in the project's
//! decisions log).

mod common;

use std::time::Instant;

use cascadia::cascade::{argmax, TieBreakRule};
use cascadia::opf::{closed_form_generation, face_enumeration_oracle, solve, verify_kkt, OpfProblem};
use cascadia::power_flow::{compute_full_ptdf, compute_ptdf};
use cascadia::scenarios::*;
use cascadia::ties::{skew_symmetry_check, q_matrix, tie_query_at};
use cascadia::{incidence_matrix, Error};
use common::*;
use nalgebra::DVector;
use rand::Rng;

const REF_GAMMA: [f64; 6] = [0.0, 0.10, 0.30, 0.28, 0.27, 0.05];
const REF_EPSILON: f64 = 1e-4;
const REF_LAMBDA: f64 = 0.5;
const REF_LAMBDA_STAR: f64 = 0.55;

const PTDF_TOL: f64 = 1e-9;
const TIE_PSI_TOL: f64 = 1e-6;
const UNIT_DEMAND_TOL: f64 = 1e-9;
const CLOSED_FORM_TOL: f64 = 1e-8;
const CLOSED_FORM_INSTANCES: usize = 50;
const ORACLE_TOL: f64 = 1e-7;
const ORACLE_KKT_TOL: f64 = 1e-7;
const ORACLE_INSTANCES: u64 = 500;
const EPS_INSTANCES: u64 = 100;
const EPS_MAX_NO_STABILIZATION: f64 = 1e-3;
const TIE_GRAPHS: u64 = 200;
const TIE_EPS: [f64; 3] = [1e-3, 1e-4, 1e-5];
const ALPHA: f64 = 1.5;
const LAMBDA: f64 = 0.5;
const HILL_REPLICAS: usize = 100_000;
const HILL_BAND: (f64, f64) = (1.35, 1.65);
const CONSTANT_REPLICAS: usize = 1_000_000;
const CONSTANT_BAND: (f64, f64) = (0.5, 2.0);
const CONSTANT_STATED: f64 = 0.125;
const SWEEP_MAX_NODES: usize = 6;
const SWEEP_GAMMAS: usize = 20;
const DOMINANCE_REPLICAS: usize = 1_000_000;
const DOMINANCE_TOP: f64 = 1e-3;
const DOMINANCE_RATIO: f64 = 0.1;
const DOMINANCE_MIN_FRACTION: f64 = 0.9;
const SEED: u64 = 0;

/// Criteria allowed to fail without failing the run.
const KNOWN_FAILURES: &[&str] = &["C6"];

type Criterion = (&'static str, &'static str, f64, fn() -> Verdict);

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn params(lambda: f64, lambda_star: f64) -> CascadeParams {
    CascadeParams { lambda, lambda_star, rule: TieBreakRule::BreakAll }
}

fn experiment(replicas: usize) -> ExperimentConfig {
    ExperimentConfig { alpha: ALPHA, lambda: LAMBDA, lambda_star: LAMBDA, rule: TieBreakRule::BreakAll, replicas, seed: SEED }
}

fn c1_ptdf_golden() -> Verdict {
    let g = reference_graph();
    let full = compute_full_ptdf(&g).unwrap();
    let after = compute_ptdf(&g, &mask_without(11, &[7, 10, 11])).unwrap();
    let d1 = max_diff(full.matrix(), &scaled(&V_30, 30.0));
    let d4 = max_diff(after.matrix(), &scaled(&V4_24, 24.0));
    verdict(d1 <= PTDF_TOL && d4 <= PTDF_TOL, format!("max |dV| = {d1:.1e}, max |dV4| = {d4:.1e} (tol {PTDF_TOL:e})"))
}

fn c2_cascade_golden() -> Verdict {
    let base = compute_full_ptdf(&reference_graph()).unwrap();
    let d = profile_demand(&REF_GAMMA, REF_EPSILON, 1).unwrap();
    let out = run_pipeline(&base, &d, 1, 7, &params(REF_LAMBDA, REF_LAMBDA_STAR)).unwrap();
    let seq = out.trace.failure_sequence();
    let expected = [vec![7], vec![11], vec![10], vec![5, 6, 9]];
    let order_ok = seq.len() >= 4 && seq[..4] == expected[..];
    let target = 5.0 * REF_LAMBDA / (4.0 * REF_LAMBDA_STAR);
    let tie = &out.trace.steps[2];
    let dev = [5, 6, 9].iter().map(|&e| (tie.psi[e - 1].unwrap() - target).abs()).fold(0.0, f64::max);
    verdict(
        order_ok && dev <= TIE_PSI_TOL,
        format!("order {seq:?}, tied psi deviation from 25/22 = {dev:.1e} (tol {TIE_PSI_TOL:e})"),
    )
}

fn c3_closed_forms() -> Verdict {
    let mut unit_dev: f64 = 0.0;
    for seed in 0..CLOSED_FORM_INSTANCES as u64 {
        let g = random_graph(seed, 2, 6);
        let n = g.node_count();
        let lambda = rng(seed).random_range(0.05..0.95);
        let d = e1(n);
        let (p, _) = compute_full_ptdf(&g).unwrap().oriented_for(&d, 1);
        let s = solve(&OpfProblem::new(p, d.clone(), lambda).unwrap()).unwrap();
        let expected = &d * (1.0 - lambda) + DVector::from_element(n, lambda / n as f64);
        unit_dev = unit_dev.max(max_diff_vec(&s.generation_vec(), &expected));
    }
    // demands with C d >= 0 in the orientation carrying V d >= 0
    let mut accepted = 0;
    let mut tries = 0;
    let mut cd_dev: f64 = 0.0;
    let mut seed = 0u64;
    while accepted < CLOSED_FORM_INSTANCES && tries < 1_000_000 {
        seed += 1;
        tries += 1;
        let g = random_graph(seed, 2, 6);
        let mut r = rng(seed ^ 0xc0de);
        let n = g.node_count();
        let d = DVector::from_fn(n, |_, _| r.random_range(0.0..1.0));
        let lambda = r.random_range(0.05..0.95);
        let (p, _) = compute_full_ptdf(&g).unwrap().oriented_for(&d, argmax(&d));
        let Ok(expected) = closed_form_generation(&d, lambda, &incidence_matrix(p.graph())) else { continue };
        let s = solve(&OpfProblem::new(p, d, lambda).unwrap()).unwrap();
        cd_dev = cd_dev.max(max_diff_vec(&s.generation_vec(), &expected));
        accepted += 1;
    }
    verdict(
        unit_dev <= UNIT_DEMAND_TOL && cd_dev <= CLOSED_FORM_TOL && accepted == CLOSED_FORM_INSTANCES,
        format!(
            "unit demand: max dev {unit_dev:.1e} over {CLOSED_FORM_INSTANCES} graphs (tol {UNIT_DEMAND_TOL:e}); \
             Cd >= 0: max dev {cd_dev:.1e} over {accepted} instances from {tries} draws (tol {CLOSED_FORM_TOL:e})"
        ),
    )
}

fn c4_oracle() -> Verdict {
    let mut worst: f64 = 0.0;
    let mut worst_kkt: f64 = 0.0;
    let mut errors = Vec::new();
    for seed in 0..ORACLE_INSTANCES {
        let g = random_graph(seed, 2, 4);
        let mut r = rng(seed ^ 0x0a);
        let d = DVector::from_fn(g.node_count(), |_, _| r.random_range(0.0..1.0));
        let lambda = r.random_range(0.05..0.95);
        let (p, _) = compute_full_ptdf(&g).unwrap().oriented_for(&d, argmax(&d));
        let prob = OpfProblem::new(p, d, lambda).unwrap();
        match (solve(&prob), face_enumeration_oracle(&prob)) {
            (Ok(s), Ok(o)) => {
                worst = worst.max(max_diff_vec(&s.generation_vec(), &o.generation_vec()));
                worst_kkt = worst_kkt.max(verify_kkt(&prob, &s).max);
            }
            (a, b) => errors.push(format!("seed {seed}: {:?} / {:?}", a.err(), b.err())),
        }
    }
    verdict(
        errors.is_empty() && worst <= ORACLE_TOL && worst_kkt <= ORACLE_KKT_TOL,
        format!(
            "{ORACLE_INSTANCES} instances: max |g - g_oracle| = {worst:.1e} (tol {ORACLE_TOL:e}), \
             max KKT residual {worst_kkt:.1e} (tol {ORACLE_KKT_TOL:e}), errors {}{}",
            errors.len(),
            errors.first().map(|e| format!(" [{e}]")).unwrap_or_default()
        ),
    )
}

fn c5_epsilon_independence() -> Verdict {
    let mut mismatches = Vec::new();
    let mut no_stab = 0;
    for seed in 0..EPS_INSTANCES {
        let g = random_graph(seed, 2, 6);
        let mut r = rng(seed ^ 0xe5);
        let n = g.node_count();
        let gamma = sample_gamma(&mut r, n, ALPHA);
        let i = r.random_range(1..=n);
        let l = r.random_range(1..=g.edge_count());
        let base = compute_full_ptdf(&g).unwrap();
        let p = params(LAMBDA, LAMBDA);
        match stabilize_epsilon(&base, &gamma, i, l, &p) {
            Ok(s) => {
                let d = profile_demand(&gamma, s.epsilon / 4.0, i).unwrap();
                let o = run_pipeline(&base, &d, i, l, &p).unwrap();
                if o.trace.failure_sequence() != s.failure_sequence() || o.active_set != s.active_set {
                    mismatches.push(seed);
                }
            }
            Err(Error::NoStabilization { .. }) => no_stab += 1,
            Err(e) => panic!("seed {seed}: {e}"),
        }
    }
    let rate = no_stab as f64 / EPS_INSTANCES as f64;
    verdict(
        mismatches.is_empty() && rate < EPS_MAX_NO_STABILIZATION,
        format!(
            "{EPS_INSTANCES} instances: {} differ between eps* and eps*/4 {mismatches:?}, {no_stab} without stabilization",
            mismatches.len()
        ),
    )
}

fn c6_ties() -> Verdict {
    let base = compute_full_ptdf(&reference_graph()).unwrap();
    let d = profile_demand(&REF_GAMMA, REF_EPSILON, 1).unwrap();
    let out = run_pipeline(&base, &d, 1, 7, &params(REF_LAMBDA, REF_LAMBDA_STAR)).unwrap();
    let skew = [(5, 6), (5, 9), (6, 9)].iter().all(|&(j, k)| {
        let q = tie_query_at(&out, 2, j, k, 1, &REF_GAMMA).unwrap();
        skew_symmetry_check(&q_matrix(&q), &q.a_matrix)
    });
    let (mut pairs, mut ties, mut skipped) = (0, 0, 0);
    let mut mismatches = Vec::new();
    for seed in 0..TIE_GRAPHS {
        let a = tie_audit(seed, &TIE_EPS);
        pairs += a.pairs;
        ties += a.ties;
        skipped += a.skipped as usize;
        mismatches.extend(a.mismatches);
    }
    // same instances with eps = 1e-2 added, which resolves gaps of order eps^2
    let wider: usize =
        (0..TIE_GRAPHS).map(|seed| tie_audit(seed, &[1e-2, 1e-3, 1e-4, 1e-5]).mismatches.len()).sum();
    verdict(
        skew && mismatches.is_empty(),
        format!(
            "reference triple skew: {skew}; {TIE_GRAPHS} graphs, {pairs} pairs, {ties} simulated ties, {skipped} skipped, \
             {} mismatches at tol {TIE_AUDIT_TOL:e} {mismatches:?}; with eps = 1e-2 added: {wider} mismatches",
            mismatches.len()
        ),
    )
}

fn c7_hill() -> Verdict {
    let mut parts = Vec::new();
    let mut pass = true;
    for (name, g) in [("two-node", two_node()), ("six-node", reference_graph())] {
        let (reps, failures) = simulate_replicas(&g, &experiment(HILL_REPLICAS)).unwrap();
        let s: Vec<f64> = reps.iter().map(|r| r.failure_size).collect();
        let k = default_hill_k(HILL_REPLICAS);
        let a = hill_estimator(&s, k).unwrap();
        pass &= (HILL_BAND.0..=HILL_BAND.1).contains(&a) && failures == 0;
        parts.push(format!("{name}: alpha_hat = {a:.3} (k = {k}, failures {failures})"));
    }
    verdict(pass, format!("{}; band [{}, {}]", parts.join(", "), HILL_BAND.0, HILL_BAND.1))
}

fn c8_constant() -> Verdict {
    let run = monte_carlo_tail(&two_node(), &experiment(CONSTANT_REPLICAS), &TailOptions::default()).unwrap();
    let e = &run.estimate;
    let ratio = e.c_hat_empirical / e.c_theoretical;
    verdict(
        (CONSTANT_BAND.0..=CONSTANT_BAND.1).contains(&ratio) && e.numerical_failures == 0,
        format!(
            "c_hat = {:.4}, c_theoretical = {:.4}, ratio {ratio:.3} in [{}, {}]; ratio to the stated {CONSTANT_STATED} is {:.3}",
            e.c_hat_empirical,
            e.c_theoretical,
            CONSTANT_BAND.0,
            CONSTANT_BAND.1,
            e.c_hat_empirical / CONSTANT_STATED
        ),
    )
}

fn c9_sweep() -> Verdict {
    let graphs: Vec<_> = (2..=SWEEP_MAX_NODES).flat_map(enumerate_connected_graphs).collect();
    let r = tie_break_invariance_experiment(&graphs, ALPHA, LAMBDA, LAMBDA, &TieBreakRule::ALL, SWEEP_GAMMAS, SEED).unwrap();
    if !r.counterexamples.is_empty() {
        let path = std::env::temp_dir().join("cascadia_counterexamples.json");
        std::fs::write(&path, serde_json::to_string_pretty(&r.counterexamples).unwrap()).unwrap();
        eprintln!("counterexamples written to {}", path.display());
    }
    verdict(
        r.counterexamples.is_empty() && r.agreeing == r.stabilized,
        format!(
            "{} graphs, {} instances, {} stabilized, {} agreeing, {} with ties, {} counterexamples, {} unstabilized, {} numerical",
            r.graphs,
            r.instances,
            r.stabilized,
            r.agreeing,
            r.instances_with_ties,
            r.counterexamples.len(),
            r.no_stabilization,
            r.numerical_failures
        ),
    )
}

fn c10_dominance() -> Verdict {
    let (mut reps, failures) = simulate_replicas(&reference_graph(), &experiment(DOMINANCE_REPLICAS)).unwrap();
    reps.sort_by(|a, b| b.failure_size.total_cmp(&a.failure_size));
    let top = ((DOMINANCE_TOP * DOMINANCE_REPLICAS as f64).round() as usize).min(reps.len());
    let dominated = reps[..top].iter().filter(|r| r.rest_demand < DOMINANCE_RATIO * r.max_demand).count();
    let frac = dominated as f64 / top as f64;
    verdict(
        frac >= DOMINANCE_MIN_FRACTION,
        format!("{dominated}/{top} of the largest S have rest < {DOMINANCE_RATIO} max ({frac:.3} >= {DOMINANCE_MIN_FRACTION}); {failures} numerical failures"),
    )
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("C1", "PTDF golden match", 1.0, c1_ptdf_golden),
        ("C2", "cascade golden match", 1.0, c2_cascade_golden),
        ("C3", "solver vs closed forms", 10.0, c3_closed_forms),
        ("C4", "solver vs oracle", 300.0, c4_oracle),
        ("C5", "epsilon independence", 300.0, c5_epsilon_independence),
        ("C6", "tie characterization", 300.0, c6_ties),
        ("C7", "tail exponent", 600.0, c7_hill),
        ("C8", "tail constant", 1200.0, c8_constant),
        ("C9", "tie-break invariance sweep", 3600.0, c9_sweep),
        ("C10", "big-jump dominance", 1200.0, c10_dominance),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut unexpected = Vec::new();
    for (id, name, budget, f) in criteria {
        if !filter.is_empty() && !filter.iter().any(|x| x == id) {
            continue;
        }
        let start = Instant::now();
        let v = f();
        let secs = start.elapsed().as_secs_f64();
        let in_time = secs <= budget;
        let pass = v.pass && in_time;
        let known = KNOWN_FAILURES.contains(&id);
        let note = match (pass, known) {
            (false, true) => " (known failure)",
            (true, true) => " (listed as known failure but passed)",
            _ => "",
        };
        let timing = if in_time { String::new() } else { " over budget".into() };
        println!(
            "{} {id} {name}: {} [{secs:.1} s / {budget:.0} s{timing}]{note}",
            if pass { "PASS" } else { "FAIL" },
            v.detail
        );
        if !pass && !known {
            unexpected.push(id);
        }
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
