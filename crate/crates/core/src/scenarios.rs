//! Heavy-tailed demand experiments: Pareto sampling, big-jump profiles,
//! epsilon stabilization, partition probabilities, the tail constant, Monte
//! Carlo tail estimation, Hill fitting and the tie-break invariance sweep.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::DVector;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cascade::{argmax, run_cascade, CascadeTrace, TieBreakRule};
use crate::error::{Error, Result};
use crate::graph::{build_graph, ComponentPartition, Graph};
use crate::opf::{canonical_active_set, solve, OpfProblem, OpfSolution};
use crate::power_flow::{compute_full_ptdf, planning_stage, LimitSet, PtdfSystem};

pub const EPSILON_START: f64 = 1e-2;
pub const EPSILON_FLOOR: f64 = 1e-8;
pub const TAIL_GRID_POINTS: usize = 40;
pub const DEFAULT_HILL_FRACTION: f64 = 0.005;
/// Replicas used for the partition table when a tail run does not say.
pub const DEFAULT_PARTITION_REPLICAS: usize = 20_000;

/// Per-replica generator: a ChaCha stream keyed by `(seed, index)`.
pub fn replica_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Inverse-CDF Pareto draw with unit scale: `P(X > x) = x^{-α}` for `x ≥ 1`.
pub fn pareto_from_uniform(u: f64, alpha: f64) -> f64 {
    u.powf(-1.0 / alpha)
}

pub fn sample_pareto<R: RngCore>(rng: &mut R, n: usize, alpha: f64) -> Vec<f64> {
    // 1 - U lies in (0, 1], keeping the draw finite
    (0..n).map(|_| pareto_from_uniform(1.0 - rng.random::<f64>(), alpha)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandSample {
    pub x: Vec<f64>,
    /// `x` with the maximum moved to the front.
    pub y: Vec<f64>,
    /// 1-based node of the maximum.
    pub max_index: usize,
}

pub fn sample_pareto_demands(n: usize, alpha: f64, seed: u64) -> Result<DemandSample> {
    if n < 2 || !(alpha > 0.0) {
        return Err(Error::InvalidDemand(format!("need n >= 2 and alpha > 0 (n = {n}, alpha = {alpha})")));
    }
    let x = sample_pareto(&mut ChaCha8Rng::seed_from_u64(seed), n, alpha);
    let (y, max_index) = reorder_max_first(&x);
    Ok(DemandSample { x, y, max_index })
}

/// `(X_i, X_1, …, X_{i-1}, X_{i+1}, …)` where `i` is the first maximizer.
pub fn reorder_max_first(x: &[f64]) -> (Vec<f64>, usize) {
    let i = argmax(&DVector::from_column_slice(x));
    let mut y = Vec::with_capacity(x.len());
    y.push(x[i - 1]);
    y.extend(x.iter().enumerate().filter(|(k, _)| *k != i - 1).map(|(_, &v)| v));
    (y, i)
}

/// Map a vector in max-first coordinates back to original node order.
pub fn place_max_first(y: &[f64], max_node: usize) -> Vec<f64> {
    (1..=y.len())
        .map(|u| match u.cmp(&max_node) {
            std::cmp::Ordering::Equal => y[0],
            std::cmp::Ordering::Less => y[u],
            std::cmp::Ordering::Greater => y[u - 1],
        })
        .collect()
}

pub fn validate_gamma(gamma: &[f64]) -> Result<()> {
    if gamma.len() < 2 {
        return Err(Error::InvalidGamma("gamma needs at least two entries".into()));
    }
    if gamma[0] != 0.0 {
        return Err(Error::InvalidGamma("gamma_1 must be 0".into()));
    }
    if gamma.iter().any(|&g| !(g >= 0.0) || !g.is_finite()) {
        return Err(Error::InvalidGamma("gamma must be finite and nonnegative".into()));
    }
    let s: f64 = gamma.iter().sum();
    if (s - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidGamma(format!("gamma must sum to 1 (sum = {s})")));
    }
    Ok(())
}

/// `e_1 + ε γ`.
pub fn big_jump_profile(gamma: &[f64], epsilon: f64) -> Result<DVector<f64>> {
    validate_gamma(gamma)?;
    if !(epsilon >= 0.0) || !epsilon.is_finite() {
        return Err(Error::InvalidGamma(format!("epsilon must be nonnegative, got {epsilon}")));
    }
    let mut d = DVector::from_iterator(gamma.len(), gamma.iter().map(|g| epsilon * g));
    d[0] += 1.0;
    Ok(d)
}

/// `(γ, ε)` of a max-first sample: `γ = (0, y_2, …)/Σ_{j≥2} y_j`,
/// `ε = Σ_{j≥2} y_j / y_1`.
pub fn profile_from_sample(y: &[f64]) -> (Vec<f64>, f64) {
    let rest: f64 = y[1..].iter().sum();
    let mut gamma = vec![0.0];
    gamma.extend(y[1..].iter().map(|v| v / rest));
    (gamma, rest / y[0])
}

/// Draw `γ` from `n - 1` i.i.d. Pareto values.
pub fn sample_gamma<R: RngCore>(rng: &mut R, n: usize, alpha: f64) -> Vec<f64> {
    let xs = sample_pareto(rng, n - 1, alpha);
    let s: f64 = xs.iter().sum();
    let mut gamma = vec![0.0];
    gamma.extend(xs.iter().map(|x| x / s));
    gamma
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CascadeParams {
    pub lambda: f64,
    pub lambda_star: f64,
    pub rule: TieBreakRule,
}

/// Everything produced by one planning/dispatch/cascade run.
#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub ptdf: PtdfSystem,
    pub flips: Vec<usize>,
    pub limits: LimitSet,
    pub dispatch: OpfSolution,
    /// Canonicalized active hyperplane set.
    pub active_set: Vec<usize>,
    pub trace: CascadeTrace,
}

impl PipelineOutcome {
    pub fn graph(&self) -> &Graph {
        self.ptdf.graph()
    }
}

/// Orient for `demand`, set limits, dispatch and run the cascade started by
/// `first_edge`. `base` is the PTDF of the full input graph; `hub` is the
/// node whose unit-demand flows settle orientation of zero-flow edges.
pub fn run_pipeline(
    base: &PtdfSystem,
    demand: &DVector<f64>,
    hub: usize,
    first_edge: usize,
    params: &CascadeParams,
) -> Result<PipelineOutcome> {
    let (ptdf, flips) = base.oriented_for(demand, hub);
    let limits = planning_stage(&ptdf, demand, params.lambda, params.lambda_star)?;
    let problem = OpfProblem::new(ptdf.clone(), demand.clone(), params.lambda)?;
    let dispatch = solve(&problem)?;
    let active_set = canonical_active_set(&problem, &dispatch.active_set);
    let trace = run_cascade(
        ptdf.graph(),
        demand,
        &dispatch.generation_vec(),
        &limits,
        first_edge,
        params.rule,
    )?;
    Ok(PipelineOutcome { ptdf, flips, limits, dispatch, active_set, trace })
}

/// The big-jump demand `e_1 + εγ` with node 1 placed at `max_node`.
pub fn profile_demand(gamma: &[f64], epsilon: f64, max_node: usize) -> Result<DVector<f64>> {
    let p = big_jump_profile(gamma, epsilon)?;
    Ok(DVector::from_vec(place_max_first(p.as_slice(), max_node)))
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ScenarioKey {
    pub max_node: usize,
    pub first_edge: usize,
    pub disconnected: usize,
    pub active_set: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct StabilizedScenario {
    pub epsilon: f64,
    pub disconnected: usize,
    pub active_set: Vec<usize>,
    pub outcome: PipelineOutcome,
}

impl StabilizedScenario {
    pub fn failure_sequence(&self) -> Vec<Vec<usize>> {
        self.outcome.trace.failure_sequence()
    }

    pub fn end_components(&self) -> &ComponentPartition {
        &self.outcome.trace.end_components
    }
}

/// Halve ε from `EPSILON_START` until two consecutive values give the same
/// failure sequence and the same active set.
pub fn stabilize_epsilon(
    base: &PtdfSystem,
    gamma: &[f64],
    max_node: usize,
    first_edge: usize,
    params: &CascadeParams,
) -> Result<StabilizedScenario> {
    let run = |eps: f64| -> Result<PipelineOutcome> {
        run_pipeline(base, &profile_demand(gamma, eps, max_node)?, max_node, first_edge, params)
    };
    let mut eps = EPSILON_START;
    let mut prev = run(eps)?;
    loop {
        let next_eps = eps / 2.0;
        if next_eps < EPSILON_FLOOR {
            return Err(Error::NoStabilization { floor: EPSILON_FLOOR });
        }
        let cur = run(next_eps)?;
        if cur.trace.failure_sequence() == prev.trace.failure_sequence() && cur.active_set == prev.active_set {
            return Ok(StabilizedScenario {
                epsilon: eps,
                disconnected: prev.trace.disconnected_from_max,
                active_set: prev.active_set.clone(),
                outcome: prev,
            });
        }
        eps = next_eps;
        prev = cur;
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PartitionEntry {
    pub key: ScenarioKey,
    pub count: usize,
    /// Conditional probability given `(max_node, first_edge)`.
    pub probability: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PartitionTable {
    pub entries: Vec<PartitionEntry>,
    pub replicas: usize,
    pub no_stabilization: usize,
    pub numerical_failures: usize,
}

impl PartitionTable {
    /// Sum of probabilities for each `(max_node, first_edge)` pair.
    pub fn pair_totals(&self) -> BTreeMap<(usize, usize), f64> {
        let mut out = BTreeMap::new();
        for e in &self.entries {
            *out.entry((e.key.max_node, e.key.first_edge)).or_insert(0.0) += e.probability;
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub alpha: f64,
    pub lambda: f64,
    pub lambda_star: f64,
    pub rule: TieBreakRule,
    pub replicas: usize,
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn params(&self) -> CascadeParams {
        CascadeParams { lambda: self.lambda, lambda_star: self.lambda_star, rule: self.rule }
    }
}

/// Tally `(i, l, z, I*)` over stabilized big-jump profiles. Replica `r` is
/// assigned the pair `r mod (n m)` so every pair gets the same share.
pub fn estimate_partition_probs(graph: &Graph, cfg: &ExperimentConfig) -> Result<PartitionTable> {
    graph.require_connected()?;
    let base = compute_full_ptdf(graph)?;
    let n = graph.node_count();
    let m = graph.edge_count();
    let params = cfg.params();
    let results: Vec<(usize, usize, Result<StabilizedScenario>)> = (0..cfg.replicas)
        .into_par_iter()
        .map(|r| {
            let pair = r % (n * m);
            let (i, l) = (pair / m + 1, pair % m + 1);
            let mut rng = replica_rng(cfg.seed, r as u64);
            let gamma = sample_gamma(&mut rng, n, cfg.alpha);
            (i, l, stabilize_epsilon(&base, &gamma, i, l, &params))
        })
        .collect();

    let mut counts: BTreeMap<ScenarioKey, usize> = BTreeMap::new();
    let mut pair_counts: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut no_stabilization = 0;
    let mut numerical_failures = 0;
    for (i, l, res) in results {
        match res {
            Ok(s) => {
                let key = ScenarioKey { max_node: i, first_edge: l, disconnected: s.disconnected, active_set: s.active_set };
                *counts.entry(key).or_insert(0) += 1;
                *pair_counts.entry((i, l)).or_insert(0) += 1;
            }
            Err(Error::NoStabilization { .. }) => no_stabilization += 1,
            Err(Error::NumericalFailure(_)) => numerical_failures += 1,
            Err(e) => return Err(e),
        }
    }
    let entries = counts
        .into_iter()
        .map(|(key, count)| {
            let total = pair_counts[&(key.max_node, key.first_edge)];
            PartitionEntry { probability: count as f64 / total as f64, key, count }
        })
        .collect();
    Ok(PartitionTable { entries, replicas: cfg.replicas, no_stabilization, numerical_failures })
}

/// `C = Σ (K/m) (λ z / n)^α p(key | i, l)` over the table.
pub fn theoretical_constant(table: &PartitionTable, lambda: f64, n: usize, m: usize, alpha: f64, k: f64) -> f64 {
    table
        .entries
        .iter()
        .map(|e| (k / m as f64) * (lambda * e.key.disconnected as f64 / n as f64).powf(alpha) * e.probability)
        .sum()
}

/// `k / Σ_{i≤k} ln(V_(i) / V_(k+1))` over the positive values.
pub fn hill_estimator(values: &[f64], k: usize) -> Result<f64> {
    let mut v: Vec<f64> = values.iter().cloned().filter(|&x| x > 0.0 && x.is_finite()).collect();
    if k == 0 || k >= v.len() {
        return Err(Error::InsufficientData(format!("need k < {} positive values, got k = {k}", v.len())));
    }
    v.sort_unstable_by(|a, b| b.total_cmp(a));
    let threshold = v[k];
    let sum: f64 = v[..k].iter().map(|x| (x / threshold).ln()).sum();
    if sum <= 0.0 {
        return Err(Error::InsufficientData("top order statistics are all equal".into()));
    }
    Ok(k as f64 / sum)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplicaOutcome {
    pub failure_size: f64,
    pub max_node: usize,
    pub first_edge: usize,
    pub disconnected: usize,
    pub max_demand: f64,
    /// `Σ_{j≠N} X_j`.
    pub rest_demand: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TailEstimate {
    pub survival_points: Vec<(f64, f64)>,
    pub hill_alpha: f64,
    pub hill_k: usize,
    pub c_hat_empirical: f64,
    pub c_theoretical: f64,
    pub sample_count: usize,
    pub positive_count: usize,
    pub numerical_failures: usize,
}

#[derive(Debug, Clone)]
pub struct TailRun {
    pub estimate: TailEstimate,
    pub replicas: Vec<ReplicaOutcome>,
    pub partition: PartitionTable,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailOptions {
    pub hill_k: Option<usize>,
    pub partition_replicas: usize,
}

impl Default for TailOptions {
    fn default() -> Self {
        Self { hill_k: None, partition_replicas: DEFAULT_PARTITION_REPLICAS }
    }
}

/// Simulate `cfg.replicas` raw Pareto demand vectors through the full
/// pipeline with a uniformly random first failure.
pub fn simulate_replicas(graph: &Graph, cfg: &ExperimentConfig) -> Result<(Vec<ReplicaOutcome>, usize)> {
    graph.require_connected()?;
    let base = compute_full_ptdf(graph)?;
    let n = graph.node_count();
    let m = graph.edge_count();
    let params = cfg.params();
    let results: Vec<Result<ReplicaOutcome>> = (0..cfg.replicas)
        .into_par_iter()
        .map(|r| {
            let mut rng = replica_rng(cfg.seed, r as u64);
            let x = sample_pareto(&mut rng, n, cfg.alpha);
            let l = rng.random_range(1..=m);
            let d = DVector::from_vec(x);
            let hub = argmax(&d);
            let out = run_pipeline(&base, &d, hub, l, &params)?;
            let total = d.sum();
            Ok(ReplicaOutcome {
                failure_size: out.trace.failure_size.max(0.0),
                max_node: hub,
                first_edge: l,
                disconnected: out.trace.disconnected_from_max,
                max_demand: d[hub - 1],
                rest_demand: total - d[hub - 1],
            })
        })
        .collect();
    let mut out = Vec::with_capacity(results.len());
    let mut failures = 0;
    for r in results {
        match r {
            Ok(o) => out.push(o),
            Err(Error::NumericalFailure(_)) => failures += 1,
            Err(e) => return Err(e),
        }
    }
    Ok((out, failures))
}

/// Empirical survival `P̂(S > x)` on `TAIL_GRID_POINTS` log-spaced points from
/// `max(q90, smallest positive S)` to the largest `S`.
pub fn survival_curve(values: &[f64]) -> Vec<(f64, f64)> {
    let mut v: Vec<f64> = values.to_vec();
    v.sort_unstable_by(|a, b| a.total_cmp(b));
    let count = v.len();
    let Some(&hi) = v.last() else { return Vec::new() };
    let Some(&min_pos) = v.iter().find(|&&x| x > 0.0) else { return Vec::new() };
    let q90 = v[((0.9 * count as f64).ceil() as usize).saturating_sub(1).min(count - 1)];
    let lo = q90.max(min_pos);
    let points = if hi > lo { TAIL_GRID_POINTS } else { 1 };
    (0..points)
        .map(|k| {
            let x = if points == 1 { lo } else { lo * (hi / lo).powf(k as f64 / (points - 1) as f64) };
            // number of values strictly above x
            let above = count - v.partition_point(|&s| s <= x);
            (x, above as f64 / count as f64)
        })
        .collect()
}

/// Median of `x^α P̂(S > x)` over grid points in the top decade, excluding
/// the last point (where `P̂` is zero).
pub fn plateau_constant(curve: &[(f64, f64)], alpha: f64) -> f64 {
    let Some(&(hi, _)) = curve.last() else { return 0.0 };
    let mut vals: Vec<f64> = curve
        .iter()
        .filter(|(x, _)| *x >= hi / 10.0 && *x < hi)
        .map(|(x, p)| x.powf(alpha) * p)
        .collect();
    if vals.is_empty() {
        return 0.0;
    }
    vals.sort_unstable_by(|a, b| a.total_cmp(b));
    let k = vals.len();
    if k % 2 == 1 {
        vals[k / 2]
    } else {
        0.5 * (vals[k / 2 - 1] + vals[k / 2])
    }
}

pub fn default_hill_k(replicas: usize) -> usize {
    ((DEFAULT_HILL_FRACTION * replicas as f64).ceil() as usize).max(1)
}

pub fn monte_carlo_tail(graph: &Graph, cfg: &ExperimentConfig, opts: &TailOptions) -> Result<TailRun> {
    let (replicas, numerical_failures) = simulate_replicas(graph, cfg)?;
    let s: Vec<f64> = replicas.iter().map(|r| r.failure_size).collect();
    let positive_count = s.iter().filter(|&&x| x > 0.0).count();
    let hill_k = opts.hill_k.unwrap_or_else(|| default_hill_k(cfg.replicas));
    let hill_alpha = hill_estimator(&s, hill_k)?;
    let survival_points = survival_curve(&s);
    let c_hat_empirical = plateau_constant(&survival_points, cfg.alpha);

    let part_cfg = ExperimentConfig { replicas: opts.partition_replicas, ..*cfg };
    let partition = estimate_partition_probs(graph, &part_cfg)?;
    let c_theoretical =
        theoretical_constant(&partition, cfg.lambda, graph.node_count(), graph.edge_count(), cfg.alpha, 1.0);
    Ok(TailRun {
        estimate: TailEstimate {
            survival_points,
            hill_alpha,
            hill_k,
            c_hat_empirical,
            c_theoretical,
            sample_count: s.len(),
            positive_count,
            numerical_failures,
        },
        replicas,
        partition,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RuleOutcome {
    pub rule: TieBreakRule,
    pub epsilon: f64,
    pub failure_sequence: Vec<Vec<usize>>,
    pub end_components: Vec<Vec<usize>>,
    pub failure_size: f64,
    pub trace: CascadeTrace,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Counterexample {
    pub nodes: usize,
    pub edges: Vec<[usize; 2]>,
    pub gamma: Vec<f64>,
    pub max_node: usize,
    pub first_edge: usize,
    pub outcomes: Vec<RuleOutcome>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct InvarianceReport {
    pub graphs: usize,
    pub instances: usize,
    pub stabilized: usize,
    pub agreeing: usize,
    pub no_stabilization: usize,
    pub numerical_failures: usize,
    /// Stabilized instances where at least one step had a multi-edge
    /// maximizer set under some rule.
    pub instances_with_ties: usize,
    pub counterexamples: Vec<Counterexample>,
}

impl InvarianceReport {
    pub fn agreement_rate(&self) -> f64 {
        if self.stabilized == 0 {
            1.0
        } else {
            self.agreeing as f64 / self.stabilized as f64
        }
    }
}

enum InstanceResult {
    Stable { agree: bool, tie: bool, outcomes: Vec<RuleOutcome> },
    NoStabilization,
    Numerical,
}

/// For every graph, `gammas_per_graph` random γ, every max node and every
/// first edge: compare end-of-cascade partitions across `rules`.
pub fn tie_break_invariance_experiment(
    graphs: &[Graph],
    alpha: f64,
    lambda: f64,
    lambda_star: f64,
    rules: &[TieBreakRule],
    gammas_per_graph: usize,
    seed: u64,
) -> Result<InvarianceReport> {
    if rules.len() < 2 {
        return Err(Error::PreconditionViolated("need at least two tie-break rules".into()));
    }
    let mut tasks = Vec::new();
    for (gi, g) in graphs.iter().enumerate() {
        g.require_connected()?;
        let mut rng = replica_rng(seed, gi as u64);
        for _ in 0..gammas_per_graph {
            let gamma = sample_gamma(&mut rng, g.node_count(), alpha);
            for i in 1..=g.node_count() {
                for l in 1..=g.edge_count() {
                    tasks.push((gi, gamma.clone(), i, l));
                }
            }
        }
    }
    let bases: Vec<PtdfSystem> = graphs.iter().map(compute_full_ptdf).collect::<Result<_>>()?;
    let results: Vec<(usize, Vec<f64>, usize, usize, InstanceResult)> = tasks
        .into_par_iter()
        .map(|(gi, gamma, i, l)| {
            let mut outcomes = Vec::with_capacity(rules.len());
            for &rule in rules {
                let params = CascadeParams { lambda, lambda_star, rule };
                match stabilize_epsilon(&bases[gi], &gamma, i, l, &params) {
                    Ok(s) => outcomes.push(RuleOutcome {
                        rule,
                        epsilon: s.epsilon,
                        failure_sequence: s.failure_sequence(),
                        end_components: s.end_components().members(),
                        failure_size: s.outcome.trace.failure_size,
                        trace: s.outcome.trace,
                    }),
                    Err(Error::NoStabilization { .. }) => return (gi, gamma, i, l, InstanceResult::NoStabilization),
                    Err(_) => return (gi, gamma, i, l, InstanceResult::Numerical),
                }
            }
            let canon: Vec<BTreeSet<BTreeSet<usize>>> =
                outcomes.iter().map(|o| o.trace.end_components.canonical()).collect();
            let agree = canon.windows(2).all(|w| w[0] == w[1]);
            let tie = outcomes.iter().any(|o| o.trace.steps.iter().any(|s| s.maximizers.len() > 1));
            (gi, gamma, i, l, InstanceResult::Stable { agree, tie, outcomes })
        })
        .collect();

    let mut report = InvarianceReport { graphs: graphs.len(), ..Default::default() };
    for (gi, gamma, i, l, res) in results {
        report.instances += 1;
        match res {
            InstanceResult::Stable { agree, tie, outcomes } => {
                report.stabilized += 1;
                if tie {
                    report.instances_with_ties += 1;
                }
                if agree {
                    report.agreeing += 1;
                } else {
                    let g = &graphs[gi];
                    report.counterexamples.push(Counterexample {
                        nodes: g.node_count(),
                        edges: g.to_file().edges,
                        gamma,
                        max_node: i,
                        first_edge: l,
                        outcomes,
                    });
                }
            }
            InstanceResult::NoStabilization => report.no_stabilization += 1,
            InstanceResult::Numerical => report.numerical_failures += 1,
        }
    }
    Ok(report)
}

/// All connected simple graphs on `n` nodes up to isomorphism, each given
/// by its lexicographically smallest edge list.
pub fn enumerate_connected_graphs(n: usize) -> Vec<Graph> {
    if n < 2 {
        return Vec::new();
    }
    let pairs: Vec<(usize, usize)> = (1..=n).flat_map(|a| ((a + 1)..=n).map(move |b| (a, b))).collect();
    let index_of = |a: usize, b: usize| -> usize {
        let (a, b) = if a < b { (a, b) } else { (b, a) };
        pairs.iter().position(|&p| p == (a, b)).unwrap()
    };
    let perms = permutations(n);
    // precompute where every pair goes under every permutation
    let maps: Vec<Vec<usize>> = perms
        .iter()
        .map(|p| pairs.iter().map(|&(a, b)| index_of(p[a - 1], p[b - 1])).collect())
        .collect();
    let mut seen: BTreeSet<u64> = BTreeSet::new();
    let mut out = Vec::new();
    for mask in 0u64..(1u64 << pairs.len()) {
        if (mask.count_ones() as usize) < n - 1 {
            continue;
        }
        let edges: Vec<(usize, usize)> =
            (0..pairs.len()).filter(|&k| mask & (1 << k) != 0).map(|k| pairs[k]).collect();
        let Ok(g) = build_graph(n, &edges) else { continue };
        if !g.is_connected() {
            continue;
        }
        // canonical form: smallest edge mask over all relabelings
        let canon = maps
            .iter()
            .map(|map| (0..pairs.len()).filter(|&k| mask & (1 << k) != 0).fold(0u64, |acc, k| acc | 1 << map[k]))
            .min()
            .unwrap();
        if seen.insert(canon) {
            let edges: Vec<(usize, usize)> =
                (0..pairs.len()).filter(|&k| canon & (1 << k) != 0).map(|k| pairs[k]).collect();
            out.push(build_graph(n, &edges).expect("canonical graph is valid"));
        }
    }
    out
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (1..=n).collect();
    heap_permute(n, &mut cur, &mut out);
    out
}

fn heap_permute(k: usize, a: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if k <= 1 {
        out.push(a.clone());
        return;
    }
    for i in 0..k {
        heap_permute(k - 1, a, out);
        if k.is_multiple_of(2) {
            a.swap(i, k - 1);
        } else {
            a.swap(0, k - 1);
        }
    }
}

/// Random connected simple graph: a random spanning tree plus each remaining
/// pair with probability `extra`, edges shuffled and randomly oriented.
pub fn random_connected_graph<R: RngCore>(rng: &mut R, n: usize, extra: f64) -> Graph {
    use rand::seq::SliceRandom;
    let mut order: Vec<usize> = (1..=n).collect();
    order.shuffle(rng);
    let mut set: BTreeSet<(usize, usize)> = BTreeSet::new();
    for k in 1..n {
        let parent = order[rng.random_range(0..k)];
        let (a, b) = (order[k].min(parent), order[k].max(parent));
        set.insert((a, b));
    }
    for a in 1..=n {
        for b in (a + 1)..=n {
            if !set.contains(&(a, b)) && rng.random::<f64>() < extra {
                set.insert((a, b));
            }
        }
    }
    let mut edges: Vec<(usize, usize)> =
        set.into_iter().map(|(a, b)| if rng.random::<bool>() { (a, b) } else { (b, a) }).collect();
    edges.shuffle(rng);
    build_graph(n, &edges).expect("generated graph is simple")
}
