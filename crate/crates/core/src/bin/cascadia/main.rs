mod exit;
mod settings;

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use cascadia::cascade::{argmax, TieBreakRule};
use cascadia::example::{repro_example, Golden, Regime};
use cascadia::graph::{Graph, GraphFile};
use cascadia::opf::{solve, verify_kkt, OpfProblem};
use cascadia::power_flow::{compute_full_ptdf, PtdfSystem};
use cascadia::scenarios::{
    enumerate_connected_graphs, monte_carlo_tail, profile_demand, run_pipeline, stabilize_epsilon, tie_break_invariance_experiment,
    validate_gamma, CascadeParams, ExperimentConfig, PipelineOutcome, TailOptions, DEFAULT_PARTITION_REPLICAS,
};
use cascadia::ties::{analyze_pair, tie_query_at, PairAnalysis};
use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;
use serde::Serialize;
use serde_json::json;

use exit::CliError;
use settings::{parse_config, Settings, DEFAULT_GAMMAS_PER_GRAPH, DEFAULT_MAX_NODES};

#[derive(Parser)]
#[command(name = "cascadia", version, about = "Cascading overload failures on DC power networks")]
struct Cli {
    /// TOML or JSON config file (or a run manifest); flags override it
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the dispatch problem for one demand vector
    OpfSolve(Settings),
    /// Run cascades for one demand vector (JSONL traces)
    Cascade(Settings),
    /// Evaluate the exact tie conditions along a big-jump cascade
    TieAnalyze(Settings),
    /// Monte Carlo estimate of the failure-size tail
    Tail(Settings),
    /// Compare end states across tie-break rules on all small graphs
    Conjecture(Settings),
    /// Re-run the six-node reference instance against its known values
    ReproExample(ReproArgs),
}

#[derive(Args)]
struct ReproArgs {
    #[command(flatten)]
    settings: Settings,

    /// Perturb the embedded golden PTDF (self-test of the diff)
    #[arg(long, hide = true)]
    corrupt_golden: bool,
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(e) = run(cli) {
        eprintln!("cascadia: {e}");
        std::process::exit(e.code());
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let config = cli.config.as_deref();
    let flags = match &cli.command {
        Command::OpfSolve(s)
        | Command::Cascade(s)
        | Command::TieAnalyze(s)
        | Command::Tail(s)
        | Command::Conjecture(s) => s,
        Command::ReproExample(r) => &r.settings,
    };
    let settings = parse_config(flags, config)?;
    if let Some(t) = settings.threads {
        // a second build only fails if a pool already exists, which is harmless
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    match cli.command {
        Command::OpfSolve(_) => opf_solve(&settings),
        Command::Cascade(_) => cascade(&settings),
        Command::TieAnalyze(_) => tie_analyze(&settings),
        Command::Tail(_) => tail(&settings),
        Command::Conjecture(_) => conjecture(&settings),
        Command::ReproExample(r) => repro(&settings, r.corrupt_golden),
    }
}

struct Timings(Vec<(String, f64)>, Instant);

impl Timings {
    fn new() -> Self {
        Self(Vec::new(), Instant::now())
    }

    fn lap(&mut self, phase: &str) {
        self.0.push((phase.to_string(), self.1.elapsed().as_secs_f64()));
        self.1 = Instant::now();
    }
}

/// Configuration echo with the documented defaults made explicit.
fn resolved(s: &Settings) -> Settings {
    Settings {
        alpha: Some(s.alpha()),
        lambda: Some(s.lambda()),
        lambda_star: Some(s.lambda_star()),
        rule: Some(s.rule()),
        seed: Some(s.seed()),
        threads: None,
        ..s.clone()
    }
}

fn write_manifest(dir: &Path, s: &Settings, timings: &Timings) -> Result<(), CliError> {
    let timings: BTreeMap<&str, f64> = timings.0.iter().map(|(k, v)| (k.as_str(), *v)).collect();
    let manifest = json!({
        "config_echo": resolved(s),
        "seed": s.seed(),
        "artifact_version": env!("CARGO_PKG_VERSION"),
        "timings": timings,
    });
    write_json(&dir.join("manifest.json"), &manifest)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Print to stdout; a closed pipe (`| head`) is not an error.
fn emit(text: &str) -> Result<(), CliError> {
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{text}").and_then(|_| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn out_dir(s: &Settings) -> Result<Option<PathBuf>, CliError> {
    match &s.out {
        Some(p) => {
            fs::create_dir_all(p)?;
            Ok(Some(p.clone()))
        }
        None => Ok(None),
    }
}

fn require_out(s: &Settings) -> Result<PathBuf, CliError> {
    out_dir(s)?.ok_or_else(|| CliError::Usage("--out <dir> is required".into()))
}

fn load_graph(s: &Settings) -> Result<Graph, CliError> {
    let path = s.graph.as_ref().ok_or_else(|| CliError::Usage("--graph <file> is required".into()))?;
    let text = fs::read_to_string(path).map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
    let file: GraphFile = serde_json::from_str(&text)?;
    let g = Graph::from_file(&file)?;
    g.require_connected()?;
    Ok(g)
}

/// A vector given inline (`1,0.2,0.3`) or as a file holding a JSON array or
/// comma/whitespace separated numbers.
fn parse_vector(spec: &str, what: &str) -> Result<Vec<f64>, CliError> {
    let text = if Path::new(spec).is_file() { fs::read_to_string(spec)? } else { spec.to_string() };
    let trimmed = text.trim();
    if trimmed.starts_with('[') {
        return serde_json::from_str(trimmed).map_err(|e| CliError::Validation(format!("{what}: {e}")));
    }
    trimmed
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|e| CliError::Validation(format!("{what}: '{t}': {e}"))))
        .collect()
}

fn demand_of(s: &Settings, n: usize) -> Result<DVector<f64>, CliError> {
    let spec = s.demand.as_ref().ok_or_else(|| CliError::Usage("--demand is required".into()))?;
    let d = parse_vector(spec, "demand")?;
    if d.len() != n {
        return Err(CliError::Validation(format!("demand has {} entries, graph has {n} nodes", d.len())));
    }
    Ok(DVector::from_vec(d))
}

fn check_node(node: usize, n: usize, flag: &str) -> Result<(), CliError> {
    if node == 0 || node > n {
        return Err(CliError::Validation(format!("--{flag} {node} is not a node of the graph")));
    }
    Ok(())
}

fn check_edge(edge: usize, m: usize) -> Result<(), CliError> {
    if edge == 0 || edge > m {
        return Err(CliError::Validation(format!("--first-edge {edge} is not an edge of the graph")));
    }
    Ok(())
}

fn dump_ptdf(s: &Settings, p: &PtdfSystem) -> Result<(), CliError> {
    if let Some(path) = &s.dump_ptdf {
        let mut text = String::new();
        for row in p.matrix().row_iter() {
            let cells: Vec<String> = row.iter().map(|x| x.to_string()).collect();
            text.push_str(&cells.join(","));
            text.push('\n');
        }
        fs::write(path, text)?;
    }
    Ok(())
}

fn params(s: &Settings) -> CascadeParams {
    CascadeParams { lambda: s.lambda(), lambda_star: s.lambda_star(), rule: s.rule() }
}

fn opf_solve(s: &Settings) -> Result<(), CliError> {
    let mut t = Timings::new();
    let g = load_graph(s)?;
    let d = demand_of(s, g.node_count())?;
    let hub = s.max_node.unwrap_or_else(|| argmax(&d));
    check_node(hub, g.node_count(), "max-node")?;
    let (ptdf, flips) = compute_full_ptdf(&g)?.oriented_for(&d, hub);
    dump_ptdf(s, &ptdf)?;
    let problem = OpfProblem::new(ptdf, d, s.lambda())?;
    let sol = solve(&problem)?;
    let kkt = verify_kkt(&problem, &sol);
    t.lap("solve");
    let out = json!({
        "flipped_edges": flips,
        "generation": sol.generation,
        "active_set": sol.active_set,
        "multipliers": sol.multipliers,
        "kkt_residual": sol.kkt_residual,
        "kkt": kkt,
        "pivots": sol.pivots,
    });
    emit(&serde_json::to_string_pretty(&out)?)?;
    if let Some(dir) = out_dir(s)? {
        write_json(&dir.join("opf.json"), &out)?;
        write_manifest(&dir, s, &t)?;
    }
    Ok(())
}

fn trace_record(first_edge: usize, out: &PipelineOutcome) -> serde_json::Value {
    json!({
        "first_edge": first_edge,
        "flipped_edges": out.flips,
        "failure_sequence": out.trace.failure_sequence(),
        "failure_size": out.trace.failure_size,
        "disconnected_from_max": out.trace.disconnected_from_max,
        "end_components": out.trace.end_components.members(),
        "active_set": out.active_set,
        "steps": out.trace.steps,
        "end_demand": out.trace.end_demand,
    })
}

fn cascade(s: &Settings) -> Result<(), CliError> {
    let mut t = Timings::new();
    let g = load_graph(s)?;
    let d = demand_of(s, g.node_count())?;
    let hub = s.max_node.unwrap_or_else(|| argmax(&d));
    check_node(hub, g.node_count(), "max-node")?;
    let edges: Vec<usize> = match s.first_edge {
        Some(e) => {
            check_edge(e, g.edge_count())?;
            vec![e]
        }
        None => (1..=g.edge_count()).collect(),
    };
    let base = compute_full_ptdf(&g)?;
    let p = params(s);
    let mut lines = String::new();
    for &e in &edges {
        let out = run_pipeline(&base, &d, hub, e, &p)?;
        if e == edges[0] {
            dump_ptdf(s, &out.ptdf)?;
        }
        lines.push_str(&serde_json::to_string(&trace_record(e, &out))?);
        lines.push('\n');
    }
    t.lap("cascade");
    match out_dir(s)? {
        Some(dir) => {
            fs::write(dir.join("traces.jsonl"), &lines)?;
            write_manifest(&dir, s, &t)?;
        }
        None => emit(lines.trim_end())?,
    }
    Ok(())
}

fn parse_pair(spec: &str) -> Result<(usize, usize), CliError> {
    let parts: Vec<&str> = spec.split(',').map(str::trim).collect();
    match parts.as_slice() {
        [a, b] => match (a.parse(), b.parse()) {
            (Ok(a), Ok(b)) => Ok((a, b)),
            _ => Err(CliError::Usage(format!("--pair expects 'j,k', got '{spec}'"))),
        },
        _ => Err(CliError::Usage(format!("--pair expects 'j,k', got '{spec}'"))),
    }
}

fn tie_analyze(s: &Settings) -> Result<(), CliError> {
    let mut t = Timings::new();
    let g = load_graph(s)?;
    let gamma = parse_vector(s.gamma.as_deref().ok_or_else(|| CliError::Usage("--gamma is required".into()))?, "gamma")?;
    if gamma.len() != g.node_count() {
        return Err(CliError::Validation(format!("gamma has {} entries, graph has {} nodes", gamma.len(), g.node_count())));
    }
    validate_gamma(&gamma)?;
    let hub = s.max_node.unwrap_or(1);
    check_node(hub, g.node_count(), "max-node")?;
    let l = s.first_edge.ok_or_else(|| CliError::Usage("--first-edge is required".into()))?;
    check_edge(l, g.edge_count())?;
    let base = compute_full_ptdf(&g)?;
    let p = params(s);
    let (epsilon, out) = match s.epsilon {
        Some(eps) => (eps, run_pipeline(&base, &profile_demand(&gamma, eps, hub)?, hub, l, &p)?),
        None => {
            let st = stabilize_epsilon(&base, &gamma, hub, l, &p)?;
            (st.epsilon, st.outcome)
        }
    };
    dump_ptdf(s, &out.ptdf)?;

    let mut requests: Vec<(usize, usize, usize)> = Vec::new();
    match &s.pair {
        Some(spec) => {
            let (j, k) = parse_pair(spec)?;
            let steps: Vec<usize> = match s.step {
                Some(st) => vec![st],
                None => (1..=out.trace.steps.len()).collect(),
            };
            requests.extend(steps.into_iter().map(|st| (st, j, k)));
        }
        None => {
            for (r, st) in out.trace.steps.iter().enumerate() {
                let m = &st.maximizers;
                for a in 0..m.len() {
                    for b in (a + 1)..m.len() {
                        requests.push((r + 1, m[a], m[b]));
                    }
                }
            }
        }
    }
    let mut analyses: Vec<PairAnalysis> = Vec::new();
    let mut skipped = Vec::new();
    for (step, j, k) in requests {
        if step == 0 {
            return Err(CliError::Usage("--step is 1-based".into()));
        }
        match tie_query_at(&out, step - 1, j, k, hub, &gamma).and_then(|q| analyze_pair(&q, step)) {
            Ok(a) => analyses.push(a),
            Err(e) => skipped.push(json!({"step": step, "edge_j": j, "edge_k": k, "reason": e.to_string()})),
        }
    }
    t.lap("analyze");
    let report = json!({
        "epsilon": epsilon,
        "failure_sequence": out.trace.failure_sequence(),
        "active_set": out.active_set,
        "analyses": analyses,
        "skipped": skipped,
    });
    emit(&serde_json::to_string_pretty(&report)?)?;
    if let Some(dir) = out_dir(s)? {
        write_json(&dir.join("ties.json"), &report)?;
        write_manifest(&dir, s, &t)?;
    }
    Ok(())
}

fn tail(s: &Settings) -> Result<(), CliError> {
    let mut t = Timings::new();
    let g = load_graph(s)?;
    let dir = require_out(s)?;
    let cfg = ExperimentConfig {
        alpha: s.alpha(),
        lambda: s.lambda(),
        lambda_star: s.lambda_star(),
        rule: s.rule(),
        replicas: s.replicas(),
        seed: s.seed(),
    };
    let opts = TailOptions {
        hill_k: s.hill_k,
        partition_replicas: s.partition_replicas.unwrap_or(DEFAULT_PARTITION_REPLICAS),
    };
    let run = monte_carlo_tail(&g, &cfg, &opts)?;
    t.lap("simulate");

    let mut csv = String::from("x,p_hat\n");
    for (x, p) in &run.estimate.survival_points {
        csv.push_str(&format!("{x},{p}\n"));
    }
    fs::write(dir.join("survival.csv"), csv)?;

    let mut scen = String::from("i,l,z,active_set,probability\n");
    for e in &run.partition.entries {
        let set: Vec<String> = e.key.active_set.iter().map(|x| x.to_string()).collect();
        scen.push_str(&format!(
            "{},{},{},{},{}\n",
            e.key.max_node,
            e.key.first_edge,
            e.key.disconnected,
            set.join(" "),
            e.probability
        ));
    }
    fs::write(dir.join("scenarios.csv"), scen)?;

    let est = &run.estimate;
    let summary = json!({
        "hill_alpha": est.hill_alpha,
        "hill_k": est.hill_k,
        "c_hat_empirical": est.c_hat_empirical,
        "c_theoretical": est.c_theoretical,
        "sample_count": est.sample_count,
        "positive_count": est.positive_count,
        "numerical_failures": est.numerical_failures,
        "partition": run.partition,
    });
    write_json(&dir.join("summary.json"), &summary)?;
    t.lap("write");
    write_manifest(&dir, s, &t)?;
    emit(&format!(
        "hill_alpha = {:.4} (k = {}), c_hat = {:.4}, c_theoretical = {:.4}",
        est.hill_alpha, est.hill_k, est.c_hat_empirical, est.c_theoretical
    ))?;
    Ok(())
}

fn conjecture(s: &Settings) -> Result<(), CliError> {
    let mut t = Timings::new();
    let dir = require_out(s)?;
    let max_nodes = s.max_nodes.unwrap_or(DEFAULT_MAX_NODES);
    if !(2..=7).contains(&max_nodes) {
        return Err(CliError::Usage(format!("--max-nodes must lie in 2..=7, got {max_nodes}")));
    }
    let graphs: Vec<Graph> = (2..=max_nodes).flat_map(enumerate_connected_graphs).collect();
    t.lap("enumerate");
    let rules = s.rules.clone().unwrap_or_else(|| TieBreakRule::ALL.to_vec());
    let report = tie_break_invariance_experiment(
        &graphs,
        s.alpha(),
        s.lambda(),
        s.lambda_star(),
        &rules,
        s.gammas_per_graph.unwrap_or(DEFAULT_GAMMAS_PER_GRAPH),
        s.seed(),
    )?;
    t.lap("sweep");
    write_json(&dir.join("report.json"), &report)?;
    write_manifest(&dir, s, &t)?;
    emit(&format!(
        "graphs = {}, instances = {}, stabilized = {}, agreeing = {}, counterexamples = {}",
        report.graphs,
        report.instances,
        report.stabilized,
        report.agreeing,
        report.counterexamples.len()
    ))?;
    if !report.counterexamples.is_empty() {
        return Err(CliError::Diff(format!("{} counterexamples written to report.json", report.counterexamples.len())));
    }
    Ok(())
}

fn repro(s: &Settings, corrupt: bool) -> Result<(), CliError> {
    let mut t = Timings::new();
    let regime = match s.regime.as_deref().unwrap_or("default") {
        "default" => Regime::Default,
        "high-emergency" | "high_emergency" => Regime::HighEmergency,
        other => return Err(CliError::Usage(format!("unknown regime '{other}'"))),
    };
    let mut golden = Golden::default();
    if corrupt {
        golden.v_full[(0, 0)] += 1e-3;
    }
    let report = repro_example(regime, &golden)?;
    t.lap("repro");
    emit(&serde_json::to_string_pretty(&report)?)?;
    if let Some(dir) = out_dir(s)? {
        write_json(&dir.join("report.json"), &report)?;
        write_manifest(&dir, s, &t)?;
    }
    if report.passed() {
        Ok(())
    } else {
        let failed: Vec<&str> = report.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
        Err(CliError::Diff(format!("failed checks: {}", failed.join(", "))))
    }
}
