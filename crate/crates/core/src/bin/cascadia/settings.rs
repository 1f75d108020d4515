//! Run configuration: a config file (TOML or JSON) overlaid by flags.

use std::path::{Path, PathBuf};

use cascadia::cascade::TieBreakRule;
use clap::Args;
use serde::{Deserialize, Serialize};

use crate::exit::CliError;

pub const DEFAULT_ALPHA: f64 = 1.5;
pub const DEFAULT_LAMBDA: f64 = 0.5;
pub const DEFAULT_REPLICAS: usize = 100_000;
pub const DEFAULT_SEED: u64 = 0;
pub const DEFAULT_GAMMAS_PER_GRAPH: usize = 20;
pub const DEFAULT_MAX_NODES: usize = 6;

/// Every option any subcommand understands. In a config file the keys are
/// the flag names with underscores.
#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    /// Graph JSON file: {"nodes": n, "edges": [[tail, head], ...]}
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph: Option<PathBuf>,

    /// Demand vector: a JSON/CSV file or an inline comma list
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub demand: Option<String>,

    /// Profile ratios gamma (first entry 0, summing to 1), file or inline
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<String>,

    /// Pareto tail index of the demands [default: 1.5]
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,

    /// Loading factor, in (0, 1) [default: 0.5]
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,

    /// Emergency loading factor, at least lambda [default: lambda]
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_star: Option<f64>,

    /// Tie-break rule: break_all, smallest_label or largest_label [default: break_all]
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule: Option<TieBreakRule>,

    /// Comma-separated rules compared by the conjecture sweep [default: all three]
    #[arg(long, value_delimiter = ',')]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rules: Option<Vec<TieBreakRule>>,

    /// Exogenously failed first edge (1-based label)
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_edge: Option<usize>,

    /// Node carrying the big demand [default: 1]
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_node: Option<usize>,

    /// Working epsilon of the big-jump profile [default: stabilized]
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,

    /// Edge pair "j,k" to analyze [default: every tied pair]
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair: Option<String>,

    /// Cascade step (1-based) for --pair [default: every applicable step]
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<usize>,

    /// Monte Carlo replicas [default: 100000]
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replicas: Option<usize>,

    /// Replicas for the partition-probability table [default: 20000]
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partition_replicas: Option<usize>,

    /// Order statistics used by the Hill estimator [default: 0.5% of replicas]
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hill_k: Option<usize>,

    /// Random seed [default: 0]
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,

    /// Random gammas per graph in the conjecture sweep [default: 20]
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gammas_per_graph: Option<usize>,

    /// Largest node count in the conjecture sweep [default: 6]
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_nodes: Option<usize>,

    /// repro-example regime: default or high-emergency
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regime: Option<String>,

    /// Output directory
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,

    /// Write the oriented PTDF matrix as CSV
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dump_ptdf: Option<PathBuf>,

    /// Worker threads [default: all cores]
    #[arg(long, env = "CASCADIA_THREADS")]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
}

macro_rules! overlay {
    ($base:ident, $top:ident, $($field:ident),*) => {
        $( if $top.$field.is_some() { $base.$field = $top.$field.clone(); } )*
    };
}

impl Settings {
    /// `self` overridden by every field set in `top`.
    pub fn overlay(mut self, top: &Settings) -> Settings {
        overlay!(
            self, top, graph, demand, gamma, alpha, lambda, lambda_star, rule, rules, first_edge, max_node,
            epsilon, pair, step, replicas, partition_replicas, hill_k, seed, gammas_per_graph, max_nodes,
            regime, out, dump_ptdf, threads
        );
        self
    }

    pub fn alpha(&self) -> f64 {
        self.alpha.unwrap_or(DEFAULT_ALPHA)
    }

    pub fn lambda(&self) -> f64 {
        self.lambda.unwrap_or(DEFAULT_LAMBDA)
    }

    pub fn lambda_star(&self) -> f64 {
        self.lambda_star.unwrap_or_else(|| self.lambda())
    }

    pub fn rule(&self) -> TieBreakRule {
        self.rule.unwrap_or(TieBreakRule::BreakAll)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(DEFAULT_SEED)
    }

    pub fn replicas(&self) -> usize {
        self.replicas.unwrap_or(DEFAULT_REPLICAS)
    }

    /// Check value ranges shared by every subcommand.
    pub fn validate(&self) -> Result<(), CliError> {
        let (l, ls) = (self.lambda(), self.lambda_star());
        if !(l > 0.0 && l < 1.0) {
            return Err(CliError::Usage(format!("--lambda must lie in (0, 1), got {l}")));
        }
        if !(ls >= l) || !ls.is_finite() {
            return Err(CliError::Usage(format!("--lambda-star must be at least lambda ({l}), got {ls}")));
        }
        if !(self.alpha() > 0.0) {
            return Err(CliError::Usage(format!("--alpha must be positive, got {}", self.alpha())));
        }
        if let Some(e) = self.epsilon {
            if !(e > 0.0) {
                return Err(CliError::Usage(format!("--epsilon must be positive, got {e}")));
            }
        }
        for (name, v) in [("replicas", self.replicas), ("partition-replicas", self.partition_replicas), ("threads", self.threads)] {
            if v == Some(0) {
                return Err(CliError::Usage(format!("--{name} must be positive")));
            }
        }
        Ok(())
    }
}

/// Read a config file. A run manifest is accepted too, in which case its
/// echoed configuration is used.
pub fn load_file(path: &Path) -> Result<Settings, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    let is_json = path.extension().is_some_and(|x| x == "json") || text.trim_start().starts_with('{');
    if is_json {
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
        let value = match value.get("config_echo") {
            Some(echo) => echo.clone(),
            None => value,
        };
        serde_json::from_value(value).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    } else {
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }
}

/// Resolve file settings (if any) overlaid by flag settings.
pub fn parse_config(flags: &Settings, file: Option<&Path>) -> Result<Settings, CliError> {
    let base = match file {
        Some(p) => load_file(p)?,
        None => Settings::default(),
    };
    let merged = base.overlay(flags);
    merged.validate()?;
    Ok(merged)
}
