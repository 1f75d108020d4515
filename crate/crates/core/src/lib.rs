//! Cascading overload failures on DC power networks.
//!
//! The crate covers the full pipeline: PTDF flow physics ([`power_flow`]),
//! dispatch by projection onto the flow-limit polytope ([`opf`]), the
//! failure cascade with deterministic tie-breaking ([`cascade`]), exact tie
//! analysis ([`ties`]) and heavy-tailed Monte Carlo experiments
//! ([`scenarios`]).

pub mod cascade;
pub mod error;
pub mod example;
pub mod graph;
pub mod linalg;
pub mod opf;
pub mod power_flow;
pub mod scenarios;
pub mod ties;

pub use error::{Error, Result};
pub use graph::{build_graph, connected_components, incidence_matrix, ComponentPartition, Graph};
pub use power_flow::{compute_ptdf, flow, planning_stage, LimitSet, PtdfSystem};
