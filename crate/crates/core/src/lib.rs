//! Distributed interval observers for discrete-time LTI plants with bounded
//! process and measurement noise, observed by agents on a directed graph.
//!
//! The crate covers gain synthesis by linear programming, the distributed
//! detectability check, stability certificates for the collective error, the
//! observer runtime and error analysis, and a scenario harness.

pub mod error;
pub mod error_analysis;
pub mod graph;
pub mod harness;
pub mod interval;
pub mod lp;
pub mod model;
pub mod network;
pub mod observer;
pub mod stability;
pub mod synthesis;

pub use error::{Error, Result};
pub use nalgebra;
pub use graph::Digraph;
pub use harness::{run_pipeline, PipelineOptions, RunReport, Scenario};
pub use interval::{IntervalVector, SignSplitMatrix};
pub use model::PlantModel;
pub use observer::{DistributedObserver, ObserverGains};
pub use stability::{CertificateKind, CollectiveMatrix, SelectionAssignment, StabilityCertificate};
pub use synthesis::{AgentGains, CpdnResult};
