//! Scenario files, plant simulation, end-to-end pipelines, and trace output.

pub mod bundled;
pub mod pipeline;
pub mod random;
pub mod scenario;
pub mod simulate;
pub mod trace;

pub use pipeline::{run_pipeline, CertificateMethod, PipelineOptions, PipelineOutput, RunReport};
pub use scenario::{load_scenario, parse_scenario, NoisePolicy, Rounds, Scenario};
pub use simulate::{simulate_plant, Trajectory};
