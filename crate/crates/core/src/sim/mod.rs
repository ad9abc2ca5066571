//! Simulation harness: synthetic designs, expert pools, coverage and width
//! comparisons, bootstrap variances and power analysis.

pub mod bootstrap;
pub mod coverage;
pub mod experts;
pub mod generator;
pub mod power;
pub mod rng;

pub use bootstrap::bootstrap_variance;
pub use coverage::{draw_pair, run_coverage, task_target, CoverageConfig, Method, MethodSummary, NRule, SimulationResult, Task};
pub use experts::{apply_experts, ExpertPool, ExpertSpec};
pub use generator::{DataMode, Design, GeneratorConfig, Sample, Truth};
pub use power::{power_curves, power_search, PowerConfig, PowerCurve, PowerOutcome, PowerPoint};
