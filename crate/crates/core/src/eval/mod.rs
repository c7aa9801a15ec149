//! Evaluation: accuracy reports, the feature-subset ablation grid and
//! model complexity.

pub mod ablation;
pub mod complexity;
pub mod metrics;

pub use ablation::{run_ablation, AblationCell, AblationConfig, AblationReport, ABLATION_HEADS};
pub use complexity::{measure_complexity, measure_throughput, ComplexityReport, ComplexityRow};
pub use metrics::{evaluate, EvalReport};
