//! Desk-scale experiments driven by deterministic providers: synthetic
//! observation streams, memory-growth ablation, a convergence trace and the
//! pairwise judge runner.

pub mod ablation;
pub mod convergence;
pub mod judge;
pub mod stream;

pub use ablation::{compression_ratio, run_ablation, run_rounds, Mode, SimReport};
pub use convergence::{run_convergence, ConvergenceTrace};
pub use judge::{run_judge, JudgePair, JudgeReport};
pub use stream::{generate, ObservationStream, StreamSpec, Triple};
