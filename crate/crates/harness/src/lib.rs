//! Experiment harness for `wcopt`: configuration files, grid sweeps,
//! reports and the acceptance suite behind `wcopt verify`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod experiment;
pub mod report;
pub mod verify;

pub use config::ExperimentConfig;
pub use error::{HarnessError, Result};
pub use experiment::{enumerate, run_config, sweep, Axis};
pub use report::{emit_report, Format, Report, Row};

/// Runs `f` on a dedicated pool of `threads` workers (all cores when `None`).
pub fn with_threads<R: Send>(threads: Option<usize>, f: impl FnOnce() -> R + Send) -> R {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .expect("thread pool");
    pool.install(f)
}
