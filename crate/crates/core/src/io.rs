//! File formats and batch orchestration: session traces, TOML configs,
//! parameter sweeps, and result files.

pub mod config;
pub mod results;
pub mod sweep;
pub mod trace;

pub use config::{apply_override, load_config};
pub use results::{write_outcomes, write_report};
pub use sweep::{run_sweep, SweepResult, SweepRow, SweepSpec};
pub use trace::{parse_trace, replay_sessions, synthesize_trace, write_trace, TraceParse};

/// Locked, buffered stdout.
pub fn stdout_lock() -> std::io::BufWriter<std::io::StdoutLock<'static>> {
    std::io::BufWriter::new(std::io::stdout().lock())
}
