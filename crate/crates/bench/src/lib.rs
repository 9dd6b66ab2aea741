//! Dataset generators and benchmarks for bkio.

pub mod bench;
pub mod cpu;
mod error;
pub mod experiments;
pub mod fidelity;
pub mod gen;
pub mod report;

pub use bench::{run_benchmark, BenchOptions, BenchResult, Calc, Method};
pub use error::{BenchError, Result};
pub use gen::{generate_dimuon, generate_sweep, sweep_points, DimuonRecord, SweepPoint};
pub use report::{emit_csv, read_csv};
