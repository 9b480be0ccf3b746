//! Error types shared across the toolkit.

use thiserror::Error;

/// Structural errors: shape mismatches, invalid parameters, bad geometry.
#[derive(Debug, Error)]
pub enum StructuralError {
    #[error("grid mismatch: expected {expected_nx}x{expected_ny}, got {got_nx}x{got_ny}")]
    GridMismatch {
        expected_nx: usize,
        expected_ny: usize,
        got_nx: usize,
        got_ny: usize,
    },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("geometry does not fit the grid: {0}")]
    GeometryOutOfGrid(String),
    #[error("tissue table missing label {0}")]
    MissingTissueLabel(String),
    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),
}

/// Solver failures carrying enough context to diagnose the run.
#[derive(Debug, Error)]
pub enum SolverError {
    #[error("iteration diverged at step {iteration} (update norm history: {})",
        format_norm_tail(.update_norms))]
    Diverged {
        iteration: usize,
        update_norms: Vec<f64>,
    },
    #[error("no convergence within {n_max} iterations (final update norm {final_norm:.3e})")]
    NotConverged { n_max: usize, final_norm: f64 },
    #[error("solve failed for frequency {frequency_hz} Hz, source {source_index}: {source_err}")]
    AtTask {
        frequency_hz: f64,
        source_index: usize,
        source_err: Box<SolverError>,
    },
    #[error(transparent)]
    Structural(#[from] StructuralError),
}

fn format_norm_tail(norms: &[f64]) -> String {
    let tail: Vec<String> = norms
        .iter()
        .rev()
        .take(3)
        .rev()
        .map(|n| format!("{n:.3e}"))
        .collect();
    format!("... {}", tail.join(", "))
}

/// File container and serialization errors.
#[derive(Debug, Error)]
pub enum ContainerError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic bytes, not a WTM1 container")]
    BadMagic,
    #[error("unsupported dtype code {0}")]
    BadDtype(u32),
    #[error("payload truncated: expected {expected} bytes, got {got}")]
    Truncated { expected: usize, got: usize },
    #[error("dtype mismatch: expected {expected}, found {found}")]
    DtypeMismatch {
        expected: &'static str,
        found: &'static str,
    },
    #[error("expected {expected} dimensions, found {found}")]
    NdimMismatch { expected: u32, found: u32 },
}
