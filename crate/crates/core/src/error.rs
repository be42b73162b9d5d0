use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the numerical core and the scenario layer.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected} samples, found {found}")]
    Shape { expected: usize, found: usize },

    #[error("grid mismatch between operands ({left} vs {right})")]
    GridMismatch { left: String, right: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("dilation aliasing at t = {t}: mass fraction {mass_fraction:.3e} lies outside the admissible central box (tolerance {tolerance:.1e})")]
    DilationAliasing {
        t: f64,
        mass_fraction: f64,
        tolerance: f64,
    },

    #[error("quadrature node {index} (nu = {nu}) failed: {source}")]
    QuadratureNode {
        index: usize,
        nu: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("non-finite value encountered at t = {time}")]
    NonFinite { time: f64 },

    #[error("integration aborted at t = {time}: {cause}")]
    Aborted {
        time: f64,
        cause: Box<Error>,
        partial: Box<crate::solver::TrajectoryRecord>,
    },

    #[error("imaginary residue {residue:.3e} exceeds tolerance {tolerance:.1e}")]
    ImaginaryResidue { residue: f64, tolerance: f64 },

    #[error("file not found: {0}")]
    NotFound(PathBuf),

    #[error("parse error in {path} at line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invalid scenario:\n{}", .0.join("\n"))]
    Validation(Vec<String>),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
