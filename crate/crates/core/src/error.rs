//! Error types shared across the simulator.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum KerrError {
    #[error("junction inductance diverges: |cos(pi phi)| = {cos_abs:e} <= {eps:e} at phi = {phi}")]
    DivergentInductance { phi: f64, cos_abs: f64, eps: f64 },

    #[error("invalid circuit parameters: {0}")]
    InvalidParams(String),

    #[error("root bracketing failed for mode {mode}: {detail}")]
    RootBracketingFailure { mode: usize, detail: String },

    #[error("Kerr ratio {ratio:e} exceeds the circuit upper bound 2 pi Z0/R_K = {bound:e}")]
    KerrBoundExceeded { ratio: f64, bound: f64 },

    #[error("self-Kerr coefficient must be positive, got {0:e} Hz")]
    NonpositiveKerr(f64),

    #[error("detuning must be positive, got {0:e} Hz")]
    NonpositiveDetuning(f64),

    #[error("drive is below the bifurcation threshold; no spinodal exists at this power")]
    BelowBifurcation,

    #[error("integration step {dt:e} s exceeds the stability limit {max:e} s")]
    StepSizeTooLarge { dt: f64, max: f64 },

    #[error("steady state has a single branch; nothing to switch to")]
    NonconvergentBranches,

    #[error("mode {0} is uncoupled (even modes have a current node at the SQUIDs)")]
    UncoupledMode(usize),

    #[error("probe power violates the linearity guard: K_n * n_bar = {shift:e} Hz > 0.1 gamma_n = {limit:e} Hz")]
    LinearityViolated { shift: f64, limit: f64 },

    #[error("bias drifted during the scan: P_s moved from {before} to {after}")]
    BiasDrift { before: f64, after: f64 },

    #[error("frequency grid does not span the S-curve (P_s range {lo}..{hi})")]
    GridTooNarrow { lo: f64, hi: f64 },

    #[error("curve does not span the requested probability levels ({lo}..{hi})")]
    RangeNotSpanned { lo: f64, hi: f64 },

    #[error("fit did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("insufficient span: {0}")]
    InsufficientSpan(String),

    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, KerrError>;
