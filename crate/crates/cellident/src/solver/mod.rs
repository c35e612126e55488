//! Adaptive explicit Runge–Kutta integration for mass matrix DAE systems.
//!
//! The driver is a Dormand–Prince 5(4) pair with PI step-size control and
//! fifth-order dense output. Systems expose a diagonal mass matrix whose
//! zero rows mark algebraic constraints; those rows are enforced at every
//! stage by a damped Newton projection (half-explicit scheme, adequate for
//! index-1 systems). The default battery models are pure ODEs and never
//! enter the Newton path.

mod dopri5;
mod newton;

pub use dopri5::{integrate_span, Solution};
pub use newton::{damped_newton, project_algebraic};

use thiserror::Error;

/// Right-hand side of M·dx/dt = F(t, x), with optional state admissibility
/// checks evaluated on every accepted step.
pub trait OdeSystem {
    fn dim(&self) -> usize;

    /// Writes F(t, x) into `out`.
    fn rhs(&self, t: f64, x: &[f64], out: &mut [f64]);

    /// Diagonal of the mass matrix, entries 0 (algebraic row) or 1.
    /// `None` means identity.
    fn mass_diag(&self) -> Option<&[f64]> {
        None
    }

    /// Number of leading components included in the error norm. Sensitivity
    /// augmentations report only the state block here.
    fn error_dim(&self) -> usize {
        self.dim()
    }

    /// Reject states outside the admissible box (e.g. stoichiometry out of
    /// (0, 1)). Called after each accepted step.
    fn check_state(&self, _t: f64, _x: &[f64]) -> Result<(), String> {
        Ok(())
    }
}

/// Integration failure, carrying the time at which it occurred.
#[derive(Debug, Error, Clone)]
pub enum SolverError {
    #[error("step size underflow at t = {t} (h = {h})")]
    StepSizeUnderflow { t: f64, h: f64 },
    #[error("exceeded {max_steps} steps at t = {t}")]
    MaxSteps { t: f64, max_steps: u64 },
    #[error("algebraic Newton failed to converge at t = {t} (residual {residual})")]
    NewtonFailure { t: f64, residual: f64 },
    #[error("state left the admissible box at t = {t}: {detail}")]
    StateViolation { t: f64, detail: String },
    #[error("non-finite value in {what} at t = {t}")]
    NonFinite { t: f64, what: String },
    #[error("invalid integration setup: {0}")]
    BadSetup(String),
}

/// Solver tolerances and limits.
#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Upper bound on the step size; defaults to the span.
    pub max_step: f64,
    pub max_steps: u64,
    /// Initial step; estimated when `None`.
    pub initial_step: Option<f64>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            rtol: 1e-8,
            atol: 1e-10,
            max_step: f64::INFINITY,
            max_steps: 5_000_000,
            initial_step: None,
        }
    }
}

/// Cumulative work counters for one integration.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize)]
pub struct SolverStats {
    pub steps: u64,
    pub rejected: u64,
    pub rhs_evals: u64,
    pub newton_iters: u64,
}

impl SolverStats {
    pub fn merge(&mut self, other: &SolverStats) {
        self.steps += other.steps;
        self.rejected += other.rejected;
        self.rhs_evals += other.rhs_evals;
        self.newton_iters += other.newton_iters;
    }
}

/// Central finite-difference step for sensitivity Jacobians.
#[inline]
pub fn fd_step_sensitivity(v: f64) -> f64 {
    (1e-6 * v.abs()).max(1e-10)
}

/// Central finite-difference step for steady-state linearisation.
#[inline]
pub fn fd_step_linearise(v: f64) -> f64 {
    (1e-7 * v.abs()).max(1e-10)
}
