//! Small dense solvers for the two program shapes the precoders need.
//!
//! [`TraceSdp`] covers trace-objective SDPs over a Hermitian covariance and is
//! solved by operator splitting in the real symmetric embedding.
//! [`SocpProgram`] covers sum-of-squares objectives with linear, group-norm and
//! convex quadratic constraints and is solved by a log-barrier interior point
//! method.

mod dump;
mod sdp;
mod socp;

use std::time::Duration;

use serde::{Deserialize, Serialize};

pub use dump::{read_dump, write_dump};
pub use sdp::{solve_trace_sdp, DiagCap, TraceConstraint, TraceSdp};
pub use socp::{solve_socp, QuadForm, SocpConstraint, SocpProgram};

/// Outcome of a conic solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    MaxIterations,
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::MaxIterations => "max-iterations",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for SolveStatus {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "optimal" => Ok(SolveStatus::Optimal),
            "infeasible" => Ok(SolveStatus::Infeasible),
            "max-iterations" => Ok(SolveStatus::MaxIterations),
            other => Err(crate::Error::Parse(format!("unknown status '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub status: SolveStatus,
    pub objective: f64,
    /// Certified lower bound on the optimal objective (0 when unavailable).
    pub dual_bound: f64,
    /// Largest relative constraint violation of the returned point.
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub iterations: usize,
    pub wall_time: Duration,
}

impl SolveReport {
    pub(crate) fn infeasible(iterations: usize, wall_time: Duration) -> Self {
        SolveReport {
            status: SolveStatus::Infeasible,
            objective: f64::NAN,
            dual_bound: f64::NAN,
            primal_residual: f64::INFINITY,
            dual_residual: f64::INFINITY,
            iterations,
            wall_time,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

/// Solver accuracy and iteration limits.
///
/// `tol` is the solver accuracy; it is unrelated to the exposure violation
/// probability used by the EMF constraints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    pub tol: f64,
    pub max_iter: usize,
    /// Consecutive diverging iterations before the SDP declares infeasibility.
    pub stall_window: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            tol: 1e-7,
            max_iter: 50_000,
            stall_window: 1_000,
        }
    }
}
