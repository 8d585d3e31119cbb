//! Numerical tolerances shared by the library and its checks.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Algebraic identities that hold in exact arithmetic (orthonormality,
    /// projection identities, mass sums).
    pub algebraic: f64,
    /// Identities accumulated over a whole path (flow integral equation,
    /// mass-mean conservation, τ-sum identity).
    pub accumulated: f64,
    /// Remainder round trips.
    pub round_trip: f64,
    /// Equality threshold used by the coalescing-set membership check.
    pub coalex: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            algebraic: 1e-12,
            accumulated: 1e-10,
            round_trip: 1e-9,
            coalex: 1e-9,
        }
    }
}

impl Tolerances {
    /// Tolerance for `ξ_k(0) ≈ 0` on a genuine (flow, driving) pair. The merge
    /// time is snapped to the grid, so the driving path has overshot by a
    /// Brownian step when the merge is detected.
    pub fn grid_defect(dt: f64, n: usize) -> f64 {
        5.0 * dt.max(dt.sqrt() * n as f64)
    }
}
