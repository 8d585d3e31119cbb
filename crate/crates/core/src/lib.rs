//! Finite-dimensional modified massive Arratia flow (MMAF) toolkit.
//!
//! The crate models `n` Brownian particles on a mass partition of `[0, 1)`,
//! solves the coalescing flow equation `y_t = g + ∫ pr_{y_s} dx_s` pathwise on
//! a uniform time grid, builds the orthonormal basis adapted to the
//! coalescence events, and splits a driving Wiener path into its coalescing
//! part and the non-coalescing remainder. On top of that sit two conditioning
//! mechanisms (shrinking remainder balls and Ornstein-Uhlenbeck direction
//! sequences) and the statistics used to check the resulting laws.
//!
//! Module map:
//!
//! * [`space`]: mass partitions, step vectors, clusterings, the weighted inner
//!   product, cluster projections and the gluing map.
//! * [`flow`]: driving-path simulation and the deterministic flow solver.
//! * [`basis`]: the coalescence-adapted orthonormal basis.
//! * [`remainder`]: the remainder map, its inverse and noise extraction.
//! * [`conditioning`]: OU paths, direction schedules, conditioned ensembles
//!   and the Brownian bridge example.
//! * [`stats`]: quadratic variation, Kolmogorov-Smirnov and moment reports.

pub mod basis;
pub mod conditioning;
pub mod ensemble;
pub mod error;
pub mod export;
pub mod flow;
pub mod grid;
pub mod remainder;
pub mod rng;
pub mod space;
pub mod stats;
pub mod tolerance;

pub use basis::{adapted_basis, tau_sum_check, AdaptedBasis, TauSumCheck};
pub use error::{Error, Result};
pub use flow::{
    check_coalex, simulate_driving, solve_flow, CoalescenceEvent, DrivingPaths, FlowPath,
};
pub use grid::{GridSpec, ScalarPath};
pub use remainder::{extract_noise, rebuild_wiener, remainder_map, RemainderPath};
pub use space::{glue, inner_m, project_onto_clusters, Clustering, MassPartition, StepVector};
pub use tolerance::Tolerances;
