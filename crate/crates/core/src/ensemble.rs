//! Sample-parallel ensembles with per-sample random streams.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{simulate_driving_with, solve_flow, DrivingPaths, FlowPath};
use crate::grid::GridSpec;
use crate::rng::{stream, Purpose};
use crate::space::{MassPartition, StepVector};

/// Initial configuration of a flow run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub partition: MassPartition,
    pub g: StepVector,
    pub grid: GridSpec,
}

impl Scenario {
    pub fn new(partition: MassPartition, g: StepVector, grid: GridSpec) -> Result<Self> {
        g.conforms(&partition)?;
        if !g.is_non_decreasing() {
            return Err(Error::invalid("initial values must be non-decreasing"));
        }
        Ok(Self { partition, g, grid })
    }

    pub fn n(&self) -> usize {
        self.partition.len()
    }

    /// Same scenario on a grid with the same step and a different horizon.
    pub fn with_horizon(&self, horizon: f64) -> Result<Self> {
        let steps = (horizon / self.grid.dt()).round() as usize;
        Ok(Self {
            grid: GridSpec::from_steps(self.grid.dt(), steps)?,
            ..self.clone()
        })
    }

    /// Driving paths and flow of sample `index` from stream `(seed, purpose, index)`.
    pub fn sample(&self, seed: u64, purpose: Purpose, index: u64) -> (DrivingPaths, FlowPath) {
        let mut rng = stream(seed, purpose, index);
        let x = simulate_driving_with(&self.g, &self.partition, self.grid, &mut rng)
            .expect("scenario validated at construction");
        let y = solve_flow(&self.g, &x).expect("driving starts at g");
        (x, y)
    }
}

/// Identifies an ensemble for reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleDescriptor {
    pub label: String,
    pub seed: u64,
    pub n_samples: usize,
}

/// `f(0), …, f(count − 1)` evaluated in parallel, returned in index order.
pub fn par_samples<T: Send>(count: usize, f: impl Fn(u64) -> T + Sync + Send) -> Vec<T> {
    (0..count as u64).into_par_iter().map(f).collect()
}

/// First `target` indices (in index order) whose sample passes `accept`,
/// examining at most `max_draws` indices in parallel batches. Returns the
/// accepted values and the number of indices needed; the batch size only
/// affects speed, never the result.
pub fn first_accepted<T: Send>(
    target: usize,
    max_draws: usize,
    batch: usize,
    f: impl Fn(u64) -> Option<T> + Sync + Send,
) -> (Vec<(u64, T)>, usize) {
    let mut accepted = Vec::with_capacity(target);
    let mut next = 0usize;
    let batch = batch.max(1);
    while accepted.len() < target && next < max_draws {
        let end = (next + batch).min(max_draws);
        let results: Vec<Option<T>> = (next as u64..end as u64).into_par_iter().map(&f).collect();
        for (i, r) in results.into_iter().enumerate() {
            if let Some(v) = r {
                if accepted.len() < target {
                    accepted.push(((next + i) as u64, v));
                }
            }
        }
        next = end;
    }
    let used = if accepted.len() == target && target > 0 {
        accepted.last().unwrap().0 as usize + 1
    } else {
        next
    };
    (accepted, used)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_accepted_ignores_batch_size() {
        let f = |i: u64| (i % 3 == 1).then_some(i * 10);
        let (a, used_a) = first_accepted(5, 1000, 2, f);
        let (b, used_b) = first_accepted(5, 1000, 64, f);
        assert_eq!(a, b);
        assert_eq!(used_a, 14);
        assert_eq!(used_b, 14);
        let (c, used_c) = first_accepted(5, 7, 4, f);
        assert_eq!(c.len(), 2);
        assert_eq!(used_c, 7);
    }
}
