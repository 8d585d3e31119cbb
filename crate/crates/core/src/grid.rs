//! Uniform time grids and scalar paths living on them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform grid `0 = t_0 < t_1 < … < t_steps = horizon`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    dt: f64,
    steps: usize,
}

impl GridSpec {
    /// `horizon` must be a positive integer multiple of `dt` (up to rounding).
    pub fn new(dt: f64, horizon: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::invalid(format!("dt must be positive, got {dt}")));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::invalid(format!("horizon must be positive, got {horizon}")));
        }
        let ratio = horizon / dt;
        let steps = ratio.round();
        if steps < 1.0 || (ratio - steps).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::invalid(format!(
                "horizon {horizon} is not an integer multiple of dt {dt}"
            )));
        }
        Ok(Self {
            dt,
            steps: steps as usize,
        })
    }

    pub fn from_steps(dt: f64, steps: usize) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) || steps == 0 {
            return Err(Error::invalid("grid needs dt > 0 and at least one step"));
        }
        Ok(Self { dt, steps })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Number of grid points, `steps + 1`.
    pub fn len(&self) -> usize {
        self.steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn horizon(&self) -> f64 {
        self.steps as f64 * self.dt
    }

    /// Time of grid point `i`. Computed as `i·dt`, so that indices that are
    /// exact binary fractions of the horizon land on exact times.
    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.dt
    }

    /// Grid index of the last grid point `≤ t` (right-continuous lookup).
    pub fn floor_index(&self, t: f64) -> Result<usize> {
        self.check_time(t)?;
        let x = t / self.dt;
        let i = (x + 1e-9 * x.max(1.0)).floor() as usize;
        Ok(i.min(self.steps))
    }

    /// Nearest grid index to `t`.
    pub fn nearest_index(&self, t: f64) -> Result<usize> {
        self.check_time(t)?;
        Ok(((t / self.dt).round() as usize).min(self.steps))
    }

    fn check_time(&self, t: f64) -> Result<()> {
        let slack = 1e-9 * self.horizon();
        if t.is_nan() || t < -slack || t > self.horizon() + slack {
            return Err(Error::invalid(format!(
                "time {t} outside the grid [0, {}]",
                self.horizon()
            )));
        }
        Ok(())
    }

    /// Same step size, horizon extended (or shortened) to `steps` steps.
    pub fn with_steps(&self, steps: usize) -> Self {
        Self { dt: self.dt, steps }
    }
}

/// Real-valued path sampled on a uniform grid starting at time 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarPath {
    pub dt: f64,
    pub values: Vec<f64>,
}

impl ScalarPath {
    pub fn new(dt: f64, values: Vec<f64>) -> Self {
        Self { dt, values }
    }

    pub fn zeros(dt: f64, len: usize) -> Self {
        Self::new(dt, vec![0.0; len])
    }

    /// Brownian motion started at 0 from i.i.d. standard normal draws.
    pub fn brownian<R: rand::Rng + ?Sized>(dt: f64, len: usize, rng: &mut R) -> Self {
        let sd = dt.sqrt();
        let mut values = Vec::with_capacity(len);
        let mut acc = 0.0;
        values.push(acc);
        for _ in 1..len {
            let z: f64 = rng.sample(rand_distr::StandardNormal);
            acc += sd * z;
            values.push(acc);
        }
        Self::new(dt, values)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Value at grid index `i`, held constant past the last point.
    pub fn at(&self, i: usize) -> f64 {
        self.values[i.min(self.values.len() - 1)]
    }

    pub fn sup_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn increments(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.windows(2).map(|w| w[1] - w[0])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_rejects_non_multiple_horizon() {
        assert!(GridSpec::new(0.3, 1.0).is_err());
        assert!(GridSpec::new(-0.1, 1.0).is_err());
        let g = GridSpec::new(1e-3, 1.0).unwrap();
        assert_eq!(g.steps(), 1000);
        assert_eq!(g.len(), 1001);
        assert_eq!(g.time(500), 0.5);
        assert_eq!(g.time(1000), 1.0);
    }

    #[test]
    fn floor_index_is_right_continuous() {
        let g = GridSpec::new(0.125, 1.0).unwrap();
        assert_eq!(g.floor_index(0.5).unwrap(), 4);
        assert_eq!(g.floor_index(0.6).unwrap(), 4);
        assert_eq!(g.floor_index(1.0).unwrap(), 8);
        assert!(g.floor_index(1.5).is_err());
        assert!(g.floor_index(-0.1).is_err());
    }
}
