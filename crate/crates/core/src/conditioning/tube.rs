//! Gaussian random walk conditioned to stay inside `(−ε, ε)`.
//!
//! `h_r(x)`, the probability that the walk started at `x` survives `r` more
//! steps, is tabulated on a midpoint grid by iterating the cell-integrated
//! Gaussian kernel. A path is then drawn step by step from the h-transformed
//! kernel `p(x, x') h_r(x') / h_{r+1}(x)` by rejection against `p(x, ·)`.

use rand::Rng;
use rand_distr::StandardNormal;
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::grid::ScalarPath;

const MAX_PROPOSALS: usize = 10_000_000;

fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

#[derive(Debug, Clone)]
pub struct TubeTable {
    eps: f64,
    dt: f64,
    steps: usize,
    delta: f64,
    /// `h[r]` scaled to maximum one.
    h: Vec<Vec<f64>>,
    /// `ln` of the scale removed from `h[r]`.
    log_scale: Vec<f64>,
}

impl TubeTable {
    /// Table for walks of `steps` steps with variance `dt` per step.
    pub fn new(eps: f64, dt: f64, steps: usize, nodes: usize) -> Result<Self> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::invalid("tube half-width must be positive and finite"));
        }
        if nodes < 2 {
            return Err(Error::invalid("tube table needs at least two nodes"));
        }
        let delta = 2.0 * eps / nodes as f64;
        let sigma = dt.sqrt();
        // kernel depends only on the node offset l − i
        let kern: Vec<f64> = (0..2 * nodes - 1)
            .map(|d| {
                let off = (d as f64 - (nodes - 1) as f64) * delta;
                normal_cdf((off + 0.5 * delta) / sigma) - normal_cdf((off - 0.5 * delta) / sigma)
            })
            .collect();
        let mut h = Vec::with_capacity(steps + 1);
        let mut log_scale = Vec::with_capacity(steps + 1);
        h.push(vec![1.0; nodes]);
        log_scale.push(0.0);
        for r in 1..=steps {
            let prev = &h[r - 1];
            let mut next: Vec<f64> = (0..nodes)
                .map(|i| {
                    let row = &kern[nodes - 1 - i..2 * nodes - 1 - i];
                    row.iter().zip(prev).map(|(k, v)| k * v).sum()
                })
                .collect();
            let s = next.iter().fold(0.0f64, |m, v| m.max(*v));
            if s <= 0.0 {
                return Err(Error::invalid("tube survival underflowed"));
            }
            next.iter_mut().for_each(|v| *v /= s);
            h.push(next);
            log_scale.push(log_scale[r - 1] + s.ln());
        }
        Ok(Self {
            eps,
            dt,
            steps,
            delta,
            h,
            log_scale,
        })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Scaled `h_r(x)`, linear between nodes and flat beyond the outer ones.
    fn scaled(&self, r: usize, x: f64) -> f64 {
        if x.abs() >= self.eps {
            return 0.0;
        }
        let h = &self.h[r];
        let u = (x + self.eps) / self.delta - 0.5;
        if u <= 0.0 {
            return h[0];
        }
        let last = h.len() - 1;
        if u >= last as f64 {
            return h[last];
        }
        let i = u.floor() as usize;
        let f = u - i as f64;
        h[i] * (1.0 - f) + h[i + 1] * f
    }

    /// `ln P(walk from 0 stays inside for all steps)`.
    pub fn log_survival(&self) -> f64 {
        self.log_scale[self.steps] + self.scaled(self.steps, 0.0).ln()
    }

    /// One conditioned walk of `steps` steps started at 0.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<ScalarPath> {
        let sigma = self.dt.sqrt();
        let mut values = Vec::with_capacity(self.steps + 1);
        let mut x = 0.0;
        values.push(x);
        for j in 1..=self.steps {
            let r = self.steps - j;
            let mut tries = 0;
            x = loop {
                tries += 1;
                if tries > MAX_PROPOSALS {
                    return Err(Error::invalid("tube sampler failed to make progress"));
                }
                let z: f64 = rng.sample(StandardNormal);
                let cand = x + sigma * z;
                if cand.abs() >= self.eps {
                    continue;
                }
                if rng.random::<f64>() < self.scaled(r, cand) {
                    break cand;
                }
            };
            values.push(x);
        }
        Ok(ScalarPath::new(self.dt, values))
    }
}
