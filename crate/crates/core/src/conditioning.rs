//! Conditioning the driving Wiener path on the coalescing set.
//!
//! Two mechanisms approximate the conditional law of the driving path given
//! that its remainder vanishes: shrinking balls around zero remainder
//! ([`epsilon_conditioned_ensemble`]) and Ornstein-Uhlenbeck remainders with
//! ever stronger mean reversion ([`psi_direction_ensemble`]). The Brownian
//! bridge example ([`bridge_demo`]) is the one-dimensional prototype.

pub mod tube;

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::basis::{adapted_basis, haar_vector};
use crate::ensemble::{first_accepted, par_samples, EnsembleDescriptor, Scenario};
use crate::error::{Error, Result};
use crate::flow::{solve_flow, DrivingPaths, FlowPath};
use crate::grid::{GridSpec, ScalarPath};
use crate::remainder::{rebuild_wiener, remainder_map, RemainderPath};
use crate::rng::{stream, Purpose};
use crate::space::{inner_raw, MassPartition, StepVector};

use tube::TubeTable;

/// `E[ξ(t)²]` for the OU process `dξ = −αξ dt + dβ`, `ξ(0) = 0`.
pub fn ou_variance(alpha: f64, t: f64) -> f64 {
    if alpha == 0.0 {
        t
    } else {
        -(-2.0 * alpha * t).exp_m1() / (2.0 * alpha)
    }
}

/// OU path with drift switched off after `cutoff`, from stream `(seed, Ornstein, 0)`.
pub fn ou_path(alpha: f64, cutoff: f64, grid: GridSpec, seed: u64) -> Result<ScalarPath> {
    ou_path_with(alpha, cutoff, grid.dt(), grid.len(), &mut stream(seed, Purpose::Ornstein, 0))
}

/// OU path of `len` grid points sampled with the exact transition on steps
/// ending at or before `cutoff` and Brownian steps afterwards.
pub fn ou_path_with<R: Rng + ?Sized>(
    alpha: f64,
    cutoff: f64,
    dt: f64,
    len: usize,
    rng: &mut R,
) -> Result<ScalarPath> {
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(Error::invalid(format!("OU rate must be finite and non-negative, got {alpha}")));
    }
    let decay = (-alpha * dt).exp();
    let sd_ou = if alpha == 0.0 { dt.sqrt() } else { ou_variance(alpha, dt).sqrt() };
    let sd_bm = dt.sqrt();
    let mut values = Vec::with_capacity(len);
    let mut v = 0.0;
    values.push(v);
    for i in 1..len {
        let z: f64 = rng.sample(StandardNormal);
        if (i as f64) * dt <= cutoff + 1e-9 * dt {
            v = v * decay + sd_ou * z;
        } else {
            v += sd_bm * z;
        }
        values.push(v);
    }
    Ok(ScalarPath::new(dt, values))
}

/// Mean-reversion rates `α_j` (component `j = 1, 2, …`) active on `[0, cutoff]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionSchedule {
    pub alphas: Vec<f64>,
    pub cutoff: f64,
}

impl DirectionSchedule {
    pub fn new(alphas: Vec<f64>, cutoff: f64) -> Result<Self> {
        if alphas.iter().any(|a| !(*a >= 0.0) || !a.is_finite()) {
            return Err(Error::invalid("schedule rates must be finite and non-negative"));
        }
        if !(cutoff >= 0.0) {
            return Err(Error::invalid("schedule cutoff must be non-negative"));
        }
        Ok(Self { alphas, cutoff })
    }

    pub fn components(&self) -> usize {
        self.alphas.len()
    }

    /// `α_j`, one-based.
    pub fn alpha(&self, j: usize) -> f64 {
        self.alphas[j - 1]
    }

    pub fn sum_squares(&self) -> f64 {
        self.alphas.iter().map(|a| a * a).sum()
    }
}

/// `α_j^n = n / 2^{j−1}` with cutoff `n`.
pub fn default_schedule(n_components: usize, n: usize) -> Result<DirectionSchedule> {
    if n == 0 {
        return Err(Error::invalid("ladder index must be at least 1"));
    }
    let alphas = (0..n_components).map(|j| n as f64 / 2f64.powi(j as i32)).collect();
    DirectionSchedule::new(alphas, n as f64)
}

/// All rates zero: the directions are plain Brownian motions.
pub fn zero_schedule(n_components: usize, cutoff: f64) -> DirectionSchedule {
    DirectionSchedule {
        alphas: vec![0.0; n_components],
        cutoff,
    }
}

/// Each rate strictly increases along the ladder, as does the cutoff.
pub fn ladder_is_increasing(ladder: &[DirectionSchedule]) -> bool {
    ladder.windows(2).all(|w| {
        w[0].components() == w[1].components()
            && w[0].cutoff < w[1].cutoff
            && w[0].alphas.iter().zip(&w[1].alphas).all(|(a, b)| a < b)
    })
}

/// Fixed orthonormal basis `h_1, …, h_{n−1}` of the mean-zero step vectors:
/// `h_j` separates block `n − j` from the blocks before it.
pub fn sequential_haar_basis(p: &MassPartition) -> Vec<StepVector> {
    let n = p.len();
    (1..n).map(|j| haar_vector(p, 0..n - j, n - j..n - j + 1)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionConfig {
    pub schedule: DirectionSchedule,
    pub n_samples: usize,
    pub seed: u64,
    /// `(j, t)` pairs at which `R_j(t) = ⟨w_t − y_t, h_j⟩_m` is recorded.
    pub r_probes: Vec<(usize, f64)>,
    /// Times at which `w` and `y` are recorded per block.
    pub probe_times: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionSample {
    pub r: Vec<f64>,
    /// `w` per probe time and block, probe-major.
    pub w: Vec<f64>,
    pub y: Vec<f64>,
    /// `max_k sup_s |z_k(s)|`.
    pub d: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionEnsemble {
    pub descriptor: EnsembleDescriptor,
    pub schedule: DirectionSchedule,
    pub r_probes: Vec<(usize, f64)>,
    pub probe_times: Vec<f64>,
    pub n: usize,
    pub samples: Vec<DirectionSample>,
}

impl DirectionEnsemble {
    pub fn r_squared(&self, probe: usize) -> Vec<f64> {
        self.samples.iter().map(|s| s.r[probe].powi(2)).collect()
    }

    pub fn w_marginal(&self, probe: usize, block: usize) -> Vec<f64> {
        self.samples.iter().map(|s| s.w[probe * self.n + block]).collect()
    }

    pub fn y_marginal(&self, probe: usize, block: usize) -> Vec<f64> {
        self.samples.iter().map(|s| s.y[probe * self.n + block]).collect()
    }

    pub fn d_values(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.d).collect()
    }
}

fn probe_indices(grid: &GridSpec, times: &[f64]) -> Result<Vec<usize>> {
    times.iter().map(|&t| grid.nearest_index(t)).collect()
}

fn record_blocks(paths: &DrivingPaths, idx: &[usize]) -> Vec<f64> {
    idx.iter().flat_map(|&i| paths.at(i).iter().copied()).collect()
}

/// `(Y, Ψ(Y, ξⁿ))` with OU directions: the remainder along `e_k` is
/// `z_k = Σ_l (e_k, h_l)_m ξ_l` for independent OU paths `ξ_l` indexed by the
/// fixed basis `h_l` of [`sequential_haar_basis`].
pub fn psi_direction_ensemble(sc: &Scenario, cfg: &DirectionConfig) -> Result<DirectionEnsemble> {
    let n = sc.n();
    if cfg.schedule.components() + 1 < n {
        return Err(Error::invalid(format!(
            "schedule has {} components, scenario needs {}",
            cfg.schedule.components(),
            n - 1
        )));
    }
    let grid = sc.grid;
    let h = sequential_haar_basis(&sc.partition);
    let m = sc.partition.masses().to_vec();
    for &(j, _) in &cfg.r_probes {
        if j == 0 || j >= n {
            return Err(Error::invalid(format!("direction probe j = {j} outside 1..{n}")));
        }
    }
    let r_idx: Vec<(usize, usize)> = cfg
        .r_probes
        .iter()
        .map(|&(j, t)| grid.nearest_index(t).map(|i| (j, i)))
        .collect::<Result<_>>()?;
    let p_idx = probe_indices(&grid, &cfg.probe_times)?;

    let samples = par_samples(cfg.n_samples, |i| {
        let (_, y) = sc.sample(cfg.seed, Purpose::Driving, i);
        let mut rng = stream(cfg.seed, Purpose::Ornstein, i);
        let xi: Vec<ScalarPath> = (1..n)
            .map(|l| {
                ou_path_with(cfg.schedule.alpha(l), cfg.schedule.cutoff, grid.dt(), grid.len(), &mut rng)
                    .expect("schedule validated")
            })
            .collect();
        let basis = adapted_basis(&y);
        let z = RemainderPath::for_flow(&y, |k, len| {
            let e = &basis.get(k).unwrap().vector.0;
            let c: Vec<f64> = h.iter().map(|hl| inner_raw(e, &hl.0, &m)).collect();
            let values = (0..len)
                .map(|s| c.iter().zip(&xi).map(|(ck, x)| ck * x.values[s]).sum())
                .collect();
            ScalarPath::new(grid.dt(), values)
        })
        .expect("lengths agree");
        let w = rebuild_wiener(&y, &z).expect("aligned remainder");
        let r = r_idx
            .iter()
            .map(|&(j, ti)| {
                let diff: Vec<f64> = w.at(ti).iter().zip(y.expanded(ti).values()).map(|(a, b)| a - b).collect();
                inner_raw(&diff, &h[j - 1].0, &m)
            })
            .collect();
        let ys = y.to_driving_shape();
        DirectionSample {
            r,
            w: record_blocks(&w, &p_idx),
            y: record_blocks(&ys, &p_idx),
            d: z.sup_norm(),
        }
    });
    Ok(DirectionEnsemble {
        descriptor: EnsembleDescriptor {
            label: "directions".into(),
            seed: cfg.seed,
            n_samples: cfg.n_samples,
        },
        schedule: cfg.schedule.clone(),
        r_probes: cfg.r_probes.clone(),
        probe_times: cfg.probe_times.clone(),
        n,
        samples,
    })
}

/// How accepted samples of the ε-conditioned ensemble are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampler {
    /// Draw driving paths and keep those inside the ball.
    Rejection,
    /// Draw driving paths, keep those meeting the deadline, then redraw the
    /// windowed remainder increments from the tube-conditioned walk.
    TubeConditioned,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditioningConfig {
    pub eps: f64,
    pub coal_deadline: f64,
    /// Length `L` of the remainder window on the shifted clock.
    pub window: f64,
    pub n_target: usize,
    pub max_draws: usize,
    pub probe_times: Vec<f64>,
    pub seed: u64,
    pub sampler: Sampler,
    pub tube_nodes: usize,
    pub batch: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionedSample {
    pub index: u64,
    pub taus: Vec<f64>,
    pub rho: f64,
    pub w: Vec<f64>,
    pub y: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionedEnsemble {
    pub descriptor: EnsembleDescriptor,
    pub sampler: Option<Sampler>,
    pub probe_times: Vec<f64>,
    pub n: usize,
    pub samples: Vec<ConditionedSample>,
    pub draws_examined: usize,
    /// Fraction of examined draws accepted by the sampler's first stage.
    pub first_stage_rate: f64,
    /// Probability of the conditioning event implied by this run.
    pub acceptance_rate: f64,
    pub log_acceptance: f64,
    pub partial: bool,
    pub tube_log_survival: Option<f64>,
    /// Tube-conditioned samples whose rebuilt path failed the literal test.
    pub sanity_mismatches: usize,
}

impl ConditionedEnsemble {
    pub fn w_marginal(&self, probe: usize, block: usize) -> Vec<f64> {
        self.samples.iter().map(|s| s.w[probe * self.n + block]).collect()
    }

    pub fn y_marginal(&self, probe: usize, block: usize) -> Vec<f64> {
        self.samples.iter().map(|s| s.y[probe * self.n + block]).collect()
    }
}

/// All coalescences happened by `deadline`.
pub fn coalesced_by(y: &FlowPath, deadline: f64) -> bool {
    y.n() == 1 || y.tau(1) <= deadline + 1e-9 * y.grid().dt()
}

/// `max_k sup_{s ∈ [0, L]} |ξ_k(s) − ξ_k(0)|` over the created `e_k`, with
/// `L = window_steps` grid steps (truncated at the horizon).
pub fn proximity(y: &FlowPath, w: &DrivingPaths, window_steps: usize) -> Result<f64> {
    let xi = remainder_map(y, w)?;
    Ok(xi
        .components()
        .map(|c| {
            let x0 = c.path.values[0];
            c.path.values.iter().take(window_steps + 1).fold(0.0f64, |m, v| m.max((v - x0).abs()))
        })
        .fold(0.0, f64::max))
}

fn validate_conditioning(sc: &Scenario, cfg: &ConditioningConfig) -> Result<()> {
    if !(cfg.eps > 0.0) {
        return Err(Error::invalid("eps must be positive"));
    }
    if !(cfg.coal_deadline > 0.0 && cfg.coal_deadline <= sc.grid.horizon() + 1e-12) {
        return Err(Error::invalid("coal_deadline must lie in (0, T]"));
    }
    if !(cfg.window > 0.0) {
        return Err(Error::invalid("remainder window must be positive"));
    }
    if cfg.n_target == 0 {
        return Err(Error::invalid("n_target must be positive"));
    }
    if cfg.probe_times.iter().any(|t| !(*t >= 0.0 && *t <= sc.grid.horizon() + 1e-12)) {
        return Err(Error::invalid("probe times must lie in [0, T]"));
    }
    Ok(())
}

/// Driving path of sample `index` conditioned on a remainder ball of radius
/// `eps` and on all coalescences by `coal_deadline`. The driving path lives on
/// `[0, max(T, deadline + L)]` so every window is observed in full.
pub fn epsilon_conditioned_ensemble(sc: &Scenario, cfg: &ConditioningConfig) -> Result<ConditionedEnsemble> {
    validate_conditioning(sc, cfg)?;
    let n = sc.n();
    let dt = sc.grid.dt();
    let horizon = sc.grid.horizon().max(cfg.coal_deadline + cfg.window);
    let ext = sc.with_horizon(horizon)?;
    let window_steps = (cfg.window / dt).round() as usize;
    let p_idx = probe_indices(&ext.grid, &cfg.probe_times)?;
    let table = match (cfg.sampler, cfg.eps.is_finite()) {
        (Sampler::TubeConditioned, true) => {
            Some(Arc::new(TubeTable::new(cfg.eps, dt, window_steps, cfg.tube_nodes)?))
        }
        _ => None,
    };
    let draw = |i: u64| -> Option<(ConditionedSample, bool)> {
        let (x, y) = ext.sample(cfg.seed, Purpose::Driving, i);
        if !coalesced_by(&y, cfg.coal_deadline) {
            return None;
        }
        match cfg.sampler {
            Sampler::Rejection => {
                let rho = proximity(&y, &x, window_steps).expect("consistent pair");
                (rho < cfg.eps).then(|| (make_sample(i, &y, &x, rho, &p_idx), true))
            }
            Sampler::TubeConditioned => {
                let Some(table) = &table else {
                    let rho = proximity(&y, &x, window_steps).expect("consistent pair");
                    return Some((make_sample(i, &y, &x, rho, &p_idx), true));
                };
                let mut rng = stream(cfg.seed, Purpose::Tube, i);
                let xi = remainder_map(&y, &x).expect("consistent pair");
                let z = RemainderPath::for_flow(&y, |k, len| {
                    let old = &xi.get(k).unwrap().path.values;
                    let tube = table.sample(&mut rng).expect("tube sampler");
                    let top = window_steps.min(len - 1);
                    let values = (0..len)
                        .map(|s| {
                            if s <= top {
                                old[0] + tube.values[s]
                            } else {
                                old[0] + tube.values[top] + (old[s] - old[top])
                            }
                        })
                        .collect();
                    ScalarPath::new(dt, values)
                })
                .expect("lengths agree");
                let w = rebuild_wiener(&y, &z).expect("aligned remainder");
                let consistent = match solve_flow(&ext.g, &w) {
                    Ok(y2) => {
                        y2.events().len() == y.events().len()
                            && y2
                                .to_driving_shape()
                                .values()
                                .iter()
                                .zip(y.to_driving_shape().values())
                                .all(|(a, b)| (a - b).abs() < 1e-9)
                            && coalesced_by(&y2, cfg.coal_deadline)
                            && proximity(&y2, &w, window_steps).is_ok_and(|r| r < cfg.eps)
                    }
                    Err(_) => false,
                };
                let rho = proximity(&y, &w, window_steps).expect("consistent pair");
                Some((make_sample(i, &y, &w, rho, &p_idx), consistent))
            }
        }
    };
    let (accepted, used) = first_accepted(cfg.n_target, cfg.max_draws, cfg.batch, draw);
    let partial = accepted.len() < cfg.n_target;
    let first_stage_rate = if used == 0 { 0.0 } else { accepted.len() as f64 / used as f64 };
    let tube_log_survival = table.as_ref().map(|t| t.log_survival());
    let log_acceptance = first_stage_rate.ln() + tube_log_survival.unwrap_or(0.0) * (n - 1) as f64;
    let sanity_mismatches = accepted.iter().filter(|(_, (_, ok))| !ok).count();
    Ok(ConditionedEnsemble {
        descriptor: EnsembleDescriptor {
            label: "epsilon-conditioned".into(),
            seed: cfg.seed,
            n_samples: accepted.len(),
        },
        sampler: Some(cfg.sampler),
        probe_times: cfg.probe_times.clone(),
        n,
        samples: accepted.into_iter().map(|(_, (s, _))| s).collect(),
        draws_examined: used,
        first_stage_rate,
        acceptance_rate: log_acceptance.exp(),
        log_acceptance,
        partial,
        tube_log_survival,
        sanity_mismatches,
    })
}

fn make_sample(index: u64, y: &FlowPath, w: &DrivingPaths, rho: f64, p_idx: &[usize]) -> ConditionedSample {
    ConditionedSample {
        index,
        taus: y.coalescence_times(),
        rho,
        w: record_blocks(w, p_idx),
        y: record_blocks(&y.to_driving_shape(), p_idx),
    }
}

/// Flows simulated directly from independent driving paths, optionally
/// restricted to those fully coalesced by `deadline`; `w` records `y`.
pub fn direct_mmaf_ensemble(
    sc: &Scenario,
    deadline: Option<f64>,
    n_target: usize,
    max_draws: usize,
    probe_times: &[f64],
    seed: u64,
) -> Result<ConditionedEnsemble> {
    let n = sc.n();
    let p_idx = probe_indices(&sc.grid, probe_times)?;
    let (accepted, used) = first_accepted(n_target, max_draws, 1024, |i| {
        let (_, y) = sc.sample(seed, Purpose::Reference, i);
        if deadline.is_some_and(|d| !coalesced_by(&y, d)) {
            return None;
        }
        let ys = y.to_driving_shape();
        Some(make_sample(i, &y, &ys, 0.0, &p_idx))
    });
    let rate = if used == 0 { 0.0 } else { accepted.len() as f64 / used as f64 };
    Ok(ConditionedEnsemble {
        descriptor: EnsembleDescriptor {
            label: "direct-mmaf".into(),
            seed,
            n_samples: accepted.len(),
        },
        sampler: None,
        probe_times: probe_times.to_vec(),
        n,
        partial: accepted.len() < n_target,
        samples: accepted.into_iter().map(|(_, s)| s).collect(),
        draws_examined: used,
        first_stage_rate: rate,
        acceptance_rate: rate,
        log_acceptance: rate.ln(),
        tube_log_survival: None,
        sanity_mismatches: 0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BridgeCovariance {
    pub s: f64,
    pub t: f64,
    pub empirical: f64,
    pub expected: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BridgeReport {
    pub z0: f64,
    pub n_samples: usize,
    pub times: Vec<f64>,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub expected_mean: Vec<f64>,
    pub expected_variance: Vec<f64>,
    pub covariances: Vec<BridgeCovariance>,
    /// `max |Ψ(1) − z0|` over samples.
    pub endpoint_max_error: f64,
    /// Samples of `Ψ` per probe time.
    #[serde(skip)]
    pub samples: Vec<Vec<f64>>,
}

/// `Ψ(Y, z0)(t) = (W_t − t W_1) + t z0` on a grid over `[0, 1]`.
pub fn bridge_demo(z0: f64, grid: GridSpec, n: usize, seed: u64, probe_times: &[f64]) -> Result<BridgeReport> {
    if (grid.horizon() - 1.0).abs() > 1e-12 {
        return Err(Error::invalid("bridge grid must cover [0, 1]"));
    }
    if n < 2 {
        return Err(Error::invalid("bridge needs at least two samples"));
    }
    let idx = probe_indices(&grid, probe_times)?;
    let last = grid.steps();
    let rows = par_samples(n, |i| {
        let w = ScalarPath::brownian(grid.dt(), grid.len(), &mut stream(seed, Purpose::Bridge, i));
        let w1 = w.values[last];
        let psi = |j: usize| {
            let t = grid.time(j);
            (w.values[j] - t * w1) + t * z0
        };
        let probes: Vec<f64> = idx.iter().map(|&j| psi(j)).collect();
        (probes, (psi(last) - z0).abs())
    });
    let endpoint_max_error = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    let samples: Vec<Vec<f64>> = (0..idx.len()).map(|p| rows.iter().map(|r| r.0[p]).collect()).collect();
    let times: Vec<f64> = idx.iter().map(|&j| grid.time(j)).collect();
    let nf = n as f64;
    let mean: Vec<f64> = samples.iter().map(|s| s.iter().sum::<f64>() / nf).collect();
    let variance = samples
        .iter()
        .zip(&mean)
        .map(|(s, m)| s.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (nf - 1.0))
        .collect();
    let mut covariances = Vec::new();
    for a in 0..times.len() {
        for b in a + 1..times.len() {
            let (s, t) = (times[a].min(times[b]), times[a].max(times[b]));
            let c = samples[a]
                .iter()
                .zip(&samples[b])
                .map(|(x, y)| (x - mean[a]) * (y - mean[b]))
                .sum::<f64>()
                / (nf - 1.0);
            covariances.push(BridgeCovariance {
                s,
                t,
                empirical: c,
                expected: s * (1.0 - t),
            });
        }
    }
    Ok(BridgeReport {
        z0,
        n_samples: n,
        expected_mean: times.iter().map(|t| t * z0).collect(),
        expected_variance: times.iter().map(|t| t * (1.0 - t)).collect(),
        times,
        mean,
        variance,
        covariances,
        endpoint_max_error,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::ks_two_sample;

    #[test]
    fn schedule_formula() {
        assert_eq!(default_schedule(1, 1).unwrap().alpha(1), 1.0);
        assert_eq!(default_schedule(3, 4).unwrap().alpha(3), 1.0);
        let s = default_schedule(40, 3).unwrap();
        assert!(s.sum_squares() <= 9.0 * 4.0 / 3.0);
        assert!((s.sum_squares() - 12.0).abs() < 1e-9);
        let ladder: Vec<_> = [1, 2, 4, 8, 16].iter().map(|&n| default_schedule(3, n).unwrap()).collect();
        assert!(ladder_is_increasing(&ladder));
        assert!(default_schedule(3, 0).is_err());
        assert!(DirectionSchedule::new(vec![-1.0], 1.0).is_err());
    }

    #[test]
    fn zero_rate_ou_is_brownian_bit_for_bit() {
        let grid = GridSpec::new(1e-3, 1.0).unwrap();
        let ou = ou_path(0.0, 1.0, grid, 12).unwrap();
        let bm = ScalarPath::brownian(grid.dt(), grid.len(), &mut stream(12, Purpose::Ornstein, 0));
        assert_eq!(ou, bm);
        assert!(ou_path(-0.5, 1.0, grid, 1).is_err());
    }

    #[test]
    fn ou_drift_stops_at_cutoff() {
        // with a huge rate the path is pinned near 0 until the cutoff
        let grid = GridSpec::new(1e-2, 2.0).unwrap();
        let p = ou_path(1e6, 1.0, grid, 4).unwrap();
        assert!(p.values[..=100].iter().all(|v| v.abs() < 0.01));
        let bm_part = ScalarPath::new(grid.dt(), p.values[100..].to_vec());
        assert!(bm_part.sup_abs() > 0.05);
    }

    #[test]
    fn sequential_basis_is_orthonormal() {
        let p = MassPartition::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let h = sequential_haar_basis(&p);
        for (i, a) in h.iter().enumerate() {
            assert!(inner_raw(&a.0, &[1.0; 4], p.masses()).abs() < 1e-12);
            for (j, b) in h.iter().enumerate() {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((inner_raw(&a.0, &b.0, p.masses()) - want).abs() < 1e-12);
            }
        }
        assert_eq!(h[0].0[0], h[0].0[2]);
        assert!(h[0].0[3] < 0.0);
    }

    fn small_scenario() -> Scenario {
        let p = MassPartition::new(vec![0.5, 0.5]).unwrap();
        Scenario::new(p, StepVector(vec![0.0, 0.3]), GridSpec::new(1e-2, 1.0).unwrap()).unwrap()
    }

    #[test]
    fn zero_schedule_reproduces_driving_law() {
        let sc = small_scenario();
        let cfg = DirectionConfig {
            schedule: zero_schedule(1, 1.0),
            n_samples: 1500,
            seed: 3,
            r_probes: vec![(1, 1.0)],
            probe_times: vec![1.0],
        };
        let ens = psi_direction_ensemble(&sc, &cfg).unwrap();
        // rebuilt paths are Brownian with variance rate 1/m = 2
        let w0 = ens.w_marginal(0, 0);
        let var = w0.iter().map(|x| x * x).sum::<f64>() / w0.len() as f64;
        assert!((var - 2.0).abs() < 0.25, "{var}");
        let bm: Vec<f64> = par_samples(1500, |i| {
            let x = crate::flow::simulate_driving_with(&sc.g, &sc.partition, sc.grid, &mut stream(99, Purpose::Driving, i)).unwrap();
            x.at(sc.grid.steps())[0]
        });
        assert!(ks_two_sample(&w0, &bm).unwrap().p_value > 1e-3);
    }

    #[test]
    fn rejection_with_vacuous_ball_counts_deadline_hits() {
        let sc = small_scenario();
        let cfg = ConditioningConfig {
            eps: f64::INFINITY,
            coal_deadline: 1.0,
            window: 0.1,
            n_target: 50,
            max_draws: 100_000,
            probe_times: vec![0.5],
            seed: 1,
            sampler: Sampler::Rejection,
            tube_nodes: 64,
            batch: 16,
        };
        let a = epsilon_conditioned_ensemble(&sc, &cfg).unwrap();
        let b = epsilon_conditioned_ensemble(&sc, &ConditioningConfig { batch: 7, ..cfg.clone() }).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.samples.len(), 50);
        assert!(a.acceptance_rate > 0.5 && a.acceptance_rate <= 1.0);
        assert!(a.samples.iter().all(|s| s.taus[0] <= 1.0));
        let small = epsilon_conditioned_ensemble(&sc, &ConditioningConfig { eps: 0.5, max_draws: 3000, ..cfg }).unwrap();
        assert!(small.acceptance_rate < a.acceptance_rate);
    }

    #[test]
    fn tube_samples_pass_the_literal_test() {
        let sc = small_scenario();
        let cfg = ConditioningConfig {
            eps: 0.05,
            coal_deadline: 0.8,
            window: 0.5,
            n_target: 40,
            max_draws: 10_000,
            probe_times: vec![0.9],
            seed: 2,
            sampler: Sampler::TubeConditioned,
            tube_nodes: 128,
            batch: 16,
        };
        let e = epsilon_conditioned_ensemble(&sc, &cfg).unwrap();
        assert_eq!(e.samples.len(), 40);
        assert_eq!(e.sanity_mismatches, 0);
        assert!(e.samples.iter().all(|s| s.rho < 0.05));
        assert!(e.log_acceptance < e.first_stage_rate.ln());
    }

    #[test]
    fn bridge_endpoint_is_exact() {
        let grid = GridSpec::new(1e-2, 1.0).unwrap();
        let r = bridge_demo(0.7, grid, 200, 5, &[0.5, 1.0]).unwrap();
        assert_eq!(r.endpoint_max_error, 0.0);
        assert!(r.samples[1].iter().all(|v| *v == 0.7));
        assert!(bridge_demo(0.0, GridSpec::new(0.1, 2.0).unwrap(), 10, 1, &[]).is_err());
    }
}
