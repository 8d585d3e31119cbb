//! Driving Wiener paths and the coalescing flow they generate.
//!
//! [`solve_flow`] realises the step-by-step construction of the unique
//! coalescing solution of `y_t = g + ∫_0^t pr_{y_s} dx_s` on a uniform grid.
//! Between coalescences every cluster level moves by the mass-weighted
//! average of its members' driving increments. When two adjacent levels
//! touch or cross at a grid point they merge there, at the mass-weighted
//! average of their levels. Telescoping the recursion gives the closed form
//! `y_t = pr_{c(t)} x_t`, where `c(t)` is the clustering in force at `t`
//! (`pr` of a coarser clustering absorbs the finer one), which is what the
//! solver evaluates at each grid point.

use std::ops::Range;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::grid::{GridSpec, ScalarPath};
use crate::rng::{stream, Purpose};
use crate::space::{Clustering, MassPartition, StepVector};

/// `n` driving paths on a grid, stored time-major (`values[i * n + k]`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrivingPaths {
    partition: MassPartition,
    grid: GridSpec,
    values: Vec<f64>,
}

impl DrivingPaths {
    pub fn new(partition: MassPartition, grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        check_len(partition.len() * grid.len(), values.len())?;
        Ok(Self {
            partition,
            grid,
            values,
        })
    }

    /// Build from one closure `f(k, t)` per component.
    pub fn from_fn(
        partition: MassPartition,
        grid: GridSpec,
        f: impl Fn(usize, f64) -> f64,
    ) -> Self {
        let n = partition.len();
        let mut values = Vec::with_capacity(n * grid.len());
        for i in 0..grid.len() {
            let t = grid.time(i);
            values.extend((0..n).map(|k| f(k, t)));
        }
        Self {
            partition,
            grid,
            values,
        }
    }

    pub fn partition(&self) -> &MassPartition {
        &self.partition
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn n(&self) -> usize {
        self.partition.len()
    }

    /// Block values at grid index `i`.
    pub fn at(&self, i: usize) -> &[f64] {
        let n = self.n();
        &self.values[i * n..(i + 1) * n]
    }

    pub fn step_vector(&self, i: usize) -> StepVector {
        StepVector(self.at(i).to_vec())
    }

    pub fn start(&self) -> StepVector {
        self.step_vector(0)
    }

    pub fn component(&self, k: usize) -> ScalarPath {
        let n = self.n();
        ScalarPath::new(
            self.grid.dt(),
            self.values.iter().skip(k).step_by(n).copied().collect(),
        )
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// Independent Brownian motions started at `g`, component `k` with variance
/// rate `1/m_k`, from the stream `(seed, Driving, 0)`.
pub fn simulate_driving(
    g: &StepVector,
    p: &MassPartition,
    grid: GridSpec,
    seed: u64,
) -> Result<DrivingPaths> {
    simulate_driving_with(g, p, grid, &mut stream(seed, Purpose::Driving, 0))
}

pub fn simulate_driving_with<R: Rng + ?Sized>(
    g: &StepVector,
    p: &MassPartition,
    grid: GridSpec,
    rng: &mut R,
) -> Result<DrivingPaths> {
    g.conforms(p)?;
    if !g.is_non_decreasing() {
        return Err(Error::invalid("initial values must be non-decreasing"));
    }
    let n = p.len();
    let sd: Vec<f64> = p.masses().iter().map(|m| (grid.dt() / m).sqrt()).collect();
    let mut values = Vec::with_capacity(n * grid.len());
    values.extend_from_slice(g.values());
    for i in 1..grid.len() {
        let base = (i - 1) * n;
        for k in 0..n {
            let z: f64 = rng.sample(StandardNormal);
            let v = values[base + k] + sd[k] * z;
            values.push(v);
        }
    }
    DrivingPaths::new(p.clone(), grid, values)
}

/// Merge of two adjacent clusters `[a, b)` and `[b, c)` at a grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoalescenceEvent {
    pub time_index: usize,
    pub time: f64,
    /// Blocks of the left cluster.
    pub left_group: Range<usize>,
    /// Blocks of the right cluster, starting where `left_group` ends.
    pub right_group: Range<usize>,
    pub merge_value: f64,
    /// Left endpoint `a` of the merged interval.
    pub left_point: f64,
    /// Breakpoint `b` separating the two clusters.
    pub coalescence_point: f64,
    /// Right endpoint `c` of the merged interval.
    pub right_point: f64,
}

impl CoalescenceEvent {
    pub fn left_mass(&self, p: &MassPartition) -> f64 {
        p.range_mass(self.left_group.clone())
    }

    pub fn right_mass(&self, p: &MassPartition) -> f64 {
        p.range_mass(self.right_group.clone())
    }
}

/// Clustering in force from grid index `start` until the next segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: usize,
    pub clustering: Clustering,
}

/// Coalescing solution on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowPath {
    partition: MassPartition,
    grid: GridSpec,
    events: Vec<CoalescenceEvent>,
    segments: Vec<Segment>,
    levels: Vec<f64>,
    offsets: Vec<usize>,
}

impl FlowPath {
    pub fn partition(&self) -> &MassPartition {
        &self.partition
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn n(&self) -> usize {
        self.partition.len()
    }

    pub fn events(&self) -> &[CoalescenceEvent] {
        &self.events
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    fn segment_index(&self, i: usize) -> usize {
        match self.segments.binary_search_by_key(&i, |s| s.start) {
            Ok(j) => j,
            Err(j) => j - 1,
        }
    }

    /// Clustering after all merges at grid index `i`.
    pub fn clustering_at(&self, i: usize) -> &Clustering {
        &self.segments[self.segment_index(i)].clustering
    }

    /// Cluster levels at grid index `i`, one per group of [`Self::clustering_at`].
    pub fn levels_at(&self, i: usize) -> &[f64] {
        &self.levels[self.offsets[i]..self.offsets[i + 1]]
    }

    /// `y_t` as a step vector over the original blocks.
    pub fn expanded(&self, i: usize) -> StepVector {
        self.clustering_at(i).expand(self.levels_at(i))
    }

    /// Whole path expanded to block values, time-major.
    pub fn to_driving_shape(&self) -> DrivingPaths {
        let n = self.n();
        let mut values = Vec::with_capacity(n * self.grid.len());
        for i in 0..self.grid.len() {
            values.extend(self.expanded(i).0);
        }
        DrivingPaths {
            partition: self.partition.clone(),
            grid: self.grid,
            values,
        }
    }

    /// Path of the particle carrying block `u`.
    pub fn block_path(&self, u: usize) -> ScalarPath {
        let values = (0..self.grid.len())
            .map(|i| self.levels_at(i)[self.clustering_at(i).group_of(u)])
            .collect();
        ScalarPath::new(self.grid.dt(), values)
    }

    /// `N(y_t)`, right-continuous in `t`.
    pub fn count_clusters(&self, t: f64) -> Result<usize> {
        Ok(self.clustering_at(self.grid.floor_index(t)?).len())
    }

    /// Grid index of `τ_k = inf{t : N(y_t) ≤ k}`; `None` when it is `+∞`.
    /// Defined for `k ≥ 1`; `τ_k = 0` whenever `k ≥ n`.
    pub fn tau_index(&self, k: usize) -> Option<usize> {
        let n = self.n();
        if k == 0 {
            return None;
        }
        if k >= n {
            return Some(0);
        }
        self.events.get(n - 1 - k).map(|e| e.time_index)
    }

    /// `τ_k`, with `f64::INFINITY` as the "never" sentinel.
    pub fn tau(&self, k: usize) -> f64 {
        self.tau_index(k)
            .map_or(f64::INFINITY, |i| self.grid.time(i))
    }

    /// `τ_{n-1}, τ_{n-2}, …, τ_1` (non-decreasing along the list).
    pub fn coalescence_times(&self) -> Vec<f64> {
        (1..self.n()).rev().map(|k| self.tau(k)).collect()
    }

    /// Mass of the cluster containing block `u` at time `t`.
    pub fn cluster_mass(&self, u: usize, t: f64) -> Result<f64> {
        if u >= self.n() {
            return Err(Error::invalid(format!("block {u} out of range")));
        }
        let c = self.clustering_at(self.grid.floor_index(t)?);
        Ok(self.partition.range_mass(c.group(c.group_of(u))))
    }

    fn mass_at_index(&self, u: usize, i: usize) -> f64 {
        let c = self.clustering_at(i);
        self.partition.range_mass(c.group(c.group_of(u)))
    }

    /// `Σ_i dt / m(u, t_i)` over all steps: the grid version of
    /// `∫_0^T ds / m(u, s)`, the predicted quadratic variation of block `u`.
    pub fn qv_compensator(&self, u: usize) -> f64 {
        self.qv_compensator_until(u, self.grid.steps())
    }

    pub fn qv_compensator_until(&self, u: usize, steps: usize) -> f64 {
        let dt = self.grid.dt();
        (0..steps).map(|i| dt / self.mass_at_index(u, i)).sum()
    }

    /// `Σ_i dt·1{u, v clustered at t_i} / m(u, t_i)`: predicted joint
    /// quadratic variation of blocks `u` and `v`.
    pub fn cross_qv_compensator(&self, u: usize, v: usize) -> f64 {
        let dt = self.grid.dt();
        (0..self.grid.steps())
            .filter(|&i| {
                let c = self.clustering_at(i);
                c.group_of(u) == c.group_of(v)
            })
            .map(|i| dt / self.mass_at_index(u, i))
            .sum()
    }

    /// Cluster levels strictly increasing at every grid point.
    pub fn is_ordered(&self) -> bool {
        (0..self.grid.len()).all(|i| self.levels_at(i).windows(2).all(|w| w[0] < w[1]))
    }

    /// Largest deviation of the mass-weighted mean of `y_t` from that of `x_t`.
    pub fn mass_mean_residual(&self, x: &DrivingPaths) -> f64 {
        let m = self.partition.masses();
        (0..self.grid.len())
            .map(|i| {
                let ym: f64 = self.expanded(i).0.iter().zip(m).map(|(a, b)| a * b).sum();
                let xm: f64 = x.at(i).iter().zip(m).map(|(a, b)| a * b).sum();
                (ym - xm).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// One group of the post-merge clustering while pooling adjacent violators.
struct Pool {
    start: usize,
    end: usize,
    mass: f64,
    level: f64,
    /// Index of the first pre-merge cluster pooled into this group.
    first: usize,
}

/// Solve the coalescing flow driven by `x` from `g = x_0`.
pub fn solve_flow(g: &StepVector, x: &DrivingPaths) -> Result<FlowPath> {
    let p = x.partition();
    let n = p.len();
    g.conforms(p)?;
    if !g.is_non_decreasing() {
        return Err(Error::invalid("initial values must be non-decreasing"));
    }
    let x0 = x.at(0);
    let scale = g.values().iter().fold(1.0f64, |m, v| m.max(v.abs()));
    if g.values().iter().zip(x0).any(|(a, b)| (a - b).abs() > 1e-12 * scale) {
        return Err(Error::invalid("driving path must start at g"));
    }

    let grid = *x.grid();
    let masses = p.masses();
    let breakpoints = p.breakpoints();
    let mut clustering = Clustering::singletons(n);
    let mut group_mass: Vec<f64> = masses.to_vec();
    let mut events = Vec::new();
    let mut segments = vec![Segment {
        start: 0,
        clustering: clustering.clone(),
    }];
    let mut levels = Vec::with_capacity(n * grid.len());
    let mut offsets = Vec::with_capacity(grid.len() + 1);
    offsets.push(0);

    let mut pre = Vec::with_capacity(n);
    let mut pools: Vec<Pool> = Vec::with_capacity(n);
    for i in 0..grid.len() {
        let xi = x.at(i);
        pre.clear();
        for (r, &gm) in clustering.groups().zip(&group_mass) {
            let s: f64 = r.map(|k| masses[k] * xi[k]).sum();
            pre.push(s / gm);
        }

        pools.clear();
        for (j, r) in clustering.groups().enumerate() {
            pools.push(Pool {
                start: r.start,
                end: r.end,
                mass: group_mass[j],
                level: pre[j],
                first: j,
            });
            while pools.len() >= 2 && pools[pools.len() - 2].level >= pools[pools.len() - 1].level {
                let right = pools.pop().unwrap();
                let left = pools.last_mut().unwrap();
                let mass = left.mass + right.mass;
                left.level = (left.mass * left.level + right.mass * right.level) / mass;
                left.mass = mass;
                left.end = right.end;
            }
        }

        if pools.len() < clustering.len() {
            let time = grid.time(i);
            let old: Vec<Range<usize>> = clustering.groups().collect();
            for pool in &pools {
                let mut last = pool.first;
                while old[last].end < pool.end {
                    last += 1;
                }
                if last == pool.first {
                    continue;
                }
                // left fold in increasing order of coalescence points
                let mut acc_range = old[pool.first].clone();
                let mut acc_mass = group_mass[pool.first];
                let mut acc_level = pre[pool.first];
                for j in pool.first + 1..=last {
                    let right = old[j].clone();
                    let merged_mass = acc_mass + group_mass[j];
                    let merge_value = (acc_mass * acc_level + group_mass[j] * pre[j]) / merged_mass;
                    events.push(CoalescenceEvent {
                        time_index: i,
                        time,
                        left_group: acc_range.clone(),
                        right_group: right.clone(),
                        merge_value,
                        left_point: breakpoints[acc_range.start],
                        coalescence_point: breakpoints[right.start],
                        right_point: breakpoints[right.end],
                    });
                    acc_range = acc_range.start..right.end;
                    acc_mass = merged_mass;
                    acc_level = merge_value;
                }
            }
            clustering = Clustering::from_starts(n, pools.iter().map(|p| p.start).collect())?;
            group_mass = pools.iter().map(|p| p.mass).collect();
            if i == 0 {
                segments[0].clustering = clustering.clone();
            } else {
                segments.push(Segment {
                    start: i,
                    clustering: clustering.clone(),
                });
            }
        }
        levels.extend(pools.iter().map(|p| p.level));
        offsets.push(levels.len());
    }

    Ok(FlowPath {
        partition: p.clone(),
        grid,
        events,
        segments,
        levels,
        offsets,
    })
}

/// Largest deviation between `y` and the step recursion
/// `r_0 = pr_{c(0)} g`, `r_i = pr_{c(t_i)}(r_{i-1} + Δx_i)`, accumulated
/// independently of the solver's closed form.
pub fn integral_equation_residual(y: &FlowPath, x: &DrivingPaths) -> Result<f64> {
    check_len(y.n(), x.n())?;
    check_len(y.grid().len(), x.grid().len())?;
    let p = y.partition();
    let n = y.n();
    let mut r = x.at(0).to_vec();
    let mut worst = 0.0f64;
    let mut buf = vec![0.0; n];
    for i in 0..y.grid().len() {
        if i > 0 {
            let (prev, cur) = (x.at(i - 1), x.at(i));
            for k in 0..n {
                buf[k] = r[k] + (cur[k] - prev[k]);
            }
        } else {
            buf.copy_from_slice(&r);
        }
        let c = y.clustering_at(i);
        r = c.expand(&c.averages(&buf, p)).0;
        let yi = y.expanded(i);
        for (a, b) in r.iter().zip(yi.values()) {
            worst = worst.max((a - b).abs());
        }
    }
    Ok(worst)
}

/// Membership in the coalescing set: whenever two components meet at a grid
/// point they stay together (within `tol`) at every later grid point.
///
/// Components meet at grid index `i` if they agree within `tol` there, or if
/// their difference changed sign strictly since `i − 1` (continuous paths
/// that cross must have met in between).
pub fn check_coalex(w: &DrivingPaths, tol: f64) -> bool {
    check_coalex_values(w.n(), w.values(), tol)
}

pub fn check_coalex_values(n: usize, values: &[f64], tol: f64) -> bool {
    let len = values.len() / n;
    for u in 0..n {
        for v in u + 1..n {
            let mut met = false;
            let mut prev = f64::NAN;
            for i in 0..len {
                let d = values[i * n + v] - values[i * n + u];
                if met {
                    if d.abs() > tol {
                        return false;
                    }
                } else if d.abs() <= tol {
                    met = true;
                } else if i > 0 && prev * d < 0.0 {
                    // crossed between grid points but disagree now
                    return false;
                }
                prev = d;
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_particle(dt: f64) -> (StepVector, DrivingPaths) {
        let p = MassPartition::new(vec![0.5, 0.5]).unwrap();
        let grid = GridSpec::new(dt, 1.0).unwrap();
        let g = StepVector(vec![0.0, 1.0]);
        let x = DrivingPaths::from_fn(p, grid, |k, t| if k == 0 { t } else { 1.0 - t });
        (g, x)
    }

    #[test]
    fn constant_driving_gives_constant_flow() {
        let p = MassPartition::new(vec![0.2, 0.3, 0.5]).unwrap();
        let grid = GridSpec::new(0.01, 1.0).unwrap();
        let g = StepVector(vec![-1.0, 0.0, 2.0]);
        let x = DrivingPaths::from_fn(p, grid, |k, _| g.0[k]);
        let y = solve_flow(&g, &x).unwrap();
        assert!(y.events().is_empty());
        for i in 0..grid.len() {
            assert_eq!(y.expanded(i), g);
        }
        assert!(y.coalescence_times().iter().all(|t| t.is_infinite()));
    }

    #[test]
    fn deterministic_two_particle_trace() {
        let (g, x) = two_particle(1.0 / 64.0);
        let y = solve_flow(&g, &x).unwrap();
        assert_eq!(y.events().len(), 1);
        let e = &y.events()[0];
        assert_eq!(e.time, 0.5);
        assert_eq!(e.merge_value, 0.5);
        assert_eq!(e.coalescence_point, 0.5);
        assert_eq!((e.left_point, e.right_point), (0.0, 1.0));
        assert_eq!(y.tau(1), 0.5);
        assert_eq!(y.count_clusters(0.0).unwrap(), 2);
        assert_eq!(y.count_clusters(0.6).unwrap(), 1);
        assert_eq!(y.cluster_mass(0, 0.6).unwrap(), 1.0);
        assert_eq!(y.cluster_mass(1, 0.2).unwrap(), 0.5);
        for i in 32..y.grid().len() {
            assert_eq!(y.levels_at(i), &[0.5]);
        }
        assert!(y.count_clusters(1.5).is_err());
    }

    #[test]
    fn equal_start_values_merge_at_zero() {
        let p = MassPartition::new(vec![0.25, 0.25, 0.5]).unwrap();
        let grid = GridSpec::new(0.01, 1.0).unwrap();
        let g = StepVector(vec![0.0, 0.0, 3.0]);
        let x = simulate_driving(&g, &p, grid, 11).unwrap();
        let y = solve_flow(&g, &x).unwrap();
        assert_eq!(y.events()[0].time_index, 0);
        assert_eq!(y.clustering_at(0).len(), 2);
        assert_eq!(y.tau(2), 0.0);
        // the merged pair moves by the averaged increments
        for i in 1..20 {
            let lv = y.levels_at(i)[0];
            let expect = 0.5 * (x.at(i)[0] + x.at(i)[1]);
            if y.clustering_at(i).len() == 2 {
                assert!((lv - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn three_way_tie_recorded_left_to_right() {
        let p = MassPartition::equal(3).unwrap();
        let grid = GridSpec::new(0.5, 1.0).unwrap();
        let g = StepVector(vec![0.0, 1.0, 2.0]);
        // all three jump to the same point at t = 0.5
        let x = DrivingPaths::from_fn(p, grid, |k, t| if t == 0.0 { k as f64 } else { 1.0 });
        let y = solve_flow(&g, &x).unwrap();
        assert_eq!(y.events().len(), 2);
        assert!(y.events()[0].coalescence_point < y.events()[1].coalescence_point);
        assert_eq!(y.events()[0].left_group, 0..1);
        assert_eq!(y.events()[1].left_group, 0..2);
        assert_eq!(y.tau(1), 0.5);
        assert_eq!(y.tau(2), 0.5);
    }

    #[test]
    fn cascade_merge_reaches_sorted_levels() {
        let p = MassPartition::equal(3).unwrap();
        let grid = GridSpec::new(1.0, 1.0).unwrap();
        let g = StepVector(vec![1.0, 2.0, 3.0]);
        // the right pair merges and the merged level drops below the left block
        let x = DrivingPaths::from_fn(p, grid, |k, t| if t == 0.0 { k as f64 + 1.0 } else { [2.0, 3.0, -10.0][k] });
        let y = solve_flow(&g, &x).unwrap();
        assert!(y.is_ordered());
        let total = y.levels_at(1);
        assert_eq!(y.clustering_at(1).len(), 1);
        assert!((total[0] + 5.0 / 3.0).abs() < 1e-12);
        assert_eq!(y.events().len(), 2);
        assert!(y.events()[0].coalescence_point < y.events()[1].coalescence_point);
    }

    #[test]
    fn simulate_driving_is_deterministic_and_validates() {
        let p = MassPartition::new(vec![0.3, 0.7]).unwrap();
        let grid = GridSpec::new(0.01, 1.0).unwrap();
        let g = StepVector(vec![0.0, 0.5]);
        let a = simulate_driving(&g, &p, grid, 5).unwrap();
        let b = simulate_driving(&g, &p, grid, 5).unwrap();
        assert_eq!(a.values(), b.values());
        assert!(simulate_driving(&StepVector(vec![1.0, 0.0]), &p, grid, 5).is_err());
        assert!(solve_flow(&StepVector(vec![0.1, 0.5]), &a).is_err());
    }

    #[test]
    fn flow_is_in_coalex_and_bm_crossings_are_not() {
        let p = MassPartition::new(vec![0.5, 0.5]).unwrap();
        let grid = GridSpec::new(1e-3, 1.0).unwrap();
        let g = StepVector(vec![0.0, 0.05]);
        let x = simulate_driving(&g, &p, grid, 3).unwrap();
        let y = solve_flow(&g, &x).unwrap();
        assert!(!y.events().is_empty());
        assert!(check_coalex(&y.to_driving_shape(), 1e-9));
        assert!(!check_coalex(&x, 1e-9));
        let flat = DrivingPaths::from_fn(p, grid, |k, _| k as f64);
        assert!(check_coalex(&flat, 1e-9));
    }

    #[test]
    fn recursion_and_conservation_hold() {
        let p = MassPartition::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let grid = GridSpec::new(1e-3, 1.0).unwrap();
        let g = StepVector(vec![-0.3, -0.1, 0.1, 0.3]);
        for seed in 0..5 {
            let x = simulate_driving(&g, &p, grid, seed).unwrap();
            let y = solve_flow(&g, &x).unwrap();
            assert!(integral_equation_residual(&y, &x).unwrap() < 1e-10);
            assert!(y.mass_mean_residual(&x) < 1e-10);
            assert!(y.is_ordered());
            for w in y.segments().windows(2) {
                assert!(w[1].clustering.is_coarsening_of(&w[0].clustering));
                assert!(w[1].clustering.len() < w[0].clustering.len());
            }
        }
    }
}
