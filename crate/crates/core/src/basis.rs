//! Orthonormal basis of `L²(m)` adapted to the coalescence order of a flow.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::FlowPath;
use crate::space::{inner_raw, MassPartition, StepVector};

/// `e_k` for `k ≥ 1`: created when the `(n−k)`-th coalescence merges the
/// groups `left` and `right`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisVector {
    pub k: usize,
    pub tau: f64,
    pub tau_index: usize,
    pub left: Range<usize>,
    pub right: Range<usize>,
    /// `(a, b, c)`: the merged interval `[a, c)` split at `b`.
    pub points: [f64; 3],
    pub vector: StepVector,
}

/// `{e_0, …, e_{n−1}}` with `e_0 = 1`. Vectors whose coalescence has not
/// happened by the horizon are absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptedBasis {
    partition: MassPartition,
    vectors: Vec<Option<BasisVector>>,
}

/// Haar-type vector `(1/√(c−a))·(√((c−b)/(b−a)) on [a,b), −√((b−a)/(c−b)) on [b,c))`
/// over the blocks of `left ∪ right`, zero elsewhere.
pub fn haar_vector(p: &MassPartition, left: Range<usize>, right: Range<usize>) -> StepVector {
    let lm = p.range_mass(left.clone());
    let rm = p.range_mass(right.clone());
    let s = (lm + rm).sqrt().recip();
    let mut v = vec![0.0; p.len()];
    let lv = s * (rm / lm).sqrt();
    let rv = -s * (lm / rm).sqrt();
    v[left].iter_mut().for_each(|x| *x = lv);
    v[right].iter_mut().for_each(|x| *x = rv);
    StepVector(v)
}

pub fn adapted_basis(y: &FlowPath) -> AdaptedBasis {
    let p = y.partition();
    let n = p.len();
    let mut vectors = vec![None; n];
    for (j, e) in y.events().iter().enumerate() {
        let k = n - 1 - j;
        vectors[k] = Some(BasisVector {
            k,
            tau: e.time,
            tau_index: e.time_index,
            left: e.left_group.clone(),
            right: e.right_group.clone(),
            points: [e.left_point, e.coalescence_point, e.right_point],
            vector: haar_vector(p, e.left_group.clone(), e.right_group.clone()),
        });
    }
    AdaptedBasis {
        partition: p.clone(),
        vectors,
    }
}

impl AdaptedBasis {
    pub fn n(&self) -> usize {
        self.partition.len()
    }

    pub fn partition(&self) -> &MassPartition {
        &self.partition
    }

    /// All `n − 1` coalescences happened, so the basis spans `L²(m)`.
    pub fn is_complete(&self) -> bool {
        self.vectors[1..].iter().all(Option::is_some)
    }

    /// `e_k` for `k ≥ 1`, if created.
    pub fn get(&self, k: usize) -> Option<&BasisVector> {
        self.vectors.get(k).and_then(Option::as_ref)
    }

    /// `e_k` as a step vector; `e_0` is the constant one.
    pub fn vector(&self, k: usize) -> Option<StepVector> {
        if k == 0 {
            Some(StepVector::ones(self.n()))
        } else {
            self.get(k).map(|b| b.vector.clone())
        }
    }

    /// `τ_k`; `0` for `k = 0` by convention, `+∞` when never reached.
    pub fn tau(&self, k: usize) -> f64 {
        if k == 0 {
            0.0
        } else {
            self.get(k).map_or(f64::INFINITY, |b| b.tau)
        }
    }

    /// Created vectors `e_k`, `k ≥ 1`, in increasing `k`.
    pub fn created(&self) -> impl Iterator<Item = &BasisVector> {
        self.vectors.iter().flatten()
    }

    /// Gram matrix over `e_0` and the created vectors, in that order.
    pub fn gram(&self) -> Vec<Vec<f64>> {
        let m = self.partition.masses();
        let mut all = vec![StepVector::ones(self.n())];
        all.extend(self.created().map(|b| b.vector.clone()));
        all.iter()
            .map(|a| all.iter().map(|b| inner_raw(&a.0, &b.0, m)).collect())
            .collect()
    }

    /// `⟨v, e_k⟩_m`, or `None` when `e_k` does not exist.
    pub fn coefficient(&self, v: &[f64], k: usize) -> Option<f64> {
        let m = self.partition.masses();
        if k == 0 {
            Some(v.iter().zip(m).map(|(a, b)| a * b).sum())
        } else {
            self.get(k).map(|b| inner_raw(v, &b.vector.0, m))
        }
    }
}

/// Both sides of `Σ_{k=n₀}^{n−1} τ_k^β = ∫_0^{τ_{n₀}} (N(y_t) − n₀) d(t^β)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TauSumCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub gap: f64,
}

/// Left side from the coalescence times, right side as a Riemann–Stieltjes
/// sum of the cluster count over grid cells.
pub fn tau_sum_check(y: &FlowPath, beta: f64, n_floor: usize) -> Result<TauSumCheck> {
    if !(beta > 0.0) {
        return Err(Error::invalid("beta must be positive"));
    }
    let n = y.n();
    if n_floor == 0 || n_floor > n {
        return Err(Error::invalid(format!("n_floor must lie in 1..={n}")));
    }
    let mut lhs = 0.0;
    for k in n_floor..n {
        let t = y.tau(k);
        if t.is_infinite() {
            return Err(Error::invalid(format!("tau_{k} is infinite on this horizon")));
        }
        lhs += t.powf(beta);
    }
    let end = y.tau_index(n_floor).ok_or_else(|| {
        Error::invalid(format!("tau_{n_floor} is infinite on this horizon"))
    })?;
    let grid = y.grid();
    let mut rhs = 0.0;
    for i in 0..end {
        let excess = y.clustering_at(i).len() - n_floor;
        if excess > 0 {
            rhs += excess as f64 * (grid.time(i + 1).powf(beta) - grid.time(i).powf(beta));
        }
    }
    let gap = (lhs - rhs).abs() / lhs.abs().max(f64::EPSILON);
    Ok(TauSumCheck { lhs, rhs, gap })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{simulate_driving, solve_flow};
    use crate::grid::GridSpec;

    #[test]
    fn two_block_vector_matches_closed_form() {
        let p = MassPartition::new(vec![0.25, 0.75]).unwrap();
        let e = haar_vector(&p, 0..1, 1..2);
        assert!((e.0[0] - 3f64.sqrt()).abs() < 1e-15);
        assert!((e.0[1] + 1.0 / 3f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn basis_of_coalesced_flow_is_orthonormal() {
        let p = MassPartition::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let grid = GridSpec::new(1e-3, 2.0).unwrap();
        let g = StepVector(vec![-0.05, 0.0, 0.02, 0.06]);
        let x = simulate_driving(&g, &p, grid, 2).unwrap();
        let y = solve_flow(&g, &x).unwrap();
        let b = adapted_basis(&y);
        let gram = b.gram();
        for (i, row) in gram.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((v - want).abs() < 1e-12, "gram[{i}][{j}] = {v}");
            }
        }
        for bv in b.created() {
            assert!(bv.vector.0[bv.left.start] > 0.0);
            assert!(bv.vector.0[bv.right.start] < 0.0);
            assert_eq!(b.tau(bv.k), y.tau(bv.k));
        }
    }

    #[test]
    fn tau_sum_identity_and_errors() {
        let p = MassPartition::equal(5).unwrap();
        let grid = GridSpec::new(1e-3, 3.0).unwrap();
        let g = StepVector(vec![0.0, 0.01, 0.02, 0.03, 0.04]);
        let x = simulate_driving(&g, &p, grid, 9).unwrap();
        let y = solve_flow(&g, &x).unwrap();
        let deepest = (1..5).find(|&k| y.tau(k).is_finite()).unwrap();
        for beta in [0.6, 1.0, 2.0] {
            let c = tau_sum_check(&y, beta, deepest).unwrap();
            assert!(c.gap < 1e-10, "{c:?}");
        }
        assert!(tau_sum_check(&y, 0.0, deepest).is_err());
        assert!(tau_sum_check(&y, 1.0, 0).is_err());
    }
}
