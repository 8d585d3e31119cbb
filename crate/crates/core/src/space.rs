//! Mass-weighted step functions on a fixed partition of `[0, 1)`.
//!
//! A partition with masses `m_1..m_n` splits `[0, 1)` into blocks
//! `[a_{k-1}, a_k)`; a [`StepVector`] holds one value per block and the
//! `L₂[0,1]` inner product of two step functions becomes `Σ f_k g_k m_k`.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::grid::ScalarPath;

const MASS_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct MassPartition {
    masses: Vec<f64>,
}

impl MassPartition {
    pub fn new(masses: Vec<f64>) -> Result<Self> {
        if masses.is_empty() {
            return Err(Error::invalid("partition needs at least one block"));
        }
        if let Some((k, m)) = masses
            .iter()
            .enumerate()
            .find(|(_, m)| !(m.is_finite() && **m > 0.0))
        {
            return Err(Error::invalid(format!("mass {k} must be positive, got {m}")));
        }
        let total: f64 = masses.iter().sum();
        if (total - 1.0).abs() > MASS_SUM_TOL {
            return Err(Error::invalid(format!("masses must sum to 1, got {total}")));
        }
        Ok(Self { masses })
    }

    /// `n` blocks of mass `1/n`.
    pub fn equal(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("partition needs at least one block"));
        }
        Self::new(vec![1.0 / n as f64; n]).or_else(|_| {
            // 1/n summed n times can miss 1 by more than the tolerance for odd n
            let mut m = vec![1.0 / n as f64; n];
            let head: f64 = m[..n - 1].iter().sum();
            m[n - 1] = 1.0 - head;
            Self::new(m)
        })
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn mass(&self, k: usize) -> f64 {
        self.masses[k]
    }

    /// `a_0 = 0 < a_1 < … < a_n`, with `a_k = a_{k-1} + m_k`.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.masses.len() + 1);
        let mut acc = 0.0;
        out.push(acc);
        for m in &self.masses {
            acc += m;
            out.push(acc);
        }
        out
    }

    /// Left endpoint `a_k` of block `k` (0-based), i.e. `Σ_{i<k} m_i`.
    pub fn breakpoint(&self, k: usize) -> f64 {
        self.masses[..k].iter().sum()
    }

    pub fn range_mass(&self, blocks: Range<usize>) -> f64 {
        self.masses[blocks].iter().sum()
    }
}

impl TryFrom<Vec<f64>> for MassPartition {
    type Error = Error;

    fn try_from(masses: Vec<f64>) -> Result<Self> {
        Self::new(masses)
    }
}

impl From<MassPartition> for Vec<f64> {
    fn from(p: MassPartition) -> Self {
        p.masses
    }
}

/// Step function `Σ f_k 1_{π_k}` stored by its block values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StepVector(pub Vec<f64>);

impl StepVector {
    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn ones(n: usize) -> Self {
        Self(vec![1.0; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn is_non_decreasing(&self) -> bool {
        self.0.windows(2).all(|w| w[0] <= w[1])
    }

    /// Indicator of `[0, a_j)`, i.e. of the first `j` blocks.
    pub fn prefix_indicator(n: usize, j: usize) -> Self {
        Self((0..n).map(|k| if k < j { 1.0 } else { 0.0 }).collect())
    }

    pub fn conforms(&self, p: &MassPartition) -> Result<()> {
        check_len(p.len(), self.len())
    }
}

impl From<Vec<f64>> for StepVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// Ordered partition of the block indices into contiguous groups.
///
/// Stored by the first block of each group; group `i` covers
/// `starts[i]..starts[i + 1]` (the last one runs to `n`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Clustering {
    n: usize,
    starts: Vec<usize>,
}

impl Clustering {
    pub fn singletons(n: usize) -> Self {
        Self {
            n,
            starts: (0..n).collect(),
        }
    }

    pub fn single(n: usize) -> Self {
        Self { n, starts: vec![0] }
    }

    pub fn from_starts(n: usize, starts: Vec<usize>) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("clustering of zero blocks"));
        }
        if starts.first() != Some(&0) {
            return Err(Error::invalid("first group must start at block 0"));
        }
        if !starts.windows(2).all(|w| w[0] < w[1]) || *starts.last().unwrap() >= n {
            return Err(Error::invalid(format!(
                "group starts {starts:?} are not strictly increasing within 0..{n}"
            )));
        }
        Ok(Self { n, starts })
    }

    /// Group sizes in order, e.g. `[2, 1]` for `{0,1},{2}`.
    pub fn from_sizes(sizes: &[usize]) -> Result<Self> {
        let mut starts = Vec::with_capacity(sizes.len());
        let mut acc = 0;
        for &s in sizes {
            if s == 0 {
                return Err(Error::invalid("empty group"));
            }
            starts.push(acc);
            acc += s;
        }
        Self::from_starts(acc, starts)
    }

    pub fn block_count(&self) -> usize {
        self.n
    }

    /// Number of groups, `N(y_t)` for the flow that produced it.
    pub fn len(&self) -> usize {
        self.starts.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn starts(&self) -> &[usize] {
        &self.starts
    }

    pub fn group(&self, i: usize) -> Range<usize> {
        let end = self.starts.get(i + 1).copied().unwrap_or(self.n);
        self.starts[i]..end
    }

    pub fn groups(&self) -> impl Iterator<Item = Range<usize>> + '_ {
        (0..self.starts.len()).map(move |i| self.group(i))
    }

    /// Index of the group containing `block`.
    pub fn group_of(&self, block: usize) -> usize {
        match self.starts.binary_search(&block) {
            Ok(i) => i,
            Err(i) => i - 1,
        }
    }

    pub fn group_masses(&self, p: &MassPartition) -> Vec<f64> {
        self.groups().map(|r| p.range_mass(r)).collect()
    }

    /// True when every group of `self` is a union of groups of `finer`.
    pub fn is_coarsening_of(&self, finer: &Clustering) -> bool {
        self.n == finer.n && self.starts.iter().all(|s| finer.starts.binary_search(s).is_ok())
    }

    pub fn conforms(&self, p: &MassPartition) -> Result<()> {
        check_len(p.len(), self.n)
    }

    /// Mass-weighted group averages of `values`.
    pub fn averages(&self, values: &[f64], p: &MassPartition) -> Vec<f64> {
        self.groups()
            .map(|r| {
                let (num, den) = r
                    .map(|k| (p.mass(k) * values[k], p.mass(k)))
                    .fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
                num / den
            })
            .collect()
    }

    /// Expand one value per group back to one value per block.
    pub fn expand(&self, levels: &[f64]) -> StepVector {
        let mut out = Vec::with_capacity(self.n);
        for (r, &v) in self.groups().zip(levels) {
            out.extend(std::iter::repeat_n(v, r.len()));
        }
        StepVector(out)
    }
}

/// `⟨f, g⟩_m = Σ f_k g_k m_k`.
pub fn inner_m(f: &StepVector, g: &StepVector, p: &MassPartition) -> Result<f64> {
    f.conforms(p)?;
    g.conforms(p)?;
    Ok(inner_raw(&f.0, &g.0, p.masses()))
}

pub(crate) fn inner_raw(f: &[f64], g: &[f64], m: &[f64]) -> f64 {
    f.iter().zip(g).zip(m).map(|((a, b), w)| a * b * w).sum()
}

pub fn norm_m(f: &StepVector, p: &MassPartition) -> Result<f64> {
    inner_m(f, f, p).map(f64::sqrt)
}

/// Orthogonal projection onto the functions constant on each group of `c`:
/// each entry becomes the mass-weighted average over its group.
pub fn project_onto_clusters(
    f: &StepVector,
    c: &Clustering,
    p: &MassPartition,
) -> Result<StepVector> {
    f.conforms(p)?;
    c.conforms(p)?;
    Ok(c.expand(&c.averages(&f.0, p)))
}

/// Gluing map `Gl(x1, x2, r)(t) = x1(t ∧ r) + x2((t − r)⁺)`.
///
/// `r` is snapped to the nearest grid point. The result is defined on
/// `r + [0, len(x2))`, so it has `r/dt + len(x2)` points.
pub fn glue(x1: &ScalarPath, x2: &ScalarPath, r: f64) -> Result<ScalarPath> {
    if r.is_nan() || r < 0.0 {
        return Err(Error::invalid(format!("glue time must be non-negative, got {r}")));
    }
    if (x1.dt - x2.dt).abs() > 1e-12 * x1.dt {
        return Err(Error::invalid("glued paths must share a grid"));
    }
    let ri = (r / x1.dt).round() as usize;
    glue_at(x1, x2, ri)
}

pub(crate) fn glue_at(x1: &ScalarPath, x2: &ScalarPath, ri: usize) -> Result<ScalarPath> {
    if ri >= x1.len() {
        return Err(Error::invalid(format!(
            "glue index {ri} beyond first path of length {}",
            x1.len()
        )));
    }
    if x2.is_empty() {
        return Err(Error::invalid("second glued path is empty"));
    }
    let head = x1.values[ri];
    let values = (0..ri + x2.len())
        .map(|i| {
            if i <= ri {
                x1.values[i] + x2.values[0]
            } else {
                head + x2.values[i - ri]
            }
        })
        .collect();
    Ok(ScalarPath::new(x1.dt, values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sv(v: &[f64]) -> StepVector {
        StepVector(v.to_vec())
    }

    #[test]
    fn partition_validation() {
        assert!(MassPartition::new(vec![0.5, 0.5]).is_ok());
        assert!(MassPartition::new(vec![0.5, 0.6]).is_err());
        assert!(MassPartition::new(vec![1.5, -0.5]).is_err());
        assert!(MassPartition::new(vec![]).is_err());
        let p = MassPartition::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let b = p.breakpoints();
        assert_eq!(b.len(), 5);
        assert!(b.windows(2).all(|w| w[0] < w[1]));
        assert!((b[4] - 1.0).abs() < 1e-12);
        for n in 1..40 {
            assert_eq!(MassPartition::equal(n).unwrap().len(), n);
        }
    }

    #[test]
    fn inner_product_examples() {
        let half = MassPartition::new(vec![0.5, 0.5]).unwrap();
        assert_eq!(inner_m(&sv(&[1.0, 1.0]), &sv(&[1.0, 1.0]), &half).unwrap(), 1.0);
        assert_eq!(inner_m(&sv(&[2.0, 0.0]), &sv(&[0.0, 3.0]), &half).unwrap(), 0.0);
        let q = MassPartition::new(vec![0.25, 0.75]).unwrap();
        assert_eq!(inner_m(&sv(&[1.0, -1.0]), &sv(&[1.0, -1.0]), &q).unwrap(), 1.0);
        assert!(matches!(
            inner_m(&sv(&[1.0]), &sv(&[1.0, 1.0]), &half),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn projection_examples() {
        let half = MassPartition::new(vec![0.5, 0.5]).unwrap();
        let one = Clustering::single(2);
        assert_eq!(project_onto_clusters(&sv(&[1.0, 3.0]), &one, &half).unwrap(), sv(&[2.0, 2.0]));
        let f = sv(&[0.3, -1.2]);
        let s = Clustering::singletons(2);
        assert_eq!(project_onto_clusters(&f, &s, &half).unwrap(), f);
        let q = MassPartition::new(vec![0.75, 0.25]).unwrap();
        assert_eq!(project_onto_clusters(&sv(&[0.0, 4.0]), &one, &q).unwrap(), sv(&[1.0, 1.0]));
    }

    #[test]
    fn clustering_structure() {
        let c = Clustering::from_sizes(&[2, 1, 3]).unwrap();
        assert_eq!(c.len(), 3);
        assert_eq!(c.block_count(), 6);
        assert_eq!(c.group(2), 3..6);
        assert_eq!(c.group_of(0), 0);
        assert_eq!(c.group_of(2), 1);
        assert_eq!(c.group_of(5), 2);
        assert!(Clustering::single(6).is_coarsening_of(&c));
        assert!(c.is_coarsening_of(&Clustering::singletons(6)));
        assert!(!c.is_coarsening_of(&Clustering::single(6)));
        assert!(Clustering::from_starts(3, vec![1]).is_err());
        assert!(Clustering::from_starts(3, vec![0, 2, 2]).is_err());
        assert!(Clustering::from_starts(3, vec![0, 3]).is_err());
    }

    #[test]
    fn glue_examples() {
        let dt = 0.5;
        let x1 = ScalarPath::new(dt, (0..7).map(|i| i as f64 * dt).collect());
        let x2 = ScalarPath::new(dt, (0..7).map(|i| 2.0 * i as f64 * dt).collect());
        let zero = ScalarPath::zeros(dt, 7);
        // x1(t) = t, x2(t) = 2t, r = 1, t = 2 → 1 + 2
        let g = glue(&x1, &x2, 1.0).unwrap();
        assert_eq!(g.values[4], 3.0);
        let g = glue(&x1, &zero, 1.0).unwrap();
        for i in 0..g.len() {
            assert_eq!(g.values[i], x1.values[i.min(2)]);
        }
        let g = glue(&zero, &x2, 0.0).unwrap();
        assert_eq!(g, x2);
        assert!(glue(&x1, &x2, -1.0).is_err());
    }

    fn partition_strategy() -> impl Strategy<Value = MassPartition> {
        prop::collection::vec(0.05f64..1.0, 1..10).prop_map(|w| {
            let s: f64 = w.iter().sum();
            let mut m: Vec<f64> = w.iter().map(|x| x / s).collect();
            let head: f64 = m[..m.len() - 1].iter().sum();
            let last = m.len() - 1;
            m[last] = 1.0 - head;
            MassPartition::new(m).unwrap()
        })
    }

    fn clustering_for(n: usize, cuts: &[bool]) -> Clustering {
        let mut starts = vec![0];
        for k in 1..n {
            if cuts[k % cuts.len()] {
                starts.push(k);
            }
        }
        Clustering::from_starts(n, starts).unwrap()
    }

    proptest! {
        #[test]
        fn projection_is_self_adjoint_idempotent_contraction(
            p in partition_strategy(),
            seed in prop::collection::vec(-5.0f64..5.0, 20),
            cuts in prop::collection::vec(any::<bool>(), 1..8),
        ) {
            let n = p.len();
            let f = StepVector(seed[..n].to_vec());
            let g = StepVector(seed[10..10 + n].to_vec());
            let c = clustering_for(n, &cuts);
            let pf = project_onto_clusters(&f, &c, &p).unwrap();
            let pg = project_onto_clusters(&g, &c, &p).unwrap();
            let lhs = inner_m(&pf, &g, &p).unwrap();
            let rhs = inner_m(&f, &pg, &p).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-12);
            let ppf = project_onto_clusters(&pf, &c, &p).unwrap();
            for (a, b) in ppf.0.iter().zip(&pf.0) {
                prop_assert!((a - b).abs() < 1e-12);
            }
            prop_assert!(norm_m(&pf, &p).unwrap() <= norm_m(&f, &p).unwrap() + 1e-12);
        }

        #[test]
        fn glue_restricts_and_continues(
            a in prop::collection::vec(-1.0f64..1.0, 2..30),
            b in prop::collection::vec(-1.0f64..1.0, 2..30),
            r_frac in 0.0f64..1.0,
        ) {
            let dt = 0.01;
            let mut x1 = ScalarPath::new(dt, a.clone());
            x1.values[0] = 0.0;
            let mut x2 = ScalarPath::new(dt, b.clone());
            x2.values[0] = 0.0;
            let ri = ((x1.len() - 1) as f64 * r_frac) as usize;
            let g = glue(&x1, &x2, ri as f64 * dt).unwrap();
            for i in 0..=ri {
                prop_assert_eq!(g.values[i], x1.values[i]);
            }
            for i in ri + 1..g.len() {
                let dg = g.values[i] - g.values[i - 1];
                let dx = x2.values[i - ri] - x2.values[i - ri - 1];
                prop_assert!((dg - dx).abs() < 1e-12);
            }
        }
    }
}
