//! The remainder map `W ↦ ξ` and its inverse `(Y, ξ) ↦ W`.
//!
//! For each `e_k` that exists, `ξ_k(s) = ⟨w_{τ_k+s}, e_k⟩_m` on the shifted
//! clock `s ∈ [0, T − τ_k]`. Since `y_t` is constant on every group present at
//! `t`, `⟨y_t, e_k⟩_m = 0` once `t ≥ τ_k`, and `w_t − y_t` lies in the span of
//! the `e_k` with `τ_k ≤ t`; both round trips are exact on the grid.

use serde::{Deserialize, Serialize};

use crate::basis::{adapted_basis, AdaptedBasis};
use crate::error::{check_len, Error, Result};
use crate::flow::{DrivingPaths, FlowPath};
use crate::grid::ScalarPath;
use crate::space::{glue_at, inner_raw, MassPartition};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemainderComponent {
    pub k: usize,
    pub tau: f64,
    pub tau_index: usize,
    /// `ξ_k` on the shifted clock.
    pub path: ScalarPath,
}

/// Remainder coordinates `ξ_k`, present only for finite `τ_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemainderPath {
    partition: MassPartition,
    components: Vec<Option<RemainderComponent>>,
}

impl RemainderPath {
    /// Remainder aligned with `y`, component `k` produced by `f(k, len)`.
    pub fn for_flow(y: &FlowPath, mut f: impl FnMut(usize, usize) -> ScalarPath) -> Result<Self> {
        let n = y.n();
        let steps = y.grid().steps();
        let mut components = vec![None; n];
        for k in 1..n {
            if let Some(ti) = y.tau_index(k) {
                let path = f(k, steps - ti + 1);
                check_len(steps - ti + 1, path.len())?;
                components[k] = Some(RemainderComponent {
                    k,
                    tau: y.tau(k),
                    tau_index: ti,
                    path,
                });
            }
        }
        Ok(Self {
            partition: y.partition().clone(),
            components,
        })
    }

    pub fn zeros(y: &FlowPath) -> Self {
        let dt = y.grid().dt();
        Self::for_flow(y, |_, len| ScalarPath::zeros(dt, len)).expect("lengths agree")
    }

    pub fn partition(&self) -> &MassPartition {
        &self.partition
    }

    pub fn get(&self, k: usize) -> Option<&RemainderComponent> {
        self.components.get(k).and_then(Option::as_ref)
    }

    pub fn components(&self) -> impl Iterator<Item = &RemainderComponent> {
        self.components.iter().flatten()
    }

    /// `max_k |ξ_k(0)|`: the grid-snapping defect of a genuine pair.
    pub fn start_defect(&self) -> f64 {
        self.components().map(|c| c.path.at(0).abs()).fold(0.0, f64::max)
    }

    /// `max_k sup_s |ξ_k(s)|`.
    pub fn sup_norm(&self) -> f64 {
        self.components().map(|c| c.path.sup_abs()).fold(0.0, f64::max)
    }
}

fn check_pair(y: &FlowPath, w: &DrivingPaths) -> Result<()> {
    if y.partition() != w.partition() {
        return Err(Error::invalid("flow and path use different partitions"));
    }
    if y.grid() != w.grid() {
        return Err(Error::invalid("flow and path use different grids"));
    }
    Ok(())
}

pub fn remainder_map(y: &FlowPath, w: &DrivingPaths) -> Result<RemainderPath> {
    check_pair(y, w)?;
    remainder_with_basis(y, &adapted_basis(y), w)
}

pub(crate) fn remainder_with_basis(
    y: &FlowPath,
    basis: &AdaptedBasis,
    w: &DrivingPaths,
) -> Result<RemainderPath> {
    let m = y.partition().masses();
    let dt = y.grid().dt();
    RemainderPath::for_flow(y, |k, len| {
        let e = &basis.get(k).expect("finite tau has a basis vector").vector.0;
        let ti = basis.get(k).unwrap().tau_index;
        ScalarPath::new(dt, (0..len).map(|s| inner_raw(w.at(ti + s), e, m)).collect())
    })
}

/// `w_t = y_t + Σ_k 1{t ≥ τ_k} z_k(t − τ_k) e_k`.
pub fn rebuild_wiener(y: &FlowPath, z: &RemainderPath) -> Result<DrivingPaths> {
    if y.partition() != z.partition() {
        return Err(Error::invalid("remainder uses a different partition"));
    }
    let n = y.n();
    let steps = y.grid().steps();
    for k in 1..n {
        match (y.tau_index(k), z.get(k)) {
            (None, None) => {}
            (Some(ti), Some(c)) if c.tau_index == ti && c.path.len() == steps - ti + 1 => {}
            _ => return Err(Error::invalid(format!("remainder component {k} is misaligned with the flow"))),
        }
    }
    let basis = adapted_basis(y);
    let mut values = y.to_driving_shape().into_values();
    for c in z.components() {
        let e = &basis.get(c.k).unwrap().vector.0;
        for (s, zs) in c.path.values.iter().enumerate() {
            let row = &mut values[(c.tau_index + s) * n..(c.tau_index + s + 1) * n];
            for (v, ek) in row.iter_mut().zip(e) {
                *v += zs * ek;
            }
        }
    }
    DrivingPaths::new(y.partition().clone(), *y.grid(), values)
}

/// Noise `B_0, …, B_{n−1}`: `B_k` follows the fresh path `β_k` until `τ_k`
/// and then the increments of `⟨w, e_k⟩_m`; `B_0 = β_0`.
pub fn extract_noise(y: &FlowPath, w: &DrivingPaths, fresh: &[ScalarPath]) -> Result<Vec<ScalarPath>> {
    check_pair(y, w)?;
    let n = y.n();
    check_len(n, fresh.len())?;
    for b in fresh {
        check_len(y.grid().len(), b.len())?;
    }
    let basis = adapted_basis(y);
    let m = y.partition().masses();
    let dt = y.grid().dt();
    let mut out = Vec::with_capacity(n);
    out.push(fresh[0].clone());
    for k in 1..n {
        match basis.get(k) {
            None => out.push(fresh[k].clone()),
            Some(b) => {
                let ti = b.tau_index;
                let base = inner_raw(w.at(ti), &b.vector.0, m);
                let tail = ScalarPath::new(
                    dt,
                    (ti..y.grid().len())
                        .map(|i| inner_raw(w.at(i), &b.vector.0, m) - base)
                        .collect(),
                );
                out.push(glue_at(&fresh[k], &tail, ti)?);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{check_coalex, simulate_driving, solve_flow};
    use crate::grid::GridSpec;
    use crate::rng::{stream, Purpose};
    use crate::space::StepVector;

    #[test]
    fn two_particle_remainder_is_identity_clock() {
        let p = MassPartition::new(vec![0.5, 0.5]).unwrap();
        let grid = GridSpec::new(1.0 / 64.0, 1.0).unwrap();
        let g = StepVector(vec![0.0, 1.0]);
        let x = DrivingPaths::from_fn(p, grid, |k, t| if k == 0 { t } else { 1.0 - t });
        let y = solve_flow(&g, &x).unwrap();
        let xi = remainder_map(&y, &x).unwrap();
        let c = xi.get(1).unwrap();
        assert_eq!(c.tau, 0.5);
        for (s, v) in c.path.values.iter().enumerate() {
            assert!((v - s as f64 * grid.dt()).abs() < 1e-12);
        }
        let back = rebuild_wiener(&y, &xi).unwrap();
        for (a, b) in back.values().iter().zip(x.values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn round_trips_and_zero_remainder() {
        let p = MassPartition::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let grid = GridSpec::new(1e-3, 1.0).unwrap();
        let g = StepVector(vec![-0.05, 0.0, 0.05, 0.1]);
        let x = simulate_driving(&g, &p, grid, 4).unwrap();
        let y = solve_flow(&g, &x).unwrap();
        let xi = remainder_map(&y, &x).unwrap();
        assert!(xi.start_defect() < 5.0 * (grid.dt().sqrt() * 4.0));
        let w = rebuild_wiener(&y, &xi).unwrap();
        for (a, b) in w.values().iter().zip(x.values()) {
            assert!((a - b).abs() < 1e-9);
        }

        let mut rng = stream(1, Purpose::Remainder, 0);
        let z = RemainderPath::for_flow(&y, |_, len| ScalarPath::brownian(grid.dt(), len, &mut rng)).unwrap();
        let w = rebuild_wiener(&y, &z).unwrap();
        let back = remainder_map(&y, &w).unwrap();
        for (a, b) in z.components().zip(back.components()) {
            for (u, v) in a.path.values.iter().zip(&b.path.values) {
                assert!((u - v).abs() < 1e-9);
            }
        }
        assert!(!check_coalex(&w, 1e-9));
        let w0 = rebuild_wiener(&y, &RemainderPath::zeros(&y)).unwrap();
        assert_eq!(w0, y.to_driving_shape());
        assert!(check_coalex(&w0, 1e-9));
    }

    #[test]
    fn extract_noise_handoff() {
        let p = MassPartition::equal(3).unwrap();
        let grid = GridSpec::new(1e-2, 1.0).unwrap();
        let g = StepVector(vec![0.0, 0.0, 50.0]);
        let x = simulate_driving(&g, &p, grid, 8).unwrap();
        let y = solve_flow(&g, &x).unwrap();
        assert_eq!(y.tau(2), 0.0);
        assert!(y.tau(1).is_infinite());
        let mut rng = stream(8, Purpose::FreshNoise, 0);
        let fresh: Vec<_> = (0..3).map(|_| ScalarPath::brownian(grid.dt(), grid.len(), &mut rng)).collect();
        let b = extract_noise(&y, &x, &fresh).unwrap();
        assert_eq!(b[0], fresh[0]);
        assert_eq!(b[1], fresh[1]);
        let e = adapted_basis(&y).vector(2).unwrap();
        let m = p.masses();
        for i in 0..grid.len() {
            let want = inner_raw(x.at(i), &e.0, m) - inner_raw(x.at(0), &e.0, m);
            assert!((b[2].at(i) - want).abs() < 1e-12);
        }
    }
}
