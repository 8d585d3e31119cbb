use mmaf_core::conditioning::{bridge_demo, ou_path_with, ou_variance};
use mmaf_core::ensemble::par_samples;
use mmaf_core::flow::simulate_driving_with;
use mmaf_core::rng::{stream, Purpose};
use mmaf_core::stats::{mean_band, moment_report, realized_cross_qv, realized_qv};
use mmaf_core::*;
use rand::Rng;
use rand_distr::StandardNormal;

const N: usize = 10_000;

#[test]
fn driving_endpoint_variance_is_horizon_over_mass() {
    let p = MassPartition::new(vec![0.25, 0.75]).unwrap();
    let g = StepVector(vec![-1.0, 2.0]);
    let grid = GridSpec::new(1e-2, 1.0).unwrap();
    let ends = par_samples(N, |i| {
        let x = simulate_driving_with(&g, &p, grid, &mut stream(40, Purpose::Driving, i)).unwrap();
        x.at(grid.steps()).to_vec()
    });
    for k in 0..2 {
        let s: Vec<f64> = ends.iter().map(|e| e[k]).collect();
        let r = moment_report(format!("endpoint b{k}"), &s, g.0[k], 1.0 / p.mass(k));
        assert!(r.pass, "{r:?}");
    }

    let one = MassPartition::new(vec![1.0]).unwrap();
    let s = par_samples(N, |i| {
        let x = simulate_driving_with(&StepVector(vec![0.0]), &one, grid, &mut stream(41, Purpose::Driving, i)).unwrap();
        x.at(grid.steps())[0]
    });
    assert!(moment_report("standard endpoint", &s, 0.0, 1.0).pass);
}

#[test]
fn brownian_quadratic_variation() {
    let dt = 1e-3;
    let pairs = par_samples(N, |i| {
        let mut rng = stream(42, Purpose::FreshNoise, i);
        let a = ScalarPath::brownian(dt, 501, &mut rng);
        let b = ScalarPath::brownian(dt, 501, &mut rng);
        (realized_qv(&a), realized_cross_qv(&a, &b).unwrap())
    });
    let qv: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let cross: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    assert!(mean_band("qv", &qv, 0.5, 3.0).pass);
    assert!(mean_band("cross qv", &cross, 0.0, 3.0).pass);
}

#[test]
fn gaussian_moment_calibration() {
    let mut rng = stream(43, Purpose::Scenario, 0);
    let s: Vec<f64> = (0..N).map(|_| rng.sample(StandardNormal)).collect();
    assert!(moment_report("gauss", &s, 0.0, 1.0).pass);
}

#[test]
fn ou_variance_matches_closed_form() {
    let (alpha, dt) = (3.0, 1e-2);
    let ends = par_samples(N, |i| {
        let p = ou_path_with(alpha, 10.0, dt, 101, &mut stream(44, Purpose::Ornstein, i)).unwrap();
        (p.at(50), p.at(100))
    });
    for (t, s) in [(0.5, ends.iter().map(|e| e.0).collect::<Vec<_>>()), (1.0, ends.iter().map(|e| e.1).collect())] {
        let r = moment_report(format!("ou t={t}"), &s, 0.0, ou_variance(alpha, t));
        assert!(r.pass, "{r:?}");
    }
}

#[test]
fn bridge_moments() {
    let grid = GridSpec::new(1e-2, 1.0).unwrap();
    let r = bridge_demo(0.0, grid, N, 45, &[0.25, 0.5, 0.75]).unwrap();
    for (i, s) in r.samples.iter().enumerate() {
        let rep = moment_report("bridge", s, r.expected_mean[i], r.expected_variance[i]);
        assert!(rep.pass, "{rep:?}");
    }
    for c in &r.covariances {
        assert!((c.empirical - c.expected).abs() < 0.02, "{c:?}");
    }
}
