//! The acceptance suite. Every criterion is a deterministic function of
//! `(level, seed)`; the result lists the individual reports it rests on.

use mmaf_core::basis::adapted_basis;
use mmaf_core::conditioning::{ou_path_with, ConditioningConfig, Sampler};
use mmaf_core::ensemble::{par_samples, Scenario};
use mmaf_core::flow::integral_equation_residual;
use mmaf_core::remainder::RemainderPath;
use mmaf_core::rng::{stream, Purpose};
use mmaf_core::stats::{correlation, ks_two_sample, mean_se, moment_report, variance_band, ReportKind, TestReport};
use mmaf_core::{
    check_coalex, extract_noise, inner_m, project_onto_clusters, rebuild_wiener, remainder_map, tau_sum_check,
    Clustering, FlowPath, GridSpec, MassPartition, ScalarPath, StepVector,
};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::commands::{bridge_reports, condition_reports, direction_reports, ks_reports, law_reports, KS_THRESHOLD};
use crate::error::CliResult;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    /// Reduced sample sizes.
    Smoke,
    /// Sample sizes of the acceptance criteria.
    Full,
}

pub struct Criterion {
    pub id: u8,
    pub title: &'static str,
}

pub const CRITERIA: [Criterion; 11] = [
    Criterion { id: 1, title: "flow integral identity, order and mass-mean conservation" },
    Criterion { id: 2, title: "adapted basis orthonormality, span and sign" },
    Criterion { id: 3, title: "coalescence-time power sums" },
    Criterion { id: 4, title: "remainder round trips and coalescing-set characterisation" },
    Criterion { id: 5, title: "MMAF martingale means and quadratic variations" },
    Criterion { id: 6, title: "Wiener reconstruction and noise extraction" },
    Criterion { id: 7, title: "eps-conditioned Wiener paths vs direct MMAF" },
    Criterion { id: 8, title: "OU direction-sequence convergence" },
    Criterion { id: 9, title: "OU increment bound" },
    Criterion { id: 10, title: "Brownian bridge moments" },
    Criterion { id: 11, title: "reproducibility across worker counts" },
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionResult {
    pub id: u8,
    pub title: String,
    pub pass: bool,
    pub reports: Vec<TestReport>,
}

impl CriterionResult {
    fn new(id: u8, reports: Vec<TestReport>) -> Self {
        let title = CRITERIA.iter().find(|c| c.id == id).map_or("", |c| c.title).to_string();
        Self {
            id,
            title,
            pass: reports.iter().all(|r| r.pass),
            reports,
        }
    }

    /// One-line summary: verdict, id, title and the failing report names.
    pub fn line(&self) -> String {
        let failing: Vec<&str> = self.reports.iter().filter(|r| !r.pass).map(|r| r.name.as_str()).collect();
        let mut s = format!(
            "{} criterion {:>2}: {} ({} checks)",
            if self.pass { "PASS" } else { "FAIL" },
            self.id,
            self.title,
            self.reports.len()
        );
        if !failing.is_empty() {
            s.push_str(&format!(" failing: {}", failing.join("; ")));
        }
        s
    }
}

fn sizes(level: Level) -> (usize, usize, usize) {
    // (random flows, ensemble size, large ensemble size)
    match level {
        Level::Smoke => (20, 1000, 2000),
        Level::Full => (100, 5000, 10_000),
    }
}

fn criterion_seed(seed: u64, id: u8) -> u64 {
    seed ^ ((id as u64) << 40)
}

fn gap(name: impl Into<String>, value: f64, n: usize, threshold: f64) -> TestReport {
    TestReport::new(name, ReportKind::Gap, value, value, n, threshold)
}

/// Random scenario with `1 ≤ n ≤ 16` blocks on `[0, 1]`, `dt = 1e-3`.
fn random_scenario(seed: u64, index: u64, spread: f64) -> Scenario {
    let mut rng = stream(seed, Purpose::Scenario, index);
    let n = rng.random_range(1..=16usize);
    let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..1.0)).collect();
    let total: f64 = w.iter().sum();
    let mut m: Vec<f64> = w.iter().map(|x| x / total).collect();
    let head: f64 = m[..n - 1].iter().sum();
    m[n - 1] = 1.0 - head;
    let mut g: Vec<f64> = (0..n).map(|_| rng.random_range(-spread..spread)).collect();
    g.sort_by(f64::total_cmp);
    Scenario::new(MassPartition::new(m).unwrap(), StepVector(g), GridSpec::new(1e-3, 1.0).unwrap()).unwrap()
}

fn random_flows(seed: u64, count: usize, spread: f64) -> Vec<(Scenario, mmaf_core::DrivingPaths, FlowPath)> {
    par_samples(count, |i| {
        let sc = random_scenario(seed, i, spread);
        let (x, y) = sc.sample(seed, Purpose::Driving, i);
        (sc, x, y)
    })
}

fn criterion_1(level: Level, seed: u64) -> CliResult<Vec<TestReport>> {
    let (count, _, _) = sizes(level);
    let flows = random_flows(seed, count, 0.3);
    let mut integral: f64 = 0.0;
    let mut mean: f64 = 0.0;
    let mut unordered = 0;
    let mut splits = 0;
    for (_, x, y) in &flows {
        integral = integral.max(integral_equation_residual(y, x)?);
        mean = mean.max(y.mass_mean_residual(x));
        unordered += usize::from(!y.is_ordered());
        splits += y.segments().windows(2).filter(|w| !w[1].clustering.is_coarsening_of(&w[0].clustering)).count();
    }
    Ok(vec![
        gap("integral identity max residual", integral, count, 1e-10),
        gap("mass-mean conservation max residual", mean, count, 1e-10),
        gap("flows with unsorted levels", unordered as f64, count, 0.5),
        gap("cluster splits", splits as f64, count, 0.5),
    ])
}

/// Clustering after the first `upto` recorded events.
fn clustering_after(y: &FlowPath, upto: usize) -> Clustering {
    let mut starts: Vec<usize> = (0..y.n()).collect();
    for e in &y.events()[..upto] {
        starts.retain(|&s| s != e.right_group.start);
    }
    Clustering::from_starts(y.n(), starts).expect("events come from a valid flow")
}

fn criterion_2(level: Level, seed: u64) -> CliResult<Vec<TestReport>> {
    let (count, _, _) = sizes(level);
    let flows = random_flows(seed, count, 0.1);
    let (mut ortho, mut span, mut sign, mut annihilate): (f64, f64, f64, f64) = (0.0, 0.0, 0.0, 0.0);
    let mut vectors = 0;
    for (sc, _, y) in &flows {
        let p = &sc.partition;
        let n = p.len();
        let b = adapted_basis(y);
        for (i, row) in b.gram().iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                ortho = ortho.max((v - if i == j { 1.0 } else { 0.0 }).abs());
            }
        }
        ortho = ortho.max((b.vector(0).unwrap().0.iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max)).abs());
        for (j, _) in y.events().iter().enumerate() {
            let k = n - 1 - j;
            vectors += 1;
            let c = clustering_after(y, j + 1);
            for l in 0..n {
                let Some(el) = b.vector(l) else { continue };
                let proj = project_onto_clusters(&el, &c, p)?;
                for (i, v) in proj.values().iter().enumerate() {
                    let want = if l < k { el.0[i] } else { 0.0 };
                    span = span.max((v - want).abs());
                }
            }
            let ek = b.vector(k).unwrap();
            for jj in 0..=n {
                sign = sign.max(-inner_m(&ek, &StepVector::prefix_indicator(n, jj), p)?);
            }
            let tau = b.get(k).unwrap().tau_index;
            for i in tau..y.grid().len() {
                annihilate = annihilate.max(inner_m(&ek, &y.expanded(i), p)?.abs());
            }
        }
    }
    Ok(vec![
        gap("max |<e_i,e_j> - delta_ij|", ortho, count, 1e-12),
        gap("span and annihilation max deviation", span, vectors, 1e-12),
        gap("sign normalisation max violation", sign.max(0.0), vectors, 1e-12),
        gap("max |<e_k, y_t>| for t >= tau_k", annihilate, vectors, 1e-10),
    ])
}

fn criterion_3(level: Level, seed: u64) -> CliResult<Vec<TestReport>> {
    let (count, _, _) = sizes(level);
    let flows = random_flows(seed, count, 0.1);
    let mut reports = Vec::new();
    for beta in [0.6, 0.75, 1.0, 2.0] {
        let mut worst: f64 = 0.0;
        let mut used = 0;
        for (sc, _, y) in &flows {
            if let Some(floor) = (1..sc.n()).find(|&k| y.tau(k).is_finite()) {
                worst = worst.max(tau_sum_check(y, beta, floor)?.gap);
                used += 1;
            }
        }
        reports.push(gap(format!("tau power sum gap beta={beta}"), worst, used, 1e-10));
    }
    Ok(reports)
}

fn criterion_4(level: Level, seed: u64) -> CliResult<Vec<TestReport>> {
    let (count, _, _) = sizes(level);
    let flows = random_flows(seed, count, 0.1);
    let (mut trip_a, mut trip_b): (f64, f64) = (0.0, 0.0);
    let mut zero_mismatch = 0;
    for (i, (_, x, y)) in flows.iter().enumerate() {
        let dt = y.grid().dt();
        let mut rng = stream(seed, Purpose::Remainder, i as u64);
        let z = RemainderPath::for_flow(y, |_, len| ScalarPath::brownian(dt, len, &mut rng))?;
        let back = remainder_map(y, &rebuild_wiener(y, &z)?)?;
        for (a, b) in z.components().zip(back.components()) {
            for (u, v) in a.path.values.iter().zip(&b.path.values) {
                trip_a = trip_a.max((u - v).abs());
            }
        }
        let rebuilt = rebuild_wiener(y, &remainder_map(y, x)?)?;
        for (a, b) in rebuilt.values().iter().zip(x.values()) {
            trip_b = trip_b.max((a - b).abs());
        }
        zero_mismatch += usize::from(rebuild_wiener(y, &RemainderPath::zeros(y))? != y.to_driving_shape());
    }

    // 50 flows with at least one coalescence, remainders of shrinking size
    let mut coalesced = Vec::new();
    let mut idx = 0u64;
    while coalesced.len() < 50 {
        let sc = random_scenario(seed ^ 0x5eed, idx, 0.05);
        let (_, y) = sc.sample(seed ^ 0x5eed, Purpose::Driving, idx);
        if !y.events().is_empty() {
            coalesced.push(y);
        }
        idx += 1;
    }
    let (mut false_true, mut zero_false) = (0, 0);
    for (case, y) in coalesced.iter().enumerate() {
        let scale = 10f64.powi(-((case % 5) as i32));
        let dt = y.grid().dt();
        let mut rng = stream(seed, Purpose::Remainder, 10_000 + case as u64);
        let z = RemainderPath::for_flow(y, |_, len| {
            let b = ScalarPath::brownian(dt, len, &mut rng);
            ScalarPath::new(dt, b.values.iter().map(|v| v * scale).collect())
        })?;
        false_true += usize::from(check_coalex(&rebuild_wiener(y, &z)?, 1e-9));
        zero_false += usize::from(!check_coalex(&rebuild_wiener(y, &RemainderPath::zeros(y))?, 1e-9));
    }
    Ok(vec![
        gap("round trip remainder(rebuild(z)) max error", trip_a, count, 1e-9),
        gap("round trip rebuild(remainder(w)) max error", trip_b, count, 1e-9),
        gap("rebuild with zero remainder differs from y", zero_mismatch as f64, count, 0.5),
        gap("nonzero remainders judged coalescing", false_true as f64, 50, 0.5),
        gap("zero remainders judged non-coalescing", zero_false as f64, 50, 0.5),
    ])
}

pub fn law_scenario() -> Scenario {
    Scenario::new(
        MassPartition::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap(),
        StepVector(vec![-0.3, -0.1, 0.1, 0.3]),
        GridSpec::new(1e-3, 1.0).unwrap(),
    )
    .unwrap()
}

fn criterion_5(level: Level, seed: u64) -> CliResult<Vec<TestReport>> {
    let (_, n, _) = sizes(level);
    Ok(law_reports(&law_scenario(), n, seed, &[0.25, 0.5, 1.0])?.1)
}

fn corr_report(name: String, a: &[f64], b: &[f64]) -> TestReport {
    let rho = correlation(a, b);
    let bound = 3.0 / (a.len() as f64).sqrt();
    gap(name, rho.abs(), a.len(), bound)
}

struct ReconstructionRecord {
    inc_early: Vec<f64>,
    inc_late: Vec<f64>,
    w_end: Vec<f64>,
    x_end: Vec<f64>,
    b_end: Vec<f64>,
    y_end: Vec<f64>,
}

fn criterion_6(level: Level, seed: u64) -> CliResult<Vec<TestReport>> {
    let (_, n_samples, _) = sizes(level);
    let sc = law_scenario();
    let n = sc.n();
    let grid = sc.grid;
    let (mid, end) = (grid.nearest_index(0.5)?, grid.steps());
    let records = par_samples(n_samples, |i| {
        let (x, y) = sc.sample(seed, Purpose::Driving, i);
        let mut rng = stream(seed, Purpose::Remainder, i);
        let z = RemainderPath::for_flow(&y, |_, len| ScalarPath::brownian(grid.dt(), len, &mut rng)).unwrap();
        let w = rebuild_wiener(&y, &z).unwrap();
        let mut rng = stream(seed, Purpose::FreshNoise, i);
        let fresh: Vec<ScalarPath> = (0..n).map(|_| ScalarPath::brownian(grid.dt(), grid.len(), &mut rng)).collect();
        let b = extract_noise(&y, &x, &fresh).unwrap();
        let (direct, _) = sc.sample(seed, Purpose::Reference, i);
        ReconstructionRecord {
            inc_early: (0..n).map(|k| w.at(mid)[k] - w.at(0)[k]).collect(),
            inc_late: (0..n).map(|k| w.at(end)[k] - w.at(mid)[k]).collect(),
            w_end: w.at(end).to_vec(),
            x_end: direct.at(end).to_vec(),
            b_end: b.iter().map(|p| p.values[end]).collect(),
            y_end: y.expanded(end).0,
        }
    });
    let col = |f: &dyn Fn(&ReconstructionRecord) -> f64| -> Vec<f64> { records.iter().map(f).collect() };
    let mut reports = Vec::new();
    for k in 0..n {
        let target = 0.5 / sc.partition.mass(k);
        reports.push(variance_band(format!("w_{k} increment variance on [0,0.5]"), &col(&|r| r.inc_early[k]), target, 3.0));
        reports.push(variance_band(format!("w_{k} increment variance on [0.5,1]"), &col(&|r| r.inc_late[k]), target, 3.0));
    }
    for k in 0..n {
        for l in k + 1..n {
            reports.push(corr_report(format!("corr w_{k},w_{l} increments on [0,0.5]"), &col(&|r| r.inc_early[k]), &col(&|r| r.inc_early[l])));
            reports.push(corr_report(format!("corr w_{k},w_{l} increments on [0.5,1]"), &col(&|r| r.inc_late[k]), &col(&|r| r.inc_late[l])));
        }
    }
    for k in 0..n {
        let ks = ks_two_sample(&col(&|r| r.w_end[k]), &col(&|r| r.x_end[k]))?;
        reports.push(TestReport::p_value(format!("ks rebuilt vs driving w_{k}(1)"), ks, n_samples, KS_THRESHOLD));
    }
    for k in 0..n {
        reports.push(moment_report(format!("B_{k}(1)"), &col(&|r| r.b_end[k]), 0.0, 1.0));
        for l in k + 1..n {
            reports.push(corr_report(format!("corr B_{k}(1),B_{l}(1)"), &col(&|r| r.b_end[k]), &col(&|r| r.b_end[l])));
        }
    }
    for k in 1..n {
        for u in 0..n {
            reports.push(corr_report(format!("corr B_{k}(1),y_{u}(1)"), &col(&|r| r.b_end[k]), &col(&|r| r.y_end[u])));
        }
    }
    Ok(reports)
}

pub fn conditioning_scenarios() -> [Scenario; 2] {
    let grid = GridSpec::new(1e-3, 1.0).unwrap();
    [
        Scenario::new(MassPartition::new(vec![0.5, 0.5]).unwrap(), StepVector(vec![0.0, 1.0]), grid).unwrap(),
        Scenario::new(MassPartition::new(vec![0.2, 0.3, 0.5]).unwrap(), StepVector(vec![0.0, 0.5, 1.0]), grid).unwrap(),
    ]
}

fn criterion_7(level: Level, seed: u64) -> CliResult<Vec<TestReport>> {
    let (_, n_samples, _) = sizes(level);
    let mut reports = Vec::new();
    let base = ConditioningConfig {
        eps: 0.05,
        coal_deadline: 0.8,
        window: 1.0,
        n_target: n_samples,
        max_draws: 1_000_000,
        probe_times: vec![0.25, 0.5, 0.9],
        seed,
        sampler: Sampler::TubeConditioned,
        tube_nodes: 512,
        batch: 1024,
    };
    for sc in conditioning_scenarios() {
        let (cond, _, mut r) = condition_reports(&sc, &base)?;
        for rep in &mut r {
            rep.name = format!("n={} {}", sc.n(), rep.name);
        }
        reports.extend(r);
        reports.push(
            gap(format!("n={} accepted samples short of target", sc.n()), (n_samples - cond.samples.len()) as f64, cond.samples.len(), 0.5)
                .with_note(format!("log acceptance {:.3}", cond.log_acceptance)),
        );
    }
    // the tube sampler against literal rejection where the latter is feasible
    let [two, _] = conditioning_scenarios();
    let wide = ConditioningConfig {
        eps: 1.0,
        n_target: n_samples / 2,
        seed: seed ^ 0xe5,
        ..base
    };
    let tube = mmaf_core::conditioning::epsilon_conditioned_ensemble(&two, &wide)?;
    let rejection = mmaf_core::conditioning::epsilon_conditioned_ensemble(&two, &ConditioningConfig { sampler: Sampler::Rejection, ..wide })?;
    reports.extend(ks_reports("eps=1 rejection vs tube", &rejection, &tube, true)?);
    Ok(reports)
}

fn criterion_8(level: Level, seed: u64) -> CliResult<Vec<TestReport>> {
    let (_, n_samples, _) = sizes(level);
    let [_, three] = conditioning_scenarios();
    let probes = [(1, 0.5), (1, 1.0), (2, 0.5), (2, 1.0)];
    Ok(direction_reports(&three, &[1, 2, 4, 8, 16], false, &probes, n_samples, seed, &[0.5, 1.0])?.reports)
}

fn criterion_9(level: Level, seed: u64) -> CliResult<Vec<TestReport>> {
    let (_, _, n_samples) = sizes(level);
    let alphas = [0.5, 2.0, 8.0, 32.0];
    let pairs = [(0.0, 0.1), (0.25, 0.5), (0.0, 1.0), (0.5, 1.0), (0.9, 1.0)];
    let dt = 1e-3;
    let len = 1001;
    let rows = par_samples(n_samples, |i| {
        let mut rng = stream(seed, Purpose::Ornstein, i);
        alphas
            .iter()
            .map(|&a| {
                let p = ou_path_with(a, 2.0, dt, len, &mut rng).unwrap();
                pairs
                    .iter()
                    .map(|&(s, t)| (p.values[(t / dt).round() as usize] - p.values[(s / dt).round() as usize]).powi(2))
                    .collect::<Vec<f64>>()
            })
            .collect::<Vec<_>>()
    });
    let mut reports = Vec::new();
    for (ai, &a) in alphas.iter().enumerate() {
        for (pi, &(s, t)) in pairs.iter().enumerate() {
            let sq: Vec<f64> = rows.iter().map(|r| r[ai][pi]).collect();
            let (mean, se) = mean_se(&sq);
            let bound = (1.0 / a).min(t - s);
            let z = (mean - bound) / se;
            reports.push(
                TestReport::new(format!("ou alpha={a} E[(xi({t})-xi({s}))^2] <= bound"), ReportKind::Gap, mean, z, n_samples, 3.0)
                    .with_note(format!("bound {bound:.4}, mean {mean:.4}, se {se:.2e}")),
            );
        }
    }
    Ok(reports)
}

fn criterion_10(level: Level, seed: u64) -> CliResult<Vec<TestReport>> {
    let (_, _, n_samples) = sizes(level);
    let mut reports = Vec::new();
    for (i, z0) in [0.0, 0.7].into_iter().enumerate() {
        reports.extend(bridge_reports(1e-3, z0, n_samples, seed ^ i as u64)?.1);
    }
    Ok(reports)
}

/// Runs criteria `1..=10` in `ids` at `level`.
pub fn run_criteria(level: Level, seed: u64, ids: &[u8]) -> CliResult<Vec<CriterionResult>> {
    ids.iter()
        .map(|&id| {
            let s = criterion_seed(seed, id);
            let reports = match id {
                1 => criterion_1(level, s)?,
                2 => criterion_2(level, s)?,
                3 => criterion_3(level, s)?,
                4 => criterion_4(level, s)?,
                5 => criterion_5(level, s)?,
                6 => criterion_6(level, s)?,
                7 => criterion_7(level, s)?,
                8 => criterion_8(level, s)?,
                9 => criterion_9(level, s)?,
                10 => criterion_10(level, s)?,
                11 => return reproducibility(seed, 1, 3),
                other => panic!("unknown criterion {other}"),
            };
            Ok(CriterionResult::new(id, reports))
        })
        .collect()
}

/// Criterion 11: the smoke suite serialised under two worker pools must be
/// byte-identical.
pub fn reproducibility(seed: u64, workers_a: usize, workers_b: usize) -> CliResult<CriterionResult> {
    let ids: Vec<u8> = (1..=10).collect();
    let run = |workers: usize| -> CliResult<Vec<u8>> {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build().expect("thread pool");
        let results = pool.install(|| run_criteria(Level::Smoke, seed, &ids))?;
        Ok(serde_json::to_vec_pretty(&results).expect("reports serialise"))
    };
    let a = run(workers_a)?;
    let b = run(workers_b)?;
    let differ = usize::from(a != b);
    Ok(CriterionResult::new(
        11,
        vec![gap(format!("smoke reports differ between {workers_a} and {workers_b} workers"), differ as f64, 2, 0.5)
            .with_note(format!("{} bytes", a.len()))],
    ))
}
