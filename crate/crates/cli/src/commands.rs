//! The experiment subcommands. Each `*_reports` function is shared with the
//! acceptance suite; the `cmd_*` wrappers add file output.

use std::io::Write;

use mmaf_core::basis::adapted_basis;
use mmaf_core::conditioning::{
    bridge_demo, default_schedule, direct_mmaf_ensemble, epsilon_conditioned_ensemble,
    psi_direction_ensemble, zero_schedule, ConditionedEnsemble, ConditioningConfig, DirectionConfig,
};
use mmaf_core::ensemble::{par_samples, Scenario};
use mmaf_core::export::{
    format_report_table, write_basis_json, write_driving_csv, write_events_json, write_flow_csv,
    write_remainder_csv, write_remainder_header_json, write_reports_json, CSV_HEADER,
};
use mmaf_core::rng::Purpose;
use mmaf_core::stats::{
    ks_two_sample, mean_band, moment_report, realized_cross_qv, realized_qv, rn_diagnostic,
    ReportKind, RnDiagnostic, TestReport,
};
use mmaf_core::{remainder_map, GridSpec};
use serde::Serialize;

use crate::config::ScenarioConfig;
use crate::error::CliResult;
use crate::io::OutDir;

pub const KS_THRESHOLD: f64 = 0.001;
pub const QV_RELATIVE: f64 = 0.05;

fn relative_gap(name: String, realized: &[f64], predicted: &[f64]) -> TestReport {
    let n = realized.len() as f64;
    let r = realized.iter().sum::<f64>() / n;
    let p = predicted.iter().sum::<f64>() / n;
    let gap = (r - p).abs() / p.abs().max(f64::MIN_POSITIVE);
    TestReport::new(name, ReportKind::Gap, r, gap, realized.len(), QV_RELATIVE)
        .with_note(format!("mean realized {r:.6}, mean predicted {p:.6}"))
}

/// Per-sample summary of a flow used by the law checks.
struct LawRecord {
    qv: Vec<f64>,
    qv_pred: Vec<f64>,
    cross: Vec<f64>,
    cross_pred: Vec<f64>,
    probes: Vec<f64>,
    events: usize,
}

#[derive(Debug, Serialize)]
pub struct LawSummary {
    pub n_samples: usize,
    pub mean_events: f64,
    pub fully_coalesced_fraction: f64,
}

/// Martingale mean bands at `probe_times`, quadratic variation of every
/// tagged particle against `∫ ds/m(u,s)`, and joint quadratic variation of
/// every pair against `∫ 1{τ_uv ≤ s} ds/m(u,s)`.
pub fn law_reports(sc: &Scenario, n_samples: usize, seed: u64, probe_times: &[f64]) -> CliResult<(LawSummary, Vec<TestReport>)> {
    let n = sc.n();
    let idx: Vec<usize> = probe_times
        .iter()
        .map(|&t| sc.grid.nearest_index(t))
        .collect::<mmaf_core::Result<_>>()?;
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v))).collect();
    let records = par_samples(n_samples, |i| {
        let (_, y) = sc.sample(seed, Purpose::Driving, i);
        let paths: Vec<_> = (0..n).map(|u| y.block_path(u)).collect();
        LawRecord {
            qv: paths.iter().map(realized_qv).collect(),
            qv_pred: (0..n).map(|u| y.qv_compensator(u)).collect(),
            cross: pairs.iter().map(|&(u, v)| realized_cross_qv(&paths[u], &paths[v]).unwrap()).collect(),
            cross_pred: pairs.iter().map(|&(u, v)| y.cross_qv_compensator(u, v)).collect(),
            probes: idx.iter().flat_map(|&i| paths.iter().map(move |p| p.values[i])).collect(),
            events: y.events().len(),
        }
    });
    let mut reports = Vec::new();
    for (pi, &t) in probe_times.iter().enumerate() {
        for u in 0..n {
            let s: Vec<f64> = records.iter().map(|r| r.probes[pi * n + u]).collect();
            reports.push(mean_band(format!("mean y_{u}({t})"), &s, sc.g.0[u], 3.0));
        }
    }
    for u in 0..n {
        let r: Vec<f64> = records.iter().map(|r| r.qv[u]).collect();
        let p: Vec<f64> = records.iter().map(|r| r.qv_pred[u]).collect();
        reports.push(relative_gap(format!("qv y_{u}"), &r, &p));
    }
    for (pi, &(u, v)) in pairs.iter().enumerate() {
        let r: Vec<f64> = records.iter().map(|r| r.cross[pi]).collect();
        let p: Vec<f64> = records.iter().map(|r| r.cross_pred[pi]).collect();
        reports.push(relative_gap(format!("cross qv y_{u},y_{v}"), &r, &p));
    }
    let summary = LawSummary {
        n_samples,
        mean_events: records.iter().map(|r| r.events as f64).sum::<f64>() / n_samples as f64,
        fully_coalesced_fraction: records.iter().filter(|r| r.events + 1 == n).count() as f64 / n_samples as f64,
    };
    Ok((summary, reports))
}

fn finish(out: &OutDir, cfg: &ScenarioConfig, command: &str, workers: usize, reports: &[TestReport]) -> CliResult<()> {
    out.write_with("reports.json", |w| write_reports_json(w, reports))?;
    out.write_json("resolved_config.json", cfg)?;
    out.write_metadata(command, workers)?;
    print!("{}", format_report_table(reports));
    Ok(())
}

pub fn cmd_simulate(cfg: &ScenarioConfig, out: &OutDir, workers: usize) -> CliResult<Vec<TestReport>> {
    let sc = cfg.scenario();
    for i in 0..cfg.samples.min(3) {
        let (x, y) = sc.sample(cfg.seed, Purpose::Driving, i as u64);
        out.write_with(&format!("flow_{i:03}.csv"), |w| write_flow_csv(w, &y))?;
        out.write_with(&format!("driving_{i:03}.csv"), |w| write_driving_csv(w, &x))?;
        out.write_with(&format!("events_{i:03}.json"), |w| write_events_json(w, &y))?;
        out.write_with(&format!("basis_{i:03}.json"), |w| write_basis_json(w, &adapted_basis(&y)))?;
        let xi = remainder_map(&y, &x)?;
        out.write_with(&format!("remainder_{i:03}.csv"), |w| write_remainder_csv(w, &xi))?;
        out.write_with(&format!("remainder_{i:03}.json"), |w| write_remainder_header_json(w, &xi))?;
    }
    let (summary, reports) = law_reports(&sc, cfg.samples, cfg.seed, &cfg.probe_times)?;
    let qv: Vec<TestReport> = reports.iter().filter(|r| r.name.contains("qv")).cloned().collect();
    out.write_with("qv_report.json", |w| write_reports_json(w, &qv))?;
    out.write_json(
        "summary.json",
        &serde_json::json!({ "scenario_hash": cfg.hash(), "seed": cfg.seed, "law": summary }),
    )?;
    finish(out, cfg, "simulate", workers, &reports)?;
    Ok(reports)
}

pub fn conditioning_config(cfg: &ScenarioConfig) -> ConditioningConfig {
    ConditioningConfig {
        eps: cfg.condition.eps,
        coal_deadline: cfg.condition.coal_deadline,
        window: cfg.condition.window,
        n_target: cfg.samples,
        max_draws: cfg.condition.max_draws,
        probe_times: cfg.probe_times.clone(),
        seed: cfg.seed,
        sampler: cfg.condition.sampler,
        tube_nodes: cfg.condition.tube_nodes,
        batch: 1024,
    }
}

/// KS of one ensemble's `w` marginals against another's `y` marginals, per
/// probe time and block.
pub fn ks_reports(label: &str, a: &ConditionedEnsemble, b: &ConditionedEnsemble, use_w_b: bool) -> CliResult<Vec<TestReport>> {
    let mut reports = Vec::new();
    for (pi, t) in a.probe_times.iter().enumerate() {
        for u in 0..a.n {
            let sa = a.w_marginal(pi, u);
            let sb = if use_w_b { b.w_marginal(pi, u) } else { b.y_marginal(pi, u) };
            let ks = ks_two_sample(&sa, &sb)?;
            reports.push(TestReport::p_value(format!("{label} ks b{u} t={t}"), ks, sa.len().min(sb.len()), KS_THRESHOLD));
        }
    }
    Ok(reports)
}

/// ε-conditioned ensemble against directly simulated flows conditioned on
/// the same coalescence deadline.
pub fn condition_reports(
    sc: &Scenario,
    cc: &ConditioningConfig,
) -> CliResult<(ConditionedEnsemble, ConditionedEnsemble, Vec<TestReport>)> {
    let cond = epsilon_conditioned_ensemble(sc, cc)?;
    let reference = direct_mmaf_ensemble(sc, Some(cc.coal_deadline), cc.n_target, cc.max_draws, &cc.probe_times, cc.seed)?;
    let mut reports = ks_reports("conditioned vs mmaf", &cond, &reference, false)?;
    reports.push(
        TestReport::new("rebuilt paths pass literal test", ReportKind::Gap, cond.sanity_mismatches as f64, cond.sanity_mismatches as f64, cond.samples.len(), 0.5)
            .with_note("count of tube samples whose rebuilt path fails the ball or deadline test"),
    );
    Ok((cond, reference, reports))
}

fn write_probes(out: &OutDir, name: &str, e: &ConditionedEnsemble) -> CliResult<()> {
    out.write_with(name, |w| {
        writeln!(w, "{CSV_HEADER}")?;
        write!(w, "index,rho")?;
        for t in &e.probe_times {
            for u in 0..e.n {
                write!(w, ",w{u}@{t}")?;
            }
        }
        for t in &e.probe_times {
            for u in 0..e.n {
                write!(w, ",y{u}@{t}")?;
            }
        }
        writeln!(w)?;
        for s in &e.samples {
            write!(w, "{},{}", s.index, s.rho)?;
            for v in s.w.iter().chain(&s.y) {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    })
}

#[derive(Serialize)]
struct EnsembleSummary<'a> {
    label: &'a str,
    n_samples: usize,
    draws_examined: usize,
    first_stage_rate: f64,
    acceptance_rate: f64,
    log_acceptance: f64,
    partial: bool,
    tube_log_survival: Option<f64>,
    sanity_mismatches: usize,
}

fn summarize(e: &ConditionedEnsemble) -> EnsembleSummary<'_> {
    EnsembleSummary {
        label: &e.descriptor.label,
        n_samples: e.samples.len(),
        draws_examined: e.draws_examined,
        first_stage_rate: e.first_stage_rate,
        acceptance_rate: e.acceptance_rate,
        log_acceptance: e.log_acceptance,
        partial: e.partial,
        tube_log_survival: e.tube_log_survival,
        sanity_mismatches: e.sanity_mismatches,
    }
}

pub fn cmd_condition(cfg: &ScenarioConfig, out: &OutDir, workers: usize) -> CliResult<Vec<TestReport>> {
    let sc = cfg.scenario();
    let cc = conditioning_config(cfg);
    let (cond, reference, reports) = condition_reports(&sc, &cc)?;
    write_probes(out, "probes_conditioned.csv", &cond)?;
    write_probes(out, "probes_reference.csv", &reference)?;
    out.write_json(
        "condition_summary.json",
        &serde_json::json!({
            "scenario_hash": cfg.hash(),
            "sampler": cc.sampler,
            "eps": cc.eps,
            "coal_deadline": cc.coal_deadline,
            "window": cc.window,
            "conditioned": summarize(&cond),
            "reference": summarize(&reference),
        }),
    )?;
    if cond.partial {
        eprintln!("max_draws exhausted: {} of {} samples accepted", cond.samples.len(), cc.n_target);
    }
    finish(out, cfg, "condition", workers, &reports)?;
    Ok(reports)
}

#[derive(Debug, Clone, Serialize)]
pub struct RungSummary {
    pub rung: usize,
    pub mean_d: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DirectionOutcome {
    pub rungs: Vec<RungSummary>,
    pub diagnostics: Vec<((usize, f64), RnDiagnostic)>,
    pub reports: Vec<TestReport>,
}

/// Runs the direction ladder; reports decay of `E[R_j(t)²]` beyond two
/// standard errors per rung, the final-to-first ratio against 0.05, and KS
/// of `w` against `y` marginals at the top rung.
pub fn direction_reports(
    sc: &Scenario,
    ladder: &[usize],
    zero_rates: bool,
    r_probes: &[(usize, f64)],
    n_samples: usize,
    seed: u64,
    probe_times: &[f64],
) -> CliResult<DirectionOutcome> {
    let n = sc.n();
    let mut per_probe: Vec<Vec<(usize, Vec<f64>)>> = vec![Vec::new(); r_probes.len()];
    let mut rungs = Vec::new();
    let mut top = None;
    for &rung in ladder {
        let schedule = if zero_rates {
            zero_schedule(n.saturating_sub(1), rung as f64)
        } else {
            default_schedule(n.saturating_sub(1), rung)?
        };
        let ens = psi_direction_ensemble(
            sc,
            &DirectionConfig {
                schedule,
                n_samples,
                seed,
                r_probes: r_probes.to_vec(),
                probe_times: probe_times.to_vec(),
            },
        )?;
        for (pi, v) in per_probe.iter_mut().enumerate() {
            v.push((rung, ens.r_squared(pi)));
        }
        let d = ens.d_values();
        rungs.push(RungSummary {
            rung,
            mean_d: d.iter().sum::<f64>() / d.len() as f64,
        });
        top = Some(ens);
    }
    let mut reports = Vec::new();
    let mut diagnostics = Vec::new();
    for (&(j, t), rows) in r_probes.iter().zip(&per_probe) {
        let diag = rn_diagnostic(rows);
        if diag.rungs.len() > 1 {
            let worst = diag
                .rungs
                .windows(2)
                .map(|w| (w[1].mean - w[0].mean) + 2.0 * (w[0].se.powi(2) + w[1].se.powi(2)).sqrt())
                .fold(f64::NEG_INFINITY, f64::max);
            reports.push(
                TestReport::new(format!("R_{j}({t})^2 decays by 2 SE per rung"), ReportKind::Gap, worst, worst, n_samples, 0.0)
                    .with_note("value = largest (next − previous + 2 SE); negative means every rung drops"),
            );
            reports.push(TestReport::new(
                format!("R_{j}({t})^2 final/first < 0.05"),
                ReportKind::Gap,
                diag.final_ratio,
                diag.final_ratio,
                n_samples,
                0.05,
            ));
        }
        diagnostics.push(((j, t), diag));
    }
    if let Some(ens) = &top {
        for (pi, t) in probe_times.iter().enumerate() {
            for u in 0..n {
                let w = ens.w_marginal(pi, u);
                let y = ens.y_marginal(pi, u);
                let ks = ks_two_sample(&w, &y)?;
                reports.push(TestReport::p_value(format!("top rung ks w vs y b{u} t={t}"), ks, n_samples, KS_THRESHOLD));
            }
        }
    }
    Ok(DirectionOutcome {
        rungs,
        diagnostics,
        reports,
    })
}

pub fn cmd_directions(cfg: &ScenarioConfig, out: &OutDir, workers: usize) -> CliResult<Vec<TestReport>> {
    let sc = cfg.scenario();
    let d = &cfg.directions;
    let outcome = direction_reports(&sc, &d.ladder, d.zero_rates, &d.r_probes, cfg.samples, cfg.seed, &cfg.probe_times)?;
    out.write_with("rn_diagnostics.csv", |w| {
        writeln!(w, "{CSV_HEADER}")?;
        writeln!(w, "rung,j,t,mean_r2,se,mean_d")?;
        for ((j, t), diag) in &outcome.diagnostics {
            for (r, summary) in diag.rungs.iter().zip(&outcome.rungs) {
                writeln!(w, "{},{j},{t},{},{},{}", r.n, r.mean, r.se, summary.mean_d)?;
            }
        }
        Ok(())
    })?;
    out.write_json("directions_summary.json", &serde_json::json!({ "scenario_hash": cfg.hash(), "outcome": outcome }))?;
    finish(out, cfg, "directions", workers, &outcome.reports)?;
    Ok(outcome.reports)
}

pub fn bridge_times() -> Vec<f64> {
    (1..=10).map(|i| i as f64 / 10.0).collect()
}

/// Mean `t·z0` and variance `t(1−t)` bands below `t = 1`, and the exact endpoint.
pub fn bridge_reports(dt: f64, z0: f64, n_samples: usize, seed: u64) -> CliResult<(mmaf_core::conditioning::BridgeReport, Vec<TestReport>)> {
    let grid = GridSpec::new(dt, 1.0)?;
    let report = bridge_demo(z0, grid, n_samples, seed, &bridge_times())?;
    let mut reports = Vec::new();
    for (i, t) in report.times.iter().enumerate() {
        if *t < 1.0 {
            reports.push(moment_report(
                format!("bridge z0={z0} t={t}"),
                &report.samples[i],
                report.expected_mean[i],
                report.expected_variance[i],
            ));
        }
    }
    reports.push(TestReport::new(
        format!("bridge z0={z0} endpoint exact"),
        ReportKind::Gap,
        report.endpoint_max_error,
        report.endpoint_max_error,
        n_samples,
        f64::MIN_POSITIVE,
    ));
    Ok((report, reports))
}

pub fn cmd_bridge(cfg: &ScenarioConfig, out: &OutDir, workers: usize) -> CliResult<Vec<TestReport>> {
    let (report, reports) = bridge_reports(cfg.dt, cfg.bridge.z0, cfg.samples, cfg.seed)?;
    out.write_json("bridge_report.json", &report)?;
    out.write_with("bridge_curve.csv", |w| {
        writeln!(w, "{CSV_HEADER}")?;
        writeln!(w, "t,mean,variance,expected_mean,expected_variance")?;
        for i in 0..report.times.len() {
            writeln!(
                w,
                "{},{},{},{},{}",
                report.times[i], report.mean[i], report.variance[i], report.expected_mean[i], report.expected_variance[i]
            )?;
        }
        Ok(())
    })?;
    finish(out, cfg, "bridge", workers, &reports)?;
    Ok(reports)
}
