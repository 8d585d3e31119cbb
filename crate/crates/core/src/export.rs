//! CSV and JSON writers for paths, events, bases and reports.
//!
//! CSV files start with the schema line [`CSV_HEADER`]. Floats are written in
//! Rust's shortest round-trip form, so equal inputs give byte-equal files.

use std::io::Write;

use serde::Serialize;

use crate::basis::AdaptedBasis;
use crate::error::Result;
use crate::flow::{DrivingPaths, FlowPath};
use crate::remainder::RemainderPath;
use crate::stats::TestReport;

pub const CSV_HEADER: &str = "# mmaf-lab csv v1";

fn block_columns(n: usize) -> String {
    (0..n).map(|k| format!(",b{k}")).collect()
}

/// One row per grid point: `t` and the value of every block.
pub fn write_driving_csv(out: &mut impl Write, x: &DrivingPaths) -> Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    writeln!(out, "t{}", block_columns(x.n()))?;
    for i in 0..x.grid().len() {
        write!(out, "{}", x.grid().time(i))?;
        for v in x.at(i) {
            write!(out, ",{v}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Flow path expanded to blocks, plus the live cluster count.
pub fn write_flow_csv(out: &mut impl Write, y: &FlowPath) -> Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    writeln!(out, "t,clusters{}", block_columns(y.n()))?;
    for i in 0..y.grid().len() {
        write!(out, "{},{}", y.grid().time(i), y.clustering_at(i).len())?;
        for v in y.expanded(i).values() {
            write!(out, ",{v}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct EventLog<'a> {
    n: usize,
    masses: &'a [f64],
    dt: f64,
    horizon: f64,
    coalescence_times: Vec<Option<f64>>,
    events: &'a [crate::flow::CoalescenceEvent],
}

fn finite(t: f64) -> Option<f64> {
    t.is_finite().then_some(t)
}

/// Event log; infinite coalescence times are written as `null`.
pub fn write_events_json(out: &mut impl Write, y: &FlowPath) -> Result<()> {
    let log = EventLog {
        n: y.n(),
        masses: y.partition().masses(),
        dt: y.grid().dt(),
        horizon: y.grid().horizon(),
        coalescence_times: y.coalescence_times().into_iter().map(finite).collect(),
        events: y.events(),
    };
    serde_json::to_writer_pretty(&mut *out, &log)?;
    writeln!(out)?;
    Ok(())
}

#[derive(Serialize)]
struct BasisEntry {
    k: usize,
    tau: Option<f64>,
    a: Option<f64>,
    b: Option<f64>,
    c: Option<f64>,
    values: Vec<f64>,
}

/// Every basis vector with its `τ_k` and generating `(a, b, c)`.
pub fn write_basis_json(out: &mut impl Write, basis: &AdaptedBasis) -> Result<()> {
    let mut entries = vec![BasisEntry {
        k: 0,
        tau: None,
        a: None,
        b: None,
        c: None,
        values: vec![1.0; basis.n()],
    }];
    entries.extend(basis.created().map(|e| BasisEntry {
        k: e.k,
        tau: Some(e.tau),
        a: Some(e.points[0]),
        b: Some(e.points[1]),
        c: Some(e.points[2]),
        values: e.vector.0.clone(),
    }));
    serde_json::to_writer_pretty(&mut *out, &entries)?;
    writeln!(out)?;
    Ok(())
}

/// Rows `(k, s, ξ_k(s))` on the shifted clock.
pub fn write_remainder_csv(out: &mut impl Write, z: &RemainderPath) -> Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    writeln!(out, "k,s,xi")?;
    for c in z.components() {
        for (s, v) in c.path.values.iter().enumerate() {
            writeln!(out, "{},{},{v}", c.k, s as f64 * c.path.dt)?;
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct RemainderHeader {
    taus: Vec<TauEntry>,
    start_defect: f64,
}

#[derive(Serialize)]
struct TauEntry {
    k: usize,
    tau: f64,
    tau_index: usize,
}

pub fn write_remainder_header_json(out: &mut impl Write, z: &RemainderPath) -> Result<()> {
    let header = RemainderHeader {
        taus: z
            .components()
            .map(|c| TauEntry {
                k: c.k,
                tau: c.tau,
                tau_index: c.tau_index,
            })
            .collect(),
        start_defect: z.start_defect(),
    };
    serde_json::to_writer_pretty(&mut *out, &header)?;
    writeln!(out)?;
    Ok(())
}

pub fn write_reports_json(out: &mut impl Write, reports: &[TestReport]) -> Result<()> {
    serde_json::to_writer_pretty(&mut *out, reports)?;
    writeln!(out)?;
    Ok(())
}

/// Reports as an aligned plain-text table.
pub fn format_report_table(reports: &[TestReport]) -> String {
    let width = reports.iter().map(|r| r.name.len()).max().unwrap_or(4).max(4);
    let mut s = format!("{:<width$}  {:>12}  {:>12}  {:>10}  {:>8}  result\n", "name", "statistic", "value", "threshold", "n");
    for r in reports {
        s.push_str(&format!(
            "{:<width$}  {:>12.6}  {:>12.6}  {:>10.4}  {:>8}  {}\n",
            r.name,
            r.statistic,
            r.value,
            r.threshold,
            r.n_samples,
            if r.pass { "PASS" } else { "FAIL" }
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::adapted_basis;
    use crate::flow::solve_flow;
    use crate::grid::GridSpec;
    use crate::remainder::remainder_map;
    use crate::space::{MassPartition, StepVector};

    #[test]
    fn two_particle_exports() {
        let p = MassPartition::new(vec![0.5, 0.5]).unwrap();
        let grid = GridSpec::new(0.25, 1.0).unwrap();
        let g = StepVector(vec![0.0, 1.0]);
        let x = DrivingPaths::from_fn(p, grid, |k, t| if k == 0 { t } else { 1.0 - t });
        let y = solve_flow(&g, &x).unwrap();

        let mut buf = Vec::new();
        write_flow_csv(&mut buf, &y).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines[1], "t,clusters,b0,b1");
        assert_eq!(lines[2], "0,2,0,1");
        assert_eq!(lines[4], "0.5,1,0.5,0.5");

        let mut buf = Vec::new();
        write_events_json(&mut buf, &y).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&buf).unwrap();
        assert_eq!(v["events"][0]["time"], 0.5);
        assert_eq!(v["events"][0]["merge_value"], 0.5);
        assert_eq!(v["coalescence_times"][0], 0.5);

        let mut buf = Vec::new();
        write_basis_json(&mut buf, &adapted_basis(&y)).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&buf).unwrap();
        assert_eq!(v[1]["values"], serde_json::json!([1.0, -1.0]));
        assert_eq!(v[1]["b"], 0.5);

        let z = remainder_map(&y, &x).unwrap();
        let mut buf = Vec::new();
        write_remainder_csv(&mut buf, &z).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.lines().nth(3).unwrap().starts_with("1,0.25,"));
    }
}
