use serde::{Deserialize, Serialize};

use super::run::{diagnose, RecordedRun};
use super::scenario::{Scenario, Workbench};
use crate::baselines::{timing_harness, Method};
use crate::engine::SENSOR_NAMES;
use crate::error::Result;

/// One method's result on the shared trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub method: Method,
    /// Detection time of each injected fault, `None` when missed.
    pub fdt_s: Vec<Option<f64>>,
    pub false_alarm: bool,
    pub classification: Option<String>,
    pub healthy_residual_mean_pct: [f64; 5],
    /// Median healthy-mode filter time, when timing was requested.
    pub timing_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub faults: Vec<String>,
    pub rows: Vec<ComparisonRow>,
}

impl Comparison {
    pub fn row(&self, method: Method) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.method == method)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("method");
        for f in &self.faults {
            out.push_str(&format!(",fdt_{f}_s"));
        }
        out.push_str(",false_alarm,classification");
        for s in SENSOR_NAMES {
            out.push_str(&format!(",mean_{s}_pct"));
        }
        out.push_str(",timing_s\n");
        for r in &self.rows {
            out.push_str(&r.method.to_string());
            for f in &r.fdt_s {
                out.push_str(&f.map_or(",".into(), |v| format!(",{v:.2}")));
            }
            out.push_str(&format!(",{},{}", r.false_alarm, r.classification.as_deref().unwrap_or("none")));
            for m in r.healthy_residual_mean_pct {
                out.push_str(&format!(",{m:.5}"));
            }
            out.push_str(&r.timing_s.map_or(",".into(), |t| format!(",{t:.4}")));
            out.push('\n');
        }
        out
    }
}

/// Diagnoses one recorded trace with each method; `timing_reps > 0` also times the
/// healthy-mode filters.
pub fn compare(
    wb: &Workbench,
    sc: &Scenario,
    run: &RecordedRun,
    methods: &[Method],
    timing_reps: usize,
) -> Result<Comparison> {
    let mut rows = Vec::with_capacity(methods.len());
    for &m in methods {
        let out = diagnose(wb, sc, run, m)?;
        let timing_s = if timing_reps > 0 {
            Some(timing_harness(wb, run, m, sc.online_gains, timing_reps)?.median_s)
        } else {
            None
        };
        rows.push(ComparisonRow {
            method: m,
            fdt_s: out.faults.iter().map(|f| f.fdt_s).collect(),
            false_alarm: out.false_alarm,
            classification: out.classification.map(|s| SENSOR_NAMES[s - 1].to_string()),
            healthy_residual_mean_pct: out.healthy_residual_mean_pct,
            timing_s,
        });
    }
    Ok(Comparison { faults: run.faults.iter().map(|f| SENSOR_NAMES[f.channel()].to_string()).collect(), rows })
}
