use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::Method;
use crate::error::Result;
use crate::harness::{make_source, RecordedRun, Scenario, Workbench};
use crate::hkf::ObemRunner;
use crate::linalg::Vec5;

/// Wall-clock cost of one method's healthy-mode filters over a recorded mission.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub method: Method,
    pub online_gains: bool,
    pub median_s: f64,
    pub min_s: f64,
    pub max_s: f64,
    pub repetitions: Vec<f64>,
}

impl TimingReport {
    pub fn label(&self) -> String {
        if self.online_gains {
            format!("{}-online", self.method)
        } else {
            self.method.to_string()
        }
    }

    /// `(max - min) / median` over the repetitions.
    pub fn spread(&self) -> f64 {
        (self.max_s - self.min_s) / self.median_s
    }
}

fn once(wb: &Workbench, run: &RecordedRun, method: Method, online_gains: bool) -> Result<f64> {
    let sc = Scenario { online_gains, ..Scenario::default() };
    let mut source = make_source(wb, &sc, method, run, &[Vec5::zeros()])?;
    // the hybrid filter pays for its on-board model, which is re-simulated inside the timed loop
    let mut obem = if method == Method::Mhkf {
        Some(ObemRunner::new(wb.engine.clone(), run.obem_start, run.obem_health)?)
    } else {
        None
    };
    let scaling = &wb.bank.scaling;
    let start = Instant::now();
    for s in &run.samples {
        let mut sample = *s;
        if let Some(o) = obem.as_mut() {
            sample.y_obem = scaling.y(&o.output(&s.ambient)?);
            o.step(s.fuel_flow, &s.ambient, run.dt)?;
        }
        std::hint::black_box(source.step(&sample)?);
    }
    Ok(start.elapsed().as_secs_f64())
}

/// Median of `repetitions` (at least 5) timed passes after one warm-up pass.
pub fn timing_harness(
    wb: &Workbench,
    run: &RecordedRun,
    method: Method,
    online_gains: bool,
    repetitions: usize,
) -> Result<TimingReport> {
    let reps = repetitions.max(5);
    once(wb, run, method, online_gains)?;
    let mut times = (0..reps).map(|_| once(wb, run, method, online_gains)).collect::<Result<Vec<_>>>()?;
    let repetitions = times.clone();
    times.sort_by(f64::total_cmp);
    let median_s = if reps % 2 == 1 { times[reps / 2] } else { 0.5 * (times[reps / 2 - 1] + times[reps / 2]) };
    Ok(TimingReport { method, online_gains, median_s, min_s: times[0], max_s: times[reps - 1], repetitions })
}
