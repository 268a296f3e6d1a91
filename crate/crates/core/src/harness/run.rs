use serde::{Deserialize, Serialize};

use super::scenario::{Scenario, Workbench};
use crate::baselines::{Method, NonlinearBank, NonlinearKind};
use crate::engine::{FaultEvent, HealthFactors, SensorNoise, TrimOptions, SENSOR_NAMES};
use crate::error::{Error, Result};
use crate::glr::{identify, wmsne, TraceSample};
use crate::hkf::{AnchorKind, FilterBank, GainMode, Hypothesis, ObemRunner, PwlSource};
use crate::linalg::Vec5;
use crate::mm_fdi::{DecisionLayer, DiagnosisEvent, EventKind, ResidualSource, Sample, Status};

/// Plant and OBEM signals of one simulated mission, replayable through any method.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordedRun {
    pub dt: f64,
    pub samples: Vec<Sample>,
    pub faults: Vec<FaultEvent>,
    /// Health baselines of the on-board models at the start of the run.
    pub obem_health: HealthFactors,
    /// Trimmed on-board model state at the first sample.
    pub obem_start: crate::engine::EngineState,
    /// Baseline refreshes as `(sample, health)`, sorted.
    pub baseline_updates: Vec<(usize, HealthFactors)>,
}

impl RecordedRun {
    pub fn trace(&self) -> Vec<TraceSample> {
        self.samples.iter().map(|s| TraceSample { y: s.y, y_obem: s.y_obem }).collect()
    }
}

/// Simulates the faulty, noisy plant and the noise-free OBEM over the scenario's profile.
pub fn simulate(wb: &Workbench, sc: &Scenario) -> Result<RecordedRun> {
    sc.validate(&wb.config)?;
    let engine = &wb.engine;
    let dt = wb.dt();
    let profile = sc.flight_profile()?;
    let n = sc.samples(&profile, dt)?;
    let faults = sc.fault_events(engine, dt)?;
    let plant_health = sc.plant_health;
    let obem_health = sc.obem_health()?;
    let scaling = &wb.bank.scaling;

    let p0 = profile.at(profile.start());
    let amb0 = engine.ambient(p0.alt_ft, p0.mach);
    let mut x = engine.trim_with(p0.mdot_f, &amb0, &plant_health, None, TrimOptions::default())?;
    let obem_start = engine.trim_with(p0.mdot_f, &amb0, &obem_health, Some(x), TrimOptions::default())?;
    let mut obem = ObemRunner::new(engine.clone(), obem_start, obem_health)?;

    let mut noise_spec = wb.config.noise.clone();
    noise_spec.scale *= sc.noise_scale;
    let k = &wb.config.constants;
    let mut noise = SensorNoise::new(&noise_spec, &scaling.y_ref, k.t_std, k.p_std, sc.seed);

    let mut updates: Vec<(usize, HealthFactors)> =
        sc.baseline_updates.iter().map(|u| ((u.t_s / dt).round() as usize, u.health)).collect();
    updates.sort_by_key(|u| u.0);
    let mut next_update = 0;

    let mut samples = Vec::with_capacity(n);
    for k in 0..n {
        let t = profile.start() + k as f64 * dt;
        let p = profile.at(t);
        let amb = engine.ambient(p.alt_ft, p.mach);
        let (d_t, d_p) = noise.ambient();
        let amb_plant = amb.perturbed(d_t, d_p);
        while next_update < updates.len() && updates[next_update].0 == k {
            obem.update_baseline(updates[next_update].1)?;
            next_update += 1;
        }
        let y = engine.measure(&x, &plant_health, &amb_plant, &faults, k, Some(&mut noise))?.to_vector();
        let y_obem = obem.output(&amb)?;
        samples.push(Sample { k, y: scaling.y(&y), y_obem: scaling.y(&y_obem), fuel_flow: p.mdot_f, ambient: amb });
        x = engine.step(&x, &plant_health, p.mdot_f, &amb_plant, dt)?;
        obem.step(p.mdot_f, &amb, dt)?;
    }
    Ok(RecordedRun { dt, samples, faults, obem_health, obem_start, baseline_updates: updates })
}

/// Residual source of `method` with the level-1 hypothesis set.
pub fn make_source(
    wb: &Workbench,
    sc: &Scenario,
    method: Method,
    run: &RecordedRun,
    offsets: &[Vec5],
) -> Result<Box<dyn ResidualSource>> {
    let cfg = &wb.config;
    let hyps: Vec<Hypothesis> = offsets.iter().map(|o| Hypothesis { offset: *o }).collect();
    let pwl = |anchor, gains| -> Result<Box<dyn ResidualSource>> {
        let filters = FilterBank::new(wb.bank.clone(), hyps.clone(), cfg.diagnosis.covariance)?.with_gain_mode(gains);
        Ok(Box::new(PwlSource::new(filters, anchor, cfg.diagnosis.weights)?))
    };
    let nonlinear = |kind| -> Result<Box<dyn ResidualSource>> {
        Ok(Box::new(NonlinearBank::new(
            kind,
            wb.engine.clone(),
            run.obem_health,
            wb.bank.scaling.clone(),
            wb.bank.q,
            wb.bank.r,
            &cfg.baselines,
            run.dt,
            &run.obem_start,
            offsets,
        )?))
    };
    match method {
        Method::Mhkf => pwl(AnchorKind::Obem, GainMode::Stored),
        Method::Mlkf => pwl(AnchorKind::Steady, if sc.online_gains { GainMode::Online } else { GainMode::Stored }),
        Method::Ekf => nonlinear(NonlinearKind::Ekf),
        Method::Ukf => nonlinear(NonlinearKind::Ukf(cfg.baselines.sigma_points)),
        Method::Ckf => nonlinear(NonlinearKind::Ckf),
    }
}

/// Detection outcome of one injected fault.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultOutcome {
    pub sensor: String,
    pub onset_k: usize,
    pub severity_pct: f64,
    /// Start of the persistent run that isolated this fault.
    pub k_ds: Option<usize>,
    /// Fault detection time [s].
    pub fdt_s: Option<f64>,
}

/// Estimated bias of one isolated fault and the reconstruction error it leaves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeverityReport {
    pub sensor: String,
    pub k_ds: usize,
    /// Samples in the estimation window.
    pub window: usize,
    /// Percent of the cruise reading.
    pub bias_pct: f64,
    /// Sensor units.
    pub bias: f64,
    pub criterion: f64,
    pub wmsne_pct: f64,
}

/// Per-sample diagnostic series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesRecord {
    pub k: usize,
    pub level: u8,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub probs: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub weights: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub y: Option<[f64; 5]>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub y_obem: Option<[f64; 5]>,
}

/// Everything a diagnosis session produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutput {
    pub name: String,
    pub method: Method,
    pub seed: u64,
    pub dt: f64,
    pub samples: usize,
    pub status: Status,
    pub events: Vec<DiagnosisEvent>,
    pub faults: Vec<FaultOutcome>,
    /// Last isolated sensor (1..=5), `None` when nothing was declared.
    pub classification: Option<usize>,
    /// A declaration named a healthy sensor or preceded the matching onset.
    pub false_alarm: bool,
    pub severities: Vec<SeverityReport>,
    /// Mean of the level-1 healthy-mode residual per channel, percent of the cruise reading.
    pub healthy_residual_mean_pct: [f64; 5],
    pub degenerate_steps: usize,
    #[serde(skip)]
    pub series: Vec<SeriesRecord>,
}

impl RunOutput {
    pub fn declarations(&self) -> impl Iterator<Item = &DiagnosisEvent> {
        self.events.iter().filter(|e| matches!(e.event, EventKind::Isolated | EventKind::Concurrent))
    }
}

fn channel_of(name: &str) -> usize {
    SENSOR_NAMES.iter().position(|s| *s == name).expect("events carry canonical sensor names")
}

/// Runs `method` over a recorded mission.
pub fn diagnose(wb: &Workbench, sc: &Scenario, run: &RecordedRun, method: Method) -> Result<RunOutput> {
    let mut dcfg = wb.config.diagnosis.clone();
    if let Some(h) = sc.hierarchical {
        dcfg.hierarchical = h;
    }
    let probe = DecisionLayer::new(dcfg.clone(), run.dt);
    let mut source = make_source(wb, sc, method, run, &probe.level1_offsets())?;
    let mut layer = DecisionLayer::new(dcfg, source.period());
    let mut sum = Vec5::zeros();
    let mut count = 0usize;
    let mut series = Vec::new();
    let mut next_update = 0;
    for s in &run.samples {
        while next_update < run.baseline_updates.len() && run.baseline_updates[next_update].0 == s.k {
            source.update_baseline(&run.baseline_updates[next_update].1)?;
            next_update += 1;
        }
        let Some(res) = source.step(s)? else { continue };
        if layer.level() == 1 {
            sum += res[0].gamma;
            count += 1;
        }
        let weights = if sc.record.weights { source.weights(0) } else { None };
        if let Some(esc) = layer.observe(s.k, &res)? {
            source.reset_hypotheses(&esc.offsets, Some(esc.seed_mode))?;
        }
        let r = &sc.record;
        if r.probabilities || r.weights || r.signals {
            series.push(SeriesRecord {
                k: s.k,
                level: layer.level(),
                probs: r.probabilities.then(|| layer.probs().to_vec()),
                weights,
                y: r.signals.then(|| s.y.into()),
                y_obem: r.signals.then(|| s.y_obem.into()),
            });
        }
    }
    let mean = if count > 0 { sum / count as f64 } else { Vec5::zeros() };

    let events = layer.events().to_vec();
    let declared: Vec<(usize, usize)> = events
        .iter()
        .filter(|e| matches!(e.event, EventKind::Isolated | EventKind::Concurrent))
        .map(|e| (channel_of(e.sensor.as_deref().unwrap_or_default()), e.k_ds.unwrap_or(e.k)))
        .collect();
    let faults: Vec<FaultOutcome> = run
        .faults
        .iter()
        .map(|f| {
            let k_ds = declared.iter().find(|(ch, k)| *ch == f.channel() && *k >= f.onset).map(|d| d.1);
            FaultOutcome {
                sensor: SENSOR_NAMES[f.channel()].to_string(),
                onset_k: f.onset,
                severity_pct: 100.0 * f.bias / wb.bank.scaling.y_ref[f.channel()],
                k_ds,
                fdt_s: k_ds.map(|k| (k - f.onset) as f64 * run.dt),
            }
        })
        .collect();
    let false_alarm = declared
        .iter()
        .any(|(ch, k)| !run.faults.iter().any(|f| f.channel() == *ch && *k >= f.onset));
    let status = layer.status().clone();
    let classification = match &status {
        Status::Healthy => None,
        Status::Isolated { fault } => Some(fault.sensor),
        Status::ConcurrentIsolated { first, .. } => Some(first.sensor),
    };
    let severities = if method == Method::Mhkf { estimate_severity(wb, run, &status)? } else { Vec::new() };
    Ok(RunOutput {
        name: sc.name.clone(),
        method,
        seed: sc.seed,
        dt: run.dt,
        samples: run.samples.len(),
        status,
        events,
        faults,
        classification,
        false_alarm,
        severities,
        healthy_residual_mean_pct: (mean * 100.0).into(),
        degenerate_steps: layer.degenerate_steps(),
        series,
    })
}

/// Bias estimates and reconstruction errors of the isolated faults.
pub fn estimate_severity(wb: &Workbench, run: &RecordedRun, status: &Status) -> Result<Vec<SeverityReport>> {
    let (first, second) = match status {
        Status::Healthy => return Ok(Vec::new()),
        Status::Isolated { fault } => (*fault, None),
        Status::ConcurrentIsolated { first, second } => (*first, Some(*second)),
    };
    let trace = run.trace();
    let n = trace.len();
    let window = wb.config.diagnosis.glr_window;
    let weights = &wb.config.diagnosis.weights;
    let bank = &wb.bank;
    let y_ref = bank.scaling.y_ref;
    let ch1 = first.sensor - 1;
    let end1 = second.map_or(n, |s| s.k_ds.max(first.k_ds + 1)).min(n);
    let w1 = &trace[first.k_ds..(first.k_ds + window).min(end1)];
    let est1 = identify(bank, w1, &[ch1], weights)?;
    let mut offset1 = Vec5::zeros();
    offset1[ch1] = est1.bias[0];
    let recon1 = wmsne(bank, &trace[first.k_ds..end1], &offset1, weights)?;
    let mut out = vec![SeverityReport {
        sensor: SENSOR_NAMES[ch1].to_string(),
        k_ds: first.k_ds,
        window: w1.len(),
        bias_pct: 100.0 * est1.bias[0],
        bias: est1.bias[0] * y_ref[ch1],
        criterion: est1.criterion,
        wmsne_pct: recon1.percent,
    }];
    if let Some(sec) = second {
        let ch2 = sec.sensor - 1;
        if sec.k_ds >= n {
            return Err(Error::InvalidInput("second isolation after the end of the trace".into()));
        }
        let w2 = &trace[sec.k_ds..(sec.k_ds + window).min(n)];
        let est2 = identify(bank, w2, &[ch1, ch2], weights)?;
        let mut offset2 = Vec5::zeros();
        offset2[ch1] = est2.bias[0];
        offset2[ch2] += est2.bias[1];
        let recon2 = wmsne(bank, &trace[sec.k_ds..], &offset2, weights)?;
        out.push(SeverityReport {
            sensor: SENSOR_NAMES[ch2].to_string(),
            k_ds: sec.k_ds,
            window: w2.len(),
            bias_pct: 100.0 * est2.bias[1],
            bias: est2.bias[1] * y_ref[ch2],
            criterion: est2.criterion,
            wmsne_pct: recon2.percent,
        });
    }
    Ok(out)
}

/// Simulates and diagnoses one scenario with its own method.
pub fn run_scenario(wb: &Workbench, sc: &Scenario) -> Result<RunOutput> {
    let run = simulate(wb, sc)?;
    diagnose(wb, sc, &run, sc.method)
}
