//! End-to-end behaviour on simulated missions.

use std::sync::OnceLock;

use mmhkf_core::baselines::{timing_harness, Method};
use mmhkf_core::config::Config;
use mmhkf_core::engine::HealthFactors;
use mmhkf_core::fusion::WeightConfig;
use mmhkf_core::harness::io::{read_trace, write_trace};
use mmhkf_core::harness::{
    diagnose, fdt_table, monte_carlo, run_scenario, simulate, Campaign, FaultSpec, FdtSpec, Scenario, SensorRef, Workbench,
};
use mmhkf_core::hkf::{AnchorKind, CovarianceMode, FilterBank, Hypothesis, PwlSource};
use mmhkf_core::mm_fdi::Status;

fn wb() -> &'static Workbench {
    static WB: OnceLock<Workbench> = OnceLock::new();
    WB.get_or_init(|| Workbench::new(Config::default()).unwrap())
}

fn degraded() -> HealthFactors {
    HealthFactors::new(0.96, 0.96, 0.96, 0.96)
}

fn fault(sensor: &str, severity_pct: f64, onset_s: f64) -> FaultSpec {
    FaultSpec { sensor: SensorRef::Name(sensor.into()), severity_pct, onset_s }
}

#[test]
fn healthy_mission_with_exact_baseline_declares_nothing() {
    let sc = Scenario { plant_health: degraded(), seed: 21, ..Scenario::default() };
    let out = run_scenario(wb(), &sc).unwrap();
    assert_eq!(out.declarations().count(), 0);
    assert_eq!(out.status, Status::Healthy);
}

#[test]
fn cruise_tc_bias_is_isolated_within_8_s() {
    let sc = Scenario { plant_health: degraded(), faults: vec![fault("T_C", 3.0, 250.0)], seed: 4, ..Scenario::default() };
    let out = run_scenario(wb(), &sc).unwrap();
    assert!(matches!(out.status, Status::Isolated { fault } if fault.sensor == 1));
    assert!(!out.false_alarm);
    assert!(out.faults[0].fdt_s.unwrap() <= 8.0);
    let sev = &out.severities[0];
    assert!((sev.bias_pct - 3.0).abs() < 0.15, "bias {}", sev.bias_pct);
    assert!(sev.wmsne_pct < 0.5);
}

#[test]
fn concurrent_faults_escalate_in_order() {
    let sc = Scenario {
        plant_health: degraded(),
        faults: vec![fault("T_C", 6.0, 50.0), fault("N", 5.0, 250.0)],
        hierarchical: Some(true),
        seed: 9,
        ..Scenario::default()
    };
    let out = run_scenario(wb(), &sc).unwrap();
    match out.status {
        Status::ConcurrentIsolated { first, second } => {
            assert_eq!((first.sensor, second.sensor), (1, 3));
            assert!(first.k_ds >= 5_000 && second.k_ds >= 25_000);
        }
        other => panic!("unexpected status {other:?}"),
    }
    let b: Vec<f64> = out.severities.iter().map(|s| s.bias_pct).collect();
    assert!((b[0] - 6.0).abs() < 0.6 && (b[1] - 5.0).abs() < 0.5, "{b:?}");
}

#[test]
fn runs_are_deterministic_per_seed() {
    let sc = Scenario { plant_health: degraded(), faults: vec![fault("P_T", 3.0, 250.0)], seed: 77, ..Scenario::default() };
    let a = run_scenario(wb(), &sc).unwrap();
    let b = run_scenario(wb(), &sc).unwrap();
    assert_eq!(a, b);
    let c = run_scenario(wb(), &Scenario { seed: 78, ..sc }).unwrap();
    assert_ne!(a.healthy_residual_mean_pct, c.healthy_residual_mean_pct);
}

#[test]
fn replayed_trace_gives_the_same_diagnosis() {
    let sc = Scenario { plant_health: degraded(), faults: vec![fault("N", 3.0, 100.0)], seed: 5, ..Scenario::default() };
    let run = simulate(wb(), &sc).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trace.jsonl");
    write_trace(&path, &run).unwrap();
    let back = read_trace(&path).unwrap();
    assert_eq!(back, run);
    assert_eq!(diagnose(wb(), &sc, &back, Method::Mhkf).unwrap(), diagnose(wb(), &sc, &run, Method::Mhkf).unwrap());
}

#[test]
fn campaigns_repeat_exactly_and_never_anticipate_faults() {
    let c = Campaign {
        seed: 31,
        runs: 2,
        onset_s: 20.0,
        duration_s: Some(60.0),
        profile: mmhkf_core::harness::ProfileRef::Constant { mdot_f: 0.25, alt_ft: 16404.2, mach: 0.85, duration_s: 60.0 },
        ..Campaign::default()
    };
    let a = monte_carlo(wb(), &c).unwrap();
    let b = monte_carlo(wb(), &c).unwrap();
    assert_eq!(a.confusion, b.confusion);
    assert_eq!(a.runs, b.runs);
    for r in &a.runs {
        if let Some(k) = r.k_ds {
            assert!(k >= 2_000, "run {} declared at {k}", r.index);
        }
    }
    assert_eq!(a.confusion.total(), 12);
}

#[test]
fn matched_mode_residuals_are_nearly_white_at_cruise() {
    let sc = Scenario { plant_health: degraded(), faults: vec![fault("P_C", 3.0, 250.0)], seed: 12, ..Scenario::default() };
    let run = simulate(wb(), &sc).unwrap();
    let hyps = Hypothesis::single_fault_set(wb().config.diagnosis.bias());
    let fb = FilterBank::new(wb().bank.clone(), hyps, CovarianceMode::Stationary).unwrap();
    let mut src = PwlSource::new(fb, AnchorKind::Obem, WeightConfig::default()).unwrap();
    let mut series = Vec::new();
    for s in &run.samples {
        let (_, fused) = src.step_detailed(s).unwrap();
        if (26_000..35_000).contains(&s.k) {
            series.push(fused[2].gamma);
        }
    }
    for ch in 0..5 {
        let x: Vec<f64> = series.iter().map(|g| g[ch]).collect();
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        let var: f64 = x.iter().map(|v| (v - mean).powi(2)).sum();
        let lag: f64 = x.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum();
        assert!((lag / var).abs() <= 0.1, "channel {ch}: lag-1 autocorrelation {}", lag / var);
    }
}

#[test]
fn healthy_residual_means_favour_the_hybrid_filter() {
    let sc = Scenario { plant_health: degraded(), seed: 7, ..Scenario::default() };
    let mut mlkf_totals = Vec::new();
    for pts in [vec![2], vec![1, 2, 3], vec![0, 1, 2, 3, 4]] {
        let w = wb().with_points(&pts).unwrap();
        let run = simulate(&w, &sc).unwrap();
        let h = diagnose(&w, &sc, &run, Method::Mhkf).unwrap().healthy_residual_mean_pct;
        let l = diagnose(&w, &sc, &run, Method::Mlkf).unwrap().healthy_residual_mean_pct;
        for ch in 0..5 {
            assert!(h[ch].abs() < l[ch].abs(), "L={} channel {ch}: {} vs {}", pts.len(), h[ch], l[ch]);
            assert!(h[ch].abs() < 0.01);
        }
        mlkf_totals.push(l.iter().map(|v| v.abs()).sum::<f64>());
    }
    assert!(mlkf_totals[0] > mlkf_totals[1] && mlkf_totals[1] > mlkf_totals[2], "{mlkf_totals:?}");
}

#[test]
fn hybrid_filter_is_cheaper_than_every_recomputing_method() {
    let sc = Scenario { plant_health: degraded(), duration_s: Some(100.0), seed: 3, ..Scenario::default() };
    let run = simulate(wb(), &sc).unwrap();
    let t = |m, online| timing_harness(wb(), &run, m, online, 5).unwrap().median_s;
    let mhkf = t(Method::Mhkf, false);
    let stored = t(Method::Mlkf, false);
    let online = t(Method::Mlkf, true);
    let nonlinear = [t(Method::Ekf, false), t(Method::Ukf, false), t(Method::Ckf, false)];
    assert!(stored < mhkf, "stored-gain MLKF {stored} vs MHKF {mhkf}");
    assert!(mhkf < online, "MHKF {mhkf} vs online MLKF {online}");
    assert!(nonlinear.iter().all(|n| online < *n), "online MLKF {online} vs {nonlinear:?}");
}

#[test]
fn two_percent_faults_are_the_slowest_to_isolate() {
    let spec = FdtSpec { runs: 1, onsets_s: vec![250.0], ..FdtSpec::default() };
    let table = fdt_table(wb(), &spec).unwrap();
    let fdt = |sev| table.cell(250.0, sev).unwrap().mean_fdt_s.unwrap();
    for sev in [3.0, 4.0, 5.0, 6.0] {
        assert!(fdt(2.0) > fdt(sev), "2%: {} vs {sev}%: {}", fdt(2.0), fdt(sev));
    }
    assert_eq!(table.cells.iter().map(|c| c.misses + c.failures).sum::<usize>(), 0, "{}", table.to_csv());
}
