//! Trends the simulated engine does not reproduce. Each is kept as an ignored test so the
//! gap stays measurable: `cargo test --release -p mmhkf-core --test reported_trends -- --ignored`.

use mmhkf_core::baselines::{timing_harness, Method};
use mmhkf_core::config::Config;
use mmhkf_core::engine::HealthFactors;
use mmhkf_core::harness::{fdt_table, monte_carlo, simulate, Campaign, FdtSpec, Scenario, Workbench};

fn wb() -> Workbench {
    Workbench::new(Config::default()).unwrap()
}

#[test]
#[ignore = "with 20x sensor noise the bank alarms on most healthy runs"]
fn twentyfold_noise_keeps_accuracy_above_90_percent() {
    let c = Campaign { seed: 4000, runs: 20, noise_scale: 20.0, ..Campaign::default() };
    let r = monte_carlo(&wb(), &c).unwrap();
    let acc = r.metrics.acc.value().unwrap();
    assert!(acc >= 0.9, "ACC {acc}, FPR {}", r.metrics.fpr);
}

#[test]
#[ignore = "isolation takes one or two samples at every operating point"]
fn cruise_faults_are_isolated_faster_than_climb_and_landing() {
    let spec = FdtSpec { runs: 3, severities_pct: vec![3.0], ..FdtSpec::default() };
    let t = fdt_table(&wb(), &spec).unwrap();
    let fdt = |onset| t.cell(onset, 3.0).unwrap().mean_fdt_s.unwrap();
    assert!(fdt(250.0) < fdt(50.0) && fdt(250.0) < fdt(450.0), "{}", t.to_csv());
}

#[test]
#[ignore = "larger biases reach the persistence threshold sooner, not later"]
fn detection_time_grows_from_3_to_6_percent() {
    let spec = FdtSpec { runs: 3, onsets_s: vec![250.0], severities_pct: vec![3.0, 4.0, 5.0, 6.0], ..FdtSpec::default() };
    let t = fdt_table(&wb(), &spec).unwrap();
    let fdt: Vec<f64> = [3.0, 4.0, 5.0, 6.0].iter().map(|s| t.cell(250.0, *s).unwrap().mean_fdt_s.unwrap()).collect();
    assert!(fdt.windows(2).all(|w| w[0] < w[1]), "{}", t.to_csv());
}

#[test]
#[ignore = "EKF, UKF and CKF cost the same here since the engine step dominates"]
fn ekf_is_cheaper_than_the_sigma_point_filters() {
    let w = wb();
    let sc = Scenario { plant_health: HealthFactors::new(0.96, 0.96, 0.96, 0.96), duration_s: Some(100.0), seed: 3, ..Scenario::default() };
    let run = simulate(&w, &sc).unwrap();
    let t = |m| timing_harness(&w, &run, m, false, 5).unwrap().median_s;
    let (ekf, ukf, ckf) = (t(Method::Ekf), t(Method::Ukf), t(Method::Ckf));
    assert!(ekf < ckf && ekf < ukf, "EKF {ekf} UKF {ukf} CKF {ckf}");
    assert!((ckf - ukf).abs() / ukf < 0.1, "UKF {ukf} CKF {ckf}");
}
