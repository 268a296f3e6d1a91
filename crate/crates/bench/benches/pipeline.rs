use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use mmhkf_core::config::Config;
use mmhkf_core::engine::HealthFactors;
use mmhkf_core::fusion::WeightConfig;
use mmhkf_core::glr::identify;
use mmhkf_core::harness::{metrics, simulate, ConfusionMatrix, FaultSpec, Scenario, SensorRef, Workbench};
use mmhkf_core::hkf::{AnchorKind, CovarianceMode, FilterBank, Hypothesis, PwlSource};
use mmhkf_core::linearize::dare_gain;

fn pipeline(c: &mut Criterion) {
    let wb = Workbench::new(Config::default()).expect("mission workbench");
    let sc = Scenario {
        plant_health: HealthFactors::new(0.96, 0.96, 0.96, 0.96),
        faults: vec![FaultSpec { sensor: SensorRef::Name("P_C".into()), severity_pct: 3.0, onset_s: 250.0 }],
        duration_s: Some(300.0),
        seed: 1,
        ..Scenario::default()
    };
    let run = simulate(&wb, &sc).expect("simulated trace");

    let mut g = c.benchmark_group("pipeline");
    g.bench_function("engine_step", |b| {
        let x = wb.engine.design_state();
        let amb = wb.engine.design_ambient();
        let h = HealthFactors::healthy();
        b.iter(|| wb.engine.step(black_box(&x), &h, 0.25, &amb, 0.01).unwrap())
    });

    let cruise = &wb.bank.models[2];
    g.bench_function("dare_gain", |b| {
        b.iter(|| dare_gain(&cruise.a, &cruise.c, &wb.bank.q, &wb.bank.r, &wb.config.linearize.riccati).unwrap())
    });

    let hyps = Hypothesis::single_fault_set(wb.config.diagnosis.bias());
    let fb = FilterBank::new(wb.bank.clone(), hyps, CovarianceMode::Stationary).unwrap();
    let source = PwlSource::new(fb, AnchorKind::Obem, WeightConfig::default()).unwrap();
    let sample = run.samples[10_000];
    g.bench_function("filter_bank_step", |b| {
        b.iter_batched_ref(|| source.clone(), |s| s.step_detailed(black_box(&sample)).unwrap(), BatchSize::SmallInput)
    });

    let trace = run.trace();
    let window = &trace[25_100..25_500];
    g.bench_function("glr_identify_400", |b| {
        b.iter(|| identify(&wb.bank, black_box(window), &[1], &WeightConfig::default()).unwrap())
    });

    let mut counts = [[0u64; 6]; 6];
    for (i, row) in counts.iter_mut().enumerate() {
        row[i] = 50;
    }
    let cm = ConfusionMatrix::new(counts);
    g.bench_function("metrics", |b| b.iter(|| metrics(black_box(&cm))));
    g.finish();
}

criterion_group!(benches, pipeline);
criterion_main!(benches);
