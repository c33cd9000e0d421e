use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use finmet_core::exec::Execution;
use finmet_core::fieldsolver::{discretize, solve_laplace, DiscretizeOptions, SolverSettings};
use finmet_core::geometry::{build_fin_cross_section, FinGeometry, Material};
use finmet_core::met::{frequency_spread, JunctionSpec};
use finmet_core::resonator::{add_noise, fit_hanger_batch, synthesize_trace, HangerFitOptions, HangerParams};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn monte_carlo(c: &mut Criterion) {
    let spec = JunctionSpec::silicon_reference();
    let mut g = c.benchmark_group("frequency_spread_1e5");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| frequency_spread(&spec, 0.05e-9, 100_000, 1, exec).unwrap())
        });
    }
    g.finish();
}

fn laplace(c: &mut Criterion) {
    let mut fin = FinGeometry::new(200e-9, 1.2e-6);
    fin.pad_width = 0.5e-6;
    let si = Material::silicon();
    let cs = build_fin_cross_section(&fin, &si, &si, 3.0).unwrap();
    let mut g = c.benchmark_group("solve_laplace_fin");
    g.sample_size(10);
    for (name, exec) in MODES {
        let grid = discretize(
            &cs,
            12.5e-9,
            &DiscretizeOptions {
                exec,
                ..Default::default()
            },
        )
        .unwrap();
        let settings = SolverSettings {
            exec,
            ..Default::default()
        };
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| solve_laplace(&grid, &settings).unwrap())
        });
    }
    g.finish();
}

fn hanger_batch(c: &mut Criterion) {
    let traces: Vec<_> = (0..32u64)
        .map(|k| {
            let p = HangerParams {
                a: 0.9,
                theta: 0.3,
                tau: 1e-9,
                ..HangerParams::new(5e9 + k as f64 * 50e6, 1e5, 5e4, 0.1)
            };
            let w = 10.0 * p.linewidth();
            add_noise(&synthesize_trace(&p, p.f_r - w, p.f_r + w, 2001).unwrap(), 2e-3, k)
        })
        .collect();
    let opts = HangerFitOptions::default();
    let mut g = c.benchmark_group("fit_hanger_batch_32");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| fit_hanger_batch(&traces, &opts, exec))
        });
    }
    g.finish();
}

criterion_group!(benches, monte_carlo, laplace, hanger_batch);
criterion_main!(benches);
