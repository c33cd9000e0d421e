use finmet_core::exec::Execution;
use finmet_core::fieldsolver::{
    capacitance_per_length, discretize, solve_laplace, CapacitanceOptions, DiscretizeOptions, SolverSettings,
};
use finmet_core::geometry::{build_fin_cross_section, FinGeometry, Material};

fn small_fin(t: f64, h: f64) -> FinGeometry {
    let mut fin = FinGeometry::new(t, h);
    fin.pad_width = 0.5e-6;
    fin.nitride_cap = None;
    fin
}

fn c_per_length(fin: &FinGeometry, barrier_eps: f64) -> f64 {
    let barrier = Material::new("barrier", barrier_eps);
    let cs = build_fin_cross_section(fin, &Material::silicon(), &barrier, 3.0).unwrap();
    capacitance_per_length(
        &cs,
        &[fin.thickness / 8.0, fin.thickness / 16.0],
        &CapacitanceOptions::default(),
    )
    .unwrap()
    .c_per_length
}

fn strictly_increasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] > w[0])
}

#[test]
fn increases_with_barrier_permittivity() {
    let fin = small_fin(200e-9, 1.2e-6);
    let c: Vec<f64> = [4.0, 7.5, 11.7].iter().map(|&e| c_per_length(&fin, e)).collect();
    assert!(strictly_increasing(&c), "{c:?}");
}

#[test]
fn increases_with_height() {
    let c: Vec<f64> = [0.8e-6, 1.0e-6, 1.2e-6]
        .iter()
        .map(|&h| c_per_length(&small_fin(200e-9, h), 11.7))
        .collect();
    assert!(strictly_increasing(&c), "{c:?}");
}

#[test]
fn decreases_with_thickness() {
    let c: Vec<f64> = [250e-9, 200e-9, 150e-9]
        .iter()
        .map(|&t| c_per_length(&small_fin(t, 1.2e-6), 11.7))
        .collect();
    assert!(strictly_increasing(&c), "{c:?}");
}

/// On this stencil the two estimates coincide once the system is solved, so
/// "shrinks under refinement" is checked with a round-off allowance.
#[test]
fn energy_and_charge_gap_stays_at_round_off_under_refinement() {
    let cs = build_fin_cross_section(
        &small_fin(200e-9, 0.8e-6),
        &Material::silicon(),
        &Material::new("barrier", 4.0),
        3.0,
    )
    .unwrap();
    let r = capacitance_per_length(&cs, &[25e-9, 12.5e-9, 6.25e-9], &CapacitanceOptions::default()).unwrap();
    let gaps: Vec<f64> = r.values_per_grid.iter().map(|g| g.method_gap()).collect();
    assert!(gaps.iter().all(|&g| g < 1e-9), "{gaps:?}");
    for w in gaps.windows(2) {
        assert!(w[1] <= w[0] + 1e-12, "{gaps:?}");
    }
}

#[test]
fn residual_history_is_bit_identical_across_execution_modes() {
    let si = Material::silicon();
    let cs = build_fin_cross_section(&small_fin(200e-9, 1.2e-6), &si, &si, 3.0).unwrap();
    let histories: Vec<Vec<u64>> = [Execution::Sequential, Execution::Parallel, Execution::Parallel]
        .into_iter()
        .map(|exec| {
            let grid = discretize(
                &cs,
                12.5e-9,
                &DiscretizeOptions {
                    exec,
                    ..Default::default()
                },
            )
            .unwrap();
            let field = solve_laplace(
                &grid,
                &SolverSettings {
                    exec,
                    ..Default::default()
                },
            )
            .unwrap();
            field.residual_history.iter().map(|r| r.to_bits()).collect()
        })
        .collect();
    assert!(!histories[0].is_empty());
    assert_eq!(histories[0], histories[1]);
    assert_eq!(histories[1], histories[2]);
}
