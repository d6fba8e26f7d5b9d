//! Microbenchmarks for the per-velocity-class solvers and the
//! Doppler-averaged slice update that dominate sweep runtimes.

use criterion::{criterion_group, criterion_main, Criterion};

use rydsim::atom::{default_rb85_params, doppler_sigma, mhz, DriveParams, ModulationParams};
use rydsim::liouvillian::build_generators;
use rydsim::medium::{propagate_cp, propagate_mtp, CellConfig};
use rydsim::steady::{solve_cp, solve_floquet, solve_floquet_depth, solve_floquet_reference};
use rydsim::velocity::resolved_grid;

fn table_drive() -> DriveParams {
    DriveParams {
        rabi_probe: mhz(1.32),
        rabi_coupling: mhz(2.38),
        e_rf: 0.2,
        perturbation_factor: 0.54,
        delta_p: mhz(0.5),
        delta_2photon: mhz(0.5),
        delta_rf: mhz(2.0),
    }
}

fn bench_single_class(c: &mut Criterion) {
    let atoms = default_rb85_params();
    let drive = table_drive();
    let modp = ModulationParams::new(mhz(3.0), 0.25).unwrap();
    let gens = build_generators(&atoms, &drive, &modp, 37.0);

    c.bench_function("static_steady_state_16", |b| {
        b.iter(|| solve_cp(std::hint::black_box(&gens)).unwrap())
    });
    c.bench_function("harmonic_balance_adaptive", |b| {
        b.iter(|| solve_floquet(std::hint::black_box(&gens), modp.omega_mod).unwrap())
    });
    c.bench_function("harmonic_balance_depth5", |b| {
        b.iter(|| solve_floquet_depth(std::hint::black_box(&gens), modp.omega_mod, 5).unwrap())
    });
    c.bench_function("harmonic_balance_reference_depth5", |b| {
        b.iter(|| solve_floquet_reference(std::hint::black_box(&gens), modp.omega_mod, 5).unwrap())
    });
}

fn bench_doppler_slice(c: &mut Criterion) {
    let atoms = default_rb85_params();
    let drive = table_drive();
    let modp = ModulationParams::new(mhz(3.0), 0.25).unwrap();
    let grid = resolved_grid(doppler_sigma(&atoms), 1.0).unwrap();
    let cell = CellConfig {
        num_slices: 1,
        density: 6.66e15,
        ..CellConfig::default()
    };

    let mut group = c.benchmark_group("doppler_slice");
    group.sample_size(20);
    group.bench_function("static_slice", |b| {
        b.iter(|| propagate_cp(&cell, &grid, &atoms, std::hint::black_box(&drive)).unwrap())
    });
    group.bench_function("modulated_slice", |b| {
        b.iter(|| {
            propagate_mtp(&cell, &grid, &atoms, std::hint::black_box(&drive), &modp).unwrap()
        })
    });
    group.finish();
}

criterion_group!(benches, bench_single_class, bench_doppler_slice);
criterion_main!(benches);
