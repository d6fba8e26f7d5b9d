//! Browser bindings: thin wasm-bindgen wrappers over the simulator core for
//! the interactive page in `www/`. Each entry point builds a scene from
//! plain numbers, runs the sweep synchronously, and returns a typed array,
//! so the page needs no framework and no shared state on this side.

use wasm_bindgen::prelude::*;

use rydsim::analysis::{linspace, response_curve, spectrum, Protocol, Scene};
use rydsim::atom::{default_rb85_params, doppler_sigma, mhz, DriveParams, ModulationParams};
use rydsim::medium::{calibrate_density, CellConfig};
use rydsim::velocity::resolved_grid;

/// Calibrated vapor density (cm⁻³) of the default cell: the coupling-off
/// resonant transmission of the default probe equals 0.34. Re-derive with
/// [`calibrate_cell`] after changing the cell or fidelity settings.
pub const DEFAULT_DENSITY_PER_CM3: f64 = 6.810817839259301e9;

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn cell(density_per_cm3: f64, num_slices: u32) -> CellConfig {
    CellConfig {
        length: 0.075,
        num_slices: num_slices as usize,
        density: density_per_cm3 * 1e6,
        euler_update: false,
        attenuate_sidebands: true,
    }
}

/// Scene around the default Rb-85 ladder and probe/coupling drive, with the
/// knobs the page exposes. `velocity_resolution` trades Doppler-averaging
/// accuracy for speed (1.0 is production fidelity).
#[allow(clippy::too_many_arguments)]
fn scene(
    e_rf: f64,
    delta_rf_mhz: f64,
    omega_mod_mhz: f64,
    beta: f64,
    density_per_cm3: f64,
    velocity_resolution: f64,
    num_slices: u32,
) -> Result<Scene, String> {
    let atoms = default_rb85_params();
    let grid = resolved_grid(doppler_sigma(&atoms), velocity_resolution).map_err(err)?;
    let scene = Scene {
        drive: DriveParams {
            rabi_probe: mhz(1.32),
            rabi_coupling: mhz(2.38),
            e_rf,
            perturbation_factor: 0.54,
            delta_p: 0.0,
            delta_2photon: 0.0,
            delta_rf: mhz(delta_rf_mhz),
        },
        modulation: ModulationParams::new(mhz(omega_mod_mhz), beta).map_err(err)?,
        cell: cell(density_per_cm3, num_slices),
        grid,
        atoms,
    };
    scene.validate().map_err(err)?;
    Ok(scene)
}

/// Probe-detuning sweep of the chosen protocol's observable: transparency
/// for "cp", demodulated relative modulation amplitude for "mtp". Returns
/// the observable at `points` detunings spanning [min, max] MHz.
#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn probe_spectrum(
    protocol: &str,
    e_rf: f64,
    delta_rf_mhz: f64,
    omega_mod_mhz: f64,
    beta: f64,
    min_mhz: f64,
    max_mhz: f64,
    points: u32,
    density_per_cm3: f64,
    velocity_resolution: f64,
    num_slices: u32,
) -> Result<Vec<f64>, String> {
    let protocol: Protocol = protocol.parse().map_err(err)?;
    let scene = scene(
        e_rf,
        delta_rf_mhz,
        omega_mod_mhz,
        beta,
        density_per_cm3,
        velocity_resolution,
        num_slices,
    )?;
    if points < 2 {
        return Err(err("need at least 2 points"));
    }
    let axis = linspace(min_mhz, max_mhz, points as usize);
    let result = spectrum(&scene, protocol, &axis).map_err(err)?;
    Ok(result.values)
}

/// RF-field sweep at fixed RF detuning: the protocol's observable at
/// `points` field amplitudes spanning [0, e_max] V/m.
#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn rf_response(
    protocol: &str,
    delta_rf_mhz: f64,
    omega_mod_mhz: f64,
    beta: f64,
    e_max: f64,
    points: u32,
    density_per_cm3: f64,
    velocity_resolution: f64,
    num_slices: u32,
) -> Result<Vec<f64>, String> {
    let protocol: Protocol = protocol.parse().map_err(err)?;
    let scene = scene(
        0.0,
        delta_rf_mhz,
        omega_mod_mhz,
        beta,
        density_per_cm3,
        velocity_resolution,
        num_slices,
    )?;
    if points < 2 {
        return Err(err("need at least 2 points"));
    }
    let axis = linspace(0.0, e_max, points as usize);
    let result = response_curve(&scene, protocol, scene.drive.delta_rf, &axis).map_err(err)?;
    Ok(result.values)
}

/// Root-finds the vapor density at which the coupling-off resonant probe
/// transmission equals `target`. Returns
/// `[density_per_cm3, transmission, max_slice_field_absorption, iterations]`.
#[wasm_bindgen]
pub fn calibrate_cell(
    target: f64,
    velocity_resolution: f64,
    num_slices: u32,
) -> Result<Vec<f64>, String> {
    let atoms = default_rb85_params();
    let grid = resolved_grid(doppler_sigma(&atoms), velocity_resolution).map_err(err)?;
    let drive = DriveParams {
        rabi_probe: mhz(1.32),
        rabi_coupling: mhz(2.38),
        e_rf: 0.0,
        perturbation_factor: 0.54,
        delta_p: 0.0,
        delta_2photon: 0.0,
        delta_rf: 0.0,
    };
    let report = calibrate_density(
        &cell(DEFAULT_DENSITY_PER_CM3, num_slices),
        &grid,
        &atoms,
        &drive,
        target,
    )
    .map_err(err)?;
    Ok(vec![
        report.density / 1e6,
        report.transmission,
        report.max_slice_field_absorption,
        report.iterations as f64,
    ])
}
