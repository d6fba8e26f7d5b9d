//! Run configuration: TOML schema, defaults, dotted-path overrides, and
//! conversion into the core simulation types.
//!
//! Configuration units follow the lab presentation: frequencies and rates in
//! MHz (ν = ω/2π), fields in V/m, lengths in cm, wavelengths in nm, dipoles
//! in e·a₀, densities in cm⁻³. The key suffix names the unit.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use rydsim::analysis::{
    linspace, Protocol, Scene, DEFAULT_SLOPE_WINDOW, DEFAULT_SMALL_FIELD_E_RF,
};
use rydsim::atom::{doppler_sigma, ea0, mhz, AtomicParams, DriveParams, ModulationParams, AMU};
use rydsim::medium::CellConfig;
use rydsim::velocity::{resolved_grid, VelocityGrid};

/// Failure while assembling the run configuration; always maps to exit 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for ConfigError {}

type CfgResult<T> = std::result::Result<T, ConfigError>;

fn cfg_err<T>(msg: impl Into<String>) -> CfgResult<T> {
    Err(ConfigError(msg.into()))
}

/// Atomic-structure overrides; defaults reproduce the built-in Rb-85 ladder.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AtomsConfig {
    pub dipole_12_ea0: f64,
    pub dipole_23_ea0: f64,
    pub dipole_34_ea0: f64,
    /// Γ₂/2π: intermediate-state decay (MHz).
    pub gamma_2_mhz: f64,
    pub gamma_3_mhz: f64,
    pub gamma_4_mhz: f64,
    /// γ_t/2π: transit dephasing/loss (MHz).
    pub transit_mhz: f64,
    /// γ_in/2π: ground-state refill (MHz); physically equals transit_mhz.
    pub feed_mhz: f64,
    pub mass_amu: f64,
    pub lambda_probe_nm: f64,
    pub lambda_coupling_nm: f64,
    pub temperature_k: f64,
}

impl Default for AtomsConfig {
    fn default() -> Self {
        Self {
            dipole_12_ea0: 1.96,
            dipole_23_ea0: 0.01,
            dipole_34_ea0: 2272.4,
            gamma_2_mhz: 6.050,
            gamma_3_mhz: 0.002,
            gamma_4_mhz: 0.002,
            transit_mhz: 0.650,
            feed_mhz: 0.650,
            mass_amu: 84.911_789_738,
            lambda_probe_nm: 780.0,
            lambda_coupling_nm: 480.0,
            temperature_k: 293.15,
        }
    }
}

/// Optical and RF drive at the cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DriveConfig {
    /// Ω_p/2π (MHz).
    pub rabi_probe_mhz: f64,
    /// Ω_c/2π (MHz), total coupling power before the modulation split.
    pub rabi_coupling_mhz: f64,
    /// RF amplitude outside the cell (V/m).
    pub e_rf_v_per_m: f64,
    /// Field reduction inside the cell, ∈ (0, 1].
    pub perturbation_factor: f64,
    pub delta_p_mhz: f64,
    pub delta_2photon_mhz: f64,
    pub delta_rf_mhz: f64,
}

impl Default for DriveConfig {
    fn default() -> Self {
        Self {
            rabi_probe_mhz: 1.32,
            rabi_coupling_mhz: 2.38,
            e_rf_v_per_m: 0.0,
            perturbation_factor: 0.54,
            delta_p_mhz: 0.0,
            delta_2photon_mhz: 0.0,
            delta_rf_mhz: 0.0,
        }
    }
}

/// Coupling-phase modulation.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModulationConfig {
    /// ω_mod/2π (MHz).
    pub omega_mhz: f64,
    /// Power fraction per first-order sideband, ∈ [0, 0.5).
    pub beta: f64,
}

impl Default for ModulationConfig {
    fn default() -> Self {
        Self {
            omega_mhz: 3.0,
            beta: 0.25,
        }
    }
}

/// Vapor cell and propagation controls.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CellBlock {
    pub length_cm: f64,
    pub num_slices: usize,
    /// Atomic density (cm⁻³). The default is calibrated so the coupling-off
    /// resonant transmission of the default probe equals 0.34; re-derive it
    /// with the `calibrate` command after changing atoms, drive, or cell.
    pub density_per_cm3: f64,
    /// Target transmission for the `calibrate` command.
    pub target_transmission: f64,
    /// First-order (Euler) slice update instead of the exponential one.
    pub euler_update: bool,
    /// Attenuate generated sidebands with the carrier's slice factor.
    pub attenuate_sidebands: bool,
}

impl Default for CellBlock {
    fn default() -> Self {
        Self {
            length_cm: 7.5,
            num_slices: 100,
            density_per_cm3: DEFAULT_DENSITY_PER_CM3,
            target_transmission: 0.34,
            euler_update: false,
            attenuate_sidebands: true,
        }
    }
}

/// Calibrated density for the default configuration (cm⁻³); the output of
/// `sim calibrate` with the default atoms, drive, and cell. See
/// [`CellBlock::density_per_cm3`].
pub const DEFAULT_DENSITY_PER_CM3: f64 = 6.810817839259301e9;

/// Sweep grids, one block for every command that scans an axis.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    /// Velocity-grid refinement knob; 1.0 is the production default.
    pub velocity_resolution: f64,
    pub probe_min_mhz: f64,
    pub probe_max_mhz: f64,
    pub probe_points: usize,
    pub omega_min_mhz: f64,
    pub omega_max_mhz: f64,
    pub omega_points: usize,
    pub beta_min: f64,
    pub beta_max: f64,
    pub beta_points: usize,
    pub e_rf_min_v_per_m: f64,
    pub e_rf_max_v_per_m: f64,
    pub e_rf_points: usize,
    pub delta_rf_min_mhz: f64,
    pub delta_rf_max_mhz: f64,
    pub delta_rf_points: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            velocity_resolution: 1.0,
            probe_min_mhz: -20.0,
            probe_max_mhz: 20.0,
            probe_points: 401,
            omega_min_mhz: 0.5,
            omega_max_mhz: 8.0,
            omega_points: 31,
            beta_min: 0.05,
            beta_max: 0.45,
            beta_points: 21,
            e_rf_min_v_per_m: 0.0,
            e_rf_max_v_per_m: 1.0,
            e_rf_points: 51,
            delta_rf_min_mhz: 0.0,
            delta_rf_max_mhz: 30.0,
            delta_rf_points: 101,
        }
    }
}

/// Execution controls.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunBlock {
    /// Detection protocol for spectrum/response/slopes: "cp" or "mtp".
    pub protocol: String,
    /// Worker threads; 0 lets the runtime pick. The SIM_THREADS environment
    /// variable, when set, wins over this key.
    pub threads: usize,
    pub out_dir: String,
    /// Seed for the oracle-check parameter draws.
    pub seed: u64,
    pub oracle_draws: usize,
    pub oracle_tol: f64,
    /// Detector volts per unit of the dimensionless observable.
    pub responsivity_v: f64,
    /// Guarded-division threshold of the ratio command, as a fraction of the
    /// largest |denominator| slope.
    pub ratio_floor_frac: f64,
    /// Cap applied to ratios at floored denominators.
    pub ratio_cap: f64,
    /// Width in samples of the sliding cubic fit behind slope maps
    /// (odd, at least 5).
    pub slope_window: usize,
    /// RF amplitude (V/m) at which small-field slopes — the bandwidth
    /// profiles and their reference — are read, snapped to the nearest
    /// grid row.
    pub small_field_e_rf: f64,
    /// Re-run the operating point with doubled slice count and velocity
    /// resolution and record the relative deltas in the manifest.
    pub check_refinement: bool,
}

impl Default for RunBlock {
    fn default() -> Self {
        Self {
            protocol: "modulation-transfer".into(),
            threads: 0,
            out_dir: "out".into(),
            seed: 1,
            oracle_draws: 5,
            oracle_tol: 1e-6,
            responsivity_v: 1.0,
            ratio_floor_frac: 1e-3,
            ratio_cap: 1e6,
            slope_window: DEFAULT_SLOPE_WINDOW,
            small_field_e_rf: DEFAULT_SMALL_FIELD_E_RF,
            check_refinement: false,
        }
    }
}

/// Complete run configuration; every block and key is optional in the file
/// and falls back to the documented default.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub atoms: AtomsConfig,
    pub drive: DriveConfig,
    pub modulation: ModulationConfig,
    pub cell: CellBlock,
    pub grid: GridConfig,
    pub run: RunBlock,
}

/// Parse `--set key=value` into a dotted path and a TOML value; bare words
/// that fail to parse as TOML are taken as strings.
fn parse_override(spec: &str) -> CfgResult<(Vec<String>, toml::Value)> {
    let Some((key, raw)) = spec.split_once('=') else {
        return cfg_err(format!("override '{spec}' is not of the form key=value"));
    };
    let key = key.trim();
    if key.is_empty() {
        return cfg_err(format!("override '{spec}' has an empty key"));
    }
    let path: Vec<String> = key.split('.').map(str::to_owned).collect();
    if path.iter().any(|p| p.is_empty()) {
        return cfg_err(format!("override key '{key}' has an empty path segment"));
    }
    let value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(t) => t["v"].clone(),
        Err(_) => toml::Value::String(raw.trim().to_owned()),
    };
    Ok((path, value))
}

fn apply_override(root: &mut toml::Table, path: &[String], value: toml::Value) -> CfgResult<()> {
    let mut table = root;
    for segment in &path[..path.len() - 1] {
        let entry = table
            .entry(segment.clone())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry.as_table_mut().ok_or_else(|| {
            ConfigError(format!("override path '{}' crosses a non-table key", segment))
        })?;
    }
    table.insert(path.last().unwrap().clone(), value);
    Ok(())
}

/// Load the configuration: optional TOML file, then `--set` overrides, then
/// the `--out` directory override.
pub fn load(
    config_path: Option<&Path>,
    overrides: &[String],
    out_dir: Option<&Path>,
) -> CfgResult<RunConfig> {
    let mut table = match config_path {
        None => toml::Table::new(),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| ConfigError(format!("cannot read config {}: {e}", p.display())))?;
            text.parse::<toml::Table>()
                .map_err(|e| ConfigError(format!("config {} is not valid TOML: {e}", p.display())))?
        }
    };
    for spec in overrides {
        let (path, value) = parse_override(spec)?;
        apply_override(&mut table, &path, value)?;
    }
    let mut cfg: RunConfig = toml::Value::Table(table)
        .try_into()
        .map_err(|e| ConfigError(format!("invalid configuration: {e}")))?;
    if let Some(dir) = out_dir {
        cfg.run.out_dir = dir.to_string_lossy().into_owned();
    }
    Ok(cfg)
}

/// The full configuration echoed as TOML; feeding this file back reproduces
/// the run.
pub fn echo_toml(cfg: &RunConfig) -> String {
    toml::to_string_pretty(cfg).expect("config serializes")
}

impl RunConfig {
    pub fn atoms(&self) -> AtomicParams {
        let a = &self.atoms;
        AtomicParams {
            dipole_12: ea0(a.dipole_12_ea0),
            dipole_23: ea0(a.dipole_23_ea0),
            dipole_34: ea0(a.dipole_34_ea0),
            gamma_2: mhz(a.gamma_2_mhz),
            gamma_3: mhz(a.gamma_3_mhz),
            gamma_4: mhz(a.gamma_4_mhz),
            transit_rate: mhz(a.transit_mhz),
            feed_rate: mhz(a.feed_mhz),
            mass: a.mass_amu * AMU,
            lambda_probe: a.lambda_probe_nm * 1e-9,
            lambda_coupling: a.lambda_coupling_nm * 1e-9,
            temperature: a.temperature_k,
        }
    }

    pub fn drive(&self) -> DriveParams {
        let d = &self.drive;
        DriveParams {
            rabi_probe: mhz(d.rabi_probe_mhz),
            rabi_coupling: mhz(d.rabi_coupling_mhz),
            e_rf: d.e_rf_v_per_m,
            perturbation_factor: d.perturbation_factor,
            delta_p: mhz(d.delta_p_mhz),
            delta_2photon: mhz(d.delta_2photon_mhz),
            delta_rf: mhz(d.delta_rf_mhz),
        }
    }

    pub fn modulation(&self) -> CfgResult<ModulationParams> {
        ModulationParams::new(mhz(self.modulation.omega_mhz), self.modulation.beta)
            .map_err(|e| ConfigError(e.to_string()))
    }

    pub fn cell(&self) -> CellConfig {
        let c = &self.cell;
        CellConfig {
            length: c.length_cm * 1e-2,
            num_slices: c.num_slices,
            density: c.density_per_cm3 * 1e6,
            euler_update: c.euler_update,
            attenuate_sidebands: c.attenuate_sidebands,
        }
    }

    pub fn velocity_grid(&self) -> CfgResult<VelocityGrid> {
        resolved_grid(doppler_sigma(&self.atoms()), self.grid.velocity_resolution)
            .map_err(|e| ConfigError(e.to_string()))
    }

    pub fn scene(&self) -> CfgResult<Scene> {
        let scene = Scene {
            atoms: self.atoms(),
            drive: self.drive(),
            modulation: self.modulation()?,
            cell: self.cell(),
            grid: self.velocity_grid()?,
        };
        scene.validate().map_err(|e| ConfigError(e.to_string()))?;
        Ok(scene)
    }

    pub fn protocol(&self) -> CfgResult<Protocol> {
        self.run
            .protocol
            .parse()
            .map_err(|e: rydsim::SimError| ConfigError(e.to_string()))
    }

    pub fn slope_window(&self) -> CfgResult<usize> {
        let w = self.run.slope_window;
        if w < 5 || w % 2 == 0 {
            return cfg_err(format!("run.slope_window must be an odd integer ≥ 5, got {w}"));
        }
        Ok(w)
    }

    pub fn small_field_e_rf(&self) -> CfgResult<f64> {
        let e = self.run.small_field_e_rf;
        if !(e.is_finite() && e >= 0.0) {
            return cfg_err(format!("run.small_field_e_rf must be finite and ≥ 0, got {e}"));
        }
        Ok(e)
    }

    pub fn probe_axis(&self) -> CfgResult<Vec<f64>> {
        axis(
            "grid.probe",
            self.grid.probe_min_mhz,
            self.grid.probe_max_mhz,
            self.grid.probe_points,
        )
    }

    pub fn omega_axis(&self) -> CfgResult<Vec<f64>> {
        axis(
            "grid.omega",
            self.grid.omega_min_mhz,
            self.grid.omega_max_mhz,
            self.grid.omega_points,
        )
    }

    pub fn beta_axis(&self) -> CfgResult<Vec<f64>> {
        axis("grid.beta", self.grid.beta_min, self.grid.beta_max, self.grid.beta_points)
    }

    pub fn e_rf_axis(&self) -> CfgResult<Vec<f64>> {
        axis(
            "grid.e_rf",
            self.grid.e_rf_min_v_per_m,
            self.grid.e_rf_max_v_per_m,
            self.grid.e_rf_points,
        )
    }

    pub fn delta_rf_axis(&self) -> CfgResult<Vec<f64>> {
        axis(
            "grid.delta_rf",
            self.grid.delta_rf_min_mhz,
            self.grid.delta_rf_max_mhz,
            self.grid.delta_rf_points,
        )
    }
}

/// Evenly spaced axis; 0 points is the legal empty sweep, 1 point pins the
/// minimum.
fn axis(name: &str, min: f64, max: f64, points: usize) -> CfgResult<Vec<f64>> {
    if !min.is_finite() || !max.is_finite() {
        return cfg_err(format!("{name}: bounds must be finite"));
    }
    Ok(match points {
        0 => Vec::new(),
        1 => vec![min],
        n => {
            if !(max > min) {
                return cfg_err(format!("{name}: need max > min for {n} points"));
            }
            linspace(min, max, n)
        }
    })
}
