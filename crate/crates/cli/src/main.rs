//! `sim`: batch front end for the Rydberg receiver simulator.
//!
//! One command per process: parse the TOML configuration, run the named
//! analysis, and write `<command>.csv`, `<command>.json`,
//! `config.resolved.toml`, and `manifest.json` into the output directory.
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure.

mod config;
mod emit;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use config::{ConfigError, RunConfig};
use emit::{AxisMeta, Cell, Column, EmitError, Manifest};
use rydsim::analysis::{
    bandwidth, modulation_map, observable, oracle_check, ratio_map, reference_slope,
    response_curve, slope_map, spectrum, ContourCrossing, Protocol,
};
use rydsim::atom::mhz;
use rydsim::medium::calibrate_density;
use rydsim::SimError;

#[derive(Parser)]
#[command(
    name = "sim",
    version,
    about = "Rydberg-atom RF receiver simulator",
    after_help = "Exit codes: 0 success, 2 configuration error, 3 numerical failure."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Detection observable versus probe detuning
    Spectrum(RunArgs),
    /// Beat amplitude and small-signal slope over the (ω_mod, β) grid
    Map(RunArgs),
    /// Detector observable versus RF amplitude at the configured RF detuning
    Response(RunArgs),
    /// Response slope over the (RF detuning × RF amplitude) grid
    Slopes(RunArgs),
    /// −6/−10 dB RF-bandwidth contours for both protocols
    Bandwidth(RunArgs),
    /// Element-wise MTP/CP slope-magnitude ratio map
    Ratio(RunArgs),
    /// Calibrate the density to the target coupling-off transmission
    Calibrate(RunArgs),
    /// Cross-validate the harmonic-balance solver against the time-domain oracle
    OracleCheck(RunArgs),
}

impl Command {
    fn split(&self) -> (&'static str, &RunArgs) {
        match self {
            Command::Spectrum(a) => ("spectrum", a),
            Command::Map(a) => ("map", a),
            Command::Response(a) => ("response", a),
            Command::Slopes(a) => ("slopes", a),
            Command::Bandwidth(a) => ("bandwidth", a),
            Command::Ratio(a) => ("ratio", a),
            Command::Calibrate(a) => ("calibrate", a),
            Command::OracleCheck(a) => ("oracle-check", a),
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// TOML configuration file; defaults are used when omitted
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dotted-path override, e.g. --set drive.e_rf_v_per_m=0.25
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory (overrides run.out_dir)
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Process-level failure classification, mapped onto the exit-code contract.
#[derive(Debug)]
enum CliError {
    /// Exit 2: the configuration cannot be parsed or violates a domain.
    Config(String),
    /// Exit 3: the simulation failed numerically.
    Numerical(String),
    /// Exit 1: filesystem trouble.
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Config(_) => ExitCode::from(2),
            CliError::Numerical(_) => ExitCode::from(3),
            CliError::Io(_) => ExitCode::from(1),
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
            CliError::Io(m) => write!(f, "{m}"),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.0)
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::InvalidParameter { .. } | SimError::GridMismatch { .. } => {
                CliError::Config(e.to_string())
            }
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<EmitError> for CliError {
    fn from(e: EmitError) -> Self {
        match e {
            EmitError::NonFinite(_) => CliError::Numerical(e.to_string()),
            EmitError::Io(_) => CliError::Io(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, args) = cli.command.split();
    match run(name, args) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("sim {name}: {e}");
            e.exit_code()
        }
    }
}

fn run(name: &'static str, args: &RunArgs) -> Result<ExitCode, CliError> {
    let cfg = config::load(args.config.as_deref(), &args.set, args.out.as_deref())?;
    let threads = init_threads(&cfg)?;
    let out_dir = PathBuf::from(&cfg.run.out_dir);
    std::fs::create_dir_all(&out_dir)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", out_dir.display())))?;

    let t0 = Instant::now();
    let (mut outputs, mut diagnostics, ok) = dispatch(name, &cfg, &out_dir)?;

    let echo = config::echo_toml(&cfg);
    std::fs::write(out_dir.join("config.resolved.toml"), &echo)
        .map_err(|e| CliError::Io(format!("cannot write config echo: {e}")))?;
    outputs.push("config.resolved.toml".into());

    if let Some(obj) = diagnostics.as_object_mut() {
        obj.insert("threads_effective".into(), json!(effective_thread_count(threads)));
    }
    let manifest = Manifest {
        command: name.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        wall_time_s: t0.elapsed().as_secs_f64(),
        outputs,
        config: serde_json::to_value(&cfg).expect("config serializes"),
        diagnostics,
    };
    emit::write_manifest(&out_dir, &manifest)?;

    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(3) })
}

/// Worker-thread count: the SIM_THREADS environment variable wins over the
/// run.threads key; 0 leaves the choice to the runtime.
fn init_threads(cfg: &RunConfig) -> Result<usize, CliError> {
    let n = match std::env::var("SIM_THREADS") {
        Ok(s) => s
            .trim()
            .parse::<usize>()
            .map_err(|_| CliError::Config(format!("SIM_THREADS must be an integer, got '{s}'")))?,
        Err(_) => cfg.run.threads,
    };
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("cannot size the thread pool: {e}")))?;
    }
    Ok(n)
}

fn effective_thread_count(requested: usize) -> usize {
    if requested > 0 {
        requested
    } else {
        rayon::current_num_threads()
    }
}

type CommandOutput = (Vec<String>, serde_json::Value, bool);

fn dispatch(name: &str, cfg: &RunConfig, out_dir: &Path) -> Result<CommandOutput, CliError> {
    match name {
        "spectrum" => cmd_spectrum(cfg, out_dir),
        "map" => cmd_map(cfg, out_dir),
        "response" => cmd_response(cfg, out_dir),
        "slopes" => cmd_slopes(cfg, out_dir),
        "bandwidth" => cmd_bandwidth(cfg, out_dir),
        "ratio" => cmd_ratio(cfg, out_dir),
        "calibrate" => cmd_calibrate(cfg, out_dir),
        "oracle-check" => cmd_oracle_check(cfg, out_dir),
        other => Err(CliError::Config(format!("unknown command {other}"))),
    }
}

fn to_mhz(omega: f64) -> f64 {
    omega / (std::f64::consts::TAU * 1e6)
}

/// Column carrying the protocol's detection observable.
fn observable_column(protocol: Protocol) -> Column {
    match protocol {
        Protocol::Conventional => Column::new("transparency", "1"),
        Protocol::ModulationTransfer => Column::new("rma", "1"),
    }
}

/// Operating-point refinement deltas for the manifest: the observable is
/// re-evaluated with doubled slice count and doubled velocity resolution.
fn refinement_diag(cfg: &RunConfig, protocol: Protocol) -> Result<serde_json::Value, CliError> {
    if !cfg.run.check_refinement {
        return Ok(serde_json::Value::Null);
    }
    let op_detuning = match protocol {
        Protocol::Conventional => 0.0,
        Protocol::ModulationTransfer => mhz(0.1),
    };
    let base = observable(&cfg.scene()?, protocol, op_detuning)?;

    let mut finer_cell = cfg.clone();
    finer_cell.cell.num_slices *= 2;
    let v_slices = observable(&finer_cell.scene()?, protocol, op_detuning)?;

    let mut finer_grid = cfg.clone();
    finer_grid.grid.velocity_resolution *= 2.0;
    let v_velocity = observable(&finer_grid.scene()?, protocol, op_detuning)?;

    let denom = base.abs().max(1e-300);
    Ok(json!({
        "observable": base,
        "slice_delta_rel": (v_slices - base).abs() / denom,
        "velocity_delta_rel": (v_velocity - base).abs() / denom,
    }))
}

fn cmd_spectrum(cfg: &RunConfig, out_dir: &Path) -> Result<CommandOutput, CliError> {
    let protocol = cfg.protocol()?;
    let axis = cfg.probe_axis()?;
    let columns = [Column::new("delta_p_mhz", "MHz"), observable_column(protocol)];
    let axes = [AxisMeta::new("delta_p", "MHz", &axis)];
    if axis.is_empty() {
        let outputs = emit::write_table(out_dir, "spectrum", &columns, &axes, &[])?;
        return Ok((outputs, json!({ "points": 0 }), true));
    }

    let scene = cfg.scene()?;
    let result = spectrum(&scene, protocol, &axis)?;
    let rows: Vec<Vec<Cell>> = axis
        .iter()
        .zip(&result.values)
        .map(|(x, v)| vec![Cell::Num(*x), Cell::Num(*v)])
        .collect();
    let outputs = emit::write_table(out_dir, "spectrum", &columns, &axes, &rows)?;

    let (imax, vmax) = extremum(&result.values, f64::gt);
    let (imin, vmin) = extremum(&result.values, f64::lt);
    let diagnostics = json!({
        "protocol": protocol.to_string(),
        "points": axis.len(),
        "max_value": vmax,
        "max_at_mhz": axis[imax],
        "min_value": vmin,
        "min_at_mhz": axis[imin],
        "refinement": refinement_diag(cfg, protocol)?,
    });
    Ok((outputs, diagnostics, true))
}

fn extremum(values: &[f64], better: impl Fn(&f64, &f64) -> bool) -> (usize, f64) {
    let mut best = (0usize, values[0]);
    for (i, v) in values.iter().enumerate() {
        if better(v, &best.1) {
            best = (i, *v);
        }
    }
    best
}

fn cmd_map(cfg: &RunConfig, out_dir: &Path) -> Result<CommandOutput, CliError> {
    let omega_axis = cfg.omega_axis()?;
    let beta_axis = cfg.beta_axis()?;
    let columns = [
        Column::new("omega_mod_mhz", "MHz"),
        Column::new("beta", "1"),
        Column::new("amplitude", "1"),
        Column::new("slope", "1/MHz"),
    ];
    let axes = [
        AxisMeta::new("omega_mod", "MHz", &omega_axis),
        AxisMeta::new("beta", "1", &beta_axis),
    ];
    if omega_axis.is_empty() || beta_axis.is_empty() {
        let outputs = emit::write_table(out_dir, "map", &columns, &axes, &[])?;
        return Ok((outputs, json!({ "points": 0 }), true));
    }

    let scene = cfg.scene()?;
    let (amplitude, slope) = modulation_map(&scene, &omega_axis, &beta_axis)?;
    let mut rows = Vec::with_capacity(omega_axis.len() * beta_axis.len());
    for (ix, w) in omega_axis.iter().enumerate() {
        for (iy, b) in beta_axis.iter().enumerate() {
            rows.push(vec![
                Cell::Num(*w),
                Cell::Num(*b),
                Cell::Num(amplitude.at(ix, iy)),
                Cell::Num(slope.at(ix, iy)),
            ]);
        }
    }
    let outputs = emit::write_table(out_dir, "map", &columns, &axes, &rows)?;

    let (ax, ay, apeak) = amplitude.argmax();
    let (sx, sy, speak) = slope.argmax();
    let diagnostics = json!({
        "amplitude_peak": apeak,
        "amplitude_argmax": { "omega_mod_mhz": omega_axis[ax], "beta": beta_axis[ay] },
        "slope_peak": speak,
        "slope_argmax": { "omega_mod_mhz": omega_axis[sx], "beta": beta_axis[sy] },
        "refinement": refinement_diag(cfg, Protocol::ModulationTransfer)?,
    });
    Ok((outputs, diagnostics, true))
}

fn cmd_response(cfg: &RunConfig, out_dir: &Path) -> Result<CommandOutput, CliError> {
    let protocol = cfg.protocol()?;
    let axis = cfg.e_rf_axis()?;
    let columns = [Column::new("e_rf_v_per_m", "V/m"), observable_column(protocol)];
    let axes = [AxisMeta::new("e_rf", "V/m", &axis)];
    if axis.is_empty() {
        let outputs = emit::write_table(out_dir, "response", &columns, &axes, &[])?;
        return Ok((outputs, json!({ "points": 0 }), true));
    }

    let scene = cfg.scene()?;
    let delta_rf = scene.drive.delta_rf;
    let curve = response_curve(&scene, protocol, delta_rf, &axis)?;
    let rows: Vec<Vec<Cell>> = axis
        .iter()
        .zip(&curve.values)
        .map(|(x, v)| vec![Cell::Num(*x), Cell::Num(*v)])
        .collect();
    let outputs = emit::write_table(out_dir, "response", &columns, &axes, &rows)?;

    let (imax, _) = extremum(&curve.values.iter().map(|v| v.abs()).collect::<Vec<_>>(), f64::gt);
    let diagnostics = json!({
        "protocol": protocol.to_string(),
        "delta_rf_mhz": to_mhz(delta_rf),
        "max_abs": curve.values[imax].abs(),
        "at_e_rf": axis[imax],
        "refinement": refinement_diag(cfg, protocol)?,
    });
    Ok((outputs, diagnostics, true))
}

/// Shared by slopes/bandwidth/ratio: one protocol's slope map on the
/// configured grids.
fn build_slope_map(
    cfg: &RunConfig,
    protocol: Protocol,
    delta_rf_axis: &[f64],
    e_axis: &[f64],
) -> Result<rydsim::analysis::MapResult, CliError> {
    let scene = cfg.scene()?;
    Ok(slope_map(
        &scene,
        protocol,
        delta_rf_axis,
        e_axis,
        cfg.run.responsivity_v,
        cfg.slope_window()?,
    )?)
}

fn slope_columns() -> [Column; 3] {
    [
        Column::new("delta_rf_mhz", "MHz"),
        Column::new("e_rf_v_per_m", "V/m"),
        Column::new("slope", "V/(V/m)"),
    ]
}

fn map_rows(map: &rydsim::analysis::MapResult) -> Vec<Vec<Cell>> {
    let mut rows = Vec::with_capacity(map.x_axis.len() * map.y_axis.len());
    for (ix, x) in map.x_axis.values.iter().enumerate() {
        for (iy, y) in map.y_axis.values.iter().enumerate() {
            rows.push(vec![Cell::Num(*x), Cell::Num(*y), Cell::Num(map.at(ix, iy))]);
        }
    }
    rows
}

fn cmd_slopes(cfg: &RunConfig, out_dir: &Path) -> Result<CommandOutput, CliError> {
    let protocol = cfg.protocol()?;
    let delta_rf_axis = cfg.delta_rf_axis()?;
    let e_axis = cfg.e_rf_axis()?;
    let columns = slope_columns();
    let axes = [
        AxisMeta::new("delta_rf", "MHz", &delta_rf_axis),
        AxisMeta::new("e_rf", "V/m", &e_axis),
    ];
    if delta_rf_axis.is_empty() || e_axis.is_empty() {
        let outputs = emit::write_table(out_dir, "slopes", &columns, &axes, &[])?;
        return Ok((outputs, json!({ "points": 0 }), true));
    }

    let map = build_slope_map(cfg, protocol, &delta_rf_axis, &e_axis)?;
    let outputs = emit::write_table(out_dir, "slopes", &columns, &axes, &map_rows(&map))?;

    let reference = reference_slope(&map, cfg.small_field_e_rf()?).ok();
    let diagnostics = json!({
        "protocol": protocol.to_string(),
        "slope_window": cfg.slope_window()?,
        "reference": reference.map(|r| json!({ "value": r.value, "e_rf": r.e_rf })),
        "refinement": refinement_diag(cfg, protocol)?,
    });
    Ok((outputs, diagnostics, true))
}

fn crossing_cells(c: &ContourCrossing) -> (Cell, Cell) {
    match c {
        ContourCrossing::At(x) => (Cell::Num(*x), Cell::Text("at".into())),
        ContourCrossing::Beyond { last_mhz } => {
            (Cell::Num(*last_mhz), Cell::Text("beyond".into()))
        }
        ContourCrossing::Undefined => (Cell::Text(String::new()), Cell::Text("undefined".into())),
    }
}

fn crossing_json(c: &ContourCrossing) -> serde_json::Value {
    match c {
        ContourCrossing::At(x) => json!({ "status": "at", "delta_rf_mhz": x }),
        ContourCrossing::Beyond { last_mhz } => {
            json!({ "status": "beyond", "delta_rf_mhz": last_mhz })
        }
        ContourCrossing::Undefined => json!({ "status": "undefined", "delta_rf_mhz": null }),
    }
}

fn cmd_bandwidth(cfg: &RunConfig, out_dir: &Path) -> Result<CommandOutput, CliError> {
    let delta_rf_axis = cfg.delta_rf_axis()?;
    let e_axis = cfg.e_rf_axis()?;
    let columns = [
        Column::new("protocol", "1"),
        Column::new("threshold_db", "dB"),
        Column::new("delta_rf_mhz", "MHz"),
        Column::new("status", "1"),
    ];
    let axes = [
        AxisMeta::new("delta_rf", "MHz", &delta_rf_axis),
        AxisMeta::new("e_rf", "V/m", &e_axis),
    ];
    if delta_rf_axis.is_empty() || e_axis.is_empty() {
        let outputs = emit::write_table(out_dir, "bandwidth", &columns, &axes, &[])?;
        return Ok((outputs, json!({ "points": 0 }), true));
    }

    let cp_map = build_slope_map(cfg, Protocol::Conventional, &delta_rf_axis, &e_axis)?;
    let mtp_map = build_slope_map(cfg, Protocol::ModulationTransfer, &delta_rf_axis, &e_axis)?;
    let reference = reference_slope(&cp_map, cfg.small_field_e_rf()?)?;
    let cp = bandwidth(&cp_map, reference, Protocol::Conventional)?;
    let mtp = bandwidth(&mtp_map, reference, Protocol::ModulationTransfer)?;

    let mut rows = Vec::new();
    for report in [&cp, &mtp] {
        for (db, crossing) in [(-6.0, &report.minus6), (-10.0, &report.minus10)] {
            let (value, status) = crossing_cells(crossing);
            rows.push(vec![
                Cell::Text(report.protocol.to_string()),
                Cell::Num(db),
                value,
                status,
            ]);
        }
    }
    let outputs = emit::write_table(out_dir, "bandwidth", &columns, &axes, &rows)?;

    let diagnostics = json!({
        "reference": { "value": reference.value, "e_rf": reference.e_rf },
        "conventional": { "minus6": crossing_json(&cp.minus6), "minus10": crossing_json(&cp.minus10) },
        "modulation_transfer": { "minus6": crossing_json(&mtp.minus6), "minus10": crossing_json(&mtp.minus10) },
        "refinement": refinement_diag(cfg, Protocol::ModulationTransfer)?,
    });
    Ok((outputs, diagnostics, true))
}

fn cmd_ratio(cfg: &RunConfig, out_dir: &Path) -> Result<CommandOutput, CliError> {
    let delta_rf_axis = cfg.delta_rf_axis()?;
    let e_axis = cfg.e_rf_axis()?;
    let columns = [
        Column::new("delta_rf_mhz", "MHz"),
        Column::new("e_rf_v_per_m", "V/m"),
        Column::new("ratio", "1"),
    ];
    let axes = [
        AxisMeta::new("delta_rf", "MHz", &delta_rf_axis),
        AxisMeta::new("e_rf", "V/m", &e_axis),
    ];
    if delta_rf_axis.is_empty() || e_axis.is_empty() {
        let outputs = emit::write_table(out_dir, "ratio", &columns, &axes, &[])?;
        return Ok((outputs, json!({ "points": 0 }), true));
    }

    let cp_map = build_slope_map(cfg, Protocol::Conventional, &delta_rf_axis, &e_axis)?;
    let mtp_map = build_slope_map(cfg, Protocol::ModulationTransfer, &delta_rf_axis, &e_axis)?;
    let ratio = ratio_map(&mtp_map, &cp_map, cfg.run.ratio_floor_frac, cfg.run.ratio_cap)?;
    let outputs = emit::write_table(out_dir, "ratio", &columns, &axes, &map_rows(&ratio))?;

    let (ix, iy, peak) = ratio.argmax();
    let diagnostics = json!({
        "max_ratio": peak,
        "at": { "delta_rf_mhz": delta_rf_axis[ix], "e_rf": e_axis[iy] },
        "floor_frac": cfg.run.ratio_floor_frac,
        "cap": cfg.run.ratio_cap,
        "refinement": refinement_diag(cfg, Protocol::ModulationTransfer)?,
    });
    Ok((outputs, diagnostics, true))
}

fn cmd_calibrate(cfg: &RunConfig, out_dir: &Path) -> Result<CommandOutput, CliError> {
    let target = cfg.cell.target_transmission;
    if !(target > 0.0 && target <= 1.0) {
        return Err(CliError::Config(format!(
            "cell.target_transmission must be in (0, 1], got {target}"
        )));
    }
    let report = calibrate_density(
        &cfg.cell(),
        &cfg.velocity_grid()?,
        &cfg.atoms(),
        &cfg.drive(),
        target,
    )?;
    let density_per_cm3 = report.density / 1e6;

    let columns = [
        Column::new("density_per_cm3", "cm^-3"),
        Column::new("transmission", "1"),
        Column::new("max_slice_field_absorption", "1"),
        Column::new("max_slice_power_absorption", "1"),
        Column::new("iterations", "1"),
    ];
    let rows = vec![vec![
        Cell::Num(density_per_cm3),
        Cell::Num(report.transmission),
        Cell::Num(report.max_slice_field_absorption),
        Cell::Num(report.max_slice_power_absorption),
        Cell::Int(report.iterations as u64),
    ]];
    let outputs = emit::write_table(out_dir, "calibrate", &columns, &[], &rows)?;

    println!(
        "calibrated density {:.6e} cm^-3 -> coupling-off transmission {:.6}",
        density_per_cm3, report.transmission
    );
    let diagnostics = json!({
        "density_per_cm3": density_per_cm3,
        "density_per_m3": report.density,
        "transmission": report.transmission,
        "target_transmission": target,
        "max_slice_field_absorption": report.max_slice_field_absorption,
        "max_slice_power_absorption": report.max_slice_power_absorption,
        "iterations": report.iterations,
    });
    Ok((outputs, diagnostics, true))
}

fn cmd_oracle_check(cfg: &RunConfig, out_dir: &Path) -> Result<CommandOutput, CliError> {
    let report = oracle_check(
        &cfg.atoms(),
        cfg.run.oracle_draws,
        cfg.run.seed,
        cfg.run.oracle_tol,
    )?;

    let columns = [
        Column::new("draw", "1"),
        Column::new("rabi_probe_mhz", "MHz"),
        Column::new("rabi_coupling_mhz", "MHz"),
        Column::new("e_rf_v_per_m", "V/m"),
        Column::new("delta_p_mhz", "MHz"),
        Column::new("delta_2photon_mhz", "MHz"),
        Column::new("delta_rf_mhz", "MHz"),
        Column::new("omega_mod_mhz", "MHz"),
        Column::new("beta", "1"),
        Column::new("velocity_m_per_s", "m/s"),
        Column::new("max_rel_err", "1"),
        Column::new("order2_residue", "1"),
        Column::new("periods", "1"),
    ];
    let rows: Vec<Vec<Cell>> = report
        .draws
        .iter()
        .enumerate()
        .map(|(i, d)| {
            vec![
                Cell::Int(i as u64 + 1),
                Cell::Num(to_mhz(d.drive.rabi_probe)),
                Cell::Num(to_mhz(d.drive.rabi_coupling)),
                Cell::Num(d.drive.e_rf),
                Cell::Num(to_mhz(d.drive.delta_p)),
                Cell::Num(to_mhz(d.drive.delta_2photon)),
                Cell::Num(to_mhz(d.drive.delta_rf)),
                Cell::Num(to_mhz(d.modulation.omega_mod)),
                Cell::Num(d.modulation.beta),
                Cell::Num(d.velocity),
                Cell::Num(d.max_rel_err),
                Cell::Num(d.order2_residue),
                Cell::Int(d.periods as u64),
            ]
        })
        .collect();
    let outputs = emit::write_table(out_dir, "oracle-check", &columns, &[], &rows)?;

    println!(
        "oracle check: max relative deviation {:.3e} over {} draws (tolerance {:.1e}): {}",
        report.worst_rel_err,
        report.draws.len(),
        report.tol,
        if report.passed { "PASS" } else { "FAIL" }
    );
    let diagnostics = json!({
        "draws": report.draws.len(),
        "seed": cfg.run.seed,
        "worst_rel_err": report.worst_rel_err,
        "tol": report.tol,
        "passed": report.passed,
    });
    Ok((outputs, diagnostics, report.passed))
}
