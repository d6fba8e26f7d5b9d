//! Figure-level analyses: spectra, modulation-parameter optimization maps,
//! RF response curves and slopes, bandwidth contours, sensitivities, and
//! protocol comparison ratios.
//!
//! Every operation here is deterministic: grid points are independent work
//! items that may be evaluated concurrently, but reductions always run in
//! grid order, so results are bit-identical for any thread count.

use crate::atom::{mhz, AtomicParams, DriveParams, ModulationParams};
use crate::liouvillian::build_generators;
use crate::medium::{propagate_mtp, transparency, CellConfig};
use crate::steady::{solve_floquet, time_domain_oracle, OracleConfig};
use crate::velocity::VelocityGrid;
use crate::{Result, SimError};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Detection protocol: probe transparency under a static coupling beam, or
/// the demodulated beat of the sidebands a phase-modulated coupling beam
/// writes onto the probe.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Protocol {
    Conventional,
    ModulationTransfer,
}

impl Protocol {
    /// Gain placing both protocols' observables on a common detector-voltage
    /// scale: the amplitude (half the peak-to-peak excursion) of the
    /// transmitted-power oscillation at the detection frequency. On/off
    /// keying of the RF field swings the conventional signal by the full
    /// transparency change, so its oscillation amplitude is half of that;
    /// the modulation-transfer observable is defined as the amplitude of
    /// the sinusoidal intensity beat and carries gain one.
    pub fn demodulation_gain(self) -> f64 {
        match self {
            Protocol::Conventional => 0.5,
            Protocol::ModulationTransfer => 1.0,
        }
    }
}

impl std::fmt::Display for Protocol {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Protocol::Conventional => write!(f, "conventional"),
            Protocol::ModulationTransfer => write!(f, "modulation-transfer"),
        }
    }
}

impl std::str::FromStr for Protocol {
    type Err = SimError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cp" | "conventional" => Ok(Protocol::Conventional),
            "mtp" | "modulation-transfer" | "modulation_transfer" => {
                Ok(Protocol::ModulationTransfer)
            }
            other => Err(SimError::InvalidParameter {
                reason: format!("unknown protocol '{other}' (use cp or mtp)"),
            }),
        }
    }
}

/// Complete, validated description of one simulated experiment.
#[derive(Debug, Clone)]
pub struct Scene {
    pub atoms: AtomicParams,
    pub drive: DriveParams,
    pub modulation: ModulationParams,
    pub cell: CellConfig,
    pub grid: VelocityGrid,
}

impl Scene {
    pub fn validate(&self) -> Result<()> {
        self.atoms.validate()?;
        self.drive.validate()?;
        self.cell.validate()?;
        self.grid.validate()
    }
}

/// Named, unit-carrying coordinate axis.
#[derive(Debug, Clone, PartialEq)]
pub struct MapAxis {
    pub name: String,
    pub unit: String,
    pub values: Vec<f64>,
}

impl MapAxis {
    pub fn new(name: &str, unit: &str, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(SimError::GridMismatch {
                reason: format!("axis '{name}' is empty"),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(SimError::GridMismatch {
                reason: format!("axis '{name}' contains non-finite values"),
            });
        }
        if values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(SimError::GridMismatch {
                reason: format!("axis '{name}' must be strictly increasing"),
            });
        }
        Ok(Self {
            name: name.to_string(),
            unit: unit.to_string(),
            values,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// One observable sampled along one axis.
#[derive(Debug, Clone)]
pub struct SpectrumResult {
    pub protocol: Protocol,
    pub axis: MapAxis,
    pub values: Vec<f64>,
}

impl SpectrumResult {
    fn new(protocol: Protocol, axis: MapAxis, values: Vec<f64>) -> Result<Self> {
        if axis.len() != values.len() {
            return Err(SimError::GridMismatch {
                reason: "axis and value lengths differ".into(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(SimError::NonFinite {
                context: "spectrum values",
            });
        }
        Ok(Self {
            protocol,
            axis,
            values,
        })
    }
}

/// One observable sampled on a 2-D grid, row-major in the x axis:
/// `values[ix * y_axis.len() + iy]`.
#[derive(Debug, Clone)]
pub struct MapResult {
    pub x_axis: MapAxis,
    pub y_axis: MapAxis,
    pub values: Vec<f64>,
}

impl MapResult {
    pub fn new(x_axis: MapAxis, y_axis: MapAxis, values: Vec<f64>) -> Result<Self> {
        if values.len() != x_axis.len() * y_axis.len() {
            return Err(SimError::GridMismatch {
                reason: format!(
                    "map has {} values for a {}×{} grid",
                    values.len(),
                    x_axis.len(),
                    y_axis.len()
                ),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(SimError::NonFinite {
                context: "map values",
            });
        }
        Ok(Self {
            x_axis,
            y_axis,
            values,
        })
    }

    pub fn at(&self, ix: usize, iy: usize) -> f64 {
        self.values[ix * self.y_axis.len() + iy]
    }

    /// Location and value of the largest entry.
    pub fn argmax(&self) -> (usize, usize, f64) {
        let mut best = (0, 0, f64::NEG_INFINITY);
        for ix in 0..self.x_axis.len() {
            for iy in 0..self.y_axis.len() {
                let v = self.at(ix, iy);
                if v > best.2 {
                    best = (ix, iy, v);
                }
            }
        }
        best
    }
}

/// Evenly spaced samples with exact endpoints.
pub fn linspace(start: f64, stop: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2, "linspace needs at least two points");
    let step = (stop - start) / (n - 1) as f64;
    let mut v: Vec<f64> = (0..n).map(|i| start + step * i as f64).collect();
    v[n - 1] = stop;
    v
}

/// Probe-detuning axis: Δ_p/2π ∈ [−20, 20] MHz, 401 points.
pub fn default_probe_axis() -> Vec<f64> {
    linspace(-20.0, 20.0, 401)
}

/// Modulation-frequency axis: ω_mod/2π ∈ [0.5, 8] MHz, 31 points.
pub fn default_omega_axis() -> Vec<f64> {
    linspace(0.5, 8.0, 31)
}

/// Modulation-depth axis: β ∈ [0.05, 0.45], 21 points.
pub fn default_beta_axis() -> Vec<f64> {
    linspace(0.05, 0.45, 21)
}

/// RF-amplitude axis: E_RF ∈ [0, 1] V/m, 51 points.
pub fn default_e_rf_axis() -> Vec<f64> {
    linspace(0.0, 1.0, 51)
}

/// RF-detuning axis: Δ_RF/2π ∈ [0, 30] MHz, 101 points.
pub fn default_delta_rf_axis() -> Vec<f64> {
    linspace(0.0, 30.0, 101)
}

/// Default width (in samples) of the sliding cubic fit used for slope maps.
pub const DEFAULT_SLOPE_WINDOW: usize = 11;

/// Default RF amplitude (V/m) at which "vanishing-field" slopes are read.
/// Both protocols' responses are even in the field, so the slope at exactly
/// zero amplitude vanishes; the limit is instead evaluated at the smallest
/// amplitude the default grid resolves robustly, one window-radius in.
pub const DEFAULT_SMALL_FIELD_E_RF: f64 = 0.08;

/// Detection observable at one probe detuning (rad/s): coupling-induced
/// transparency for the conventional protocol, demodulated beat amplitude
/// for the modulation-transfer protocol.
pub fn observable(scene: &Scene, protocol: Protocol, delta_p: f64) -> Result<f64> {
    let drive = scene.drive.at_probe_detuning(delta_p);
    match protocol {
        Protocol::Conventional => transparency(&scene.cell, &scene.grid, &scene.atoms, &drive),
        Protocol::ModulationTransfer => {
            let run = propagate_mtp(
                &scene.cell,
                &scene.grid,
                &scene.atoms,
                &drive,
                &scene.modulation,
            )?;
            Ok(run.rma)
        }
    }
}

/// Observable versus probe detuning (axis in MHz).
pub fn spectrum(scene: &Scene, protocol: Protocol, axis_mhz: &[f64]) -> Result<SpectrumResult> {
    scene.validate()?;
    let axis = MapAxis::new("delta_p", "MHz", axis_mhz.to_vec())?;
    let eval = |d: &f64| observable(scene, protocol, mhz(*d));
    #[cfg(feature = "parallel")]
    let values: Result<Vec<f64>> = axis_mhz.par_iter().map(eval).collect();
    #[cfg(not(feature = "parallel"))]
    let values: Result<Vec<f64>> = axis_mhz.iter().map(eval).collect();
    SpectrumResult::new(protocol, axis, values?)
}

/// Demodulated beat amplitude at probe detuning `delta_p_mhz` under the
/// scene's drive with modulation `(omega_mhz, beta)`.
fn beat_at(scene: &Scene, omega_mhz: f64, beta: f64, delta_p_mhz: f64) -> Result<f64> {
    let modp = ModulationParams::new(mhz(omega_mhz), beta)?;
    let drive = scene.drive.at_probe_detuning(mhz(delta_p_mhz));
    let run = propagate_mtp(&scene.cell, &scene.grid, &scene.atoms, &drive, &modp)?;
    Ok(run.rma)
}

// The beat spectrum's detuning-axis peak is found by a candidate ladder
// (dense enough that no MHz-scale lobe can hide between rungs) followed by
// a golden-section refinement of the best bracket. With the two-photon
// resonance and RF off, the spectrum is symmetric in Δ_p, so only Δ_p > 0
// is scanned.
const COLD_LADDER: &[f64] = &[
    0.1, 0.3, 0.6, 1.0, 1.5, 2.1, 2.8, 3.6, 4.5, 5.5, 6.7, 8.0, 9.5, 11.2, 13.1, 15.2, 17.5,
];
const WARM_LADDER: &[f64] = &[0.3, 1.0, 2.1, 3.6, 5.5, 8.0, 11.2, 15.2];

/// Golden-section maximization on [lo, hi]; returns (argmax, max).
fn golden_max(
    mut f: impl FnMut(f64) -> Result<f64>,
    lo: f64,
    hi: f64,
    iters: usize,
) -> Result<(f64, f64)> {
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut x1 = b - phi * (b - a);
    let mut x2 = a + phi * (b - a);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    let mut best = if f1 >= f2 { (x1, f1) } else { (x2, f2) };
    for _ in 0..iters {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + phi * (b - a);
            f2 = f(x2)?;
            if f2 > best.1 {
                best = (x2, f2);
            }
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - phi * (b - a);
            f1 = f(x1)?;
            if f1 > best.1 {
                best = (x1, f1);
            }
        }
    }
    Ok(best)
}

/// Peak of `f` over the detuning ladder plus a golden refinement around the
/// best rung; `warm` seeds extra candidates near a previously found peak.
fn peak_search(
    mut f: impl FnMut(f64) -> Result<f64>,
    warm: Option<f64>,
    hi: f64,
) -> Result<(f64, f64)> {
    let lo = 0.02;
    let ladder = if warm.is_some() { WARM_LADDER } else { COLD_LADDER };
    let mut pts: Vec<f64> = ladder.iter().copied().filter(|&x| x <= hi).collect();
    if let Some(p) = warm {
        for d in [-0.3, 0.0, 0.3] {
            let x = (p + d).clamp(lo, hi);
            pts.push(x);
        }
    }
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup_by(|a, b| (*a - *b).abs() < 1e-9);

    let mut vals = Vec::with_capacity(pts.len());
    for &x in &pts {
        vals.push(f(x)?);
    }
    let mut b_idx = 0;
    for (i, v) in vals.iter().enumerate() {
        if *v > vals[b_idx] {
            b_idx = i;
        }
    }
    let bracket_lo = if b_idx == 0 { lo } else { pts[b_idx - 1] };
    let bracket_hi = if b_idx + 1 == pts.len() {
        hi
    } else {
        pts[b_idx + 1]
    };
    let (gx, gv) = golden_max(&mut f, bracket_lo, bracket_hi, 10)?;
    if gv >= vals[b_idx] {
        Ok((gx, gv))
    } else {
        Ok((pts[b_idx], vals[b_idx]))
    }
}

/// Beat amplitude and small-detuning slope over a modulation-parameter
/// grid: amplitude is the peak of the beat spectrum over probe detuning,
/// slope is d(beat)/d(Δ_p/2π) at Δ_p/2π = 0.1 MHz by a ±0.02 MHz central
/// difference. Requires the RF field off and the two-photon resonance
/// centered, which make the beat spectrum symmetric in Δ_p.
pub fn modulation_map(
    scene: &Scene,
    omega_axis_mhz: &[f64],
    beta_axis: &[f64],
) -> Result<(MapResult, MapResult)> {
    scene.validate()?;
    if scene.drive.e_rf != 0.0 || scene.drive.delta_2photon != 0.0 || scene.drive.delta_p != 0.0 {
        return Err(SimError::InvalidParameter {
            reason: "the modulation map is defined for E_RF = 0 at two-photon resonance".into(),
        });
    }
    let x_axis = MapAxis::new("omega_mod", "MHz", omega_axis_mhz.to_vec())?;
    let y_axis = MapAxis::new("beta", "1", beta_axis.to_vec())?;

    // one row = one modulation frequency, warm-starting the peak search as
    // β ascends; rows are independent and may run concurrently
    let run_row = |&w: &f64| -> Result<(Vec<f64>, Vec<f64>)> {
        let hi = (1.8 * w + 4.0).clamp(8.0, 18.0);
        let mut amps = Vec::with_capacity(beta_axis.len());
        let mut slopes = Vec::with_capacity(beta_axis.len());
        let mut warm: Option<f64> = None;
        for &beta in beta_axis {
            if beta == 0.0 {
                amps.push(0.0);
                slopes.push(0.0);
                continue;
            }
            let (argmax, peak) = peak_search(|d| beat_at(scene, w, beta, d), warm, hi)?;
            warm = Some(argmax);
            amps.push(peak);
            let up = beat_at(scene, w, beta, 0.12)?;
            let down = beat_at(scene, w, beta, 0.08)?;
            slopes.push((up - down) / 0.04);
        }
        Ok((amps, slopes))
    };

    #[cfg(feature = "parallel")]
    let rows: Result<Vec<(Vec<f64>, Vec<f64>)>> =
        omega_axis_mhz.par_iter().map(run_row).collect();
    #[cfg(not(feature = "parallel"))]
    let rows: Result<Vec<(Vec<f64>, Vec<f64>)>> = omega_axis_mhz.iter().map(run_row).collect();
    let rows = rows?;

    let mut amp_values = Vec::with_capacity(x_axis.len() * y_axis.len());
    let mut slope_values = Vec::with_capacity(x_axis.len() * y_axis.len());
    for (amps, slopes) in rows {
        amp_values.extend(amps);
        slope_values.extend(slopes);
    }
    Ok((
        MapResult::new(x_axis.clone(), y_axis.clone(), amp_values)?,
        MapResult::new(x_axis, y_axis, slope_values)?,
    ))
}

/// Detector observable at one RF working point: conventional protocol reads
/// the resonant transparency, modulation transfer reads the beat amplitude
/// at Δ_p/2π = 0.1 MHz.
fn rf_observable(scene: &Scene, protocol: Protocol, delta_rf: f64, e_rf: f64) -> Result<f64> {
    let mut drive = DriveParams {
        e_rf,
        delta_rf,
        ..scene.drive
    };
    match protocol {
        Protocol::Conventional => {
            drive = drive.at_probe_detuning(0.0);
            transparency(&scene.cell, &scene.grid, &scene.atoms, &drive)
        }
        Protocol::ModulationTransfer => {
            drive = drive.at_probe_detuning(mhz(0.1));
            let run = propagate_mtp(
                &scene.cell,
                &scene.grid,
                &scene.atoms,
                &drive,
                &scene.modulation,
            )?;
            Ok(run.rma)
        }
    }
}

/// Detector observable versus RF amplitude at a fixed RF detuning (rad/s).
pub fn response_curve(
    scene: &Scene,
    protocol: Protocol,
    delta_rf: f64,
    e_axis: &[f64],
) -> Result<SpectrumResult> {
    scene.validate()?;
    let axis = MapAxis::new("e_rf", "V/m", e_axis.to_vec())?;
    let eval = |e: &f64| rf_observable(scene, protocol, delta_rf, *e);
    #[cfg(feature = "parallel")]
    let values: Result<Vec<f64>> = e_axis.par_iter().map(eval).collect();
    #[cfg(not(feature = "parallel"))]
    let values: Result<Vec<f64>> = e_axis.iter().map(eval).collect();
    SpectrumResult::new(protocol, axis, values?)
}

/// Least-squares cubic over a sliding window of `w` samples; returns
/// d(y)/d(x) at sample `i`. Exact for responses that are polynomials of
/// degree ≤ 3, whatever the window width.
fn windowed_cubic_derivative(xs: &[f64], ys: &[f64], i: usize, w: usize) -> Result<f64> {
    if w < 5 || w % 2 == 0 {
        return Err(SimError::InvalidParameter {
            reason: format!("slope window must be an odd count of at least 5 samples, got {w}"),
        });
    }
    let n = xs.len();
    if n < w {
        return Err(SimError::GridMismatch {
            reason: format!("slope extraction needs at least {w} samples, got {n}"),
        });
    }
    let lo = i.saturating_sub(w / 2).min(n - w);
    let x0 = xs[i];
    let scale = xs[lo..lo + w]
        .iter()
        .map(|x| (x - x0).abs())
        .fold(0.0f64, f64::max);
    if scale == 0.0 {
        return Err(SimError::GridMismatch {
            reason: "degenerate (zero-width) slope window".into(),
        });
    }

    // normal equations for y ≈ Σ c_k u^k, u = (x − x0)/scale
    let mut sums = [0.0f64; 7];
    let mut rhs = [0.0f64; 4];
    for j in lo..lo + w {
        let u = (xs[j] - x0) / scale;
        let mut up = 1.0;
        for (k, s) in sums.iter_mut().enumerate() {
            if k < 4 {
                rhs[k] += up * ys[j];
            }
            *s += up;
            up *= u;
        }
        // sums needs powers up to u^6
    }
    let mut a = [[0.0f64; 5]; 4];
    for (p, row) in a.iter_mut().enumerate() {
        for q in 0..4 {
            row[q] = sums[p + q];
        }
        row[4] = rhs[p];
    }
    // Gaussian elimination with partial pivoting on the 4×4 system
    for col in 0..4 {
        let mut piv = col;
        for r in col + 1..4 {
            if a[r][col].abs() > a[piv][col].abs() {
                piv = r;
            }
        }
        if a[piv][col].abs() < 1e-300 {
            return Err(SimError::Singular { rcond: 0.0 });
        }
        a.swap(col, piv);
        for r in col + 1..4 {
            let m = a[r][col] / a[col][col];
            for c in col..5 {
                a[r][c] -= m * a[col][c];
            }
        }
    }
    let mut c = [0.0f64; 4];
    for r in (0..4).rev() {
        let mut acc = a[r][4];
        for k in r + 1..4 {
            acc -= a[r][k] * c[k];
        }
        c[r] = acc / a[r][r];
    }
    Ok(c[1] / scale)
}

/// Slope of the detector response to the RF amplitude, on an
/// (RF detuning × RF amplitude) grid. Each fixed-detuning response curve is
/// differentiated through a sliding cubic fit of `window` samples;
/// `responsivity` converts the dimensionless observable into detector volts,
/// and the protocol's demodulation gain puts both protocols on the common
/// detector-voltage scale.
pub fn slope_map(
    scene: &Scene,
    protocol: Protocol,
    delta_rf_axis_mhz: &[f64],
    e_axis: &[f64],
    responsivity: f64,
    window: usize,
) -> Result<MapResult> {
    scene.validate()?;
    if !(responsivity.is_finite() && responsivity > 0.0) {
        return Err(SimError::InvalidParameter {
            reason: format!("responsivity must be finite and > 0, got {responsivity}"),
        });
    }
    let x_axis = MapAxis::new("delta_rf", "MHz", delta_rf_axis_mhz.to_vec())?;
    let y_axis = MapAxis::new("e_rf", "V/m", e_axis.to_vec())?;
    if e_axis.len() < window {
        return Err(SimError::GridMismatch {
            reason: format!(
                "the RF-amplitude axis needs at least {window} points for slope extraction"
            ),
        });
    }

    let gain = responsivity * protocol.demodulation_gain();
    let run_row = |&d: &f64| -> Result<Vec<f64>> {
        let curve = response_curve(scene, protocol, mhz(d), e_axis)?;
        let mut out = Vec::with_capacity(e_axis.len());
        for i in 0..e_axis.len() {
            out.push(gain * windowed_cubic_derivative(e_axis, &curve.values, i, window)?);
        }
        Ok(out)
    };

    #[cfg(feature = "parallel")]
    let rows: Result<Vec<Vec<f64>>> = delta_rf_axis_mhz.par_iter().map(run_row).collect();
    #[cfg(not(feature = "parallel"))]
    let rows: Result<Vec<Vec<f64>>> = delta_rf_axis_mhz.iter().map(run_row).collect();
    let values: Vec<f64> = rows?.into_iter().flatten().collect();
    MapResult::new(x_axis, y_axis, values)
}

/// Where a contour search ended: an interpolated crossing, still above
/// threshold at the end of the grid, or never above threshold at all.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ContourCrossing {
    At(f64),
    Beyond { last_mhz: f64 },
    Undefined,
}

/// Reference slope magnitude and its location on a slope map.
#[derive(Debug, Clone, Copy)]
pub struct ReferencePoint {
    pub value: f64,
    pub delta_rf_mhz: f64,
    pub e_rf: f64,
}

/// Bandwidth contours of one protocol's slope map against a reference.
#[derive(Debug, Clone, Copy)]
pub struct BandwidthReport {
    pub protocol: Protocol,
    pub reference: ReferencePoint,
    pub minus6: ContourCrossing,
    pub minus10: ContourCrossing,
}

/// Index of the RF-amplitude row closest to `e_rf`.
fn small_field_row(map: &MapResult, e_rf: f64) -> usize {
    let mut best = 0;
    for (iy, &y) in map.y_axis.values.iter().enumerate() {
        if (y - e_rf).abs() < (map.y_axis.values[best] - e_rf).abs() {
            best = iy;
        }
    }
    best
}

/// The zero-detuning reference: small-field |slope| in the Δ_RF = 0 row of
/// (by convention) the conventional protocol's slope map, read at the
/// amplitude row closest to `small_field_e_rf`.
pub fn reference_slope(map: &MapResult, small_field_e_rf: f64) -> Result<ReferencePoint> {
    let ix = map
        .x_axis
        .values
        .iter()
        .position(|&x| x.abs() < 1e-12)
        .ok_or_else(|| SimError::GridMismatch {
            reason: "slope map does not contain the Δ_RF = 0 row".into(),
        })?;
    let iy = small_field_row(map, small_field_e_rf);
    Ok(ReferencePoint {
        value: map.at(ix, iy).abs(),
        delta_rf_mhz: map.x_axis.values[ix],
        e_rf: map.y_axis.values[iy],
    })
}

/// Largest RF detuning at which the small-field |slope| (the map column at
/// amplitude row `iy`) still reaches `threshold`, linearly interpolated past
/// that row.
fn contour_crossing(map: &MapResult, threshold: f64, iy: usize) -> ContourCrossing {
    let profile: Vec<f64> = (0..map.x_axis.len())
        .map(|ix| map.at(ix, iy).abs())
        .collect();
    let last_above = profile.iter().rposition(|&p| p >= threshold);
    match last_above {
        None => ContourCrossing::Undefined,
        Some(i) if i + 1 == profile.len() => ContourCrossing::Beyond {
            last_mhz: map.x_axis.values[i],
        },
        Some(i) => {
            let (x0, x1) = (map.x_axis.values[i], map.x_axis.values[i + 1]);
            let (p0, p1) = (profile[i], profile[i + 1]);
            let t = if p0 == p1 { 0.0 } else { (p0 - threshold) / (p0 - p1) };
            ContourCrossing::At(x0 + t * (x1 - x0))
        }
    }
}

/// −6 dB and −10 dB RF-bandwidth contours of a slope map's small-field
/// profile, measured against a reference slope (conventionally the
/// zero-detuning small-field reference of the conventional protocol's map).
/// The profile is read at this map's amplitude row closest to the field the
/// reference was read at. Because the profile can rise out of an
/// insensitive region before decaying, the reported crossing is the
/// outermost one.
pub fn bandwidth(
    map: &MapResult,
    reference: ReferencePoint,
    protocol: Protocol,
) -> Result<BandwidthReport> {
    if !(reference.value > 0.0 && reference.value.is_finite()) {
        return Err(SimError::InvalidParameter {
            reason: format!("reference slope must be positive, got {}", reference.value),
        });
    }
    let iy = small_field_row(map, reference.e_rf);
    let minus6 = contour_crossing(map, reference.value * 10f64.powf(-6.0 / 20.0), iy);
    let minus10 = contour_crossing(map, reference.value * 10f64.powf(-10.0 / 20.0), iy);
    Ok(BandwidthReport {
        protocol,
        reference,
        minus6,
        minus10,
    })
}

/// Field sensitivity from a response slope and detection-noise figures.
#[derive(Debug, Clone, Copy)]
pub struct SensitivityReport {
    /// Response slope (V per V/m).
    pub slope: f64,
    /// Detection noise floor (V/√Hz).
    pub noise_v0: f64,
    /// Resolution bandwidth (Hz).
    pub rbw: f64,
    /// noise_v0 / (slope · √rbw), in V·m⁻¹·Hz^(−1/2).
    pub sensitivity: f64,
    /// Set when the slope vanishes and the sensitivity is unbounded.
    pub unbounded: bool,
}

/// Smallest detectable field per root bandwidth for a given slope.
pub fn sensitivity(slope: f64, noise_v0: f64, rbw: f64) -> Result<SensitivityReport> {
    if !(rbw > 0.0 && rbw.is_finite()) {
        return Err(SimError::InvalidParameter {
            reason: format!("resolution bandwidth must be positive, got {rbw}"),
        });
    }
    if !(noise_v0 >= 0.0 && noise_v0.is_finite()) {
        return Err(SimError::InvalidParameter {
            reason: format!("noise floor must be finite and ≥ 0, got {noise_v0}"),
        });
    }
    if !(slope >= 0.0 && slope.is_finite()) {
        return Err(SimError::InvalidParameter {
            reason: format!("slope must be finite and ≥ 0, got {slope}"),
        });
    }
    if slope == 0.0 {
        return Ok(SensitivityReport {
            slope,
            noise_v0,
            rbw,
            sensitivity: f64::INFINITY,
            unbounded: true,
        });
    }
    Ok(SensitivityReport {
        slope,
        noise_v0,
        rbw,
        sensitivity: noise_v0 / (slope * rbw.sqrt()),
        unbounded: false,
    })
}

/// Element-wise |numerator| / |denominator| of two slope maps on identical
/// grids. Denominator magnitudes below `floor_frac` × max|denominator| are
/// treated as unresolved and the ratio there is reported as `cap`.
pub fn ratio_map(
    numerator: &MapResult,
    denominator: &MapResult,
    floor_frac: f64,
    cap: f64,
) -> Result<MapResult> {
    if numerator.x_axis.values != denominator.x_axis.values
        || numerator.y_axis.values != denominator.y_axis.values
    {
        return Err(SimError::GridMismatch {
            reason: "ratio operands live on different grids".into(),
        });
    }
    if !(floor_frac > 0.0 && floor_frac.is_finite() && cap > 0.0 && cap.is_finite()) {
        return Err(SimError::InvalidParameter {
            reason: "ratio floor fraction and cap must be positive and finite".into(),
        });
    }
    let denom_max = denominator
        .values
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = floor_frac * denom_max;
    if floor == 0.0 {
        return Err(SimError::InvalidParameter {
            reason: "denominator slope map is identically zero".into(),
        });
    }
    let values: Vec<f64> = numerator
        .values
        .iter()
        .zip(denominator.values.iter())
        .map(|(n, d)| {
            if d.abs() < floor {
                cap
            } else {
                (n.abs() / d.abs()).min(cap)
            }
        })
        .collect();
    MapResult::new(numerator.x_axis.clone(), numerator.y_axis.clone(), values)
}

/// One randomized comparison of the harmonic-balance solver against the
/// brute-force time-domain integration.
#[derive(Debug, Clone)]
pub struct OracleDraw {
    pub drive: DriveParams,
    pub modulation: ModulationParams,
    pub velocity: f64,
    /// Worst per-component relative error across the three harmonics.
    pub max_rel_err: f64,
    /// Largest |ρ^(±2)| seen by the oracle (truncation headroom).
    pub order2_residue: f64,
    pub periods: usize,
}

/// Verdict of [`oracle_check`].
#[derive(Debug, Clone)]
pub struct OracleCheckReport {
    pub draws: Vec<OracleDraw>,
    pub worst_rel_err: f64,
    pub tol: f64,
    pub passed: bool,
}

fn harmonic_rel_err(fast: &crate::linalg::Vec16, reference: &crate::linalg::Vec16) -> f64 {
    let mut worst = 0.0f64;
    for (a, b) in fast.iter().zip(reference.iter()) {
        let mag = b.norm();
        if mag > 1e-12 {
            worst = worst.max((a - b).norm() / mag);
        }
    }
    worst
}

/// Cross-validates the harmonic-balance solver against the time-domain
/// oracle on `n_draws` randomized working points (drives within ±50% of the
/// defaults, detunings of a few MHz, velocities of tens of m/s). Fully
/// deterministic for a given `seed`.
pub fn oracle_check(
    atoms: &AtomicParams,
    n_draws: usize,
    seed: u64,
    tol: f64,
) -> Result<OracleCheckReport> {
    atoms.validate()?;
    if n_draws == 0 || !(tol > 0.0) {
        return Err(SimError::InvalidParameter {
            reason: "oracle check needs at least one draw and a positive tolerance".into(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draws = Vec::with_capacity(n_draws);
    let mut worst = 0.0f64;
    for _ in 0..n_draws {
        let drive = DriveParams {
            rabi_probe: mhz(1.32 * rng.gen_range(0.5..=1.5)),
            rabi_coupling: mhz(2.38 * rng.gen_range(0.5..=1.5)),
            e_rf: rng.gen_range(0.05..=0.6),
            perturbation_factor: 0.54,
            delta_p: mhz(rng.gen_range(-3.0..=3.0)),
            delta_2photon: mhz(rng.gen_range(-3.0..=3.0)),
            delta_rf: mhz(rng.gen_range(-6.0..=6.0)),
        };
        let modulation = ModulationParams::new(
            mhz(rng.gen_range(1.5..=4.5)),
            rng.gen_range(0.125..=0.375),
        )?;
        let velocity = rng.gen_range(-30.0..=30.0);

        let gens = build_generators(atoms, &drive, &modulation, velocity);
        let fast = solve_floquet(&gens, modulation.omega_mod)?;
        let oracle = time_domain_oracle(&gens, modulation.omega_mod, &OracleConfig::default())?;

        let rel = harmonic_rel_err(&fast.rho0, &oracle.solution.rho0)
            .max(harmonic_rel_err(
                &fast.rho_plus,
                &oracle.solution.rho_plus,
            ))
            .max(harmonic_rel_err(
                &fast.rho_minus,
                &oracle.solution.rho_minus,
            ));
        worst = worst.max(rel);
        draws.push(OracleDraw {
            drive,
            modulation,
            velocity,
            max_rel_err: rel,
            order2_residue: oracle.order2_residue,
            periods: oracle.periods,
        });
    }
    Ok(OracleCheckReport {
        draws,
        worst_rel_err: worst,
        tol,
        passed: worst <= tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atom::{default_rb85_params, doppler_sigma};
    use crate::velocity::resolved_grid;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    /// Density realizing 0.34 resonant weak-probe transmission.
    const CAL_DENSITY: f64 = 6.663947415153e15;

    fn test_scene() -> Scene {
        let atoms = default_rb85_params();
        let grid = resolved_grid(doppler_sigma(&atoms), 1.0).unwrap();
        Scene {
            atoms,
            drive: DriveParams {
                rabi_probe: mhz(1.32),
                rabi_coupling: mhz(2.38),
                e_rf: 0.0,
                perturbation_factor: 0.54,
                delta_p: 0.0,
                delta_2photon: 0.0,
                delta_rf: 0.0,
            },
            modulation: ModulationParams::new(mhz(3.0), 0.25).unwrap(),
            cell: CellConfig {
                density: CAL_DENSITY,
                ..CellConfig::default()
            },
            grid,
        }
    }

    #[test]
    fn linspace_hits_exact_endpoints_and_spacing() {
        let v = linspace(-20.0, 20.0, 401);
        assert_eq!(v.len(), 401);
        assert_eq!(v[0], -20.0);
        assert_eq!(v[400], 20.0);
        assert_eq!(v[200], 0.0);
        for w in v.windows(2) {
            assert_abs_diff_eq!(w[1] - w[0], 0.1, epsilon = 1e-12);
        }
    }

    #[test]
    fn default_axes_match_their_contracts() {
        assert_eq!(default_probe_axis().len(), 401);
        assert_eq!(default_omega_axis().len(), 31);
        assert_eq!(default_beta_axis().len(), 21);
        assert_eq!(default_e_rf_axis().len(), 51);
        assert_eq!(default_delta_rf_axis().len(), 101);
        assert_eq!(default_omega_axis()[0], 0.5);
        assert_eq!(default_omega_axis()[30], 8.0);
        assert_eq!(default_beta_axis()[10], 0.25);
        assert_eq!(default_delta_rf_axis()[100], 30.0);
    }

    #[test]
    fn protocol_names_round_trip() {
        for (s, p) in [
            ("cp", Protocol::Conventional),
            ("conventional", Protocol::Conventional),
            ("mtp", Protocol::ModulationTransfer),
            ("modulation-transfer", Protocol::ModulationTransfer),
        ] {
            assert_eq!(s.parse::<Protocol>().unwrap(), p);
        }
        assert!("bogus".parse::<Protocol>().is_err());
        assert_eq!(
            Protocol::ModulationTransfer.to_string().parse::<Protocol>().unwrap(),
            Protocol::ModulationTransfer
        );
    }

    #[test]
    fn map_axis_rejects_bad_grids() {
        assert!(MapAxis::new("x", "1", vec![]).is_err());
        assert!(MapAxis::new("x", "1", vec![0.0, 0.0]).is_err());
        assert!(MapAxis::new("x", "1", vec![1.0, 0.5]).is_err());
        assert!(MapAxis::new("x", "1", vec![0.0, f64::NAN]).is_err());
    }

    #[test]
    fn windowed_cubic_derivative_is_exact_on_cubics() {
        let xs = linspace(0.0, 1.0, 51);
        let f = |x: f64| 0.3 - 1.7 * x + 0.9 * x * x - 2.4 * x * x * x;
        let df = |x: f64| -1.7 + 1.8 * x - 7.2 * x * x;
        let ys: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
        for w in [5usize, 7, DEFAULT_SLOPE_WINDOW, 21] {
            for i in [0usize, 1, 3, 25, 49, 50] {
                let got = windowed_cubic_derivative(&xs, &ys, i, w).unwrap();
                assert_relative_eq!(got, df(xs[i]), max_relative = 1e-10);
            }
        }
        let short = linspace(0.0, 1.0, 5);
        assert!(windowed_cubic_derivative(&short, &short, 0, 7).is_err());
        assert!(windowed_cubic_derivative(&xs, &ys, 0, 4).is_err());
        assert!(windowed_cubic_derivative(&xs, &ys, 0, 8).is_err());
    }

    #[test]
    fn contour_extraction_matches_the_closed_form_lorentzian() {
        // slope profile 1/(1 + (Δ/w)²), constant along E, w = 5 MHz
        let width = 5.0;
        let x = MapAxis::new("delta_rf", "MHz", linspace(0.0, 30.0, 301)).unwrap();
        let y = MapAxis::new("e_rf", "V/m", vec![0.0, 1.0]).unwrap();
        let mut values = Vec::new();
        for &d in &x.values {
            let p = 1.0 / (1.0 + (d / width).powi(2));
            values.push(p);
            values.push(p);
        }
        let map = MapResult::new(x, y, values).unwrap();
        let reference = ReferencePoint {
            value: 1.0,
            delta_rf_mhz: 0.0,
            e_rf: 0.0,
        };
        let report = bandwidth(&map, reference, Protocol::Conventional).unwrap();
        let spacing = 0.1;
        let exact6 = width * (10f64.powf(0.3) - 1.0).sqrt();
        let exact10 = width * (10f64.powf(0.5) - 1.0).sqrt();
        match report.minus6 {
            ContourCrossing::At(x6) => assert!((x6 - exact6).abs() <= spacing),
            other => panic!("expected a −6 dB crossing, got {other:?}"),
        }
        match report.minus10 {
            ContourCrossing::At(x10) => {
                assert!((x10 - exact10).abs() <= spacing);
                if let ContourCrossing::At(x6) = report.minus6 {
                    assert!(x10 >= x6);
                }
            }
            other => panic!("expected a −10 dB crossing, got {other:?}"),
        }
    }

    #[test]
    fn contour_edge_cases_are_reported_not_invented() {
        let x = MapAxis::new("delta_rf", "MHz", linspace(0.0, 30.0, 31)).unwrap();
        let y = MapAxis::new("e_rf", "V/m", vec![0.0]).unwrap();
        let flat = MapResult::new(x.clone(), y.clone(), vec![0.0; 31]).unwrap();
        let reference = ReferencePoint {
            value: 1.0,
            delta_rf_mhz: 0.0,
            e_rf: 0.0,
        };
        let report = bandwidth(&flat, reference, Protocol::Conventional).unwrap();
        assert_eq!(report.minus6, ContourCrossing::Undefined);
        assert_eq!(report.minus10, ContourCrossing::Undefined);

        let high = MapResult::new(x, y, vec![1.0; 31]).unwrap();
        let report = bandwidth(&high, reference, Protocol::Conventional).unwrap();
        assert_eq!(report.minus6, ContourCrossing::Beyond { last_mhz: 30.0 });
        assert!(bandwidth(
            &high,
            ReferencePoint {
                value: 0.0,
                delta_rf_mhz: 0.0,
                e_rf: 0.0
            },
            Protocol::Conventional
        )
        .is_err());
    }

    #[test]
    fn ratio_map_handles_identity_floor_and_mismatch() {
        let x = MapAxis::new("delta_rf", "MHz", vec![0.0, 1.0]).unwrap();
        let y = MapAxis::new("e_rf", "V/m", vec![0.0, 0.5]).unwrap();
        let a = MapResult::new(x.clone(), y.clone(), vec![0.5, -0.5, 0.25, 0.1]).unwrap();
        let same = ratio_map(&a, &a, 1e-6, 1e6).unwrap();
        assert!(same.values.iter().all(|&v| v == 1.0));

        // a vanishing denominator cell gets capped, not divided
        let b = MapResult::new(x.clone(), y.clone(), vec![0.5, 0.5, 0.5, 0.0]).unwrap();
        let r = ratio_map(&a, &b, 1e-3, 123.0).unwrap();
        assert_eq!(r.values[3], 123.0);

        let other_y = MapAxis::new("e_rf", "V/m", vec![0.0, 0.7]).unwrap();
        let c = MapResult::new(x, other_y, vec![1.0; 4]).unwrap();
        assert!(ratio_map(&a, &c, 1e-6, 1e6).is_err());
    }

    #[test]
    fn sensitivity_follows_the_noise_over_slope_law() {
        let unit = sensitivity(1.0, 1.0, 1.0).unwrap();
        assert_eq!(unit.sensitivity, 1.0);
        assert!(!unit.unbounded);
        let doubled = sensitivity(2.0, 1.0, 1.0).unwrap();
        assert_eq!(doubled.sensitivity, 0.5);
        // quadrupling the bandwidth halves the sensitivity figure
        let wide = sensitivity(1.0, 1.0, 4.0).unwrap();
        assert_eq!(wide.sensitivity, 0.5);
        let dead = sensitivity(0.0, 1.0, 1.0).unwrap();
        assert!(dead.unbounded);
        assert!(dead.sensitivity.is_infinite());
        assert!(sensitivity(1.0, 1.0, 0.0).is_err());
        assert!(sensitivity(-1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn golden_max_finds_an_interior_peak() {
        let f = |x: f64| Ok(1.0 - (x - 2.3) * (x - 2.3));
        let (x, v) = golden_max(f, 0.0, 5.0, 30).unwrap();
        assert_abs_diff_eq!(x, 2.3, epsilon = 1e-3);
        assert_abs_diff_eq!(v, 1.0, epsilon = 1e-6);
    }

    #[test]
    fn peak_search_recovers_a_known_lobe_with_and_without_warm_start() {
        let lobe = |x: f64| Ok(1.0 / (1.0 + ((x - 3.3) / 0.4).powi(2)));
        let (cold_x, cold_v) = peak_search(lobe, None, 18.0).unwrap();
        assert_abs_diff_eq!(cold_x, 3.3, epsilon = 0.05);
        assert_abs_diff_eq!(cold_v, 1.0, epsilon = 1e-2);
        let (warm_x, _) = peak_search(lobe, Some(3.1), 18.0).unwrap();
        assert_abs_diff_eq!(warm_x, 3.3, epsilon = 0.05);
    }

    #[test]
    fn mtp_spectrum_dips_at_line_center() {
        let scene = test_scene();
        let axis = linspace(-2.0, 2.0, 11);
        let spec = spectrum(&scene, Protocol::ModulationTransfer, &axis).unwrap();
        let center = spec.values[5];
        let peak = spec.values.iter().cloned().fold(0.0f64, f64::max);
        assert!(peak > 1e-3, "beat spectrum peak = {peak}");
        assert!(
            center < 0.1 * peak,
            "no interference dip: center {center}, peak {peak}"
        );
        // symmetry of the scanned axis under mirrored detuning
        for (l, r) in spec.values.iter().zip(spec.values.iter().rev()) {
            assert_relative_eq!(l, r, max_relative = 1e-6, epsilon = 1e-12);
        }
    }

    #[test]
    fn cp_spectrum_shows_a_transparency_peak_on_resonance() {
        let scene = test_scene();
        let spec = spectrum(&scene, Protocol::Conventional, &[-10.0, 0.0, 10.0]).unwrap();
        assert!(spec.values[1] > 1e-3);
        assert!(spec.values[1] > spec.values[0]);
        assert!(spec.values[1] > spec.values[2]);
    }

    #[test]
    fn spectra_vanish_with_the_coupling_beam_off() {
        let mut scene = test_scene();
        scene.drive.rabi_coupling = 0.0;
        let axis = [-1.0, 0.0, 1.0];
        let cp = spectrum(&scene, Protocol::Conventional, &axis).unwrap();
        assert!(cp.values.iter().all(|&v| v == 0.0));
        let mtp = spectrum(&scene, Protocol::ModulationTransfer, &axis).unwrap();
        assert!(mtp.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn response_curve_endpoint_agrees_with_the_spectrum_operating_point() {
        let scene = test_scene();
        let curve =
            response_curve(&scene, Protocol::ModulationTransfer, 0.0, &[0.0, 0.2]).unwrap();
        let spec = spectrum(&scene, Protocol::ModulationTransfer, &[0.1]).unwrap();
        assert_eq!(curve.values[0].to_bits(), spec.values[0].to_bits());
        // an applied RF field actually moves the observable
        assert_ne!(curve.values[0].to_bits(), curve.values[1].to_bits());
    }

    #[test]
    fn single_cell_modulation_map_is_sane_and_zero_beta_shortcuts() {
        let scene = test_scene();
        let (amp, slope) = modulation_map(&scene, &[3.0], &[0.25]).unwrap();
        assert_eq!(amp.values.len(), 1);
        assert!(amp.values[0] > 1e-3 && amp.values[0] < 1.0);
        assert!(slope.values[0] > 0.0);

        let (amp0, slope0) = modulation_map(&scene, &[3.0], &[0.0]).unwrap();
        assert_eq!(amp0.values[0], 0.0);
        assert_eq!(slope0.values[0], 0.0);

        let mut rf_on = test_scene();
        rf_on.drive.e_rf = 0.1;
        assert!(modulation_map(&rf_on, &[3.0], &[0.25]).is_err());
    }

    #[test]
    fn cp_slope_map_smoke_produces_a_positive_reference() {
        let scene = test_scene();
        let e_axis = linspace(0.0, 0.3, 7);
        let map =
            slope_map(&scene, Protocol::Conventional, &[0.0, 8.0], &e_axis, 1.0, 7).unwrap();
        assert_eq!(map.values.len(), 14);
        let reference = reference_slope(&map, 0.08).unwrap();
        assert!(reference.value > 0.0);
        assert_relative_eq!(reference.e_rf, 0.1, max_relative = 1e-12);
        // responsivity scales the map linearly
        let map2 =
            slope_map(&scene, Protocol::Conventional, &[0.0, 8.0], &e_axis, 2.0, 7).unwrap();
        for (a, b) in map.values.iter().zip(map2.values.iter()) {
            assert_relative_eq!(2.0 * a, *b, max_relative = 1e-12, epsilon = 1e-15);
        }
    }

    #[test]
    fn oracle_check_passes_and_is_deterministic() {
        let atoms = default_rb85_params();
        let a = oracle_check(&atoms, 3, 7, 1e-6).unwrap();
        assert!(a.passed, "worst relative error {}", a.worst_rel_err);
        assert!(a.worst_rel_err > 0.0);
        let b = oracle_check(&atoms, 3, 7, 1e-6).unwrap();
        assert_eq!(a.worst_rel_err.to_bits(), b.worst_rel_err.to_bits());
        assert_eq!(a.draws.len(), 3);
        for d in &a.draws {
            assert!(d.order2_residue > 0.0);
            assert!(d.periods >= 2);
        }
        assert!(oracle_check(&atoms, 0, 7, 1e-6).is_err());
    }
}
