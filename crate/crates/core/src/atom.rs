//! Physical constants, default Rb-85 parameter set, and unit conversions.
//!
//! Configuration-facing units follow the experimental presentation:
//! frequencies as ν = ω/2π in MHz, dipole moments in e·a0, fields in V/m,
//! lengths in cm/nm. Everything internal is SI with angular frequencies in
//! rad/s; the conversion helpers here are the only place the two meet.

use crate::{Result, SimError};

/// Reduced Planck constant (J·s).
pub const HBAR: f64 = 1.054_571_817e-34;
/// Boltzmann constant (J/K), exact.
pub const KB: f64 = 1.380_649e-23;
/// Elementary charge (C), exact.
pub const E_CHARGE: f64 = 1.602_176_634e-19;
/// Bohr radius (m).
pub const BOHR_RADIUS: f64 = 5.291_772_109_03e-11;
/// Speed of light (m/s), exact.
pub const C_LIGHT: f64 = 299_792_458.0;
/// Vacuum permittivity (F/m).
pub const EPS_0: f64 = 8.854_187_812_8e-12;
/// Unified atomic mass unit (kg).
pub const AMU: f64 = 1.660_539_066_60e-27;
/// Rb-85 atomic mass (kg).
pub const RB85_MASS: f64 = 84.911_789_738 * AMU;

/// ν in MHz → ω in rad/s.
pub fn mhz(nu: f64) -> f64 {
    nu * 1e6 * std::f64::consts::TAU
}

/// ω in rad/s → ν in MHz.
pub fn to_mhz(omega: f64) -> f64 {
    omega / (1e6 * std::f64::consts::TAU)
}

/// Dipole moment in units of e·a0 → C·m.
pub fn ea0(d: f64) -> f64 {
    d * E_CHARGE * BOHR_RADIUS
}

/// Dipole moment in C·m → units of e·a0.
pub fn to_ea0(d: f64) -> f64 {
    d / (E_CHARGE * BOHR_RADIUS)
}

/// Static atomic properties of the four-level ladder.
///
/// Levels are numbered 1–4 from the ground state up; `dipole_kl` couples
/// levels k and l, `gamma_k` is the population decay rate of level k
/// (level 1 is stable). `transit_rate` is the finite-interaction-time rate
/// γ_t applied to every density-matrix element, and `feed_rate` refills the
/// ground state; the trace-conserving closure requires the two to be equal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AtomicParams {
    /// ⟨1|d|2⟩ (C·m).
    pub dipole_12: f64,
    /// ⟨2|d|3⟩ (C·m).
    pub dipole_23: f64,
    /// ⟨3|d|4⟩ (C·m).
    pub dipole_34: f64,
    /// Γ₂ (rad/s).
    pub gamma_2: f64,
    /// Γ₃ (rad/s).
    pub gamma_3: f64,
    /// Γ₄ (rad/s).
    pub gamma_4: f64,
    /// γ_t (rad/s): transit decay on every element.
    pub transit_rate: f64,
    /// γ_in (rad/s): ground-state feed; equals `transit_rate` under the
    /// trace-conserving closure.
    pub feed_rate: f64,
    /// Atomic mass (kg).
    pub mass: f64,
    /// Probe vacuum wavelength (m).
    pub lambda_probe: f64,
    /// Coupling vacuum wavelength (m).
    pub lambda_coupling: f64,
    /// Vapor temperature (K).
    pub temperature: f64,
}

impl AtomicParams {
    /// Probe wavenumber k_p = 2π/λ_p (rad/m).
    pub fn k_probe(&self) -> f64 {
        std::f64::consts::TAU / self.lambda_probe
    }

    /// Coupling wavenumber k_c = 2π/λ_c (rad/m).
    pub fn k_coupling(&self) -> f64 {
        std::f64::consts::TAU / self.lambda_coupling
    }

    /// Probe angular frequency ω_p = 2πc/λ_p (rad/s).
    pub fn omega_probe(&self) -> f64 {
        std::f64::consts::TAU * C_LIGHT / self.lambda_probe
    }

    /// Checks the domain invariants (all rates/dipoles positive, wavelengths
    /// and temperature positive, feed = transit).
    pub fn validate(&self) -> Result<()> {
        let pos = [
            ("dipole_12", self.dipole_12),
            ("dipole_23", self.dipole_23),
            ("dipole_34", self.dipole_34),
            ("gamma_2", self.gamma_2),
            ("gamma_3", self.gamma_3),
            ("gamma_4", self.gamma_4),
            ("transit_rate", self.transit_rate),
            ("feed_rate", self.feed_rate),
            ("mass", self.mass),
            ("lambda_probe", self.lambda_probe),
            ("lambda_coupling", self.lambda_coupling),
            ("temperature", self.temperature),
        ];
        for (name, v) in pos {
            if !(v > 0.0) || !v.is_finite() {
                return Err(SimError::InvalidParameter {
                    reason: format!("{name} must be finite and > 0, got {v}"),
                });
            }
        }
        if (self.feed_rate - self.transit_rate).abs() > 1e-9 * self.transit_rate {
            return Err(SimError::InvalidParameter {
                reason: "feed_rate must equal transit_rate (trace-conserving closure)".into(),
            });
        }
        Ok(())
    }
}

/// Laser and RF drive parameters for one operating point.
///
/// Detuning convention: `delta_p` = Δ21 (probe), `delta_2photon` = Δ31
/// (probe + coupling), and Δ41 = Δ31 − `delta_rf`. `e_rf` is the RF field
/// amplitude *outside* the cell; `perturbation_factor` rescales it to the
/// average field seen by the atoms inside.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriveParams {
    /// Ω_p (rad/s).
    pub rabi_probe: f64,
    /// Total coupling Rabi frequency Ω_c (rad/s), before modulation split.
    pub rabi_coupling: f64,
    /// RF field amplitude at the cell exterior (V/m).
    pub e_rf: f64,
    /// Dimensionless field reduction inside the cell, ∈ (0, 1].
    pub perturbation_factor: f64,
    /// Δ21 (rad/s).
    pub delta_p: f64,
    /// Δ31 (rad/s).
    pub delta_2photon: f64,
    /// Δ_RF (rad/s); Δ41 = Δ31 − Δ_RF.
    pub delta_rf: f64,
}

impl DriveParams {
    /// RF Rabi frequency from the interior field (rad/s).
    pub fn rabi_rf(&self, atoms: &AtomicParams) -> f64 {
        rabi_from_field(atoms.dipole_34, self.e_rf * self.perturbation_factor)
    }

    /// Coupling-laser detuning Δ_c = Δ31 − Δ21, held fixed when the probe
    /// detuning is scanned.
    pub fn delta_coupling(&self) -> f64 {
        self.delta_2photon - self.delta_p
    }

    /// Returns a copy with the probe detuning moved to `delta_p` (rad/s),
    /// keeping the coupling-laser detuning fixed (the two-photon detuning
    /// follows the probe).
    pub fn at_probe_detuning(&self, delta_p: f64) -> Self {
        Self {
            delta_p,
            delta_2photon: delta_p + self.delta_coupling(),
            ..*self
        }
    }

    /// Checks the domain invariants.
    pub fn validate(&self) -> Result<()> {
        if !(self.perturbation_factor > 0.0 && self.perturbation_factor <= 1.0) {
            return Err(SimError::InvalidParameter {
                reason: format!(
                    "perturbation_factor must be in (0, 1], got {}",
                    self.perturbation_factor
                ),
            });
        }
        for (name, v) in [
            ("rabi_probe", self.rabi_probe),
            ("rabi_coupling", self.rabi_coupling),
            ("e_rf", self.e_rf),
        ] {
            if v < 0.0 || !v.is_finite() {
                return Err(SimError::InvalidParameter {
                    reason: format!("{name} must be finite and ≥ 0, got {v}"),
                });
            }
        }
        for (name, v) in [
            ("delta_p", self.delta_p),
            ("delta_2photon", self.delta_2photon),
            ("delta_rf", self.delta_rf),
        ] {
            if !v.is_finite() {
                return Err(SimError::InvalidParameter {
                    reason: format!("{name} must be finite, got {v}"),
                });
            }
        }
        Ok(())
    }
}

/// Phase-modulation parameters of the coupling beam.
///
/// The coupling field is split into a carrier and two first-order sidebands
/// of opposite sign, ε_c(t) ∝ a0 + a1·e^{−iω_mod t} − a1·e^{+iω_mod t},
/// with total power preserved (a0² + 2a1² = 1). The modulation depth is
/// β = a1²/(2a1² + a0²) = a1², the fraction of total coupling power in one
/// sideband.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModulationParams {
    /// ω_mod (rad/s).
    pub omega_mod: f64,
    /// β ∈ [0, 0.5).
    pub beta: f64,
}

impl ModulationParams {
    pub fn new(omega_mod: f64, beta: f64) -> Result<Self> {
        if !(0.0..0.5).contains(&beta) || !omega_mod.is_finite() || omega_mod < 0.0 {
            return Err(SimError::InvalidParameter {
                reason: format!("modulation requires beta in [0, 0.5) and omega_mod ≥ 0, got beta={beta}, omega_mod={omega_mod}"),
            });
        }
        Ok(Self { omega_mod, beta })
    }

    /// Carrier amplitude fraction a0 = √(1 − 2β).
    pub fn a0(&self) -> f64 {
        (1.0 - 2.0 * self.beta).sqrt()
    }

    /// Sideband amplitude fraction a1 = √β (the +ω_mod sideband carries +a1,
    /// the −ω_mod sideband −a1).
    pub fn a1(&self) -> f64 {
        self.beta.sqrt()
    }

    /// Reconstructs β from the amplitude pair — the inverse of
    /// [`a0`](Self::a0)/[`a1`](Self::a1), used to check round-trips.
    pub fn beta_from_amplitudes(a0: f64, a1: f64) -> f64 {
        a1 * a1 / (2.0 * a1 * a1 + a0 * a0)
    }
}

/// Default parameter set: Rb-85 ladder 5S₁/₂ → 5P₃/₂ → 50D₅/₂ → 51P₃/₂ at
/// room temperature.
pub fn default_rb85_params() -> AtomicParams {
    AtomicParams {
        dipole_12: ea0(1.96),
        dipole_23: ea0(0.01),
        dipole_34: ea0(2272.4),
        gamma_2: mhz(6.050),
        gamma_3: mhz(0.002),
        gamma_4: mhz(0.002),
        transit_rate: mhz(0.650),
        feed_rate: mhz(0.650),
        mass: RB85_MASS,
        lambda_probe: 780e-9,
        lambda_coupling: 480e-9,
        temperature: 293.15,
    }
}

/// Rabi frequency Ω = 2·℘·E/ħ (rad/s) for dipole ℘ (C·m) and field
/// amplitude E (V/m).
pub fn rabi_from_field(dipole: f64, field: f64) -> f64 {
    2.0 * dipole * field / HBAR
}

/// 1-D r.m.s. thermal velocity σ_v = √(k_B·T/m) of the longitudinal
/// Maxwell distribution (m/s).
pub fn doppler_sigma(params: &AtomicParams) -> f64 {
    (KB * params.temperature / params.mass).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    #[test]
    fn unit_conversions_round_trip() {
        for x in [0.002, 0.65, 1.32, 6.05, 58.2, 2272.4] {
            assert_relative_eq!(to_mhz(mhz(x)), x, max_relative = 1e-14);
            assert_relative_eq!(to_ea0(ea0(x)), x, max_relative = 1e-14);
        }
    }

    #[test]
    fn rb85_defaults_match_published_set() {
        let p = default_rb85_params();
        assert_relative_eq!(to_ea0(p.dipole_34), 2272.4, max_relative = 1e-12);
        assert_relative_eq!(to_mhz(p.gamma_2), 6.050, max_relative = 1e-12);
        assert_relative_eq!(to_mhz(p.transit_rate), 0.650, max_relative = 1e-12);
        assert_eq!(p.feed_rate, p.transit_rate);
        assert_eq!(p.lambda_probe, 780e-9);
        assert_eq!(p.lambda_coupling, 480e-9);
        assert_eq!(p.temperature, 293.15);
        p.validate().unwrap();
    }

    #[test]
    fn rabi_conversion_reference_values() {
        let d34 = ea0(2272.4);
        assert_eq!(rabi_from_field(d34, 0.0), 0.0);
        // independently computed with CODATA e, a0, ħ
        assert_relative_eq!(
            to_mhz(rabi_from_field(d34, 1.0)),
            58.152_752_247_83,
            max_relative = 1e-11
        );
        // 0.65 V/m exterior with perturbation factor 0.54
        assert_relative_eq!(
            to_mhz(rabi_from_field(d34, 0.65 * 0.54)),
            20.411_616_038_99,
            max_relative = 1e-11
        );
    }

    #[test]
    fn rabi_rf_applies_perturbation_factor() {
        let atoms = default_rb85_params();
        let drive = DriveParams {
            rabi_probe: mhz(1.32),
            rabi_coupling: mhz(2.38),
            e_rf: 0.65,
            perturbation_factor: 0.54,
            delta_p: 0.0,
            delta_2photon: 0.0,
            delta_rf: 0.0,
        };
        assert_relative_eq!(
            to_mhz(drive.rabi_rf(&atoms)),
            20.411_616_038_99,
            max_relative = 1e-11
        );
    }

    #[test]
    fn doppler_sigma_reference_value() {
        let p = default_rb85_params();
        // sqrt(kB · 293.15 K / m_Rb85), independent arithmetic
        assert_relative_eq!(doppler_sigma(&p), 169.425_214_610_7, max_relative = 1e-11);
    }

    #[test]
    fn doppler_sigma_scaling_limits() {
        let mut p = default_rb85_params();
        let s1 = doppler_sigma(&p);
        p.temperature *= 4.0;
        assert_relative_eq!(doppler_sigma(&p), 2.0 * s1, max_relative = 1e-14);
        p.temperature /= 4.0;
        p.mass *= 1e12; // m → ∞ limit
        assert_abs_diff_eq!(doppler_sigma(&p), 0.0, epsilon = 1e-3);
    }

    #[test]
    fn modulation_amplitudes_satisfy_power_split() {
        for k in 0..50 {
            let beta = 0.4999 * k as f64 / 49.0;
            let m = ModulationParams::new(mhz(3.0), beta).unwrap();
            let (a0, a1) = (m.a0(), m.a1());
            assert_relative_eq!(2.0 * a1 * a1 + a0 * a0, 1.0, max_relative = 1e-12);
            assert_abs_diff_eq!(
                ModulationParams::beta_from_amplitudes(a0, a1),
                beta,
                epsilon = 1e-12
            );
        }
        // at β = 0.25 half the power sits in the two sidebands
        let m = ModulationParams::new(mhz(3.0), 0.25).unwrap();
        assert_relative_eq!(m.a1() / m.a0(), 0.5_f64.sqrt(), max_relative = 1e-12);
        // β = 0 is a pure carrier
        let m0 = ModulationParams::new(mhz(3.0), 0.0).unwrap();
        assert_eq!(m0.a1(), 0.0);
        assert_eq!(m0.a0(), 1.0);
    }

    #[test]
    fn modulation_rejects_out_of_range_beta() {
        assert!(ModulationParams::new(mhz(3.0), 0.5).is_err());
        assert!(ModulationParams::new(mhz(3.0), -0.01).is_err());
        assert!(ModulationParams::new(-1.0, 0.25).is_err());
    }

    #[test]
    fn detuning_scan_keeps_coupling_detuning_fixed() {
        let drive = DriveParams {
            rabi_probe: mhz(1.32),
            rabi_coupling: mhz(2.38),
            e_rf: 0.0,
            perturbation_factor: 0.54,
            delta_p: mhz(1.0),
            delta_2photon: mhz(2.5),
            delta_rf: 0.0,
        };
        let moved = drive.at_probe_detuning(mhz(-4.0));
        assert_relative_eq!(moved.delta_coupling(), mhz(1.5), max_relative = 1e-14);
        assert_relative_eq!(moved.delta_2photon, mhz(-2.5), max_relative = 1e-14);
    }

    #[test]
    fn validation_rejects_bad_domains() {
        let mut p = default_rb85_params();
        p.gamma_2 = 0.0;
        assert!(p.validate().is_err());
        let mut p = default_rb85_params();
        p.feed_rate = 2.0 * p.transit_rate;
        assert!(p.validate().is_err());

        let mut d = DriveParams {
            rabi_probe: mhz(1.32),
            rabi_coupling: mhz(2.38),
            e_rf: 0.0,
            perturbation_factor: 0.54,
            delta_p: 0.0,
            delta_2photon: 0.0,
            delta_rf: 0.0,
        };
        d.validate().unwrap();
        d.perturbation_factor = 0.0;
        assert!(d.validate().is_err());
        d.perturbation_factor = 1.5;
        assert!(d.validate().is_err());
        d.perturbation_factor = 0.54;
        d.rabi_probe = -1.0;
        assert!(d.validate().is_err());
    }
}
