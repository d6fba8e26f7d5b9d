//! Builders for the vectorized density-matrix equation of motion.
//!
//! The four-level ladder density matrix ρ is flattened row-major into a
//! 16-vector, ρ_(i,j) ↦ v[4i+j] with 0-based level indices. The equation of
//! motion is dv/dt = (M(t) − R)·v + N with
//!
//! * M(t) = M0 + M₊e^{−iω_mod t} + M₋e^{+iω_mod t}: the coherent commutator
//!   term −i[H(t), ρ]/ħ split into Fourier harmonics of the coupling-beam
//!   modulation,
//! * R: field-independent relaxation (spontaneous decay down the ladder,
//!   transit dephasing on every element),
//! * N: the constant ground-state feed that balances transit loss.
//!
//! With feed rate equal to transit rate, d(tr ρ)/dt = γ_t(1 − tr ρ): the
//! trace relaxes to exactly 1, so R − M(t) stays nonsingular and the steady
//! state needs no trace-pinning row.

use crate::atom::{AtomicParams, DriveParams, ModulationParams};
use crate::linalg::{Mat16, Vec16, ZERO_MAT, ZERO_VEC};
use crate::C64;

/// Vectorized density matrix, ρ_(i,j) stored at index 4i+j.
pub type DensityVec = Vec16;
/// Dense 4×4 complex matrix on the bare-level space.
pub type Mat4 = [[C64; 4]; 4];

/// Flat index of the density-matrix element (i, j), 0-based.
#[inline]
pub const fn idx(i: usize, j: usize) -> usize {
    4 * i + j
}

/// ρ as a 4×4 matrix → flat 16-vector.
pub fn vectorize(rho: &Mat4) -> DensityVec {
    let mut v = ZERO_VEC;
    for i in 0..4 {
        for j in 0..4 {
            v[idx(i, j)] = rho[i][j];
        }
    }
    v
}

/// Flat 16-vector → ρ as a 4×4 matrix.
pub fn devectorize(v: &DensityVec) -> Mat4 {
    let mut rho = [[C64::new(0.0, 0.0); 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            rho[i][j] = v[idx(i, j)];
        }
    }
    rho
}

/// tr ρ.
pub fn trace(v: &DensityVec) -> C64 {
    v[idx(0, 0)] + v[idx(1, 1)] + v[idx(2, 2)] + v[idx(3, 3)]
}

/// max |ρ_(i,j) − ρ_(j,i)*| — zero for a physical density matrix.
pub fn hermiticity_defect(v: &DensityVec) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..4 {
        for j in 0..4 {
            worst = worst.max((v[idx(i, j)] - v[idx(j, i)].conj()).norm());
        }
    }
    worst
}

/// The rotating-frame Hamiltonian split into modulation harmonics,
/// H(t) = carrier + plus·e^{−iω_mod t} + minus·e^{+iω_mod t},
/// all in units of ħ (entries are rad/s).
#[derive(Debug, Clone, Copy)]
pub struct HamiltonianParts {
    pub carrier: Mat4,
    pub plus: Mat4,
    pub minus: Mat4,
}

/// Builds the three Hamiltonian harmonics for one velocity class.
///
/// Doppler shifts for counter-propagating probe/coupling beams move the
/// detunings to Δ21 − k_p v, Δ31 + (k_c − k_p) v; the RF transition has a
/// negligible wavenumber and keeps Δ41 = Δ31(v) − Δ_RF. The coupling Rabi
/// frequency is split by the phase modulation into a carrier fraction a0 and
/// antisymmetric first-order sidebands ±a1.
pub fn build_hamiltonian(
    atoms: &AtomicParams,
    drive: &DriveParams,
    modp: &ModulationParams,
    velocity: f64,
) -> HamiltonianParts {
    let zero = C64::new(0.0, 0.0);
    let re = |x: f64| C64::new(x, 0.0);

    let kp = atoms.k_probe();
    let kc = atoms.k_coupling();
    let d21 = drive.delta_p - kp * velocity;
    let d31 = drive.delta_2photon + (kc - kp) * velocity;
    let d41 = d31 - drive.delta_rf;

    let wp = drive.rabi_probe;
    let wc0 = modp.a0() * drive.rabi_coupling;
    let wc1 = modp.a1() * drive.rabi_coupling;
    let wrf = drive.rabi_rf(atoms);

    let mut carrier = [[zero; 4]; 4];
    carrier[0][1] = re(-0.5 * wp);
    carrier[1][0] = re(-0.5 * wp);
    carrier[1][1] = re(-d21);
    carrier[1][2] = re(-0.5 * wc0);
    carrier[2][1] = re(-0.5 * wc0);
    carrier[2][2] = re(-d31);
    carrier[2][3] = re(-0.5 * wrf);
    carrier[3][2] = re(-0.5 * wrf);
    carrier[3][3] = re(-d41);

    // Coupling sideband amplitudes enter with opposite signs, so the
    // harmonic parts are antisymmetric: minus = plus† = −plus.
    let mut plus = [[zero; 4]; 4];
    plus[2][1] = re(-0.5 * wc1);
    plus[1][2] = re(0.5 * wc1);
    let mut minus = [[zero; 4]; 4];
    minus[2][1] = re(0.5 * wc1);
    minus[1][2] = re(-0.5 * wc1);

    HamiltonianParts {
        carrier,
        plus,
        minus,
    }
}

/// The commutator superoperator −i[H, ·] acting on vectorized ρ.
pub fn commutator_super(h: &Mat4) -> Mat16 {
    let i_unit = C64::new(0.0, 1.0);
    let mut m = ZERO_MAT;
    for i in 0..4 {
        for k in 0..4 {
            let hik = h[i][k];
            if hik.re == 0.0 && hik.im == 0.0 {
                continue;
            }
            for j in 0..4 {
                // −i H_ik ρ_kj contributes to dρ_ij
                m[16 * idx(i, j) + idx(k, j)] -= i_unit * hik;
                // +i ρ_jk H_ki ... written as +i H_ik acting from the right:
                // dρ_ji gains +i ρ_jk H_ki ⇒ use the same (i,k) loop with the
                // roles mirrored below.
            }
        }
    }
    for k in 0..4 {
        for j in 0..4 {
            let hkj = h[k][j];
            if hkj.re == 0.0 && hkj.im == 0.0 {
                continue;
            }
            for i in 0..4 {
                // +i ρ_ik H_kj contributes to dρ_ij
                m[16 * idx(i, j) + idx(i, k)] += i_unit * hkj;
            }
        }
    }
    m
}

/// The relaxation superoperator R (positive rates; enters as −R).
///
/// Populations decay one step down the ladder (4→3→2→1) at Γ of the upper
/// level; coherences dephase at the mean of their levels' decay rates; the
/// transit rate γ_t adds to every element.
pub fn relaxation_super(atoms: &AtomicParams) -> Mat16 {
    let g = [0.0, atoms.gamma_2, atoms.gamma_3, atoms.gamma_4];
    let gt = atoms.transit_rate;
    let mut r = ZERO_MAT;
    for i in 0..4 {
        for j in 0..4 {
            let a = idx(i, j);
            let rate = if i == j {
                g[i] + gt
            } else {
                0.5 * (g[i] + g[j]) + gt
            };
            r[16 * a + a] = C64::new(rate, 0.0);
        }
    }
    // cascade: population lost from level i+1 reappears in level i
    for i in 0..3 {
        r[16 * idx(i, i) + idx(i + 1, i + 1)] = C64::new(-g[i + 1], 0.0);
    }
    r
}

/// The constant feed vector N: atoms enter the beam in the ground state at
/// the transit rate.
pub fn feed_vec(atoms: &AtomicParams) -> Vec16 {
    let mut n = ZERO_VEC;
    n[idx(0, 0)] = C64::new(atoms.feed_rate, 0.0);
    n
}

/// All generators of the vectorized equation of motion for one velocity
/// class: dv/dt = (m0 + m_plus·e^{−iωt} + m_minus·e^{+iωt} − r)·v + n.
#[derive(Debug, Clone)]
pub struct GeneratorSet {
    pub m0: Mat16,
    pub m_plus: Mat16,
    pub m_minus: Mat16,
    pub r: Mat16,
    pub n: Vec16,
}

/// Builds the full generator set for one velocity class.
pub fn build_generators(
    atoms: &AtomicParams,
    drive: &DriveParams,
    modp: &ModulationParams,
    velocity: f64,
) -> GeneratorSet {
    let h = build_hamiltonian(atoms, drive, modp, velocity);
    GeneratorSet {
        m0: commutator_super(&h.carrier),
        m_plus: commutator_super(&h.plus),
        m_minus: commutator_super(&h.minus),
        r: relaxation_super(atoms),
        n: feed_vec(atoms),
    }
}
