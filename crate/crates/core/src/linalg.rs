//! Dense complex linear algebra on the fixed 16-component state space.
//!
//! The steady-state solvers factor 16×16 complex matrices thousands of times
//! per spectrum point (once per velocity class), so the kernel is written
//! directly against fixed-size arrays: no allocation, row-major `[C64; 256]`,
//! partial-pivoted LU with a cheap |re|+|im| pivot magnitude. A diagonal
//! ratio of the U factor serves as a conditioning guard; anything below
//! 1e-14 is reported as singular rather than silently amplifying noise.

use crate::{C64, Result, SimError};

/// Row-major 16×16 complex matrix.
pub type Mat16 = [C64; 256];
/// Length-16 complex vector.
pub type Vec16 = [C64; 16];

pub const ZERO_MAT: Mat16 = [C64::new(0.0, 0.0); 256];
pub const ZERO_VEC: Vec16 = [C64::new(0.0, 0.0); 16];

/// Conditioning threshold: a pivot-ratio below this rejects the factorization.
pub const RCOND_MIN: f64 = 1e-14;

#[inline]
fn mag(z: C64) -> f64 {
    z.re.abs() + z.im.abs()
}

/// y = A·x.
pub fn matvec(a: &Mat16, x: &Vec16) -> Vec16 {
    let mut y = ZERO_VEC;
    for i in 0..16 {
        let row = &a[16 * i..16 * i + 16];
        let mut acc = C64::new(0.0, 0.0);
        for (k, xv) in x.iter().enumerate() {
            acc += row[k] * xv;
        }
        y[i] = acc;
    }
    y
}

/// C = A·B.
pub fn matmul(a: &Mat16, b: &Mat16) -> Mat16 {
    let mut c = ZERO_MAT;
    for i in 0..16 {
        for k in 0..16 {
            let aik = a[16 * i + k];
            if aik.re == 0.0 && aik.im == 0.0 {
                continue;
            }
            let brow = &b[16 * k..16 * k + 16];
            let crow = &mut c[16 * i..16 * i + 16];
            for j in 0..16 {
                crow[j] += aik * brow[j];
            }
        }
    }
    c
}

/// C = A + B.
pub fn matadd(a: &Mat16, b: &Mat16) -> Mat16 {
    let mut c = *a;
    for (cv, bv) in c.iter_mut().zip(b.iter()) {
        *cv += bv;
    }
    c
}

/// C = A − B.
pub fn matsub(a: &Mat16, b: &Mat16) -> Mat16 {
    let mut c = *a;
    for (cv, bv) in c.iter_mut().zip(b.iter()) {
        *cv -= bv;
    }
    c
}

/// Transpose-conjugate mirror of a superoperator: if `m` generates the
/// dynamics of ρ components indexed (i,j) → 4i+j, the mirror generates the
/// dynamics of the conjugated, index-swapped components. Element-wise:
/// `out[a·16+b] = conj(m[swap(a)·16+swap(b)])` with `swap(4i+j) = 4j+i`.
pub fn conj_mirror(m: &Mat16) -> Mat16 {
    let mut out = ZERO_MAT;
    for a in 0..16 {
        let sa = swap_idx(a);
        for b in 0..16 {
            out[16 * a + b] = m[16 * sa + swap_idx(b)].conj();
        }
    }
    out
}

/// Vector counterpart of [`conj_mirror`]: `out[4i+j] = conj(v[4j+i])`.
pub fn conj_mirror_vec(v: &Vec16) -> Vec16 {
    let mut out = ZERO_VEC;
    for a in 0..16 {
        out[a] = v[swap_idx(a)].conj();
    }
    out
}

#[inline]
fn swap_idx(a: usize) -> usize {
    4 * (a % 4) + a / 4
}

/// LU factorization of a 16×16 complex matrix with partial pivoting.
pub struct Lu16 {
    lu: Mat16,
    piv: [u8; 16],
    /// min |U_ii| / max |U_ii| — a cheap conditioning estimate.
    pub rcond: f64,
}

impl Lu16 {
    /// Factors `a` in place (a copy is taken). Fails with
    /// [`SimError::Singular`] when the pivot ratio drops below
    /// [`RCOND_MIN`].
    pub fn factor(a: &Mat16) -> Result<Self> {
        let mut lu = *a;
        let mut piv = [0u8; 16];
        let mut min_d = f64::INFINITY;
        let mut max_d: f64 = 0.0;

        for col in 0..16 {
            // pivot search on |re|+|im|
            let mut best = col;
            let mut best_mag = mag(lu[16 * col + col]);
            for row in col + 1..16 {
                let m = mag(lu[16 * row + col]);
                if m > best_mag {
                    best_mag = m;
                    best = row;
                }
            }
            piv[col] = best as u8;
            if best != col {
                for j in 0..16 {
                    lu.swap(16 * col + j, 16 * best + j);
                }
            }
            let d = lu[16 * col + col];
            let dm = d.norm();
            min_d = min_d.min(dm);
            max_d = max_d.max(dm);
            if dm == 0.0 {
                return Err(SimError::Singular { rcond: 0.0 });
            }
            let dinv = d.inv();
            for row in col + 1..16 {
                let f = lu[16 * row + col] * dinv;
                lu[16 * row + col] = f;
                if f.re == 0.0 && f.im == 0.0 {
                    continue;
                }
                for j in col + 1..16 {
                    let u = lu[16 * col + j];
                    lu[16 * row + j] -= f * u;
                }
            }
        }

        let rcond = if max_d > 0.0 { min_d / max_d } else { 0.0 };
        if rcond < RCOND_MIN {
            return Err(SimError::Singular { rcond });
        }
        Ok(Self { lu, piv, rcond })
    }

    /// Solves A·x = b.
    pub fn solve_vec(&self, b: &Vec16) -> Vec16 {
        let mut x = *b;
        // the stored multipliers are in fully pivoted row order, so the
        // complete permutation must be applied before elimination starts
        for i in 0..16 {
            let p = self.piv[i] as usize;
            if p != i {
                x.swap(i, p);
            }
        }
        // forward substitution (unit lower)
        for i in 0..16 {
            let xi = x[i];
            if xi.re == 0.0 && xi.im == 0.0 {
                continue;
            }
            for row in i + 1..16 {
                let f = self.lu[16 * row + i];
                if f.re != 0.0 || f.im != 0.0 {
                    x[row] -= f * xi;
                }
            }
        }
        // back substitution
        for i in (0..16).rev() {
            let mut acc = x[i];
            for j in i + 1..16 {
                acc -= self.lu[16 * i + j] * x[j];
            }
            x[i] = acc * self.lu[16 * i + i].inv();
        }
        x
    }

    /// Solves A·X = B for a full 16×16 right-hand side (column-by-column on
    /// the row-major layout).
    pub fn solve_mat(&self, b: &Mat16) -> Mat16 {
        let mut x = *b;
        for i in 0..16 {
            let p = self.piv[i] as usize;
            if p != i {
                for j in 0..16 {
                    x.swap(16 * i + j, 16 * p + j);
                }
            }
        }
        // forward pass on all columns at once
        for i in 0..16 {
            for row in i + 1..16 {
                let f = self.lu[16 * row + i];
                if f.re == 0.0 && f.im == 0.0 {
                    continue;
                }
                let (top, bot) = x.split_at_mut(16 * row);
                let xi = &top[16 * i..16 * i + 16];
                let xr = &mut bot[..16];
                for j in 0..16 {
                    xr[j] -= f * xi[j];
                }
            }
        }
        for i in (0..16).rev() {
            for row in i + 1..16 {
                let f = self.lu[16 * i + row];
                if f.re == 0.0 && f.im == 0.0 {
                    continue;
                }
                let (top, bot) = x.split_at_mut(16 * row);
                let xi = &mut top[16 * i..16 * i + 16];
                let xr = &bot[..16];
                for j in 0..16 {
                    xi[j] -= f * xr[j];
                }
            }
            let dinv = self.lu[16 * i + i].inv();
            for j in 0..16 {
                x[16 * i + j] *= dinv;
            }
        }
        x
    }
}

/// ‖A·x − b‖∞.
pub fn residual_inf(a: &Mat16, x: &Vec16, b: &Vec16) -> f64 {
    let ax = matvec(a, x);
    ax.iter()
        .zip(b.iter())
        .map(|(l, r)| (l - r).norm())
        .fold(0.0, f64::max)
}

/// ‖v‖∞.
pub fn norm_inf(v: &Vec16) -> f64 {
    v.iter().map(|z| z.norm()).fold(0.0, f64::max)
}
