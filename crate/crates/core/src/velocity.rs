//! Velocity grids for Doppler averaging over the 1-D Maxwell distribution.
//!
//! Three constructions:
//!
//! * [`maxwell_grid`] — Gauss–Hermite quadrature scaled to the thermal
//!   width: exact for polynomial moments against the full Gaussian, the
//!   contract-level reference rule.
//! * [`uniform_grid`] — equally spaced nodes with trapezoid × pdf weights,
//!   a brute-force cross-check.
//! * [`resolved_grid`] — the production default: a composite trapezoid rule
//!   that is dense where atoms are Doppler-shifted into resonance (the
//!   narrowest Lorentzian velocity features are a few m/s wide, far finer
//!   than any fixed-order Gaussian rule can resolve), coarser over the
//!   smooth thermal wings.
//!
//! All grids carry weights that sum to 1 and nodes symmetric about 0.

use crate::{Result, SimError};

/// Quadrature rule for ∫ P(v) f(v) dv with P the 1-D Maxwell distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityGrid {
    /// Node velocities (m/s), strictly increasing, symmetric about 0.
    pub nodes: Vec<f64>,
    /// Nonnegative weights summing to 1.
    pub weights: Vec<f64>,
}

impl VelocityGrid {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// k-th raw moment Σ wᵢ vᵢᵏ.
    pub fn moment(&self, k: u32) -> f64 {
        self.nodes
            .iter()
            .zip(self.weights.iter())
            .map(|(v, w)| w * v.powi(k as i32))
            .sum()
    }

    /// Checks normalization, ordering, symmetry, and weight positivity.
    pub fn validate(&self) -> Result<()> {
        let n = self.nodes.len();
        if n == 0 || self.weights.len() != n {
            return Err(SimError::GridMismatch {
                reason: format!(
                    "velocity grid needs matching non-empty nodes/weights, got {}/{}",
                    n,
                    self.weights.len()
                ),
            });
        }
        let sum: f64 = self.weights.iter().sum();
        if (sum - 1.0).abs() > 1e-10 {
            return Err(SimError::GridMismatch {
                reason: format!("velocity weights sum to {sum}, expected 1 ± 1e-10"),
            });
        }
        if self.weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(SimError::GridMismatch {
                reason: "velocity weights must be finite and nonnegative".into(),
            });
        }
        let span = self.nodes[n - 1].abs().max(self.nodes[0].abs()).max(1.0);
        for k in 1..n {
            if !(self.nodes[k] > self.nodes[k - 1]) {
                return Err(SimError::GridMismatch {
                    reason: format!("velocity nodes must increase strictly at index {k}"),
                });
            }
        }
        for k in 0..n {
            if (self.nodes[k] + self.nodes[n - 1 - k]).abs() > 1e-9 * span {
                return Err(SimError::GridMismatch {
                    reason: format!("velocity nodes not symmetric about 0 at index {k}"),
                });
            }
        }
        Ok(())
    }

    fn normalized(mut self) -> Self {
        let sum: f64 = self.weights.iter().sum();
        for w in self.weights.iter_mut() {
            *w /= sum;
        }
        self
    }
}

/// Orthonormal Hermite recurrence: returns (p_n(x), p_{n−1}(x)) and the
/// Christoffel sum Σ_{j<n} p_j(x)².
fn hermite_orthonormal(n: usize, x: f64) -> (f64, f64, f64) {
    let mut p_prev = 0.0f64;
    let mut p = std::f64::consts::PI.powf(-0.25);
    let mut christoffel = p * p;
    for j in 0..n {
        let p_next = x * (2.0 / (j as f64 + 1.0)).sqrt() * p
            - (j as f64 / (j as f64 + 1.0)).sqrt() * p_prev;
        p_prev = p;
        p = p_next;
        if j + 1 < n {
            christoffel += p * p;
        }
    }
    (p, p_prev, christoffel)
}

/// Positive roots of the degree-n orthonormal Hermite polynomial, found by
/// sign-change bracketing plus Newton polish (derivative p'_n = √(2n)·p_{n−1}).
fn hermite_positive_roots(n: usize) -> Vec<f64> {
    let upper = ((2 * n + 1) as f64).sqrt();
    let samples = 16 * n;
    let mut roots = Vec::with_capacity(n / 2);
    let eval = |x: f64| hermite_orthonormal(n, x).0;
    // start just above 0 so the odd-n root at the origin is not double-counted
    let start = upper * 1e-9;
    let mut x_lo = start;
    let mut f_lo = eval(x_lo);
    for k in 1..=samples {
        let x_hi = start + (upper - start) * k as f64 / samples as f64;
        let f_hi = eval(x_hi);
        if f_lo == 0.0 {
            roots.push(x_lo);
        } else if f_lo * f_hi < 0.0 {
            // bisect to a tight bracket, then Newton
            let (mut a, mut b, mut fa) = (x_lo, x_hi, f_lo);
            for _ in 0..30 {
                let m = 0.5 * (a + b);
                let fm = eval(m);
                if fa * fm <= 0.0 {
                    b = m;
                } else {
                    a = m;
                    fa = fm;
                }
            }
            let mut x = 0.5 * (a + b);
            for _ in 0..8 {
                let (p, p_prev, _) = hermite_orthonormal(n, x);
                let dp = (2.0 * n as f64).sqrt() * p_prev;
                let step = p / dp;
                x -= step;
                if step.abs() < 1e-15 * (1.0 + x.abs()) {
                    break;
                }
            }
            roots.push(x);
        }
        x_lo = x_hi;
        f_lo = f_hi;
    }
    roots
}

/// Gauss–Hermite rule scaled to the Maxwell distribution of width `sigma`.
///
/// Exact for polynomial moments up to degree 2n−1 against the full
/// Gaussian. Nodes falling outside ±`span_sigmas`·σ are discarded (their
/// Gaussian weights are negligible for any span beyond ≈6σ) and the weights
/// renormalized.
pub fn maxwell_grid(sigma: f64, n_nodes: usize, span_sigmas: f64) -> Result<VelocityGrid> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(SimError::InvalidParameter {
            reason: format!("maxwell_grid requires sigma > 0, got {sigma}"),
        });
    }
    if n_nodes < 3 {
        return Err(SimError::InvalidParameter {
            reason: format!("maxwell_grid requires at least 3 nodes, got {n_nodes}"),
        });
    }
    if !(span_sigmas >= 3.0) {
        return Err(SimError::InvalidParameter {
            reason: format!("maxwell_grid requires span_sigmas ≥ 3, got {span_sigmas}"),
        });
    }

    let positive = hermite_positive_roots(n_nodes);
    let expected = n_nodes / 2;
    if positive.len() != expected {
        return Err(SimError::InvalidParameter {
            reason: format!(
                "Hermite root search found {} of {} positive roots for n = {}",
                positive.len(),
                expected,
                n_nodes
            ),
        });
    }

    let scale = std::f64::consts::SQRT_2 * sigma;
    let mut nodes = Vec::with_capacity(n_nodes);
    let mut weights = Vec::with_capacity(n_nodes);
    let mut half = Vec::with_capacity(expected);
    for &x in &positive {
        let (_, _, christoffel) = hermite_orthonormal(n_nodes, x);
        // against the orthonormal family, 1/Σ_{j<n} p_j(x_i)² is exactly the
        // node's share of the normalized Gaussian measure: Σ_i of it is 1
        half.push((x * scale, 1.0 / christoffel));
    }
    // mirror bitwise so symmetry is exact
    for &(v, w) in half.iter().rev() {
        nodes.push(-v);
        weights.push(w);
    }
    if n_nodes % 2 == 1 {
        let (_, _, christoffel) = hermite_orthonormal(n_nodes, 0.0);
        nodes.push(0.0);
        weights.push(1.0 / christoffel);
    }
    for &(v, w) in half.iter() {
        nodes.push(v);
        weights.push(w);
    }

    let cutoff = span_sigmas * sigma;
    let kept: Vec<(f64, f64)> = nodes
        .iter()
        .zip(weights.iter())
        .filter(|(v, _)| v.abs() <= cutoff)
        .map(|(v, w)| (*v, *w))
        .collect();
    let grid = VelocityGrid {
        nodes: kept.iter().map(|(v, _)| *v).collect(),
        weights: kept.iter().map(|(_, w)| *w).collect(),
    }
    .normalized();
    grid.validate()?;
    Ok(grid)
}

/// The 1-D Maxwell pdf (unnormalized shape; normalization is restored by
/// the weight renormalization).
fn maxwell_shape(v: f64, sigma: f64) -> f64 {
    (-0.5 * (v / sigma).powi(2)).exp()
}

/// Equally spaced nodes on ±`span_sigmas`·σ with trapezoid × pdf weights.
pub fn uniform_grid(sigma: f64, n_nodes: usize, span_sigmas: f64) -> Result<VelocityGrid> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(SimError::InvalidParameter {
            reason: format!("uniform_grid requires sigma > 0, got {sigma}"),
        });
    }
    if n_nodes < 3 {
        return Err(SimError::InvalidParameter {
            reason: format!("uniform_grid requires at least 3 nodes, got {n_nodes}"),
        });
    }
    if !(span_sigmas > 0.0) || !span_sigmas.is_finite() {
        return Err(SimError::InvalidParameter {
            reason: format!("uniform_grid requires span_sigmas > 0, got {span_sigmas}"),
        });
    }
    let a = span_sigmas * sigma;
    let h = 2.0 * a / (n_nodes - 1) as f64;
    let mut nodes = Vec::with_capacity(n_nodes);
    let mut weights = Vec::with_capacity(n_nodes);
    for k in 0..n_nodes {
        // build from the symmetric index so ±pairs are exact mirrors
        let v = -a + k as f64 * h;
        let v = if 2 * k + 1 == n_nodes { 0.0 } else { v };
        let cell = if k == 0 || k == n_nodes - 1 { 0.5 * h } else { h };
        nodes.push(v);
        weights.push(cell * maxwell_shape(v, sigma));
    }
    // enforce exact mirror symmetry of nodes and weights
    for k in 0..n_nodes / 2 {
        let m = n_nodes - 1 - k;
        nodes[k] = -nodes[m];
        weights[k] = weights[m];
    }
    let grid = VelocityGrid { nodes, weights }.normalized();
    grid.validate()?;
    Ok(grid)
}

/// Composite feature-resolving grid: dense core where single-photon or
/// two-photon resonance selects velocity classes (feature widths of order
/// γ/k ≈ 1–3 m/s), medium band over the near wings, sparse band to 5σ.
/// `res` scales all three densities (res = 2 halves every spacing), the
/// knob used by refinement-convergence checks.
pub fn resolved_grid(sigma: f64, res: f64) -> Result<VelocityGrid> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(SimError::InvalidParameter {
            reason: format!("resolved_grid requires sigma > 0, got {sigma}"),
        });
    }
    if !(res > 0.0) || !res.is_finite() {
        return Err(SimError::InvalidParameter {
            reason: format!("resolved_grid requires res > 0, got {res}"),
        });
    }
    // segment edges (m/s) and spacings chosen for the Rb ladder: the
    // narrowest velocity feature is the two-photon window ≈ 0.8 m/s wide,
    // resolved in the core; the wings only need to track the Maxwell pdf
    let edges = [0.0, 90.0_f64.min(5.0 * sigma), 280.0_f64.min(5.0 * sigma), 5.0 * sigma];
    let steps = [0.75 / res, 4.0 / res, 16.0 / res];

    let mut positive: Vec<f64> = Vec::new();
    for seg in 0..3 {
        let (lo, hi) = (edges[seg], edges[seg + 1]);
        if hi <= lo {
            continue;
        }
        let count = ((hi - lo) / steps[seg]).ceil().max(1.0) as usize;
        let h = (hi - lo) / count as f64;
        for k in 1..=count {
            positive.push(lo + k as f64 * h);
        }
    }

    let mut nodes = Vec::with_capacity(2 * positive.len() + 1);
    for &v in positive.iter().rev() {
        nodes.push(-v);
    }
    nodes.push(0.0);
    nodes.extend(positive.iter().copied());

    let n = nodes.len();
    let mut weights = vec![0.0; n];
    for k in 0..n {
        let left = if k == 0 { nodes[0] } else { nodes[k - 1] };
        let right = if k == n - 1 { nodes[n - 1] } else { nodes[k + 1] };
        weights[k] = 0.5 * (right - left) * maxwell_shape(nodes[k], sigma);
    }
    for k in 0..n / 2 {
        weights[k] = weights[n - 1 - k];
    }
    let grid = VelocityGrid { nodes, weights }.normalized();
    grid.validate()?;
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    const SIGMA: f64 = 169.0;

    #[test]
    fn maxwell_grid_matches_gaussian_moments() {
        for n in [3, 8, 31, 64, 65] {
            let g = maxwell_grid(SIGMA, n, 20.0).unwrap();
            assert_eq!(g.len(), n);
            assert_abs_diff_eq!(g.moment(0), 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(g.moment(1), 0.0, epsilon = 1e-12);
            assert_relative_eq!(g.moment(2), SIGMA * SIGMA, max_relative = 1e-9);
        }
    }

    #[test]
    fn maxwell_grid_is_exact_for_high_moments() {
        // 64 nodes integrate polynomials up to degree 127 exactly
        let g = maxwell_grid(SIGMA, 64, 20.0).unwrap();
        assert_relative_eq!(g.moment(4), 3.0 * SIGMA.powi(4), max_relative = 1e-12);
        assert_relative_eq!(g.moment(6), 15.0 * SIGMA.powi(6), max_relative = 1e-12);
        assert_relative_eq!(g.moment(8), 105.0 * SIGMA.powi(8), max_relative = 1e-11);
        assert_relative_eq!(g.moment(10), 945.0 * SIGMA.powi(10), max_relative = 1e-11);
        // a 3-node rule is already exact through degree 5
        let g3 = maxwell_grid(SIGMA, 3, 20.0).unwrap();
        assert_relative_eq!(g3.moment(2), SIGMA * SIGMA, max_relative = 1e-12);
        assert_relative_eq!(g3.moment(4), 3.0 * SIGMA.powi(4), max_relative = 1e-12);
    }

    #[test]
    fn maxwell_grid_nodes_are_symmetric_and_sorted() {
        for n in [64, 65] {
            let g = maxwell_grid(SIGMA, n, 20.0).unwrap();
            g.validate().unwrap();
            for k in 0..n {
                assert_eq!(g.nodes[k], -g.nodes[n - 1 - k], "mirror pair {k}");
                assert_eq!(g.weights[k], g.weights[n - 1 - k]);
            }
            if n % 2 == 1 {
                assert_eq!(g.nodes[n / 2], 0.0);
            }
        }
    }

    #[test]
    fn maxwell_grid_truncates_at_the_requested_span() {
        let g = maxwell_grid(SIGMA, 65, 3.0).unwrap();
        assert!(g.len() < 65);
        assert!(g.nodes.iter().all(|v| v.abs() <= 3.0 * SIGMA));
        assert_abs_diff_eq!(g.moment(0), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(g.moment(1), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn maxwell_grid_rejects_bad_arguments() {
        assert!(maxwell_grid(SIGMA, 2, 20.0).is_err());
        assert!(maxwell_grid(SIGMA, 64, 2.9).is_err());
        assert!(maxwell_grid(0.0, 64, 20.0).is_err());
        assert!(maxwell_grid(-1.0, 64, 20.0).is_err());
    }

    #[test]
    fn uniform_grid_matches_contract() {
        let g = uniform_grid(SIGMA, 801, 4.0).unwrap();
        g.validate().unwrap();
        assert_eq!(g.len(), 801);
        assert_abs_diff_eq!(g.moment(0), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(g.moment(1), 0.0, epsilon = 1e-12);
        // truncation at 4σ biases the second moment at the 1e-3 level;
        // that is inherent to the fallback rule
        assert_relative_eq!(g.moment(2), SIGMA * SIGMA, max_relative = 2e-3);
        assert_eq!(g.nodes[400], 0.0);
        assert_abs_diff_eq!(g.nodes[800], 4.0 * SIGMA, epsilon = 1e-9);
    }

    #[test]
    fn resolved_grid_is_dense_in_the_core_and_reaches_the_wings() {
        let g = resolved_grid(SIGMA, 1.0).unwrap();
        g.validate().unwrap();
        let center = g.nodes.iter().position(|v| *v == 0.0).unwrap();
        let core_spacing = g.nodes[center + 1] - g.nodes[center];
        assert!(core_spacing <= 0.75 + 1e-12);
        assert_relative_eq!(*g.nodes.last().unwrap(), 5.0 * SIGMA, max_relative = 1e-12);
        assert_abs_diff_eq!(g.moment(0), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(g.moment(1), 0.0, epsilon = 1e-10);
        // the composite trapezoid rule tracks the Gaussian second moment well
        assert_relative_eq!(g.moment(2), SIGMA * SIGMA, max_relative = 1e-3);
    }

    #[test]
    fn resolved_grid_res_knob_refines_everywhere() {
        let g1 = resolved_grid(SIGMA, 1.0).unwrap();
        let g2 = resolved_grid(SIGMA, 2.0).unwrap();
        assert!(g2.len() > 2 * g1.len() - 10);
        let center1 = g1.nodes.iter().position(|v| *v == 0.0).unwrap();
        let center2 = g2.nodes.iter().position(|v| *v == 0.0).unwrap();
        let h1 = g1.nodes[center1 + 1] - g1.nodes[center1];
        let h2 = g2.nodes[center2 + 1] - g2.nodes[center2];
        assert_relative_eq!(h1 / h2, 2.0, max_relative = 1e-9);
    }

    #[test]
    fn validate_catches_broken_grids() {
        let mut g = uniform_grid(SIGMA, 11, 4.0).unwrap();
        g.weights[3] += 0.1;
        assert!(g.validate().is_err());
        let mut g = uniform_grid(SIGMA, 11, 4.0).unwrap();
        g.nodes[2] = g.nodes[3];
        assert!(g.validate().is_err());
        let mut g = uniform_grid(SIGMA, 11, 4.0).unwrap();
        g.nodes[0] = -g.nodes[10] * 1.5;
        assert!(g.validate().is_err());
    }
}
