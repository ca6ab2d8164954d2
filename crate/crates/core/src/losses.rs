//! Trimmed loss, its ξ-augmented form, the subgradient of `V_h`, and the
//! Huber and Tukey baselines.
//!
//! Orderings by magnitude are stable in the original index, so ties are
//! resolved toward lower indices being "smaller".

use crate::error::{Error, Result};
use crate::model::ParamVector;

/// Number of residuals kept by the trimmed loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrimSpec {
    h: usize,
}

impl TrimSpec {
    pub fn new(h: usize, n: usize) -> Result<Self> {
        if h == 0 || h > n {
            return Err(Error::config(format!("trim size h={h} must satisfy 1 <= h <= n={n}")));
        }
        Ok(Self { h })
    }

    /// `h = round(fraction · n)`, clamped to `1..=n`.
    pub fn from_fraction(fraction: f64, n: usize) -> Result<Self> {
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(Error::config(format!("h fraction {fraction} must lie in (0, 1]")));
        }
        let h = round_half_up(fraction * n as f64).clamp(1, n.max(1));
        Self::new(h, n)
    }

    pub fn h(&self) -> usize {
        self.h
    }
}

/// Rounds to the nearest integer, halves upward, absorbing representation
/// error such as `0.07 * 100 = 7.000000000000001`.
pub fn round_half_up(x: f64) -> usize {
    let r = (x + 0.5 + 1e-9).floor();
    if r <= 0.0 {
        0
    } else {
        r as usize
    }
}

/// The parameter/auxiliary pair optimized by SGSD.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedState {
    pub theta: ParamVector,
    pub xi: Vec<f64>,
}

impl AugmentedState {
    /// `ξ = 0`.
    pub fn new(theta: ParamVector, n: usize) -> Self {
        Self {
            theta,
            xi: vec![0.0; n],
        }
    }
}

/// Indices sorted by ascending `|v_i|`, stable in the index.
pub fn magnitude_order(v: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].abs().total_cmp(&v[b].abs()));
    idx
}

/// `(1/n) Σ` of the `h` smallest squared residuals.
pub fn trimmed_loss(r: &[f64], trim: TrimSpec) -> f64 {
    let n = r.len() as f64;
    magnitude_order(r)
        .iter()
        .take(trim.h())
        .map(|&i| r[i] * r[i])
        .sum::<f64>()
        / n
}

/// Minimizer of `(1/n)‖r−ξ‖² + T_h(ξ)` over `ξ` and the minimum value.
///
/// Kept indices (the `h` smallest `|r_i|`) get `ξ_i = r_i/2`, the rest
/// `ξ_i = r_i`; the minimum equals `T_h(r)/2`.
pub fn inner_min_xi(r: &[f64], trim: TrimSpec) -> (Vec<f64>, f64) {
    let n = r.len() as f64;
    let mut xi = r.to_vec();
    let mut value = 0.0;
    for &i in magnitude_order(r).iter().take(trim.h()) {
        xi[i] = r[i] / 2.0;
        value += r[i] * r[i] / 2.0;
    }
    (xi, value / n)
}

/// `V_h(ξ) = (1/n)‖ξ‖² − T_h(ξ)`: the mean of the `n − h` largest `ξ_i²`.
pub fn v_h_value(xi: &[f64], trim: TrimSpec) -> f64 {
    let n = xi.len() as f64;
    magnitude_order(xi)
        .iter()
        .skip(trim.h())
        .map(|&i| xi[i] * xi[i])
        .sum::<f64>()
        / n
}

/// A subgradient of `V_h` at `ξ`: `(2/n) ξ_i` on the `n − h` largest `|ξ_i|`, zero elsewhere.
pub fn v_h_subgradient(xi: &[f64], trim: TrimSpec) -> Vec<f64> {
    let n = xi.len() as f64;
    let mut v = vec![0.0; xi.len()];
    for &i in magnitude_order(xi).iter().skip(trim.h()) {
        v[i] = 2.0 * xi[i] / n;
    }
    v
}

/// `F = (1/n)(‖r−ξ‖² + ‖ξ‖²) + λ·hov − V_h(ξ)` with `V_h` evaluated exactly.
pub fn artl_value(r: &[f64], xi: &[f64], trim: TrimSpec, hovr_value: f64, lambda: f64) -> f64 {
    assert_eq!(r.len(), xi.len(), "residual and ξ lengths differ");
    let n = r.len() as f64;
    let quad: f64 = r
        .iter()
        .zip(xi)
        .map(|(ri, x)| (ri - x) * (ri - x) + x * x)
        .sum::<f64>()
        / n;
    quad + lambda * hovr_value - v_h_value(xi, trim)
}

pub const DEFAULT_HUBER_DELTA: f64 = 1.0;
pub const DEFAULT_TUKEY_C: f64 = 4.685;

pub fn huber_loss(r: f64, delta: f64) -> f64 {
    let a = r.abs();
    if a <= delta {
        0.5 * r * r
    } else {
        delta * (a - 0.5 * delta)
    }
}

/// `∂ huber / ∂r`.
pub fn huber_psi(r: f64, delta: f64) -> f64 {
    r.clamp(-delta, delta)
}

pub fn tukey_loss(r: f64, c: f64) -> f64 {
    if r.abs() <= c {
        let u = 1.0 - (r / c) * (r / c);
        c * c / 6.0 * (1.0 - u * u * u)
    } else {
        c * c / 6.0
    }
}

/// `∂ tukey / ∂r = r (1 − (r/c)²)²` inside the cutoff, zero outside.
pub fn tukey_psi(r: f64, c: f64) -> f64 {
    if r.abs() <= c {
        let u = 1.0 - (r / c) * (r / c);
        r * u * u
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(h: usize, n: usize) -> TrimSpec {
        TrimSpec::new(h, n).unwrap()
    }

    #[test]
    fn trim_spec_bounds() {
        assert!(TrimSpec::new(0, 3).is_err());
        assert!(TrimSpec::new(4, 3).is_err());
        assert_eq!(TrimSpec::from_fraction(0.9, 100).unwrap().h(), 90);
        assert_eq!(TrimSpec::from_fraction(0.9, 80).unwrap().h(), 72);
        assert_eq!(TrimSpec::from_fraction(0.9, 20).unwrap().h(), 18);
        assert_eq!(TrimSpec::from_fraction(2.0 / 3.0, 3).unwrap().h(), 2);
        assert!(TrimSpec::from_fraction(0.0, 3).is_err());
    }

    #[test]
    fn rounding_is_half_up() {
        assert_eq!(round_half_up(0.03 * 100.0), 3);
        assert_eq!(round_half_up(2.5), 3);
        assert_eq!(round_half_up(13.95), 14);
        assert_eq!(round_half_up(0.049 * 10.0), 0);
    }

    #[test]
    fn trimmed_loss_small_example() {
        let r = [1.0, -2.0, 3.0];
        assert!((trimmed_loss(&r, t(2, 3)) - 5.0 / 3.0).abs() < 1e-15);
        assert!((trimmed_loss(&r, t(3, 3)) - 14.0 / 3.0).abs() < 1e-15);
        assert_eq!(trimmed_loss(&[0.0; 4], t(2, 4)), 0.0);
    }

    #[test]
    fn inner_minimizer_example() {
        let (xi, v) = inner_min_xi(&[1.0, -2.0, 3.0], t(2, 3));
        assert_eq!(xi, vec![0.5, -1.0, 3.0]);
        assert!((v - 5.0 / 6.0).abs() < 1e-15);
        let (xi, v) = inner_min_xi(&[1.0, -2.0, 3.0], t(3, 3));
        assert_eq!(xi, vec![0.5, -1.0, 1.5]);
        assert!((v - 14.0 / 6.0).abs() < 1e-15);
        let (xi, v) = inner_min_xi(&[0.0; 3], t(1, 3));
        assert_eq!((xi, v), (vec![0.0; 3], 0.0));
    }

    #[test]
    fn inner_minimizer_matches_lattice_search() {
        // Brute force over a lattice containing the candidate minimizers.
        let r = [1.0, -2.0, 3.0];
        let trim = t(2, 3);
        let grid: Vec<f64> = (-16..=16).map(|k| k as f64 * 0.25).collect();
        let mut best = f64::INFINITY;
        for &a in &grid {
            for &b in &grid {
                for &c in &grid {
                    let xi = [a, b, c];
                    let obj = r.iter().zip(&xi).map(|(ri, x)| (ri - x).powi(2)).sum::<f64>() / 3.0
                        + trimmed_loss(&xi, trim);
                    best = best.min(obj);
                }
            }
        }
        assert!((best - 5.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn subgradient_examples() {
        let v = v_h_subgradient(&[3.0, 1.0, -2.0], t(2, 3));
        assert_eq!(v, vec![2.0, 0.0, 0.0]);
        assert_eq!(v_h_subgradient(&[3.0, 1.0, -2.0], t(3, 3)), vec![0.0; 3]);
        assert_eq!(v_h_subgradient(&[0.0; 3], t(1, 3)), vec![0.0; 3]);
    }

    #[test]
    fn ties_break_by_index() {
        // Equal magnitudes: the later index counts as larger.
        let v = v_h_subgradient(&[2.0, -2.0, 1.0], t(2, 3));
        assert_eq!(v, vec![0.0, -4.0 / 3.0, 0.0]);
        assert_eq!(magnitude_order(&[2.0, -2.0, 1.0]), vec![2, 0, 1]);
    }

    #[test]
    fn artl_identities() {
        let r = [0.3, -1.7, 2.2, 0.05];
        let trim = t(3, 4);
        let (xi, _) = inner_min_xi(&r, trim);
        let f = artl_value(&r, &xi, trim, 0.0, 0.0);
        assert!((f - 0.5 * trimmed_loss(&r, trim)).abs() < 1e-15);
        let mse = r.iter().map(|x| x * x).sum::<f64>() / 4.0;
        assert!((artl_value(&r, &[0.0; 4], trim, 0.0, 0.0) - mse).abs() < 1e-15);
        assert_eq!(artl_value(&[0.0; 4], &[0.0; 4], trim, 2.5, 1.0), 2.5);
    }

    #[test]
    fn robust_losses() {
        assert_eq!(huber_loss(0.5, 1.0), 0.125);
        assert_eq!(huber_loss(2.0, 1.0), 1.5);
        assert_eq!(huber_loss(-2.0, 1.0), 1.5);
        let c = DEFAULT_TUKEY_C;
        assert!((tukey_loss(c, c) - c * c / 6.0).abs() < 1e-12);
        assert_eq!(tukey_loss(10.0 * c, c), c * c / 6.0);
        assert_eq!(tukey_loss(0.0, c), 0.0);
        for &r in &[-3.0, -0.2, 0.7, 4.0] {
            let h = 1e-6;
            let fd = (huber_loss(r + h, 1.0) - huber_loss(r - h, 1.0)) / (2.0 * h);
            assert!((fd - huber_psi(r, 1.0)).abs() < 1e-6);
            let fd = (tukey_loss(r + h, c) - tukey_loss(r - h, c)) / (2.0 * h);
            assert!((fd - tukey_psi(r, c)).abs() < 1e-6);
        }
    }
}
