//! Outlier locations for spiked deformations of a bulk law.
//!
//! Left-edge spikes reuse the right-edge code by reflection: for the side
//! sign `s = ±1` everything is evaluated on `x ↦ s·g(s·x)`, the Stieltjes
//! transform of the reflected measure.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::freeconv::{closed_form, convolution_support, ConvolutionConfig};
use crate::measure::SpectralMeasure;

/// Series order used by [`predict_perturbative`].
pub const PERTURBATIVE_ORDER: usize = 12;
/// Above this `ε` the first-order expansion should not be trusted.
pub const PERTURBATIVE_EPS_WARN: f64 = 0.2;
/// Multiplier of `N^(−2/3)` in the detection margin.
pub const DETECTION_MARGIN: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutlierPrediction {
    pub theta: f64,
    pub location: f64,
    pub detached: bool,
    pub bulk_edge_used: f64,
}

#[derive(Clone, Copy)]
enum Side {
    Right,
    Left,
}

impl Side {
    fn sign(self) -> f64 {
        match self {
            Side::Right => 1.0,
            Side::Left => -1.0,
        }
    }

    fn edge(self, (l, r): (f64, f64)) -> f64 {
        match self {
            Side::Right => r,
            Side::Left => l,
        }
    }
}

/// `s·g(s·x)` for real `x` beyond the reflected edge.
fn reflected_g(mu: &SpectralMeasure, side: Side, x: f64) -> f64 {
    let s = side.sign();
    s * mu.stieltjes(Complex64::new(s * x, 0.0)).re
}

/// Limit of the reflected transform at the edge from outside; infinite when
/// the measure has an atom there or the limit diverges.
fn edge_value(mu: &SpectralMeasure, side: Side, edge: f64) -> f64 {
    let s = side.sign();
    if mu.atom_mass_at(edge) > 0.0 {
        return f64::INFINITY;
    }
    let e = s * edge;
    let v = reflected_g(mu, side, e);
    if v.is_finite() && v > 0.0 {
        return v;
    }
    let v = reflected_g(mu, side, e + 1e-12 * (1.0 + e.abs()));
    if v.is_finite() && v > 0.0 {
        v
    } else {
        f64::INFINITY
    }
}

/// Solve `g_μ(x) = w` for real `x` beyond the edge on the side of `sign(w)`.
/// `None` when `|w|` is at least the edge value, where no real solution exists.
pub fn inverse_stieltjes(mu: &SpectralMeasure, w: f64) -> Result<Option<f64>> {
    if w == 0.0 || !w.is_finite() {
        return Err(Error::invalid(format!(
            "cannot invert the Stieltjes transform at {w}"
        )));
    }
    let side = if w > 0.0 { Side::Right } else { Side::Left };
    let s = side.sign();
    let t = w.abs();
    let edge = side.edge(mu.support_edges());
    if t >= edge_value(mu, side, edge) {
        return Ok(None);
    }
    bisect_reflected(mu, side, s * edge, t).map(|x| Some(s * x))
}

/// Monotone bisection for `s·g(s·x) = t` on `(e, e + 10/t]`, widened if needed.
fn bisect_reflected(mu: &SpectralMeasure, side: Side, e: f64, t: f64) -> Result<f64> {
    let mut lo = e;
    let mut hi = e + 10.0 / t;
    let mut widen = 0;
    while reflected_g(mu, side, hi) > t {
        lo = hi;
        hi = e + 2.0 * (hi - e);
        widen += 1;
        if widen > 60 {
            return Err(Error::no_convergence(
                "Stieltjes inversion bracket",
                Some(side.sign() * e),
            ));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if reflected_g(mu, side, mid) > t {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Fixed-rank outlier: `g_μ⁻¹(1/θ)` when `θ` passes the threshold
/// `1/g_μ(edge)`, otherwise the edge itself.
pub fn predict_fixed_rank(mu: &SpectralMeasure, theta: f64) -> Result<OutlierPrediction> {
    if theta == 0.0 || !theta.is_finite() {
        return Err(Error::invalid(format!(
            "spike must be finite and nonzero, got {theta}"
        )));
    }
    let side = if theta > 0.0 { Side::Right } else { Side::Left };
    let edge = side.edge(mu.support_edges());
    match inverse_stieltjes(mu, 1.0 / theta)? {
        Some(x) => Ok(OutlierPrediction {
            theta,
            location: x,
            detached: true,
            bulk_edge_used: edge,
        }),
        None => Ok(OutlierPrediction {
            theta,
            location: edge,
            detached: false,
            bulk_edge_used: edge,
        }),
    }
}

/// `ω⁻¹(θ) = θ + R_{μ_b}(g_ν(θ))`, with `R(w) = g_{μ_b}⁻¹(w) − 1/w` from the
/// exact inverse. Detached when `ω⁻¹(θ)` lies beyond `supp(μ_b ⊞ ν)`.
pub fn omega_inverse(
    mu_b: &SpectralMeasure,
    nu: &SpectralMeasure,
    theta: f64,
) -> Result<Option<f64>> {
    let (l, r) = nu.support_edges();
    if !(theta > r || theta < l) {
        return Err(Error::invalid(format!(
            "spike {theta} lies inside the support [{l}, {r}] of ν"
        )));
    }
    let w = nu.stieltjes(Complex64::new(theta, 0.0)).re;
    Ok(inverse_stieltjes(mu_b, w)?.map(|x| theta + x - 1.0 / w))
}

pub fn predict_subordination(
    mu_b: &SpectralMeasure,
    nu: &SpectralMeasure,
    theta: f64,
    cfg: &ConvolutionConfig,
) -> Result<OutlierPrediction> {
    let omega = omega_inverse(mu_b, nu, theta)?;
    let support = match closed_form(mu_b, nu) {
        Some(m) => m.support_edges(),
        None => convolution_support(mu_b, nu, cfg)?,
    };
    let side = if theta > nu.support_edges().1 {
        Side::Right
    } else {
        Side::Left
    };
    let edge = side.edge(support);
    let beyond = |x: f64| match side {
        Side::Right => x > edge,
        Side::Left => x < edge,
    };
    Ok(match omega {
        Some(x) if beyond(x) => OutlierPrediction {
            theta,
            location: x,
            detached: true,
            bulk_edge_used: edge,
        },
        _ => OutlierPrediction {
            theta,
            location: edge,
            detached: false,
            bulk_edge_used: edge,
        },
    })
}

/// `d_η(θ) = g_η(θ) − 1/θ`.
pub fn d_eta(eta: &SpectralMeasure, theta: f64) -> f64 {
    eta.stieltjes(Complex64::new(theta, 0.0)).re - 1.0 / theta
}

/// First order in `ε`: `θ + s·R_μ(s/θ) + ε·s²·d_η(θ)·R_μ′(s/θ)`.
pub fn predict_perturbative(
    mu: &SpectralMeasure,
    eta: &SpectralMeasure,
    eps: f64,
    theta: f64,
    s: f64,
) -> Result<f64> {
    predict_perturbative_with_order(mu, eta, eps, theta, s, PERTURBATIVE_ORDER)
}

pub fn predict_perturbative_with_order(
    mu: &SpectralMeasure,
    eta: &SpectralMeasure,
    eps: f64,
    theta: f64,
    s: f64,
    order: usize,
) -> Result<f64> {
    if !(0.0..1.0).contains(&eps) {
        return Err(Error::invalid(format!(
            "epsilon must lie in [0, 1), got {eps}"
        )));
    }
    if !(s > 0.0) {
        return Err(Error::invalid(format!("scale must be positive, got {s}")));
    }
    let (l, r) = eta.support_edges();
    if theta == 0.0 || (theta >= l && theta <= r) {
        return Err(Error::invalid(format!(
            "spike {theta} must be nonzero and outside supp(η) = [{l}, {r}]"
        )));
    }
    let w = s / theta;
    let base = theta + s * mu.r_transform(w, order);
    if eps == 0.0 {
        return Ok(base);
    }
    Ok(base + eps * s * s * d_eta(eta, theta) * mu.r_transform_derivative(w, order))
}

/// `θ + m₁/b^υ + (k₂/b^{2υ})(1/θ + ε·m₁^η/θ²)`.
pub fn predict_power_law(
    theta: f64,
    b: u64,
    upsilon: f64,
    m1_mu: f64,
    k2_mu: f64,
    eps_m1_eta: f64,
) -> Result<f64> {
    if !(theta > 0.0) || b < 1 {
        return Err(Error::invalid("power law needs θ > 0 and b ≥ 1"));
    }
    let s = (b as f64).powf(-upsilon);
    Ok(theta + m1_mu * s + k2_mu * s * s * (1.0 / theta + eps_m1_eta / (theta * theta)))
}

/// `DETECTION_MARGIN · N^(−2/3)`.
pub fn detection_margin(n: usize) -> f64 {
    DETECTION_MARGIN * (n as f64).powf(-2.0 / 3.0)
}

/// Eigenvalues above `edge + margin`, largest first, at most `k_max`.
pub fn detect_beyond(spectrum: &[f64], edge: f64, margin: f64, k_max: usize) -> Vec<f64> {
    let mut out: Vec<f64> = spectrum
        .iter()
        .copied()
        .filter(|&x| x > edge + margin)
        .collect();
    out.sort_by(|a, b| b.total_cmp(a));
    out.truncate(k_max);
    out
}

/// Right-edge outliers of `spectrum` relative to `bulk`, descending.
pub fn detect_outliers(spectrum: &[f64], bulk: &SpectralMeasure, k_max: usize) -> Vec<f64> {
    let (_, r) = bulk.support_edges();
    detect_beyond(spectrum, r, detection_margin(spectrum.len()), k_max)
}

/// Left-edge outliers, most negative first.
pub fn detect_left_outliers(spectrum: &[f64], bulk: &SpectralMeasure, k_max: usize) -> Vec<f64> {
    let (l, _) = bulk.support_edges();
    let neg: Vec<f64> = spectrum.iter().map(|x| -x).collect();
    detect_beyond(&neg, -l, detection_margin(spectrum.len()), k_max)
        .into_iter()
        .map(|x| -x)
        .collect()
}
