//! Free additive convolution `μ ⊞ ν`.
//!
//! Densities are recovered by Stieltjes inversion. Each grid point is first
//! solved at `E + iη` and then continued to the real axis by Newton's method;
//! the continuation is kept only when it lands in the closed lower half-plane
//! near the `η` solution, so the returned density is the boundary value rather
//! than its `η`-smoothed version wherever the limit is well conditioned.

mod cubic;
mod solver;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{MeasureKind, SpectralMeasure};

pub use cubic::{convolve_sc_mp_cubic, cubic_residual, sc_mp_cubic_roots};

/// Density values at or below this count as outside the support when locating edges.
const EDGE_THRESHOLD: f64 = 1e-9;
const SCAN_POINTS: usize = 512;
const POLISH_ITERATIONS: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ClosedForm,
    Cubic,
    Subordination,
    SemicircleFlow,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvolutionConfig {
    /// Imaginary offset of the initial solve.
    pub eta: f64,
    /// Fixed-point stopping tolerance on successive iterates.
    pub tol: f64,
    pub max_iter: usize,
    /// Damping factor `ω` in `w ← (1 − ω)w + ω·f(w)`.
    pub damping: f64,
    pub grid_points: usize,
    /// Continue each solution to the real axis.
    pub polish: bool,
}

impl Default for ConvolutionConfig {
    fn default() -> Self {
        Self {
            eta: 1e-4,
            tol: 1e-12,
            max_iter: 100_000,
            damping: 0.5,
            grid_points: crate::measure::DEFAULT_GRID_POINTS,
            polish: true,
        }
    }
}

impl ConvolutionConfig {
    fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::invalid(format!(
                "eta must be positive, got {}",
                self.eta
            )));
        }
        if !(self.tol > 0.0) {
            return Err(Error::invalid(format!(
                "tolerance must be positive, got {}",
                self.tol
            )));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::invalid(format!(
                "damping must lie in (0, 1], got {}",
                self.damping
            )));
        }
        if self.grid_points < 3 {
            return Err(Error::invalid("at least three grid points are required"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvolutionResult {
    /// Normalized `NumericDensity` on the output grid.
    pub measure: SpectralMeasure,
    pub method: Method,
    pub grid_spacing: f64,
    /// Largest fixed-point (or polynomial) residual over the grid.
    pub max_residual: f64,
    /// Trapezoid mass of the density before renormalization.
    pub raw_mass: f64,
}

impl ConvolutionResult {
    pub fn grid(&self) -> &[f64] {
        match self.measure.kind() {
            MeasureKind::NumericDensity { grid, .. } => grid,
            _ => unreachable!("convolution results are numeric densities"),
        }
    }

    pub fn density(&self) -> &[f64] {
        match self.measure.kind() {
            MeasureKind::NumericDensity { values, .. } => values,
            _ => unreachable!("convolution results are numeric densities"),
        }
    }

    /// Two-column CSV `x,density`.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        crate::io::write_columns(w, &["x", "density"], &[self.grid(), self.density()])
    }
}

/// Radius if `m` is a (possibly rescaled) semicircle.
pub fn semicircle_radius(m: &SpectralMeasure) -> Option<f64> {
    match m.kind() {
        MeasureKind::Semicircle { radius } => Some(*radius),
        MeasureKind::Scaled { factor, inner } => semicircle_radius(inner).map(|r| r * factor),
        _ => None,
    }
}

/// SC(σ₁²) ⊞ SC(σ₂²) = SC(σ₁² + σ₂²).
pub fn convolve_semicircles(var1: f64, var2: f64) -> Result<SpectralMeasure> {
    if !(var1 > 0.0 && var2 > 0.0) {
        return Err(Error::invalid(format!(
            "semicircle variances must be positive, got {var1}, {var2}"
        )));
    }
    SpectralMeasure::semicircle_variance(var1 + var2)
}

/// Closed-form convolution where one is known: two semicircles, or a
/// translation by a point mass.
pub fn closed_form(mu: &SpectralMeasure, nu: &SpectralMeasure) -> Option<SpectralMeasure> {
    if let (Some(r1), Some(r2)) = (semicircle_radius(mu), semicircle_radius(nu)) {
        return SpectralMeasure::semicircle((r1 * r1 + r2 * r2).sqrt()).ok();
    }
    match (mu.kind(), nu.kind()) {
        (_, MeasureKind::PointMass { location }) => {
            SpectralMeasure::shifted(*location, mu.clone()).ok()
        }
        (MeasureKind::PointMass { location }, _) => {
            SpectralMeasure::shifted(*location, nu.clone()).ok()
        }
        _ => None,
    }
}

struct PointValue {
    density: f64,
    residual: f64,
}

/// A pointwise solver for the Stieltjes transform of a convolution.
trait Oracle: Sync {
    fn method(&self) -> Method;
    /// Interval guaranteed to contain the support.
    fn bounds(&self) -> (f64, f64);
    fn point(&self, e: f64) -> Result<PointValue>;
}

fn finish(
    g_eta: Complex64,
    res_eta: f64,
    polished: Option<(Complex64, f64)>,
    eta: f64,
) -> PointValue {
    // Near an edge the two real roots almost coincide and Newton leaves a small
    // imaginary part of either sign; a positive one of this size is a real root.
    let accept = |g: Complex64| {
        g.im <= 1e-8 * (1.0 + g.norm())
            && (g - g_eta).norm() <= 10.0 * eta.sqrt() * (1.0 + g_eta.norm())
    };
    let (g, residual) = match polished {
        Some((g, r)) if accept(g) => (g, r),
        _ => (g_eta, res_eta),
    };
    PointValue {
        density: (-g.im).max(0.0) / std::f64::consts::PI,
        residual,
    }
}

struct Flow<'a> {
    mu: &'a SpectralMeasure,
    sigma2: f64,
    cfg: &'a ConvolutionConfig,
}

impl Oracle for Flow<'_> {
    fn method(&self) -> Method {
        Method::SemicircleFlow
    }

    fn bounds(&self) -> (f64, f64) {
        let (l, r) = self.mu.support_edges();
        let w = 2.0 * self.sigma2.sqrt();
        (l - w, r + w)
    }

    fn point(&self, e: f64) -> Result<PointValue> {
        let z = Complex64::new(e, self.cfg.eta);
        let map = |z: Complex64| move |g: Complex64| self.mu.stieltjes(z - g * self.sigma2);
        let sol = solver::fixed_point(
            map(z),
            self.mu.stieltjes(z),
            self.cfg,
            self.cfg.max_iter,
            |g| g.im < 0.0,
        )
        .ok_or_else(|| Error::no_convergence("semicircle subordination", Some(e)))?;
        let polished = if self.cfg.polish {
            let zr = Complex64::new(e, 0.0);
            solver::fixed_point(map(zr), sol.w, self.cfg, POLISH_ITERATIONS, |_| true)
                .map(|s| (s.w, s.residual))
        } else {
            None
        };
        Ok(finish(sol.w, sol.residual, polished, self.cfg.eta))
    }
}

struct Subordination<'a> {
    mu: &'a SpectralMeasure,
    nu: &'a SpectralMeasure,
    cfg: &'a ConvolutionConfig,
}

impl Subordination<'_> {
    /// `ω₁ ↦ z + h_ν(z + h_μ(ω₁))` with `h(w) = 1/g(w) − w`.
    fn map(&self, z: Complex64) -> impl Fn(Complex64) -> Complex64 + '_ {
        // Im ω ≥ Im z holds exactly; clamping keeps rounding from flipping the branch on the real axis.
        let floor = move |w: Complex64| Complex64::new(w.re, w.im.max(z.im));
        move |w1: Complex64| {
            let w2 = floor(z + self.mu.stieltjes(w1).inv() - w1);
            floor(z + self.nu.stieltjes(w2).inv() - w2)
        }
    }

    fn solve(&self, z: Complex64, start: Complex64, max_iter: usize) -> Option<solver::Solution> {
        solver::fixed_point(self.map(z), start, self.cfg, max_iter, |w| w.im >= z.im)
    }
}

impl Oracle for Subordination<'_> {
    fn method(&self) -> Method {
        Method::Subordination
    }

    fn bounds(&self) -> (f64, f64) {
        let (l1, r1) = self.mu.support_edges();
        let (l2, r2) = self.nu.support_edges();
        (l1 + l2, r1 + r2)
    }

    fn point(&self, e: f64) -> Result<PointValue> {
        let z = Complex64::new(e, self.cfg.eta);
        let sol = self
            .solve(z, z, self.cfg.max_iter)
            .ok_or_else(|| Error::no_convergence("pairwise subordination", Some(e)))?;
        let g_eta = self.mu.stieltjes(sol.w);
        let polished = if self.cfg.polish {
            self.solve(Complex64::new(e, 0.0), sol.w, POLISH_ITERATIONS)
                .map(|s| (self.mu.stieltjes(s.w), s.residual))
        } else {
            None
        };
        Ok(finish(g_eta, sol.residual, polished, self.cfg.eta))
    }
}

struct Cubic {
    alpha: f64,
}

impl Oracle for Cubic {
    fn method(&self) -> Method {
        Method::Cubic
    }

    fn bounds(&self) -> (f64, f64) {
        let r = self.alpha.sqrt();
        let s = std::f64::consts::SQRT_2;
        ((1.0 - r).powi(2) - s, (1.0 + r).powi(2) + s)
    }

    fn point(&self, e: f64) -> Result<PointValue> {
        let roots = sc_mp_cubic_roots(self.alpha, e);
        let density = convolve_sc_mp_cubic(self.alpha, e);
        Ok(PointValue {
            density,
            residual: cubic_residual(self.alpha, e, &roots),
        })
    }
}

fn evaluate(oracle: &dyn Oracle, grid: &[f64]) -> Result<Vec<PointValue>> {
    grid.par_iter().map(|&e| oracle.point(e)).collect()
}

fn bisect_edge(oracle: &dyn Oracle, mut outside: f64, mut inside: f64) -> Result<f64> {
    for _ in 0..100 {
        let mid = 0.5 * (outside + inside);
        if mid == outside || mid == inside || (inside - outside).abs() < 1e-13 * (1.0 + mid.abs()) {
            break;
        }
        if oracle.point(mid)?.density > EDGE_THRESHOLD {
            inside = mid;
        } else {
            outside = mid;
        }
    }
    Ok(0.5 * (outside + inside))
}

/// Outer support edges of the convolution, refined by bisection.
fn locate_support(oracle: &dyn Oracle) -> Result<(f64, f64)> {
    let (lo, hi) = oracle.bounds();
    let pad = 1e-6 * (hi - lo).max(1.0);
    let (lo, hi) = (lo - pad, hi + pad);
    let scan: Vec<f64> = (0..SCAN_POINTS)
        .map(|i| lo + (hi - lo) * i as f64 / (SCAN_POINTS - 1) as f64)
        .collect();
    let values = evaluate(oracle, &scan)?;
    let positive: Vec<usize> = (0..SCAN_POINTS)
        .filter(|&i| values[i].density > EDGE_THRESHOLD)
        .collect();
    let (Some(&first), Some(&last)) = (positive.first(), positive.last()) else {
        return Err(Error::no_convergence(
            "support detection (no absolutely continuous part found)",
            None,
        ));
    };
    let left = if first == 0 {
        scan[0]
    } else {
        bisect_edge(oracle, scan[first - 1], scan[first])?
    };
    let right = if last == SCAN_POINTS - 1 {
        scan[last]
    } else {
        bisect_edge(oracle, scan[last + 1], scan[last])?
    };
    Ok((left, right))
}

fn assemble(
    oracle: &dyn Oracle,
    grid: Vec<f64>,
    values: Vec<PointValue>,
) -> Result<ConvolutionResult> {
    let max_residual = values.iter().map(|v| v.residual).fold(0.0, f64::max);
    let density: Vec<f64> = values.iter().map(|v| v.density).collect();
    let raw_mass = crate::measure::trapezoid_mass(&grid, &density);
    let grid_spacing = grid.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    let measure = SpectralMeasure::numeric_density(grid, density)?;
    Ok(ConvolutionResult {
        measure,
        method: oracle.method(),
        grid_spacing,
        max_residual,
        raw_mass,
    })
}

fn on_grid(oracle: &dyn Oracle, grid: &[f64]) -> Result<ConvolutionResult> {
    if grid.len() < 2 || grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid(
            "grid must have at least two strictly increasing points",
        ));
    }
    let values = evaluate(oracle, grid)?;
    assemble(oracle, grid.to_vec(), values)
}

/// Evaluate on a uniform grid spanning exactly the located support, with the
/// density pinned to zero at the two edges.
fn on_support(oracle: &dyn Oracle, points: usize) -> Result<ConvolutionResult> {
    let (l, r) = locate_support(oracle)?;
    let grid: Vec<f64> = (0..points)
        .map(|i| {
            if i == points - 1 {
                r
            } else {
                l + (r - l) * i as f64 / (points - 1) as f64
            }
        })
        .collect();
    let mut values = evaluate(oracle, &grid[1..points - 1])?;
    let edge = |e: f64| -> Result<PointValue> {
        let v = oracle.point(e)?;
        Ok(PointValue { density: 0.0, ..v })
    };
    values.insert(0, edge(l)?);
    values.push(edge(r)?);
    assemble(oracle, grid, values)
}

fn check_sigma2(sigma2: f64) -> Result<()> {
    if sigma2 > 0.0 && sigma2.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "semicircle variance must be positive, got {sigma2}"
        )))
    }
}

/// `μ ⊞ SC(σ²)` on the given grid via `g(z) = g_μ(z − σ² g(z))`.
pub fn convolve_with_semicircle(
    mu: &SpectralMeasure,
    sigma2: f64,
    grid: &[f64],
    cfg: &ConvolutionConfig,
) -> Result<ConvolutionResult> {
    cfg.validate()?;
    check_sigma2(sigma2)?;
    on_grid(&Flow { mu, sigma2, cfg }, grid)
}

/// `μ ⊞ SC(σ²)` on `cfg.grid_points` points spanning the located support.
pub fn convolve_with_semicircle_on_support(
    mu: &SpectralMeasure,
    sigma2: f64,
    cfg: &ConvolutionConfig,
) -> Result<ConvolutionResult> {
    cfg.validate()?;
    check_sigma2(sigma2)?;
    on_support(&Flow { mu, sigma2, cfg }, cfg.grid_points)
}

/// `μ ⊞ ν` on the given grid by pairwise subordination.
pub fn convolve_general(
    mu: &SpectralMeasure,
    nu: &SpectralMeasure,
    grid: &[f64],
    cfg: &ConvolutionConfig,
) -> Result<ConvolutionResult> {
    cfg.validate()?;
    on_grid(&Subordination { mu, nu, cfg }, grid)
}

/// `μ ⊞ ν` on `cfg.grid_points` points spanning the located support.
pub fn convolve_general_on_support(
    mu: &SpectralMeasure,
    nu: &SpectralMeasure,
    cfg: &ConvolutionConfig,
) -> Result<ConvolutionResult> {
    cfg.validate()?;
    on_support(&Subordination { mu, nu, cfg }, cfg.grid_points)
}

/// Outer edges of `supp(μ ⊞ ν)`.
pub fn convolution_support(
    mu: &SpectralMeasure,
    nu: &SpectralMeasure,
    cfg: &ConvolutionConfig,
) -> Result<(f64, f64)> {
    cfg.validate()?;
    locate_support(&Subordination { mu, nu, cfg })
}

/// Stieltjes transform of `μ ⊞ ν` at `z` (`im z > 0`).
pub fn convolution_stieltjes(
    mu: &SpectralMeasure,
    nu: &SpectralMeasure,
    z: Complex64,
    cfg: &ConvolutionConfig,
) -> Result<Complex64> {
    let s = Subordination { mu, nu, cfg };
    let sol = s
        .solve(z, z, cfg.max_iter)
        .ok_or_else(|| Error::no_convergence("pairwise subordination", Some(z.re)))?;
    Ok(mu.stieltjes(sol.w))
}

/// SC(√2) ⊞ MP(α) density from the cubic on the given grid.
pub fn convolve_sc_mp_cubic_grid(alpha: f64, grid: &[f64]) -> Result<ConvolutionResult> {
    check_alpha(alpha)?;
    on_grid(&Cubic { alpha }, grid)
}

/// SC(√2) ⊞ MP(α) density from the cubic on `points` points spanning its support.
pub fn convolve_sc_mp_cubic_on_support(alpha: f64, points: usize) -> Result<ConvolutionResult> {
    check_alpha(alpha)?;
    if points < 3 {
        return Err(Error::invalid("at least three grid points are required"));
    }
    on_support(&Cubic { alpha }, points)
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha <= 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "ratio must lie in (0, 1], got {alpha}"
        )))
    }
}
