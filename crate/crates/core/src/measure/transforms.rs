use num_complex::Complex64;
use rayon::prelude::*;

use super::analytic::Base;
use super::moments::{cumulants_from_moments, moments_from_cumulants, semicircle_moments};
use super::{numeric, MeasureKind, SpectralMeasure};
use crate::error::{Error, Result};
use crate::quad;

pub(crate) type CdfFn<'a> = Box<dyn Fn(f64) -> f64 + Send + Sync + 'a>;

impl SpectralMeasure {
    pub(crate) fn base(&self) -> Option<Base> {
        match self.kind() {
            MeasureKind::Semicircle { radius } => Some(Base::Semicircle { radius: *radius }),
            MeasureKind::MarchenkoPastur { ratio, scale } => Some(Base::MarchenkoPastur {
                ratio: *ratio,
                scale: *scale,
            }),
            MeasureKind::KestenMckay { degree } => Some(Base::KestenMckay {
                degree: f64::from(*degree),
            }),
            _ => None,
        }
    }

    /// Lebesgue density at `x`; zero outside the support.
    pub fn density_at(&self, x: f64) -> Result<f64> {
        if let Some(b) = self.base() {
            return Ok(b.density(x));
        }
        match self.kind() {
            MeasureKind::Scaled { factor, inner } => Ok(inner.density_at(x / factor)? / factor),
            MeasureKind::Shifted { shift, inner } => inner.density_at(x - shift),
            MeasureKind::Mixture { components } => {
                if self.has_atoms() {
                    return Err(self.unsupported("density"));
                }
                components
                    .iter()
                    .map(|c| Ok(c.weight * c.measure.density_at(x)?))
                    .sum()
            }
            MeasureKind::NumericDensity { grid, values } => Ok(numeric::density(grid, values, x)),
            _ => Err(self.unsupported("density")),
        }
    }

    /// `g(z) = ∫ dμ(x) / (z − x)`. Defined for `im z ≠ 0`; real `z` off the support also works.
    pub fn stieltjes(&self, z: Complex64) -> Complex64 {
        if let Some(b) = self.base() {
            return b.stieltjes(z);
        }
        match self.kind() {
            MeasureKind::PointMass { location } => (z - location).inv(),
            MeasureKind::Mixture { components } => components
                .iter()
                .filter(|c| c.weight > 0.0)
                .map(|c| c.measure.stieltjes(z) * c.weight)
                .sum(),
            MeasureKind::Scaled { factor, inner } => inner.stieltjes(z / factor) / factor,
            MeasureKind::Shifted { shift, inner } => inner.stieltjes(z - shift),
            MeasureKind::Empirical { eigenvalues } => {
                let s: Complex64 = eigenvalues.iter().map(|&l| (z - l).inv()).sum();
                s / eigenvalues.len() as f64
            }
            MeasureKind::NumericDensity { grid, values } => numeric::stieltjes(grid, values, z),
            _ => unreachable!("analytic laws handled above"),
        }
    }

    /// Cauchy principal value of `∫ dμ(y) / (x − y)`.
    pub fn pv_stieltjes(&self, x: f64) -> Result<f64> {
        if let Some(b) = self.base() {
            return b
                .pv_stieltjes(x)
                .map_err(|at| Error::no_convergence("principal-value excision", Some(at)));
        }
        match self.kind() {
            MeasureKind::PointMass { location } if *location != x => Ok(1.0 / (x - location)),
            MeasureKind::Empirical { eigenvalues } if !eigenvalues.contains(&x) => {
                Ok(eigenvalues.iter().map(|l| 1.0 / (x - l)).sum::<f64>()
                    / eigenvalues.len() as f64)
            }
            MeasureKind::Mixture { components } => {
                let mut total = 0.0;
                for c in components.iter().filter(|c| c.weight > 0.0) {
                    total += c.weight * c.measure.pv_stieltjes(x)?;
                }
                Ok(total)
            }
            MeasureKind::Scaled { factor, inner } => Ok(inner.pv_stieltjes(x / factor)? / factor),
            MeasureKind::Shifted { shift, inner } => inner.pv_stieltjes(x - shift),
            MeasureKind::NumericDensity { grid, values } => {
                Ok(numeric::pv_stieltjes(grid, values, x))
            }
            _ => Err(self.unsupported("principal value at an atom")),
        }
    }

    /// Moments `m_1..m_{n_max}`.
    pub fn moments(&self, n_max: usize) -> Vec<f64> {
        match self.kind() {
            MeasureKind::Semicircle { radius } => semicircle_moments(*radius, n_max),
            MeasureKind::MarchenkoPastur { ratio, scale } => {
                let k: Vec<f64> = (0..n_max)
                    .map(|n| scale.powi(n as i32 + 1) * ratio.powi(n as i32))
                    .collect();
                moments_from_cumulants(&k)
            }
            MeasureKind::KestenMckay { .. } => {
                let b = self.base().expect("analytic");
                (1..=n_max)
                    .map(|n| {
                        if n % 2 == 1 {
                            0.0
                        } else {
                            b.expect(&|x| x.powi(n as i32), &[], 1e-13)
                        }
                    })
                    .collect()
            }
            MeasureKind::PointMass { location } => {
                (1..=n_max).map(|n| location.powi(n as i32)).collect()
            }
            MeasureKind::Mixture { components } => {
                let mut out = vec![0.0; n_max];
                for c in components.iter().filter(|c| c.weight > 0.0) {
                    for (o, m) in out.iter_mut().zip(c.measure.moments(n_max)) {
                        *o += c.weight * m;
                    }
                }
                out
            }
            MeasureKind::Scaled { factor, inner } => inner
                .moments(n_max)
                .into_iter()
                .enumerate()
                .map(|(i, m)| factor.powi(i as i32 + 1) * m)
                .collect(),
            MeasureKind::Shifted { shift, inner } => {
                let mut m = vec![1.0];
                m.extend(inner.moments(n_max));
                (1..=n_max)
                    .map(|n| {
                        let mut binom = 1.0;
                        let mut acc = 0.0;
                        for j in 0..=n {
                            acc += binom * shift.powi((n - j) as i32) * m[j];
                            binom = binom * (n - j) as f64 / (j + 1) as f64;
                        }
                        acc
                    })
                    .collect()
            }
            MeasureKind::Empirical { eigenvalues } => {
                let mut out = vec![0.0; n_max];
                for &l in eigenvalues {
                    let mut p = 1.0;
                    for o in out.iter_mut() {
                        p *= l;
                        *o += p;
                    }
                }
                let n = eigenvalues.len() as f64;
                out.iter_mut().for_each(|o| *o /= n);
                out
            }
            MeasureKind::NumericDensity { grid, values } => numeric::moments(grid, values, n_max),
        }
    }

    /// Free cumulants `k_1..k_{n_max}`.
    pub fn free_cumulants(&self, n_max: usize) -> Vec<f64> {
        match self.kind() {
            MeasureKind::Semicircle { radius } => (1..=n_max)
                .map(|n| if n == 2 { radius * radius / 4.0 } else { 0.0 })
                .collect(),
            MeasureKind::MarchenkoPastur { ratio, scale } => (0..n_max)
                .map(|n| scale.powi(n as i32 + 1) * ratio.powi(n as i32))
                .collect(),
            MeasureKind::PointMass { location } => (1..=n_max)
                .map(|n| if n == 1 { *location } else { 0.0 })
                .collect(),
            MeasureKind::Scaled { factor, inner } => {
                let mut f = 1.0;
                inner
                    .free_cumulants(n_max)
                    .into_iter()
                    .map(|k| {
                        f *= factor;
                        k * f
                    })
                    .collect()
            }
            MeasureKind::Shifted { shift, inner } => {
                // translation moves only the first free cumulant
                let mut k = inner.free_cumulants(n_max);
                if let Some(k1) = k.first_mut() {
                    *k1 += shift;
                }
                k
            }
            _ => cumulants_from_moments(&self.moments(n_max)),
        }
    }

    /// Truncated R-transform `Σ_{n<order} k_{n+1} zⁿ`.
    pub fn r_transform(&self, z: f64, order: usize) -> f64 {
        let k = self.free_cumulants(order);
        k.iter().rev().fold(0.0, |acc, &c| acc * z + c)
    }

    /// Derivative of the truncated R-transform.
    pub fn r_transform_derivative(&self, z: f64, order: usize) -> f64 {
        let k = self.free_cumulants(order);
        k.iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(0.0, |acc, (n, &c)| acc * z + n as f64 * c)
    }

    /// `(left, right)` edges of the support.
    pub fn support_edges(&self) -> (f64, f64) {
        if let Some(b) = self.base() {
            return b.edges();
        }
        match self.kind() {
            MeasureKind::PointMass { location } => (*location, *location),
            MeasureKind::Mixture { components } => components
                .iter()
                .filter(|c| c.weight > 0.0)
                .map(|c| c.measure.support_edges())
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, r), (a, b)| {
                    (l.min(a), r.max(b))
                }),
            MeasureKind::Scaled { factor, inner } => {
                let (l, r) = inner.support_edges();
                (factor * l, factor * r)
            }
            MeasureKind::Shifted { shift, inner } => {
                let (l, r) = inner.support_edges();
                (l + shift, r + shift)
            }
            MeasureKind::Empirical { eigenvalues } => {
                (eigenvalues[0], eigenvalues[eigenvalues.len() - 1])
            }
            MeasureKind::NumericDensity { grid, values } => numeric::edges(grid, values),
            _ => unreachable!("analytic laws handled above"),
        }
    }

    /// Disjoint intervals making up the support, ascending. Atoms count as
    /// degenerate intervals.
    pub fn support_intervals(&self) -> Vec<(f64, f64)> {
        let mut parts = match self.kind() {
            MeasureKind::NumericDensity { grid, values } => {
                numeric::support_intervals(grid, values)
            }
            MeasureKind::Mixture { components } => components
                .iter()
                .filter(|c| c.weight > 0.0)
                .flat_map(|c| c.measure.support_intervals())
                .collect(),
            MeasureKind::Scaled { factor, inner } => inner
                .support_intervals()
                .into_iter()
                .map(|(l, r)| (l * factor, r * factor))
                .collect(),
            MeasureKind::Shifted { shift, inner } => inner
                .support_intervals()
                .into_iter()
                .map(|(l, r)| (l + shift, r + shift))
                .collect(),
            MeasureKind::Empirical { eigenvalues } => eigenvalues.iter().map(|&l| (l, l)).collect(),
            _ => vec![self.support_edges()],
        };
        parts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(parts.len());
        for (l, r) in parts {
            match merged.last_mut() {
                Some(last) if l <= last.1 => last.1 = last.1.max(r),
                _ => merged.push((l, r)),
            }
        }
        merged
    }

    /// Locations of all atoms (with repetition for empirical measures).
    pub(crate) fn atoms(&self) -> Vec<f64> {
        match self.kind() {
            MeasureKind::PointMass { location } => vec![*location],
            MeasureKind::Empirical { eigenvalues } => eigenvalues.clone(),
            MeasureKind::Mixture { components } => components
                .iter()
                .filter(|c| c.weight > 0.0)
                .flat_map(|c| c.measure.atoms())
                .collect(),
            MeasureKind::Scaled { factor, inner } => {
                inner.atoms().into_iter().map(|a| a * factor).collect()
            }
            MeasureKind::Shifted { shift, inner } => {
                inner.atoms().into_iter().map(|a| a + shift).collect()
            }
            _ => Vec::new(),
        }
    }

    /// `μ((−∞, x])`.
    pub fn cdf(&self, x: f64) -> f64 {
        if let Some(b) = self.base() {
            return b.cdf(x);
        }
        match self.kind() {
            MeasureKind::PointMass { location } => f64::from(u8::from(x >= *location)),
            MeasureKind::Mixture { components } => {
                components.iter().map(|c| c.weight * c.measure.cdf(x)).sum()
            }
            MeasureKind::Scaled { factor, inner } => inner.cdf(x / factor),
            MeasureKind::Shifted { shift, inner } => inner.cdf(x - shift),
            MeasureKind::Empirical { eigenvalues } => {
                eigenvalues.partition_point(|&l| l <= x) as f64 / eigenvalues.len() as f64
            }
            MeasureKind::NumericDensity { grid, values } => numeric::cdf(grid, values, x),
            _ => unreachable!("analytic laws handled above"),
        }
    }

    /// CDF closure with lookup tables precomputed, for repeated evaluation.
    pub(crate) fn cdf_fn(&self) -> CdfFn<'_> {
        match self.kind() {
            MeasureKind::NumericDensity { grid, values } => {
                let cum = numeric::cumulative(grid, values);
                Box::new(move |x| numeric::cdf_with(grid, values, &cum, x))
            }
            MeasureKind::Mixture { components } => {
                let parts: Vec<(f64, CdfFn<'_>)> = components
                    .iter()
                    .filter(|c| c.weight > 0.0)
                    .map(|c| (c.weight, c.measure.cdf_fn()))
                    .collect();
                Box::new(move |x| parts.iter().map(|(w, f)| w * f(x)).sum())
            }
            MeasureKind::Scaled { factor, inner } => {
                let f = inner.cdf_fn();
                let s = *factor;
                Box::new(move |x| f(x / s))
            }
            MeasureKind::Shifted { shift, inner } => {
                let f = inner.cdf_fn();
                let a = *shift;
                Box::new(move |x| f(x - a))
            }
            _ => Box::new(move |x| self.cdf(x)),
        }
    }

    /// Smallest `x` with `F(x) ≥ u` (generalized inverse), by bisection.
    pub fn inverse_cdf(&self, u: f64) -> f64 {
        if let MeasureKind::NumericDensity { grid, values } = self.kind() {
            let cum = numeric::cumulative(grid, values);
            return numeric::inverse_cdf(grid, values, &cum, u);
        }
        let f = self.cdf_fn();
        bisect_cdf(&f, self.support_edges(), u)
    }

    /// The `j`-th of `n` quantiles: `∫_{−∞}^{q_j} dμ = j/n`. For an empirical
    /// measure with `n` eigenvalues this is the `j`-th smallest eigenvalue.
    pub fn quantile(&self, j: usize, n: usize) -> Result<f64> {
        if n == 0 || j == 0 || j > n {
            return Err(Error::invalid(format!(
                "quantile index {j} of {n} out of range"
            )));
        }
        if let MeasureKind::Empirical { eigenvalues } = self.kind() {
            let len = eigenvalues.len();
            return Ok(eigenvalues[(j * len).div_ceil(n) - 1]);
        }
        if self.has_atoms() {
            return Err(self.unsupported("quantile"));
        }
        let f = self.cdf_fn();
        Ok(bisect_cdf(&f, self.support_edges(), j as f64 / n as f64))
    }

    /// All quantiles `q_1..q_n`.
    pub fn quantiles(&self, n: usize) -> Result<Vec<f64>> {
        if let MeasureKind::Empirical { .. } = self.kind() {
            return (1..=n).map(|j| self.quantile(j, n)).collect();
        }
        if n == 0 {
            return Err(Error::invalid("quantile count must be positive"));
        }
        if self.has_atoms() {
            return Err(self.unsupported("quantile"));
        }
        let f = self.cdf_fn();
        let edges = self.support_edges();
        Ok((1..=n)
            .into_par_iter()
            .map(|j| bisect_cdf(&f, edges, j as f64 / n as f64))
            .collect())
    }

    /// `∫ f dμ`, splitting any quadrature at the given break points.
    pub(crate) fn expect(&self, f: &dyn Fn(f64) -> f64, breaks: &[f64], abs_tol: f64) -> f64 {
        if let Some(b) = self.base() {
            return b.expect(f, breaks, abs_tol);
        }
        match self.kind() {
            MeasureKind::PointMass { location } => f(*location),
            MeasureKind::Empirical { eigenvalues } => {
                eigenvalues.iter().map(|&l| f(l)).sum::<f64>() / eigenvalues.len() as f64
            }
            MeasureKind::Mixture { components } => components
                .iter()
                .filter(|c| c.weight > 0.0)
                .map(|c| c.weight * c.measure.expect(f, breaks, abs_tol))
                .sum(),
            MeasureKind::Scaled { factor, inner } => {
                let s = *factor;
                let bs: Vec<f64> = breaks.iter().map(|b| b / s).collect();
                inner.expect(&|x| f(s * x), &bs, abs_tol)
            }
            MeasureKind::Shifted { shift, inner } => {
                let a = *shift;
                let bs: Vec<f64> = breaks.iter().map(|b| b - a).collect();
                inner.expect(&|x| f(x + a), &bs, abs_tol)
            }
            MeasureKind::NumericDensity { grid, values } => {
                numeric::expect(grid, values, f, breaks, abs_tol)
            }
            _ => unreachable!("analytic laws handled above"),
        }
    }

    /// `∫ log|λ| dμ(λ)`.
    pub fn log_abs_integral(&self) -> Result<f64> {
        self.log_potential(0.0)
    }

    /// `∫ log|y − x| dμ(x)`; diverges if `μ` has an atom at `y`.
    pub fn log_potential(&self, y: f64) -> Result<f64> {
        if self.atom_mass_at(y) > 0.0 {
            return Err(Error::Divergence(format!(
                "atom at {y} in the log integral"
            )));
        }
        if self.atoms().iter().any(|&a| (a - y).abs() < 1e-300) {
            return Err(Error::Divergence(format!(
                "eigenvalue within 1e-300 of {y}"
            )));
        }
        Ok(self.expect(&|x| (y - x).abs().ln(), &[y], 0.1 * quad::ABS_TOL))
    }
}

fn bisect_cdf(f: &CdfFn<'_>, (l, r): (f64, f64), u: f64) -> f64 {
    if f(l) >= u {
        return l;
    }
    let (mut lo, mut hi) = (l, r);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || hi - lo < 1e-14 * (1.0 + mid.abs()) {
            break;
        }
        if f(mid) >= u {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}
