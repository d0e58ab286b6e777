//! Diagnostics comparing sampled spectra and eigenvectors with limit laws.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eig::full_eigh;
use crate::error::{Error, Result};
use crate::matrix::SymmetricMatrix;
use crate::measure::SpectralMeasure;

/// Fraction of indices kept by [`bulk_indices`].
pub const QUE_BULK_FRACTION: f64 = 0.8;
/// Fraction of indices checked by [`rigidity_check`].
pub const RIGIDITY_BULK_FRACTION: f64 = 0.9;
pub const DEFAULT_POTENTIAL_POINTS: usize = 2001;

/// Zero-based indices of the middle `fraction` of `0..n`.
pub fn bulk_indices(n: usize, fraction: f64) -> Vec<usize> {
    let drop = ((1.0 - fraction) * n as f64 / 2.0).round() as usize;
    (drop..n.saturating_sub(drop)).collect()
}

/// For `p = 1..=p_max`, the average over `k ∈ indices` of `(N·(qᵀu_k)²)^p`.
/// `vectors` is column-major `N × N`.
pub fn que_statistic(
    vectors: &[f64],
    q: &[f64],
    indices: &[usize],
    p_max: usize,
) -> Result<Vec<f64>> {
    let n = q.len();
    if vectors.len() != n * n {
        return Err(Error::SizeMismatch(n * n, vectors.len()));
    }
    if indices.is_empty() {
        return Err(Error::EmptyInput("index set"));
    }
    let norm: f64 = q.iter().map(|x| x * x).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-8 {
        return Err(Error::invalid(format!(
            "q must be a unit vector, |q| = {norm}"
        )));
    }
    let mut sums = vec![0.0; p_max];
    for &k in indices {
        if k >= n {
            return Err(Error::invalid(format!(
                "index {k} out of range for N = {n}"
            )));
        }
        let u = &vectors[k * n..(k + 1) * n];
        let proj: f64 = u.iter().zip(q).map(|(a, b)| a * b).sum();
        let t = n as f64 * proj * proj;
        let mut tp = 1.0;
        for s in sums.iter_mut() {
            tp *= t;
            *s += tp;
        }
    }
    Ok(sums.into_iter().map(|s| s / indices.len() as f64).collect())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RigidityReport {
    pub fraction: f64,
    pub checked: usize,
    /// Largest `|λ_j − 𝔮_j|` divided by its bound over the checked indices.
    pub worst_ratio: f64,
}

/// Fraction of bulk indices with `|λ_j − 𝔮_j| ≤ C·min(j, N − j + 1)^(−1/3)·N^(−2/3)`.
pub fn rigidity_check(eigs: &[f64], mu: &SpectralMeasure, c: f64) -> Result<RigidityReport> {
    let n = eigs.len();
    if n == 0 {
        return Err(Error::EmptyInput("eigenvalues"));
    }
    if !(c > 0.0) {
        return Err(Error::invalid(format!(
            "constant must be positive, got {c}"
        )));
    }
    let q = mu.quantiles(n)?;
    let nf = n as f64;
    let idx = bulk_indices(n, RIGIDITY_BULK_FRACTION);
    let mut inside = 0;
    let mut worst: f64 = 0.0;
    for &i in &idx {
        let j = (i + 1) as f64;
        let bound = c * j.min(nf - j + 1.0).powf(-1.0 / 3.0) * nf.powf(-2.0 / 3.0);
        let ratio = (eigs[i] - q[i]).abs() / bound;
        worst = worst.max(ratio);
        if ratio <= 1.0 {
            inside += 1;
        }
    }
    Ok(RigidityReport {
        fraction: inside as f64 / idx.len() as f64,
        checked: idx.len(),
        worst_ratio: worst,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LocalLawReport {
    pub max_error: f64,
    /// `1 / (N^(2/3)·(κ + |im z|)²)`.
    pub bound_scale: f64,
    /// Distance from `re z` to the support.
    pub kappa: f64,
}

fn distance_to_support(mu: &SpectralMeasure, x: f64) -> f64 {
    mu.support_intervals()
        .iter()
        .map(|&(l, r)| {
            if x < l {
                l - x
            } else if x > r {
                x - r
            } else {
                0.0
            }
        })
        .fold(f64::INFINITY, f64::min)
}

/// `max_j |1/(z − λ_j) − 1/(z − 𝔮_j)|` for sorted `eigs`.
pub fn diag_local_law_error(
    eigs: &[f64],
    mu: &SpectralMeasure,
    z: Complex64,
) -> Result<LocalLawReport> {
    let n = eigs.len();
    if n == 0 {
        return Err(Error::EmptyInput("eigenvalues"));
    }
    let kappa = distance_to_support(mu, z.re);
    if kappa <= 0.0 {
        return Err(Error::invalid(format!(
            "re z = {} lies inside the support",
            z.re
        )));
    }
    let q = mu.quantiles(n)?;
    let max_error = eigs
        .iter()
        .zip(&q)
        .map(|(&l, &qj)| ((z - l).inv() - (z - qj).inv()).norm())
        .fold(0.0, f64::max);
    let bound_scale = 1.0 / ((n as f64).powf(2.0 / 3.0) * (kappa + z.im.abs()).powi(2));
    Ok(LocalLawReport {
        max_error,
        bound_scale,
        kappa,
    })
}

/// Relative error `‖(H + δ)⁻¹g − Πg‖ / ‖Πg‖` of the quantile surrogate `Π`,
/// which replaces each eigenvalue `λ_j` of `H` by the quantile `𝔮_j` of `μ`.
pub fn precond_equivalence(
    h: &SymmetricMatrix,
    mu: &SpectralMeasure,
    delta: f64,
    g: &[f64],
) -> Result<f64> {
    let n = h.n();
    if !(delta > 0.0) {
        return Err(Error::invalid(format!("δ must be positive, got {delta}")));
    }
    if g.len() != n {
        return Err(Error::SizeMismatch(n, g.len()));
    }
    if g.iter().all(|x| *x == 0.0) {
        return Err(Error::invalid("g = 0 has no relative error"));
    }
    let q = mu.quantiles(n)?;
    if q[0] + delta <= 0.0 {
        return Err(Error::invalid("surrogate is singular: 𝔮₁ + δ ≤ 0"));
    }
    let (lambda, coords) = if is_diagonal(h) {
        (h.diagonal(), None)
    } else {
        let r = full_eigh(h, true)?;
        let v = r.eigenvectors.expect("vectors requested");
        let c: Vec<f64> = (0..n)
            .map(|j| {
                v[j * n..(j + 1) * n]
                    .iter()
                    .zip(g)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect();
        (r.eigenvalues, Some(c))
    };
    if lambda.iter().any(|l| l + delta <= 0.0) {
        return Err(Error::invalid("H + δ is not positive definite"));
    }
    // in the eigenbasis both operators are diagonal; for diagonal H the
    // quantile of each entry follows its rank
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| lambda[a].total_cmp(&lambda[b]));
    let coeff = |j: usize| coords.as_ref().map_or(g[j], |c| c[j]);
    let (mut num, mut den) = (0.0, 0.0);
    for (rank, &j) in order.iter().enumerate() {
        let exact = coeff(j) / (lambda[j] + delta);
        let surrogate = coeff(j) / (q[rank] + delta);
        num += (exact - surrogate).powi(2);
        den += surrogate * surrogate;
    }
    Ok((num / den).sqrt())
}

fn is_diagonal(h: &SymmetricMatrix) -> bool {
    (0..h.n()).all(|i| (0..i).all(|j| h.get(i, j) == 0.0))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KacRicePoint {
    pub u: f64,
    pub negative_mass: f64,
    pub feasible: bool,
    /// `∫log|λ|dμ_u − α·u²`; absent when infeasible.
    pub value: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KacRiceResult {
    pub value: f64,
    pub argmax: f64,
    pub table: Vec<KacRicePoint>,
}

/// Maximizes `∫log|λ|dμ_u(λ) − α·u²` over grid points with `μ_u((−∞, 0)) ≤ ε`.
pub fn kac_rice_exponent(
    family: &[(f64, SpectralMeasure)],
    alpha: f64,
    eps_index: f64,
) -> Result<KacRiceResult> {
    if family.is_empty() {
        return Err(Error::EmptyInput("parameter grid"));
    }
    if !(alpha >= 0.0) {
        return Err(Error::invalid(format!(
            "α must be nonnegative, got {alpha}"
        )));
    }
    if let Some((_, m)) = family.iter().find(|(_, m)| m.has_atoms()) {
        return Err(m.unsupported("Kac-Rice exponent"));
    }
    let table: Vec<KacRicePoint> = family
        .par_iter()
        .map(|(u, m)| {
            let negative_mass = m.cdf(0.0);
            let feasible = negative_mass <= eps_index;
            let value = if feasible {
                Some(m.log_abs_integral()? - alpha * u * u)
            } else {
                None
            };
            Ok(KacRicePoint {
                u: *u,
                negative_mass,
                feasible,
                value,
            })
        })
        .collect::<Result<_>>()?;
    let best = table.iter().filter_map(|p| p.value.map(|v| (p.u, v))).fold(
        None,
        |acc: Option<(f64, f64)>, (u, v)| match acc {
            Some((_, bv)) if bv >= v => acc,
            _ => Some((u, v)),
        },
    );
    let (argmax, value) = best.ok_or(Error::EmptyFeasibleSet)?;
    Ok(KacRiceResult {
        value,
        argmax,
        table,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QQData {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

impl QQData {
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        crate::io::write_columns(w, &["x", "y"], &[&self.x, &self.y])
    }
}

/// Linear-interpolated sample quantile of sorted `v` at `p ∈ [0, 1]`.
fn sample_quantile(v: &[f64], p: f64) -> f64 {
    let pos = p * (v.len() - 1) as f64;
    let i = (pos.floor() as usize).min(v.len() - 1);
    let frac = pos - i as f64;
    if i + 1 < v.len() {
        v[i] + frac * (v[i + 1] - v[i])
    } else {
        v[i]
    }
}

/// Matches `min(|A|, |B|)` evenly spaced quantile ranks and fits `y = a + b·x`.
pub fn qq_compare(a: &[f64], b: &[f64]) -> Result<QQData> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyInput("spectrum"));
    }
    let k = a.len().min(b.len());
    if k < 2 {
        return Err(Error::invalid("q-q regression needs at least two points"));
    }
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_by(f64::total_cmp);
    sb.sort_by(f64::total_cmp);
    let ranks: Vec<f64> = (0..k).map(|i| i as f64 / (k - 1) as f64).collect();
    let x: Vec<f64> = ranks.iter().map(|&p| sample_quantile(&sa, p)).collect();
    let y: Vec<f64> = ranks.iter().map(|&p| sample_quantile(&sb, p)).collect();
    let kf = k as f64;
    let mx = x.iter().sum::<f64>() / kf;
    let my = y.iter().sum::<f64>() / kf;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(&y).map(|(u, v)| (u - mx) * (v - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("first spectrum is constant"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = x
        .iter()
        .zip(&y)
        .map(|(u, v)| (v - intercept - slope * u).powi(2))
        .sum();
    let r2 = if syy == 0.0 { 1.0 } else { 1.0 - ss_res / syy };
    Ok(QQData {
        x,
        y,
        slope,
        intercept,
        r2,
    })
}

/// Potential with `V′ = ½·pv g_μ` on the support, fixed by `V(left) = 0`,
/// continued outside by `(y − y₀)² + b` on each side.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Potential {
    pub left: f64,
    pub right: f64,
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub derivatives: Vec<f64>,
    /// `(y₀, b)` left of the support.
    pub left_quadratic: (f64, f64),
    /// `(y₀, b)` right of the support.
    pub right_quadratic: (f64, f64),
    /// Value and derivative mismatches at the left and right junctions.
    pub junction_residuals: [f64; 4],
}

impl Potential {
    pub fn value(&self, y: f64) -> f64 {
        if y < self.left {
            let (y0, b) = self.left_quadratic;
            return (y - y0).powi(2) + b;
        }
        if y > self.right {
            let (y0, b) = self.right_quadratic;
            return (y - y0).powi(2) + b;
        }
        let (i, t, h) = self.locate(y);
        let (p0, p1) = (self.values[i], self.values[i + 1]);
        let (m0, m1) = (self.derivatives[i] * h, self.derivatives[i + 1] * h);
        let (t2, t3) = (t * t, t * t * t);
        (2.0 * t3 - 3.0 * t2 + 1.0) * p0
            + (t3 - 2.0 * t2 + t) * m0
            + (-2.0 * t3 + 3.0 * t2) * p1
            + (t3 - t2) * m1
    }

    pub fn derivative(&self, y: f64) -> f64 {
        if y < self.left {
            return 2.0 * (y - self.left_quadratic.0);
        }
        if y > self.right {
            return 2.0 * (y - self.right_quadratic.0);
        }
        let (i, t, h) = self.locate(y);
        let (p0, p1) = (self.values[i], self.values[i + 1]);
        let (m0, m1) = (self.derivatives[i], self.derivatives[i + 1]);
        let t2 = t * t;
        ((6.0 * t2 - 6.0 * t) * p0 + (6.0 * t - 6.0 * t2) * p1) / h
            + (3.0 * t2 - 4.0 * t + 1.0) * m0
            + (3.0 * t2 - 2.0 * t) * m1
    }

    fn locate(&self, y: f64) -> (usize, f64, f64) {
        let n = self.grid.len();
        let i = match self.grid.binary_search_by(|g| g.total_cmp(&y)) {
            Ok(i) => i.min(n - 2),
            Err(i) => i.saturating_sub(1).min(n - 2),
        };
        let h = self.grid[i + 1] - self.grid[i];
        (i, (y - self.grid[i]) / h, h)
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        crate::io::write_columns(
            w,
            &["x", "v", "dv"],
            &[&self.grid, &self.values, &self.derivatives],
        )
    }
}

pub fn potential_from_measure(mu: &SpectralMeasure) -> Result<Potential> {
    potential_from_measure_with(mu, DEFAULT_POTENTIAL_POINTS)
}

pub fn potential_from_measure_with(mu: &SpectralMeasure, points: usize) -> Result<Potential> {
    if mu.has_atoms() {
        return Err(mu.unsupported("potential"));
    }
    let intervals = mu.support_intervals();
    if intervals.len() != 1 {
        return Err(Error::invalid(format!(
            "support has {} intervals; one is required",
            intervals.len()
        )));
    }
    if points < 3 {
        return Err(Error::invalid("at least three grid points are required"));
    }
    let (l, r) = intervals[0];
    let h = (r - l) / (points - 1) as f64;
    let grid: Vec<f64> = (0..points)
        .map(|i| if i + 1 == points { r } else { l + i as f64 * h })
        .collect();
    let derivatives: Vec<f64> = grid
        .par_iter()
        .map(|&x| Ok(0.5 * mu.pv_stieltjes(x)?))
        .collect::<Result<_>>()?;
    let mut values = vec![0.0; points];
    for i in 1..points {
        values[i] =
            values[i - 1] + 0.5 * (grid[i] - grid[i - 1]) * (derivatives[i] + derivatives[i - 1]);
    }
    let quad_at = |x: f64, v: f64, dv: f64| {
        let y0 = x - 0.5 * dv;
        (y0, v - (x - y0).powi(2))
    };
    let left_quadratic = quad_at(l, values[0], derivatives[0]);
    let right_quadratic = quad_at(r, values[points - 1], derivatives[points - 1]);
    let junction = |x: f64, (y0, b): (f64, f64), v: f64, dv: f64| {
        [
            ((x - y0).powi(2) + b - v).abs(),
            (2.0 * (x - y0) - dv).abs(),
        ]
    };
    let [a, b] = junction(l, left_quadratic, values[0], derivatives[0]);
    let [c, d] = junction(
        r,
        right_quadratic,
        values[points - 1],
        derivatives[points - 1],
    );
    Ok(Potential {
        left: l,
        right: r,
        grid,
        values,
        derivatives,
        left_quadratic,
        right_quadratic,
        junction_residuals: [a, b, c, d],
    })
}

/// `S_V[μ](y) = V(y) − ∫ log|y − x| dμ(x)`.
pub fn sv_functional(v: &Potential, mu: &SpectralMeasure, y: f64) -> Result<f64> {
    sv_functional_weighted(v, mu, y, 1.0)
}

/// `V(y) − w·∫ log|y − x| dμ(x)`. With `V′ = ½·pv g` the functional is
/// constant on the support exactly when `w = ½`.
pub fn sv_functional_weighted(v: &Potential, mu: &SpectralMeasure, y: f64, w: f64) -> Result<f64> {
    Ok(v.value(y) - w * mu.log_potential(y)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensembles::{sample, EnsembleKind, EnsembleSpec};

    fn sc2() -> SpectralMeasure {
        SpectralMeasure::semicircle(2.0).unwrap()
    }

    #[test]
    fn bulk_index_sets() {
        assert_eq!(bulk_indices(10, 0.8), (1..9).collect::<Vec<_>>());
        assert_eq!(bulk_indices(1000, 0.9).len(), 900);
    }

    #[test]
    fn que_identity_counterexample() {
        let n = 8;
        let mut id = vec![0.0; n * n];
        for k in 0..n {
            id[k * n + k] = 1.0;
        }
        let mut q = vec![0.0; n];
        q[0] = 1.0;
        let all: Vec<usize> = (0..n).collect();
        let s = que_statistic(&id, &q, &all, 2).unwrap();
        assert!((s[0] - 8.0 / 8.0).abs() < 1e-15);
        assert!((s[1] - 64.0 / 8.0).abs() < 1e-15);
        let without: Vec<usize> = (1..n).collect();
        assert_eq!(que_statistic(&id, &q, &without, 2).unwrap(), vec![0.0, 0.0]);
        assert!(que_statistic(&id, &[0.5; 8], &all, 1).is_err());
    }

    #[test]
    fn rigidity_cases() {
        let mu = sc2();
        let q = mu.quantiles(400).unwrap();
        assert_eq!(rigidity_check(&q, &mu, 1.0).unwrap().fraction, 1.0);
        let shifted: Vec<f64> = q.iter().map(|x| x + 0.5).collect();
        assert!(rigidity_check(&shifted, &mu, 10.0).unwrap().fraction < 0.01);
    }

    #[test]
    fn rigidity_shift_invariant() {
        let x = sample(&EnsembleSpec::wigner(EnsembleKind::Goe, 300, 2).unwrap()).unwrap();
        let eigs = full_eigh(&x, false).unwrap().eigenvalues;
        let mu = SpectralMeasure::semicircle(std::f64::consts::SQRT_2).unwrap();
        let a = rigidity_check(&eigs, &mu, 3.0).unwrap().fraction;
        let shifted: Vec<f64> = eigs.iter().map(|x| x + 1.25).collect();
        let b = rigidity_check(&shifted, &SpectralMeasure::shifted(1.25, mu).unwrap(), 3.0)
            .unwrap()
            .fraction;
        assert!((a - b).abs() <= 1.0 / 270.0, "{a} {b}");
    }

    #[test]
    fn local_law_cases() {
        let mu = sc2();
        let q = mu.quantiles(200).unwrap();
        let z = Complex64::new(-2.5, 0.0);
        assert_eq!(diag_local_law_error(&q, &mu, z).unwrap().max_error, 0.0);
        assert!(diag_local_law_error(&q, &mu, Complex64::new(0.0, 0.1)).is_err());
        // resolvent differences decay like δ⁻²
        let perturbed: Vec<f64> = q.iter().map(|x| x + 0.01).collect();
        let e1 = diag_local_law_error(&perturbed, &mu, Complex64::new(-20.0, 0.0))
            .unwrap()
            .max_error;
        let e2 = diag_local_law_error(&perturbed, &mu, Complex64::new(-40.0, 0.0))
            .unwrap()
            .max_error;
        assert!((e1 / e2 - 4.0).abs() < 0.5, "{}", e1 / e2);
    }

    #[test]
    fn precond_cases() {
        let mu = SpectralMeasure::marchenko_pastur(0.5, 1.0).unwrap();
        let q = mu.quantiles(50).unwrap();
        let h = SymmetricMatrix::from_diagonal(&q);
        let g: Vec<f64> = (0..50).map(|i| (i as f64).cos()).collect();
        assert!(precond_equivalence(&h, &mu, 0.1, &g).unwrap() < 1e-15);
        assert!(precond_equivalence(&h, &mu, 0.0, &g).is_err());
        assert!(precond_equivalence(&h, &mu, 0.1, &[0.0; 50]).is_err());

        let x = sample(&EnsembleSpec::wishart(EnsembleKind::Wish, 50, 100, 1).unwrap()).unwrap();
        let a = precond_equivalence(&x, &mu, 0.1, &g).unwrap();
        let g3: Vec<f64> = g.iter().map(|v| -3.0 * v).collect();
        let b = precond_equivalence(&x, &mu, 0.1, &g3).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn kac_rice_cases() {
        let family: Vec<(f64, SpectralMeasure)> = (0..5)
            .map(|k| (k as f64, SpectralMeasure::shifted(k as f64, sc2()).unwrap()))
            .collect();
        let r = kac_rice_exponent(&family, 0.0, 1.0).unwrap();
        assert_eq!(r.argmax, 4.0);
        let want = SpectralMeasure::shifted(4.0, sc2())
            .unwrap()
            .log_abs_integral()
            .unwrap();
        assert!((r.value - want).abs() < 1e-12);
        let values: Vec<f64> = r.table.iter().map(|p| p.value.unwrap()).collect();
        assert!(values.windows(2).all(|w| w[1] > w[0]));

        let symmetric = vec![
            (0.0, sc2()),
            (1.0, SpectralMeasure::semicircle(1.0).unwrap()),
        ];
        assert!(matches!(
            kac_rice_exponent(&symmetric, 0.0, 0.0),
            Err(Error::EmptyFeasibleSet)
        ));
        let atoms = vec![(0.0, SpectralMeasure::point_mass(1.0).unwrap())];
        assert!(matches!(
            kac_rice_exponent(&atoms, 0.0, 1.0),
            Err(Error::UnsupportedMeasure { .. })
        ));
    }

    #[test]
    fn qq_cases() {
        let a: Vec<f64> = (0..50)
            .map(|i| ((i * 37) % 50) as f64 * 0.1 - 1.0)
            .collect();
        let same = qq_compare(&a, &a).unwrap();
        assert!((same.slope - 1.0).abs() < 1e-12 && (same.r2 - 1.0).abs() < 1e-12);
        let doubled: Vec<f64> = a.iter().map(|x| 2.0 * x).collect();
        let d = qq_compare(&a, &doubled).unwrap();
        assert!((d.slope - 2.0).abs() < 1e-12);
        let short: Vec<f64> = a.iter().take(20).copied().collect();
        assert_eq!(qq_compare(&short, &a).unwrap().x.len(), 20);
        assert!(qq_compare(&[], &a).is_err());
    }

    #[test]
    fn semicircle_potential() {
        let mu = sc2();
        let v = potential_from_measure(&mu).unwrap();
        let v0 = v.value(0.0);
        for i in 1..40 {
            let x = -1.95 + 3.9 * i as f64 / 40.0;
            assert!((v.value(x) - v0 - x * x / 8.0).abs() < 1e-6, "{x}");
            assert!((v.value(x) - v.value(-x)).abs() < 1e-8);
            assert!((v.derivative(x) - 0.5 * mu.pv_stieltjes(x).unwrap()).abs() < 1e-6);
        }
        assert!(v.junction_residuals.iter().all(|r| *r < 1e-8));
        // one-sided derivatives agree across each junction
        let eps = 1e-9;
        assert!((v.derivative(2.0 + eps) - v.derivative(2.0 - eps)).abs() < 1e-6);
    }

    #[test]
    fn sv_constancy_depends_on_log_weight() {
        let mu = sc2();
        let v = potential_from_measure(&mu).unwrap();
        let pts: Vec<f64> = (1..=50).map(|i| -2.0 + 4.0 * i as f64 / 51.0).collect();
        let spread = |w: f64| {
            let s: Vec<f64> = pts
                .iter()
                .map(|&y| sv_functional_weighted(&v, &mu, y, w).unwrap())
                .collect();
            s.iter().copied().fold(f64::NEG_INFINITY, f64::max)
                - s.iter().copied().fold(f64::INFINITY, f64::min)
        };
        assert!(spread(0.5) < 1e-4);
        // the unit-weight functional varies like −x²/8 across the support
        assert!(spread(1.0) > 0.4);
        let c = sv_functional_weighted(&v, &mu, 0.0, 0.5).unwrap();
        for i in 0..=200 {
            let y = -10.0 + 0.1 * i as f64;
            if y.abs() > 2.0 {
                assert!(
                    sv_functional_weighted(&v, &mu, y, 0.5).unwrap() >= c - 1e-6,
                    "{y}"
                );
            }
        }
        let atom = SpectralMeasure::point_mass(0.3).unwrap();
        assert!(sv_functional(&v, &atom, 0.3).is_err());
    }

    #[test]
    fn potential_rejects_split_support() {
        let two = SpectralMeasure::mixture(vec![
            (0.5, SpectralMeasure::uniform(-3.0, -2.0).unwrap()),
            (0.5, SpectralMeasure::uniform(2.0, 3.0).unwrap()),
        ])
        .unwrap();
        assert!(potential_from_measure(&two).is_err());
    }
}
