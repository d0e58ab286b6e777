//! Piecewise-linear densities on a grid.

use num_complex::Complex64;

use crate::quad;

pub(crate) fn trapezoid_mass(grid: &[f64], values: &[f64]) -> f64 {
    grid.windows(2)
        .zip(values.windows(2))
        .map(|(x, f)| 0.5 * (x[1] - x[0]) * (f[0] + f[1]))
        .sum()
}

pub(crate) fn density(grid: &[f64], values: &[f64], x: f64) -> f64 {
    let n = grid.len();
    if !(x >= grid[0] && x <= grid[n - 1]) {
        return 0.0;
    }
    let k = grid.partition_point(|&g| g <= x).clamp(1, n - 1);
    let (x0, x1) = (grid[k - 1], grid[k]);
    let t = (x - x0) / (x1 - x0);
    values[k - 1] + t * (values[k] - values[k - 1])
}

/// `log(1 + u)` for complex `u`, accurate for small `|u|`.
fn ln_1p(u: Complex64) -> Complex64 {
    if u.norm() < 1e-3 {
        // alternating series through u⁶ keeps the truncation below 1e-21
        let mut term = u;
        let mut sum = Complex64::new(0.0, 0.0);
        for k in 1..=7 {
            let s = if k % 2 == 1 { 1.0 } else { -1.0 };
            sum += term * (s / k as f64);
            term *= u;
        }
        sum
    } else {
        (Complex64::new(1.0, 0.0) + u).ln()
    }
}

/// Exact `∫ f(x) / (z − x) dx` for the piecewise-linear `f`.
pub(crate) fn stieltjes(grid: &[f64], values: &[f64], z: Complex64) -> Complex64 {
    let mut total = Complex64::new(0.0, 0.0);
    for (x, f) in grid.windows(2).zip(values.windows(2)) {
        let (x0, x1, f0, f1) = (x[0], x[1], f[0], f[1]);
        let h = x1 - x0;
        let s = (f1 - f0) / h;
        let fz = f0 + s * (z - x0);
        let d1 = z - x1;
        let d0 = z - x0;
        let log_ratio = if d1.norm() == 0.0 || d0.norm() == 0.0 {
            // z sits on a grid node; the term only survives if the density is nonzero there
            if fz.norm() == 0.0 {
                total -= s * h;
                continue;
            }
            return Complex64::new(f64::INFINITY, 0.0);
        } else {
            // log((z − x0)/(z − x1)) = log(1 + h/(z − x1))
            ln_1p(h / d1)
        };
        total += fz * log_ratio - s * h;
    }
    total
}

/// Exact principal value of `∫ f(y) / (x − y) dy` for real `x`.
pub(crate) fn pv_stieltjes(grid: &[f64], values: &[f64], x: f64) -> f64 {
    let mut total = 0.0;
    for (g, f) in grid.windows(2).zip(values.windows(2)) {
        let (x0, x1, f0, f1) = (g[0], g[1], f[0], f[1]);
        let h = x1 - x0;
        let s = (f1 - f0) / h;
        let fx = f0 + s * (x - x0);
        let a = (x - x0).abs();
        let b = (x - x1).abs();
        // logs of zero distances cancel between neighbouring segments
        let la = if a > 0.0 { a.ln() } else { 0.0 };
        let lb = if b > 0.0 { b.ln() } else { 0.0 };
        total += fx * (la - lb) - s * h;
    }
    total
}

/// Cumulative trapezoid masses at the grid nodes.
pub(crate) fn cumulative(grid: &[f64], values: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(grid.len());
    let mut acc = 0.0;
    out.push(0.0);
    for (x, f) in grid.windows(2).zip(values.windows(2)) {
        acc += 0.5 * (x[1] - x[0]) * (f[0] + f[1]);
        out.push(acc);
    }
    out
}

pub(crate) fn cdf(grid: &[f64], values: &[f64], x: f64) -> f64 {
    let n = grid.len();
    if x <= grid[0] {
        return 0.0;
    }
    if x >= grid[n - 1] {
        return 1.0;
    }
    let k = grid.partition_point(|&g| g <= x).clamp(1, n - 1);
    let mut acc = 0.0;
    for j in 1..k {
        acc += 0.5 * (grid[j] - grid[j - 1]) * (values[j] + values[j - 1]);
    }
    acc + partial(grid[k - 1], grid[k], values[k - 1], values[k], x)
}

fn partial(x0: f64, x1: f64, f0: f64, f1: f64, x: f64) -> f64 {
    let t = x - x0;
    let s = (f1 - f0) / (x1 - x0);
    f0 * t + 0.5 * s * t * t
}

/// CDF with a precomputed cumulative table.
pub(crate) fn cdf_with(grid: &[f64], values: &[f64], cum: &[f64], x: f64) -> f64 {
    let n = grid.len();
    if x <= grid[0] {
        return 0.0;
    }
    if x >= grid[n - 1] {
        return 1.0;
    }
    let k = grid.partition_point(|&g| g <= x).clamp(1, n - 1);
    (cum[k - 1] + partial(grid[k - 1], grid[k], values[k - 1], values[k], x)).min(1.0)
}

/// Inverse CDF: the smallest `x` with `F(x) ≥ u`, solving the quadratic on the bracketing segment.
pub(crate) fn inverse_cdf(grid: &[f64], values: &[f64], cum: &[f64], u: f64) -> f64 {
    let n = grid.len();
    if u <= 0.0 {
        return edges(grid, values).0;
    }
    let k = cum.partition_point(|&c| c < u).clamp(1, n - 1);
    let (x0, x1, f0, f1) = (grid[k - 1], grid[k], values[k - 1], values[k]);
    let target = u - cum[k - 1];
    let s = (f1 - f0) / (x1 - x0);
    // f0·t + s/2·t² = target
    let t = if s.abs() < 1e-14 * (f0.abs() + 1.0) {
        if f0 > 0.0 {
            target / f0
        } else {
            0.0
        }
    } else {
        let disc = (f0 * f0 + 2.0 * s * target).max(0.0);
        2.0 * target / (f0 + disc.sqrt())
    };
    (x0 + t).clamp(x0, x1)
}

/// Support of the interpolant: a run of nodes above the threshold extends to the
/// neighbouring nodes, where the linear pieces reach zero.
pub(crate) fn edges(grid: &[f64], values: &[f64]) -> (f64, f64) {
    let thr = super::SUPPORT_THRESHOLD;
    let n = grid.len();
    let first = values.iter().position(|&v| v > thr);
    let last = values.iter().rposition(|&v| v > thr);
    match (first, last) {
        (Some(a), Some(b)) => (grid[a.saturating_sub(1)], grid[(b + 1).min(n - 1)]),
        _ => (grid[0], grid[n - 1]),
    }
}

/// Maximal runs of grid nodes where the density exceeds the support threshold.
pub(crate) fn support_intervals(grid: &[f64], values: &[f64]) -> Vec<(f64, f64)> {
    let thr = super::SUPPORT_THRESHOLD;
    let mut out = Vec::new();
    let mut start = None;
    for (i, &v) in values.iter().enumerate() {
        match (v > thr, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                out.push((grid[s.saturating_sub(1)], grid[i]));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((grid[s.saturating_sub(1)], grid[grid.len() - 1]));
    }
    out
}

/// `∫ f(x) ρ(x) dx`, splitting segments at break points.
pub(crate) fn expect(
    grid: &[f64],
    values: &[f64],
    f: &dyn Fn(f64) -> f64,
    breaks: &[f64],
    abs_tol: f64,
) -> f64 {
    let segs = (grid.len() - 1) as f64;
    let mut total = 0.0;
    for (x, v) in grid.windows(2).zip(values.windows(2)) {
        if v[0] == 0.0 && v[1] == 0.0 {
            continue;
        }
        let (x0, x1, f0, f1) = (x[0], x[1], v[0], v[1]);
        let s = (f1 - f0) / (x1 - x0);
        let rho = |t: f64| f(t) * (f0 + s * (t - x0));
        let mut pts = vec![x0];
        pts.extend(breaks.iter().copied().filter(|&b| b > x0 && b < x1));
        pts.push(x1);
        total += quad::integrate_pieces(rho, &pts, abs_tol / segs);
    }
    total
}

/// Exact moments `m_1..m_n` of the piecewise-linear density via Gauss-Legendre on each segment.
pub(crate) fn moments(grid: &[f64], values: &[f64], n_max: usize) -> Vec<f64> {
    let (nodes, weights) = quad::gauss_legendre(n_max / 2 + 2);
    let mut out = vec![0.0; n_max];
    for (x, v) in grid.windows(2).zip(values.windows(2)) {
        let c = 0.5 * (x[0] + x[1]);
        let h = 0.5 * (x[1] - x[0]);
        for (t, w) in nodes.iter().zip(&weights) {
            let xi = c + h * t;
            let rho = v[0] + (v[1] - v[0]) * (xi - x[0]) / (x[1] - x[0]);
            let mut p = 1.0;
            for m in out.iter_mut() {
                p *= xi;
                *m += w * h * rho * p;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tent() -> (Vec<f64>, Vec<f64>) {
        (vec![-1.0, 0.0, 1.0], vec![0.0, 1.0, 0.0])
    }

    #[test]
    fn stieltjes_matches_quadrature() {
        let (g, v) = tent();
        for z in [
            Complex64::new(0.2, 0.3),
            Complex64::new(3.0, 0.0),
            Complex64::new(0.5, 1e-7),
        ] {
            let re = quad::integrate(
                |x| density(&g, &v, x) * (z - x).inv().re,
                -1.0,
                1.0,
                1e-12,
                0.0,
            );
            let im = quad::integrate(
                |x| density(&g, &v, x) * (z - x).inv().im,
                -1.0,
                1.0,
                1e-12,
                0.0,
            );
            let s = stieltjes(&g, &v, z);
            if z.im > 1e-3 || z.im == 0.0 {
                assert!(
                    (s.re - re.value).abs() < 1e-9 && (s.im - im.value).abs() < 1e-9,
                    "{z} {s}"
                );
            } else {
                assert!((-s.im / std::f64::consts::PI - density(&g, &v, 0.5)).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn pv_of_tent() {
        // reference: symmetric excision with a tiny radius
        let (g, v) = tent();
        let x = 0.3;
        let eps = 1e-6;
        let f = |y: f64| density(&g, &v, y) / (x - y);
        let left = quad::integrate(f, -1.0, x - eps, 1e-13, 0.0).value;
        let right = quad::integrate(f, x + eps, 1.0, 1e-13, 0.0).value;
        assert!((pv_stieltjes(&g, &v, x) - (left + right)).abs() < 1e-5);
        assert!(pv_stieltjes(&g, &v, 0.0).abs() < 1e-14);
    }

    #[test]
    fn cdf_and_inverse() {
        let (g, v) = tent();
        let cum = cumulative(&g, &v);
        for u in [0.01, 0.25, 0.5, 0.9, 0.999] {
            let x = inverse_cdf(&g, &v, &cum, u);
            assert!((cdf(&g, &v, x) - u).abs() < 1e-12, "{u}");
            assert!((cdf_with(&g, &v, &cum, x) - u).abs() < 1e-12);
        }
    }

    #[test]
    fn moments_exact() {
        let (g, v) = tent();
        let m = moments(&g, &v, 4);
        assert!(m[0].abs() < 1e-15);
        assert!((m[1] - 1.0 / 6.0).abs() < 1e-14);
        assert!((m[3] - 1.0 / 15.0).abs() < 1e-14);
    }

    #[test]
    fn intervals() {
        let g = vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0];
        let v = vec![0.0, 1.0, 0.0, 0.0, 2.0, 0.0];
        assert_eq!(support_intervals(&g, &v), vec![(0.0, 2.0), (3.0, 5.0)]);
        assert_eq!(edges(&g, &v), (0.0, 5.0));
    }
}
