//! Closed-form base laws (semicircle, Marchenko-Pastur, Kesten-McKay) with a
//! common interface: density, Stieltjes transform, support, and integration
//! against the density via the substitution `x = c − h·cos θ`, which removes
//! square-root edge behaviour.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::quad;

#[derive(Debug, Clone, Copy)]
pub(crate) enum Base {
    Semicircle { radius: f64 },
    MarchenkoPastur { ratio: f64, scale: f64 },
    KestenMckay { degree: f64 },
}

impl Base {
    pub fn edges(self) -> (f64, f64) {
        match self {
            Base::Semicircle { radius } => (-radius, radius),
            Base::MarchenkoPastur { ratio, scale } => {
                let r = ratio.sqrt();
                (scale * (1.0 - r).powi(2), scale * (1.0 + r).powi(2))
            }
            Base::KestenMckay { degree } => {
                let e = 2.0 * (degree - 1.0).sqrt();
                (-e, e)
            }
        }
    }

    pub fn density(self, x: f64) -> f64 {
        let (l, r) = self.edges();
        if !(x > l && x < r) {
            return 0.0;
        }
        match self {
            Base::Semicircle { radius } => {
                2.0 / (PI * radius * radius) * (radius * radius - x * x).sqrt()
            }
            Base::MarchenkoPastur { ratio, scale } => {
                ((r - x) * (x - l)).sqrt() / (2.0 * PI * scale * ratio * x)
            }
            Base::KestenMckay { degree } => {
                let d = degree;
                d * (4.0 * (d - 1.0) - x * x).sqrt() / (2.0 * PI * (d * d - x * x))
            }
        }
    }

    /// Stieltjes transform; valid off the support, including real `z` outside it.
    pub fn stieltjes(self, z: Complex64) -> Complex64 {
        let (l, r) = self.edges();
        // √(z−l)·√(z−r) with principal roots behaves like z at infinity in every direction.
        let root = (z - l).sqrt() * (z - r).sqrt();
        match self {
            Base::Semicircle { .. } => 2.0 / (z + root),
            Base::MarchenkoPastur { ratio, scale } => {
                // Rationalized form of (z − σ²(1−α) − root) / (2σ²αz); finite at z = 0 when α < 1.
                2.0 / (z - scale * (1.0 - ratio) + root)
            }
            Base::KestenMckay { degree } => {
                let d = degree;
                2.0 * (d - 1.0) / ((d - 2.0) * z + d * root)
            }
        }
    }

    fn map(self) -> (f64, f64) {
        let (l, r) = self.edges();
        (0.5 * (l + r), 0.5 * (r - l))
    }

    pub fn theta_of(self, x: f64) -> f64 {
        let (c, h) = self.map();
        ((c - x) / h).clamp(-1.0, 1.0).acos()
    }

    pub fn x_of(self, theta: f64) -> f64 {
        let (c, h) = self.map();
        c - h * theta.cos()
    }

    /// Density times the Jacobian of the θ substitution.
    pub fn weight(self, theta: f64) -> f64 {
        let (_, h) = self.map();
        self.density(self.x_of(theta)) * h * theta.sin()
    }

    /// `∫ f dμ`, with the integration split at the given break points.
    pub fn expect(self, f: &dyn Fn(f64) -> f64, breaks: &[f64], abs_tol: f64) -> f64 {
        let (l, r) = self.edges();
        let mut pts = vec![0.0];
        let mut inner: Vec<f64> = breaks
            .iter()
            .filter(|&&b| b > l && b < r)
            .map(|&b| self.theta_of(b))
            .collect();
        inner.sort_by(f64::total_cmp);
        pts.extend(inner);
        pts.push(PI);
        quad::integrate_pieces(|t| f(self.x_of(t)) * self.weight(t), &pts, abs_tol)
    }

    /// `μ((−∞, x])`.
    pub fn cdf(self, x: f64) -> f64 {
        let (l, r) = self.edges();
        if x <= l {
            return 0.0;
        }
        if x >= r {
            return 1.0;
        }
        match self {
            Base::Semicircle { radius } => {
                let u = x / radius;
                0.5 + (u * (1.0 - u * u).sqrt() + u.asin()) / PI
            }
            _ => {
                let t = self.theta_of(x);
                let v = quad::integrate(|s| self.weight(s), 0.0, t, 1e-13, 1e-13).value;
                v.clamp(0.0, 1.0)
            }
        }
    }

    /// Cauchy principal value of `∫ dμ(y) / (x − y)` by symmetric excision in θ.
    pub fn pv_stieltjes(self, x: f64) -> Result<f64, f64> {
        let (l, r) = self.edges();
        if x < l || x > r {
            return Ok(self.stieltjes(Complex64::new(x, 0.0)).re);
        }
        let tx = self.theta_of(x);
        let (_, h) = self.map();
        // x − x(θx + u) = −2h·sin(θx + u/2)·sin(u/2) vanishes exactly at u = 0,
        // so rounding in θx cannot displace the pole.
        let g = |u: f64| self.weight(tx + u) / (-2.0 * h * (tx + 0.5 * u).sin() * (0.5 * u).sin());
        let f = |t: f64| g(t - tx);
        let half = tx.min(PI - tx);
        let tol = 1e-12;
        let mut total = 0.0;
        if tx - half > 0.0 {
            total += quad::integrate(f, 0.0, tx - half, tol, 1e-13).value;
        }
        if tx + half < PI {
            total += quad::integrate(f, tx + half, PI, tol, 1e-13).value;
        }
        if half == 0.0 {
            return Ok(total);
        }
        let pair = |s: f64| g(-s) + g(s);
        let mut delta = 0.5 * half;
        let mut inner = quad::integrate(pair, delta, half, tol, 1e-13).value;
        for k in 0..60 {
            let inc = quad::integrate(pair, 0.5 * delta, delta, tol, 1e-13).value;
            inner += inc;
            delta *= 0.5;
            if k > 0 && inc.abs() < 1e-8 {
                // The pair integrand is bounded, so the remaining sliver is about the last increment.
                return Ok(total + inner + inc);
            }
        }
        Err(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASES: [Base; 5] = [
        Base::Semicircle { radius: 2.0 },
        Base::Semicircle { radius: 0.7 },
        Base::MarchenkoPastur {
            ratio: 0.5,
            scale: 1.0,
        },
        Base::MarchenkoPastur {
            ratio: 0.25,
            scale: 2.0,
        },
        Base::KestenMckay { degree: 3.0 },
    ];

    fn plain_mass(b: Base) -> f64 {
        let (l, r) = b.edges();
        quad::integrate(|x| b.density(x), l, r, 1e-12, 0.0).value
    }

    #[test]
    fn densities_have_unit_mass() {
        for b in BASES {
            assert!((plain_mass(b) - 1.0).abs() < 1e-8, "{b:?}");
            assert!(
                (b.expect(&|_| 1.0, &[], 1e-12) - 1.0).abs() < 1e-10,
                "{b:?}"
            );
        }
    }

    #[test]
    fn stieltjes_matches_direct_quadrature() {
        for b in BASES {
            let (l, r) = b.edges();
            for z in [
                Complex64::new(0.3, 0.7),
                Complex64::new(-1.0, 0.2),
                Complex64::new(r + 0.5, 0.0),
            ] {
                let re =
                    quad::integrate(|x| b.density(x) * ((z - x).inv()).re, l, r, 1e-12, 0.0).value;
                let im =
                    quad::integrate(|x| b.density(x) * ((z - x).inv()).im, l, r, 1e-12, 0.0).value;
                let g = b.stieltjes(z);
                assert!(
                    (g.re - re).abs() < 1e-7 && (g.im - im).abs() < 1e-7,
                    "{b:?} {z} {g} {re} {im}"
                );
            }
        }
    }

    #[test]
    fn km_stieltjes_across_the_real_axis() {
        let b = Base::KestenMckay { degree: 4.0 };
        let up = b.stieltjes(Complex64::new(1.0, 1e-9));
        let down = b.stieltjes(Complex64::new(1.0, -1e-9));
        assert!((up - down.conj()).norm() < 1e-12);
        assert!((-up.im / PI - b.density(1.0)).abs() < 1e-6);
    }

    #[test]
    fn cdf_agrees_with_density_integral() {
        for b in BASES {
            let (l, r) = b.edges();
            let x = l + 0.37 * (r - l);
            let direct = quad::integrate(|y| b.density(y), l, x, 1e-12, 0.0).value;
            assert!((b.cdf(x) - direct).abs() < 1e-8, "{b:?}");
        }
    }

    #[test]
    fn pv_of_semicircle_is_half_x() {
        let b = Base::Semicircle { radius: 2.0 };
        for x in [-1.9, -1.0, 0.0, 0.4, 1.0, 1.99, 2.0] {
            let v = b.pv_stieltjes(x).unwrap();
            assert!((v - x / 2.0).abs() < 1e-8, "x={x} v={v}");
        }
    }
}
