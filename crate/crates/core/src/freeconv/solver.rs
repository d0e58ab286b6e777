//! Damped fixed-point iteration with Newton acceleration for analytic
//! self-maps of the complex plane.

use num_complex::Complex64;

use super::ConvolutionConfig;

pub(crate) struct Solution {
    pub w: Complex64,
    pub residual: f64,
}

/// Solve `w = f(w)` starting from `w0`. Each step tries a Newton update with a
/// finite-difference derivative; when that leaves the admissible region or
/// fails to halve the residual, the damped update `w ← w + ω(f(w) − w)` is
/// taken instead. Stops when `|f(w) − w| < tol`.
pub(crate) fn fixed_point<F, V>(
    f: F,
    w0: Complex64,
    cfg: &ConvolutionConfig,
    max_iter: usize,
    valid: V,
) -> Option<Solution>
where
    F: Fn(Complex64) -> Complex64,
    V: Fn(Complex64) -> bool,
{
    let finite = |c: Complex64| c.re.is_finite() && c.im.is_finite();
    let mut w = w0;
    let mut fw = f(w);
    for _ in 0..max_iter {
        if !finite(fw) {
            return None;
        }
        let step = fw - w;
        let res = step.norm();
        if res < cfg.tol {
            return Some(Solution {
                w: fw,
                residual: res,
            });
        }
        let d = 1e-7 * (1.0 + w.norm());
        let deriv = (f(w + d) - fw) / d;
        let denom = Complex64::new(1.0, 0.0) - deriv;
        if denom.norm() > 1e-300 && finite(deriv) {
            let cand = w + step / denom;
            if valid(cand) {
                let fc = f(cand);
                if finite(fc) && (fc - cand).norm() < 0.5 * res {
                    w = cand;
                    fw = fc;
                    continue;
                }
            }
        }
        w += step * cfg.damping;
        fw = f(w);
    }
    None
}
