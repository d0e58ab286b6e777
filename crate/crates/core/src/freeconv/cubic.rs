//! Density of SC(radius √2) ⊞ MP(ratio α, scale 1) from the cubic
//! `(α/2)t³ − (1/2 + αz)t² + (z + α − 1)t − 1 = 0` satisfied by its Stieltjes transform.

use std::f64::consts::PI;

use num_complex::Complex64;

fn coefficients(alpha: f64, z: f64) -> [f64; 4] {
    [0.5 * alpha, -(0.5 + alpha * z), z + alpha - 1.0, -1.0]
}

fn eval(c: &[f64; 4], t: Complex64) -> Complex64 {
    ((t * c[0] + c[1]) * t + c[2]) * t + c[3]
}

fn eval_deriv(c: &[f64; 4], t: Complex64) -> Complex64 {
    (t * (3.0 * c[0]) + 2.0 * c[1]) * t + c[2]
}

fn polish(c: &[f64; 4], mut t: Complex64) -> Complex64 {
    for _ in 0..8 {
        let d = eval_deriv(c, t);
        if d.norm() == 0.0 {
            break;
        }
        let step = eval(c, t) / d;
        let next = t - step;
        if !(next.re.is_finite() && next.im.is_finite())
            || eval(c, next).norm() >= eval(c, t).norm()
        {
            break;
        }
        t = next;
    }
    t
}

/// The three roots of the cubic at real `z`. A real root is found by
/// bisection and Newton, the remaining quadratic is solved directly, and all
/// roots are polished against the full cubic.
pub fn sc_mp_cubic_roots(alpha: f64, z: f64) -> [Complex64; 3] {
    let c = coefficients(alpha, z);
    let p = |t: f64| ((c[0] * t + c[1]) * t + c[2]) * t + c[3];
    // Cauchy bound on root magnitudes
    let bound = 1.0 + c[1..].iter().map(|v| (v / c[0]).abs()).fold(0.0, f64::max);
    let (mut lo, mut hi) = (-bound, bound);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if p(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let r1 = polish(&c, Complex64::new(0.5 * (lo + hi), 0.0)).re;
    // deflate: c0 t² + b t + q
    let b = c[1] + c[0] * r1;
    let q = c[2] + b * r1;
    let disc = b * b - 4.0 * c[0] * q;
    let (r2, r3) = if disc >= 0.0 {
        let s = disc.sqrt();
        // avoid cancellation
        let u = -0.5 * (b + b.signum() * s);
        if u == 0.0 {
            (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0))
        } else {
            (Complex64::new(u / c[0], 0.0), Complex64::new(q / u, 0.0))
        }
    } else {
        let re = -b / (2.0 * c[0]);
        let im = (-disc).sqrt() / (2.0 * c[0]);
        (Complex64::new(re, im), Complex64::new(re, -im))
    };
    let mut out = [Complex64::new(r1, 0.0), polish(&c, r2), polish(&c, r3)];
    if disc < 0.0 {
        // keep the pair exactly conjugate
        let pair = out[1];
        out[2] = pair.conj();
    }
    out
}

/// Largest `|p(t)|` over the given roots, relative to the coefficient scale.
pub fn cubic_residual(alpha: f64, z: f64, roots: &[Complex64; 3]) -> f64 {
    let c = coefficients(alpha, z);
    roots
        .iter()
        .map(|&t| {
            let scale = c
                .iter()
                .enumerate()
                .map(|(k, v)| v.abs() * t.norm().powi(3 - k as i32))
                .sum::<f64>();
            eval(&c, t).norm() / scale.max(1.0)
        })
        .fold(0.0, f64::max)
}

/// Density `s₂/π` of SC(√2) ⊞ MP(α) at `z`, where `r₂ ± i s₂` is the complex
/// pair of roots; zero when all roots are real.
pub fn convolve_sc_mp_cubic(alpha: f64, z: f64) -> f64 {
    let roots = sc_mp_cubic_roots(alpha, z);
    let s2 = roots.iter().map(|r| r.im.abs()).fold(0.0, f64::max);
    s2 / PI
}
