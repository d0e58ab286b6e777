//! Free moment-cumulant recursion
//! `m_n = Σ_{r=1}^{n} k_r [x^{n−r}] M(x)^r`, `M(x) = Σ_{i≥0} m_i x^i`, `m_0 = 1`.

/// Coefficients `[x^0..x^len)` of `M(x)^r` for `r = 0..=r_max`, from the given
/// moment prefix (index 0 holds `m_0 = 1`).
fn powers(m: &[f64], r_max: usize, len: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(r_max + 1);
    let mut p = vec![0.0; len];
    p[0] = 1.0;
    out.push(p.clone());
    for _ in 0..r_max {
        let mut q = vec![0.0; len];
        for (i, &a) in p.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            for (j, &b) in m.iter().enumerate().take(len - i) {
                q[i + j] += a * b;
            }
        }
        out.push(q.clone());
        p = q;
    }
    out
}

/// Free cumulants `k_1..k_n` from moments `m_1..m_n`.
pub fn cumulants_from_moments(moments: &[f64]) -> Vec<f64> {
    let n = moments.len();
    let mut m = Vec::with_capacity(n + 1);
    m.push(1.0);
    m.extend_from_slice(moments);
    let pw = powers(&m, n, n + 1);
    let mut k = vec![0.0; n + 1];
    for order in 1..=n {
        let mut acc = m[order];
        for r in 1..order {
            acc -= k[r] * pw[r][order - r];
        }
        k[order] = acc;
    }
    k.remove(0);
    k
}

/// Moments `m_1..m_n` from free cumulants `k_1..k_n`.
pub fn moments_from_cumulants(cumulants: &[f64]) -> Vec<f64> {
    let n = cumulants.len();
    let mut m = vec![0.0; n + 1];
    m[0] = 1.0;
    for order in 1..=n {
        // [x^{order−r}] M^r only involves m_0..m_{order−1} for r ≥ 1
        let pw = powers(&m[..order], order, order);
        let mut acc = cumulants[order - 1];
        for r in 1..order {
            acc += cumulants[r - 1] * pw[r][order - r];
        }
        m[order] = acc;
    }
    m.remove(0);
    m
}

/// `C_k (r/2)^{2k}` for even orders, zero for odd: moments of the radius-`r` semicircle.
pub(crate) fn semicircle_moments(radius: f64, n_max: usize) -> Vec<f64> {
    let q = radius * radius / 4.0;
    let mut out = vec![0.0; n_max];
    let mut catalan = 1.0;
    let mut scale = 1.0;
    for k in 1..=n_max / 2 {
        // C_k = C_{k−1}·2(2k−1)/(k+1)
        catalan *= 2.0 * (2.0 * k as f64 - 1.0) / (k as f64 + 1.0);
        scale *= q;
        out[2 * k - 1] = catalan * scale;
    }
    out
}
