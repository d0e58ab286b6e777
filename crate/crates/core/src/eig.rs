//! Symmetric eigensolvers: Householder tridiagonalization with implicit QL
//! for dense matrices, and Lanczos with full reorthogonalization for
//! matrix-free extremal eigenvalues.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::matrix::SymmetricMatrix;

pub const DEFAULT_DENSE_LIMIT: usize = 4000;
/// QL sweeps allowed per eigenvalue.
pub const MAX_QL_SWEEPS: usize = 30;
pub const BREAKDOWN_TOL: f64 = 1e-14;
pub const MAX_RESTARTS: usize = 3;

/// Symmetric operator known only through `y = M x`.
pub trait LinearOperator: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

impl LinearOperator for SymmetricMatrix {
    fn dim(&self) -> usize {
        self.n()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.matvec(x, y)
    }
}

/// Wraps a closure as an operator.
pub struct FnOperator<F> {
    n: usize,
    f: F,
}

impl<F: Fn(&[f64], &mut [f64]) + Sync> FnOperator<F> {
    pub fn new(n: usize, f: F) -> Self {
        Self { n, f }
    }
}

impl<F: Fn(&[f64], &mut [f64]) + Sync> LinearOperator for FnOperator<F> {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        (self.f)(x, y)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EigResult {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Column-major `n × n`; column `j` pairs with `eigenvalues[j]`.
    #[serde(skip)]
    pub eigenvectors: Option<Vec<f64>>,
}

impl EigResult {
    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn vector(&self, j: usize) -> Option<&[f64]> {
        let n = self.n();
        self.eigenvectors.as_ref().map(|v| &v[j * n..(j + 1) * n])
    }
}

pub fn full_eigh(m: &SymmetricMatrix, want_vectors: bool) -> Result<EigResult> {
    full_eigh_with_limit(m, want_vectors, DEFAULT_DENSE_LIMIT)
}

pub fn full_eigh_with_limit(
    m: &SymmetricMatrix,
    want_vectors: bool,
    limit: usize,
) -> Result<EigResult> {
    let n = m.n();
    if n == 0 {
        return Err(Error::EmptyInput("matrix"));
    }
    if n > limit {
        return Err(Error::invalid(format!(
            "n = {n} exceeds the dense limit {limit}"
        )));
    }
    // column-major working copy: v[i + n*j] = M[i][j]
    let mut v = m.to_full();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tred2(n, &mut v, &mut d, &mut e, want_vectors);
    tql2(
        n,
        &mut d,
        &mut e,
        if want_vectors { Some(&mut v) } else { None },
    )?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].total_cmp(&d[b]));
    let eigenvalues = order.iter().map(|&i| d[i]).collect();
    let eigenvectors = want_vectors.then(|| {
        let mut out = Vec::with_capacity(n * n);
        for &j in &order {
            out.extend_from_slice(&v[j * n..(j + 1) * n]);
        }
        out
    });
    Ok(EigResult {
        eigenvalues,
        eigenvectors,
    })
}

/// Householder reduction to tridiagonal form. On return `d` holds the
/// diagonal, `e[1..]` the subdiagonal, and `v` the accumulated transform
/// when `accumulate` is set.
fn tred2(n: usize, v: &mut [f64], d: &mut [f64], e: &mut [f64], accumulate: bool) {
    let at = |i: usize, j: usize| i + n * j;
    for j in 0..n {
        d[j] = v[at(n - 1, j)];
    }
    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for k in 0..i {
            scale += d[k].abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[at(i - 1, j)];
                v[at(i, j)] = 0.0;
                v[at(j, i)] = 0.0;
            }
        } else {
            for k in 0..i {
                d[k] /= scale;
                h += d[k] * d[k];
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            e[..i].fill(0.0);
            for j in 0..i {
                f = d[j];
                v[at(j, i)] = f;
                g = e[j] + v[at(j, j)] * f;
                let col = &v[at(0, j)..at(0, j) + n];
                for k in j + 1..i {
                    g += col[k] * d[k];
                    e[k] += col[k] * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                let (f, g) = (d[j], e[j]);
                let col = &mut v[at(0, j)..at(0, j) + n];
                for k in j..i {
                    col[k] -= f * e[k] + g * d[k];
                }
                d[j] = col[i - 1];
                col[i] = 0.0;
            }
        }
        d[i] = h;
    }

    if !accumulate {
        for i in 0..n {
            d[i] = v[at(i, i)];
        }
        e[0] = 0.0;
        return;
    }
    for i in 0..n - 1 {
        v[at(n - 1, i)] = v[at(i, i)];
        v[at(i, i)] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v[at(k, i + 1)] / h;
            }
            let (left, right) = v.split_at_mut(at(0, i + 1));
            let u = &right[..=i];
            for j in 0..=i {
                let col = &mut left[at(0, j)..at(0, j) + i + 1];
                let g: f64 = u.iter().zip(col.iter()).map(|(a, b)| a * b).sum();
                for k in 0..=i {
                    col[k] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[at(k, i + 1)] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v[at(n - 1, j)];
        v[at(n - 1, j)] = 0.0;
    }
    v[at(n - 1, n - 1)] = 1.0;
    e[0] = 0.0;
}

/// Implicit-shift QL on the tridiagonal `(d, e)`, rotating the columns of
/// `v` when given. Eigenvalues are left unsorted in `d`.
fn tql2(n: usize, d: &mut [f64], e: &mut [f64], mut v: Option<&mut Vec<f64>>) -> Result<()> {
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;
    let mut f = 0.0;
    let mut tst1: f64 = 0.0;
    let eps = f64::EPSILON;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n - 1 && e[m].abs() > eps * tst1 {
            m += 1;
        }
        if m > l {
            let mut sweeps = 0;
            loop {
                sweeps += 1;
                if sweeps > MAX_QL_SWEEPS {
                    return Err(Error::no_convergence(
                        format!("QL iteration for eigenvalue {l}"),
                        None,
                    ));
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().take(n).skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    if let Some(v) = v.as_deref_mut() {
                        let (a, b) = v.split_at_mut((i + 1) * n);
                        let ci = &mut a[i * n..];
                        let cj = &mut b[..n];
                        for k in 0..n {
                            let h = cj[k];
                            cj[k] = s * ci[k] + c * h;
                            ci[k] = c * ci[k] - s * h;
                        }
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    Ok(())
}

/// Eigenvalues of the symmetric tridiagonal matrix with diagonal `alpha`
/// and off-diagonal `beta`, ascending.
pub fn tridiagonal_eigenvalues(alpha: &[f64], beta: &[f64]) -> Result<Vec<f64>> {
    let n = alpha.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut d = alpha.to_vec();
    let mut e = vec![0.0; n];
    e[1..n].copy_from_slice(&beta[..n - 1]);
    tql2(n, &mut d, &mut e, None)?;
    d.sort_by(f64::total_cmp);
    Ok(d)
}

#[derive(Debug, Clone)]
pub struct LanczosRun {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    /// Ritz values, ascending.
    pub ritz: Vec<f64>,
    /// Largest `|⟨q_i, q_j⟩|`, `i ≠ j`, over the stored basis.
    pub orthogonality_drift: f64,
    pub restarts: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn orthogonalize(r: &mut [f64], basis: &[Vec<f64>]) {
    // two passes of classical Gram-Schmidt
    for _ in 0..2 {
        for q in basis {
            let c = dot(q, r);
            r.iter_mut().zip(q).for_each(|(ri, qi)| *ri -= c * qi);
        }
    }
}

fn random_unit(rng: &mut ChaCha8Rng, n: usize, basis: &[Vec<f64>]) -> Option<Vec<f64>> {
    for _ in 0..4 {
        let mut r: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        orthogonalize(&mut r, basis);
        let norm = dot(&r, &r).sqrt();
        if norm > 1e-8 {
            r.iter_mut().for_each(|x| *x /= norm);
            return Some(r);
        }
    }
    None
}

/// `m_iters` Lanczos steps from a seeded random start, reorthogonalizing
/// every new vector against the whole basis. A breakdown restarts from a
/// fresh random vector orthogonal to the basis. After more than
/// `MAX_RESTARTS` breakdowns the run stops early: the basis then spans an
/// invariant subspace, so the Ritz values found are exact eigenvalues.
pub fn lanczos(op: &dyn LinearOperator, m_iters: usize, seed: u64) -> Result<LanczosRun> {
    let n = op.dim();
    if m_iters == 0 || m_iters > n {
        return Err(Error::invalid(format!(
            "need 1 ≤ m ≤ n, got m = {m_iters}, n = {n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m_iters);
    let mut alpha = Vec::with_capacity(m_iters);
    let mut beta: Vec<f64> = Vec::with_capacity(m_iters);
    let mut restarts = 0;
    let mut q = random_unit(&mut rng, n, &basis).ok_or(Error::EmptyInput("operator"))?;
    let mut w = vec![0.0; n];
    loop {
        op.apply(&q, &mut w);
        let a = dot(&q, &w);
        alpha.push(a);
        basis.push(q);
        if basis.len() == m_iters {
            break;
        }
        orthogonalize(&mut w, &basis);
        let b = dot(&w, &w).sqrt();
        if b < BREAKDOWN_TOL {
            restarts += 1;
            let fresh = if restarts > MAX_RESTARTS {
                None
            } else {
                random_unit(&mut rng, n, &basis)
            };
            match fresh {
                Some(r) => {
                    beta.push(0.0);
                    q = r;
                }
                None => break,
            }
        } else {
            beta.push(b);
            q = w.iter().map(|x| x / b).collect();
        }
    }
    let ritz = tridiagonal_eigenvalues(&alpha, &beta)?;
    let mut drift: f64 = 0.0;
    for i in 0..basis.len() {
        for j in 0..i {
            drift = drift.max(dot(&basis[i], &basis[j]).abs());
        }
    }
    Ok(LanczosRun {
        alpha,
        beta,
        ritz,
        orthogonality_drift: drift,
        restarts,
    })
}

/// The `k` largest Ritz values after `m_iters` steps, descending.
pub fn lanczos_topk(
    op: &dyn LinearOperator,
    k: usize,
    m_iters: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if k == 0 || k > m_iters {
        return Err(Error::invalid(format!(
            "need 1 ≤ k ≤ m, got k = {k}, m = {m_iters}"
        )));
    }
    let run = lanczos(op, m_iters, seed)?;
    if run.ritz.len() < k {
        return Err(Error::no_convergence(
            format!(
                "Lanczos found an invariant subspace of dimension {} < k = {k} after {} restarts",
                run.ritz.len(),
                run.restarts
            ),
            None,
        ));
    }
    Ok(run.ritz.iter().rev().take(k).copied().collect())
}

#[derive(Debug, Clone, Serialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub density: Vec<f64>,
}

impl Histogram {
    pub fn centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let lo = &self.edges[..self.edges.len() - 1];
        let hi = &self.edges[1..];
        let counts: Vec<f64> = self.counts.iter().map(|&c| c as f64).collect();
        crate::io::write_columns(
            w,
            &["left", "right", "count", "density"],
            &[lo, hi, &counts, &self.density],
        )
    }
}

/// Uniform-width histogram over `[min, max]` normalized to unit area. When
/// every value coincides a single unit-width bin centred on it is returned.
pub fn spectrum_histogram(values: &[f64], bins: usize) -> Result<Histogram> {
    if values.is_empty() {
        return Err(Error::EmptyInput("values"));
    }
    if bins == 0 {
        return Err(Error::invalid("bins must be at least 1"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("values must be finite"));
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        return Ok(Histogram {
            edges: vec![lo - 0.5, lo + 0.5],
            counts: vec![values.len()],
            density: vec![1.0],
        });
    }
    let width = (hi - lo) / bins as f64;
    let edges: Vec<f64> = (0..=bins)
        .map(|i| if i == bins { hi } else { lo + i as f64 * width })
        .collect();
    let mut counts = vec![0usize; bins];
    for &v in values {
        let idx = (((v - lo) / width) as usize).min(bins - 1);
        counts[idx] += 1;
    }
    let total = values.len() as f64;
    let density = counts.iter().map(|&c| c as f64 / (total * width)).collect();
    Ok(Histogram {
        edges,
        counts,
        density,
    })
}
