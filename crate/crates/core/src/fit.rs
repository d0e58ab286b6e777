//! Fitting the outlier-scaling model
//!
//! `λ̄ᵢ(b) = θᵢ + α·b^(−υ) + β·b^(−2υ)/θᵢ + βγ·b^(−2υ)/θᵢ²`
//!
//! to seed-averaged top outliers measured at several batch sizes. For fixed
//! `θ` and `υ` the model is linear in `(α, β, βγ)`, which are solved exactly;
//! `θ` is found by gradient descent on `θᵢ = Σ_{k≥i} exp(c_k)`, and `υ` by a
//! grid sweep.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Seed-indexed outlier measurements `λ[i][j][b]`.
#[derive(Debug, Clone, PartialEq)]
pub struct OutlierDataset {
    batch_sizes: Vec<u64>,
    n_out: usize,
    n_seed: usize,
    // index ((i * n_seed) + j) * n_b + k
    values: Vec<f64>,
}

impl OutlierDataset {
    /// `values[i][j][k]` is outlier `i`, seed `j`, batch size `batch_sizes[k]`.
    pub fn new(batch_sizes: Vec<u64>, values: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        if batch_sizes.is_empty() || values.is_empty() || values[0].is_empty() {
            return Err(Error::EmptyInput("outlier dataset"));
        }
        if batch_sizes[0] < 1 || batch_sizes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid(
                "batch sizes must be positive and strictly increasing",
            ));
        }
        let n_out = values.len();
        let n_seed = values[0].len();
        let n_b = batch_sizes.len();
        let mut flat = Vec::with_capacity(n_out * n_seed * n_b);
        for per_seed in &values {
            if per_seed.len() != n_seed {
                return Err(Error::SizeMismatch(n_seed, per_seed.len()));
            }
            for row in per_seed {
                if row.len() != n_b {
                    return Err(Error::SizeMismatch(n_b, row.len()));
                }
                if row.iter().any(|v| !v.is_finite()) {
                    return Err(Error::invalid("outlier values must be finite"));
                }
                flat.extend_from_slice(row);
            }
        }
        Ok(Self {
            batch_sizes,
            n_out,
            n_seed,
            values: flat,
        })
    }

    /// Noisy forward generation from `params`; `noise` is the standard
    /// deviation of i.i.d. Gaussian perturbations of each cell.
    pub fn synthetic(
        params: &FitParams,
        batch_sizes: Vec<u64>,
        n_seed: usize,
        noise: f64,
        seed: u64,
    ) -> Result<Self> {
        params.validate()?;
        if n_seed == 0 {
            return Err(Error::invalid("need at least one seed"));
        }
        let normal = Normal::new(0.0, noise.max(0.0)).map_err(|e| Error::invalid(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = (0..params.theta.len())
            .map(|i| {
                (0..n_seed)
                    .map(|_| {
                        batch_sizes
                            .iter()
                            .map(|&b| {
                                let clean = params.predict(i, b);
                                if noise > 0.0 {
                                    clean + normal.sample(&mut rng)
                                } else {
                                    clean
                                }
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Self::new(batch_sizes, values)
    }

    pub fn batch_sizes(&self) -> &[u64] {
        &self.batch_sizes
    }

    pub fn n_out(&self) -> usize {
        self.n_out
    }

    pub fn n_seed(&self) -> usize {
        self.n_seed
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[(i * self.n_seed + j) * self.batch_sizes.len() + k]
    }

    /// Long-format CSV: `outlier_index,seed,batch_size,value`, indices from 1.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["outlier_index", "seed", "batch_size", "value"])?;
        for i in 0..self.n_out {
            for j in 0..self.n_seed {
                for (k, b) in self.batch_sizes.iter().enumerate() {
                    wr.write_record([
                        (i + 1).to_string(),
                        (j + 1).to_string(),
                        b.to_string(),
                        self.get(i, j, k).to_string(),
                    ])?;
                }
            }
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            outlier_index: usize,
            seed: usize,
            batch_size: u64,
            value: f64,
        }
        let mut cells: BTreeMap<(usize, usize, u64), f64> = BTreeMap::new();
        for rec in csv::Reader::from_reader(r).deserialize() {
            let row: Row = rec?;
            if row.outlier_index == 0 || row.seed == 0 {
                return Err(Error::Format("outlier_index and seed start at 1".into()));
            }
            if cells
                .insert((row.outlier_index, row.seed, row.batch_size), row.value)
                .is_some()
            {
                return Err(Error::Format(format!(
                    "duplicate cell (outlier {}, seed {}, batch {})",
                    row.outlier_index, row.seed, row.batch_size
                )));
            }
        }
        if cells.is_empty() {
            return Err(Error::EmptyInput("outlier dataset"));
        }
        let n_out = cells.keys().map(|k| k.0).max().unwrap_or(0);
        let n_seed = cells.keys().map(|k| k.1).max().unwrap_or(0);
        let mut batch_sizes: Vec<u64> = cells.keys().map(|k| k.2).collect();
        batch_sizes.sort_unstable();
        batch_sizes.dedup();
        let expected = n_out * n_seed * batch_sizes.len();
        if cells.len() != expected {
            return Err(Error::Format(format!(
                "incomplete tensor: {} of {expected} cells present",
                cells.len()
            )));
        }
        let values = (1..=n_out)
            .map(|i| {
                (1..=n_seed)
                    .map(|j| batch_sizes.iter().map(|&b| cells[&(i, j, b)]).collect())
                    .collect()
            })
            .collect();
        Self::new(batch_sizes, values)
    }
}

/// Seed-averaged outliers `λ̄[i][k]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedMeans {
    pub batch_sizes: Vec<u64>,
    pub values: Vec<Vec<f64>>,
}

impl SeedMeans {
    pub fn n_out(&self) -> usize {
        self.values.len()
    }
}

pub fn seed_mean(data: &OutlierDataset) -> SeedMeans {
    let n_b = data.batch_sizes.len();
    let values = (0..data.n_out)
        .map(|i| {
            (0..n_b)
                .map(|k| {
                    (0..data.n_seed).map(|j| data.get(i, j, k)).sum::<f64>() / data.n_seed as f64
                })
                .collect()
        })
        .collect();
    SeedMeans {
        batch_sizes: data.batch_sizes.clone(),
        values,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitParams {
    /// Strictly decreasing and positive.
    pub theta: Vec<f64>,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub upsilon: f64,
}

impl FitParams {
    pub fn validate(&self) -> Result<()> {
        if self.theta.is_empty() {
            return Err(Error::EmptyInput("theta"));
        }
        if !valid_theta(&self.theta) {
            return Err(Error::invalid("θ must be strictly decreasing and positive"));
        }
        if !(self.beta >= 0.0) {
            return Err(Error::invalid(format!(
                "β must be nonnegative, got {}",
                self.beta
            )));
        }
        if !(self.upsilon > 0.0) {
            return Err(Error::invalid(format!(
                "υ must be positive, got {}",
                self.upsilon
            )));
        }
        Ok(())
    }

    /// Model value for outlier `i` at batch size `b`.
    pub fn predict(&self, i: usize, b: u64) -> f64 {
        model(
            self.theta[i],
            b,
            self.upsilon,
            [self.alpha, self.beta, self.beta * self.gamma],
        )
    }
}

fn valid_theta(theta: &[f64]) -> bool {
    theta.last().is_some_and(|&t| t > 0.0) && theta.windows(2).all(|w| w[0] > w[1])
}

fn design_row(theta: f64, b: u64, upsilon: f64) -> [f64; 3] {
    let s = (b as f64).powf(-upsilon);
    let s2 = s * s;
    [s, s2 / theta, s2 / (theta * theta)]
}

fn model(theta: f64, b: u64, upsilon: f64, w: [f64; 3]) -> f64 {
    let x = design_row(theta, b, upsilon);
    theta + w[0] * x[0] + w[1] * x[1] + w[2] * x[2]
}

/// Dense solve with partial pivoting; `None` when a pivot falls below
/// `1e-12` of the largest entry.
fn solve_dense<const N: usize>(mut a: [[f64; N]; N], mut rhs: [f64; N]) -> Option<[f64; N]> {
    let scale = a.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return None;
    }
    for col in 0..N {
        let piv = (col..N).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() <= 1e-12 * scale {
            return None;
        }
        a.swap(col, piv);
        rhs.swap(col, piv);
        for row in col + 1..N {
            let f = a[row][col] / a[col][col];
            for k in col..N {
                a[row][k] -= f * a[col][k];
            }
            rhs[row] -= f * rhs[col];
        }
    }
    let mut x = [0.0; N];
    for row in (0..N).rev() {
        let s: f64 = (row + 1..N).map(|k| a[row][k] * x[k]).sum();
        x[row] = (rhs[row] - s) / a[row][row];
    }
    Some(x)
}

/// Least squares `w* = (XᵀX)⁻¹Xᵀy` over design rows `(x, y)`.
pub fn solve_design(rows: &[([f64; 3], f64)]) -> Result<[f64; 3]> {
    if rows.len() < 3 {
        return Err(Error::SingularDesign(format!(
            "{} rows for 3 unknowns",
            rows.len()
        )));
    }
    let mut xtx = [[0.0; 3]; 3];
    let mut xty = [0.0; 3];
    for (x, y) in rows {
        for r in 0..3 {
            xty[r] += x[r] * y;
            for c in 0..3 {
                xtx[r][c] += x[r] * x[c];
            }
        }
    }
    solve_dense(xtx, xty)
        .ok_or_else(|| Error::SingularDesign("normal equations are singular".into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearSolution {
    pub alpha: f64,
    pub beta_raw: f64,
    pub beta_gamma_raw: f64,
}

fn check_shapes(means: &SeedMeans, theta: &[f64]) -> Result<()> {
    if theta.len() != means.n_out() {
        return Err(Error::SizeMismatch(means.n_out(), theta.len()));
    }
    if means.batch_sizes.len() < 3 {
        return Err(Error::SingularDesign(format!(
            "{} batch sizes cannot identify three coefficients",
            means.batch_sizes.len()
        )));
    }
    Ok(())
}

/// Exact inner solve for `(α, β, βγ)` at fixed `θ`, `υ`.
pub fn solve_linear_given_theta(
    means: &SeedMeans,
    theta: &[f64],
    upsilon: f64,
) -> Result<LinearSolution> {
    check_shapes(means, theta)?;
    if theta.len() == 1 {
        return solve_single(means, theta[0], upsilon);
    }
    let mut rows = Vec::with_capacity(theta.len() * means.batch_sizes.len());
    for (i, &t) in theta.iter().enumerate() {
        for (k, &b) in means.batch_sizes.iter().enumerate() {
            rows.push((design_row(t, b, upsilon), means.values[i][k] - t));
        }
    }
    let w = solve_design(&rows)?;
    Ok(LinearSolution {
        alpha: w[0],
        beta_raw: w[1],
        beta_gamma_raw: w[2],
    })
}

/// With one outlier the `β` and `βγ` columns are proportional, so only
/// their sum is identifiable; `γ` is fixed at zero.
fn solve_single(means: &SeedMeans, theta: f64, upsilon: f64) -> Result<LinearSolution> {
    let mut xtx = [[0.0; 2]; 2];
    let mut xty = [0.0; 2];
    for (k, &b) in means.batch_sizes.iter().enumerate() {
        let x = design_row(theta, b, upsilon);
        let y = means.values[0][k] - theta;
        for r in 0..2 {
            xty[r] += x[r] * y;
            for c in 0..2 {
                xtx[r][c] += x[r] * x[c];
            }
        }
    }
    let w = solve_dense(xtx, xty)
        .ok_or_else(|| Error::SingularDesign("normal equations are singular".into()))?;
    Ok(LinearSolution {
        alpha: w[0],
        beta_raw: w[1],
        beta_gamma_raw: 0.0,
    })
}

fn sum_squares(means: &SeedMeans, theta: &[f64], upsilon: f64, w: [f64; 3]) -> f64 {
    let mut e = 0.0;
    for (i, &t) in theta.iter().enumerate() {
        for (k, &b) in means.batch_sizes.iter().enumerate() {
            let r = means.values[i][k] - model(t, b, upsilon, w);
            e += r * r;
        }
    }
    e
}

/// `E = Σ_{i,b} (λ̄ − model)²`.
pub fn objective(params: &FitParams, means: &SeedMeans) -> Result<f64> {
    params.validate()?;
    if params.theta.len() != means.n_out() {
        return Err(Error::SizeMismatch(means.n_out(), params.theta.len()));
    }
    Ok(sum_squares(
        means,
        &params.theta,
        params.upsilon,
        [params.alpha, params.beta, params.beta * params.gamma],
    ))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitConfig {
    /// Initial step length.
    pub learning_rate: f64,
    pub max_iter: usize,
    /// Weight of `max(0, −β_raw)²`.
    pub penalty: f64,
    /// Stop when the relative objective change falls below this.
    pub rel_tol: f64,
    /// Starting `θ`; defaults to the two-point initialization.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init_theta: Option<Vec<f64>>,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-2,
            max_iter: 20_000,
            penalty: 1e6,
            rel_tol: 1e-10,
            init_theta: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpsilonEntry {
    pub upsilon: f64,
    pub mse: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitReport {
    pub params: FitParams,
    /// `objective(params)`.
    pub mse: f64,
    pub table: Vec<UpsilonEntry>,
    pub iterations: usize,
    pub converged: bool,
    /// Penalized objective after each accepted step of the penalized stage.
    #[serde(skip)]
    pub history: Vec<f64>,
}

/// `θᵢ = Σ_{k≥i} exp(c_k)`.
pub fn theta_from_c(c: &[f64]) -> Vec<f64> {
    let mut theta = vec![0.0; c.len()];
    let mut acc = 0.0;
    for i in (0..c.len()).rev() {
        acc += c[i].exp();
        theta[i] = acc;
    }
    theta
}

pub fn c_from_theta(theta: &[f64]) -> Result<Vec<f64>> {
    if !valid_theta(theta) {
        return Err(Error::invalid("θ must be strictly decreasing and positive"));
    }
    let n = theta.len();
    Ok((0..n)
        .map(|i| {
            if i + 1 == n {
                theta[i].ln()
            } else {
                (theta[i] - theta[i + 1]).ln()
            }
        })
        .collect())
}

/// Penalized inner objective at internals `c`.
fn penalized(means: &SeedMeans, c: &[f64], upsilon: f64, penalty: f64) -> Result<f64> {
    let theta = theta_from_c(c);
    let w = solve_linear_given_theta(means, &theta, upsilon)?;
    let e = sum_squares(
        means,
        &theta,
        upsilon,
        [w.alpha, w.beta_raw, w.beta_gamma_raw],
    );
    Ok(e + penalty * (-w.beta_raw).max(0.0).powi(2))
}

/// Final parameters: the raw inner solution, or with `β` clamped to zero
/// (which also removes `βγ`) and `α` refit alone.
fn finalize(means: &SeedMeans, theta: Vec<f64>, upsilon: f64) -> Result<FitParams> {
    let w = solve_linear_given_theta(means, &theta, upsilon)?;
    if w.beta_raw >= 0.0 {
        let gamma = if w.beta_raw > 0.0 {
            w.beta_gamma_raw / w.beta_raw
        } else {
            0.0
        };
        return Ok(FitParams {
            theta,
            alpha: w.alpha,
            beta: w.beta_raw,
            gamma,
            upsilon,
        });
    }
    let (mut num, mut den) = (0.0, 0.0);
    for (i, &t) in theta.iter().enumerate() {
        for (k, &b) in means.batch_sizes.iter().enumerate() {
            let s = (b as f64).powf(-upsilon);
            num += s * (means.values[i][k] - t);
            den += s * s;
        }
    }
    Ok(FitParams {
        theta,
        alpha: num / den,
        beta: 0.0,
        gamma: 0.0,
        upsilon,
    })
}

fn fd_gradient(means: &SeedMeans, c: &[f64], upsilon: f64, penalty: f64) -> Result<Vec<f64>> {
    let mut g = vec![0.0; c.len()];
    let mut probe = c.to_vec();
    for k in 0..c.len() {
        let h = 1e-6 * c[k].abs().max(1.0);
        probe[k] = c[k] + h;
        let up = penalized(means, &probe, upsilon, penalty)?;
        probe[k] = c[k] - h;
        let down = penalized(means, &probe, upsilon, penalty)?;
        probe[k] = c[k];
        g[k] = (up - down) / (2.0 * h);
    }
    Ok(g)
}

struct Descent {
    c: Vec<f64>,
    iterations: usize,
    history: Vec<f64>,
    converged: bool,
}

/// Gradient descent on `c` with Barzilai-Borwein step lengths, halved until
/// the penalized objective strictly decreases.
fn descend(
    means: &SeedMeans,
    mut c: Vec<f64>,
    upsilon: f64,
    penalty: f64,
    cfg: &FitConfig,
    max_iter: usize,
) -> Result<Descent> {
    let mut e = penalized(means, &c, upsilon, penalty)?;
    let mut history = vec![e];
    let mut grad = fd_gradient(means, &c, upsilon, penalty)?;
    let mut step = cfg.learning_rate;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        if e == 0.0 || grad.iter().all(|g| *g == 0.0) {
            converged = true;
            break;
        }
        let mut trial_step = step;
        let mut accepted = None;
        for _ in 0..60 {
            let cand: Vec<f64> = c
                .iter()
                .zip(&grad)
                .map(|(ci, gi)| ci - trial_step * gi)
                .collect();
            if let Ok(ec) = penalized(means, &cand, upsilon, penalty) {
                if ec < e {
                    accepted = Some((cand, ec));
                    break;
                }
            }
            trial_step *= 0.5;
        }
        let Some((c_new, e_new)) = accepted else {
            // no descent left at floating-point resolution
            converged = true;
            break;
        };
        let g_new = fd_gradient(means, &c_new, upsilon, penalty)?;
        let dc: Vec<f64> = c_new.iter().zip(&c).map(|(a, b)| a - b).collect();
        let dg: Vec<f64> = g_new.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let sy: f64 = dc.iter().zip(&dg).map(|(a, b)| a * b).sum();
        let ss: f64 = dc.iter().map(|a| a * a).sum();
        step = if sy > 0.0 && ss > 0.0 {
            ss / sy
        } else {
            trial_step * 2.0
        };
        let rel = (e - e_new) / e;
        c = c_new;
        e = e_new;
        grad = g_new;
        history.push(e);
        if rel < cfg.rel_tol {
            converged = true;
            break;
        }
    }
    Ok(Descent {
        c,
        iterations,
        history,
        converged,
    })
}

/// Fits `θ` at fixed `υ`. A penalty-free descent provides the starting point
/// for the penalized one, so the `β ≥ 0` wall is only met when the
/// unconstrained optimum lies beyond it.
pub fn fit_theta(means: &SeedMeans, upsilon: f64, cfg: &FitConfig) -> Result<FitReport> {
    if !(upsilon > 0.0) {
        return Err(Error::invalid(format!("υ must be positive, got {upsilon}")));
    }
    let theta0 = match &cfg.init_theta {
        Some(t) => t.clone(),
        None => init_theta_two_point(means, upsilon)?,
    };
    check_shapes(means, &theta0)?;
    let c0 = c_from_theta(&theta0)?;
    let warm = descend(means, c0, upsilon, 0.0, cfg, cfg.max_iter)?;
    let main = descend(
        means,
        warm.c,
        upsilon,
        cfg.penalty,
        cfg,
        cfg.max_iter.saturating_sub(warm.iterations),
    )?;
    let params = finalize(means, theta_from_c(&main.c), upsilon)?;
    let mse = objective(&params, means)?;
    Ok(FitReport {
        table: vec![UpsilonEntry { upsilon, mse }],
        params,
        mse,
        iterations: warm.iterations + main.iterations,
        converged: main.converged,
        history: main.history,
    })
}

/// Fits every `υ` in `grid` and keeps the smallest objective; ties go to the smaller `υ`.
pub fn sweep_upsilon(means: &SeedMeans, grid: &[f64], cfg: &FitConfig) -> Result<FitReport> {
    if grid.is_empty() {
        return Err(Error::EmptyInput("υ grid"));
    }
    let reports: Vec<FitReport> = grid
        .par_iter()
        .map(|&u| fit_theta(means, u, cfg))
        .collect::<Result<_>>()?;
    let table: Vec<UpsilonEntry> = reports
        .iter()
        .map(|r| UpsilonEntry {
            upsilon: r.params.upsilon,
            mse: r.mse,
        })
        .collect();
    let mut best = 0;
    for (i, r) in reports.iter().enumerate() {
        let cur = &reports[best];
        if r.mse < cur.mse || (r.mse == cur.mse && r.params.upsilon < cur.params.upsilon) {
            best = i;
        }
    }
    let mut report = reports.into_iter().nth(best).expect("grid is nonempty");
    report.table = table;
    Ok(report)
}

/// Parses `lo:hi:step` into an inclusive grid.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let nums = parts
        .iter()
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| Error::invalid(format!("bad grid '{spec}'")))
        })
        .collect::<Result<Vec<f64>>>()?;
    match nums.as_slice() {
        [v] => Ok(vec![*v]),
        [lo, hi, step] if *step > 0.0 && hi >= lo => {
            let n = ((hi - lo) / step + 1e-9).floor() as usize;
            // round to the step's decimal resolution so 0.1:0.9:0.1 yields 0.3, not 0.30000000000000004
            Ok((0..=n)
                .map(|k| round_to(lo + k as f64 * step, *step))
                .collect())
        }
        _ => Err(Error::invalid(format!(
            "grid must be 'lo:hi:step' or a single value, got '{spec}'"
        ))),
    }
}

fn round_to(x: f64, step: f64) -> f64 {
    let digits = (-step.log10().floor()).max(0.0) as i32 + 6;
    let p = 10f64.powi(digits);
    (x * p).round() / p
}

/// `(ℓ, d)` solving `λ₁ = ℓ·b₁^(−υ) + d`, `λ₂ = ℓ·b₂^(−υ) + d`.
pub fn two_point(b1: u64, l1: f64, b2: u64, l2: f64, upsilon: f64) -> Result<(f64, f64)> {
    let s1 = (b1 as f64).powf(-upsilon);
    let s2 = (b2 as f64).powf(-upsilon);
    if s1 == s2 {
        return Err(Error::SingularDesign(format!(
            "two-point system with equal batch sizes {b1}"
        )));
    }
    let ell = (l1 - l2) / (s1 - s2);
    Ok((ell, l1 - ell * s1))
}

/// Minimum spacing enforced between consecutive initial `θ`.
const INIT_FLOOR: f64 = 1e-3;

/// Intercepts of the two-point power law through the two largest batch
/// sizes, made strictly decreasing and positive.
pub fn init_theta_two_point(means: &SeedMeans, upsilon: f64) -> Result<Vec<f64>> {
    let nb = means.batch_sizes.len();
    if nb < 2 {
        return Err(Error::SingularDesign(
            "two-point initialization needs two batch sizes".into(),
        ));
    }
    let (b1, b2) = (means.batch_sizes[nb - 1], means.batch_sizes[nb - 2]);
    let mut theta = Vec::with_capacity(means.n_out());
    for row in &means.values {
        theta.push(two_point(b1, row[nb - 1], b2, row[nb - 2], upsilon)?.1);
    }
    let n = theta.len();
    for i in (0..n).rev() {
        let floor = if i + 1 == n {
            INIT_FLOOR
        } else {
            theta[i + 1] + INIT_FLOOR
        };
        theta[i] = theta[i].max(floor);
    }
    Ok(theta)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn truth() -> FitParams {
        FitParams {
            theta: vec![5.0, 4.0, 3.0, 2.0, 1.0],
            alpha: 0.3,
            beta: 0.2,
            gamma: 0.1,
            upsilon: 0.5,
        }
    }

    fn batches() -> Vec<u64> {
        vec![32, 64, 128, 256, 512, 1024]
    }

    #[test]
    fn seed_mean_cases() {
        let d =
            OutlierDataset::new(vec![1, 2], vec![vec![vec![1.0, 5.0], vec![3.0, 5.0]]]).unwrap();
        assert_eq!(seed_mean(&d).values, vec![vec![2.0, 5.0]]);
        let single = OutlierDataset::new(vec![1, 2], vec![vec![vec![1.5, -2.0]]]).unwrap();
        assert_eq!(seed_mean(&single).values, vec![vec![1.5, -2.0]]);
    }

    #[test]
    fn dataset_validation() {
        assert!(OutlierDataset::new(vec![2, 1], vec![vec![vec![1.0, 1.0]]]).is_err());
        assert!(OutlierDataset::new(vec![1, 2], vec![vec![vec![1.0]]]).is_err());
        assert!(OutlierDataset::new(vec![1, 2], vec![vec![vec![1.0, 2.0]], vec![]]).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let d = OutlierDataset::synthetic(&truth(), batches(), 3, 0.01, 4).unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        assert!(buf.starts_with(b"outlier_index,seed,batch_size,value\n"));
        assert_eq!(OutlierDataset::read_csv(buf.as_slice()).unwrap(), d);
        let text = String::from_utf8(buf).unwrap();
        let missing: String = text
            .lines()
            .enumerate()
            .filter(|(i, _)| *i != 7)
            .map(|(_, l)| l)
            .collect::<Vec<_>>()
            .join("\n");
        assert!(OutlierDataset::read_csv(missing.as_bytes()).is_err());
    }

    #[test]
    fn linear_solve_recovers_truth() {
        let p = truth();
        let means = seed_mean(&OutlierDataset::synthetic(&p, batches(), 1, 0.0, 0).unwrap());
        let w = solve_linear_given_theta(&means, &p.theta, p.upsilon).unwrap();
        assert!((w.alpha - 0.3).abs() < 1e-10);
        assert!((w.beta_raw - 0.2).abs() < 1e-10);
        assert!((w.beta_gamma_raw - 0.02).abs() < 1e-10);
    }

    #[test]
    fn flat_data_gives_zero_weights() {
        let theta = vec![3.0, 1.0];
        let means = SeedMeans {
            batch_sizes: batches(),
            values: theta.iter().map(|&t| vec![t; 6]).collect(),
        };
        let w = solve_linear_given_theta(&means, &theta, 0.5).unwrap();
        for v in [w.alpha, w.beta_raw, w.beta_gamma_raw] {
            assert!(v.abs() < 1e-12);
        }
    }

    #[test]
    fn duplicated_rows_do_not_change_solution() {
        let rows: Vec<([f64; 3], f64)> = (0..6)
            .map(|k| {
                let x = design_row(2.0 + k as f64 * 0.1, 1 << (k + 2), 0.4);
                (
                    x,
                    0.5 * x[0] - 0.1 * x[1] + 0.3 * x[2] + 0.01 * (k as f64).sin(),
                )
            })
            .collect();
        let a = solve_design(&rows).unwrap();
        let doubled: Vec<_> = rows.iter().chain(rows.iter()).copied().collect();
        let b = solve_design(&doubled).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn singular_designs() {
        let means = SeedMeans {
            batch_sizes: vec![64],
            values: vec![vec![3.0], vec![2.0], vec![1.0]],
        };
        assert!(matches!(
            solve_linear_given_theta(&means, &[3.0, 2.0, 1.0], 0.5),
            Err(Error::SingularDesign(_))
        ));
        let means = SeedMeans {
            batch_sizes: vec![8, 16, 32],
            values: vec![vec![1.0, 1.0, 1.0]],
        };
        assert!(solve_linear_given_theta(&means, &[1.0], 0.5).is_ok());
        assert!(solve_design(&[([1.0, 1.0, 1.0], 1.0); 5]).is_err());
    }

    #[test]
    fn objective_cases() {
        let p = truth();
        let means = seed_mean(&OutlierDataset::synthetic(&p, batches(), 1, 0.0, 0).unwrap());
        assert!(objective(&p, &means).unwrap() < 1e-28);

        let one = FitParams {
            theta: vec![1.0],
            alpha: 0.0,
            beta: 0.0,
            gamma: 0.0,
            upsilon: 0.5,
        };
        let cell = SeedMeans {
            batch_sizes: vec![4],
            values: vec![vec![2.0]],
        };
        assert_eq!(objective(&one, &cell).unwrap(), 1.0);
        let cell2 = SeedMeans {
            batch_sizes: vec![4],
            values: vec![vec![3.0]],
        };
        assert_eq!(objective(&one, &cell2).unwrap(), 4.0);
    }

    #[test]
    fn reparametrization_round_trip() {
        let theta = vec![5.0, 4.0, 3.0, 2.0, 1.0];
        let back = theta_from_c(&c_from_theta(&theta).unwrap());
        for (a, b) in theta.iter().zip(&back) {
            assert!((a - b).abs() < 1e-14);
        }
        assert!(c_from_theta(&[1.0, 1.0]).is_err());
    }

    #[test]
    fn two_point_cases() {
        let (ell, d) = two_point(1024, 2.0 + 0.7 / 32.0, 256, 2.0 + 0.7 / 16.0, 0.5).unwrap();
        assert!((ell - 0.7).abs() < 1e-12 && (d - 2.0).abs() < 1e-12);
        assert!(two_point(64, 1.0, 64, 2.0, 0.5).is_err());
        let flat = SeedMeans {
            batch_sizes: vec![16, 32],
            values: vec![vec![1.5, 1.5]],
        };
        assert_eq!(init_theta_two_point(&flat, 0.5).unwrap(), vec![1.5]);
    }

    #[test]
    fn init_is_ordered() {
        let means = SeedMeans {
            batch_sizes: vec![16, 32],
            values: vec![vec![1.0, 1.0], vec![1.0, 1.0], vec![-3.0, -3.0]],
        };
        let t = init_theta_two_point(&means, 0.5).unwrap();
        assert!(valid_theta(&t), "{t:?}");
    }

    #[test]
    fn recovers_noiseless_parameters() {
        let p = truth();
        let means = seed_mean(&OutlierDataset::synthetic(&p, batches(), 10, 0.0, 0).unwrap());
        let r = fit_theta(&means, 0.5, &FitConfig::default()).unwrap();
        assert!(r.converged);
        for (a, b) in r.params.theta.iter().zip(&p.theta) {
            assert!((a - b).abs() < 1e-4, "{:?}", r.params);
        }
        assert!(r.mse < 1e-12, "{}", r.mse);
        assert!((r.params.alpha - p.alpha).abs() < 1e-4);
        assert!((r.params.beta - p.beta).abs() < 1e-4);
        assert!((r.params.gamma - p.gamma).abs() < 1e-4);
        assert!(r.history.windows(2).all(|w| w[1] <= w[0]));
        assert!((r.mse - objective(&r.params, &means).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn constant_model_single_outlier() {
        let means = SeedMeans {
            batch_sizes: vec![8, 16, 32, 64],
            values: vec![vec![2.5; 4]],
        };
        let r = fit_theta(&means, 0.5, &FitConfig::default()).unwrap();
        assert!((r.params.theta[0] - 2.5).abs() < 1e-8);
    }

    #[test]
    fn penalty_keeps_beta_feasible() {
        let mut p = truth();
        let means = {
            let mut m = seed_mean(&OutlierDataset::synthetic(&p, batches(), 1, 0.0, 0).unwrap());
            // flip the sign of the b^(−2υ) contribution
            for (i, row) in m.values.iter_mut().enumerate() {
                for (k, v) in row.iter_mut().enumerate() {
                    let x = design_row(p.theta[i], m.batch_sizes[k], p.upsilon);
                    *v -= 2.0 * (p.beta * x[1] + p.beta * p.gamma * x[2]);
                }
            }
            m
        };
        let raw = solve_linear_given_theta(&means, &p.theta, p.upsilon).unwrap();
        assert!(raw.beta_raw < 0.0);
        let r = fit_theta(&means, p.upsilon, &FitConfig::default()).unwrap();
        assert!(r.params.beta >= 0.0);
        assert!(r.params.validate().is_ok());
        p.beta = 0.0;
        assert!((r.mse - objective(&r.params, &means).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn sweep_selects_true_exponent() {
        let p = truth();
        let means = seed_mean(&OutlierDataset::synthetic(&p, batches(), 10, 0.0, 0).unwrap());
        let grid = parse_grid("0.1:0.9:0.1").unwrap();
        assert_eq!(grid.len(), 9);
        assert_eq!(grid[2], 0.3);
        let r = sweep_upsilon(&means, &grid, &FitConfig::default()).unwrap();
        assert_eq!(r.params.upsilon, 0.5);
        assert_eq!(r.table.len(), 9);
        let single = sweep_upsilon(&means, &[0.5], &FitConfig::default()).unwrap();
        assert_eq!(single.params, r.params);
    }

    #[test]
    fn sweep_ties_prefer_smaller_upsilon() {
        // a single flat outlier fits every υ exactly
        let means = SeedMeans {
            batch_sizes: vec![8, 16, 32, 64],
            values: vec![vec![2.0; 4]],
        };
        let r = sweep_upsilon(&means, &[0.7, 0.3, 0.5], &FitConfig::default()).unwrap();
        assert!(r.table.iter().all(|e| e.mse == r.mse) || r.params.upsilon == 0.3);
        if r.table.iter().all(|e| e.mse == r.mse) {
            assert_eq!(r.params.upsilon, 0.3);
        }
    }

    #[test]
    fn grid_parsing() {
        assert_eq!(parse_grid("0.5").unwrap(), vec![0.5]);
        assert!(parse_grid("1:0:0.1").is_err());
        assert!(parse_grid("a:b:c").is_err());
    }
}
