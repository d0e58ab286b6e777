//! Seeded random-matrix ensembles and the deformed model `H = s·X + A`.
//!
//! Randomness comes from ChaCha8 seeded with the spec's 64-bit seed. Row `i`
//! of a Wigner-type matrix (entries `(i, 0..=i)`) and row `i` of a Wishart
//! factor `X` are drawn from stream `i` of that generator, so rows can be
//! filled in parallel and the result does not depend on the thread count.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::SymmetricMatrix;
use crate::measure::SpectralMeasure;

/// Attempts allowed before the configuration model gives up.
pub const MAX_GRAPH_ATTEMPTS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnsembleKind {
    Goe,
    Uwig,
    GammaWig,
    Uwish,
    Wish,
    RegularGraph,
}

impl EnsembleKind {
    pub const ALL: [EnsembleKind; 6] = [
        EnsembleKind::Goe,
        EnsembleKind::Uwig,
        EnsembleKind::GammaWig,
        EnsembleKind::Uwish,
        EnsembleKind::Wish,
        EnsembleKind::RegularGraph,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EnsembleKind::Goe => "goe",
            EnsembleKind::Uwig => "uwig",
            EnsembleKind::GammaWig => "gammawig",
            EnsembleKind::Uwish => "uwish",
            EnsembleKind::Wish => "wish",
            EnsembleKind::RegularGraph => "regulargraph",
        }
    }

    pub fn is_wishart(self) -> bool {
        matches!(self, EnsembleKind::Uwish | EnsembleKind::Wish)
    }

    /// Uncentered entry laws produce one large eigenvalue from the mean.
    pub fn has_mean_outlier(self) -> bool {
        matches!(
            self,
            EnsembleKind::Uwig
                | EnsembleKind::GammaWig
                | EnsembleKind::Uwish
                | EnsembleKind::RegularGraph
        )
    }
}

impl fmt::Display for EnsembleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EnsembleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut key = s.to_ascii_lowercase().replace(['-', '_'], "");
        if key == "reg" {
            key = "regulargraph".into();
        }
        EnsembleKind::ALL
            .into_iter()
            .find(|k| k.name() == key)
            .ok_or_else(|| Error::invalid(format!("unknown ensemble '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub kind: EnsembleKind,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    pub seed: u64,
}

impl EnsembleSpec {
    pub fn wigner(kind: EnsembleKind, n: usize, seed: u64) -> Result<Self> {
        Self {
            kind,
            n,
            m: None,
            d: None,
            seed,
        }
        .validated()
    }

    pub fn wishart(kind: EnsembleKind, n: usize, m: usize, seed: u64) -> Result<Self> {
        Self {
            kind,
            n,
            m: Some(m),
            d: None,
            seed,
        }
        .validated()
    }

    pub fn regular_graph(n: usize, d: usize, seed: u64) -> Result<Self> {
        Self {
            kind: EnsembleKind::RegularGraph,
            n,
            m: None,
            d: Some(d),
            seed,
        }
        .validated()
    }

    pub fn validated(self) -> Result<Self> {
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::invalid(format!(
                "matrix size must be at least 2, got {}",
                self.n
            )));
        }
        match self.kind {
            EnsembleKind::Uwish | EnsembleKind::Wish => match self.m {
                Some(m) if m >= 1 => {}
                _ => return Err(Error::invalid("Wishart ensembles need m ≥ 1")),
            },
            EnsembleKind::RegularGraph => {
                let d = self
                    .d
                    .ok_or_else(|| Error::invalid("regular graphs need a degree d"))?;
                if d < 3 || d >= self.n {
                    return Err(Error::invalid(format!(
                        "degree must satisfy 3 ≤ d < n, got d = {d}, n = {}",
                        self.n
                    )));
                }
                if !(self.n * d).is_multiple_of(2) {
                    return Err(Error::invalid("n·d must be even"));
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Limiting spectral law of the bulk (mean outliers excluded).
    pub fn limit_law(&self) -> Result<SpectralMeasure> {
        match self.kind {
            EnsembleKind::Goe | EnsembleKind::Uwig | EnsembleKind::GammaWig => {
                SpectralMeasure::semicircle(std::f64::consts::SQRT_2)
            }
            EnsembleKind::Uwish | EnsembleKind::Wish => {
                let (n, m) = (self.n as f64, self.m.unwrap_or(1) as f64);
                if n <= m {
                    SpectralMeasure::marchenko_pastur(n / m, 1.0)
                } else {
                    // rank m: an atom at 0 plus the nonzero spectrum of (1/m)XᵀX rescaled
                    let r = m / n;
                    let bulk = SpectralMeasure::marchenko_pastur(r, 1.0 / r)?;
                    SpectralMeasure::mixture(vec![
                        (1.0 - r, SpectralMeasure::point_mass(0.0)?),
                        (r, bulk),
                    ])
                }
            }
            EnsembleKind::RegularGraph => SpectralMeasure::kesten_mckay(self.d.unwrap_or(3) as u32),
        }
    }
}

fn row_rng(seed: u64, row: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(row as u64);
    rng
}

fn wigner_rows<F>(n: usize, seed: u64, draw: F) -> SymmetricMatrix
where
    F: Fn(&mut ChaCha8Rng, bool) -> f64 + Sync,
{
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = row_rng(seed, i);
            (0..=i).map(|j| draw(&mut rng, i == j)).collect()
        })
        .collect();
    SymmetricMatrix::from_lower_rows(rows).expect("rows have triangular lengths")
}

fn wishart<F>(n: usize, m: usize, seed: u64, draw: F) -> SymmetricMatrix
where
    F: Fn(&mut ChaCha8Rng) -> f64 + Sync,
{
    let x: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = row_rng(seed, i);
            (0..m).map(|_| draw(&mut rng)).collect()
        })
        .collect();
    let inv_m = 1.0 / m as f64;
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..=i)
                .map(|j| inv_m * x[i].iter().zip(&x[j]).map(|(a, b)| a * b).sum::<f64>())
                .collect()
        })
        .collect();
    SymmetricMatrix::from_lower_rows(rows).expect("rows have triangular lengths")
}

/// Adjacency of a simple `d`-regular graph from the configuration model,
/// resampling the pairing until it has no loops or repeated edges.
fn regular_graph(n: usize, d: usize, seed: u64) -> Result<SymmetricMatrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stubs: Vec<usize> = (0..n).flat_map(|v| std::iter::repeat_n(v, d)).collect();
    'attempt: for _ in 0..MAX_GRAPH_ATTEMPTS {
        stubs.shuffle(&mut rng);
        let mut adj = SymmetricMatrix::zeros(n);
        for pair in stubs.chunks_exact(2) {
            let (u, v) = (pair[0], pair[1]);
            if u == v || adj.get(u, v) != 0.0 {
                continue 'attempt;
            }
            adj.set(u, v, 1.0);
        }
        return Ok(adj);
    }
    Err(Error::no_convergence(
        format!("simple {d}-regular graph on {n} vertices after {MAX_GRAPH_ATTEMPTS} attempts"),
        None,
    ))
}

/// One draw from the ensemble.
pub fn sample(spec: &EnsembleSpec) -> Result<SymmetricMatrix> {
    spec.validate()?;
    let n = spec.n;
    let nf = n as f64;
    let seed = spec.seed;
    Ok(match spec.kind {
        EnsembleKind::Goe => {
            let off = (1.0 / (2.0 * nf)).sqrt();
            let diag = (1.0 / nf).sqrt();
            wigner_rows(n, seed, |rng, on_diag| {
                let z: f64 = rng.sample(StandardNormal);
                z * if on_diag { diag } else { off }
            })
        }
        EnsembleKind::Uwig => {
            let u = Uniform::new(0.0, 6f64.sqrt()).expect("valid range");
            let s = 1.0 / nf.sqrt();
            wigner_rows(n, seed, |rng, _| s * u.sample(rng))
        }
        EnsembleKind::GammaWig => {
            let g = Gamma::new(2.0, 1.0).expect("valid shape");
            let s = 1.0 / (2.0 * nf.sqrt());
            wigner_rows(n, seed, |rng, _| s * g.sample(rng))
        }
        EnsembleKind::Uwish => {
            let u = Uniform::new(0.0, 12f64.sqrt()).expect("valid range");
            wishart(n, spec.m.expect("validated"), seed, |rng| u.sample(rng))
        }
        EnsembleKind::Wish => wishart(n, spec.m.expect("validated"), seed, |rng| {
            rng.sample(StandardNormal)
        }),
        EnsembleKind::RegularGraph => regular_graph(n, spec.d.expect("validated"), seed)?,
    })
}

/// Independent child seed number `index` of `master`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index);
    rng.random()
}

/// Uniformly distributed unit vector in `ℝⁿ`.
pub fn random_unit_vector(n: usize, seed: u64) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::invalid("dimension must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    Ok(v.into_iter().map(|x| x / norm).collect())
}

/// Batch-size scaling `s(b) = b^(−υ)`.
pub fn scaling_function(b: u64, upsilon: f64) -> Result<f64> {
    if b < 1 {
        return Err(Error::invalid("batch size must be at least 1"));
    }
    if !(upsilon > 0.0) {
        return Err(Error::invalid(format!(
            "scaling exponent must be positive, got {upsilon}"
        )));
    }
    Ok((b as f64).powf(-upsilon))
}

/// `H = s·X + A`.
pub fn compose_hessian(
    x: &SymmetricMatrix,
    a: &SymmetricMatrix,
    s: f64,
) -> Result<SymmetricMatrix> {
    x.scaled_add(s, a)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeformationSpec {
    /// Right spikes, strictly decreasing.
    pub spikes_right: Vec<f64>,
    /// Left spikes, strictly increasing.
    #[serde(default)]
    pub spikes_left: Vec<f64>,
    pub epsilon: f64,
    pub eta: SpectralMeasure,
    pub n: usize,
    pub seed: u64,
}

impl DeformationSpec {
    /// The bulk law `ν = ε·η + (1 − ε)·δ₀`.
    pub fn nu(&self) -> Result<SpectralMeasure> {
        SpectralMeasure::spiked_bulk(self.epsilon, self.eta.clone())
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.epsilon) {
            return Err(Error::invalid(format!(
                "epsilon must lie in [0, 1), got {}",
                self.epsilon
            )));
        }
        if self.spikes_right.len() + self.spikes_left.len() >= self.n {
            return Err(Error::invalid("spike count must be below n"));
        }
        if self.spikes_right.windows(2).any(|w| !(w[0] > w[1])) {
            return Err(Error::invalid("right spikes must be strictly decreasing"));
        }
        if self.spikes_left.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::invalid("left spikes must be strictly increasing"));
        }
        let (l, r) = self.nu()?.support_edges();
        if let Some(&last) = self.spikes_right.last() {
            if !(last > r) {
                return Err(Error::invalid(format!(
                    "right spike {last} does not exceed the bulk edge {r}"
                )));
            }
        }
        if let Some(&last) = self.spikes_left.last() {
            if !(last < l) {
                return Err(Error::invalid(format!(
                    "left spike {last} is not below the bulk edge {l}"
                )));
            }
        }
        Ok(())
    }
}

/// Diagonal `A = diag(θ₁..θ_p, ξ₁..ξ_{n−p−q}, θ'_q..θ'₁)` with each `ξ` drawn
/// from `η` with probability `ε` and zero otherwise. Returns `A` and `ν`.
pub fn build_deformation(spec: &DeformationSpec) -> Result<(SymmetricMatrix, SpectralMeasure)> {
    spec.validate()?;
    let nu = spec.nu()?;
    let p = spec.spikes_right.len();
    let q = spec.spikes_left.len();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut diag = Vec::with_capacity(spec.n);
    diag.extend_from_slice(&spec.spikes_right);
    for _ in 0..spec.n - p - q {
        let keep: f64 = rng.random();
        let u: f64 = rng.random();
        diag.push(if keep < spec.epsilon {
            spec.eta.inverse_cdf(u)
        } else {
            0.0
        });
    }
    diag.extend(spec.spikes_left.iter().rev());
    Ok((SymmetricMatrix::from_diagonal(&diag), nu))
}
