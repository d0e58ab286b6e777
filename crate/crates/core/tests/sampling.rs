//! Statistical checks of samplers, solvers and diagnostics against their limit laws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use rmtk::analysis::{
    bulk_indices, diag_local_law_error, precond_equivalence, qq_compare, que_statistic,
    rigidity_check,
};
use rmtk::eig::{full_eigh, spectrum_histogram};
use rmtk::ensembles::{sample, EnsembleKind, EnsembleSpec};
use rmtk::fit::{fit_theta, seed_mean, FitConfig, FitParams, OutlierDataset};
use rmtk::measure::{w1_distance, Complex64};
use rmtk::outliers::{detect_outliers, predict_fixed_rank};
use rmtk::{SpectralMeasure, SymmetricMatrix};

fn spec_for(kind: EnsembleKind, n: usize, seed: u64) -> EnsembleSpec {
    match kind {
        EnsembleKind::RegularGraph => EnsembleSpec::regular_graph(n, 4, seed),
        k if k.is_wishart() => EnsembleSpec::wishart(k, n, 2 * n, seed),
        k => EnsembleSpec::wigner(k, n, seed),
    }
    .unwrap()
}

fn eigenvalues(m: &SymmetricMatrix) -> Vec<f64> {
    full_eigh(m, false).unwrap().eigenvalues
}

fn gaussian_vector(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / norm).collect()
}

/// Haar-distributed orthogonal matrix (column-major) from Gram-Schmidt on a Gaussian matrix.
fn haar_orthogonal(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut q: Vec<f64> = (0..n * n)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    for j in 0..n {
        for _ in 0..2 {
            for k in 0..j {
                let dot: f64 = (0..n).map(|i| q[i + n * j] * q[i + n * k]).sum();
                for i in 0..n {
                    q[i + n * j] -= dot * q[i + n * k];
                }
            }
        }
        let norm = (0..n).map(|i| q[i + n * j].powi(2)).sum::<f64>().sqrt();
        for i in 0..n {
            q[i + n * j] /= norm;
        }
    }
    q
}

/// `P M Pᵀ` for column-major orthogonal `P`.
fn conjugate(m: &SymmetricMatrix, p: &[f64]) -> SymmetricMatrix {
    let n = m.n();
    let full = m.to_full();
    let mut mp = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            mp[i * n + j] = (0..n).map(|k| full[i * n + k] * p[j + n * k]).sum();
        }
    }
    SymmetricMatrix::from_lower_fn(n, |i, j| (0..n).map(|k| p[i + n * k] * mp[k * n + j]).sum())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn welch_t(a: &[f64], b: &[f64]) -> f64 {
    let var = |v: &[f64]| {
        let m = mean(v);
        v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
    };
    (mean(a) - mean(b)) / (var(a) / a.len() as f64 + var(b) / b.len() as f64).sqrt()
}

#[test]
fn goe_spectrum_is_orthogonally_invariant() {
    let n = 200;
    let p = haar_orthogonal(n, 77);
    let direct: Vec<f64> = (0..20u64)
        .into_par_iter()
        .flat_map(|s| eigenvalues(&sample(&spec_for(EnsembleKind::Goe, n, s)).unwrap()))
        .collect();
    let rotated: Vec<f64> = (0..20u64)
        .into_par_iter()
        .flat_map(|s| {
            eigenvalues(&conjugate(
                &sample(&spec_for(EnsembleKind::Goe, n, 500 + s)).unwrap(),
                &p,
            ))
        })
        .collect();
    let a = SpectralMeasure::empirical(direct).unwrap();
    let b = SpectralMeasure::empirical(rotated).unwrap();
    let d = w1_distance(&a, &b).unwrap();
    assert!(d < 0.05, "W1 = {d}");
}

#[test]
fn empirical_spectra_approach_limit_laws() {
    for kind in EnsembleKind::ALL {
        let averages: Vec<f64> = [100, 200, 400]
            .iter()
            .map(|&n| {
                let ds: Vec<f64> = (0..10u64)
                    .into_par_iter()
                    .map(|s| {
                        let spec = spec_for(kind, n, s);
                        let mut eigs = eigenvalues(&sample(&spec).unwrap());
                        if kind.has_mean_outlier() {
                            eigs.pop();
                        }
                        let emp = SpectralMeasure::empirical(eigs).unwrap();
                        w1_distance(&emp, &spec.limit_law().unwrap()).unwrap()
                    })
                    .collect();
                mean(&ds)
            })
            .collect();
        assert!(
            averages.windows(2).all(|w| w[1] < w[0]),
            "{kind}: {averages:?}"
        );
    }
}

#[test]
fn pooled_goe_histogram_matches_semicircle() {
    let n = 500;
    let pooled: Vec<f64> = (0..50u64)
        .into_par_iter()
        .flat_map(|s| eigenvalues(&sample(&spec_for(EnsembleKind::Goe, n, s)).unwrap()))
        .collect();
    let hist = spectrum_histogram(&pooled, 40).unwrap();
    let sc = SpectralMeasure::semicircle(std::f64::consts::SQRT_2).unwrap();
    let worst = hist
        .centers()
        .iter()
        .zip(&hist.density)
        .map(|(x, d)| (d - sc.density_at(*x).unwrap()).abs())
        .fold(0.0, f64::max);
    assert!(worst < 0.05, "L∞ = {worst}");
}

/// Per-index values `N (qᵀu_k)²` over the bulk.
fn que_samples(vectors: &[f64], q: &[f64]) -> Vec<f64> {
    let n = q.len();
    bulk_indices(n, 0.8)
        .into_iter()
        .map(|k| {
            let p: f64 = vectors[k * n..(k + 1) * n]
                .iter()
                .zip(q)
                .map(|(a, b)| a * b)
                .sum();
            n as f64 * p * p
        })
        .collect()
}

/// Moment statistics, then overlap samples for dense q, e₁ and dense q against Haar vectors.
type QueRun = (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>);

#[test]
fn que_statistics_are_gaussian_and_universal() {
    let n = 400;
    let dense = gaussian_vector(n, 9);
    let mut e1 = vec![0.0; n];
    e1[0] = 1.0;
    let bulk = bulk_indices(n, 0.8);
    let runs: Vec<QueRun> = (0..10u64)
        .into_par_iter()
        .map(|s| {
            let r = full_eigh(&sample(&spec_for(EnsembleKind::Goe, n, s)).unwrap(), true).unwrap();
            let v = r.eigenvectors.unwrap();
            let stats = que_statistic(&v, &dense, &bulk, 2).unwrap();
            let haar = haar_orthogonal(n, 1000 + s);
            (
                stats,
                que_samples(&v, &dense),
                que_samples(&v, &e1),
                que_samples(&haar, &dense),
            )
        })
        .collect();
    let p1: Vec<f64> = runs.iter().map(|r| r.0[0]).collect();
    let p2: Vec<f64> = runs.iter().map(|r| r.0[1]).collect();
    assert!((mean(&p1) - 1.0).abs() < 0.1, "{}", mean(&p1));
    assert!((mean(&p2) - 3.0).abs() < 0.6, "{}", mean(&p2));

    let pool = |f: fn(&QueRun) -> &Vec<f64>| -> Vec<f64> {
        runs.iter().flat_map(|r| f(r).iter().copied()).collect()
    };
    let goe_dense = pool(|r| &r.1);
    let goe_local = pool(|r| &r.2);
    let haar_dense = pool(|r| &r.3);
    // two-sided test at the 1% level
    assert!(welch_t(&goe_dense, &goe_local).abs() < 2.576);
    assert!(welch_t(&goe_dense, &haar_dense).abs() < 2.576);
}

#[test]
fn goe_rigidity_holds_in_the_bulk() {
    let mu = SpectralMeasure::semicircle(std::f64::consts::SQRT_2).unwrap();
    for s in 0..3 {
        let eigs = eigenvalues(&sample(&spec_for(EnsembleKind::Goe, 1000, s)).unwrap());
        let r = rigidity_check(&eigs, &mu, 10.0).unwrap();
        assert!(r.fraction >= 0.99, "seed {s}: {}", r.fraction);
    }
}

#[test]
fn diagonal_local_law_error_shrinks_with_n() {
    let mu = SpectralMeasure::semicircle(std::f64::consts::SQRT_2).unwrap();
    let z = Complex64::new(-2.0, 0.0);
    let mut last = f64::INFINITY;
    for n in [250, 500, 1000] {
        let reports: Vec<_> = (0..5u64)
            .into_par_iter()
            .map(|s| {
                let eigs = eigenvalues(&sample(&spec_for(EnsembleKind::Goe, n, s)).unwrap());
                diag_local_law_error(&eigs, &mu, z).unwrap()
            })
            .collect();
        let err = reports.iter().map(|r| r.max_error).sum::<f64>() / reports.len() as f64;
        assert!(err < last, "n = {n}: {err} ≥ {last}");
        assert!(
            err / reports[0].bound_scale <= 20.0,
            "n = {n}: ratio {}",
            err / reports[0].bound_scale
        );
        last = err;
    }
}

#[test]
fn preconditioner_surrogate_improves_with_n() {
    let mu = SpectralMeasure::marchenko_pastur(0.5, 1.0).unwrap();
    let mut last = f64::INFINITY;
    for n in [200, 400, 800] {
        let g = gaussian_vector(n, 3);
        let err = (0..3u64)
            .map(|s| {
                precond_equivalence(
                    &sample(&spec_for(EnsembleKind::Wish, n, s)).unwrap(),
                    &mu,
                    0.1,
                    &g,
                )
                .unwrap()
            })
            .sum::<f64>()
            / 3.0;
        assert!(err < last, "n = {n}: {err} ≥ {last}");
        last = err;
    }
}

#[test]
fn detection_finds_exactly_the_planted_spike() {
    let n = 1000;
    let bulk = SpectralMeasure::semicircle(std::f64::consts::SQRT_2).unwrap();
    let theta = 3.0;
    let predicted = predict_fixed_rank(&bulk, theta).unwrap().location;
    for s in 0..3 {
        let x = sample(&spec_for(EnsembleKind::Goe, n, s)).unwrap();
        assert!(detect_outliers(&eigenvalues(&x), &bulk, 5).is_empty());
        let mut spiked = x.clone();
        spiked.set(0, 0, x.get(0, 0) + theta);
        let found = detect_outliers(&eigenvalues(&spiked), &bulk, 5);
        assert_eq!(found.len(), 1);
        assert!(
            (found[0] - predicted).abs() < 0.1,
            "{} vs {predicted}",
            found[0]
        );
        assert!(detect_outliers(&eigenvalues(&spiked), &bulk, 0).is_empty());
    }
}

#[test]
fn uniform_and_gaussian_wigner_parts_give_matching_quantiles() {
    let n = 400;
    let pooled = |kind: EnsembleKind| -> Vec<f64> {
        (0..5u64)
            .into_par_iter()
            .flat_map(|s| {
                let graph = sample(&EnsembleSpec::regular_graph(n, 4, s).unwrap()).unwrap();
                let w = sample(&spec_for(kind, n, 100 + s)).unwrap();
                let mut e = eigenvalues(&graph.scaled_add(1.0, &w).unwrap());
                e.pop();
                e
            })
            .collect()
    };
    let qq = qq_compare(&pooled(EnsembleKind::Uwig), &pooled(EnsembleKind::Goe)).unwrap();
    assert!((qq.slope - 1.0).abs() < 0.05, "slope {}", qq.slope);
    assert!(qq.r2 > 0.99, "R² {}", qq.r2);
}

/// Asymptotic standard deviation of `α̂` from the Gauss-Newton covariance
/// `σ²(JᵀJ)⁻¹` of the model linearized in `(θ, α, β, βγ)` at the truth.
fn alpha_standard_error(truth: &FitParams, batch_sizes: &[u64], sigma: f64) -> f64 {
    let k = truth.theta.len();
    let dim = k + 3;
    let mut jtj = vec![vec![0.0; dim]; dim];
    for (i, &t) in truth.theta.iter().enumerate() {
        for &b in batch_sizes {
            let s = (b as f64).powf(-truth.upsilon);
            let bg = truth.beta * truth.gamma;
            let mut row = vec![0.0; dim];
            row[i] = 1.0 - truth.beta * s * s / (t * t) - 2.0 * bg * s * s / (t * t * t);
            row[k] = s;
            row[k + 1] = s * s / t;
            row[k + 2] = s * s / (t * t);
            for a in 0..dim {
                for c in 0..dim {
                    jtj[a][c] += row[a] * row[c];
                }
            }
        }
    }
    // solve JᵀJ x = e_α by Gauss-Jordan elimination
    let mut aug: Vec<Vec<f64>> = jtj
        .into_iter()
        .enumerate()
        .map(|(r, mut v)| {
            v.push(if r == k { 1.0 } else { 0.0 });
            v
        })
        .collect();
    for col in 0..dim {
        let piv = (col..dim)
            .max_by(|&a, &b| aug[a][col].abs().total_cmp(&aug[b][col].abs()))
            .unwrap();
        aug.swap(col, piv);
        for r in 0..dim {
            if r != col {
                let f = aug[r][col] / aug[col][col];
                for c in col..=dim {
                    aug[r][c] -= f * aug[col][c];
                }
            }
        }
    }
    sigma * (aug[k][dim] / aug[k][k]).sqrt()
}

#[test]
fn fit_is_robust_to_small_noise() {
    let truth = FitParams {
        theta: vec![5.0, 4.0, 3.0, 2.0, 1.0],
        alpha: 0.3,
        beta: 0.2,
        gamma: 0.1,
        upsilon: 0.5,
    };
    let batch_sizes = vec![32, 64, 128, 256, 512, 1024];
    let sigma = 0.01;
    let n_seed = 10;
    let se = alpha_standard_error(&truth, &batch_sizes, sigma / (n_seed as f64).sqrt());
    let errors: Vec<f64> = (0..20u64)
        .into_par_iter()
        .map(|t| {
            let data =
                OutlierDataset::synthetic(&truth, batch_sizes.clone(), n_seed, sigma, t).unwrap();
            let r = fit_theta(&seed_mean(&data), 0.5, &FitConfig::default()).unwrap();
            r.params.alpha - truth.alpha
        })
        .collect();
    let worst = errors.iter().fold(0.0f64, |m, e| m.max(e.abs()));
    assert!(
        worst < 5.0 * se,
        "worst α error {worst}, standard error {se}"
    );
}
