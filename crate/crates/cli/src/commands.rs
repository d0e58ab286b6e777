use std::fs::File;
use std::io::BufReader;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use rmtk::analysis::{
    bulk_indices, diag_local_law_error, kac_rice_exponent, potential_from_measure_with, qq_compare,
    que_statistic, rigidity_check, sv_functional, sv_functional_weighted, QUE_BULK_FRACTION,
    RIGIDITY_BULK_FRACTION,
};
use rmtk::eig::{full_eigh, spectrum_histogram};
use rmtk::ensembles::{derive_seed, random_unit_vector, sample, EnsembleKind, EnsembleSpec};
use rmtk::fit::{parse_grid, seed_mean, sweep_upsilon, FitConfig, FitParams, OutlierDataset};
use rmtk::freeconv::{
    closed_form, convolve_general, convolve_general_on_support, convolve_sc_mp_cubic_on_support,
    semicircle_radius, ConvolutionConfig, ConvolutionResult,
};
use rmtk::io::{read_column, write_column, write_columns};
use rmtk::measure::{w1_distance, Complex64, MeasureKind};
use rmtk::outliers::{
    predict_fixed_rank, predict_perturbative, predict_subordination, OutlierPrediction,
    PERTURBATIVE_EPS_WARN,
};
use rmtk::{SpectralMeasure, SymmetricMatrix};

use crate::output::OutDir;
use crate::{
    CliError, CliResult, Command, ComplexityArgs, ConvolveArgs, ConvolveMethod, DiagnosticsArgs,
    Global, OutlierFitArgs, OutlierPredictArgs, PotentialArgs, PredictMethod, QqArgs, SampleArgs,
    SynthOutliersArgs,
};

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

pub fn execute(global: &Global, command: &Command) -> CliResult<()> {
    let mut out = OutDir::create(&global.out)?;
    match command {
        Command::Sample(a) => cmd_sample(global, a, &mut out)?,
        Command::Convolve(a) => cmd_convolve(global, a, &mut out)?,
        Command::OutlierPredict(a) => cmd_outlier_predict(global, a, &mut out)?,
        Command::OutlierFit(a) => cmd_outlier_fit(a, &mut out)?,
        Command::SynthOutliers(a) => cmd_synth_outliers(global, a, &mut out)?,
        Command::Qq(a) => cmd_qq(a, &mut out)?,
        Command::Potential(a) => cmd_potential(global, a, &mut out)?,
        Command::Complexity(a) => cmd_complexity(a, &mut out)?,
        Command::Diagnostics(a) => cmd_diagnostics(global, a, &mut out)?,
        Command::Rerun(_) => return Err(invalid("a manifest cannot record a rerun")),
    }
    out.finish(global, command)
}

fn convolution_config(global: &Global) -> ConvolutionConfig {
    let mut cfg = ConvolutionConfig::default();
    if let Some(p) = global.grid_points {
        cfg.grid_points = p;
    }
    if let Some(e) = global.eta {
        cfg.eta = e;
    }
    if let Some(t) = global.tol {
        cfg.tol = t;
    }
    cfg
}

/// One summand `kind:n[:m|d][@scale]` of a sampled matrix.
#[derive(Debug, Clone)]
struct Term {
    kind: EnsembleKind,
    n: usize,
    param: Option<usize>,
    scale: f64,
}

impl FromStr for Term {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        let (body, scale) = match s.split_once('@') {
            Some((b, sc)) => (
                b,
                sc.parse::<f64>()
                    .map_err(|_| invalid(format!("bad scale in {s:?}")))?,
            ),
            None => (s, 1.0),
        };
        let parts: Vec<&str> = body.split(':').collect();
        if parts.len() < 2 || parts.len() > 3 {
            return Err(invalid(format!(
                "ensemble term {s:?} is not kind:n[:m|d][@scale]"
            )));
        }
        let kind = EnsembleKind::from_str(parts[0])?;
        let n = parts[1]
            .parse()
            .map_err(|_| invalid(format!("bad size in {s:?}")))?;
        let param = match parts.get(2) {
            Some(p) => Some(
                p.parse()
                    .map_err(|_| invalid(format!("bad parameter in {s:?}")))?,
            ),
            None => None,
        };
        Ok(Term {
            kind,
            n,
            param,
            scale,
        })
    }
}

impl Term {
    fn spec(&self, seed: u64) -> CliResult<EnsembleSpec> {
        let spec = match self.kind {
            EnsembleKind::RegularGraph => {
                let d = self
                    .param
                    .ok_or_else(|| invalid("regular graphs need a degree: reg:n:d"))?;
                EnsembleSpec::regular_graph(self.n, d, seed)?
            }
            k if k.is_wishart() => {
                let m = self
                    .param
                    .ok_or_else(|| invalid(format!("{k} needs a column count: {k}:n:m")))?;
                EnsembleSpec::wishart(k, self.n, m, seed)?
            }
            k => {
                if self.param.is_some() {
                    return Err(invalid(format!("{k} takes no third field")));
                }
                EnsembleSpec::wigner(k, self.n, seed)?
            }
        };
        Ok(spec)
    }
}

fn parse_terms(specs: &[String]) -> CliResult<Vec<Term>> {
    let terms: Vec<Term> = specs.iter().map(|s| s.parse()).collect::<CliResult<_>>()?;
    let n = terms
        .first()
        .ok_or_else(|| invalid("at least one ensemble term is required"))?
        .n;
    if terms.iter().any(|t| t.n != n) {
        return Err(invalid("all ensemble terms must have the same size"));
    }
    Ok(terms)
}

/// `Σ scale_t · X_t` with one derived seed per (sample, term).
fn sample_sum(global: &Global, terms: &[Term], index: usize) -> CliResult<SymmetricMatrix> {
    let mut acc: Option<SymmetricMatrix> = None;
    for (t, term) in terms.iter().enumerate() {
        let seed = derive_seed(global.seed, (index * terms.len() + t) as u64);
        let x = sample(&term.spec(seed)?)?;
        acc = Some(match acc {
            None => x.scale(term.scale),
            Some(a) => x.scaled_add(term.scale, &a)?,
        });
    }
    Ok(acc.expect("terms are nonempty"))
}

fn cmd_sample(global: &Global, a: &SampleArgs, out: &mut OutDir) -> CliResult<()> {
    let terms = parse_terms(&a.ensembles)?;
    if a.count == 0 {
        return Err(invalid("count must be positive"));
    }
    if a.drop_top >= terms[0].n {
        return Err(invalid("drop-top must be smaller than the matrix size"));
    }
    let spectra: Vec<Vec<f64>> = (0..a.count)
        .into_par_iter()
        .map(|i| {
            let m = sample_sum(global, &terms, i)?;
            let mut e = full_eigh(&m, false)?.eigenvalues;
            e.truncate(e.len() - a.drop_top);
            Ok(e)
        })
        .collect::<CliResult<_>>()?;
    let pooled: Vec<f64> = spectra.concat();
    out.csv("spectra.csv", |w| write_column(w, "eigenvalue", &pooled))?;
    let hist = spectrum_histogram(&pooled, a.bins)?;
    out.csv("histogram.csv", |w| hist.write_csv(w))?;
    let w1 = match &a.compare {
        Some(law) => Some(w1_distance(
            &SpectralMeasure::empirical(pooled.clone())?,
            law,
        )?),
        None => None,
    };
    let mean = pooled.iter().sum::<f64>() / pooled.len() as f64;
    out.json(
        "summary.json",
        &json!({
            "samples": a.count,
            "n": terms[0].n,
            "eigenvalues": pooled.len(),
            "min": pooled.iter().copied().fold(f64::INFINITY, f64::min),
            "max": pooled.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            "mean": mean,
            "w1_to_compare": w1,
        }),
    )
}

/// `(α, grid order swapped)` when `{μ, ν} = {SC(√2), MP(α, 1)}`.
fn sc_mp_ratio(mu: &SpectralMeasure, nu: &SpectralMeasure) -> Option<f64> {
    let is_sc = |m: &SpectralMeasure| {
        semicircle_radius(m).is_some_and(|r| (r - std::f64::consts::SQRT_2).abs() < 1e-12)
    };
    let mp = |m: &SpectralMeasure| match m.kind() {
        MeasureKind::MarchenkoPastur { ratio, scale } if *scale == 1.0 => Some(*ratio),
        _ => None,
    };
    if is_sc(mu) {
        mp(nu)
    } else if is_sc(nu) {
        mp(mu)
    } else {
        None
    }
}

fn density_table(m: &SpectralMeasure, points: usize) -> CliResult<(Vec<f64>, Vec<f64>)> {
    if points < 2 {
        return Err(invalid("at least two grid points are required"));
    }
    let (l, r) = m.support_edges();
    let grid: Vec<f64> = (0..points)
        .map(|i| l + (r - l) * i as f64 / (points - 1) as f64)
        .collect();
    let density = grid
        .iter()
        .map(|&x| m.density_at(x))
        .collect::<rmtk::Result<_>>()?;
    Ok((grid, density))
}

fn cmd_convolve(global: &Global, a: &ConvolveArgs, out: &mut OutDir) -> CliResult<()> {
    let cfg = convolution_config(global);
    let (grid, density, measure, residual) = match a.method {
        ConvolveMethod::Closed => {
            let m = closed_form(&a.mu, &a.nu)
                .ok_or_else(|| invalid("no closed form is known for this pair"))?;
            let (g, d) = density_table(&m, cfg.grid_points)?;
            (g, d, m, 0.0)
        }
        ConvolveMethod::Cubic => {
            let alpha = sc_mp_ratio(&a.mu, &a.nu).ok_or_else(|| {
                invalid("the cubic method needs a semicircle of radius √2 and MP(α, 1)")
            })?;
            unpack(convolve_sc_mp_cubic_on_support(alpha, cfg.grid_points)?)
        }
        ConvolveMethod::Subordination => unpack(convolve_general_on_support(&a.mu, &a.nu, &cfg)?),
    };
    let cross = if a.cross_check && grid.len() > 2 {
        let interior = &grid[1..grid.len() - 1];
        let other = convolve_general(&a.mu, &a.nu, interior, &cfg)?;
        Some(
            other
                .density()
                .iter()
                .zip(&density[1..density.len() - 1])
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max),
        )
    } else {
        None
    };
    out.csv("density.csv", |w| {
        write_columns(w, &["x", "density"], &[&grid, &density])
    })?;
    out.json("measure.json", &measure)?;
    let (l, r) = measure.support_edges();
    out.json(
        "summary.json",
        &json!({
            "method": a.method,
            "left_edge": l,
            "right_edge": r,
            "grid_points": grid.len(),
            "max_residual": residual,
            "mean": measure.moments(1)[0],
            "cross_check_linf": cross,
        }),
    )
}

fn unpack(r: ConvolutionResult) -> (Vec<f64>, Vec<f64>, SpectralMeasure, f64) {
    (
        r.grid().to_vec(),
        r.density().to_vec(),
        r.measure.clone(),
        r.max_residual,
    )
}

fn cmd_outlier_predict(global: &Global, a: &OutlierPredictArgs, out: &mut OutDir) -> CliResult<()> {
    let cfg = convolution_config(global);
    let predictions: Vec<OutlierPrediction> = match a.method {
        PredictMethod::FixedRank => a
            .spikes
            .iter()
            .map(|&t| predict_fixed_rank(&a.bulk, t))
            .collect::<rmtk::Result<_>>()?,
        PredictMethod::Subordination => {
            let nu =
                a.nu.as_ref()
                    .ok_or_else(|| invalid("subordination needs --nu"))?;
            a.spikes
                .iter()
                .map(|&t| predict_subordination(&a.bulk, nu, t, &cfg))
                .collect::<rmtk::Result<_>>()?
        }
        PredictMethod::Perturbative => {
            let eta = a
                .eta_law
                .as_ref()
                .ok_or_else(|| invalid("the perturbative method needs --eta-law"))?;
            if a.epsilon > PERTURBATIVE_EPS_WARN {
                eprintln!(
                    "warning: epsilon = {} is large for a first-order expansion",
                    a.epsilon
                );
            }
            let scaled = SpectralMeasure::scaled(a.scale, a.bulk.clone())?;
            a.spikes
                .iter()
                .map(|&t| {
                    let location = predict_perturbative(&a.bulk, eta, a.epsilon, t, a.scale)?;
                    let reference = predict_fixed_rank(&scaled, t)?;
                    Ok(OutlierPrediction {
                        location,
                        ..reference
                    })
                })
                .collect::<rmtk::Result<_>>()?
        }
    };
    let theta: Vec<f64> = predictions.iter().map(|p| p.theta).collect();
    let loc: Vec<f64> = predictions.iter().map(|p| p.location).collect();
    let det: Vec<f64> = predictions
        .iter()
        .map(|p| if p.detached { 1.0 } else { 0.0 })
        .collect();
    out.csv("predictions.csv", |w| {
        write_columns(
            w,
            &["theta", "prediction", "detached"],
            &[&theta, &loc, &det],
        )
    })?;
    out.json("predictions.json", &predictions)
}

fn fit_config(a: &OutlierFitArgs) -> FitConfig {
    let mut cfg = FitConfig::default();
    if let Some(v) = a.learning_rate {
        cfg.learning_rate = v;
    }
    if let Some(v) = a.max_iter {
        cfg.max_iter = v;
    }
    if let Some(v) = a.penalty {
        cfg.penalty = v;
    }
    cfg
}

fn open(path: &Path) -> CliResult<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))
}

fn cmd_outlier_fit(a: &OutlierFitArgs, out: &mut OutDir) -> CliResult<()> {
    let data = OutlierDataset::read_csv(open(&a.data)?)?;
    let grid = parse_grid(&a.upsilon_grid)?;
    let report = sweep_upsilon(&seed_mean(&data), &grid, &fit_config(a))?;
    let ups: Vec<f64> = report.table.iter().map(|e| e.upsilon).collect();
    let mse: Vec<f64> = report.table.iter().map(|e| e.mse).collect();
    out.csv("upsilon_table.csv", |w| {
        write_columns(w, &["upsilon", "mse"], &[&ups, &mse])
    })?;
    out.json("fit.json", &report)
}

fn cmd_synth_outliers(global: &Global, a: &SynthOutliersArgs, out: &mut OutDir) -> CliResult<()> {
    let params = FitParams {
        theta: a.theta.clone(),
        alpha: a.alpha,
        beta: a.beta,
        gamma: a.gamma,
        upsilon: a.upsilon,
    };
    let data = OutlierDataset::synthetic(
        &params,
        a.batch_sizes.clone(),
        a.seeds,
        a.noise,
        global.seed,
    )?;
    out.csv("outliers.csv", |w| data.write_csv(w))?;
    out.json("params.json", &params)
}

fn read_spectrum(path: &Path) -> CliResult<Vec<f64>> {
    Ok(read_column(open(path)?)?)
}

fn cmd_qq(a: &QqArgs, out: &mut OutDir) -> CliResult<()> {
    let qq = qq_compare(&read_spectrum(&a.a)?, &read_spectrum(&a.b)?)?;
    out.csv("qq.csv", |w| qq.write_csv(w))?;
    out.json(
        "summary.json",
        &json!({ "points": qq.x.len(), "slope": qq.slope, "intercept": qq.intercept, "r2": qq.r2 }),
    )
}

fn cmd_potential(global: &Global, a: &PotentialArgs, out: &mut OutDir) -> CliResult<()> {
    let points = global
        .grid_points
        .unwrap_or(rmtk::analysis::DEFAULT_POTENTIAL_POINTS);
    let v = potential_from_measure_with(&a.measure, points)?;
    out.csv("potential.csv", |w| v.write_csv(w))?;
    if a.sv_points < 2 || !(a.sv_range > 0.0) {
        return Err(invalid(
            "the S_V grid needs a positive range and at least two points",
        ));
    }
    let ys: Vec<f64> = (0..a.sv_points)
        .map(|i| -a.sv_range + 2.0 * a.sv_range * i as f64 / (a.sv_points - 1) as f64)
        .collect();
    let vals: Vec<f64> = ys.iter().map(|&y| v.value(y)).collect();
    let sv: Vec<f64> = ys
        .iter()
        .map(|&y| sv_functional(&v, &a.measure, y))
        .collect::<rmtk::Result<_>>()?;
    let sv_half: Vec<f64> = ys
        .iter()
        .map(|&y| sv_functional_weighted(&v, &a.measure, y, 0.5))
        .collect::<rmtk::Result<_>>()?;
    out.csv("sv.csv", |w| {
        write_columns(
            w,
            &["y", "v", "sv", "sv_half_log"],
            &[&ys, &vals, &sv, &sv_half],
        )
    })?;
    let spread = |f: &[f64]| {
        let inside: Vec<f64> = ys
            .iter()
            .zip(f)
            .filter(|(y, _)| **y > v.left && **y < v.right)
            .map(|(_, s)| *s)
            .collect();
        inside.iter().copied().fold(f64::NEG_INFINITY, f64::max)
            - inside.iter().copied().fold(f64::INFINITY, f64::min)
    };
    out.json(
        "summary.json",
        &json!({
            "left": v.left,
            "right": v.right,
            "left_quadratic": v.left_quadratic,
            "right_quadratic": v.right_quadratic,
            "junction_residuals": v.junction_residuals,
            "sv_spread_on_support": spread(&sv),
            "sv_half_log_spread_on_support": spread(&sv_half),
        }),
    )
}

#[derive(Deserialize)]
struct FamilyEntry {
    u: f64,
    measure: SpectralMeasure,
}

#[derive(Serialize)]
struct ComplexityReport<'a> {
    value: f64,
    argmax: f64,
    regime: &'a str,
    table: &'a [rmtk::analysis::KacRicePoint],
}

fn cmd_complexity(a: &ComplexityArgs, out: &mut OutDir) -> CliResult<()> {
    let entries: Vec<FamilyEntry> = serde_json::from_reader(open(&a.family)?)?;
    let family: Vec<(f64, SpectralMeasure)> =
        entries.into_iter().map(|e| (e.u, e.measure)).collect();
    let r = kac_rice_exponent(&family, a.alpha, a.eps_index)?;
    let regime = if r.value > 0.0 {
        "exponentially many"
    } else if r.value < 0.0 {
        "exponentially few"
    } else {
        "marginal"
    };
    let u: Vec<f64> = r.table.iter().map(|p| p.u).collect();
    let neg: Vec<f64> = r.table.iter().map(|p| p.negative_mass).collect();
    let val: Vec<f64> = r
        .table
        .iter()
        .map(|p| p.value.unwrap_or(f64::NAN))
        .collect();
    out.csv("complexity.csv", |w| {
        write_columns(w, &["u", "negative_mass", "value"], &[&u, &neg, &val])
    })?;
    out.json(
        "complexity.json",
        &ComplexityReport {
            value: r.value,
            argmax: r.argmax,
            regime,
            table: &r.table,
        },
    )
}

#[derive(Serialize)]
struct SampleDiagnostics {
    seed: u64,
    rigidity_fraction: f64,
    rigidity_worst_ratio: f64,
    local_law_error: f64,
    local_law_bound_scale: f64,
    que: Vec<f64>,
}

fn cmd_diagnostics(global: &Global, a: &DiagnosticsArgs, out: &mut OutDir) -> CliResult<()> {
    let term: Term = a.ensemble.parse()?;
    if term.scale != 1.0 {
        return Err(invalid(
            "diagnostics compare against the unscaled limit law",
        ));
    }
    if a.count == 0 {
        return Err(invalid("count must be positive"));
    }
    let law = term.spec(0)?.limit_law()?;
    let (l, _) = law.support_edges();
    let z = Complex64::new(a.z_re.unwrap_or(l - 1.0), a.z_im);
    let per_sample: Vec<(SampleDiagnostics, Vec<[f64; 5]>)> = (0..a.count)
        .into_par_iter()
        .map(|i| {
            let seed = derive_seed(global.seed, i as u64);
            let m = sample(&term.spec(seed)?)?;
            let r = full_eigh(&m, a.p_max > 0)?;
            let mut eigs = r.eigenvalues.clone();
            if term.kind.has_mean_outlier() {
                // the uncentred mean adds one eigenvalue outside the bulk
                eigs.pop();
            }
            let n = eigs.len();
            let rig = rigidity_check(&eigs, &law, a.rigidity_c)?;
            let ll = diag_local_law_error(&eigs, &law, z)?;
            let que = match &r.eigenvectors {
                Some(v) => {
                    let q =
                        random_unit_vector(r.n(), derive_seed(global.seed, (1 << 32) + i as u64))?;
                    que_statistic(v, &q, &bulk_indices(r.n(), QUE_BULK_FRACTION), a.p_max)?
                }
                None => Vec::new(),
            };
            let q = law.quantiles(n)?;
            let nf = n as f64;
            let rows = bulk_indices(n, RIGIDITY_BULK_FRACTION)
                .into_iter()
                .map(|k| {
                    let j = (k + 1) as f64;
                    let bound =
                        a.rigidity_c * j.min(nf - j + 1.0).powf(-1.0 / 3.0) * nf.powf(-2.0 / 3.0);
                    [i as f64, j, eigs[k], q[k], bound]
                })
                .collect();
            let d = SampleDiagnostics {
                seed,
                rigidity_fraction: rig.fraction,
                rigidity_worst_ratio: rig.worst_ratio,
                local_law_error: ll.max_error,
                local_law_bound_scale: ll.bound_scale,
                que,
            };
            Ok((d, rows))
        })
        .collect::<CliResult<_>>()?;
    let rows: Vec<[f64; 5]> = per_sample
        .iter()
        .flat_map(|(_, r)| r.iter().copied())
        .collect();
    let col = |k: usize| rows.iter().map(|r| r[k]).collect::<Vec<f64>>();
    let (s, j, e, q, b) = (col(0), col(1), col(2), col(3), col(4));
    out.csv("rigidity.csv", |w| {
        write_columns(
            w,
            &["sample", "index", "eigenvalue", "quantile", "bound"],
            &[&s, &j, &e, &q, &b],
        )
    })?;
    let samples: Vec<SampleDiagnostics> = per_sample.into_iter().map(|(d, _)| d).collect();
    let k = samples.len() as f64;
    let avg = |f: fn(&SampleDiagnostics) -> f64| samples.iter().map(f).sum::<f64>() / k;
    out.json(
        "diagnostics.json",
        &json!({
            "z": [z.re, z.im],
            "mean_rigidity_fraction": avg(|d| d.rigidity_fraction),
            "mean_local_law_error": avg(|d| d.local_law_error),
            "samples": samples,
        }),
    )
}
