//! Spectral probability measures on the real line and their transforms.
//!
//! A [`SpectralMeasure`] is immutable once constructed; every constructor
//! validates its invariants (positive parameters, mixture weights summing to
//! one, sorted empirical eigenvalues, unit-mass numeric densities), and the
//! JSON form goes through the same validation on deserialization.

mod analytic;
mod distance;
mod moments;
mod numeric;
mod transforms;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use distance::w1_distance;
pub use moments::{cumulants_from_moments, moments_from_cumulants};
pub use num_complex::Complex64;
pub(crate) use numeric::trapezoid_mass;

/// Evaluation point `E + iη` for Stieltjes transforms.
pub type ComplexPoint = Complex64;

/// Default number of points in a numeric-density grid.
pub const DEFAULT_GRID_POINTS: usize = 2048;

/// Threshold below which a numeric density value counts as outside the support.
pub const SUPPORT_THRESHOLD: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub weight: f64,
    pub measure: SpectralMeasure,
}

/// The raw tagged representation of a measure. Convert into a
/// [`SpectralMeasure`] with `try_from` to have it validated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum MeasureKind {
    /// Semicircle law on `[-radius, radius]` (variance `radius² / 4`).
    Semicircle {
        radius: f64,
    },
    /// Marchenko-Pastur law of `(1/m) X Xᵀ` for `X` of size `n × m`, `ratio = n/m`,
    /// entries of variance `scale`.
    MarchenkoPastur {
        ratio: f64,
        scale: f64,
    },
    /// Kesten-McKay law of random `degree`-regular graph adjacency matrices.
    KestenMckay {
        degree: u32,
    },
    PointMass {
        location: f64,
    },
    Mixture {
        components: Vec<MixtureComponent>,
    },
    /// Pushforward under `x ↦ factor · x`.
    Scaled {
        factor: f64,
        inner: Box<SpectralMeasure>,
    },
    /// Pushforward under `x ↦ x + shift`.
    Shifted {
        shift: f64,
        inner: Box<SpectralMeasure>,
    },
    Empirical {
        eigenvalues: Vec<f64>,
    },
    /// Piecewise-linear density through `(grid[i], values[i])`, zero outside the grid.
    NumericDensity {
        grid: Vec<f64>,
        values: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MeasureKind", into = "MeasureKind")]
pub struct SpectralMeasure(MeasureKind);

impl From<SpectralMeasure> for MeasureKind {
    fn from(m: SpectralMeasure) -> Self {
        m.0
    }
}

impl TryFrom<MeasureKind> for SpectralMeasure {
    type Error = Error;

    fn try_from(kind: MeasureKind) -> Result<Self> {
        match kind {
            MeasureKind::Semicircle { radius } => Self::semicircle(radius),
            MeasureKind::MarchenkoPastur { ratio, scale } => Self::marchenko_pastur(ratio, scale),
            MeasureKind::KestenMckay { degree } => Self::kesten_mckay(degree),
            MeasureKind::PointMass { location } => Self::point_mass(location),
            MeasureKind::Mixture { components } => Self::mixture(
                components
                    .into_iter()
                    .map(|c| (c.weight, c.measure))
                    .collect(),
            ),
            MeasureKind::Scaled { factor, inner } => Self::scaled(factor, *inner),
            MeasureKind::Shifted { shift, inner } => Self::shifted(shift, *inner),
            MeasureKind::Empirical { eigenvalues } => Self::empirical(eigenvalues),
            MeasureKind::NumericDensity { grid, values } => Self::numeric_density(grid, values),
        }
    }
}

fn finite(name: &str, x: f64) -> Result<f64> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::invalid(format!("{name} must be finite, got {x}")))
    }
}

fn positive(name: &str, x: f64) -> Result<f64> {
    if x.is_finite() && x > 0.0 {
        Ok(x)
    } else {
        Err(Error::invalid(format!("{name} must be positive, got {x}")))
    }
}

impl SpectralMeasure {
    pub fn semicircle(radius: f64) -> Result<Self> {
        positive("semicircle radius", radius)?;
        Ok(Self(MeasureKind::Semicircle { radius }))
    }

    /// Semicircle with the given variance, i.e. radius `2σ`.
    pub fn semicircle_variance(variance: f64) -> Result<Self> {
        positive("semicircle variance", variance)?;
        Self::semicircle(2.0 * variance.sqrt())
    }

    pub fn marchenko_pastur(ratio: f64, scale: f64) -> Result<Self> {
        if !(ratio > 0.0 && ratio <= 1.0) {
            return Err(Error::invalid(format!(
                "Marchenko-Pastur ratio must lie in (0, 1], got {ratio}"
            )));
        }
        positive("Marchenko-Pastur scale", scale)?;
        Ok(Self(MeasureKind::MarchenkoPastur { ratio, scale }))
    }

    pub fn kesten_mckay(degree: u32) -> Result<Self> {
        if degree < 3 {
            return Err(Error::invalid(format!(
                "Kesten-McKay degree must be >= 3, got {degree}"
            )));
        }
        Ok(Self(MeasureKind::KestenMckay { degree }))
    }

    pub fn point_mass(location: f64) -> Result<Self> {
        finite("point mass location", location)?;
        Ok(Self(MeasureKind::PointMass { location }))
    }

    pub fn mixture(components: Vec<(f64, SpectralMeasure)>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::EmptyInput("mixture components"));
        }
        let mut total = 0.0;
        for (w, _) in &components {
            if !(w.is_finite() && (0.0..=1.0).contains(w)) {
                return Err(Error::invalid(format!("mixture weight {w} outside [0, 1]")));
            }
            total += w;
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!(
                "mixture weights sum to {total}, not 1"
            )));
        }
        Ok(Self(MeasureKind::Mixture {
            components: components
                .into_iter()
                .map(|(weight, measure)| MixtureComponent { weight, measure })
                .collect(),
        }))
    }

    /// `ε·η + (1 − ε)·δ₀`.
    pub fn spiked_bulk(epsilon: f64, eta: SpectralMeasure) -> Result<Self> {
        if !(0.0..1.0).contains(&epsilon) {
            return Err(Error::invalid(format!(
                "epsilon must lie in [0, 1), got {epsilon}"
            )));
        }
        Self::mixture(vec![
            (epsilon, eta),
            (1.0 - epsilon, Self::point_mass(0.0)?),
        ])
    }

    pub fn scaled(factor: f64, inner: SpectralMeasure) -> Result<Self> {
        positive("scale factor", factor)?;
        Ok(Self(MeasureKind::Scaled {
            factor,
            inner: Box::new(inner),
        }))
    }

    pub fn shifted(shift: f64, inner: SpectralMeasure) -> Result<Self> {
        finite("shift", shift)?;
        Ok(Self(MeasureKind::Shifted {
            shift,
            inner: Box::new(inner),
        }))
    }

    /// Empirical spectral measure; the eigenvalues are sorted ascending.
    pub fn empirical(mut eigenvalues: Vec<f64>) -> Result<Self> {
        if eigenvalues.is_empty() {
            return Err(Error::EmptyInput("eigenvalues"));
        }
        if let Some(bad) = eigenvalues.iter().find(|x| !x.is_finite()) {
            return Err(Error::invalid(format!("non-finite eigenvalue {bad}")));
        }
        eigenvalues.sort_by(f64::total_cmp);
        Ok(Self(MeasureKind::Empirical { eigenvalues }))
    }

    /// Piecewise-linear density, renormalized to unit trapezoid mass.
    pub fn numeric_density(grid: Vec<f64>, mut values: Vec<f64>) -> Result<Self> {
        if grid.len() != values.len() {
            return Err(Error::SizeMismatch(grid.len(), values.len()));
        }
        if grid.len() < 2 {
            return Err(Error::invalid(
                "numeric density needs at least two grid points",
            ));
        }
        if grid
            .windows(2)
            .any(|w| !(w[1] > w[0]) || !w[0].is_finite() || !w[1].is_finite())
        {
            return Err(Error::invalid(
                "numeric density grid must be strictly increasing and finite",
            ));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::invalid(
                "numeric density values must be finite and nonnegative",
            ));
        }
        let mass = numeric::trapezoid_mass(&grid, &values);
        if !(mass > 0.0) {
            return Err(Error::invalid("numeric density has zero mass"));
        }
        values.iter_mut().for_each(|v| *v /= mass);
        Ok(Self(MeasureKind::NumericDensity { grid, values }))
    }

    /// Uniform law on `[a, b]` as a two-point numeric density.
    pub fn uniform(a: f64, b: f64) -> Result<Self> {
        if !(b > a) {
            return Err(Error::invalid(format!(
                "uniform law needs a < b, got [{a}, {b}]"
            )));
        }
        Self::numeric_density(vec![a, b], vec![1.0, 1.0])
    }

    pub fn kind(&self) -> &MeasureKind {
        &self.0
    }

    pub fn kind_name(&self) -> &'static str {
        match &self.0 {
            MeasureKind::Semicircle { .. } => "semicircle",
            MeasureKind::MarchenkoPastur { .. } => "marchenko_pastur",
            MeasureKind::KestenMckay { .. } => "kesten_mckay",
            MeasureKind::PointMass { .. } => "point_mass",
            MeasureKind::Mixture { .. } => "mixture",
            MeasureKind::Scaled { .. } => "scaled",
            MeasureKind::Shifted { .. } => "shifted",
            MeasureKind::Empirical { .. } => "empirical",
            MeasureKind::NumericDensity { .. } => "numeric_density",
        }
    }

    /// Whether the measure carries any point mass (including empirical atoms).
    pub fn has_atoms(&self) -> bool {
        match &self.0 {
            MeasureKind::PointMass { .. } | MeasureKind::Empirical { .. } => true,
            MeasureKind::Mixture { components } => components
                .iter()
                .any(|c| c.weight > 0.0 && c.measure.has_atoms()),
            MeasureKind::Scaled { inner, .. } | MeasureKind::Shifted { inner, .. } => {
                inner.has_atoms()
            }
            _ => false,
        }
    }

    /// Total weight of atoms located exactly at `x`.
    pub fn atom_mass_at(&self, x: f64) -> f64 {
        match &self.0 {
            MeasureKind::PointMass { location } => f64::from(u8::from(*location == x)),
            MeasureKind::Empirical { eigenvalues } => {
                eigenvalues.iter().filter(|&&e| e == x).count() as f64 / eigenvalues.len() as f64
            }
            MeasureKind::Mixture { components } => components
                .iter()
                .map(|c| c.weight * c.measure.atom_mass_at(x))
                .sum(),
            MeasureKind::Scaled { factor, inner } => inner.atom_mass_at(x / factor),
            MeasureKind::Shifted { shift, inner } => inner.atom_mass_at(x - shift),
            _ => 0.0,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// Eigenvalues of an empirical measure as a one-column CSV with header `eigenvalue`.
    pub fn write_eigenvalues_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let MeasureKind::Empirical { eigenvalues } = &self.0 else {
            return Err(Error::UnsupportedMeasure {
                op: "eigenvalue CSV export",
                kind: self.kind_name(),
            });
        };
        crate::io::write_column(w, "eigenvalue", eigenvalues)
    }

    pub fn read_eigenvalues_csv<R: std::io::Read>(r: R) -> Result<Self> {
        Self::empirical(crate::io::read_column(r)?)
    }

    pub(crate) fn unsupported(&self, op: &'static str) -> Error {
        Error::UnsupportedMeasure {
            op,
            kind: self.kind_name(),
        }
    }
}
