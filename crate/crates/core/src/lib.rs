//! Random-matrix numerics: spectral measures and free additive convolution,
//! ensemble samplers, symmetric eigensolvers, outlier prediction for spiked
//! deformations, the outlier-scaling fit, and spectral diagnostics.

pub mod analysis;
pub mod eig;
pub mod ensembles;
pub mod error;
pub mod fit;
pub mod freeconv;
pub mod io;
pub mod matrix;
pub mod measure;
pub mod outliers;
pub mod quad;

pub use error::{Error, Result};
pub use matrix::SymmetricMatrix;
pub use measure::{ComplexPoint, MeasureKind, MixtureComponent, SpectralMeasure};
