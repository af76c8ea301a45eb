//! Spectral theory of sample covariance matrices built from high-dimensional
//! compositional data: the scaled Marčenko–Pastur limit, extreme-eigenvalue
//! limits, the CLT for linear spectral statistics, and a seeded Monte-Carlo
//! harness that checks the theory at desk scale.
//!
//! Data model: an unobserved positive basis matrix `W` (n×p, i.i.d. entries)
//! is row-normalized to compositions `X` on the simplex. The objects of study
//! are the rescaled covariance constructs `B_{p,N} = (pX)' C_n (pX) / N` and
//! the centralized `B_p^0 = p^2 (X - E X)'(X - E X) / n`.

pub mod clt;
pub mod error;
pub mod moments;
pub mod montecarlo;
pub mod mplaw;
pub mod quad;
pub mod spectra;
pub mod synth;

pub use error::{CodaError, Result};
pub use moments::{CltParams, DistSpec, MomentSet, RatioMoments};
pub use mplaw::{MpLaw, StieltjesValue};
pub use spectra::{Histogram, Spectrum};
pub use synth::{BasisMatrix, CompositionMatrix, CovKind, CovarianceMatrix};
