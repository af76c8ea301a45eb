//! Eigenvalues of the covariance constructs, empirical spectral
//! distributions, and extreme-eigenvalue extraction.

use crate::error::{CodaError, Result};
use crate::synth::{self, CompositionMatrix, CovKind, CovarianceMatrix};
use nalgebra::DMatrix;
use serde::Serialize;

/// Default relative zero threshold separating structural zeros (rank
/// deficiency from centering and the simplex constraint) from bulk
/// eigenvalues.
pub const DEFAULT_ZERO_TOL: f64 = 1e-9;

/// Descending-sorted eigenvalues with structural-zero bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Spectrum {
    pub values: Vec<f64>,
    pub p: usize,
    pub structural_zero_count: usize,
    pub zero_tol: f64,
}

impl Spectrum {
    /// Threshold below which an eigenvalue counts as a structural zero.
    pub fn zero_threshold(&self) -> f64 {
        let max = self.values.first().copied().unwrap_or(0.0);
        self.zero_tol * max.max(1.0)
    }

    pub fn nonzero(&self) -> &[f64] {
        let thr = self.zero_threshold();
        let k = self.values.partition_point(|&v| v >= thr);
        &self.values[..k]
    }

    fn from_values(mut values: Vec<f64>, p: usize, zero_tol: f64) -> Self {
        values.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let mut s = Spectrum { values, p, structural_zero_count: 0, zero_tol };
        s.structural_zero_count = s.p - s.nonzero().len();
        s
    }
}

/// All eigenvalues of a symmetric matrix, descending.
pub fn eigenvalues_sym(m: &DMatrix<f64>) -> Result<Vec<f64>> {
    if m.nrows() != m.ncols() {
        return Err(CodaError::Dimension("matrix not square".into()));
    }
    let scale = m.amax().max(1e-300);
    let asym = (m - m.transpose()).amax();
    if asym > 1e-10 * scale {
        return Err(CodaError::Numerical(format!(
            "matrix not symmetric: relative asymmetry {:.2e}",
            asym / scale
        )));
    }
    // symmetrize the roundoff before factorizing
    let sym = (m + m.transpose()) * 0.5;
    let mut vals: Vec<f64> = sym.symmetric_eigen().eigenvalues.iter().copied().collect();
    vals.sort_by(|a, b| b.partial_cmp(a).unwrap());
    Ok(vals)
}

/// Spectrum of a prebuilt covariance matrix (p×p route).
pub fn spectrum(cov: &CovarianceMatrix, zero_tol: f64) -> Result<Spectrum> {
    let vals = eigenvalues_sym(&cov.entries)?;
    Ok(Spectrum::from_values(vals, cov.p, zero_tol))
}

/// Spectrum straight from compositions, routing through the n×n Gram matrix
/// when p > n. Nonzero eigenvalues of M'M/N and MM'/N coincide; the rest are
/// padded zeros.
pub fn spectrum_from_data(
    x: &CompositionMatrix,
    kind: CovKind,
    zero_tol: f64,
) -> Result<Spectrum> {
    if x.p > x.n {
        let m = synth::centered_scaled(x, kind)?;
        let denom = match kind {
            CovKind::UnbiasedN => (x.n - 1) as f64,
            CovKind::CenteredN => x.n as f64,
        };
        let gram = &m * m.transpose() / denom;
        let mut vals = eigenvalues_sym(&gram)?;
        vals.resize(x.p, 0.0);
        Ok(Spectrum::from_values(vals, x.p, zero_tol))
    } else {
        spectrum(&synth::covariance(x, kind)?, zero_tol)
    }
}

/// Equal-width histogram of eigenvalues with a density normalized to
/// integrate to 1 over the selected set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub density: Vec<f64>,
}

pub fn esd_histogram(s: &Spectrum, bins: usize, include_zeros: bool) -> Result<Histogram> {
    if bins < 1 {
        return Err(CodaError::InvalidParam("bins must be >= 1".into()));
    }
    let selected: Vec<f64> = if include_zeros {
        s.values.clone()
    } else {
        s.nonzero().to_vec()
    };
    if selected.is_empty() {
        return Err(CodaError::Data("empty eigenvalue selection".into()));
    }
    let lo = selected.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = selected.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let edges: Vec<f64> = (0..=bins).map(|i| lo + i as f64 * width).collect();
    let mut counts = vec![0usize; bins];
    for &v in &selected {
        let mut idx = ((v - lo) / width) as usize;
        if idx >= bins {
            idx = bins - 1;
        }
        counts[idx] += 1;
    }
    let total = selected.len() as f64;
    let density = counts.iter().map(|&c| c as f64 / (total * width)).collect();
    Ok(Histogram { edges, counts, density })
}

/// Largest eigenvalue and smallest non-zero eigenvalue.
pub fn extremes(s: &Spectrum) -> Result<(f64, f64)> {
    let nz = s.nonzero();
    match (nz.first(), nz.last()) {
        (Some(&max), Some(&min)) => Ok((max, min)),
        _ => Err(CodaError::Data("all-zero spectrum".into())),
    }
}
