//! Basis sampling, simplex normalization, the two covariance constructs,
//! and CSV ingestion of external compositional data.

use crate::error::{CodaError, Result};
use crate::moments::DistSpec;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, Exp, Normal, Poisson};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};
use std::path::Path;

/// n×p matrix of strictly positive basis entries.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisMatrix {
    pub n: usize,
    pub p: usize,
    pub entries: DMatrix<f64>,
}

impl BasisMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        let p = rows.first().map_or(0, |r| r.len());
        if n < 1 || p < 1 {
            return Err(CodaError::Data("empty basis matrix".into()));
        }
        if rows.iter().any(|r| r.len() != p) {
            return Err(CodaError::Data("ragged rows".into()));
        }
        if rows.iter().flatten().any(|&v| !(v > 0.0)) {
            return Err(CodaError::Data("basis entries must be > 0".into()));
        }
        let entries = DMatrix::from_fn(n, p, |i, j| rows[i][j]);
        Ok(BasisMatrix { n, p, entries })
    }
}

/// n×p matrix of compositions; each row lies on the (p−1)-simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositionMatrix {
    pub n: usize,
    pub p: usize,
    pub entries: DMatrix<f64>,
}

impl CompositionMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        let p = rows.first().map_or(0, |r| r.len());
        if n < 1 || p < 1 {
            return Err(CodaError::Data("empty composition matrix".into()));
        }
        if rows.iter().any(|r| r.len() != p) {
            return Err(CodaError::Data("ragged rows".into()));
        }
        for (i, r) in rows.iter().enumerate() {
            if r.iter().any(|&v| v < 0.0 || v > 1.0) {
                return Err(CodaError::Data(format!("row {i} has entries off [0,1]")));
            }
            let s: f64 = r.iter().sum();
            if (s - 1.0).abs() > 1e-12 {
                return Err(CodaError::Data(format!("row {i} sums to {s}, not 1")));
            }
        }
        let entries = DMatrix::from_fn(n, p, |i, j| rows[i][j]);
        Ok(CompositionMatrix { n, p, entries })
    }
}

/// Which covariance construct: the unbiased `B_{p,N}` (sample-centered,
/// divisor N = n−1) or the centralized `B_p^0` (population mean 1/p, divisor n).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CovKind {
    UnbiasedN,
    CenteredN,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceMatrix {
    pub p: usize,
    pub kind: CovKind,
    pub entries: DMatrix<f64>,
    /// N = n−1 for the unbiased construct, n for the centered one.
    pub adjusted_sample_size: usize,
}

/// Deterministic RNG stream for (seed, stream): splitmix64-expanded ChaCha8
/// key, so parallel and serial replication orders agree.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut state = seed ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    let mut key = [0u8; 32];
    for chunk in key.chunks_mut(8) {
        state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^= z >> 31;
        chunk.copy_from_slice(&z.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Draws one basis entry. Poisson zeros are redrawn to keep positivity;
/// truncated-normal draws are rejection-sampled into [lo, hi] and redrawn
/// at exactly 0.
fn draw(dist: DistSpec, rng: &mut impl Rng) -> f64 {
    match dist {
        DistSpec::Exponential { rate } => Exp::new(rate).unwrap().sample(rng),
        DistSpec::ChiSquare { k } => ChiSquared::new(f64::from(k)).unwrap().sample(rng),
        DistSpec::Poisson { lambda } => loop {
            let v: f64 = Poisson::new(lambda).unwrap().sample(rng);
            if v > 0.0 {
                return v;
            }
        },
        DistSpec::TruncNormal { mean, var, lo, hi } => {
            let normal = Normal::new(mean, var.sqrt()).unwrap();
            loop {
                let v = normal.sample(rng);
                if v >= lo && v <= hi && v > 0.0 {
                    return v;
                }
            }
        }
    }
}

/// i.i.d. basis matrix, deterministic given (dist, n, p, seed).
pub fn sample_basis(dist: DistSpec, n: usize, p: usize, seed: u64) -> Result<BasisMatrix> {
    sample_basis_with_stream(dist, n, p, seed, 0)
}

/// As [`sample_basis`], but on a named RNG stream so independent draws can be
/// made in parallel without coordination.
pub fn sample_basis_with_stream(
    dist: DistSpec,
    n: usize,
    p: usize,
    seed: u64,
    stream: u64,
) -> Result<BasisMatrix> {
    dist.validate()?;
    if n < 2 || p < 2 {
        return Err(CodaError::InvalidParam("need n >= 2 and p >= 2".into()));
    }
    let mut rng = stream_rng(seed, stream);
    // row-major fill order is part of the determinism contract
    let mut entries = DMatrix::zeros(n, p);
    for i in 0..n {
        for j in 0..p {
            entries[(i, j)] = draw(dist, &mut rng);
        }
    }
    Ok(BasisMatrix { n, p, entries })
}

/// Row-normalizes a basis matrix onto the simplex.
pub fn compose(w: &BasisMatrix) -> Result<CompositionMatrix> {
    let mut entries = DMatrix::zeros(w.n, w.p);
    for i in 0..w.n {
        let s: f64 = w.entries.row(i).iter().sum();
        if !(s > 0.0) {
            return Err(CodaError::Data(format!("row {i} sums to zero")));
        }
        let mut row_sum = 0.0;
        for j in 0..w.p {
            let v = w.entries[(i, j)] / s;
            entries[(i, j)] = v;
            row_sum += v;
        }
        // renormalize the floating-point residual
        for j in 0..w.p {
            entries[(i, j)] /= row_sum;
        }
    }
    Ok(CompositionMatrix { n: w.n, p: w.p, entries })
}

/// Builds the covariance construct from compositions.
///
/// UnbiasedN: B = (pX)' C_n (pX) / (n−1) with C_n = I − 11'/n.
/// CenteredN: B = (p²/n)(X − 1/p)'(X − 1/p), the analytic-mean construct.
pub fn covariance(x: &CompositionMatrix, kind: CovKind) -> Result<CovarianceMatrix> {
    let m = centered_scaled(x, kind)?;
    let denom = match kind {
        CovKind::UnbiasedN => (x.n - 1) as f64,
        CovKind::CenteredN => x.n as f64,
    };
    let entries = m.transpose() * &m / denom;
    Ok(CovarianceMatrix {
        p: x.p,
        kind,
        entries,
        adjusted_sample_size: denom as usize,
    })
}

/// The n×p factor M such that B = M'M / N. Shared with the Gram route.
pub(crate) fn centered_scaled(x: &CompositionMatrix, kind: CovKind) -> Result<DMatrix<f64>> {
    let (n, p) = (x.n, x.p);
    let pf = p as f64;
    match kind {
        CovKind::UnbiasedN => {
            if n < 2 {
                return Err(CodaError::InvalidParam("unbiased construct needs n >= 2".into()));
            }
            let mut m = &x.entries * pf;
            for j in 0..p {
                let mean = m.column(j).sum() / n as f64;
                for i in 0..n {
                    m[(i, j)] -= mean;
                }
            }
            Ok(m)
        }
        CovKind::CenteredN => Ok(x.entries.map(|v| pf * v - 1.0)),
    }
}

/// Row orientation of an ingested CSV.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    RowsAreSamples,
    RowsAreFeatures,
}

/// Reads a rectangular nonnegative numeric CSV into a composition matrix.
/// A non-numeric first line is treated as a header and skipped.
pub fn ingest_csv(
    path: &Path,
    orientation: Orientation,
    renormalize: bool,
) -> Result<CompositionMatrix> {
    let file = std::fs::File::open(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> =
            trimmed.split(',').map(|t| t.trim().parse::<f64>()).collect();
        match parsed {
            Ok(vals) => rows.push(vals),
            Err(_) if lineno == 0 && rows.is_empty() => continue, // header
            Err(_) => {
                return Err(CodaError::Data(format!("non-numeric entry on line {}", lineno + 1)))
            }
        }
    }
    if rows.is_empty() {
        return Err(CodaError::Data("no data rows".into()));
    }
    let width = rows[0].len();
    if rows.iter().any(|r| r.len() != width) {
        return Err(CodaError::Data("ragged rows".into()));
    }
    if orientation == Orientation::RowsAreFeatures {
        rows = (0..width)
            .map(|j| rows.iter().map(|r| r[j]).collect())
            .collect();
    }
    let mut out = Vec::with_capacity(rows.len());
    for (i, r) in rows.iter().enumerate() {
        if r.iter().any(|&v| v < 0.0) {
            return Err(CodaError::Data(format!("negative entry in sample {i}")));
        }
        let s: f64 = r.iter().sum();
        if s == 0.0 {
            return Err(CodaError::Data(format!("sample {i} is entirely zero")));
        }
        if renormalize {
            out.push(r.iter().map(|v| v / s).collect::<Vec<_>>());
        } else {
            if (s - 1.0).abs() > 1e-6 {
                return Err(CodaError::Data(format!(
                    "sample {i} is off the simplex by {:.2e} and renormalize=false",
                    (s - 1.0).abs()
                )));
            }
            out.push(r.iter().map(|v| v / s).collect::<Vec<_>>());
        }
    }
    // clean up float residue from normalization
    for r in &mut out {
        let s: f64 = r.iter().sum();
        for v in r.iter_mut() {
            *v /= s;
        }
    }
    CompositionMatrix::from_rows(out)
}

/// Writes a composition matrix as plain CSV, samples as rows.
pub fn write_csv(x: &CompositionMatrix, path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for i in 0..x.n {
        let row: Vec<String> = (0..x.p).map(|j| format!("{:.17e}", x.entries[(i, j)])).collect();
        writeln!(f, "{}", row.join(","))?;
    }
    Ok(())
}
