//! Base-distribution moment sets and the scalar CLT parameters derived from
//! them (λ, h1, h2, α1, α2), plus empirical ratio-moment estimators.

use crate::error::{CodaError, Result};
use crate::quad;
use crate::synth::CompositionMatrix;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// A builtin basis distribution. String grammar:
/// `exp:<rate>`, `chisq:<k>`, `pois:<lambda>`, `tnorm:<mean>:<var>:<lo>:<hi>`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DistSpec {
    Exponential { rate: f64 },
    ChiSquare { k: u32 },
    Poisson { lambda: f64 },
    TruncNormal { mean: f64, var: f64, lo: f64, hi: f64 },
}

impl FromStr for DistSpec {
    type Err = CodaError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || CodaError::InvalidDist(s.to_string());
        let parts: Vec<&str> = s.split(':').collect();
        let num = |t: &str| t.parse::<f64>().map_err(|_| bad());
        let spec = match parts.as_slice() {
            ["exp", r] => DistSpec::Exponential { rate: num(r)? },
            ["chisq", k] => DistSpec::ChiSquare {
                k: k.parse().map_err(|_| bad())?,
            },
            ["pois", l] => DistSpec::Poisson { lambda: num(l)? },
            ["tnorm", m, v, lo, hi] => DistSpec::TruncNormal {
                mean: num(m)?,
                var: num(v)?,
                lo: num(lo)?,
                hi: num(hi)?,
            },
            _ => return Err(bad()),
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl fmt::Display for DistSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DistSpec::Exponential { rate } => write!(f, "exp:{rate}"),
            DistSpec::ChiSquare { k } => write!(f, "chisq:{k}"),
            DistSpec::Poisson { lambda } => write!(f, "pois:{lambda}"),
            DistSpec::TruncNormal { mean, var, lo, hi } => {
                write!(f, "tnorm:{mean}:{var}:{lo}:{hi}")
            }
        }
    }
}

impl DistSpec {
    pub fn validate(&self) -> Result<()> {
        let err = |m: &str| Err(CodaError::InvalidParam(m.to_string()));
        match *self {
            DistSpec::Exponential { rate } if rate <= 0.0 => err("exp rate must be > 0"),
            DistSpec::ChiSquare { k } if k < 1 => err("chisq k must be >= 1"),
            DistSpec::Poisson { lambda } if lambda <= 0.0 => err("pois lambda must be > 0"),
            DistSpec::TruncNormal { var, lo, hi, .. } if var <= 0.0 || lo < 0.0 || lo >= hi => {
                err("tnorm requires var > 0 and 0 <= lo < hi")
            }
            _ => Ok(()),
        }
    }
}

/// First four moments of the basis variable w: mean, variance, raw third
/// moment E w^3 and central fourth moment E (w - μ)^4.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentSet {
    pub mu: f64,
    pub sigma2: f64,
    pub m3: f64,
    pub mu4c: f64,
}

impl MomentSet {
    pub fn new(mu: f64, sigma2: f64, m3: f64, mu4c: f64) -> Result<Self> {
        if !(mu > 0.0) {
            return Err(CodaError::InvalidParam("mu must be > 0".into()));
        }
        if !(sigma2 > 0.0) {
            return Err(CodaError::InvalidParam("sigma2 must be > 0".into()));
        }
        if mu4c < sigma2 * sigma2 * (1.0 - 1e-9) {
            return Err(CodaError::InvalidParam(
                "mu4c < sigma2^2 violates Jensen".into(),
            ));
        }
        Ok(MomentSet { mu, sigma2, m3, mu4c })
    }
}

/// Exact analytic moments for exponential / chi-square / Poisson, numerically
/// integrated moments for the truncated normal.
pub fn builtin_moments(dist: DistSpec) -> Result<MomentSet> {
    dist.validate()?;
    match dist {
        DistSpec::Exponential { rate } => {
            let mu = 1.0 / rate;
            MomentSet::new(mu, mu * mu, 6.0 * mu.powi(3), 9.0 * mu.powi(4))
        }
        DistSpec::ChiSquare { k } => {
            let k = f64::from(k);
            // raw E X^3 = k(k+2)(k+4); central mu4 = 12k^2 + 48k
            MomentSet::new(k, 2.0 * k, k * (k + 2.0) * (k + 4.0), 12.0 * k * k + 48.0 * k)
        }
        DistSpec::Poisson { lambda } => {
            let l = lambda;
            MomentSet::new(l, l, l * l * l + 3.0 * l * l + l, l + 3.0 * l * l)
        }
        DistSpec::TruncNormal { mean, var, lo, hi } => truncated_normal_moments(mean, var, lo, hi),
    }
}

/// Raw moments of N(mean, var) restricted to [lo, hi], by quadrature against
/// the normal density normalized by the truncation probability.
fn truncated_normal_moments(mean: f64, var: f64, lo: f64, hi: f64) -> Result<MomentSet> {
    let sd = var.sqrt();
    let pdf = move |x: f64| {
        let t = (x - mean) / sd;
        (-0.5 * t * t).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt())
    };
    let raw = |r: i32| -> Result<f64> {
        quad::integrate_adaptive(|x| x.powi(r) * pdf(x), lo, hi, 1e-13)
            .map_err(CodaError::Numerical)
    };
    let mass = raw(0)?;
    if mass <= 0.0 {
        return Err(CodaError::Numerical("truncation interval has no mass".into()));
    }
    let m1 = raw(1)? / mass;
    let m2 = raw(2)? / mass;
    let m3 = raw(3)? / mass;
    let m4 = raw(4)? / mass;
    let sigma2 = m2 - m1 * m1;
    let mu4c = m4 - 4.0 * m3 * m1 + 6.0 * m2 * m1 * m1 - 3.0 * m1.powi(4);
    MomentSet::new(m1, sigma2, m3, mu4c)
}

/// The scalar constants entering the LSS CLT.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CltParams {
    /// σ²/μ², the scale of the limiting law.
    pub lambda: f64,
    /// Limiting dimension-to-sample ratio p/N.
    pub c: f64,
    pub h1: f64,
    pub h2: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    /// α1 + α2, cached.
    pub xi: f64,
}

/// Derives all CLT constants from the base moments and the ratio c.
pub fn clt_params(ms: &MomentSet, c: f64) -> Result<CltParams> {
    if !(c > 0.0) {
        return Err(CodaError::InvalidParam("c must be > 0".into()));
    }
    let lambda = ms.sigma2 / (ms.mu * ms.mu);
    let g3 = ms.m3 / ms.mu.powi(3); // E w^3 / mu^3
    let h1 = -2.0 * g3 + 3.0 * lambda * lambda + 5.0 * lambda + 2.0;
    let h2 = -8.0 * lambda * g3
        + 10.0 * lambda.powi(3)
        + 22.0 * lambda * lambda
        + 8.0 * lambda;
    let alpha1 = ms.mu4c / ms.mu.powi(4) - 3.0 * lambda * lambda;
    let alpha2 = h2 - 2.0 * lambda * h1;
    Ok(CltParams {
        lambda,
        c,
        h1,
        h2,
        alpha1,
        alpha2,
        xi: alpha1 + alpha2,
    })
}

/// Empirical ratio moments ν2, ν4, ν12 of v_ij = p x_ij about 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioMoments {
    pub nu2: f64,
    pub nu4: f64,
    pub nu12: f64,
    pub sample_count: usize,
}

/// ν12 uses the per-row identity (Σd²)² − Σd⁴ = Σ_{j≠k} d_j² d_k², so the
/// whole estimator is O(np).
pub fn empirical_ratio_moments(x: &CompositionMatrix) -> Result<RatioMoments> {
    let (n, p) = (x.n, x.p);
    if p < 2 {
        return Err(CodaError::InvalidParam("nu12 undefined for p < 2".into()));
    }
    let pf = p as f64;
    let mut s2 = 0.0;
    let mut s4 = 0.0;
    let mut s12 = 0.0;
    for i in 0..n {
        let mut row2 = 0.0;
        let mut row4 = 0.0;
        for j in 0..p {
            let d = pf * x.entries[(i, j)] - 1.0;
            let d2 = d * d;
            row2 += d2;
            row4 += d2 * d2;
        }
        s2 += row2;
        s4 += row4;
        s12 += (row2 * row2 - row4) / (pf * (pf - 1.0));
    }
    let np = (n * p) as f64;
    Ok(RatioMoments {
        nu2: s2 / np,
        nu4: s4 / np,
        nu12: s12 / n as f64,
        sample_count: n * p,
    })
}
