//! Theoretical CLT quantities for linear spectral statistics: closed-form
//! polynomial means and covariances, the resolvent-statistic mean and
//! covariance kernels, contour-integral evaluation for general analytic f,
//! and statistic standardization.

use crate::error::{CodaError, Result};
use crate::moments::CltParams;
use crate::mplaw::MpLaw;
use crate::quad;
use num_complex::Complex64;
use serde::Serialize;
use std::f64::consts::PI;

/// Rectangular contour enclosing the support: corners (x_l, ±v0), (x_r, ±v0).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ContourCfg {
    pub x_l: f64,
    pub x_r: f64,
    pub v0: f64,
    pub nodes_per_edge: usize,
    pub second_contour_scale: f64,
}

impl ContourCfg {
    /// Default enclosure: margins of 0.5λ around the support, 512 nodes per
    /// edge, second contour scaled out by 1.5.
    pub fn default_for(params: &CltParams) -> Self {
        let law = MpLaw::new(params.lambda, params.c).expect("valid params");
        let lam = params.lambda;
        let x_l = if law.a < 0.1 * lam {
            -0.5 * lam
        } else {
            law.a - (0.5f64).max(0.5 * lam)
        };
        ContourCfg {
            x_l,
            x_r: law.b + 0.5 * lam,
            v0: 0.5 * lam,
            nodes_per_edge: 512,
            second_contour_scale: 1.5,
        }
    }

    fn validate(&self, law: &MpLaw) -> Result<()> {
        if self.x_l >= law.a || self.x_r <= law.b || self.v0 <= 0.0 {
            return Err(CodaError::InvalidParam(
                "contour must strictly enclose the support".into(),
            ));
        }
        if self.nodes_per_edge < 16 {
            return Err(CodaError::InvalidParam("nodes_per_edge must be >= 16".into()));
        }
        if self.second_contour_scale <= 1.0 {
            return Err(CodaError::InvalidParam("second_contour_scale must be > 1".into()));
        }
        Ok(())
    }

    /// Contour with all margins pushed outward by `scale`, so nested double
    /// integrals never meet.
    fn scaled(&self, law: &MpLaw, scale: f64) -> ContourCfg {
        ContourCfg {
            x_l: law.a - (law.a - self.x_l) * scale,
            x_r: law.b + (self.x_r - law.b) * scale,
            v0: self.v0 * scale,
            ..*self
        }
    }
}

/// Closed-form CLT mean μ_r for f = x^r, r ∈ {1, 2, 3}.
pub fn lss_poly_mean(r: u32, params: &CltParams) -> Result<f64> {
    let (lam, c, h1, xi) = (params.lambda, params.c, params.h1, params.xi);
    match r {
        1 => Ok(h1),
        2 => Ok((1.0 + c) * lam * lam + 2.0 * (1.0 + c) * lam * h1 + c * xi),
        3 => Ok((2.0 + 6.0 * c + 3.0 * c * c) * lam.powi(3)
            + 3.0 * (1.0 + 3.0 * c + c * c) * lam * lam * h1
            + 3.0 * c * (1.0 + c) * lam * xi),
        _ => Err(CodaError::InvalidParam(format!(
            "no closed-form mean for r = {r}; use the contour path"
        ))),
    }
}

/// Closed-form CLT covariance Cov(X_{x^r1}, X_{x^r2}) via the residue
/// double sum.
pub fn lss_poly_cov(r1: u32, r2: u32, params: &CltParams) -> Result<f64> {
    if r1 < 1 || r2 < 1 {
        return Err(CodaError::InvalidParam("need r1, r2 >= 1".into()));
    }
    if r1 > 30 || r2 > 30 {
        return Err(CodaError::InvalidParam(
            "binomial overflow guard: r > 30 unsupported".into(),
        ));
    }
    let (lam, c, xi) = (params.lambda, params.c, params.xi);
    let q = (1.0 - c) / c;
    let scale = (lam * c).powi((r1 + r2) as i32);

    let mut first = 0.0;
    for k1 in 0..r1 {
        for k2 in 0..=r2 {
            let mut inner = 0.0;
            for l in 1..=(r1 - k1) {
                inner += l as f64
                    * binom(2 * r1 - 1 - (k1 + l), r1 - 1)
                    * binom(2 * r2 - 1 - k2 + l, r2 - 1);
            }
            first += binom(r1, k1) * binom(r2, k2) * q.powi((k1 + k2) as i32) * inner;
        }
    }
    first *= 2.0 * scale;

    let edge_sum = |r: u32| -> f64 {
        (0..=r)
            .map(|k| binom(r, k) * q.powi(k as i32) * binom(2 * r - k, r - 1))
            .sum()
    };
    let second = (c / (lam * lam)) * xi * scale * edge_sum(r1) * edge_sum(r2);
    Ok(first + second)
}

/// Limiting mean of the resolvent statistic M_p(z).
pub fn resolvent_mean(z: Complex64, params: &CltParams) -> Result<Complex64> {
    let law = MpLaw::new(params.lambda, params.c)?;
    let s = law.stieltjes(z)?;
    let (lam, c) = (params.lambda, params.c);
    let (m, mb, mp) = (s.m, s.m_underline, s.m_prime);
    let u = 1.0 + lam * mb;
    let denom = 1.0 - c * lam * lam * mb * mb / (u * u);
    if denom.norm() < 1e-10 {
        return Err(CodaError::Numerical(format!(
            "resolvent mean denominator vanishes at z = {z}: too close to a support edge"
        )));
    }
    let t1 = -z * mb / u * (params.h1 * m + lam * m + lam / z);
    let t2 = -c * z * z * mb * mb / u * (params.xi * m * m + 2.0 * lam * lam * mp);
    let t3 = c * lam * lam * mb * mb / (u * u * u) / denom;
    Ok(-mb / denom * (t1 + t2 + t3))
}

/// Limiting covariance Cov(M(z1), M(z2)) at distinct off-support points.
pub fn resolvent_cov(z1: Complex64, z2: Complex64, params: &CltParams) -> Result<Complex64> {
    if (z1 - z2).norm() < 1e-6 {
        return Err(CodaError::InvalidParam(
            "coincident points: the variance limit is not provided".into(),
        ));
    }
    let law = MpLaw::new(params.lambda, params.c)?;
    let s1 = law.stieltjes(z1)?;
    let s2 = law.stieltjes(z2)?;
    Ok(resolvent_cov_kernel(&s1, &s2, params))
}

fn resolvent_cov_kernel(
    s1: &crate::mplaw::StieltjesValue,
    s2: &crate::mplaw::StieltjesValue,
    params: &CltParams,
) -> Complex64 {
    let lam = params.lambda;
    let d = s1.m_underline - s2.m_underline;
    let dz = s1.z - s2.z;
    let base = 2.0 * (s1.m_underline_prime * s2.m_underline_prime / (d * d) - 1.0 / (dz * dz));
    let u1 = 1.0 + lam * s1.m_underline;
    let u2 = 1.0 + lam * s2.m_underline;
    base + params.c * params.xi * s1.m_underline_prime * s2.m_underline_prime
        / (u1 * u1 * u2 * u2)
}

/// Gauss–Legendre nodes and weights along a straight segment.
fn segment_nodes(z0: Complex64, z1: Complex64, n: usize) -> Vec<(Complex64, Complex64)> {
    let (xs, ws) = quad::gauss_legendre(n);
    let mid = 0.5 * (z0 + z1);
    let half = 0.5 * (z1 - z0);
    xs.iter()
        .zip(&ws)
        .map(|(&x, &w)| (mid + half * x, half * w))
        .collect()
}

/// Nodes of the full counterclockwise rectangle.
fn contour_nodes(cfg: &ContourCfg) -> Vec<(Complex64, Complex64)> {
    let c = |re: f64, im: f64| Complex64::new(re, im);
    let corners = [
        c(cfg.x_r, -cfg.v0),
        c(cfg.x_r, cfg.v0),
        c(cfg.x_l, cfg.v0),
        c(cfg.x_l, -cfg.v0),
        c(cfg.x_r, -cfg.v0),
    ];
    let mut nodes = Vec::with_capacity(4 * cfg.nodes_per_edge);
    for pair in corners.windows(2) {
        nodes.extend(segment_nodes(pair[0], pair[1], cfg.nodes_per_edge));
    }
    nodes
}

/// E X_f = −(1/2πi) ∮ f(z)·E M(z) dz. Conjugate symmetry of the integrand
/// reduces the closed contour to its upper half: ∮ = 2i·Im ∫_upper.
pub fn lss_general_mean<F>(f: F, params: &CltParams, contour: &ContourCfg) -> Result<f64>
where
    F: Fn(Complex64) -> Complex64,
{
    let law = MpLaw::new(params.lambda, params.c)?;
    contour.validate(&law)?;
    let c = |re: f64, im: f64| Complex64::new(re, im);
    // upper path: (x_r, 0) -> (x_r, v0) -> (x_l, v0) -> (x_l, 0)
    let path = [
        (c(contour.x_r, 0.0), c(contour.x_r, contour.v0)),
        (c(contour.x_r, contour.v0), c(contour.x_l, contour.v0)),
        (c(contour.x_l, contour.v0), c(contour.x_l, 0.0)),
    ];
    let mut acc = Complex64::new(0.0, 0.0);
    for (z0, z1) in path {
        for (z, w) in segment_nodes(z0, z1, contour.nodes_per_edge) {
            acc += w * f(z) * resolvent_mean(z, params)?;
        }
    }
    // -(1/2πi)·2i·Im(acc) = -Im(acc)/π
    Ok(-acc.im / PI)
}

/// Cov(X_f, X_g) = −(1/4π²) ∮∮ f(z1) g(z2) Cov(M(z1), M(z2)) dz1 dz2 over
/// nested contours (the second pushed outward so 1/(z1−z2)² stays regular).
pub fn lss_general_cov<F, G>(
    f: F,
    g: G,
    params: &CltParams,
    contour: &ContourCfg,
) -> Result<f64>
where
    F: Fn(Complex64) -> Complex64,
    G: Fn(Complex64) -> Complex64,
{
    let law = MpLaw::new(params.lambda, params.c)?;
    contour.validate(&law)?;
    let outer_cfg = contour.scaled(&law, contour.second_contour_scale);
    let inner = contour_nodes(contour);
    let outer = contour_nodes(&outer_cfg);
    // precompute transforms once per node
    let inner_s: Vec<_> = inner
        .iter()
        .map(|&(z, w)| law.stieltjes(z).map(|s| (s, w, f(z))))
        .collect::<Result<_>>()?;
    let outer_s: Vec<_> = outer
        .iter()
        .map(|&(z, w)| law.stieltjes(z).map(|s| (s, w, g(z))))
        .collect::<Result<_>>()?;
    let mut acc = Complex64::new(0.0, 0.0);
    for (s1, w1, f1) in &inner_s {
        let mut row = Complex64::new(0.0, 0.0);
        for (s2, w2, g2) in &outer_s {
            row += *w2 * *g2 * resolvent_cov_kernel(s1, s2, params);
        }
        acc += *w1 * *f1 * row;
    }
    let value = -acc / (4.0 * PI * PI);
    if value.im.abs() > 1e-6 * value.re.abs().max(1.0) {
        return Err(CodaError::Numerical(format!(
            "contour covariance has imaginary residue {:.2e}",
            value.im
        )));
    }
    Ok(value.re)
}

/// Standardized statistic and two-sided normal p-value.
pub fn standardize(g_value: f64, mean: f64, variance: f64) -> Result<(f64, f64)> {
    if !(variance > 0.0) {
        return Err(CodaError::InvalidParam("variance must be > 0".into()));
    }
    let z = (g_value - mean) / variance.sqrt();
    let p = statrs::function::erf::erfc(z.abs() / std::f64::consts::SQRT_2);
    Ok((z, p))
}

fn binom(n: u32, k: u32) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc = 1.0;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

/// Convenience: f = z^r as a contour-ready closure.
pub fn poly(r: u32) -> impl Fn(Complex64) -> Complex64 + Copy {
    move |z| z.powi(r as i32)
}
