//! The limiting spectral law: a Marčenko–Pastur law scaled by λ = σ²/μ²,
//! with density, moments, Stieltjes transform m(z), companion transform
//! m̲(z), their derivatives, and the inverse map z(m̲).

use crate::error::{CodaError, Result};
use crate::quad;
use num_complex::Complex64;
use serde::Serialize;
use std::f64::consts::PI;

/// Scaled MP law with ratio c: support [λ(1−√c)², λ(1+√c)²] and a point
/// mass max(0, 1−1/c) at zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MpLaw {
    pub lambda: f64,
    pub c: f64,
    pub a: f64,
    pub b: f64,
    pub point_mass_at_zero: f64,
}

/// Support edges (λ(1−√c)², λ(1+√c)²).
pub fn support(lambda: f64, c: f64) -> (f64, f64) {
    let s = c.sqrt();
    (lambda * (1.0 - s) * (1.0 - s), lambda * (1.0 + s) * (1.0 + s))
}

impl MpLaw {
    pub fn new(lambda: f64, c: f64) -> Result<Self> {
        if !(lambda > 0.0) || !(c > 0.0) {
            return Err(CodaError::InvalidParam("need lambda > 0 and c > 0".into()));
        }
        let (a, b) = support(lambda, c);
        let point_mass_at_zero = (1.0 - 1.0 / c).max(0.0);
        Ok(MpLaw { lambda, c, a, b, point_mass_at_zero })
    }

    /// Continuous density part; the point mass is reported separately.
    pub fn density(&self, x: f64) -> f64 {
        if x <= self.a || x >= self.b {
            return 0.0;
        }
        ((self.b - x) * (x - self.a)).sqrt() / (2.0 * PI * self.c * self.lambda * x)
    }

    /// r-th moment of the law, Catalan–Narayana closed form.
    /// Includes the point mass (which only contributes to r = 0).
    pub fn moment(&self, r: u32) -> f64 {
        if r == 0 {
            return 1.0;
        }
        let mut acc = 0.0;
        for k in 0..r {
            acc += binom(r, k) * binom(r - 1, k) / (k as f64 + 1.0) * self.c.powi(k as i32);
        }
        self.lambda.powi(r as i32) * acc
    }

    /// ∫ f dF^c = point_mass·f(0) + quadrature of f·density over (a, b).
    /// The edge inverse-square-root singularities are absorbed by the
    /// substitution x = a + (b−a) sin²θ.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> Result<f64> {
        let bulk = self.integrate_bulk(&f, 0.5 * PI)?;
        Ok(self.point_mass_at_zero * f(0.0) + bulk)
    }

    fn integrate_bulk<F: Fn(f64) -> f64>(&self, f: &F, theta_hi: f64) -> Result<f64> {
        let (a, b) = (self.a, self.b);
        let w = b - a;
        let scale = w * w / (PI * self.c * self.lambda);
        let g = |theta: f64| {
            let (s, co) = theta.sin_cos();
            let x = a + w * s * s;
            f(x) * scale * s * s * co * co / x
        };
        quad::integrate_adaptive(g, 0.0, theta_hi, 1e-11).map_err(CodaError::Numerical)
    }

    /// CDF including the point mass at zero.
    pub fn cdf(&self, x: f64) -> Result<f64> {
        if x < 0.0 {
            return Ok(0.0);
        }
        if x <= self.a {
            return Ok(self.point_mass_at_zero);
        }
        if x >= self.b {
            return Ok(1.0);
        }
        let t = ((x - self.a) / (self.b - self.a)).clamp(0.0, 1.0);
        let theta = t.sqrt().asin();
        Ok(self.point_mass_at_zero + self.integrate_bulk(&|_| 1.0, theta)?)
    }

    /// Stieltjes machinery at z off the support.
    pub fn stieltjes(&self, z: Complex64) -> Result<StieltjesValue> {
        let (lam, c) = (self.lambda, self.c);
        if z.norm() == 0.0 {
            return Err(CodaError::InvalidParam("z = 0 excluded".into()));
        }
        if z.im == 0.0 && z.re >= self.a - 1e-14 && z.re <= self.b + 1e-14 {
            return Err(CodaError::InvalidParam(format!(
                "real z = {} lies on the support [{}, {}]",
                z.re, self.a, self.b
            )));
        }
        // companion fixed point z = -1/m̲ + cλ/(1+λm̲) as a quadratic:
        // λz·m̲² + (z + λ(1−c))·m̲ + 1 = 0
        let qa = lam * z;
        let qb = z + lam * (1.0 - c);
        let disc = (qb * qb - 4.0 * qa).sqrt();
        let r1 = (-qb + disc) / (2.0 * qa);
        let r2 = (-qb - disc) / (2.0 * qa);
        let m_under = if z.im != 0.0 {
            // herglotz branch: Im m̲ shares the sign of Im z
            if r1.im * z.im > 0.0 { r1 } else { r2 }
        } else {
            // real z off support: the correct branch has z'(m̲) > 0
            let zprime = |m: Complex64| 1.0 / (m * m) - c * lam * lam / ((1.0 + lam * m) * (1.0 + lam * m));
            if zprime(r1).re > 0.0 { r1 } else { r2 }
        };
        let residual = (z + 1.0 / m_under - c * lam / (1.0 + lam * m_under)).norm();
        if residual > 1e-10 * z.norm().max(1.0) {
            return Err(CodaError::Numerical(format!(
                "companion fixed-point residual {residual:.2e} at z = {z}"
            )));
        }
        let m = (m_under + (1.0 - c) / z) / c;
        let u = 1.0 + lam * m_under;
        let m_under_prime = 1.0 / (1.0 / (m_under * m_under) - c * lam * lam / (u * u));
        let m_prime = (m_under_prime - (1.0 - c) / (z * z)) / c;
        Ok(StieltjesValue { z, m, m_underline: m_under, m_prime, m_underline_prime: m_under_prime })
    }

    /// Inverse map z(m̲) = −1/m̲ + cλ/(1+λm̲).
    pub fn z_of_m_underline(&self, m_under: Complex64) -> Complex64 {
        -1.0 / m_under + self.c * self.lambda / (1.0 + self.lambda * m_under)
    }
}

/// Stieltjes transform of F^c and its companion at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StieltjesValue {
    pub z: Complex64,
    pub m: Complex64,
    pub m_underline: Complex64,
    pub m_prime: Complex64,
    pub m_underline_prime: Complex64,
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

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn support_values() {
        assert_eq!(support(1.0, 1.0), (0.0, 4.0));
        let (a, b) = support(1.0, 0.75);
        assert!((a - 0.0179491924311227).abs() < 1e-12);
        assert!((b - 3.4820508075688772).abs() < 1e-12);
        let (a, b) = support(2.0, 1e-12);
        assert!((a - 2.0).abs() < 1e-5 && (b - 2.0).abs() < 1e-5);
    }

    #[test]
    fn density_midpoint_and_edges() {
        let law = MpLaw::new(1.0, 1.0).unwrap();
        assert!((law.density(2.0) - 1.0 / (2.0 * PI)).abs() < 1e-14);
        assert_eq!(law.density(4.0), 0.0);
        assert_eq!(law.density(-0.5), 0.0);
    }

    #[test]
    fn density_normalizes_with_point_mass() {
        for (lam, c) in [(1.0, 1.0), (1.0, 0.5), (2.0, 0.75), (1.0, 2.0), (0.5, 1.25)] {
            let law = MpLaw::new(lam, c).unwrap();
            let total = law.integrate(|_| 1.0).unwrap();
            assert!((total - 1.0).abs() < 1e-10, "lam={lam} c={c}: {total}");
            let bulk = law.integrate_bulk(&|_| 1.0, 0.5 * PI).unwrap();
            assert!((bulk - 1.0f64.min(1.0 / c)).abs() < 1e-10);
        }
    }

    #[test]
    fn moments_match_centering_constants() {
        let law = MpLaw::new(1.0, 0.75).unwrap();
        assert_eq!(law.moment(1), 1.0);
        assert!((law.moment(2) - 1.75).abs() < 1e-14);
        let law2 = MpLaw::new(2.0, 1.0).unwrap();
        assert!((law2.moment(3) - 40.0).abs() < 1e-12);
    }

    #[test]
    fn moments_match_quadrature_oracle() {
        for (lam, c) in [(1.0, 1.0), (1.0, 0.6), (2.0, 0.75), (1.5, 1.3)] {
            let law = MpLaw::new(lam, c).unwrap();
            for r in 1..=6u32 {
                let quad = law.integrate(|x| x.powi(r as i32)).unwrap();
                let closed = law.moment(r);
                assert!(
                    (quad - closed).abs() <= 1e-8 * closed.abs().max(1.0),
                    "lam={lam} c={c} r={r}: {quad} vs {closed}"
                );
            }
        }
    }

    #[test]
    fn integrate_sees_point_mass() {
        let law = MpLaw::new(1.0, 2.0).unwrap();
        assert!((law.point_mass_at_zero - 0.5).abs() < 1e-15);
        // f vanishing on the bulk but 1 at zero picks up exactly the mass
        let v = law.integrate(|x| if x < law.a / 2.0 { 1.0 } else { 0.0 }).unwrap();
        assert!((v - 0.5).abs() < 1e-10);
    }

    #[test]
    fn cdf_monotone_and_bounded() {
        let law = MpLaw::new(1.0, 0.75).unwrap();
        let mut prev = 0.0;
        for i in 0..=50 {
            let x = -0.5 + 4.5 * i as f64 / 50.0;
            let f = law.cdf(x).unwrap();
            assert!(f >= prev - 1e-12 && (0.0..=1.0).contains(&f));
            prev = f;
        }
        assert!((law.cdf(10.0).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn stieltjes_large_z_asymptotic() {
        let law = MpLaw::new(1.0, 1.0).unwrap();
        let z = Complex64::new(1e6, 0.0);
        let s = law.stieltjes(z).unwrap();
        assert!((s.m - (-1.0 / z)).norm() < 1e-5 / 1e6);
    }

    #[test]
    fn stieltjes_negative_real_point() {
        let law = MpLaw::new(1.0, 1.0).unwrap();
        let s = law.stieltjes(Complex64::new(-1.0, 0.0)).unwrap();
        let golden = (5f64.sqrt() - 1.0) / 2.0;
        assert!((s.m.re - golden).abs() < 1e-12);
        assert!(s.m.im.abs() < 1e-14);
        // quadrature cross-check of m = ∫ dF/(x - z)
        let oracle = law.integrate(|x| 1.0 / (x + 1.0)).unwrap();
        assert!((s.m.re - oracle).abs() < 1e-9);
    }

    #[test]
    fn inverse_map_round_trip() {
        let law = MpLaw::new(1.0, 1.0).unwrap();
        let m0 = Complex64::new(0.0, 1.0);
        let z0 = law.z_of_m_underline(m0);
        assert!((z0 - Complex64::new(0.5, 0.5)).norm() < 1e-14);
        let s = law.stieltjes(z0).unwrap();
        assert!((s.m_underline - m0).norm() < 1e-10);
    }

    #[test]
    fn derivative_matches_finite_differences() {
        let law = MpLaw::new(1.0, 0.75).unwrap();
        let z = Complex64::new(-2.0, 1.5);
        let h = 1e-5;
        let s = law.stieltjes(z).unwrap();
        let fd_under = (law.stieltjes(z + h).unwrap().m_underline
            - law.stieltjes(z - h).unwrap().m_underline)
            / (2.0 * h);
        assert!((s.m_underline_prime - fd_under).norm() < 1e-6 * fd_under.norm());
        let fd_m = (law.stieltjes(z + h).unwrap().m - law.stieltjes(z - h).unwrap().m) / (2.0 * h);
        assert!((s.m_prime - fd_m).norm() < 1e-6 * fd_m.norm());
    }

    #[test]
    fn conjugate_symmetry() {
        let law = MpLaw::new(2.0, 0.75).unwrap();
        let z = Complex64::new(1.1, 0.7);
        let s = law.stieltjes(z).unwrap();
        let sc = law.stieltjes(z.conj()).unwrap();
        assert!((sc.m - s.m.conj()).norm() < 1e-12);
        assert!((sc.m_underline - s.m_underline.conj()).norm() < 1e-12);
    }

    #[test]
    fn companion_relation_everywhere() {
        let law = MpLaw::new(1.5, 0.6).unwrap();
        for &z in &[
            Complex64::new(-3.0, 2.0),
            Complex64::new(6.0, -1.0),
            Complex64::new(0.02, 0.0),
            Complex64::new(9.0, 0.0),
        ] {
            let s = law.stieltjes(z).unwrap();
            let rel = -(1.0 - law.c) / z + law.c * s.m;
            assert!((s.m_underline - rel).norm() < 1e-10, "z = {z}");
        }
    }

    #[test]
    fn density_recovered_from_boundary_imaginary_part() {
        let law = MpLaw::new(1.0, 0.75).unwrap();
        for x in [0.5, 1.0, 2.0, 3.0] {
            let s = law.stieltjes(Complex64::new(x, 1e-6)).unwrap();
            let approx = s.m.im / PI;
            assert!((approx - law.density(x)).abs() < 1e-4, "x = {x}");
        }
    }

    #[test]
    fn rejects_support_and_zero() {
        let law = MpLaw::new(1.0, 0.75).unwrap();
        assert!(law.stieltjes(Complex64::new(2.0, 0.0)).is_err());
        assert!(law.stieltjes(Complex64::new(0.0, 0.0)).is_err());
    }
}
