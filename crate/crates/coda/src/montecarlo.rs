//! Seeded, parallel replication harness: computes empirical G_{p,N}(f) and
//! M_p(z) statistics and pairs them with their theoretical limits.

use crate::clt;
use crate::error::{CodaError, Result};
use crate::moments::{builtin_moments, clt_params, DistSpec};
use crate::mplaw::MpLaw;
use crate::spectra::{self, Spectrum, DEFAULT_ZERO_TOL};
use crate::synth::{self, CovKind};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

/// One statistic tracked by an experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StatSpec {
    /// G_{p,N}(x^r)
    Poly(u32),
    /// M_p(z)
    Resolvent(Complex64),
}

/// Replication protocol configuration.
#[derive(Debug, Clone)]
pub struct ExperimentCfg {
    pub basis: DistSpec,
    pub n_list: Vec<usize>,
    /// target p/n; p = round(n * ratio) is recorded per block
    pub ratio: f64,
    pub reps: usize,
    pub seed: u64,
    pub stats: Vec<u32>,
    pub centering: CovKind,
    pub workers: Option<usize>,
    /// retain per-replication normalized samples in the report
    pub keep_samples: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReportRow {
    pub n: usize,
    pub p: usize,
    pub stat: String,
    pub emp_mean: f64,
    pub emp_var: f64,
    pub theo_mean: f64,
    pub theo_var: f64,
    pub se_mean: f64,
    pub reps: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub basis: String,
    pub ratio: f64,
    pub centering: String,
    pub seed: u64,
    pub rows: Vec<ReportRow>,
    /// (G - mu_r)/sqrt(V_r) per replication, keyed like rows, when requested
    #[serde(skip_serializing_if = "Option::is_none")]
    pub normalized_samples: Option<Vec<NormalizedBlock>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct NormalizedBlock {
    pub n: usize,
    pub stat: String,
    pub samples: Vec<f64>,
}

/// Count/mean/M2 accumulator with an associative merge, so any partition of
/// the replications reduces to the same empirical mean and variance.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunningStats {
    pub count: usize,
    pub mean: f64,
    pub m2: f64,
}

impl RunningStats {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&self, other: &RunningStats) -> RunningStats {
        if self.count == 0 {
            return *other;
        }
        if other.count == 0 {
            return *self;
        }
        let count = self.count + other.count;
        let d = other.mean - self.mean;
        let mean = self.mean + d * other.count as f64 / count as f64;
        let m2 = self.m2
            + other.m2
            + d * d * self.count as f64 * other.count as f64 / count as f64;
        RunningStats { count, mean, m2 }
    }

    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            return 0.0;
        }
        self.m2 / (self.count - 1) as f64
    }
}

/// G_{p,N}(x^r) = Σ λ_i^r − p·m_r(F^{c_N}), closed-form centering.
pub fn g_statistic_poly(s: &Spectrum, r: u32, law_for_centering: &MpLaw) -> f64 {
    let sum: f64 = s.values.iter().map(|&l| l.powi(r as i32)).sum();
    sum - s.p as f64 * law_for_centering.moment(r)
}

/// G_{p,N}(f) = Σ f(λ_i) − p·∫ f dF^{c_N} for general analytic f.
pub fn g_statistic<F: Fn(f64) -> f64>(s: &Spectrum, f: F, law_for_centering: &MpLaw) -> Result<f64> {
    let sum: f64 = s.values.iter().map(|&l| f(l)).sum();
    Ok(sum - s.p as f64 * law_for_centering.integrate(&f)?)
}

/// M_p(z) = Σ 1/(λ_i − z) − p·m_{F^{c_n}}(z).
pub fn m_statistic(s: &Spectrum, z: Complex64, law: &MpLaw) -> Result<Complex64> {
    let mut sum = Complex64::new(0.0, 0.0);
    for &l in &s.values {
        let d = Complex64::new(l, 0.0) - z;
        if d.norm() < 1e-12 {
            return Err(CodaError::Numerical(format!("eigenvalue {l} collides with z = {z}")));
        }
        sum += 1.0 / d;
    }
    Ok(sum - s.p as f64 * law.stieltjes(z)?.m)
}

fn with_pool<T: Send>(workers: Option<usize>, job: impl FnOnce() -> T + Send) -> T {
    match workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .expect("thread pool")
            .install(job),
        None => job(),
    }
}

fn rep_stream(n: usize, rep: usize) -> u64 {
    ((n as u64) << 32) ^ rep as u64
}

/// Runs the replication protocol for polynomial LSS statistics.
///
/// Replication k draws its basis from the RNG stream (seed, k), so the
/// report is deterministic regardless of worker count.
pub fn run_experiment(cfg: &ExperimentCfg) -> Result<ExperimentReport> {
    if cfg.reps < 2 {
        return Err(CodaError::InvalidParam("reps must be >= 2".into()));
    }
    if cfg.stats.is_empty() {
        return Err(CodaError::InvalidParam("no statistics requested".into()));
    }
    let ms = builtin_moments(cfg.basis)?;
    let limit_params = clt_params(&ms, cfg.ratio)?;
    let lambda = limit_params.lambda;

    let mut rows = Vec::new();
    let mut blocks = Vec::new();
    for &n in &cfg.n_list {
        let p = (n as f64 * cfg.ratio).round() as usize;
        if n < 2 || p < 2 {
            return Err(CodaError::InvalidParam(format!("degenerate block n={n} p={p}")));
        }
        let adjusted = match cfg.centering {
            CovKind::UnbiasedN => n - 1,
            CovKind::CenteredN => n,
        };
        let centering_law = MpLaw::new(lambda, p as f64 / adjusted as f64)?;

        let per_rep: Vec<Result<Vec<f64>>> = with_pool(cfg.workers, || {
            (0..cfg.reps)
                .into_par_iter()
                .map(|rep| {
                    let w = synth::sample_basis_with_stream(
                        cfg.basis,
                        n,
                        p,
                        cfg.seed,
                        rep_stream(n, rep),
                    )?;
                    let x = synth::compose(&w)?;
                    let s = spectra::spectrum_from_data(&x, cfg.centering, DEFAULT_ZERO_TOL)?;
                    Ok(cfg
                        .stats
                        .iter()
                        .map(|&r| g_statistic_poly(&s, r, &centering_law))
                        .collect())
                })
                .collect()
        });
        let per_rep: Vec<Vec<f64>> = per_rep.into_iter().collect::<Result<_>>()?;

        for (si, &r) in cfg.stats.iter().enumerate() {
            let mut acc = RunningStats::default();
            for rep in &per_rep {
                acc.push(rep[si]);
            }
            let theo_mean = clt::lss_poly_mean(r, &limit_params)?;
            let theo_var = clt::lss_poly_cov(r, r, &limit_params)?;
            let emp_var = acc.variance();
            rows.push(ReportRow {
                n,
                p,
                stat: format!("x^{r}"),
                emp_mean: acc.mean,
                emp_var,
                theo_mean,
                theo_var,
                se_mean: (emp_var / cfg.reps as f64).sqrt(),
                reps: cfg.reps,
            });
            if cfg.keep_samples {
                let sd = theo_var.sqrt();
                blocks.push(NormalizedBlock {
                    n,
                    stat: format!("x^{r}"),
                    samples: per_rep.iter().map(|v| (v[si] - theo_mean) / sd).collect(),
                });
            }
        }
    }
    Ok(ExperimentReport {
        basis: cfg.basis.to_string(),
        ratio: cfg.ratio,
        centering: format!("{:?}", cfg.centering),
        seed: cfg.seed,
        rows,
        normalized_samples: cfg.keep_samples.then_some(blocks),
    })
}

/// Complex value serialized as (re, im).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ComplexPair {
    pub re: f64,
    pub im: f64,
}

impl From<Complex64> for ComplexPair {
    fn from(z: Complex64) -> Self {
        ComplexPair { re: z.re, im: z.im }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ResolventPointRow {
    pub n: usize,
    pub p: usize,
    pub z: ComplexPair,
    pub emp_mean: ComplexPair,
    pub theo_mean: ComplexPair,
    pub se_mean: ComplexPair,
    pub reps: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ResolventPairRow {
    pub n: usize,
    pub p: usize,
    pub z1: ComplexPair,
    pub z2: ComplexPair,
    pub emp_cov: ComplexPair,
    pub theo_cov: ComplexPair,
    pub reps: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ResolventReport {
    pub basis: String,
    pub ratio: f64,
    pub seed: u64,
    pub points: Vec<ResolventPointRow>,
    pub pairs: Vec<ResolventPairRow>,
}

/// Monte-Carlo check of the resolvent CLT. Uses the centralized construct
/// B_p^0, matching how M_p(z) is defined.
pub fn run_resolvent_experiment(
    cfg: &ExperimentCfg,
    points: &[Complex64],
    pairs: &[(Complex64, Complex64)],
) -> Result<ResolventReport> {
    if cfg.reps < 2 {
        return Err(CodaError::InvalidParam("reps must be >= 2".into()));
    }
    let ms = builtin_moments(cfg.basis)?;
    let limit_params = clt_params(&ms, cfg.ratio)?;
    let lambda = limit_params.lambda;

    let mut zs: Vec<Complex64> = points.to_vec();
    for &(z1, z2) in pairs {
        for z in [z1, z2] {
            if !zs.iter().any(|&w| (w - z).norm() < 1e-12) {
                zs.push(z);
            }
        }
    }

    let mut point_rows = Vec::new();
    let mut pair_rows = Vec::new();
    for &n in &cfg.n_list {
        let p = (n as f64 * cfg.ratio).round() as usize;
        let law = MpLaw::new(lambda, p as f64 / n as f64)?;

        let per_rep: Vec<Result<Vec<Complex64>>> = with_pool(cfg.workers, || {
            (0..cfg.reps)
                .into_par_iter()
                .map(|rep| {
                    let w = synth::sample_basis_with_stream(
                        cfg.basis,
                        n,
                        p,
                        cfg.seed,
                        rep_stream(n, rep),
                    )?;
                    let x = synth::compose(&w)?;
                    let s = spectra::spectrum_from_data(&x, CovKind::CenteredN, DEFAULT_ZERO_TOL)?;
                    zs.iter().map(|&z| m_statistic(&s, z, &law)).collect()
                })
                .collect()
        });
        let per_rep: Vec<Vec<Complex64>> = per_rep.into_iter().collect::<Result<_>>()?;
        let repsf = cfg.reps as f64;

        let mean_at = |zi: usize| -> Complex64 {
            per_rep.iter().map(|v| v[zi]).sum::<Complex64>() / repsf
        };
        let means: Vec<Complex64> = (0..zs.len()).map(mean_at).collect();

        for &z in points {
            let zi = zs.iter().position(|&w| (w - z).norm() < 1e-12).unwrap();
            // componentwise SE of the mean
            let (mut vr, mut vi) = (0.0, 0.0);
            for v in &per_rep {
                let d = v[zi] - means[zi];
                vr += d.re * d.re;
                vi += d.im * d.im;
            }
            let se = Complex64::new(
                (vr / (repsf - 1.0) / repsf).sqrt(),
                (vi / (repsf - 1.0) / repsf).sqrt(),
            );
            point_rows.push(ResolventPointRow {
                n,
                p,
                z: z.into(),
                emp_mean: means[zi].into(),
                theo_mean: clt::resolvent_mean(z, &limit_params)?.into(),
                se_mean: se.into(),
                reps: cfg.reps,
            });
        }
        for &(z1, z2) in pairs {
            let i1 = zs.iter().position(|&w| (w - z1).norm() < 1e-12).unwrap();
            let i2 = zs.iter().position(|&w| (w - z2).norm() < 1e-12).unwrap();
            // analytic covariance: no conjugation
            let cov = per_rep
                .iter()
                .map(|v| (v[i1] - means[i1]) * (v[i2] - means[i2]))
                .sum::<Complex64>()
                / (repsf - 1.0);
            pair_rows.push(ResolventPairRow {
                n,
                p,
                z1: z1.into(),
                z2: z2.into(),
                emp_cov: cov.into(),
                theo_cov: clt::resolvent_cov(z1, z2, &limit_params)?.into(),
                reps: cfg.reps,
            });
        }
    }
    Ok(ResolventReport {
        basis: cfg.basis.to_string(),
        ratio: cfg.ratio,
        seed: cfg.seed,
        points: point_rows,
        pairs: pair_rows,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct LsdFigure {
    pub histogram: spectra::Histogram,
    pub density_x: Vec<f64>,
    pub density_y: Vec<f64>,
    pub ks_distance: f64,
    pub lambda_max: f64,
    pub lambda_min_nonzero: f64,
    pub law: MpLaw,
}

/// One-run ESD histogram against the limiting density, with the KS distance
/// of the nonzero part and the observed extremes.
pub fn run_lsd_figure(
    basis: DistSpec,
    n: usize,
    p: usize,
    bins: usize,
    seed: u64,
) -> Result<LsdFigure> {
    let ms = builtin_moments(basis)?;
    let lambda = ms.sigma2 / (ms.mu * ms.mu);
    // reference law at the observed ratio p/n (so n = p gives c = 1 and no
    // point mass), not at the finite-sample centering ratio
    let law = MpLaw::new(lambda, p as f64 / n as f64)?;
    let w = synth::sample_basis(basis, n, p, seed)?;
    let x = synth::compose(&w)?;
    let s = spectra::spectrum_from_data(&x, CovKind::UnbiasedN, DEFAULT_ZERO_TOL)?;
    let histogram = spectra::esd_histogram(&s, bins, false)?;
    let (lambda_max, lambda_min_nonzero) = spectra::extremes(&s)?;
    let ks_distance = ks_distance_nonzero(&s, &law)?;
    let npts = 512;
    let density_x: Vec<f64> = (0..npts)
        .map(|i| law.a + (law.b - law.a) * i as f64 / (npts - 1) as f64)
        .collect();
    let density_y: Vec<f64> = density_x.iter().map(|&x| law.density(x)).collect();
    Ok(LsdFigure { histogram, density_x, density_y, ks_distance, lambda_max, lambda_min_nonzero, law })
}

/// KS distance between the nonzero-part ESD and the law conditioned away
/// from its point mass at zero.
pub fn ks_distance_nonzero(s: &Spectrum, law: &MpLaw) -> Result<f64> {
    let mut nz: Vec<f64> = s.nonzero().to_vec();
    if nz.is_empty() {
        return Err(CodaError::Data("no nonzero eigenvalues".into()));
    }
    nz.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let k = nz.len() as f64;
    let pm = law.point_mass_at_zero;
    let mut d: f64 = 0.0;
    for (i, &x) in nz.iter().enumerate() {
        let f = ((law.cdf(x)? - pm) / (1.0 - pm)).clamp(0.0, 1.0);
        d = d.max((f - i as f64 / k).abs());
        d = d.max((f - (i as f64 + 1.0) / k).abs());
    }
    Ok(d)
}

/// Skewness and excess-kurtosis z-scores for a normality screen.
pub fn normality_screen(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let m2 = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let m3 = samples.iter().map(|x| (x - mean).powi(3)).sum::<f64>() / n;
    let m4 = samples.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
    let skew = m3 / m2.powf(1.5);
    let kurt = m4 / (m2 * m2) - 3.0;
    (skew / (6.0 / n).sqrt(), kurt / (24.0 / n).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectra::Spectrum;
    use rand::Rng;

    #[test]
    fn g_statistic_constant_function_is_zero() {
        let w = synth::sample_basis("exp:5".parse().unwrap(), 12, 10, 2).unwrap();
        let x = synth::compose(&w).unwrap();
        let s = spectra::spectrum_from_data(&x, CovKind::UnbiasedN, DEFAULT_ZERO_TOL).unwrap();
        let law = MpLaw::new(1.0, 10.0 / 11.0).unwrap();
        let g = g_statistic(&s, |_| 1.0, &law).unwrap();
        assert!(g.abs() < 1e-9);
    }

    #[test]
    fn g_statistic_toy_instance() {
        let s = Spectrum {
            values: vec![0.25, 0.0],
            p: 2,
            structural_zero_count: 1,
            zero_tol: DEFAULT_ZERO_TOL,
        };
        let law = MpLaw::new(0.5, 2.0).unwrap();
        let g = g_statistic_poly(&s, 1, &law);
        assert!((g - (0.25 - 2.0 * law.moment(1))).abs() < 1e-15);
    }

    #[test]
    fn g_statistic_poly_matches_general_route() {
        let w = synth::sample_basis("chisq:1".parse().unwrap(), 20, 15, 6).unwrap();
        let x = synth::compose(&w).unwrap();
        let s = spectra::spectrum_from_data(&x, CovKind::UnbiasedN, DEFAULT_ZERO_TOL).unwrap();
        let law = MpLaw::new(2.0, 15.0 / 19.0).unwrap();
        for r in 1..=3u32 {
            let a = g_statistic_poly(&s, r, &law);
            let b = g_statistic(&s, |x| x.powi(r as i32), &law).unwrap();
            assert!((a - b).abs() < 1e-7 * a.abs().max(1.0), "r={r}");
        }
    }

    #[test]
    fn m_statistic_conjugate() {
        let w = synth::sample_basis("exp:5".parse().unwrap(), 30, 20, 9).unwrap();
        let x = synth::compose(&w).unwrap();
        let s = spectra::spectrum_from_data(&x, CovKind::CenteredN, DEFAULT_ZERO_TOL).unwrap();
        let law = MpLaw::new(1.0, 20.0 / 30.0).unwrap();
        let z = Complex64::new(-3.0, 2.0);
        let a = m_statistic(&s, z, &law).unwrap();
        let b = m_statistic(&s, z.conj(), &law).unwrap();
        assert!((b - a.conj()).norm() < 1e-10);
    }

    #[test]
    fn running_stats_merge_associative() {
        let mut rng = synth::stream_rng(5, 0);
        let xs: Vec<f64> = (0..200).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let mut whole = RunningStats::default();
        for &x in &xs {
            whole.push(x);
        }
        for split in [1, 37, 100, 199] {
            let (a, b) = xs.split_at(split);
            let mut sa = RunningStats::default();
            let mut sb = RunningStats::default();
            a.iter().for_each(|&x| sa.push(x));
            b.iter().for_each(|&x| sb.push(x));
            let merged = sa.merge(&sb);
            assert!((merged.mean - whole.mean).abs() < 1e-12);
            assert!((merged.variance() - whole.variance()).abs() < 1e-12);
        }
    }

    #[test]
    fn experiment_deterministic_across_worker_counts() {
        let cfg = ExperimentCfg {
            basis: "exp:5".parse().unwrap(),
            n_list: vec![40],
            ratio: 1.0,
            reps: 8,
            seed: 77,
            stats: vec![1, 2],
            centering: CovKind::UnbiasedN,
            workers: Some(1),
            keep_samples: false,
        };
        let a = run_experiment(&cfg).unwrap();
        let cfg2 = ExperimentCfg { workers: Some(4), ..cfg.clone() };
        let b = run_experiment(&cfg2).unwrap();
        for (ra, rb) in a.rows.iter().zip(&b.rows) {
            assert_eq!(ra.emp_mean.to_bits(), rb.emp_mean.to_bits());
            assert_eq!(ra.emp_var.to_bits(), rb.emp_var.to_bits());
        }
        let c = run_experiment(&cfg).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&c).unwrap()
        );
    }

    #[test]
    fn experiment_theoretical_columns() {
        let cfg = ExperimentCfg {
            basis: "chisq:1".parse().unwrap(),
            n_list: vec![20],
            ratio: 0.75,
            reps: 2,
            seed: 1,
            stats: vec![1, 2, 3],
            centering: CovKind::UnbiasedN,
            workers: Some(1),
            keep_samples: false,
        };
        let rep = run_experiment(&cfg).unwrap();
        let theo: Vec<(f64, f64)> = rep.rows.iter().map(|r| (r.theo_mean, r.theo_var)).collect();
        assert!((theo[0].0 + 6.0).abs() < 1e-10 && (theo[0].1 - 18.0).abs() < 1e-9);
        assert!((theo[1].0 + 23.0).abs() < 1e-10 && (theo[1].1 - 918.0).abs() < 1e-8);
        assert!((theo[2].0 + 83.0).abs() < 1e-9 && (theo[2].1 - 41806.12).abs() < 0.05);
    }

    #[test]
    fn reps_guard() {
        let cfg = ExperimentCfg {
            basis: "exp:5".parse().unwrap(),
            n_list: vec![10],
            ratio: 1.0,
            reps: 1,
            seed: 1,
            stats: vec![1],
            centering: CovKind::UnbiasedN,
            workers: Some(1),
            keep_samples: false,
        };
        assert!(run_experiment(&cfg).is_err());
    }

    #[test]
    fn lsd_figure_small_run() {
        let fig = run_lsd_figure("exp:5".parse().unwrap(), 120, 120, 30, 42).unwrap();
        assert!(fig.ks_distance < 0.25, "ks = {}", fig.ks_distance);
        assert!((fig.lambda_max - 4.0).abs() < 1.0);
    }

    #[test]
    fn substitution_principle_centering_equivalence() {
        // unbiased_N with F^{c_N} vs centered_n with F^{c_n} must give
        // statistically identical G means
        let base = ExperimentCfg {
            basis: "exp:5".parse().unwrap(),
            n_list: vec![100],
            ratio: 1.0,
            reps: 120,
            seed: 31,
            stats: vec![1, 2],
            centering: CovKind::UnbiasedN,
            workers: None,
            keep_samples: false,
        };
        let unbiased = run_experiment(&base).unwrap();
        let centered =
            run_experiment(&ExperimentCfg { centering: CovKind::CenteredN, ..base.clone() })
                .unwrap();
        for (ru, rc) in unbiased.rows.iter().zip(&centered.rows) {
            let joint_se = (ru.se_mean.powi(2) + rc.se_mean.powi(2)).sqrt();
            assert!(
                (ru.emp_mean - rc.emp_mean).abs() < 3.0 * joint_se,
                "{}: {} vs {} (se {joint_se})",
                ru.stat,
                ru.emp_mean,
                rc.emp_mean
            );
        }
    }
}
