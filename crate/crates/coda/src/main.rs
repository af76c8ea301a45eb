use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use coda::clt;
use coda::error::{CodaError, Result};
use coda::moments::{builtin_moments, clt_params, DistSpec, MomentSet};
use coda::montecarlo::{self, ExperimentCfg};
use coda::mplaw::MpLaw;
use coda::spectra::{self, DEFAULT_ZERO_TOL};
use coda::synth::{self, CovKind, Orientation};
use num_complex::Complex64;
use serde::Serialize;
use serde_json::Value;

#[derive(Parser)]
#[command(name = "coda", version, about = "Spectral analysis of compositional covariance matrices")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Single-run empirical spectral distribution vs the limiting law
    Lsd(LsdArgs),
    /// Monte-Carlo replication of polynomial linear spectral statistics
    Lss(LssArgs),
    /// Monte-Carlo replication of resolvent statistics M_p(z)
    Resolvent(ResolventArgs),
    /// Hypothesis test for i.i.d.-basis compositional structure
    Test(TestArgs),
    /// Print limiting-law and CLT constants as JSON
    Theory(TheoryArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// basis distribution, e.g. exp:5, chisq:1, pois:3, tnorm:1:0.25:0:2
    #[arg(long)]
    dist: Option<String>,
    /// RNG seed (default: CODA_SEED env var, then 42)
    #[arg(long)]
    seed: Option<u64>,
    /// JSON config file mirroring flags; explicit flags take precedence
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct LsdArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    bins: Option<usize>,
    /// output directory for histogram.csv, density.csv, summary.json
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct LssArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// comma-separated sample sizes, e.g. 100,200,300,400
    #[arg(long)]
    n: Option<String>,
    /// dimension-to-sample ratio p/n, fraction ("3/4") or decimal
    #[arg(long)]
    ratio: Option<String>,
    #[arg(long)]
    reps: Option<usize>,
    /// statistics to track, e.g. x,x2,x3
    #[arg(long)]
    stats: Option<String>,
    #[arg(long)]
    workers: Option<usize>,
    /// report file (stdout if omitted)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ResolventArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    ratio: Option<String>,
    #[arg(long)]
    reps: Option<usize>,
    /// comma-separated complex points, grammar a+bi, e.g. -3+2i,3+2i
    #[arg(long, allow_hyphen_values = true)]
    z: Option<String>,
    /// parenthesized pairs, e.g. "(-3+2i,-1+1i),(3+2i,5+1i)"
    #[arg(long, allow_hyphen_values = true)]
    pairs: Option<String>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TestArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// composition CSV, rows are samples
    #[arg(long)]
    input: Option<PathBuf>,
    /// statistic to test (currently x2)
    #[arg(long)]
    stat: Option<String>,
    /// user-supplied basis moments: mu=..,sigma2=..,m3=..,mu4c=..
    #[arg(long)]
    moments: Option<String>,
    /// renormalize rows that are off the simplex by rounding error
    #[arg(long)]
    renormalize: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TheoryArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    ratio: Option<String>,
}

/// flag > config file > env/default resolution for one option
fn resolve<T: Clone>(flag: &Option<T>, cfg: Option<T>) -> Option<T> {
    flag.clone().or(cfg)
}

struct ConfigFile(Value);

impl ConfigFile {
    fn load(path: &Option<PathBuf>) -> Result<ConfigFile> {
        match path {
            None => Ok(ConfigFile(Value::Null)),
            Some(p) => {
                let text = std::fs::read_to_string(p)?;
                let v: Value = serde_json::from_str(&text)
                    .map_err(|e| CodaError::Data(format!("bad config {}: {e}", p.display())))?;
                if !v.is_object() {
                    return Err(CodaError::Data("config must be a JSON object".into()));
                }
                Ok(ConfigFile(v))
            }
        }
    }

    fn str(&self, key: &str) -> Option<String> {
        self.0.get(key).and_then(|v| v.as_str()).map(str::to_owned)
    }

    fn uint(&self, key: &str) -> Option<u64> {
        self.0.get(key).and_then(|v| v.as_u64())
    }
}

fn resolve_seed(flag: Option<u64>, cfg: &ConfigFile) -> u64 {
    flag.or_else(|| cfg.uint("seed"))
        .or_else(|| std::env::var("CODA_SEED").ok().and_then(|s| s.parse().ok()))
        .unwrap_or(42)
}

fn require<T>(v: Option<T>, flag: &str) -> Result<T> {
    v.ok_or_else(|| CodaError::InvalidParam(format!("missing required --{flag}")))
}

fn parse_dist(s: &str) -> Result<DistSpec> {
    s.parse()
}

fn parse_ratio(s: &str) -> Result<f64> {
    let s = s.trim();
    let v = if let Some((num, den)) = s.split_once('/') {
        let num: f64 = num
            .trim()
            .parse()
            .map_err(|_| CodaError::InvalidParam(format!("bad ratio {s}")))?;
        let den: f64 = den
            .trim()
            .parse()
            .map_err(|_| CodaError::InvalidParam(format!("bad ratio {s}")))?;
        num / den
    } else {
        s.parse()
            .map_err(|_| CodaError::InvalidParam(format!("bad ratio {s}")))?
    };
    if !v.is_finite() || v <= 0.0 {
        return Err(CodaError::InvalidParam(format!("ratio must be positive, got {s}")));
    }
    Ok(v)
}

fn parse_n_list(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse()
                .map_err(|_| CodaError::InvalidParam(format!("bad sample size {t}")))
        })
        .collect()
}

fn parse_stats(s: &str) -> Result<Vec<u32>> {
    s.split(',')
        .map(|t| {
            let t = t.trim();
            match t.strip_prefix('x') {
                Some("") => Ok(1),
                Some(k) => k
                    .parse()
                    .ok()
                    .filter(|&r| (1..=3).contains(&r))
                    .ok_or_else(|| CodaError::InvalidParam(format!("unknown statistic {t}"))),
                None => Err(CodaError::InvalidParam(format!("unknown statistic {t}"))),
            }
        })
        .collect()
}

/// `a+bi` with optional signs on both parts; also accepts a bare real.
fn parse_complex(s: &str) -> Result<Complex64> {
    let t: String = s.chars().filter(|c| !c.is_whitespace()).collect();
    let bad = || CodaError::InvalidParam(format!("bad complex literal {s}"));
    if t.is_empty() {
        return Err(bad());
    }
    if let Some(body) = t.strip_suffix('i') {
        // split at the last +/- that is not the leading sign or an exponent sign
        let bytes = body.as_bytes();
        let mut split = None;
        for k in (1..bytes.len()).rev() {
            let c = bytes[k] as char;
            if (c == '+' || c == '-') && !matches!(bytes[k - 1] as char, 'e' | 'E') {
                split = Some(k);
                break;
            }
        }
        let (re_s, im_s) = match split {
            Some(k) => (&body[..k], &body[k..]),
            None => ("0", body),
        };
        let im: f64 = match im_s {
            "+" | "" => 1.0,
            "-" => -1.0,
            _ => im_s.parse().map_err(|_| bad())?,
        };
        let re: f64 = re_s.parse().map_err(|_| bad())?;
        Ok(Complex64::new(re, im))
    } else {
        Ok(Complex64::new(t.parse().map_err(|_| bad())?, 0.0))
    }
}

fn parse_z_list(s: &str) -> Result<Vec<Complex64>> {
    // commas separate points but also appear inside each literal's parts only
    // via the pairs grammar; here each item is a single literal
    s.split(',').map(|t| parse_complex(t)).collect()
}

fn parse_pairs(s: &str) -> Result<Vec<(Complex64, Complex64)>> {
    let mut out = Vec::new();
    let mut rest = s.trim();
    let bad = || CodaError::InvalidParam(format!("bad pair list {s}"));
    while !rest.is_empty() {
        rest = rest.trim_start_matches([',', ' ']);
        if rest.is_empty() {
            break;
        }
        if !rest.starts_with('(') {
            return Err(bad());
        }
        let close = rest.find(')').ok_or_else(bad)?;
        let inner = &rest[1..close];
        let (a, b) = inner.split_once(',').ok_or_else(bad)?;
        out.push((parse_complex(a)?, parse_complex(b)?));
        rest = &rest[close + 1..];
    }
    if out.is_empty() {
        return Err(bad());
    }
    Ok(out)
}

fn parse_moments(s: &str) -> Result<MomentSet> {
    let (mut mu, mut sigma2, mut m3, mut mu4c) = (None, None, None, None);
    for part in s.split(',') {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| CodaError::InvalidParam(format!("bad moment entry {part}")))?;
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|_| CodaError::InvalidParam(format!("bad moment value {part}")))?;
        match k.trim() {
            "mu" => mu = Some(v),
            "sigma2" => sigma2 = Some(v),
            "m3" => m3 = Some(v),
            "mu4c" => mu4c = Some(v),
            other => return Err(CodaError::InvalidParam(format!("unknown moment {other}"))),
        }
    }
    MomentSet::new(
        require(mu, "moments mu")?,
        require(sigma2, "moments sigma2")?,
        require(m3, "moments m3")?,
        require(mu4c, "moments mu4c")?,
    )
}

fn write_json<T: Serialize>(value: &T, out: &Option<PathBuf>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| CodaError::Numerical(format!("serialization: {e}")))?;
    match out {
        Some(p) => std::fs::write(p, text + "\n")?,
        None => println!("{text}"),
    }
    Ok(())
}

#[derive(Serialize)]
struct LsdSummary {
    dist: String,
    n: usize,
    p: usize,
    seed: u64,
    lambda: f64,
    c: f64,
    support: [f64; 2],
    point_mass: f64,
    ks_distance: f64,
    lambda_max: f64,
    lambda_min_nonzero: f64,
    theo_lambda_max: f64,
    theo_lambda_min: f64,
}

fn cmd_lsd(args: &LsdArgs) -> Result<()> {
    let cfg = ConfigFile::load(&args.common.config)?;
    let dist = parse_dist(&require(resolve(&args.common.dist, cfg.str("dist")), "dist")?)?;
    let n = require(resolve(&args.n, cfg.uint("n").map(|v| v as usize)), "n")?;
    let p = require(resolve(&args.p, cfg.uint("p").map(|v| v as usize)), "p")?;
    let bins = resolve(&args.bins, cfg.uint("bins").map(|v| v as usize)).unwrap_or(60);
    let seed = resolve_seed(args.common.seed, &cfg);
    let out = require(
        resolve(&args.out, cfg.str("out").map(PathBuf::from)),
        "out",
    )?;

    let fig = montecarlo::run_lsd_figure(dist, n, p, bins, seed)?;
    std::fs::create_dir_all(&out)?;

    let mut hist_csv = String::from("bin_left,bin_right,count,density\n");
    let h = &fig.histogram;
    for i in 0..h.counts.len() {
        hist_csv.push_str(&format!(
            "{},{},{},{}\n",
            h.edges[i], h.edges[i + 1], h.counts[i], h.density[i]
        ));
    }
    std::fs::write(out.join("histogram.csv"), hist_csv)?;

    let mut dens_csv = String::from("x,density\n");
    for (x, y) in fig.density_x.iter().zip(&fig.density_y) {
        dens_csv.push_str(&format!("{x},{y}\n"));
    }
    std::fs::write(out.join("density.csv"), dens_csv)?;

    let law = &fig.law;
    let summary = LsdSummary {
        dist: dist.to_string(),
        n,
        p,
        seed,
        lambda: law.lambda,
        c: law.c,
        support: [law.a, law.b],
        point_mass: law.point_mass_at_zero,
        ks_distance: fig.ks_distance,
        lambda_max: fig.lambda_max,
        lambda_min_nonzero: fig.lambda_min_nonzero,
        theo_lambda_max: law.b,
        theo_lambda_min: law.a,
    };
    write_json(&summary, &Some(out.join("summary.json")))
}

fn cmd_lss(args: &LssArgs) -> Result<()> {
    let cfg = ConfigFile::load(&args.common.config)?;
    let exp = ExperimentCfg {
        basis: parse_dist(&require(resolve(&args.common.dist, cfg.str("dist")), "dist")?)?,
        n_list: parse_n_list(&require(resolve(&args.n, cfg.str("n")), "n")?)?,
        ratio: resolve(&args.ratio, cfg.str("ratio")).map_or(Ok(1.0), |s| parse_ratio(&s))?,
        reps: require(resolve(&args.reps, cfg.uint("reps").map(|v| v as usize)), "reps")?,
        seed: resolve_seed(args.common.seed, &cfg),
        stats: parse_stats(&resolve(&args.stats, cfg.str("stats")).unwrap_or("x,x2,x3".into()))?,
        centering: CovKind::UnbiasedN,
        workers: resolve(&args.workers, cfg.uint("workers").map(|v| v as usize)),
        keep_samples: false,
    };
    let report = montecarlo::run_experiment(&exp)?;
    write_json(&report, &resolve(&args.out, cfg.str("out").map(PathBuf::from)))
}

fn cmd_resolvent(args: &ResolventArgs) -> Result<()> {
    let cfg = ConfigFile::load(&args.common.config)?;
    let exp = ExperimentCfg {
        basis: parse_dist(&require(resolve(&args.common.dist, cfg.str("dist")), "dist")?)?,
        n_list: parse_n_list(&require(resolve(&args.n, cfg.str("n")), "n")?)?,
        ratio: resolve(&args.ratio, cfg.str("ratio")).map_or(Ok(1.0), |s| parse_ratio(&s))?,
        reps: require(resolve(&args.reps, cfg.uint("reps").map(|v| v as usize)), "reps")?,
        seed: resolve_seed(args.common.seed, &cfg),
        stats: vec![],
        centering: CovKind::CenteredN,
        workers: resolve(&args.workers, cfg.uint("workers").map(|v| v as usize)),
        keep_samples: false,
    };
    let points = resolve(&args.z, cfg.str("z")).map_or(Ok(vec![]), |s| parse_z_list(&s))?;
    let pairs = resolve(&args.pairs, cfg.str("pairs")).map_or(Ok(vec![]), |s| parse_pairs(&s))?;
    if points.is_empty() && pairs.is_empty() {
        return Err(CodaError::InvalidParam("need --z points or --pairs".into()));
    }
    let report = montecarlo::run_resolvent_experiment(&exp, &points, &pairs)?;
    write_json(&report, &resolve(&args.out, cfg.str("out").map(PathBuf::from)))
}

#[derive(Serialize)]
struct TestReport {
    statistic: String,
    n: usize,
    p: usize,
    g_value: f64,
    theo_mean: f64,
    theo_var: f64,
    z_score: f64,
    p_value: f64,
    moment_source: String,
    note: String,
}

fn cmd_test(args: &TestArgs) -> Result<()> {
    let cfg = ConfigFile::load(&args.common.config)?;
    let input = require(resolve(&args.input, cfg.str("input").map(PathBuf::from)), "input")?;
    let stat = resolve(&args.stat, cfg.str("stat")).unwrap_or("x2".into());
    let r = match parse_stats(&stat)?[..] {
        [r] => r,
        _ => return Err(CodaError::InvalidParam("--stat takes one statistic".into())),
    };

    let x = synth::ingest_csv(&input, Orientation::RowsAreSamples, args.renormalize)?;
    let (n, p) = (x.n, x.p);
    if n < 3 || p < 3 {
        return Err(CodaError::Data(format!("need n >= 3 and p >= 3, got {n} x {p}")));
    }

    let moments_flag = resolve(&args.moments, cfg.str("moments"));
    let dist_flag = resolve(&args.common.dist, cfg.str("dist"));
    let (ms, moment_source) = match (moments_flag, dist_flag) {
        (Some(m), _) => (parse_moments(&m)?, "user_supplied"),
        (None, Some(d)) => (builtin_moments(parse_dist(&d)?)?, "builtin"),
        (None, None) => {
            return Err(CodaError::InvalidParam(
                "need a moment source: --moments or --dist".into(),
            ))
        }
    };

    let params = clt_params(&ms, p as f64 / n as f64)?;
    let centering = MpLaw::new(params.lambda, p as f64 / (n - 1) as f64)?;
    let s = spectra::spectrum_from_data(&x, CovKind::UnbiasedN, DEFAULT_ZERO_TOL)?;
    let g = montecarlo::g_statistic_poly(&s, r, &centering);
    let mean = clt::lss_poly_mean(r, &params)?;
    let var = clt::lss_poly_cov(r, r, &params)?;
    let (z_score, p_value) = clt::standardize(g, mean, var)?;

    let report = TestReport {
        statistic: format!("x^{r}"),
        n,
        p,
        g_value: g,
        theo_mean: mean,
        theo_var: var,
        z_score,
        p_value,
        moment_source: moment_source.into(),
        note: "rejection indicates departure from the i.i.d.-basis null".into(),
    };
    write_json(&report, &resolve(&args.out, cfg.str("out").map(PathBuf::from)))
}

#[derive(Serialize)]
struct TheoryStat {
    f: String,
    mean: f64,
    variance: f64,
}

#[derive(Serialize)]
struct TheorySummary {
    basis: String,
    c: f64,
    lambda: f64,
    h1: f64,
    h2: f64,
    alpha1: f64,
    alpha2: f64,
    support: [f64; 2],
    point_mass: f64,
    stats: Vec<TheoryStat>,
}

fn cmd_theory(args: &TheoryArgs) -> Result<()> {
    let cfg = ConfigFile::load(&args.common.config)?;
    let dist = parse_dist(&require(resolve(&args.common.dist, cfg.str("dist")), "dist")?)?;
    let ratio =
        parse_ratio(&require(resolve(&args.ratio, cfg.str("ratio")), "ratio")?)?;
    let ms = builtin_moments(dist)?;
    let params = clt_params(&ms, ratio)?;
    let law = MpLaw::new(params.lambda, ratio)?;
    let stats = (1..=3)
        .map(|r| {
            Ok(TheoryStat {
                f: format!("x^{r}"),
                mean: clt::lss_poly_mean(r, &params)?,
                variance: clt::lss_poly_cov(r, r, &params)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let summary = TheorySummary {
        basis: dist.to_string(),
        c: ratio,
        lambda: params.lambda,
        h1: params.h1,
        h2: params.h2,
        alpha1: params.alpha1,
        alpha2: params.alpha2,
        support: [law.a, law.b],
        point_mass: law.point_mass_at_zero,
        stats,
    };
    write_json(&summary, &None)
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.cmd {
        Cmd::Lsd(a) => cmd_lsd(a),
        Cmd::Lss(a) => cmd_lss(a),
        Cmd::Resolvent(a) => cmd_resolvent(a),
        Cmd::Test(a) => cmd_test(a),
        Cmd::Theory(a) => cmd_theory(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
