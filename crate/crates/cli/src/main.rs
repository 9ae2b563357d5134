//! `sparsedet` command-line front end.
//!
//! Exit codes: 0 on success, 2 for usage or configuration errors (including
//! unreadable input files), 3 for failures while computing or writing output.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use sparsedet::detectors::{calibrate_cov_scan, ScanConfig, ScanStrategy};
use sparsedet::divergence::{
    beta_star, boundary_curves, chi2_gaussian_mixture_mc, chi2_least_favorable_exact, chi2_upper_bound_cs,
    mgf_gh_exact, mgf_h_exact, optimize_s_star, permutation_mgf, tv_upper_from_chi2, DEFAULT_S_STAR_C,
};
use sparsedet::experiment::{emit_phase_plot, format_real, run_experiment, write_phase_csv, ExperimentConfig};
use sparsedet::priors::{prior_block_size_presets, SignalKind, SignalSpec};
use sparsedet::witness::{calibrate_witness_constant, find_witness, DEFAULT_C_W};
use sparsedet::{Error, RngSeed};

const THREADS_ENV: &str = "SPARSEDET_THREADS";

#[derive(Parser, Debug)]
#[command(name = "sparsedet", version, about = "Sparse matrix detection experiments")]
struct Cli {
    /// Base random seed (overrides the config seed for `simulate`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; overrides the SPARSEDET_THREADS environment variable.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output file; standard output when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a Monte Carlo experiment from a TOML config and emit its CSV table.
    Simulate {
        config: PathBuf,
        /// Also write the phase-diagram SVG here.
        #[arg(long)]
        plot: Option<PathBuf>,
    },
    /// Tabulate the upper and lower detection rates and the critical exponent.
    Boundary {
        #[arg(long)]
        p: usize,
        /// Sparsities (comma separated); a geometric grid over [1, p] when omitted.
        #[arg(long, value_delimiter = ',')]
        k: Vec<usize>,
    },
    /// Find a small submatrix carrying a constant fraction of the spectral norm.
    Witness {
        /// Matrix file in the plain-text matrix format.
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = DEFAULT_C_W)]
        c_w: f64,
        #[arg(long, default_value_t = 10)]
        restarts: usize,
    },
    /// Evaluate divergence and moment generating function quantities.
    Divergence {
        #[command(subcommand)]
        op: DivergenceOp,
    },
    /// Calibrate data-dependent constants by simulation.
    Calibrate {
        #[command(subcommand)]
        what: CalibrateOp,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Chi2MethodArg {
    /// Exact enumeration for the least-favorable prior.
    Exact,
    /// Monte Carlo over pairs of prior draws.
    Mc,
    /// Cauchy-Schwarz upper bound from the exact MGFs.
    CsBound,
}

impl Chi2MethodArg {
    fn label(self) -> &'static str {
        match self {
            Chi2MethodArg::Exact => "exact",
            Chi2MethodArg::Mc => "mc",
            Chi2MethodArg::CsBound => "cs_bound",
        }
    }
}

#[derive(Subcommand, Debug)]
enum DivergenceOp {
    /// Chi-square of the least-favorable prior over a grid of `s = t²`, as CSV.
    Chi2 {
        #[arg(long)]
        p: usize,
        #[arg(long)]
        k: usize,
        /// Block size; the highly sparse preset when omitted.
        #[arg(long)]
        m: Option<usize>,
        #[arg(long, value_delimiter = ',', required = true)]
        s: Vec<f64>,
        #[arg(long, value_enum, default_value_t = Chi2MethodArg::Exact)]
        method: Chi2MethodArg,
        /// Monte Carlo replicates for `--method mc`.
        #[arg(long, default_value_t = 20_000)]
        reps: usize,
    },
    /// `E[exp(t G_H²)]`.
    MgfGh {
        #[arg(long)]
        p: usize,
        #[arg(long)]
        m: usize,
        #[arg(long, allow_negative_numbers = true)]
        t: f64,
    },
    /// `E[exp(lambda H²)]`.
    MgfH {
        #[arg(long)]
        p: usize,
        #[arg(long)]
        m: usize,
        #[arg(long, allow_negative_numbers = true)]
        lambda: f64,
    },
    /// Total variation bound implied by a chi-square value.
    Tv {
        #[arg(long)]
        chi2: f64,
    },
    /// `E[exp(number of fixed points)]` of a uniform permutation.
    Permutation {
        #[arg(long)]
        p: usize,
        #[arg(long, default_value_t = 100_000)]
        reps: usize,
    },
    /// Block size maximizing the lower-bound exponent.
    SStar {
        #[arg(long)]
        p: usize,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = DEFAULT_S_STAR_C)]
        c: f64,
    },
}

#[derive(Subcommand, Debug)]
enum CalibrateOp {
    /// Null quantile of the principal scan of the sample covariance.
    CovScan(CovScanArgs),
    /// Success rate of the witness search as a function of its constant.
    Witness {
        #[arg(long)]
        p: usize,
        #[arg(long)]
        m: usize,
        #[arg(long)]
        k: usize,
        #[arg(long, value_delimiter = ',', default_value = "1,2,4,8,16")]
        candidates: Vec<f64>,
        #[arg(long, default_value_t = 100)]
        draws: usize,
        #[arg(long, default_value_t = 10)]
        restarts: usize,
        #[arg(long, default_value_t = 0.95)]
        target: f64,
    },
}

#[derive(Args, Debug)]
struct CovScanArgs {
    #[arg(long)]
    p: usize,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    m: usize,
    #[arg(long, default_value_t = 0.1)]
    epsilon: f64,
    #[arg(long, default_value_t = 500)]
    reps: usize,
    /// Random-restart budget when exhaustive enumeration is too large.
    #[arg(long, default_value_t = 8)]
    restarts: usize,
    #[arg(long, default_value_t = 20)]
    iters: usize,
}

enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => m,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::InvalidInput(_) | Error::Parse { .. } => CliError::Usage(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

/// Errors while reading user-supplied inputs are usage errors.
fn input_err(e: Error) -> CliError {
    CliError::Usage(e.to_string())
}

fn thread_count(flag: Option<usize>) -> Result<Option<usize>, CliError> {
    let n = match flag {
        Some(n) => Some(n),
        None => match std::env::var(THREADS_ENV) {
            Ok(v) => Some(
                v.trim()
                    .parse::<usize>()
                    .map_err(|_| CliError::Usage(format!("{THREADS_ENV}: expected a positive integer, got {v:?}")))?,
            ),
            Err(_) => None,
        },
    };
    if n == Some(0) {
        return Err(CliError::Usage("thread count must be >= 1".into()));
    }
    Ok(n)
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<(), CliError> {
    match out {
        Some(path) => {
            std::fs::write(path, bytes).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(bytes)
                .and_then(|_| stdout.flush())
                .map_err(|e| CliError::Runtime(format!("stdout: {e}")))
        }
    }
}

fn emit_json(out: Option<&Path>, value: &serde_json::Value) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("json values serialize");
    text.push('\n');
    emit(out, text.as_bytes())
}

fn csv_text(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut s = header.join(",");
    s.push('\n');
    for r in rows {
        s.push_str(&r.join(","));
        s.push('\n');
    }
    s
}

/// Resolves a config-relative output path.
fn beside(config: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        config.parent().unwrap_or(Path::new("")).join(p)
    }
}

fn simulate(cli: &Cli, config: &Path, plot: Option<&Path>) -> Result<(), CliError> {
    let mut cfg = ExperimentConfig::load(config).map_err(input_err)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let table = run_experiment(&cfg)?;
    let mut buf = Vec::new();
    write_phase_csv(&table, &mut buf).map_err(|e| CliError::Runtime(e.to_string()))?;
    let csv_path = cli.out.clone().or_else(|| cfg.output.csv.as_ref().map(|p| beside(config, p)));
    emit(csv_path.as_deref(), &buf)?;
    let plot_path = plot.map(Path::to_path_buf).or_else(|| cfg.output.plot.as_ref().map(|p| beside(config, p)));
    if let Some(path) = plot_path {
        emit_phase_plot(&table, &path).map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    eprintln!(
        "note: Type-II errors are estimated against the configured signal only and lower-bound the worst case over the alternative"
    );
    Ok(())
}

fn boundary(out: Option<&Path>, p: usize, ks: &[usize]) -> Result<(), CliError> {
    if p < 2 {
        return Err(CliError::Usage("--p must be >= 2".into()));
    }
    let ks: Vec<usize> = if ks.is_empty() {
        let mut g: Vec<usize> = (0..=40).map(|i| (p as f64).powf(i as f64 / 40.0).round() as usize).collect();
        g.retain(|&k| (1..=p).contains(&k));
        g.dedup();
        g
    } else {
        ks.to_vec()
    };
    let ln_p = (p as f64).ln();
    let mut rows = Vec::new();
    for k in ks {
        let b = boundary_curves(p, k)?;
        let alpha = (k as f64).ln() / ln_p;
        rows.push(vec![
            p.to_string(),
            k.to_string(),
            format_real(b.lambda1),
            format_real(b.lambda0),
            format_real(b.lambda0_raw),
            b.clamped.to_string(),
            b.highly_sparse.to_string(),
            format_real(alpha),
            format_real(beta_star(alpha)),
        ]);
    }
    let header = [
        "p",
        "k",
        "lambda1",
        "lambda0",
        "lambda0_raw",
        "clamped",
        "highly_sparse",
        "alpha",
        "beta_star",
    ];
    emit(out, csv_text(&header, &rows).as_bytes())
}

fn divergence(out: Option<&Path>, seed: RngSeed, op: &DivergenceOp) -> Result<(), CliError> {
    match *op {
        DivergenceOp::Chi2 {
            p,
            k,
            m,
            ref s,
            method,
            reps,
        } => {
            let m = m.unwrap_or_else(|| prior_block_size_presets(p, k, DEFAULT_S_STAR_C).0);
            let mut rows = Vec::new();
            for (i, &sv) in s.iter().enumerate() {
                if !(sv >= 0.0 && sv.is_finite()) {
                    return Err(CliError::Usage(format!("--s values must be finite and >= 0, got {sv}")));
                }
                let (value, se) = match method {
                    Chi2MethodArg::Exact => {
                        let e = chi2_least_favorable_exact(p, m, k, sv.sqrt())?;
                        (e.value, e.std_error)
                    }
                    Chi2MethodArg::Mc => {
                        let signal = SignalSpec::new(p, SignalKind::LeastFavorable { m, k, t: sv.sqrt() })?;
                        let e = chi2_gaussian_mixture_mc(&signal, reps, seed.child(i as u64))?;
                        (e.value, e.std_error)
                    }
                    Chi2MethodArg::CsBound => (chi2_upper_bound_cs(p, m, k, sv)?, 0.0),
                };
                rows.push(vec![
                    p.to_string(),
                    k.to_string(),
                    m.to_string(),
                    format_real(sv),
                    format_real(value),
                    method.label().to_string(),
                    format_real(se),
                ]);
            }
            emit(out, csv_text(&["p", "k", "m", "s", "value", "method", "se"], &rows).as_bytes())
        }
        DivergenceOp::MgfGh { p, m, t } => emit_json(
            out,
            &json!({ "op": "mgf_gh", "p": p, "m": m, "t": t, "value": mgf_gh_exact(p, m, t)? }),
        ),
        DivergenceOp::MgfH { p, m, lambda } => emit_json(
            out,
            &json!({ "op": "mgf_h", "p": p, "m": m, "lambda": lambda, "value": mgf_h_exact(p, m, lambda)? }),
        ),
        DivergenceOp::Tv { chi2 } => {
            if !(chi2 >= 0.0) {
                return Err(CliError::Usage(format!("--chi2 must be >= 0, got {chi2}")));
            }
            emit_json(out, &json!({ "op": "tv", "chi2": chi2, "tv_upper": tv_upper_from_chi2(chi2) }))
        }
        DivergenceOp::Permutation { p, reps } => {
            let e = permutation_mgf(p, reps, seed)?;
            emit_json(
                out,
                &json!({ "op": "permutation_mgf", "p": p, "value": e.value, "se": e.std_error, "method": e.method.label() }),
            )
        }
        DivergenceOp::SStar { p, k, c } => {
            if k == 0 || k > p {
                return Err(CliError::Usage(format!("need 1 <= k <= p, got k={k}, p={p}")));
            }
            let grid: Vec<usize> = (k..=p).collect();
            let best = optimize_s_star(p, k, &grid, c)?;
            emit_json(
                out,
                &json!({ "op": "s_star", "p": p, "k": k, "c": c, "s_star": best.s_star, "m_star": best.m_star }),
            )
        }
    }
}

fn calibrate(out: Option<&Path>, seed: RngSeed, what: &CalibrateOp) -> Result<(), CliError> {
    match *what {
        CalibrateOp::CovScan(ref a) => {
            let cfg = ScanConfig::new(
                a.m,
                ScanStrategy::Auto {
                    restarts: a.restarts,
                    iters: a.iters,
                },
            )
            .principal();
            let t = calibrate_cov_scan(a.p, a.n, &cfg, a.epsilon, a.reps, seed)?;
            emit_json(
                out,
                &json!({
                    "op": "calibrate_cov_scan", "p": a.p, "n": a.n, "m": a.m,
                    "epsilon": a.epsilon, "reps": a.reps, "seed": seed.seed, "t": t,
                }),
            )
        }
        CalibrateOp::Witness {
            p,
            m,
            k,
            ref candidates,
            draws,
            restarts,
            target,
        } => {
            let c = calibrate_witness_constant(p, m, k, candidates, draws, restarts, target, seed)?;
            emit_json(out, &serde_json::to_value(&c).expect("serializable"))
        }
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    if let Some(n) = thread_count(cli.threads)? {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))?;
    }
    let out = cli.out.as_deref();
    let seed = RngSeed::new(cli.seed.unwrap_or(0));
    match &cli.command {
        Command::Simulate { config, plot } => simulate(cli, config, plot.as_deref()),
        Command::Boundary { p, k } => boundary(out, *p, k),
        Command::Witness {
            input,
            k,
            c_w,
            restarts,
        } => {
            let m = sparsedet::io::read_matrix(input).map_err(input_err)?;
            let report = find_witness(&m, *k, *c_w, *restarts, seed)?;
            emit_json(out, &serde_json::to_value(&report).expect("serializable"))
        }
        Command::Divergence { op } => divergence(out, seed, op),
        Command::Calibrate { what } => calibrate(out, seed, what),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
