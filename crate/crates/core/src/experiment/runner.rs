//! Monte Carlo estimation of Type-I and Type-II errors over a signal grid.
//!
//! Replicate `r` draws its noise from `seed.derive([0, r])`, its signal from
//! `seed.derive([1, r])` and seeds any randomized scan with
//! `seed.derive([2, r])`. The same streams are reused at every grid level and
//! under the null, so the estimated error curves use common random numbers
//! and the table does not depend on the number of threads.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Model, SignalConfig, TestSpec};
use crate::detectors::{
    calibrate_cov_scan, cov_chi2_scan_test, cov_threshold_test_with_cut, mean_chi2_scan_test,
    mean_threshold_test_with_cut, CovScanThreshold, ScanConfig,
};
use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::priors::{
    covariance_factor, gaussian_matrix, sample_with_factor, symmetrize, SignalKind, SignalSpec,
};
use crate::rng::RngSeed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseRow {
    /// `ln k / ln p`.
    pub alpha: f64,
    /// `ln λ / ln p`.
    pub beta: f64,
    pub p: usize,
    pub k: usize,
    pub lambda: f64,
    pub test: String,
    pub type1_hat: f64,
    pub type2_hat: f64,
    /// Binomial standard error of `type2_hat`.
    pub se: f64,
    pub replicates: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTable {
    pub rows: Vec<PhaseRow>,
}

impl PhaseTable {
    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Rows of one test, in grid order.
    pub fn rows_for<'a>(&'a self, test: &'a str) -> impl Iterator<Item = &'a PhaseRow> + 'a {
        self.rows.iter().filter(move |r| r.test == test)
    }

    /// Test labels in table order, without repeats.
    pub fn tests(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in &self.rows {
            if out.last() != Some(&r.test) && !out.contains(&r.test) {
                out.push(r.test.clone());
            }
        }
        out
    }
}

/// A test with its per-run constants resolved.
enum Prepared {
    Threshold { cut: f64 },
    Chi2Scan { scan: ScanConfig },
    CovThreshold { c_tau: f64, c_n: f64, cut: f64 },
    CovChi2Scan { scan: ScanConfig, threshold: CovScanThreshold },
}

impl Prepared {
    fn decide(&self, cfg: &ExperimentConfig, data: &DenseMatrix, scan_seed: RngSeed) -> Result<bool> {
        let (k, eps) = (cfg.k, cfg.epsilon);
        let report = match self {
            Prepared::Threshold { cut } => mean_threshold_test_with_cut(data, k, eps, *cut)?,
            Prepared::Chi2Scan { scan } => {
                mean_chi2_scan_test(data, k, eps, &scan.clone().with_seed(scan_seed))?
            }
            Prepared::CovThreshold { c_tau, c_n, cut } => {
                cov_threshold_test_with_cut(data, k, eps, *c_tau, *c_n, *cut)?
            }
            Prepared::CovChi2Scan { scan, threshold } => {
                cov_chi2_scan_test(data, k, eps, &scan.clone().with_seed(scan_seed), *threshold)?
            }
        };
        Ok(report.decision.is_reject())
    }
}

fn prepare(cfg: &ExperimentConfig, base: RngSeed) -> Result<Vec<Prepared>> {
    cfg.tests
        .iter()
        .enumerate()
        .map(|(i, t)| {
            Ok(match t {
                TestSpec::Threshold { cut_factor, .. } => Prepared::Threshold { cut: *cut_factor },
                TestSpec::Chi2Scan { strategy, .. } => Prepared::Chi2Scan {
                    scan: ScanConfig::new(t.scan_size(cfg.p, cfg.k).expect("scan test"), *strategy),
                },
                TestSpec::CovThreshold { c_tau, c_n, cut_factor, .. } => Prepared::CovThreshold {
                    c_tau: *c_tau,
                    c_n: *c_n,
                    cut: *cut_factor,
                },
                TestSpec::CovChi2Scan { strategy, calibration_reps, .. } => {
                    let scan = ScanConfig::new(t.scan_size(cfg.p, cfg.k).expect("scan test"), *strategy).principal();
                    let threshold = if *calibration_reps == 0 {
                        CovScanThreshold::Formula
                    } else {
                        let n = cfg.n.expect("validated covariance config");
                        let seed = base.derive(&[3, i as u64]);
                        let t = calibrate_cov_scan(cfg.p, n, &scan, cfg.epsilon, *calibration_reps, seed)?;
                        CovScanThreshold::Calibrated { t }
                    };
                    Prepared::CovChi2Scan { scan, threshold }
                }
            })
        })
        .collect()
}

/// Signal at unit scale, on the signal dimension.
fn base_signal(cfg: &ExperimentConfig) -> Result<SignalSpec> {
    let kind = match cfg.signal {
        SignalConfig::Block => SignalKind::Block { k: cfg.k, theta: 0.0 },
        SignalConfig::LeastFavorable { .. } => SignalKind::LeastFavorable {
            m: cfg.prior_block_size().expect("least-favorable"),
            k: cfg.k,
            t: 0.0,
        },
        SignalConfig::Permutation => SignalKind::Permutation,
        SignalConfig::Zero => SignalKind::Zero,
    };
    SignalSpec::new(cfg.signal_dim(), kind)
}

/// Data generator for one grid level, or the null when `level` is `None`.
struct Level {
    signal: Option<(SignalSpec, f64)>,
    /// Covariance factor when it does not depend on the replicate.
    fixed_factor: Option<DenseMatrix>,
}

impl Level {
    fn new(cfg: &ExperimentConfig, base: &SignalSpec, lambda: Option<f64>) -> Result<Self> {
        let signal = lambda.map(|l| base.at_level(l));
        let fixed_factor = match (&signal, cfg.model) {
            (Some((s, f)), Model::Covariance) if s.is_deterministic() => {
                Some(covariance_factor(&perturbed_covariance(cfg, s, *f, RngSeed::new(0))?)?)
            }
            _ => None,
        };
        Ok(Self { signal, fixed_factor })
    }

    fn data(&self, cfg: &ExperimentConfig, base: RngSeed, r: u64) -> Result<DenseMatrix> {
        let noise_seed = base.derive(&[0, r]);
        let signal_seed = base.derive(&[1, r]);
        match cfg.model {
            Model::Mean => {
                let noise = gaussian_matrix(cfg.p, cfg.p, noise_seed);
                match &self.signal {
                    None => Ok(noise),
                    Some((s, f)) => s.draw(signal_seed)?.scale(*f).add(&noise),
                }
            }
            Model::Covariance => {
                let n = cfg.n.expect("validated covariance config");
                match (&self.signal, &self.fixed_factor) {
                    (None, _) => Ok(gaussian_matrix(n, cfg.p, noise_seed)),
                    (Some(_), Some(l)) => Ok(sample_with_factor(l, n, noise_seed)),
                    (Some((s, f)), None) => {
                        let sigma = perturbed_covariance(cfg, s, *f, signal_seed)?;
                        Ok(sample_with_factor(&covariance_factor(&sigma)?, n, noise_seed))
                    }
                }
            }
        }
    }
}

/// `Σ = I + perturbation`; the least-favorable draw is symmetrized so it
/// lives on `p = 2·(signal dimension)`.
fn perturbed_covariance(cfg: &ExperimentConfig, signal: &SignalSpec, factor: f64, seed: RngSeed) -> Result<DenseMatrix> {
    let m = signal.draw(seed)?.scale(factor);
    let pert = match cfg.signal {
        SignalConfig::LeastFavorable { .. } => symmetrize(&m)?,
        _ => m,
    };
    DenseMatrix::identity(cfg.p).add(&pert)
}

/// Runs the experiment on the current rayon pool.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<PhaseTable> {
    cfg.validate()?;
    let base = RngSeed::new(cfg.seed);
    let tests = prepare(cfg, base)?;
    let signal = base_signal(cfg)?;
    let lambdas = cfg.levels();
    let levels = std::iter::once(None)
        .chain(lambdas.iter().map(|&l| Some(l)))
        .map(|l| Level::new(cfg, &signal, l))
        .collect::<Result<Vec<_>>>()?;

    let reps = cfg.replicates;
    let jobs: Vec<(usize, usize)> = (0..levels.len()).flat_map(|li| (0..reps).map(move |r| (li, r))).collect();
    // rejections[level][replicate][test]
    let flat = jobs
        .into_par_iter()
        .map(|(li, r)| {
            let data = levels[li].data(cfg, base, r as u64)?;
            let scan_seed = base.derive(&[2, r as u64]);
            tests.iter().map(|t| t.decide(cfg, &data, scan_seed)).collect::<Result<Vec<bool>>>()
        })
        .collect::<Result<Vec<Vec<bool>>>>()?;

    let rejections = |li: usize, ti: usize| flat[li * reps..(li + 1) * reps].iter().filter(|d| d[ti]).count();
    let ln_p = (cfg.p as f64).ln();
    let alpha = (cfg.k as f64).ln() / ln_p;
    let mut rows = Vec::with_capacity(tests.len() * lambdas.len());
    for (ti, test_cfg) in cfg.tests.iter().enumerate() {
        let type1 = rejections(0, ti) as f64 / reps as f64;
        for (gi, &lambda) in lambdas.iter().enumerate() {
            let type2 = (reps - rejections(gi + 1, ti)) as f64 / reps as f64;
            rows.push(PhaseRow {
                alpha,
                beta: lambda.ln() / ln_p,
                p: cfg.p,
                k: cfg.k,
                lambda,
                test: test_cfg.label(),
                type1_hat: type1,
                type2_hat: type2,
                se: (type2 * (1.0 - type2) / reps as f64).sqrt(),
                replicates: reps,
                seed: cfg.seed,
            });
        }
    }
    rows.sort_by(|a, b| a.test.cmp(&b.test).then(a.lambda.total_cmp(&b.lambda)));
    Ok(PhaseTable { rows })
}

/// Runs the experiment on a dedicated pool of `threads` workers.
pub fn run_experiment_with_threads(cfg: &ExperimentConfig, threads: usize) -> Result<PhaseTable> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("field `threads`: {e}")))?;
    pool.install(|| run_experiment(cfg))
}
