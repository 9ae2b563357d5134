//! Tests on `n` centered samples for a sparse perturbation of the identity
//! covariance.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{chi2_threshold_s, check_epsilon, check_k, scan_statistic, scan_threshold_t, threshold_estimate};
use super::{ScanConfig, TestReport, DEFAULT_CUT_FACTOR};
use crate::error::{invalid, Result};
use crate::matrix::DenseMatrix;
use crate::priors::gaussian_matrix;
use crate::rng::RngSeed;

pub const DEFAULT_C_TAU: f64 = 8.0;
pub const DEFAULT_C_N: f64 = 4.0;

/// `S = XᵀX / n` without centering.
pub fn sample_covariance(data: &DenseMatrix) -> Result<DenseMatrix> {
    let n = data.rows();
    if n == 0 {
        return Err(invalid("sample covariance needs at least one sample"));
    }
    Ok(data.gram().scale(1.0 / n as f64))
}

/// `τ = sqrt(c_tau · ln(p/ε) / n)`.
pub fn cov_threshold_tau(p: usize, n: usize, epsilon: f64, c_tau: f64) -> f64 {
    (c_tau * (p as f64 / epsilon).ln() / n as f64).sqrt()
}

pub fn cov_threshold_test(
    data: &DenseMatrix,
    k: usize,
    epsilon: f64,
    c_tau: f64,
    c_n: f64,
) -> Result<TestReport> {
    cov_threshold_test_with_cut(data, k, epsilon, c_tau, c_n, DEFAULT_CUT_FACTOR)
}

/// Thresholds `S − I` (diagonal included) at `τ` and rejects iff the
/// spectral norm of the result is at least `cut_factor · kτ`.
pub fn cov_threshold_test_with_cut(
    data: &DenseMatrix,
    k: usize,
    epsilon: f64,
    c_tau: f64,
    c_n: f64,
    cut_factor: f64,
) -> Result<TestReport> {
    let (n, p) = data.shape();
    check_epsilon(epsilon, 1.0)?;
    check_k(k, p)?;
    if !(c_tau > 0.0) || !(cut_factor > 0.0) {
        return Err(invalid("c_tau and cut factor must be positive"));
    }
    let s = sample_covariance(data)?;
    let diff = s.sub(&DenseMatrix::identity(p))?;
    let tau = cov_threshold_tau(p, n, epsilon, c_tau);
    let stat = threshold_estimate(&diff, tau)?.opnorm();

    let mut r = TestReport::new();
    if (n as f64) < c_n * (p as f64).ln() {
        r.warnings.push(format!(
            "sample size n={n} is below c_n·ln p = {:.3}",
            c_n * (p as f64).ln()
        ));
    }
    r.statistics.insert("thresholded_spectral".into(), stat);
    r.thresholds.insert("tau".into(), tau);
    r.thresholds.insert("lambda_cut".into(), cut_factor * k as f64 * tau);
    Ok(r.finish())
}

/// U-statistic estimate of `‖Σ − I‖_F²`, computed through Gram identities in
/// `O(np²)`.
pub fn q_statistic(data: &DenseMatrix) -> Result<f64> {
    let (n, p) = data.shape();
    if n < 2 {
        return Err(invalid("Q statistic needs at least two samples"));
    }
    let r = data.row_norms_sq();
    let sum_r: f64 = r.iter().sum();
    let sum_r2: f64 = r.iter().map(|x| x * x).sum();
    let cross = (data.gram().frobenius_norm_sq() - sum_r2) / 2.0;
    let pairs = (n * (n - 1) / 2) as f64;
    Ok(p as f64 + (cross - (n - 1) as f64 * sum_r) / pairs)
}

/// Where the scan stage of the covariance test takes its threshold from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CovScanThreshold {
    /// `2√m + 4 sqrt(m ln(ep/m))`, the Gaussian-scale value.
    Formula,
    /// A null-calibrated value, typically from [`calibrate_cov_scan`].
    Calibrated { t: f64 },
}

pub fn cov_chi2_scan_test(
    data: &DenseMatrix,
    k: usize,
    epsilon: f64,
    cfg: &ScanConfig,
    threshold: CovScanThreshold,
) -> Result<TestReport> {
    let p = data.cols();
    check_epsilon(epsilon, 0.5)?;
    check_k(k, p)?;
    if !cfg.principal_only {
        return Err(invalid("covariance scan must be principal"));
    }
    cfg.validate(p, p)?;
    let s_mat = sample_covariance(data)?;
    let q = q_statistic(data)?;
    let s = chi2_threshold_s(p, epsilon);
    let t = match threshold {
        CovScanThreshold::Formula => scan_threshold_t(p, cfg.m),
        CovScanThreshold::Calibrated { t } => t,
    };

    let mut r = TestReport::new();
    r.thresholds.insert("s".into(), s);
    r.thresholds.insert("t".into(), t);
    r.thresholds.insert("m".into(), cfg.m as f64);
    r.statistics.insert("q_stat".into(), q);
    if q < s {
        let scan = scan_statistic(&s_mat, cfg)?;
        r.statistics.insert("scan_value".into(), scan.value);
        r.scan_exact = Some(scan.exact);
        r.witness = Some((scan.rows, scan.cols));
    }
    Ok(r.finish())
}

/// Empirical `(1 − ε/2)`-quantile of the principal scan of `S` under
/// `Σ = I`, over `reps` null data sets of size `n × p`. Replicate `r` draws
/// its data from `seed.derive([0, r])` and seeds its scan with
/// `seed.derive([1, r])`.
pub fn calibrate_cov_scan(
    p: usize,
    n: usize,
    cfg: &ScanConfig,
    epsilon: f64,
    reps: usize,
    seed: RngSeed,
) -> Result<f64> {
    check_epsilon(epsilon, 1.0)?;
    if reps == 0 || n == 0 {
        return Err(invalid("calibration needs reps >= 1 and n >= 1"));
    }
    if !cfg.principal_only {
        return Err(invalid("covariance scan must be principal"));
    }
    cfg.validate(p, p)?;
    let mut values = (0..reps)
        .into_par_iter()
        .map(|r| {
            let data = gaussian_matrix(n, p, seed.derive(&[0, r as u64]));
            let s = sample_covariance(&data)?;
            let c = cfg.clone().with_seed(seed.derive(&[1, r as u64]));
            Ok(scan_statistic(&s, &c)?.value)
        })
        .collect::<Result<Vec<f64>>>()?;
    values.sort_by(f64::total_cmp);
    let idx = ((1.0 - epsilon / 2.0) * reps as f64).ceil() as usize;
    Ok(values[idx.clamp(1, reps) - 1])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detectors::Decision;

    #[test]
    fn sample_covariance_examples() {
        let d = DenseMatrix::from_rows(&[vec![1.0, 0.0]]).unwrap();
        assert_eq!(sample_covariance(&d).unwrap().to_rows(), vec![vec![1.0, 0.0], vec![0.0, 0.0]]);
        assert!(sample_covariance(&DenseMatrix::zeros(0, 3)).is_err());
        let a = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, -1.0], vec![0.5, 0.5]]).unwrap();
        let b = DenseMatrix::from_rows(&[vec![0.5, 0.5], vec![1.0, 2.0], vec![3.0, -1.0]]).unwrap();
        assert_eq!(sample_covariance(&a).unwrap(), sample_covariance(&b).unwrap());
    }

    #[test]
    fn q_examples() {
        let same = DenseMatrix::from_rows(&[vec![1.0, 0.0], vec![1.0, 0.0]]).unwrap();
        assert!((q_statistic(&same).unwrap() - 1.0).abs() < 1e-15);
        let orth = DenseMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert!(q_statistic(&orth).unwrap().abs() < 1e-15);
        assert!(q_statistic(&DenseMatrix::zeros(1, 2)).is_err());
        assert_eq!(q_statistic(&DenseMatrix::zeros(5, 7)).unwrap(), 7.0);
    }

    #[test]
    fn threshold_test_accepts_exact_identity() {
        // One sample √p·e_i per coordinate gives S = I exactly.
        let p = 4;
        let mut rows = Vec::new();
        for i in 0..p {
            let mut r = vec![0.0; p];
            r[i] = (p as f64).sqrt();
            rows.push(r);
        }
        let d = DenseMatrix::from_rows(&rows).unwrap();
        assert_eq!(sample_covariance(&d).unwrap(), DenseMatrix::identity(p));
        let r = cov_threshold_test(&d, 1, 0.1, DEFAULT_C_TAU, DEFAULT_C_N).unwrap();
        assert_eq!(r.decision, Decision::Accept);
        assert_eq!(r.stat("thresholded_spectral"), Some(0.0));
        assert_eq!(r.warnings.len(), 1);
    }

    #[test]
    fn cov_scan_requires_principal() {
        let d = gaussian_matrix(20, 6, RngSeed::new(1));
        let cfg = ScanConfig::exhaustive(2);
        assert!(cov_chi2_scan_test(&d, 2, 0.1, &cfg, CovScanThreshold::Formula).is_err());
        let r = cov_chi2_scan_test(&d, 2, 0.1, &cfg.principal(), CovScanThreshold::Formula).unwrap();
        assert!(r.stat("scan_value").is_some());
        assert_eq!(r.threshold("t"), Some(scan_threshold_t(6, 2)));
    }

    #[test]
    fn zero_rows_give_q_equal_to_p() {
        let d = DenseMatrix::zeros(10, 6);
        let cfg = ScanConfig::exhaustive(2).principal();
        let r = cov_chi2_scan_test(&d, 2, 0.1, &cfg, CovScanThreshold::Formula).unwrap();
        assert_eq!(r.stat("q_stat"), Some(6.0));
        assert_eq!(r.threshold("s"), Some(chi2_threshold_s(6, 0.1)));
        assert_eq!(r.decision, Decision::Accept);
    }

    #[test]
    fn calibration_is_deterministic_and_ordered() {
        let cfg = ScanConfig::exhaustive(2).principal();
        let a = calibrate_cov_scan(8, 40, &cfg, 0.1, 30, RngSeed::new(3)).unwrap();
        let b = calibrate_cov_scan(8, 40, &cfg, 0.1, 30, RngSeed::new(3)).unwrap();
        assert_eq!(a, b);
        let lo = calibrate_cov_scan(8, 40, &cfg, 0.9, 30, RngSeed::new(3)).unwrap();
        assert!(lo <= a);
        assert!(a > 1.0);
    }
}
