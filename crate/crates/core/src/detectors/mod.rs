//! Hypothesis tests for a sparse signal in the additive Gaussian model and
//! in the spiked covariance model.
//!
//! Every test returns a [`TestReport`] that records the statistics it
//! computed and the thresholds they were compared to, so that the decision
//! can be re-derived from the report alone.

mod covariance;
mod scan;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::matrix::{DenseMatrix, IndexSet};

pub use covariance::{
    calibrate_cov_scan, cov_chi2_scan_test, cov_threshold_tau, cov_threshold_test,
    cov_threshold_test_with_cut, q_statistic,
    sample_covariance, CovScanThreshold, DEFAULT_C_N, DEFAULT_C_TAU,
};
pub use scan::{binomial, scan_statistic, ScanConfig, ScanResult, ScanStrategy, DEFAULT_ENUMERATION_CAP};

/// Multiplier on `kτ` for the thresholding cutoff. On the event
/// `max|Z_ij| < τ` the thresholded estimate is within `kτ` of the signal in
/// spectral norm, so a cut at `kτ` separates `0` from any `λ ≥ 2kτ`.
pub const DEFAULT_CUT_FACTOR: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Reject,
    Accept,
}

impl Decision {
    pub fn is_reject(self) -> bool {
        self == Decision::Reject
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Decision::Reject => "reject",
            Decision::Accept => "accept",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Chi2,
    Scan,
    Threshold,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Chi2 => "chi2",
            Stage::Scan => "scan",
            Stage::Threshold => "threshold",
        }
    }
}

/// Statistic names paired with the threshold each one is compared to.
pub const STAT_THRESHOLD_PAIRS: [(&str, &str, Stage); 4] = [
    ("frob_chi2", "s", Stage::Chi2),
    ("q_stat", "s", Stage::Chi2),
    ("scan_value", "t", Stage::Scan),
    ("thresholded_spectral", "lambda_cut", Stage::Threshold),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub decision: Decision,
    pub statistics: BTreeMap<String, f64>,
    pub thresholds: BTreeMap<String, f64>,
    pub fired_stage: Option<Stage>,
    pub witness: Option<(IndexSet, IndexSet)>,
    /// Whether the scan value is an exact maximum; absent when no scan ran.
    pub scan_exact: Option<bool>,
    pub warnings: Vec<String>,
}

impl TestReport {
    fn new() -> Self {
        Self {
            decision: Decision::Accept,
            statistics: BTreeMap::new(),
            thresholds: BTreeMap::new(),
            fired_stage: None,
            witness: None,
            scan_exact: None,
            warnings: Vec::new(),
        }
    }

    /// Recomputes the decision from the recorded statistics: reject iff some
    /// statistic reaches its threshold.
    pub fn rederive(&self) -> (Decision, Option<Stage>) {
        for (stat, thr, stage) in STAT_THRESHOLD_PAIRS {
            if let (Some(s), Some(t)) = (self.statistics.get(stat), self.thresholds.get(thr)) {
                if s >= t {
                    return (Decision::Reject, Some(stage));
                }
            }
        }
        (Decision::Accept, None)
    }

    fn finish(mut self) -> Self {
        let (d, s) = self.rederive();
        self.decision = d;
        self.fired_stage = s;
        self
    }

    pub fn stat(&self, name: &str) -> Option<f64> {
        self.statistics.get(name).copied()
    }

    pub fn threshold(&self, name: &str) -> Option<f64> {
        self.thresholds.get(name).copied()
    }

    /// Flat record with the stable keys `decision`, `stat.*`, `thr.*`,
    /// `fired_stage`, `scan.I`, `scan.J`.
    pub fn to_record(&self) -> BTreeMap<String, String> {
        let mut out = BTreeMap::new();
        out.insert("decision".into(), self.decision.as_str().into());
        for (k, v) in &self.statistics {
            out.insert(format!("stat.{k}"), v.to_string());
        }
        for (k, v) in &self.thresholds {
            out.insert(format!("thr.{k}"), v.to_string());
        }
        out.insert(
            "fired_stage".into(),
            self.fired_stage.map_or(String::new(), |s| s.as_str().into()),
        );
        let join = |s: &IndexSet| s.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(" ");
        let (i, j) = self
            .witness
            .as_ref()
            .map_or((String::new(), String::new()), |(i, j)| (join(i), join(j)));
        out.insert("scan.I".into(), i);
        out.insert("scan.J".into(), j);
        out
    }

    pub fn to_json(&self) -> serde_json::Value {
        let mut map = serde_json::Map::new();
        map.insert("decision".into(), self.decision.as_str().into());
        for (k, v) in &self.statistics {
            map.insert(format!("stat.{k}"), json_number(*v));
        }
        for (k, v) in &self.thresholds {
            map.insert(format!("thr.{k}"), json_number(*v));
        }
        map.insert(
            "fired_stage".into(),
            self.fired_stage.map_or(serde_json::Value::Null, |s| s.as_str().into()),
        );
        let (i, j) = match &self.witness {
            Some((i, j)) => (serde_json::json!(i.as_slice()), serde_json::json!(j.as_slice())),
            None => (serde_json::Value::Null, serde_json::Value::Null),
        };
        map.insert("scan.I".into(), i);
        map.insert("scan.J".into(), j);
        serde_json::Value::Object(map)
    }
}

pub(crate) fn json_number(v: f64) -> serde_json::Value {
    serde_json::Number::from_f64(v).map_or_else(|| v.to_string().into(), serde_json::Value::Number)
}

fn check_epsilon(epsilon: f64, upper: f64) -> Result<()> {
    if epsilon > 0.0 && epsilon < upper {
        Ok(())
    } else {
        Err(invalid(format!("epsilon must lie in (0, {upper}), got {epsilon}")))
    }
}

fn check_k(k: usize, p: usize) -> Result<()> {
    if k >= 1 && k <= p {
        Ok(())
    } else {
        Err(invalid(format!("k must lie in [1, {p}], got {k}")))
    }
}

/// `τ = sqrt(2 ln(4p²/ε))`.
pub fn threshold_tau(p: usize, epsilon: f64) -> f64 {
    let p = p as f64;
    (2.0 * (4.0 * p * p / epsilon).ln()).sqrt()
}

/// `s = 2 ln(1/ε) + 2p sqrt(ln(1/ε))`.
pub fn chi2_threshold_s(p: usize, epsilon: f64) -> f64 {
    let l = (1.0 / epsilon).ln();
    2.0 * l + 2.0 * p as f64 * l.sqrt()
}

/// `t = 2√m + 4 sqrt(m ln(ep/m))`.
pub fn scan_threshold_t(p: usize, m: usize) -> f64 {
    let (p, m) = (p as f64, m as f64);
    2.0 * m.sqrt() + 4.0 * (m * (std::f64::consts::E * p / m).ln()).sqrt()
}

/// `m = ceil(c · sqrt(kp / ln(ep/k)))`, clamped to `[1, p]`.
pub fn default_scan_size(p: usize, k: usize, c_scan: f64) -> usize {
    let (pf, kf) = (p as f64, k as f64);
    let m = (c_scan * (kf * pf / (std::f64::consts::E * pf / kf).ln()).sqrt()).ceil();
    (m.max(1.0) as usize).min(p)
}

/// Entrywise hard thresholding `X_ij · 1{|X_ij| ≥ τ}`.
pub fn threshold_estimate(x: &DenseMatrix, tau: f64) -> Result<DenseMatrix> {
    if !(tau >= 0.0) {
        return Err(invalid(format!("threshold must be >= 0, got {tau}")));
    }
    let data = x
        .as_slice()
        .iter()
        .map(|&v| if v.abs() >= tau { v } else { 0.0 })
        .collect();
    Ok(DenseMatrix::from_parts(x.rows(), x.cols(), data))
}

/// Thresholding test with the default cutoff `kτ`.
pub fn mean_threshold_test(x: &DenseMatrix, k: usize, epsilon: f64) -> Result<TestReport> {
    mean_threshold_test_with_cut(x, k, epsilon, DEFAULT_CUT_FACTOR)
}

/// Thresholding test rejecting iff `‖threshold_estimate(X, τ)‖₂ ≥ cut_factor · kτ`.
pub fn mean_threshold_test_with_cut(
    x: &DenseMatrix,
    k: usize,
    epsilon: f64,
    cut_factor: f64,
) -> Result<TestReport> {
    if !x.is_square() {
        return Err(invalid("mean model data must be square"));
    }
    let p = x.rows();
    check_epsilon(epsilon, 1.0)?;
    check_k(k, p)?;
    if !(cut_factor > 0.0) {
        return Err(invalid("cut factor must be positive"));
    }
    let tau = threshold_tau(p, epsilon);
    let stat = threshold_estimate(x, tau)?.opnorm();
    let mut r = TestReport::new();
    r.statistics.insert("thresholded_spectral".into(), stat);
    r.thresholds.insert("tau".into(), tau);
    r.thresholds.insert("lambda_cut".into(), cut_factor * k as f64 * tau);
    Ok(r.finish())
}

/// `‖X‖_F² − p²`.
pub fn frob_chi2_statistic(x: &DenseMatrix) -> f64 {
    let p = x.rows() as f64;
    x.frobenius_norm_sq() - p * p
}

/// Two-stage test: the Frobenius chi-square stage, then the scan stage. The
/// scan is skipped when the first stage already rejects.
pub fn mean_chi2_scan_test(x: &DenseMatrix, k: usize, epsilon: f64, cfg: &ScanConfig) -> Result<TestReport> {
    if !x.is_square() {
        return Err(invalid("mean model data must be square"));
    }
    let p = x.rows();
    check_epsilon(epsilon, 0.5)?;
    check_k(k, p)?;
    cfg.validate(p, p)?;
    let s = chi2_threshold_s(p, epsilon);
    let t = scan_threshold_t(p, cfg.m);
    let mut r = TestReport::new();
    r.thresholds.insert("s".into(), s);
    r.thresholds.insert("t".into(), t);
    r.thresholds.insert("m".into(), cfg.m as f64);
    let chi2 = frob_chi2_statistic(x);
    r.statistics.insert("frob_chi2".into(), chi2);
    if chi2 < s {
        let scan = scan_statistic(x, cfg)?;
        r.statistics.insert("scan_value".into(), scan.value);
        r.scan_exact = Some(scan.exact);
        r.witness = Some((scan.rows, scan.cols));
    }
    Ok(r.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::priors::gaussian_matrix;
    use crate::rng::RngSeed;

    #[test]
    fn threshold_formulas() {
        assert!((threshold_tau(100, 0.05) - 5.2139).abs() < 1e-4);
        assert!((chi2_threshold_s(100, 0.1) - 308.09).abs() < 1e-2);
        assert!((scan_threshold_t(100, 10) - 29.31).abs() < 1e-2);
        assert_eq!(default_scan_size(100, 2, 1.0), 7);
    }

    #[test]
    fn threshold_estimate_examples() {
        let x = DenseMatrix::from_rows(&[vec![1.0, -3.0], vec![2.0, 0.0]]).unwrap();
        assert_eq!(threshold_estimate(&x, 0.0).unwrap(), x);
        assert_eq!(threshold_estimate(&x, 3.5).unwrap(), DenseMatrix::zeros(2, 2));
        assert_eq!(
            threshold_estimate(&x, 2.0).unwrap().to_rows(),
            vec![vec![0.0, -3.0], vec![2.0, 0.0]]
        );
        assert!(threshold_estimate(&x, -1.0).is_err());
    }

    #[test]
    fn threshold_test_examples() {
        let r = mean_threshold_test(&DenseMatrix::zeros(100, 100), 2, 0.05).unwrap();
        assert_eq!(r.decision, Decision::Accept);
        assert_eq!(r.stat("thresholded_spectral"), Some(0.0));
        assert_eq!(r.fired_stage, None);

        let mut x = DenseMatrix::zeros(100, 100);
        x.set(3, 7, 100.0);
        for cut in [1.0, 2.0] {
            let r = mean_threshold_test_with_cut(&x, 1, 0.05, cut).unwrap();
            assert_eq!(r.decision, Decision::Reject);
            assert_eq!(r.fired_stage, Some(Stage::Threshold));
        }
        let r = mean_threshold_test_with_cut(&x, 1, 0.05, 2.0).unwrap();
        assert!((r.threshold("lambda_cut").unwrap() - 10.4278).abs() < 1e-3);
        assert!(mean_threshold_test(&x, 1, 1.0).is_err());
        assert!(mean_threshold_test(&x, 0, 0.1).is_err());
    }

    #[test]
    fn frob_statistic_examples() {
        assert_eq!(frob_chi2_statistic(&DenseMatrix::zeros(10, 10)), -100.0);
        assert_eq!(frob_chi2_statistic(&DenseMatrix::identity(10)), -90.0);
    }

    #[test]
    fn chi2_scan_accepts_zero() {
        let x = DenseMatrix::zeros(20, 20);
        let cfg = ScanConfig::random_restarts(3, 4, 10);
        let r = mean_chi2_scan_test(&x, 2, 0.1, &cfg).unwrap();
        assert_eq!(r.decision, Decision::Accept);
        assert_eq!(r.stat("scan_value"), Some(0.0));
        assert!(mean_chi2_scan_test(&x, 2, 0.5, &cfg).is_err());
    }

    #[test]
    fn chi2_stage_short_circuits() {
        let x = DenseMatrix::from_fn(10, 10, |_, _| 10.0);
        let r = mean_chi2_scan_test(&x, 2, 0.1, &ScanConfig::exhaustive(2)).unwrap();
        assert_eq!(r.fired_stage, Some(Stage::Chi2));
        assert!(r.stat("scan_value").is_none());
    }

    #[test]
    fn record_has_stable_keys() {
        let x = gaussian_matrix(10, 10, RngSeed::new(5));
        let r = mean_chi2_scan_test(&x, 2, 0.1, &ScanConfig::exhaustive(2)).unwrap();
        let rec = r.to_record();
        for key in ["decision", "stat.frob_chi2", "stat.scan_value", "thr.s", "thr.t", "thr.m", "fired_stage", "scan.I", "scan.J"] {
            assert!(rec.contains_key(key), "{key}");
        }
        assert_eq!(r.rederive().0, r.decision);
        let js = r.to_json();
        assert_eq!(js["decision"], r.decision.as_str());
    }
}
