//! Chi-square divergences of Gaussian mixtures against the pure-noise null,
//! their conversion to total variation, and the fixed-point MGF of a random
//! permutation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::mgf::{hypergeometric_log_pmf, ln_binomial, log_sum_exp, MGF_MAX_M};
use crate::error::{invalid, Error, Result};
use crate::linalg;
use crate::matrix::DenseMatrix;
use crate::priors::{random_permutation, SignalSpec};
use crate::rng::RngSeed;

/// Largest exponent whose `exp` is finite in `f64`.
const MAX_EXPONENT: f64 = 709.78;

/// Largest `p` for which the permutation MGF is enumerated exactly.
pub const PERMUTATION_EXACT_MAX_P: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Chi2Method {
    ExactEnumeration,
    MonteCarlo { reps: usize },
}

impl Chi2Method {
    pub fn label(self) -> String {
        match self {
            Chi2Method::ExactEnumeration => "exact_enumeration".into(),
            Chi2Method::MonteCarlo { reps } => format!("monte_carlo({reps})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Chi2Estimate {
    pub value: f64,
    pub std_error: f64,
    pub method: Chi2Method,
    /// Set when some sampled exponent was too large for `f64`; `value` is
    /// then `+∞`.
    pub overflow: bool,
}

/// Mean of `values` with its jackknife standard error.
fn mean_with_jackknife(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let total: f64 = values.iter().sum();
    let mean = total / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let loo: Vec<f64> = values.iter().map(|v| (total - v) / (n - 1.0)).collect();
    let loo_mean = loo.iter().sum::<f64>() / n;
    let ss: f64 = loo.iter().map(|x| (x - loo_mean) * (x - loo_mean)).sum();
    (mean, ((n - 1.0) / n * ss).sqrt())
}

fn mc_from_exponents(exponents: &[f64], shift: f64, method: Chi2Method) -> Chi2Estimate {
    if exponents.iter().any(|&x| x > MAX_EXPONENT) {
        return Chi2Estimate {
            value: f64::INFINITY,
            std_error: f64::INFINITY,
            method,
            overflow: true,
        };
    }
    let vals: Vec<f64> = exponents.iter().map(|x| x.exp() - shift).collect();
    let (value, std_error) = mean_with_jackknife(&vals);
    Chi2Estimate {
        value,
        std_error,
        method,
        overflow: false,
    }
}

/// Monte Carlo estimate of `E[exp(⟨M, M̃⟩)] − 1` over independent draws
/// `M, M̃` from `signal`. Replicate `r` draws from `seed.derive([r, 0])` and
/// `seed.derive([r, 1])`.
pub fn chi2_gaussian_mixture_mc(signal: &SignalSpec, reps: usize, seed: RngSeed) -> Result<Chi2Estimate> {
    if reps < 2 {
        return Err(invalid("Monte Carlo chi-square needs reps >= 2"));
    }
    signal.validate()?;
    let exponents = (0..reps)
        .into_par_iter()
        .map(|r| {
            let a = signal.draw(seed.derive(&[r as u64, 0]))?;
            let b = signal.draw(seed.derive(&[r as u64, 1]))?;
            a.inner(&b)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(mc_from_exponents(&exponents, 1.0, Chi2Method::MonteCarlo { reps }))
}

/// Exact chi-square of the least-favorable prior with block size `m`,
/// sparsity `k` and amplitude `t`, summed over the overlap size `h` and the
/// number `a` of agreeing sign products on the overlap.
pub fn chi2_least_favorable_exact(p: usize, m: usize, k: usize, t: f64) -> Result<Chi2Estimate> {
    if k == 0 || k > m || m > p {
        return Err(invalid(format!("need 1 <= k <= m <= p, got k={k}, m={m}, p={p}")));
    }
    if m > MGF_MAX_M {
        return Err(Error::BudgetExceeded {
            what: "exact chi-square".into(),
            size: m as u128,
            cap: MGF_MAX_M as u128,
        });
    }
    let s = t * t;
    let q2 = (k as f64 / m as f64).powi(2);
    // Per-entry factors for agreeing and disagreeing sign products.
    let ln_plus = (q2 * s.exp_m1()).ln_1p();
    let ln_minus = (q2 * (-s).exp_m1()).ln_1p();
    let ln2 = std::f64::consts::LN_2;
    let terms = hypergeometric_log_pmf(p, m).into_iter().flat_map(|(h, lp)| {
        (0..=h).map(move |a| {
            let (af, bf) = (a as f64, (h - a) as f64);
            lp + ln_binomial(h, a) - h as f64 * ln2 + (af * af + bf * bf) * ln_plus + 2.0 * af * bf * ln_minus
        })
    });
    let ln_total = log_sum_exp(terms);
    Ok(Chi2Estimate {
        value: if ln_total > MAX_EXPONENT { f64::INFINITY } else { ln_total.exp_m1().max(0.0) },
        std_error: 0.0,
        method: Chi2Method::ExactEnumeration,
        overflow: ln_total > MAX_EXPONENT,
    })
}

/// The `v ∈ [0, 1)` with `v · ln((1+v)/(1−v)) = chi2`, by bisection down to
/// adjacent floating-point values.
pub fn tv_upper_from_chi2(chi2: f64) -> f64 {
    if !(chi2 > 0.0) {
        return 0.0;
    }
    let f = |v: f64| v * ((1.0 + v) / (1.0 - v)).ln();
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < chi2 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if hi >= 1.0 {
        return lo;
    }
    if (f(lo) - chi2).abs() <= (f(hi) - chi2).abs() {
        lo
    } else {
        hi
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovPairTerm {
    /// `det(I − T T̃)^{−n/2}`.
    pub value: f64,
    /// `exp((n/2)⟨T, T̃⟩)`, a lower bound on `value`.
    pub surrogate: f64,
}

pub fn cov_chi2_pair_term(t: &DenseMatrix, t_tilde: &DenseMatrix, n: usize) -> Result<CovPairTerm> {
    if !t.is_square() || t.shape() != t_tilde.shape() {
        return Err(invalid("pair term needs two square matrices of the same size"));
    }
    for (name, m) in [("T", t), ("T~", t_tilde)] {
        let norm = m.opnorm();
        if norm >= 1.0 {
            return Err(invalid(format!(
                "divergent regime: spectral norm of {name} is {norm}, must be < 1"
            )));
        }
    }
    let p = t.rows();
    let prod = t.matmul(t_tilde)?;
    let a = DenseMatrix::identity(p).sub(&prod)?;
    let (sign, logabs) = linalg::log_det(a.as_slice(), p);
    if sign <= 0.0 {
        return Err(invalid("det(I - T T~) is not positive"));
    }
    let half_n = n as f64 / 2.0;
    Ok(CovPairTerm {
        value: (-half_n * logabs).exp(),
        surrogate: (half_n * t.inner(t_tilde)?).exp(),
    })
}

/// `E[exp(S_p)]` for `S_p` the number of fixed points of a uniform
/// permutation of `[p]`: exact for `p <= 8`, Monte Carlo over `reps`
/// permutations otherwise.
pub fn permutation_mgf(p: usize, reps: usize, seed: RngSeed) -> Result<Chi2Estimate> {
    if p == 0 || reps == 0 {
        return Err(invalid("permutation MGF needs p >= 1 and reps >= 1"));
    }
    if p <= PERMUTATION_EXACT_MAX_P {
        return Ok(Chi2Estimate {
            value: permutation_mgf_enumerated(p),
            std_error: 0.0,
            method: Chi2Method::ExactEnumeration,
            overflow: false,
        });
    }
    let counts: Vec<f64> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let perm = random_permutation(p, seed.child(r as u64));
            perm.iter().enumerate().filter(|(i, &j)| *i == j).count() as f64
        })
        .collect();
    Ok(mc_from_exponents(&counts, 0.0, Chi2Method::MonteCarlo { reps }))
}

/// Averages `e^{fixed points}` over all `p!` permutations (Heap's algorithm).
fn permutation_mgf_enumerated(p: usize) -> f64 {
    let mut a: Vec<usize> = (0..p).collect();
    let mut c = vec![0usize; p];
    let fixed = |a: &[usize]| a.iter().enumerate().filter(|(i, &j)| *i == j).count() as i32;
    let e = std::f64::consts::E;
    let mut total = e.powi(fixed(&a));
    let mut count = 1u64;
    let mut i = 0;
    while i < p {
        if c[i] < i {
            if i % 2 == 0 {
                a.swap(0, i);
            } else {
                a.swap(c[i], i);
            }
            total += e.powi(fixed(&a));
            count += 1;
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    total / count as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::priors::SignalKind;

    #[test]
    fn jackknife_of_mean_matches_classic_se() {
        let v = [1.0, 4.0, 2.0, 8.0, 5.0];
        let (m, se) = mean_with_jackknife(&v);
        let n = v.len() as f64;
        let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
        assert!((se - (var / n).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn deterministic_priors() {
        let signal = SignalSpec::new(4, SignalKind::Block { k: 2, theta: 0.3 }).unwrap();
        let est = chi2_gaussian_mixture_mc(&signal, 10, RngSeed::new(0)).unwrap();
        let exact = (4.0f64 * 0.09).exp() - 1.0;
        assert!((est.value - exact).abs() < 1e-14);
        assert_eq!(est.std_error, 0.0);
        let zero = SignalSpec::new(4, SignalKind::Zero).unwrap();
        assert_eq!(chi2_gaussian_mixture_mc(&zero, 5, RngSeed::new(0)).unwrap().value, 0.0);
        assert!(chi2_gaussian_mixture_mc(&zero, 1, RngSeed::new(0)).is_err());
    }

    #[test]
    fn overflow_is_flagged() {
        let signal = SignalSpec::new(4, SignalKind::Block { k: 4, theta: 10.0 }).unwrap();
        let est = chi2_gaussian_mixture_mc(&signal, 3, RngSeed::new(0)).unwrap();
        assert!(est.overflow && est.value.is_infinite());
    }

    #[test]
    fn exact_lf_chi2_zero_amplitude() {
        let e = chi2_least_favorable_exact(8, 4, 2, 0.0).unwrap();
        assert_eq!(e.value, 0.0);
    }

    #[test]
    fn tv_examples() {
        assert_eq!(tv_upper_from_chi2(0.0), 0.0);
        let mut prev = 0.0;
        for i in 1..=200 {
            let c = i as f64 * 0.05;
            let v = tv_upper_from_chi2(c);
            assert!(v >= prev && v < 1.0);
            assert!((v * ((1.0 + v) / (1.0 - v)).ln() - c).abs() <= 1e-10, "chi2={c}");
            prev = v;
        }
        assert!(tv_upper_from_chi2(f64::INFINITY) < 1.0);
    }

    #[test]
    fn pair_term_examples() {
        let z = DenseMatrix::zeros(3, 3);
        assert_eq!(cov_chi2_pair_term(&z, &z, 5).unwrap().value, 1.0);
        let h = DenseMatrix::from_rows(&[vec![0.5]]).unwrap();
        assert!((cov_chi2_pair_term(&h, &h, 2).unwrap().value - 4.0 / 3.0).abs() < 1e-14);
        let big = DenseMatrix::from_rows(&[vec![1.0]]).unwrap();
        assert!(cov_chi2_pair_term(&big, &h, 2).is_err());
    }

    #[test]
    fn permutation_small_cases() {
        let e = std::f64::consts::E;
        assert!((permutation_mgf(1, 1, RngSeed::new(0)).unwrap().value - e).abs() < 1e-15);
        assert!((permutation_mgf(2, 1, RngSeed::new(0)).unwrap().value - (1.0 + e * e) / 2.0).abs() < 1e-14);
        // The identity fixes three points, each transposition one, and each
        // 3-cycle none.
        let v3 = (e.powi(3) + 3.0 * e + 2.0) / 6.0;
        assert!((permutation_mgf(3, 1, RngSeed::new(0)).unwrap().value - v3).abs() < 1e-14);
    }
}
