//! Exact moment generating functions of the overlap `H = |I ∩ Ĩ|` of two
//! uniform `m`-subsets of `[p]`, and of the signed walk `G_H`.

use crate::error::{invalid, Error, Result};

/// Largest `m` accepted by the exact evaluators.
pub const MGF_MAX_M: usize = 64;

fn check(p: usize, m: usize, rate: f64) -> Result<()> {
    if m > p {
        return Err(invalid(format!("m={m} exceeds p={p}")));
    }
    if m > MGF_MAX_M {
        return Err(Error::BudgetExceeded {
            what: "exact MGF".into(),
            size: m as u128,
            cap: MGF_MAX_M as u128,
        });
    }
    if !rate.is_finite() {
        return Err(invalid(format!("rate must be finite, got {rate}")));
    }
    Ok(())
}

/// `ln C(n, k)` by summing logarithms of the factor ratios.
pub(crate) fn ln_binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    let k = k.min(n - k);
    (1..=k).map(|i| ((n - k + i) as f64 / i as f64).ln()).sum()
}

/// `(h, ln P(H = h))` for `H ~ Hypergeometric(p, m, m)`, built by the ratio
/// `P(h+1)/P(h) = (m−h)² / ((h+1)(p−2m+h+1))`.
pub fn hypergeometric_log_pmf(p: usize, m: usize) -> Vec<(usize, f64)> {
    let lo = (2 * m).saturating_sub(p);
    let mut out = Vec::with_capacity(m - lo + 1);
    let mut lp = ln_binomial(m, lo) + ln_binomial(p - m, m - lo) - ln_binomial(p, m);
    for h in lo..=m {
        out.push((h, lp));
        if h < m {
            let num = ((m - h) * (m - h)) as f64;
            let den = ((h + 1) * (p + h + 1 - 2 * m)) as f64;
            lp += (num / den).ln();
        }
    }
    out
}

pub(crate) fn log_sum_exp(terms: impl IntoIterator<Item = f64>) -> f64 {
    let v: Vec<f64> = terms.into_iter().collect();
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi == f64::NEG_INFINITY || hi == f64::INFINITY {
        return hi;
    }
    hi + v.iter().map(|x| (x - hi).exp()).sum::<f64>().ln()
}

/// `ln E[exp(t · G_H²)]` where, given `H = h`, `G_h` is a sum of `h`
/// independent Rademacher signs.
pub fn ln_mgf_gh_exact(p: usize, m: usize, t: f64) -> Result<f64> {
    check(p, m, t)?;
    if t == 0.0 {
        return Ok(0.0);
    }
    let ln2 = std::f64::consts::LN_2;
    let terms = hypergeometric_log_pmf(p, m).into_iter().flat_map(|(h, lp)| {
        (0..=h).map(move |a| {
            let g = 2.0 * a as f64 - h as f64;
            lp + ln_binomial(h, a) - h as f64 * ln2 + t * g * g
        })
    });
    Ok(log_sum_exp(terms))
}

pub fn mgf_gh_exact(p: usize, m: usize, t: f64) -> Result<f64> {
    Ok(ln_mgf_gh_exact(p, m, t)?.exp())
}

/// `ln E[exp(lam · H²)]`.
pub fn ln_mgf_h_exact(p: usize, m: usize, lam: f64) -> Result<f64> {
    check(p, m, lam)?;
    if lam == 0.0 {
        return Ok(0.0);
    }
    let terms = hypergeometric_log_pmf(p, m)
        .into_iter()
        .map(|(h, lp)| lp + lam * (h * h) as f64);
    Ok(log_sum_exp(terms))
}

pub fn mgf_h_exact(p: usize, m: usize, lam: f64) -> Result<f64> {
    Ok(ln_mgf_h_exact(p, m, lam)?.exp())
}

/// `sqrt(A · B) − 1` with `A = E[exp(2k² sinh(s)/m² · G_H²)]` and
/// `B = E[exp(2k² (cosh(s) − 1)/m² · H²)]`.
pub fn chi2_upper_bound_cs(p: usize, m: usize, k: usize, s: f64) -> Result<f64> {
    if k == 0 || k > m {
        return Err(invalid(format!("need 1 <= k <= m, got k={k}, m={m}")));
    }
    if !(s >= 0.0) {
        return Err(invalid(format!("s must be >= 0, got {s}")));
    }
    let scale = 2.0 * (k * k) as f64 / (m * m) as f64;
    let ln_a = ln_mgf_gh_exact(p, m, scale * s.sinh())?;
    let ln_b = ln_mgf_h_exact(p, m, scale * (s.cosh() - 1.0))?;
    Ok((0.5 * (ln_a + ln_b)).exp_m1())
}
