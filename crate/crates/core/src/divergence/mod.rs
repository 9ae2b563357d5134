//! Lower-bound machinery: chi-square divergences of the least-favorable
//! prior, the moment generating functions that control them, total
//! variation conversion, and the detection boundary.

mod boundary;
mod chi2;
mod mgf;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

pub use boundary::{
    beta_star, boundary_curves, lambda0_raw, lambda1, phase_regions, BoundaryPoint, PhaseRegion, DEFAULT_K0,
};
pub use chi2::{
    chi2_gaussian_mixture_mc, chi2_least_favorable_exact, cov_chi2_pair_term, permutation_mgf, tv_upper_from_chi2,
    Chi2Estimate, Chi2Method, CovPairTerm, PERMUTATION_EXACT_MAX_P,
};
pub use mgf::{
    chi2_upper_bound_cs, hypergeometric_log_pmf, ln_mgf_gh_exact, ln_mgf_h_exact, mgf_gh_exact, mgf_h_exact,
    MGF_MAX_M,
};

/// Default constant in the `s*` objective.
pub const DEFAULT_S_STAR_C: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SStar {
    pub s_star: f64,
    pub m_star: usize,
}

/// Objective of the `s*` maximization at block size `m`:
/// `min{ acosh(1 + min(y, c p²/(m²k²))), asinh(y) }` with
/// `y = c m / k² · ln(ep/m)`.
pub fn s_star_objective(p: usize, k: usize, m: usize, c: f64) -> f64 {
    let (pf, kf, mf) = (p as f64, k as f64, m as f64);
    let y = c * mf / (kf * kf) * (std::f64::consts::E * pf / mf).ln();
    let z = c * pf * pf / (mf * mf * kf * kf);
    (1.0 + y.min(z)).acosh().min(y.asinh())
}

/// Maximizes [`s_star_objective`] over `m_grid`; ties go to the smaller `m`.
pub fn optimize_s_star(p: usize, k: usize, m_grid: &[usize], c: f64) -> Result<SStar> {
    if m_grid.is_empty() {
        return Err(invalid("s* grid is empty"));
    }
    if !(c >= 0.0) {
        return Err(invalid(format!("constant c must be >= 0, got {c}")));
    }
    let mut best: Option<SStar> = None;
    for &m in m_grid {
        if k == 0 || k > m || m > p {
            return Err(invalid(format!("grid point m={m} violates k <= m <= p (k={k}, p={p})")));
        }
        let v = s_star_objective(p, k, m, c);
        let better = match best {
            None => true,
            Some(b) => v > b.s_star || (v == b.s_star && m < b.m_star),
        };
        if better {
            best = Some(SStar { s_star: v, m_star: m });
        }
    }
    Ok(best.expect("nonempty grid"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn s_star_dominates_grid_points() {
        let (p, k) = (2000, 3);
        let preset = crate::priors::prior_block_size_presets(p, k, DEFAULT_S_STAR_C).0;
        let grid: Vec<usize> = (k..=p).step_by(7).chain([preset]).collect();
        let best = optimize_s_star(p, k, &grid, DEFAULT_S_STAR_C).unwrap();
        assert!(best.s_star >= s_star_objective(p, k, preset, DEFAULT_S_STAR_C));
    }

    #[test]
    fn s_star_vanishes_with_c() {
        let grid: Vec<usize> = (5..=100).collect();
        let mut prev = f64::INFINITY;
        for c in [1.0, 0.1, 1e-3, 1e-6, 0.0] {
            let v = optimize_s_star(100, 5, &grid, c).unwrap().s_star;
            assert!(v <= prev);
            prev = v;
        }
        assert_eq!(prev, 0.0);
    }

    #[test]
    fn s_star_errors() {
        assert!(optimize_s_star(100, 5, &[], 0.05).is_err());
        assert!(optimize_s_star(100, 5, &[4], 0.05).is_err());
    }
}
