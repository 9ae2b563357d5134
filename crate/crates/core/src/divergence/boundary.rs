//! Detection boundary in the `(p, k)` plane and its exponent form.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Smallest sparsity at which the two rates are compared.
pub const DEFAULT_K0: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPoint {
    pub p: usize,
    pub k: usize,
    /// Rate achieved by the tests.
    pub lambda1: f64,
    /// Rate below which no test succeeds, capped at `lambda1`.
    pub lambda0: f64,
    /// Uncapped lower-bound formula.
    pub lambda0_raw: f64,
    /// True when the logarithm in the highly sparse branch had an argument at
    /// most 1 and `lambda0` was set to 0.
    pub clamped: bool,
    /// True when `k` lies in the highly sparse branch of `lambda1`.
    pub highly_sparse: bool,
}

/// Upper rate: `k sqrt(ln p)` for `k <= (p / ln p)^{1/3}`, else
/// `(k p ln(ep/k))^{1/4}`.
pub fn lambda1(p: usize, k: usize) -> f64 {
    let (pf, kf) = (p as f64, k as f64);
    let lp = pf.ln();
    if kf <= (pf / lp).cbrt() {
        kf * lp.sqrt()
    } else {
        dense_rate(pf, kf)
    }
}

fn dense_rate(p: f64, k: f64) -> f64 {
    (k * p * (std::f64::consts::E * p / k).ln()).powf(0.25)
}

/// Lower rate `k sqrt(ln(e p ln p / k³))` for `k <= (p ln p)^{1/3}`, else
/// `(k p ln(ep/k))^{1/4}`. Returns the value and whether it was clamped.
pub fn lambda0_raw(p: usize, k: usize) -> (f64, bool) {
    let (pf, kf) = (p as f64, k as f64);
    let lp = pf.ln();
    if kf <= (pf * lp).cbrt() {
        let arg = std::f64::consts::E * pf * lp / (kf * kf * kf);
        if arg <= 1.0 {
            (0.0, true)
        } else {
            (kf * arg.ln().sqrt(), false)
        }
    } else {
        (dense_rate(pf, kf), false)
    }
}

pub fn boundary_curves(p: usize, k: usize) -> Result<BoundaryPoint> {
    if k == 0 || k > p {
        return Err(invalid(format!("need 1 <= k <= p, got k={k}, p={p}")));
    }
    let l1 = lambda1(p, k);
    let (raw, clamped) = lambda0_raw(p, k);
    let pf = p as f64;
    Ok(BoundaryPoint {
        p,
        k,
        lambda1: l1,
        lambda0: raw.min(l1),
        lambda0_raw: raw,
        clamped,
        highly_sparse: (k as f64) <= (pf / pf.ln()).cbrt(),
    })
}

/// Critical exponent of `λ = p^β` for `k = p^α`.
pub fn beta_star(alpha: f64) -> f64 {
    if alpha <= 1.0 / 3.0 {
        alpha
    } else {
        (1.0 + alpha) / 4.0
    }
}

/// A labeled polygon in the `(α, β)` unit square.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseRegion {
    pub name: &'static str,
    pub polygon: Vec<(f64, f64)>,
}

/// The four regions of the phase diagram: impossible (below `β*`),
/// computationally hard (between `β*` and the thresholding line
/// `β = min(α, 1/2)`), thresholding-detectable and spectrum-detectable.
pub fn phase_regions() -> Vec<PhaseRegion> {
    let third = 1.0 / 3.0;
    vec![
        PhaseRegion {
            name: "impossible",
            polygon: vec![(0.0, 0.0), (third, third), (1.0, 0.5), (1.0, 0.0)],
        },
        PhaseRegion {
            name: "hard",
            polygon: vec![(third, third), (0.5, 0.5), (1.0, 0.5)],
        },
        PhaseRegion {
            name: "thresholding",
            polygon: vec![(0.0, 0.0), (0.5, 0.5), (0.0, 0.5)],
        },
        PhaseRegion {
            name: "spectrum",
            polygon: vec![(0.0, 0.5), (1.0, 0.5), (1.0, 1.0), (0.0, 1.0)],
        },
    ]
}
