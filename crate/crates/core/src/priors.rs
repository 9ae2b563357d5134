//! Signal generators, noise models and the least-favorable prior.

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg;
use crate::matrix::{DenseMatrix, IndexSet, SparsityBudget};
use crate::rng::RngSeed;

/// Pivot tolerance used when factoring a covariance matrix.
pub const PSD_PIVOT_TOL: f64 = 1e-12;

/// One draw `M = t · U_I B U_I` from the least-favorable prior, kept in
/// factored form.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PriorSample {
    pub matrix: DenseMatrix,
    pub support: IndexSet,
    /// Rademacher signs `u`, one per coordinate of `[p]`.
    pub signs: Vec<i8>,
    pub amplitude: f64,
    pub bernoulli_rate: f64,
    /// `B` restricted to `I × I`, row-major `m × m`.
    pub pattern: Vec<bool>,
}

impl PriorSample {
    pub fn p(&self) -> usize {
        self.signs.len()
    }

    pub fn m(&self) -> usize {
        self.support.len()
    }

    /// Rebuilds `t · U_I B U_I` from the stored components.
    pub fn reconstruct(&self) -> DenseMatrix {
        let p = self.p();
        let m = self.m();
        let idx = self.support.as_slice();
        let mut out = DenseMatrix::zeros(p, p);
        for a in 0..m {
            for b in 0..m {
                if self.pattern[a * m + b] {
                    let (i, j) = (idx[a], idx[b]);
                    let s = f64::from(self.signs[i]) * f64::from(self.signs[j]);
                    out.set(i, j, self.amplitude * s);
                }
            }
        }
        out
    }

    /// Largest row or column count of `B` on `I × I`.
    pub fn pattern_sparsity(&self) -> usize {
        let m = self.m();
        let mut best = 0;
        for a in 0..m {
            let r = (0..m).filter(|&b| self.pattern[a * m + b]).count();
            let c = (0..m).filter(|&b| self.pattern[b * m + a]).count();
            best = best.max(r).max(c);
        }
        best
    }

    /// Event `M ∈ M(p, 2k)`: every row and column of `B_II` has at most `2k`
    /// ones.
    pub fn in_double_budget(&self, k: usize) -> bool {
        self.pattern_sparsity() <= 2 * k
    }

    /// Event `‖M‖₂ ≥ k t / 2`.
    pub fn has_large_norm(&self, k: usize) -> bool {
        self.matrix.opnorm() >= k as f64 * self.amplitude / 2.0
    }

    /// Key/value sidecar describing the draw.
    pub fn metadata_json(&self) -> serde_json::Value {
        serde_json::json!({
            "p": self.p(),
            "m": self.m(),
            "I": self.support.as_slice(),
            "u": self.signs,
            "t": self.amplitude,
            "rate": self.bernoulli_rate,
        })
    }
}

/// Draws from the least-favorable prior: a uniform `m`-subset `I`, Rademacher
/// signs `u`, and i.i.d. Bernoulli(`k/m`) entries `B` on `I × I`.
pub fn gen_prior_sample(p: usize, m: usize, k: usize, t: f64, seed: RngSeed) -> Result<PriorSample> {
    if k == 0 || k > m || m > p {
        return Err(invalid(format!("prior requires 1 <= k <= m <= p, got k={k}, m={m}, p={p}")));
    }
    if !(t >= 0.0) || !t.is_finite() {
        return Err(invalid(format!("prior amplitude must be finite and >= 0, got {t}")));
    }
    let mut rng = seed.rng();
    let mut idx = sample(&mut rng, p, m).into_vec();
    idx.sort_unstable();
    let support = IndexSet::from_sorted_unchecked(idx, p);
    let signs: Vec<i8> = (0..p).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect();
    let rate = k as f64 / m as f64;
    let pattern: Vec<bool> = (0..m * m).map(|_| rng.random_bool(rate)).collect();

    let mut s = PriorSample {
        matrix: DenseMatrix::zeros(p, p),
        support,
        signs,
        amplitude: t,
        bernoulli_rate: rate,
        pattern,
    };
    s.matrix = s.reconstruct();
    Ok(s)
}

/// Choices of the prior's block size `m`: `(p²/ln p)^{1/3}` for the highly
/// sparse regime and `sqrt(pk / (4c² ln(ep/k)))` for the moderately sparse
/// one, each rounded and clamped to `[k, p]`.
pub fn prior_block_size_presets(p: usize, k: usize, c: f64) -> (usize, usize) {
    let pf = p as f64;
    let kf = k as f64;
    let clamp = |x: f64| (x.round() as usize).clamp(k.max(1), p.max(1));
    let small = clamp((pf * pf / pf.ln().max(f64::MIN_POSITIVE)).cbrt());
    let big = clamp((pf * kf / (4.0 * c * c * (std::f64::consts::E * pf / kf).ln())).sqrt());
    (small, big)
}

/// `[[0, M], [Mᵀ, 0]]`.
pub fn symmetrize(m: &DenseMatrix) -> Result<DenseMatrix> {
    if !m.is_square() {
        return Err(invalid("symmetrize requires a square matrix"));
    }
    let p = m.rows();
    let mut out = DenseMatrix::zeros(2 * p, 2 * p);
    for i in 0..p {
        for j in 0..p {
            let v = m.get(i, j);
            if v != 0.0 {
                out.set(i, p + j, v);
                out.set(p + j, i, v);
            }
        }
    }
    Ok(out)
}

/// `theta` on the leading `k × k` block, zero elsewhere.
pub fn gen_block_signal(p: usize, k: usize, theta: f64) -> Result<DenseMatrix> {
    if k > p {
        return Err(invalid(format!("block size k={k} exceeds p={p}")));
    }
    if !(theta >= 0.0) || !theta.is_finite() {
        return Err(invalid(format!("block level must be finite and >= 0, got {theta}")));
    }
    Ok(DenseMatrix::from_fn(p, p, |i, j| if i < k && j < k { theta } else { 0.0 }))
}

/// Uniformly random permutation matrix.
pub fn gen_permutation(p: usize, seed: RngSeed) -> Result<DenseMatrix> {
    if p == 0 {
        return Err(invalid("permutation size must be >= 1"));
    }
    let perm = random_permutation(p, seed);
    let mut out = DenseMatrix::zeros(p, p);
    for (i, &j) in perm.iter().enumerate() {
        out.set(i, j, 1.0);
    }
    Ok(out)
}

pub(crate) fn random_permutation(p: usize, seed: RngSeed) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..p).collect();
    perm.shuffle(&mut seed.rng());
    perm
}

/// `X = M + Z` with `Z` i.i.d. standard normal.
pub fn add_gaussian_noise(m: &DenseMatrix, seed: RngSeed) -> DenseMatrix {
    let mut rng = seed.rng();
    let data = m
        .as_slice()
        .iter()
        .map(|x| x + rng.sample::<f64, _>(StandardNormal))
        .collect();
    DenseMatrix::from_parts(m.rows(), m.cols(), data)
}

/// `rows × cols` matrix of i.i.d. standard normals.
pub fn gaussian_matrix(rows: usize, cols: usize, seed: RngSeed) -> DenseMatrix {
    add_gaussian_noise(&DenseMatrix::zeros(rows, cols), seed)
}

/// Square-root factor `L` with `LLᵀ = Σ`, or an error naming the first
/// negative pivot.
pub fn covariance_factor(sigma: &DenseMatrix) -> Result<DenseMatrix> {
    if !sigma.is_square() {
        return Err(invalid("covariance must be square"));
    }
    let p = sigma.rows();
    let scale = (0..p).fold(1.0f64, |s, i| s.max(sigma.get(i, i).abs()));
    if !sigma.is_symmetric(1e-12 * scale) {
        return Err(invalid("covariance must be symmetric"));
    }
    linalg::psd_cholesky(sigma.as_slice(), p, PSD_PIVOT_TOL * scale)
        .map(|l| DenseMatrix::from_parts(p, p, l))
        .map_err(|(pivot, value)| {
            invalid(format!(
                "covariance is not positive semidefinite: pivot {pivot} has value {value:e}"
            ))
        })
}

/// `n` i.i.d. rows from `N(0, Σ)`, as an `n × p` matrix.
pub fn sample_gaussian_data(sigma: &DenseMatrix, n: usize, seed: RngSeed) -> Result<DenseMatrix> {
    let l = covariance_factor(sigma)?;
    Ok(sample_with_factor(&l, n, seed))
}

/// Like [`sample_gaussian_data`] with a precomputed factor.
pub fn sample_with_factor(l: &DenseMatrix, n: usize, seed: RngSeed) -> DenseMatrix {
    let p = l.rows();
    let z = gaussian_matrix(n, p, seed);
    // Row i of the output is L z_i, i.e. the data matrix is Z Lᵀ.
    let mut out = vec![0.0; n * p];
    for r in 0..n {
        let zr = z.row(r);
        for i in 0..p {
            let li = l.row(i);
            out[r * p + i] = li[..=i].iter().zip(zr).map(|(a, b)| a * b).sum();
        }
    }
    DenseMatrix::from_parts(n, p, out)
}

/// Declarative signal for experiments and divergence estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SignalKind {
    LeastFavorable { m: usize, k: usize, t: f64 },
    Block { k: usize, theta: f64 },
    Permutation,
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalSpec {
    pub p: usize,
    #[serde(flatten)]
    pub kind: SignalKind,
}

impl SignalSpec {
    pub fn new(p: usize, kind: SignalKind) -> Result<Self> {
        let s = Self { p, kind };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.p;
        if p == 0 {
            return Err(invalid("signal dimension p must be >= 1"));
        }
        let in_range = |name: &str, v: usize| {
            if v == 0 || v > p {
                Err(invalid(format!("signal parameter {name}={v} outside [1, {p}]")))
            } else {
                Ok(())
            }
        };
        let nonneg = |name: &str, v: f64| {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(invalid(format!("signal parameter {name}={v} must be finite and >= 0")))
            }
        };
        match self.kind {
            SignalKind::LeastFavorable { m, k, t } => {
                in_range("m", m)?;
                in_range("k", k)?;
                if k > m {
                    return Err(invalid(format!("signal requires k <= m, got k={k}, m={m}")));
                }
                nonneg("t", t)
            }
            SignalKind::Block { k, theta } => {
                in_range("k", k)?;
                nonneg("theta", theta)
            }
            SignalKind::Permutation | SignalKind::Zero => Ok(()),
        }
    }

    /// True when every draw is the same matrix.
    pub fn is_deterministic(&self) -> bool {
        matches!(self.kind, SignalKind::Block { .. } | SignalKind::Zero)
    }

    /// Nominal sparsity of a draw.
    pub fn sparsity(&self) -> usize {
        match self.kind {
            SignalKind::LeastFavorable { k, .. } | SignalKind::Block { k, .. } => k,
            SignalKind::Permutation => 1,
            SignalKind::Zero => 1,
        }
    }

    pub fn draw(&self, seed: RngSeed) -> Result<DenseMatrix> {
        match self.kind {
            SignalKind::LeastFavorable { m, k, t } => Ok(gen_prior_sample(self.p, m, k, t, seed)?.matrix),
            SignalKind::Block { k, theta } => gen_block_signal(self.p, k, theta),
            SignalKind::Permutation => gen_permutation(self.p, seed),
            SignalKind::Zero => Ok(DenseMatrix::zeros(self.p, self.p)),
        }
    }

    /// The same signal rescaled so that its nominal spectral norm is `lambda`:
    /// `k·t`, `k·theta` and `1` for the least-favorable, block and permutation
    /// kinds respectively. Permutations are returned unscaled by `draw`, so the
    /// caller multiplies by the returned factor.
    pub fn at_level(&self, lambda: f64) -> (SignalSpec, f64) {
        match self.kind {
            SignalKind::LeastFavorable { m, k, .. } => (
                SignalSpec {
                    p: self.p,
                    kind: SignalKind::LeastFavorable { m, k, t: lambda / k as f64 },
                },
                1.0,
            ),
            SignalKind::Block { k, .. } => (
                SignalSpec {
                    p: self.p,
                    kind: SignalKind::Block { k, theta: lambda / k as f64 },
                },
                1.0,
            ),
            SignalKind::Permutation => (self.clone(), lambda),
            SignalKind::Zero => (self.clone(), 1.0),
        }
    }

    pub fn budget(&self) -> SparsityBudget {
        SparsityBudget::unchecked(self.sparsity())
    }
}
