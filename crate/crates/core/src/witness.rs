//! Small submatrices carrying a constant fraction of a sparse matrix's
//! spectral norm.
//!
//! The construction splits off the heavy rows `I0` and heavy columns `J0`
//! (those with `ℓ₂` norm at least `τ = ‖M‖₂ / (2√k)`). The rest of the
//! matrix has spectral norm at most `√k·τ = ‖M‖₂/2`, so either the row
//! block `M[I0, :]` or the column block `M[:, J0]` keeps a quarter of the
//! norm. Rows of the winning block are then sampled with probability
//! proportional to their squared norm; the leading right singular vector of
//! the sample is supported on at most `d·k` columns, and those columns
//! complete the witness.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::matrix::{DenseMatrix, IndexSet, SparsityBudget};
use crate::rng::RngSeed;

pub const DEFAULT_C_W: f64 = 8.0;
pub const SUCCESS_RATIO: f64 = 0.125;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Side {
    RowHeavy,
    ColumnHeavy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WitnessReport {
    #[serde(rename = "I")]
    pub rows: IndexSet,
    #[serde(rename = "J")]
    pub cols: IndexSet,
    pub ratio: f64,
    /// Stable rank of the block that was sampled.
    pub r: f64,
    pub d: usize,
    pub restarts_used: usize,
    pub side: Side,
    pub success: bool,
    /// Index of the attempt that produced `(I, J)`.
    pub best_attempt: usize,
    pub norm: f64,
    pub tau: f64,
    /// `‖M[I0ᶜ, J0ᶜ]‖₂`, bounded by `√k·τ`.
    pub residual_norm: f64,
}

impl WitnessReport {
    /// Size of the index set produced by sampling, which is at most `d·k`.
    pub fn sampled_side_len(&self) -> usize {
        match self.side {
            Side::RowHeavy => self.cols.len(),
            Side::ColumnHeavy => self.rows.len(),
        }
    }

    /// Size of the heavy-line index set, at most `‖M‖_F² / τ²`.
    pub fn energy_side_len(&self) -> usize {
        match self.side {
            Side::RowHeavy => self.rows.len(),
            Side::ColumnHeavy => self.cols.len(),
        }
    }
}

/// Rows and columns whose `ℓ₂` norm is at least `tau`.
pub fn energy_split(m: &DenseMatrix, tau: f64) -> Result<(IndexSet, IndexSet)> {
    if !(tau > 0.0) {
        return Err(invalid(format!("energy split needs tau > 0, got {tau}")));
    }
    let t2 = tau * tau;
    let pick = |norms: Vec<f64>, bound: usize| {
        let idx = norms
            .iter()
            .enumerate()
            .filter(|(_, &n)| n >= t2)
            .map(|(i, _)| i)
            .collect();
        IndexSet::from_sorted_unchecked(idx, bound)
    };
    Ok((pick(m.row_norms_sq(), m.rows()), pick(m.col_norms_sq(), m.cols())))
}

/// `M` with the rows in `rows` and the columns in `cols` removed.
pub fn residual_block(m: &DenseMatrix, rows: &IndexSet, cols: &IndexSet) -> DenseMatrix {
    let keep_r: Vec<usize> = (0..m.rows()).filter(|&i| !rows.contains(i)).collect();
    let keep_c: Vec<usize> = (0..m.cols()).filter(|&j| !cols.contains(j)).collect();
    m.submatrix_unchecked(&keep_r, &keep_c)
}

/// Draws `d` rows of `X` with probability proportional to their squared
/// norm, rescales each to norm `‖X‖_F`, and divides by `√d`, so that
/// `E[X̃ᵀX̃] = XᵀX`.
pub fn rv_row_sample(x: &DenseMatrix, d: usize, seed: RngSeed) -> Result<DenseMatrix> {
    Ok(rv_row_sample_indexed(x, d, seed)?.0)
}

fn rv_row_sample_indexed(x: &DenseMatrix, d: usize, seed: RngSeed) -> Result<(DenseMatrix, Vec<usize>)> {
    if d == 0 {
        return Err(invalid("row sample size d must be >= 1"));
    }
    let norms = x.row_norms_sq();
    let fro2: f64 = norms.iter().sum();
    if fro2 == 0.0 {
        return Err(Error::UndefinedValue("row sampling from the zero matrix".into()));
    }
    let dist = WeightedIndex::new(&norms).map_err(|e| invalid(e.to_string()))?;
    let mut rng = seed.rng();
    let fro = fro2.sqrt();
    let sd = (d as f64).sqrt();
    let mut picks = Vec::with_capacity(d);
    let mut data = Vec::with_capacity(d * x.cols());
    for _ in 0..d {
        let i = dist.sample(&mut rng);
        picks.push(i);
        let scale = fro / (norms[i].sqrt() * sd);
        data.extend(x.row(i).iter().map(|v| v * scale));
    }
    Ok((DenseMatrix::from_parts(d, x.cols(), data), picks))
}

/// `d = ceil(C_w · r · ln(max(r, 2)))`.
pub fn sample_size(c_w: f64, r: f64) -> usize {
    (c_w * r * r.max(2.0).ln()).ceil().max(1.0) as usize
}

struct Attempt {
    sampled: Vec<usize>,
    ratio: f64,
}

/// Columns of the heavy block chosen by one sampling round: the support of
/// the leading right singular vector of the sampled rows.
fn sampled_columns(block: &DenseMatrix, d: usize, seed: RngSeed) -> Result<Vec<usize>> {
    let (sample, _) = rv_row_sample_indexed(block, d, seed)?;
    let (_, col_counts) = sample.line_counts(0.0);
    let support: Vec<usize> = (0..sample.cols()).filter(|&j| col_counts[j] > 0).collect();
    let all_rows: Vec<usize> = (0..sample.rows()).collect();
    let v = sample.submatrix_unchecked(&all_rows, &support).top_singular_triplet().right;
    Ok(support
        .iter()
        .zip(&v)
        .filter(|(_, &vj)| vj != 0.0)
        .map(|(&j, _)| j)
        .collect())
}

pub fn find_witness(m: &DenseMatrix, k: usize, c_w: f64, restarts: usize, seed: RngSeed) -> Result<WitnessReport> {
    if k == 0 || !m.is_k_sparse(SparsityBudget::unchecked(k)) {
        return Err(invalid(format!("matrix is not {k}-sparse")));
    }
    if m.frobenius_norm_sq() == 0.0 {
        return Err(invalid("witness search needs a nonzero matrix"));
    }
    if !(c_w > 0.0) || restarts == 0 {
        return Err(invalid("witness search needs C_w > 0 and restarts >= 1"));
    }

    let norm = m.opnorm();
    let tau = norm / (2.0 * (k as f64).sqrt());
    let (i0, j0) = energy_split(m, tau)?;
    let residual_norm = residual_block(m, &i0, &j0).opnorm();

    let all_r: Vec<usize> = (0..m.rows()).collect();
    let all_c: Vec<usize> = (0..m.cols()).collect();
    let x = m.submatrix_unchecked(i0.as_slice(), &all_c);
    let y = m.submatrix_unchecked(&all_r, j0.as_slice());
    let (side, block, heavy) = if x.opnorm() >= y.opnorm() {
        (Side::RowHeavy, x, i0)
    } else {
        (Side::ColumnHeavy, y.transpose(), j0)
    };
    let r = block.stable_rank()?;
    let d = sample_size(c_w, r);

    let mut best: Option<(usize, Attempt)> = None;
    let mut used = 0;
    for attempt in 0..restarts {
        used += 1;
        let sampled = sampled_columns(&block, d, seed.child(attempt as u64))?;
        let sub = match side {
            Side::RowHeavy => m.submatrix_unchecked(heavy.as_slice(), &sampled),
            Side::ColumnHeavy => m.submatrix_unchecked(&sampled, heavy.as_slice()),
        };
        let ratio = sub.opnorm() / norm;
        if best.as_ref().is_none_or(|(_, b)| ratio > b.ratio) {
            best = Some((attempt, Attempt { sampled, ratio }));
        }
        if ratio >= SUCCESS_RATIO {
            break;
        }
    }
    let (best_attempt, a) = best.expect("restarts >= 1");
    let sampled = IndexSet::from_sorted_unchecked(a.sampled, heavy.bound());
    let (rows, cols) = match side {
        Side::RowHeavy => (heavy, sampled),
        Side::ColumnHeavy => (sampled, heavy),
    };
    Ok(WitnessReport {
        rows,
        cols,
        ratio: a.ratio,
        r,
        d,
        restarts_used: used,
        side,
        success: a.ratio >= SUCCESS_RATIO,
        best_attempt,
        norm,
        tau,
        residual_norm,
    })
}

/// One draw of the sparse Bernoulli ensemble: an `m × m` block of
/// independent Bernoulli(`k / 2m`) ones in the top-left corner of a `p × p`
/// zero matrix, redrawn until every row and column has at most `k` ones.
/// Returns the matrix and the number of rejected draws.
pub fn bernoulli_block_ensemble(p: usize, m: usize, k: usize, seed: RngSeed) -> Result<(DenseMatrix, usize)> {
    const MAX_DRAWS: usize = 100_000;
    if k == 0 || m == 0 || m > p {
        return Err(invalid(format!("ensemble requires 1 <= m <= p and k >= 1, got p={p}, m={m}, k={k}")));
    }
    let q = (k as f64 / (2.0 * m as f64)).min(1.0);
    for attempt in 0..MAX_DRAWS {
        let mut rng = seed.child(attempt as u64).rng();
        let mut out = DenseMatrix::zeros(p, p);
        for i in 0..m {
            for j in 0..m {
                if rng.random_bool(q) {
                    out.set(i, j, 1.0);
                }
            }
        }
        if out.is_k_sparse(SparsityBudget::unchecked(k)) && out.frobenius_norm_sq() > 0.0 {
            return Ok((out, attempt));
        }
    }
    Err(invalid(format!("no {k}-sparse draw in {MAX_DRAWS} attempts")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WitnessCalibration {
    /// `(C_w, success rate)` for each candidate, in input order.
    pub rates: Vec<(f64, f64)>,
    pub target: f64,
    /// Smallest candidate reaching the target rate.
    pub smallest: Option<f64>,
}

/// Success rate of [`find_witness`] on the Bernoulli ensemble for each
/// candidate `C_w`. Draw `i` uses the same matrix and witness seed for every
/// candidate.
#[allow(clippy::too_many_arguments)]
pub fn calibrate_witness_constant(
    p: usize,
    m: usize,
    k: usize,
    candidates: &[f64],
    draws: usize,
    restarts: usize,
    target: f64,
    seed: RngSeed,
) -> Result<WitnessCalibration> {
    if candidates.is_empty() || draws == 0 {
        return Err(invalid("calibration needs candidates and draws >= 1"));
    }
    let matrices = (0..draws)
        .into_par_iter()
        .map(|i| bernoulli_block_ensemble(p, m, k, seed.derive(&[0, i as u64])).map(|(x, _)| x))
        .collect::<Result<Vec<_>>>()?;
    let mut rates = Vec::with_capacity(candidates.len());
    for &c in candidates {
        let ok = matrices
            .par_iter()
            .enumerate()
            .map(|(i, x)| find_witness(x, k, c, restarts, seed.derive(&[1, i as u64])).map(|w| w.success))
            .collect::<Result<Vec<bool>>>()?;
        rates.push((c, ok.iter().filter(|&&s| s).count() as f64 / draws as f64));
    }
    let smallest = rates
        .iter()
        .filter(|(_, r)| *r >= target)
        .map(|(c, _)| *c)
        .min_by(f64::total_cmp);
    Ok(WitnessCalibration { rates, target, smallest })
}
