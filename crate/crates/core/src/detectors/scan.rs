//! Scan statistic: the largest spectral norm over `m × m` submatrices.

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::matrix::{DenseMatrix, IndexSet};
use crate::rng::{RngSeed, SimRng};

/// Default bound on the number of submatrices an exhaustive scan may visit.
pub const DEFAULT_ENUMERATION_CAP: u128 = 2_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScanStrategy {
    Exhaustive,
    RandomRestarts { restarts: usize, iters: usize },
    /// Exhaustive when the enumeration fits under the cap, otherwise random
    /// restarts with the given budget.
    Auto { restarts: usize, iters: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanConfig {
    pub m: usize,
    pub strategy: ScanStrategy,
    #[serde(default)]
    pub principal_only: bool,
    #[serde(default = "default_cap")]
    pub cap: u128,
    #[serde(default)]
    pub seed: RngSeed,
}

fn default_cap() -> u128 {
    DEFAULT_ENUMERATION_CAP
}

impl ScanConfig {
    pub fn new(m: usize, strategy: ScanStrategy) -> Self {
        Self {
            m,
            strategy,
            principal_only: false,
            cap: DEFAULT_ENUMERATION_CAP,
            seed: RngSeed::default(),
        }
    }

    pub fn exhaustive(m: usize) -> Self {
        Self::new(m, ScanStrategy::Exhaustive)
    }

    pub fn random_restarts(m: usize, restarts: usize, iters: usize) -> Self {
        Self::new(m, ScanStrategy::RandomRestarts { restarts, iters })
    }

    pub fn principal(mut self) -> Self {
        self.principal_only = true;
        self
    }

    pub fn with_seed(mut self, seed: RngSeed) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_cap(mut self, cap: u128) -> Self {
        self.cap = cap;
        self
    }

    /// Number of submatrices an exhaustive scan of a `rows × cols` matrix
    /// visits, saturating at `u128::MAX`.
    pub fn enumeration_size(&self, rows: usize, cols: usize) -> u128 {
        let r = binomial(rows, self.m);
        if self.principal_only {
            r
        } else {
            r.saturating_mul(binomial(cols, self.m))
        }
    }

    pub fn validate(&self, rows: usize, cols: usize) -> Result<()> {
        if self.m == 0 || self.m > rows.min(cols) {
            return Err(invalid(format!(
                "scan size m={} must lie in [1, {}]",
                self.m,
                rows.min(cols)
            )));
        }
        if self.principal_only && rows != cols {
            return Err(invalid("principal scan requires a square matrix"));
        }
        match self.strategy {
            ScanStrategy::Exhaustive => {
                let size = self.enumeration_size(rows, cols);
                if size > self.cap {
                    return Err(Error::BudgetExceeded {
                        what: "exhaustive scan".into(),
                        size,
                        cap: self.cap,
                    });
                }
            }
            ScanStrategy::RandomRestarts { restarts, .. } | ScanStrategy::Auto { restarts, .. } => {
                if restarts == 0 {
                    return Err(invalid("scan needs at least one restart"));
                }
            }
        }
        Ok(())
    }
}

/// Outcome of a scan: the value and the submatrix that certifies it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanResult {
    pub value: f64,
    pub rows: IndexSet,
    pub cols: IndexSet,
    /// True when the value is the exact maximum.
    pub exact: bool,
    pub evaluations: u64,
}

/// `C(n, k)` in `u128`, saturating on overflow.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - i) is divisible by (i + 1) at every step.
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

fn block_norm(x: &DenseMatrix, rows: &[usize], cols: &[usize]) -> f64 {
    x.submatrix_unchecked(rows, cols).opnorm()
}

pub fn scan_statistic(x: &DenseMatrix, cfg: &ScanConfig) -> Result<ScanResult> {
    cfg.validate(x.rows(), x.cols())?;
    if x.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(invalid("non-finite entries"));
    }
    let exhaustive = match cfg.strategy {
        ScanStrategy::Exhaustive => true,
        ScanStrategy::Auto { .. } => cfg.enumeration_size(x.rows(), x.cols()) <= cfg.cap,
        ScanStrategy::RandomRestarts { .. } => false,
    };
    if exhaustive {
        return Ok(if cfg.principal_only {
            exhaustive_principal(x, cfg.m)
        } else {
            exhaustive_rect(x, cfg.m)
        });
    }
    let (restarts, iters) = match cfg.strategy {
        ScanStrategy::RandomRestarts { restarts, iters } | ScanStrategy::Auto { restarts, iters } => {
            (restarts, iters)
        }
        ScanStrategy::Exhaustive => unreachable!(),
    };
    Ok(restart_search(x, cfg.m, cfg.principal_only, restarts, iters, cfg.seed))
}

/// Advances `c` to the next `k`-combination of `0..n` in lexicographic order.
fn next_combination(c: &mut [usize], n: usize) -> bool {
    let k = c.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if c[i] < n - k + i {
            c[i] += 1;
            for j in i + 1..k {
                c[j] = c[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut c: Vec<usize> = (0..k).collect();
    loop {
        out.push(c.clone());
        if !next_combination(&mut c, n) {
            return out;
        }
    }
}

#[derive(Clone)]
struct Candidate {
    value: f64,
    rows: Vec<usize>,
    cols: Vec<usize>,
    evaluations: u64,
}

impl Candidate {
    /// Larger value wins; among equal values the lexicographically smaller
    /// `(rows, cols)` wins, which makes the parallel reduction order-free.
    fn better(self, other: Candidate) -> Candidate {
        let evaluations = self.evaluations + other.evaluations;
        let keep_self = match self.value.total_cmp(&other.value) {
            std::cmp::Ordering::Greater => true,
            std::cmp::Ordering::Less => false,
            std::cmp::Ordering::Equal => (&self.rows, &self.cols) <= (&other.rows, &other.cols),
        };
        let mut w = if keep_self { self } else { other };
        w.evaluations = evaluations;
        w
    }

    fn into_result(self, rb: usize, cb: usize, exact: bool) -> ScanResult {
        ScanResult {
            value: self.value,
            rows: IndexSet::from_sorted_unchecked(self.rows, rb),
            cols: IndexSet::from_sorted_unchecked(self.cols, cb),
            exact,
            evaluations: self.evaluations,
        }
    }
}

fn exhaustive_rect(x: &DenseMatrix, m: usize) -> ScanResult {
    let row_sets = combinations(x.rows(), m);
    let best = row_sets
        .par_iter()
        .map(|rows| {
            let mut cols: Vec<usize> = (0..m).collect();
            let mut best = Candidate {
                value: block_norm(x, rows, &cols),
                rows: rows.clone(),
                cols: cols.clone(),
                evaluations: 1,
            };
            while next_combination(&mut cols, x.cols()) {
                best.evaluations += 1;
                let v = block_norm(x, rows, &cols);
                if v > best.value {
                    best.value = v;
                    best.cols.clone_from(&cols);
                }
            }
            best
        })
        .reduce_with(Candidate::better)
        .expect("at least one row subset");
    best.into_result(x.rows(), x.cols(), true)
}

fn exhaustive_principal(x: &DenseMatrix, m: usize) -> ScanResult {
    let p = x.rows();
    let best = (0..=p - m)
        .into_par_iter()
        .map(|first| {
            let mut tail: Vec<usize> = (0..m - 1).collect();
            let mut set = vec![0; m];
            let mut best: Option<Candidate> = None;
            let mut evaluations = 0u64;
            let rest = p - first - 1;
            loop {
                set[0] = first;
                for (s, t) in set[1..].iter_mut().zip(&tail) {
                    *s = first + 1 + t;
                }
                evaluations += 1;
                let v = block_norm(x, &set, &set);
                if best.as_ref().is_none_or(|b| v > b.value) {
                    best = Some(Candidate {
                        value: v,
                        rows: set.clone(),
                        cols: set.clone(),
                        evaluations: 0,
                    });
                }
                if m == 1 || !next_combination(&mut tail, rest) {
                    break;
                }
            }
            let mut b = best.expect("nonempty enumeration");
            b.evaluations = evaluations;
            b
        })
        .reduce_with(Candidate::better)
        .expect("at least one subset");
    best.into_result(p, p, true)
}

fn restart_search(
    x: &DenseMatrix,
    m: usize,
    principal: bool,
    restarts: usize,
    iters: usize,
    seed: RngSeed,
) -> ScanResult {
    let (_, best) = (0..restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = seed.child(r as u64).rng();
            (r, local_search(x, m, principal, iters, &mut rng))
        })
        .reduce_with(|a, b| {
            let evaluations = a.1.evaluations + b.1.evaluations;
            // Larger value wins, ties go to the lower restart index.
            let mut w = match a.1.value.total_cmp(&b.1.value) {
                std::cmp::Ordering::Less => b,
                std::cmp::Ordering::Greater => a,
                std::cmp::Ordering::Equal => {
                    if a.0 <= b.0 {
                        a
                    } else {
                        b
                    }
                }
            };
            w.1.evaluations = evaluations;
            w
        })
        .expect("restarts >= 1");
    let exact = m == x.rows().min(x.cols());
    best.into_result(x.rows(), x.cols(), exact)
}

fn random_subset(rng: &mut SimRng, n: usize, m: usize) -> Vec<usize> {
    let mut v = sample(rng, n, m).into_vec();
    v.sort_unstable();
    v
}

/// Indices of the `m` largest scores, ties broken by lower index, sorted.
fn top_m(scores: &[f64], m: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.truncate(m);
    idx.sort_unstable();
    idx
}

/// `|Σ_t A[i, cols[t]] w[t]|` for every row `i`.
fn row_scores(x: &DenseMatrix, cols: &[usize], w: &[f64]) -> Vec<f64> {
    (0..x.rows())
        .map(|i| {
            let r = x.row(i);
            cols.iter().zip(w).map(|(&j, wj)| r[j] * wj).sum::<f64>().abs()
        })
        .collect()
}

/// `|Σ_t A[rows[t], j] w[t]|` for every column `j`.
fn col_scores(x: &DenseMatrix, rows: &[usize], w: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; x.cols()];
    for (&i, wi) in rows.iter().zip(w) {
        for (o, v) in out.iter_mut().zip(x.row(i)) {
            *o += v * wi;
        }
    }
    out.iter_mut().for_each(|o| *o = o.abs());
    out
}

fn swapped(set: &[usize], pos: usize, new: usize) -> Vec<usize> {
    let mut s = set.to_vec();
    s[pos] = new;
    s.sort_unstable();
    s
}

/// Power-guided ascent from a random start, finished by best-improvement
/// single swaps until no swap helps.
fn local_search(x: &DenseMatrix, m: usize, principal: bool, iters: usize, rng: &mut SimRng) -> Candidate {
    let mut rows = random_subset(rng, x.rows(), m);
    let mut cols = if principal {
        rows.clone()
    } else {
        random_subset(rng, x.cols(), m)
    };
    let mut value = block_norm(x, &rows, &cols);
    let mut evaluations = 1u64;

    for _ in 0..iters {
        let mut improved = false;

        let trip = x.submatrix_unchecked(&rows, &cols).top_singular_triplet();
        if principal {
            let cand = top_m(&row_scores(x, &cols, &trip.right), m);
            if cand != rows {
                evaluations += 1;
                let v = block_norm(x, &cand, &cand);
                if v > value {
                    value = v;
                    rows = cand.clone();
                    cols = cand;
                    improved = true;
                }
            }
        } else {
            let cand = top_m(&row_scores(x, &cols, &trip.right), m);
            if cand != rows {
                evaluations += 1;
                let v = block_norm(x, &cand, &cols);
                if v > value {
                    value = v;
                    rows = cand;
                    improved = true;
                }
            }
            let trip = x.submatrix_unchecked(&rows, &cols).top_singular_triplet();
            let cand = top_m(&col_scores(x, &rows, &trip.left), m);
            if cand != cols {
                evaluations += 1;
                let v = block_norm(x, &rows, &cand);
                if v > value {
                    value = v;
                    cols = cand;
                    improved = true;
                }
            }
        }

        if !improved {
            let mut best: Option<(f64, Vec<usize>, Vec<usize>)> = None;
            let mut consider = |r: Vec<usize>, c: Vec<usize>, evaluations: &mut u64| {
                *evaluations += 1;
                let v = block_norm(x, &r, &c);
                if v > best.as_ref().map_or(value, |b| b.0) {
                    best = Some((v, r, c));
                }
            };
            for pos in 0..m {
                for new in (0..x.rows()).filter(|i| rows.binary_search(i).is_err()) {
                    let r = swapped(&rows, pos, new);
                    let c = if principal { r.clone() } else { cols.clone() };
                    consider(r, c, &mut evaluations);
                }
            }
            if !principal {
                for pos in 0..m {
                    for new in (0..x.cols()).filter(|j| cols.binary_search(j).is_err()) {
                        consider(rows.clone(), swapped(&cols, pos, new), &mut evaluations);
                    }
                }
            }
            if let Some((v, r, c)) = best {
                value = v;
                rows = r;
                cols = c;
                improved = true;
            }
        }

        if !improved {
            break;
        }
    }

    Candidate {
        value,
        rows,
        cols,
        evaluations,
    }
}
