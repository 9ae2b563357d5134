//! Acceptance suite. Each criterion prints one PASS/FAIL line with the
//! observed value and the pinned tolerance; the process exits nonzero if any
//! criterion fails.

use std::process::{Command, ExitCode};
use std::time::Instant;

use sparsedet::detectors::{
    chi2_threshold_s, frob_chi2_statistic, q_statistic, scan_statistic, threshold_tau, ScanConfig,
};
use sparsedet::divergence::{
    beta_star, boundary_curves, chi2_gaussian_mixture_mc, chi2_least_favorable_exact, chi2_upper_bound_cs,
    mgf_gh_exact, mgf_h_exact, permutation_mgf, tv_upper_from_chi2,
};
use sparsedet::experiment::{run_experiment, ExperimentConfig};
use sparsedet::priors::{gaussian_matrix, sample_gaussian_data, SignalKind, SignalSpec};
use sparsedet::witness::{bernoulli_block_ensemble, find_witness, rv_row_sample, DEFAULT_C_W};
use sparsedet::{DenseMatrix, RngSeed};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

/// Running mean and variance.
#[derive(Default, Clone, Copy)]
struct Welford {
    n: f64,
    mean: f64,
    m2: f64,
}

impl Welford {
    fn push(&mut self, x: f64) {
        self.n += 1.0;
        let d = x - self.mean;
        self.mean += d / self.n;
        self.m2 += d * (x - self.mean);
    }

    fn se(&self) -> f64 {
        (self.m2 / (self.n - 1.0) / self.n).sqrt()
    }
}

fn binomial_se(p: f64, n: usize) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

fn threshold_guarantee() -> Outcome {
    let start = Instant::now();
    let (p, k, eps, reps) = (100usize, 2usize, 0.1, 500usize);
    let lambda = 1.05 * 2.0 * k as f64 * threshold_tau(p, eps);
    let text = format!(
        "schema_version = 1\nmodel = \"mean\"\np = {p}\nk = {k}\nreplicates = {reps}\nseed = 2024\n\
         epsilon = {eps}\nlambda_grid = [{lambda:?}]\n[signal]\nkind = \"block\"\n[[tests]]\nname = \"threshold\"\n"
    );
    let cfg = ExperimentConfig::from_toml_str(&text).expect("valid config");
    let table = run_experiment(&cfg).expect("experiment runs");
    let row = &table.rows[0];
    let total = row.type1_hat + row.type2_hat;
    let limit = eps + 3.0 * binomial_se(eps, reps);
    let secs = start.elapsed().as_secs_f64();
    outcome(
        total <= limit && secs < 60.0,
        format!(
            "type1+type2 = {total:.4} (type1 {:.4}, type2 {:.4}) <= {limit:.4}; lambda = {lambda:.4}; {secs:.1}s < 60s",
            row.type1_hat, row.type2_hat
        ),
    )
}

fn chi2_null_calibration() -> Outcome {
    let reps = 2000;
    let seed = RngSeed::new(7);
    let mut pass = true;
    let mut parts = Vec::new();
    for (ci, (p, eps)) in [(20usize, 0.05), (20, 0.1), (50, 0.05), (50, 0.1)].into_iter().enumerate() {
        let s = chi2_threshold_s(p, eps);
        let exceed = (0..reps)
            .filter(|&r| frob_chi2_statistic(&gaussian_matrix(p, p, seed.derive(&[ci as u64, r as u64]))) > s)
            .count();
        let rate = exceed as f64 / reps as f64;
        let limit = eps + 3.0 * binomial_se(eps, reps);
        pass &= rate <= limit;
        parts.push(format!("p={p} eps={eps}: {rate:.4} <= {limit:.4}"));
    }
    outcome(pass, parts.join("; "))
}

fn scan_null_bound() -> Outcome {
    let (m, draws) = (50usize, 200usize);
    let seed = RngSeed::new(31);
    let mean = (0..draws).map(|i| gaussian_matrix(m, m, seed.child(i as u64)).opnorm()).sum::<f64>() / draws as f64;
    let limit = 2.0 * (m as f64).sqrt() * 1.02;
    outcome(mean <= limit, format!("mean ||W||_2 = {mean:.4} <= {limit:.4}"))
}

fn scan_search_equivalence() -> Outcome {
    let seed = RngSeed::new(404);
    let mut mismatches = 0;
    let mut worst_gap = 0.0f64;
    for i in 0..50u64 {
        let x = gaussian_matrix(10, 10, seed.derive(&[0, i]));
        let exact = scan_statistic(&x, &ScanConfig::exhaustive(2)).expect("scan");
        let search = scan_statistic(&x, &ScanConfig::random_restarts(2, 200, 50).with_seed(seed.derive(&[1, i])))
            .expect("scan");
        if search.value != exact.value {
            mismatches += 1;
            worst_gap = worst_gap.max(exact.value - search.value);
        }
    }
    outcome(
        mismatches == 0,
        format!("{mismatches}/50 matrices differ from exhaustive T_2 (largest gap {worst_gap:e}); equality required"),
    )
}

fn witness_guarantee() -> Outcome {
    let (p, m, k, restarts) = (128usize, 64usize, 8usize, 10usize);
    let seed = RngSeed::new(55);
    let mut successes = 0;
    let mut size_ok = true;
    let mut min_ratio = f64::INFINITY;
    let mut rejections = 0;
    for i in 0..100u64 {
        let (x, rej) = bernoulli_block_ensemble(p, m, k, seed.derive(&[0, i])).expect("ensemble draw");
        rejections += rej;
        let w = find_witness(&x, k, DEFAULT_C_W, restarts, seed.derive(&[1, i])).expect("witness");
        successes += usize::from(w.ratio >= 0.125);
        size_ok &= w.sampled_side_len() <= w.d * k;
        min_ratio = min_ratio.min(w.ratio);
    }
    outcome(
        successes >= 95 && size_ok,
        format!(
            "{successes}/100 draws reach ratio >= 1/8 (need >= 95); min ratio {min_ratio:.4}; |J| <= d*k always: {size_ok}; ensemble rejections {rejections}"
        ),
    )
}

fn rv_unbiasedness() -> Outcome {
    let x = DenseMatrix::from_rows(&[vec![1.0, 2.0, 0.0], vec![0.0, 1.0, 3.0], vec![2.0, -1.0, 1.0]]).unwrap();
    let target = x.transpose().matmul(&x).unwrap();
    let seed = RngSeed::new(6);
    let mut acc = [Welford::default(); 9];
    for i in 0..10_000u64 {
        let xs = rv_row_sample(&x, 2, seed.child(i)).expect("sample");
        let g = xs.transpose().matmul(&xs).unwrap();
        for (a, v) in acc.iter_mut().zip(g.as_slice()) {
            a.push(*v);
        }
    }
    let mut worst = 0.0f64;
    for (a, t) in acc.iter().zip(target.as_slice()) {
        let z = (a.mean - t).abs() / (a.se() + 1e-12);
        worst = worst.max(z);
    }
    outcome(worst <= 3.0, format!("max |mean - X^T X| / SE over 9 entries = {worst:.3} <= 3"))
}

/// Brute-force oracle: enumerates every pair of `m`-subsets of `[p]` as
/// bitmasks and every sign pattern on the overlap, then sums the resulting
/// integer counts with compensated summation.
struct JointOracle {
    /// `pair_counts[h]`: number of ordered subset pairs with overlap `h`.
    pair_counts: Vec<u64>,
    total_pairs: u64,
}

impl JointOracle {
    fn new(p: usize, m: usize) -> Self {
        let subsets: Vec<u32> = (0u32..(1 << p)).filter(|s| s.count_ones() as usize == m).collect();
        let mut pair_counts = vec![0u64; m + 1];
        for &a in &subsets {
            for &b in &subsets {
                pair_counts[(a & b).count_ones() as usize] += 1;
            }
        }
        let n = subsets.len() as u64;
        Self {
            pair_counts,
            total_pairs: n * n,
        }
    }

    fn mgf_h(&self, lam: f64) -> f64 {
        let mut sum = Neumaier::default();
        for (h, &c) in self.pair_counts.iter().enumerate() {
            sum.add(c as f64 / self.total_pairs as f64 * (lam * (h * h) as f64).exp());
        }
        sum.value()
    }

    fn mgf_gh(&self, t: f64) -> f64 {
        let mut sum = Neumaier::default();
        for (h, &c) in self.pair_counts.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let mut inner = Neumaier::default();
            for signs in 0u32..(1 << h) {
                let g = 2.0 * signs.count_ones() as f64 - h as f64;
                inner.add((t * g * g).exp());
            }
            sum.add(c as f64 / self.total_pairs as f64 * inner.value() / (1u64 << h) as f64);
        }
        sum.value()
    }
}

#[derive(Default)]
struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

fn mgf_exactness() -> Outcome {
    let mut worst = 0.0f64;
    let mut cases = 0;
    for p in 1..=12usize {
        for m in 1..=p {
            let oracle = JointOracle::new(p, m);
            for t in [-0.3, 0.05, 0.1, 0.4] {
                let got = mgf_gh_exact(p, m, t).unwrap();
                let want = oracle.mgf_gh(t);
                worst = worst.max((got - want).abs() / want.abs().max(1.0));
                cases += 1;
            }
            for lam in [-0.2, 0.1, 0.3] {
                let got = mgf_h_exact(p, m, lam).unwrap();
                let want = oracle.mgf_h(lam);
                worst = worst.max((got - want).abs() / want.abs().max(1.0));
                cases += 1;
            }
        }
    }
    let gh = mgf_gh_exact(4, 2, 0.1).unwrap();
    let h = mgf_h_exact(6, 2, 0.1).unwrap();
    let spots = (gh - 1.1111).abs() < 5e-5 && (h - 1.0889).abs() < 5e-5;
    outcome(
        worst <= 1e-12 && spots,
        format!(
            "max relative error vs joint enumeration {worst:.2e} <= 1e-12 over {cases} cases; spot values {gh:.4} (1.1111), {h:.4} (1.0889)"
        ),
    )
}

fn q_unbiasedness() -> Outcome {
    let (p, n, reps) = (10usize, 50usize, 10_000u64);
    let seed = RngSeed::new(88);
    let null = DenseMatrix::identity(p);
    let mut planted = DenseMatrix::identity(p);
    planted.set(0, 1, 0.5);
    planted.set(1, 0, 0.5);
    let mut parts = Vec::new();
    let mut pass = true;
    for (ci, (sigma, target)) in [(null, 0.0), (planted, 0.5)].into_iter().enumerate() {
        let mut acc = Welford::default();
        for r in 0..reps {
            let data = sample_gaussian_data(&sigma, n, seed.derive(&[ci as u64, r])).unwrap();
            acc.push(q_statistic(&data).unwrap());
        }
        let z = (acc.mean - target).abs() / acc.se();
        pass &= z <= 3.0;
        parts.push(format!("target {target}: mean {:.4} (SE {:.4}, |z| = {z:.2} <= 3)", acc.mean, acc.se()));
    }
    outcome(pass, parts.join("; "))
}

fn permutation_limit() -> Outcome {
    let limit = (std::f64::consts::E - 1.0).exp();
    let est = permutation_mgf(200, 100_000, RngSeed::new(9)).unwrap();
    let rel = (est.value - limit).abs() / limit;
    let p1 = permutation_mgf(1, 1, RngSeed::new(0)).unwrap().value;
    let p2 = permutation_mgf(2, 1, RngSeed::new(0)).unwrap().value;
    let e = std::f64::consts::E;
    let d1 = (p1 - e).abs();
    let d2 = (p2 - (1.0 + e * e) / 2.0).abs();
    outcome(
        rel <= 0.05 && d1 <= 1e-12 && d2 <= 1e-12,
        format!(
            "p=200 estimate {:.4} (SE {:.4}) vs {limit:.4}: relative gap {rel:.4} <= 0.05; p=1 error {d1:.1e}, p=2 error {d2:.1e} <= 1e-12",
            est.value, est.std_error
        ),
    )
}

fn boundary_sanity() -> Outcome {
    let mut worst_excess = f64::NEG_INFINITY;
    let mut worst_at = (0, 0);
    let mut max_ratio = 0.0f64;
    for e in 8..=20u32 {
        let p = 1usize << e;
        let lp = (p as f64).ln();
        let cap = 3.0 * (lp / lp.ln()).sqrt();
        for k in 4..=p {
            let b = boundary_curves(p, k).unwrap();
            let ratio = if b.lambda0 > 0.0 { b.lambda1 / b.lambda0 } else { f64::INFINITY };
            max_ratio = max_ratio.max(ratio);
            if ratio - cap > worst_excess {
                worst_excess = ratio - cap;
                worst_at = (p, k);
            }
        }
    }
    let knees = beta_star(1.0 / 3.0) == 1.0 / 3.0 && beta_star(1.0) == 0.5;
    outcome(
        worst_excess <= 0.0 && knees,
        format!(
            "max lambda1/lambda0 = {max_ratio:.4}; closest approach to 3*sqrt(ln p/ln ln p) at (p, k) = {worst_at:?} with margin {:.4}; knees exact: {knees}",
            -worst_excess
        ),
    )
}

fn chi2_consistency() -> Outcome {
    let seed = RngSeed::new(12);
    let mut violations = 0;
    let mut cases = 0;
    let mut idx = 0u64;
    for p in 2..=8usize {
        for k in 1..=2usize {
            for m in k..=p.min(4) {
                for s in [0.25, 1.0, 2.0] {
                    let bound = chi2_upper_bound_cs(p, m, k, s).unwrap();
                    let signal = SignalSpec::new(p, SignalKind::LeastFavorable { m, k, t: f64::sqrt(s) }).unwrap();
                    let mc = chi2_gaussian_mixture_mc(&signal, 20_000, seed.child(idx)).unwrap();
                    let exact = chi2_least_favorable_exact(p, m, k, f64::sqrt(s)).unwrap().value;
                    idx += 1;
                    cases += 1;
                    if bound < mc.value - 3.0 * mc.std_error || bound < exact * (1.0 - 1e-12) {
                        violations += 1;
                    }
                }
            }
        }
    }
    let mut worst_residual = 0.0f64;
    for i in 0..=10_000 {
        let chi2 = i as f64 * 1e-3;
        let v = tv_upper_from_chi2(chi2);
        let f = if v == 0.0 { 0.0 } else { v * ((1.0 + v) / (1.0 - v)).ln() };
        worst_residual = worst_residual.max((f - chi2).abs());
    }
    outcome(
        violations == 0 && worst_residual <= 1e-10,
        format!(
            "{violations}/{cases} instances with CS bound below MC - 3 SE or below exact; TV residual {worst_residual:.2e} <= 1e-10 on chi2 in [0, 10]"
        ),
    )
}

const DETERMINISM_CONFIG: &str = r#"
schema_version = 1
model = "mean"
p = 30
k = 2
replicates = 40
seed = 77
lambda_grid = [4.0, 8.0, 12.0]

[signal]
kind = "least_favorable"
m = 5

[[tests]]
name = "threshold"

[[tests]]
name = "chi2_scan"
m = 3
strategy = { kind = "random_restarts", restarts = 4, iters = 10 }
"#;

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().expect("temp dir");
    let cfg = dir.path().join("determinism.toml");
    std::fs::write(&cfg, DETERMINISM_CONFIG).unwrap();
    let run = |threads: &str, name: &str| -> Option<Vec<u8>> {
        let out = dir.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_sparsedet"))
            .args(["simulate", cfg.to_str().unwrap(), "--threads", threads, "--out", out.to_str().unwrap()])
            .env_remove("SPARSEDET_THREADS")
            .status()
            .ok()?;
        status.success().then(|| std::fs::read(out).ok()).flatten()
    };
    let a = run("1", "a.csv");
    let b = run("8", "b.csv");
    let c = run("1", "c.csv");
    let same = a.is_some() && a == b && a == c;
    outcome(
        same,
        format!(
            "simulate at 1, 8, 1 threads: {} bytes, byte-identical: {same}",
            a.as_ref().map_or(0, Vec::len)
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("thresholding test errors at 1.05x the guaranteed level", threshold_guarantee),
        ("chi-square stage null calibration", chi2_null_calibration),
        ("scan null spectral norm bound", scan_null_bound),
        ("random-restart scan equals exhaustive scan", scan_search_equivalence),
        ("witness success on the Bernoulli block ensemble", witness_guarantee),
        ("row-norm sampling is unbiased for the Gram matrix", rv_unbiasedness),
        ("exact overlap MGFs match joint enumeration", mgf_exactness),
        ("Q statistic is unbiased", q_unbiasedness),
        ("permutation fixed-point MGF limit", permutation_limit),
        ("boundary rates agree up to the log factor", boundary_sanity),
        ("chi-square bound and TV conversion consistency", chi2_consistency),
        ("simulate output is thread-count independent", determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = f();
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        println!(
            "acceptance {:02} {verdict}: {name} | {} | {:.1}s",
            i + 1,
            o.detail,
            start.elapsed().as_secs_f64()
        );
        failed += usize::from(!o.pass);
    }
    println!("acceptance summary: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
