//! Randomized checks of the symmetric-function inequalities behind the
//! second-derivative estimates.
//!
//! Three checks run on spectra sampled from `Γ_k`:
//!
//! - `gll`: with `A = diag(λ)`, `a = dσ_k[B]/σ_k` and `b = dσ_1[B]/σ_1`,
//!   `σ_k^{ij,mq} B_ij B_mq ≤ σ_k (a − b)((α + 1)a − (α − 1)b)`.
//! - `gll_sum`: the same with both sides summed over three directions.
//! - `krylov`: `d²/dt² (σ_1/σ_k)^α (A + tB) ≥ 0`, by finite differences.
//!
//! Expanding the second derivative of `(σ_1/σ_k)^α` shows that the Krylov
//! value and the `gll` margin have the same sign, so a convex sample whose
//! `gll` check fails is reported as an implication violation.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::symmfunc::{
    cone_membership_raw, sigma_all, sigma_deleted, sigma_hess_dir, sigma_matrix, Spectrum, SymTensor2,
};

/// Draws per sample before the box is declared too hostile.
pub const MAX_DRAWS: usize = 100_000;

/// Normalized `σ_k(λ/|λ|_∞)` below which a sample counts as near the cone boundary.
pub const NEAR_BOUNDARY: f64 = 1e-8;

/// Directions used by the summed form.
pub const SUM_DIRECTIONS: usize = 3;

const MAX_N: usize = 8;
const CHUNK: usize = 512;

/// Sampling parameters for one `(n, k)` pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleConfig {
    pub n: usize,
    pub k: usize,
    pub alpha_list: Vec<f64>,
    pub sample_count: usize,
    pub seed: u64,
    /// Entries of `λ` are drawn uniformly from `[lo, hi]`.
    pub spectrum_box: [f64; 2],
    /// Entries of `B` are drawn uniformly from `[−s, s]`.
    pub direction_scale: f64,
}

impl SampleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(2 <= self.k && self.k <= self.n && self.n <= MAX_N) {
            return Err(Error::InvalidProblem(format!(
                "need 2 <= k <= n <= {MAX_N}, got n = {}, k = {}",
                self.n, self.k
            )));
        }
        if self.alpha_list.is_empty() || self.alpha_list.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
            return Err(Error::InvalidProblem(format!(
                "alpha values must be positive and finite, got {:?}",
                self.alpha_list
            )));
        }
        let [lo, hi] = self.spectrum_box;
        if !(lo.is_finite() && hi.is_finite() && lo < hi && hi > 0.0) {
            return Err(Error::InvalidProblem(format!("invalid spectrum box [{lo}, {hi}]")));
        }
        if !(self.direction_scale.is_finite() && self.direction_scale > 0.0) {
            return Err(Error::InvalidProblem(format!(
                "direction scale {} must be positive",
                self.direction_scale
            )));
        }
        Ok(())
    }

    /// Independent generator for sample `index`, shared by serial and parallel runs.
    pub fn rng_for(&self, index: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let case = (self.n * 16 + self.k) as u64;
        rng.set_stream((case << 40) | index as u64);
        rng
    }
}

/// Rejection-samples `λ` uniformly from the box until it lies in `Γ_k`.
pub fn sample_gamma_k<R: Rng>(cfg: &SampleConfig, rng: &mut R) -> Result<Spectrum> {
    let [lo, hi] = cfg.spectrum_box;
    for _ in 0..MAX_DRAWS {
        let v: Vec<f64> = (0..cfg.n).map(|_| rng.random_range(lo..hi)).collect();
        if cone_membership_raw(&v, cfg.k).inside {
            return Spectrum::new(v);
        }
    }
    Err(Error::Sampling(format!(
        "no point of Γ_{} in [{lo}, {hi}]^{} after {MAX_DRAWS} draws (acceptance rate below 1e-4)",
        cfg.k, cfg.n
    )))
}

/// Symmetric direction with entries uniform in `[−scale, scale]`.
pub fn sample_direction<R: Rng>(n: usize, scale: f64, rng: &mut R) -> SymTensor2 {
    let mut rows = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i..n {
            let v = rng.random_range(-scale..scale);
            rows[i][j] = v;
            rows[j][i] = v;
        }
    }
    SymTensor2::from_rows(&rows).expect("square finite matrix")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    Gll,
    GllSum,
    Krylov,
}

impl CheckKind {
    pub fn name(self) -> &'static str {
        match self {
            CheckKind::Gll => "gll",
            CheckKind::GllSum => "gll_sum",
            CheckKind::Krylov => "krylov",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckRecord {
    pub kind: CheckKind,
    pub k: usize,
    pub lambda: Spectrum,
    /// First direction of the sample.
    pub b: SymTensor2,
    pub alpha: f64,
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs − lhs`
    pub margin: f64,
    /// Allowed negative margin.
    pub tolerance: f64,
    pub pass: bool,
    pub inconclusive: bool,
}

/// `1e−9·(1 + |rhs|)`
pub fn slack(rhs: f64) -> f64 {
    1e-9 * (1.0 + rhs.abs())
}

/// First directional derivatives `dσ_k[B]` and `dσ_1[B]` at `diag(λ)`.
fn directional_firsts(lambda: &[f64], b: &SymTensor2, k: usize) -> (f64, f64) {
    let n = lambda.len();
    let dk = (0..n).map(|i| sigma_deleted(lambda, i, k - 1) * b.get(i, i)).sum();
    let d1 = (0..n).map(|i| b.get(i, i)).sum();
    (dk, d1)
}

fn require_cone(lambda: &Spectrum, k: usize) -> Result<()> {
    if k < 1 || k > lambda.n() {
        return Err(Error::Domain(format!("cone order {k} outside 1..={}", lambda.n())));
    }
    if !cone_membership_raw(lambda.values(), k).inside {
        return Err(Error::ConeViolation { nodes: vec![] });
    }
    Ok(())
}

/// The two sides of the per-direction inequality, before `α` enters.
#[derive(Debug, Clone, Copy)]
struct GllParts {
    lhs: f64,
    sk: f64,
    a: f64,
    b: f64,
}

impl GllParts {
    fn new(lambda: &Spectrum, dir: &SymTensor2, k: usize) -> Result<Self> {
        let v = lambda.values();
        let all = sigma_all(v);
        let (sk, s1) = (all[k], all[1]);
        let diag = SymTensor2::diagonal(v)?;
        let lhs = sigma_hess_dir(&diag, dir, k)?;
        let (dk, d1) = directional_firsts(v, dir, k);
        Ok(Self { lhs, sk, a: dk / sk, b: d1 / s1 })
    }

    fn rhs(&self, alpha: f64) -> f64 {
        self.sk * (self.a - self.b) * ((alpha + 1.0) * self.a - (alpha - 1.0) * self.b)
    }
}

fn near_boundary(lambda: &Spectrum, k: usize) -> bool {
    let sup = lambda.sup_norm();
    let scaled: Vec<f64> = lambda.values().iter().map(|x| x / sup).collect();
    sigma_all(&scaled)[k] < NEAR_BOUNDARY
}

/// Per-direction inequality at `A = diag(λ)` along `B`.
pub fn check_gll(lambda: &Spectrum, b: &SymTensor2, alpha: f64, k: usize) -> Result<CheckRecord> {
    require_cone(lambda, k)?;
    if b.n() != lambda.n() {
        return Err(Error::Shape(format!("spectrum has {} entries but B is {}x{}", lambda.n(), b.n(), b.n())));
    }
    let parts = GllParts::new(lambda, b, k)?;
    Ok(gll_record(CheckKind::Gll, lambda, b, alpha, k, parts.lhs, parts.rhs(alpha)))
}

/// Summed form over several directions; the record carries the first one.
pub fn check_gll_sum(lambda: &Spectrum, dirs: &[SymTensor2], alpha: f64, k: usize) -> Result<CheckRecord> {
    require_cone(lambda, k)?;
    let first = dirs.first().ok_or_else(|| Error::Shape("no directions".into()))?;
    let (mut lhs, mut rhs) = (0.0, 0.0);
    for d in dirs {
        let parts = GllParts::new(lambda, d, k)?;
        lhs += parts.lhs;
        rhs += parts.rhs(alpha);
    }
    Ok(gll_record(CheckKind::GllSum, lambda, first, alpha, k, lhs, rhs))
}

fn gll_record(
    kind: CheckKind,
    lambda: &Spectrum,
    b: &SymTensor2,
    alpha: f64,
    k: usize,
    lhs: f64,
    rhs: f64,
) -> CheckRecord {
    let margin = rhs - lhs;
    let tolerance = slack(rhs);
    CheckRecord {
        kind,
        k,
        lambda: lambda.clone(),
        b: b.clone(),
        alpha,
        lhs,
        rhs,
        margin,
        tolerance,
        pass: margin >= -tolerance,
        inconclusive: near_boundary(lambda, k),
    }
}

/// Outcome of a finite-difference second derivative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KrylovValue {
    /// Richardson-extrapolated `d²/dt²` at `t = 0`.
    pub value: f64,
    pub error_estimate: f64,
    /// No step size met the accuracy target, or the stencil left the cone.
    pub inconclusive: bool,
}

const KRYLOV_REL_TOL: f64 = 1e-6;
const KRYLOV_MAX_HALVINGS: usize = 12;

/// `d²/dt² (σ_1/σ_k)^α (diag(λ) + tB)` at `t = 0`.
///
/// Five-point central differences at steps `h` and `h/2` are combined by
/// Richardson extrapolation; `h` is halved until the two estimates agree to
/// a relative `1e−6` of the natural scale `f(0)·(‖B‖/|λ|_∞)²`.
pub fn check_krylov_convexity(lambda: &Spectrum, b: &SymTensor2, alpha: f64, k: usize) -> Result<KrylovValue> {
    Ok(krylov_values(lambda, b, &[alpha], k)?[0])
}

fn krylov_values(lambda: &Spectrum, b: &SymTensor2, alphas: &[f64], k: usize) -> Result<Vec<KrylovValue>> {
    require_cone(lambda, k)?;
    let b_norm = b.frobenius_norm();
    if b_norm == 0.0 {
        return Ok(vec![KrylovValue { value: 0.0, error_estimate: 0.0, inconclusive: false }; alphas.len()]);
    }
    let diag = SymTensor2::diagonal(lambda.values())?;
    let s = lambda.sup_norm() / b_norm;
    // ratio σ_1/σ_k along the line, None outside Γ_k
    let ratio = |t: f64| -> Result<Option<f64>> {
        let m = diag.add_scaled(b, t);
        let spec = m.spectrum();
        if !cone_membership_raw(spec.values(), k).inside {
            return Ok(None);
        }
        Ok(Some(sigma_matrix(&m, 1)? / sigma_matrix(&m, k)?))
    };
    let r0 = ratio(0.0)?.expect("inside the cone");

    let mut out = vec![None; alphas.len()];
    let mut h = 0.05 * s;
    let mut last: Vec<KrylovValue> = vec![
        KrylovValue { value: f64::NAN, error_estimate: f64::INFINITY, inconclusive: true };
        alphas.len()
    ];
    'halving: for _ in 0..=KRYLOV_MAX_HALVINGS {
        // t = h·{−2, −1, −½, ½, 1, 2}
        let offsets = [-2.0, -1.0, -0.5, 0.5, 1.0, 2.0];
        let mut pts = [0.0; 6];
        for (slot, off) in offsets.iter().enumerate() {
            match ratio(off * h)? {
                Some(r) => pts[slot] = r,
                None => {
                    h *= 0.5;
                    continue 'halving;
                }
            }
        }
        for (ai, &alpha) in alphas.iter().enumerate() {
            if out[ai].is_some() {
                continue;
            }
            let f = |r: f64| r.powf(alpha);
            let f0 = f(r0);
            let d_h = (-f(pts[0]) + 16.0 * f(pts[1]) - 30.0 * f0 + 16.0 * f(pts[4]) - f(pts[5])) / (12.0 * h * h);
            let hh = 0.5 * h;
            let d_half =
                (-f(pts[1]) + 16.0 * f(pts[2]) - 30.0 * f0 + 16.0 * f(pts[3]) - f(pts[4])) / (12.0 * hh * hh);
            let value = d_half + (d_half - d_h) / 15.0;
            let error_estimate = (d_half - d_h).abs() / 15.0;
            let scale = f0 / (s * s);
            let v = KrylovValue { value, error_estimate, inconclusive: false };
            if error_estimate <= KRYLOV_REL_TOL * (scale + value.abs()) {
                out[ai] = Some(v);
            } else {
                last[ai] = KrylovValue { inconclusive: true, ..v };
            }
        }
        if out.iter().all(Option::is_some) {
            break;
        }
        h *= 0.5;
    }
    Ok(out.into_iter().zip(last).map(|(o, l)| o.unwrap_or(l)).collect())
}

fn krylov_record(lambda: &Spectrum, b: &SymTensor2, alpha: f64, k: usize, kv: KrylovValue) -> CheckRecord {
    let tolerance = slack(kv.value) + 2.0 * kv.error_estimate;
    CheckRecord {
        kind: CheckKind::Krylov,
        k,
        lambda: lambda.clone(),
        b: b.clone(),
        alpha,
        lhs: 0.0,
        rhs: kv.value,
        margin: kv.value,
        tolerance,
        pass: kv.value >= -tolerance,
        inconclusive: kv.inconclusive || near_boundary(lambda, k),
    }
}

/// Records for one sample, in the order `(α, kind)`.
pub fn check_sample(cfg: &SampleConfig, index: usize) -> Result<Vec<CheckRecord>> {
    let mut rng = cfg.rng_for(index);
    let lambda = sample_gamma_k(cfg, &mut rng)?;
    let dirs: Vec<SymTensor2> = (0..SUM_DIRECTIONS)
        .map(|_| sample_direction(cfg.n, cfg.direction_scale, &mut rng))
        .collect();
    let parts: Vec<GllParts> = dirs.iter().map(|d| GllParts::new(&lambda, d, cfg.k)).collect::<Result<_>>()?;
    let krylov = krylov_values(&lambda, &dirs[0], &cfg.alpha_list, cfg.k)?;
    let mut out = Vec::with_capacity(3 * cfg.alpha_list.len());
    for (ai, &alpha) in cfg.alpha_list.iter().enumerate() {
        out.push(gll_record(CheckKind::Gll, &lambda, &dirs[0], alpha, cfg.k, parts[0].lhs, parts[0].rhs(alpha)));
        let lhs: f64 = parts.iter().map(|p| p.lhs).sum();
        let rhs: f64 = parts.iter().map(|p| p.rhs(alpha)).sum();
        out.push(gll_record(CheckKind::GllSum, &lambda, &dirs[0], alpha, cfg.k, lhs, rhs));
        out.push(krylov_record(&lambda, &dirs[0], alpha, cfg.k, krylov[ai]));
    }
    Ok(out)
}

/// Result of scanning Ivochkina's structure condition over a gradient box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IvochkinaResult {
    pub holds: bool,
    pub worst_margin: f64,
    pub worst_point: [f64; 2],
}

/// Checks `k·∂²χ^{1/k}/∂p_i∂p_j ξ_iξ_j ≥ −χ^{1/k}|ξ|²/(2√n(1 + P²))` on the
/// square `[−p_box, p_box]²` for the model `χ^{1/k} = (1 + |p|²)^{(k−q)/(2k)}`
/// with `n = 2`, where `P` is the largest `|p|` in the box.
///
/// `resolution` is the number of sample points per axis, endpoints included.
pub fn check_ivochkina_condition(k: usize, q: f64, p_box: f64, resolution: usize) -> Result<IvochkinaResult> {
    if k < 1 {
        return Err(Error::Domain("k must be positive".into()));
    }
    if resolution < 16 {
        return Err(Error::InvalidProblem(format!("scan needs at least 16 points per axis, got {resolution}")));
    }
    if !(p_box.is_finite() && p_box > 0.0 && q.is_finite()) {
        return Err(Error::InvalidProblem(format!("invalid scan parameters p_box = {p_box}, q = {q}")));
    }
    let n = 2.0_f64;
    let gamma = (k as f64 - q) / (2.0 * k as f64);
    let p_max2 = 2.0 * p_box * p_box;
    let bound = 1.0 / (2.0 * n.sqrt() * (1.0 + p_max2));
    let mut worst = IvochkinaResult { holds: true, worst_margin: f64::INFINITY, worst_point: [0.0, 0.0] };
    let step = 2.0 * p_box / (resolution - 1) as f64;
    for i in 0..resolution {
        for j in 0..resolution {
            let p = [-p_box + i as f64 * step, -p_box + j as f64 * step];
            let s = p[0] * p[0] + p[1] * p[1];
            let psi = (1.0 + s).powf(gamma);
            // Hessian of (1+|p|²)^γ: tangential 2ψ', radial 2ψ' + 4sψ''
            let tangential = 2.0 * gamma * (1.0 + s).powf(gamma - 1.0);
            let radial = 2.0 * gamma * (1.0 + s).powf(gamma - 2.0) * (1.0 + (2.0 * gamma - 1.0) * s);
            let mu = tangential.min(radial);
            let margin = k as f64 * mu + psi * bound;
            if margin < worst.worst_margin {
                worst.worst_margin = margin;
                worst.worst_point = p;
            }
        }
    }
    worst.holds = worst.worst_margin >= 0.0;
    Ok(worst)
}

/// Campaign over several `(n, k)` pairs with a shared seed and `α` list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    #[serde(default = "default_n_values")]
    pub n_values: Vec<usize>,
    /// Cone orders; every `k` in `2..=n` when absent.
    #[serde(default)]
    pub k_values: Option<Vec<usize>>,
    #[serde(default = "default_alphas")]
    pub alpha_list: Vec<f64>,
    /// Each `p < 1` adds `α = 1/(1 − p)`.
    #[serde(default = "default_p_values")]
    pub p_values: Vec<f64>,
    #[serde(default = "default_sample_count")]
    pub sample_count: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_box")]
    pub spectrum_box: [f64; 2],
    #[serde(default = "default_scale")]
    pub direction_scale: f64,
}

fn default_n_values() -> Vec<usize> {
    (2..=6).collect()
}
fn default_alphas() -> Vec<f64> {
    vec![0.25, 0.5, 1.0, 2.0]
}
fn default_p_values() -> Vec<f64> {
    vec![-1.0, 0.5]
}
fn default_sample_count() -> usize {
    10_000
}
fn default_box() -> [f64; 2] {
    [-1.0, 2.0]
}
fn default_scale() -> f64 {
    1.0
}

impl Default for CampaignConfig {
    fn default() -> Self {
        Self {
            n_values: default_n_values(),
            k_values: None,
            alpha_list: default_alphas(),
            p_values: default_p_values(),
            sample_count: default_sample_count(),
            seed: 0,
            spectrum_box: default_box(),
            direction_scale: default_scale(),
        }
    }
}

impl CampaignConfig {
    /// `α` list with the exponents from `p_values` appended, duplicates removed.
    pub fn alphas(&self) -> Result<Vec<f64>> {
        let mut out: Vec<f64> = Vec::new();
        for p in &self.p_values {
            if !(p.is_finite() && *p < 1.0) {
                return Err(Error::InvalidProblem(format!("p = {p} gives no positive alpha = 1/(1-p)")));
            }
        }
        let derived = self.p_values.iter().map(|p| 1.0 / (1.0 - p));
        for a in self.alpha_list.iter().copied().chain(derived) {
            if !out.contains(&a) {
                out.push(a);
            }
        }
        Ok(out)
    }

    pub fn cases(&self) -> Result<Vec<SampleConfig>> {
        let alpha_list = self.alphas()?;
        let n_max = self.n_values.iter().copied().max().unwrap_or(0);
        if let Some(k) = self.k_values.iter().flatten().find(|&&k| k > n_max) {
            return Err(Error::InvalidProblem(format!("k = {k} exceeds every n (k <= n is required)")));
        }
        let mut cases = Vec::new();
        for &n in &self.n_values {
            let ks: Vec<usize> = match &self.k_values {
                Some(ks) => ks.iter().copied().filter(|&k| k <= n).collect(),
                None => (2..=n).collect(),
            };
            for k in ks {
                let cfg = SampleConfig {
                    n,
                    k,
                    alpha_list: alpha_list.clone(),
                    sample_count: self.sample_count,
                    seed: self.seed,
                    spectrum_box: self.spectrum_box,
                    direction_scale: self.direction_scale,
                };
                cfg.validate()?;
                cases.push(cfg);
            }
        }
        if cases.is_empty() {
            return Err(Error::InvalidProblem("campaign has no (n, k) cases".into()));
        }
        Ok(cases)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KindSummary {
    pub n: usize,
    pub k: usize,
    pub kind: CheckKind,
    pub records: usize,
    pub passed: usize,
    pub failed: usize,
    pub inconclusive: usize,
    /// Smallest margin among conclusive records.
    pub worst_margin: f64,
    pub worst_seed_index: Option<usize>,
    pub worst_alpha: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CampaignSummary {
    pub seed: u64,
    pub alphas: Vec<f64>,
    pub sample_count: usize,
    pub total_records: usize,
    pub kinds: Vec<KindSummary>,
    /// Samples where the Krylov check passed but `gll` failed for the same `α`.
    pub implication_violations: usize,
    pub hard_failures: usize,
}

impl CampaignSummary {
    pub fn all_passed(&self) -> bool {
        self.hard_failures == 0
    }

    pub fn failures_of(&self, kind: CheckKind) -> usize {
        self.kinds.iter().filter(|s| s.kind == kind).map(|s| s.failed).sum()
    }
}

fn csv_header(max_n: usize) -> String {
    let mut cols: Vec<String> = [
        "kind", "n", "k", "alpha", "seed_index", "lhs", "rhs", "margin", "tolerance", "pass", "inconclusive",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    cols.extend((1..=max_n).map(|i| format!("lambda_{i}")));
    for i in 1..=max_n {
        for j in i..=max_n {
            cols.push(format!("b_{i}_{j}"));
        }
    }
    cols.join(",")
}

fn csv_row(r: &CheckRecord, index: usize, max_n: usize) -> String {
    use std::fmt::Write as _;
    let n = r.lambda.n();
    let mut s = String::with_capacity(64 * (max_n + 4));
    let _ = write!(
        s,
        "{},{},{},{:.16e},{},{:.16e},{:.16e},{:.16e},{:.16e},{},{}",
        r.kind.name(),
        n,
        r.k,
        r.alpha,
        index,
        r.lhs,
        r.rhs,
        r.margin,
        r.tolerance,
        r.pass,
        r.inconclusive
    );
    for i in 0..max_n {
        s.push(',');
        if i < n {
            let _ = write!(s, "{:.16e}", r.lambda.values()[i]);
        }
    }
    for i in 0..max_n {
        for j in i..max_n {
            s.push(',');
            if j < n {
                let _ = write!(s, "{:.16e}", r.b.get(i, j));
            }
        }
    }
    s
}

/// Runs every case, streams all records to `out` as CSV and returns the summary.
///
/// Samples are checked in parallel in fixed-size chunks and written in index
/// order, so the output does not depend on the thread count.
pub fn run_campaign<W: Write>(cfg: &CampaignConfig, out: &mut W) -> Result<CampaignSummary> {
    let cases = cfg.cases()?;
    let max_n = cases.iter().map(|c| c.n).max().unwrap_or(2);
    writeln!(out, "{}", csv_header(max_n))?;
    let mut kinds = Vec::new();
    let mut implication_violations = 0;
    let mut total_records = 0;
    for case in &cases {
        let mut sums: Vec<KindSummary> = [CheckKind::Gll, CheckKind::GllSum, CheckKind::Krylov]
            .into_iter()
            .map(|kind| KindSummary {
                n: case.n,
                k: case.k,
                kind,
                records: 0,
                passed: 0,
                failed: 0,
                inconclusive: 0,
                worst_margin: f64::INFINITY,
                worst_seed_index: None,
                worst_alpha: None,
            })
            .collect();
        let mut start = 0;
        while start < case.sample_count {
            let end = (start + CHUNK).min(case.sample_count);
            let chunk: Vec<Vec<CheckRecord>> = (start..end)
                .into_par_iter()
                .map(|i| check_sample(case, i))
                .collect::<Result<_>>()?;
            for (offset, records) in chunk.iter().enumerate() {
                let index = start + offset;
                for r in records {
                    let s = &mut sums[r.kind as usize];
                    s.records += 1;
                    if r.inconclusive {
                        s.inconclusive += 1;
                    } else {
                        if r.pass {
                            s.passed += 1;
                        } else {
                            s.failed += 1;
                        }
                        if r.margin < s.worst_margin {
                            s.worst_margin = r.margin;
                            s.worst_seed_index = Some(index);
                            s.worst_alpha = Some(r.alpha);
                        }
                    }
                    writeln!(out, "{}", csv_row(r, index, max_n))?;
                }
                for pair in records.chunks(3) {
                    let (gll, krylov) = (&pair[0], &pair[2]);
                    if !krylov.inconclusive && !gll.inconclusive && krylov.pass && !gll.pass {
                        implication_violations += 1;
                    }
                }
                total_records += records.len();
            }
            start = end;
        }
        kinds.extend(sums);
    }
    let hard_failures = kinds.iter().map(|s| s.failed).sum::<usize>() + implication_violations;
    Ok(CampaignSummary {
        seed: cfg.seed,
        alphas: cfg.alphas()?,
        sample_count: cfg.sample_count,
        total_records,
        kinds,
        implication_violations,
        hard_failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn spec(v: &[f64]) -> Spectrum {
        Spectrum::new(v.to_vec()).unwrap()
    }

    fn cfg(n: usize, k: usize, lo: f64) -> SampleConfig {
        SampleConfig {
            n,
            k,
            alpha_list: vec![1.0],
            sample_count: 10,
            seed: 7,
            spectrum_box: [lo, 2.0],
            direction_scale: 1.0,
        }
    }

    #[test]
    fn gll_closed_form_example() {
        let r = check_gll(&spec(&[1.0, 1.0, 1.0]), &SymTensor2::identity(3), 1.0, 2).unwrap();
        assert_relative_eq!(r.lhs, 6.0, epsilon = 1e-10);
        assert_relative_eq!(r.rhs, 12.0, epsilon = 1e-12);
        assert_relative_eq!(r.margin, 6.0, epsilon = 1e-10);
        assert!(r.pass && !r.inconclusive);
    }

    #[test]
    fn zero_direction_is_equality() {
        let l = spec(&[0.5, 1.5, -0.2, 2.0]);
        let zero = SymTensor2::zeros(4);
        for alpha in [0.25, 1.0, 2.0] {
            let r = check_gll(&l, &zero, alpha, 3).unwrap();
            assert_eq!((r.lhs, r.rhs, r.margin), (0.0, 0.0, 0.0));
            assert!(r.pass);
            let kv = check_krylov_convexity(&l, &zero, alpha, 3).unwrap();
            assert_eq!(kv.value, 0.0);
        }
    }

    #[test]
    fn level_direction_has_nonpositive_lhs() {
        // diagonal B with dσ_k[B]/σ_k = dσ_1[B]/σ_1 makes rhs vanish
        let v = [0.7, 1.3, 2.1, 0.4];
        let l = spec(&v);
        let k = 3;
        let all = sigma_all(&v);
        let g: Vec<f64> = (0..4).map(|i| sigma_deleted(&v, i, k - 1) / all[k] - 1.0 / all[1]).collect();
        let d0 = [0.3, -1.0, 0.5, 0.8];
        let gg: f64 = g.iter().map(|x| x * x).sum();
        let proj: f64 = g.iter().zip(&d0).map(|(a, b)| a * b).sum::<f64>() / gg;
        let d: Vec<f64> = d0.iter().zip(&g).map(|(x, gi)| x - proj * gi).collect();
        let b = SymTensor2::diagonal(&d).unwrap();
        let r = check_gll(&l, &b, 1.0, k).unwrap();
        assert!(r.rhs.abs() < 1e-12);
        assert!(r.lhs <= 1e-9);
        assert!(r.pass);
    }

    #[test]
    fn gll_rejects_points_outside_cone() {
        let err = check_gll(&spec(&[1.0, -2.0, 0.5]), &SymTensor2::identity(3), 1.0, 2);
        assert!(matches!(err, Err(Error::ConeViolation { .. })));
    }

    #[test]
    fn krylov_radial_direction_closed_form() {
        // along (1+t)λ the ratio is (1+t)^{−(k−1)}·r₀, so the α-th power has
        // second derivative β(β+1)·f(0) with β = α(k−1)
        let v = [0.6, 1.1, 1.7];
        let l = spec(&v);
        let b = SymTensor2::diagonal(&v).unwrap();
        let all = sigma_all(&v);
        for (k, alpha) in [(2, 0.5), (2, 1.0), (3, 0.25), (3, 2.0)] {
            let beta = alpha * (k as f64 - 1.0);
            let f0 = (all[1] / all[k]).powf(alpha);
            let kv = check_krylov_convexity(&l, &b, alpha, k).unwrap();
            assert!(!kv.inconclusive);
            assert_relative_eq!(kv.value, beta * (beta + 1.0) * f0, max_relative = 1e-7);
        }
    }

    #[test]
    fn krylov_traceless_direction_is_convex() {
        let l = spec(&[1.0, 1.0, 1.0]);
        // zero trace and zero dσ_2 at the identity
        let b = SymTensor2::from_rows(&[
            vec![1.0, 0.3, 0.0],
            vec![0.3, -1.0, 0.2],
            vec![0.0, 0.2, 0.0],
        ])
        .unwrap();
        let kv = check_krylov_convexity(&l, &b, 1.0, 2).unwrap();
        assert!(!kv.inconclusive);
        assert!(kv.value >= -1e-9);
    }

    #[test]
    fn krylov_sign_matches_gll_margin() {
        // f''/f = α·margin/σ_k exactly
        let c = cfg(4, 3, -0.5);
        let mut rng = c.rng_for(0);
        for _ in 0..20 {
            let l = sample_gamma_k(&c, &mut rng).unwrap();
            let b = sample_direction(4, 1.0, &mut rng);
            for alpha in [0.25, 2.0] {
                let r = check_gll(&l, &b, alpha, 3).unwrap();
                let kv = check_krylov_convexity(&l, &b, alpha, 3).unwrap();
                let all = sigma_all(l.values());
                let f0 = (all[1] / all[3]).powf(alpha);
                let predicted = alpha * f0 * r.margin / all[3];
                assert!(
                    (kv.value - predicted).abs() <= 1e-6 * (predicted.abs() + f0),
                    "{} vs {predicted}",
                    kv.value
                );
            }
        }
    }

    #[test]
    fn sampling_examples() {
        let c = cfg(4, 2, 0.1);
        let mut rng = c.rng_for(3);
        let l = sample_gamma_k(&c, &mut rng).unwrap();
        assert!(l.values().iter().all(|x| (0.1..2.0).contains(x)));

        let c = cfg(3, 2, -1.0);
        let mut rng = c.rng_for(0);
        for _ in 0..200 {
            let l = sample_gamma_k(&c, &mut rng).unwrap();
            let all = sigma_all(l.values());
            assert!(all[1] > 0.0 && all[2] > 0.0);
        }

        let a: Vec<_> = (0..5).map(|i| sample_gamma_k(&c, &mut c.rng_for(i)).unwrap()).collect();
        let b: Vec<_> = (0..5).map(|i| sample_gamma_k(&c, &mut c.rng_for(i)).unwrap()).collect();
        assert_eq!(a, b);

        let hostile = SampleConfig { spectrum_box: [-100.0, 1e-3], ..cfg(8, 8, 0.0) };
        assert!(matches!(sample_gamma_k(&hostile, &mut hostile.rng_for(0)), Err(Error::Sampling(_))));
    }

    #[test]
    fn config_validation() {
        assert!(cfg(3, 2, -1.0).validate().is_ok());
        assert!(cfg(3, 4, -1.0).validate().is_err());
        assert!(cfg(9, 2, -1.0).validate().is_err());
        assert!(SampleConfig { alpha_list: vec![0.0], ..cfg(3, 2, -1.0) }.validate().is_err());
    }

    #[test]
    fn alpha_list_is_deduplicated() {
        let c = CampaignConfig::default();
        assert_eq!(c.alphas().unwrap(), vec![0.25, 0.5, 1.0, 2.0]);
        assert_eq!(c.cases().unwrap().len(), 1 + 2 + 3 + 4 + 5);
    }

    #[test]
    fn ivochkina_examples() {
        let r = check_ivochkina_condition(2, -1.0, 1.0, 33).unwrap();
        assert!(r.holds && r.worst_margin > 0.0);
        assert!(check_ivochkina_condition(2, 0.0, 3.0, 33).unwrap().holds);
        let r = check_ivochkina_condition(2, 1.0, 3.0, 33).unwrap();
        assert!(!r.holds && r.worst_margin < 0.0);
        assert!(check_ivochkina_condition(2, 1.0, 3.0, 8).is_err());
    }

    #[test]
    fn empty_campaign() {
        let c = CampaignConfig { sample_count: 0, ..Default::default() };
        let mut buf = Vec::new();
        let s = run_campaign(&c, &mut buf).unwrap();
        assert!(s.all_passed());
        assert_eq!(s.total_records, 0);
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 1);
    }

    #[test]
    fn small_campaign_passes_and_is_deterministic() {
        let c = CampaignConfig {
            n_values: vec![2, 3, 4],
            sample_count: 40,
            seed: 11,
            ..Default::default()
        };
        let (mut a, mut b) = (Vec::new(), Vec::new());
        let sa = run_campaign(&c, &mut a).unwrap();
        let sb = run_campaign(&c, &mut b).unwrap();
        assert_eq!(a, b);
        assert_eq!(sa, sb);
        assert!(sa.all_passed(), "{sa:#?}");
        assert_eq!(sa.total_records, 6 * 40 * 3 * 4);
        let text = String::from_utf8(a).unwrap();
        let header = text.lines().next().unwrap();
        assert!(header.starts_with("kind,n,k,alpha,seed_index,lhs,rhs,margin"));
        assert!(header.ends_with("b_4_4"));
    }
}
