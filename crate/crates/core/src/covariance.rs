//! Exact covariance of `S_n` through Mehler's identity
//!
//! `E[S_{n,i} S_{n,j}] = Σ_ℓ ℓ! a_{i,ℓ} a_{j,ℓ} n^{-1} Σ_{k,k'} ρ(k - k')^ℓ`,
//!
//! eigenvalue certificates, the limiting covariance and the correlation
//! criteria for characteristic-function statistics.
//!
//! Pairs of ECF or EMGF coordinates have a closed-form Mehler kernel
//! `K_ij(r) = Σ_ℓ ℓ! a_{i,ℓ} a_{j,ℓ} r^ℓ` (cosh, sinh, exp); every other pair
//! sums the series, truncated where the decay majorant
//! `c_i c_j e^{(κ_i+κ_j)ℓ} (ℓ!)^{1-β_i-β_j} ‖ρ_n‖_1` bounds the remainder.

use serde::{Deserialize, Serialize};

use crate::autocov::AutocovarianceModel;
use crate::bounds::SigmaData;
use crate::error::{Error, Result};
use crate::hermite::{fit_theta, ln_factorial, CatalogEntry, HermiteExpansion, ThetaParams, BETA_GRID, FIT_Q_MAX, Q_CAP};
use crate::linalg::{as_rows, symmetric_eigenvalues, Matrix};
use crate::statistic::{StatisticKind, SubordinatedStatistic};

pub const EIGEN_TOL: f64 = 1e-12;
pub const PSD_TOL: f64 = 1e-10;
pub const DEFAULT_COV_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Truncation {
    /// Largest series order used; `None` when every pair had a closed form.
    #[serde(rename = "Q_used")]
    pub q_used: Option<usize>,
    /// Largest majorant bound on the neglected remainder.
    pub tail: f64,
    pub closed_form_pairs: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CovarianceReport {
    pub d: usize,
    pub n: usize,
    #[serde(with = "as_rows")]
    pub sigma: Matrix,
    #[serde(with = "as_rows")]
    pub lambda: Matrix,
    /// Smallest eigenvalue of the correlation matrix `Λ_n`.
    pub sigma_star_sq: f64,
    /// Smallest eigenvalue of `Σ_n`.
    pub sigma_star_sq_cov: f64,
    /// Largest eigenvalue of `Σ_n`.
    pub sigma_dagger_sq: f64,
    /// Largest eigenvalue of `Λ_n`.
    pub sigma_dagger_sq_corr: f64,
    /// `1 - ‖Λ_n - I‖_∞`.
    pub gershgorin_lower: f64,
    pub eigenvalues_corr: Vec<f64>,
    /// Negative eigenvalues within tolerance were clipped to zero.
    pub clipped: bool,
    pub truncation: Truncation,
}

impl CovarianceReport {
    /// Builds the report from a covariance matrix.
    pub fn from_sigma(sigma: Matrix, n: usize, truncation: Truncation) -> Result<Self> {
        let d = sigma.rows;
        let ev_sigma = symmetric_eigenvalues(&sigma, EIGEN_TOL)?;
        let tr = sigma.trace().abs().max(f64::MIN_POSITIVE);
        let min_s = ev_sigma[0];
        if min_s < -PSD_TOL * tr {
            return Err(Error::NotPsd { min_eigenvalue: min_s });
        }
        let lambda = sigma.correlation()?;
        let ev = symmetric_eigenvalues(&lambda, EIGEN_TOL)?;
        let clipped = min_s < 0.0 || ev[0] < 0.0;
        if ev[0] < -PSD_TOL * d as f64 {
            return Err(Error::NotPsd { min_eigenvalue: ev[0] });
        }
        Ok(Self {
            d,
            n,
            sigma_star_sq: ev[0].max(0.0),
            sigma_star_sq_cov: min_s.max(0.0),
            sigma_dagger_sq: ev_sigma[d - 1],
            sigma_dagger_sq_corr: ev[d - 1],
            gershgorin_lower: 1.0 - lambda.inf_norm_minus_identity(),
            eigenvalues_corr: ev,
            clipped,
            truncation,
            sigma,
            lambda,
        })
    }

    /// `σ̲ = (min_i Σ_ii)^{1/2}`.
    pub fn sigma_min(&self) -> f64 {
        self.sigma.diagonal().into_iter().fold(f64::INFINITY, f64::min).sqrt()
    }

    /// `σ̄ = (max_i Σ_ii)^{1/2}`.
    pub fn sigma_max(&self) -> f64 {
        self.sigma.diagonal().into_iter().fold(0.0, f64::max).sqrt()
    }

    /// Inputs for the bounds that use `σ_*²` of the correlation matrix.
    pub fn sigma_data(&self) -> SigmaData {
        SigmaData {
            sigma_star_sq: self.sigma_star_sq,
            sigma_dagger: Some(self.sigma_dagger_sq.sqrt()),
            sigma_min: Some(self.sigma_min()),
            sigma_max: Some(self.sigma_max()),
        }
    }

    /// Inputs for the bounds that use `σ_*²` of `Σ_n` itself.
    pub fn sigma_data_cov(&self) -> SigmaData {
        SigmaData { sigma_star_sq: self.sigma_star_sq_cov, ..self.sigma_data() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovOptions {
    pub q_max: usize,
    pub tol: f64,
    /// Use closed-form kernels for ECF/EMGF pairs.
    pub closed_form: bool,
}

impl Default for CovOptions {
    fn default() -> Self {
        Self { q_max: Q_CAP, tol: DEFAULT_COV_TOL, closed_form: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Family {
    Cos,
    Sin,
    Exp,
}

#[derive(Debug, Clone, Copy)]
struct ClosedKernel {
    family: Family,
    prod: f64,
    ln_pref: f64,
}

fn closed_kernel(a: &HermiteExpansion, b: &HermiteExpansion) -> Option<Option<ClosedKernel>> {
    let fam = |e: &HermiteExpansion| match e.catalog_entry()? {
        CatalogEntry::EcfCos { lambda } => Some((Family::Cos, *lambda)),
        CatalogEntry::EcfSin { lambda } => Some((Family::Sin, *lambda)),
        CatalogEntry::Emgf { lambda } => Some((Family::Exp, *lambda)),
        _ => None,
    };
    let (fa, la) = fam(a)?;
    let (fb, lb) = fam(b)?;
    let half = 0.5 * (la * la + lb * lb);
    match (fa, fb) {
        (Family::Cos, Family::Cos) => Some(Some(ClosedKernel { family: Family::Cos, prod: la * lb, ln_pref: -half })),
        (Family::Sin, Family::Sin) => Some(Some(ClosedKernel { family: Family::Sin, prod: la * lb, ln_pref: -half })),
        (Family::Exp, Family::Exp) => Some(Some(ClosedKernel { family: Family::Exp, prod: la * lb, ln_pref: half })),
        // cosine terms are even, sine terms odd
        (Family::Cos, Family::Sin) | (Family::Sin, Family::Cos) => Some(None),
        _ => None,
    }
}

impl ClosedKernel {
    /// `K(r)` without the Hermite orders below two.
    fn eval(&self, r: f64) -> f64 {
        let x = self.prod * r;
        let ax = x.abs();
        match self.family {
            Family::Cos => {
                if ax > 30.0 {
                    (self.ln_pref + ax - std::f64::consts::LN_2 + 2.0 * (-(-ax).exp()).ln_1p()).exp()
                } else {
                    let s = (0.5 * x).sinh();
                    self.ln_pref.exp() * 2.0 * s * s
                }
            }
            Family::Sin => {
                let v = if ax < 1e-2 {
                    let x2 = x * x;
                    x * x2 / 6.0 * (1.0 + x2 / 20.0 * (1.0 + x2 / 42.0 * (1.0 + x2 / 72.0)))
                } else if ax > 30.0 {
                    return x.signum() * (self.ln_pref + ax - std::f64::consts::LN_2 + (-(-2.0 * ax).exp() - 2.0 * ax * (-ax).exp()).ln_1p()).exp();
                } else {
                    x.sinh() - x
                };
                self.ln_pref.exp() * v
            }
            Family::Exp => {
                let v = if ax < 1e-3 {
                    let mut term = x * x / 2.0;
                    let mut sum = term;
                    for k in 3..9 {
                        term *= x / k as f64;
                        sum += term;
                    }
                    sum
                } else if x > 30.0 {
                    return (self.ln_pref + x + (-(1.0 + x) * (-x).exp()).ln_1p()).exp();
                } else {
                    x.exp_m1() - x
                };
                self.ln_pref.exp() * v
            }
        }
    }
}

/// `ln Σ_{ℓ>q} e^{ln_c + kℓ + b ln ℓ!}` for `b ≤ 0`.
fn ln_majorant_tail(q: usize, ln_c: f64, k: f64, b: f64) -> Result<f64> {
    if b == 0.0 {
        if k >= 0.0 {
            return Err(Error::NonConvergentMajorant(
                "beta = 1/2 with kappa >= 0 has no summable majorant; use a finite expansion".into(),
            ));
        }
        let first = ln_c + k * (q + 1) as f64;
        return Ok(first - (-(k.exp_m1())).ln());
    }
    let mut l = q + 1;
    let mut term = ln_c + k * l as f64 + b * ln_factorial(l);
    let mut acc = term;
    for _ in 0..1_000_000 {
        let delta = k + b * ((l + 1) as f64).ln();
        if delta < 0.0 && term < acc - 40.0 {
            // increments are nonincreasing, so a geometric tail dominates
            let rest = term + delta - (-(delta.exp_m1())).ln();
            return Ok(log_add(acc, rest));
        }
        l += 1;
        term += delta;
        acc = log_add(acc, term);
    }
    Err(Error::NonConvergentMajorant("majorant tail did not settle".into()))
}

fn log_add(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

struct SeriesPlan {
    q: usize,
    tail: f64,
}

fn fit_single(e: &HermiteExpansion) -> Result<ThetaParams> {
    fit_theta(std::slice::from_ref(e), &BETA_GRID, FIT_Q_MAX)
}

fn series_plan(
    a: &HermiteExpansion,
    b: &HermiteExpansion,
    thetas: (&Option<ThetaParams>, &Option<ThetaParams>),
    rho_norm_1: f64,
    opts: &CovOptions,
) -> Result<SeriesPlan> {
    let lo = a.rank.max(b.rank);
    let finite_deg = match (a.degree(), b.degree()) {
        (Some(x), Some(y)) => Some(x.min(y)),
        (Some(x), None) | (None, Some(x)) => Some(x),
        (None, None) => None,
    };
    if let Some(deg) = finite_deg {
        return Ok(SeriesPlan { q: deg.max(lo), tail: 0.0 });
    }
    let (ta, tb) = match thetas {
        (Some(ta), Some(tb)) => (ta, tb),
        _ => return Err(Error::invalid("missing decay fit for an infinite expansion")),
    };
    let ln_c = ta.c.ln() + tb.c.ln() + rho_norm_1.ln();
    let k = ta.kappa + tb.kappa;
    let beta = 1.0 - ta.beta - tb.beta;
    let ln_tol = opts.tol.ln();
    let mut q = lo;
    loop {
        let lt = ln_majorant_tail(q, ln_c, k, beta)?;
        if lt <= ln_tol || q >= opts.q_max {
            return Ok(SeriesPlan { q, tail: lt.exp() });
        }
        q += 1;
    }
}

/// Number of pairs `(k, k')` with `k ∈ [a0, a1)`, `k' ∈ [b0, b1)`, `k' - k = v`.
fn pair_count(a: (usize, usize), b: (usize, usize), v: i64) -> f64 {
    let lo = (a.0 as i64).max(b.0 as i64 - v);
    let hi = (a.1 as i64).min(b.1 as i64 - v);
    (hi - lo).max(0) as f64
}

/// `Σ_ℓ ℓ! a_{i,ℓ} a_{j,ℓ} r^ℓ` for `ℓ` up to `q`.
fn series_kernel_coeffs(a: &HermiteExpansion, b: &HermiteExpansion, q: usize) -> Vec<f64> {
    (0..=q)
        .map(|l| {
            if l < a.rank.max(b.rank) {
                return 0.0;
            }
            let (sa, la) = a.signed_log_coeff(l);
            let (sb, lb) = b.signed_log_coeff(l);
            if sa == 0.0 || sb == 0.0 {
                0.0
            } else {
                sa * sb * (ln_factorial(l) + la + lb).exp()
            }
        })
        .collect()
}

fn eval_poly_powers(coeffs: &[f64], r: f64) -> f64 {
    // Horner is unstable for alternating huge coefficients; powers stay explicit
    let mut p = 1.0;
    let mut s = 0.0;
    for &c in coeffs {
        if c != 0.0 {
            s += c * p;
        }
        p *= r;
    }
    s
}

/// Decay fits for infinite expansions. A failed fit (e.g. a constant that
/// underflows) only matters if a pair later needs the series.
fn thetas_for(stat: &SubordinatedStatistic) -> Result<Vec<Option<ThetaParams>>> {
    Ok(stat.coords.iter().map(|e| if e.is_finite() { None } else { fit_single(e).ok() }).collect())
}

/// Exact `Σ_n = cov(S_n)` with default options.
pub fn exact_cov(stat: &SubordinatedStatistic, model: &AutocovarianceModel, n: usize, q_max: usize, tol: f64) -> Result<CovarianceReport> {
    exact_cov_with(stat, model, n, &CovOptions { q_max, tol, closed_form: true })
}

pub fn exact_cov_with(stat: &SubordinatedStatistic, model: &AutocovarianceModel, n: usize, opts: &CovOptions) -> Result<CovarianceReport> {
    let sigma_and_trunc = exact_sigma(stat, model, n, opts)?;
    CovarianceReport::from_sigma(sigma_and_trunc.0, n, sigma_and_trunc.1)
}

fn exact_sigma(stat: &SubordinatedStatistic, model: &AutocovarianceModel, n: usize, opts: &CovOptions) -> Result<(Matrix, Truncation)> {
    if n == 0 {
        return Err(Error::invalid("n must be at least 1"));
    }
    model.validate()?;
    let d = stat.d;
    let rho: Vec<f64> = model.lags(n);
    let rho_norm_1 = model.truncated_norm(n, 1.0);
    let blocks = stat.blocks(n);
    let thetas = thetas_for(stat)?;
    let nf = n as f64;
    let mut sigma = Matrix::zeros(d, d);
    let mut trunc = Truncation { q_used: None, tail: 0.0, closed_form_pairs: 0 };
    for i in 0..d {
        for j in i..d {
            let (a, b) = (&stat.coords[i], &stat.coords[j]);
            let closed = if opts.closed_form { closed_kernel(a, b) } else { None };
            let kernel: Box<dyn Fn(f64) -> f64> = match closed {
                Some(Some(k)) => {
                    trunc.closed_form_pairs += 1;
                    Box::new(move |r| k.eval(r))
                }
                Some(None) => {
                    trunc.closed_form_pairs += 1;
                    Box::new(|_| 0.0)
                }
                None => {
                    let plan = series_plan(a, b, (&thetas[i], &thetas[j]), rho_norm_1, opts)?;
                    trunc.q_used = Some(trunc.q_used.map_or(plan.q, |q: usize| q.max(plan.q)));
                    trunc.tail = trunc.tail.max(plan.tail);
                    let coeffs = series_kernel_coeffs(a, b, plan.q);
                    Box::new(move |r| eval_poly_powers(&coeffs, r))
                }
            };
            let (bi, bj) = (blocks[i], blocks[j]);
            let mut s = 0.0;
            for v in -(n as i64 - 1)..(n as i64) {
                let cnt = pair_count(bi, bj, v);
                if cnt > 0.0 {
                    s += cnt * kernel(rho[v.unsigned_abs() as usize]);
                }
            }
            sigma[(i, j)] = s / nf;
            sigma[(j, i)] = s / nf;
        }
    }
    Ok((sigma, trunc))
}

/// The `n → ∞` covariance `Σ_ij = Σ_{ℓ ≥ m} ℓ! a_{i,ℓ} a_{j,ℓ} Σ_{k∈ℤ} ρ(k)^ℓ`.
///
/// For Breuer–Major statistics this is `σ² diag(t_1 - t_0, .., t_d - t_{d-1})`.
pub fn limiting_cov(stat: &SubordinatedStatistic, model: &AutocovarianceModel, m: u32, tol: f64) -> Result<Matrix> {
    model.validate()?;
    if m < 1 {
        return Err(Error::invalid("m must be at least 1"));
    }
    let min_rank = stat.coords.iter().map(|c| c.rank).min().unwrap_or(0);
    if (min_rank as u32) < m {
        return Err(Error::RankTooLow { rank: min_rank, required: m as usize });
    }
    // absolute summability of |ρ|^m, also the majorant's lag factor
    let rho_m = 1.0 + model.tail_sum(1, m, tol)?;
    let thetas = thetas_for(stat)?;
    let opts = CovOptions { q_max: Q_CAP, tol, closed_form: false };
    let entry = |a: &HermiteExpansion, b: &HermiteExpansion, ta: &Option<ThetaParams>, tb: &Option<ThetaParams>| -> Result<f64> {
        let plan = series_plan(a, b, (ta, tb), rho_m, &opts)?;
        let coeffs = series_kernel_coeffs(a, b, plan.q);
        let mut s = 0.0;
        for (l, &c) in coeffs.iter().enumerate() {
            if c != 0.0 {
                s += c * model.signed_power_sum(l as u32, tol)?;
            }
        }
        Ok(s)
    };
    let d = stat.d;
    if let StatisticKind::BreuerMajor { partition, .. } = &stat.kind {
        let s2 = entry(&stat.coords[0], &stat.coords[0], &thetas[0], &thetas[0])?;
        let widths: Vec<f64> = partition.windows(2).map(|w| s2 * (w[1] - w[0])).collect();
        return Ok(Matrix::diag(&widths));
    }
    let mut out = Matrix::zeros(d, d);
    for i in 0..d {
        for j in i..d {
            let v = entry(&stat.coords[i], &stat.coords[j], &thetas[i], &thetas[j])?;
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscrepancyMode {
    /// `max_ij |Λ_ij - B_ij / √(A_ii A_jj)|`.
    MaxCorrelationGap,
    /// `(Σ_ij (Λ_ij - B_ij / √(A_ii A_jj))²)^{1/2}`.
    HilbertSchmidt,
}

/// Discrepancy between the covariance `a` of the approximating Gaussian and
/// the covariance `b` of the statistic, both normalised by the diagonal of `a`.
pub fn cov_discrepancy(a: &Matrix, b: &Matrix, mode: DiscrepancyMode) -> Result<f64> {
    if a.rows != b.rows || a.cols != b.cols {
        return Err(Error::DimensionMismatch { expected: a.rows, got: b.rows });
    }
    let lam = a.correlation()?;
    let diag = a.diagonal();
    let mut max = 0.0f64;
    let mut ss = 0.0;
    for i in 0..a.rows {
        for j in 0..a.cols {
            let g = (lam[(i, j)] - b[(i, j)] / (diag[i] * diag[j]).sqrt()).abs();
            max = max.max(g);
            ss += g * g;
        }
    }
    Ok(match mode {
        DiscrepancyMode::MaxCorrelationGap => max,
        DiscrepancyMode::HilbertSchmidt => ss.sqrt(),
    })
}

fn zeta_denominator(tau: f64) -> f64 {
    let part = |p: f64, lead: f64| {
        let pt = p.powf(tau);
        (pt - 0.5 * pt * pt).exp() * (lead + 1.0 / (tau * p.powf(tau - 1.0) * (pt - 1.0)))
    };
    part(2.0, 2.0) + part(3.0, 1.0)
}

/// `ζ(τ)` for `λ_i = i^τ`, `τ ≥ 1`.
pub fn zeta_tau(tau: f64) -> Result<f64> {
    if !(tau >= 1.0) || !tau.is_finite() {
        return Err(Error::invalid(format!("tau must be >= 1, got {tau}")));
    }
    let num = 2.0 * 0.5f64.exp() * (1.0 - (-1.0f64).exp()) * (-(-(4f64.powf(tau))).exp()).ln_1p().exp();
    Ok(num / zeta_denominator(tau))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ZetaCriterion {
    pub tau: f64,
    pub l2_norm_sq: f64,
    pub zeta: f64,
    /// `ξ = ‖ρ‖²_{ℓ²} / ζ(τ)`; the criterion holds when `ξ < 1`.
    pub xi: f64,
    pub holds: bool,
    /// `1 - ξ`, a lower bound on `inf_{n,d} σ_*²` when positive.
    pub eigen_lower_bound: f64,
    pub note: Option<String>,
}

pub fn zeta_criterion(model: &AutocovarianceModel, tau: f64, tol: f64) -> Result<ZetaCriterion> {
    let l2 = model.l2_norm_sq(tol)?;
    let zeta = zeta_tau(tau)?;
    let xi = l2 / zeta;
    let holds = xi < 1.0;
    Ok(ZetaCriterion {
        tau,
        l2_norm_sq: l2,
        zeta,
        xi,
        holds,
        eigen_lower_bound: 1.0 - xi,
        note: (!holds).then(|| "criterion fails; increase tau".to_string()),
    })
}

/// `2^{2-2H} H (1-2H) |v|^{2H-2}`, valid for `|v| ≥ 2` and `H < 1/2`.
pub fn fgn_decay_bound(hurst: f64, v: i64) -> f64 {
    2f64.powf(2.0 - 2.0 * hurst) * hurst * (1.0 - 2.0 * hurst) * (v.unsigned_abs() as f64).powf(2.0 * hurst - 2.0)
}

/// Analytic bound on `‖Λ_n - I‖_∞` for `λ_i = i^τ` under fGn with `H < 1/2`.
pub fn fgn_corr_bound(tau: f64) -> Result<f64> {
    Ok(1.5 / zeta_tau(tau)?)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FgnCell {
    pub n: usize,
    pub d: usize,
    pub inf_norm: f64,
    pub margin: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FgnCheckReport {
    pub hurst: f64,
    pub tau: f64,
    pub analytic_bound: f64,
    pub cells: Vec<FgnCell>,
    /// `min 1 - ‖Λ_n - I‖_∞` over the grid.
    pub min_margin: f64,
    pub exact_within_analytic: bool,
}

/// Exact `‖Λ_n - I‖_∞` for ECF-cos statistics with `λ_i = i^τ` over a grid.
pub fn fgn_corr_check(hurst: f64, tau: f64, n_grid: &[usize], d_grid: &[usize]) -> Result<FgnCheckReport> {
    if !(hurst > 0.0 && hurst < 0.5) {
        return Err(Error::invalid(format!("Hurst index must lie in (0, 1/2), got {hurst}")));
    }
    let analytic = fgn_corr_bound(tau)?;
    let model = AutocovarianceModel::Fgn { hurst };
    let mut cells = Vec::new();
    for &d in d_grid {
        let stat = SubordinatedStatistic::build(StatisticKind::EcfCos { lambdas: crate::statistic::power_lambdas(d, tau) })?;
        for &n in n_grid {
            let rep = exact_cov(&stat, &model, n, Q_CAP, DEFAULT_COV_TOL)?;
            let inf_norm = rep.lambda.inf_norm_minus_identity();
            cells.push(FgnCell { n, d, inf_norm, margin: 1.0 - inf_norm });
        }
    }
    let min_margin = cells.iter().map(|c| c.margin).fold(f64::INFINITY, f64::min);
    let exact_within_analytic = cells.iter().all(|c| c.inf_norm <= analytic);
    Ok(FgnCheckReport { hurst, tau, analytic_bound: analytic, cells, min_margin, exact_within_analytic })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::statistic::{power_lambdas, CoordinateFn};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn build(kind: StatisticKind) -> SubordinatedStatistic {
        SubordinatedStatistic::build(kind).unwrap()
    }

    #[test]
    fn mom_iid_is_identity() {
        let s = build(StatisticKind::Mom { d: 3 });
        for n in [1, 7, 100] {
            let r = exact_cov(&s, &AutocovarianceModel::Iid, n, 50, 1e-12).unwrap();
            for i in 0..3 {
                for j in 0..3 {
                    let t = if i == j { 1.0 } else { 0.0 };
                    assert!((r.sigma[(i, j)] - t).abs() < 1e-12);
                }
            }
            assert!((r.sigma_star_sq - 1.0).abs() < 1e-12);
            assert_eq!(r.truncation.tail, 0.0);
        }
    }

    /// Stationary cosh form with the `(1 - |v|/n)` weights.
    fn cosh_form(li: f64, lj: f64, model: &AutocovarianceModel, n: usize) -> f64 {
        let pref = (-(li * li + lj * lj) / 2.0).exp();
        (-(n as i64 - 1)..n as i64)
            .map(|v| {
                let w = 1.0 - v.unsigned_abs() as f64 / n as f64;
                w * pref * ((li * lj * model.rho(v)).cosh() - 1.0)
            })
            .sum()
    }

    #[test]
    fn ecf_cos_matches_cosh_form_and_series() {
        let model = AutocovarianceModel::Fgn { hurst: 0.3 };
        let lambdas = vec![0.7, 1.3, 2.0];
        let s = build(StatisticKind::EcfCos { lambdas: lambdas.clone() });
        let closed = exact_cov(&s, &model, 40, 200, 1e-14).unwrap();
        let series = exact_cov_with(&s, &model, 40, &CovOptions { q_max: 200, tol: 1e-14, closed_form: false }).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let oracle = cosh_form(lambdas[i], lambdas[j], &model, 40);
                assert_relative_eq!(closed.sigma[(i, j)], oracle, max_relative = 1e-10);
                assert_relative_eq!(series.sigma[(i, j)], oracle, max_relative = 1e-9);
            }
        }
        assert!(series.truncation.q_used.is_some());
        assert_eq!(closed.truncation.closed_form_pairs, 6);
    }

    #[test]
    fn sin_and_emgf_kernels_match_series() {
        let model = AutocovarianceModel::Ar1 { phi: -0.6 };
        for kind in [StatisticKind::EcfSin { lambdas: vec![0.5, 1.5] }, StatisticKind::Emgf { lambdas: vec![0.3, 1.0] }] {
            let s = build(kind);
            let a = exact_cov(&s, &model, 30, 200, 1e-14).unwrap();
            let b = exact_cov_with(&s, &model, 30, &CovOptions { q_max: 200, tol: 1e-14, closed_form: false }).unwrap();
            for i in 0..2 {
                for j in 0..2 {
                    assert_relative_eq!(a.sigma[(i, j)], b.sigma[(i, j)], max_relative = 1e-9, epsilon = 1e-15);
                }
            }
        }
    }

    #[test]
    fn closed_kernels_accurate_at_extremes() {
        let k = ClosedKernel { family: Family::Cos, prod: 1.0, ln_pref: 0.0 };
        assert_relative_eq!(k.eval(40.0), 40f64.cosh() - 1.0, max_relative = 1e-12);
        assert_relative_eq!(k.eval(1e-5), 0.5e-10, max_relative = 1e-9);
        let s = ClosedKernel { family: Family::Sin, prod: 1.0, ln_pref: 0.0 };
        assert_relative_eq!(s.eval(-35.0), (-35f64).sinh() + 35.0, max_relative = 1e-12);
        assert_relative_eq!(s.eval(1e-3), 1e-9 / 6.0, max_relative = 1e-9);
        let e = ClosedKernel { family: Family::Exp, prod: 2.0, ln_pref: 0.0 };
        assert_relative_eq!(e.eval(20.0), 40f64.exp() - 41.0, max_relative = 1e-12);
        assert_relative_eq!(e.eval(1e-6), 2e-12, max_relative = 1e-6);
    }

    #[test]
    fn limiting_examples() {
        let bm = build(StatisticKind::BreuerMajor {
            phi: CoordinateFn::Hermite { coeffs: vec![0.0, 0.0, 1.0] },
            partition: vec![0.0, 0.5, 1.0],
        });
        let l = limiting_cov(&bm, &AutocovarianceModel::Ar1 { phi: 0.5 }, 2, 1e-12).unwrap();
        assert_relative_eq!(l[(0, 0)], 0.5 * 10.0 / 3.0, max_relative = 1e-10);
        assert_eq!(l[(0, 1)], 0.0);
        let mom = build(StatisticKind::Mom { d: 4 });
        let l = limiting_cov(&mom, &AutocovarianceModel::Iid, 2, 1e-12).unwrap();
        assert!((0..4).all(|i| (0..4).all(|j| (l[(i, j)] - if i == j { 1.0 } else { 0.0 }).abs() < 1e-12)));
        let ecf = build(StatisticKind::EcfCos { lambdas: vec![1.0, 2.0] });
        let l = limiting_cov(&ecf, &AutocovarianceModel::Iid, 2, 1e-14).unwrap();
        let want = (-2.5f64).exp() * (2f64.cosh() - 1.0);
        assert_relative_eq!(l[(0, 1)], want, max_relative = 1e-10);
        let fgn = AutocovarianceModel::Fgn { hurst: 0.8 };
        assert!(limiting_cov(&mom, &fgn, 2, 1e-10).is_err());
    }

    #[test]
    fn exact_tends_to_limit() {
        let model = AutocovarianceModel::Ar1 { phi: 0.5 };
        let s = build(StatisticKind::EcfCos { lambdas: vec![1.0, 1.5] });
        let lim = limiting_cov(&s, &model, 2, 1e-13).unwrap();
        let r = exact_cov(&s, &model, 4000, 200, 1e-13).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((r.sigma[(i, j)] - lim[(i, j)]).abs() < 5e-3 * lim[(i, j)].abs().max(1e-3));
            }
        }
    }

    #[test]
    fn breuer_major_correlation_vanishes() {
        let bm = build(StatisticKind::BreuerMajor {
            phi: CoordinateFn::Hermite { coeffs: vec![0.0, 0.0, 1.0] },
            partition: vec![0.0, 0.25, 0.5, 0.75, 1.0],
        });
        let r = exact_cov(&bm, &AutocovarianceModel::Fgn { hurst: 0.6 }, 1 << 14, 50, 1e-12).unwrap();
        let off = (0..4).flat_map(|i| (0..4).map(move |j| (i, j))).filter(|(i, j)| i != j).map(|(i, j)| r.lambda[(i, j)].abs()).fold(0.0, f64::max);
        assert!(off < 0.02, "{off}");
    }

    #[test]
    fn discrepancy_examples() {
        let a = Matrix::identity(2);
        let b = Matrix::from_rows(&[vec![1.0, 0.1], vec![0.1, 1.0]]).unwrap();
        assert_eq!(cov_discrepancy(&a, &a, DiscrepancyMode::MaxCorrelationGap).unwrap(), 0.0);
        assert_relative_eq!(cov_discrepancy(&a, &b, DiscrepancyMode::MaxCorrelationGap).unwrap(), 0.1, max_relative = 1e-15);
        assert_relative_eq!(cov_discrepancy(&a, &b, DiscrepancyMode::HilbertSchmidt).unwrap(), 0.02f64.sqrt(), max_relative = 1e-15);
        assert!(cov_discrepancy(&a, &Matrix::identity(3), DiscrepancyMode::HilbertSchmidt).is_err());
    }

    #[test]
    fn zeta_examples() {
        let z1 = zeta_tau(1.0).unwrap();
        let hand = 2.0 * 0.5f64.exp() * (1.0 - (-1f64).exp()) * (1.0 - (-4f64).exp()) / (3.0 + 1.5 * (-1.5f64).exp());
        assert_relative_eq!(z1, hand, max_relative = 1e-14);
        assert!((z1 - 0.6136).abs() < 1e-4);
        assert!(zeta_tau(2.0).unwrap() > z1);
        assert!(zeta_tau(0.5).is_err());
        let c = zeta_criterion(&AutocovarianceModel::Ar1 { phi: 0.5 }, 1.0, 1e-12).unwrap();
        assert_relative_eq!(c.l2_norm_sq, 5.0 / 3.0, max_relative = 1e-12);
        assert!(!c.holds);
        assert!(c.note.is_some());
        assert!(fgn_corr_bound(1.302).unwrap() < 1.0);
    }

    #[test]
    fn fgn_grid_check() {
        let rep = fgn_corr_check(0.3, 1.302, &[64, 256, 1024], &[2, 4, 8]).unwrap();
        assert!(rep.exact_within_analytic);
        assert!(rep.min_margin > 0.0);
        let big = fgn_corr_check(0.3, 3.0, &[64, 256, 1024], &[2, 4, 8]).unwrap();
        for (a, b) in rep.cells.iter().zip(&big.cells) {
            assert!(b.inf_norm <= a.inf_norm, "n={} d={}", a.n, a.d);
        }
        let one = fgn_corr_check(0.3, 1.302, &[64], &[1]).unwrap();
        assert_eq!(one.cells[0].inf_norm, 0.0);
    }

    #[test]
    fn non_convergent_majorant_is_reported() {
        let e = HermiteExpansion::catalog(CatalogEntry::GaussDensityMod { sigma_sq: 0.2 }, 60).unwrap();
        let theta = ThetaParams::new(0.5, 0.1, 1.0).unwrap();
        let plan = series_plan(&e, &e, (&Some(theta), &Some(theta)), 1.0, &CovOptions::default());
        assert!(matches!(plan, Err(Error::NonConvergentMajorant(_))));
    }

    #[test]
    fn majorant_tail_matches_direct_sum() {
        let direct: f64 = (11..400).map(|l| (0.5 * l as f64 - ln_factorial(l)).exp()).sum();
        let lt = ln_majorant_tail(10, 0.0, 0.5, -1.0).unwrap();
        assert_relative_eq!(lt.exp(), direct, max_relative = 1e-12);
        let geo = ln_majorant_tail(3, 0.0, -0.5, 0.0).unwrap();
        assert_relative_eq!(geo.exp(), (-2.0f64).exp() / (1.0 - (-0.5f64).exp()), max_relative = 1e-12);
    }

    #[test]
    fn report_json_shape() {
        let s = build(StatisticKind::Mom { d: 2 });
        let r = exact_cov(&s, &AutocovarianceModel::Ar1 { phi: 0.3 }, 10, 50, 1e-12).unwrap();
        let v = serde_json::to_value(&r).unwrap();
        assert_eq!(v["sigma"].as_array().unwrap().len(), 2);
        assert!(v["truncation"].get("Q_used").is_some());
        for k in ["d", "n", "lambda", "sigma_star_sq", "sigma_dagger_sq", "gershgorin_lower"] {
            assert!(v.get(k).is_some(), "{k}");
        }
    }

    proptest! {
        #[test]
        fn eigen_2x2(r in -0.99f64..0.99) {
            let m = Matrix::from_rows(&[vec![1.0, r], vec![r, 1.0]]).unwrap();
            let ev = symmetric_eigenvalues(&m, EIGEN_TOL).unwrap();
            prop_assert!((ev[0] - (1.0 - r.abs())).abs() < 1e-12);
            prop_assert!((ev[1] - (1.0 + r.abs())).abs() < 1e-12);
        }

        #[test]
        fn gershgorin_certificate(
            hurst in 0.05f64..0.95, n in 2usize..200, d in 1usize..6, tau in 1.0f64..2.0
        ) {
            let s = build(StatisticKind::EcfCos { lambdas: power_lambdas(d, tau) });
            let r = exact_cov(&s, &AutocovarianceModel::Fgn { hurst }, n, 200, 1e-12).unwrap();
            prop_assert!(r.sigma_star_sq >= r.gershgorin_lower - 1e-12);
            prop_assert!(r.sigma_star_sq <= 1.0 + 1e-12);
            prop_assert!(r.lambda.diagonal().iter().all(|&x| x == 1.0));
        }

        #[test]
        fn fgn_decay_bound_holds(hurst in 0.01f64..0.49, v in 2i64..5000) {
            let m = AutocovarianceModel::Fgn { hurst };
            prop_assert!(m.rho(v).abs() <= fgn_decay_bound(hurst, v) * (1.0 + 1e-12));
        }
    }
}
