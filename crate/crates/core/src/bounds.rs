//! Explicit constants and Berry–Esseen bound formulas.
//!
//! The universal constants in front of every bound are not known; each
//! report multiplies by a user-supplied `scale_C` (default 1) and is marked
//! as an uncertified shape. All values are assembled in log-space so that
//! huge constants such as `e^{r}` with `r ≈ 26` never overflow silently:
//! `value` may be `inf` while `log_value` stays finite.

use std::collections::BTreeMap;
use std::f64::consts::{E, LN_2};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::autocov::AutocovarianceModel;
use crate::error::{Error, Result};
use crate::hermite::ThetaParams;

const UNCERTIFIED: &str = "scale_C is user supplied; the value is the bound's shape, not a certified bound";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Distance {
    #[serde(rename = "dR")]
    Rectangles,
    #[serde(rename = "dC")]
    Convex,
    #[serde(rename = "dW")]
    Wasserstein,
}

impl Distance {
    pub fn tag(&self) -> &'static str {
        match self {
            Self::Rectangles => "dR",
            Self::Convex => "dC",
            Self::Wasserstein => "dW",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "dR" | "dr" | "rect" => Ok(Self::Rectangles),
            "dC" | "dc" | "convex" => Ok(Self::Convex),
            "dW" | "dw" | "wasserstein" => Ok(Self::Wasserstein),
            other => Err(Error::invalid(format!("unknown distance '{other}' (expected dR, dC or dW)"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundReport {
    pub distance: Distance,
    pub formula_id: String,
    pub value: f64,
    pub log_value: f64,
    pub admissible: bool,
    pub inputs: Map<String, Value>,
    /// Named multiplicative pieces of the bound, for auditing.
    pub factors: BTreeMap<String, f64>,
    #[serde(rename = "scale_C")]
    pub scale_c: f64,
    pub notes: Vec<String>,
}

impl BoundReport {
    fn new(distance: Distance, formula_id: &str, log_value: f64, admissible: bool, scale_c: f64) -> Self {
        let mut notes = vec![UNCERTIFIED.to_string()];
        if !admissible {
            notes.push("theta is not admissible for this distance; value not certified".to_string());
        }
        Self {
            distance,
            formula_id: formula_id.to_string(),
            value: log_value.exp(),
            log_value,
            admissible,
            inputs: Map::new(),
            factors: BTreeMap::new(),
            scale_c,
            notes,
        }
    }

    fn input(mut self, key: &str, v: Value) -> Self {
        self.inputs.insert(key.to_string(), v);
        self
    }

    fn factor(mut self, key: &str, v: f64) -> Self {
        self.factors.insert(key.to_string(), v);
        self
    }
}

/// Principal branch of the Lambert W function by Halley iteration.
pub fn lambert_w(x: f64) -> Result<f64> {
    let branch = -1.0 / E;
    if x.is_nan() || x < branch {
        return Err(Error::invalid(format!("Lambert W is real only for x >= -1/e, got {x}")));
    }
    if x == branch {
        return Ok(-1.0);
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x.is_infinite() {
        return Ok(f64::INFINITY);
    }
    let mut w = if x < -0.32 {
        let p = (2.0 * (E * x + 1.0)).sqrt();
        -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p
    } else if x < E {
        x.ln_1p() * (1.0 - x.ln_1p() / (2.0 + x.ln_1p()))
    } else {
        let l1 = x.ln();
        l1 - l1.ln()
    };
    let target = 1e-14 * (1.0 + x.abs());
    let mut best = (f64::INFINITY, w);
    for _ in 0..100 {
        let ew = w.exp();
        let f = w * ew - x;
        if f.abs() < best.0 {
            best = (f.abs(), w);
        }
        if f.abs() <= target {
            return Ok(w);
        }
        let wp1 = w + 1.0;
        let denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1);
        let next = w - f / denom;
        if !next.is_finite() || next == w {
            break;
        }
        w = next;
    }
    Ok(best.1)
}

/// `W(e^{-1 + 1/(2e)})`.
pub fn w_star() -> f64 {
    static W: OnceLock<f64> = OnceLock::new();
    *W.get_or_init(|| lambert_w((-1.0 + 1.0 / (2.0 * E)).exp()).expect("argument is positive"))
}

fn kappa_offset() -> f64 {
    24f64.ln() / 2.0 + 5.0 / (4.0 * E)
}

/// `Υ = ln(W(e^{-1+1/(2e)}) / e^{1/(2e)})/2 - ln(24)/2 - 5/(4e) ≈ -2.709`.
pub fn upsilon() -> f64 {
    static U: OnceLock<f64> = OnceLock::new();
    *U.get_or_init(|| (w_star() / (1.0 / (2.0 * E)).exp()).ln() / 2.0 - kappa_offset())
}

/// `|ln x| ∨ 1`.
pub fn log_plus(x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::invalid(format!("log_plus needs x > 0, got {x}")));
    }
    Ok(x.ln().abs().max(1.0))
}

/// `log_plus` of `e^{ln_x}`, valid for any finite `ln_x`.
fn log_plus_ln(ln_x: f64) -> f64 {
    ln_x.abs().max(1.0)
}

fn check_beta(beta: f64) -> Result<()> {
    if (0.5..=1.0).contains(&beta) {
        Ok(())
    } else {
        Err(Error::invalid(format!("beta must lie in [1/2, 1], got {beta}")))
    }
}

/// `r = 2e^{1/(2e)} β e^{(κ + ln(24)/2 + 5/(4e))/β} 2^{1/(2β)}`.
pub fn r_constant(beta: f64, kappa: f64) -> Result<f64> {
    check_beta(beta)?;
    Ok(2.0 * (1.0 / (2.0 * E)).exp() * beta * ((kappa + kappa_offset()) / beta).exp() * 2f64.powf(1.0 / (2.0 * beta)))
}

/// `ln ψ_{β,κ}(d)` with `ψ(d) = log_+^{1/(2β)}(d) e^{r log_+^{1/(2β)}(d)}`.
pub fn ln_psi(beta: f64, kappa: f64, d: usize) -> Result<f64> {
    if d == 0 {
        return Err(Error::invalid("dimension must be at least 1"));
    }
    let r = r_constant(beta, kappa)?;
    let lp = log_plus(d as f64)?;
    let p = lp.powf(1.0 / (2.0 * beta));
    Ok(p.ln() + r * p)
}

pub fn psi(beta: f64, kappa: f64, d: usize) -> Result<f64> {
    Ok(ln_psi(beta, kappa, d)?.exp())
}

/// Scale with the explicit dependence on `c`: `c² log_+(c)` times `base` for
/// the hyper-rectangle bound and `c²` times `base` for the convex bound.
pub fn c_dependent_scale(base: f64, c: f64, distance: Distance) -> Result<f64> {
    match distance {
        Distance::Rectangles => Ok(base * c * c * log_plus(c)?),
        Distance::Convex => Ok(base * c * c),
        Distance::Wasserstein => Err(Error::invalid("no explicit c-dependence is available for dW")),
    }
}

fn check_scale(scale: f64) -> Result<f64> {
    if scale > 0.0 && scale.is_finite() {
        Ok(scale.ln())
    } else {
        Err(Error::invalid(format!("scale_C must be positive and finite, got {scale}")))
    }
}

fn check_n_d(n: usize, d: usize) -> Result<()> {
    if n == 0 || d == 0 {
        return Err(Error::invalid("n and d must be at least 1"));
    }
    Ok(())
}

fn theta_json(theta: &ThetaParams) -> Value {
    json!({ "beta": theta.beta, "kappa": theta.kappa, "c": theta.c })
}

/// `ln(n^{-1/2} ‖ρ_n‖_1^{3/2})`.
fn ln_x(n: usize, rho_norm_1: f64) -> Result<f64> {
    if !(rho_norm_1 >= 1.0) {
        return Err(Error::invalid(format!("rho_norm_1 must be >= 1, got {rho_norm_1}")));
    }
    Ok(-0.5 * (n as f64).ln() + 1.5 * rho_norm_1.ln())
}

fn admissible_for(theta: &ThetaParams, distance: Distance) -> bool {
    match distance {
        Distance::Rectangles => theta.admissible_dr,
        Distance::Convex | Distance::Wasserstein => theta.admissible_dc,
    }
}

/// Bounds for `Σ_n = cov(S_n)`.
#[allow(clippy::too_many_arguments)]
pub fn bound_main(
    distance: Distance,
    n: usize,
    d: usize,
    rho_norm_1: f64,
    sigma_star_sq: f64,
    sigma_dagger: Option<f64>,
    theta: &ThetaParams,
    scale: f64,
) -> Result<BoundReport> {
    check_n_d(n, d)?;
    let ln_c = check_scale(scale)?;
    if !(sigma_star_sq > 0.0) {
        return Err(Error::invalid(format!("sigma_star_sq must be positive, got {sigma_star_sq}")));
    }
    let lx = ln_x(n, rho_norm_1)?;
    let ln_s = sigma_star_sq.ln();
    let (log_value, id, factors) = match distance {
        Distance::Rectangles => {
            let lpsi = ln_psi(theta.beta, theta.kappa, d)?;
            let lv = ln_c + lpsi + lx + log_plus_ln(lx).ln() + log_plus_ln(ln_s).ln() - ln_s;
            (lv, "main_cov_dR", vec![("psi", lpsi.exp())])
        }
        Distance::Convex => (ln_c + 65.0 / 24.0 * (d as f64).ln() + lx - 1.5 * ln_s, "main_cov_dC", vec![]),
        Distance::Wasserstein => {
            let sd = sigma_dagger.ok_or_else(|| Error::invalid("dW bound needs sigma_dagger"))?;
            if !(sd > 0.0) {
                return Err(Error::invalid("sigma_dagger must be positive"));
            }
            (ln_c + 1.5 * (d as f64).ln() + lx + sd.ln() - ln_s, "main_cov_dW", vec![])
        }
    };
    let mut rep = BoundReport::new(distance, id, log_value, admissible_for(theta, distance), scale)
        .input("n", json!(n))
        .input("d", json!(d))
        .input("rho_norm_1", json!(rho_norm_1))
        .input("sigma_star_sq", json!(sigma_star_sq))
        .input("sigma_dagger", json!(sigma_dagger))
        .input("theta", theta_json(theta))
        .factor("x", lx.exp());
    for (k, v) in factors {
        rep = rep.factor(k, v);
    }
    Ok(rep)
}

/// Spectral data of a fixed covariance `Σ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaData {
    /// Smallest eigenvalue `σ_*²`.
    pub sigma_star_sq: f64,
    /// Square root of the largest eigenvalue of `Σ`.
    pub sigma_dagger: Option<f64>,
    /// `σ̲ = (min_i Σ_ii)^{1/2}`.
    pub sigma_min: Option<f64>,
    /// `σ̄ = (max_i Σ_ii)^{1/2}`.
    pub sigma_max: Option<f64>,
}

impl SigmaData {
    /// All quantities equal to one.
    pub fn unit() -> Self {
        Self { sigma_star_sq: 1.0, sigma_dagger: Some(1.0), sigma_min: Some(1.0), sigma_max: Some(1.0) }
    }

    fn validate(&self) -> Result<()> {
        if !(self.sigma_star_sq > 0.0) {
            return Err(Error::invalid(format!("sigma_star_sq must be positive, got {}", self.sigma_star_sq)));
        }
        Ok(())
    }

    /// `ln( log_+(σ̿ σ̃_*² / σ̲̲) / σ̃_*² )` with the small-dimension conventions.
    fn ln_rect_sigma_factor(&self, d: usize) -> Result<f64> {
        let lo = self.sigma_min.ok_or_else(|| Error::invalid("dR bound needs sigma_min"))?;
        let hi = self.sigma_max.ok_or_else(|| Error::invalid("dR bound needs sigma_max"))?;
        if !(lo > 0.0 && hi >= lo) {
            return Err(Error::invalid("need 0 < sigma_min <= sigma_max"));
        }
        let small = d <= 2;
        let lo2 = if small { lo.min(1.0) } else { lo };
        let hi2 = if small { hi.max(1.0) } else { hi };
        let s2 = if small { self.sigma_star_sq.min(1.0) } else { self.sigma_star_sq };
        let arg = hi2.ln() + s2.ln() - lo2.ln();
        Ok(log_plus_ln(arg).ln() - s2.ln())
    }

    fn ln_convex_sigma_factor(&self) -> f64 {
        (self.sigma_star_sq.powf(-1.5) + 1.0).ln()
    }

    fn ln_wasserstein_sigma_factor(&self) -> Result<f64> {
        let sd = self.sigma_dagger.ok_or_else(|| Error::invalid("dW bound needs sigma_dagger"))?;
        Ok(sd.ln() - self.sigma_star_sq.ln())
    }
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Bounds against the limiting covariance, including the tail terms
/// `Σ_{|k|≥n} |ρ(k)|^m` and `Σ_{|k|<n} (|k|/n)|ρ(k)|^m`.
#[allow(clippy::too_many_arguments)]
pub fn bound_fixed_cov(
    distance: Distance,
    n: usize,
    d: usize,
    model: &AutocovarianceModel,
    m: u32,
    theta: &ThetaParams,
    sigma: &SigmaData,
    scale: f64,
    tol: f64,
) -> Result<BoundReport> {
    check_n_d(n, d)?;
    if m < 2 {
        return Err(Error::RankTooLow { rank: m as usize, required: 2 });
    }
    let ln_c = check_scale(scale)?;
    sigma.validate()?;
    let rho1 = model.truncated_norm(n, 1.0);
    let lx = ln_x(n, rho1)?;
    let tail = model.tail_sum(n, m, tol)?;
    let weighted = model.weighted_partial_sum(n, m);
    let ln_tail = tail.ln();
    let ln_weighted = weighted.ln();
    let ld = (d as f64).ln();
    let (log_value, id, ln_delta) = match distance {
        Distance::Rectangles => {
            let lp = log_plus(d as f64)?;
            let r = r_constant(theta.beta, theta.kappa)?;
            let first = lx + r * lp.powf(1.0 / (2.0 * theta.beta)) - lp.ln();
            let ln_delta = log_sum_exp(&[first, ln_tail, ln_weighted]);
            let lv = ln_c + lp.ln() + ln_delta + log_plus_ln(ln_delta).ln() + sigma.ln_rect_sigma_factor(d)?;
            (lv, "fixed_cov_dR", ln_delta)
        }
        Distance::Convex => {
            let ln_delta = log_sum_exp(&[lx, ln_tail, ln_weighted]);
            (ln_c + 65.0 / 24.0 * ld + ln_delta + sigma.ln_convex_sigma_factor(), "fixed_cov_dC", ln_delta)
        }
        Distance::Wasserstein => {
            let ln_delta = log_sum_exp(&[lx, ln_tail, ln_weighted]);
            (ln_c + 1.5 * ld + ln_delta + sigma.ln_wasserstein_sigma_factor()?, "fixed_cov_dW", ln_delta)
        }
    };
    Ok(BoundReport::new(distance, id, log_value, admissible_for(theta, distance), scale)
        .input("n", json!(n))
        .input("d", json!(d))
        .input("m", json!(m))
        .input("model", serde_json::to_value(model)?)
        .input("theta", theta_json(theta))
        .input("sigma", serde_json::to_value(sigma)?)
        .factor("x", lx.exp())
        .factor("rho_norm_1", rho1)
        .factor("tail", tail)
        .factor("weighted", weighted)
        .factor("delta", ln_delta.exp()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DependenceCase {
    Srd,
    Lrd,
}

/// Reduced bounds under power-law decay `|ρ(k)| ≤ c̃|k|^{-μ}` (slowly varying
/// factor one). The constants absorb `c̃`, `μ` and `‖ρ‖_1`.
#[allow(clippy::too_many_arguments)]
pub fn bound_srd_lrd(
    case: DependenceCase,
    distance: Distance,
    n: usize,
    d: usize,
    mu: f64,
    theta: &ThetaParams,
    sigma: &SigmaData,
    scale: f64,
) -> Result<BoundReport> {
    check_n_d(n, d)?;
    let ln_c = check_scale(scale)?;
    sigma.validate()?;
    let ln_n = (n as f64).ln();
    let (ln_rate, exponent) = match case {
        DependenceCase::Srd => {
            if !(mu >= 1.0) {
                return Err(Error::invalid(format!("short-range case needs mu >= 1, got {mu}")));
            }
            let base = -0.5 * ln_n;
            let lr = match distance {
                Distance::Rectangles => base + log_plus_ln(ln_n).ln(),
                _ => base,
            };
            (lr, -0.5)
        }
        DependenceCase::Lrd => {
            if !(mu > 2.0 / 3.0 && mu < 1.0) {
                return Err(Error::invalid(format!("long-range case needs mu in (2/3, 1), got {mu}")));
            }
            let e = (3.0 * mu - 2.0) / 2.0;
            let ly = -e * ln_n;
            let lr = match distance {
                Distance::Rectangles => ly + log_plus_ln(ly).ln(),
                _ => ly,
            };
            (lr, -e)
        }
    };
    let ld = (d as f64).ln();
    let (ln_dim, ln_sig) = match distance {
        Distance::Rectangles => (ln_psi(theta.beta, theta.kappa, d)?, sigma.ln_rect_sigma_factor(d)?),
        Distance::Convex => (65.0 / 24.0 * ld, sigma.ln_convex_sigma_factor()),
        Distance::Wasserstein => (1.5 * ld, sigma.ln_wasserstein_sigma_factor()?),
    };
    let tag = match case {
        DependenceCase::Srd => "srd",
        DependenceCase::Lrd => "lrd",
    };
    let mut rep = BoundReport::new(
        distance,
        &format!("{tag}_{}", distance.tag()),
        ln_c + ln_dim + ln_rate + ln_sig,
        admissible_for(theta, distance),
        scale,
    )
    .input("n", json!(n))
    .input("d", json!(d))
    .input("mu", json!(mu))
    .input("theta", theta_json(theta))
    .input("sigma", serde_json::to_value(sigma)?)
    .factor("rate", ln_rate.exp())
    .factor("rate_exponent", exponent)
    .factor("dimension", ln_dim.exp())
    .factor("sigma", ln_sig.exp());
    rep.notes.push("constants absorb ctilde, mu and the l1 norm of rho; slowly varying factor set to one".to_string());
    Ok(rep)
}

/// Method-of-moments bound `C d^{125/24} e^{d ln 3} n^{-1/2} ‖ρ_n‖_1^{3/2}`
/// under the convex distance.
pub fn bound_mom(n: usize, d: usize, rho_norm_1: f64, scale: f64) -> Result<BoundReport> {
    check_n_d(n, d)?;
    let ln_c = check_scale(scale)?;
    let lx = ln_x(n, rho_norm_1)?;
    let ln3 = 3f64.ln();
    let lv = ln_c + 125.0 / 24.0 * (d as f64).ln() + d as f64 * ln3 + lx;
    let mut rep = BoundReport::new(Distance::Convex, "mom_dC", lv, true, scale)
        .input("n", json!(n))
        .input("d", json!(d))
        .input("rho_norm_1", json!(rho_norm_1))
        .factor("x", lx.exp())
        .factor("exponent_ln3", ln3)
        .factor("exponent_prior_3ln2_over_2", 1.5 * LN_2);
    rep.notes.push(format!(
        "exponential dimension rate ln 3 = {ln3:.5} compared with the earlier 3 ln 2 / 2 = {:.5}",
        1.5 * LN_2
    ));
    Ok(rep)
}

fn kappa_eq(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12
}

/// `(2e ln(2d² - 1 + e^{N-2}) / (N-1))^{N-1}` in log form.
pub fn ln_finite_dimension_factor(d: usize, big_n: usize) -> f64 {
    let nm1 = (big_n - 1) as f64;
    let df = d as f64;
    let arg = 2.0 * df * df - 1.0 + ((big_n as f64) - 2.0).exp();
    nm1 * (2.0 * E * arg.ln() / nm1).ln()
}

/// `Ψ(N, β)` for the convex bound with finite expansions.
pub fn finite_psi(big_n: usize, beta: f64, kappa: f64) -> Result<f64> {
    let l3 = 3f64.ln() / 2.0;
    if beta > 0.5 || kappa < -l3 - 1e-12 {
        return Ok(1.0);
    }
    if kappa_eq(kappa, -l3) {
        let a: f64 = (2..=big_n).map(|q| (q as f64).sqrt()).sum();
        let b: f64 = (2..=big_n).map(|q| 1.0 / (q as f64).sqrt()).sum();
        return Ok(a * b);
    }
    if kappa <= 0.0 {
        let nf = big_n as f64;
        return Ok(nf.powf(2.5) * ((2.0 * kappa + 3f64.ln()) * nf).exp());
    }
    Err(Error::invalid(format!("finite-expansion bound with beta = 1/2 needs kappa <= 0, got {kappa}")))
}

/// Bounds for polynomial `φ_i` of degree at most `N`.
#[allow(clippy::too_many_arguments)]
pub fn bound_finite_expansion(
    distance: Distance,
    n: usize,
    d: usize,
    big_n: usize,
    theta: &ThetaParams,
    rho_norm_1: f64,
    sigma_star_sq: f64,
    scale: f64,
) -> Result<BoundReport> {
    check_n_d(n, d)?;
    if big_n < 2 {
        return Err(Error::invalid(format!("expansion degree N must be at least 2, got {big_n}")));
    }
    if theta.beta == 0.5 && theta.kappa > 0.0 {
        return Err(Error::invalid("finite-expansion bound with beta = 1/2 needs kappa <= 0"));
    }
    let ln_c = check_scale(scale)?;
    if !(sigma_star_sq > 0.0) {
        return Err(Error::invalid(format!("sigma_star_sq must be positive, got {sigma_star_sq}")));
    }
    let lx = ln_x(n, rho_norm_1)?;
    let ln_s = sigma_star_sq.ln();
    let l3 = 3f64.ln() / 2.0;
    let nf = big_n as f64;
    match distance {
        Distance::Rectangles => {
            let ln_dim = ln_finite_dimension_factor(d, big_n);
            let mid = theta.beta == 0.5 && theta.kappa >= -l3 - 1e-12 && theta.kappa <= 0.0;
            let ln_ind = if mid { 3.5 * nf.ln() + nf * (2.0 * theta.kappa + 3f64.ln()) } else { 0.0 };
            let ln_delta = lx + ln_dim + ln_ind;
            let lp = log_plus(d as f64)?;
            let lv = ln_c + lp.ln() + ln_delta + log_plus_ln(ln_delta).ln() + log_plus_ln(ln_s).ln() - ln_s;
            Ok(BoundReport::new(distance, "finite_expansion_dR", lv, true, scale)
                .input("n", json!(n))
                .input("d", json!(d))
                .input("N", json!(big_n))
                .input("theta", theta_json(theta))
                .input("rho_norm_1", json!(rho_norm_1))
                .input("sigma_star_sq", json!(sigma_star_sq))
                .factor("x", lx.exp())
                .factor("dimension_factor", ln_dim.exp())
                .factor("indicator_factor", ln_ind.exp())
                .factor("delta", ln_delta.exp()))
        }
        Distance::Convex => {
            let big_psi = finite_psi(big_n, theta.beta, theta.kappa)?;
            let lv = ln_c + 65.0 / 24.0 * (d as f64).ln() + big_psi.ln() + lx - 1.5 * ln_s;
            Ok(BoundReport::new(distance, "finite_expansion_dC", lv, true, scale)
                .input("n", json!(n))
                .input("d", json!(d))
                .input("N", json!(big_n))
                .input("theta", theta_json(theta))
                .input("rho_norm_1", json!(rho_norm_1))
                .input("sigma_star_sq", json!(sigma_star_sq))
                .factor("x", lx.exp())
                .factor("Psi", big_psi))
        }
        Distance::Wasserstein => Err(Error::invalid("no finite-expansion bound for dW")),
    }
}

/// Regimes for [`admissibility`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "regime", rename_all = "snake_case")]
pub enum Regime {
    Fixed { distance: Distance },
    /// `d(n) ≤ n^λ` under short-range dependence.
    PolySrd { distance: Distance, lambda: f64 },
    /// `d(n) ≤ n^λ` under long-range dependence with exponent `μ ∈ (2/3, 1)`.
    PolyLrd { distance: Distance, lambda: f64, mu: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdmissibilityReport {
    pub admissible: bool,
    /// Binding threshold: on `κ` for `β = 1/2` and the hyper-rectangle
    /// distance, on `λ` for the convex distance with growing dimension.
    pub threshold: Option<f64>,
    pub threshold_on: String,
    /// Supremum of attainable rate exponents `ζ_λ` (not attained).
    pub zeta_sup: Option<f64>,
    pub notes: Vec<String>,
}

pub fn admissibility(theta: &ThetaParams, regime: Regime) -> Result<AdmissibilityReport> {
    check_beta(theta.beta)?;
    let half = theta.beta == 0.5;
    let l3 = -(3f64.ln()) / 2.0;
    let kappa_gate = |threshold: f64| -> (bool, Option<f64>) {
        if half {
            (theta.kappa < threshold, Some(threshold))
        } else {
            (true, None)
        }
    };
    let rep = match regime {
        Regime::Fixed { distance } => {
            let t = match distance {
                Distance::Rectangles => upsilon(),
                _ => l3,
            };
            let (ok, thr) = kappa_gate(t);
            AdmissibilityReport {
                admissible: ok,
                threshold: thr,
                threshold_on: "kappa".into(),
                zeta_sup: None,
                notes: Vec::new(),
            }
        }
        Regime::PolySrd { distance, lambda } | Regime::PolyLrd { distance, lambda, .. } => {
            if !(lambda > 0.0) {
                return Err(Error::invalid(format!("lambda must be positive, got {lambda}")));
            }
            let a = match regime {
                Regime::PolyLrd { mu, .. } => {
                    if !(mu > 2.0 / 3.0 && mu < 1.0) {
                        return Err(Error::invalid(format!("mu must lie in (2/3, 1), got {mu}")));
                    }
                    3.0 * mu - 2.0
                }
                _ => 1.0,
            };
            match distance {
                Distance::Rectangles => {
                    let t = (a / (4.0 * (1.0 / (2.0 * E)).exp() * lambda)).ln() / 2.0 - kappa_offset();
                    let t = if matches!(regime, Regime::PolyLrd { .. }) { t.min(upsilon()) } else { t };
                    let (ok, thr) = kappa_gate(t);
                    let zeta = if half { a / 2.0 - lambda * r_constant(theta.beta, theta.kappa)? } else { a / 2.0 };
                    AdmissibilityReport {
                        admissible: ok,
                        threshold: thr,
                        threshold_on: "kappa".into(),
                        zeta_sup: Some(zeta),
                        notes: Vec::new(),
                    }
                }
                _ => {
                    let t = a * 12.0 / 65.0;
                    let (kok, _) = kappa_gate(l3);
                    AdmissibilityReport {
                        admissible: kok && lambda < t,
                        threshold: Some(t),
                        threshold_on: "lambda".into(),
                        zeta_sup: Some(a / 2.0 - 65.0 * lambda / 24.0),
                        notes: if half && !kok { vec![format!("kappa must also be below {l3}")] } else { Vec::new() },
                    }
                }
            }
        }
    };
    Ok(rep)
}
