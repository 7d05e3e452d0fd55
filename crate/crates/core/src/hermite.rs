//! Probabilists' Hermite polynomials, Hermite expansions and the decay
//! parameters `θ = (β, κ, c)` with `|a_q| ≤ c e^{κq} / (q!)^β`.
//!
//! Internally polynomials are evaluated in the normalised form
//! `h_q = H_q / √q!`, which stays bounded where `H_q` itself overflows.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::bounds::upsilon;
use crate::error::{Error, Result};

/// Largest degree accepted by [`hermite_eval`].
pub const Q_CAP: usize = 200;
/// Relative threshold separating genuine coefficients from quadrature noise.
pub const RANK_TOL: f64 = 1e-10;
/// Quadrature coefficients at or below this size are reported as zero;
/// Golub–Welsch rules with a few hundred nodes are accurate to about 1e-11.
pub const QUADRATURE_NOISE: f64 = 1e-9;
/// Default `β` grid for [`fit_theta`].
pub const BETA_GRID: [f64; 6] = [0.5, 0.6, 0.7, 0.8, 0.9, 1.0];
/// Default number of coefficients examined by [`fit_theta`].
pub const FIT_Q_MAX: usize = 200;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

pub fn ln_factorial(q: usize) -> f64 {
    if q < 2 {
        0.0
    } else {
        ln_gamma(q as f64 + 1.0)
    }
}

/// `H_q(x)` by the three-term recurrence `H_{q+1} = x H_q - q H_{q-1}`.
pub fn hermite_eval(q: usize, x: f64) -> Result<f64> {
    if q > Q_CAP {
        return Err(Error::invalid(format!("Hermite degree {q} exceeds the cap {Q_CAP}")));
    }
    let (mut prev, mut cur) = (1.0, x);
    if q == 0 {
        return Ok(1.0);
    }
    for k in 1..q {
        let next = x * cur - k as f64 * prev;
        prev = cur;
        cur = next;
    }
    Ok(cur)
}

/// `h_0(x), .., h_{q_max}(x)` with `h_q = H_q/√q!`.
pub fn normalized_hermite_all(q_max: usize, x: f64, out: &mut Vec<f64>) {
    out.clear();
    out.push(1.0);
    if q_max == 0 {
        return;
    }
    out.push(x);
    for q in 1..q_max {
        let next = (x * out[q] - (q as f64).sqrt() * out[q - 1]) / ((q + 1) as f64).sqrt();
        out.push(next);
    }
}

/// Gauss–Hermite rule for the standard Gaussian measure (weights sum to one).
#[derive(Debug, Clone)]
pub struct GaussHermiteRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussHermiteRule {
    /// Golub–Welsch: eigen-decomposition of the Jacobi matrix of the
    /// physicists' weight `e^{-t²}`, mapped by `x = √2 t`.
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("quadrature needs at least one node"));
        }
        let mut d = vec![0.0; n];
        let mut e: Vec<f64> = (1..=n).map(|k| if k < n { (k as f64 / 2.0).sqrt() } else { 0.0 }).collect();
        let mut z0 = vec![0.0; n];
        z0[0] = 1.0;
        tridiagonal_ql(&mut d, &mut e, &mut z0)?;
        let mut pairs: Vec<(f64, f64)> =
            d.iter().zip(&z0).map(|(&t, &z)| (std::f64::consts::SQRT_2 * t, z * z)).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let total: f64 = pairs.iter().map(|p| p.1).sum();
        Ok(Self {
            nodes: pairs.iter().map(|p| p.0).collect(),
            weights: pairs.iter().map(|p| p.1 / total).collect(),
        })
    }

    /// Shared rule, computed once per size.
    pub fn cached(n: usize) -> Result<Arc<Self>> {
        static CACHE: OnceLock<Mutex<HashMap<usize, Arc<GaussHermiteRule>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        if let Some(rule) = cache.lock().expect("quadrature cache poisoned").get(&n) {
            return Ok(rule.clone());
        }
        let rule = Arc::new(Self::new(n)?);
        cache.lock().expect("quadrature cache poisoned").insert(n, rule.clone());
        Ok(rule)
    }

    /// `E[f(G)]` for `G ~ N(0,1)`.
    pub fn expect(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }
}

/// Implicit QL on a symmetric tridiagonal matrix (diagonal `d`, off-diagonal
/// `e[i]` between `i` and `i+1`), tracking only the first row of the
/// eigenvector matrix in `z0`.
fn tridiagonal_ql(d: &mut [f64], e: &mut [f64], z0: &mut [f64]) -> Result<()> {
    let n = d.len();
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 100 {
                return Err(Error::invalid("tridiagonal QL failed to converge"));
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut deflated = false;
            let mut i = m;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                let zf = z0[i + 1];
                z0[i + 1] = s * z0[i] + c * zf;
                z0[i] = c * z0[i] - s * zf;
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok(())
}

/// Closed-form expansions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum CatalogEntry {
    /// `cos(λx) - e^{-λ²/2}`.
    EcfCos { lambda: f64 },
    /// `sin(λx) - λx e^{-λ²/2}`.
    EcfSin { lambda: f64 },
    /// `e^{λx} - e^{λ²/2}(1 + λx)`.
    Emgf { lambda: f64 },
    /// `H_{i+1}(x) / √((i+1)!)`.
    MomHermite { i: usize },
    /// Density of `N(0, σ²)` minus its Gaussian mean `1/√(2π(σ²+1))`.
    GaussDensityMod { sigma_sq: f64 },
    /// `Φ(x/σ) - 1/2 - x/√(2π(σ²+1))`.
    GaussCdfMod { sigma_sq: f64 },
}

impl CatalogEntry {
    pub fn from_name(name: &str, param: f64) -> Result<Self> {
        let entry = match name {
            "ecf_cos" => Self::EcfCos { lambda: param },
            "ecf_sin" => Self::EcfSin { lambda: param },
            "emgf" => Self::Emgf { lambda: param },
            "mom_hermite" => {
                if param < 1.0 || param.fract() != 0.0 {
                    return Err(Error::invalid(format!("mom_hermite index must be a positive integer, got {param}")));
                }
                Self::MomHermite { i: param as usize }
            }
            "gauss_density_mod" => Self::GaussDensityMod { sigma_sq: param },
            "gauss_cdf_mod" => Self::GaussCdfMod { sigma_sq: param },
            other => return Err(Error::invalid(format!("unknown catalog entry '{other}'"))),
        };
        entry.validate()?;
        Ok(entry)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::EcfCos { .. } => "ecf_cos",
            Self::EcfSin { .. } => "ecf_sin",
            Self::Emgf { .. } => "emgf",
            Self::MomHermite { .. } => "mom_hermite",
            Self::GaussDensityMod { .. } => "gauss_density_mod",
            Self::GaussCdfMod { .. } => "gauss_cdf_mod",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::EcfCos { lambda } | Self::EcfSin { lambda } | Self::Emgf { lambda } => {
                if lambda > 0.0 && lambda.is_finite() {
                    Ok(())
                } else {
                    Err(Error::invalid(format!("lambda must be positive, got {lambda}")))
                }
            }
            Self::MomHermite { i } => {
                if i >= 1 {
                    Ok(())
                } else {
                    Err(Error::invalid("mom_hermite index starts at 1"))
                }
            }
            Self::GaussDensityMod { sigma_sq } | Self::GaussCdfMod { sigma_sq } => {
                if sigma_sq > 0.0 && sigma_sq.is_finite() {
                    Ok(())
                } else {
                    Err(Error::invalid(format!("sigma^2 must be positive, got {sigma_sq}")))
                }
            }
        }
    }

    /// `(sign, ln|a_q|)`; sign 0 marks an exact zero.
    pub fn signed_log_coeff(&self, q: usize) -> (f64, f64) {
        let qf = q as f64;
        match *self {
            Self::EcfCos { lambda } => {
                if q < 2 || q % 2 == 1 {
                    return (0.0, f64::NEG_INFINITY);
                }
                let sign = if (q / 2) % 2 == 0 { 1.0 } else { -1.0 };
                (sign, qf * lambda.ln() - 0.5 * lambda * lambda - ln_factorial(q))
            }
            Self::EcfSin { lambda } => {
                if q < 3 || q % 2 == 0 {
                    return (0.0, f64::NEG_INFINITY);
                }
                let sign = if ((q - 1) / 2) % 2 == 0 { 1.0 } else { -1.0 };
                (sign, qf * lambda.ln() - 0.5 * lambda * lambda - ln_factorial(q))
            }
            Self::Emgf { lambda } => {
                if q < 2 {
                    return (0.0, f64::NEG_INFINITY);
                }
                (1.0, 0.5 * lambda * lambda + qf * lambda.ln() - ln_factorial(q))
            }
            Self::MomHermite { i } => {
                if q != i + 1 {
                    return (0.0, f64::NEG_INFINITY);
                }
                (1.0, -0.5 * ln_factorial(q))
            }
            Self::GaussDensityMod { sigma_sq } => {
                if q < 2 || q % 2 == 1 {
                    return (0.0, f64::NEG_INFINITY);
                }
                let h = q / 2;
                let sign = if h % 2 == 0 { 1.0 } else { -1.0 };
                let ln_abs = -(ln_factorial(h)
                    + h as f64 * std::f64::consts::LN_2
                    + 0.5 * LN_2PI
                    + 0.5 * (qf + 1.0) * sigma_sq.ln_1p());
                (sign, ln_abs)
            }
            Self::GaussCdfMod { sigma_sq } => {
                if q < 3 || q % 2 == 0 {
                    return (0.0, f64::NEG_INFINITY);
                }
                let h = (q - 1) / 2;
                let sign = if h % 2 == 0 { 1.0 } else { -1.0 };
                let ln_abs = -(qf.ln()
                    + ln_factorial(h)
                    + h as f64 * std::f64::consts::LN_2
                    + 0.5 * LN_2PI
                    + 0.5 * qf * sigma_sq.ln_1p());
                (sign, ln_abs)
            }
        }
    }

    pub fn coeff(&self, q: usize) -> f64 {
        let (s, l) = self.signed_log_coeff(q);
        if s == 0.0 {
            0.0
        } else {
            s * l.exp()
        }
    }

    pub fn rank(&self) -> usize {
        match *self {
            Self::EcfCos { .. } | Self::Emgf { .. } | Self::GaussDensityMod { .. } => 2,
            Self::EcfSin { .. } | Self::GaussCdfMod { .. } => 3,
            Self::MomHermite { i } => i + 1,
        }
    }

    /// Highest nonzero degree for polynomial entries.
    pub fn degree(&self) -> Option<usize> {
        match *self {
            Self::MomHermite { i } => Some(i + 1),
            _ => None,
        }
    }

    /// Direct evaluation of the function.
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Self::EcfCos { lambda } => (lambda * x).cos() - (-0.5 * lambda * lambda).exp(),
            Self::EcfSin { lambda } => (lambda * x).sin() - lambda * x * (-0.5 * lambda * lambda).exp(),
            Self::Emgf { lambda } => (lambda * x).exp() - (0.5 * lambda * lambda).exp() * (1.0 + lambda * x),
            Self::MomHermite { i } => {
                let q = i + 1;
                let mut buf = Vec::with_capacity(q + 1);
                normalized_hermite_all(q, x, &mut buf);
                buf[q]
            }
            Self::GaussDensityMod { sigma_sq } => {
                (-0.5 * x * x / sigma_sq).exp() / (2.0 * std::f64::consts::PI * sigma_sq).sqrt()
                    - 1.0 / (2.0 * std::f64::consts::PI * (sigma_sq + 1.0)).sqrt()
            }
            Self::GaussCdfMod { sigma_sq } => {
                let z = x / sigma_sq.sqrt();
                0.5 * statrs::function::erf::erf(z / std::f64::consts::SQRT_2)
                    - x / (2.0 * std::f64::consts::PI * (sigma_sq + 1.0)).sqrt()
            }
        }
    }

    /// Warnings for the Gaussian-modification entries whose `κ = -ln(σ²+1)/2`
    /// misses the `β = 1/2` thresholds.
    pub fn admissibility_warnings(&self) -> Vec<String> {
        match *self {
            Self::GaussDensityMod { sigma_sq } | Self::GaussCdfMod { sigma_sq } => {
                let mut w = Vec::new();
                let need_r = (-2.0 * upsilon()).exp() - 1.0;
                let need_c = 3.0 - 1.0;
                if sigma_sq <= need_r {
                    w.push(format!(
                        "sigma^2 = {sigma_sq} <= {need_r:.4}: kappa = -ln(sigma^2+1)/2 is not below Upsilon; hyper-rectangle bound not certified"
                    ));
                }
                if sigma_sq <= need_c {
                    w.push(format!(
                        "sigma^2 = {sigma_sq} <= {need_c}: kappa is not below -ln(3)/2; convex-set bound not certified"
                    ));
                }
                w
            }
            _ => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ExpansionSource {
    Catalog { entry: CatalogEntry },
    Quadrature { nodes: usize },
    Manual,
}

/// Hermite expansion `φ = Σ_q a_q H_q`.
#[derive(Debug, Clone, PartialEq)]
pub struct HermiteExpansion {
    /// `a_0, .., a_{Q}`; catalog entries also answer beyond `Q` analytically.
    pub coeffs: Vec<f64>,
    pub rank: usize,
    pub source: ExpansionSource,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExpansionRecord {
    pub source: String,
    pub params: serde_json::Value,
    pub coeffs: Vec<(usize, f64)>,
    pub rank: usize,
}

impl HermiteExpansion {
    pub fn catalog(entry: CatalogEntry, q_max: usize) -> Result<Self> {
        entry.validate()?;
        let q_max = q_max.max(entry.degree().unwrap_or(0));
        let coeffs = (0..=q_max).map(|q| entry.coeff(q)).collect();
        Ok(Self {
            coeffs,
            rank: entry.rank(),
            source: ExpansionSource::Catalog { entry },
            warnings: entry.admissibility_warnings(),
        })
    }

    pub fn manual(coeffs: Vec<f64>) -> Result<Self> {
        let rank = rank_of(&coeffs, RANK_TOL).unwrap_or(coeffs.len());
        Ok(Self { coeffs, rank, source: ExpansionSource::Manual, warnings: Vec::new() })
    }

    pub fn catalog_entry(&self) -> Option<&CatalogEntry> {
        match &self.source {
            ExpansionSource::Catalog { entry } => Some(entry),
            _ => None,
        }
    }

    /// True when the expansion is a polynomial.
    pub fn is_finite(&self) -> bool {
        match &self.source {
            ExpansionSource::Catalog { entry } => entry.degree().is_some(),
            _ => true,
        }
    }

    /// Largest nonzero degree for finite expansions.
    pub fn degree(&self) -> Option<usize> {
        if !self.is_finite() {
            return None;
        }
        self.coeffs.iter().rposition(|&a| a != 0.0)
    }

    pub fn coeff(&self, q: usize) -> f64 {
        match &self.source {
            ExpansionSource::Catalog { entry } => entry.coeff(q),
            _ => self.coeffs.get(q).copied().unwrap_or(0.0),
        }
    }

    pub fn signed_log_coeff(&self, q: usize) -> (f64, f64) {
        match &self.source {
            ExpansionSource::Catalog { entry } => entry.signed_log_coeff(q),
            _ => {
                let a = self.coeffs.get(q).copied().unwrap_or(0.0);
                if a == 0.0 {
                    (0.0, f64::NEG_INFINITY)
                } else {
                    (a.signum(), a.abs().ln())
                }
            }
        }
    }

    /// `Σ_{q ≤ q_max} a_q H_q(x)`.
    pub fn eval_series(&self, x: f64, q_max: usize) -> f64 {
        let mut h = Vec::with_capacity(q_max + 1);
        normalized_hermite_all(q_max, x, &mut h);
        (0..=q_max)
            .map(|q| {
                let (s, l) = self.signed_log_coeff(q);
                if s == 0.0 {
                    0.0
                } else {
                    s * (l + 0.5 * ln_factorial(q)).exp() * h[q]
                }
            })
            .sum()
    }

    /// Direct function value where available, the truncated series otherwise.
    pub fn eval(&self, x: f64) -> f64 {
        match &self.source {
            ExpansionSource::Catalog { entry } => entry.eval(x),
            _ => self.eval_series(x, self.coeffs.len().saturating_sub(1)),
        }
    }

    /// `Σ_{q ≤ q_max} q! a_q²`, the variance of `φ(G)` for rank ≥ 1.
    pub fn variance(&self, q_max: usize) -> f64 {
        (1..=q_max)
            .map(|q| {
                let (s, l) = self.signed_log_coeff(q);
                if s == 0.0 {
                    0.0
                } else {
                    (2.0 * l + ln_factorial(q)).exp()
                }
            })
            .sum()
    }

    pub fn to_record(&self) -> ExpansionRecord {
        let (source, params) = match &self.source {
            ExpansionSource::Catalog { entry } => {
                let mut v = serde_json::to_value(entry).unwrap_or_default();
                if let Some(map) = v.as_object_mut() {
                    map.remove("name");
                }
                (format!("catalog:{}", entry.name()), v)
            }
            ExpansionSource::Quadrature { nodes } => ("quadrature".to_string(), serde_json::json!({ "nodes": nodes })),
            ExpansionSource::Manual => ("manual".to_string(), serde_json::json!({})),
        };
        ExpansionRecord {
            source,
            params,
            coeffs: self.coeffs.iter().enumerate().filter(|(_, a)| **a != 0.0).map(|(q, a)| (q, *a)).collect(),
            rank: self.rank,
        }
    }
}

fn rank_of(coeffs: &[f64], tol: f64) -> Option<usize> {
    let max = coeffs.iter().fold(0.0f64, |m, a| m.max(a.abs()));
    if max == 0.0 {
        return None;
    }
    coeffs.iter().position(|a| a.abs() > tol * max)
}

/// Smallest `q` with `|a_q| > tol · max|a|`.
pub fn hermite_rank(expansion: &HermiteExpansion, tol: f64) -> Result<usize> {
    if let ExpansionSource::Catalog { entry } = &expansion.source {
        return Ok(entry.rank());
    }
    rank_of(&expansion.coeffs, tol).ok_or_else(|| Error::invalid("expansion is identically zero"))
}

fn quadrature_pass(phi: &dyn Fn(f64) -> f64, q_max: usize, nodes: usize) -> Result<Vec<f64>> {
    let rule = GaussHermiteRule::cached(nodes)?;
    let mut acc = vec![0.0; q_max + 1];
    let mut h = Vec::with_capacity(q_max + 1);
    for (&x, &w) in rule.nodes.iter().zip(&rule.weights) {
        if w == 0.0 {
            continue;
        }
        let fx = w * phi(x);
        if fx == 0.0 {
            continue;
        }
        normalized_hermite_all(q_max, x, &mut h);
        for (a, hq) in acc.iter_mut().zip(&h) {
            *a += fx * hq;
        }
    }
    // E[φ h_q] = √q! a_q
    Ok(acc.iter().enumerate().map(|(q, v)| v * (-0.5 * ln_factorial(q)).exp()).collect())
}

/// `a_q = E[φ(G) H_q(G)] / q!` for `q ≤ q_max` by Gauss–Hermite quadrature,
/// checked against a rule with twice as many nodes.
pub fn coefficients_quadrature(phi: &dyn Fn(f64) -> f64, q_max: usize, nodes: usize) -> Result<HermiteExpansion> {
    if nodes < 2 * q_max {
        return Err(Error::invalid(format!("need at least {} nodes for q_max = {q_max}, got {nodes}", 2 * q_max)));
    }
    let coarse = quadrature_pass(phi, q_max, nodes)?;
    let fine = quadrature_pass(phi, q_max, 2 * nodes)?;
    let max_change = coarse
        .iter()
        .zip(&fine)
        .map(|(a, b)| (a - b).abs() / (1.0 + b.abs()))
        .fold(0.0f64, f64::max);
    if !(max_change <= 1e-8) {
        return Err(Error::QuadratureNotConverged {
            max_change,
            nodes_prev: nodes,
            nodes_last: 2 * nodes,
            previous: coarse,
            last: fine,
        });
    }
    let max = fine.iter().fold(0.0f64, |m, a| m.max(a.abs()));
    // zero out quadrature noise so the rank is well defined
    let floor = (RANK_TOL * max).max(QUADRATURE_NOISE);
    let coeffs: Vec<f64> = fine.iter().map(|&a| if a.abs() <= floor { 0.0 } else { a }).collect();
    let rank = rank_of(&coeffs, RANK_TOL).unwrap_or(0);
    Ok(HermiteExpansion { coeffs, rank, source: ExpansionSource::Quadrature { nodes: 2 * nodes }, warnings: Vec::new() })
}

/// Decay parameters `θ = (β, κ, c)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaParams {
    pub beta: f64,
    pub kappa: f64,
    pub c: f64,
    pub admissible_dr: bool,
    pub admissible_dc: bool,
}

impl ThetaParams {
    pub fn new(beta: f64, kappa: f64, c: f64) -> Result<Self> {
        if !(0.5..=1.0).contains(&beta) {
            return Err(Error::invalid(format!("beta must lie in [1/2, 1], got {beta}")));
        }
        if !(c > 0.0) || !kappa.is_finite() {
            return Err(Error::invalid(format!("need c > 0 and finite kappa, got c = {c}, kappa = {kappa}")));
        }
        Ok(Self {
            beta,
            kappa,
            c,
            admissible_dr: beta > 0.5 || kappa < upsilon(),
            admissible_dc: beta > 0.5 || kappa < -(3f64.ln()) / 2.0,
        })
    }

    /// `ln(c e^{κq} / (q!)^β)`.
    pub fn log_envelope(&self, q: usize) -> f64 {
        self.c.ln() + self.kappa * q as f64 - self.beta * ln_factorial(q)
    }

    /// Checks `|a_q| ≤ c e^{κq}/(q!)^β` for `2 ≤ q ≤ q_max` in log-space.
    pub fn certifies(&self, expansion: &HermiteExpansion, q_max: usize) -> bool {
        (2..=q_max).all(|q| {
            let (s, l) = expansion.signed_log_coeff(q);
            s == 0.0 || l <= self.log_envelope(q)
        })
    }
}

fn ols_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Some(sxy / sxx)
}

/// Fits `θ` jointly for a list of coordinate expansions over `2 ≤ q ≤ q_max`.
///
/// For each `β` the envelope `t_q = max_i ln|a_{i,q}| + β ln q!` must grow at
/// most linearly (late-window slope exceeding the mid-window slope by more
/// than 0.02 rejects `β`). `κ` is the steepest consecutive slope of `t_q` in
/// the late window and `c` the smallest constant making the bound hold at
/// every examined `q`. Among the candidates the fit prefers admissibility for
/// the hyper-rectangle distance, then the convex distance, then the largest
/// `β`, then the smallest `κ`.
pub fn fit_theta(expansions: &[HermiteExpansion], beta_grid: &[f64], q_max: usize) -> Result<ThetaParams> {
    let mut envelope: Vec<(usize, f64)> = Vec::new();
    for q in 2..=q_max {
        let l = expansions
            .iter()
            .map(|e| e.signed_log_coeff(q))
            .filter(|(s, _)| *s != 0.0)
            .map(|(_, l)| l)
            .fold(f64::NEG_INFINITY, f64::max);
        if l.is_finite() {
            envelope.push((q, l));
        }
    }
    if envelope.is_empty() {
        return Err(Error::invalid("no nonzero Hermite coefficient with q >= 2"));
    }
    let q_top = envelope.last().expect("nonempty").0 as f64;
    let mut best: Option<(ThetaParams, u8)> = None;
    for &beta in beta_grid {
        let t: Vec<(f64, f64)> = envelope.iter().map(|&(q, l)| (q as f64, l + beta * ln_factorial(q))).collect();
        let late: Vec<(f64, f64)> = t.iter().copied().filter(|p| p.0 > q_top / 2.0).collect();
        if t.len() >= 8 {
            let mid: Vec<(f64, f64)> = t.iter().copied().filter(|p| p.0 > q_top / 4.0 && p.0 <= q_top / 2.0).collect();
            if let (Some(sl), Some(sm)) = (ols_slope(&late), ols_slope(&mid)) {
                if sl - sm > 0.02 {
                    continue;
                }
            }
        }
        let window = if late.len() >= 2 { &late[..] } else { &t[..] };
        let kappa = window
            .windows(2)
            .map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0))
            .fold(f64::NEG_INFINITY, f64::max);
        let kappa = if kappa.is_finite() { kappa } else { 0.0 };
        let log_c = t.iter().map(|&(q, tq)| tq - kappa * q).fold(f64::NEG_INFINITY, f64::max);
        let theta = ThetaParams::new(beta, kappa, log_c.exp() * (1.0 + 1e-12))?;
        let tier = if theta.admissible_dr {
            2
        } else if theta.admissible_dc {
            1
        } else {
            0
        };
        let better = match &best {
            None => true,
            Some((b, bt)) => {
                tier > *bt || (tier == *bt && (beta > b.beta || (beta == b.beta && kappa < b.kappa)))
            }
        };
        if better {
            best = Some((theta, tier));
        }
    }
    best.map(|b| b.0).ok_or_else(|| Error::invalid("no beta on the grid yields a linear envelope"))
}
