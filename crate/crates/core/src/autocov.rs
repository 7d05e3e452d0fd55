//! Autocovariance models of the underlying stationary Gaussian sequence.
//!
//! Every model is normalised so that `ρ(0) = 1`. Lags are symmetric and
//! `rho(k) == rho(-k)` always.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default absolute tolerance for [`AutocovarianceModel::tail_sum`].
pub const DEFAULT_TAIL_TOL: f64 = 1e-10;

/// Marker for the slowly varying factor in power-law decay.
///
/// Only `L ≡ 1` is implemented: a regularly varying `|ρ(k)| ≤ c|k|^{-μ} L(|k|)`
/// can always be traded for a slightly smaller `μ` with `L ≡ 1`.
#[derive(Debug, Clone, Copy, Default)]
pub struct SlowVariationNote;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AutocovarianceModel {
    /// White noise.
    Iid,
    /// `ρ(k) = φ^{|k|}`.
    Ar1 { phi: f64 },
    /// Fractional Gaussian noise with Hurst index `H`.
    Fgn { hurst: f64 },
    /// `ρ(k) = c̃ |k|^{-μ}` for `k ≠ 0`.
    PowerLaw { ctilde: f64, mu: f64 },
    /// One-sided table `ρ(0), ρ(1), ..`; zero beyond the last entry.
    Table { values: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "snake_case")]
pub enum DependenceClass {
    Srd { mu: f64 },
    Lrd { mu: f64 },
    Unknown,
}

/// Asymptotic shape `|ρ(k)|^m ≈ A k^{-s} (1 + b k^{-2})` used for tail remainders.
struct PowerTail {
    a: f64,
    s: f64,
    b: f64,
    /// Coefficient of the first neglected relative correction `k^{-4}`.
    b4: f64,
}

fn binom_real(x: f64, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, j| acc * (x - j as f64) / (j as f64 + 1.0))
}

/// `Σ_{k ≥ a} k^{-s}` by Euler–Maclaurin, with an error estimate.
fn power_tail_from(a: f64, s: f64) -> (f64, f64) {
    let integral = a.powf(1.0 - s) / (s - 1.0);
    let f = a.powf(-s);
    let d1 = s * a.powf(-s - 1.0) / 12.0;
    let d3 = s * (s + 1.0) * (s + 2.0) * a.powf(-s - 3.0) / 720.0;
    let err = s * (s + 1.0) * (s + 2.0) * (s + 3.0) * (s + 4.0) * a.powf(-s - 5.0) / 30240.0;
    (integral + 0.5 * f + d1 - d3, err)
}

impl AutocovarianceModel {
    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Iid => Ok(()),
            Self::Ar1 { phi } => {
                if phi.is_finite() && phi.abs() < 1.0 {
                    Ok(())
                } else {
                    Err(Error::invalid(format!("AR(1) needs |phi| < 1, got {phi}")))
                }
            }
            Self::Fgn { hurst } => {
                if *hurst > 0.0 && *hurst < 1.0 {
                    Ok(())
                } else {
                    Err(Error::invalid(format!("Hurst index must lie in (0, 1), got {hurst}")))
                }
            }
            Self::PowerLaw { ctilde, mu } => {
                if !(*ctilde > 0.0 && *ctilde <= 1.0) {
                    return Err(Error::invalid(format!(
                        "power-law amplitude must lie in (0, 1], got {ctilde}"
                    )));
                }
                if !(*mu > 0.0 && mu.is_finite()) {
                    return Err(Error::invalid(format!("power-law exponent must be positive, got {mu}")));
                }
                Ok(())
            }
            Self::Table { values } => {
                if values.is_empty() {
                    return Err(Error::invalid("autocovariance table is empty"));
                }
                if values[0] != 1.0 {
                    return Err(Error::invalid(format!("table must start with rho(0) = 1, got {}", values[0])));
                }
                if let Some(v) = values.iter().find(|v| !v.is_finite() || v.abs() > 1.0) {
                    return Err(Error::invalid(format!("table entry {v} outside [-1, 1]")));
                }
                Ok(())
            }
        }
    }

    /// True when `ρ(k) = 0` for every `k ≠ 0`.
    pub fn is_white(&self) -> bool {
        match self {
            Self::Iid => true,
            Self::Ar1 { phi } => *phi == 0.0,
            Self::Fgn { hurst } => *hurst == 0.5,
            Self::PowerLaw { .. } => false,
            Self::Table { values } => values[1..].iter().all(|&v| v == 0.0),
        }
    }

    pub fn rho(&self, k: i64) -> f64 {
        let k = k.unsigned_abs();
        if k == 0 {
            return 1.0;
        }
        match self {
            Self::Iid => 0.0,
            Self::Ar1 { phi } => {
                if k > i32::MAX as u64 {
                    0.0
                } else {
                    phi.powi(k as i32)
                }
            }
            Self::Fgn { hurst } => fgn_rho(*hurst, k as f64),
            Self::PowerLaw { ctilde, mu } => ctilde * (k as f64).powf(-mu),
            Self::Table { values } => values.get(k as usize).copied().unwrap_or(0.0),
        }
    }

    /// `ρ(0), .., ρ(n-1)`.
    pub fn lags(&self, n: usize) -> Vec<f64> {
        (0..n as i64).map(|k| self.rho(k)).collect()
    }

    /// `(Σ_{|k|<n} |ρ(k)|^p)^{1/p}`.
    pub fn truncated_norm(&self, n: usize, p: f64) -> f64 {
        let mut s = 0.0;
        for k in (1..n).rev() {
            s += self.rho(k as i64).abs().powf(p);
        }
        (1.0 + 2.0 * s).powf(1.0 / p)
    }

    /// `Σ_{|k|<n} (|k|/n) |ρ(k)|^m`.
    pub fn weighted_partial_sum(&self, n: usize, m: u32) -> f64 {
        let mut s = 0.0;
        for k in (1..n).rev() {
            s += k as f64 * self.rho(k as i64).abs().powi(m as i32);
        }
        2.0 * s / n as f64
    }

    fn power_tail(&self, m: u32) -> Option<PowerTail> {
        let mf = m as f64;
        match self {
            Self::Fgn { hurst } => {
                let h2 = 2.0 * hurst;
                let c2 = binom_real(h2, 2);
                let c4 = binom_real(h2, 4);
                let c6 = binom_real(h2, 6);
                Some(PowerTail {
                    a: c2.abs().powf(mf),
                    s: mf * (2.0 - h2),
                    b: mf * c4 / c2,
                    b4: mf * mf * ((c4 / c2).powi(2) + (c6 / c2).abs()),
                })
            }
            Self::PowerLaw { ctilde, mu } => Some(PowerTail { a: ctilde.powf(mf), s: mf * mu, b: 0.0, b4: 0.0 }),
            _ => None,
        }
    }

    fn check_summable(&self, m: u32) -> Result<()> {
        let mf = m as f64;
        match self {
            Self::Fgn { hurst } if *hurst > 0.5 && mf * (2.0 - 2.0 * hurst) <= 1.0 => Err(Error::Divergent(format!(
                "sum of |rho|^{m} diverges for fGn: need m(2 - 2H) > 1, got {}",
                mf * (2.0 - 2.0 * hurst)
            ))),
            Self::PowerLaw { mu, .. } if mf * mu <= 1.0 => Err(Error::Divergent(format!(
                "sum of |rho|^{m} diverges for power law: need m*mu > 1, got {}",
                mf * mu
            ))),
            _ => Ok(()),
        }
    }

    /// `Σ_{|k| ≥ n} |ρ(k)|^m` to absolute accuracy `tol`.
    pub fn tail_sum(&self, n: usize, m: u32, tol: f64) -> Result<f64> {
        if n == 0 {
            return Err(Error::invalid("tail_sum needs n >= 1"));
        }
        if m == 0 {
            return Err(Error::invalid("tail_sum needs m >= 1"));
        }
        self.validate()?;
        self.check_summable(m)?;
        if self.is_white() {
            return Ok(0.0);
        }
        match self {
            Self::Ar1 { phi } => {
                let q = phi.abs().powi(m as i32);
                Ok(2.0 * q.powf(n as f64) / (1.0 - q))
            }
            Self::Table { values } => {
                let s: f64 = values.iter().skip(n).map(|v| v.abs().powi(m as i32)).sum();
                Ok(2.0 * s)
            }
            _ => {
                let tail = self.power_tail(m).expect("power-law family");
                let mut k_end = n.max(1000);
                let mut head = self.one_sided_sum(n, k_end, m);
                loop {
                    let a = (k_end + 1) as f64;
                    let (z0, e0) = power_tail_from(a, tail.s);
                    let (z2, e2) = power_tail_from(a, tail.s + 2.0);
                    let rem = tail.a * (z0 + tail.b * z2);
                    let neglected = tail.a * tail.b4 * a.powf(-tail.s - 3.0) / (tail.s + 3.0).max(1.0);
                    let err = tail.a * (e0 + tail.b.abs() * e2) + neglected;
                    if 2.0 * err <= tol || k_end >= 1 << 26 {
                        return Ok(2.0 * (head + rem));
                    }
                    let next = 2 * k_end;
                    head += self.one_sided_sum(k_end + 1, next, m);
                    k_end = next;
                }
            }
        }
    }

    /// `Σ_{k=from}^{to} |ρ(k)|^m`, summed from the small end up.
    fn one_sided_sum(&self, from: usize, to: usize, m: u32) -> f64 {
        let mut s = 0.0;
        for k in (from..=to).rev() {
            s += self.rho(k as i64).abs().powi(m as i32);
        }
        s
    }

    /// Signed sum `Σ_{k∈Z} ρ(k)^ℓ`.
    pub fn signed_power_sum(&self, ell: u32, tol: f64) -> Result<f64> {
        if self.is_white() {
            return Ok(1.0);
        }
        match self {
            Self::Ar1 { phi } => {
                let q = phi.powi(ell as i32);
                Ok(1.0 + 2.0 * q / (1.0 - q))
            }
            Self::Table { values } => Ok(1.0 + 2.0 * values[1..].iter().map(|v| v.powi(ell as i32)).sum::<f64>()),
            Self::Fgn { hurst } => {
                let t = self.tail_sum(1, ell, tol)?;
                let sign = if *hurst < 0.5 && ell % 2 == 1 { -1.0 } else { 1.0 };
                Ok(1.0 + sign * t)
            }
            Self::PowerLaw { .. } => Ok(1.0 + self.tail_sum(1, ell, tol)?),
            Self::Iid => Ok(1.0),
        }
    }

    /// Squared `ℓ²(Z)` norm of `ρ`.
    pub fn l2_norm_sq(&self, tol: f64) -> Result<f64> {
        Ok(1.0 + self.tail_sum(1, 2, tol)?)
    }

    pub fn classify_dependence(&self) -> DependenceClass {
        match self {
            Self::Iid | Self::Ar1 { .. } | Self::Table { .. } => DependenceClass::Srd { mu: f64::INFINITY },
            Self::Fgn { hurst } => {
                let h = *hurst;
                if h == 0.5 {
                    DependenceClass::Srd { mu: f64::INFINITY }
                } else if h < 0.5 {
                    DependenceClass::Srd { mu: 2.0 - 2.0 * h }
                } else if h < 2.0 / 3.0 {
                    DependenceClass::Lrd { mu: 2.0 - 2.0 * h }
                } else {
                    DependenceClass::Unknown
                }
            }
            Self::PowerLaw { mu, .. } => {
                if *mu >= 1.0 {
                    DependenceClass::Srd { mu: *mu }
                } else if *mu > 2.0 / 3.0 {
                    DependenceClass::Lrd { mu: *mu }
                } else {
                    DependenceClass::Unknown
                }
            }
        }
    }
}

/// fGn autocovariance at a positive lag, written to avoid cancellation:
/// `ρ(k) = k^{2H}/2 · ((1+1/k)^{2H} + (1-1/k)^{2H} - 2)`.
fn fgn_rho(h: f64, k: f64) -> f64 {
    if h == 0.5 {
        return 0.0;
    }
    let h2 = 2.0 * h;
    let up = (h2 * (1.0 / k).ln_1p()).exp_m1();
    let down = (h2 * (-1.0 / k).ln_1p()).exp_m1();
    0.5 * k.powf(h2) * (up + down)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn brute_tail(model: &AutocovarianceModel, n: usize, m: u32, terms: usize) -> f64 {
        let mut s = 0.0;
        for k in (n..n + terms).rev() {
            s += model.rho(k as i64).abs().powi(m as i32);
        }
        2.0 * s
    }

    #[test]
    fn rho_examples() {
        assert_eq!(AutocovarianceModel::Fgn { hurst: 0.5 }.rho(1), 0.0);
        let naive = 0.5 * (2f64.powf(0.6) - 2.0);
        assert_relative_eq!(AutocovarianceModel::Fgn { hurst: 0.3 }.rho(1), naive, max_relative = 1e-14);
        assert_relative_eq!(AutocovarianceModel::Fgn { hurst: 0.3 }.rho(1), -0.242_141_716_744_801_3, epsilon = 1e-12);
        assert_eq!(AutocovarianceModel::Ar1 { phi: 0.5 }.rho(3), 0.125);
        assert_eq!(AutocovarianceModel::Ar1 { phi: 0.5 }.rho(-3), 0.125);
        let t = AutocovarianceModel::Table { values: vec![1.0, 0.4] };
        assert_eq!(t.rho(5), 0.0);
        assert_eq!(t.rho(-1), 0.4);
    }

    #[test]
    fn fgn_matches_naive_formula() {
        for &h in &[0.1, 0.3, 0.7, 0.9] {
            let m = AutocovarianceModel::Fgn { hurst: h };
            for k in 1..50i64 {
                let kf = k as f64;
                let naive = 0.5 * ((kf + 1.0).powf(2.0 * h) + (kf - 1.0).powf(2.0 * h) - 2.0 * kf.powf(2.0 * h));
                assert!((m.rho(k) - naive).abs() < 1e-12, "h={h} k={k}");
            }
        }
    }

    #[test]
    fn truncated_norm_examples() {
        assert_eq!(AutocovarianceModel::Iid.truncated_norm(100, 1.0), 1.0);
        assert_relative_eq!(AutocovarianceModel::Ar1 { phi: 0.5 }.truncated_norm(3, 1.0), 2.5);
        assert_eq!(AutocovarianceModel::Fgn { hurst: 0.5 }.truncated_norm(50, 2.0), 1.0);
    }

    #[test]
    fn tail_sum_examples() {
        assert_eq!(AutocovarianceModel::Iid.tail_sum(1, 2, 1e-10).unwrap(), 0.0);
        let ar = AutocovarianceModel::Ar1 { phi: 0.5 };
        assert_relative_eq!(ar.tail_sum(2, 2, 1e-10).unwrap(), 2.0 * 0.0625 / 0.75, max_relative = 1e-14);
        let fgn = AutocovarianceModel::Fgn { hurst: 0.3 };
        let brute = brute_tail(&fgn, 10, 2, 1_000_000);
        assert!((fgn.tail_sum(10, 2, 1e-10).unwrap() - brute).abs() < 1e-10);
    }

    #[test]
    fn tail_sum_slow_decay() {
        // exponents close to 1: the remainder carries most of the mass
        let cases = [
            (AutocovarianceModel::PowerLaw { ctilde: 0.5, mu: 0.8 }, 2u32),
            (AutocovarianceModel::Fgn { hurst: 0.7 }, 2),
            (AutocovarianceModel::Fgn { hurst: 0.2 }, 3),
        ];
        for (model, m) in cases {
            let fast = model.tail_sum(5, m, 1e-10).unwrap();
            // brute force over 4e6 terms plus a crude integral remainder
            let terms = 4_000_000usize;
            let brute = brute_tail(&model, 5, m, terms);
            let tail = model.power_tail(m).unwrap();
            let a = (5 + terms) as f64;
            let rem = 2.0 * tail.a * (a - 0.5).powf(1.0 - tail.s) / (tail.s - 1.0);
            assert!((fast - brute - rem).abs() < 1e-8, "{model:?}: {fast} vs {}", brute + rem);
        }
    }

    #[test]
    fn tail_sum_divergence() {
        let lrd = AutocovarianceModel::Fgn { hurst: 0.8 };
        assert!(matches!(lrd.tail_sum(1, 2, 1e-10), Err(Error::Divergent(_))));
        assert!(lrd.tail_sum(1, 3, 1e-10).is_ok());
        let pl = AutocovarianceModel::PowerLaw { ctilde: 1.0, mu: 0.4 };
        assert!(matches!(pl.tail_sum(1, 2, 1e-10), Err(Error::Divergent(_))));
    }

    #[test]
    fn weighted_partial_sum_examples() {
        let ar = AutocovarianceModel::Ar1 { phi: 0.5 };
        assert_eq!(ar.weighted_partial_sum(1, 2), 0.0);
        assert_relative_eq!(ar.weighted_partial_sum(3, 2), 2.0 * (0.25 / 3.0 + 2.0 * 0.0625 / 3.0), max_relative = 1e-14);
        assert_eq!(AutocovarianceModel::Iid.weighted_partial_sum(40, 3), 0.0);
    }

    #[test]
    fn classification() {
        assert!(matches!(AutocovarianceModel::Ar1 { phi: 0.9 }.classify_dependence(), DependenceClass::Srd { .. }));
        assert_eq!(
            AutocovarianceModel::PowerLaw { ctilde: 1.0, mu: 0.8 }.classify_dependence(),
            DependenceClass::Lrd { mu: 0.8 }
        );
        assert_eq!(
            AutocovarianceModel::PowerLaw { ctilde: 1.0, mu: 1.5 }.classify_dependence(),
            DependenceClass::Srd { mu: 1.5 }
        );
        assert_eq!(AutocovarianceModel::Fgn { hurst: 0.9 }.classify_dependence(), DependenceClass::Unknown);
        assert!(matches!(AutocovarianceModel::Fgn { hurst: 0.6 }.classify_dependence(), DependenceClass::Lrd { .. }));
    }

    #[test]
    fn fgn_negative_lags_telescope() {
        // Σ_{|k|≤n} ρ(k) = (n+1)^{2H} - n^{2H}
        for &h in &[0.1, 0.3, 0.45] {
            let m = AutocovarianceModel::Fgn { hurst: h };
            for &n in &[10usize, 1000, 100_000] {
                let mut s = 1.0;
                for k in 1..=n {
                    s += 2.0 * m.rho(k as i64);
                }
                let expected = (n as f64 + 1.0).powf(2.0 * h) - (n as f64).powf(2.0 * h);
                assert!((s - expected).abs() < 1e-9, "h={h} n={n}: {s} vs {expected}");
            }
            // the partial sums decay like n^{2H-1}; the full sum is analytic
            assert!(m.signed_power_sum(1, 1e-12).unwrap().abs() < 1e-6);
        }
    }

    #[test]
    fn signed_sums() {
        assert_relative_eq!(AutocovarianceModel::Ar1 { phi: 0.5 }.signed_power_sum(2, 1e-12).unwrap(), 5.0 / 3.0, max_relative = 1e-14);
        let fgn = AutocovarianceModel::Fgn { hurst: 0.3 };
        let s1 = fgn.signed_power_sum(1, 1e-12).unwrap();
        assert!(s1.abs() < 1e-8, "{s1}");
        let s3 = fgn.signed_power_sum(3, 1e-12).unwrap();
        let mut brute = 1.0;
        for k in 1..200_000i64 {
            brute += 2.0 * fgn.rho(k).powi(3);
        }
        assert!((s3 - brute).abs() < 1e-9);
    }

    #[test]
    fn serde_shape() {
        let m = AutocovarianceModel::Fgn { hurst: 0.3 };
        let s = serde_json::to_string(&m).unwrap();
        assert_eq!(s, r#"{"kind":"fgn","hurst":0.3}"#);
        let back: AutocovarianceModel = serde_json::from_str(r#"{"kind":"power_law","ctilde":0.5,"mu":0.8}"#).unwrap();
        assert_eq!(back, AutocovarianceModel::PowerLaw { ctilde: 0.5, mu: 0.8 });
    }

    fn any_model() -> impl Strategy<Value = AutocovarianceModel> {
        prop_oneof![
            Just(AutocovarianceModel::Iid),
            (-0.95f64..0.95).prop_map(|phi| AutocovarianceModel::Ar1 { phi }),
            (0.05f64..0.95).prop_map(|hurst| AutocovarianceModel::Fgn { hurst }),
            (0.05f64..1.0, 0.3f64..3.0).prop_map(|(ctilde, mu)| AutocovarianceModel::PowerLaw { ctilde, mu }),
        ]
    }

    proptest! {
        #[test]
        fn rho_is_bounded_and_symmetric(model in any_model(), k in -5000i64..5000) {
            let r = model.rho(k);
            prop_assert!(r.abs() <= 1.0);
            prop_assert_eq!(r, model.rho(-k));
            prop_assert_eq!(model.rho(0), 1.0);
        }

        #[test]
        fn truncated_norm_is_monotone(model in any_model(), n in 1usize..400) {
            let a = model.truncated_norm(n, 1.0);
            let b = model.truncated_norm(n + 1, 1.0);
            prop_assert!(a >= 1.0);
            prop_assert!(b >= a);
        }

        #[test]
        fn fgn_decay_bound(h in 0.01f64..0.4999, v in 2i64..10_000) {
            let m = AutocovarianceModel::Fgn { hurst: h };
            let bound = 2f64.powf(2.0 - 2.0 * h) * h * (1.0 - 2.0 * h) * (v as f64).powf(2.0 * h - 2.0);
            prop_assert!(m.rho(v).abs() <= bound * (1.0 + 1e-12));
        }

        #[test]
        fn head_plus_tail_is_full_sum(phi in -0.9f64..0.9, h in 0.05f64..0.45, n in 1usize..200) {
            for model in [AutocovarianceModel::Ar1 { phi }, AutocovarianceModel::Fgn { hurst: h }] {
                let tol = 1e-10;
                let head = model.truncated_norm(n, 2.0).powi(2);
                let full = model.l2_norm_sq(tol).unwrap();
                let tail = model.tail_sum(n, 2, tol).unwrap();
                prop_assert!((head + tail - full).abs() <= 2.0 * tol + 1e-12 * full);
            }
        }
    }
}
