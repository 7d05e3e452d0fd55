//! Exact synthesis of stationary Gaussian paths.
//!
//! The autocovariance is embedded into a circulant matrix of size
//! `2·next_pow2(n-1)` (or the minimal `2(n-1)` if the former is not PSD),
//! which the FFT diagonalises. When all embedding eigenvalues are
//! nonnegative (up to `-1e-12`), a path costs one FFT. Otherwise the
//! `n × n` Toeplitz covariance is Cholesky-factorised once.

use std::io::{Read, Write};
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::autocov::AutocovarianceModel;
use crate::error::{Error, Result};
use crate::linalg::{cholesky, Matrix};
use crate::rng::CounterRng;

/// Embedding eigenvalues above this (negative) level are clipped to zero.
pub const EMBEDDING_EPS: f64 = 1e-12;
/// Diagonal jitter for the Cholesky fallback.
pub const CHOLESKY_JITTER: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimMethod {
    CirculantEmbedding,
    Cholesky,
    WhiteNoise,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianPath {
    pub values: Vec<f64>,
    pub model: AutocovarianceModel,
    pub seed: u64,
    pub method: SimMethod,
}

impl GaussianPath {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

enum Plan {
    White,
    Circulant { sqrt_eig: Vec<f64>, fft: Arc<dyn Fft<f64>> },
    Cholesky { l: Matrix },
}

/// Reusable sampler for a fixed `(model, n)`.
pub struct PathGenerator {
    model: AutocovarianceModel,
    n: usize,
    plan: Plan,
}

impl std::fmt::Debug for PathGenerator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PathGenerator").field("model", &self.model).field("n", &self.n).field("method", &self.method()).finish()
    }
}

impl PathGenerator {
    pub fn new(model: &AutocovarianceModel, n: usize) -> Result<Self> {
        Self::with_method(model, n, None)
    }

    /// Forces a method; `None` picks the cheapest valid one.
    pub fn with_method(model: &AutocovarianceModel, n: usize, method: Option<SimMethod>) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("path length must be at least 1"));
        }
        model.validate()?;
        let plan = match method {
            Some(SimMethod::WhiteNoise) => {
                if !model.is_white() {
                    return Err(Error::invalid("white-noise sampling requested for a correlated model"));
                }
                Plan::White
            }
            Some(SimMethod::Cholesky) => Self::cholesky_plan(model, n)?,
            Some(SimMethod::CirculantEmbedding) => Self::circulant_plan(model, n)?
                .ok_or_else(|| Error::invalid("circulant embedding has negative eigenvalues"))?,
            None => {
                if model.is_white() || n == 1 {
                    Plan::White
                } else {
                    match Self::circulant_plan(model, n)? {
                        Some(p) => p,
                        None => Self::cholesky_plan(model, n)?,
                    }
                }
            }
        };
        Ok(Self { model: model.clone(), n, plan })
    }

    fn circulant_plan(model: &AutocovarianceModel, n: usize) -> Result<Option<Plan>> {
        if n == 1 {
            return Ok(Some(Plan::White));
        }
        // a power-of-two FFT is much faster; the minimal embedding is the fallback
        let minimal = 2 * (n - 1);
        let pow2 = 2 * (n - 1).next_power_of_two();
        Ok(Self::embedding(model, pow2).or_else(|| if pow2 == minimal { None } else { Self::embedding(model, minimal) }))
    }

    /// Circulant of size `m` with first row `ρ(0), .., ρ(m/2), .., ρ(1)`.
    fn embedding(model: &AutocovarianceModel, m: usize) -> Option<Plan> {
        let half = m / 2;
        let lags = model.lags(half + 1);
        let mut c: Vec<Complex64> = (0..m)
            .map(|j| Complex64::new(if j <= half { lags[j] } else { lags[m - j] }, 0.0))
            .collect();
        let fft = FftPlanner::new().plan_fft_forward(m);
        fft.process(&mut c);
        if c.iter().any(|z| z.re < -EMBEDDING_EPS) {
            return None;
        }
        let sqrt_eig = c.iter().map(|z| (z.re.max(0.0) / m as f64).sqrt()).collect();
        Some(Plan::Circulant { sqrt_eig, fft })
    }

    fn cholesky_plan(model: &AutocovarianceModel, n: usize) -> Result<Plan> {
        let lags = model.lags(n);
        let mut t = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                t[(i, j)] = lags[i.abs_diff(j)];
            }
        }
        Ok(Plan::Cholesky { l: cholesky(&t, CHOLESKY_JITTER)? })
    }

    pub fn method(&self) -> SimMethod {
        match self.plan {
            Plan::White => SimMethod::WhiteNoise,
            Plan::Circulant { .. } => SimMethod::CirculantEmbedding,
            Plan::Cholesky { .. } => SimMethod::Cholesky,
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Writes a fresh path for `seed` into `out` (length `n`).
    pub fn fill(&self, seed: u64, out: &mut [f64]) {
        assert_eq!(out.len(), self.n, "output buffer has the wrong length");
        let mut rng = CounterRng::new(seed);
        match &self.plan {
            Plan::White => rng.fill_normal(out),
            Plan::Circulant { sqrt_eig, fft } => {
                // Hermitian weights make the transform real: m normals per path
                let m = sqrt_eig.len();
                let h = m / 2;
                let mut buf = vec![Complex64::new(0.0, 0.0); m];
                buf[0] = Complex64::new(sqrt_eig[0] * rng.normal(), 0.0);
                buf[h] = Complex64::new(sqrt_eig[h] * rng.normal(), 0.0);
                for j in 1..h {
                    let s = sqrt_eig[j] * std::f64::consts::FRAC_1_SQRT_2;
                    let w = Complex64::new(s * rng.normal(), s * rng.normal());
                    buf[j] = w;
                    buf[m - j] = w.conj();
                }
                fft.process(&mut buf);
                for (o, z) in out.iter_mut().zip(&buf) {
                    *o = z.re;
                }
            }
            Plan::Cholesky { l } => {
                let mut z = vec![0.0; self.n];
                rng.fill_normal(&mut z);
                for (i, o) in out.iter_mut().enumerate() {
                    *o = l.row(i)[..=i].iter().zip(&z).map(|(a, b)| a * b).sum();
                }
            }
        }
    }

    pub fn generate(&self, seed: u64) -> GaussianPath {
        let mut values = vec![0.0; self.n];
        self.fill(seed, &mut values);
        GaussianPath { values, model: self.model.clone(), seed, method: self.method() }
    }
}

/// One path of length `n` with autocovariance `model`.
pub fn generate_path(model: &AutocovarianceModel, n: usize, seed: u64) -> Result<GaussianPath> {
    Ok(PathGenerator::new(model, n)?.generate(seed))
}

/// Biased estimator `(1/n) Σ_{j} x_j x_{j+k}`.
pub fn sample_autocovariance(values: &[f64], k: usize) -> Result<f64> {
    let n = values.len();
    if k >= n {
        return Err(Error::invalid(format!("lag {k} out of range for a path of length {n}")));
    }
    let s: f64 = values.iter().zip(&values[k..]).map(|(a, b)| a * b).sum();
    Ok(s / n as f64)
}

/// Binary dump: little-endian `u64` length followed by little-endian `f64` values.
pub fn write_binary<W: Write>(mut w: W, values: &[f64]) -> Result<()> {
    w.write_all(&(values.len() as u64).to_le_bytes())?;
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_binary<R: Read>(mut r: R) -> Result<Vec<f64>> {
    let mut head = [0u8; 8];
    r.read_exact(&mut head)?;
    let n = u64::from_le_bytes(head) as usize;
    let mut out = Vec::with_capacity(n);
    let mut buf = [0u8; 8];
    for _ in 0..n {
        r.read_exact(&mut buf)?;
        out.push(f64::from_le_bytes(buf));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::replicate_seed;

    #[test]
    fn deterministic() {
        let a = generate_path(&AutocovarianceModel::Iid, 4, 7).unwrap();
        let b = generate_path(&AutocovarianceModel::Iid, 4, 7).unwrap();
        assert_eq!(a, b);
        let f1 = generate_path(&AutocovarianceModel::Fgn { hurst: 0.3 }, 100, 9).unwrap();
        let f2 = generate_path(&AutocovarianceModel::Fgn { hurst: 0.3 }, 100, 9).unwrap();
        assert_eq!(f1.values, f2.values);
        assert_eq!(f1.method, SimMethod::CirculantEmbedding);
    }

    #[test]
    fn white_fgn_matches_iid_pipeline() {
        let a = generate_path(&AutocovarianceModel::Iid, 64, 3).unwrap();
        let b = generate_path(&AutocovarianceModel::Fgn { hurst: 0.5 }, 64, 3).unwrap();
        assert_eq!(a.values, b.values);
        let long = generate_path(&AutocovarianceModel::Fgn { hurst: 0.5 }, 1_000_000, 11).unwrap();
        assert!(sample_autocovariance(&long.values, 1).unwrap().abs() < 4e-3);
    }

    #[test]
    fn sample_autocovariance_examples() {
        assert_eq!(sample_autocovariance(&[0.0; 5], 2).unwrap(), 0.0);
        assert_eq!(sample_autocovariance(&[1.0; 4], 1).unwrap(), 0.75);
        assert!(sample_autocovariance(&[1.0; 4], 4).is_err());
    }

    #[test]
    fn ar1_lags_within_mc_error() {
        let phi: f64 = 0.6;
        let n = 1 << 14;
        let gen = PathGenerator::new(&AutocovarianceModel::Ar1 { phi }, n).unwrap();
        let reps = 40;
        for k in 1..=3usize {
            let est: Vec<f64> =
                (0..reps).map(|r| sample_autocovariance(&gen.generate(replicate_seed(5, r)).values, k).unwrap()).collect();
            let mean = est.iter().sum::<f64>() / reps as f64;
            let var = est.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
            let se = (var / reps as f64).sqrt();
            // the biased estimator has mean (1 - k/n) φ^k
            let target = (1.0 - k as f64 / n as f64) * phi.powi(k as i32);
            assert!((mean - target).abs() < 5.0 * se, "k={k}: {mean} vs {target} (se {se})");
        }
    }

    #[test]
    fn fgn_lags_inside_confidence_bands() {
        for &h in &[0.2, 0.3, 0.7] {
            let model = AutocovarianceModel::Fgn { hurst: h };
            let n = 256;
            let gen = PathGenerator::new(&model, n).unwrap();
            let reps = 100_000u64;
            let mut sums = [0.0f64; 6];
            let mut sq = [0.0f64; 6];
            let mut buf = vec![0.0; n];
            for r in 0..reps {
                gen.fill(replicate_seed(17, r), &mut buf);
                for k in 1..=5 {
                    let v = sample_autocovariance(&buf, k).unwrap();
                    sums[k] += v;
                    sq[k] += v * v;
                }
            }
            for k in 1..=5 {
                let mean = sums[k] / reps as f64;
                let se = ((sq[k] / reps as f64 - mean * mean) / reps as f64).sqrt();
                let lags = model.lags(n);
                // exact mean of the biased estimator
                let expected = (n - k) as f64 / n as f64 * lags[k];
                // 99% simultaneous band over the 15 checks
                assert!((mean - expected).abs() < 3.40 * se, "h={h} k={k}: {mean} vs {expected} (se {se})");
            }
        }
    }

    #[test]
    fn circulant_and_cholesky_agree_in_law() {
        let model = AutocovarianceModel::Fgn { hurst: 0.3 };
        let n = 16;
        let a = PathGenerator::with_method(&model, n, Some(SimMethod::CirculantEmbedding)).unwrap();
        let b = PathGenerator::with_method(&model, n, Some(SimMethod::Cholesky)).unwrap();
        let reps = 10_000;
        let xs: Vec<Vec<f64>> = (0..reps).map(|r| a.generate(replicate_seed(1, r)).values).collect();
        let ys: Vec<Vec<f64>> = (0..reps).map(|r| b.generate(replicate_seed(2, r)).values).collect();
        let stat = energy_statistic(&xs[..1000], &ys[..1000]);
        // permutation null distribution
        let mut pooled: Vec<Vec<f64>> = xs[..1000].iter().chain(&ys[..1000]).cloned().collect();
        let mut rng = CounterRng::new(99);
        let mut exceed = 0;
        let perms = 99;
        for _ in 0..perms {
            for i in (1..pooled.len()).rev() {
                let j = (rng.next_u64() % (i as u64 + 1)) as usize;
                pooled.swap(i, j);
            }
            if energy_statistic(&pooled[..1000], &pooled[1000..]) >= stat {
                exceed += 1;
            }
        }
        let p = (exceed + 1) as f64 / (perms + 1) as f64;
        assert!(p > 0.01, "energy test rejected, p = {p}");
        // second-moment comparison over the full 10^4 replicates
        for lag in 0..4 {
            let ca: f64 = xs.iter().map(|x| x[3] * x[3 + lag]).sum::<f64>() / reps as f64;
            let cb: f64 = ys.iter().map(|x| x[3] * x[3 + lag]).sum::<f64>() / reps as f64;
            assert!((ca - cb).abs() < 5.0 * (4.0 / reps as f64).sqrt());
        }
    }

    fn energy_statistic(x: &[Vec<f64>], y: &[Vec<f64>]) -> f64 {
        let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt();
        let mean_cross = x.iter().flat_map(|a| y.iter().map(move |b| dist(a, b))).sum::<f64>() / (x.len() * y.len()) as f64;
        let within = |s: &[Vec<f64>]| s.iter().flat_map(|a| s.iter().map(move |b| dist(a, b))).sum::<f64>() / (s.len() * s.len()) as f64;
        2.0 * mean_cross - within(x) - within(y)
    }

    #[test]
    fn negative_embedding_falls_back_to_cholesky() {
        // a valid covariance whose minimal circulant embedding is not PSD
        // eigenvalue 1 - 2(0.7) + 0.3 < 0 while the 3x3 Toeplitz matrix is PD
        let model = AutocovarianceModel::Table { values: vec![1.0, 0.7, 0.3] };
        let g = PathGenerator::new(&model, 3).unwrap();
        assert_eq!(g.method(), SimMethod::Cholesky);
        let bad = AutocovarianceModel::Table { values: vec![1.0, 0.9, -0.9] };
        assert!(matches!(PathGenerator::new(&bad, 3), Err(Error::CholeskyFailed { .. })));
    }

    #[test]
    fn binary_round_trip() {
        let v = vec![1.5, -2.0, f64::MAX];
        let mut buf = Vec::new();
        write_binary(&mut buf, &v).unwrap();
        assert_eq!(buf.len(), 8 + 24);
        assert_eq!(read_binary(&buf[..]).unwrap(), v);
    }

    #[test]
    fn length_one_path() {
        let p = generate_path(&AutocovarianceModel::Ar1 { phi: 0.5 }, 1, 3).unwrap();
        assert_eq!(p.len(), 1);
    }
}
