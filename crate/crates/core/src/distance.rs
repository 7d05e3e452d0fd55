//! Monte Carlo estimates of the distance between the law of `S_n` and a
//! centred Gaussian: hyper-rectangles, balls/ellipsoids and coordinate
//! Wasserstein distances, plus log-log rate fits.
//!
//! Every estimate is a maximum over a finite family, so it bounds the true
//! supremum from below up to sampling error. Half-widths are 95% levels,
//! made uniform over the family by a union bound.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::linalg::{cholesky, symmetric_eigenvalues, Matrix};
use crate::rng::{sub_seed, CounterRng};
use crate::statistic::Samples;

pub const ALPHA: f64 = 0.05;
pub const DEFAULT_N_REF: usize = 1_000_000;
pub const DEFAULT_GRID_LEVELS: usize = 25;
pub const DEFAULT_RANDOM_RECTS: usize = 200;

/// `J = ∫ √(Φ(1 - Φ))`, the scale of the W1 error of an empirical CDF.
const W1_SPREAD: f64 = 1.614_743_851_8;

/// `√R · W1` tends to `∫|B(Φ)|` with mean `√(2/π) J` and standard deviation
/// at most `√(1 - 2/π) J`; Cantelli's inequality gives the 95% level.
fn w1_level_multiplier() -> f64 {
    let two_over_pi = 2.0 / std::f64::consts::PI;
    (two_over_pi.sqrt() + (19.0 * (1.0 - two_over_pi)).sqrt()) * W1_SPREAD
}

/// Standard normal CDF.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

pub fn norm_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

/// Box `(lower_1, upper_1] × .. × (lower_d, upper_d]`; infinite ends allowed.
#[derive(Debug, Clone, PartialEq)]
pub struct Rect {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Rect {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch { expected: lower.len(), got: upper.len() });
        }
        if lower.iter().zip(&upper).any(|(a, b)| !(a <= b)) {
            return Err(Error::invalid("rectangle needs lower <= upper on every axis"));
        }
        Ok(Self { lower, upper })
    }

    pub fn full(d: usize) -> Self {
        Self { lower: vec![f64::NEG_INFINITY; d], upper: vec![f64::INFINITY; d] }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().zip(self.lower.iter().zip(&self.upper)).all(|(v, (a, b))| *a < *v && *v <= *b)
    }

    pub fn is_full(&self) -> bool {
        self.lower.iter().all(|a| *a == f64::NEG_INFINITY) && self.upper.iter().all(|b| *b == f64::INFINITY)
    }

    /// The only axis with a finite end, if there is exactly one.
    fn single_axis(&self) -> Option<usize> {
        let mut axes = (0..self.dim()).filter(|&i| self.lower[i].is_finite() || self.upper[i].is_finite());
        match (axes.next(), axes.next()) {
            (Some(i), None) => Some(i),
            _ => None,
        }
    }

    fn scaled(&self, s: &[f64]) -> Self {
        Self {
            lower: self.lower.iter().zip(s).map(|(a, c)| a * c).collect(),
            upper: self.upper.iter().zip(s).map(|(b, c)| b * c).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RectangleFamily {
    pub rects: Vec<Rect>,
    pub construction: String,
}

fn grid_points(sd: f64, levels: usize) -> Vec<f64> {
    (1..=levels).map(|k| sd * norm_quantile(k as f64 / (levels + 1) as f64)).collect()
}

impl RectangleFamily {
    pub fn len(&self) -> usize {
        self.rects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rects.is_empty()
    }

    pub fn single(rect: Rect) -> Self {
        Self { rects: vec![rect], construction: "single".into() }
    }

    /// Per-axis boxes at `levels` marginal quantiles: every one-sided box
    /// `(-∞, x]`, `(x, ∞)` and every interval between two levels.
    pub fn quantile_grid(sds: &[f64], levels: usize) -> Self {
        let d = sds.len();
        let mut rects = Vec::new();
        for (i, &sd) in sds.iter().enumerate() {
            let g = grid_points(sd, levels);
            for (a, &x) in g.iter().enumerate() {
                let mut r = Rect::full(d);
                r.upper[i] = x;
                rects.push(r);
                let mut r = Rect::full(d);
                r.lower[i] = x;
                rects.push(r);
                for &y in &g[a + 1..] {
                    let mut r = Rect::full(d);
                    r.lower[i] = x;
                    r.upper[i] = y;
                    rects.push(r);
                }
            }
        }
        Self { rects, construction: format!("quantile_grid({levels})") }
    }

    /// Lower and upper orthants with a common quantile level on every axis.
    pub fn orthants(sds: &[f64], levels: usize) -> Self {
        let d = sds.len();
        let grids: Vec<Vec<f64>> = sds.iter().map(|&s| grid_points(s, levels)).collect();
        let mut rects = Vec::new();
        for k in 0..levels {
            let at: Vec<f64> = grids.iter().map(|g| g[k]).collect();
            rects.push(Rect { lower: vec![f64::NEG_INFINITY; d], upper: at.clone() });
            rects.push(Rect { lower: at, upper: vec![f64::INFINITY; d] });
        }
        Self { rects, construction: format!("orthants({levels})") }
    }

    /// Boxes with endpoints at random marginal quantiles; each side is
    /// replaced by an infinite end with probability 1/4.
    pub fn random(sds: &[f64], count: usize, seed: u64) -> Self {
        let d = sds.len();
        let mut rng = CounterRng::new(sub_seed(seed, &[0x5245_4354]));
        let rects = (0..count)
            .map(|_| {
                let mut lower = vec![0.0; d];
                let mut upper = vec![0.0; d];
                for i in 0..d {
                    let p = rng.next_open0().min(1.0 - 1e-12);
                    let q = rng.next_open0().min(1.0 - 1e-12);
                    let (a, b) = if p < q { (p, q) } else { (q, p) };
                    lower[i] = if rng.next_f64() < 0.25 { f64::NEG_INFINITY } else { sds[i] * norm_quantile(a) };
                    upper[i] = if rng.next_f64() < 0.25 { f64::INFINITY } else { sds[i] * norm_quantile(b) };
                }
                Rect { lower, upper }
            })
            .collect();
        Self { rects, construction: format!("random({count})") }
    }

    /// Grid, random boxes and orthants with the default sizes.
    pub fn default_for(sds: &[f64], seed: u64) -> Self {
        let mut f = Self::quantile_grid(sds, DEFAULT_GRID_LEVELS);
        f.extend(Self::random(sds, DEFAULT_RANDOM_RECTS, seed));
        f.extend(Self::orthants(sds, DEFAULT_GRID_LEVELS));
        f.construction = "default".into();
        f
    }

    pub fn extend(&mut self, other: Self) {
        self.construction = format!("{}+{}", self.construction, other.construction);
        self.rects.extend(other.rects);
    }
}

/// Reference Gaussian `N(0, Σ)`: exact marginals when `Σ` is diagonal,
/// otherwise a Monte Carlo sample.
#[derive(Debug, Clone)]
pub enum Reference {
    Diagonal { sds: Vec<f64> },
    Sampled { sigma: Matrix, sample: Samples },
}

/// Draws `count` vectors from `N(0, Σ)`.
pub fn sample_gaussian(sigma: &Matrix, count: usize, seed: u64) -> Result<Samples> {
    let d = sigma.rows;
    check_psd(sigma)?;
    let jitter = 1e-12 * sigma.trace().abs().max(1.0);
    let l = cholesky(sigma, jitter)?;
    let chunk = 4096;
    let blocks: Vec<Vec<f64>> = (0..count.div_ceil(chunk))
        .into_par_iter()
        .map(|b| {
            let mut rng = CounterRng::new(sub_seed(seed, &[b as u64]));
            let rows = chunk.min(count - b * chunk);
            let mut z = vec![0.0; d];
            let mut out = Vec::with_capacity(rows * d);
            for _ in 0..rows {
                rng.fill_normal(&mut z);
                out.extend(l.mul_vec(&z));
            }
            out
        })
        .collect();
    Ok(Samples { reps: count, d, data: blocks.concat() })
}

fn check_psd(sigma: &Matrix) -> Result<()> {
    let ev = symmetric_eigenvalues(sigma, 1e-12)?;
    if ev[0] < -1e-10 * sigma.trace().abs().max(f64::MIN_POSITIVE) {
        return Err(Error::NotPsd { min_eigenvalue: ev[0] });
    }
    Ok(())
}

impl Reference {
    pub fn new(sigma: &Matrix, n_ref: usize, seed: u64) -> Result<Self> {
        if sigma.is_diagonal() {
            check_psd(sigma)?;
            return Ok(Self::Diagonal { sds: sigma.diagonal().iter().map(|v| v.sqrt()).collect() });
        }
        Self::sampled(sigma, n_ref, seed)
    }

    pub fn sampled(sigma: &Matrix, n_ref: usize, seed: u64) -> Result<Self> {
        Ok(Self::Sampled { sigma: sigma.clone(), sample: sample_gaussian(sigma, n_ref, seed)? })
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Diagonal { sds } => sds.len(),
            Self::Sampled { sigma, .. } => sigma.rows,
        }
    }

    pub fn sds(&self) -> Vec<f64> {
        match self {
            Self::Diagonal { sds } => sds.clone(),
            Self::Sampled { sigma, .. } => sigma.diagonal().iter().map(|v| v.sqrt()).collect(),
        }
    }

    pub fn n_ref(&self) -> Option<usize> {
        match self {
            Self::Diagonal { .. } => None,
            Self::Sampled { sample, .. } => Some(sample.reps),
        }
    }
}

fn interval_prob(sd: f64, a: f64, b: f64) -> f64 {
    if sd == 0.0 {
        return if a < 0.0 && 0.0 <= b { 1.0 } else { 0.0 };
    }
    // upper tails avoid cancellation on the right
    let (za, zb) = (a / sd, b / sd);
    if za > 0.0 {
        norm_cdf(-za) - norm_cdf(-zb)
    } else {
        norm_cdf(zb) - norm_cdf(za)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum RectProbMethod {
    Exact,
    MonteCarlo { n_ref: usize, seed: u64 },
}

/// `P(Z ∈ rect)` for `Z ~ N(0, Σ)` with its standard error (zero when exact).
pub fn gaussian_rect_prob(sigma: &Matrix, rect: &Rect, method: RectProbMethod) -> Result<(f64, f64)> {
    if rect.dim() != sigma.rows {
        return Err(Error::DimensionMismatch { expected: sigma.rows, got: rect.dim() });
    }
    check_psd(sigma)?;
    match method {
        RectProbMethod::Exact if sigma.is_diagonal() => {
            let p = sigma
                .diagonal()
                .iter()
                .enumerate()
                .map(|(i, v)| interval_prob(v.sqrt(), rect.lower[i], rect.upper[i]))
                .product::<f64>();
            Ok((p.clamp(0.0, 1.0), 0.0))
        }
        RectProbMethod::Exact => Err(Error::invalid("exact rectangle probabilities need a diagonal covariance")),
        RectProbMethod::MonteCarlo { n_ref, seed } => {
            let s = sample_gaussian(sigma, n_ref, seed)?;
            let p = s.rows().filter(|x| rect.contains(x)).count() as f64 / n_ref as f64;
            Ok((p, (p * (1.0 - p) / n_ref as f64).sqrt()))
        }
    }
}

/// Per-coordinate sorted columns for fast single-axis counts.
struct SortedColumns {
    cols: Vec<Vec<f64>>,
}

impl SortedColumns {
    fn new(s: &Samples) -> Self {
        let cols = (0..s.d)
            .map(|j| {
                let mut c = s.column(j);
                c.sort_by(f64::total_cmp);
                c
            })
            .collect();
        Self { cols }
    }

    /// Fraction of samples with `a < x_j ≤ b`.
    fn freq(&self, j: usize, a: f64, b: f64) -> f64 {
        let c = &self.cols[j];
        let hi = c.partition_point(|&x| x <= b);
        let lo = c.partition_point(|&x| x <= a);
        (hi - lo) as f64 / c.len() as f64
    }
}

fn empirical_freq(s: &Samples, cols: &SortedColumns, rect: &Rect) -> f64 {
    match rect.single_axis() {
        Some(j) => cols.freq(j, rect.lower[j], rect.upper[j]),
        None if rect.is_full() => 1.0,
        None => s.rows().filter(|x| rect.contains(x)).count() as f64 / s.reps as f64,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceEstimate {
    pub point: f64,
    pub half_width: f64,
    pub family_size: usize,
    pub replicates: usize,
    pub method: String,
    pub n: Option<usize>,
    pub d: usize,
    pub seed: Option<u64>,
}

pub const ESTIMATE_CSV_HEADER: &str = "n,d,method,point,half_width,family_size,replicates,seed";

impl DistanceEstimate {
    pub fn with_cell(mut self, n: usize, seed: u64) -> Self {
        self.n = Some(n);
        self.seed = Some(seed);
        self
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{:e},{:e},{},{},{}",
            self.n.map_or(String::new(), |v| v.to_string()),
            self.d,
            self.method,
            self.point,
            self.half_width,
            self.family_size,
            self.replicates,
            self.seed.map_or(String::new(), |v| v.to_string())
        )
    }

    pub fn write_csv<W: Write>(rows: &[DistanceEstimate], mut w: W) -> Result<()> {
        writeln!(w, "{ESTIMATE_CSV_HEADER}")?;
        for r in rows {
            writeln!(w, "{}", r.csv_row())?;
        }
        Ok(())
    }
}

/// Union-bound half-width for `count` simultaneous frequencies from `m` draws.
fn hoeffding_half_width(count: usize, m: usize) -> f64 {
    ((2.0 * count as f64 / ALPHA).ln() / (2.0 * m as f64)).sqrt()
}

/// Hyper-rectangle distance estimate `max_{A ∈ family} |P̂(S ∈ A) - P(Z ∈ A)|`.
pub fn estimate_dr(samples: &Samples, reference: &Reference, family: &RectangleFamily) -> Result<DistanceEstimate> {
    if family.is_empty() {
        return Err(Error::invalid("rectangle family is empty"));
    }
    if samples.d != reference.dim() {
        return Err(Error::DimensionMismatch { expected: reference.dim(), got: samples.d });
    }
    let cols = SortedColumns::new(samples);
    let ref_cols = match reference {
        Reference::Sampled { sample, .. } => Some(SortedColumns::new(sample)),
        Reference::Diagonal { .. } => None,
    };
    let sds = reference.sds();
    // (gap, reference probability was sampled)
    let gaps: Vec<(f64, bool)> = family
        .rects
        .par_iter()
        .map(|r| {
            let (p_ref, mc) = match (reference, r.single_axis()) {
                (Reference::Diagonal { .. }, _) => (sds.iter().enumerate().map(|(i, &s)| interval_prob(s, r.lower[i], r.upper[i])).product(), false),
                // marginals of N(0, Σ) are exact even when Σ is not diagonal
                (Reference::Sampled { .. }, Some(j)) => (interval_prob(sds[j], r.lower[j], r.upper[j]), false),
                (Reference::Sampled { .. }, None) if r.is_full() => (1.0, false),
                (Reference::Sampled { sample, .. }, None) => (empirical_freq(sample, ref_cols.as_ref().expect("sampled reference"), r), true),
            };
            ((empirical_freq(samples, &cols, r) - p_ref).abs(), mc)
        })
        .collect();
    let point = gaps.iter().map(|g| g.0).fold(0.0, f64::max);
    let n_mc = gaps.iter().filter(|g| g.1).count();
    let mut half_width = hoeffding_half_width(family.len(), samples.reps);
    let mut method = format!("dR_lower_bound[{}]", family.construction);
    if let (Some(n_ref), true) = (reference.n_ref(), n_mc > 0) {
        half_width += hoeffding_half_width(n_mc, n_ref);
        method.push_str("+mc_reference");
    }
    Ok(DistanceEstimate {
        point,
        half_width,
        family_size: family.len(),
        replicates: samples.reps,
        method,
        n: None,
        d: samples.d,
        seed: None,
    })
}

/// Centred balls `{x : xᵀ W x ≤ r}` for each shape `W`.
#[derive(Debug, Clone)]
pub struct BallFamily {
    pub shapes: Vec<Matrix>,
    /// `None` takes the supremum over every radius.
    pub radii: Option<Vec<f64>>,
}

impl BallFamily {
    /// Euclidean balls and Mahalanobis ellipsoids of `Σ`, all radii.
    pub fn standard(sigma: &Matrix) -> Result<Self> {
        let mut shapes = vec![Matrix::identity(sigma.rows)];
        if !sigma.is_diagonal() || sigma.diagonal().iter().any(|&v| v != 1.0) {
            shapes.push(inverse_spd(sigma)?);
        }
        Ok(Self { shapes, radii: None })
    }
}

fn inverse_spd(a: &Matrix) -> Result<Matrix> {
    let l = cholesky(a, 0.0)?;
    let n = a.rows;
    let mut inv = Matrix::zeros(n, n);
    for k in 0..n {
        let mut e = vec![0.0; n];
        e[k] = 1.0;
        let y = crate::linalg::forward_solve(&l, &e);
        // back substitution with Lᵀ
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let mut s = y[i];
            for j in i + 1..n {
                s -= l[(j, i)] * x[j];
            }
            x[i] = s / l[(i, i)];
        }
        for i in 0..n {
            inv[(i, k)] = x[i];
        }
    }
    Ok(inv)
}

fn quad_forms(s: &Samples, w: &Matrix) -> Vec<f64> {
    let mut q: Vec<f64> = s.rows().map(|x| x.iter().zip(w.mul_vec(x)).map(|(a, b)| a * b).sum()).collect();
    q.sort_by(f64::total_cmp);
    q
}

fn cdf_at(sorted: &[f64], r: f64) -> f64 {
    sorted.partition_point(|&x| x <= r) as f64 / sorted.len() as f64
}

/// Ball/ellipsoid proxy for the convex distance (a lower bound of it).
/// Reference probabilities come from a Monte Carlo sample of `N(0, Σ)`.
pub fn estimate_dc_ball(samples: &Samples, sigma_ref: &Matrix, family: &BallFamily, n_ref: usize, seed: u64) -> Result<DistanceEstimate> {
    if samples.d != sigma_ref.rows {
        return Err(Error::DimensionMismatch { expected: sigma_ref.rows, got: samples.d });
    }
    for w in &family.shapes {
        let ev = symmetric_eigenvalues(w, 1e-12)?;
        if !(ev[0] > 0.0) {
            return Err(Error::invalid(format!("ball shape must be positive definite (eigenvalue {})", ev[0])));
        }
    }
    let reference = sample_gaussian(sigma_ref, n_ref, seed)?;
    let mut point = 0.0f64;
    for w in &family.shapes {
        let qs = quad_forms(samples, w);
        let qr = quad_forms(&reference, w);
        let gap = match &family.radii {
            Some(radii) => radii.iter().map(|&r| (cdf_at(&qs, r) - cdf_at(&qr, r)).abs()).fold(0.0, f64::max),
            None => ks_two_sample(&qs, &qr),
        };
        point = point.max(gap);
    }
    let m = family.shapes.len() * family.radii.as_ref().map_or(1, Vec::len);
    // DKW for each sample, so the bound also covers the continuum of radii
    let c = (4.0 * m as f64 / ALPHA).ln() / 2.0;
    let half_width = (c / samples.reps as f64).sqrt() + (c / n_ref as f64).sqrt();
    Ok(DistanceEstimate {
        point,
        half_width,
        family_size: m,
        replicates: samples.reps,
        method: "dC_ball_lower_bound+mc_reference".into(),
        n: None,
        d: samples.d,
        seed: Some(seed),
    })
}

/// `sup_r |F_a(r) - F_b(r)|` for sorted samples.
fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut best = 0.0f64;
    while i < a.len() || j < b.len() {
        let x = match (a.get(i), b.get(j)) {
            (Some(&u), Some(&v)) => u.min(v),
            (Some(&u), None) => u,
            (None, Some(&v)) => v,
            (None, None) => break,
        };
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        best = best.max((i as f64 / na - j as f64 / nb).abs());
    }
    best
}

/// `∫ |F_n(x) - Φ(x/σ)| dx` for sorted samples.
pub fn w1_to_normal(sorted: &[f64], sd: f64) -> f64 {
    let m = sorted.len();
    if m == 0 {
        return 0.0;
    }
    // antiderivative of Φ(x/σ)
    let g = |x: f64| {
        let u = x / sd;
        x * norm_cdf(u) + sd * norm_pdf(u)
    };
    let first = sorted[0];
    let mut total = g(first);
    let last = sorted[m - 1];
    let ul = last / sd;
    total += sd * (norm_pdf(ul) - ul * norm_cdf(-ul));
    for k in 1..m {
        let (a, b) = (sorted[k - 1], sorted[k]);
        if b <= a {
            continue;
        }
        let level = k as f64 / m as f64;
        let cross = sd * norm_quantile(level);
        // ∫ |level - Φ| split at the crossing point
        let seg = |lo: f64, hi: f64| level * (hi - lo) - (g(hi) - g(lo));
        if cross <= a {
            total -= seg(a, b);
        } else if cross >= b {
            total += seg(a, b);
        } else {
            total += seg(a, cross) - seg(cross, b);
        }
    }
    total
}

/// Largest coordinate Wasserstein-1 distance to `N(0, Σ_ii)`, a lower bound
/// of the multivariate Wasserstein distance.
pub fn estimate_dw1_marginal(samples: &Samples, sigma_ref: &Matrix) -> Result<DistanceEstimate> {
    if samples.d != sigma_ref.rows {
        return Err(Error::DimensionMismatch { expected: sigma_ref.rows, got: samples.d });
    }
    let mut point = 0.0f64;
    let mut sd_max = 0.0f64;
    for j in 0..samples.d {
        let sd = sigma_ref[(j, j)].sqrt();
        sd_max = sd_max.max(sd);
        let mut c = samples.column(j);
        c.sort_by(f64::total_cmp);
        point = point.max(w1_to_normal(&c, sd));
    }
    Ok(DistanceEstimate {
        point,
        half_width: w1_level_multiplier() * sd_max / (samples.reps as f64).sqrt(),
        family_size: samples.d,
        replicates: samples.reps,
        method: "dW_marginal_lower_bound".into(),
        n: None,
        d: samples.d,
        seed: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateMode {
    Loglog,
    /// Regresses `log(est / log n)`.
    LoglogLogcorrected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub residuals: Vec<f64>,
}

pub fn rate_fit(points: &[(f64, f64)], mode: RateMode) -> Result<RateFit> {
    if points.len() < 3 {
        return Err(Error::invalid("rate fit needs at least three points"));
    }
    let xy: Vec<(f64, f64)> = points
        .iter()
        .map(|&(n, e)| {
            if !(e > 0.0) || !(n > 1.0) {
                return Err(Error::invalid(format!("rate fit needs n > 1 and positive estimates, got ({n}, {e})")));
            }
            let y = match mode {
                RateMode::Loglog => e.ln(),
                RateMode::LoglogLogcorrected => (e / n.ln()).ln(),
            };
            Ok((n.ln(), y))
        })
        .collect::<Result<_>>()?;
    let k = xy.len() as f64;
    let mx = xy.iter().map(|p| p.0).sum::<f64>() / k;
    let my = xy.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = xy.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("rate fit needs distinct n values"));
    }
    let slope = xy.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / sxx;
    let intercept = my - slope * mx;
    let residuals = xy.iter().map(|p| p.1 - intercept - slope * p.0).collect();
    Ok(RateFit { slope, intercept, residuals })
}

/// Rescales samples, reference and family by positive per-axis factors.
pub fn rescale(samples: &Samples, reference_sds: &[f64], family: &RectangleFamily, s: &[f64]) -> (Samples, Vec<f64>, RectangleFamily) {
    let data = samples.rows().flat_map(|r| r.iter().zip(s).map(|(x, c)| x * c).collect::<Vec<_>>()).collect();
    let sds = reference_sds.iter().zip(s).map(|(a, c)| a * c).collect();
    let fam = RectangleFamily { rects: family.rects.iter().map(|r| r.scaled(s)).collect(), construction: family.construction.clone() };
    (Samples { reps: samples.reps, d: samples.d, data }, sds, fam)
}
