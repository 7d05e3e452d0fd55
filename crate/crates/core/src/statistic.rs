//! The statistic `S_n = n^{-1/2} Σ_{k=1}^n Φ(G_k)` and its presets.
//!
//! Statistics are evaluated with the direct functional forms (cos, sin, exp,
//! normalized Hermite recurrence). Expansions are attached for covariance and
//! bound computations only.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autocov::AutocovarianceModel;
use crate::error::{Error, Result};
use crate::hermite::{normalized_hermite_all, CatalogEntry, HermiteExpansion};
use crate::linalg::Matrix;
use crate::rng::replicate_seed;
use crate::sim::PathGenerator;

/// Default cap on EMGF parameters; `e^{λG}` has variance `e^{2λ²} - e^{λ²}`.
pub const EMGF_LAMBDA_MAX: f64 = 3.0;

/// Number of stored coefficients for catalog-backed coordinates.
pub const DEFAULT_Q_STORE: usize = 60;

/// A single coordinate function given either by the catalog or by the
/// coefficients `a_q` of `Σ a_q H_q`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum CoordinateFn {
    Catalog { entry: CatalogEntry },
    Hermite { coeffs: Vec<f64> },
}

impl CoordinateFn {
    pub fn expansion(&self, q_store: usize) -> Result<HermiteExpansion> {
        match self {
            Self::Catalog { entry } => HermiteExpansion::catalog(*entry, q_store),
            Self::Hermite { coeffs } => HermiteExpansion::manual(coeffs.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StatisticKind {
    /// `(h_2, .., h_{d+1})` with `h_q = H_q/√q!`.
    Mom { d: usize },
    EcfCos { lambdas: Vec<f64> },
    EcfSin { lambdas: Vec<f64> },
    Emgf { lambdas: Vec<f64> },
    /// Block sums of one function over the partition `0 = t_0 < .. < t_d`.
    BreuerMajor { phi: CoordinateFn, partition: Vec<f64> },
    Custom { coords: Vec<CoordinateFn> },
}

impl StatisticKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Mom { .. } => "mom",
            Self::EcfCos { .. } => "ecf_cos",
            Self::EcfSin { .. } => "ecf_sin",
            Self::Emgf { .. } => "emgf",
            Self::BreuerMajor { .. } => "breuer_major",
            Self::Custom { .. } => "custom",
        }
    }
}

/// `λ_i = i^τ` for `i = 1..d`.
pub fn power_lambdas(d: usize, tau: f64) -> Vec<f64> {
    (1..=d).map(|i| (i as f64).powf(tau)).collect()
}

/// `d + 1` equally spaced partition points of `[0, 1]`.
pub fn uniform_partition(d: usize) -> Vec<f64> {
    (0..=d).map(|i| i as f64 / d as f64).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BuildOptions {
    pub q_store: usize,
    pub emgf_lambda_max: f64,
    /// Accept Hermite rank one (comparison with the classical fdd result).
    pub allow_rank_one: bool,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self { q_store: DEFAULT_Q_STORE, emgf_lambda_max: EMGF_LAMBDA_MAX, allow_rank_one: false }
    }
}

#[derive(Debug, Clone)]
pub struct SubordinatedStatistic {
    pub kind: StatisticKind,
    pub coords: Vec<HermiteExpansion>,
    pub d: usize,
}

fn check_lambdas(lambdas: &[f64], cap: Option<f64>) -> Result<()> {
    if lambdas.is_empty() {
        return Err(Error::invalid("need at least one lambda"));
    }
    for (i, &l) in lambdas.iter().enumerate() {
        if !(l > 0.0) || !l.is_finite() {
            return Err(Error::invalid(format!("lambda_{} must be positive, got {l}", i + 1)));
        }
        if let Some(cap) = cap {
            if l > cap {
                return Err(Error::invalid(format!("lambda_{} = {l} exceeds the EMGF cap {cap}", i + 1)));
            }
        }
    }
    Ok(())
}

fn check_partition(t: &[f64]) -> Result<()> {
    if t.len() < 2 {
        return Err(Error::invalid("partition needs at least two points"));
    }
    if t[0] != 0.0 {
        return Err(Error::invalid(format!("partition must start at 0, got {}", t[0])));
    }
    for w in t.windows(2) {
        let gap = w[1] - w[0];
        if !(gap > 0.0) {
            return Err(Error::invalid(format!("partition must be strictly increasing ({} then {})", w[0], w[1])));
        }
        if gap > 1.0 {
            return Err(Error::invalid(format!("partition blocks must have width at most 1, got {gap}")));
        }
    }
    Ok(())
}

impl SubordinatedStatistic {
    pub fn build(kind: StatisticKind) -> Result<Self> {
        Self::build_with(kind, BuildOptions::default())
    }

    pub fn build_with(kind: StatisticKind, opts: BuildOptions) -> Result<Self> {
        let q = opts.q_store;
        let cat = |e: CatalogEntry| HermiteExpansion::catalog(e, q);
        let coords: Vec<HermiteExpansion> = match &kind {
            StatisticKind::Mom { d } => {
                if *d == 0 {
                    return Err(Error::invalid("dimension must be at least 1"));
                }
                (1..=*d).map(|i| cat(CatalogEntry::MomHermite { i })).collect::<Result<_>>()?
            }
            StatisticKind::EcfCos { lambdas } => {
                check_lambdas(lambdas, None)?;
                lambdas.iter().map(|&lambda| cat(CatalogEntry::EcfCos { lambda })).collect::<Result<_>>()?
            }
            StatisticKind::EcfSin { lambdas } => {
                check_lambdas(lambdas, None)?;
                lambdas.iter().map(|&lambda| cat(CatalogEntry::EcfSin { lambda })).collect::<Result<_>>()?
            }
            StatisticKind::Emgf { lambdas } => {
                check_lambdas(lambdas, Some(opts.emgf_lambda_max))?;
                lambdas.iter().map(|&lambda| cat(CatalogEntry::Emgf { lambda })).collect::<Result<_>>()?
            }
            StatisticKind::BreuerMajor { phi, partition } => {
                check_partition(partition)?;
                let e = phi.expansion(q)?;
                vec![e; partition.len() - 1]
            }
            StatisticKind::Custom { coords } => {
                if coords.is_empty() {
                    return Err(Error::invalid("custom statistic needs at least one coordinate"));
                }
                coords.iter().map(|c| c.expansion(q)).collect::<Result<_>>()?
            }
        };
        let required = if opts.allow_rank_one { 1 } else { 2 };
        for c in &coords {
            if c.rank < required {
                return Err(Error::RankTooLow { rank: c.rank, required });
            }
        }
        let d = coords.len();
        Ok(Self { kind, coords, d })
    }

    /// Summation blocks `[start, end)` in 0-based path indices.
    pub fn blocks(&self, n: usize) -> Vec<(usize, usize)> {
        match &self.kind {
            StatisticKind::BreuerMajor { partition, .. } => partition
                .windows(2)
                .map(|w| {
                    let a = ((n as f64) * w[0]).floor() as usize;
                    let b = ((n as f64) * w[1]).floor() as usize;
                    (a.min(n), b.min(n))
                })
                .collect(),
            _ => vec![(0, n); self.d],
        }
    }

    pub fn evaluate(&self, path: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.d];
        self.evaluate_into(path, &mut out, &mut Vec::new())?;
        Ok(out)
    }

    fn evaluate_into(&self, path: &[f64], out: &mut [f64], scratch: &mut Vec<f64>) -> Result<()> {
        let n = path.len();
        if n == 0 {
            return Err(Error::invalid("path must be nonempty"));
        }
        let scale = 1.0 / (n as f64).sqrt();
        out.iter_mut().for_each(|v| *v = 0.0);
        match &self.kind {
            StatisticKind::Mom { d } => {
                for &g in path {
                    normalized_hermite_all(d + 1, g, scratch);
                    for (o, h) in out.iter_mut().zip(&scratch[2..]) {
                        *o += h;
                    }
                }
            }
            StatisticKind::EcfCos { lambdas } => {
                for (o, &l) in out.iter_mut().zip(lambdas) {
                    let m = (-0.5 * l * l).exp();
                    *o = path.iter().map(|&g| (l * g).cos() - m).sum();
                }
            }
            StatisticKind::EcfSin { lambdas } => {
                for (o, &l) in out.iter_mut().zip(lambdas) {
                    let m = l * (-0.5 * l * l).exp();
                    *o = path.iter().map(|&g| (l * g).sin() - m * g).sum();
                }
            }
            StatisticKind::Emgf { lambdas } => {
                for (o, &l) in out.iter_mut().zip(lambdas) {
                    let m = (0.5 * l * l).exp();
                    *o = path.iter().map(|&g| (l * g).exp() - m * (1.0 + l * g)).sum();
                }
            }
            StatisticKind::BreuerMajor { .. } => {
                let phi = &self.coords[0];
                for (o, (a, b)) in out.iter_mut().zip(self.blocks(n)) {
                    *o = path[a..b].iter().map(|&g| phi.eval(g)).sum();
                }
            }
            StatisticKind::Custom { .. } => {
                for (o, c) in out.iter_mut().zip(&self.coords) {
                    *o = path.iter().map(|&g| c.eval(g)).sum();
                }
            }
        }
        for (i, o) in out.iter_mut().enumerate() {
            if !o.is_finite() {
                return Err(Error::Overflow { coordinate: i + 1 });
            }
            *o *= scale;
        }
        Ok(())
    }

    /// `R` independent evaluations; row `r` uses the path seeded by
    /// `replicate_seed(master_seed, r)` and does not depend on scheduling.
    pub fn evaluate_batch(&self, model: &AutocovarianceModel, n: usize, reps: usize, master_seed: u64) -> Result<Samples> {
        let gen = PathGenerator::new(model, n)?;
        self.evaluate_batch_with(&gen, reps, master_seed)
    }

    pub fn evaluate_batch_with(&self, gen: &PathGenerator, reps: usize, master_seed: u64) -> Result<Samples> {
        if reps == 0 {
            return Err(Error::invalid("need at least one replicate"));
        }
        let d = self.d;
        let n = gen.len();
        let rows: Vec<Result<Vec<f64>>> = (0..reps)
            .into_par_iter()
            .map_init(
                || (vec![0.0; n], Vec::new()),
                |(path, scratch), r| {
                    gen.fill(replicate_seed(master_seed, r as u64), path);
                    let mut row = vec![0.0; d];
                    self.evaluate_into(path, &mut row, scratch)?;
                    Ok(row)
                },
            )
            .collect();
        let mut data = Vec::with_capacity(reps * d);
        for row in rows {
            data.extend(row?);
        }
        Ok(Samples { reps, d, data })
    }
}

/// Replicates of a `d`-dimensional statistic, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Samples {
    pub reps: usize,
    pub d: usize,
    pub data: Vec<f64>,
}

impl Samples {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map(Vec::len).ok_or_else(|| Error::invalid("no rows"))?;
        let mut data = Vec::with_capacity(rows.len() * d);
        for r in rows {
            if r.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: r.len() });
            }
            data.extend_from_slice(r);
        }
        Ok(Self { reps: rows.len(), d, data })
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.d..(r + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.d)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.d];
        for r in self.rows() {
            for (a, b) in m.iter_mut().zip(r) {
                *a += b;
            }
        }
        m.iter_mut().for_each(|v| *v /= self.reps as f64);
        m
    }

    /// Unbiased sample covariance.
    pub fn covariance(&self) -> Matrix {
        let m = self.mean();
        let d = self.d;
        let mut c = Matrix::zeros(d, d);
        for r in self.rows() {
            for i in 0..d {
                let di = r[i] - m[i];
                for j in i..d {
                    c[(i, j)] += di * (r[j] - m[j]);
                }
            }
        }
        let denom = (self.reps.max(2) - 1) as f64;
        for i in 0..d {
            for j in i..d {
                let v = c[(i, j)] / denom;
                c[(i, j)] = v;
                c[(j, i)] = v;
            }
        }
        c
    }

    /// Standard error of each coordinate mean.
    pub fn mean_std_error(&self) -> Vec<f64> {
        let c = self.covariance();
        (0..self.d).map(|i| (c[(i, i)] / self.reps as f64).sqrt()).collect()
    }

    /// Standard errors of the sample covariance entries, from the empirical
    /// variance of the centred products.
    pub fn covariance_std_error(&self) -> Matrix {
        let m = self.mean();
        let c = self.covariance();
        let d = self.d;
        let mut s = Matrix::zeros(d, d);
        for r in self.rows() {
            for i in 0..d {
                for j in i..d {
                    let p = (r[i] - m[i]) * (r[j] - m[j]) - c[(i, j)];
                    s[(i, j)] += p * p;
                }
            }
        }
        let nn = self.reps as f64;
        for i in 0..d {
            for j in i..d {
                let v = (s[(i, j)] / (nn - 1.0).max(1.0) / nn).sqrt();
                s[(i, j)] = v;
                s[(j, i)] = v;
            }
        }
        s
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        write!(w, "rep")?;
        for j in 1..=self.d {
            write!(w, ",coord_{j}")?;
        }
        writeln!(w)?;
        for (r, row) in self.rows().enumerate() {
            write!(w, "{r}")?;
            for v in row {
                write!(w, ",{v:e}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}
