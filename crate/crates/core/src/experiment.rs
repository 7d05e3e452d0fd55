//! Config-driven experiments: presets, grid runs over `(n, d)` and result
//! persistence (CSV tables plus a JSON summary).

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::autocov::{AutocovarianceModel, DependenceClass};
use crate::bounds::{bound_fixed_cov, bound_main, bound_mom, bound_srd_lrd, BoundReport, DependenceCase, Distance};
use crate::covariance::{exact_cov_with, limiting_cov, CovOptions, CovarianceReport, Truncation};
use crate::distance::{
    estimate_dc_ball, estimate_dr, estimate_dw1_marginal, rate_fit, BallFamily, DistanceEstimate, RateMode, RectangleFamily, Reference,
    ESTIMATE_CSV_HEADER,
};
use crate::error::{Error, Result};
use crate::hermite::{fit_theta, ThetaParams, BETA_GRID, FIT_Q_MAX};
use crate::rng::sub_seed;
use crate::statistic::{power_lambdas, uniform_partition, BuildOptions, CoordinateFn, StatisticKind, SubordinatedStatistic};

pub const SCHEMA_VERSION: u32 = 1;
pub const MIN_RATE_REPLICATES: usize = 1000;

pub const BOUNDS_CSV_HEADER: &str = "n,d,distance,formula_id,value,log_value,admissible";
pub const COVARIANCE_CSV_HEADER: &str = "n,d,sigma_star_sq,gershgorin_lower,sigma_star_sq_cov,sigma_dagger_sq,q_used,tail,max_mean_z,max_cov_z";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    MomRate,
    EcfRate,
    EmgfRate,
    BmFddRate,
    FgnEigen,
    DimensionScaling,
    Custom,
}

impl Preset {
    pub const ALL: [Preset; 7] = [
        Preset::MomRate,
        Preset::EcfRate,
        Preset::EmgfRate,
        Preset::BmFddRate,
        Preset::FgnEigen,
        Preset::DimensionScaling,
        Preset::Custom,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::MomRate => "mom_rate",
            Preset::EcfRate => "ecf_rate",
            Preset::EmgfRate => "emgf_rate",
            Preset::BmFddRate => "bm_fdd_rate",
            Preset::FgnEigen => "fgn_eigen",
            Preset::DimensionScaling => "dimension_scaling",
            Preset::Custom => "custom",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown preset '{s}'")))
    }

    fn id(self) -> u64 {
        Self::ALL.iter().position(|p| *p == self).expect("listed") as u64
    }

    pub fn description(self) -> &'static str {
        match self {
            Preset::MomRate => "method of moments, H_2..H_{d+1} of IID noise; dR/dC/dW estimates and n-rate fit",
            Preset::EcfRate => "empirical characteristic function (cos), lambda_i = i, AR(1) phi=0.5; dR rate fit",
            Preset::EmgfRate => "empirical moment generating function, lambda_i = i, AR(1) phi=0.5; dR rate fit",
            Preset::BmFddRate => "Breuer-Major block sums of H_2/sqrt(2) over a uniform partition, AR(1) phi=0.5",
            Preset::FgnEigen => "fGn H=0.3, ECF cos with lambda_i = i^1.302: eigenvalue certificates only, no Monte Carlo",
            Preset::DimensionScaling => "ECF cos over d in {2,4,8} at n=1024, IID noise; bound and estimate growth in d",
            Preset::Custom => "user supplied config; defaults mirror mom_rate",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PresetInfo {
    pub name: &'static str,
    pub description: &'static str,
}

pub fn list_presets() -> Vec<PresetInfo> {
    Preset::ALL.iter().map(|p| PresetInfo { name: p.name(), description: p.description() }).collect()
}

/// Statistic family instantiated for each `d` of the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StatisticSpec {
    Mom,
    /// `λ_i = i^τ`.
    EcfCos { tau: f64 },
    EcfSin { tau: f64 },
    Emgf { tau: f64 },
    /// Block sums over the uniform partition of `[0, 1]` into `d` pieces.
    BreuerMajor {
        phi: CoordinateFn,
        #[serde(default)]
        allow_rank_one: bool,
    },
    /// A fixed statistic; `d_grid` must hold its dimension only.
    Fixed { statistic: StatisticKind },
}

impl StatisticSpec {
    pub fn build(&self, d: usize) -> Result<SubordinatedStatistic> {
        let kind = match self {
            StatisticSpec::Mom => StatisticKind::Mom { d },
            StatisticSpec::EcfCos { tau } => StatisticKind::EcfCos { lambdas: power_lambdas(d, *tau) },
            StatisticSpec::EcfSin { tau } => StatisticKind::EcfSin { lambdas: power_lambdas(d, *tau) },
            StatisticSpec::Emgf { tau } => StatisticKind::Emgf { lambdas: power_lambdas(d, *tau) },
            StatisticSpec::BreuerMajor { phi, allow_rank_one } => {
                let kind = StatisticKind::BreuerMajor { phi: phi.clone(), partition: uniform_partition(d) };
                let opts = BuildOptions { allow_rank_one: *allow_rank_one, ..BuildOptions::default() };
                return SubordinatedStatistic::build_with(kind, opts);
            }
            StatisticSpec::Fixed { statistic } => statistic.clone(),
        };
        let s = SubordinatedStatistic::build(kind)?;
        if s.d != d {
            return Err(Error::DimensionMismatch { expected: d, got: s.d });
        }
        Ok(s)
    }
}

fn default_distances() -> Vec<Distance> {
    vec![Distance::Rectangles, Distance::Convex, Distance::Wasserstein]
}

fn default_true() -> bool {
    true
}

fn default_n_ref() -> usize {
    crate::distance::DEFAULT_N_REF
}

fn default_scale() -> f64 {
    1.0
}

fn default_cov_tol() -> f64 {
    crate::covariance::DEFAULT_COV_TOL
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub preset: Preset,
    pub model: AutocovarianceModel,
    pub statistic: StatisticSpec,
    pub n_grid: Vec<usize>,
    pub d_grid: Vec<usize>,
    pub replicates: usize,
    #[serde(default = "default_n_ref")]
    pub n_ref: usize,
    pub master_seed: u64,
    #[serde(rename = "scale_C", default = "default_scale")]
    pub scale_c: f64,
    /// Run the Monte Carlo distance estimates.
    #[serde(default = "default_true")]
    pub monte_carlo: bool,
    #[serde(default = "default_distances")]
    pub distances: Vec<Distance>,
    #[serde(default = "default_cov_tol")]
    pub cov_tol: f64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// File name stem of the outputs; the preset name by default.
    #[serde(default)]
    pub output_stem: Option<String>,
}

fn pow2_grid(lo: u32, hi: u32) -> Vec<usize> {
    (lo..=hi).map(|k| 1usize << k).collect()
}

impl ExperimentConfig {
    pub fn preset(p: Preset) -> Self {
        let base = Self {
            preset: p,
            model: AutocovarianceModel::Ar1 { phi: 0.5 },
            statistic: StatisticSpec::Mom,
            n_grid: pow2_grid(8, 14),
            d_grid: vec![2],
            replicates: 10_000,
            n_ref: default_n_ref(),
            master_seed: 20_240_601,
            scale_c: 1.0,
            monte_carlo: true,
            distances: default_distances(),
            cov_tol: default_cov_tol(),
            output_dir: None,
            output_stem: None,
        };
        match p {
            Preset::MomRate | Preset::Custom => Self { model: AutocovarianceModel::Iid, ..base },
            Preset::EcfRate => Self { statistic: StatisticSpec::EcfCos { tau: 1.0 }, distances: vec![Distance::Rectangles], ..base },
            Preset::EmgfRate => Self { statistic: StatisticSpec::Emgf { tau: 1.0 }, distances: vec![Distance::Rectangles], ..base },
            Preset::BmFddRate => Self {
                statistic: StatisticSpec::BreuerMajor {
                    phi: CoordinateFn::Hermite { coeffs: vec![0.0, 0.0, std::f64::consts::FRAC_1_SQRT_2] },
                    allow_rank_one: false,
                },
                distances: vec![Distance::Rectangles],
                ..base
            },
            Preset::FgnEigen => Self {
                model: AutocovarianceModel::Fgn { hurst: 0.3 },
                statistic: StatisticSpec::EcfCos { tau: 1.302 },
                n_grid: vec![64, 256, 1024],
                d_grid: vec![2, 4, 8],
                monte_carlo: false,
                ..base
            },
            Preset::DimensionScaling => Self {
                model: AutocovarianceModel::Iid,
                statistic: StatisticSpec::EcfCos { tau: 1.0 },
                n_grid: vec![1024],
                d_grid: vec![2, 4, 8],
                distances: vec![Distance::Rectangles],
                ..base
            },
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(s)?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.n_grid.is_empty() || self.d_grid.is_empty() {
            return Err(Error::invalid("n_grid and d_grid must be nonempty"));
        }
        if self.n_grid[0] == 0 || self.n_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("n_grid must be positive and strictly increasing"));
        }
        if self.d_grid.contains(&0) {
            return Err(Error::invalid("d_grid entries must be positive"));
        }
        if self.monte_carlo {
            if self.replicates < MIN_RATE_REPLICATES {
                return Err(Error::invalid(format!(
                    "Monte Carlo runs need at least {MIN_RATE_REPLICATES} replicates, got {}",
                    self.replicates
                )));
            }
            if self.n_ref == 0 {
                return Err(Error::invalid("n_ref must be positive"));
            }
        }
        if !(self.scale_c > 0.0) {
            return Err(Error::invalid("scale_C must be positive"));
        }
        Ok(())
    }

    pub fn stem(&self) -> String {
        self.output_stem.clone().unwrap_or_else(|| self.preset.name().to_string())
    }

    fn cell_seed(&self, n: usize, d: usize) -> u64 {
        sub_seed(self.master_seed, &[self.preset.id(), n as u64, d as u64])
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CellResult {
    pub n: usize,
    pub d: usize,
    pub seed: u64,
    pub statistic: String,
    pub theta: ThetaParams,
    pub covariance: CovarianceReport,
    pub bounds: Vec<BoundReport>,
    pub estimates: Vec<DistanceEstimate>,
    /// Largest `|mean| / SE` over coordinates (Monte Carlo runs only).
    pub max_mean_z: Option<f64>,
    /// Largest `|Σ_exact - Σ_MC| / SE` over entries.
    pub max_cov_z: Option<f64>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Comparison {
    pub n: usize,
    pub d: usize,
    pub distance: Distance,
    pub bound: f64,
    pub estimate: f64,
    pub half_width: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub schema_version: u32,
    pub config_echo: ExperimentConfig,
    pub results: Vec<CellResult>,
    pub slopes: BTreeMap<String, f64>,
    pub comparison: Vec<Comparison>,
    /// Smallest `1 - ‖Λ_n - I‖_∞` over the grid.
    pub min_sigma_star_lower: f64,
    pub min_sigma_star_sq: f64,
    pub failed_cell: Option<FailedCell>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FailedCell {
    pub n: usize,
    pub d: usize,
    pub error: String,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub summary: Summary,
    pub estimates_csv: String,
    pub bounds_csv: String,
    pub covariance_csv: String,
}

fn theta_for(stat: &SubordinatedStatistic) -> Result<ThetaParams> {
    fit_theta(&stat.coords, &BETA_GRID, FIT_Q_MAX)
}

fn cell_bounds(
    cfg: &ExperimentConfig,
    stat: &SubordinatedStatistic,
    theta: &ThetaParams,
    cov: &CovarianceReport,
    n: usize,
    notes: &mut Vec<String>,
) -> Result<Vec<BoundReport>> {
    let d = stat.d;
    let model = &cfg.model;
    let rho1 = model.truncated_norm(n, 1.0);
    let sd = cov.sigma_data();
    let mut out = Vec::new();
    for dist in default_distances() {
        out.push(bound_main(dist, n, d, rho1, sd.sigma_star_sq, sd.sigma_dagger, theta, cfg.scale_c)?);
    }
    if matches!(stat.kind, StatisticKind::Mom { .. }) {
        out.push(bound_mom(n, d, rho1, cfg.scale_c)?);
    }
    let case = match model.classify_dependence() {
        DependenceClass::Srd { mu } => Some((DependenceCase::Srd, mu)),
        DependenceClass::Lrd { mu } => Some((DependenceCase::Lrd, mu)),
        DependenceClass::Unknown => None,
    };
    match case {
        Some((case, mu)) => {
            for dist in default_distances() {
                out.push(bound_srd_lrd(case, dist, n, d, mu, theta, &sd, cfg.scale_c)?);
            }
        }
        None => notes.push("dependence class unknown; no short/long-range bounds".into()),
    }
    let m = stat.coords.iter().map(|c| c.rank).min().unwrap_or(0) as u32;
    if m >= 2 {
        match limiting_cov(stat, model, m, cfg.cov_tol)
            .and_then(|s| CovarianceReport::from_sigma(s, n, Truncation { q_used: None, tail: 0.0, closed_form_pairs: 0 }))
        {
            Ok(lim) => {
                if lim.sigma_star_sq > 0.0 {
                    for dist in default_distances() {
                        out.push(bound_fixed_cov(dist, n, d, model, m, theta, &lim.sigma_data(), cfg.scale_c, cfg.cov_tol)?);
                    }
                } else {
                    notes.push("limiting covariance is singular; no fixed-covariance bounds".into());
                }
            }
            Err(e) => notes.push(format!("no limiting covariance: {e}")),
        }
    }
    Ok(out)
}

fn run_cell(cfg: &ExperimentConfig, n: usize, d: usize) -> Result<CellResult> {
    let stat = cfg.statistic.build(d)?;
    let theta = theta_for(&stat)?;
    let opts = CovOptions { tol: cfg.cov_tol, ..CovOptions::default() };
    let cov = exact_cov_with(&stat, &cfg.model, n, &opts)?;
    let mut notes = Vec::new();
    let bounds = cell_bounds(cfg, &stat, &theta, &cov, n, &mut notes)?;
    let seed = cfg.cell_seed(n, d);
    let mut estimates = Vec::new();
    let (mut max_mean_z, mut max_cov_z) = (None, None);
    if cfg.monte_carlo {
        let samples = stat.evaluate_batch(&cfg.model, n, cfg.replicates, sub_seed(seed, &[0]))?;
        let mean = samples.mean();
        let mse = samples.mean_std_error();
        max_mean_z = Some(mean.iter().zip(&mse).map(|(m, s)| (m / s).abs()).fold(0.0, f64::max));
        let mc = samples.covariance();
        let cse = samples.covariance_std_error();
        let mut z = 0.0f64;
        for i in 0..d {
            for j in 0..d {
                z = z.max((mc[(i, j)] - cov.sigma[(i, j)]).abs() / cse[(i, j)]);
            }
        }
        max_cov_z = Some(z);
        for dist in &cfg.distances {
            let est = match dist {
                Distance::Rectangles => {
                    let reference = Reference::new(&cov.sigma, cfg.n_ref, sub_seed(seed, &[1]))?;
                    let family = RectangleFamily::default_for(&reference.sds(), sub_seed(seed, &[2]));
                    estimate_dr(&samples, &reference, &family)?
                }
                Distance::Convex => {
                    let family = BallFamily::standard(&cov.sigma)?;
                    estimate_dc_ball(&samples, &cov.sigma, &family, cfg.n_ref, sub_seed(seed, &[3]))?
                }
                Distance::Wasserstein => estimate_dw1_marginal(&samples, &cov.sigma)?,
            };
            estimates.push(est.with_cell(n, seed));
        }
    }
    Ok(CellResult {
        n,
        d,
        seed,
        statistic: stat.kind.name().to_string(),
        theta,
        covariance: cov,
        bounds,
        estimates,
        max_mean_z,
        max_cov_z,
        notes,
    })
}

fn dist_of(method: &str) -> Option<Distance> {
    ["dR", "dC", "dW"].iter().find(|t| method.starts_with(*t)).and_then(|t| Distance::parse(t).ok())
}

fn slopes(cfg: &ExperimentConfig, cells: &[CellResult]) -> BTreeMap<String, f64> {
    let mut out = BTreeMap::new();
    for &d in &cfg.d_grid {
        for dist in &cfg.distances {
            let pts: Vec<(f64, f64)> = cells
                .iter()
                .filter(|c| c.d == d)
                .flat_map(|c| c.estimates.iter().filter(|e| dist_of(&e.method) == Some(*dist)).map(move |e| (c.n as f64, e.point)))
                .collect();
            if let Ok(f) = rate_fit(&pts, RateMode::Loglog) {
                out.insert(format!("{}_d{d}", dist.tag()), f.slope);
            }
            if *dist == Distance::Rectangles {
                if let Ok(f) = rate_fit(&pts, RateMode::LoglogLogcorrected) {
                    out.insert(format!("{}_d{d}_logcorrected", dist.tag()), f.slope);
                }
            }
        }
    }
    out
}

fn comparison(cells: &[CellResult]) -> Vec<Comparison> {
    let mut out = Vec::new();
    for c in cells {
        for e in &c.estimates {
            let Some(dist) = dist_of(&e.method) else { continue };
            if let Some(b) = c.bounds.iter().find(|b| b.distance == dist && b.formula_id.starts_with("main_cov")) {
                out.push(Comparison { n: c.n, d: c.d, distance: dist, bound: b.value, estimate: e.point, half_width: e.half_width });
            }
        }
    }
    out
}

fn csv_tables(cells: &[CellResult]) -> (String, String, String) {
    let mut est = format!("{ESTIMATE_CSV_HEADER}\n");
    let mut bnd = format!("{BOUNDS_CSV_HEADER}\n");
    let mut cov = format!("{COVARIANCE_CSV_HEADER}\n");
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    for c in cells {
        for e in &c.estimates {
            est.push_str(&e.csv_row());
            est.push('\n');
        }
        for b in &c.bounds {
            bnd.push_str(&format!("{},{},{},{},{},{},{}\n", c.n, c.d, b.distance.tag(), b.formula_id, b.value, b.log_value, b.admissible));
        }
        let r = &c.covariance;
        cov.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            c.n,
            c.d,
            r.sigma_star_sq,
            r.gershgorin_lower,
            r.sigma_star_sq_cov,
            r.sigma_dagger_sq,
            r.truncation.q_used.map_or(String::new(), |q| q.to_string()),
            r.truncation.tail,
            opt(c.max_mean_z),
            opt(c.max_cov_z)
        ));
    }
    (est, bnd, cov)
}

fn assemble(cfg: &ExperimentConfig, cells: Vec<CellResult>, failed: Option<FailedCell>) -> RunOutput {
    let (estimates_csv, bounds_csv, covariance_csv) = csv_tables(&cells);
    let summary = Summary {
        schema_version: SCHEMA_VERSION,
        config_echo: cfg.clone(),
        slopes: slopes(cfg, &cells),
        comparison: comparison(&cells),
        min_sigma_star_lower: cells.iter().map(|c| c.covariance.gershgorin_lower).fold(f64::INFINITY, f64::min),
        min_sigma_star_sq: cells.iter().map(|c| c.covariance.sigma_star_sq).fold(f64::INFINITY, f64::min),
        results: cells,
        failed_cell: failed,
    };
    RunOutput { summary, estimates_csv, bounds_csv, covariance_csv }
}

/// Runs every `(n, d)` cell. On failure the cells preceding the failing
/// one (in grid order) are returned alongside the error.
pub fn run_partial(cfg: &ExperimentConfig) -> (RunOutput, Option<Error>) {
    if let Err(e) = cfg.validate() {
        return (assemble(cfg, Vec::new(), None), Some(e));
    }
    let grid: Vec<(usize, usize)> = cfg.d_grid.iter().flat_map(|&d| cfg.n_grid.iter().map(move |&n| (n, d))).collect();
    let results: Vec<Result<CellResult>> = grid.par_iter().map(|&(n, d)| run_cell(cfg, n, d)).collect();
    let mut cells = Vec::new();
    for ((n, d), r) in grid.into_iter().zip(results) {
        match r {
            Ok(c) => cells.push(c),
            Err(e) => {
                let failed = FailedCell { n, d, error: e.to_string() };
                let out = assemble(cfg, cells, Some(failed));
                return (out, Some(Error::Cell { n, d, source: Box::new(e) }));
            }
        }
    }
    (assemble(cfg, cells, None), None)
}

pub fn run(cfg: &ExperimentConfig) -> Result<RunOutput> {
    match run_partial(cfg) {
        (out, None) => Ok(out),
        (_, Some(e)) => Err(e),
    }
}

impl RunOutput {
    pub fn summary_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.summary)?)
    }

    /// Writes `<stem>_estimates.csv`, `<stem>_bounds.csv`,
    /// `<stem>_covariance.csv` and `<stem>_summary.json`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let files = [
            (format!("{stem}_estimates.csv"), self.estimates_csv.clone()),
            (format!("{stem}_bounds.csv"), self.bounds_csv.clone()),
            (format!("{stem}_covariance.csv"), self.covariance_csv.clone()),
            (format!("{stem}_summary.json"), self.summary_json()? + "\n"),
        ];
        let mut paths = Vec::new();
        for (name, body) in files {
            let p = dir.join(name);
            fs::write(&p, body)?;
            paths.push(p);
        }
        Ok(paths)
    }
}

/// Runs the config and writes its outputs to `dir`, flushing completed cells
/// when a cell fails.
pub fn run_to_dir(cfg: &ExperimentConfig, dir: &Path) -> Result<(RunOutput, Vec<PathBuf>)> {
    let (out, err) = run_partial(cfg);
    let paths = out.write(dir, &cfg.stem())?;
    match err {
        None => Ok((out, paths)),
        Some(e) => Err(e),
    }
}

/// Config echo used by the CLI `presets` listing.
pub fn preset_json(p: Preset) -> serde_json::Value {
    json!({ "name": p.name(), "description": p.description(), "config": ExperimentConfig::preset(p) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use sha2::{Digest, Sha256};

    fn small(p: Preset) -> ExperimentConfig {
        ExperimentConfig {
            n_grid: vec![64, 128, 256],
            replicates: 1000,
            n_ref: 20_000,
            ..ExperimentConfig::preset(p)
        }
    }

    #[test]
    fn preset_listing() {
        let l = list_presets();
        assert!(l.len() >= 6);
        assert!(l.iter().any(|p| p.name == "mom_rate"));
        assert!(l.iter().any(|p| p.name == "fgn_eigen"));
        for p in Preset::ALL {
            assert_eq!(Preset::parse(p.name()).unwrap(), p);
            ExperimentConfig::preset(p).validate().unwrap();
        }
    }

    #[test]
    fn mom_rate_schema() {
        let cfg = small(Preset::MomRate);
        let out = run(&cfg).unwrap();
        assert!(out.summary.slopes.contains_key("dR_d2"));
        assert!(out.summary.slopes.contains_key("dR_d2_logcorrected"));
        // header + one row per (n, method)
        assert_eq!(out.estimates_csv.lines().count(), 1 + 3 * 3);
        let v: serde_json::Value = serde_json::from_str(&out.summary_json().unwrap()).unwrap();
        for k in ["schema_version", "config_echo", "results", "slopes"] {
            assert!(v.get(k).is_some(), "{k}");
        }
        assert_eq!(v["config_echo"]["preset"], "mom_rate");
        assert!(out.summary.results.iter().all(|c| c.bounds.iter().any(|b| b.formula_id == "mom_dC")));
    }

    #[test]
    fn fgn_eigen_certificate() {
        let out = run(&ExperimentConfig::preset(Preset::FgnEigen)).unwrap();
        assert_eq!(out.summary.results.len(), 9);
        assert!(out.summary.min_sigma_star_lower > 0.0);
        assert!(out.estimates_csv.lines().count() == 1);
    }

    #[test]
    fn outputs_are_deterministic() {
        let cfg = ExperimentConfig { d_grid: vec![2], ..small(Preset::EcfRate) };
        let hash = || {
            let dir = tempfile::tempdir().unwrap();
            let (_, paths) = run_to_dir(&cfg, dir.path()).unwrap();
            let mut h = Sha256::new();
            for p in paths {
                h.update(std::fs::read(p).unwrap());
            }
            h.finalize().iter().map(|b| format!("{b:02x}")).collect::<String>()
        };
        let a = hash();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(hash);
        assert_eq!(a, b);
    }

    #[test]
    fn failing_cell_is_identified_and_flushed() {
        let cfg = ExperimentConfig {
            statistic: StatisticSpec::Emgf { tau: 1.0 },
            d_grid: vec![2, 4],
            monte_carlo: false,
            ..small(Preset::EmgfRate)
        };
        let dir = tempfile::tempdir().unwrap();
        let err = run_to_dir(&cfg, dir.path()).unwrap_err();
        assert!(matches!(err, Error::Cell { d: 4, n: 64, .. }), "{err}");
        let s = std::fs::read_to_string(dir.path().join("emgf_rate_summary.json")).unwrap();
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(v["results"].as_array().unwrap().len(), 3);
        assert_eq!(v["failed_cell"]["d"], 4);
    }

    #[test]
    fn config_validation() {
        let bad = ExperimentConfig { n_grid: vec![256, 128], ..small(Preset::MomRate) };
        assert!(bad.validate().is_err());
        let few = ExperimentConfig { replicates: 10, ..small(Preset::MomRate) };
        assert!(few.validate().is_err());
        let no_mc = ExperimentConfig { replicates: 10, monte_carlo: false, ..small(Preset::MomRate) };
        assert!(no_mc.validate().is_ok());
        let text = serde_json::to_string(&small(Preset::BmFddRate)).unwrap();
        assert!(text.contains("\"scale_C\""));
        assert_eq!(ExperimentConfig::from_json(&text).unwrap(), small(Preset::BmFddRate));
        assert!(ExperimentConfig::from_json(r#"{"preset":"nope"}"#).is_err());
    }
}
