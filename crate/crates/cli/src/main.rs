use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use bmlab_core::bounds::{
    bound_finite_expansion, bound_fixed_cov, bound_main, bound_mom, bound_srd_lrd, DependenceCase,
};
use bmlab_core::covariance::{exact_cov_with, limiting_cov, CovOptions};
use bmlab_core::distance::{
    estimate_dc_ball, estimate_dr, estimate_dw1_marginal, BallFamily, RectangleFamily, Reference, ESTIMATE_CSV_HEADER,
};
use bmlab_core::experiment::{list_presets, preset_json, run_to_dir, Preset, StatisticSpec};
use bmlab_core::hermite::{fit_theta, BETA_GRID, FIT_Q_MAX};
use bmlab_core::sim::{write_binary, PathGenerator};
use bmlab_core::statistic::CoordinateFn;
use bmlab_core::{
    AutocovarianceModel, CatalogEntry, DependenceClass, Distance, Error, ExperimentConfig, HermiteExpansion, Result,
};
use clap::{Parser, Subcommand, ValueEnum};

const OUTPUT_DIR_ENV: &str = "BMLAB_OUTPUT_DIR";

const EXPERIMENT_HELP: &str = "\
Outputs (in --output-dir, else $BMLAB_OUTPUT_DIR, else ./bmlab_out):
  <stem>_estimates.csv   n,d,method,point,half_width,family_size,replicates,seed
      method      estimator and family, e.g. dR_lower_bound[default]
      point       largest probability (or W1) gap found over the family
      half_width  95% half-width, union bound over the family
      family_size number of sets in the family
      replicates  Monte Carlo replicates R
      seed        cell seed derived from master_seed, preset, n, d
  <stem>_bounds.csv      n,d,distance,formula_id,value,log_value,admissible
      value is exp(log_value) with scale_C applied; admissible is the theta condition
  <stem>_covariance.csv  n,d,sigma_star_sq,gershgorin_lower,sigma_star_sq_cov,sigma_dagger_sq,q_used,tail,max_mean_z,max_cov_z
      sigma_star_sq     smallest eigenvalue of the correlation matrix
      gershgorin_lower  1 - ||Lambda - I||_inf
      sigma_star_sq_cov smallest eigenvalue of the covariance matrix
      sigma_dagger_sq   largest eigenvalue of the covariance matrix
      q_used, tail      series truncation order and remainder bound (empty q_used: closed forms only)
      max_mean_z        largest |mean|/SE over coordinates
      max_cov_z         largest |exact - MC|/SE over covariance entries
  <stem>_summary.json    {schema_version, config_echo, results, slopes, comparison, ...}";

const MODEL_HELP: &str = "iid | ar1:PHI | fgn:H | power:CTILDE,MU | table:R0,R1,.. | JSON object";
const STAT_HELP: &str = "mom | ecf_cos:TAU | ecf_sin:TAU | emgf:TAU | bm:A0,A1,.. (Hermite coefficients) | JSON object";

#[derive(Parser)]
#[command(name = "bmlab", version, about = "Berry-Esseen laboratory for functionals of stationary Gaussian sequences")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum PathFormat {
    Csv,
    Bin,
}

#[derive(Clone, Copy, ValueEnum)]
enum Formula {
    Main,
    Fixed,
    Dependence,
    Mom,
    Finite,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a stationary Gaussian path. CSV columns: k,value
    Simulate {
        #[arg(long, help = MODEL_HELP)]
        model: String,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = PathFormat::Csv)]
        format: PathFormat,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Hermite coefficients of a catalog function or a coefficient list.
    /// CSV columns: q,coeff. With --fit, prints the fitted decay parameters as JSON.
    Coeffs {
        /// Catalog entry NAME:PARAM, e.g. ecf_cos:1.5, or a comma list a0,a1,..
        spec: String,
        #[arg(long, default_value_t = 20)]
        q_max: usize,
        #[arg(long)]
        fit: bool,
    },
    /// Exact covariance report (JSON) of a statistic.
    Cov {
        #[arg(long, help = STAT_HELP)]
        statistic: String,
        #[arg(long)]
        d: usize,
        #[arg(long, help = MODEL_HELP)]
        model: String,
        #[arg(long)]
        n: usize,
        /// Also print the n -> infinity covariance.
        #[arg(long)]
        limit: bool,
    },
    /// Bound report (JSON) for a statistic, model and sample size.
    Bound {
        #[arg(long, help = STAT_HELP)]
        statistic: String,
        #[arg(long)]
        d: usize,
        #[arg(long, help = MODEL_HELP)]
        model: String,
        #[arg(long)]
        n: usize,
        /// dR, dC or dW
        #[arg(long, default_value = "dR")]
        distance: String,
        #[arg(long, value_enum, default_value_t = Formula::Main)]
        formula: Formula,
        #[arg(long = "scale-c", default_value_t = 1.0)]
        scale_c: f64,
        /// Expansion degree for --formula finite.
        #[arg(long)]
        degree: Option<usize>,
    },
    /// Monte Carlo distance estimate against N(0, Sigma_n). Prints a CSV row.
    Distance {
        #[arg(long, help = STAT_HELP)]
        statistic: String,
        #[arg(long)]
        d: usize,
        #[arg(long, help = MODEL_HELP)]
        model: String,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value = "dR")]
        distance: String,
        #[arg(long, default_value_t = 10_000)]
        replicates: usize,
        #[arg(long, default_value_t = bmlab_core::distance::DEFAULT_N_REF)]
        n_ref: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Run a preset or a JSON config; flags override config fields.
    #[command(after_help = EXPERIMENT_HELP)]
    Experiment {
        #[arg(long, conflicts_with = "config")]
        preset: Option<String>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        replicates: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_delimiter = ',')]
        n_grid: Option<Vec<usize>>,
        #[arg(long, value_delimiter = ',')]
        d_grid: Option<Vec<usize>>,
        #[arg(long)]
        n_ref: Option<usize>,
        #[arg(long = "scale-c")]
        scale_c: Option<f64>,
        #[arg(long)]
        no_monte_carlo: bool,
        #[arg(long)]
        output_dir: Option<PathBuf>,
        #[arg(long)]
        output_stem: Option<String>,
    },
    /// List the experiment presets.
    Presets {
        /// Print the full default configs as JSON.
        #[arg(long)]
        json: bool,
    },
}

fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| Error::InvalidParameter(format!("not a number: '{t}'"))))
        .collect()
}

fn parse_model(s: &str) -> Result<AutocovarianceModel> {
    let s = s.trim();
    let m = if s.starts_with('{') {
        serde_json::from_str(s)?
    } else {
        let (name, args) = s.split_once(':').unwrap_or((s, ""));
        let one = || -> Result<f64> {
            match parse_list(args)?.as_slice() {
                [v] => Ok(*v),
                _ => Err(Error::InvalidParameter(format!("model '{name}' takes one parameter"))),
            }
        };
        match name {
            "iid" => AutocovarianceModel::Iid,
            "ar1" => AutocovarianceModel::Ar1 { phi: one()? },
            "fgn" => AutocovarianceModel::Fgn { hurst: one()? },
            "power" => match parse_list(args)?.as_slice() {
                [c, mu] => AutocovarianceModel::PowerLaw { ctilde: *c, mu: *mu },
                _ => return Err(Error::InvalidParameter("power takes CTILDE,MU".into())),
            },
            "table" => AutocovarianceModel::Table { values: parse_list(args)? },
            other => return Err(Error::InvalidParameter(format!("unknown model '{other}'"))),
        }
    };
    m.validate()?;
    Ok(m)
}

fn parse_statistic(s: &str) -> Result<StatisticSpec> {
    let s = s.trim();
    if s.starts_with('{') {
        return Ok(serde_json::from_str(s)?);
    }
    let (name, args) = s.split_once(':').unwrap_or((s, ""));
    let tau = || -> Result<f64> {
        if args.is_empty() {
            Ok(1.0)
        } else {
            args.parse().map_err(|_| Error::InvalidParameter(format!("bad tau '{args}'")))
        }
    };
    Ok(match name {
        "mom" => StatisticSpec::Mom,
        "ecf_cos" => StatisticSpec::EcfCos { tau: tau()? },
        "ecf_sin" => StatisticSpec::EcfSin { tau: tau()? },
        "emgf" => StatisticSpec::Emgf { tau: tau()? },
        "bm" => StatisticSpec::BreuerMajor { phi: CoordinateFn::Hermite { coeffs: parse_list(args)? }, allow_rank_one: false },
        other => return Err(Error::InvalidParameter(format!("unknown statistic '{other}'"))),
    })
}

fn parse_expansion(spec: &str, q_max: usize) -> Result<HermiteExpansion> {
    match spec.split_once(':') {
        Some((name, p)) => {
            let p: f64 = p.parse().map_err(|_| Error::InvalidParameter(format!("bad parameter '{p}'")))?;
            HermiteExpansion::catalog(CatalogEntry::from_name(name, p)?, q_max)
        }
        None => HermiteExpansion::manual(parse_list(spec)?),
    }
}

fn output(path: Option<&PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

/// `println!` that returns the write error instead of panicking.
macro_rules! out {
    ($($arg:tt)*) => {
        writeln!(io::stdout().lock(), $($arg)*)
    };
}

fn print_json<T: serde::Serialize>(v: &T) -> Result<()> {
    out!("{}", serde_json::to_string_pretty(v)?)?;
    Ok(())
}

fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::Simulate { model, n, seed, format, out } => {
            let model = parse_model(&model)?;
            let path = PathGenerator::new(&model, n)?.generate(seed);
            let mut w = output(out.as_ref())?;
            match format {
                PathFormat::Csv => {
                    writeln!(w, "k,value")?;
                    for (k, v) in path.values.iter().enumerate() {
                        writeln!(w, "{},{v}", k + 1)?;
                    }
                }
                PathFormat::Bin => write_binary(&mut w, &path.values)?,
            }
            w.flush()?;
        }
        Command::Coeffs { spec, q_max, fit } => {
            let e = parse_expansion(&spec, q_max.max(FIT_Q_MAX))?;
            if fit {
                print_json(&fit_theta(std::slice::from_ref(&e), &BETA_GRID, FIT_Q_MAX)?)?;
            } else {
                out!("q,coeff")?;
                for q in 0..=q_max {
                    out!("{q},{}", e.coeff(q))?;
                }
            }
        }
        Command::Cov { statistic, d, model, n, limit } => {
            let stat = parse_statistic(&statistic)?.build(d)?;
            let model = parse_model(&model)?;
            print_json(&exact_cov_with(&stat, &model, n, &CovOptions::default())?)?;
            if limit {
                let m = stat.coords.iter().map(|c| c.rank).min().unwrap_or(0) as u32;
                let lim = limiting_cov(&stat, &model, m, CovOptions::default().tol)?;
                print_json(&lim.to_rows())?;
            }
        }
        Command::Bound { statistic, d, model, n, distance, formula, scale_c, degree } => {
            let stat = parse_statistic(&statistic)?.build(d)?;
            let model = parse_model(&model)?;
            let dist = Distance::parse(&distance)?;
            let theta = fit_theta(&stat.coords, &BETA_GRID, FIT_Q_MAX)?;
            let rho1 = model.truncated_norm(n, 1.0);
            let report = match formula {
                Formula::Main => {
                    let cov = exact_cov_with(&stat, &model, n, &CovOptions::default())?;
                    let s = cov.sigma_data();
                    bound_main(dist, n, d, rho1, s.sigma_star_sq, s.sigma_dagger, &theta, scale_c)?
                }
                Formula::Fixed => {
                    let m = stat.coords.iter().map(|c| c.rank).min().unwrap_or(0) as u32;
                    let tol = CovOptions::default().tol;
                    let lim = limiting_cov(&stat, &model, m, tol)?;
                    let rep = bmlab_core::CovarianceReport::from_sigma(lim, n, Default::default())?;
                    bound_fixed_cov(dist, n, d, &model, m, &theta, &rep.sigma_data(), scale_c, tol)?
                }
                Formula::Dependence => {
                    let cov = exact_cov_with(&stat, &model, n, &CovOptions::default())?;
                    let (case, mu) = match model.classify_dependence() {
                        DependenceClass::Srd { mu } => (DependenceCase::Srd, mu),
                        DependenceClass::Lrd { mu } => (DependenceCase::Lrd, mu),
                        DependenceClass::Unknown => {
                            return Err(Error::InvalidParameter("dependence class of the model is unknown".into()))
                        }
                    };
                    bound_srd_lrd(case, dist, n, d, mu, &theta, &cov.sigma_data(), scale_c)?
                }
                Formula::Mom => bound_mom(n, d, rho1, scale_c)?,
                Formula::Finite => {
                    let big_n = degree.ok_or_else(|| Error::InvalidParameter("--formula finite needs --degree".into()))?;
                    let cov = exact_cov_with(&stat, &model, n, &CovOptions::default())?;
                    bound_finite_expansion(dist, n, d, big_n, &theta, rho1, cov.sigma_star_sq, scale_c)?
                }
            };
            print_json(&report)?;
        }
        Command::Distance { statistic, d, model, n, distance, replicates, n_ref, seed } => {
            let stat = parse_statistic(&statistic)?.build(d)?;
            let model = parse_model(&model)?;
            let cov = exact_cov_with(&stat, &model, n, &CovOptions::default())?;
            let samples = stat.evaluate_batch(&model, n, replicates, seed)?;
            let est = match Distance::parse(&distance)? {
                Distance::Rectangles => {
                    let reference = Reference::new(&cov.sigma, n_ref, seed ^ 1)?;
                    let fam = RectangleFamily::default_for(&reference.sds(), seed ^ 2);
                    estimate_dr(&samples, &reference, &fam)?
                }
                Distance::Convex => estimate_dc_ball(&samples, &cov.sigma, &BallFamily::standard(&cov.sigma)?, n_ref, seed ^ 3)?,
                Distance::Wasserstein => estimate_dw1_marginal(&samples, &cov.sigma)?,
            };
            out!("{ESTIMATE_CSV_HEADER}")?;
            out!("{}", est.with_cell(n, seed).csv_row())?;
        }
        Command::Experiment {
            preset,
            config,
            replicates,
            seed,
            n_grid,
            d_grid,
            n_ref,
            scale_c,
            no_monte_carlo,
            output_dir,
            output_stem,
        } => {
            let mut cfg = match (&preset, &config) {
                (_, Some(path)) => ExperimentConfig::from_json(&std::fs::read_to_string(path)?)?,
                (Some(p), None) => ExperimentConfig::preset(Preset::parse(p)?),
                (None, None) => return Err(Error::InvalidParameter("give --preset or --config".into())),
            };
            if let Some(v) = replicates {
                cfg.replicates = v;
            }
            if let Some(v) = seed {
                cfg.master_seed = v;
            }
            if let Some(v) = n_grid {
                cfg.n_grid = v;
            }
            if let Some(v) = d_grid {
                cfg.d_grid = v;
            }
            if let Some(v) = n_ref {
                cfg.n_ref = v;
            }
            if let Some(v) = scale_c {
                cfg.scale_c = v;
            }
            if no_monte_carlo {
                cfg.monte_carlo = false;
            }
            if let Some(v) = output_stem {
                cfg.output_stem = Some(v);
            }
            let dir = output_dir
                .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
                .or_else(|| cfg.output_dir.clone())
                .unwrap_or_else(|| PathBuf::from("bmlab_out"));
            cfg.output_dir = Some(dir.clone());
            cfg.validate()?;
            let (out, paths) = run_to_dir(&cfg, &dir)?;
            for p in paths {
                eprintln!("wrote {}", p.display());
            }
            for (k, v) in &out.summary.slopes {
                out!("slope {k} = {v:.4}")?;
            }
            out!("min_sigma_star_lower = {}", out.summary.min_sigma_star_lower)?;
        }
        Command::Presets { json } => {
            if json {
                let all: Vec<_> = Preset::ALL.iter().map(|p| preset_json(*p)).collect();
                print_json(&all)?;
            } else {
                for p in list_presets() {
                    out!("{:<18} {}", p.name, p.description)?;
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        // reader went away (e.g. `| head`)
        Err(Error::Io(e)) if e.kind() == io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                eprintln!("  caused by: {s}");
                src = s.source();
            }
            ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use bmlab_core::experiment::{BOUNDS_CSV_HEADER, COVARIANCE_CSV_HEADER};

    #[test]
    fn model_strings() {
        assert_eq!(parse_model("ar1:0.5").unwrap(), AutocovarianceModel::Ar1 { phi: 0.5 });
        assert_eq!(parse_model("power:1,0.8").unwrap(), AutocovarianceModel::PowerLaw { ctilde: 1.0, mu: 0.8 });
        assert_eq!(parse_model(r#"{"kind":"fgn","hurst":0.3}"#).unwrap(), AutocovarianceModel::Fgn { hurst: 0.3 });
        assert!(parse_model("ar1").is_err());
        assert!(parse_model("nope:1").is_err());
    }

    #[test]
    fn statistic_strings() {
        assert_eq!(parse_statistic("ecf_cos:1.302").unwrap(), StatisticSpec::EcfCos { tau: 1.302 });
        assert_eq!(parse_statistic("emgf").unwrap(), StatisticSpec::Emgf { tau: 1.0 });
        assert!(parse_statistic("bm:0,0,0.7").unwrap().build(2).is_ok());
        assert!(parse_statistic("bm:0,1").unwrap().build(2).is_err());
    }

    #[test]
    fn headers_are_documented() {
        for h in [ESTIMATE_CSV_HEADER, BOUNDS_CSV_HEADER, COVARIANCE_CSV_HEADER] {
            assert!(EXPERIMENT_HELP.contains(h), "{h}");
        }
    }
}
