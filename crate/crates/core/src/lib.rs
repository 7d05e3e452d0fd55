//! Numerical laboratory for Berry–Esseen bounds of high-dimensional
//! non-linear functionals of stationary Gaussian sequences.
//!
//! The crate is organised bottom-up:
//!
//! * [`autocov`]: autocovariance models, truncated norms and tail sums.
//! * [`rng`] and [`sim`]: counter-based random numbers and exact synthesis
//!   of stationary Gaussian paths (circulant embedding, Cholesky fallback).
//! * [`hermite`]: Hermite polynomials, expansions, quadrature, decay fits.
//! * [`statistic`]: the statistic `S_n = n^{-1/2} Σ Φ(G_k)` and its presets.
//! * [`covariance`]: exact covariances via Mehler's identity, eigenvalue
//!   certificates, correlation criteria for characteristic-function statistics.
//! * [`bounds`]: explicit constants and bound formulas.
//! * [`distance`]: Monte Carlo estimates of rectangle, ball and Wasserstein
//!   distances, plus rate fitting.
//! * [`experiment`]: config-driven presets tying everything together.

pub mod autocov;
pub mod bounds;
pub mod covariance;
pub mod distance;
mod error;
pub mod experiment;
pub mod hermite;
pub mod linalg;
pub mod rng;
pub mod sim;
pub mod statistic;

pub use autocov::{AutocovarianceModel, DependenceClass};
pub use bounds::{BoundReport, Distance};
pub use covariance::CovarianceReport;
pub use distance::{DistanceEstimate, RectangleFamily};
pub use error::{Error, Result};
pub use experiment::ExperimentConfig;
pub use hermite::{CatalogEntry, HermiteExpansion, ThetaParams};
pub use linalg::Matrix;
pub use sim::{GaussianPath, SimMethod};
pub use statistic::{Samples, StatisticKind, SubordinatedStatistic};
