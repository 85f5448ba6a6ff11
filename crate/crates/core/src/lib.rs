//! Forecasting with many predictors by group orthogonal greedy screening,
//! peeling, and supervised dynamic PCA (GO-sdPCA), together with benchmark
//! factor and Lasso forecasters, simulation designs, and an evaluation harness.
//!
//! ```no_run
//! use gosdpca::{dgp, pipeline};
//!
//! let panel = dgp::generate(&dgp::DgpConfig { dgp_id: 1, n: 200, p: 1000, r_dgp: 5, s: 50, seed: 1 })?;
//! let train = panel.training();
//! let fit = pipeline::fit_go_sdpca(&train, 0, &pipeline::GoSdpcaConfig::default())?;
//! let forecast = pipeline::predict_go_sdpca(&fit, &train)?;
//! println!("forecast {forecast:.3}, realized {:.3}", panel.holdout_target());
//! # Ok::<(), gosdpca::Error>(())
//! ```

pub mod baselines;
pub mod dgp;
pub mod error;
pub mod evaluation;
pub mod experiment;
pub mod io;
pub mod methods;
pub mod numerics;
pub mod pipeline;
pub mod sdpca;
pub mod selection;
pub mod series;

pub use baselines::{lasso_bic, lasso_coordinate_descent, lyb_factors, sw_factors, LassoFit};
pub use dgp::{generate, DgpConfig, DgpTruth, GeneratedPanel};
pub use error::{Error, Result};
pub use evaluation::{dm_test, monte_carlo_study, rmsfe, rolling_forecast, DmResult, ForecastRecord, Forecaster};
pub use experiment::{load_config, run_experiment, ExperimentConfig, Mode, RunRecord};
pub use io::{load_csv, DatasetSpec, LoadReport};
pub use methods::{GridMethod, MethodConfig};
pub use numerics::Matrix;
pub use pipeline::{fit_go_sdpca, predict_go_sdpca, FittedGoSdpca, GoSdpcaConfig};
pub use sdpca::{FactorPanel, FitMethod, IntermediatePanel, PredictiveModel};
pub use selection::{GroupDesign, PeelResult, SelectionResult};
pub use series::SeriesMatrix;
