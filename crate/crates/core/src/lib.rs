//! Linear regression trained by stochastic gradient descent, with a Kalman
//! filter that consolidates the weight/loss trajectory into predicted
//! weights and a minimum-area rule over weight-versus-loss curves that picks
//! the final model.
//!
//! The pipeline, end to end:
//!
//! 1. [`data`] loads or synthesizes a [`Dataset`], splits and standardizes it.
//! 2. [`sgd`] trains an ensemble of models, recording one
//!    `(weights, bias, loss)` record per epoch.
//! 3. [`kalman`] assimilates each trajectory and steps it forward to get
//!    consolidated weights.
//! 4. [`curve`] turns each trajectory into a weight-versus-loss curve and
//!    integrates it with the trapezoidal rule.
//! 5. [`selection`] keeps the candidate with the smallest area and predicts
//!    with its consolidated weights.
//! 6. [`baselines`] and [`metrics`] provide OLS/Ridge/Lasso references and
//!    MSE/RMSE/R² for the comparison table; [`cli`] wires it all together.

pub mod baselines;
pub mod cli;
pub mod curve;
pub mod data;
pub mod error;
pub mod kalman;
pub mod metrics;
pub mod selection;
pub mod sgd;

pub use data::Dataset;
pub use error::{Error, Result};
pub use sgd::{LinearModel, Trajectory};
