//! Learning the map from received power spectra back to conditions.
//!
//! Datasets are simulated by Monte Carlo at a fixed structure, and the
//! regressor is a one-hidden-layer perceptron trained by plain gradient
//! descent on the RMSE loss.

mod dataset;
mod model;
mod train;

pub use dataset::{generate_dataset, Dataset, Record};
pub use model::{rmse, Activation, SensingModel};
pub use train::{train, EpochStats, TrainConfig, Trained};
