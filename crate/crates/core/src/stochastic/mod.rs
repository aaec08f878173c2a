//! Random streams, priors, importance weights and stratified resampling.

mod prior;
mod rng;
mod weights;

pub use prior::{log_prior_density, sample_prior, Marginal, PriorSpec};
pub use rng::{purpose, RngStream, StreamRng};
pub use weights::{
    ess, log_sum_exp, normalize_log_weights, stratified_indices, stratified_resample,
    stratified_resample_n, WeightVector,
};
