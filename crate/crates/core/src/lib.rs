//! Representation learning for intrusion-detection style tabular data.
//!
//! The crate is built around the constrained twin variational auto-encoder:
//! an encoder maps `x` to `(μ, log σ²)`, a class-conditional sample `z` is
//! drawn around per-class target means, a "hermaphrodite" network maps `z`
//! back to `x̂`, and a decoder maps `x̂` to `ẑ`. After training only the
//! decoder is kept: feeding raw features straight into it yields the
//! reconstruction representation used by downstream classifiers.
//!
//! Layout:
//!
//! - [`nn`]: dense layers, analytic backprop, Adam, Glorot init, Jacobi eigensolver
//! - [`data`]: CSV ingestion, min-max scaling, splits, Gaussian blobs
//! - [`priors`]: PCA-based per-class latent targets and the mean-dispersal transform
//! - [`models`]: AE / VAE / TVAE / CTVAE losses, training, extraction, model files
//! - [`clustering`]: k-means++ / silhouette selection for splitting a majority class
//! - [`classify`]: CART trees and a random forest
//! - [`metrics`]: accuracy, precision/recall/F-score, between/within-class variance

pub mod classify;
pub mod clustering;
pub mod data;
pub mod error;
pub mod metrics;
pub mod models;
pub mod nn;
pub mod priors;
pub mod rng;

pub use error::{Error, Result};
