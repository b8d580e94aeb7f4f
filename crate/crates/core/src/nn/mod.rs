//! Minimal dense-network engine.

mod adam;
mod eigen;
mod layer;
mod matrix;

pub use adam::AdamState;
pub use eigen::{sym_eigen, SymEigen};
pub use layer::{glorot_init, grad_slices, Activation, DenseLayer, GradientTape, LayerGrad, Mlp};
pub use matrix::{dot, norm, sq_dist, Matrix};
