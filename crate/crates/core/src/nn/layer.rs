//! Dense layers and a fixed-topology multilayer perceptron with an explicit
//! forward tape.
//!
//! Everything is batched: inputs are `batch × in` matrices and a single
//! vector is just a one-row batch.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use crate::error::{invalid, Error, Result};
use crate::rng::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Linear,
    Relu,
    Sigmoid,
    Tanh,
}

impl Activation {
    #[inline]
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Linear => v,
            Activation::Relu => v.max(0.0),
            Activation::Sigmoid => 1.0 / (1.0 + (-v).exp()),
            Activation::Tanh => v.tanh(),
        }
    }

    /// Derivative expressed through the pre-activation `pre` and output `out`.
    #[inline]
    fn derivative(self, pre: f64, out: f64) -> f64 {
        match self {
            Activation::Linear => 1.0,
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => out * (1.0 - out),
            Activation::Tanh => 1.0 - out * out,
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            Activation::Linear => 0,
            Activation::Relu => 1,
            Activation::Sigmoid => 2,
            Activation::Tanh => 3,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0 => Activation::Linear,
            1 => Activation::Relu,
            2 => Activation::Sigmoid,
            3 => Activation::Tanh,
            _ => return None,
        })
    }
}

/// Samples a `out_dim × in_dim` weight matrix uniformly from
/// `[-√(6/(in+out)), √(6/(in+out))]`.
pub fn glorot_init(in_dim: usize, out_dim: usize, rng: &mut Rng) -> Result<Matrix> {
    if in_dim == 0 || out_dim == 0 {
        return Err(invalid(format!(
            "glorot_init needs nonzero dimensions, got in={in_dim} out={out_dim}"
        )));
    }
    let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
    let data = (0..in_dim * out_dim)
        .map(|_| rng.random_range(-limit..=limit))
        .collect();
    Matrix::from_vec(out_dim, in_dim, data)
}

/// `y = act(W x + b)` with `W` stored as `out × in`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn new(weights: Matrix, bias: Vec<f64>, activation: Activation) -> Result<Self> {
        if bias.len() != weights.rows() {
            return Err(invalid(format!(
                "bias length {} does not match {} output units",
                bias.len(),
                weights.rows()
            )));
        }
        Ok(Self {
            weights,
            bias,
            activation,
        })
    }

    /// Glorot-uniform weights, zero bias.
    pub fn glorot(in_dim: usize, out_dim: usize, activation: Activation, rng: &mut Rng) -> Result<Self> {
        let weights = glorot_init(in_dim, out_dim, rng)?;
        Self::new(weights, vec![0.0; out_dim], activation)
    }

    pub fn in_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn param_count(&self) -> usize {
        self.weights.rows() * self.weights.cols() + self.bias.len()
    }

    /// Returns `(pre_activation, output)`.
    fn forward_full(&self, x: &Matrix) -> Result<(Matrix, Matrix)> {
        if x.cols() != self.in_dim() {
            return Err(invalid(format!(
                "layer expects input width {}, got {}",
                self.in_dim(),
                x.cols()
            )));
        }
        let mut pre = x.matmul_t(&self.weights)?;
        for i in 0..pre.rows() {
            for (v, b) in pre.row_mut(i).iter_mut().zip(&self.bias) {
                *v += b;
            }
        }
        let out = pre.map(|v| self.activation.apply(v));
        Ok((pre, out))
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        self.forward_full(x).map(|(_, out)| out)
    }
}

/// Gradients for one layer, shaped like the layer's parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerGrad {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl LayerGrad {
    pub fn zeros_like(layer: &DenseLayer) -> Self {
        Self {
            weights: Matrix::zeros(layer.out_dim(), layer.in_dim()),
            bias: vec![0.0; layer.out_dim()],
        }
    }

    pub fn add_assign(&mut self, other: &LayerGrad) {
        for (a, b) in self
            .weights
            .as_mut_slice()
            .iter_mut()
            .zip(other.weights.as_slice())
        {
            *a += b;
        }
        for (a, b) in self.bias.iter_mut().zip(&other.bias) {
            *a += b;
        }
    }
}

/// Per-layer forward intermediates recorded by [`Mlp::forward`].
///
/// Consumed by value in [`Mlp::backward`], so one forward pass feeds at most
/// one backward pass.
#[derive(Debug)]
pub struct GradientTape {
    shapes: Vec<(usize, usize)>,
    inputs: Vec<Matrix>,
    pre: Vec<Matrix>,
    outputs: Vec<Matrix>,
}

impl GradientTape {
    pub fn batch_size(&self) -> usize {
        self.inputs.first().map_or(0, Matrix::rows)
    }
}

/// A stack of dense layers applied in order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<DenseLayer>,
}

impl Mlp {
    pub fn new(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(invalid("an MLP needs at least one layer"));
        }
        for w in layers.windows(2) {
            if w[0].out_dim() != w[1].in_dim() {
                return Err(invalid(format!(
                    "layer widths do not chain: {} -> {}",
                    w[0].out_dim(),
                    w[1].in_dim()
                )));
            }
        }
        Ok(Self { layers })
    }

    /// Glorot-initialised stack through `widths`, with `hidden` activation on
    /// every layer but the last, which uses `output`.
    pub fn glorot(widths: &[usize], hidden: Activation, output: Activation, rng: &mut Rng) -> Result<Self> {
        if widths.len() < 2 {
            return Err(invalid("an MLP needs at least an input and an output width"));
        }
        let last = widths.len() - 2;
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let act = if i == last { output } else { hidden };
                DenseLayer::glorot(w[0], w[1], act, rng)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(layers)
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(DenseLayer::param_count).sum()
    }

    /// Inference-only forward pass.
    pub fn predict(&self, x: &Matrix) -> Result<Matrix> {
        let mut h = self.layers[0].forward(x)?;
        for layer in &self.layers[1..] {
            h = layer.forward(&h)?;
        }
        Ok(h)
    }

    pub fn forward(&self, x: &Matrix) -> Result<(Matrix, GradientTape)> {
        let mut tape = GradientTape {
            shapes: self.layers.iter().map(|l| l.weights.shape()).collect(),
            inputs: Vec::with_capacity(self.layers.len()),
            pre: Vec::with_capacity(self.layers.len()),
            outputs: Vec::with_capacity(self.layers.len()),
        };
        let mut h = x.clone();
        for layer in &self.layers {
            let (pre, out) = layer.forward_full(&h)?;
            tape.inputs.push(h);
            tape.pre.push(pre);
            h = out.clone();
            tape.outputs.push(out);
        }
        Ok((h, tape))
    }

    /// Back-propagates `upstream = ∂L/∂output` through the recorded pass.
    ///
    /// Returns per-layer parameter gradients and `∂L/∂input`.
    pub fn backward(&self, tape: GradientTape, upstream: &Matrix) -> Result<(Vec<LayerGrad>, Matrix)> {
        let shapes: Vec<_> = self.layers.iter().map(|l| l.weights.shape()).collect();
        if tape.shapes != shapes || tape.inputs.len() != self.layers.len() {
            return Err(Error::ContractViolation(
                "gradient tape was not recorded by this network".into(),
            ));
        }
        let last = tape.outputs.last().expect("nonempty");
        if upstream.shape() != last.shape() {
            return Err(invalid(format!(
                "upstream gradient shape {:?} does not match output {:?}",
                upstream.shape(),
                last.shape()
            )));
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut delta = upstream.clone();
        for (idx, layer) in self.layers.iter().enumerate().rev() {
            let pre = &tape.pre[idx];
            let out = &tape.outputs[idx];
            if layer.activation != Activation::Linear {
                let d = delta.as_mut_slice();
                for ((g, &p), &o) in d.iter_mut().zip(pre.as_slice()).zip(out.as_slice()) {
                    *g *= layer.activation.derivative(p, o);
                }
            }
            let w_grad = delta.t_matmul(&tape.inputs[idx])?;
            let b_grad = delta.column_sums();
            let next = delta.matmul(&layer.weights)?;
            grads.push(LayerGrad {
                weights: w_grad,
                bias: b_grad,
            });
            delta = next;
        }
        grads.reverse();
        Ok((grads, delta))
    }

    /// Mutable views of every parameter tensor: weights then bias, layer by layer.
    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = Vec::with_capacity(self.layers.len() * 2);
        for l in &mut self.layers {
            v.push(l.weights.as_mut_slice());
            v.push(l.bias.as_mut_slice());
        }
        v
    }
}

/// Flattens layer gradients into the order used by [`Mlp::params_mut`].
pub fn grad_slices(grads: &[LayerGrad]) -> Vec<&[f64]> {
    let mut v = Vec::with_capacity(grads.len() * 2);
    for g in grads {
        v.push(g.weights.as_slice());
        v.push(g.bias.as_slice());
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn identity_layer(n: usize, act: Activation) -> DenseLayer {
        DenseLayer::new(Matrix::identity(n), vec![0.0; n], act).unwrap()
    }

    #[test]
    fn glorot_bounds() {
        let mut rng = seeded(1);
        let w = glorot_init(1, 5, &mut rng).unwrap();
        assert!(w.as_slice().iter().all(|v| v.abs() <= 1.0));
        let w = glorot_init(50, 10, &mut rng).unwrap();
        let lim = (6.0f64 / 60.0).sqrt();
        assert!((lim - 0.3162).abs() < 1e-4);
        assert!(w.as_slice().iter().all(|v| v.abs() <= lim));
        assert_eq!(w.shape(), (10, 50));
    }

    #[test]
    fn glorot_deterministic_and_rejects_zero() {
        let a = glorot_init(3, 3, &mut seeded(42)).unwrap();
        let b = glorot_init(3, 3, &mut seeded(42)).unwrap();
        assert_eq!(a, b);
        assert!(glorot_init(0, 3, &mut seeded(42)).is_err());
        assert!(glorot_init(3, 0, &mut seeded(42)).is_err());
    }

    #[test]
    fn identity_forward() {
        let net = Mlp::new(vec![identity_layer(2, Activation::Linear)]).unwrap();
        let (y, _) = net.forward(&Matrix::row_vector(&[1.0, 2.0])).unwrap();
        assert_eq!(y.as_slice(), &[1.0, 2.0]);

        let net = Mlp::new(vec![identity_layer(2, Activation::Relu)]).unwrap();
        let (y, _) = net.forward(&Matrix::row_vector(&[-1.0, 2.0])).unwrap();
        assert_eq!(y.as_slice(), &[0.0, 2.0]);
    }

    #[test]
    fn forward_dimension_mismatch() {
        let net = Mlp::new(vec![identity_layer(2, Activation::Linear)]).unwrap();
        assert!(matches!(
            net.forward(&Matrix::row_vector(&[1.0, 2.0, 3.0])),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn quadratic_input_gradient() {
        // L = ½‖y‖² with y = x, so ∂L/∂x = x.
        let net = Mlp::new(vec![identity_layer(3, Activation::Linear)]).unwrap();
        let x = Matrix::row_vector(&[0.5, -2.0, 3.0]);
        let (y, tape) = net.forward(&x).unwrap();
        let (_, dx) = net.backward(tape, &y).unwrap();
        assert_eq!(dx.as_slice(), x.as_slice());
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let net = Mlp::glorot(&[4, 3, 2], Activation::Relu, Activation::Linear, &mut seeded(3)).unwrap();
        let x = Matrix::from_rows(&[[0.1, 0.2, 0.3, 0.4], [1.0, -1.0, 0.5, 0.0]]).unwrap();
        let (y, tape) = net.forward(&x).unwrap();
        let (grads, dx) = net.backward(tape, &Matrix::zeros(y.rows(), y.cols())).unwrap();
        for g in &grads {
            assert!(g.weights.as_slice().iter().all(|&v| v == 0.0));
            assert!(g.bias.iter().all(|&v| v == 0.0));
        }
        assert!(dx.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn foreign_tape_is_contract_violation() {
        let a = Mlp::glorot(&[2, 3, 1], Activation::Relu, Activation::Linear, &mut seeded(1)).unwrap();
        let b = Mlp::glorot(&[2, 4, 1], Activation::Relu, Activation::Linear, &mut seeded(1)).unwrap();
        let (y, tape) = a.forward(&Matrix::row_vector(&[1.0, 1.0])).unwrap();
        assert!(matches!(b.backward(tape, &y), Err(Error::ContractViolation(_))));
    }

    #[test]
    fn activations_match_definitions() {
        assert_eq!(Activation::Relu.apply(-3.0), 0.0);
        assert!((Activation::Sigmoid.apply(0.0) - 0.5).abs() < 1e-15);
        assert!((Activation::Tanh.apply(0.3) - 0.3f64.tanh()).abs() < 1e-15);
        for a in [Activation::Linear, Activation::Relu, Activation::Sigmoid, Activation::Tanh] {
            assert_eq!(Activation::from_code(a.code()), Some(a));
        }
    }
}
