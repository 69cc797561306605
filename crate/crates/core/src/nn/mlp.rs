//! Fully-connected feed-forward networks with exact reverse-mode gradients.
//!
//! A network with `hidden_dims = [h1, .., hn]` has `n + 1` dense layers; the
//! activation follows every hidden layer and the output layer is linear.
//! Batches are rows of a [`Matrix`].

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::matrix::{gemm, Matrix, Operand};
use crate::error::{shape_err, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    ReLU,
    Softplus,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::ReLU => x.max(0.0),
            Activation::Softplus => (-x.abs()).exp().ln_1p() + x.max(0.0),
        }
    }

    /// Derivative with respect to the pre-activation.
    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::ReLU => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Softplus => {
                // logistic(x), evaluated without overflow
                if x >= 0.0 {
                    1.0 / (1.0 + (-x).exp())
                } else {
                    let e = x.exp();
                    e / (1.0 + e)
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub output_dim: usize,
    pub activation: Activation,
}

impl MlpSpec {
    pub fn new(
        input_dim: usize,
        hidden_dims: Vec<usize>,
        output_dim: usize,
        activation: Activation,
    ) -> Result<Self> {
        let spec = Self {
            input_dim,
            hidden_dims,
            output_dim,
            activation,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_dims.is_empty() {
            return Err(Error::Config("an MLP needs at least one hidden layer".into()));
        }
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden_dims.contains(&0) {
            return Err(Error::Config("all layer widths must be at least 1".into()));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` for each dense layer, input to output.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut widths = Vec::with_capacity(self.hidden_dims.len() + 2);
        widths.push(self.input_dim);
        widths.extend_from_slice(&self.hidden_dims);
        widths.push(self.output_dim);
        widths.windows(2).map(|w| (w[0], w[1])).collect()
    }

    pub fn param_count(&self) -> usize {
        self.layer_dims().iter().map(|(i, o)| i * o + o).sum()
    }
}

/// One affine layer; `weight` is `(fan_out, fan_in)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    spec: MlpSpec,
    layers: Vec<Dense>,
}

/// Gradients share the parameter layout.
pub type Gradients = MlpParams;

/// Intermediate values kept by [`MlpParams::forward_tape`] for the backward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    /// Input to each dense layer (the batch itself for layer 0).
    inputs: Vec<Matrix>,
    /// Pre-activations of the hidden layers.
    pre_activations: Vec<Matrix>,
}

impl MlpParams {
    /// All-zero parameters.
    pub fn zeros(spec: MlpSpec) -> Result<Self> {
        spec.validate()?;
        let layers = spec
            .layer_dims()
            .into_iter()
            .map(|(fan_in, fan_out)| Dense {
                weight: Matrix::zeros(fan_out, fan_in),
                bias: vec![0.0; fan_out],
            })
            .collect();
        Ok(Self { spec, layers })
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init<R: Rng + ?Sized>(spec: MlpSpec, rng: &mut R) -> Result<Self> {
        let mut params = Self::zeros(spec)?;
        for layer in &mut params.layers {
            let (fan_out, fan_in) = (layer.weight.rows(), layer.weight.cols());
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for w in layer.weight.as_mut_slice() {
                *w = rng.random_range(-limit..=limit);
            }
        }
        Ok(params)
    }

    /// Builds parameters from explicit layers, checking that they chain.
    pub fn from_layers(spec: MlpSpec, layers: Vec<Dense>) -> Result<Self> {
        spec.validate()?;
        let dims = spec.layer_dims();
        if dims.len() != layers.len() {
            return Err(shape_err(format!(
                "spec has {} layers, got {}",
                dims.len(),
                layers.len()
            )));
        }
        for (i, ((fan_in, fan_out), layer)) in dims.iter().zip(&layers).enumerate() {
            if layer.weight.rows() != *fan_out
                || layer.weight.cols() != *fan_in
                || layer.bias.len() != *fan_out
            {
                return Err(shape_err(format!("layer {i} does not match {fan_in}->{fan_out}")));
            }
        }
        Ok(Self { spec, layers })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn param_count(&self) -> usize {
        self.spec.param_count()
    }

    /// Parameter blocks in a fixed order: each layer's weight then bias.
    pub fn blocks(&self) -> impl Iterator<Item = &[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.as_slice(), l.bias.as_slice()])
    }

    pub fn blocks_mut(&mut self) -> impl Iterator<Item = &mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weight.as_mut_slice(), l.bias.as_mut_slice()])
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.param_count());
        for b in self.blocks() {
            flat.extend_from_slice(b);
        }
        flat
    }

    pub fn from_flat(spec: MlpSpec, flat: &[f64]) -> Result<Self> {
        let mut params = Self::zeros(spec)?;
        if flat.len() != params.param_count() {
            return Err(shape_err(format!(
                "expected {} parameters, got {}",
                params.param_count(),
                flat.len()
            )));
        }
        let mut offset = 0;
        for block in params.blocks_mut() {
            block.copy_from_slice(&flat[offset..offset + block.len()]);
            offset += block.len();
        }
        Ok(params)
    }

    pub fn same_shape(&self, other: &MlpParams) -> bool {
        self.spec == other.spec
    }

    pub fn is_finite(&self) -> bool {
        self.blocks().all(|b| b.iter().all(|v| v.is_finite()))
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        let x = Matrix::row_vector(input);
        Ok(self.forward_batch(&x)?.into_vec())
    }

    /// Forward pass over a batch without recording intermediates.
    pub fn forward_batch(&self, x: &Matrix) -> Result<Matrix> {
        self.check_input(x)?;
        let last = self.layers.len() - 1;
        let mut h = self.affine(0, x);
        for l in 1..=last {
            self.activate_in_place(&mut h);
            h = self.affine(l, &h);
        }
        Ok(h)
    }

    /// Forward pass that records what [`MlpParams::backward`] needs.
    pub fn forward_tape(&self, x: &Matrix) -> Result<(Matrix, Tape)> {
        self.check_input(x)?;
        let n = self.layers.len();
        let mut inputs = Vec::with_capacity(n);
        let mut pre_activations = Vec::with_capacity(n - 1);
        inputs.push(x.clone());
        for l in 0..n - 1 {
            let z = self.affine(l, &inputs[l]);
            let mut a = z.clone();
            self.activate_in_place(&mut a);
            pre_activations.push(z);
            inputs.push(a);
        }
        let out = self.affine(n - 1, &inputs[n - 1]);
        Ok((
            out,
            Tape {
                inputs,
                pre_activations,
            },
        ))
    }

    /// Reverse pass: given `dL/d(output)` for every row of the taped batch,
    /// returns parameter gradients (summed over the batch) and `dL/d(input)`.
    pub fn backward(&self, tape: &Tape, output_grad: &Matrix) -> Result<(Gradients, Matrix)> {
        let batch = tape.inputs[0].rows();
        if output_grad.rows() != batch || output_grad.cols() != self.spec.output_dim {
            return Err(shape_err(format!(
                "output gradient is {}x{}, expected {}x{}",
                output_grad.rows(),
                output_grad.cols(),
                batch,
                self.spec.output_dim
            )));
        }
        let mut grads = Self::zeros(self.spec.clone())?;
        let mut delta = output_grad.clone();
        for l in (0..self.layers.len()).rev() {
            let g = &mut grads.layers[l];
            gemm(
                1.0,
                Operand::t(&delta),
                Operand::plain(&tape.inputs[l]),
                0.0,
                &mut g.weight,
            );
            for r in 0..delta.rows() {
                for (b, d) in g.bias.iter_mut().zip(delta.row(r)) {
                    *b += d;
                }
            }
            let w = &self.layers[l].weight;
            let mut upstream = Matrix::zeros(batch, w.cols());
            gemm(1.0, Operand::plain(&delta), Operand::plain(w), 0.0, &mut upstream);
            if l > 0 {
                let z = &tape.pre_activations[l - 1];
                let act = self.spec.activation;
                for (u, &zv) in upstream.as_mut_slice().iter_mut().zip(z.as_slice()) {
                    *u *= act.derivative(zv);
                }
            }
            delta = upstream;
        }
        Ok((grads, delta))
    }

    /// Single-sample convenience around [`MlpParams::forward_tape`] and [`MlpParams::backward`].
    pub fn backward_single(&self, input: &[f64], output_grad: &[f64]) -> Result<(Gradients, Vec<f64>)> {
        let (_, tape) = self.forward_tape(&Matrix::row_vector(input))?;
        let (grads, input_grad) = self.backward(&tape, &Matrix::row_vector(output_grad))?;
        Ok((grads, input_grad.into_vec()))
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.spec.input_dim {
            return Err(shape_err(format!(
                "input has {} features, network expects {}",
                x.cols(),
                self.spec.input_dim
            )));
        }
        Ok(())
    }

    fn affine(&self, l: usize, x: &Matrix) -> Matrix {
        let layer = &self.layers[l];
        let mut z = Matrix::zeros(x.rows(), layer.weight.rows());
        gemm(1.0, Operand::plain(x), Operand::t(&layer.weight), 0.0, &mut z);
        for r in 0..z.rows() {
            for (v, b) in z.row_mut(r).iter_mut().zip(&layer.bias) {
                *v += b;
            }
        }
        z
    }

    fn activate_in_place(&self, h: &mut Matrix) {
        let act = self.spec.activation;
        h.as_mut_slice().iter_mut().for_each(|v| *v = act.apply(*v));
    }
}
