//! Minimal dense-network engine.
//!
//! A [`Network`] is a fixed sequence of [`Layer`]s. `forward` records every
//! layer output in an [`Activations`] cache, and `backward` walks that cache in
//! reverse, accumulating parameter gradients and returning the gradient with
//! respect to the network input (so networks can be chained, e.g. a shared
//! trunk feeding two branches).
//!
//! Affine weights are stored `in_dim × out_dim`, so a batch `X` (`B × in_dim`)
//! maps to `X·W + b`.

mod loss;
mod optim;

pub use loss::{softmax, softmax_xent, softmax_xent_weighted};
pub use optim::{lr_at, sgd_step, OptimizerConfig};

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// A trainable tensor with its gradient accumulator and momentum buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub value: Tensor,
    pub grad: Tensor,
    pub momentum: Tensor,
}

impl Parameter {
    pub fn new(value: Tensor) -> Self {
        let grad = Tensor::zeros(value.shape());
        let momentum = Tensor::zeros(value.shape());
        Self {
            value,
            grad,
            momentum,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.values_mut().fill(0.0);
    }

    /// Uniform in `[-bound, bound]`.
    pub fn uniform<R: Rng + ?Sized>(shape: &[usize], bound: f64, rng: &mut R) -> Self {
        let mut value = Tensor::zeros(shape);
        for v in value.values_mut() {
            *v = (2.0 * rng.random::<f64>() - 1.0) * bound;
        }
        Self::new(value)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    /// `in_dim × out_dim`.
    pub weight: Parameter,
    /// `out_dim`.
    pub bias: Parameter,
}

impl Affine {
    /// Weights uniform in `±1/√in_dim`, zero bias.
    pub fn init<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (in_dim as f64).sqrt();
        Self {
            weight: Parameter::uniform(&[in_dim, out_dim], bound, rng),
            bias: Parameter::new(Tensor::zeros(&[out_dim])),
        }
    }

    pub fn from_values(weight: Tensor, bias: Tensor) -> Result<Self> {
        if weight.shape().len() != 2 || bias.shape() != [weight.shape()[1]] {
            return Err(Error::dim(
                "Affine::from_values",
                format!("weight {:?}, bias {:?}", weight.shape(), bias.shape()),
            ));
        }
        Ok(Self {
            weight: Parameter::new(weight),
            bias: Parameter::new(bias),
        })
    }

    pub fn in_dim(&self) -> usize {
        self.weight.value.shape()[0]
    }

    pub fn out_dim(&self) -> usize {
        self.weight.value.shape()[1]
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut y = x.matmul(&self.weight.value)?;
        let b = self.bias.value.values();
        for r in 0..y.rows() {
            for (v, bv) in y.row_mut(r).iter_mut().zip(b) {
                *v += bv;
            }
        }
        Ok(y)
    }

    fn backward(&mut self, input: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
        let gw = input.matmul_tn(grad_out)?;
        self.weight.grad.add_scaled(&gw, 1.0)?;
        self.bias.grad.add_scaled(&grad_out.sum_rows(), 1.0)?;
        grad_out.matmul_nt(&self.weight.value)
    }
}

#[derive(Debug, Clone, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum Layer {
    Affine(Affine),
    Relu,
}

impl Layer {
    fn describe(&self, index: usize) -> String {
        match self {
            Layer::Affine(a) => format!("layer {index} (Affine {}->{})", a.in_dim(), a.out_dim()),
            Layer::Relu => format!("layer {index} (ReLU)"),
        }
    }
}

/// Outputs of every layer for one batch, plus the batch itself.
#[derive(Debug, Clone)]
pub struct Activations {
    pub input: Tensor,
    pub outputs: Vec<Tensor>,
}

impl Activations {
    /// The network output (the input itself for an empty network).
    pub fn output(&self) -> &Tensor {
        self.outputs.last().unwrap_or(&self.input)
    }

    fn layer_input(&self, k: usize) -> &Tensor {
        if k == 0 {
            &self.input
        } else {
            &self.outputs[k - 1]
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Network {
    layers: Vec<Layer>,
}

impl Network {
    /// Validates that consecutive Affine dimensions chain.
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        let mut width: Option<usize> = None;
        for (k, layer) in layers.iter().enumerate() {
            if let Layer::Affine(a) = layer {
                if let Some(w) = width {
                    if w != a.in_dim() {
                        return Err(Error::dim(
                            layer.describe(k),
                            format!("expects width {}, previous layer yields {w}", a.in_dim()),
                        ));
                    }
                }
                width = Some(a.out_dim());
            }
        }
        Ok(Self { layers })
    }

    /// `Affine(dims[0]→dims[1])`, ReLU, …, `Affine(dims[n-2]→dims[n-1])`.
    /// A trailing ReLU is appended when `relu_last` is set.
    pub fn mlp<R: Rng + ?Sized>(dims: &[usize], relu_last: bool, rng: &mut R) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::Config(format!("invalid MLP dims {dims:?}")));
        }
        let mut layers = Vec::new();
        for (i, w) in dims.windows(2).enumerate() {
            layers.push(Layer::Affine(Affine::init(w[0], w[1], rng)));
            if relu_last || i + 2 < dims.len() {
                layers.push(Layer::Relu);
            }
        }
        Self::new(layers)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn push(&mut self, layer: Layer) -> Result<()> {
        let mut layers = std::mem::take(&mut self.layers);
        layers.push(layer);
        *self = Self::new(layers)?;
        Ok(())
    }

    fn affines(&self) -> impl Iterator<Item = &Affine> {
        self.layers.iter().filter_map(|l| match l {
            Layer::Affine(a) => Some(a),
            Layer::Relu => None,
        })
    }

    /// Input width, if the network contains any Affine layer.
    pub fn in_dim(&self) -> Option<usize> {
        self.affines().next().map(Affine::in_dim)
    }

    pub fn out_dim(&self) -> Option<usize> {
        self.affines().last().map(Affine::out_dim)
    }

    /// Copies of the first `n` layers and of the rest.
    pub fn split_at(&self, n: usize) -> (Network, Network) {
        let n = n.min(self.layers.len());
        (
            Network {
                layers: self.layers[..n].to_vec(),
            },
            Network {
                layers: self.layers[n..].to_vec(),
            },
        )
    }

    pub fn forward(&self, batch: &Tensor) -> Result<Activations> {
        if batch.shape().len() != 2 {
            return Err(Error::dim("network input", format!("expected B x d, got {:?}", batch.shape())));
        }
        let mut outputs: Vec<Tensor> = Vec::with_capacity(self.layers.len());
        for (k, layer) in self.layers.iter().enumerate() {
            let x = outputs.last().unwrap_or(batch);
            let y = match layer {
                Layer::Affine(a) => {
                    if x.cols() != a.in_dim() {
                        return Err(Error::dim(
                            layer.describe(k),
                            format!("input width {} != {}", x.cols(), a.in_dim()),
                        ));
                    }
                    a.forward(x)?
                }
                Layer::Relu => {
                    let mut y = x.clone();
                    for v in y.values_mut() {
                        if *v < 0.0 {
                            *v = 0.0;
                        }
                    }
                    y
                }
            };
            outputs.push(y);
        }
        Ok(Activations {
            input: batch.clone(),
            outputs,
        })
    }

    /// Convenience: the network output only.
    pub fn predict(&self, batch: &Tensor) -> Result<Tensor> {
        let acts = self.forward(batch)?;
        Ok(match acts.outputs.into_iter().last() {
            Some(t) => t,
            None => acts.input,
        })
    }

    /// Accumulates `∂loss/∂param` into every parameter's `grad` and returns
    /// `∂loss/∂input`.
    pub fn backward(&mut self, acts: &Activations, upstream: &Tensor) -> Result<Tensor> {
        if acts.outputs.len() != self.layers.len() {
            return Err(Error::State(format!(
                "activations hold {} layer outputs, network has {} layers",
                acts.outputs.len(),
                self.layers.len()
            )));
        }
        for (k, (layer, out)) in self.layers.iter().zip(&acts.outputs).enumerate() {
            if let Layer::Affine(a) = layer {
                if out.cols() != a.out_dim() {
                    return Err(Error::State(format!(
                        "{} produced width {}, cached output has width {}",
                        layer.describe(k),
                        a.out_dim(),
                        out.cols()
                    )));
                }
            }
        }
        if upstream.shape() != acts.output().shape() {
            return Err(Error::dim(
                "upstream gradient",
                format!("{:?} vs output {:?}", upstream.shape(), acts.output().shape()),
            ));
        }
        let mut grad = upstream.clone();
        for k in (0..self.layers.len()).rev() {
            let input = acts.layer_input(k);
            grad = match &mut self.layers[k] {
                Layer::Affine(a) => a.backward(input, &grad)?,
                Layer::Relu => {
                    let mut g = grad;
                    for (gv, &y) in g.values_mut().iter_mut().zip(acts.outputs[k].values()) {
                        if y <= 0.0 {
                            *gv = 0.0;
                        }
                    }
                    g
                }
            };
        }
        Ok(grad)
    }

    pub fn params(&self) -> Vec<&Parameter> {
        self.affines().flat_map(|a| [&a.weight, &a.bias]).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter> {
        self.layers
            .iter_mut()
            .filter_map(|l| match l {
                Layer::Affine(a) => Some(a),
                Layer::Relu => None,
            })
            .flat_map(|a| [&mut a.weight, &mut a.bias])
            .collect()
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    pub fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.value.len()).sum()
    }
}
