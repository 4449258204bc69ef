//! Prediction models whose parameters form the inner-loop decision vector.
//!
//! Parameters are always exchanged as one flat vector. Layer `k` occupies
//! `dims[k+1] * dims[k]` weights (row-major, shape `dims[k+1] x dims[k]`)
//! followed by `dims[k+1]` biases, layers in order.

use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::array::Array;
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, x: &Tensor) -> Result<Tensor> {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.relu(),
            Activation::Identity => Ok(x.clone()),
        }
    }
}

/// Layer widths plus the hidden nonlinearity. The output layer is linear.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub layer_dims: Vec<usize>,
    pub activation: Activation,
}

impl Architecture {
    pub fn new(layer_dims: Vec<usize>, activation: Activation) -> Result<Self> {
        if layer_dims.len() < 2 || layer_dims.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "layer dims must have at least two positive entries, got {layer_dims:?}"
            )));
        }
        Ok(Self {
            layer_dims,
            activation,
        })
    }

    pub fn param_count(&self) -> usize {
        self.layer_dims
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    /// Weights uniform in `±sqrt(1/fan_in)`, zero biases.
    pub fn init_params(&self, seed: u64) -> Array {
        let mut r = rng::stream(seed, 0);
        let mut data = Vec::with_capacity(self.param_count());
        for w in self.layer_dims.windows(2) {
            let bound = (1.0 / w[0] as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound).unwrap();
            data.extend((0..w[0] * w[1]).map(|_| dist.sample(&mut r)));
            data.extend(std::iter::repeat_n(0.0, w[1]));
        }
        Array::vector(data)
    }

    /// Predictions of shape `(batch, output_dim)` for parameters `theta`.
    pub fn forward(&self, theta: &Tensor, x: &Tensor) -> Result<Tensor> {
        if theta.numel() != self.param_count() {
            return Err(Error::Shape {
                op: "forward",
                shapes: vec![theta.shape().to_vec(), vec![self.param_count()]],
            });
        }
        if x.shape().len() != 2 || x.shape()[1] != self.input_dim() {
            return Err(Error::Shape {
                op: "forward",
                shapes: vec![x.shape().to_vec(), vec![0, self.input_dim()]],
            });
        }
        let batch = x.shape()[0];
        let ones = Tensor::constant(Array::ones(vec![batch, 1]));
        let theta = theta.reshape(vec![theta.numel()])?;
        let mut h = x.clone();
        let mut offset = 0;
        let layers = self.layer_dims.len() - 1;
        for (k, w) in self.layer_dims.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let weight = theta
                .slice(offset, fan_out * fan_in)?
                .reshape(vec![fan_out, fan_in])?;
            offset += fan_out * fan_in;
            let bias = theta.slice(offset, fan_out)?.reshape(vec![1, fan_out])?;
            offset += fan_out;
            h = h.matmul(&weight.transpose()?)?.add(&ones.matmul(&bias)?)?;
            if k + 1 < layers {
                h = self.activation.apply(&h)?;
            }
        }
        Ok(h)
    }
}

/// A feed-forward network with concrete parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeedForwardNet {
    pub arch: Architecture,
    params: Array,
}

impl FeedForwardNet {
    pub fn init(layer_dims: &[usize], activation: Activation, seed: u64) -> Result<Self> {
        let arch = Architecture::new(layer_dims.to_vec(), activation)?;
        let params = arch.init_params(seed);
        Ok(Self { arch, params })
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    /// Weight matrix and bias vector of layer `k`.
    pub fn layer(&self, k: usize) -> (Array, Array) {
        let dims = &self.arch.layer_dims;
        let mut offset = 0;
        for w in dims.windows(2).take(k) {
            offset += w[0] * w[1] + w[1];
        }
        let (fan_in, fan_out) = (dims[k], dims[k + 1]);
        let data = self.params.data();
        let weight = Array::matrix(
            fan_out,
            fan_in,
            data[offset..offset + fan_in * fan_out].to_vec(),
        )
        .expect("layer shape");
        offset += fan_in * fan_out;
        let bias = Array::vector(data[offset..offset + fan_out].to_vec());
        (weight, bias)
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.arch
            .forward(&Tensor::constant(self.params.clone()), x)
    }

    pub fn flatten_params(&self) -> Array {
        self.params.clone()
    }

    pub fn unflatten_params(&self, v: &Array) -> Result<Self> {
        if v.len() != self.num_params() {
            return Err(Error::Shape {
                op: "unflatten",
                shapes: vec![v.shape().to_vec(), vec![self.num_params()]],
            });
        }
        Ok(Self {
            arch: self.arch.clone(),
            params: Array::vector(v.data().to_vec()),
        })
    }
}

/// `X theta`, linear in `theta`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub theta: Array,
}

impl LinearModel {
    pub fn predict(theta: &Tensor, x: &Tensor) -> Result<Tensor> {
        x.matvec(theta)
    }
}
