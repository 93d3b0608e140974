use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numerics::tensor::{Tensor, INIT_BOUND};

/// Affine map `y = x·W + b` on a single vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Tensor,
    pub bias: Tensor,
}

#[derive(Debug, Clone)]
pub struct DenseGrads {
    pub input: Vec<f64>,
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Dense {
    pub fn new(inputs: usize, outputs: usize, rng: &mut ChaCha8Rng) -> Self {
        Dense {
            weight: Tensor::uniform(&[inputs, outputs], INIT_BOUND, rng),
            bias: Tensor::zeros(&[outputs]),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn outputs(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        dense_forward(x, &self.weight, &self.bias)
    }

    pub fn backward(&self, x: &[f64], grad_out: &[f64]) -> Result<DenseGrads> {
        dense_backward(x, &self.weight, grad_out)
    }
}

pub fn dense_forward(x: &[f64], weight: &Tensor, bias: &Tensor) -> Result<Vec<f64>> {
    let (n_in, n_out) = weight.dims2()?;
    if x.len() != n_in || bias.len() != n_out {
        return Err(Error::dimension(format!(
            "dense layer {n_in}→{n_out} given input {} and bias {}",
            x.len(),
            bias.len()
        )));
    }
    let w = weight.data();
    let mut y = bias.data().to_vec();
    for (i, xi) in x.iter().enumerate() {
        for (o, yo) in y.iter_mut().enumerate() {
            *yo += xi * w[i * n_out + o];
        }
    }
    Ok(y)
}

pub fn dense_backward(x: &[f64], weight: &Tensor, grad_out: &[f64]) -> Result<DenseGrads> {
    let (n_in, n_out) = weight.dims2()?;
    if x.len() != n_in || grad_out.len() != n_out {
        return Err(Error::dimension("dense gradient has the wrong shape"));
    }
    let w = weight.data();
    let mut gx = vec![0.0; n_in];
    let mut gw = vec![0.0; n_in * n_out];
    for i in 0..n_in {
        for o in 0..n_out {
            gx[i] += grad_out[o] * w[i * n_out + o];
            gw[i * n_out + o] = x[i] * grad_out[o];
        }
    }
    Ok(DenseGrads {
        input: gx,
        weight: Tensor::new(vec![n_in, n_out], gw)?,
        bias: Tensor::from_vec(grad_out.to_vec()),
    })
}
