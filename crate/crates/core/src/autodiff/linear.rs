use rand::Rng;

use super::graph::{Graph, Var};
use super::init::uniform_fan_in;
use super::tensor::{gemm, Tensor};
use crate::error::Result;

/// Affine layer `y = x W + b`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Tensor,
}

#[derive(Clone, Copy, Debug)]
pub struct LinearVars {
    pub weight: Var,
    pub bias: Var,
}

impl Linear {
    pub fn init<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        Linear {
            weight: uniform_fan_in(fan_in, fan_out, rng),
            bias: Tensor::zeros(&[fan_out]),
        }
    }

    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Linear {
            weight: Tensor::zeros(&[fan_in, fan_out]),
            bias: Tensor::zeros(&[fan_out]),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weight.rows()
    }

    pub fn fan_out(&self) -> usize {
        self.weight.cols()
    }

    pub fn param_count(fan_in: usize, fan_out: usize) -> usize {
        fan_in * fan_out + fan_out
    }

    /// Plain evaluation on `rows` stacked inputs.
    pub fn forward(&self, x: &[f64], rows: usize) -> Vec<f64> {
        let (ni, no) = (self.fan_in(), self.fan_out());
        let mut out = Vec::with_capacity(rows * no);
        for _ in 0..rows {
            out.extend_from_slice(self.bias.data());
        }
        gemm(rows, ni, no, x, false, self.weight.data(), false, 1.0, &mut out);
        out
    }

    pub fn bind(&self, g: &mut Graph) -> LinearVars {
        LinearVars {
            weight: g.param(&self.weight),
            bias: g.param(&self.bias),
        }
    }
}

impl LinearVars {
    pub fn apply(&self, g: &mut Graph, x: Var) -> Result<Var> {
        g.linear(x, self.weight, self.bias)
    }
}
