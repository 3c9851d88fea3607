use std::f64::consts::{FRAC_1_SQRT_2, PI};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    /// Exact GELU, `x · Φ(x)`.
    Gelu,
    Identity,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Gelu => 0.5 * x * (1.0 + libm::erf(x * FRAC_1_SQRT_2)),
            Activation::Identity => x,
        }
    }

    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Gelu => {
                let cdf = 0.5 * (1.0 + libm::erf(x * FRAC_1_SQRT_2));
                let pdf = (-0.5 * x * x).exp() / (2.0 * PI).sqrt();
                cdf + x * pdf
            }
            Activation::Identity => 1.0,
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Affine layer `y = W x + b`, weight stored `out × in` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Linear {
    pub fn new(in_dim: usize, out_dim: usize, weight: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if weight.len() != in_dim * out_dim || bias.len() != out_dim {
            return Err(Error::invalid(format!(
                "linear layer {in_dim}->{out_dim}: got {} weights and {} biases",
                weight.len(),
                bias.len()
            )));
        }
        if weight.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::invalid("linear layer has non-finite parameters"));
        }
        Ok(Linear {
            in_dim,
            out_dim,
            weight,
            bias,
        })
    }

    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Linear {
            in_dim,
            out_dim,
            weight: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
        }
    }

    /// Uniform in ±1/√in_dim.
    pub fn random(in_dim: usize, out_dim: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (in_dim as f64).sqrt();
        Linear {
            in_dim,
            out_dim,
            weight: (0..in_dim * out_dim)
                .map(|_| rng.random_range(-bound..bound))
                .collect(),
            bias: (0..out_dim).map(|_| rng.random_range(-bound..bound)).collect(),
        }
    }

    pub fn forward(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.in_dim);
        for (o, (row, b)) in out
            .iter_mut()
            .zip(self.weight.chunks_exact(self.in_dim).zip(&self.bias))
        {
            *o = row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b;
        }
    }

    /// Accumulates parameter gradients and returns `dL/dx`.
    fn backward(&self, x: &[f64], dy: &[f64], grad: &mut LinearGrad) -> Vec<f64> {
        let mut dx = vec![0.0; self.in_dim];
        for (o, &g) in dy.iter().enumerate() {
            grad.bias[o] += g;
            let row = &self.weight[o * self.in_dim..(o + 1) * self.in_dim];
            let grow = &mut grad.weight[o * self.in_dim..(o + 1) * self.in_dim];
            for i in 0..self.in_dim {
                grow[i] += g * x[i];
                dx[i] += row[i] * g;
            }
        }
        dx
    }

    pub fn num_params(&self) -> usize {
        self.weight.len() + self.bias.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearGrad {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl LinearGrad {
    fn zeros_like(l: &Linear) -> Self {
        LinearGrad {
            weight: vec![0.0; l.weight.len()],
            bias: vec![0.0; l.bias.len()],
        }
    }
}

/// Two-layer perceptron `fc2(act(fc1(x)))`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp2 {
    pub fc1: Linear,
    pub fc2: Linear,
    pub activation: Activation,
}

/// Intermediate values kept for the backward pass.
#[derive(Debug, Clone)]
pub struct Mlp2Cache {
    input: Vec<f64>,
    pre: Vec<f64>,
    hidden: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp2Grad {
    pub fc1: LinearGrad,
    pub fc2: LinearGrad,
}

impl Mlp2 {
    pub fn new(fc1: Linear, fc2: Linear, activation: Activation) -> Result<Self> {
        if fc1.out_dim != fc2.in_dim {
            return Err(Error::invalid(format!(
                "perceptron layers do not chain: {} -> {} then {} -> {}",
                fc1.in_dim, fc1.out_dim, fc2.in_dim, fc2.out_dim
            )));
        }
        Ok(Mlp2 {
            fc1,
            fc2,
            activation,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.fc1.in_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.fc1.out_dim
    }

    pub fn out_dim(&self) -> usize {
        self.fc2.out_dim
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.forward_cached(x).0
    }

    pub fn forward_cached(&self, x: &[f64]) -> (Vec<f64>, Mlp2Cache) {
        let mut pre = vec![0.0; self.fc1.out_dim];
        self.fc1.forward(x, &mut pre);
        let hidden: Vec<f64> = pre.iter().map(|v| self.activation.apply(*v)).collect();
        let mut out = vec![0.0; self.fc2.out_dim];
        self.fc2.forward(&hidden, &mut out);
        (
            out,
            Mlp2Cache {
                input: x.to_vec(),
                pre,
                hidden,
            },
        )
    }

    pub fn backward(&self, cache: &Mlp2Cache, dy: &[f64], grad: &mut Mlp2Grad) -> Vec<f64> {
        let dhidden = self.fc2.backward(&cache.hidden, dy, &mut grad.fc2);
        let dpre: Vec<f64> = dhidden
            .iter()
            .zip(&cache.pre)
            .map(|(g, p)| g * self.activation.derivative(*p))
            .collect();
        self.fc1.backward(&cache.input, &dpre, &mut grad.fc1)
    }

    pub fn zero_grad(&self) -> Mlp2Grad {
        Mlp2Grad {
            fc1: LinearGrad::zeros_like(&self.fc1),
            fc2: LinearGrad::zeros_like(&self.fc2),
        }
    }

    pub fn num_params(&self) -> usize {
        self.fc1.num_params() + self.fc2.num_params()
    }

    /// Parameters in the order fc1.weight, fc1.bias, fc2.weight, fc2.bias.
    pub fn params(&self) -> [&[f64]; 4] {
        [&self.fc1.weight, &self.fc1.bias, &self.fc2.weight, &self.fc2.bias]
    }

    pub fn params_mut(&mut self) -> [&mut Vec<f64>; 4] {
        [
            &mut self.fc1.weight,
            &mut self.fc1.bias,
            &mut self.fc2.weight,
            &mut self.fc2.bias,
        ]
    }
}

impl Mlp2Grad {
    pub fn params(&self) -> [&[f64]; 4] {
        [&self.fc1.weight, &self.fc1.bias, &self.fc2.weight, &self.fc2.bias]
    }
}

pub const PARAM_SUFFIXES: [&str; 4] = ["fc1.weight", "fc1.bias", "fc2.weight", "fc2.bias"];
