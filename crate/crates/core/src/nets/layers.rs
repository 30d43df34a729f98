//! Layer building blocks: parameters, graph bindings, and the dense /
//! convolution / batch-norm layers the model tables are assembled from.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::tensor::checkpoint::ParamBlob;
use crate::tensor::{Tape, Tensor};

/// Named learnable array owned by a model between steps.
#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Param {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, data: Vec<f64>) -> Self {
        let name = name.into();
        debug_assert_eq!(shape.iter().product::<usize>(), data.len(), "{name}");
        Self { name, shape, data }
    }

    pub fn zeros(name: impl Into<String>, shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self::new(name, shape, vec![0.0; n])
    }

    pub fn ones(name: impl Into<String>, shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self::new(name, shape, vec![1.0; n])
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn to_blob(&self) -> ParamBlob {
        ParamBlob {
            name: self.name.clone(),
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| v as f32).collect(),
        }
    }
}

/// Weight initialization family, chosen per layer by its activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitKind {
    /// Centered uniform with fan-in scaling, for (leaky) ReLU stages.
    HeUniform,
    /// Centered uniform with fan-in + fan-out scaling, for tanh and linear
    /// stages.
    XavierUniform,
}

pub fn init_weight(
    rng: &mut ChaCha8Rng,
    shape: Vec<usize>,
    fan_in: usize,
    fan_out: usize,
    kind: InitKind,
    name: impl Into<String>,
) -> Param {
    let limit = match kind {
        InitKind::HeUniform => (6.0 / fan_in as f64).sqrt(),
        InitKind::XavierUniform => (6.0 / (fan_in + fan_out) as f64).sqrt(),
    };
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-limit..limit)).collect();
    Param::new(name, shape, data)
}

/// Leaf nodes for a model's parameters on one tape, looked up by name.
#[derive(Debug, Default)]
pub struct Bindings {
    order: Vec<(String, Tensor)>,
    index: HashMap<String, usize>,
}

impl Bindings {
    /// Bind every parameter of `params` (in order) as tape leaves.
    pub fn bind(tape: &mut Tape, params: &[&Param]) -> Result<Self> {
        let mut b = Self::default();
        for p in params {
            if b.index.contains_key(&p.name) {
                return Err(Error::data(format!("duplicate parameter name '{}'", p.name)));
            }
            let t = tape.leaf(p.data.clone(), &p.shape)?;
            b.index.insert(p.name.clone(), b.order.len());
            b.order.push((p.name.clone(), t));
        }
        Ok(b)
    }

    pub fn get(&self, name: &str) -> Result<Tensor> {
        self.index
            .get(name)
            .map(|&i| self.order[i].1)
            .ok_or_else(|| Error::data(format!("parameter '{name}' is not bound")))
    }

    /// Bound tensors in bind order, aligned with the names from [`Bindings::names`].
    pub fn tensors(&self) -> Vec<Tensor> {
        self.order.iter().map(|(_, t)| *t).collect()
    }

    pub fn names(&self) -> Vec<&str> {
        self.order.iter().map(|(n, _)| n.as_str()).collect()
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }
}

// ---------------------------------------------------------------------------
// Layers
// ---------------------------------------------------------------------------

/// Fully connected layer, weight (in, out), bias (out).
#[derive(Debug, Clone)]
pub struct Dense {
    pub w: Param,
    pub b: Param,
}

impl Dense {
    pub fn new(rng: &mut ChaCha8Rng, prefix: &str, fan_in: usize, fan_out: usize, kind: InitKind) -> Self {
        Self {
            w: init_weight(
                rng,
                vec![fan_in, fan_out],
                fan_in,
                fan_out,
                kind,
                format!("{prefix}.weight"),
            ),
            b: Param::zeros(format!("{prefix}.bias"), vec![fan_out]),
        }
    }

    pub fn forward(&self, tape: &mut Tape, b: &Bindings, x: Tensor) -> Result<Tensor> {
        let w = b.get(&self.w.name)?;
        let bias = b.get(&self.b.name)?;
        tape.dense(x, w, bias)
    }

    pub fn params(&self) -> Vec<&Param> {
        vec![&self.w, &self.b]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.w, &mut self.b]
    }
}

/// Valid 1-D convolution, weight (Co, Ci, K), bias (Co).
#[derive(Debug, Clone)]
pub struct Conv1dLayer {
    pub w: Param,
    pub b: Param,
    pub stride: usize,
}

impl Conv1dLayer {
    pub fn new(
        rng: &mut ChaCha8Rng,
        prefix: &str,
        ci: usize,
        co: usize,
        k: usize,
        stride: usize,
        kind: InitKind,
    ) -> Self {
        Self {
            w: init_weight(
                rng,
                vec![co, ci, k],
                ci * k,
                co * k,
                kind,
                format!("{prefix}.weight"),
            ),
            b: Param::zeros(format!("{prefix}.bias"), vec![co]),
            stride,
        }
    }

    pub fn forward(&self, tape: &mut Tape, b: &Bindings, x: Tensor) -> Result<Tensor> {
        let w = b.get(&self.w.name)?;
        let bias = b.get(&self.b.name)?;
        let y = tape.conv1d(x, w, self.stride)?;
        tape.add_channel_bias(y, bias)
    }

    pub fn params(&self) -> Vec<&Param> {
        vec![&self.w, &self.b]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.w, &mut self.b]
    }
}

/// Transposed 1-D convolution, weight (Ci, Co, K), bias (Co).
#[derive(Debug, Clone)]
pub struct ConvT1dLayer {
    pub w: Param,
    pub b: Param,
}

impl ConvT1dLayer {
    pub fn new(
        rng: &mut ChaCha8Rng,
        prefix: &str,
        ci: usize,
        co: usize,
        k: usize,
        kind: InitKind,
    ) -> Self {
        Self {
            w: init_weight(
                rng,
                vec![ci, co, k],
                ci * k,
                co * k,
                kind,
                format!("{prefix}.weight"),
            ),
            b: Param::zeros(format!("{prefix}.bias"), vec![co]),
        }
    }

    pub fn forward(&self, tape: &mut Tape, b: &Bindings, x: Tensor) -> Result<Tensor> {
        let w = b.get(&self.w.name)?;
        let bias = b.get(&self.b.name)?;
        let y = tape.conv_transpose1d(x, w)?;
        tape.add_channel_bias(y, bias)
    }

    pub fn params(&self) -> Vec<&Param> {
        vec![&self.w, &self.b]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.w, &mut self.b]
    }
}

/// Stride-1 2-D convolution, weight (Co, Ci, Kh, Kw), bias (Co).
#[derive(Debug, Clone)]
pub struct Conv2dLayer {
    pub w: Param,
    pub b: Param,
    pub pad: usize,
}

impl Conv2dLayer {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        rng: &mut ChaCha8Rng,
        prefix: &str,
        ci: usize,
        co: usize,
        k: usize,
        pad: usize,
        kind: InitKind,
    ) -> Self {
        Self {
            w: init_weight(
                rng,
                vec![co, ci, k, k],
                ci * k * k,
                co * k * k,
                kind,
                format!("{prefix}.weight"),
            ),
            b: Param::zeros(format!("{prefix}.bias"), vec![co]),
            pad,
        }
    }

    pub fn forward(&self, tape: &mut Tape, b: &Bindings, x: Tensor) -> Result<Tensor> {
        let w = b.get(&self.w.name)?;
        let bias = b.get(&self.b.name)?;
        let y = tape.conv2d(x, w, self.pad)?;
        tape.add_channel_bias(y, bias)
    }

    pub fn params(&self) -> Vec<&Param> {
        vec![&self.w, &self.b]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.w, &mut self.b]
    }
}

/// Batch normalization state. Running statistics are buffers, not parameters;
/// they are folded into checkpoints under reserved names.
#[derive(Debug, Clone)]
pub struct BatchNorm {
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Param,
    pub running_var: Param,
    pub momentum: f64,
    pub eps: f64,
}

/// Convention defaults; unstated upstream, recorded in model metadata.
pub const BN_MOMENTUM: f64 = 0.1;
pub const BN_EPS: f64 = 1e-5;

impl BatchNorm {
    pub fn new(prefix: &str, channels: usize) -> Self {
        Self {
            gamma: Param::ones(format!("{prefix}.gamma"), vec![channels]),
            beta: Param::zeros(format!("{prefix}.beta"), vec![channels]),
            running_mean: Param::zeros(format!("{prefix}.running_mean"), vec![channels]),
            running_var: Param::ones(format!("{prefix}.running_var"), vec![channels]),
            momentum: BN_MOMENTUM,
            eps: BN_EPS,
        }
    }

    /// Train mode: normalize with batch statistics and update running stats.
    pub fn forward_train(&mut self, tape: &mut Tape, b: &Bindings, x: Tensor) -> Result<Tensor> {
        let gamma = b.get(&self.gamma.name)?;
        let beta = b.get(&self.beta.name)?;
        let (y, mean, var) = tape.batch_norm_train(x, gamma, beta, self.eps)?;
        for (r, m) in self.running_mean.data.iter_mut().zip(&mean) {
            *r = (1.0 - self.momentum) * *r + self.momentum * m;
        }
        for (r, v) in self.running_var.data.iter_mut().zip(&var) {
            *r = (1.0 - self.momentum) * *r + self.momentum * v;
        }
        Ok(y)
    }

    /// Eval mode: normalize with running statistics.
    pub fn forward_eval(&self, tape: &mut Tape, b: &Bindings, x: Tensor) -> Result<Tensor> {
        let gamma = b.get(&self.gamma.name)?;
        let beta = b.get(&self.beta.name)?;
        tape.batch_norm_eval(
            x,
            gamma,
            beta,
            &self.running_mean.data,
            &self.running_var.data,
            self.eps,
        )
    }

    /// Learnable parameters: the affine pair only.
    pub fn params(&self) -> Vec<&Param> {
        vec![&self.gamma, &self.beta]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.gamma, &mut self.beta]
    }

    /// Buffers persisted to checkpoints but excluded from parameter counts
    /// and optimizer updates.
    pub fn buffers(&self) -> Vec<&Param> {
        vec![&self.running_mean, &self.running_var]
    }

    pub fn buffers_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.running_mean, &mut self.running_var]
    }
}
