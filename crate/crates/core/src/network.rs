//! Bias-free fully connected networks and their forward pass.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analog::{Backend, BackendError};
use crate::math::{quantize, Mat, MathError, Quantizer, Rng};

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("invalid topology: {0}")]
    Topology(String),
    #[error(transparent)]
    Math(#[from] MathError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("input has {got} rows, network expects {expected}")]
    Input { expected: usize, got: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    /// f(a) = a. Not a useful hidden nonlinearity; handy for checking the
    /// learning rules in closed form.
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, a: f64) -> f64 {
        match self {
            Activation::Relu => a.max(0.0),
            Activation::Tanh => a.tanh(),
            Activation::Identity => a,
        }
    }

    /// Derivative; ReLU uses 0 at exactly 0.
    #[inline]
    pub fn derivative(self, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = a.tanh();
                1.0 - t * t
            }
            Activation::Identity => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Identity => "identity",
        }
    }
}

/// Layer widths `[d_0, d_1, …, d_N]`: input, hidden layers, classes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topology {
    pub layer_dims: Vec<usize>,
    pub activation: Activation,
}

impl Topology {
    pub fn new(layer_dims: Vec<usize>, activation: Activation) -> Result<Self, NetworkError> {
        let t = Topology { layer_dims, activation };
        t.validate()?;
        Ok(t)
    }

    /// `depth` weight layers: `input → width × (depth-1) → classes`.
    pub fn uniform(
        input: usize,
        width: usize,
        depth: usize,
        classes: usize,
        activation: Activation,
    ) -> Result<Self, NetworkError> {
        if depth == 0 {
            return Err(NetworkError::Topology("depth must be at least 1".into()));
        }
        let mut dims = vec![input];
        dims.extend(std::iter::repeat_n(width, depth - 1));
        dims.push(classes);
        Topology::new(dims, activation)
    }

    pub fn validate(&self) -> Result<(), NetworkError> {
        if self.layer_dims.len() < 2 {
            return Err(NetworkError::Topology("need at least input and output dims".into()));
        }
        if let Some(pos) = self.layer_dims.iter().position(|&d| d == 0) {
            return Err(NetworkError::Topology(format!("layer_dims[{pos}] is zero")));
        }
        Ok(())
    }

    /// Number of weight layers N.
    pub fn depth(&self) -> usize {
        self.layer_dims.len() - 1
    }

    pub fn input(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn classes(&self) -> usize {
        *self.layer_dims.last().expect("validated")
    }

    /// Hidden widths `d_1 … d_{N-1}`.
    pub fn hidden(&self) -> &[usize] {
        &self.layer_dims[1..self.layer_dims.len() - 1]
    }

    pub fn max_hidden(&self) -> usize {
        self.hidden().iter().copied().max().unwrap_or(0)
    }

    /// Shape `(d_i, d_{i-1})` of W_i, `i` 1-based.
    pub fn weight_shape(&self, i: usize) -> (usize, usize) {
        (self.layer_dims[i], self.layer_dims[i - 1])
    }

    pub fn parameter_count(&self) -> usize {
        (1..=self.depth()).map(|i| self.layer_dims[i] * self.layer_dims[i - 1]).sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    topology: Topology,
    weights: Vec<Mat>,
}

impl Mlp {
    pub fn from_weights(topology: Topology, weights: Vec<Mat>) -> Result<Self, NetworkError> {
        topology.validate()?;
        if weights.len() != topology.depth() {
            return Err(NetworkError::Topology(format!(
                "{} weight matrices for depth {}",
                weights.len(),
                topology.depth()
            )));
        }
        for (i, w) in weights.iter().enumerate() {
            if w.shape() != topology.weight_shape(i + 1) {
                return Err(NetworkError::Topology(format!(
                    "W_{} has shape {:?}, expected {:?}",
                    i + 1,
                    w.shape(),
                    topology.weight_shape(i + 1)
                )));
            }
            if !w.is_finite() {
                return Err(NetworkError::Topology(format!("W_{} has non-finite entries", i + 1)));
            }
        }
        Ok(Mlp { topology, weights })
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn depth(&self) -> usize {
        self.weights.len()
    }

    /// W_i, 1-based.
    pub fn weight(&self, i: usize) -> &Mat {
        &self.weights[i - 1]
    }

    pub fn weights(&self) -> &[Mat] {
        &self.weights
    }

    pub(crate) fn set_weight(&mut self, i: usize, w: Mat) {
        debug_assert_eq!(w.shape(), self.weights[i - 1].shape());
        self.weights[i - 1] = w;
    }
}

/// Xavier/Glorot uniform initialization.
pub fn xavier_init(topology: &Topology, rng: &mut Rng) -> Mlp {
    let weights = (1..=topology.depth())
        .map(|i| {
            let (fan_out, fan_in) = topology.weight_shape(i);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            Mat::from_fn(fan_out, fan_in, |_, _| rng.uniform_in(-bound, bound))
        })
        .collect();
    Mlp { topology: topology.clone(), weights }
}

/// Pre- and post-activation record of one forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardTrace {
    /// `pre[i-1]` is a_i for i in 1..=N.
    pre: Vec<Mat>,
    /// `post[i]` is h_i for i in 0..N (h_0 is the input).
    post: Vec<Mat>,
}

impl ForwardTrace {
    /// a_i, 1-based.
    pub fn pre(&self, i: usize) -> &Mat {
        &self.pre[i - 1]
    }

    /// h_i for 0 ≤ i < N.
    pub fn post(&self, i: usize) -> &Mat {
        &self.post[i]
    }

    pub fn logits(&self) -> &Mat {
        self.pre.last().expect("non-empty trace")
    }

    pub fn depth(&self) -> usize {
        self.pre.len()
    }

    pub fn batch(&self) -> usize {
        self.post[0].cols()
    }
}

pub fn forward(mlp: &Mlp, input: &Mat, backend: &mut Backend) -> Result<ForwardTrace, NetworkError> {
    forward_with(mlp, input, backend, None)
}

/// Forward pass with an optional activation quantizer applied to every
/// hidden h_i (the input and logits are left alone).
pub fn forward_with(
    mlp: &Mlp,
    input: &Mat,
    backend: &mut Backend,
    activation_q: Option<&Quantizer>,
) -> Result<ForwardTrace, NetworkError> {
    let topo = &mlp.topology;
    if input.rows() != topo.input() {
        return Err(NetworkError::Input { expected: topo.input(), got: input.rows() });
    }
    let n = mlp.depth();
    let mut pre = Vec::with_capacity(n);
    let mut post = Vec::with_capacity(n);
    post.push(input.clone());
    for i in 1..=n {
        let a = backend.matvec(i, mlp.weight(i), &post[i - 1])?;
        if i < n {
            let mut h = a.map(|v| topo.activation.apply(v));
            if let Some(q) = activation_q {
                h = quantize(&h, q, None)?;
            }
            post.push(h);
        }
        pre.push(a);
    }
    Ok(ForwardTrace { pre, post })
}

/// Argmax of the logits per batch column; ties go to the lowest class index.
pub fn predict(trace: &ForwardTrace) -> Vec<usize> {
    argmax_columns(trace.logits())
}

pub(crate) fn argmax_columns(m: &Mat) -> Vec<usize> {
    let mut best = vec![0usize; m.cols()];
    let mut best_v = m.row(0).to_vec();
    for i in 1..m.rows() {
        for (j, &v) in m.row(i).iter().enumerate() {
            if v > best_v[j] {
                best_v[j] = v;
                best[j] = i;
            }
        }
    }
    best
}
