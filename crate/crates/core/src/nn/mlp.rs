use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Node, Tape};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Softplus,
    Relu,
}

/// Fully connected network: `depth` hidden layers of `width` units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub output_dim: usize,
    pub width: usize,
    pub depth: usize,
    pub activation: Activation,
}

impl MlpSpec {
    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 || self.width == 0 || self.input_dim == 0 || self.output_dim == 0 {
            return Err(Error::Config(format!("degenerate mlp spec {self:?}")));
        }
        Ok(())
    }

    /// `(out, in)` for every affine layer, hidden layers first.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut shapes = vec![(self.width, self.input_dim)];
        shapes.extend((1..self.depth).map(|_| (self.width, self.width)));
        shapes.push((self.output_dim, self.width));
        shapes
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    /// out×in
    pub weight: Matrix,
    /// out×1
    pub bias: Matrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub spec: MlpSpec,
    pub layers: Vec<Dense>,
}

/// An [`Mlp`] whose parameters have been placed on a tape.
pub struct BoundMlp {
    layers: Vec<(Node, Node)>,
    activation: Activation,
}

/// Weights and biases uniform in `±sqrt(1/fan_in)`.
pub fn init_mlp(spec: MlpSpec, seed: u64) -> Result<Mlp> {
    Mlp::init(spec, &mut ChaCha8Rng::seed_from_u64(seed))
}

impl Mlp {
    pub fn init(spec: MlpSpec, rng: &mut impl Rng) -> Result<Self> {
        spec.validate()?;
        let layers = spec
            .layer_shapes()
            .into_iter()
            .map(|(out, fan_in)| {
                let bound = (1.0 / fan_in as f64).sqrt();
                let weight = Matrix::from_fn(out, fan_in, |_, _| rng.gen_range(-bound..bound));
                let bias = Matrix::from_fn(out, 1, |_, _| rng.gen_range(-bound..bound));
                Dense { weight, bias }
            })
            .collect();
        Ok(Mlp { spec, layers })
    }

    pub fn bind(&self, tape: &mut Tape) -> BoundMlp {
        let layers = self
            .layers
            .iter()
            .map(|l| (tape.leaf(l.weight.clone()), tape.leaf(l.bias.clone())))
            .collect();
        BoundMlp { layers, activation: self.spec.activation }
    }

    pub fn forward(&self, tape: &mut Tape, x: Node) -> Result<Node> {
        self.bind(tape).forward(tape, x)
    }

    /// Parameters in `[w0, b0, w1, b1, ...]` order.
    pub fn params(&self) -> Vec<&Matrix> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Matrix> {
        self.layers.iter_mut().flat_map(|l| [&mut l.weight, &mut l.bias]).collect()
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|m| m.rows() * m.cols()).sum()
    }
}

impl BoundMlp {
    /// Affine layers with the activation between them; the last layer is linear.
    /// Columns of `x` are samples.
    pub fn forward(&self, tape: &mut Tape, x: Node) -> Result<Node> {
        let mut h = x;
        let last = self.layers.len() - 1;
        for (i, &(w, b)) in self.layers.iter().enumerate() {
            let z = tape.matmul(w, h)?;
            h = tape.add_bias(z, b)?;
            if i != last {
                h = match self.activation {
                    Activation::Softplus => tape.softplus(h),
                    Activation::Relu => tape.relu(h),
                };
            }
        }
        Ok(h)
    }

    pub fn nodes(&self) -> Vec<Node> {
        self.layers.iter().flat_map(|&(w, b)| [w, b]).collect()
    }
}
