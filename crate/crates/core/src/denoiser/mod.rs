//! Noise predictors `eps(z_t, mask, t)`.
//!
//! [`DenoiserParams`] is a small perceptron over the flattened latent, the
//! (pooled) one-hot mask and a sinusoidal time embedding, with exact
//! reverse-mode gradients. [`AnalyticGaussian`] is the closed-form
//! conditional expectation for Gaussian data and serves as an oracle.

mod analytic;
mod gradcheck;
mod mlp;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use analytic::{analytic_gaussian_predict, analytic_gaussian_predict_field, AnalyticGaussian, GaussianPrior};
pub use gradcheck::{gradient_check, GradCheckReport};
pub use mlp::{time_embedding, ForwardCache};

use crate::error::{Error, Result};
use crate::imaging::LabelGrid;
use crate::latent::{Latent, Shape};

pub trait NoisePredictor: Sync {
    fn predict(&self, z_t: &Latent, mask: &LabelGrid, t: usize) -> Result<Latent>;
}

/// Always predicts zero noise.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroPredictor;

impl NoisePredictor for ZeroPredictor {
    fn predict(&self, z_t: &Latent, _mask: &LabelGrid, _t: usize) -> Result<Latent> {
        Ok(Latent::zeros(z_t.shape()))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    #[default]
    Tanh,
    /// No nonlinearity; only useful for tests of linear behaviour.
    Identity,
}

impl Activation {
    pub(crate) fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the activation's output.
    pub(crate) fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Identity => 1.0,
        }
    }
}

/// Describes the perceptron; serialized as the weight file descriptor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub kind: String,
    pub latent: Shape,
    pub num_labels: usize,
    pub time_dim: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
}

impl Architecture {
    pub const KIND: &'static str = "mlp";

    /// Three hidden layers of width 128, tanh, 32-dim time embedding.
    pub fn standard(latent: Shape, num_labels: usize) -> Self {
        Self {
            kind: Self::KIND.into(),
            latent,
            num_labels,
            time_dim: 32,
            hidden: vec![128, 128, 128],
            activation: Activation::Tanh,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.latent.len() + self.num_labels * self.latent.height * self.latent.width + self.time_dim
    }

    pub fn output_dim(&self) -> usize {
        self.latent.len()
    }

    /// `(fan_in, fan_out)` per layer.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = vec![self.input_dim()];
        dims.extend(&self.hidden);
        dims.push(self.output_dim());
        dims.windows(2).map(|w| (w[0], w[1])).collect()
    }

    pub fn num_layers(&self) -> usize {
        self.hidden.len() + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind != Self::KIND {
            return Err(Error::ArchitectureMismatch(format!("unknown kind {:?}", self.kind)));
        }
        if !self.time_dim.is_multiple_of(2) {
            return Err(Error::ArchitectureMismatch("time_dim must be even".into()));
        }
        if self.latent.is_empty() || self.num_labels == 0 || self.hidden.contains(&0) {
            return Err(Error::ArchitectureMismatch("zero-sized dimension".into()));
        }
        Ok(())
    }
}

pub fn weight_name(layer: usize) -> String {
    format!("layer{layer}.weight")
}

pub fn bias_name(layer: usize) -> String {
    format!("layer{layer}.bias")
}

/// Dense real tensor, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.iter().product::<usize>() != data.len() {
            return Err(Error::ShapeMismatch {
                expected: shape,
                actual: vec![data.len()],
            });
        }
        Ok(Self { shape, data })
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Name -> tensor, iterated in sorted name order.
pub type Tensors = BTreeMap<String, Tensor>;

#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserParams {
    arch: Architecture,
    tensors: Tensors,
}

impl DenoiserParams {
    pub fn new(arch: Architecture, tensors: Tensors) -> Result<Self> {
        arch.validate()?;
        let expected = expected_shapes(&arch);
        if expected.len() != tensors.len() {
            return Err(Error::ArchitectureMismatch(format!(
                "expected {} tensors, got {}",
                expected.len(),
                tensors.len()
            )));
        }
        for (name, shape) in &expected {
            let t = tensors
                .get(name)
                .ok_or_else(|| Error::ArchitectureMismatch(format!("missing tensor {name}")))?;
            if &t.shape != shape {
                return Err(Error::ArchitectureMismatch(format!(
                    "{name}: expected shape {shape:?}, got {:?}",
                    t.shape
                )));
            }
            if t.data.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} has non-finite values")));
            }
        }
        Ok(Self { arch, tensors })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn tensors(&self) -> &Tensors {
        &self.tensors
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    /// Mutable access for optimizers and tests. Shapes must be preserved.
    pub fn tensors_mut(&mut self) -> impl Iterator<Item = (&String, &mut Vec<f64>)> {
        self.tensors.iter_mut().map(|(k, t)| (k, &mut t.data))
    }

    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        self.tensors.get_mut(name).map(|t| t.data.as_mut_slice())
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    pub fn into_parts(self) -> (Architecture, Tensors) {
        (self.arch, self.tensors)
    }

    /// Zero tensors with this architecture's names and shapes.
    pub fn zeros_like(&self) -> Tensors {
        self.tensors
            .iter()
            .map(|(k, t)| (k.clone(), Tensor::zeros(t.shape.clone())))
            .collect()
    }
}

pub(crate) fn expected_shapes(arch: &Architecture) -> BTreeMap<String, Vec<usize>> {
    arch.layer_dims()
        .into_iter()
        .enumerate()
        .flat_map(|(i, (fan_in, fan_out))| {
            [(weight_name(i), vec![fan_out, fan_in]), (bias_name(i), vec![fan_out])]
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_architecture_dims() {
        let arch = Architecture::standard(Shape::new(3, 4, 4), 3);
        assert_eq!(arch.input_dim(), 48 + 48 + 32);
        assert_eq!(arch.layer_dims(), vec![(128, 128), (128, 128), (128, 128), (128, 48)]);
        let shapes = expected_shapes(&arch);
        assert_eq!(shapes["layer3.weight"], vec![48, 128]);
        assert_eq!(shapes.len(), 8);
    }

    #[test]
    fn rejects_wrong_tensors() {
        let arch = Architecture {
            hidden: vec![],
            time_dim: 0,
            ..Architecture::standard(Shape::new(1, 1, 1), 1)
        };
        let mut tensors = Tensors::new();
        tensors.insert(weight_name(0), Tensor::zeros(vec![1, 2]));
        assert!(DenoiserParams::new(arch.clone(), tensors.clone()).is_err());
        tensors.insert(bias_name(0), Tensor::zeros(vec![2]));
        assert!(DenoiserParams::new(arch.clone(), tensors.clone()).is_err());
        tensors.insert(bias_name(0), Tensor::zeros(vec![1]));
        assert!(DenoiserParams::new(arch, tensors).is_ok());
    }
}
