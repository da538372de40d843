use rand::Rng as _;

use super::{bias_name, expected_shapes, weight_name, Architecture, DenoiserParams, NoisePredictor, Tensor, Tensors};
use crate::error::{Error, Result};
use crate::imaging::LabelGrid;
use crate::latent::Latent;
use crate::rng::{Domain, Seed};

/// Sinusoidal features of `t`: `dim / 2` sines followed by `dim / 2` cosines
/// at geometrically spaced frequencies `10000^(-i / (dim/2))`.
pub fn time_embedding(t: usize, dim: usize) -> Vec<f64> {
    let half = dim / 2;
    let mut out = vec![0.0; dim];
    for i in 0..half {
        let freq = (-(10_000f64.ln()) * i as f64 / half as f64).exp();
        let arg = t as f64 * freq;
        out[i] = arg.sin();
        out[half + i] = arg.cos();
    }
    out
}

/// Layer inputs recorded by the forward pass. `activations[0]` is the input
/// vector and `activations[i]` the (post-activation) input of layer `i`;
/// the last entry is the network output.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub activations: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("cache holds at least the input")
    }
}

impl DenoiserParams {
    /// Fan-in scaled uniform init `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`, zero
    /// biases. With `zero_final` the output layer starts at zero so the
    /// network is the zero predictor.
    pub fn init(arch: Architecture, seed: Seed, zero_final: bool) -> Result<Self> {
        arch.validate()?;
        let mut tensors = Tensors::new();
        let dims = arch.layer_dims();
        let last = dims.len() - 1;
        for (i, &(fan_in, fan_out)) in dims.iter().enumerate() {
            let mut rng = seed.stream(Domain::Init, i as u64, 0);
            let bound = 1.0 / (fan_in as f64).sqrt();
            let w: Vec<f64> = if zero_final && i == last {
                vec![0.0; fan_in * fan_out]
            } else {
                (0..fan_in * fan_out).map(|_| rng.random_range(-bound..bound)).collect()
            };
            tensors.insert(weight_name(i), Tensor::new(vec![fan_out, fan_in], w)?);
            tensors.insert(bias_name(i), Tensor::zeros(vec![fan_out]));
        }
        debug_assert_eq!(tensors.len(), expected_shapes(&arch).len());
        Self::new(arch, tensors)
    }

    /// Concatenate flattened latent, label volume and time embedding.
    pub fn features(&self, z_t: &Latent, mask: &LabelGrid, t: usize) -> Result<Vec<f64>> {
        let arch = &self.arch;
        z_t.ensure_shape(arch.latent)?;
        let lat = arch.latent;
        if !mask.width().is_multiple_of(lat.width) || !mask.height().is_multiple_of(lat.height) {
            return Err(Error::ShapeMismatch {
                expected: vec![lat.height, lat.width],
                actual: vec![mask.height(), mask.width()],
            });
        }
        let factor = mask.width() / lat.width;
        if mask.height() / lat.height != factor {
            return Err(Error::ShapeMismatch {
                expected: vec![lat.height * factor, lat.width * factor],
                actual: vec![mask.height(), mask.width()],
            });
        }
        let volume = mask.label_volume(arch.num_labels, factor)?;
        let mut features = Vec::with_capacity(arch.input_dim());
        features.extend_from_slice(z_t.as_slice());
        features.extend_from_slice(volume.as_slice());
        features.extend(time_embedding(t, arch.time_dim));
        Ok(features)
    }

    pub fn forward(&self, input: &[f64]) -> Result<ForwardCache> {
        if input.len() != self.arch.input_dim() {
            return Err(Error::ShapeMismatch {
                expected: vec![self.arch.input_dim()],
                actual: vec![input.len()],
            });
        }
        let n_layers = self.arch.num_layers();
        let mut activations = Vec::with_capacity(n_layers + 1);
        activations.push(input.to_vec());
        for i in 0..n_layers {
            let w = &self.tensors[&weight_name(i)];
            let b = &self.tensors[&bias_name(i)].data;
            let (fan_out, fan_in) = (w.shape[0], w.shape[1]);
            let x = activations.last().unwrap();
            let mut y = b.clone();
            for (o, yo) in y.iter_mut().enumerate() {
                let row = &w.data[o * fan_in..(o + 1) * fan_in];
                *yo += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
            }
            debug_assert_eq!(y.len(), fan_out);
            if i + 1 < n_layers {
                let act = self.arch.activation;
                y.iter_mut().for_each(|v| *v = act.apply(*v));
            }
            activations.push(y);
        }
        Ok(ForwardCache { activations })
    }

    /// Parameter gradients for upstream gradient `grad_output` (dLoss/dOutput).
    pub fn backward(&self, cache: &ForwardCache, grad_output: &[f64]) -> Result<Tensors> {
        let mut grads = Tensors::new();
        self.backward_into(cache, grad_output, &mut grads)?;
        Ok(grads)
    }

    /// Like [`DenoiserParams::backward`] but accumulates into `grads`,
    /// creating zeroed entries as needed.
    pub fn backward_into(&self, cache: &ForwardCache, grad_output: &[f64], grads: &mut Tensors) -> Result<()> {
        let n_layers = self.arch.num_layers();
        if cache.activations.len() != n_layers + 1 {
            return Err(Error::InvalidArgument("forward cache does not match architecture".into()));
        }
        if grad_output.len() != self.arch.output_dim() {
            return Err(Error::ShapeMismatch {
                expected: vec![self.arch.output_dim()],
                actual: vec![grad_output.len()],
            });
        }
        let mut delta = grad_output.to_vec();
        for i in (0..n_layers).rev() {
            let w = &self.tensors[&weight_name(i)];
            let fan_in = w.shape[1];
            let x = &cache.activations[i];

            let gw = grads
                .entry(weight_name(i))
                .or_insert_with(|| Tensor::zeros(w.shape.clone()));
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let row = &mut gw.data[o * fan_in..(o + 1) * fan_in];
                for (g, &xi) in row.iter_mut().zip(x) {
                    *g += d * xi;
                }
            }
            let gb = grads
                .entry(bias_name(i))
                .or_insert_with(|| Tensor::zeros(vec![delta.len()]));
            for (g, &d) in gb.data.iter_mut().zip(&delta) {
                *g += d;
            }

            if i > 0 {
                let mut prev = vec![0.0; fan_in];
                for (o, &d) in delta.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    let row = &w.data[o * fan_in..(o + 1) * fan_in];
                    for (p, &wv) in prev.iter_mut().zip(row) {
                        *p += d * wv;
                    }
                }
                let act = self.arch.activation;
                for (p, &a) in prev.iter_mut().zip(x) {
                    *p *= act.derivative_from_output(a);
                }
                delta = prev;
            }
        }
        Ok(())
    }
}

impl NoisePredictor for DenoiserParams {
    fn predict(&self, z_t: &Latent, mask: &LabelGrid, t: usize) -> Result<Latent> {
        let features = self.features(z_t, mask, t)?;
        let cache = self.forward(&features)?;
        Latent::from_vec(z_t.shape(), cache.output().to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoiser::Activation;
    use crate::latent::Shape;

    fn linear_arch(n: usize, hidden: Vec<usize>) -> Architecture {
        // latent n x 1 x 1, one label, no time embedding: input dim n + 1
        Architecture {
            kind: Architecture::KIND.into(),
            latent: Shape::new(n, 1, 1),
            num_labels: 1,
            time_dim: 0,
            hidden,
            activation: Activation::Identity,
        }
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let arch = linear_arch(2, vec![]);
        let mut p = DenoiserParams::init(arch, Seed(0), false).unwrap();
        // weight is 2 x 3; identity on the latent part, zero on the label
        p.tensor_mut("layer0.weight").unwrap().copy_from_slice(&[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let out = p.forward(&[0.3, -1.5, 1.0]).unwrap();
        assert_eq!(out.output(), &[0.3, -1.5]);
    }

    #[test]
    fn stacked_linear_layers_compose() {
        let arch = linear_arch(2, vec![4]);
        let p = DenoiserParams::init(arch, Seed(1), false).unwrap();
        let w1 = &p.tensor("layer0.weight").unwrap().data; // 4 x 3
        let w2 = &p.tensor("layer1.weight").unwrap().data; // 2 x 4
        let mut w = vec![0.0; 6];
        for o in 0..2 {
            for i in 0..3 {
                w[o * 3 + i] = (0..4).map(|k| w2[o * 4 + k] * w1[k * 3 + i]).sum();
            }
        }
        let single = {
            let mut q = DenoiserParams::init(linear_arch(2, vec![]), Seed(2), false).unwrap();
            q.tensor_mut("layer0.weight").unwrap().copy_from_slice(&w);
            q
        };
        let x = [0.7, -0.2, 1.0];
        let a = p.forward(&x).unwrap();
        let b = single.forward(&x).unwrap();
        for (u, v) in a.output().iter().zip(b.output()) {
            assert!((u - v).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_final_layer_predicts_zero() {
        let arch = Architecture::standard(Shape::new(3, 2, 2), 2);
        let p = DenoiserParams::init(arch, Seed(3), true).unwrap();
        let z = Latent::filled(Shape::new(3, 2, 2), 0.7);
        let mask = LabelGrid::from_fn(2, 2, |x, _| x as u32);
        let eps = p.predict(&z, &mask, 500).unwrap();
        assert!(eps.as_slice().iter().all(|&v| v == 0.0));
        assert_eq!(eps.shape(), z.shape());
        assert_eq!(p.predict(&z, &mask, 500).unwrap(), eps);
    }

    #[test]
    fn features_layout_and_errors() {
        let arch = Architecture {
            time_dim: 4,
            ..Architecture::standard(Shape::new(1, 1, 2), 2)
        };
        let p = DenoiserParams::init(arch, Seed(4), true).unwrap();
        let z = Latent::from_vec(Shape::new(1, 1, 2), vec![0.5, -0.5]).unwrap();
        let mask = LabelGrid::from_fn(2, 1, |x, _| x as u32);
        let f = p.features(&z, &mask, 0).unwrap();
        assert_eq!(f, vec![0.5, -0.5, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 1.0]);
        assert!(p.features(&Latent::zeros(Shape::new(1, 1, 3)), &mask, 1).is_err());
        assert!(p.features(&z, &LabelGrid::from_fn(3, 1, |_, _| 0), 1).is_err());
        assert!(p.features(&z, &LabelGrid::from_fn(2, 1, |_, _| 5), 1).is_err());
        assert!(p.forward(&[0.0; 3]).is_err());
    }

    #[test]
    fn time_embedding_shape() {
        let e = time_embedding(0, 32);
        assert_eq!(&e[..16], &[0.0; 16]);
        assert_eq!(&e[16..], &[1.0; 16]);
        let e = time_embedding(320, 32);
        assert!((e[0] - 320f64.sin()).abs() < 1e-15);
        assert!((e[16] - 320f64.cos()).abs() < 1e-15);
        assert_ne!(time_embedding(320, 32), time_embedding(321, 32));
    }
}
