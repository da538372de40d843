//! Simplified diffusion training: draw `t` uniformly, noise the encoded
//! style image, regress the noise.

use std::io::Write;
use std::path::Path;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::denoiser::{DenoiserParams, Tensor, Tensors};
use crate::diffusion::forward_diffuse;
use crate::error::{Error, Result};
use crate::imaging::{LabelGrid, RgbImage};
use crate::latent::{Codec, Latent};
use crate::rng::{normal_latent, Domain, Rng, Seed};
use crate::schedule::NoiseSchedule;
use crate::weights::{save_params, write_atomic};

/// Weight of the per-step loss.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GammaPolicy {
    /// `gamma_t = 1` for every step.
    #[default]
    ConstantOne,
}

impl GammaPolicy {
    pub fn gamma(self, _t: usize) -> f64 {
        match self {
            GammaPolicy::ConstantOne => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
#[derive(Default)]
pub enum OptimizerKind {
    #[default]
    Sgd,
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
}


impl OptimizerKind {
    pub fn adam() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    #[serde(default)]
    pub gamma_policy: GammaPolicy,
    pub seed: u64,
    pub checkpoint_every: usize,
    #[serde(default)]
    pub optimizer: OptimizerKind,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.checkpoint_every == 0 {
            return Err(Error::InvalidArgument("batch size and checkpoint cadence must be positive".into()));
        }
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(Error::InvalidArgument(format!("bad learning rate {}", self.learning_rate)));
        }
        Ok(())
    }
}

/// `gamma * mean((eps_true - eps_pred)^2)`.
pub fn loss(eps_true: &Latent, eps_pred: &Latent, gamma: f64) -> Result<f64> {
    eps_pred.ensure_shape(eps_true.shape())?;
    if gamma.is_nan() || gamma <= 0.0 {
        return Err(Error::InvalidArgument(format!("gamma must be positive, got {gamma}")));
    }
    let sum: f64 = eps_true
        .as_slice()
        .iter()
        .zip(eps_pred.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(gamma * sum / eps_true.len() as f64)
}

/// Parameter update rule with its state.
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    learning_rate: f64,
    step: u64,
    first: Tensors,
    second: Tensors,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, learning_rate: f64) -> Self {
        Self {
            kind,
            learning_rate,
            step: 0,
            first: Tensors::new(),
            second: Tensors::new(),
        }
    }

    pub fn apply(&mut self, params: &mut DenoiserParams, grads: &Tensors) {
        self.step += 1;
        let lr = self.learning_rate;
        match self.kind {
            OptimizerKind::Sgd => {
                for (name, p) in params.tensors_mut() {
                    if let Some(g) = grads.get(name) {
                        for (w, gv) in p.iter_mut().zip(&g.data) {
                            *w -= lr * gv;
                        }
                    }
                }
            }
            OptimizerKind::Adam { beta1, beta2, epsilon } => {
                let bc1 = 1.0 - beta1.powi(self.step as i32);
                let bc2 = 1.0 - beta2.powi(self.step as i32);
                for (name, p) in params.tensors_mut() {
                    let Some(g) = grads.get(name) else { continue };
                    let m = self
                        .first
                        .entry(name.clone())
                        .or_insert_with(|| Tensor::zeros(g.shape.clone()));
                    let v = self
                        .second
                        .entry(name.clone())
                        .or_insert_with(|| Tensor::zeros(g.shape.clone()));
                    for i in 0..p.len() {
                        let gv = g.data[i];
                        m.data[i] = beta1 * m.data[i] + (1.0 - beta1) * gv;
                        v.data[i] = beta2 * v.data[i] + (1.0 - beta2) * gv * gv;
                        let mh = m.data[i] / bc1;
                        let vh = v.data[i] / bc2;
                        p[i] -= lr * mh / (vh.sqrt() + epsilon);
                    }
                }
            }
        }
    }
}

/// One (style image, mask) training pair.
pub type Example = (RgbImage, LabelGrid);

/// Per-sample draws of a training step, in the order they are taken from
/// the RNG: `t` first, then the noise latent.
#[derive(Debug, Clone)]
pub struct Draw {
    pub t: usize,
    pub noise: Latent,
}

/// One optimizer step on `batch`. Returns the batch loss measured before
/// the update.
pub fn training_step(
    params: &mut DenoiserParams,
    batch: &[Example],
    codec: &Codec,
    schedule: &NoiseSchedule,
    gamma: GammaPolicy,
    optimizer: &mut Optimizer,
    rng: &mut Rng,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let latents = batch
        .iter()
        .map(|(img, _)| codec.encode_signed(img))
        .collect::<Result<Vec<_>>>()?;
    let draws: Vec<Draw> = latents
        .iter()
        .map(|z0| {
            let t = rng.random_range(1..=schedule.t_max());
            let noise = normal_latent(rng, z0.shape());
            Draw { t, noise }
        })
        .collect();

    let (loss_value, grads) = batch_loss_and_grads(params, batch, &latents, &draws, schedule, gamma)?;
    optimizer.apply(params, &grads);
    Ok(loss_value)
}

/// Mean loss over the batch and its parameter gradients. Per-sample passes
/// run in parallel; their results are reduced in sample order.
pub fn batch_loss_and_grads(
    params: &DenoiserParams,
    batch: &[Example],
    latents: &[Latent],
    draws: &[Draw],
    schedule: &NoiseSchedule,
    gamma: GammaPolicy,
) -> Result<(f64, Tensors)> {
    let b = batch.len() as f64;
    let per_sample: Vec<(f64, Tensors)> = batch
        .par_iter()
        .zip(latents)
        .zip(draws)
        .map(|(((_, mask), z0), draw)| {
            let z_t = forward_diffuse(z0, draw.t, &draw.noise, schedule)?;
            let features = params.features(&z_t, mask, draw.t)?;
            let cache = params.forward(&features)?;
            let pred = Latent::from_vec(z_t.shape(), cache.output().to_vec())?;
            let g = gamma.gamma(draw.t);
            let l = loss(&draw.noise, &pred, g)?;
            let scale = 2.0 * g / (pred.len() as f64 * b);
            let grad_out: Vec<f64> = pred
                .as_slice()
                .iter()
                .zip(draw.noise.as_slice())
                .map(|(p, e)| scale * (p - e))
                .collect();
            Ok((l, params.backward(&cache, &grad_out)?))
        })
        .collect::<Result<_>>()?;

    let mut total = 0.0;
    let mut grads = params.zeros_like();
    for (l, g) in per_sample {
        total += l;
        for (name, acc) in grads.iter_mut() {
            for (a, v) in acc.data.iter_mut().zip(&g[name].data) {
                *a += v;
            }
        }
    }
    Ok((total / b, grads))
}

#[derive(Debug, Clone)]
pub struct TrainRun {
    /// `(step, params)`, starting with the initial parameters at step 0.
    pub checkpoints: Vec<(usize, DenoiserParams)>,
    /// `(step, batch loss)` for steps `1..=steps`.
    pub history: Vec<(usize, f64)>,
}

pub fn checkpoint_file_name(step: usize) -> String {
    format!("ckpt_{step:06}.iidm")
}

/// Run `config.steps` training steps from `init`. Batches are drawn with
/// replacement from `dataset`. When `out_dir` is given, checkpoints and
/// `loss.csv` are written there.
pub fn train_loop(
    config: &TrainConfig,
    dataset: &[Example],
    init: DenoiserParams,
    codec: &Codec,
    schedule: &NoiseSchedule,
    out_dir: Option<&Path>,
) -> Result<TrainRun> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::InvalidArgument("empty dataset".into()));
    }
    let mut rng = Seed(config.seed).stream(Domain::Training, 0, 0);
    let mut optimizer = Optimizer::new(config.optimizer, config.learning_rate);
    let mut params = init;
    let mut run = TrainRun {
        checkpoints: vec![(0, params.clone())],
        history: Vec::with_capacity(config.steps),
    };
    let save = |step: usize, p: &DenoiserParams| -> Result<()> {
        if let Some(dir) = out_dir {
            let path = dir.join(checkpoint_file_name(step));
            save_params(p, &path).map_err(|e| with_path(e, &path))?;
        }
        Ok(())
    };
    save(0, &params)?;

    for step in 1..=config.steps {
        let batch: Vec<Example> = (0..config.batch_size)
            .map(|_| dataset[rng.random_range(0..dataset.len())].clone())
            .collect();
        let l = training_step(&mut params, &batch, codec, schedule, config.gamma_policy, &mut optimizer, &mut rng)?;
        run.history.push((step, l));
        if step % config.checkpoint_every == 0 || step == config.steps {
            save(step, &params)?;
            run.checkpoints.push((step, params.clone()));
        }
    }

    if let Some(dir) = out_dir {
        let path = dir.join("loss.csv");
        let mut csv = Vec::new();
        write_history(&run.history, &mut csv)?;
        write_atomic(&path, &csv).map_err(|e| with_path(e, &path))?;
    }
    Ok(run)
}

pub fn write_history<W: Write>(history: &[(usize, f64)], mut out: W) -> Result<()> {
    writeln!(out, "step,loss")?;
    for (step, l) in history {
        writeln!(out, "{step},{l:e}")?;
    }
    Ok(())
}

fn with_path(err: Error, path: &Path) -> Error {
    match err {
        Error::Io(e) => Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))),
        other => other,
    }
}
