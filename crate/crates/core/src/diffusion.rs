//! Forward noising, the image-to-image start point and ancestral sampling.
//!
//! Every stochastic draw comes from a [`Seed`] stream keyed by
//! `(round, step)`: the start noise of round `k` is `(StartNoise, k, 0)` and
//! the noise injected at step `t` is `(StepNoise, k, t)`.

use crate::denoiser::NoisePredictor;
use crate::error::{Error, Result};
use crate::imaging::{LabelGrid, RgbImage};
use crate::latent::{Codec, Latent};
use crate::rng::{normal_latent, Domain, Seed};
use crate::schedule::{NoiseSchedule, SamplerMode};

/// Default start step of the image-to-image chain.
pub const DEFAULT_T_START: usize = 320;

/// Segmentation mask plus style reference, same spatial size.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisConditions {
    mask: LabelGrid,
    style_ref: RgbImage,
}

impl SynthesisConditions {
    pub fn new(mask: LabelGrid, style_ref: RgbImage) -> Result<Self> {
        if mask.width() != style_ref.width() || mask.height() != style_ref.height() {
            return Err(Error::ShapeMismatch {
                expected: vec![style_ref.height(), style_ref.width()],
                actual: vec![mask.height(), mask.width()],
            });
        }
        Ok(Self { mask, style_ref })
    }

    pub fn mask(&self) -> &LabelGrid {
        &self.mask
    }

    pub fn style_ref(&self) -> &RgbImage {
        &self.style_ref
    }
}

/// `sqrt(ab_t) z0 + sqrt(1 - ab_t) noise`.
pub fn forward_diffuse(z0: &Latent, t: usize, noise: &Latent, schedule: &NoiseSchedule) -> Result<Latent> {
    schedule.check_t(t)?;
    let ab = schedule.alpha_bar(t);
    z0.lincomb(ab.sqrt(), noise, (1.0 - ab).sqrt())
}

/// Start point of the image-to-image chain: the style latent diffused to
/// `t_start`. Identical to [`forward_diffuse`].
pub fn i2i_start(style_latent: &Latent, t_start: usize, noise: &Latent, schedule: &NoiseSchedule) -> Result<Latent> {
    forward_diffuse(style_latent, t_start, noise, schedule)
}

/// `gamma z_t - beta eps_pred + sigma noise` with the coefficients of `mode`.
pub fn reverse_step(
    z_t: &Latent,
    eps_pred: &Latent,
    t: usize,
    noise: &Latent,
    schedule: &NoiseSchedule,
    mode: SamplerMode,
) -> Result<Latent> {
    let c = schedule.coefficients_at(t, mode)?;
    eps_pred.ensure_shape(z_t.shape())?;
    noise.ensure_shape(z_t.shape())?;
    let data = z_t
        .as_slice()
        .iter()
        .zip(eps_pred.as_slice())
        .zip(noise.as_slice())
        .map(|((&z, &e), &n)| {
            let mut v = c.gamma_tilde * z - c.beta_tilde * e;
            if c.sigma_tilde != 0.0 {
                v += c.sigma_tilde * n;
            }
            v
        })
        .collect();
    Latent::from_vec(z_t.shape(), data)
}

/// Run reverse steps `t_start, ..., 1` from `z_start`.
#[allow(clippy::too_many_arguments)]
pub fn denoise_chain(
    denoiser: &dyn NoisePredictor,
    z_start: Latent,
    mask: &LabelGrid,
    t_start: usize,
    schedule: &NoiseSchedule,
    mode: SamplerMode,
    seed: Seed,
    round: u64,
) -> Result<Latent> {
    if t_start > schedule.t_max() {
        return Err(Error::TimestepOutOfRange {
            t: t_start,
            t_max: schedule.t_max(),
        });
    }
    let shape = z_start.shape();
    let zeros = Latent::zeros(shape);
    let mut z = z_start;
    for t in (1..=t_start).rev() {
        let eps = denoiser.predict(&z, mask, t)?;
        let sigma = schedule.coefficients_at(t, mode)?.sigma_tilde;
        let noise = if sigma == 0.0 {
            None
        } else {
            Some(normal_latent(&mut seed.stream(Domain::StepNoise, round, t as u64), shape))
        };
        z = reverse_step(&z, &eps, t, noise.as_ref().unwrap_or(&zeros), schedule, mode)?;
    }
    Ok(z)
}

/// Diffuse `z0` to `t_start` with the round's start noise, then denoise to
/// `t = 1`. `t_start = 0` returns `z0` untouched.
#[allow(clippy::too_many_arguments)]
pub fn diffuse_and_denoise(
    denoiser: &dyn NoisePredictor,
    z0: &Latent,
    mask: &LabelGrid,
    schedule: &NoiseSchedule,
    t_start: usize,
    mode: SamplerMode,
    seed: Seed,
    round: u64,
) -> Result<Latent> {
    if t_start == 0 {
        return Ok(z0.clone());
    }
    let noise = normal_latent(&mut seed.stream(Domain::StartNoise, round, 0), z0.shape());
    let z_start = i2i_start(z0, t_start, &noise, schedule)?;
    denoise_chain(denoiser, z_start, mask, t_start, schedule, mode, seed, round)
}

/// One image-to-image synthesis: encode the style reference, diffuse to
/// `t_start`, denoise under the mask. Returns the final latent.
pub fn sample(
    denoiser: &dyn NoisePredictor,
    conditions: &SynthesisConditions,
    codec: &Codec,
    schedule: &NoiseSchedule,
    t_start: usize,
    mode: SamplerMode,
    seed: Seed,
) -> Result<Latent> {
    let z0 = codec.encode_signed(conditions.style_ref())?;
    diffuse_and_denoise(denoiser, &z0, conditions.mask(), schedule, t_start, mode, seed, 0)
}
