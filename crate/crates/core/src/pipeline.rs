//! Inference: checkpoint ensembling and the multi-round synthesis loop with
//! optional color-transfer compensation between rounds.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::denoiser::{DenoiserParams, NoisePredictor};
use crate::diffusion::{diffuse_and_denoise, SynthesisConditions, DEFAULT_T_START};
use crate::error::{Error, Result};
use crate::imaging::{color_transfer, RgbImage};
use crate::latent::{Codec, CodecKind};
use crate::rng::Seed;
use crate::schedule::{NoiseSchedule, SamplerMode};

pub const DEFAULT_ROUNDS: usize = 3;

fn default_t_start() -> usize {
    DEFAULT_T_START
}

fn default_rounds() -> usize {
    DEFAULT_ROUNDS
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    #[serde(default = "default_t_start")]
    pub t_start: usize,
    #[serde(default = "default_rounds")]
    pub rounds: usize,
    #[serde(default = "default_true")]
    pub color_transfer: bool,
    #[serde(default)]
    pub checkpoints: Vec<PathBuf>,
    #[serde(default)]
    pub mode: SamplerMode,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub codec: CodecKind,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            t_start: DEFAULT_T_START,
            rounds: DEFAULT_ROUNDS,
            color_transfer: true,
            checkpoints: Vec::new(),
            mode: SamplerMode::default(),
            seed: 0,
            codec: CodecKind::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self, schedule: &NoiseSchedule) -> Result<()> {
        if self.rounds == 0 {
            return Err(Error::InvalidArgument("at least one round is required".into()));
        }
        if self.t_start == 0 || self.t_start > schedule.t_max() {
            return Err(Error::TimestepOutOfRange {
                t: self.t_start,
                t_max: schedule.t_max(),
            });
        }
        Ok(())
    }
}

/// Elementwise mean of parameter sets. Each element is summed in input
/// order, so the result does not depend on anything but that order; for two
/// sets it is `(a + b) / 2`, which is symmetric.
pub fn ensemble_average(sets: &[DenoiserParams]) -> Result<DenoiserParams> {
    let (first, rest) = sets
        .split_first()
        .ok_or_else(|| Error::InvalidArgument("nothing to average".into()))?;
    for other in rest {
        if other.architecture() != first.architecture() {
            return Err(Error::ArchitectureMismatch(format!(
                "{:?} vs {:?}",
                first.architecture(),
                other.architecture()
            )));
        }
    }
    let n = sets.len() as f64;
    let mut out = first.clone();
    for (name, acc) in out.tensors_mut() {
        for other in rest {
            let t = other.tensor(name).expect("same architecture, same tensors");
            for (a, v) in acc.iter_mut().zip(&t.data) {
                *a += v;
            }
        }
        for a in acc.iter_mut() {
            *a /= n;
        }
    }
    Ok(out)
}

/// One diffuse-then-denoise cycle on `input` using the noise streams of
/// `round` (0-based). Returns the decoded image clamped to `[0, 1]`.
pub fn synthesis_round(
    config: &PipelineConfig,
    input: &RgbImage,
    conditions: &SynthesisConditions,
    schedule: &NoiseSchedule,
    codec: &Codec,
    denoiser: &dyn NoisePredictor,
    round: u64,
) -> Result<RgbImage> {
    let z0 = codec.encode_signed(input)?;
    let z = diffuse_and_denoise(
        denoiser,
        &z0,
        conditions.mask(),
        schedule,
        config.t_start,
        config.mode,
        Seed(config.seed),
        round,
    )?;
    Ok(codec.decode_signed(&z)?.clamp_unit())
}

/// All intermediate outputs `X_G^1, ..., X_G^K`. Round 1 starts from the
/// style reference; later rounds start from the previous output, color
/// transferred towards the reference first when enabled.
pub fn run_rounds(
    config: &PipelineConfig,
    conditions: &SynthesisConditions,
    schedule: &NoiseSchedule,
    codec: &Codec,
    denoiser: &dyn NoisePredictor,
) -> Result<Vec<RgbImage>> {
    config.validate(schedule)?;
    let mut outputs: Vec<RgbImage> = Vec::with_capacity(config.rounds);
    for k in 0..config.rounds {
        let input = match outputs.last() {
            None => conditions.style_ref().clone(),
            Some(prev) if config.color_transfer => color_transfer(prev, conditions.style_ref()),
            Some(prev) => prev.clone(),
        };
        outputs.push(synthesis_round(config, &input, conditions, schedule, codec, denoiser, k as u64)?);
    }
    Ok(outputs)
}

/// Final image `X_G^K`.
pub fn run_inference(
    config: &PipelineConfig,
    conditions: &SynthesisConditions,
    schedule: &NoiseSchedule,
    codec: &Codec,
    denoiser: &dyn NoisePredictor,
) -> Result<RgbImage> {
    Ok(run_rounds(config, conditions, schedule, codec, denoiser)?
        .pop()
        .expect("at least one round"))
}

/// Further rounds on an already generated image. Round numbering continues
/// at `first_round` so noise streams do not repeat those of earlier rounds.
pub fn refine(
    config: &PipelineConfig,
    generated: &RgbImage,
    conditions: &SynthesisConditions,
    schedule: &NoiseSchedule,
    codec: &Codec,
    denoiser: &dyn NoisePredictor,
    first_round: u64,
) -> Result<RgbImage> {
    config.validate(schedule)?;
    let mut current = generated.clone();
    for k in 0..config.rounds as u64 {
        let input = if config.color_transfer {
            color_transfer(&current, conditions.style_ref())
        } else {
            current
        };
        current = synthesis_round(config, &input, conditions, schedule, codec, denoiser, first_round + k)?;
    }
    Ok(current)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoiser::{Architecture, Tensors};
    use crate::diffusion::sample;
    use crate::imaging::LabelGrid;
    use crate::latent::Shape;
    use crate::toy::{style_reference, LabelGaussian};

    fn arch() -> Architecture {
        Architecture {
            hidden: vec![6],
            time_dim: 4,
            ..Architecture::standard(Shape::new(3, 2, 2), 2)
        }
    }

    fn fill(p: &DenoiserParams, v: f64) -> DenoiserParams {
        let tensors: Tensors = p
            .tensors()
            .iter()
            .map(|(k, t)| {
                let mut t = t.clone();
                t.data.iter_mut().for_each(|x| *x = v);
                (k.clone(), t)
            })
            .collect();
        DenoiserParams::new(p.architecture().clone(), tensors).unwrap()
    }

    #[test]
    fn ensemble_examples() {
        let a = DenoiserParams::init(arch(), Seed(1), false).unwrap();
        let b = DenoiserParams::init(arch(), Seed(2), false).unwrap();
        assert_eq!(ensemble_average(&[a.clone(), a.clone()]).unwrap(), a);
        assert_eq!(ensemble_average(std::slice::from_ref(&a)).unwrap(), a);
        let one = ensemble_average(&[fill(&a, 0.0), fill(&a, 2.0)]).unwrap();
        assert_eq!(one, fill(&a, 1.0));
        assert_eq!(ensemble_average(&[a.clone(), b.clone()]).unwrap(), ensemble_average(&[b, a]).unwrap());
        assert!(ensemble_average(&[]).is_err());
        let other = DenoiserParams::init(Architecture { hidden: vec![5], ..arch() }, Seed(1), false).unwrap();
        assert!(ensemble_average(&[fill(&other, 0.0), fill(&DenoiserParams::init(arch(), Seed(1), false).unwrap(), 0.0)]).is_err());
    }

    fn conditions(seed: u64) -> SynthesisConditions {
        let mut rng = Seed(seed).stream(crate::rng::Domain::Data, 0, 0);
        let mask = LabelGrid::from_fn(4, 4, |_, y| (y / 2) as u32);
        let style = style_reference(&mask, 2, &mut rng).unwrap();
        SynthesisConditions::new(mask, style).unwrap()
    }

    fn params() -> DenoiserParams {
        DenoiserParams::init(Architecture::standard(Shape::new(12, 2, 2), 2), Seed(7), false).unwrap()
    }

    #[test]
    fn single_round_matches_base_sampler() {
        let cfg = PipelineConfig {
            rounds: 1,
            t_start: 40,
            seed: 9,
            codec: CodecKind::LinearPatch,
            ..PipelineConfig::default()
        };
        let codec = Codec::from_kind(cfg.codec, Seed(0));
        let cond = conditions(1);
        let p = params();
        let s = NoiseSchedule::standard();
        let out = run_inference(&cfg, &cond, &s, &codec, &p).unwrap();
        let z = sample(&p, &cond, &codec, &s, cfg.t_start, cfg.mode, Seed(cfg.seed)).unwrap();
        assert_eq!(out, codec.decode_signed(&z).unwrap().clamp_unit());
    }

    #[test]
    fn rounds_are_deterministic_and_in_gamut() {
        let cfg = PipelineConfig {
            t_start: 30,
            seed: 3,
            codec: CodecKind::LinearPatch,
            ..PipelineConfig::default()
        };
        let codec = Codec::from_kind(cfg.codec, Seed(0));
        let cond = conditions(2);
        let s = NoiseSchedule::standard();
        let rounds = run_rounds(&cfg, &cond, &s, &codec, &params()).unwrap();
        assert_eq!(rounds.len(), 3);
        for r in &rounds {
            assert!(r.is_in_gamut());
            assert_eq!((r.width(), r.height()), (4, 4));
        }
        assert_eq!(rounds, run_rounds(&cfg, &cond, &s, &codec, &params()).unwrap());
        let no_ct = PipelineConfig { color_transfer: false, ..cfg.clone() };
        let other = run_rounds(&no_ct, &cond, &s, &codec, &params()).unwrap();
        assert_eq!(other[0], rounds[0]);
    }

    #[test]
    fn refine_continues_rounds() {
        let cfg = PipelineConfig {
            t_start: 25,
            rounds: 3,
            seed: 4,
            ..PipelineConfig::default()
        };
        let codec = Codec::Identity;
        let cond = conditions(3);
        let s = NoiseSchedule::standard();
        let denoiser = crate::denoiser::AnalyticGaussian::new(
            s.clone(),
            codec.clone(),
            crate::denoiser::GaussianPrior::Labels(LabelGaussian::landscape()),
        );
        let rounds = run_rounds(&cfg, &cond, &s, &codec, &denoiser).unwrap();
        let first = PipelineConfig { rounds: 1, ..cfg.clone() };
        let rest = PipelineConfig { rounds: 2, ..cfg.clone() };
        let x1 = run_inference(&first, &cond, &s, &codec, &denoiser).unwrap();
        let refined = refine(&rest, &x1, &cond, &s, &codec, &denoiser, 1).unwrap();
        assert_eq!(refined, rounds[2]);
    }

    #[test]
    fn config_validation() {
        let s = NoiseSchedule::standard();
        assert!(PipelineConfig::default().validate(&s).is_ok());
        assert!(PipelineConfig { rounds: 0, ..Default::default() }.validate(&s).is_err());
        assert!(PipelineConfig { t_start: 1001, ..Default::default() }.validate(&s).is_err());
        let parsed: PipelineConfig = serde_json::from_str(r#"{"seed": 5}"#).unwrap();
        assert_eq!(parsed, PipelineConfig { seed: 5, ..Default::default() });
    }
}
