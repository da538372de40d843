use iidm::denoiser::{AnalyticGaussian, GaussianPrior};
use iidm::imaging::DEFAULT_BINS;
use iidm::toy::{style_scores, style_trials, LabelGaussian};
use iidm::{Codec, NoiseSchedule, PipelineConfig, Seed, SynthesisConditions};

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

struct Setup {
    schedule: NoiseSchedule,
    codec: Codec,
    denoiser: AnalyticGaussian,
    trials: Vec<SynthesisConditions>,
}

fn setup() -> Setup {
    let schedule = NoiseSchedule::standard();
    let codec = Codec::Identity;
    let prior = LabelGaussian::landscape();
    let denoiser = AnalyticGaussian::new(schedule.clone(), codec.clone(), GaussianPrior::Labels(prior.clone()));
    let trials = style_trials(prior.num_labels(), 20, 16, 16, Seed(0)).unwrap();
    Setup {
        schedule,
        codec,
        denoiser,
        trials,
    }
}

fn score(s: &Setup, cfg: &PipelineConfig) -> f64 {
    mean(&style_scores(cfg, &s.trials, &s.schedule, &s.codec, &s.denoiser, DEFAULT_BINS).unwrap())
}

#[test]
fn orderings_hold_when_the_start_keeps_signal() {
    let s = setup();
    let base = PipelineConfig {
        t_start: 10,
        rounds: 1,
        color_transfer: false,
        ..Default::default()
    };
    let i2i = score(&s, &base);
    let noise = score(&s, &PipelineConfig { t_start: 1000, ..base.clone() });
    assert!(i2i > noise, "{i2i} vs {noise}");

    let refine = PipelineConfig { rounds: 3, ..base };
    let plain = score(&s, &refine);
    let with_ct = score(&s, &PipelineConfig { color_transfer: true, ..refine });
    assert!(with_ct > plain, "{with_ct} vs {plain}");
}

#[test]
fn color_transfer_never_lowers_similarity_at_default_start() {
    let s = setup();
    let cfg = PipelineConfig {
        rounds: 2,
        color_transfer: false,
        ..Default::default()
    };
    let plain = score(&s, &cfg);
    let with_ct = score(&s, &PipelineConfig { color_transfer: true, ..cfg });
    assert!(with_ct >= plain, "{with_ct} vs {plain}");
}
