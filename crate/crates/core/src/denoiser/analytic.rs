use super::NoisePredictor;
use crate::error::{Error, Result};
use crate::imaging::LabelGrid;
use crate::latent::{Codec, Latent};
use crate::schedule::NoiseSchedule;
use crate::toy::LabelGaussian;

/// `E[eps | z_t]` for `z_0 ~ N(mu0, var0 I)`, per element:
/// `sqrt(1 - ab) (z_t - sqrt(ab) mu0) / (ab var0 + 1 - ab)`.
pub fn analytic_gaussian_predict(
    mu0: f64,
    var0: f64,
    z_t: &Latent,
    t: usize,
    schedule: &NoiseSchedule,
) -> Result<Latent> {
    let mean = Latent::filled(z_t.shape(), mu0);
    analytic_gaussian_predict_field(&mean, var0, z_t, t, schedule)
}

/// As [`analytic_gaussian_predict`] with a per-element prior mean.
pub fn analytic_gaussian_predict_field(
    mean: &Latent,
    var0: f64,
    z_t: &Latent,
    t: usize,
    schedule: &NoiseSchedule,
) -> Result<Latent> {
    schedule.check_t(t)?;
    if var0.is_nan() || var0 < 0.0 {
        return Err(Error::InvalidArgument(format!("prior variance must be >= 0, got {var0}")));
    }
    mean.ensure_shape(z_t.shape())?;
    let ab = schedule.alpha_bar(t);
    let signal = ab.sqrt();
    let noise = (1.0 - ab).sqrt();
    let denom = ab * var0 + 1.0 - ab;
    if denom == 0.0 {
        // var0 = 0 and ab = 1 cannot happen for t >= 1 with a valid schedule
        return Err(Error::DegenerateCoefficient(t));
    }
    let data = z_t
        .as_slice()
        .iter()
        .zip(mean.as_slice())
        .map(|(&z, &m)| noise * (z - signal * m) / denom)
        .collect();
    Latent::from_vec(z_t.shape(), data)
}

#[derive(Debug, Clone, PartialEq)]
pub enum GaussianPrior {
    /// Every latent element i.i.d. `N(mu0, var0)`.
    Scalar { mu0: f64, var0: f64 },
    /// Pixels drawn per label in image space, mapped through the codec.
    Labels(LabelGaussian),
}

/// Exact noise predictor for Gaussian data; with DDPM coefficients its
/// reverse chain samples the data distribution.
#[derive(Debug, Clone)]
pub struct AnalyticGaussian {
    schedule: NoiseSchedule,
    codec: Codec,
    prior: GaussianPrior,
}

impl AnalyticGaussian {
    pub fn new(schedule: NoiseSchedule, codec: Codec, prior: GaussianPrior) -> Self {
        Self { schedule, codec, prior }
    }

    pub fn prior(&self) -> &GaussianPrior {
        &self.prior
    }

    /// Prior mean latent and per-element variance for a mask.
    pub fn prior_moments(&self, z_shape: crate::latent::Shape, mask: &LabelGrid) -> Result<(Latent, f64)> {
        match &self.prior {
            GaussianPrior::Scalar { mu0, var0 } => Ok((Latent::filled(z_shape, *mu0), *var0)),
            GaussianPrior::Labels(labels) => {
                let mean = self.codec.encode_signed(&labels.mean_image(mask)?)?;
                mean.ensure_shape(z_shape)?;
                // the [0,1] -> [-1,1] map doubles the std; orthogonal codecs keep it isotropic
                Ok((mean, (2.0 * labels.std).powi(2)))
            }
        }
    }
}

impl NoisePredictor for AnalyticGaussian {
    fn predict(&self, z_t: &Latent, mask: &LabelGrid, t: usize) -> Result<Latent> {
        let (mean, var0) = self.prior_moments(z_t.shape(), mask)?;
        analytic_gaussian_predict_field(&mean, var0, z_t, t, &self.schedule)
    }
}
