//! Linear-in-t noise schedule and the per-step sampler coefficients.
//!
//! Index 0 of every table holds the `t = 0` convention (`beta = 0`,
//! `alpha = alpha_bar = 1`), so `alpha_bar(t - 1)` is always defined for
//! `t >= 1`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of steps in the reference configuration.
pub const DEFAULT_T_MAX: usize = 1000;
/// Per-step slope of `beta_t` in the reference configuration.
pub const DEFAULT_SLOPE: f64 = 0.001;

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    t_max: usize,
    slope: f64,
    beta: Vec<f64>,
    alpha: Vec<f64>,
    alpha_bar: Vec<f64>,
}

/// Which reverse-step coefficients to use.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerMode {
    /// DDPM posterior mean and variance.
    #[default]
    DdpmStandard,
    /// The printed coefficient expressions, evaluated verbatim. Kept for
    /// comparison runs only; it does not produce a valid sampler.
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplerCoefficients {
    /// Multiplier of the current latent.
    pub gamma_tilde: f64,
    /// Multiplier of the predicted noise.
    pub beta_tilde: f64,
    /// Standard deviation of the injected noise.
    pub sigma_tilde: f64,
    pub mode: SamplerMode,
}

impl NoiseSchedule {
    /// `beta_t = slope * t` for `t` in `1..=t_max`.
    pub fn linear(t_max: usize, slope: f64) -> Result<Self> {
        if t_max == 0 {
            return Err(Error::InvalidSchedule("t_max must be at least 1".into()));
        }
        if !slope.is_finite() || slope <= 0.0 {
            return Err(Error::InvalidSchedule(format!("slope must be positive, got {slope}")));
        }
        if slope * t_max as f64 > 1.0 {
            return Err(Error::InvalidSchedule(format!(
                "slope * t_max = {} exceeds 1, alpha would go negative",
                slope * t_max as f64
            )));
        }

        let mut beta = Vec::with_capacity(t_max + 1);
        let mut alpha = Vec::with_capacity(t_max + 1);
        let mut alpha_bar = Vec::with_capacity(t_max + 1);
        beta.push(0.0);
        alpha.push(1.0);
        alpha_bar.push(1.0);
        for t in 1..=t_max {
            let b = slope * t as f64;
            let a = 1.0 - b;
            beta.push(b);
            alpha.push(a);
            alpha_bar.push(alpha_bar[t - 1] * a);
        }

        Ok(Self {
            t_max,
            slope,
            beta,
            alpha,
            alpha_bar,
        })
    }

    /// The reference schedule: 1000 steps, `beta_t = 0.001 t`.
    pub fn standard() -> Self {
        Self::linear(DEFAULT_T_MAX, DEFAULT_SLOPE).expect("reference schedule is valid")
    }

    pub fn t_max(&self) -> usize {
        self.t_max
    }

    pub fn slope(&self) -> f64 {
        self.slope
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.beta[t]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alpha[t]
    }

    /// Cumulative product of `alpha` up to and including `t`; `alpha_bar(0) = 1`.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bar[t]
    }

    pub fn check_t(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.t_max {
            Err(Error::TimestepOutOfRange { t, t_max: self.t_max })
        } else {
            Ok(())
        }
    }

    pub fn coefficients_at(&self, t: usize, mode: SamplerMode) -> Result<SamplerCoefficients> {
        self.check_t(t)?;
        match mode {
            SamplerMode::DdpmStandard => Ok(self.ddpm_coefficients(t)),
            SamplerMode::Literal => self.literal_coefficients(t),
        }
    }

    fn ddpm_coefficients(&self, t: usize) -> SamplerCoefficients {
        let alpha = self.alpha[t];
        let beta = self.beta[t];
        let ab = self.alpha_bar[t];
        let ab_prev = self.alpha_bar[t - 1];

        let sigma_tilde = if t == 1 {
            0.0
        } else {
            ((1.0 - ab_prev) / (1.0 - ab) * beta).max(0.0).sqrt()
        };

        // alpha_t = 0 (beta_t = 1): z_t is pure noise and carries nothing about
        // z_0, so the posterior mean is sqrt(alpha_bar[t-1]) * E[z_0]. It cannot
        // be expressed through the noise prediction; alpha_bar[t-1] has
        // underflowed to 0 long before this point for any slope that reaches
        // beta = 1, which makes the mean exactly zero.
        if alpha == 0.0 {
            return SamplerCoefficients {
                gamma_tilde: 0.0,
                beta_tilde: 0.0,
                sigma_tilde,
                mode: SamplerMode::DdpmStandard,
            };
        }

        let sqrt_alpha = alpha.sqrt();
        SamplerCoefficients {
            gamma_tilde: 1.0 / sqrt_alpha,
            beta_tilde: beta / (sqrt_alpha * (1.0 - ab).sqrt()),
            sigma_tilde,
            mode: SamplerMode::DdpmStandard,
        }
    }

    fn literal_coefficients(&self, t: usize) -> Result<SamplerCoefficients> {
        let alpha = self.alpha[t];
        let beta = self.beta[t];
        let ab = self.alpha_bar[t];
        let ab_prev = self.alpha_bar[t - 1];
        if ab == 0.0 {
            return Err(Error::DegenerateCoefficient(t));
        }

        let gamma_den = ab.sqrt() * (1.0 - ab) + alpha.sqrt() * (1.0 - ab_prev) / (1.0 - ab);
        let gamma_tilde = ab_prev.sqrt() * beta / gamma_den;
        let beta_tilde = ab_prev.sqrt() * (1.0 - alpha).sqrt() * beta / (ab.sqrt() * (1.0 - ab));
        let sigma_tilde = (1.0 - ab_prev) / ((1.0 - ab) * beta);

        Ok(SamplerCoefficients {
            gamma_tilde,
            beta_tilde,
            sigma_tilde,
            mode: SamplerMode::Literal,
        })
    }

    /// `t,beta,alpha,alpha_bar` rows for `t` in `1..=t_max`, full precision.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "t,beta,alpha,alpha_bar")?;
        for t in 1..=self.t_max {
            writeln!(
                out,
                "{},{:e},{:e},{:e}",
                t, self.beta[t], self.alpha[t], self.alpha_bar[t]
            )?;
        }
        Ok(())
    }
}
