//! Style similarity, Fréchet distance between Gaussian fits, and the
//! weighted total score.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{channel_histogram, pearson, RgbImage};

/// Percent similarity of two images' color histograms:
/// `100 * max(pearson, 0)`. When either histogram has zero variance the
/// score is 100 for identical histograms and 0 otherwise.
pub fn style_similarity(generated: &RgbImage, reference: &RgbImage, bins: usize) -> Result<f64> {
    let a = channel_histogram(generated, bins)?;
    let b = channel_histogram(reference, bins)?;
    Ok(histogram_similarity(&a, &b))
}

pub fn histogram_similarity(a: &[f64], b: &[f64]) -> f64 {
    match pearson(a, b) {
        Some(r) => 100.0 * r.max(0.0),
        None if a == b => 100.0,
        None => 0.0,
    }
}

/// Mean and unbiased (N - 1) covariance of a set of feature vectors.
pub fn gaussian_fit(features: &[Vec<f64>]) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if features.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 feature vectors, got {}",
            features.len()
        )));
    }
    let d = features[0].len();
    if let Some(bad) = features.iter().find(|f| f.len() != d) {
        return Err(Error::ShapeMismatch {
            expected: vec![d],
            actual: vec![bad.len()],
        });
    }
    let n = features.len() as f64;
    let mut mean = DVector::zeros(d);
    for f in features {
        mean += DVector::from_column_slice(f);
    }
    mean /= n;
    let mut cov = DMatrix::zeros(d, d);
    for f in features {
        let c = DVector::from_column_slice(f) - &mean;
        cov += &c * c.transpose();
    }
    cov /= n - 1.0;
    Ok((mean, cov))
}

/// `|m1 - m2|^2 + tr(c1 + c2 - 2 (c1 c2)^(1/2))`.
///
/// The trace of `(c1 c2)^(1/2)` is taken as the sum of square roots of the
/// eigenvalues of the symmetric matrix `c1^(1/2) c2 c1^(1/2)`, which shares
/// its spectrum with `c1 c2`. Negative eigenvalues from round-off are floored
/// at zero, and so is the final distance.
pub fn frechet_distance(m1: &DVector<f64>, c1: &DMatrix<f64>, m2: &DVector<f64>, c2: &DMatrix<f64>) -> Result<f64> {
    let d = m1.len();
    for (shape, what) in [(m2.len(), "mean"), (c1.nrows(), "c1"), (c1.ncols(), "c1"), (c2.nrows(), "c2"), (c2.ncols(), "c2")] {
        if shape != d {
            return Err(Error::InvalidArgument(format!("{what} has dimension {shape}, expected {d}")));
        }
    }
    let diff = m1 - m2;
    let root1 = psd_sqrt(c1);
    let inner = &root1 * c2 * &root1;
    let inner = (&inner + inner.transpose()) * 0.5;
    let tr_sqrt: f64 = SymmetricEigen::new(inner).eigenvalues.iter().map(|&l| l.max(0.0).sqrt()).sum();
    let value = diff.norm_squared() + c1.trace() + c2.trace() - 2.0 * tr_sqrt;
    Ok(value.max(0.0))
}

/// Square root of a symmetric positive semidefinite matrix.
fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose()
}

/// Maps an image to a fixed-length feature vector for the Fréchet distance.
pub trait FeatureExtractor: Sync {
    fn dim(&self) -> usize;
    fn extract(&self, image: &RgbImage) -> Result<Vec<f64>>;
}

/// Per channel: mean, population std, and a normalized histogram.
/// With the default 8 bins that is 30 values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChannelStatsFeatures {
    pub bins: usize,
}

impl Default for ChannelStatsFeatures {
    fn default() -> Self {
        Self { bins: 8 }
    }
}

impl FeatureExtractor for ChannelStatsFeatures {
    fn dim(&self) -> usize {
        3 * (2 + self.bins)
    }

    fn extract(&self, image: &RgbImage) -> Result<Vec<f64>> {
        if image.is_empty() {
            return Err(Error::Image("empty image".into()));
        }
        let hist = channel_histogram(image, self.bins)?;
        let n = image.pixel_count() as f64;
        let mut out = Vec::with_capacity(self.dim());
        for c in 0..3 {
            let mean = image.pixels().map(|p| p[c]).sum::<f64>() / n;
            let var = image.pixels().map(|p| (p[c] - mean).powi(2)).sum::<f64>() / n;
            out.push(mean);
            out.push(var.sqrt());
            out.extend_from_slice(&hist[c * self.bins..(c + 1) * self.bins]);
        }
        Ok(out)
    }
}

/// Fréchet distance between the feature distributions of two image sets.
pub fn image_set_distance(generated: &[RgbImage], reference: &[RgbImage], extractor: &dyn FeatureExtractor) -> Result<f64> {
    let fit = |set: &[RgbImage]| -> Result<_> {
        let feats = set.iter().map(|img| extractor.extract(img)).collect::<Result<Vec<_>>>()?;
        gaussian_fit(&feats)
    };
    let (m1, c1) = fit(generated)?;
    let (m2, c2) = fit(reference)?;
    frechet_distance(&m1, &c1, &m2, &c2)
}

/// `(M/100) * (0.2 A + 0.3 (0.5 S + 50) + 0.5 (100 - fid))`. All inputs
/// are on a percent scale; nothing is clamped.
pub fn total_score(mask_accuracy: f64, aesthetic: f64, fid: f64, style_similarity: f64) -> f64 {
    mask_accuracy / 100.0 * (0.2 * aesthetic + 0.3 * (0.5 * style_similarity + 50.0) + 0.5 * (100.0 - fid))
}

/// Evaluation summary. `M` and `A` come from external tools; the total is
/// only defined when both are present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub mask_accuracy: Option<f64>,
    pub aesthetic: Option<f64>,
    pub fid: f64,
    pub style_similarity: f64,
    pub total: Option<f64>,
}

impl ScoreReport {
    pub fn new(mask_accuracy: Option<f64>, aesthetic: Option<f64>, fid: f64, style_similarity: f64) -> Self {
        let total = match (mask_accuracy, aesthetic) {
            (Some(m), Some(a)) => Some(total_score(m, a, fid, style_similarity)),
            _ => None,
        };
        Self {
            mask_accuracy,
            aesthetic,
            fid,
            style_similarity,
            total,
        }
    }

    /// True when the stored total agrees with a recomputation to 1e-9.
    pub fn is_consistent(&self) -> bool {
        match (self.mask_accuracy, self.aesthetic, self.total) {
            (Some(m), Some(a), Some(t)) => (total_score(m, a, self.fid, self.style_similarity) - t).abs() <= 1e-9,
            (_, _, None) => self.mask_accuracy.is_none() || self.aesthetic.is_none(),
            _ => false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{Domain, Seed};
    use rand::Rng as _;

    fn random_image(w: usize, h: usize, seed: u64) -> RgbImage {
        let mut rng = Seed(seed).stream(Domain::User, 0, 0);
        RgbImage::from_vec(w, h, (0..w * h * 3).map(|_| rng.random::<f64>()).collect()).unwrap()
    }

    #[test]
    fn similarity_examples() {
        let img = random_image(8, 8, 1);
        assert!((style_similarity(&img, &img, 256).unwrap() - 100.0).abs() < 1e-12);
        let black = RgbImage::filled(4, 4, [0.0; 3]);
        let white = RgbImage::filled(4, 4, [1.0; 3]);
        assert_eq!(style_similarity(&black, &white, 2).unwrap(), 0.0);
    }

    #[test]
    fn similarity_matches_textbook_pearson() {
        let a = random_image(10, 7, 2);
        let b = random_image(10, 7, 3);
        let ha = channel_histogram(&a, 16).unwrap();
        let hb = channel_histogram(&b, 16).unwrap();
        // r = (n sum xy - sum x sum y) / sqrt((n sum x^2 - (sum x)^2)(n sum y^2 - (sum y)^2))
        let n = ha.len() as f64;
        let sx: f64 = ha.iter().sum();
        let sy: f64 = hb.iter().sum();
        let sxy: f64 = ha.iter().zip(&hb).map(|(x, y)| x * y).sum();
        let sxx: f64 = ha.iter().map(|x| x * x).sum();
        let syy: f64 = hb.iter().map(|y| y * y).sum();
        let r = (n * sxy - sx * sy) / ((n * sxx - sx * sx) * (n * syy - sy * sy)).sqrt();
        let got = style_similarity(&a, &b, 16).unwrap();
        assert!((got - 100.0 * r.max(0.0)).abs() < 1e-9, "{got} vs {r}");
    }

    #[test]
    fn zero_variance_convention() {
        let flat = vec![0.25; 8];
        assert_eq!(histogram_similarity(&flat, &flat), 100.0);
        assert_eq!(histogram_similarity(&flat, &[0.5, 0.0, 0.5, 0.0, 0.5, 0.0, 0.5, 0.0]), 0.0);
    }

    fn scalar(v: f64) -> (DVector<f64>, DMatrix<f64>) {
        (DVector::from_element(1, 0.0), DMatrix::from_element(1, 1, v))
    }

    #[test]
    fn frechet_one_dimensional() {
        let (m0, c1) = scalar(1.0);
        let m1 = DVector::from_element(1, 1.0);
        assert!((frechet_distance(&m0, &c1, &m1, &c1).unwrap() - 1.0).abs() < 1e-12);
        let (_, c4) = scalar(4.0);
        assert!((frechet_distance(&m0, &c1, &m0, &c4).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(frechet_distance(&m0, &c4, &m0, &c4).unwrap(), 0.0);
    }

    #[test]
    fn frechet_diagonal_closed_form() {
        let m1 = DVector::from_vec(vec![0.0, 1.0, 2.0]);
        let m2 = DVector::from_vec(vec![1.0, 1.0, 0.0]);
        let d1: [f64; 3] = [1.0, 4.0, 0.25];
        let d2: [f64; 3] = [9.0, 1.0, 0.25];
        let c1 = DMatrix::from_diagonal(&DVector::from_row_slice(&d1));
        let c2 = DMatrix::from_diagonal(&DVector::from_row_slice(&d2));
        let want = 1.0 + 4.0 + d1.iter().zip(&d2).map(|(a, b)| (a.sqrt() - b.sqrt()).powi(2)).sum::<f64>();
        assert!((frechet_distance(&m1, &c1, &m2, &c2).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn frechet_rejects_dimension_mismatch() {
        let (m, c) = scalar(1.0);
        let m2 = DVector::zeros(2);
        let c2 = DMatrix::identity(2, 2);
        assert!(frechet_distance(&m, &c, &m2, &c2).is_err());
        assert!(frechet_distance(&m, &c, &m, &c2).is_err());
    }

    #[test]
    fn gaussian_fit_unbiased() {
        let f = vec![vec![1.0, 0.0], vec![3.0, 2.0], vec![5.0, 1.0]];
        let (m, c) = gaussian_fit(&f).unwrap();
        assert_eq!(m.as_slice(), &[3.0, 1.0]);
        assert!((c[(0, 0)] - 4.0).abs() < 1e-15);
        assert!((c[(1, 1)] - 1.0).abs() < 1e-15);
        assert!((c[(0, 1)] - 1.0).abs() < 1e-15);
        assert!(gaussian_fit(&f[..1]).is_err());
        assert!(gaussian_fit(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn features_have_expected_layout() {
        let img = RgbImage::filled(3, 3, [0.1, 0.5, 0.99]);
        let fx = ChannelStatsFeatures::default();
        let f = fx.extract(&img).unwrap();
        assert_eq!(f.len(), 30);
        assert_eq!(fx.dim(), 30);
        assert!((f[0] - 0.1).abs() < 1e-15);
        assert!(f[1].abs() < 1e-12);
        assert_eq!(f[2], 1.0); // 0.1 is in the first of 8 bins
        assert_eq!(f[10 + 2 + 4], 1.0);
        assert_eq!(f[20 + 2 + 7], 1.0);
    }

    #[test]
    fn image_set_distance_zero_on_same_set() {
        let set: Vec<_> = (0..5).map(|i| random_image(6, 6, i)).collect();
        let fx = ChannelStatsFeatures::default();
        let d = image_set_distance(&set, &set, &fx).unwrap();
        assert!(d.abs() < 1e-8, "{d}");
        let other: Vec<_> = (0..5).map(|i| random_image(6, 6, 100 + i).map(|v| v * 0.5)).collect();
        assert!(image_set_distance(&set, &other, &fx).unwrap() > 0.01);
    }

    #[test]
    fn total_score_examples() {
        assert!((total_score(91.01, 49.12, 35.41, 27.90) - 55.79).abs() < 0.01);
        assert!((total_score(94.15, 50.43, 30.75, 63.76) - 65.27).abs() < 0.1);
        assert_eq!(total_score(0.0, 80.0, 10.0, 90.0), 0.0);
    }

    #[test]
    fn report_consistency() {
        let r = ScoreReport::new(Some(91.01), Some(49.12), 35.41, 27.90);
        assert!(r.is_consistent());
        let partial = ScoreReport::new(None, Some(49.12), 35.41, 27.90);
        assert_eq!(partial.total, None);
        assert!(partial.is_consistent());
        let mut bad = r.clone();
        bad.total = Some(1.0);
        assert!(!bad.is_consistent());
    }
}
