//! Images, segmentation masks, color histograms and Reinhard color transfer.

mod color;
mod io;

pub use color::{
    channel_stats, color_transfer, color_transfer_lab, lab_to_rgb, lab_to_rgb_unclamped, rgb_to_lab,
    ChannelStats, LabImage, LOG_EPSILON,
};
pub use io::{
    read_image, read_mask, read_png, read_ppm, write_mask_png, write_png, write_png_to, write_ppm,
};

use crate::error::{Error, Result};
use crate::latent::{Latent, Shape};

/// Default number of histogram bins per channel (8-bit quantization).
pub const DEFAULT_BINS: usize = 256;

/// Row-major, interleaved RGB. Values are nominally in `[0, 1]`; decoded
/// intermediates may leave that range until [`RgbImage::clamp_unit`].
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height * 3],
        }
    }

    pub fn filled(width: usize, height: usize, rgb: [f64; 3]) -> Self {
        Self::from_fn(width, height, |_, _| rgb)
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> [f64; 3]) -> Self {
        let mut img = Self::new(width, height);
        for y in 0..height {
            for x in 0..width {
                img.set_pixel(x, y, f(x, y));
            }
        }
        img
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height * 3 {
            return Err(Error::ShapeMismatch {
                expected: vec![height, width, 3],
                actual: vec![data.len()],
            });
        }
        Ok(Self { width, height, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [f64; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn pixels(&self) -> impl Iterator<Item = [f64; 3]> + '_ {
        self.data.chunks_exact(3).map(|p| [p[0], p[1], p[2]])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Self {
        Self {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn clamp_unit(&self) -> Self {
        self.map(|v| v.clamp(0.0, 1.0))
    }

    pub fn is_in_gamut(&self) -> bool {
        self.data.iter().all(|v| (0.0..=1.0).contains(v))
    }
}

/// Pearson correlation, `None` when either input has zero variance.
pub(crate) fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        return None;
    }
    Some(cov / (va * vb).sqrt())
}

/// Semantic label per pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelGrid {
    width: usize,
    height: usize,
    labels: Vec<u32>,
}

impl LabelGrid {
    pub fn new(width: usize, height: usize, labels: Vec<u32>) -> Result<Self> {
        if labels.len() != width * height {
            return Err(Error::ShapeMismatch {
                expected: vec![height, width],
                actual: vec![labels.len()],
            });
        }
        Ok(Self {
            width,
            height,
            labels,
        })
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> u32) -> Self {
        let labels = (0..height)
            .flat_map(|y| (0..width).map(move |x| (x, y)))
            .map(|(x, y)| f(x, y))
            .collect();
        Self {
            width,
            height,
            labels,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, x: usize, y: usize) -> u32 {
        self.labels[y * self.width + x]
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn max_label(&self) -> Option<u32> {
        self.labels.iter().copied().max()
    }

    pub fn check_labels(&self, num_labels: usize) -> Result<()> {
        match self.labels.iter().find(|&&l| l as usize >= num_labels) {
            Some(l) => Err(Error::InvalidArgument(format!(
                "mask label {l} outside label set 0..{num_labels}"
            ))),
            None => Ok(()),
        }
    }

    /// One-hot label volume at `1 / factor` resolution: each cell holds the
    /// fraction of the `factor x factor` block carrying that label. With
    /// `factor = 1` this is the plain one-hot encoding.
    pub fn label_volume(&self, num_labels: usize, factor: usize) -> Result<Latent> {
        self.check_labels(num_labels)?;
        if factor == 0 || !self.width.is_multiple_of(factor) || !self.height.is_multiple_of(factor) {
            return Err(Error::InvalidArgument(format!(
                "mask {}x{} not divisible by factor {factor}",
                self.width, self.height
            )));
        }
        let (h, w) = (self.height / factor, self.width / factor);
        let mut vol = Latent::zeros(Shape::new(num_labels, h, w));
        let share = 1.0 / (factor * factor) as f64;
        for y in 0..self.height {
            for x in 0..self.width {
                let l = self.get(x, y) as usize;
                let (cy, cx) = (y / factor, x / factor);
                let v = vol.get(l, cy, cx);
                vol.set(l, cy, cx, v + share);
            }
        }
        Ok(vol)
    }
}

/// Per-channel histograms over uniform bins on `[0, 1]`, each normalized to
/// sum 1 and concatenated R, G, B. `1.0` lands in the last bin; values
/// outside `[0, 1]` are clamped first.
pub fn channel_histogram(image: &RgbImage, bins: usize) -> Result<Vec<f64>> {
    if bins < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 bins, got {bins}")));
    }
    if image.is_empty() {
        return Err(Error::Image("empty image".into()));
    }
    let mut hist = vec![0.0; 3 * bins];
    for px in image.pixels() {
        for (c, &v) in px.iter().enumerate() {
            let idx = ((v.clamp(0.0, 1.0) * bins as f64) as usize).min(bins - 1);
            hist[c * bins + idx] += 1.0;
        }
    }
    let n = image.pixel_count() as f64;
    hist.iter_mut().for_each(|h| *h /= n);
    Ok(hist)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gray_image_histogram_single_bin() {
        let img = RgbImage::filled(4, 4, [0.5, 0.5, 0.5]);
        let h = channel_histogram(&img, 256).unwrap();
        assert_eq!(h.len(), 768);
        for c in 0..3 {
            assert_eq!(h[c * 256 + 128], 1.0);
            assert_eq!(h[c * 256..(c + 1) * 256].iter().filter(|&&v| v > 0.0).count(), 1);
        }
    }

    #[test]
    fn boundary_binning() {
        let img = RgbImage::from_fn(2, 1, |x, _| if x == 0 { [0.0; 3] } else { [1.0; 3] });
        let h = channel_histogram(&img, 2).unwrap();
        assert_eq!(h, vec![0.5; 6]);
    }

    #[test]
    fn histogram_blocks_sum_to_one() {
        let img = RgbImage::from_fn(7, 5, |x, y| [x as f64 / 7.0, y as f64 / 5.0, 0.3]);
        let h = channel_histogram(&img, 16).unwrap();
        for c in 0..3 {
            let s: f64 = h[c * 16..(c + 1) * 16].iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
        assert!(channel_histogram(&img, 1).is_err());
    }

    #[test]
    fn label_volume_pooling() {
        let mask = LabelGrid::from_fn(4, 2, |x, _| if x < 3 { 0 } else { 1 });
        let one_hot = mask.label_volume(2, 1).unwrap();
        assert_eq!(one_hot.shape(), Shape::new(2, 2, 4));
        assert_eq!(one_hot.get(0, 0, 0), 1.0);
        assert_eq!(one_hot.get(1, 1, 3), 1.0);
        let pooled = mask.label_volume(2, 2).unwrap();
        assert_eq!(pooled.shape(), Shape::new(2, 1, 2));
        assert_eq!(pooled.get(0, 0, 0), 1.0);
        assert_eq!(pooled.get(0, 0, 1), 0.5);
        assert_eq!(pooled.get(1, 0, 1), 0.5);
        assert!(mask.label_volume(1, 1).is_err());
    }
}
