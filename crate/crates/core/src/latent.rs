//! Latent tensors and the encoder/decoder pair that maps images into them.
//!
//! Two desk-scale codecs stand in for a pretrained autoencoder:
//! [`Codec::Identity`] runs diffusion directly on pixels, and
//! [`Codec::LinearPatch`] applies an orthogonal map to every non-overlapping
//! `p x p` patch (3 channels become `3 p^2` latent channels).

use serde::{Deserialize, Serialize};

use crate::error::{shape_mismatch, Error, Result};
use crate::imaging::RgbImage;
use crate::rng::{standard_normal, Domain, Seed};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Shape {
    pub const fn new(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
        }
    }

    pub const fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.channels, self.height, self.width]
    }
}

/// Channel-major real grid living in codec space.
#[derive(Debug, Clone, PartialEq)]
pub struct Latent {
    shape: Shape,
    data: Vec<f64>,
}

impl Latent {
    pub fn zeros(shape: Shape) -> Self {
        Self::filled(shape, 0.0)
    }

    pub fn filled(shape: Shape, value: f64) -> Self {
        Self {
            shape,
            data: vec![value; shape.len()],
        }
    }

    pub fn from_vec(shape: Shape, data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::ShapeMismatch {
                expected: vec![shape.len()],
                actual: vec![data.len()],
            });
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite latent value {bad}")));
        }
        Ok(Self { shape, data })
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.shape.height + y) * self.shape.width + x]
    }

    pub fn set(&mut self, c: usize, y: usize, x: usize, value: f64) {
        let idx = (c * self.shape.height + y) * self.shape.width + x;
        self.data[idx] = value;
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn ensure_shape(&self, expected: Shape) -> Result<()> {
        if self.shape != expected {
            return Err(shape_mismatch(&expected.dims(), &self.shape.dims()));
        }
        Ok(())
    }

    /// `a * self + b * other`, elementwise.
    pub fn lincomb(&self, a: f64, other: &Latent, b: f64) -> Result<Self> {
        other.ensure_shape(self.shape)?;
        Ok(Self {
            shape: self.shape,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&x, &y)| a * x + b * y)
                .collect(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CodecKind {
    #[default]
    Identity,
    LinearPatch,
}

/// Patch size of the linear-patch codec.
pub const DEFAULT_PATCH: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub enum Codec {
    Identity,
    LinearPatch(LinearPatch),
}

/// Orthogonal `n x n` projection applied per patch, `n = 3 * patch^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearPatch {
    patch: usize,
    // row-major, rows are latent channels
    projection: Vec<f64>,
}

impl LinearPatch {
    pub fn new(patch: usize, projection: Vec<f64>) -> Result<Self> {
        if patch == 0 {
            return Err(Error::InvalidArgument("patch size must be positive".into()));
        }
        let n = 3 * patch * patch;
        if projection.len() != n * n {
            return Err(shape_mismatch(&[n, n], &[projection.len()]));
        }
        Ok(Self { patch, projection })
    }

    pub fn identity(patch: usize) -> Self {
        let n = 3 * patch * patch;
        let mut projection = vec![0.0; n * n];
        for i in 0..n {
            projection[i * n + i] = 1.0;
        }
        Self { patch, projection }
    }

    /// Random orthogonal projection: Gaussian matrix orthonormalized by
    /// modified Gram-Schmidt.
    pub fn orthogonal(patch: usize, seed: Seed) -> Self {
        let n = 3 * patch * patch;
        let mut rng = seed.stream(Domain::Codec, patch as u64, 0);
        let mut rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..n).map(|_| standard_normal(&mut rng)).collect())
            .collect();
        for i in 0..n {
            for j in 0..i {
                let (done, rest) = rows.split_at_mut(i);
                let dot: f64 = done[j].iter().zip(&rest[0]).map(|(a, b)| a * b).sum();
                for (r, q) in rest[0].iter_mut().zip(&done[j]) {
                    *r -= dot * q;
                }
            }
            let norm = rows[i].iter().map(|v| v * v).sum::<f64>().sqrt();
            rows[i].iter_mut().for_each(|v| *v /= norm);
        }
        Self {
            patch,
            projection: rows.concat(),
        }
    }

    pub fn patch(&self) -> usize {
        self.patch
    }

    pub fn projection(&self) -> &[f64] {
        &self.projection
    }

    fn dim(&self) -> usize {
        3 * self.patch * self.patch
    }
}

impl Codec {
    pub fn kind(&self) -> CodecKind {
        match self {
            Codec::Identity => CodecKind::Identity,
            Codec::LinearPatch(_) => CodecKind::LinearPatch,
        }
    }

    /// Build a codec of the given kind; linear-patch uses a seeded orthogonal
    /// projection with [`DEFAULT_PATCH`].
    pub fn from_kind(kind: CodecKind, seed: Seed) -> Self {
        match kind {
            CodecKind::Identity => Codec::Identity,
            CodecKind::LinearPatch => Codec::LinearPatch(LinearPatch::orthogonal(DEFAULT_PATCH, seed)),
        }
    }

    /// Spatial downsampling factor between image and latent.
    pub fn spatial_factor(&self) -> usize {
        match self {
            Codec::Identity => 1,
            Codec::LinearPatch(lp) => lp.patch,
        }
    }

    pub fn latent_shape(&self, height: usize, width: usize) -> Result<Shape> {
        match self {
            Codec::Identity => Ok(Shape::new(3, height, width)),
            Codec::LinearPatch(lp) => {
                let p = lp.patch;
                if !height.is_multiple_of(p) || !width.is_multiple_of(p) {
                    return Err(Error::InvalidArgument(format!(
                        "image {width}x{height} not divisible by patch size {p}"
                    )));
                }
                Ok(Shape::new(lp.dim(), height / p, width / p))
            }
        }
    }

    /// Map an image's channel grid into latent space. No affine rescaling is
    /// applied; see [`Codec::encode_signed`] for the pipeline's entry point.
    pub fn encode(&self, image: &RgbImage) -> Result<Latent> {
        let (w, h) = (image.width(), image.height());
        let shape = self.latent_shape(h, w)?;
        let mut out = Latent::zeros(shape);
        match self {
            Codec::Identity => {
                for y in 0..h {
                    for x in 0..w {
                        let px = image.pixel(x, y);
                        for c in 0..3 {
                            out.set(c, y, x, px[c]);
                        }
                    }
                }
            }
            Codec::LinearPatch(lp) => {
                let p = lp.patch;
                let n = lp.dim();
                let mut v = vec![0.0; n];
                for py in 0..shape.height {
                    for px in 0..shape.width {
                        for dy in 0..p {
                            for dx in 0..p {
                                let pix = image.pixel(px * p + dx, py * p + dy);
                                for c in 0..3 {
                                    v[(c * p + dy) * p + dx] = pix[c];
                                }
                            }
                        }
                        for k in 0..n {
                            let row = &lp.projection[k * n..(k + 1) * n];
                            let val = row.iter().zip(&v).map(|(a, b)| a * b).sum();
                            out.set(k, py, px, val);
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// Inverse of [`Codec::encode`]. Values are not clamped.
    pub fn decode(&self, latent: &Latent) -> Result<RgbImage> {
        let s = latent.shape();
        match self {
            Codec::Identity => {
                if s.channels != 3 {
                    return Err(shape_mismatch(&[3, s.height, s.width], &s.dims()));
                }
                let mut img = RgbImage::new(s.width, s.height);
                for y in 0..s.height {
                    for x in 0..s.width {
                        img.set_pixel(x, y, [latent.get(0, y, x), latent.get(1, y, x), latent.get(2, y, x)]);
                    }
                }
                Ok(img)
            }
            Codec::LinearPatch(lp) => {
                let p = lp.patch;
                let n = lp.dim();
                if s.channels != n {
                    return Err(shape_mismatch(&[n, s.height, s.width], &s.dims()));
                }
                let mut img = RgbImage::new(s.width * p, s.height * p);
                let mut v = vec![0.0; n];
                for py in 0..s.height {
                    for px in 0..s.width {
                        // orthogonal: inverse is the transpose
                        v.iter_mut().for_each(|e| *e = 0.0);
                        for k in 0..n {
                            let coeff = latent.get(k, py, px);
                            let row = &lp.projection[k * n..(k + 1) * n];
                            for (e, r) in v.iter_mut().zip(row) {
                                *e += r * coeff;
                            }
                        }
                        for dy in 0..p {
                            for dx in 0..p {
                                let rgb = [0, 1, 2].map(|c| v[(c * p + dy) * p + dx]);
                                img.set_pixel(px * p + dx, py * p + dy, rgb);
                            }
                        }
                    }
                }
                Ok(img)
            }
        }
    }

    /// Encode after mapping pixels from `[0, 1]` to `[-1, 1]`.
    pub fn encode_signed(&self, image: &RgbImage) -> Result<Latent> {
        self.encode(&image.map(to_signed))
    }

    /// Decode and map back from `[-1, 1]` to `[0, 1]`, unclamped.
    pub fn decode_signed(&self, latent: &Latent) -> Result<RgbImage> {
        Ok(self.decode(latent)?.map(from_signed))
    }
}

pub fn to_signed(v: f64) -> f64 {
    2.0 * v - 1.0
}

pub fn from_signed(v: f64) -> f64 {
    (v + 1.0) * 0.5
}
