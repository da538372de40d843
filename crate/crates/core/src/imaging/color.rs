//! Reinhard et al. (2001) color transfer in the lαβ opponent space.
//!
//! RGB -> LMS uses the published 3x3 matrix. LMS -> RGB uses its exact
//! numerical inverse rather than the 4-digit inverse printed alongside it,
//! so conversions round-trip to machine precision. The log step is
//! `log10(x + LOG_EPSILON)`, which keeps black finite and stays invertible.

use std::sync::LazyLock;

use super::RgbImage;

pub const LOG_EPSILON: f64 = 1e-6;

/// Standard deviations below this are treated as a constant channel.
const DEGENERATE_STD: f64 = 1e-6;

const RGB_TO_LMS: [[f64; 3]; 3] = [
    [0.3811, 0.5783, 0.0402],
    [0.1967, 0.7244, 0.0782],
    [0.0241, 0.1288, 0.8444],
];

static LMS_TO_RGB: LazyLock<[[f64; 3]; 3]> = LazyLock::new(|| invert3(&RGB_TO_LMS));

// lαβ = diag(1/√3, 1/√6, 1/√2) · [[1,1,1],[1,1,-2],[1,-1,0]] · log LMS
static LMS_TO_LAB: LazyLock<[[f64; 3]; 3]> = LazyLock::new(|| {
    let s = [1.0 / 3f64.sqrt(), 1.0 / 6f64.sqrt(), 1.0 / 2f64.sqrt()];
    let m = [[1.0, 1.0, 1.0], [1.0, 1.0, -2.0], [1.0, -1.0, 0.0]];
    [0, 1, 2].map(|i| m[i].map(|v| v * s[i]))
});

// log LMS = [[1,1,1],[1,1,-1],[1,-2,0]] · diag(√3/3, √6/6, √2/2) · lαβ
static LAB_TO_LMS: LazyLock<[[f64; 3]; 3]> = LazyLock::new(|| {
    let s = [3f64.sqrt() / 3.0, 6f64.sqrt() / 6.0, 2f64.sqrt() / 2.0];
    let m = [[1.0, 1.0, 1.0], [1.0, 1.0, -1.0], [1.0, -2.0, 0.0]];
    m.map(|row| [row[0] * s[0], row[1] * s[1], row[2] * s[2]])
});

fn mul3(m: &[[f64; 3]; 3], v: [f64; 3]) -> [f64; 3] {
    m.map(|row| row[0] * v[0] + row[1] * v[1] + row[2] * v[2])
}

fn invert3(m: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let cof = |r0: usize, r1: usize, c0: usize, c1: usize| m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0];
    let adj = [
        [cof(1, 2, 1, 2), -cof(0, 2, 1, 2), cof(0, 1, 1, 2)],
        [-cof(1, 2, 0, 2), cof(0, 2, 0, 2), -cof(0, 1, 0, 2)],
        [cof(1, 2, 0, 1), -cof(0, 2, 0, 1), cof(0, 1, 0, 1)],
    ];
    let det = m[0][0] * adj[0][0] + m[0][1] * adj[1][0] + m[0][2] * adj[2][0];
    adj.map(|row| row.map(|v| v / det))
}

/// Image in lαβ space, interleaved like [`RgbImage`]. Unbounded.
#[derive(Debug, Clone, PartialEq)]
pub struct LabImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl LabImage {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn pixels(&self) -> impl Iterator<Item = [f64; 3]> + '_ {
        self.data.chunks_exact(3).map(|p| [p[0], p[1], p[2]])
    }
}

/// Per-channel mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelStats {
    pub mean: [f64; 3],
    pub std: [f64; 3],
}

pub fn channel_stats(lab: &LabImage) -> ChannelStats {
    let n = (lab.data.len() / 3) as f64;
    let mut mean = [0.0; 3];
    for p in lab.pixels() {
        for c in 0..3 {
            mean[c] += p[c];
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = [0.0; 3];
    for p in lab.pixels() {
        for c in 0..3 {
            var[c] += (p[c] - mean[c]).powi(2);
        }
    }
    ChannelStats {
        mean,
        std: var.map(|v| (v / n).sqrt()),
    }
}

pub fn rgb_to_lab(image: &RgbImage) -> LabImage {
    let data = image
        .pixels()
        .flat_map(|rgb| {
            let lms = mul3(&RGB_TO_LMS, rgb).map(|v| (v + LOG_EPSILON).log10());
            mul3(&LMS_TO_LAB, lms)
        })
        .collect();
    LabImage {
        width: image.width(),
        height: image.height(),
        data,
    }
}

/// Inverse conversion without clamping.
pub fn lab_to_rgb_unclamped(lab: &LabImage) -> RgbImage {
    let data = lab
        .pixels()
        .flat_map(|p| {
            let lms = mul3(&LAB_TO_LMS, p).map(|v| 10f64.powf(v) - LOG_EPSILON);
            mul3(&LMS_TO_RGB, lms)
        })
        .collect();
    RgbImage::from_vec(lab.width, lab.height, data).expect("same pixel count")
}

pub fn lab_to_rgb(lab: &LabImage) -> RgbImage {
    lab_to_rgb_unclamped(lab).clamp_unit()
}

/// Shift and scale every lαβ channel of `source` to the reference's global
/// mean and standard deviation. Returned before conversion back to RGB.
pub fn color_transfer_lab(source: &RgbImage, reference: &RgbImage) -> LabImage {
    let src = rgb_to_lab(source);
    let src_stats = channel_stats(&src);
    let ref_stats = channel_stats(&rgb_to_lab(reference));

    let mut out = src;
    for px in out.data.chunks_exact_mut(3) {
        for c in 0..3 {
            px[c] = if src_stats.std[c] < DEGENERATE_STD {
                ref_stats.mean[c]
            } else {
                (px[c] - src_stats.mean[c]) * (ref_stats.std[c] / src_stats.std[c]) + ref_stats.mean[c]
            };
        }
    }
    out
}

pub fn color_transfer(source: &RgbImage, reference: &RgbImage) -> RgbImage {
    lab_to_rgb(&color_transfer_lab(source, reference))
}
