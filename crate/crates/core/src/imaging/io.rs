//! 8-bit PNG and ASCII PPM (P3) input/output.
//!
//! PNG output is written with fixed compression and filter settings so the
//! bytes depend only on the pixel values.

use std::fs::File;
use std::io::{BufRead, BufReader, Read, Seek, Write};
use std::path::Path;

use super::{LabelGrid, RgbImage};
use crate::error::{Error, Result};

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn decode_png<R: BufRead + Seek>(reader: R) -> Result<(usize, usize, usize, Vec<u8>)> {
    let mut decoder = png::Decoder::new(reader);
    decoder.set_transformations(png::Transformations::normalize_to_color8());
    let mut reader = decoder.read_info().map_err(|e| Error::Image(e.to_string()))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::Image("png too large".into()))?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(|e| Error::Image(e.to_string()))?;
    buf.truncate(info.buffer_size());
    let channels = info.color_type.samples();
    Ok((info.width as usize, info.height as usize, channels, buf))
}

/// Any 8/16-bit PNG; grayscale is replicated and alpha dropped.
pub fn read_png(path: impl AsRef<Path>) -> Result<RgbImage> {
    let (w, h, channels, buf) = decode_png(BufReader::new(File::open(path)?))?;
    let data = buf
        .chunks_exact(channels)
        .flat_map(|px| {
            let rgb = if channels >= 3 { [px[0], px[1], px[2]] } else { [px[0]; 3] };
            rgb.map(|v| v as f64 / 255.0)
        })
        .collect();
    RgbImage::from_vec(w, h, data)
}

pub fn write_png_to<W: Write>(image: &RgbImage, out: W) -> Result<()> {
    let mut encoder = png::Encoder::new(out, image.width() as u32, image.height() as u32);
    encoder.set_color(png::ColorType::Rgb);
    encoder.set_depth(png::BitDepth::Eight);
    encoder.set_compression(png::Compression::Balanced);
    encoder.set_filter(png::Filter::NoFilter);
    let mut writer = encoder.write_header().map_err(|e| Error::Image(e.to_string()))?;
    let bytes: Vec<u8> = image.as_slice().iter().map(|&v| quantize(v)).collect();
    writer
        .write_image_data(&bytes)
        .map_err(|e| Error::Image(e.to_string()))?;
    writer.finish().map_err(|e| Error::Image(e.to_string()))?;
    Ok(())
}

pub fn write_png(image: &RgbImage, path: impl AsRef<Path>) -> Result<()> {
    let mut bytes = Vec::new();
    write_png_to(image, &mut bytes)?;
    crate::weights::write_atomic(path.as_ref(), &bytes)?;
    Ok(())
}

/// Mask PNG: the first channel of each pixel is its label.
pub fn read_mask(path: impl AsRef<Path>) -> Result<LabelGrid> {
    let (w, h, channels, buf) = decode_png(BufReader::new(File::open(path)?))?;
    let labels = buf.chunks_exact(channels).map(|px| px[0] as u32).collect();
    LabelGrid::new(w, h, labels)
}

/// 8-bit grayscale PNG with one label per pixel.
pub fn write_mask_png(mask: &LabelGrid, path: impl AsRef<Path>) -> Result<()> {
    if let Some(l) = mask.max_label().filter(|&l| l > 255) {
        return Err(Error::Image(format!("label {l} does not fit in 8 bits")));
    }
    let mut bytes = Vec::new();
    {
        let mut encoder = png::Encoder::new(&mut bytes, mask.width() as u32, mask.height() as u32);
        encoder.set_color(png::ColorType::Grayscale);
        encoder.set_depth(png::BitDepth::Eight);
        encoder.set_compression(png::Compression::Balanced);
        encoder.set_filter(png::Filter::NoFilter);
        let mut writer = encoder.write_header().map_err(|e| Error::Image(e.to_string()))?;
        let data: Vec<u8> = mask.labels().iter().map(|&l| l as u8).collect();
        writer
            .write_image_data(&data)
            .map_err(|e| Error::Image(e.to_string()))?;
        writer.finish().map_err(|e| Error::Image(e.to_string()))?;
    }
    crate::weights::write_atomic(path.as_ref(), &bytes)?;
    Ok(())
}

pub fn write_ppm<W: Write>(image: &RgbImage, mut out: W) -> Result<()> {
    writeln!(out, "P3\n{} {}\n255", image.width(), image.height())?;
    for y in 0..image.height() {
        let row: Vec<String> = (0..image.width())
            .flat_map(|x| image.pixel(x, y).map(quantize))
            .map(|v| v.to_string())
            .collect();
        writeln!(out, "{}", row.join(" "))?;
    }
    Ok(())
}

pub fn read_ppm<R: Read>(mut input: R) -> Result<RgbImage> {
    let mut text = String::new();
    input.read_to_string(&mut text)?;
    let mut tokens = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or(""))
        .flat_map(str::split_whitespace);
    let bad = |what: &str| Error::Image(format!("ppm: {what}"));
    if tokens.next() != Some("P3") {
        return Err(bad("expected P3 header"));
    }
    let mut number = |what: &str| -> Result<usize> {
        tokens
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| bad(what))
    };
    let (w, h, max) = (number("width")?, number("height")?, number("maxval")?);
    if max == 0 {
        return Err(bad("maxval must be positive"));
    }
    let data = (0..w * h * 3)
        .map(|_| number("sample").map(|v| v as f64 / max as f64))
        .collect::<Result<Vec<_>>>()?;
    RgbImage::from_vec(w, h, data)
}

/// PNG or PPM, chosen by extension.
pub fn read_image(path: impl AsRef<Path>) -> Result<RgbImage> {
    let path = path.as_ref();
    match path.extension().and_then(|e| e.to_str()) {
        Some("ppm") => read_ppm(BufReader::new(File::open(path)?)),
        _ => read_png(path),
    }
}

#[cfg(test)]
pub(crate) fn decode_png_bytes(bytes: &[u8]) -> Result<RgbImage> {
    let (w, h, channels, buf) = decode_png(std::io::Cursor::new(bytes))?;
    let data = buf
        .chunks_exact(channels)
        .flat_map(|px| [px[0], px[1], px[2]].map(|v| v as f64 / 255.0))
        .collect();
    RgbImage::from_vec(w, h, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> RgbImage {
        RgbImage::from_fn(5, 3, |x, y| [x as f64 / 4.0, y as f64 / 2.0, 0.5])
    }

    #[test]
    fn png_round_trip_quantized() {
        let img = sample();
        let mut bytes = Vec::new();
        write_png_to(&img, &mut bytes).unwrap();
        let back = decode_png_bytes(&bytes).unwrap();
        assert_eq!(back.width(), 5);
        for (a, b) in img.as_slice().iter().zip(back.as_slice()) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
        }
        let mut again = Vec::new();
        write_png_to(&img, &mut again).unwrap();
        assert_eq!(bytes, again);
    }

    #[test]
    fn ppm_round_trip() {
        let img = sample();
        let mut text = Vec::new();
        write_ppm(&img, &mut text).unwrap();
        let back = read_ppm(text.as_slice()).unwrap();
        for (a, b) in img.as_slice().iter().zip(back.as_slice()) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
        }
        assert!(read_ppm("P6 1 1 255 0 0 0".as_bytes()).is_err());
        assert!(read_ppm("P3 2 1 255 0 0 0".as_bytes()).is_err());
    }

    #[test]
    fn mask_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.png");
        let mask = LabelGrid::from_fn(6, 4, |x, y| ((x + y) % 3) as u32);
        write_mask_png(&mask, &path).unwrap();
        assert_eq!(read_mask(&path).unwrap(), mask);
    }
}
