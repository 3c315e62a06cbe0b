//! 16-bit grayscale PNG output, experimental-image import and the summary
//! statistics used to compare synthetic with experimental frames.
//!
//! Every PNG written here carries a `range` text chunk `"lo hi"`: pixel value
//! `p` stands for intensity `lo + p·(hi − lo)/65535`.

use std::io::Cursor;

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pipeline::ImageData;

pub const RANGE_KEYWORD: &str = "range";

/// Default upload limit for decoded experimental images (pixels).
pub const MAX_IMPORT_PIXELS: u64 = 1 << 26;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("unsupported array for png16: {0}")]
    UnsupportedShape(String),
    #[error("cannot decode image: {0}")]
    Decode(String),
    #[error("cannot encode png: {0}")]
    Encode(String),
    #[error("{width}×{height} image exceeds the {limit}-pixel limit")]
    TooLarge { width: u32, height: u32, limit: u64 },
}

/// Encodes a 2-D real array as 16-bit grayscale, mapping `range` onto
/// `0..=65535` (values outside are clamped). Without a declared range the
/// array must be non-negative and `[0, max]` is used.
pub fn png16_bytes(a: ArrayView2<'_, f64>, range: Option<[f64; 2]>) -> Result<(Vec<u8>, [f64; 2]), ImageError> {
    if a.iter().any(|v| !v.is_finite()) {
        return Err(ImageError::UnsupportedShape("array contains non-finite values".into()));
    }
    let range = match range {
        Some([lo, hi]) if lo < hi && lo.is_finite() && hi.is_finite() => [lo, hi],
        Some([lo, hi]) => return Err(ImageError::UnsupportedShape(format!("invalid range [{lo}, {hi}]"))),
        None => {
            let min = a.iter().cloned().fold(f64::INFINITY, f64::min);
            if min < 0.0 {
                return Err(ImageError::UnsupportedShape(format!(
                    "negative values (min {min}) need a declared range"
                )));
            }
            let max = a.iter().cloned().fold(0.0, f64::max);
            [0.0, if max > 0.0 { max } else { 1.0 }]
        }
    };
    encode(a, range)
}

/// Display preview: min–max scaled per image. Complex data shows the
/// modulus, volumes their maximum projection along the last axis.
pub fn preview_png(data: &ImageData) -> Result<(Vec<u8>, [f64; 2]), ImageError> {
    let plane = display_plane(data)?;
    let (lo, hi) = plane.iter().filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    let range = if lo < hi { [lo, hi] } else if lo.is_finite() { [lo, lo + 1.0] } else { [0.0, 1.0] };
    encode(plane.mapv(|v| if v.is_finite() { v } else { range[0] }).view(), range)
}

/// The 2-D real plane shown for `data`.
pub fn display_plane(data: &ImageData) -> Result<Array2<f64>, ImageError> {
    let real = match data {
        ImageData::Real(a) => a.clone(),
        ImageData::Complex(a) => a.mapv(|v| v.norm()),
    };
    match real.ndim() {
        2 => Ok(real.into_dimensionality().expect("2-D")),
        3 => Ok(real
            .fold_axis(Axis(2), f64::NEG_INFINITY, |m, &v| m.max(v))
            .into_dimensionality()
            .expect("2-D projection")),
        n => Err(ImageError::UnsupportedShape(format!("{n}-D arrays have no 2-D preview"))),
    }
}

fn encode(a: ArrayView2<'_, f64>, [lo, hi]: [f64; 2]) -> Result<(Vec<u8>, [f64; 2]), ImageError> {
    let (h, w) = a.dim();
    if h == 0 || w == 0 || h > u32::MAX as usize || w > u32::MAX as usize {
        return Err(ImageError::UnsupportedShape(format!("{h}×{w} image")));
    }
    let mut buf = Vec::new();
    {
        let mut enc = png::Encoder::new(Cursor::new(&mut buf), w as u32, h as u32);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::Sixteen);
        enc.add_text_chunk(RANGE_KEYWORD.to_string(), format!("{lo:?} {hi:?}"))
            .map_err(|e| ImageError::Encode(e.to_string()))?;
        let mut writer = enc.write_header().map_err(|e| ImageError::Encode(e.to_string()))?;
        let scale = 65535.0 / (hi - lo);
        let mut px = Vec::with_capacity(2 * h * w);
        for &v in a.iter() {
            let q = ((v - lo) * scale).round().clamp(0.0, 65535.0) as u16;
            px.extend_from_slice(&q.to_be_bytes());
        }
        writer.write_image_data(&px).map_err(|e| ImageError::Encode(e.to_string()))?;
        writer.finish().map_err(|e| ImageError::Encode(e.to_string()))?;
    }
    Ok((buf, [lo, hi]))
}

/// A decoded 16-bit grayscale PNG: raw pixel values and the declared range.
#[derive(Debug, Clone, PartialEq)]
pub struct Png16 {
    pub pixels: Array2<u16>,
    pub range: Option<[f64; 2]>,
}

impl Png16 {
    /// Pixel values mapped back to intensities (raw values without a range).
    pub fn intensities(&self) -> Array2<f64> {
        match self.range {
            Some([lo, hi]) => self.pixels.mapv(|p| lo + f64::from(p) * (hi - lo) / 65535.0),
            None => self.pixels.mapv(f64::from),
        }
    }
}

/// Decodes a 16-bit grayscale PNG written by [`png16_bytes`] or [`preview_png`].
pub fn read_png16(bytes: &[u8]) -> Result<Png16, ImageError> {
    let decoder = png::Decoder::new(Cursor::new(bytes));
    let mut reader = decoder.read_info().map_err(|e| ImageError::Decode(e.to_string()))?;
    let info = reader.info();
    if info.color_type != png::ColorType::Grayscale || info.bit_depth != png::BitDepth::Sixteen {
        return Err(ImageError::Decode(format!("expected 16-bit grayscale, found {:?} {:?}", info.color_type, info.bit_depth)));
    }
    let (w, h) = (info.width as usize, info.height as usize);
    if (w as u64) * (h as u64) > MAX_IMPORT_PIXELS {
        return Err(ImageError::Decode(format!("{w}×{h} image exceeds the pixel limit")));
    }
    let range = info
        .uncompressed_latin1_text
        .iter()
        .find(|t| t.keyword == RANGE_KEYWORD)
        .and_then(|t| parse_range(&t.text));
    let mut buf = vec![0; reader.output_buffer_size().ok_or_else(|| ImageError::Decode("image too large".into()))?];
    let frame = reader.next_frame(&mut buf).map_err(|e| ImageError::Decode(e.to_string()))?;
    let data = &buf[..frame.buffer_size()];
    let px: Vec<u16> = data.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect();
    let pixels = Array2::from_shape_vec((h, w), px).map_err(|e| ImageError::Decode(e.to_string()))?;
    Ok(Png16 { pixels, range })
}

fn parse_range(text: &str) -> Option<[f64; 2]> {
    let mut it = text.split_whitespace().map(str::parse::<f64>);
    match (it.next(), it.next(), it.next()) {
        (Some(Ok(lo)), Some(Ok(hi)), None) if lo < hi => Some([lo, hi]),
        _ => None,
    }
}

/// Decodes a PNG or TIFF to a grayscale plane. Integer formats are scaled
/// to `[0, 1]`; float formats keep their values. A `range` chunk, when
/// present, maps 16-bit PNG values back to intensities.
pub fn import_image(bytes: &[u8]) -> Result<Array2<f64>, ImageError> {
    import_image_limited(bytes, MAX_IMPORT_PIXELS)
}

pub fn import_image_limited(bytes: &[u8], max_pixels: u64) -> Result<Array2<f64>, ImageError> {
    if let Ok(p) = read_png16(bytes) {
        if p.range.is_some() && (p.pixels.len() as u64) <= max_pixels {
            return Ok(p.intensities());
        }
    }
    let reader = image::ImageReader::new(Cursor::new(bytes))
        .with_guessed_format()
        .map_err(|e| ImageError::Decode(e.to_string()))?;
    let tiff = match reader.format() {
        Some(image::ImageFormat::Png) => false,
        Some(image::ImageFormat::Tiff) => true,
        other => return Err(ImageError::Decode(format!("unsupported format {other:?} (PNG or TIFF expected)"))),
    };
    let img = match decode_with_limit(bytes, max_pixels) {
        Ok(img) => img,
        Err(e @ ImageError::TooLarge { .. }) => return Err(e),
        Err(ImageError::Decode(e)) if tiff => {
            return gray_tiff(bytes, max_pixels).map_err(|t| match t {
                ImageError::Decode(t) => ImageError::Decode(format!("{e}; {t}")),
                other => other,
            })
        }
        Err(e) => return Err(e),
    };
    let luma = img.to_luma32f();
    let (w, h) = luma.dimensions();
    let v: Vec<f64> = luma.into_raw().into_iter().map(f64::from).collect();
    Array2::from_shape_vec((h as usize, w as usize), v).map_err(|e| ImageError::Decode(e.to_string()))
}

fn check_pixels(w: u32, h: u32, limit: u64) -> Result<(), ImageError> {
    if u64::from(w) * u64::from(h) > limit {
        return Err(ImageError::TooLarge { width: w, height: h, limit });
    }
    Ok(())
}

fn decode_with_limit(bytes: &[u8], max_pixels: u64) -> Result<image::DynamicImage, ImageError> {
    let decode = |e: image::ImageError| ImageError::Decode(e.to_string());
    let reader = image::ImageReader::new(Cursor::new(bytes)).with_guessed_format().map_err(|e| ImageError::Decode(e.to_string()))?;
    let (w, h) = reader.into_dimensions().map_err(decode)?;
    check_pixels(w, h, max_pixels)?;
    let mut reader = image::ImageReader::new(Cursor::new(bytes)).with_guessed_format().map_err(|e| ImageError::Decode(e.to_string()))?;
    reader.limits(image::Limits::default());
    reader.decode().map_err(decode)
}

/// Single-channel TIFF the `image` decoder rejects (32-bit float, 32-bit
/// integer, 64-bit float). Integers scale to `[0, 1]`; floats are kept.
fn gray_tiff(bytes: &[u8], max_pixels: u64) -> Result<Array2<f64>, ImageError> {
    use tiff::decoder::{Decoder, DecodingResult};
    let decode = |e: tiff::TiffError| ImageError::Decode(e.to_string());
    let mut d = Decoder::new(Cursor::new(bytes)).map_err(decode)?;
    let (w, h) = d.dimensions().map_err(decode)?;
    check_pixels(w, h, max_pixels)?;
    match d.colortype().map_err(decode)? {
        tiff::ColorType::Gray(_) => {}
        other => return Err(ImageError::Decode(format!("unsupported TIFF color type {other:?}"))),
    }
    let v: Vec<f64> = match d.read_image().map_err(decode)? {
        DecodingResult::U8(v) => v.into_iter().map(|x| f64::from(x) / f64::from(u8::MAX)).collect(),
        DecodingResult::U16(v) => v.into_iter().map(|x| f64::from(x) / f64::from(u16::MAX)).collect(),
        DecodingResult::U32(v) => v.into_iter().map(|x| f64::from(x) / f64::from(u32::MAX)).collect(),
        DecodingResult::F32(v) => v.into_iter().map(f64::from).collect(),
        DecodingResult::F64(v) => v,
        _ => return Err(ImageError::Decode("unsupported TIFF sample format".into())),
    };
    Array2::from_shape_vec((h as usize, w as usize), v).map_err(|e| ImageError::Decode(e.to_string()))
}

/// Bins of the comparison histograms.
pub const HISTOGRAM_BINS: usize = 64;

/// Summary statistics of one frame.
///
/// The background is the median and the noise the MAD-based standard
/// deviation `1.4826·median|v − bg|`. The SNR follows the noise module's
/// definition `(peak − bg)/σ_bg`, which for shot-noise-limited frames equals
/// `(peak − bg)/√bg` in photon units and is independent of the intensity
/// scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameStats {
    pub height: usize,
    pub width: usize,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub background: f64,
    pub noise: f64,
    pub snr: Option<f64>,
    /// Normalised histogram over the frame's own `[min, max]`.
    pub histogram: Vec<f64>,
}

pub fn frame_stats(a: ArrayView2<'_, f64>) -> FrameStats {
    let mut v: Vec<f64> = a.iter().copied().filter(|x| x.is_finite()).collect();
    v.sort_by(f64::total_cmp);
    let (height, width) = a.dim();
    if v.is_empty() {
        return FrameStats {
            height,
            width,
            min: 0.0,
            max: 0.0,
            mean: 0.0,
            background: 0.0,
            noise: 0.0,
            snr: None,
            histogram: vec![0.0; HISTOGRAM_BINS],
        };
    }
    let (min, max) = (v[0], v[v.len() - 1]);
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let background = median(&v);
    let mut dev: Vec<f64> = v.iter().map(|x| (x - background).abs()).collect();
    dev.sort_by(f64::total_cmp);
    let noise = 1.4826 * median(&dev);
    let snr = (noise > 0.0).then(|| (max - background) / noise);
    FrameStats { height, width, min, max, mean, background, noise, snr, histogram: histogram(&v, min, max) }
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

fn histogram(v: &[f64], min: f64, max: f64) -> Vec<f64> {
    let mut h = vec![0.0; HISTOGRAM_BINS];
    let span = max - min;
    for &x in v {
        let b = if span > 0.0 { (((x - min) / span) * HISTOGRAM_BINS as f64) as usize } else { 0 };
        h[b.min(HISTOGRAM_BINS - 1)] += 1.0;
    }
    let n = v.len() as f64;
    h.iter_mut().for_each(|c| *c /= n);
    h
}

/// Side-by-side statistics. No spatial registration is attempted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub synthetic: FrameStats,
    pub experimental: FrameStats,
    /// `Σ min(p, q)` of the two min–max normalised histograms, in `[0, 1]`.
    pub histogram_overlap: f64,
}

pub fn compare_frames(synthetic: ArrayView2<'_, f64>, experimental: ArrayView2<'_, f64>) -> Comparison {
    let s = frame_stats(synthetic);
    let e = frame_stats(experimental);
    let histogram_overlap = s.histogram.iter().zip(&e.histogram).map(|(a, b)| a.min(*b)).sum();
    Comparison { synthetic: s, experimental: e, histogram_overlap }
}
