//! Raw cell image to standardized binary mask.
//!
//! The pipeline is: decode PNG, resize to 128x128 with Gaussian anti-aliasing,
//! collapse to a luma channel, pick a global Otsu threshold and binarize with
//! a configurable polarity.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Side length of every standardized image.
pub const MASK_SIDE: usize = 128;
/// Pixel count of a standardized mask.
pub const MASK_PIXELS: usize = MASK_SIDE * MASK_SIDE;

const HIST_BINS: usize = 256;
const GAUSS_TRUNCATE: f64 = 4.0;
const LUMA: [f64; 3] = [0.2125, 0.7154, 0.0721];

/// Interleaved 8-bit RGB image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        if pixels.len() != width * height * 3 {
            return Err(Error::InvalidArgument(format!(
                "pixel buffer has {} bytes, expected {}",
                pixels.len(),
                width * height * 3
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [u8; 3]) -> Result<Self> {
        let mut pixels = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                pixels.extend_from_slice(&f(x, y));
            }
        }
        Self::new(width, height, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }
}

/// Single-channel image with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width * height {
            return Err(Error::InvalidArgument(format!(
                "gray buffer of {} values does not match {width}x{height}",
                data.len()
            )));
        }
        if data.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidArgument(
                "gray intensities must lie in [0, 1]".into(),
            ));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }
}

/// Boolean mask, `true` marks the cell foreground.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if width == 0 || height == 0 || bits.len() != width * height {
            return Err(Error::InvalidArgument(format!(
                "mask buffer of {} bits does not match {width}x{height}",
                bits.len()
            )));
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn filled(width: usize, height: usize, value: bool) -> Self {
        Self {
            width,
            height,
            bits: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            bits,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.bits[y * self.width + x] = value;
    }

    pub fn complement(&self) -> Self {
        Self {
            width: self.width,
            height: self.height,
            bits: self.bits.iter().map(|b| !b).collect(),
        }
    }

    pub fn flip_horizontal(&self) -> Self {
        Self::from_fn(self.width, self.height, |x, y| self.get(self.width - 1 - x, y))
    }

    pub fn flip_vertical(&self) -> Self {
        Self::from_fn(self.width, self.height, |x, y| self.get(x, self.height - 1 - y))
    }

    /// Rotate 90 degrees clockwise.
    pub fn rotate90(&self) -> Self {
        let (w, h) = (self.height, self.width);
        Self::from_fn(w, h, |x, y| self.get(y, self.height - 1 - x))
    }
}

/// Which threshold class becomes the foreground.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolarityMode {
    /// Threshold then invert: foreground is the dark class (`intensity <= t`).
    #[default]
    Paper,
    /// Foreground is the class holding the minority of the border pixels.
    Auto,
    /// Foreground is the bright class (`intensity > t`).
    Light,
}

impl fmt::Display for PolarityMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PolarityMode::Paper => "paper",
            PolarityMode::Auto => "auto",
            PolarityMode::Light => "light",
        })
    }
}

impl FromStr for PolarityMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(PolarityMode::Paper),
            "auto" => Ok(PolarityMode::Auto),
            "light" => Ok(PolarityMode::Light),
            other => Err(Error::InvalidArgument(format!("unknown polarity `{other}`"))),
        }
    }
}

const PNG_SIGNATURE: [u8; 8] = [0x89, b'P', b'N', b'G', 0x0D, 0x0A, 0x1A, 0x0A];

/// Decode a PNG file into 8-bit RGB.
pub fn load_rgb(path: impl AsRef<Path>) -> Result<RgbImage> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_png(&bytes).map_err(|reason| Error::Decode {
        path: path.to_path_buf(),
        reason,
    })
}

/// Decode PNG bytes. Non-PNG payloads are rejected.
pub fn decode_png(bytes: &[u8]) -> std::result::Result<RgbImage, String> {
    if !bytes.starts_with(&PNG_SIGNATURE) {
        return Err("not a PNG stream".into());
    }
    let decoded = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
        .map_err(|e| e.to_string())?;
    let rgb = decoded.into_rgb8();
    let (w, h) = rgb.dimensions();
    RgbImage::new(w as usize, h as usize, rgb.into_raw()).map_err(|e| e.to_string())
}

/// Resize to 128x128. Downscaled axes are Gaussian-blurred first with
/// `sigma = max(0, (factor - 1) / 2)`, then sampled bilinearly at pixel centers.
pub fn resize_antialiased(img: &RgbImage) -> RgbImage {
    resize_to(img, MASK_SIDE, MASK_SIDE)
}

pub fn resize_to(img: &RgbImage, out_w: usize, out_h: usize) -> RgbImage {
    let (w, h) = (img.width, img.height);
    let scale_x = w as f64 / out_w as f64;
    let scale_y = h as f64 / out_h as f64;
    let sigma_x = ((scale_x - 1.0) / 2.0).max(0.0);
    let sigma_y = ((scale_y - 1.0) / 2.0).max(0.0);
    let kernel_x = gaussian_kernel(sigma_x);
    let kernel_y = gaussian_kernel(sigma_y);

    let mut out = vec![0u8; out_w * out_h * 3];
    let mut plane = vec![0.0f64; w * h];
    let mut scratch = vec![0.0f64; w * h];
    for c in 0..3 {
        for (i, v) in plane.iter_mut().enumerate() {
            *v = f64::from(img.pixels[i * 3 + c]);
        }
        if let Some(k) = &kernel_x {
            convolve_rows(&plane, &mut scratch, w, h, k);
            std::mem::swap(&mut plane, &mut scratch);
        }
        if let Some(k) = &kernel_y {
            convolve_cols(&plane, &mut scratch, w, h, k);
            std::mem::swap(&mut plane, &mut scratch);
        }
        for oy in 0..out_h {
            let (y0, y1, fy) = sample_coord(oy, scale_y, h);
            for ox in 0..out_w {
                let (x0, x1, fx) = sample_coord(ox, scale_x, w);
                let top = plane[y0 * w + x0] * (1.0 - fx) + plane[y0 * w + x1] * fx;
                let bottom = plane[y1 * w + x0] * (1.0 - fx) + plane[y1 * w + x1] * fx;
                let v = top * (1.0 - fy) + bottom * fy;
                out[(oy * out_w + ox) * 3 + c] = v.clamp(0.0, 255.0).round() as u8;
            }
        }
    }
    RgbImage {
        width: out_w,
        height: out_h,
        pixels: out,
    }
}

/// Source neighbours and interpolation weight for output index `o`.
fn sample_coord(o: usize, scale: f64, n: usize) -> (usize, usize, f64) {
    let src = (o as f64 + 0.5) * scale - 0.5;
    let base = src.floor();
    let frac = src - base;
    let i0 = base as isize;
    (mirror(i0, n), mirror(i0 + 1, n), frac)
}

/// Whole-sample symmetric boundary (`d c b | a b c d | c b a`).
fn mirror(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let mut m = i.rem_euclid(period);
    if m >= n as isize {
        m = period - m;
    }
    m as usize
}

fn gaussian_kernel(sigma: f64) -> Option<Vec<f64>> {
    if sigma <= 0.0 {
        return None;
    }
    let radius = (GAUSS_TRUNCATE * sigma + 0.5) as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|x| (-0.5 * (x as f64 / sigma).powi(2)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    Some(k)
}

fn convolve_rows(src: &[f64], dst: &mut [f64], w: usize, h: usize, k: &[f64]) {
    let r = (k.len() / 2) as isize;
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..w {
            dst[y * w + x] = k
                .iter()
                .enumerate()
                .map(|(j, kv)| kv * row[mirror(x as isize + j as isize - r, w)])
                .sum();
        }
    }
}

fn convolve_cols(src: &[f64], dst: &mut [f64], w: usize, h: usize, k: &[f64]) {
    let r = (k.len() / 2) as isize;
    for y in 0..h {
        for x in 0..w {
            dst[y * w + x] = k
                .iter()
                .enumerate()
                .map(|(j, kv)| kv * src[mirror(y as isize + j as isize - r, h) * w + x])
                .sum();
        }
    }
}

/// Luma conversion with weights 0.2125 / 0.7154 / 0.0721.
pub fn to_gray(img: &RgbImage) -> GrayImage {
    let data = img
        .pixels
        .chunks_exact(3)
        .map(|p| {
            let y = LUMA[0] * f64::from(p[0]) + LUMA[1] * f64::from(p[1]) + LUMA[2] * f64::from(p[2]);
            (y / 255.0).clamp(0.0, 1.0)
        })
        .collect();
    GrayImage {
        width: img.width,
        height: img.height,
        data,
    }
}

/// 256-bin intensity histogram spanning the observed range of an image.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub counts: Vec<u64>,
    pub min: f64,
    pub max: f64,
}

impl Histogram {
    pub fn bin_width(&self) -> f64 {
        (self.max - self.min) / self.counts.len() as f64
    }

    pub fn bin_center(&self, bin: usize) -> f64 {
        self.min + (bin as f64 + 0.5) * self.bin_width()
    }
}

pub fn intensity_histogram(img: &GrayImage) -> Result<Histogram> {
    let (min, max) = img
        .data
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if max <= min {
        return Err(Error::DegenerateImage);
    }
    let mut counts = vec![0u64; HIST_BINS];
    let norm = HIST_BINS as f64 / (max - min);
    for &v in &img.data {
        let bin = (((v - min) * norm) as usize).min(HIST_BINS - 1);
        counts[bin] += 1;
    }
    Ok(Histogram { counts, min, max })
}

/// Otsu cut on a histogram: the bin index `t` such that bins `0..=t` form the
/// low class and the between-class variance is maximal. Ties resolve to the
/// lowest index. Returns `None` if no cut separates two non-empty classes.
///
/// Comparisons are carried out on exact integers: with bin indices as the
/// intensity proxy, `w0 * w1 * (mu0 - mu1)^2` is proportional to
/// `(s0 * n1 - s1 * n0)^2 / (n0 * n1)`.
pub fn otsu_bin(counts: &[u64]) -> Option<usize> {
    if counts.len() < 2 {
        return None;
    }
    let total_n: u128 = counts.iter().map(|&c| u128::from(c)).sum();
    let total_s: u128 = counts
        .iter()
        .enumerate()
        .map(|(i, &c)| u128::from(c) * i as u128)
        .sum();

    let mut best: Option<(usize, u128, u128)> = None;
    let (mut n0, mut s0) = (0u128, 0u128);
    for (t, &c) in counts[..counts.len() - 1].iter().enumerate() {
        n0 += u128::from(c);
        s0 += u128::from(c) * t as u128;
        let n1 = total_n - n0;
        let s1 = total_s - s0;
        if n0 == 0 || n1 == 0 {
            continue;
        }
        let diff = (s0 * n1).abs_diff(s1 * n0);
        let (num, den) = (diff * diff, n0 * n1);
        let better = match best {
            None => true,
            Some((_, bnum, bden)) => ratio_greater(num, den, bnum, bden),
        };
        if better {
            best = Some((t, num, den));
        }
    }
    best.map(|(t, _, _)| t)
}

/// `a / b > c / d` for positive denominators.
fn ratio_greater(a: u128, b: u128, c: u128, d: u128) -> bool {
    match (a.checked_mul(d), c.checked_mul(b)) {
        (Some(l), Some(r)) => l > r,
        _ => (a as f64 / b as f64) > (c as f64 / d as f64),
    }
}

/// Global Otsu threshold (a bin center) over a 256-bin histogram of the
/// observed intensity range.
pub fn otsu_threshold(img: &GrayImage) -> Result<f64> {
    let hist = intensity_histogram(img)?;
    let bin = otsu_bin(&hist.counts).ok_or(Error::DegenerateImage)?;
    Ok(hist.bin_center(bin))
}

/// Split at `threshold` and choose the foreground class per `polarity`.
pub fn binarize_and_invert(img: &GrayImage, threshold: f64, polarity: PolarityMode) -> BinaryMask {
    let bright: Vec<bool> = img.data.iter().map(|&v| v > threshold).collect();
    let foreground_is_bright = match polarity {
        PolarityMode::Paper => false,
        PolarityMode::Light => true,
        PolarityMode::Auto => {
            let (w, h) = (img.width, img.height);
            let mut border = 0usize;
            let mut bright_border = 0usize;
            for y in 0..h {
                for x in 0..w {
                    if y == 0 || x == 0 || y == h - 1 || x == w - 1 {
                        border += 1;
                        bright_border += usize::from(bright[y * w + x]);
                    }
                }
            }
            // exact split falls back to the literal procedure
            2 * bright_border < border
        }
    };
    let bits = bright.into_iter().map(|b| b == foreground_is_bright).collect();
    BinaryMask {
        width: img.width,
        height: img.height,
        bits,
    }
}

/// Full preprocessing of a decoded image.
pub fn preprocess(img: &RgbImage, polarity: PolarityMode) -> Result<BinaryMask> {
    let gray = to_gray(&resize_antialiased(img));
    let threshold = otsu_threshold(&gray)?;
    Ok(binarize_and_invert(&gray, threshold, polarity))
}

pub fn preprocess_file(path: impl AsRef<Path>, polarity: PolarityMode) -> Result<BinaryMask> {
    preprocess(&load_rgb(path)?, polarity)
}

/// Binary PGM (P5), intensities scaled by 255 and rounded.
pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend(img.data.iter().map(|v| (v * 255.0).round() as u8));
    out
}

/// Binary PBM (P4); foreground pixels are written as 1 (black).
pub fn encode_pbm(mask: &BinaryMask) -> Vec<u8> {
    let mut out = format!("P4\n{} {}\n", mask.width, mask.height).into_bytes();
    let row_bytes = mask.width.div_ceil(8);
    for y in 0..mask.height {
        let mut row = vec![0u8; row_bytes];
        for x in 0..mask.width {
            if mask.get(x, y) {
                row[x / 8] |= 0x80 >> (x % 8);
            }
        }
        out.extend_from_slice(&row);
    }
    out
}
