//! Boolean masks and float images with PGM/PPM I/O.

use std::fs;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("raster dimensions must be positive (got {width}x{height})")]
    ZeroSize { width: usize, height: usize },
    #[error("dimension mismatch: {0}x{1} vs {2}x{3}")]
    Mismatch(usize, usize, usize, usize),
    #[error("{0} data values for a {1}-pixel raster")]
    DataLength(usize, usize),
    #[error("unsupported channel count {0} (expected 1 or 3)")]
    Channels(usize),
    #[error("{path}: i/o error: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad netpbm data: {0}")]
    Format(String),
}

/// Half-open pixel rectangle `[x, x+w) × [y, y+h)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl Rect {
    pub fn area(&self) -> usize {
        self.w * self.h
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x && x < self.x + self.w && y >= self.y && y < self.y + self.h
    }
}

/// Boolean raster, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize) -> Result<Self, RasterError> {
        if width == 0 || height == 0 {
            return Err(RasterError::ZeroSize { width, height });
        }
        Ok(Self { width, height, bits: vec![false; width * height] })
    }

    pub fn from_bits(width: usize, height: usize, bits: Vec<bool>) -> Result<Self, RasterError> {
        let mut m = Self::new(width, height)?;
        if bits.len() != width * height {
            return Err(RasterError::DataLength(bits.len(), width * height));
        }
        m.bits = bits;
        Ok(m)
    }

    pub fn full(width: usize, height: usize) -> Result<Self, RasterError> {
        let mut m = Self::new(width, height)?;
        m.bits.fill(true);
        Ok(m)
    }

    pub fn from_rect(width: usize, height: usize, r: Rect) -> Result<Self, RasterError> {
        let mut m = Self::new(width, height)?;
        for y in r.y..(r.y + r.h).min(height) {
            for x in r.x..(r.x + r.w).min(width) {
                m.set(x, y, true);
            }
        }
        Ok(m)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    fn check_dims(&self, other: &Mask) -> Result<(), RasterError> {
        if self.width != other.width || self.height != other.height {
            return Err(RasterError::Mismatch(self.width, self.height, other.width, other.height));
        }
        Ok(())
    }

    fn zip_with(&self, other: &Mask, f: impl Fn(bool, bool) -> bool) -> Result<Mask, RasterError> {
        self.check_dims(other)?;
        Ok(Mask {
            width: self.width,
            height: self.height,
            bits: self.bits.iter().zip(&other.bits).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn and(&self, other: &Mask) -> Result<Mask, RasterError> {
        self.zip_with(other, |a, b| a && b)
    }

    pub fn or(&self, other: &Mask) -> Result<Mask, RasterError> {
        self.zip_with(other, |a, b| a || b)
    }

    pub fn and_not(&self, other: &Mask) -> Result<Mask, RasterError> {
        self.zip_with(other, |a, b| a && !b)
    }

    pub fn not(&self) -> Mask {
        Mask { width: self.width, height: self.height, bits: self.bits.iter().map(|b| !b).collect() }
    }

    /// `true` when every set pixel of `self` is also set in `other`.
    pub fn is_subset_of(&self, other: &Mask) -> bool {
        self.width == other.width
            && self.height == other.height
            && self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }

    /// Intersection over union; 0 when both are empty.
    pub fn iou(&self, other: &Mask) -> Result<f64, RasterError> {
        self.check_dims(other)?;
        let (mut inter, mut union) = (0usize, 0usize);
        for (&a, &b) in self.bits.iter().zip(&other.bits) {
            inter += (a && b) as usize;
            union += (a || b) as usize;
        }
        Ok(if union == 0 { 0.0 } else { inter as f64 / union as f64 })
    }

    /// Tight bounding rectangle of the set pixels.
    pub fn bbox(&self) -> Option<Rect> {
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
        let mut any = false;
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    any = true;
                    x0 = x0.min(x);
                    y0 = y0.min(y);
                    x1 = x1.max(x);
                    y1 = y1.max(y);
                }
            }
        }
        any.then(|| Rect { x: x0, y: y0, w: x1 - x0 + 1, h: y1 - y0 + 1 })
    }

    /// Binary PGM (P5), 255 for set pixels and 0 otherwise.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.bits.iter().map(|&b| if b { 255u8 } else { 0 }));
        out
    }

    /// Reads a P5 PGM; any nonzero byte is a set pixel.
    pub fn from_pgm(bytes: &[u8]) -> Result<Mask, RasterError> {
        let (magic, w, h, maxval, data) = parse_netpbm(bytes)?;
        if magic != "P5" || maxval > 255 {
            return Err(RasterError::Format(format!("expected 8-bit P5, got {magic} max {maxval}")));
        }
        if data.len() < w * h {
            return Err(RasterError::DataLength(data.len(), w * h));
        }
        Mask::from_bits(w, h, data[..w * h].iter().map(|&b| b != 0).collect())
    }

    pub fn save_pgm(&self, path: impl AsRef<Path>) -> Result<(), RasterError> {
        write_bytes(path.as_ref(), &self.to_pgm())
    }

    pub fn load_pgm(path: impl AsRef<Path>) -> Result<Mask, RasterError> {
        Mask::from_pgm(&read_bytes(path.as_ref())?)
    }
}

/// Float image with 1 or 3 interleaved channels, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize) -> Result<Self, RasterError> {
        Self::filled(width, height, channels, 0.0)
    }

    pub fn filled(width: usize, height: usize, channels: usize, v: f64) -> Result<Self, RasterError> {
        if width == 0 || height == 0 {
            return Err(RasterError::ZeroSize { width, height });
        }
        if channels != 1 && channels != 3 {
            return Err(RasterError::Channels(channels));
        }
        Ok(Self { width, height, channels, data: vec![v; width * height * channels] })
    }

    pub fn from_data(
        width: usize,
        height: usize,
        channels: usize,
        data: Vec<f64>,
    ) -> Result<Self, RasterError> {
        let mut img = Self::new(width, height, channels)?;
        if data.len() != img.data.len() {
            return Err(RasterError::DataLength(data.len(), img.data.len()));
        }
        img.data = data;
        Ok(img)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f64) {
        self.data[(y * self.width + x) * self.channels + c] = v;
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    /// Values in [0, 1] are written as 8-bit P5 (1 channel) or P6 (3 channels).
    pub fn to_netpbm(&self) -> Vec<u8> {
        let magic = if self.channels == 1 { "P5" } else { "P6" };
        let mut out = format!("{magic}\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.data.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
        out
    }

    pub fn from_netpbm(bytes: &[u8]) -> Result<Image, RasterError> {
        let (magic, w, h, maxval, data) = parse_netpbm(bytes)?;
        let channels = match magic.as_str() {
            "P5" => 1,
            "P6" => 3,
            other => return Err(RasterError::Format(format!("unsupported magic {other}"))),
        };
        if maxval == 0 || maxval > 255 {
            return Err(RasterError::Format(format!("unsupported maxval {maxval}")));
        }
        let n = w * h * channels;
        if data.len() < n {
            return Err(RasterError::DataLength(data.len(), n));
        }
        let scale = maxval as f64;
        Image::from_data(w, h, channels, data[..n].iter().map(|&b| b as f64 / scale).collect())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), RasterError> {
        write_bytes(path.as_ref(), &self.to_netpbm())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Image, RasterError> {
        Image::from_netpbm(&read_bytes(path.as_ref())?)
    }
}

fn read_bytes(path: &Path) -> Result<Vec<u8>, RasterError> {
    fs::read(path).map_err(|source| RasterError::Io { path: path.display().to_string(), source })
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), RasterError> {
    fs::write(path, bytes).map_err(|source| RasterError::Io { path: path.display().to_string(), source })
}

/// Splits a binary netpbm file into (magic, width, height, maxval, payload).
fn parse_netpbm(bytes: &[u8]) -> Result<(String, usize, usize, usize, &[u8]), RasterError> {
    let mut pos = 0;
    let mut fields = Vec::new();
    while fields.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(RasterError::Format("truncated header".into()));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let num = |s: &str| s.parse::<usize>().map_err(|_| RasterError::Format(format!("bad number '{s}'")));
    let (w, h, maxval) = (num(&fields[1])?, num(&fields[2])?, num(&fields[3])?);
    if w == 0 || h == 0 {
        return Err(RasterError::ZeroSize { width: w, height: h });
    }
    Ok((fields[0].clone(), w, h, maxval, bytes.get(pos..).unwrap_or(&[])))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_size_rejected() {
        assert!(Mask::new(0, 3).is_err());
        assert!(Image::new(2, 0, 1).is_err());
        assert!(Image::new(2, 2, 2).is_err());
    }

    #[test]
    fn pgm_round_trip_is_bit_exact() {
        let mut m = Mask::new(5, 3).unwrap();
        m.set(0, 0, true);
        m.set(4, 2, true);
        let bytes = m.to_pgm();
        assert_eq!(&bytes[..11], b"P5\n5 3\n255\n");
        assert_eq!(bytes[11], 255);
        assert_eq!(bytes[12], 0);
        assert_eq!(Mask::from_pgm(&bytes).unwrap(), m);
    }

    #[test]
    fn image_round_trip_8bit() {
        let data: Vec<f64> = (0..12).map(|i| i as f64 / 255.0).collect();
        let img = Image::from_data(2, 2, 3, data).unwrap();
        let back = Image::from_netpbm(&img.to_netpbm()).unwrap();
        for (a, b) in img.data().iter().zip(back.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn iou_and_bbox() {
        let a = Mask::from_rect(10, 10, Rect { x: 0, y: 0, w: 4, h: 4 }).unwrap();
        let b = Mask::from_rect(10, 10, Rect { x: 2, y: 2, w: 4, h: 4 }).unwrap();
        assert!((a.iou(&b).unwrap() - 4.0 / 28.0).abs() < 1e-15);
        assert_eq!(b.bbox(), Some(Rect { x: 2, y: 2, w: 4, h: 4 }));
        assert_eq!(Mask::new(3, 3).unwrap().bbox(), None);
    }
}
