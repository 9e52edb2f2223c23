//! Binary PPM (P6) and PFM images.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::imaging::Image;
use crate::scene::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageFormat {
    Ppm,
    Pfm,
}

impl ImageFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()) {
            Some(e) if e == "ppm" => Ok(ImageFormat::Ppm),
            Some(e) if e == "pfm" => Ok(ImageFormat::Pfm),
            _ => Err(Error::Format(format!(
                "cannot infer image format of {} (use .ppm or .pfm)",
                path.display()
            ))),
        }
    }
}

/// Reads whitespace-separated header tokens (with `#` comments).
struct Header<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Header<'a> {
    fn token(&mut self) -> Result<&'a str> {
        loop {
            while self.pos < self.data.len() && self.data[self.pos].is_ascii_whitespace() {
                self.pos += 1;
            }
            if self.pos < self.data.len() && self.data[self.pos] == b'#' {
                while self.pos < self.data.len() && self.data[self.pos] != b'\n' {
                    self.pos += 1;
                }
                continue;
            }
            break;
        }
        let start = self.pos;
        while self.pos < self.data.len() && !self.data[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::Format("truncated header".into()));
        }
        std::str::from_utf8(&self.data[start..self.pos]).map_err(|_| Error::Format("non-ASCII header".into()))
    }

    fn number<T: std::str::FromStr>(&mut self, what: &str) -> Result<T> {
        let t = self.token()?;
        t.parse()
            .map_err(|_| Error::Format(format!("malformed {what} `{t}` in header")))
    }

    /// Skips the single whitespace byte ending the header.
    fn payload(self) -> Result<&'a [u8]> {
        if self.pos >= self.data.len() || !self.data[self.pos].is_ascii_whitespace() {
            return Err(Error::Format("missing payload".into()));
        }
        Ok(&self.data[self.pos + 1..])
    }
}

fn dimensions(h: &mut Header) -> Result<(usize, usize)> {
    let w: usize = h.number("width")?;
    let ht: usize = h.number("height")?;
    if w == 0 || ht == 0 {
        return Err(Error::Format(format!("empty image {w}x{ht}")));
    }
    Ok((w, ht))
}

fn decode_ppm(data: &[u8]) -> Result<Image> {
    let mut h = Header { data, pos: 0 };
    if h.token()? != "P6" {
        return Err(Error::Format("not a binary PPM (P6)".into()));
    }
    let (w, ht) = dimensions(&mut h)?;
    let maxval: u32 = h.number("maxval")?;
    if maxval == 0 || maxval > 65535 {
        return Err(Error::Format(format!("maxval {maxval} out of range")));
    }
    let payload = h.payload()?;
    let bytes = if maxval < 256 { 1 } else { 2 };
    let need = w * ht * 3 * bytes;
    if payload.len() < need {
        return Err(Error::Format(format!(
            "truncated payload: {} of {need} bytes",
            payload.len()
        )));
    }
    let scale = 1.0 / f64::from(maxval);
    let sample = |i: usize| -> f64 {
        let v = if bytes == 1 {
            u32::from(payload[i])
        } else {
            u32::from(u16::from_be_bytes([payload[2 * i], payload[2 * i + 1]]))
        };
        f64::from(v.min(maxval)) * scale
    };
    let pixels = (0..w * ht)
        .map(|p| Vec3::new(sample(3 * p), sample(3 * p + 1), sample(3 * p + 2)))
        .collect();
    Image::from_pixels(w, ht, pixels)
}

fn encode_ppm(image: &Image, gamma: bool) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", image.width, image.height).into_bytes();
    for p in &image.pixels {
        for c in p.iter() {
            let mut v = c.clamp(0.0, 1.0);
            if gamma {
                v = v.powf(1.0 / 2.2);
            }
            out.push((v * 255.0).round() as u8);
        }
    }
    out
}

/// Channels per pixel and little-endianness, plus the float grid in
/// top-to-bottom row order.
fn decode_pfm(data: &[u8]) -> Result<(usize, usize, usize, Vec<f32>)> {
    let mut h = Header { data, pos: 0 };
    let channels = match h.token()? {
        "PF" => 3,
        "Pf" => 1,
        other => return Err(Error::Format(format!("not a PFM (magic `{other}`)"))),
    };
    let (w, ht) = dimensions(&mut h)?;
    let scale: f64 = h.number("scale")?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::Format("PFM scale must be nonzero".into()));
    }
    let little = scale < 0.0;
    let payload = h.payload()?;
    let need = w * ht * channels * 4;
    if payload.len() < need {
        return Err(Error::Format(format!(
            "truncated payload: {} of {need} bytes",
            payload.len()
        )));
    }
    let mut values = vec![0f32; w * ht * channels];
    for row in 0..ht {
        // Stored bottom row first.
        let dst = (ht - 1 - row) * w * channels;
        for i in 0..w * channels {
            let o = 4 * (row * w * channels + i);
            let b = [payload[o], payload[o + 1], payload[o + 2], payload[o + 3]];
            let v = if little { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) };
            if !v.is_finite() {
                return Err(Error::Format(format!("non-finite value in PFM at row {row}")));
            }
            values[dst + i] = v;
        }
    }
    Ok((w, ht, channels, values))
}

fn encode_pfm(width: usize, height: usize, channels: usize, values: &[f32]) -> Vec<u8> {
    let magic = if channels == 3 { "PF" } else { "Pf" };
    let mut out = format!("{magic}\n{width} {height}\n-1.0\n").into_bytes();
    for row in (0..height).rev() {
        let start = row * width * channels;
        for v in &values[start..start + width * channels] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn read_image(path: &Path) -> Result<Image> {
    let data = fs::read(path)?;
    if data.starts_with(b"P6") {
        return decode_ppm(&data);
    }
    if data.starts_with(b"PF") || data.starts_with(b"Pf") {
        let (w, h, ch, v) = decode_pfm(&data)?;
        let pixels = (0..w * h)
            .map(|p| {
                if ch == 3 {
                    Vec3::new(f64::from(v[3 * p]), f64::from(v[3 * p + 1]), f64::from(v[3 * p + 2]))
                } else {
                    Vec3::repeat(f64::from(v[p]))
                }
            })
            .collect();
        return Image::from_pixels(w, h, pixels);
    }
    Err(Error::Format(format!("{}: unrecognized image format", path.display())))
}

/// Reads a greyscale PFM of per-pixel weights.
pub fn read_weights(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let data = fs::read(path)?;
    let (w, h, ch, v) = decode_pfm(&data)?;
    if ch != 1 {
        return Err(Error::Format("weights must be a greyscale (Pf) PFM".into()));
    }
    Ok((w, h, v.into_iter().map(f64::from).collect()))
}

pub fn write_ppm(path: &Path, image: &Image, gamma: bool) -> Result<()> {
    fs::write(path, encode_ppm(image, gamma))?;
    Ok(())
}

/// Writes the color channels as a `PF` file.
pub fn write_pfm(path: &Path, image: &Image) -> Result<()> {
    let values: Vec<f32> = image.pixels.iter().flat_map(|p| [p.x as f32, p.y as f32, p.z as f32]).collect();
    fs::write(path, encode_pfm(image.width, image.height, 3, &values))?;
    Ok(())
}

/// Writes `image` in the format implied by the extension.
pub fn write_image(path: &Path, image: &Image, gamma: bool) -> Result<()> {
    match ImageFormat::from_path(path)? {
        ImageFormat::Ppm => write_ppm(path, image, gamma),
        ImageFormat::Pfm => write_pfm(path, image),
    }
}

/// Writes weights as a greyscale PFM.
pub fn write_weights(path: &Path, width: usize, height: usize, weights: &[f64]) -> Result<()> {
    let values: Vec<f32> = weights.iter().map(|w| *w as f32).collect();
    fs::write(path, encode_pfm(width, height, 1, &values))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join(format!("gaussvis-io-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn pfm_round_trip_is_exact() {
        let px = vec![
            Vec3::new(0.125, 0.5, 1.0),
            Vec3::new(0.1f32 as f64, 2.5, -0.0),
            Vec3::new(1e-3f32 as f64, 0.0, 7.0),
            Vec3::new(0.3f32 as f64, 0.6f32 as f64, 0.9f32 as f64),
        ];
        let img = Image::from_pixels(2, 2, px).unwrap();
        let p = tmp("rt.pfm");
        write_image(&p, &img, false).unwrap();
        assert_eq!(read_image(&p).unwrap(), img);
    }

    #[test]
    fn pfm_rows_are_bottom_up() {
        let bytes = encode_pfm(1, 2, 3, &[1.0, 1.0, 1.0, 2.0, 2.0, 2.0]);
        let header_len = "PF\n1 2\n-1.0\n".len();
        assert_eq!(&bytes[header_len..header_len + 4], &2f32.to_le_bytes());
        let (_, _, _, v) = decode_pfm(&bytes).unwrap();
        assert_eq!(v[0], 1.0);
    }

    #[test]
    fn ppm_decoding() {
        let mut data = b"P6\n# red\n1 1\n255\n".to_vec();
        data.extend_from_slice(&[255, 0, 0]);
        assert_eq!(decode_ppm(&data).unwrap().pixels[0], Vec3::new(1.0, 0.0, 0.0));
        let mut data = b"P6 1 1 100\n".to_vec();
        data.extend_from_slice(&[50, 100, 0]);
        assert_eq!(decode_ppm(&data).unwrap().pixels[0], Vec3::new(0.5, 1.0, 0.0));
    }

    #[test]
    fn ppm_round_trip_on_quantized_values() {
        let px = (0..6).map(|i| Vec3::new(i as f64 / 255.0, (200 - i) as f64 / 255.0, 1.0)).collect();
        let img = Image::from_pixels(3, 2, px).unwrap();
        let p = tmp("rt.ppm");
        write_image(&p, &img, false).unwrap();
        let back = read_image(&p).unwrap();
        assert!(back.max_abs_diff(&img) < 1e-15);
    }

    #[test]
    fn malformed_inputs() {
        assert!(decode_ppm(b"P6\n2 2\n").is_err());
        let mut data = b"P6\n2 2\n255\n".to_vec();
        data.extend_from_slice(&[0; 5]);
        assert!(decode_ppm(&data).is_err());
        assert!(decode_pfm(b"PX\n1 1\n-1\n").is_err());
        let mut nan = b"Pf\n1 1\n-1.0\n".to_vec();
        nan.extend_from_slice(&f32::NAN.to_le_bytes());
        assert!(decode_pfm(&nan).is_err());
    }

    #[test]
    fn big_endian_pfm() {
        let mut data = b"Pf\n1 1\n1.0\n".to_vec();
        data.extend_from_slice(&0.75f32.to_be_bytes());
        assert_eq!(decode_pfm(&data).unwrap().3, vec![0.75]);
    }

    #[test]
    fn weights_round_trip() {
        let p = tmp("w.pfm");
        write_weights(&p, 2, 1, &[0.5, 2.0]).unwrap();
        assert_eq!(read_weights(&p).unwrap(), (2, 1, vec![0.5, 2.0]));
    }
}
