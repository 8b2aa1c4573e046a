//! Image file formats: 8-bit PPM for color, 32-bit PFM for float planes,
//! and PNG through the `image` crate. Format is chosen by file extension.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use crate::buffer::ImageBuf;
use crate::error::{Error, Result};

fn to_byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Atomically replaces `path` with `bytes` (temp file + rename).
pub(crate) fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let mut tmp = match dir {
        Some(d) => tempfile::NamedTempFile::new_in(d),
        None => tempfile::NamedTempFile::new_in("."),
    }?;
    tmp.write_all(bytes)?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Writes a 3-channel image as binary PPM (P6, 8 bits per sample).
pub fn write_ppm(path: &Path, img: &ImageBuf) -> Result<()> {
    if img.channels() != 3 {
        return Err(Error::shape(format!(
            "ppm needs 3 channels, image has {}",
            img.channels()
        )));
    }
    let mut bytes = format!("P6\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    bytes.extend(img.data().iter().map(|&v| to_byte(v)));
    atomic_write(path, &bytes)
}

struct HeaderParser<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> HeaderParser<'a> {
    /// Next whitespace-separated token, skipping `#` comment lines.
    fn token(&mut self) -> Result<&'a str> {
        loop {
            while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
                self.pos += 1;
            }
            if self.pos < self.bytes.len() && self.bytes[self.pos] == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
                continue;
            }
            break;
        }
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::format(start as u64, "unexpected end of header"));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .map_err(|_| Error::format(start as u64, "non-ascii header token"))
    }

    fn number<T: std::str::FromStr>(&mut self, what: &str) -> Result<T> {
        let at = self.pos as u64;
        self.token()?
            .parse::<T>()
            .map_err(|_| Error::format(at, format!("bad {what}")))
    }
}

/// Reads a binary P6 PPM into floats in [0, 1].
pub fn read_ppm(path: &Path) -> Result<ImageBuf> {
    let bytes = fs::read(path)?;
    let mut p = HeaderParser {
        bytes: &bytes,
        pos: 0,
    };
    if p.token()? != "P6" {
        return Err(Error::format(0, "not a P6 ppm"));
    }
    let w: usize = p.number("width")?;
    let h: usize = p.number("height")?;
    let maxval: u32 = p.number("maxval")?;
    if maxval != 255 {
        return Err(Error::format(p.pos as u64, "only maxval 255 is supported"));
    }
    // Exactly one whitespace byte separates the header from the samples.
    let data_at = p.pos + 1;
    let need = w * h * 3;
    if bytes.len() != data_at + need {
        return Err(Error::format(
            data_at as u64,
            format!("expected {need} samples, file holds {}", bytes.len() - data_at.min(bytes.len())),
        ));
    }
    ImageBuf::from_vec(
        w,
        h,
        3,
        bytes[data_at..].iter().map(|&b| b as f64 / 255.0).collect(),
    )
}

/// Writes a 1- or 3-channel float image as PFM (`Pf`/`PF`, little-endian,
/// rows bottom-to-top per the format's convention).
pub fn write_pfm(path: &Path, img: &ImageBuf) -> Result<()> {
    let magic = match img.channels() {
        1 => "Pf",
        3 => "PF",
        c => {
            return Err(Error::shape(format!("pfm needs 1 or 3 channels, image has {c}")));
        }
    };
    let mut bytes = format!("{magic}\n{} {}\n-1.0\n", img.width(), img.height()).into_bytes();
    let (w, c) = (img.width(), img.channels());
    for y in (0..img.height()).rev() {
        for x in 0..w {
            for ch in 0..c {
                bytes.extend((img.get(x, y, ch) as f32).to_le_bytes());
            }
        }
    }
    atomic_write(path, &bytes)
}

/// Reads a little-endian PFM.
pub fn read_pfm(path: &Path) -> Result<ImageBuf> {
    let bytes = fs::read(path)?;
    let mut p = HeaderParser {
        bytes: &bytes,
        pos: 0,
    };
    let channels = match p.token()? {
        "Pf" => 1,
        "PF" => 3,
        _ => return Err(Error::format(0, "not a pfm")),
    };
    let w: usize = p.number("width")?;
    let h: usize = p.number("height")?;
    let scale: f64 = p.number("scale")?;
    if scale >= 0.0 {
        return Err(Error::format(p.pos as u64, "big-endian pfm is not supported"));
    }
    let data_at = p.pos + 1;
    let need = w * h * channels * 4;
    if bytes.len() != data_at + need {
        return Err(Error::format(data_at as u64, "sample count mismatch"));
    }
    let mut img = ImageBuf::new(w, h, channels);
    let mut off = data_at;
    for y in (0..h).rev() {
        for x in 0..w {
            for ch in 0..channels {
                let v = f32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
                img.set(x, y, ch, v as f64);
                off += 4;
            }
        }
    }
    Ok(img)
}

fn write_png(path: &Path, img: &ImageBuf) -> Result<()> {
    let (w, h) = (img.width() as u32, img.height() as u32);
    let encode = |buf: Vec<u8>, color: image::ColorType| -> Result<()> {
        let mut bytes = Vec::new();
        image::write_buffer_with_format(
            &mut std::io::Cursor::new(&mut bytes),
            &buf,
            w,
            h,
            color,
            image::ImageFormat::Png,
        )
        .map_err(|e| Error::format(0, format!("png encode: {e}")))?;
        atomic_write(path, &bytes)
    };
    match img.channels() {
        1 => encode(
            img.data().iter().map(|&v| to_byte(v)).collect(),
            image::ColorType::L8,
        ),
        3 => encode(
            img.data().iter().map(|&v| to_byte(v)).collect(),
            image::ColorType::Rgb8,
        ),
        c => Err(Error::shape(format!("png needs 1 or 3 channels, image has {c}"))),
    }
}

fn read_png(path: &Path) -> Result<ImageBuf> {
    let decoded = image::open(path).map_err(|e| Error::format(0, format!("png decode: {e}")))?;
    match decoded {
        image::DynamicImage::ImageLuma8(g) => ImageBuf::from_vec(
            g.width() as usize,
            g.height() as usize,
            1,
            g.into_raw().into_iter().map(|b| b as f64 / 255.0).collect(),
        ),
        other => {
            let rgb = other.into_rgb8();
            ImageBuf::from_vec(
                rgb.width() as usize,
                rgb.height() as usize,
                3,
                rgb.into_raw().into_iter().map(|b| b as f64 / 255.0).collect(),
            )
        }
    }
}

fn extension(path: &Path) -> String {
    path.extension()
        .and_then(|e| e.to_str())
        .unwrap_or_default()
        .to_ascii_lowercase()
}

/// Writes `img` in the format named by the file extension (`ppm`, `pfm`,
/// `png`).
pub fn save_image(path: &Path, img: &ImageBuf) -> Result<()> {
    match extension(path).as_str() {
        "ppm" => write_ppm(path, img),
        "pfm" => write_pfm(path, img),
        "png" => write_png(path, img),
        other => Err(Error::domain(format!("unsupported image extension {other:?}"))),
    }
}

/// Reads an image in the format named by the file extension.
pub fn load_image(path: &Path) -> Result<ImageBuf> {
    match extension(path).as_str() {
        "ppm" => read_ppm(path),
        "pfm" => read_pfm(path),
        "png" => read_png(path),
        other => Err(Error::domain(format!("unsupported image extension {other:?}"))),
    }
}
