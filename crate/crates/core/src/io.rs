//! On-disk formats for masks, gray frames and feature matrices.
//!
//! Masks are 8-bit PGM (P5) or PNG, nonzero = foreground. Gray frames are
//! 16-bit PGM or PNG scaled to `[0, 1]`. Features use a little-endian
//! container: `b"FEAT1"`, frame count `u32`, dim `u32`, then `f32` rows.
//! A `.csv` path holds one comma-separated row per frame instead.
//! Every writer goes through a temp file in the target directory and a
//! rename, so readers never see partial files.

use std::io::{Cursor, Write as _};
use std::path::{Path, PathBuf};

use image::{ImageBuffer, ImageFormat, Luma};

use crate::geometry::BinaryMask;
use crate::rotation::GrayFrame;

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {msg}")]
    Format { path: PathBuf, msg: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io { path: path.to_path_buf(), source }
}

fn format_err(path: &Path, msg: impl Into<String>) -> IoError {
    IoError::Format { path: path.to_path_buf(), msg: msg.into() }
}

/// Write `bytes` to `path` via a sibling temp file and rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(path))?;
    tmp.write_all(bytes).map_err(io_err(path))?;
    tmp.as_file().sync_all().map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| IoError::Io { path: path.to_path_buf(), source: e.error })?;
    Ok(())
}

fn is_png(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png"))
}

fn is_csv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

struct Pgm {
    width: usize,
    height: usize,
    maxval: u32,
    samples: Vec<u32>,
}

fn parse_pgm(path: &Path, bytes: &[u8]) -> Result<Pgm, IoError> {
    let mut pos = 0;
    let mut token = || -> Option<String> {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        (pos > start).then(|| String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    if token().as_deref() != Some("P5") {
        return Err(format_err(path, "not a binary PGM (P5)"));
    }
    let mut num = |what: &str| -> Result<usize, IoError> {
        token()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| format_err(path, format!("bad PGM {what}")))
    };
    let width = num("width")?;
    let height = num("height")?;
    let maxval = num("maxval")? as u32;
    if width == 0 || height == 0 || maxval == 0 || maxval > 65535 {
        return Err(format_err(path, "bad PGM header values"));
    }
    // exactly one whitespace byte separates the header from the raster
    let data = &bytes[(pos + 1).min(bytes.len())..];
    let bps = if maxval > 255 { 2 } else { 1 };
    let n = width * height;
    if data.len() < n * bps {
        return Err(format_err(path, format!("PGM raster truncated: {} of {} bytes", data.len(), n * bps)));
    }
    let samples = if bps == 1 {
        data[..n].iter().map(|&b| b as u32).collect()
    } else {
        data[..2 * n].chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]]) as u32).collect()
    };
    Ok(Pgm { width, height, maxval, samples })
}

fn pgm_bytes(width: usize, height: usize, maxval: u32, samples: impl Iterator<Item = u32>) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n{maxval}\n").into_bytes();
    for s in samples {
        if maxval > 255 {
            out.extend_from_slice(&(s as u16).to_be_bytes());
        } else {
            out.push(s as u8);
        }
    }
    out
}

fn png_bytes<P: image::Pixel<Subpixel = S> + image::PixelWithColorType, S: image::Primitive>(
    path: &Path,
    img: &ImageBuffer<P, Vec<S>>,
) -> Result<Vec<u8>, IoError>
where
    [S]: image::EncodableLayout,
{
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, ImageFormat::Png).map_err(|e| format_err(path, e.to_string()))?;
    Ok(buf.into_inner())
}

fn read_bytes(path: &Path) -> Result<Vec<u8>, IoError> {
    std::fs::read(path).map_err(io_err(path))
}

pub fn write_mask(path: &Path, mask: &BinaryMask) -> Result<(), IoError> {
    let bytes = if is_png(path) {
        let img = ImageBuffer::<Luma<u8>, _>::from_fn(mask.width() as u32, mask.height() as u32, |x, y| {
            Luma([if mask.get(x as usize, y as usize) { 255 } else { 0 }])
        });
        png_bytes(path, &img)?
    } else {
        pgm_bytes(mask.width(), mask.height(), 255, mask.bits().iter().map(|b| if *b { 255 } else { 0 }))
    };
    write_atomic(path, &bytes)
}

pub fn read_mask(path: &Path) -> Result<BinaryMask, IoError> {
    let bytes = read_bytes(path)?;
    let (w, h, bits) = if is_png(path) {
        let img = image::load_from_memory_with_format(&bytes, ImageFormat::Png)
            .map_err(|e| format_err(path, e.to_string()))?
            .into_luma8();
        let (w, h) = (img.width() as usize, img.height() as usize);
        (w, h, img.into_raw().into_iter().map(|v| v > 0).collect())
    } else {
        let p = parse_pgm(path, &bytes)?;
        (p.width, p.height, p.samples.into_iter().map(|v| v > 0).collect())
    };
    BinaryMask::from_bits(w, h, bits).map_err(|e| format_err(path, e.to_string()))
}

fn quantize16(v: f64) -> u16 {
    (v.clamp(0.0, 1.0) * 65535.0).round() as u16
}

/// 16-bit gray; values are clamped to `[0, 1]` and quantized to 1/65535.
pub fn write_gray(path: &Path, gray: &GrayFrame) -> Result<(), IoError> {
    let bytes = if is_png(path) {
        let img = ImageBuffer::<Luma<u16>, _>::from_fn(gray.width() as u32, gray.height() as u32, |x, y| {
            Luma([quantize16(gray.get(x as usize, y as usize))])
        });
        png_bytes(path, &img)?
    } else {
        pgm_bytes(gray.width(), gray.height(), 65535, gray.data().iter().map(|v| quantize16(*v) as u32))
    };
    write_atomic(path, &bytes)
}

pub fn read_gray(path: &Path) -> Result<GrayFrame, IoError> {
    let bytes = read_bytes(path)?;
    let (w, h, data) = if is_png(path) {
        let img = image::load_from_memory_with_format(&bytes, ImageFormat::Png)
            .map_err(|e| format_err(path, e.to_string()))?
            .into_luma16();
        let (w, h) = (img.width() as usize, img.height() as usize);
        (w, h, img.into_raw().into_iter().map(|v| v as f64 / 65535.0).collect())
    } else {
        let p = parse_pgm(path, &bytes)?;
        let scale = p.maxval as f64;
        (p.width, p.height, p.samples.into_iter().map(|v| v as f64 / scale).collect())
    };
    GrayFrame::new(w, h, data).map_err(|e| format_err(path, e.to_string()))
}

/// Row-major `frames × dim` feature matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    pub frames: usize,
    pub dim: usize,
    pub data: Vec<f32>,
}

impl FeatureMatrix {
    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

const FEAT_MAGIC: &[u8; 5] = b"FEAT1";

pub fn write_features(path: &Path, m: &FeatureMatrix) -> Result<(), IoError> {
    if m.data.len() != m.frames * m.dim {
        return Err(format_err(path, "feature data length does not match frames × dim"));
    }
    let bytes = if is_csv(path) {
        let mut s = String::new();
        for i in 0..m.frames {
            let row: Vec<String> = m.row(i).iter().map(|v| format!("{v:?}")).collect();
            s.push_str(&row.join(","));
            s.push('\n');
        }
        s.into_bytes()
    } else {
        let mut out = Vec::with_capacity(13 + 4 * m.data.len());
        out.extend_from_slice(FEAT_MAGIC);
        out.extend_from_slice(&(m.frames as u32).to_le_bytes());
        out.extend_from_slice(&(m.dim as u32).to_le_bytes());
        for v in &m.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    };
    write_atomic(path, &bytes)
}

pub fn read_features(path: &Path) -> Result<FeatureMatrix, IoError> {
    let bytes = read_bytes(path)?;
    if is_csv(path) {
        let text = String::from_utf8(bytes).map_err(|_| format_err(path, "CSV is not UTF-8"))?;
        let mut data = Vec::new();
        let mut dim = None;
        let mut frames = 0;
        for (ln, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let row: Result<Vec<f32>, _> = line.split(',').map(|c| c.trim().parse::<f32>()).collect();
            let row = row.map_err(|_| format_err(path, format!("line {}: bad number", ln + 1)))?;
            if *dim.get_or_insert(row.len()) != row.len() {
                return Err(format_err(path, format!("line {}: expected {} values", ln + 1, dim.unwrap_or(0))));
            }
            data.extend(row);
            frames += 1;
        }
        return Ok(FeatureMatrix { frames, dim: dim.unwrap_or(0), data });
    }
    if bytes.len() < 13 || &bytes[..5] != FEAT_MAGIC {
        return Err(format_err(path, "missing FEAT1 header"));
    }
    let frames = u32::from_le_bytes(bytes[5..9].try_into().expect("4 bytes")) as usize;
    let dim = u32::from_le_bytes(bytes[9..13].try_into().expect("4 bytes")) as usize;
    let body = &bytes[13..];
    if body.len() != 4 * frames * dim {
        return Err(format_err(path, format!("expected {} payload bytes, found {}", 4 * frames * dim, body.len())));
    }
    let data = body.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
    Ok(FeatureMatrix { frames, dim, data })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_mask() -> BinaryMask {
        BinaryMask::from_fn(7, 5, |x, y| (x + 2 * y) % 3 == 0).unwrap()
    }

    fn sample_gray() -> GrayFrame {
        GrayFrame::from_fn(6, 4, |x, y| ((x * 7 + y * 3) % 11) as f64 / 65535.0 * 5000.0).unwrap()
    }

    #[test]
    fn mask_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        for name in ["m.pgm", "m.png"] {
            let p = dir.path().join(name);
            write_mask(&p, &sample_mask()).unwrap();
            assert_eq!(read_mask(&p).unwrap(), sample_mask());
        }
    }

    #[test]
    fn gray_round_trip_is_exact_after_quantization() {
        let dir = tempfile::tempdir().unwrap();
        for name in ["g.pgm", "g.png"] {
            let p = dir.path().join(name);
            write_gray(&p, &sample_gray()).unwrap();
            let back = read_gray(&p).unwrap();
            assert_eq!(back, sample_gray());
            let p2 = dir.path().join(format!("again-{name}"));
            write_gray(&p2, &back).unwrap();
            assert_eq!(std::fs::read(&p).unwrap(), std::fs::read(&p2).unwrap());
        }
    }

    #[test]
    fn features_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = FeatureMatrix { frames: 3, dim: 4, data: vec![0.1, -2.5, 3.0e-8, 7.0, 1.0, 2.0, 3.0, 4.0, f32::MAX, 0.0, -0.0, 1.5] };
        for name in ["f.feat", "f.csv"] {
            let p = dir.path().join(name);
            write_features(&p, &m).unwrap();
            let back = read_features(&p).unwrap();
            assert_eq!(back.frames, 3);
            assert_eq!(back.dim, 4);
            assert!(back.data.iter().zip(&m.data).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
        let raw = std::fs::read(dir.path().join("f.feat")).unwrap();
        assert_eq!(&raw[..5], b"FEAT1");
        assert_eq!(raw.len(), 13 + 48);
    }

    #[test]
    fn errors_name_the_path() {
        let dir = tempfile::tempdir().unwrap();
        let missing = dir.path().join("nope.pgm");
        let err = read_mask(&missing).unwrap_err().to_string();
        assert!(err.contains("nope.pgm"), "{err}");
        let bad = dir.path().join("bad.feat");
        std::fs::write(&bad, b"FEAT1\x02\0\0\0\x02\0\0\0").unwrap();
        assert!(read_features(&bad).unwrap_err().to_string().contains("payload"));
        let notpgm = dir.path().join("x.pgm");
        std::fs::write(&notpgm, b"P2\n1 1\n255\n0").unwrap();
        assert!(read_mask(&notpgm).is_err());
    }

    #[test]
    fn pgm_with_comment() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.pgm");
        std::fs::write(&p, b"P5\n# made by hand\n2 1\n255\n\x00\xff").unwrap();
        let m = read_mask(&p).unwrap();
        assert_eq!(m.bits(), &[false, true]);
    }
}
