//! Grayscale image files: 8/16-bit PGM (P2/P5) and PNG.
//!
//! Readers return raw intensities as rank-2 `[H, W]` f64 tensors. Color PNGs
//! are collapsed to Rec. 601 luminance before entering the pipeline.

use std::fs;
use std::io::BufWriter;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Reads a grayscale image, dispatching on the file extension
/// (`.pgm`/`.pnm` or `.png`).
pub fn read_image(path: &Path) -> Result<Tensor<f64>> {
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .as_deref()
    {
        Some("pgm") | Some("pnm") => read_pgm(path),
        Some("png") => read_png(path),
        other => Err(Error::Parse(format!(
            "unsupported image extension {other:?} for {}",
            path.display()
        ))),
    }
}

/// Parses an 8- or 16-bit PGM (`P2` ASCII or `P5` binary).
pub fn read_pgm(path: &Path) -> Result<Tensor<f64>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_pgm(&bytes).map_err(|msg| Error::Parse(format!("{}: {msg}", path.display())))
}

fn parse_pgm(bytes: &[u8]) -> std::result::Result<Tensor<f64>, String> {
    let mut pos = 0usize;

    // Header tokens may be separated by whitespace and '#' comments.
    let next_token = |pos: &mut usize| -> std::result::Result<String, String> {
        loop {
            while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
                *pos += 1;
            }
            if *pos < bytes.len() && bytes[*pos] == b'#' {
                while *pos < bytes.len() && bytes[*pos] != b'\n' {
                    *pos += 1;
                }
                continue;
            }
            break;
        }
        let start = *pos;
        while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if start == *pos {
            return Err("unexpected end of header".into());
        }
        Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
    };

    let magic = next_token(&mut pos)?;
    if magic != "P2" && magic != "P5" {
        return Err(format!("not a PGM file (magic {magic:?})"));
    }
    let width: usize = next_token(&mut pos)?
        .parse()
        .map_err(|_| "bad width".to_string())?;
    let height: usize = next_token(&mut pos)?
        .parse()
        .map_err(|_| "bad height".to_string())?;
    let maxval: u32 = next_token(&mut pos)?
        .parse()
        .map_err(|_| "bad maxval".to_string())?;
    if width == 0 || height == 0 {
        return Err(format!("degenerate image {width}x{height}"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(format!("unsupported maxval {maxval}"));
    }

    let n = width * height;
    let mut data = Vec::with_capacity(n);
    if magic == "P2" {
        for _ in 0..n {
            let v: u32 = next_token(&mut pos)?
                .parse()
                .map_err(|_| "bad sample".to_string())?;
            if v > maxval {
                return Err(format!("sample {v} exceeds maxval {maxval}"));
            }
            data.push(v as f64);
        }
    } else {
        // Exactly one whitespace byte separates the header from raster data.
        pos += 1;
        if maxval < 256 {
            if bytes.len() < pos + n {
                return Err("truncated raster".into());
            }
            data.extend(bytes[pos..pos + n].iter().map(|&b| b as f64));
        } else {
            if bytes.len() < pos + 2 * n {
                return Err("truncated raster".into());
            }
            for i in 0..n {
                let hi = bytes[pos + 2 * i] as u16;
                let lo = bytes[pos + 2 * i + 1] as u16;
                data.push(((hi << 8) | lo) as f64);
            }
        }
    }
    Tensor::new(vec![height, width], data).map_err(|e| e.to_string())
}

/// Writes an 8-bit binary PGM (`P5`). Values are clamped to `0..=255` and
/// rounded.
pub fn write_pgm_u8(path: &Path, img: &Tensor<f64>) -> Result<()> {
    if img.rank() != 2 {
        return Err(Error::ShapeMismatch(format!(
            "PGM writer expects [H, W], got {:?}",
            img.shape()
        )));
    }
    let (h, w) = (img.shape()[0], img.shape()[1]);
    let mut out = Vec::with_capacity(32 + h * w);
    out.extend_from_slice(format!("P5\n{w} {h}\n255\n").as_bytes());
    for &v in img.data() {
        out.push(v.round().clamp(0.0, 255.0) as u8);
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Decodes a PNG into grayscale intensities. 16-bit stays 16-bit; color is
/// converted to luminance (0.299 R + 0.587 G + 0.114 B); alpha is dropped.
pub fn read_png(path: &Path) -> Result<Tensor<f64>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let decoder = png::Decoder::new(std::io::BufReader::new(file));
    let mut reader = decoder
        .read_info()
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    let mut buf = vec![0u8; reader.output_buffer_size().unwrap_or(0)];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    let (w, h) = (info.width as usize, info.height as usize);
    let channels = info.color_type.samples();
    let luma = |px: &[f64]| -> f64 {
        match channels {
            1 | 2 => px[0],
            _ => 0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2],
        }
    };
    let mut data = Vec::with_capacity(w * h);
    match info.bit_depth {
        png::BitDepth::Eight => {
            for i in 0..w * h {
                let px: Vec<f64> = (0..channels)
                    .map(|c| buf[i * channels + c] as f64)
                    .collect();
                data.push(luma(&px));
            }
        }
        png::BitDepth::Sixteen => {
            for i in 0..w * h {
                let px: Vec<f64> = (0..channels)
                    .map(|c| {
                        let o = (i * channels + c) * 2;
                        (((buf[o] as u16) << 8) | buf[o + 1] as u16) as f64
                    })
                    .collect();
                data.push(luma(&px));
            }
        }
        other => {
            return Err(Error::Parse(format!(
                "{}: unsupported PNG bit depth {other:?}",
                path.display()
            )))
        }
    }
    Tensor::new(vec![h, w], data)
}

/// Encodes an 8-bit grayscale PNG; used by tests and fixtures.
pub fn write_png_gray_u8(path: &Path, img: &Tensor<f64>) -> Result<()> {
    if img.rank() != 2 {
        return Err(Error::ShapeMismatch(format!(
            "PNG writer expects [H, W], got {:?}",
            img.shape()
        )));
    }
    let (h, w) = (img.shape()[0], img.shape()[1]);
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), w as u32, h as u32);
    encoder.set_color(png::ColorType::Grayscale);
    encoder.set_depth(png::BitDepth::Eight);
    let mut writer = encoder
        .write_header()
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    let bytes: Vec<u8> = img
        .data()
        .iter()
        .map(|&v| v.round().clamp(0.0, 255.0) as u8)
        .collect();
    writer
        .write_image_data(&bytes)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tempdir() -> std::path::PathBuf {
        let dir = std::env::temp_dir().join(format!(
            "attriblab-imgio-{}-{:?}",
            std::process::id(),
            std::thread::current().id()
        ));
        fs::create_dir_all(&dir).unwrap();
        dir
    }

    #[test]
    fn pgm_binary_round_trip() {
        let dir = tempdir();
        let path = dir.join("rt.pgm");
        let img =
            Tensor::new(vec![3, 5], (0..15).map(|i| (i * 17 % 256) as f64).collect()).unwrap();
        write_pgm_u8(&path, &img).unwrap();
        let back = read_pgm(&path).unwrap();
        assert_eq!(back, img);
    }

    #[test]
    fn pgm_ascii_with_comments() {
        let dir = tempdir();
        let path = dir.join("ascii.pgm");
        fs::write(&path, "P2\n# a comment\n3 2\n255\n0 10 20\n30 40 50\n").unwrap();
        let img = read_pgm(&path).unwrap();
        assert_eq!(img.shape(), &[2, 3]);
        assert_eq!(img.data(), &[0.0, 10.0, 20.0, 30.0, 40.0, 50.0]);
    }

    #[test]
    fn pgm_16bit_big_endian() {
        let dir = tempdir();
        let path = dir.join("deep.pgm");
        let mut bytes = b"P5\n2 1\n65535\n".to_vec();
        bytes.extend_from_slice(&[0x01, 0x00, 0xff, 0xfe]); // 256, 65534
        fs::write(&path, bytes).unwrap();
        let img = read_pgm(&path).unwrap();
        assert_eq!(img.data(), &[256.0, 65534.0]);
    }

    #[test]
    fn pgm_rejects_garbage() {
        let dir = tempdir();
        let path = dir.join("bad.pgm");
        fs::write(&path, "P9\n1 1\n255\n").unwrap();
        assert!(read_pgm(&path).is_err());
        fs::write(&path, "P5\n4 4\n255\nxx").unwrap();
        assert!(read_pgm(&path).is_err());
    }

    #[test]
    fn png_gray_round_trip() {
        let dir = tempdir();
        let path = dir.join("gray.png");
        let img =
            Tensor::new(vec![4, 6], (0..24).map(|i| (i * 11 % 256) as f64).collect()).unwrap();
        write_png_gray_u8(&path, &img).unwrap();
        let back = read_png(&path).unwrap();
        assert_eq!(back, img);
        let dispatched = read_image(&path).unwrap();
        assert_eq!(dispatched, img);
    }

    #[test]
    fn png_rgb_becomes_luminance() {
        let dir = tempdir();
        let path = dir.join("rgb.png");
        let file = fs::File::create(&path).unwrap();
        let mut encoder = png::Encoder::new(BufWriter::new(file), 2, 1);
        encoder.set_color(png::ColorType::Rgb);
        encoder.set_depth(png::BitDepth::Eight);
        let mut writer = encoder.write_header().unwrap();
        writer
            .write_image_data(&[255, 0, 0, 0, 255, 0]) // red px, green px
            .unwrap();
        drop(writer);
        let img = read_png(&path).unwrap();
        assert!((img.data()[0] - 0.299 * 255.0).abs() < 1e-9);
        assert!((img.data()[1] - 0.587 * 255.0).abs() < 1e-9);
    }

    #[test]
    fn unknown_extension_is_rejected() {
        assert!(read_image(Path::new("/nonexistent/file.bmp")).is_err());
    }
}
