//! PNG and binary PNM (P5/P6) readers, PNG writer.

use std::fs;
use std::io::Cursor;
use std::path::Path;

use super::{ImageError, ImageRgb};

const PNG_SIGNATURE: &[u8; 8] = b"\x89PNG\r\n\x1a\n";

/// Decoded 8-bit raster with 1–4 interleaved channels.
pub(crate) struct Raster {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<u8>,
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>, ImageError> {
    fs::read(path).map_err(|source| ImageError::Unreadable {
        path: path.display().to_string(),
        source,
    })
}

pub(crate) fn is_png(bytes: &[u8]) -> bool {
    bytes.starts_with(PNG_SIGNATURE)
}

pub(crate) fn is_pnm(bytes: &[u8]) -> bool {
    bytes.len() >= 2 && bytes[0] == b'P' && matches!(bytes[1], b'1'..=b'7')
}

/// Loads a PNG or binary PPM (P6) file as RGB. Alpha is dropped and
/// grayscale is replicated into three channels.
pub fn load_image(path: impl AsRef<Path>) -> Result<ImageRgb, ImageError> {
    load_image_bytes(&read_file(path.as_ref())?)
}

pub fn load_image_bytes(bytes: &[u8]) -> Result<ImageRgb, ImageError> {
    let raster = if is_png(bytes) {
        decode_png(bytes)?
    } else if is_pnm(bytes) {
        let r = decode_pnm(bytes)?;
        if r.channels != 3 {
            return Err(ImageError::Unsupported(format!(
                "P{} images; only P6 pixmaps are accepted",
                bytes[1] as char
            )));
        }
        r
    } else {
        return Err(ImageError::Unsupported("not a PNG or binary PPM stream".into()));
    };
    to_rgb(raster)
}

fn to_rgb(r: Raster) -> Result<ImageRgb, ImageError> {
    let data = match r.channels {
        3 => r.data,
        4 => r.data.chunks_exact(4).flat_map(|p| [p[0], p[1], p[2]]).collect(),
        1 => r.data.iter().flat_map(|&g| [g, g, g]).collect(),
        2 => r.data.chunks_exact(2).flat_map(|p| [p[0], p[0], p[0]]).collect(),
        n => return Err(ImageError::Unsupported(format!("{n}-channel raster"))),
    };
    ImageRgb::new(r.width, r.height, data)
}

pub(crate) fn decode_png(bytes: &[u8]) -> Result<Raster, ImageError> {
    use png::{ColorType, DecodingError, Transformations};

    let map_err = |e: DecodingError| match e {
        DecodingError::LimitsExceeded => ImageError::Unsupported("image exceeds decoder limits".into()),
        other => ImageError::Corrupt(other.to_string()),
    };
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(Transformations::normalize_to_color8());
    let mut reader = decoder.read_info().map_err(map_err)?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| ImageError::Unsupported("image too large".into()))?;
    let mut buf = vec![0u8; size];
    let info = reader.next_frame(&mut buf).map_err(map_err)?;
    buf.truncate(info.buffer_size());
    let channels = match info.color_type {
        ColorType::Grayscale => 1,
        ColorType::GrayscaleAlpha => 2,
        ColorType::Rgb => 3,
        ColorType::Rgba => 4,
        ColorType::Indexed => {
            return Err(ImageError::Unsupported("unexpanded palette image".into()));
        }
    };
    if info.bit_depth != png::BitDepth::Eight {
        return Err(ImageError::Unsupported(format!(
            "bit depth {:?} after normalization",
            info.bit_depth
        )));
    }
    let width = info.width as usize;
    let height = info.height as usize;
    // strip any row padding
    let row = width * channels;
    let data = if info.line_size == row {
        buf
    } else {
        buf.chunks(info.line_size)
            .take(height)
            .flat_map(|l| l[..row].iter().copied())
            .collect()
    };
    Ok(Raster {
        width,
        height,
        channels,
        data,
    })
}

/// Binary PGM (P5, one channel) or PPM (P6, three channels), maxval ≤ 255.
/// Samples are rescaled to 0..=255 when maxval is smaller.
pub(crate) fn decode_pnm(bytes: &[u8]) -> Result<Raster, ImageError> {
    let channels = match &bytes[..2] {
        b"P5" => 1,
        b"P6" => 3,
        other => {
            return Err(ImageError::Unsupported(format!(
                "PNM variant {}",
                String::from_utf8_lossy(other)
            )))
        }
    };
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        *field = next_header_int(bytes, &mut pos)?;
    }
    let [width, height, maxval] = fields;
    if width == 0 || height == 0 {
        return Err(ImageError::Corrupt(format!("zero dimension {width}x{height}")));
    }
    if maxval == 0 || maxval > 255 {
        return Err(ImageError::Unsupported(format!("PNM maxval {maxval}")));
    }
    // exactly one whitespace byte separates the header from the samples
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(ImageError::Corrupt("missing header terminator".into())),
    }
    let need = width * height * channels;
    let payload = &bytes[pos..];
    if payload.len() < need {
        return Err(ImageError::Corrupt(format!(
            "truncated PNM payload: {} of {need} bytes",
            payload.len()
        )));
    }
    let mut data = payload[..need].to_vec();
    if maxval != 255 {
        for v in &mut data {
            if *v as usize > maxval {
                return Err(ImageError::Corrupt(format!("sample {v} exceeds maxval {maxval}")));
            }
            *v = ((*v as usize * 255 + maxval / 2) / maxval) as u8;
        }
    }
    Ok(Raster {
        width,
        height,
        channels,
        data,
    })
}

fn next_header_int(bytes: &[u8], pos: &mut usize) -> Result<usize, ImageError> {
    loop {
        match bytes.get(*pos) {
            Some(b) if b.is_ascii_whitespace() => *pos += 1,
            Some(b'#') => {
                while let Some(&b) = bytes.get(*pos) {
                    *pos += 1;
                    if b == b'\n' {
                        break;
                    }
                }
            }
            Some(_) => break,
            None => return Err(ImageError::Corrupt("truncated PNM header".into())),
        }
    }
    let start = *pos;
    while bytes.get(*pos).is_some_and(u8::is_ascii_digit) {
        *pos += 1;
    }
    std::str::from_utf8(&bytes[start..*pos])
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| ImageError::Corrupt("malformed PNM header".into()))
}

/// Encodes an RGB image as an 8-bit PNG with fixed encoder settings, so
/// identical pixels always produce identical bytes.
pub fn encode_png(img: &ImageRgb) -> Result<Vec<u8>, ImageError> {
    let mut out = Vec::new();
    let err = |e: png::EncodingError| ImageError::Write {
        path: "<memory>".into(),
        reason: e.to_string(),
    };
    {
        let mut enc = png::Encoder::new(&mut out, img.width() as u32, img.height() as u32);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        enc.set_compression(png::Compression::Balanced);
        enc.set_filter(png::Filter::Sub);
        let mut writer = enc.write_header().map_err(err)?;
        writer.write_image_data(img.data()).map_err(err)?;
        writer.finish().map_err(err)?;
    }
    Ok(out)
}

pub fn save_png(img: &ImageRgb, path: impl AsRef<Path>) -> Result<(), ImageError> {
    let path = path.as_ref();
    let bytes = encode_png(img)?;
    fs::write(path, bytes).map_err(|e| ImageError::Write {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}

#[cfg(test)]
pub(crate) fn encode_png_raw(width: u32, height: u32, color: png::ColorType, data: &[u8]) -> Vec<u8> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, width, height);
        enc.set_color(color);
        enc.set_depth(png::BitDepth::Eight);
        let mut w = enc.write_header().unwrap();
        w.write_image_data(data).unwrap();
        w.finish().unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ppm_all_white() {
        let mut bytes = b"P6 2 2 255\n".to_vec();
        bytes.extend([0xFF; 12]);
        let img = load_image_bytes(&bytes).unwrap();
        assert_eq!((img.width(), img.height()), (2, 2));
        assert!(img.data().iter().all(|&v| v == 255));
    }

    #[test]
    fn ppm_with_comment_and_small_maxval() {
        let mut bytes = b"P6\n# hi\n1 1\n15\n".to_vec();
        bytes.extend([15, 0, 7]);
        let img = load_image_bytes(&bytes).unwrap();
        assert_eq!(img.data(), &[255, 0, 119]);
    }

    #[test]
    fn ppm_truncated_is_corrupt() {
        let mut bytes = b"P6 2 2 255\n".to_vec();
        bytes.extend([0; 5]);
        assert!(matches!(load_image_bytes(&bytes), Err(ImageError::Corrupt(_))));
    }

    #[test]
    fn png_single_pixel_roundtrip() {
        let bytes = encode_png_raw(1, 1, png::ColorType::Rgb, &[10, 20, 30]);
        let img = load_image_bytes(&bytes).unwrap();
        assert_eq!(img.data(), &[10, 20, 30]);
    }

    #[test]
    fn png_rgba_and_gray_are_converted() {
        let rgba = encode_png_raw(1, 1, png::ColorType::Rgba, &[1, 2, 3, 4]);
        assert_eq!(load_image_bytes(&rgba).unwrap().data(), &[1, 2, 3]);
        let gray = encode_png_raw(2, 1, png::ColorType::Grayscale, &[9, 200]);
        assert_eq!(load_image_bytes(&gray).unwrap().data(), &[9, 9, 9, 200, 200, 200]);
    }

    #[test]
    fn png_truncated_is_corrupt() {
        let img = ImageRgb::new(8, 8, (0..192).map(|v| v as u8).collect()).unwrap();
        let bytes = encode_png(&img).unwrap();
        let cut = &bytes[..bytes.len() / 2];
        assert!(matches!(load_image_bytes(cut), Err(ImageError::Corrupt(_))));
    }

    #[test]
    fn unknown_format_is_unsupported() {
        assert!(matches!(
            load_image_bytes(b"GIF89a...."),
            Err(ImageError::Unsupported(_))
        ));
        assert!(matches!(
            load_image_bytes(b"P5 1 1 255\n\x00"),
            Err(ImageError::Unsupported(_))
        ));
    }

    #[test]
    fn missing_file_is_unreadable() {
        assert!(matches!(
            load_image("/nonexistent/definitely/not/here.png"),
            Err(ImageError::Unreadable { .. })
        ));
    }

    #[test]
    fn encode_is_deterministic_and_decodable() {
        let img = ImageRgb::new(5, 3, (0..45).map(|v| (v * 5) as u8).collect()).unwrap();
        let a = encode_png(&img).unwrap();
        assert_eq!(a, encode_png(&img).unwrap());
        assert_eq!(load_image_bytes(&a).unwrap(), img);
    }
}
