use std::fs;
use std::io::{self, Cursor};
use std::path::Path;

use thiserror::Error;

use super::{Depth, Raster};

/// Largest image accepted by the decoders, in pixels.
const MAX_PIXELS: usize = 1 << 28;

const PNG_SIGNATURE: &[u8] = b"\x89PNG\r\n\x1a\n";

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("unsupported format: {0}")]
    Unsupported(String),
    #[error("corrupt file: {0}")]
    Corrupt(String),
    #[error("image has a zero dimension")]
    ZeroDimension,
    #[error("image dimensions overflow")]
    TooLarge,
    #[error("bounding box {bbox:?} does not fit a {width}x{height} image")]
    InvalidBoundingBox {
        bbox: [usize; 4],
        width: usize,
        height: usize,
    },
}

/// On-disk encodings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RasterFormat {
    /// Binary PGM (P5) or PPM (P6), chosen by channel count.
    Pnm,
    Png,
}

impl RasterFormat {
    /// Guesses the format from a file extension.
    pub fn from_path(path: &Path) -> Option<Self> {
        let ext = path.extension()?.to_str()?.to_ascii_lowercase();
        match ext.as_str() {
            "pgm" | "ppm" | "pnm" => Some(RasterFormat::Pnm),
            "png" => Some(RasterFormat::Png),
            _ => None,
        }
    }
}

pub fn load_raster(path: impl AsRef<Path>) -> Result<Raster, RasterError> {
    let bytes = fs::read(path)?;
    decode_raster(&bytes)
}

/// Decodes PGM/PPM or PNG, detected from the leading bytes.
pub fn decode_raster(bytes: &[u8]) -> Result<Raster, RasterError> {
    if bytes.starts_with(PNG_SIGNATURE) {
        decode_png(bytes)
    } else if bytes.len() >= 2 && bytes[0] == b'P' {
        decode_pnm(bytes)
    } else {
        Err(RasterError::Unsupported("unrecognized file signature".into()))
    }
}

/// Writes with the format implied by the file extension.
pub fn save_raster(raster: &Raster, path: impl AsRef<Path>) -> Result<(), RasterError> {
    let path = path.as_ref();
    let format = RasterFormat::from_path(path)
        .ok_or_else(|| RasterError::Unsupported(format!("cannot infer format of {}", path.display())))?;
    fs::write(path, encode_raster(raster, format)?)?;
    Ok(())
}

pub fn encode_raster(raster: &Raster, format: RasterFormat) -> Result<Vec<u8>, RasterError> {
    match format {
        RasterFormat::Pnm => Ok(encode_pnm(raster)),
        RasterFormat::Png => encode_png(raster),
    }
}

fn encode_pnm(raster: &Raster) -> Vec<u8> {
    let magic = if raster.channels() == 1 { "P5" } else { "P6" };
    let maxval = raster.depth().max_value();
    let mut out = format!("{magic}\n{} {}\n{maxval}\n", raster.width(), raster.height()).into_bytes();
    match raster.depth() {
        Depth::Eight => out.extend(raster.data().iter().map(|&v| v as u8)),
        Depth::Sixteen => {
            for &v in raster.data() {
                out.extend_from_slice(&v.to_be_bytes());
            }
        }
    }
    out
}

struct PnmHeader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl PnmHeader<'_> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize, RasterError> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(RasterError::Corrupt(format!("missing {what} in header")));
        }
        // at most 10 digits fit comfortably in usize; more is nonsense
        if self.pos - start > 10 {
            return Err(RasterError::Corrupt(format!("{what} out of range")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| RasterError::Corrupt(format!("bad {what}")))
    }
}

struct PnmInfo {
    channels: usize,
    width: usize,
    height: usize,
    maxval: usize,
    /// Offset of the first raster byte.
    body: usize,
}

fn pnm_info(bytes: &[u8]) -> Result<PnmInfo, RasterError> {
    let channels = match &bytes[..2] {
        b"P5" => 1,
        b"P6" => 3,
        m => {
            return Err(RasterError::Unsupported(format!(
                "netpbm variant {}",
                String::from_utf8_lossy(m)
            )))
        }
    };
    let mut header = PnmHeader { bytes, pos: 2 };
    let width = header.number("width")?;
    let height = header.number("height")?;
    let maxval = header.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(RasterError::ZeroDimension);
    }
    if maxval == 0 || maxval > u16::MAX as usize {
        return Err(RasterError::Corrupt(format!("maxval {maxval} out of range")));
    }
    // exactly one whitespace byte separates the header from the raster
    match bytes.get(header.pos) {
        Some(b) if b.is_ascii_whitespace() => header.pos += 1,
        _ => return Err(RasterError::Corrupt("truncated header".into())),
    }
    Ok(PnmInfo {
        channels,
        width,
        height,
        maxval,
        body: header.pos,
    })
}

/// Width and height from the file header, without decoding the raster.
pub fn peek_dimensions(bytes: &[u8]) -> Result<(usize, usize), RasterError> {
    if bytes.starts_with(PNG_SIGNATURE) {
        let reader = png_reader(bytes)?;
        let info = reader.info();
        Ok((info.width as usize, info.height as usize))
    } else if bytes.len() >= 2 && bytes[0] == b'P' {
        let info = pnm_info(bytes)?;
        Ok((info.width, info.height))
    } else {
        Err(RasterError::Unsupported("unrecognized file signature".into()))
    }
}

fn decode_pnm(bytes: &[u8]) -> Result<Raster, RasterError> {
    let PnmInfo {
        channels,
        width,
        height,
        maxval,
        body,
    } = pnm_info(bytes)?;
    let samples = width
        .checked_mul(height)
        .filter(|&n| n <= MAX_PIXELS)
        .and_then(|n| n.checked_mul(channels))
        .ok_or(RasterError::TooLarge)?;
    let (depth, bytes_per_sample) = if maxval < 256 {
        (Depth::Eight, 1)
    } else {
        (Depth::Sixteen, 2)
    };
    let body = &bytes[body..];
    if body.len() < samples * bytes_per_sample {
        return Err(RasterError::Corrupt(format!(
            "expected {} raster bytes, found {}",
            samples * bytes_per_sample,
            body.len()
        )));
    }
    let data: Vec<u16> = match depth {
        Depth::Eight => body[..samples].iter().map(|&b| b as u16).collect(),
        Depth::Sixteen => body[..samples * 2]
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]))
            .collect(),
    };
    if data.iter().any(|&v| v as usize > maxval) {
        return Err(RasterError::Corrupt(format!("sample exceeds maxval {maxval}")));
    }
    Raster::new(width, height, channels, depth, data)
}

fn png_error(e: png::DecodingError) -> RasterError {
    match e {
        png::DecodingError::IoError(e) => RasterError::Corrupt(e.to_string()),
        png::DecodingError::LimitsExceeded => RasterError::TooLarge,
        other => RasterError::Corrupt(other.to_string()),
    }
}

fn png_reader(bytes: &[u8]) -> Result<png::Reader<Cursor<&[u8]>>, RasterError> {
    let mut decoder = png::Decoder::new_with_limits(Cursor::new(bytes), png::Limits { bytes: MAX_PIXELS * 8 });
    decoder.set_transformations(png::Transformations::EXPAND);
    let reader = decoder.read_info().map_err(png_error)?;
    let info = reader.info();
    if info.width == 0 || info.height == 0 {
        return Err(RasterError::ZeroDimension);
    }
    if (info.width as usize).saturating_mul(info.height as usize) > MAX_PIXELS {
        return Err(RasterError::TooLarge);
    }
    Ok(reader)
}

fn decode_png(bytes: &[u8]) -> Result<Raster, RasterError> {
    let mut reader = png_reader(bytes)?;
    let size = reader.output_buffer_size().ok_or(RasterError::TooLarge)?;
    let mut buf = vec![0u8; size];
    let info = reader.next_frame(&mut buf).map_err(png_error)?;
    let (width, height) = (info.width as usize, info.height as usize);
    if width == 0 || height == 0 {
        return Err(RasterError::ZeroDimension);
    }
    let src_channels = info.color_type.samples();
    let channels = match info.color_type {
        png::ColorType::Grayscale | png::ColorType::GrayscaleAlpha => 1,
        png::ColorType::Rgb | png::ColorType::Rgba => 3,
        png::ColorType::Indexed => return Err(RasterError::Unsupported("indexed PNG after expansion".into())),
    };
    let (depth, bps) = match info.bit_depth {
        png::BitDepth::Eight => (Depth::Eight, 1),
        png::BitDepth::Sixteen => (Depth::Sixteen, 2),
        other => return Err(RasterError::Unsupported(format!("PNG bit depth {other:?}"))),
    };
    let mut data = Vec::with_capacity(width * height * channels);
    for row in buf.chunks_exact(info.line_size).take(height) {
        for px in row[..width * src_channels * bps].chunks_exact(src_channels * bps) {
            // alpha, when present, is dropped
            for c in 0..channels {
                let s = &px[c * bps..(c + 1) * bps];
                data.push(if bps == 1 {
                    s[0] as u16
                } else {
                    u16::from_be_bytes([s[0], s[1]])
                });
            }
        }
    }
    Raster::new(width, height, channels, depth, data)
}

fn encode_png(raster: &Raster) -> Result<Vec<u8>, RasterError> {
    let to_io = |e: png::EncodingError| match e {
        png::EncodingError::IoError(e) => RasterError::Io(e),
        other => RasterError::Unsupported(other.to_string()),
    };
    let mut out = Vec::new();
    {
        let mut encoder = png::Encoder::new(&mut out, raster.width() as u32, raster.height() as u32);
        encoder.set_color(if raster.channels() == 1 {
            png::ColorType::Grayscale
        } else {
            png::ColorType::Rgb
        });
        let bytes: Vec<u8> = match raster.depth() {
            Depth::Eight => {
                encoder.set_depth(png::BitDepth::Eight);
                raster.data().iter().map(|&v| v as u8).collect()
            }
            Depth::Sixteen => {
                encoder.set_depth(png::BitDepth::Sixteen);
                raster.data().iter().flat_map(|v| v.to_be_bytes()).collect()
            }
        };
        let mut writer = encoder.write_header().map_err(to_io)?;
        writer.write_image_data(&bytes).map_err(to_io)?;
        writer.finish().map_err(to_io)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn peek_reads_header_only() {
        let r = Raster::from_fn(7, 3, Depth::Sixteen, |x, y| (x * 1000 + y) as u16);
        for format in [RasterFormat::Pnm, RasterFormat::Png] {
            let bytes = encode_raster(&r, format).unwrap();
            assert_eq!(peek_dimensions(&bytes).unwrap(), (7, 3));
        }
        // the netpbm header alone is enough
        assert_eq!(peek_dimensions(b"P6\n7 3\n255\n").unwrap(), (7, 3));
        assert!(matches!(
            peek_dimensions(b"P5\n0 4\n255\n"),
            Err(RasterError::ZeroDimension)
        ));
    }

    fn gradient16() -> Raster {
        Raster::from_fn(512, 512, Depth::Sixteen, |x, y| ((x * 97 + y * 31) * 3 % 65536) as u16)
    }

    #[test]
    fn sixteen_bit_pgm_preserved() {
        let r = gradient16();
        let bytes = encode_raster(&r, RasterFormat::Pnm).unwrap();
        let back = decode_raster(&bytes).unwrap();
        assert_eq!((back.width(), back.height(), back.channels()), (512, 512, 1));
        assert_eq!(back.depth(), Depth::Sixteen);
        assert_eq!(back, r);
    }

    #[test]
    fn sixteen_bit_png_preserved() {
        let r = gradient16();
        let back = decode_raster(&encode_raster(&r, RasterFormat::Png).unwrap()).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn rgb_round_trips() {
        let r = Raster::from_rgb(7, 5, Depth::Eight, |x, y| [x as u16 * 30, y as u16 * 40, 9]);
        for f in [RasterFormat::Pnm, RasterFormat::Png] {
            assert_eq!(decode_raster(&encode_raster(&r, f).unwrap()).unwrap(), r);
        }
    }

    #[test]
    fn one_by_one() {
        let back = decode_raster(b"P5\n1 1\n255\n\0").unwrap();
        assert_eq!(back.data(), &[0]);
        assert_eq!(back.depth(), Depth::Eight);
    }

    #[test]
    fn comments_in_header() {
        let back = decode_raster(b"P5 # made by hand\n2 # w\n1\n255\n\x01\x02").unwrap();
        assert_eq!(back.data(), &[1, 2]);
    }

    #[test]
    fn truncated_is_corrupt() {
        let mut bytes = encode_raster(&gradient16(), RasterFormat::Pnm).unwrap();
        bytes.truncate(bytes.len() - 10);
        assert!(matches!(decode_raster(&bytes), Err(RasterError::Corrupt(_))));

        let mut png = encode_raster(&gradient16(), RasterFormat::Png).unwrap();
        png.truncate(png.len() / 2);
        assert!(matches!(decode_raster(&png), Err(RasterError::Corrupt(_))));
    }

    #[test]
    fn distinct_errors() {
        assert!(matches!(decode_raster(b"GIF89a"), Err(RasterError::Unsupported(_))));
        assert!(matches!(
            decode_raster(b"P2\n1 1\n255\n0"),
            Err(RasterError::Unsupported(_))
        ));
        assert!(matches!(
            decode_raster(b"P5\n0 4\n255\n"),
            Err(RasterError::ZeroDimension)
        ));
        assert!(matches!(
            decode_raster(b"P5\n1 1\n100\n\xff"),
            Err(RasterError::Corrupt(_))
        ));
    }

    #[test]
    fn huge_header_does_not_allocate() {
        assert!(decode_raster(b"P5\n4000000000 4000000000\n255\n\0").is_err());
    }

    #[test]
    fn save_and_load_by_extension() {
        let dir = tempfile::tempdir().unwrap();
        let r = Raster::from_fn(4, 3, Depth::Eight, |x, y| (x + y) as u16);
        for name in ["a.pgm", "a.png"] {
            let p = dir.path().join(name);
            save_raster(&r, &p).unwrap();
            assert_eq!(load_raster(&p).unwrap(), r);
        }
        assert!(save_raster(&r, dir.path().join("a.bmp")).is_err());
        assert!(matches!(
            load_raster(dir.path().join("missing.pgm")),
            Err(RasterError::Io(_))
        ));
    }
}
