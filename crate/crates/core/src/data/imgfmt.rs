//! Byte-exact image output: binary PGM (P5), a minimal PNG encoder
//! (8-bit gray/RGB, stored deflate blocks), grid tiling, and CSV writing.

use std::io::Write;
use std::path::Path;

use super::{PIXEL_MEAN, PIXEL_STD};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// How tensor values map to display bytes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ValueMap {
    /// Normalized units: `byte = clamp(round(255·(v·std + mean)))`.
    #[default]
    Normalized,
    /// Values already in `[0, 1]`.
    Unit,
    /// Values already in `0..=255`.
    Raw,
    /// Affine stretch of min..max to 0..255 per image.
    MinMax,
}

pub fn to_byte(v: f64, map: ValueMap, lo: f64, hi: f64) -> u8 {
    let scaled = match map {
        ValueMap::Normalized => 255.0 * (v * PIXEL_STD + PIXEL_MEAN),
        ValueMap::Unit => 255.0 * v,
        ValueMap::Raw => v,
        ValueMap::MinMax => {
            if hi > lo {
                255.0 * (v - lo) / (hi - lo)
            } else {
                127.0
            }
        }
    };
    scaled.round().clamp(0.0, 255.0) as u8
}

/// Converts a `1×H×W` or `3×H×W` tensor to interleaved display bytes.
pub fn tensor_to_bytes(t: &Tensor, map: ValueMap) -> Result<(Vec<u8>, usize, usize, usize)> {
    let &[c, h, w] = t.shape() else {
        return Err(Error::shape(
            "tensor_to_bytes",
            format!("expected [1|3, H, W], got {:?}", t.shape()),
        ));
    };
    if c != 1 && c != 3 {
        return Err(Error::shape("tensor_to_bytes", format!("{c} channels")));
    }
    let (lo, hi) = t
        .data()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let mut bytes = Vec::with_capacity(c * h * w);
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                bytes.push(to_byte(t.data()[ch * h * w + y * w + x], map, lo, hi));
            }
        }
    }
    Ok((bytes, w, h, c))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ImageFormat {
    #[default]
    Pgm,
    Png,
}

/// Writes a `1×H×W` (PGM/PNG) or `3×H×W` (PNG) image.
pub fn write_image(
    t: &Tensor,
    path: impl AsRef<Path>,
    format: ImageFormat,
    map: ValueMap,
) -> Result<()> {
    let path = path.as_ref();
    let (bytes, w, h, c) = tensor_to_bytes(t, map)?;
    match format {
        ImageFormat::Pgm => {
            if c != 1 {
                return Err(Error::Unsupported("PGM is grayscale only".into()));
            }
            write_pgm_bytes(path, &bytes, w, h)
        }
        ImageFormat::Png => write_png_bytes(path, &bytes, w, h, c),
    }
}

fn write_pgm_bytes(path: &Path, bytes: &[u8], w: usize, h: usize) -> Result<()> {
    let mut out = Vec::with_capacity(bytes.len() + 32);
    write!(out, "P5\n{w} {h}\n255\n").expect("vec write");
    out.extend_from_slice(bytes);
    std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Minimal binary-PGM reader (round-trip testing).
pub fn read_pgm(path: impl AsRef<Path>) -> Result<(Vec<u8>, usize, usize)> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let header_err = |detail: &str, offset: usize| Error::Format {
        path: path.display().to_string(),
        offset: offset as u64,
        detail: detail.into(),
    };
    if !bytes.starts_with(b"P5") {
        return Err(header_err("not a binary PGM", 0));
    }
    let mut fields = Vec::new();
    let mut pos = 2;
    while fields.len() < 3 && pos < bytes.len() {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse::<usize>().ok())
            .ok_or_else(|| header_err("bad header field", start))?;
        fields.push(field);
    }
    pos += 1; // single whitespace after maxval
    let (w, h, maxval) = (fields[0], fields[1], fields[2]);
    if maxval != 255 || bytes.len() < pos + w * h {
        return Err(header_err("unsupported maxval or truncated data", pos));
    }
    Ok((bytes[pos..pos + w * h].to_vec(), w, h))
}

// ── Minimal PNG ──────────────────────────────────────────────────────

fn crc32(data: &[u8]) -> u32 {
    let mut table = [0u32; 256];
    for (n, entry) in table.iter_mut().enumerate() {
        let mut c = n as u32;
        for _ in 0..8 {
            c = if c & 1 != 0 { 0xedb8_8320 ^ (c >> 1) } else { c >> 1 };
        }
        *entry = c;
    }
    let mut crc = 0xffff_ffffu32;
    for &b in data {
        crc = table[((crc ^ b as u32) & 0xff) as usize] ^ (crc >> 8);
    }
    crc ^ 0xffff_ffff
}

fn adler32(data: &[u8]) -> u32 {
    let (mut a, mut b) = (1u32, 0u32);
    for &x in data {
        a = (a + x as u32) % 65521;
        b = (b + a) % 65521;
    }
    (b << 16) | a
}

fn png_chunk(out: &mut Vec<u8>, kind: &[u8; 4], payload: &[u8]) {
    out.extend_from_slice(&(payload.len() as u32).to_be_bytes());
    out.extend_from_slice(kind);
    out.extend_from_slice(payload);
    let mut crc_input = kind.to_vec();
    crc_input.extend_from_slice(payload);
    out.extend_from_slice(&crc32(&crc_input).to_be_bytes());
}

/// Zlib stream with stored (uncompressed) deflate blocks.
fn zlib_stored(raw: &[u8]) -> Vec<u8> {
    let mut out = vec![0x78, 0x01];
    let mut chunks = raw.chunks(65535).peekable();
    if raw.is_empty() {
        out.extend_from_slice(&[0x01, 0x00, 0x00, 0xff, 0xff]);
    }
    while let Some(chunk) = chunks.next() {
        let last = chunks.peek().is_none();
        out.push(if last { 1 } else { 0 });
        let len = chunk.len() as u16;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(&(!len).to_le_bytes());
        out.extend_from_slice(chunk);
    }
    out.extend_from_slice(&adler32(raw).to_be_bytes());
    out
}

fn write_png_bytes(path: &Path, bytes: &[u8], w: usize, h: usize, c: usize) -> Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(&[0x89, b'P', b'N', b'G', 0x0d, 0x0a, 0x1a, 0x0a]);
    let mut ihdr = Vec::new();
    ihdr.extend_from_slice(&(w as u32).to_be_bytes());
    ihdr.extend_from_slice(&(h as u32).to_be_bytes());
    ihdr.push(8); // bit depth
    ihdr.push(if c == 1 { 0 } else { 2 }); // gray / truecolor
    ihdr.extend_from_slice(&[0, 0, 0]); // deflate, filter 0, no interlace
    png_chunk(&mut out, b"IHDR", &ihdr);
    // Filter byte 0 per scanline.
    let mut raw = Vec::with_capacity(h * (1 + w * c));
    for row in bytes.chunks(w * c) {
        raw.push(0);
        raw.extend_from_slice(row);
    }
    png_chunk(&mut out, b"IDAT", &zlib_stored(&raw));
    png_chunk(&mut out, b"IEND", &[]);
    std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Tiles equal-sized images into one row-major grid with 1-px separators
/// (mid-gray), returning a displayable `1×H×W` or `3×H×W` tensor in raw
/// byte units.
pub fn tile_grid(images: &[Tensor], cols: usize, map: ValueMap) -> Result<Tensor> {
    if images.is_empty() || cols == 0 {
        return Err(Error::invalid("tile_grid", "empty grid"));
    }
    let &[c, h, w] = images[0].shape() else {
        return Err(Error::shape("tile_grid", format!("{:?}", images[0].shape())));
    };
    if images.iter().any(|t| t.shape() != images[0].shape()) {
        return Err(Error::shape("tile_grid", "grid images differ in shape"));
    }
    let rows = images.len().div_ceil(cols);
    let gw = cols * w + (cols - 1);
    let gh = rows * h + (rows - 1);
    let mut grid = Tensor::full(&[c, gh, gw], 128.0);
    for (idx, img) in images.iter().enumerate() {
        let (bytes, _, _, _) = tensor_to_bytes(img, map)?;
        let (r, col) = (idx / cols, idx % cols);
        let (y0, x0) = (r * (h + 1), col * (w + 1));
        for y in 0..h {
            for x in 0..w {
                for ch in 0..c {
                    grid.data_mut()[ch * gh * gw + (y0 + y) * gw + (x0 + x)] =
                        bytes[(y * w + x) * c + ch] as f64;
                }
            }
        }
    }
    Ok(grid)
}

/// Writes a CSV file with a header row, comma separators, and `.` decimals.
pub fn write_csv(
    path: impl AsRef<Path>,
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Full-precision float formatting for CSV (round-trips exactly).
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmpdir(tag: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join(format!("idlab-{tag}-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        dir
    }

    #[test]
    fn zero_normalized_image_is_byte_33() {
        let t = Tensor::zeros(&[1, 2, 2]);
        let (bytes, _, _, _) = tensor_to_bytes(&t, ValueMap::Normalized).unwrap();
        assert!(bytes.iter().all(|&b| b == 33));
    }

    #[test]
    fn out_of_range_values_clamp() {
        let t = Tensor::new(vec![1, 1, 2], vec![-1e6, 1e6]).unwrap();
        let (bytes, _, _, _) = tensor_to_bytes(&t, ValueMap::Raw).unwrap();
        assert_eq!(bytes, vec![0, 255]);
    }

    #[test]
    fn pgm_round_trip() {
        let dir = tmpdir("pgm");
        let path = dir.join("img.pgm");
        let t = Tensor::new(
            vec![1, 3, 4],
            (0..12).map(|v| (v * 20) as f64).collect(),
        )
        .unwrap();
        write_image(&t, &path, ImageFormat::Pgm, ValueMap::Raw).unwrap();
        let (bytes, w, h) = read_pgm(&path).unwrap();
        assert_eq!((w, h), (4, 3));
        let expect: Vec<u8> = (0..12).map(|v| (v * 20) as u8).collect();
        assert_eq!(bytes, expect);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn png_has_valid_signature_and_sizes() {
        let dir = tmpdir("png");
        let path = dir.join("img.png");
        let t = Tensor::new(vec![3, 2, 2], (0..12).map(|v| v as f64 * 20.0).collect()).unwrap();
        write_image(&t, &path, ImageFormat::Png, ValueMap::Raw).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..8], &[0x89, b'P', b'N', b'G', 0x0d, 0x0a, 0x1a, 0x0a]);
        assert_eq!(&bytes[12..16], b"IHDR");
        // Stored-deflate IDAT must reproduce the adler of the raw stream.
        assert!(bytes.windows(4).any(|w| w == b"IDAT"));
        assert!(bytes.windows(4).any(|w| w == b"IEND"));
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn grid_tiling_layout() {
        let a = Tensor::full(&[1, 2, 2], 10.0);
        let b = Tensor::full(&[1, 2, 2], 200.0);
        let grid = tile_grid(&[a, b], 2, ValueMap::Raw).unwrap();
        assert_eq!(grid.shape(), &[1, 2, 5]);
        assert_eq!(grid.data()[0], 10.0);
        assert_eq!(grid.data()[2], 128.0); // separator column
        assert_eq!(grid.data()[3], 200.0);
    }

    #[test]
    fn csv_format() {
        let dir = tmpdir("csv");
        let path = dir.join("t.csv");
        write_csv(
            &path,
            &["a", "b"],
            vec![vec!["1".to_string(), fmt_f64(0.5)]],
        )
        .unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "a,b\n1,0.5\n");
        std::fs::remove_dir_all(&dir).ok();
    }
}
