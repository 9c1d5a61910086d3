//! Dataset loaders (IDX, CIFAR-10 binary), pixel normalization, synthetic
//! evaluation patterns, and a procedural digit generator used when no real
//! dataset files are on disk.

pub mod imgfmt;

use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::rng::{sample, Dist, RngState};
use crate::tensor::Tensor;

/// Normalization constants computed on the full MNIST training set.
pub const PIXEL_MEAN: f64 = 0.1307;
pub const PIXEL_STD: f64 = 0.3081;

const IDX_MAGIC_LABELS: u32 = 0x0000_0801;
const IDX_MAGIC_IMAGES: u32 = 0x0000_0803;

fn read_file(path: &Path) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(buf)
}

fn be_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32> {
    let end = offset + 4;
    if bytes.len() < end {
        return Err(Error::Format {
            path: path.display().to_string(),
            offset: offset as u64,
            detail: "truncated header".into(),
        });
    }
    Ok(u32::from_be_bytes([
        bytes[offset],
        bytes[offset + 1],
        bytes[offset + 2],
        bytes[offset + 3],
    ]))
}

/// Loads an IDX image file (magic `0x00000803`, big-endian dims) as a
/// `N×1×H×W` tensor of raw values in `0..=255`.
pub fn load_idx_images(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let bytes = read_file(path)?;
    let magic = be_u32(&bytes, 0, path)?;
    if magic != IDX_MAGIC_IMAGES {
        return Err(Error::Format {
            path: path.display().to_string(),
            offset: 0,
            detail: format!("bad magic {magic:#010x}, expected {IDX_MAGIC_IMAGES:#010x}"),
        });
    }
    let n = be_u32(&bytes, 4, path)? as usize;
    let h = be_u32(&bytes, 8, path)? as usize;
    let w = be_u32(&bytes, 12, path)? as usize;
    let need = 16 + n * h * w;
    if bytes.len() < need {
        return Err(Error::Format {
            path: path.display().to_string(),
            offset: bytes.len() as u64,
            detail: format!("expected {need} bytes for {n} {h}x{w} images"),
        });
    }
    let data: Vec<f64> = bytes[16..need].iter().map(|&b| b as f64).collect();
    Tensor::new(vec![n, 1, h, w], data)
}

/// Loads an IDX label file (magic `0x00000801`).
pub fn load_idx_labels(path: impl AsRef<Path>) -> Result<Vec<u8>> {
    let path = path.as_ref();
    let bytes = read_file(path)?;
    let magic = be_u32(&bytes, 0, path)?;
    if magic != IDX_MAGIC_LABELS {
        return Err(Error::Format {
            path: path.display().to_string(),
            offset: 0,
            detail: format!("bad magic {magic:#010x}, expected {IDX_MAGIC_LABELS:#010x}"),
        });
    }
    let n = be_u32(&bytes, 4, path)? as usize;
    if bytes.len() < 8 + n {
        return Err(Error::Format {
            path: path.display().to_string(),
            offset: bytes.len() as u64,
            detail: format!("expected {} bytes for {n} labels", 8 + n),
        });
    }
    Ok(bytes[8..8 + n].to_vec())
}

/// Writes `N×1×H×W` raw images in IDX format (test helper and synthetic-set
/// export).
pub fn write_idx_images(path: impl AsRef<Path>, images: &Tensor) -> Result<()> {
    let path = path.as_ref();
    let &[n, c, h, w] = images.shape() else {
        return Err(Error::shape("write_idx_images", format!("{:?}", images.shape())));
    };
    if c != 1 {
        return Err(Error::shape("write_idx_images", "IDX images are single-channel"));
    }
    let mut bytes = Vec::with_capacity(16 + n * h * w);
    bytes.extend_from_slice(&IDX_MAGIC_IMAGES.to_be_bytes());
    bytes.extend_from_slice(&(n as u32).to_be_bytes());
    bytes.extend_from_slice(&(h as u32).to_be_bytes());
    bytes.extend_from_slice(&(w as u32).to_be_bytes());
    bytes.extend(images.data().iter().map(|&v| v.clamp(0.0, 255.0).round() as u8));
    std::fs::write(path, bytes).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn write_idx_labels(path: impl AsRef<Path>, labels: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let mut bytes = Vec::with_capacity(8 + labels.len());
    bytes.extend_from_slice(&IDX_MAGIC_LABELS.to_be_bytes());
    bytes.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    bytes.extend_from_slice(labels);
    std::fs::write(path, bytes).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Loads a CIFAR-10 binary batch (3073-byte records: label byte + 3072
/// channel-major RGB bytes) as `(N×3×32×32 raw tensor, labels)`.
pub fn load_cifar10(path: impl AsRef<Path>) -> Result<(Tensor, Vec<u8>)> {
    let path = path.as_ref();
    let bytes = read_file(path)?;
    const REC: usize = 3073;
    if bytes.is_empty() || bytes.len() % REC != 0 {
        return Err(Error::Format {
            path: path.display().to_string(),
            offset: bytes.len() as u64,
            detail: format!("file size {} is not a multiple of {REC}", bytes.len()),
        });
    }
    let n = bytes.len() / REC;
    let mut labels = Vec::with_capacity(n);
    let mut data = Vec::with_capacity(n * 3072);
    for rec in bytes.chunks_exact(REC) {
        labels.push(rec[0]);
        data.extend(rec[1..].iter().map(|&b| b as f64));
    }
    Ok((Tensor::new(vec![n, 3, 32, 32], data)?, labels))
}

/// `v ↦ (v/255 − mean)/std` on raw byte values.
pub fn normalize(raw: &Tensor) -> Tensor {
    raw.map(|v| (v / 255.0 - PIXEL_MEAN) / PIXEL_STD)
}

/// Exact inverse of [`normalize`] back to the 0–255 range.
pub fn denormalize(norm: &Tensor) -> Tensor {
    norm.map(|v| (v * PIXEL_STD + PIXEL_MEAN) * 255.0)
}

/// Replicates a single-channel image across `c` channels.
pub fn replicate_channels(image: &Tensor, c: usize) -> Result<Tensor> {
    let &[c0, h, w] = image.shape() else {
        return Err(Error::shape("replicate_channels", format!("{:?}", image.shape())));
    };
    if c0 != 1 {
        return Err(Error::shape("replicate_channels", "expected a 1×H×W image"));
    }
    let mut out = Tensor::zeros(&[c, h, w]);
    for k in 0..c {
        out.data_mut()[k * h * w..(k + 1) * h * w].copy_from_slice(image.data());
    }
    Ok(out)
}

/// Synthetic evaluation patterns. All values are in normalized units; noise
/// kinds consume the generator, the rest are deterministic functions of the
/// geometry.
#[derive(Clone, Debug)]
pub enum PatternKind {
    /// `λ·a + (1−λ)·b` on two normalized digits.
    Blend { a: Tensor, b: Tensor, lambda: f64 },
    GaussianNoise,
    UniformNoise,
    Checkerboard { cell: usize },
    HGradient,
    VGradient,
    Solid { level: f64 },
    CenteredSquare { frac: f64 },
    Circle { frac: f64 },
}

fn norm_unit(v: f64) -> f64 {
    (v - PIXEL_MEAN) / PIXEL_STD
}

/// Generates a `1×size×size` pattern in normalized units.
pub fn gen_pattern(kind: &PatternKind, size: usize, rng: &mut RngState) -> Result<Tensor> {
    let hw = size * size;
    match kind {
        PatternKind::Blend { a, b, lambda } => {
            if a.shape() != b.shape() {
                return Err(Error::shape("gen_pattern", "blend operands differ in shape"));
            }
            Ok(a.scale(*lambda).add(&b.scale(1.0 - *lambda))?)
        }
        PatternKind::GaussianNoise => sample(Dist::gaussian(0.0, 1.0), &[1, size, size], rng),
        PatternKind::UniformNoise => {
            let t = sample(Dist::uniform(0.0, 1.0), &[1, size, size], rng)?;
            Ok(t.map(norm_unit))
        }
        PatternKind::Checkerboard { cell } => {
            let cell = (*cell).max(1);
            let mut data = Vec::with_capacity(hw);
            for i in 0..size {
                for j in 0..size {
                    let on = ((i / cell) + (j / cell)) % 2 == 0;
                    data.push(norm_unit(if on { 1.0 } else { 0.0 }));
                }
            }
            Tensor::new(vec![1, size, size], data)
        }
        PatternKind::HGradient | PatternKind::VGradient => {
            let mut data = Vec::with_capacity(hw);
            for i in 0..size {
                for j in 0..size {
                    let t = match kind {
                        PatternKind::HGradient => j as f64 / (size - 1).max(1) as f64,
                        _ => i as f64 / (size - 1).max(1) as f64,
                    };
                    data.push(norm_unit(t));
                }
            }
            Tensor::new(vec![1, size, size], data)
        }
        PatternKind::Solid { level } => Ok(Tensor::full(&[1, size, size], norm_unit(*level))),
        PatternKind::CenteredSquare { frac } => {
            let half = (size as f64 * frac / 2.0).round() as isize;
            let c = size as isize / 2;
            let mut data = Vec::with_capacity(hw);
            for i in 0..size as isize {
                for j in 0..size as isize {
                    let on = (i - c).abs() <= half && (j - c).abs() <= half;
                    data.push(norm_unit(if on { 1.0 } else { 0.0 }));
                }
            }
            Tensor::new(vec![1, size, size], data)
        }
        PatternKind::Circle { frac } => {
            let r = size as f64 * frac / 2.0;
            let c = (size as f64 - 1.0) / 2.0;
            let mut data = Vec::with_capacity(hw);
            for i in 0..size {
                for j in 0..size {
                    let d2 = (i as f64 - c).powi(2) + (j as f64 - c).powi(2);
                    data.push(norm_unit(if d2 <= r * r { 1.0 } else { 0.0 }));
                }
            }
            Tensor::new(vec![1, size, size], data)
        }
    }
}

/// Named default pattern list for evaluation grids.
pub fn default_patterns(rng: &mut RngState, digits: Option<(&Tensor, &Tensor)>) -> Vec<(String, PatternKind)> {
    let mut kinds: Vec<(String, PatternKind)> = Vec::new();
    if let Some((a, b)) = digits {
        kinds.push((
            "blend".into(),
            PatternKind::Blend {
                a: a.clone(),
                b: b.clone(),
                lambda: 0.5,
            },
        ));
    }
    let _ = rng;
    kinds.extend([
        ("gaussian_noise".into(), PatternKind::GaussianNoise),
        ("uniform_noise".into(), PatternKind::UniformNoise),
        ("checkerboard".into(), PatternKind::Checkerboard { cell: 4 }),
        ("h_gradient".into(), PatternKind::HGradient),
        ("v_gradient".into(), PatternKind::VGradient),
        ("solid".into(), PatternKind::Solid { level: 0.5 }),
        ("centered_square".into(), PatternKind::CenteredSquare { frac: 0.5 }),
        ("circle".into(), PatternKind::Circle { frac: 0.6 }),
    ]);
    kinds
}

// ── Procedural digits ────────────────────────────────────────────────

/// Stroke templates on a 16×16 design grid, one polyline set per digit.
fn digit_strokes(d: u8) -> &'static [&'static [(f64, f64)]] {
    match d {
        0 => &[&[(4.0, 8.0), (3.0, 4.0), (8.0, 2.0), (13.0, 4.0), (13.5, 10.0), (8.0, 14.0), (4.0, 12.0), (4.0, 8.0)]],
        1 => &[&[(6.0, 4.0), (9.0, 2.0), (9.0, 14.0)], &[(6.0, 14.0), (12.0, 14.0)]],
        2 => &[&[(4.0, 4.0), (8.0, 2.0), (12.0, 4.0), (11.0, 8.0), (4.0, 14.0), (13.0, 14.0)]],
        3 => &[&[(4.0, 3.0), (11.0, 2.5), (12.0, 6.0), (8.0, 8.0), (12.5, 10.0), (11.0, 14.0), (4.0, 13.5)]],
        4 => &[&[(10.0, 14.0), (10.0, 2.0), (3.5, 10.0), (13.0, 10.0)]],
        5 => &[&[(12.0, 2.5), (5.0, 2.5), (4.5, 8.0), (10.0, 7.5), (12.0, 11.0), (8.0, 14.0), (4.0, 13.0)]],
        6 => &[&[(11.0, 2.0), (5.5, 7.0), (4.5, 11.0), (8.0, 14.0), (12.0, 12.0), (11.0, 8.5), (5.0, 9.5)]],
        7 => &[&[(3.5, 3.0), (13.0, 3.0), (8.0, 14.0)], &[(6.0, 9.0), (11.5, 9.0)]],
        8 => &[&[(8.0, 8.0), (4.5, 5.5), (8.0, 2.0), (11.5, 5.5), (8.0, 8.0), (4.0, 11.0), (8.0, 14.5), (12.0, 11.0), (8.0, 8.0)]],
        _ => &[&[(4.5, 2.5), (11.0, 3.5), (11.5, 7.5), (5.0, 7.0), (4.5, 3.5)], &[(11.5, 7.5), (11.0, 14.0)]],
    }
}

/// Rasterizes one digit with per-sample jitter (shift, scale, thickness) at
/// `size×size`, raw 0–255.
fn raster_digit(d: u8, size: usize, rng: &mut RngState) -> Tensor {
    let scale = size as f64 / 16.0 * (0.85 + 0.25 * rng.next_f64());
    let dx = (rng.next_f64() - 0.5) * size as f64 * 0.14;
    let dy = (rng.next_f64() - 0.5) * size as f64 * 0.14;
    let thick = size as f64 * (0.055 + 0.03 * rng.next_f64());
    let cx = size as f64 / 2.0 - 8.0 * scale;

    let mut img = vec![0.0f64; size * size];
    for stroke in digit_strokes(d) {
        for seg in stroke.windows(2) {
            let (x0, y0) = (seg[0].0 * scale + cx + dx, seg[0].1 * scale + dy);
            let (x1, y1) = (seg[1].0 * scale + cx + dx, seg[1].1 * scale + dy);
            let len = ((x1 - x0).powi(2) + (y1 - y0).powi(2)).sqrt().max(1e-9);
            // Distance-to-segment rasterization over the bounding box.
            let lo_x = (x0.min(x1) - thick - 1.0).floor().max(0.0) as usize;
            let hi_x = (x0.max(x1) + thick + 1.0).ceil().min(size as f64 - 1.0) as usize;
            let lo_y = (y0.min(y1) - thick - 1.0).floor().max(0.0) as usize;
            let hi_y = (y0.max(y1) + thick + 1.0).ceil().min(size as f64 - 1.0) as usize;
            for py in lo_y..=hi_y {
                for px in lo_x..=hi_x {
                    let (fx, fy) = (px as f64, py as f64);
                    let t = (((fx - x0) * (x1 - x0) + (fy - y0) * (y1 - y0)) / (len * len))
                        .clamp(0.0, 1.0);
                    let (nx, ny) = (x0 + t * (x1 - x0), y0 + t * (y1 - y0));
                    let dist = ((fx - nx).powi(2) + (fy - ny).powi(2)).sqrt();
                    if dist < thick {
                        let v = (255.0 * (1.0 - (dist / thick).powi(2)).clamp(0.0, 1.0)).round();
                        let cell = &mut img[py * size + px];
                        *cell = cell.max(v);
                    }
                }
            }
        }
    }
    Tensor::new(vec![1, size, size], img).expect("shape is consistent")
}

/// Deterministic procedural digit set: `n_per_class` samples of each digit
/// 0–9, raw 0–255, labels aligned. A stand-in for MNIST-format files when
/// none are available; the images are digit-shaped strokes with jitter.
pub fn synthetic_digits(n_per_class: usize, size: usize, seed: u64) -> (Tensor, Vec<u8>) {
    let root = RngState::new(seed).split(0xd161);
    let n = n_per_class * 10;
    let mut data = Vec::with_capacity(n * size * size);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n_per_class {
        for d in 0..10u8 {
            let mut rng = root.split2(d as u64, i as u64);
            let img = raster_digit(d, size, &mut rng);
            data.extend_from_slice(img.data());
            labels.push(d);
        }
    }
    (
        Tensor::new(vec![n, 1, size, size], data).expect("shape is consistent"),
        labels,
    )
}

/// Extracts example `idx` of a `N×C×H×W` stack as `C×H×W`.
pub fn example(images: &Tensor, idx: usize) -> Result<Tensor> {
    let shape = images.shape();
    if shape.len() != 4 || idx >= shape[0] {
        return Err(Error::shape(
            "example",
            format!("index {idx} in stack {:?}", shape),
        ));
    }
    let stride: usize = shape[1..].iter().product();
    Tensor::new(
        shape[1..].to_vec(),
        images.data()[idx * stride..(idx + 1) * stride].to_vec(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_arithmetic() {
        let raw = Tensor::new(vec![2], vec![0.0, 255.0]).unwrap();
        let n = normalize(&raw);
        assert!((n.data()[0] - (-0.1307 / 0.3081)).abs() < 1e-12);
        assert!((n.data()[1] - ((1.0 - 0.1307) / 0.3081)).abs() < 1e-12);
        let back = denormalize(&n);
        assert!(back.sub(&raw).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn normalize_round_trip_over_byte_grid() {
        let raw = Tensor::new(vec![256], (0..256).map(|v| v as f64).collect()).unwrap();
        let back = denormalize(&normalize(&raw));
        assert!(back.sub(&raw).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn idx_round_trip() {
        let dir = std::env::temp_dir().join(format!("idlab-idx-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let (imgs, labels) = synthetic_digits(2, 14, 3);
        let ipath = dir.join("imgs.idx");
        let lpath = dir.join("labels.idx");
        write_idx_images(&ipath, &imgs).unwrap();
        write_idx_labels(&lpath, &labels).unwrap();
        let loaded = load_idx_images(&ipath).unwrap();
        assert_eq!(loaded, imgs);
        assert_eq!(load_idx_labels(&lpath).unwrap(), labels);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn idx_bad_magic_and_truncation() {
        let dir = std::env::temp_dir().join(format!("idlab-idx2-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.idx");
        std::fs::write(&path, [0u8, 0, 8, 2, 0, 0, 0, 1]).unwrap();
        assert!(matches!(load_idx_images(&path), Err(Error::Format { .. })));
        // Valid magic but truncated pixel data.
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&0x0000_0803u32.to_be_bytes());
        bytes.extend_from_slice(&2u32.to_be_bytes());
        bytes.extend_from_slice(&4u32.to_be_bytes());
        bytes.extend_from_slice(&4u32.to_be_bytes());
        bytes.extend_from_slice(&[7u8; 10]);
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(load_idx_images(&path), Err(Error::Format { .. })));
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn cifar_record_layout() {
        let dir = std::env::temp_dir().join(format!("idlab-cifar-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("batch.bin");
        let mut bytes = vec![0u8; 3073 * 2];
        bytes[0] = 3;
        bytes[1] = 200; // first red pixel of record 0
        bytes[3073] = 9;
        std::fs::write(&path, &bytes).unwrap();
        let (t, labels) = load_cifar10(&path).unwrap();
        assert_eq!(t.shape(), &[2, 3, 32, 32]);
        assert_eq!(labels, vec![3, 9]);
        assert_eq!(t.data()[0], 200.0);
        std::fs::write(&path, &bytes[..100]).unwrap();
        assert!(load_cifar10(&path).is_err());
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn pattern_examples() {
        let mut rng = RngState::new(4);
        let solid = gen_pattern(&PatternKind::Solid { level: 0.0 }, 28, &mut rng).unwrap();
        assert!(solid.data().iter().all(|&v| v == solid.data()[0]));

        let board = gen_pattern(&PatternKind::Checkerboard { cell: 14 }, 28, &mut rng).unwrap();
        let v00 = board.data()[0];
        let v01 = board.data()[14];
        assert_ne!(v00, v01);
        assert_eq!(board.data()[13], v00);
        assert_eq!(board.data()[14 * 28], v01);
        assert_eq!(board.data()[14 * 28 + 14], v00);

        let (digits, _) = synthetic_digits(1, 28, 1);
        let a = normalize(&example(&digits, 0).unwrap());
        let b = normalize(&example(&digits, 1).unwrap());
        let blend = gen_pattern(
            &PatternKind::Blend {
                a: a.clone(),
                b: b.clone(),
                lambda: 0.5,
            },
            28,
            &mut rng,
        )
        .unwrap();
        let mid = a.add(&b).unwrap().scale(0.5);
        assert!(blend.sub(&mid).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn patterns_are_deterministic() {
        let mut r1 = RngState::new(9);
        let mut r2 = RngState::new(9);
        let a = gen_pattern(&PatternKind::GaussianNoise, 12, &mut r1).unwrap();
        let b = gen_pattern(&PatternKind::GaussianNoise, 12, &mut r2).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn synthetic_digits_are_deterministic_and_varied() {
        let (a, la) = synthetic_digits(2, 28, 5);
        let (b, _) = synthetic_digits(2, 28, 5);
        assert_eq!(a, b);
        assert_eq!(la.len(), 20);
        // Distinct digits differ, repeated digits differ by jitter.
        let d0 = example(&a, 0).unwrap();
        let d1 = example(&a, 1).unwrap();
        let d0b = example(&a, 10).unwrap();
        assert!(d0.sub(&d1).unwrap().max_abs() > 1.0);
        assert!(d0.sub(&d0b).unwrap().max_abs() > 1.0);
        // Raw range.
        assert!(a.data().iter().all(|&v| (0.0..=255.0).contains(&v)));
    }
}
