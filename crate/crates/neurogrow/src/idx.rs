//! IDX image and label files, optionally gzip-compressed.

use std::fs;
use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;
use neurogrow_core::data::{Dataset, Targets};
use neurogrow_core::Matrix;

use crate::error::{Error, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

fn read_bytes(path: &Path, gz: Option<bool>) -> Result<Vec<u8>> {
    let raw = fs::read(path).map_err(|e| Error::io(path, e))?;
    let gz = gz.unwrap_or_else(|| path.extension().is_some_and(|e| e == "gz"));
    if !gz {
        return Ok(raw);
    }
    let mut out = Vec::new();
    GzDecoder::new(&raw[..]).read_to_end(&mut out).map_err(|e| Error::format(path, 0, format!("gzip: {e}")))?;
    Ok(out)
}

fn be_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32> {
    bytes.get(offset..offset + 4).map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]])).ok_or_else(|| {
        Error::format(path, bytes.len() as u64, format!("header truncated, expected 4 bytes at {offset}"))
    })
}

fn check_magic(bytes: &[u8], want: u32, path: &Path) -> Result<()> {
    let magic = be_u32(bytes, 0, path)?;
    if magic != want {
        return Err(Error::format(path, 0, format!("magic {magic:#010x}, expected {want:#010x}")));
    }
    Ok(())
}

fn check_len(bytes: &[u8], header: usize, body: usize, path: &Path) -> Result<()> {
    let want = header + body;
    if bytes.len() < want {
        return Err(Error::format(path, bytes.len() as u64, format!("truncated, expected {want} bytes")));
    }
    if bytes.len() > want {
        return Err(Error::format(path, want as u64, format!("{} trailing bytes", bytes.len() - want)));
    }
    Ok(())
}

/// Raw image bytes with their dimensions `(count, rows, cols)`.
pub fn parse_images(bytes: &[u8], path: &Path) -> Result<(usize, usize, usize, Vec<u8>)> {
    check_magic(bytes, IMAGES_MAGIC, path)?;
    let n = be_u32(bytes, 4, path)? as usize;
    let rows = be_u32(bytes, 8, path)? as usize;
    let cols = be_u32(bytes, 12, path)? as usize;
    check_len(bytes, 16, n * rows * cols, path)?;
    Ok((n, rows, cols, bytes[16..].to_vec()))
}

pub fn parse_labels(bytes: &[u8], path: &Path) -> Result<Vec<u8>> {
    check_magic(bytes, LABELS_MAGIC, path)?;
    let n = be_u32(bytes, 4, path)? as usize;
    check_len(bytes, 8, n, path)?;
    Ok(bytes[8..].to_vec())
}

/// Images scaled to `[0, 1]`, one flattened image per row. `gz = None`
/// decompresses when the file name ends in `.gz`.
pub fn read_images(path: &Path, gz: Option<bool>) -> Result<Matrix> {
    let bytes = read_bytes(path, gz)?;
    let (n, rows, cols, pixels) = parse_images(&bytes, path)?;
    let data = pixels.iter().map(|&p| p as f64 / 255.0).collect();
    Ok(Matrix::from_vec(n, rows * cols, data)?)
}

pub fn read_labels(path: &Path, gz: Option<bool>) -> Result<Vec<usize>> {
    let bytes = read_bytes(path, gz)?;
    Ok(parse_labels(&bytes, path)?.into_iter().map(usize::from).collect())
}

/// Image/label pair as a classification dataset named after the image file.
pub fn load_idx(images: &Path, labels: &Path, gz: Option<bool>) -> Result<Dataset> {
    let x = read_images(images, gz)?;
    let y = read_labels(labels, gz)?;
    if y.len() != x.rows() {
        return Err(Error::format(labels, 4, format!("{} labels for {} images", y.len(), x.rows())));
    }
    let n_classes = y.iter().max().map_or(1, |&m| m + 1);
    let name = images.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    Ok(Dataset::new(name, x, Targets::Labels { labels: y, n_classes })?)
}

pub fn encode_images(rows: usize, cols: usize, pixels: &[u8]) -> Vec<u8> {
    let n = pixels.len() / (rows * cols).max(1);
    let mut out = Vec::with_capacity(16 + pixels.len());
    for v in [IMAGES_MAGIC, n as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(pixels);
    out
}

pub fn encode_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// Inverse of [`load_idx`] for datasets whose features are multiples of
/// `1/255`. Returns `(images, labels)` file contents.
pub fn encode_dataset(ds: &Dataset, rows: usize, cols: usize) -> Result<(Vec<u8>, Vec<u8>)> {
    if rows * cols != ds.n_features() {
        return Err(Error::Data(format!("{rows}x{cols} images do not hold {} features", ds.n_features())));
    }
    let Targets::Labels { labels, .. } = ds.targets() else {
        return Err(Error::Data("only labelled datasets can be written as IDX".into()));
    };
    let pixels: Vec<u8> = ds.x().as_slice().iter().map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8).collect();
    let labels: Vec<u8> = labels
        .iter()
        .map(|&l| u8::try_from(l).map_err(|_| Error::Data(format!("label {l} does not fit a byte"))))
        .collect::<Result<_>>()?;
    Ok((encode_images(rows, cols, &pixels), encode_labels(&labels)))
}
