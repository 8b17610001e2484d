use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;

use super::Dataset;
use crate::error::{Error, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

fn is_gzip(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("gz"))
}

fn read_all(path: &Path) -> Result<Vec<u8>> {
    let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut bytes = Vec::new();
    if is_gzip(path) {
        GzDecoder::new(file)
            .read_to_end(&mut bytes)
            .map_err(|e| Error::io(path, e))?;
    } else {
        file.read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;
    }
    Ok(bytes)
}

struct Reader<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    offset: usize,
}

impl<'a> Reader<'a> {
    fn error(&self, offset: usize, message: impl Into<String>) -> Error {
        Error::Ingestion {
            path: self.path.to_path_buf(),
            offset: offset as u64,
            message: message.into(),
        }
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let end = self.offset + 4;
        if end > self.bytes.len() {
            return Err(self.error(self.offset, format!("truncated while reading {what}")));
        }
        let v = u32::from_be_bytes(self.bytes[self.offset..end].try_into().unwrap());
        self.offset = end;
        Ok(v)
    }

    fn expect_magic(&mut self, expected: u32) -> Result<()> {
        let got = self.u32("magic number")?;
        if got != expected {
            return Err(self.error(0, format!("magic number {got:#010x}, expected {expected:#010x}")));
        }
        Ok(())
    }

    fn payload(&mut self, len: usize, what: &str) -> Result<&'a [u8]> {
        let available = self.bytes.len() - self.offset;
        if available < len {
            return Err(self.error(
                self.bytes.len(),
                format!("truncated {what}: expected {len} bytes from offset {}, found {available}", self.offset),
            ));
        }
        let slice = &self.bytes[self.offset..self.offset + len];
        self.offset += len;
        Ok(slice)
    }
}

/// Reads an IDX image file (`0x00000803`, count, rows, cols, pixels) and its
/// label file (`0x00000801`, count, labels). Files ending in `.gz` are
/// decompressed first. Pixels are scaled by 1/255.
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let images_path = images_path.as_ref();
    let labels_path = labels_path.as_ref();

    let image_bytes = read_all(images_path)?;
    let mut images = Reader { path: images_path, bytes: &image_bytes, offset: 0 };
    images.expect_magic(IMAGES_MAGIC)?;
    let count = images.u32("image count")? as usize;
    let rows = images.u32("row count")? as usize;
    let cols = images.u32("column count")? as usize;
    let dim = rows * cols;
    if dim == 0 {
        return Err(images.error(8, "image dimensions are zero"));
    }
    let pixels = images.payload(count * dim, "pixel data")?;

    let label_bytes = read_all(labels_path)?;
    let mut labels = Reader { path: labels_path, bytes: &label_bytes, offset: 0 };
    labels.expect_magic(LABELS_MAGIC)?;
    let label_count = labels.u32("label count")? as usize;
    if label_count != count {
        return Err(labels.error(4, format!("label count {label_count} does not match image count {count}")));
    }
    let raw_labels = labels.payload(count, "label data")?;

    let features = pixels.iter().map(|&p| f64::from(p) / 255.0).collect();
    let labels: Vec<usize> = raw_labels.iter().map(|&l| usize::from(l)).collect();
    let class_count = labels.iter().max().map_or(0, |m| m + 1).max(2);
    Dataset::new(features, labels, dim, class_count)
}

/// Writes `data` as an IDX image/label pair; inverse of [`load_idx`] for
/// features that are multiples of 1/255. Used for fixtures.
pub fn write_idx(
    data: &Dataset,
    rows: usize,
    cols: usize,
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
) -> Result<()> {
    if rows * cols != data.dim() {
        return Err(Error::Config(format!(
            "{rows}x{cols} images do not match feature dimension {}",
            data.dim()
        )));
    }
    if data.class_count() > 256 {
        return Err(Error::Config("IDX labels are single bytes".into()));
    }
    let n = data.len() as u32;

    let mut images = Vec::with_capacity(16 + data.features().len());
    for v in [IMAGES_MAGIC, n, rows as u32, cols as u32] {
        images.extend_from_slice(&v.to_be_bytes());
    }
    images.extend(data.features().iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));

    let mut labels = Vec::with_capacity(8 + data.len());
    for v in [LABELS_MAGIC, n] {
        labels.extend_from_slice(&v.to_be_bytes());
    }
    labels.extend(data.labels().iter().map(|&l| l as u8));

    write_bytes(images_path.as_ref(), &images)?;
    write_bytes(labels_path.as_ref(), &labels)
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let res = if is_gzip(path) {
        let mut gz = GzEncoder::new(out, Compression::default());
        gz.write_all(bytes).and_then(|_| gz.finish()).map(|_| ())
    } else {
        out.write_all(bytes).and_then(|_| out.flush())
    };
    res.map_err(|e| Error::io(path, e))
}
