//! IDX (big-endian) image/label files as distributed for MNIST and Fashion-MNIST.

use std::path::{Path, PathBuf};

use super::Dataset;
use crate::error::{Error, Result};
use crate::numerics::{Matrix, Real};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

/// Train or test half of a dataset directory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    fn prefix(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "t10k",
        }
    }

    pub fn image_file(self) -> String {
        format!("{}-images-idx3-ubyte", self.prefix())
    }

    pub fn label_file(self) -> String {
        format!("{}-labels-idx1-ubyte", self.prefix())
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a str,
}

impl<'a> Reader<'a> {
    fn err(&self, offset: usize, reason: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.to_string(),
            offset,
            reason: reason.into(),
        }
    }

    fn u32(&mut self) -> Result<u32> {
        let end = self.pos + 4;
        let b = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| self.err(self.pos, "truncated header"))?;
        self.pos = end;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn magic(&mut self, expected: u32) -> Result<()> {
        let at = self.pos;
        let m = self.u32()?;
        if m != expected {
            return Err(self.err(at, format!("bad magic 0x{m:08x}, expected 0x{expected:08x}")));
        }
        Ok(())
    }

    fn body(&mut self, len: usize) -> Result<&'a [u8]> {
        let end = self.pos + len;
        if end > self.bytes.len() {
            return Err(self.err(
                self.bytes.len(),
                format!("truncated body: need {len} bytes from offset {}", self.pos),
            ));
        }
        let b = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(b)
    }
}

/// Parses an image file; returns `(count, rows·cols, pixels/255)`.
pub fn parse_images(bytes: &[u8], path: &str) -> Result<Matrix> {
    let mut r = Reader { bytes, pos: 0, path };
    r.magic(IMAGES_MAGIC)?;
    let n = r.u32()? as usize;
    let rows = r.u32()? as usize;
    let cols = r.u32()? as usize;
    let dim = rows * cols;
    let body = r.body(n * dim)?;
    let data = body.iter().map(|&p| p as Real / 255.0).collect();
    Matrix::new(n, dim, data)
}

pub fn parse_labels(bytes: &[u8], path: &str) -> Result<Vec<usize>> {
    let mut r = Reader { bytes, pos: 0, path };
    r.magic(LABELS_MAGIC)?;
    let n = r.u32()? as usize;
    Ok(r.body(n)?.iter().map(|&l| l as usize).collect())
}

/// Image and label byte buffers into a dataset.
pub fn parse_idx(images: &[u8], labels: &[u8], image_path: &str, label_path: &str) -> Result<Dataset> {
    let x = parse_images(images, image_path)?;
    let y = parse_labels(labels, label_path)?;
    if x.rows() != y.len() {
        return Err(Error::Parse {
            path: label_path.to_string(),
            offset: 4,
            reason: format!("{} labels for {} images", y.len(), x.rows()),
        });
    }
    Dataset::new(x, y)
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn load_idx(images: &Path, labels: &Path) -> Result<Dataset> {
    parse_idx(
        &read(images)?,
        &read(labels)?,
        &images.display().to_string(),
        &labels.display().to_string(),
    )
}

/// Directory holding the IDX files for `dataset`: `root/<dataset>/` when it
/// exists, else `root/` itself.
pub fn resolve_dir(root: &Path, dataset: &str) -> PathBuf {
    let nested = root.join(dataset);
    if nested.join(Split::Train.image_file()).exists() {
        nested
    } else {
        root.to_path_buf()
    }
}

pub fn load_split(root: &Path, dataset: &str, split: Split) -> Result<Dataset> {
    let dir = resolve_dir(root, dataset);
    load_idx(&dir.join(split.image_file()), &dir.join(split.label_file()))
}
