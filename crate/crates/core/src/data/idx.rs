//! Big-endian IDX files (the MNIST distribution format).

use std::path::Path;

use super::DataMatrix;
use crate::error::{AlleError, Result};

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], at: usize, path: &Path) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| AlleError::format(path, "truncated header"))
}

/// Parses an image file into `(count, rows, cols, pixels)`.
pub fn read_idx_images(bytes: &[u8], path: &Path) -> Result<(usize, usize, usize, Vec<u8>)> {
    let magic = be_u32(bytes, 0, path)?;
    if magic != IMAGES_MAGIC {
        return Err(AlleError::format(
            path,
            format!("bad image magic {magic:#010x}, expected {IMAGES_MAGIC:#010x}"),
        ));
    }
    let count = be_u32(bytes, 4, path)? as usize;
    let rows = be_u32(bytes, 8, path)? as usize;
    let cols = be_u32(bytes, 12, path)? as usize;
    let len = count * rows * cols;
    let payload = bytes
        .get(16..16 + len)
        .ok_or_else(|| AlleError::format(path, format!("truncated payload: need {len} pixel bytes")))?;
    Ok((count, rows, cols, payload.to_vec()))
}

pub fn read_idx_labels(bytes: &[u8], path: &Path) -> Result<Vec<u8>> {
    let magic = be_u32(bytes, 0, path)?;
    if magic != LABELS_MAGIC {
        return Err(AlleError::format(
            path,
            format!("bad label magic {magic:#010x}, expected {LABELS_MAGIC:#010x}"),
        ));
    }
    let count = be_u32(bytes, 4, path)? as usize;
    bytes
        .get(8..8 + count)
        .map(<[u8]>::to_vec)
        .ok_or_else(|| AlleError::format(path, format!("truncated payload: need {count} labels")))
}

/// Loads an IDX image file (and optionally its label file), flattening each
/// image to one row with pixels rescaled to `[0, 1]`.
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: Option<&Path>) -> Result<DataMatrix> {
    let images_path = images_path.as_ref();
    let bytes = std::fs::read(images_path).map_err(|e| AlleError::io(images_path, e))?;
    let (count, rows, cols, pixels) = read_idx_images(&bytes, images_path)?;
    let values = pixels.iter().map(|&p| f64::from(p) / 255.0).collect();
    let mut data = DataMatrix::new(count, rows * cols, values)?;
    if let Some(labels_path) = labels_path {
        let bytes = std::fs::read(labels_path).map_err(|e| AlleError::io(labels_path, e))?;
        let labels = read_idx_labels(&bytes, labels_path)?;
        if labels.len() != count {
            return Err(AlleError::format(
                labels_path,
                format!("{} labels for {count} images", labels.len()),
            ));
        }
        data = data.with_labels(labels.into_iter().map(usize::from).collect())?;
    }
    Ok(data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn images(count: u32, rows: u32, cols: u32, pixels: &[u8]) -> Vec<u8> {
        let mut out = Vec::new();
        for word in [IMAGES_MAGIC, count, rows, cols] {
            out.extend_from_slice(&word.to_be_bytes());
        }
        out.extend_from_slice(pixels);
        out
    }

    fn labels(values: &[u8]) -> Vec<u8> {
        let mut out = LABELS_MAGIC.to_be_bytes().to_vec();
        out.extend_from_slice(&(values.len() as u32).to_be_bytes());
        out.extend_from_slice(values);
        out
    }

    #[test]
    fn one_two_by_two_image() {
        let dir = tempfile::tempdir().unwrap();
        let img = dir.path().join("img");
        let lab = dir.path().join("lab");
        std::fs::write(&img, images(1, 2, 2, &[0, 255, 0, 255])).unwrap();
        std::fs::write(&lab, labels(&[7])).unwrap();
        let m = load_idx(&img, Some(&lab)).unwrap();
        assert_eq!(m.row(0), &[0.0, 1.0, 0.0, 1.0]);
        assert_eq!(m.labels().unwrap(), &[7]);
    }

    #[test]
    fn wrong_magic() {
        let mut bytes = images(1, 1, 1, &[3]);
        bytes[..4].copy_from_slice(&0u32.to_be_bytes());
        let err = read_idx_images(&bytes, Path::new("x")).unwrap_err();
        assert!(matches!(err, AlleError::Format { .. }));
        assert!(read_idx_labels(&images(1, 1, 1, &[3]), Path::new("x")).is_err());
    }

    #[test]
    fn truncated_and_mismatched() {
        assert!(read_idx_images(&images(2, 2, 2, &[0; 7]), Path::new("x")).is_err());
        assert!(read_idx_images(&[0, 0, 8], Path::new("x")).is_err());
        let dir = tempfile::tempdir().unwrap();
        let img = dir.path().join("img");
        let lab = dir.path().join("lab");
        std::fs::write(&img, images(2, 1, 1, &[0, 1])).unwrap();
        std::fs::write(&lab, labels(&[1, 2, 3])).unwrap();
        assert!(load_idx(&img, Some(&lab)).is_err());
    }
}
