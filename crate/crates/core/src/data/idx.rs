//! Reader for the IDX binary format used by MNIST-style image sets.

use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;

use byteorder::{BigEndian, ReadBytesExt};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

/// Images flattened row-major into columns of a `(rows*cols) × count` matrix,
/// pixel values scaled to `[0, 1]`. At most `limit` images are read.
pub fn read_idx_images<R: Read>(mut r: R, limit: Option<usize>) -> Result<Matrix> {
    let magic = r.read_u32::<BigEndian>()?;
    if magic != IMAGES_MAGIC {
        return Err(Error::Format(format!("bad IDX image magic {magic:#010x}")));
    }
    let count = r.read_u32::<BigEndian>()? as usize;
    let rows = r.read_u32::<BigEndian>()? as usize;
    let cols = r.read_u32::<BigEndian>()? as usize;
    let n = limit.map_or(count, |l| l.min(count));
    let pixels = rows * cols;

    let mut buf = vec![0u8; pixels];
    let mut out = Matrix::zeros(pixels, n);
    for j in 0..n {
        r.read_exact(&mut buf)?;
        for (i, b) in buf.iter().enumerate() {
            out[(i, j)] = f64::from(*b) / 255.0;
        }
    }
    Ok(out)
}

pub fn read_idx_labels<R: Read>(mut r: R, limit: Option<usize>) -> Result<Vec<u8>> {
    let magic = r.read_u32::<BigEndian>()?;
    if magic != LABELS_MAGIC {
        return Err(Error::Format(format!("bad IDX label magic {magic:#010x}")));
    }
    let count = r.read_u32::<BigEndian>()? as usize;
    let n = limit.map_or(count, |l| l.min(count));
    let mut labels = vec![0u8; n];
    r.read_exact(&mut labels)?;
    Ok(labels)
}

pub fn load_idx_images(path: impl AsRef<Path>, limit: Option<usize>) -> Result<Matrix> {
    read_idx_images(BufReader::new(File::open(path)?), limit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use byteorder::WriteBytesExt;

    fn encode(images: &[[u8; 6]]) -> Vec<u8> {
        let mut v = Vec::new();
        v.write_u32::<BigEndian>(IMAGES_MAGIC).unwrap();
        v.write_u32::<BigEndian>(images.len() as u32).unwrap();
        v.write_u32::<BigEndian>(2).unwrap();
        v.write_u32::<BigEndian>(3).unwrap();
        for img in images {
            v.extend_from_slice(img);
        }
        v
    }

    #[test]
    fn decodes_two_images() {
        let bytes = encode(&[[0, 255, 0, 0, 0, 51], [255; 6]]);
        let m = read_idx_images(&bytes[..], None).unwrap();
        assert_eq!(m.shape(), (6, 2));
        assert_eq!(m[(1, 0)], 1.0);
        assert_eq!(m[(5, 0)], 0.2);
        assert_eq!(m.column(1), vec![1.0; 6]);
    }

    #[test]
    fn limit_truncates() {
        let bytes = encode(&[[1; 6], [2; 6], [3; 6]]);
        assert_eq!(read_idx_images(&bytes[..], Some(2)).unwrap().cols(), 2);
    }

    #[test]
    fn wrong_magic_and_short_input() {
        let mut bytes = encode(&[[1; 6]]);
        bytes[3] = 0x01;
        assert!(matches!(read_idx_images(&bytes[..], None), Err(Error::Format(_))));
        let bytes = encode(&[[1; 6]]);
        assert!(read_idx_images(&bytes[..bytes.len() - 1], None).is_err());
    }

    #[test]
    fn labels() {
        let mut v = Vec::new();
        v.write_u32::<BigEndian>(LABELS_MAGIC).unwrap();
        v.write_u32::<BigEndian>(3).unwrap();
        v.extend_from_slice(&[7, 3, 1]);
        assert_eq!(read_idx_labels(&v[..], None).unwrap(), vec![7, 3, 1]);
    }
}
