use std::path::Path;

use super::matrix_file::{read_matrix, write_matrix, CONTENT_MAGIC};
use crate::error::{Error, Result};
use crate::numcore::Tensor;

/// Loads a `COMF` content-feature matrix `[frames, dim]`. When
/// `expected_dim` is given the file's dimension must match it.
pub fn load_content_features(path: &Path, expected_dim: Option<usize>) -> Result<Tensor> {
    let m = read_matrix(path, CONTENT_MAGIC)?;
    if let Some(dim) = expected_dim {
        if m.shape()[1] != dim {
            return Err(Error::Format {
                kind: "feature",
                reason: format!(
                    "{}: dim {} does not match configured {dim}",
                    path.display(),
                    m.shape()[1]
                ),
            });
        }
    }
    Ok(m)
}

pub fn save_content_features(path: &Path, m: &Tensor) -> Result<()> {
    write_matrix(path, CONTENT_MAGIC, m)
}

/// Trims trailing rows or repeats the last row so the matrix has exactly
/// `frames` rows.
pub fn reconcile_frames(m: &Tensor, frames: usize) -> Result<Tensor> {
    let (rows, dim) = m.dims2("reconcile_frames")?;
    if frames == 0 {
        return Err(Error::invalid("cannot reconcile to zero frames"));
    }
    let mut data = Vec::with_capacity(frames * dim);
    data.extend_from_slice(&m.data()[..rows.min(frames) * dim]);
    let last = &m.data()[(rows - 1) * dim..];
    for _ in rows..frames {
        data.extend_from_slice(last);
    }
    Tensor::new(&[frames, dim], data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::{randn, Rng, Scalar};

    fn f32_exact(t: Tensor) -> Tensor {
        let data = t.data().iter().map(|&v| v as f32 as Scalar).collect();
        Tensor::new(t.shape(), data).unwrap()
    }

    #[test]
    fn load_shape_and_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.comf");
        let m = f32_exact(randn(&mut Rng::new(1), &[10, 768]));
        save_content_features(&path, &m).unwrap();
        let back = load_content_features(&path, Some(768)).unwrap();
        assert_eq!(back.shape(), &[10, 768]);
        assert_eq!(back, m);
        assert!(load_content_features(&path, Some(256)).is_err());
    }

    #[test]
    fn reconcile_pads_and_truncates() {
        let m = Tensor::new(&[3, 2], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let longer = reconcile_frames(&m, 4).unwrap();
        assert_eq!(longer.shape(), &[4, 2]);
        assert_eq!(&longer.data()[6..], &[5.0, 6.0]);
        let shorter = reconcile_frames(&m, 2).unwrap();
        assert_eq!(shorter.data(), &[1.0, 2.0, 3.0, 4.0]);
    }
}
