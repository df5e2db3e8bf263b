//! Batch representations: how a batch of N images becomes the tensor(s)
//! handed to a decomposition.
//!
//! - `3-mode`: each image stays its own `[H, W, 3]` tensor.
//! - `3-mode-stacked`: one `[H, W, 3N]` tensor; image `i` occupies channel
//!   slices `3i..3i+3` in batch order.
//! - `4-mode`: one `[N, H, W, 3]` tensor; image `i` sits at index `i` of
//!   mode 0.
//!
//! `invert_representation` is the exact inverse — it returns raw image
//! tensors without clamping so round-trips are bit-exact even for
//! reconstructions that stray outside `[0,1]`.

use crate::error::{Error, Result};
use crate::tensor::DenseTensor;

use super::{ImageBatch, Representation};

/// Packs a batch into its representation tensors (see module docs for the
/// exact layouts). Always succeeds on a valid batch.
pub fn build_representation(batch: &ImageBatch, repr: Representation) -> Vec<DenseTensor> {
    build_from_slice(batch.images(), repr)
}

/// [`build_representation`] over a plain image slice; used internally when a
/// larger batch is processed in `batch_size` chunks.
pub(super) fn build_from_slice(images: &[DenseTensor], repr: Representation) -> Vec<DenseTensor> {
    let n = images.len();
    let (h, w) = {
        let s = images[0].shape();
        (s[0], s[1])
    };
    match repr {
        Representation::ThreeMode => images.to_vec(),
        Representation::ThreeModeStacked => {
            let mut data = vec![0.0; h * w * 3 * n];
            let stacked_c = 3 * n;
            for (i, img) in images.iter().enumerate() {
                let src = img.data();
                for rc in 0..h * w {
                    let dst = rc * stacked_c + 3 * i;
                    data[dst..dst + 3].copy_from_slice(&src[rc * 3..rc * 3 + 3]);
                }
            }
            vec![DenseTensor::new(vec![h, w, stacked_c], data).expect("stacked layout is exact")]
        }
        Representation::FourMode => {
            // mode 0 is the slowest row-major index, so 4-mode packing is
            // plain concatenation of the images' flat data
            let mut data = Vec::with_capacity(n * h * w * 3);
            for img in images {
                data.extend_from_slice(img.data());
            }
            vec![DenseTensor::new(vec![n, h, w, 3], data).expect("4-mode layout is exact")]
        }
    }
}

/// Exact inverse of [`build_representation`]: recovers the `n` raw
/// `[height, width, 3]` image tensors. No clamping is applied, so values
/// outside `[0,1]` (e.g. fresh reconstructions) pass through unchanged.
///
/// Errors with a domain error when the tensor count or shapes are
/// inconsistent with `(repr, n, height, width)`.
pub fn invert_representation(
    tensors: &[DenseTensor],
    repr: Representation,
    n: usize,
    height: usize,
    width: usize,
) -> Result<Vec<DenseTensor>> {
    if n == 0 {
        return Err(Error::domain("image count must be at least 1"));
    }
    let expect = |tensor: &DenseTensor, shape: &[usize]| -> Result<()> {
        if tensor.shape() != shape {
            return Err(Error::domain(format!(
                "representation tensor shape {:?} does not match expected {:?}",
                tensor.shape(),
                shape
            )));
        }
        Ok(())
    };
    match repr {
        Representation::ThreeMode => {
            if tensors.len() != n {
                return Err(Error::domain(format!(
                    "3-mode representation of {n} images needs {n} tensors, got {}",
                    tensors.len()
                )));
            }
            for t in tensors {
                expect(t, &[height, width, 3])?;
            }
            Ok(tensors.to_vec())
        }
        Representation::ThreeModeStacked => {
            if tensors.len() != 1 {
                return Err(Error::domain(format!(
                    "3-mode-stacked representation is a single tensor, got {}",
                    tensors.len()
                )));
            }
            expect(&tensors[0], &[height, width, 3 * n])?;
            let src = tensors[0].data();
            let stacked_c = 3 * n;
            let mut images = Vec::with_capacity(n);
            for i in 0..n {
                let mut data = vec![0.0; height * width * 3];
                for rc in 0..height * width {
                    let s = rc * stacked_c + 3 * i;
                    data[rc * 3..rc * 3 + 3].copy_from_slice(&src[s..s + 3]);
                }
                images.push(DenseTensor::new(vec![height, width, 3], data)?);
            }
            Ok(images)
        }
        Representation::FourMode => {
            if tensors.len() != 1 {
                return Err(Error::domain(format!(
                    "4-mode representation is a single tensor, got {}",
                    tensors.len()
                )));
            }
            expect(&tensors[0], &[n, height, width, 3])?;
            let src = tensors[0].data();
            let per = height * width * 3;
            (0..n)
                .map(|i| DenseTensor::new(vec![height, width, 3], src[i * per..(i + 1) * per].to_vec()))
                .collect()
        }
    }
}
