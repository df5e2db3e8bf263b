//! Spatial patch splitting and stitching.
//!
//! Patching applies to the two spatial modes of a representation tensor:
//! modes (1,2) of a 4-mode `[N,H,W,3]` tensor and modes (0,1) of a 3-mode
//! `[H,W,C]` tensor — in both cases the last mode is channels and the two
//! modes before it are spatial. Tiles are non-overlapping, enumerated in
//! row-major tile order, and boundary tiles keep their ragged size when the
//! patch dimensions do not divide the image (no padding).

use crate::error::{Error, Result};
use crate::tensor::{increment_index, DenseTensor};

/// A row-major grid of tiles cut from one tensor. Tile `(tr, tc)` sits at
/// `patches[tr * tile_cols + tc]`. Fields are public so a pipeline can swap
/// each tile for its reconstruction before stitching; [`stitch_patches`]
/// re-validates consistency.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchGrid {
    pub tile_rows: usize,
    pub tile_cols: usize,
    pub patches: Vec<DenseTensor>,
}

impl PatchGrid {
    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }
}

/// Spatial (row, column) mode indices for a supported tensor order.
fn spatial_modes(order: usize) -> Result<(usize, usize)> {
    match order {
        3 => Ok((0, 1)),
        4 => Ok((1, 2)),
        _ => Err(Error::domain(format!(
            "patching expects a 3- or 4-mode tensor, got order {order}"
        ))),
    }
}

/// Splits `t` into non-overlapping spatial tiles of at most `ph` rows by
/// `pw` columns (ragged boundary tiles kept). Row-major tile order.
pub fn split_patches(t: &DenseTensor, pw: usize, ph: usize) -> Result<PatchGrid> {
    if pw == 0 || ph == 0 {
        return Err(Error::domain("patch dimensions must be at least 1"));
    }
    let (rm, cm) = spatial_modes(t.order())?;
    let shape = t.shape();
    let (h, w) = (shape[rm], shape[cm]);
    let tile_rows = h.div_ceil(ph);
    let tile_cols = w.div_ceil(pw);
    let mut patches = Vec::with_capacity(tile_rows * tile_cols);
    for tr in 0..tile_rows {
        let r0 = tr * ph;
        let rows = ph.min(h - r0);
        for tc in 0..tile_cols {
            let c0 = tc * pw;
            let cols = pw.min(w - c0);
            let mut pshape = shape.to_vec();
            pshape[rm] = rows;
            pshape[cm] = cols;
            let len: usize = pshape.iter().product();
            let mut idx = vec![0usize; pshape.len()];
            let mut src = vec![0usize; pshape.len()];
            let mut data = Vec::with_capacity(len);
            for _ in 0..len {
                src.copy_from_slice(&idx);
                src[rm] += r0;
                src[cm] += c0;
                data.push(t.get(&src));
                increment_index(&mut idx, &pshape);
            }
            patches.push(DenseTensor::new(pshape, data)?);
        }
    }
    Ok(PatchGrid {
        tile_rows,
        tile_cols,
        patches,
    })
}

/// Exact inverse of [`split_patches`]: reassembles the original tensor.
/// Errors with a domain error when the grid is internally inconsistent
/// (mismatched tile counts, non-spatial dims, or ragged sizes that disagree
/// across a tile row/column).
pub fn stitch_patches(grid: &PatchGrid) -> Result<DenseTensor> {
    if grid.tile_rows == 0 || grid.tile_cols == 0 {
        return Err(Error::domain("patch grid dimensions must be at least 1"));
    }
    if grid.patches.len() != grid.tile_rows * grid.tile_cols {
        return Err(Error::domain(format!(
            "patch grid holds {} tiles, expected {}x{}",
            grid.patches.len(),
            grid.tile_rows,
            grid.tile_cols
        )));
    }
    let order = grid.patches[0].order();
    let (rm, cm) = spatial_modes(order)?;

    // tile (tr, tc) must have the row height of its tile row, the column
    // width of its tile column, and everyone's non-spatial dims
    let tile = |tr: usize, tc: usize| &grid.patches[tr * grid.tile_cols + tc];
    let row_heights: Vec<usize> = (0..grid.tile_rows)
        .map(|tr| tile(tr, 0).shape()[rm])
        .collect();
    let col_widths: Vec<usize> = (0..grid.tile_cols)
        .map(|tc| tile(0, tc).shape()[cm])
        .collect();
    let mut out_shape = grid.patches[0].shape().to_vec();
    out_shape[rm] = row_heights.iter().sum();
    out_shape[cm] = col_widths.iter().sum();
    for tr in 0..grid.tile_rows {
        for tc in 0..grid.tile_cols {
            let p = tile(tr, tc);
            let mut expect = out_shape.clone();
            expect[rm] = row_heights[tr];
            expect[cm] = col_widths[tc];
            if p.order() != order || p.shape() != expect {
                return Err(Error::domain(format!(
                    "tile ({tr},{tc}) has shape {:?}, expected {:?}",
                    p.shape(),
                    expect
                )));
            }
        }
    }

    let len: usize = out_shape.iter().product();
    let mut data = vec![0.0; len];
    let out = DenseTensor::new(out_shape.clone(), vec![0.0; len])?; // index helper
    for tr in 0..grid.tile_rows {
        let r0: usize = row_heights[..tr].iter().sum();
        for tc in 0..grid.tile_cols {
            let c0: usize = col_widths[..tc].iter().sum();
            let p = tile(tr, tc);
            let mut idx = vec![0usize; order];
            let mut dst = vec![0usize; order];
            for &v in p.data() {
                dst.copy_from_slice(&idx);
                dst[rm] += r0;
                dst[cm] += c0;
                data[out.flat_index(&dst)] = v;
                increment_index(&mut idx, p.shape());
            }
        }
    }
    DenseTensor::new(out_shape, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded_rng;
    use rand::Rng;

    fn random_tensor(shape: Vec<usize>, seed: u64) -> DenseTensor {
        let mut rng = seeded_rng(seed);
        DenseTensor::from_fn(shape, |_| rng.random_range(-1.0..1.0)).unwrap()
    }

    #[test]
    fn full_size_patch_is_identity() {
        let t = random_tensor(vec![4, 6, 3], 1);
        let grid = split_patches(&t, 6, 4).unwrap();
        assert_eq!((grid.tile_rows, grid.tile_cols), (1, 1));
        assert_eq!(grid.patches[0], t);
        assert_eq!(stitch_patches(&grid).unwrap(), t);
    }

    #[test]
    fn batch_of_five_at_50x50_yields_36_tiles() {
        // counting: ceil(300/50)^2 = 36 tiles, each keeping the batch and
        // channel modes whole
        let t = DenseTensor::zeros(vec![5, 300, 300, 3]).unwrap();
        let grid = split_patches(&t, 50, 50).unwrap();
        assert_eq!((grid.tile_rows, grid.tile_cols), (6, 6));
        assert_eq!(grid.len(), 36);
        for p in &grid.patches {
            assert_eq!(p.shape(), &[5, 50, 50, 3]);
        }
    }

    #[test]
    fn tiles_are_row_major_and_ragged_at_boundaries() {
        // 5x7 spatial grid cut 3x3: tile columns are 3,3,1 wide and tile
        // rows 3,2 tall
        let t = DenseTensor::from_fn(vec![5, 7, 1], |idx| (idx[0] * 7 + idx[1]) as f64).unwrap();
        let grid = split_patches(&t, 3, 3).unwrap();
        assert_eq!((grid.tile_rows, grid.tile_cols), (2, 3));
        let shapes: Vec<&[usize]> = grid.patches.iter().map(|p| p.shape()).collect();
        assert_eq!(
            shapes,
            vec![
                &[3, 3, 1][..],
                &[3, 3, 1],
                &[3, 1, 1],
                &[2, 3, 1],
                &[2, 3, 1],
                &[2, 1, 1],
            ]
        );
        // top-left element of tile (1,2) is source pixel (3, 6)
        assert_eq!(grid.patches[5].get(&[0, 0, 0]), (3 * 7 + 6) as f64);
    }

    #[test]
    fn split_rejects_bad_inputs() {
        let t = DenseTensor::zeros(vec![4, 4, 3]).unwrap();
        assert!(split_patches(&t, 0, 2).is_err());
        assert!(split_patches(&t, 2, 0).is_err());
        let mat = DenseTensor::zeros(vec![4, 4]).unwrap();
        assert!(split_patches(&mat, 2, 2).is_err());
    }

    #[test]
    fn two_by_two_grid_of_single_pixels_reassembles() {
        let t = DenseTensor::new(vec![2, 2, 1], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let grid = split_patches(&t, 1, 1).unwrap();
        assert_eq!(grid.len(), 4);
        let vals: Vec<f64> = grid.patches.iter().map(|p| p.data()[0]).collect();
        assert_eq!(vals, vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(stitch_patches(&grid).unwrap(), t);
    }

    #[test]
    fn ragged_round_trip_is_bit_exact() {
        // 16x10 spatial dims with 7x7 patches: ragged on both axes
        let t3 = random_tensor(vec![16, 10, 3], 2);
        let grid = split_patches(&t3, 7, 7).unwrap();
        assert_eq!((grid.tile_rows, grid.tile_cols), (3, 2));
        assert_eq!(stitch_patches(&grid).unwrap(), t3);

        let t4 = random_tensor(vec![2, 16, 10, 3], 3);
        let grid = split_patches(&t4, 7, 7).unwrap();
        assert_eq!(stitch_patches(&grid).unwrap(), t4);
    }

    #[test]
    fn round_trip_across_shapes_and_patch_sizes() {
        let mut seed = 10;
        for shape in [vec![9, 9, 3], vec![3, 8, 5, 2], vec![1, 1, 1]] {
            for (pw, ph) in [(1, 1), (2, 3), (4, 4), (100, 1)] {
                seed += 1;
                let t = random_tensor(shape.clone(), seed);
                let grid = split_patches(&t, pw, ph).unwrap();
                assert_eq!(stitch_patches(&grid).unwrap(), t);
            }
        }
    }

    #[test]
    fn stitch_rejects_inconsistent_grids() {
        let t = random_tensor(vec![4, 4, 3], 20);
        let mut grid = split_patches(&t, 2, 2).unwrap();
        // wrong tile count
        let dropped = PatchGrid {
            tile_rows: 2,
            tile_cols: 2,
            patches: grid.patches[..3].to_vec(),
        };
        assert!(stitch_patches(&dropped).is_err());
        // a tile whose width disagrees with its column
        grid.patches[3] = DenseTensor::zeros(vec![2, 1, 3]).unwrap();
        assert!(stitch_patches(&grid).is_err());
        // a tile with mismatched channel count
        let mut grid = split_patches(&t, 2, 2).unwrap();
        grid.patches[0] = DenseTensor::zeros(vec![2, 2, 2]).unwrap();
        assert!(stitch_patches(&grid).is_err());
        // zero-dimension grids
        assert!(stitch_patches(&PatchGrid {
            tile_rows: 0,
            tile_cols: 1,
            patches: vec![],
        })
        .is_err());
    }
}
