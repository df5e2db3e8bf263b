//! Stochastic Local Quantization (SLQ) baseline defense.
//!
//! Approximates JPEG re-compression per 8×8 spatial block at a quality drawn
//! randomly from a small pool: orthonormal DCT, division by the
//! quality-scaled standard luminance table, rounding, and inversion. Chroma
//! subsampling, color-space conversion, and entropy coding are deliberately
//! omitted — the defensive effect lives entirely in quantization, and
//! entropy coding is bit-identical on decode. Quantization runs per RGB
//! channel with one quality shared by all three channels of a block.

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::seeded_rng;
use crate::tensor::{DenseTensor, Matrix};

/// Standard JPEG luminance quantization table (row-major 8×8).
pub const BASE_LUMINANCE: [u16; 64] = [
    16, 11, 10, 16, 24, 40, 51, 61, //
    12, 12, 14, 19, 26, 58, 60, 55, //
    14, 13, 16, 24, 40, 57, 69, 56, //
    14, 17, 22, 29, 51, 87, 80, 62, //
    18, 22, 37, 56, 68, 109, 103, 77, //
    24, 35, 55, 64, 81, 104, 113, 92, //
    49, 64, 78, 87, 103, 121, 120, 101, //
    72, 92, 95, 98, 112, 100, 103, 99,
];

/// Quality pool, spatial block size, and draw seed for [`slq`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlqConfig {
    pub qualities: Vec<u8>,
    pub block: usize,
    pub seed: u64,
}

impl Default for SlqConfig {
    fn default() -> Self {
        Self {
            qualities: vec![20, 40, 60, 80],
            block: 8,
            seed: 0,
        }
    }
}

impl SlqConfig {
    pub fn validate(&self) -> Result<()> {
        if self.qualities.is_empty() {
            return Err(Error::domain("slq quality pool must be nonempty"));
        }
        for &q in &self.qualities {
            check_quality(q)?;
        }
        if self.block < 1 {
            return Err(Error::domain("slq block size must be at least 1"));
        }
        Ok(())
    }
}

fn check_quality(quality: u8) -> Result<()> {
    if !(1..=100).contains(&quality) {
        return Err(Error::domain(format!(
            "jpeg quality {quality} out of range 1..=100"
        )));
    }
    Ok(())
}

/// Luminance table scaled by the libjpeg quality rule: `scale = 5000/q` for
/// `q < 50`, else `200 - 2q`; each entry becomes `(t*scale + 50) / 100` in
/// integer arithmetic, clamped to at least 1.
pub fn quant_table(quality: u8) -> Result<[u32; 64]> {
    check_quality(quality)?;
    let q = quality as u32;
    let scale = if q < 50 { 5000 / q } else { 200 - 2 * q };
    let mut table = [0u32; 64];
    for (out, &base) in table.iter_mut().zip(&BASE_LUMINANCE) {
        *out = ((base as u32 * scale + 50) / 100).max(1);
    }
    Ok(table)
}

/// Orthonormal type-II DCT matrix of size `n`.
fn dct_matrix(n: usize) -> Matrix {
    let inv = 1.0 / (n as f64).sqrt();
    let scale = (2.0 / n as f64).sqrt();
    Matrix::from_fn(n, n, |u, i| {
        let a = if u == 0 { inv } else { scale };
        a * (std::f64::consts::PI * (2 * i + 1) as f64 * u as f64 / (2 * n) as f64).cos()
    })
}

/// Separable 2D DCT (or its inverse) of a `rows x cols` block.
fn transform_2d(block: &Matrix, inverse: bool) -> Matrix {
    let mr = dct_matrix(block.rows());
    let mc = dct_matrix(block.cols());
    let (left, right) = if inverse {
        (mr.transpose(), mc)
    } else {
        (mr, mc.transpose())
    };
    left.matmul(block)
        .and_then(|p| p.matmul(&right))
        .expect("dct matrices match the block")
}

/// Orthonormal 2D DCT of an 8×8 block (row-major).
pub fn dct8(block: &[f64; 64]) -> [f64; 64] {
    let m = Matrix::new(8, 8, block.to_vec()).expect("64 values");
    transform_2d(&m, false)
        .into_data()
        .try_into()
        .expect("8x8 output")
}

/// Inverse of [`dct8`].
pub fn idct8(coeffs: &[f64; 64]) -> [f64; 64] {
    let m = Matrix::new(8, 8, coeffs.to_vec()).expect("64 values");
    transform_2d(&m, true)
        .into_data()
        .try_into()
        .expect("8x8 output")
}

/// Quantizes and immediately dequantizes 8×8 DCT coefficients at the given
/// quality: `c' = round(c / t) * t` per entry of the scaled table.
pub fn quantize_block(coeffs: &[f64; 64], quality: u8) -> Result<[f64; 64]> {
    let table = quant_table(quality)?;
    let mut out = [0.0; 64];
    for i in 0..64 {
        let t = table[i] as f64;
        out[i] = (coeffs[i] / t).round() * t;
    }
    Ok(out)
}

/// Table entry for coefficient `(u, v)` of a possibly truncated block; rows
/// and columns beyond the 8×8 table reuse its last row/column.
fn table_at(table: &[u32; 64], u: usize, v: usize) -> f64 {
    table[u.min(7) * 8 + v.min(7)] as f64
}

/// Applies SLQ to a `[height, width, 3]` image in `[0,1]`: per spatial
/// block, one quality drawn uniformly from the pool (seeded, row-major block
/// order) quantizes all three channels. Edge blocks are processed at their
/// truncated size. Output is clamped to `[0,1]`; deterministic per seed.
pub fn slq(image: &DenseTensor, cfg: &SlqConfig) -> Result<DenseTensor> {
    cfg.validate()?;
    let shape = image.shape();
    if shape.len() != 3 || shape[2] != 3 {
        return Err(Error::domain(format!(
            "slq expects a [height, width, 3] image, got {shape:?}"
        )));
    }
    let (h, w) = (shape[0], shape[1]);
    let b = cfg.block;
    let blocks_r = h.div_ceil(b);
    let blocks_c = w.div_ceil(b);

    // draw every block's quality up front so block processing order can
    // never affect the outcome
    let mut rng = seeded_rng(cfg.seed);
    let qualities: Vec<u8> = (0..blocks_r * blocks_c)
        .map(|_| cfg.qualities[rng.random_range(0..cfg.qualities.len())])
        .collect();
    let tables: Vec<[u32; 64]> = cfg
        .qualities
        .iter()
        .map(|&q| quant_table(q))
        .collect::<Result<_>>()?;

    let mut out = image.data().to_vec();
    for br in 0..blocks_r {
        for bc in 0..blocks_c {
            let quality = qualities[br * blocks_c + bc];
            let table = &tables[cfg.qualities.iter().position(|&q| q == quality).unwrap()];
            let r0 = br * b;
            let c0 = bc * b;
            let rows = (h - r0).min(b);
            let cols = (w - c0).min(b);
            for ch in 0..3 {
                // level-shifted byte-scale block, as in JPEG
                let block = Matrix::from_fn(rows, cols, |i, j| {
                    image.get(&[r0 + i, c0 + j, ch]) * 255.0 - 128.0
                });
                let mut coeffs = transform_2d(&block, false);
                for u in 0..rows {
                    for v in 0..cols {
                        let t = table_at(table, u, v);
                        coeffs.set(u, v, (coeffs.get(u, v) / t).round() * t);
                    }
                }
                let restored = transform_2d(&coeffs, true);
                for i in 0..rows {
                    for j in 0..cols {
                        let v = ((restored.get(i, j) + 128.0) / 255.0).clamp(0.0, 1.0);
                        out[((r0 + i) * w + (c0 + j)) * 3 + ch] = v;
                    }
                }
            }
        }
    }
    DenseTensor::new(shape.to_vec(), out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded_rng;
    use rand::Rng;

    fn random_block(seed: u64) -> [f64; 64] {
        let mut rng = seeded_rng(seed);
        let mut b = [0.0; 64];
        for v in b.iter_mut() {
            *v = rng.random_range(-128.0..128.0);
        }
        b
    }

    /// Image on the 1/255 grid.
    fn integer_grid_image(h: usize, w: usize, seed: u64) -> DenseTensor {
        let mut rng = seeded_rng(seed);
        DenseTensor::from_fn(vec![h, w, 3], |_| rng.random_range(0..=255u32) as f64 / 255.0)
            .unwrap()
    }

    #[test]
    fn dct_round_trip_and_parseval() {
        let b = random_block(1);
        let c = dct8(&b);
        let back = idct8(&c);
        for i in 0..64 {
            assert!((back[i] - b[i]).abs() <= 1e-10);
        }
        let e_pix: f64 = b.iter().map(|x| x * x).sum();
        let e_coef: f64 = c.iter().map(|x| x * x).sum();
        assert!((e_pix - e_coef).abs() <= 1e-10 * e_pix.max(1.0));
    }

    #[test]
    fn constant_block_is_pure_dc() {
        let b = [17.0; 64];
        let c = dct8(&b);
        assert!((c[0] - 8.0 * 17.0).abs() < 1e-10); // DC = n * mean for orthonormal 2D
        for v in &c[1..] {
            assert!(v.abs() < 1e-10);
        }
    }

    #[test]
    fn cosine_row_pattern_concentrates_in_one_row() {
        for u0 in 1..8usize {
            let mut b = [0.0; 64];
            for i in 0..8 {
                for j in 0..8 {
                    b[i * 8 + j] =
                        (std::f64::consts::PI * (2 * i + 1) as f64 * u0 as f64 / 16.0).cos();
                }
            }
            let c = dct8(&b);
            // independent basis-projection oracle
            for u in 0..8 {
                for v in 0..8 {
                    let au = if u == 0 { (1.0f64 / 8.0).sqrt() } else { 0.5 };
                    let av = if v == 0 { (1.0f64 / 8.0).sqrt() } else { 0.5 };
                    let mut proj = 0.0;
                    for i in 0..8 {
                        for j in 0..8 {
                            proj += b[i * 8 + j]
                                * au
                                * (std::f64::consts::PI * (2 * i + 1) as f64 * u as f64 / 16.0)
                                    .cos()
                                * av
                                * (std::f64::consts::PI * (2 * j + 1) as f64 * v as f64 / 16.0)
                                    .cos();
                        }
                    }
                    assert!((c[u * 8 + v] - proj).abs() < 1e-10);
                    if (u, v) != (u0, 0) {
                        assert!(c[u * 8 + v].abs() < 1e-9, "leak at ({u},{v})");
                    }
                }
            }
            assert!(c[u0 * 8].abs() > 1.0);
        }
    }

    #[test]
    fn quality_50_is_the_base_table() {
        let t = quant_table(50).unwrap();
        for (a, b) in t.iter().zip(&BASE_LUMINANCE) {
            assert_eq!(*a, *b as u32);
        }
    }

    #[test]
    fn quality_100_is_all_ones_and_preserves_integer_coeffs() {
        let t = quant_table(100).unwrap();
        assert!(t.iter().all(|e| *e == 1));
        let mut c = [0.0; 64];
        for (i, v) in c.iter_mut().enumerate() {
            *v = (i as f64) - 31.0;
        }
        let q = quantize_block(&c, 100).unwrap();
        assert_eq!(q, c);
    }

    #[test]
    fn higher_quality_never_coarsens_any_entry() {
        let mut prev = quant_table(1).unwrap();
        for q in 2..=100u8 {
            let cur = quant_table(q).unwrap();
            for (c, p) in cur.iter().zip(&prev) {
                assert!(c <= p, "quality {q} coarsened an entry");
            }
            prev = cur;
        }
    }

    #[test]
    fn quantization_error_is_at_most_half_a_step() {
        for seed in 0..5 {
            let c = dct8(&random_block(seed));
            for &q in &[20u8, 40, 60, 80] {
                let t = quant_table(q).unwrap();
                let out = quantize_block(&c, q).unwrap();
                for i in 0..64 {
                    assert!((out[i] - c[i]).abs() <= t[i] as f64 / 2.0 + 1e-9);
                }
            }
        }
    }

    #[test]
    fn quality_out_of_range_is_rejected() {
        assert!(quant_table(0).is_err());
        assert!(quantize_block(&[0.0; 64], 101).is_err());
        let bad = SlqConfig {
            qualities: vec![],
            ..SlqConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = SlqConfig {
            block: 0,
            ..SlqConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn quality_100_round_trip_obeys_the_rounding_bound() {
        // honest per-pixel bound: each coefficient moves at most 1/2 (table
        // of ones, byte units), so pixel (i,j) moves at most
        // 0.5 * sum_uv |M[u,i] M[v,j]| byte units through the inverse DCT
        let m = dct_matrix(8);
        let mut bound = [0.0f64; 64];
        for i in 0..8 {
            for j in 0..8 {
                let mut s = 0.0;
                for u in 0..8 {
                    for v in 0..8 {
                        s += (m.get(u, i) * m.get(v, j)).abs();
                    }
                }
                bound[i * 8 + j] = 0.5 * s / 255.0;
            }
        }
        let img = integer_grid_image(16, 16, 7);
        let cfg = SlqConfig {
            qualities: vec![100],
            ..SlqConfig::default()
        };
        let out = slq(&img, &cfg).unwrap();
        for r in 0..16 {
            for c in 0..16 {
                for ch in 0..3 {
                    let diff = (out.get(&[r, c, ch]) - img.get(&[r, c, ch])).abs();
                    assert!(diff <= bound[(r % 8) * 8 + (c % 8)] + 1e-12);
                }
            }
        }

        // blockwise-constant integer images round-trip within 1/255
        let flat = DenseTensor::from_fn(vec![16, 16, 3], |idx| {
            let v = 40 * (idx[0] / 8) + 17 * (idx[1] / 8) + 90 * idx[2];
            (v % 256) as f64 / 255.0
        })
        .unwrap();
        let out = slq(&flat, &cfg).unwrap();
        for (a, b) in out.data().iter().zip(flat.data()) {
            assert!((a - b).abs() <= 1.0 / 255.0);
        }
    }

    #[test]
    fn single_quality_pool_matches_uniform_quantization() {
        // oracle: apply dct8/quantize_block/idct8 directly to every full
        // block — independent of slq's block iteration and rng plumbing
        let img = integer_grid_image(16, 24, 3);
        let cfg = SlqConfig {
            qualities: vec![40],
            ..SlqConfig::default()
        };
        let got = slq(&img, &cfg).unwrap();

        let (h, w) = (16usize, 24usize);
        let mut want = img.data().to_vec();
        for br in 0..h / 8 {
            for bc in 0..w / 8 {
                for ch in 0..3 {
                    let mut block = [0.0; 64];
                    for i in 0..8 {
                        for j in 0..8 {
                            block[i * 8 + j] =
                                img.get(&[br * 8 + i, bc * 8 + j, ch]) * 255.0 - 128.0;
                        }
                    }
                    let q = quantize_block(&dct8(&block), 40).unwrap();
                    let back = idct8(&q);
                    for i in 0..8 {
                        for j in 0..8 {
                            let v = ((back[i * 8 + j] + 128.0) / 255.0).clamp(0.0, 1.0);
                            want[((br * 8 + i) * w + bc * 8 + j) * 3 + ch] = v;
                        }
                    }
                }
            }
        }
        assert_eq!(got.data(), &want[..]);
    }

    #[test]
    fn blocks_are_local() {
        let img = integer_grid_image(20, 17, 11); // ragged in both dimensions
        let cfg = SlqConfig::default();
        let base = slq(&img, &cfg).unwrap();

        let mut bumped = img.data().to_vec();
        let w = 17;
        bumped[(3 * w + 3) * 3 + 1] = (bumped[(3 * w + 3) * 3 + 1] + 0.37).rem_euclid(1.0);
        let bumped = DenseTensor::new(vec![20, 17, 3], bumped).unwrap();
        let out = slq(&bumped, &cfg).unwrap();

        for r in 0..20 {
            for c in 0..17 {
                if r < 8 && c < 8 {
                    continue; // the perturbed block itself
                }
                for ch in 0..3 {
                    assert_eq!(
                        base.get(&[r, c, ch]),
                        out.get(&[r, c, ch]),
                        "leak at ({r},{c},{ch})"
                    );
                }
            }
        }
    }

    #[test]
    fn slq_is_deterministic_per_seed() {
        let img = integer_grid_image(24, 24, 13);
        let cfg = SlqConfig::default();
        let a = slq(&img, &cfg).unwrap();
        let b = slq(&img, &cfg).unwrap();
        assert_eq!(a.data(), b.data());
        let other = SlqConfig {
            seed: 1,
            ..SlqConfig::default()
        };
        let c = slq(&img, &other).unwrap();
        assert_ne!(a.data(), c.data());
    }

    #[test]
    fn output_stays_in_range_and_shape() {
        let img = integer_grid_image(19, 10, 17);
        let out = slq(&img, &SlqConfig::default()).unwrap();
        assert_eq!(out.shape(), img.shape());
        assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
        let gray = DenseTensor::zeros(vec![8, 8, 1]).unwrap();
        assert!(slq(&gray, &SlqConfig::default()).is_err());
    }
}
