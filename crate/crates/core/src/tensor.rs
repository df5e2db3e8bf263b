//! Dense N-mode tensors and the index algebra shared by every decomposition.
//!
//! Storage is row-major with the last index fastest. The mode-n unfolding
//! keeps the remaining modes in their original order, again with the last
//! varying fastest: element `(i_0, .., i_{d-1})` lands in row `i_n` and in
//! the column obtained by deleting digit `n` from the mixed-radix index.
//! Concretely, with `s_n` the row-major stride of mode `n` and `I_n` its
//! size,
//!
//! ```text
//! flat = high * (s_n * I_n) + i_n * s_n + low      (low < s_n)
//! col  = high * s_n + low
//! ```
//!
//! so the mode-0 unfolding is a plain reshape of the flat data. Both tensors
//! and matrices are immutable after construction and all operations here are
//! pure, so values can be shared freely across worker threads.

use crate::error::{Error, Result};

/// Dense N-mode array of `f64` scalars.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl DenseTensor {
    /// Builds a tensor, rejecting empty shapes, zero-sized modes, length
    /// mismatches and non-finite scalars.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() {
            return Err(Error::domain("tensor order must be at least 1"));
        }
        if shape.iter().any(|&n| n == 0) {
            return Err(Error::domain(format!(
                "every mode size must be at least 1, got {shape:?}"
            )));
        }
        let expected: usize = shape.iter().product();
        if data.len() != expected {
            return Err(Error::domain(format!(
                "data length {} does not match shape {:?} (expected {})",
                data.len(),
                shape,
                expected
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::domain(format!(
                "non-finite scalar {} at flat index {pos}",
                data[pos]
            )));
        }
        Ok(DenseTensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        let len: usize = shape.iter().product();
        DenseTensor::new(shape, vec![0.0; len])
    }

    /// Builds a tensor by evaluating `f` at every multi-index in row-major
    /// order (last index fastest).
    pub fn from_fn(shape: Vec<usize>, mut f: impl FnMut(&[usize]) -> f64) -> Result<Self> {
        let len: usize = shape.iter().product();
        let mut idx = vec![0usize; shape.len()];
        let mut data = Vec::with_capacity(len);
        for _ in 0..len {
            data.push(f(&idx));
            increment_index(&mut idx, &shape);
        }
        DenseTensor::new(shape, data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn order(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Row-major flat offset of a multi-index.
    pub fn flat_index(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.shape.len());
        let mut flat = 0;
        for (i, (&ix, &n)) in idx.iter().zip(&self.shape).enumerate() {
            debug_assert!(ix < n, "index {ix} out of range for mode {i} (size {n})");
            flat = flat * n + ix;
        }
        flat
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.flat_index(idx)]
    }

    /// Reinterprets a 2-mode tensor as a matrix; the flat data moves without
    /// copying.
    pub fn into_matrix(self) -> Result<Matrix> {
        if self.order() != 2 {
            return Err(Error::domain(format!(
                "only 2-mode tensors convert to matrices, got order {}",
                self.order()
            )));
        }
        Ok(Matrix {
            rows: self.shape[0],
            cols: self.shape[1],
            data: self.data,
        })
    }
}

/// Advances a row-major multi-index (last position fastest). Wraps to all
/// zeros after the final index.
pub(crate) fn increment_index(idx: &mut [usize], shape: &[usize]) {
    for k in (0..idx.len()).rev() {
        idx[k] += 1;
        if idx[k] < shape[k] {
            return;
        }
        idx[k] = 0;
    }
}

/// Dense row-major matrix; the 2-mode carrier for unfoldings and factors.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::domain("matrix dimensions must be positive"));
        }
        if data.len() != rows * cols {
            return Err(Error::domain(format!(
                "data length {} does not match {rows}x{cols}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::domain(format!(
                "non-finite scalar {} at flat index {pos}",
                data[pos]
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn col(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::domain(format!(
                "matmul dimension mismatch: {}x{} * {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let (m, n, p) = (self.rows, self.cols, other.cols);
        let mut out = vec![0.0; m * p];
        for i in 0..m {
            let orow = &mut out[i * p..(i + 1) * p];
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == 0.0 {
                    continue;
                }
                let brow = &other.data[k * p..(k + 1) * p];
                for (o, &b) in orow.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        Ok(Matrix {
            rows: m,
            cols: p,
            data: out,
        })
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Reinterprets the matrix as a 2-mode tensor without copying.
    pub fn into_tensor(self) -> DenseTensor {
        DenseTensor {
            shape: vec![self.rows, self.cols],
            data: self.data,
        }
    }
}

/// Mode-n matricization. Rows index mode `mode`; columns enumerate the
/// remaining modes in their original order with the last varying fastest
/// (see the module docs for the exact digit-deletion formula).
pub fn unfold(t: &DenseTensor, mode: usize) -> Result<Matrix> {
    if mode >= t.order() {
        return Err(Error::domain(format!(
            "mode {mode} out of range for order-{} tensor",
            t.order()
        )));
    }
    let n_mode = t.shape[mode];
    let cols = t.len() / n_mode;
    // row-major stride of `mode`
    let stride: usize = t.shape[mode + 1..].iter().product();
    let block = stride * n_mode;
    let mut out = vec![0.0; t.len()];
    for (flat, &v) in t.data.iter().enumerate() {
        let row = (flat / stride) % n_mode;
        let col = (flat / block) * stride + flat % stride;
        out[row * cols + col] = v;
    }
    Matrix::new(n_mode, cols, out)
}

/// Exact inverse of [`unfold`]: rebuilds the tensor of `shape` from its
/// mode-n matricization.
pub fn fold(m: &Matrix, mode: usize, shape: &[usize]) -> Result<DenseTensor> {
    if mode >= shape.len() {
        return Err(Error::domain(format!(
            "mode {mode} out of range for shape {shape:?}"
        )));
    }
    let total: usize = shape.iter().product();
    let n_mode = shape[mode];
    if m.rows != n_mode || m.cols * n_mode != total {
        return Err(Error::domain(format!(
            "matrix {}x{} inconsistent with shape {:?} at mode {}",
            m.rows, m.cols, shape, mode
        )));
    }
    let stride: usize = shape[mode + 1..].iter().product();
    let block = stride * n_mode;
    let cols = m.cols;
    let mut data = vec![0.0; total];
    for (flat, slot) in data.iter_mut().enumerate() {
        let row = (flat / stride) % n_mode;
        let col = (flat / block) * stride + flat % stride;
        *slot = m.data[row * cols + col];
    }
    DenseTensor::new(shape.to_vec(), data)
}

/// Mode-n product `t ×_mode a`: contracts mode `mode` of `t` with the
/// columns of `a`, replacing that mode's size with `a.rows()`.
pub fn mode_n_product(t: &DenseTensor, a: &Matrix, mode: usize) -> Result<DenseTensor> {
    if mode >= t.order() {
        return Err(Error::domain(format!(
            "mode {mode} out of range for order-{} tensor",
            t.order()
        )));
    }
    if a.cols != t.shape[mode] {
        return Err(Error::domain(format!(
            "mode-{mode} product mismatch: matrix has {} cols, mode size is {}",
            a.cols, t.shape[mode]
        )));
    }
    let unfolded = unfold(t, mode)?;
    let product = a.matmul(&unfolded)?;
    let mut new_shape = t.shape.clone();
    new_shape[mode] = a.rows;
    fold(&product, mode, &new_shape)
}

/// Column-wise Kronecker (Khatri-Rao) product. Column `r` of the result is
/// `kron(a[:,r], b[:,r])`, with `b`'s index varying fastest.
pub fn khatri_rao(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.cols {
        return Err(Error::domain(format!(
            "khatri-rao column mismatch: {} vs {}",
            a.cols, b.cols
        )));
    }
    let rows = a.rows * b.rows;
    let cols = a.cols;
    let mut out = vec![0.0; rows * cols];
    for ia in 0..a.rows {
        for ib in 0..b.rows {
            let row = ia * b.rows + ib;
            for c in 0..cols {
                out[row * cols + c] = a.get(ia, c) * b.get(ib, c);
            }
        }
    }
    Matrix::new(rows, cols, out)
}

/// Frobenius norm: square root of the sum of squared entries.
pub fn frobenius_norm(t: &DenseTensor) -> f64 {
    t.data.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Independent enumeration oracle: places every element through the
    /// documented digit-deletion formula one multi-index at a time.
    fn unfold_oracle(t: &DenseTensor, mode: usize) -> Matrix {
        let shape = t.shape();
        let rows = shape[mode];
        let cols = t.len() / rows;
        let mut out = Matrix::zeros(rows, cols);
        let mut idx = vec![0usize; shape.len()];
        for _ in 0..t.len() {
            // column index: remaining modes in order, last fastest
            let mut col = 0;
            for (k, &ix) in idx.iter().enumerate() {
                if k != mode {
                    col = col * shape[k] + ix;
                }
            }
            out.set(idx[mode], col, t.get(&idx));
            increment_index(&mut idx, shape);
        }
        out
    }

    fn tensor_222() -> DenseTensor {
        // t[i,j,k] = 1 + 4i + 2j + k
        DenseTensor::from_fn(vec![2, 2, 2], |idx| {
            1.0 + 4.0 * idx[0] as f64 + 2.0 * idx[1] as f64 + idx[2] as f64
        })
        .unwrap()
    }

    #[test]
    fn construction_rejects_bad_inputs() {
        assert!(DenseTensor::new(vec![], vec![]).is_err());
        assert!(DenseTensor::new(vec![2, 0], vec![]).is_err());
        assert!(DenseTensor::new(vec![2, 2], vec![1.0; 3]).is_err());
        assert!(DenseTensor::new(vec![2], vec![1.0, f64::NAN]).is_err());
        assert!(DenseTensor::new(vec![2], vec![1.0, f64::INFINITY]).is_err());
        assert!(DenseTensor::new(vec![1], vec![0.5]).is_ok());
    }

    #[test]
    fn matrix_unfolds_to_itself() {
        let t = DenseTensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let m = unfold(&t, 0).unwrap();
        assert_eq!(m.data(), &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!((m.rows(), m.cols()), (2, 2));
    }

    #[test]
    fn unfold_222_mode0_matches_enumeration() {
        let t = tensor_222();
        let m = unfold(&t, 0).unwrap();
        // frozen from the enumeration oracle below
        assert_eq!(m.row(0), &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m.row(1), &[5.0, 6.0, 7.0, 8.0]);
        for mode in 0..3 {
            assert_eq!(unfold(&t, mode).unwrap(), unfold_oracle(&t, mode));
        }
    }

    #[test]
    fn fold_mode0_restores_222() {
        let t = tensor_222();
        let m = unfold(&t, 0).unwrap();
        let back = fold(&m, 0, t.shape()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn fold_scalarish_shapes() {
        let m = Matrix::new(1, 1, vec![7.5]).unwrap();
        let t = fold(&m, 0, &[1, 1]).unwrap();
        assert_eq!(t.data(), &[7.5]);
        assert!(fold(&m, 0, &[1, 2]).is_err());
        assert!(fold(&m, 3, &[1, 1]).is_err());
    }

    #[test]
    fn unfold_mode_out_of_range() {
        let t = tensor_222();
        assert!(unfold(&t, 3).is_err());
    }

    #[test]
    fn mode_product_identity_is_identity() {
        let t = tensor_222();
        let i = Matrix::identity(2);
        for mode in 0..3 {
            assert_eq!(mode_n_product(&t, &i, mode).unwrap(), t);
        }
    }

    #[test]
    fn mode_product_all_ones_sums_mode() {
        let t = tensor_222();
        let ones = Matrix::new(1, 2, vec![1.0, 1.0]).unwrap();
        for mode in 0..3 {
            let summed = mode_n_product(&t, &ones, mode).unwrap();
            // brute-force summation oracle
            let mut expect_shape = t.shape().to_vec();
            expect_shape[mode] = 1;
            let expected = DenseTensor::from_fn(expect_shape, |idx| {
                (0..t.shape()[mode])
                    .map(|v| {
                        let mut full = idx.to_vec();
                        full[mode] = v;
                        t.get(&full)
                    })
                    .sum()
            })
            .unwrap();
            assert_eq!(summed, expected);
        }
    }

    #[test]
    fn mode_product_dimension_mismatch() {
        let t = tensor_222();
        let a = Matrix::new(2, 3, vec![0.0; 6]).unwrap();
        assert!(mode_n_product(&t, &a, 0).is_err());
    }

    #[test]
    fn khatri_rao_hand_examples() {
        let a = Matrix::new(1, 1, vec![2.0]).unwrap();
        assert_eq!(khatri_rao(&a, &a).unwrap().data(), &[4.0]);

        let a = Matrix::new(2, 1, vec![1.0, 2.0]).unwrap();
        let b = Matrix::new(2, 1, vec![3.0, 4.0]).unwrap();
        let kr = khatri_rao(&a, &b).unwrap();
        assert_eq!(kr.data(), &[3.0, 4.0, 6.0, 8.0]);

        let bad = Matrix::new(2, 2, vec![0.0; 4]).unwrap();
        assert!(khatri_rao(&a, &bad).is_err());
    }

    #[test]
    fn khatri_rao_columns_are_outer_products() {
        let mut rng = crate::rng::seeded_rng(5);
        use rand::Rng;
        let a = Matrix::from_fn(3, 2, |_, _| rng.random_range(-1.0..1.0));
        let b = Matrix::from_fn(3, 2, |_, _| rng.random_range(-1.0..1.0));
        let kr = khatri_rao(&a, &b).unwrap();
        for r in 0..2 {
            // vec of outer(b_r, a_r): entry (ia*3 + ib) = a[ia,r]*b[ib,r]
            for ia in 0..3 {
                for ib in 0..3 {
                    let expected = a.get(ia, r) * b.get(ib, r);
                    assert!((kr.get(ia * 3 + ib, r) - expected).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn frobenius_basics() {
        let z = DenseTensor::zeros(vec![3, 2]).unwrap();
        assert_eq!(frobenius_norm(&z), 0.0);
        let eye = Matrix::identity(2).into_tensor();
        assert!((frobenius_norm(&eye) - 2.0_f64.sqrt()).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn unfold_fold_roundtrip_bit_exact(
            shape in proptest::collection::vec(1usize..5, 1..4),
            seed in 0u64..1000,
        ) {
            let len: usize = shape.iter().product();
            let mut rng = crate::rng::seeded_rng(seed);
            use rand::Rng;
            let data: Vec<f64> = (0..len).map(|_| rng.random_range(-5.0..5.0)).collect();
            let t = DenseTensor::new(shape.clone(), data).unwrap();
            for mode in 0..shape.len() {
                let m = unfold(&t, mode).unwrap();
                let back = fold(&m, mode, &shape).unwrap();
                prop_assert_eq!(&back, &t);
            }
        }

        #[test]
        fn mode_products_on_distinct_modes_commute(seed in 0u64..200) {
            let mut rng = crate::rng::seeded_rng(seed);
            use rand::Rng;
            let t = DenseTensor::from_fn(vec![3, 3, 3], |_| rng.random_range(-1.0..1.0)).unwrap();
            let a = Matrix::from_fn(2, 3, |_, _| rng.random_range(-1.0..1.0));
            let b = Matrix::from_fn(4, 3, |_, _| rng.random_range(-1.0..1.0));
            let ab = mode_n_product(&mode_n_product(&t, &a, 0).unwrap(), &b, 1).unwrap();
            let ba = mode_n_product(&mode_n_product(&t, &b, 1).unwrap(), &a, 0).unwrap();
            let denom = frobenius_norm(&ab).max(1e-30);
            let mut diff = 0.0f64;
            for (x, y) in ab.data().iter().zip(ba.data()) {
                diff += (x - y) * (x - y);
            }
            prop_assert!(diff.sqrt() / denom < 1e-12);
        }

        #[test]
        fn frobenius_matches_unfolding_norm(
            shape in proptest::collection::vec(1usize..6, 2..5),
            seed in 0u64..200,
        ) {
            let mut rng = crate::rng::seeded_rng(seed);
            use rand::Rng;
            let t = DenseTensor::from_fn(shape.clone(), |_| rng.random_range(-2.0..2.0)).unwrap();
            let direct: f64 = t.data().iter().map(|v| v * v).sum();
            prop_assert!((frobenius_norm(&t).powi(2) - direct).abs() <= 1e-12 * direct.max(1.0));
            for mode in 0..shape.len() {
                let m = unfold(&t, mode).unwrap();
                let rel = (m.frobenius_norm() - frobenius_norm(&t)).abs()
                    / frobenius_norm(&t).max(1e-30);
                prop_assert!(rel < 1e-12);
            }
        }
    }
}
