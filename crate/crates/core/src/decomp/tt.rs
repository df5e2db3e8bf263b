//! Tensor-Train decomposition by sequential truncated SVD (TT-SVD).

use crate::error::{Error, Result};
use crate::linalg;
use crate::tensor::{DenseTensor, Matrix};

/// Tensor-Train model for an order-`d` tensor (`d >= 2`).
///
/// The boundary cores are stored as matrices: the first core has shape
/// `n_1 x r_1` and the last `r_{d-1} x n_d` (the implicit boundary ranks
/// `r_0 = r_d = 1` are dropped). Every interior core `k` is an order-3
/// tensor of shape `r_{k-1} x n_k x r_k`, and adjacent ranks chain
/// consistently.
#[derive(Debug, Clone)]
pub struct TtModel {
    first: Matrix,
    middle: Vec<DenseTensor>,
    last: Matrix,
    truncation_sq: Vec<f64>,
}

impl TtModel {
    /// Validates the rank chain. `truncation_sq` starts empty; only
    /// [`tt_svd`] records discarded singular-value energy.
    pub fn new(first: Matrix, middle: Vec<DenseTensor>, last: Matrix) -> Result<Self> {
        let mut rank = first.cols();
        for (k, core) in middle.iter().enumerate() {
            if core.order() != 3 {
                return Err(Error::domain(format!(
                    "interior core {k} must have order 3, got {}",
                    core.order()
                )));
            }
            if core.shape()[0] != rank {
                return Err(Error::domain(format!(
                    "core rank chain breaks at interior core {k}: expected leading rank {rank}, got {}",
                    core.shape()[0]
                )));
            }
            rank = core.shape()[2];
        }
        if last.rows() != rank {
            return Err(Error::domain(format!(
                "core rank chain breaks at the last core: expected {rank} rows, got {}",
                last.rows()
            )));
        }
        Ok(Self {
            first,
            middle,
            last,
            truncation_sq: Vec::new(),
        })
    }

    pub fn first(&self) -> &Matrix {
        &self.first
    }

    pub fn middle(&self) -> &[DenseTensor] {
        &self.middle
    }

    pub fn last(&self) -> &Matrix {
        &self.last
    }

    /// Mode sizes of the tensor the model reconstructs to.
    pub fn shape(&self) -> Vec<usize> {
        let mut shape = vec![self.first.rows()];
        shape.extend(self.middle.iter().map(|c| c.shape()[1]));
        shape.push(self.last.cols());
        shape
    }

    /// The rank chain `(r_1, ..., r_{d-1})`.
    pub fn ranks(&self) -> Vec<usize> {
        let mut ranks = vec![self.first.cols()];
        ranks.extend(self.middle.iter().map(|c| c.shape()[2]));
        ranks
    }

    /// Discarded singular-value energy `ε_k²` per TT-SVD truncation step;
    /// `sqrt(sum)` bounds the reconstruction error from above.
    pub fn truncation_sq(&self) -> &[f64] {
        &self.truncation_sq
    }

    /// `sqrt(Σ_k ε_k²)`, the a-priori TT-SVD error bound.
    pub fn error_bound(&self) -> f64 {
        self.truncation_sq.iter().sum::<f64>().sqrt()
    }
}

/// TT-SVD: peels one mode at a time off a remainder matrix, truncating its
/// SVD to the requested rank. Deterministic; the reconstruction error is
/// bounded by `sqrt(Σ_k ε_k²)` over the discarded energies.
pub fn tt_svd(t: &DenseTensor, ranks: &[usize]) -> Result<TtModel> {
    let shape = t.shape().to_vec();
    let d = shape.len();
    if d < 2 {
        return Err(Error::domain(
            "tensor-train decomposition needs an order >= 2 tensor",
        ));
    }
    if ranks.len() != d - 1 {
        return Err(Error::domain(format!(
            "expected {} ranks for an order-{d} tensor, got {}",
            d - 1,
            ranks.len()
        )));
    }

    // remainder starts as the natural n_1 x (n_2 ... n_d) reshape
    let total: usize = shape.iter().product();
    let mut remainder = Matrix::new(shape[0], total / shape[0], t.data().to_vec())?;
    let mut r_prev = 1usize;
    let mut first = None;
    let mut middle = Vec::with_capacity(d.saturating_sub(2));
    let mut truncation_sq = Vec::with_capacity(d - 1);

    for (k, &rk) in ranks.iter().enumerate() {
        let feasible = remainder.rows().min(remainder.cols());
        if rk < 1 || rk > feasible {
            return Err(Error::domain(format!(
                "step {}: rank {rk} infeasible, must lie in 1..={feasible}",
                k + 1
            )));
        }
        let full = linalg::svd(&remainder)?;
        truncation_sq.push(full.s[rk..].iter().map(|s| s * s).sum::<f64>());
        let svd = linalg::truncate(full, rk);

        // left factor becomes core k (reshaped r_{k-1} x n_k x r_k)
        if k == 0 {
            first = Some(svd.u.clone());
        } else {
            middle.push(DenseTensor::new(
                vec![r_prev, shape[k], rk],
                svd.u.into_data(),
            )?);
        }

        // remainder <- diag(s) v^T, reshaped to pull in the next mode
        let cols = svd.vt.cols();
        let mut next = svd.vt;
        for r in 0..rk {
            for c in 0..cols {
                next.set(r, c, next.get(r, c) * svd.s[r]);
            }
        }
        if k + 1 < d - 1 {
            remainder = Matrix::new(rk * shape[k + 1], cols / shape[k + 1], next.into_data())?;
        } else {
            remainder = next;
        }
        r_prev = rk;
    }

    let mut model = TtModel::new(first.unwrap(), middle, remainder)?;
    model.truncation_sq = truncation_sq;
    Ok(model)
}

/// Evaluates the train by chained matricized contractions (left to right),
/// never by the explicit nested sum over ranks.
pub fn reconstruct_tt(m: &TtModel) -> DenseTensor {
    let shape = m.shape();
    let mut acc = m.first.clone();
    for core in &m.middle {
        let (r_in, n, r_out) = (core.shape()[0], core.shape()[1], core.shape()[2]);
        let core_mat = Matrix::new(r_in, n * r_out, core.data().to_vec())
            .expect("core reshape is size-preserving");
        let prod = acc.matmul(&core_mat).expect("rank chain is consistent");
        let rows = prod.rows() * n;
        acc = Matrix::new(rows, r_out, prod.into_data()).expect("reshape is size-preserving");
    }
    let out = acc.matmul(&m.last).expect("rank chain is consistent");
    DenseTensor::new(shape, out.into_data()).expect("model shape matches data")
}
