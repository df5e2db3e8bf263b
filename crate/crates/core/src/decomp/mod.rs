//! The three decomposition engines — CP-ALS, Tucker (HOSVD + HOOI), and
//! Tensor-Train (TT-SVD) — plus reconstruction and error measurement.
//!
//! All engines are pure functions of `(input, options)`: identical inputs
//! and an identical [`DecompOptions::seed`] produce bit-identical models, so
//! callers may run decompositions of distinct inputs concurrently.

mod cp;
mod tt;
mod tucker;

pub use cp::{cp_als, reconstruct_cp, CpModel};
pub use tt::{reconstruct_tt, tt_svd, TtModel};
pub use tucker::{hosvd, reconstruct_tucker, tucker, TuckerModel};

use crate::error::{Error, Result};
use crate::linalg;
use crate::tensor::{frobenius_norm, DenseTensor, Matrix};

/// Stopping rules and the seed for randomized initialization.
///
/// The defaults (`max_iters = 100`, `tol = 1e-6` relative fit change) keep
/// full-size image decompositions interactive while leaving the iterative
/// engines room to converge on hard inputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecompOptions {
    pub max_iters: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for DecompOptions {
    fn default() -> Self {
        Self {
            max_iters: 100,
            tol: 1e-6,
            seed: 0,
        }
    }
}

impl DecompOptions {
    pub(crate) fn validate(&self) -> Result<()> {
        if self.max_iters < 1 {
            return Err(Error::domain("max_iters must be at least 1"));
        }
        if !(self.tol > 0.0) {
            return Err(Error::domain("tol must be positive"));
        }
        Ok(())
    }
}

/// `‖t − approx‖_F / ‖t‖_F`; errors when the reference has zero norm.
pub fn relative_error(t: &DenseTensor, approx: &DenseTensor) -> Result<f64> {
    if t.shape() != approx.shape() {
        return Err(Error::domain(format!(
            "shape mismatch {:?} vs {:?}",
            t.shape(),
            approx.shape()
        )));
    }
    let norm = frobenius_norm(t);
    if norm == 0.0 {
        return Err(Error::domain(
            "relative error undefined for a zero reference tensor",
        ));
    }
    let diff = t
        .data()
        .iter()
        .zip(approx.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    Ok(diff / norm)
}

/// Leading `k` left singular vectors of `m`, extended to an orthonormal set
/// by deterministic basis completion when the thin SVD offers fewer than `k`
/// columns. Requires `k <= m.rows()`.
pub(crate) fn orthonormal_leading(m: &Matrix, k: usize) -> Result<Matrix> {
    debug_assert!(k <= m.rows());
    let res = linalg::svd(m)?;
    let have = res.s.len().min(k);
    let mut cols: Vec<Vec<f64>> = (0..have).map(|j| res.u.col(j)).collect();
    while cols.len() < k {
        let next = linalg::complete_basis(&cols, m.rows());
        cols.push(next);
    }
    Ok(Matrix::from_fn(m.rows(), k, |i, j| cols[j][i]))
}
