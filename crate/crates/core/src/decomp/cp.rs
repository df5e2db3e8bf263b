//! CP (Parafac) decomposition by alternating least squares.

use rand::Rng;

use crate::decomp::DecompOptions;
use crate::error::{Error, Result};
use crate::linalg;
use crate::rng::stream_rng;
use crate::tensor::{frobenius_norm, khatri_rao, unfold, DenseTensor, Matrix};

/// Rank-`R` CP model: one `shape[m] x R` factor per mode, columns unit-norm,
/// with the column magnitudes absorbed into `weights` (all nonnegative).
#[derive(Debug, Clone)]
pub struct CpModel {
    rank: usize,
    factors: Vec<Matrix>,
    weights: Vec<f64>,
    fit_trace: Vec<f64>,
}

impl CpModel {
    /// Validates factor counts, column counts, unit-norm columns (1e-8) and
    /// nonnegative weights.
    pub fn new(factors: Vec<Matrix>, weights: Vec<f64>) -> Result<Self> {
        let rank = weights.len();
        if rank == 0 {
            return Err(Error::domain("cp model needs at least one component"));
        }
        if factors.is_empty() {
            return Err(Error::domain("cp model needs at least one factor"));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::domain("cp weights must be finite and nonnegative"));
        }
        for (m, f) in factors.iter().enumerate() {
            if f.cols() != rank {
                return Err(Error::domain(format!(
                    "factor {m} has {} columns, expected rank {rank}",
                    f.cols()
                )));
            }
            for r in 0..rank {
                let norm: f64 = (0..f.rows()).map(|i| f.get(i, r) * f.get(i, r)).sum();
                if (norm.sqrt() - 1.0).abs() > 1e-8 {
                    return Err(Error::domain(format!(
                        "factor {m} column {r} is not unit-norm"
                    )));
                }
            }
        }
        Ok(Self {
            rank,
            factors,
            weights,
            fit_trace: Vec::new(),
        })
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn factors(&self) -> &[Matrix] {
        &self.factors
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Fit `1 - ‖t - t̂‖/‖t‖` after each accepted ALS sweep.
    pub fn fit_trace(&self) -> &[f64] {
        &self.fit_trace
    }

    /// Fit of the returned model (1.0 when the input was exactly captured).
    pub fn fit(&self) -> f64 {
        self.fit_trace.last().copied().unwrap_or(1.0)
    }
}

/// Alternating least squares with HOSVD initialization.
///
/// Each sweep solves the Khatri-Rao normal equations per mode; singular
/// systems are retried with a ridge starting at 1e-10. Sweeps that would
/// lower the fit (a numerical artifact; exact ALS is monotone) are rejected
/// and the previous iterate returned, so the recorded fit trace never
/// decreases.
pub fn cp_als(t: &DenseTensor, rank: usize, opts: &DecompOptions) -> Result<CpModel> {
    opts.validate()?;
    if rank < 1 {
        return Err(Error::domain("cp rank must be at least 1"));
    }
    if t.order() < 2 {
        return Err(Error::domain("cp-als needs an order >= 2 tensor"));
    }

    let d = t.order();
    let norm_t = frobenius_norm(t);
    if norm_t == 0.0 {
        // exact: all-zero weights on arbitrary unit factors
        let factors: Vec<Matrix> = t
            .shape()
            .iter()
            .map(|&n| Matrix::from_fn(n, rank, |i, r| if i == r % n { 1.0 } else { 0.0 }))
            .collect();
        let mut model = CpModel::new(factors, vec![0.0; rank])?;
        model.fit_trace.push(1.0);
        return Ok(model);
    }

    // unfoldings are loop invariants; compute them once
    let unfoldings: Vec<Matrix> = (0..d).map(|m| unfold(t, m)).collect::<Result<_>>()?;

    // HOSVD leading vectors, padded with seeded random unit columns when the
    // requested rank exceeds what the unfolding offers
    let mut factors: Vec<Matrix> = Vec::with_capacity(d);
    for m in 0..d {
        let n = t.shape()[m];
        let svd = linalg::svd(&unfoldings[m])?;
        let have = svd.s.len().min(rank).min(n);
        let mut rng = stream_rng(opts.seed, m as u64);
        factors.push(Matrix::from_fn(n, rank, |i, r| {
            if r < have {
                svd.u.get(i, r)
            } else {
                rng.random_range(-1.0..1.0)
            }
        }));
    }
    for f in factors.iter_mut() {
        normalize_columns(f);
    }
    let mut weights = vec![1.0; rank];

    let mut grams: Vec<Matrix> = factors.iter().map(gram).collect();
    let mut fit_trace: Vec<f64> = Vec::new();

    for _sweep in 0..opts.max_iters {
        let prev = (factors.clone(), weights.clone());
        let mut inner = 0.0; // <t, t-hat>, valid after the final mode update
        for m in 0..d {
            // khatri-rao over the other modes in original order (later modes
            // vary fastest, matching the unfolding's column order)
            let mut kr: Option<Matrix> = None;
            for (j, f) in factors.iter().enumerate() {
                if j == m {
                    continue;
                }
                kr = Some(match kr {
                    None => f.clone(),
                    Some(acc) => khatri_rao(&acc, f)?,
                });
            }
            let kr = kr.expect("order >= 2 leaves at least one other mode");
            let mttkrp = unfoldings[m].matmul(&kr)?;

            // hadamard of the other modes' gram matrices
            let mut h = Matrix::from_fn(rank, rank, |_, _| 1.0);
            for (j, g) in grams.iter().enumerate() {
                if j == m {
                    continue;
                }
                for i in 0..rank {
                    for k in 0..rank {
                        h.set(i, k, h.get(i, k) * g.get(i, k));
                    }
                }
            }

            let mut solved = solve_ridge(&h, &mttkrp)?;
            weights = normalize_columns(&mut solved);
            if m == d - 1 {
                for r in 0..rank {
                    let mut dot = 0.0;
                    for i in 0..solved.rows() {
                        dot += mttkrp.get(i, r) * solved.get(i, r);
                    }
                    inner += weights[r] * dot;
                }
            }
            grams[m] = gram(&solved);
            factors[m] = solved;
        }

        // ‖t̂‖² = w^T (⊛_m gram_m) w
        let mut model_sq = 0.0;
        for i in 0..rank {
            for k in 0..rank {
                let mut g = 1.0;
                for gm in &grams {
                    g *= gm.get(i, k);
                }
                model_sq += weights[i] * weights[k] * g;
            }
        }
        let err_sq = (norm_t * norm_t - 2.0 * inner + model_sq).max(0.0);
        let fit = 1.0 - err_sq.sqrt() / norm_t;
        if !fit.is_finite() {
            return Err(Error::numerical("cp-als fit became non-finite"));
        }

        if let Some(&last) = fit_trace.last() {
            if fit + 1e-12 < last {
                // reject the sweep, keep the previous iterate
                factors = prev.0;
                weights = prev.1;
                break;
            }
            let done = (fit - last).abs() < opts.tol;
            fit_trace.push(fit.max(last));
            if done {
                break;
            }
        } else {
            fit_trace.push(fit);
        }
    }

    // re-normalize exactly and repair degenerate (zero) columns
    for f in factors.iter_mut() {
        repair_zero_columns(f);
    }
    let mut model = CpModel::new(factors, weights)?;
    model.fit_trace = fit_trace;
    Ok(model)
}

/// Sum of weighted outer products, evaluated as `A_0 diag(w) (KR of the
/// remaining factors)^T` folded back along mode 0.
pub fn reconstruct_cp(m: &CpModel) -> DenseTensor {
    let shape: Vec<usize> = m.factors.iter().map(|f| f.rows()).collect();
    if m.factors.len() == 1 {
        let f = &m.factors[0];
        return DenseTensor::from_fn(shape.clone(), |idx| {
            (0..m.rank).map(|r| m.weights[r] * f.get(idx[0], r)).sum()
        })
        .expect("factor rows are positive");
    }
    let mut kr: Option<Matrix> = None;
    for f in &m.factors[1..] {
        kr = Some(match kr {
            None => f.clone(),
            Some(acc) => khatri_rao(&acc, f).expect("factor ranks agree"),
        });
    }
    let kr = kr.unwrap();
    let lead = &m.factors[0];
    let scaled = Matrix::from_fn(lead.rows(), m.rank, |i, r| lead.get(i, r) * m.weights[r]);
    let flat = scaled
        .matmul(&kr.transpose())
        .expect("kr rank matches factor rank");
    crate::tensor::fold(&flat, 0, &shape).expect("fold restores the original shape")
}

fn gram(f: &Matrix) -> Matrix {
    f.transpose().matmul(f).expect("gram is always defined")
}

/// Column 2-norm normalization; returns the norms (the CP weights).
fn normalize_columns(f: &mut Matrix) -> Vec<f64> {
    let (rows, cols) = (f.rows(), f.cols());
    let mut norms = vec![0.0; cols];
    for r in 0..cols {
        let mut sq = 0.0;
        for i in 0..rows {
            sq += f.get(i, r) * f.get(i, r);
        }
        let norm = sq.sqrt();
        norms[r] = norm;
        if norm > 0.0 {
            for i in 0..rows {
                f.set(i, r, f.get(i, r) / norm);
            }
        }
    }
    norms
}

/// Replaces exactly-zero columns (weight 0, so reconstruction is unchanged)
/// with deterministic basis vectors to restore the unit-norm invariant.
fn repair_zero_columns(f: &mut Matrix) {
    let (rows, cols) = (f.rows(), f.cols());
    for r in 0..cols {
        let sq: f64 = (0..rows).map(|i| f.get(i, r) * f.get(i, r)).sum();
        if sq == 0.0 {
            f.set(r % rows, r, 1.0);
        }
    }
}

/// Solves `x * h = rhs` for x (h symmetric positive semidefinite). Singular
/// systems are retried with ridge regularization starting at 1e-10.
fn solve_ridge(h: &Matrix, rhs: &Matrix) -> Result<Matrix> {
    let mut ridge = 0.0;
    loop {
        let mut sys = h.clone();
        for i in 0..sys.rows() {
            sys.set(i, i, sys.get(i, i) + ridge);
        }
        if let Some(x) = lu_solve_rows(&sys, rhs) {
            return Ok(x);
        }
        ridge = if ridge == 0.0 { 1e-10 } else { ridge * 100.0 };
        if ridge > 1e-2 {
            return Err(Error::numerical(
                "cp-als normal equations stayed singular despite ridge regularization",
            ));
        }
    }
}

/// Solves `x * a = b` row-wise via LU with partial pivoting on `a^T = a`
/// (a is symmetric here). Returns None when a pivot vanishes.
fn lu_solve_rows(a: &Matrix, b: &Matrix) -> Option<Matrix> {
    let n = a.rows();
    let mut lu: Vec<Vec<f64>> = (0..n).map(|i| a.row(i).to_vec()).collect();
    let mut perm: Vec<usize> = (0..n).collect();
    let scale: f64 = lu
        .iter()
        .flat_map(|r| r.iter())
        .fold(0.0f64, |acc, x| acc.max(x.abs()));
    let tiny = scale.max(1e-300) * 1e-14 * n as f64;

    for col in 0..n {
        let mut best = col;
        for r in col + 1..n {
            if lu[r][col].abs() > lu[best][col].abs() {
                best = r;
            }
        }
        if lu[best][col].abs() <= tiny {
            return None;
        }
        lu.swap(col, best);
        perm.swap(col, best);
        for r in col + 1..n {
            let factor = lu[r][col] / lu[col][col];
            lu[r][col] = factor;
            for c in col + 1..n {
                lu[r][c] -= factor * lu[col][c];
            }
        }
    }

    let mut out = Matrix::zeros(b.rows(), n);
    let mut y = vec![0.0; n];
    for i in 0..b.rows() {
        // forward/backward solve of a x = rhs_row (a symmetric)
        for (k, &p) in perm.iter().enumerate() {
            let mut v = b.get(i, p);
            for c in 0..k {
                v -= lu[k][c] * y[c];
            }
            y[k] = v;
        }
        for k in (0..n).rev() {
            let mut v = y[k];
            for c in k + 1..n {
                v -= lu[k][c] * y[c];
            }
            y[k] = v / lu[k][k];
        }
        for (k, &v) in y.iter().enumerate() {
            out.set(i, k, v);
        }
    }
    Some(out)
}
