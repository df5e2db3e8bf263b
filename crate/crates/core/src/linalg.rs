//! Dense SVD and rank truncation built on one-sided Jacobi rotations.
//!
//! Self-contained so the decomposition engines carry no external
//! linear-algebra dependency. The worker orthogonalizes the columns of the
//! (tall) input by cyclic Jacobi sweeps; convergence is declared when every
//! column pair satisfies `|<w_p, w_q>| <= 1e-12 * ||w_p|| * ||w_q||`.
//! Wide inputs are transposed internally.
//!
//! Determinism: for a fixed input the sweep order, the stable nonincreasing
//! sort of the singular values, and the sign convention (largest-magnitude
//! entry of each left vector made positive) pin the output bits.

use crate::error::{Error, Result};
use crate::tensor::Matrix;

const MAX_SWEEPS: usize = 60;
const PAIR_TOL: f64 = 1e-12;

/// Thin SVD `m = u * diag(s) * vt` with `k = min(rows, cols)` columns in
/// `u`, nonincreasing `s`, and `k` rows in `vt`.
#[derive(Debug, Clone)]
pub struct SvdResult {
    pub u: Matrix,
    pub s: Vec<f64>,
    pub vt: Matrix,
}

impl SvdResult {
    /// `u * diag(s) * vt`, for error measurements in tests and callers.
    pub fn reconstruct(&self) -> Matrix {
        let k = self.s.len();
        let m = self.u.rows();
        let n = self.vt.cols();
        let mut out = Matrix::zeros(m, n);
        for i in 0..m {
            for j in 0..n {
                let mut acc = 0.0;
                for r in 0..k {
                    acc += self.u.get(i, r) * self.s[r] * self.vt.get(r, j);
                }
                out.set(i, j, acc);
            }
        }
        out
    }

    /// Frobenius norm of `m - reconstruct()`.
    pub fn residual(&self, m: &Matrix) -> f64 {
        let rec = self.reconstruct();
        m.data()
            .iter()
            .zip(rec.data())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// Full thin SVD. Deterministic for a fixed input; errors if the Jacobi
/// sweeps fail to converge within the cap.
pub fn svd(m: &Matrix) -> Result<SvdResult> {
    if m.rows() >= m.cols() {
        svd_tall(m)
    } else {
        // m^T = u s v^T  =>  m = v s u^T
        let r = svd_tall(&m.transpose())?;
        Ok(SvdResult {
            u: r.vt.transpose(),
            s: r.s,
            vt: r.u.transpose(),
        })
    }
}

/// Leading-`rank` truncation of the thin SVD.
pub fn truncated_svd(m: &Matrix, rank: usize) -> Result<SvdResult> {
    let k = m.rows().min(m.cols());
    if rank < 1 || rank > k {
        return Err(Error::domain(format!(
            "rank {rank} out of range 1..={k} for {}x{} matrix",
            m.rows(),
            m.cols()
        )));
    }
    Ok(truncate(svd(m)?, rank))
}

/// Keeps the leading `rank` triplets of an already-computed SVD.
pub fn truncate(full: SvdResult, rank: usize) -> SvdResult {
    let m = full.u.rows();
    let n = full.vt.cols();
    let mut u = Matrix::zeros(m, rank);
    for i in 0..m {
        for r in 0..rank {
            u.set(i, r, full.u.get(i, r));
        }
    }
    let mut vt = Matrix::zeros(rank, n);
    for r in 0..rank {
        for j in 0..n {
            vt.set(r, j, full.vt.get(r, j));
        }
    }
    SvdResult {
        u,
        s: full.s[..rank].to_vec(),
        vt,
    }
}

/// One-sided Jacobi on a tall matrix (rows >= cols): rotates column pairs of
/// a working copy until all pairs are numerically orthogonal, then reads off
/// singular values as column norms.
fn svd_tall(a: &Matrix) -> Result<SvdResult> {
    let m = a.rows();
    let n = a.cols();
    debug_assert!(m >= n);

    // column-major working copies: w = a, v = I
    let mut w: Vec<Vec<f64>> = (0..n).map(|j| a.col(j)).collect();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            e
        })
        .collect();

    let mut converged = n < 2;
    let mut worst = 0.0f64;
    for _sweep in 0..MAX_SWEEPS {
        if n < 2 {
            break;
        }
        let mut rotated = false;
        worst = 0.0;
        for p in 0..n - 1 {
            for q in p + 1..n {
                let (mut app, mut aqq, mut apq) = (0.0, 0.0, 0.0);
                for i in 0..m {
                    app += w[p][i] * w[p][i];
                    aqq += w[q][i] * w[q][i];
                    apq += w[p][i] * w[q][i];
                }
                let scale = (app * aqq).sqrt();
                if scale == 0.0 || apq.abs() <= PAIR_TOL * scale {
                    continue;
                }
                worst = worst.max(apq.abs() / scale);
                rotated = true;
                // classic Jacobi angle for the 2x2 Gram block
                let zeta = (aqq - app) / (2.0 * apq);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..m {
                    let wp = w[p][i];
                    let wq = w[q][i];
                    w[p][i] = c * wp - s * wq;
                    w[q][i] = s * wp + c * wq;
                }
                for i in 0..n {
                    let vp = v[p][i];
                    let vq = v[q][i];
                    v[p][i] = c * vp - s * vq;
                    v[q][i] = s * vp + c * vq;
                }
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged && n >= 2 {
        // re-measure the worst pair after the last sweep
        return Err(Error::numerical(format!(
            "jacobi svd did not converge in {MAX_SWEEPS} sweeps \
             (worst off-diagonal ratio {worst:.3e})"
        )));
    }

    // singular values and stable nonincreasing order
    let norms: Vec<f64> = w.iter().map(|c| c.iter().map(|x| x * x).sum::<f64>().sqrt()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).unwrap());

    let sigma_max = order.first().map(|&i| norms[i]).unwrap_or(0.0);
    let tiny = sigma_max * f64::EPSILON * (m.max(n) as f64);

    let mut u_cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut v_cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut s = Vec::with_capacity(n);
    for &j in &order {
        let sv = norms[j];
        s.push(sv);
        let mut ucol;
        if sv > tiny && sv > 0.0 {
            ucol = w[j].iter().map(|x| x / sv).collect::<Vec<f64>>();
        } else {
            ucol = complete_basis(&u_cols, m);
        }
        // sign convention: largest-magnitude entry of the left vector positive
        let mut arg = 0;
        for (i, x) in ucol.iter().enumerate() {
            if x.abs() > ucol[arg].abs() {
                arg = i;
            }
        }
        let flip = if ucol[arg] < 0.0 { -1.0 } else { 1.0 };
        if flip < 0.0 {
            for x in ucol.iter_mut() {
                *x = -*x;
            }
        }
        let vcol: Vec<f64> = v[j].iter().map(|x| flip * x).collect();
        u_cols.push(ucol);
        v_cols.push(vcol);
    }

    let u = Matrix::from_fn(m, n, |i, j| u_cols[j][i]);
    let vt = Matrix::from_fn(n, n, |i, j| v_cols[i][j]);
    Ok(SvdResult { u, s, vt })
}

/// Deterministic orthonormal completion: first standard basis vector with a
/// residual after projecting out `existing` columns.
pub(crate) fn complete_basis(existing: &[Vec<f64>], m: usize) -> Vec<f64> {
    for k in 0..m {
        let mut cand = vec![0.0; m];
        cand[k] = 1.0;
        for col in existing {
            let dot: f64 = col.iter().zip(&cand).map(|(a, b)| a * b).sum();
            for (c, &e) in cand.iter_mut().zip(col) {
                *c -= dot * e;
            }
        }
        let norm: f64 = cand.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.5 {
            for c in cand.iter_mut() {
                *c /= norm;
            }
            return cand;
        }
    }
    // unreachable for m > existing.len(); fall back to e_0
    let mut e = vec![0.0; m];
    e[0] = 1.0;
    e
}
