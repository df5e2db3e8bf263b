//! Tucker decomposition: HOSVD initialization refined by HOOI sweeps.

use crate::decomp::{orthonormal_leading, DecompOptions};
use crate::error::{Error, Result};
use crate::tensor::{frobenius_norm, mode_n_product, unfold, DenseTensor, Matrix};

/// Tucker model: a core of shape `(R_1, ..., R_d)` and one orthonormal
/// `shape[m] x R_m` factor per mode.
#[derive(Debug, Clone)]
pub struct TuckerModel {
    core: DenseTensor,
    factors: Vec<Matrix>,
    fit_trace: Vec<f64>,
}

impl TuckerModel {
    /// Validates rank bounds and factor orthonormality (1e-10).
    pub fn new(core: DenseTensor, factors: Vec<Matrix>) -> Result<Self> {
        if factors.len() != core.order() {
            return Err(Error::domain(format!(
                "core order {} does not match {} factors",
                core.order(),
                factors.len()
            )));
        }
        for (m, f) in factors.iter().enumerate() {
            if f.cols() != core.shape()[m] {
                return Err(Error::domain(format!(
                    "factor {m} has {} columns, core expects {}",
                    f.cols(),
                    core.shape()[m]
                )));
            }
            if f.cols() > f.rows() {
                return Err(Error::domain(format!(
                    "factor {m} rank {} exceeds mode size {}",
                    f.cols(),
                    f.rows()
                )));
            }
            let g = f.transpose().matmul(f).expect("gram is always defined");
            for i in 0..g.rows() {
                for j in 0..g.cols() {
                    let want = if i == j { 1.0 } else { 0.0 };
                    if (g.get(i, j) - want).abs() > 1e-10 {
                        return Err(Error::domain(format!(
                            "factor {m} columns are not orthonormal"
                        )));
                    }
                }
            }
        }
        Ok(Self {
            core,
            factors,
            fit_trace: Vec::new(),
        })
    }

    pub fn core(&self) -> &DenseTensor {
        &self.core
    }

    pub fn factors(&self) -> &[Matrix] {
        &self.factors
    }

    /// Fit `1 - ‖t - t̂‖/‖t‖` after initialization and each accepted sweep.
    pub fn fit_trace(&self) -> &[f64] {
        &self.fit_trace
    }

    pub fn fit(&self) -> f64 {
        self.fit_trace.last().copied().unwrap_or(1.0)
    }
}

fn check_ranks(t: &DenseTensor, ranks: &[usize]) -> Result<()> {
    if ranks.len() != t.order() {
        return Err(Error::domain(format!(
            "expected {} ranks, got {}",
            t.order(),
            ranks.len()
        )));
    }
    for (m, (&r, &n)) in ranks.iter().zip(t.shape()).enumerate() {
        if r < 1 || r > n {
            return Err(Error::domain(format!(
                "mode {m}: rank {r} out of range 1..={n}"
            )));
        }
    }
    Ok(())
}

/// Core tensor `t ×_0 U_0^T ×_1 U_1^T ...` for the given factors.
fn project_core(t: &DenseTensor, factors: &[Matrix]) -> Result<DenseTensor> {
    let mut core = t.clone();
    for (m, f) in factors.iter().enumerate() {
        core = mode_n_product(&core, &f.transpose(), m)?;
    }
    Ok(core)
}

/// Higher-order SVD: each factor is the leading left singular vectors of the
/// corresponding unfolding; the core is the projection of `t`.
pub fn hosvd(t: &DenseTensor, ranks: &[usize]) -> Result<TuckerModel> {
    check_ranks(t, ranks)?;
    let mut factors = Vec::with_capacity(t.order());
    for (m, &r) in ranks.iter().enumerate() {
        factors.push(orthonormal_leading(&unfold(t, m)?, r)?);
    }
    let core = project_core(t, &factors)?;
    let mut model = TuckerModel::new(core, factors)?;
    let norm_t = frobenius_norm(t);
    model.fit_trace.push(if norm_t == 0.0 {
        1.0
    } else {
        fit_from_core(&model.core, norm_t)
    });
    Ok(model)
}

/// Because the factors are orthonormal, `‖t̂‖ = ‖core‖` and the squared
/// error is `‖t‖² − ‖core‖²`.
fn fit_from_core(core: &DenseTensor, norm_t: f64) -> f64 {
    let core_sq = frobenius_norm(core).powi(2);
    1.0 - (norm_t * norm_t - core_sq).max(0.0).sqrt() / norm_t
}

/// HOSVD initialization followed by HOOI sweeps (each mode's factor replaced
/// by the leading subspace of the partially projected tensor). Sweeps that
/// would lower the fit are rejected, so the fit trace never decreases.
pub fn tucker(t: &DenseTensor, ranks: &[usize], opts: &DecompOptions) -> Result<TuckerModel> {
    opts.validate()?;
    check_ranks(t, ranks)?;
    let norm_t = frobenius_norm(t);
    let mut model = hosvd(t, ranks)?;
    if norm_t == 0.0 {
        return Ok(model);
    }

    let mut factors = model.factors.clone();
    let mut fit_trace = model.fit_trace.clone();
    let d = t.order();

    for _sweep in 0..opts.max_iters {
        let prev = factors.clone();
        for m in 0..d {
            // project every mode except m, then refresh factor m
            let mut partial = t.clone();
            for (j, f) in factors.iter().enumerate() {
                if j != m {
                    partial = mode_n_product(&partial, &f.transpose(), j)?;
                }
            }
            factors[m] = orthonormal_leading(&unfold(&partial, m)?, ranks[m])?;
        }
        let core = project_core(t, &factors)?;
        let fit = fit_from_core(&core, norm_t);
        if !fit.is_finite() {
            return Err(Error::numerical("hooi fit became non-finite"));
        }
        let last = *fit_trace.last().expect("hosvd recorded the initial fit");
        if fit + 1e-12 < last {
            factors = prev;
            break;
        }
        let done = (fit - last).abs() < opts.tol;
        fit_trace.push(fit.max(last));
        if done {
            break;
        }
    }

    let core = project_core(t, &factors)?;
    model = TuckerModel::new(core, factors)?;
    model.fit_trace = fit_trace;
    Ok(model)
}

/// Core contracted with the factors on every mode.
pub fn reconstruct_tucker(m: &TuckerModel) -> DenseTensor {
    let mut out = m.core.clone();
    for (mode, f) in m.factors.iter().enumerate() {
        out = mode_n_product(&out, f, mode).expect("factor shapes match the core");
    }
    out
}
