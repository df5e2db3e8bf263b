//! FGSM, I-FGSM, and PGD perturbation attacks under an ℓ∞ pixel budget.
//!
//! All three keep `max|x' - x| <= epsilon` and return images inside `[0,1]`.
//! Epsilon lives in normalized pixel units: a byte-scale budget of 4 is
//! expressed as `4.0 / 255.0`.

use rand::Rng;

use crate::attack::{loss_gradient, Classifier};
use crate::error::{Error, Result};
use crate::rng::seeded_rng;
use crate::tensor::DenseTensor;

/// Perturbation budget and step schedule for the three attacks.
///
/// `alpha` is the I-FGSM step, `tau` the PGD step, `seed` drives PGD's
/// random start; FGSM uses only `epsilon`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackConfig {
    pub epsilon: f64,
    pub alpha: f64,
    pub tau: f64,
    pub iters: usize,
    pub seed: u64,
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.epsilon.is_finite() || self.epsilon < 0.0 {
            return Err(Error::domain("epsilon must be finite and >= 0"));
        }
        if !self.alpha.is_finite() || self.alpha <= 0.0 {
            return Err(Error::domain("alpha must be finite and > 0"));
        }
        if !self.tau.is_finite() || self.tau <= 0.0 {
            return Err(Error::domain("tau must be finite and > 0"));
        }
        if self.iters < 1 {
            return Err(Error::domain("iters must be at least 1"));
        }
        Ok(())
    }
}

/// Which attack to run; carries no parameters (those live in [`AttackConfig`]).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AttackKind {
    Fgsm,
    Ifgsm,
    Pgd,
}

impl AttackKind {
    pub const ALL: [AttackKind; 3] = [AttackKind::Fgsm, AttackKind::Ifgsm, AttackKind::Pgd];

    pub fn name(&self) -> &'static str {
        match self {
            AttackKind::Fgsm => "fgsm",
            AttackKind::Ifgsm => "ifgsm",
            AttackKind::Pgd => "pgd",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "fgsm" => Ok(AttackKind::Fgsm),
            "ifgsm" => Ok(AttackKind::Ifgsm),
            "pgd" => Ok(AttackKind::Pgd),
            other => Err(Error::config(format!(
                "unknown attack '{other}' (expected fgsm, ifgsm, or pgd)"
            ))),
        }
    }
}

/// Dispatches one attack on one image.
pub fn run_attack<M: Classifier + ?Sized>(
    kind: AttackKind,
    model: &M,
    x: &DenseTensor,
    y: usize,
    cfg: &AttackConfig,
) -> Result<DenseTensor> {
    cfg.validate()?;
    match kind {
        AttackKind::Fgsm => fgsm(model, x, y, cfg.epsilon),
        AttackKind::Ifgsm => ifgsm(model, x, y, cfg.epsilon, cfg.alpha, cfg.iters),
        AttackKind::Pgd => pgd(model, x, y, cfg.epsilon, cfg.tau, cfg.iters, cfg.seed),
    }
}

/// `sign` with `sign(0) = 0`.
fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// One ascent step `clip_[0,1](x + step * sign(grad))`, shared by FGSM and
/// I-FGSM so their single-iteration collapse is bit-exact.
fn signed_step(x: &[f64], grad: &[f64], step: f64) -> Vec<f64> {
    x.iter()
        .zip(grad)
        .map(|(v, g)| (v + step * sign(*g)).clamp(0.0, 1.0))
        .collect()
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !epsilon.is_finite() || epsilon < 0.0 {
        return Err(Error::domain("epsilon must be finite and >= 0"));
    }
    Ok(())
}

/// Fast gradient sign method: `x' = clip_[0,1](x + ε sign(∇J))`.
pub fn fgsm<M: Classifier + ?Sized>(
    model: &M,
    x: &DenseTensor,
    y: usize,
    epsilon: f64,
) -> Result<DenseTensor> {
    check_epsilon(epsilon)?;
    let (_, grad) = loss_gradient(model, x, y)?;
    DenseTensor::new(x.shape().to_vec(), signed_step(x.data(), grad.data(), epsilon))
}

/// Iterated FGSM: each pixel-clipped ascent step is re-clipped into the
/// ℓ∞ ball of radius ε around the clean image.
pub fn ifgsm<M: Classifier + ?Sized>(
    model: &M,
    x: &DenseTensor,
    y: usize,
    epsilon: f64,
    alpha: f64,
    iters: usize,
) -> Result<DenseTensor> {
    check_epsilon(epsilon)?;
    if !alpha.is_finite() || alpha <= 0.0 {
        return Err(Error::domain("alpha must be finite and > 0"));
    }
    if iters < 1 {
        return Err(Error::domain("iters must be at least 1"));
    }
    let clean = x.data();
    let mut cur = x.clone();
    for _ in 0..iters {
        let (_, grad) = loss_gradient(model, &cur, y)?;
        let mut stepped = signed_step(cur.data(), grad.data(), alpha);
        for (v, c) in stepped.iter_mut().zip(clean) {
            *v = v.clamp(c - epsilon, c + epsilon);
        }
        cur = DenseTensor::new(x.shape().to_vec(), stepped)?;
    }
    Ok(cur)
}

/// Projected gradient descent with a seeded uniform random start. The
/// projection clamps the perturbation to `[-ε, ε]` and then the image to
/// `[0,1]`.
pub fn pgd<M: Classifier + ?Sized>(
    model: &M,
    x: &DenseTensor,
    y: usize,
    epsilon: f64,
    tau: f64,
    iters: usize,
    seed: u64,
) -> Result<DenseTensor> {
    check_epsilon(epsilon)?;
    if !tau.is_finite() || tau <= 0.0 {
        return Err(Error::domain("tau must be finite and > 0"));
    }
    if iters < 1 {
        return Err(Error::domain("iters must be at least 1"));
    }
    if epsilon == 0.0 {
        return Ok(x.clone());
    }

    let clean = x.data();
    let mut rng = seeded_rng(seed);
    let mut delta: Vec<f64> = (0..x.len())
        .map(|_| rng.random_range(-epsilon..epsilon))
        .collect();

    let mut adv = x.clone();
    for it in 0..iters {
        if it == 0 {
            // evaluate the first gradient at the random start
            let start: Vec<f64> = clean.iter().zip(&delta).map(|(c, d)| c + d).collect();
            adv = DenseTensor::new(x.shape().to_vec(), start)?;
        }
        let (_, grad) = loss_gradient(model, &adv, y)?;
        for (d, g) in delta.iter_mut().zip(grad.data()) {
            *d = (*d + tau * sign(*g)).clamp(-epsilon, epsilon);
        }
        let projected: Vec<f64> = clean
            .iter()
            .zip(&delta)
            .map(|(c, d)| (c + d).clamp(0.0, 1.0))
            .collect();
        adv = DenseTensor::new(x.shape().to_vec(), projected)?;
        for (d, (a, c)) in delta.iter_mut().zip(adv.data().iter().zip(clean)) {
            *d = a - c;
        }
    }
    Ok(adv)
}
