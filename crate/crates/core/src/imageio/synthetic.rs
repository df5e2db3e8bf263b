//! Seeded synthetic low-rank dataset generation.
//!
//! Each class is a random Tucker-(k₁,k₂,3) template rescaled into
//! `[0.2, 0.8]`; images add elementwise Gaussian noise and clip to `[0,1]`.
//! The construction keeps the first column of every spatial factor constant,
//! so the affine rescale lands inside the factor span and the template's
//! unfoldings have *exact* rank ≤ (k₁, k₂, 3) — the low-rank-signal premise
//! is true by construction, not approximately.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::attack::{LabeledDataset, LabeledImage};
use crate::error::{Error, Result};
use crate::imageio::manifest::{DatasetManifest, ManifestRecord};
use crate::rng::seeded_rng;
use crate::tensor::{frobenius_norm, mode_n_product, DenseTensor, Matrix};
use rand_chacha::ChaCha8Rng;

/// Shape, rank, noise, and split parameters for one synthetic dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub classes: usize,
    /// Spatial Tucker ranks (k₁ for height, k₂ for width); the channel rank
    /// is always 3.
    pub ranks: (usize, usize),
    pub per_class: usize,
    pub width: usize,
    pub height: usize,
    pub sigma: f64,
    /// Fraction of each class (rounded up) tagged `test`; the rest `train`.
    pub test_fraction: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 1 || self.per_class < 1 {
            return Err(Error::domain("classes and per_class must be positive"));
        }
        if self.width < 1 || self.height < 1 {
            return Err(Error::domain("width and height must be positive"));
        }
        let limit = self.width.min(self.height);
        if self.ranks.0 < 1 || self.ranks.1 < 1 || self.ranks.0 > limit || self.ranks.1 > limit {
            return Err(Error::domain(format!(
                "template ranks {:?} must lie in 1..={limit}",
                self.ranks
            )));
        }
        if !self.sigma.is_finite() || self.sigma < 0.0 {
            return Err(Error::domain("sigma must be finite and >= 0"));
        }
        if !(0.0..=1.0).contains(&self.test_fraction) {
            return Err(Error::domain("test_fraction must lie in [0,1]"));
        }
        Ok(())
    }
}

/// Random matrix whose first column is the constant unit vector; the all-
/// ones vector therefore lies in the column span, which keeps an affine
/// shift of the template inside the Tucker model.
fn spanning_factor(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Matrix {
    Matrix::from_fn(n, k, |_, j| {
        if j == 0 {
            1.0 / (n as f64).sqrt()
        } else {
            rng.random_range(-1.0..1.0)
        }
    })
}

/// One random Tucker-(k₁,k₂,3) template rescaled to span exactly [0.2, 0.8].
/// Returns `None` when the draw is degenerate (constant template).
fn draw_template(rng: &mut ChaCha8Rng, spec: &SyntheticSpec) -> Option<DenseTensor> {
    let (k1, k2) = spec.ranks;
    let core = DenseTensor::from_fn(vec![k1, k2, 3], |_| rng.random_range(-1.0..1.0)).ok()?;
    let u = spanning_factor(rng, spec.height, k1);
    let v = spanning_factor(rng, spec.width, k2);
    let c = spanning_factor(rng, 3, 3);
    let mut t = mode_n_product(&core, &u, 0).ok()?;
    t = mode_n_product(&t, &v, 1).ok()?;
    t = mode_n_product(&t, &c, 2).ok()?;

    let lo = t.data().iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = t.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(hi - lo).is_finite() || hi - lo < 1e-9 {
        return None;
    }
    // affine map [lo,hi] -> [0.2,0.8]; the shift is a multiple of the
    // all-ones tensor, which the factors span, so ranks are preserved
    let a = 0.6 / (hi - lo);
    let b = 0.2 - a * lo;
    let shape = t.shape().to_vec();
    DenseTensor::new(shape, t.data().iter().map(|x| a * x + b).collect()).ok()
}

const MAX_TEMPLATE_ATTEMPTS: usize = 100;

/// Generates the dataset and its manifest (records in class-major order,
/// trailing images of each class tagged `test`). Deterministic per seed.
///
/// Class templates are regenerated until pairwise relative distance
/// `‖a−b‖/max(‖a‖,‖b‖) >= 0.1`; exhausting 100 attempts for one class is a
/// domain error.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<(LabeledDataset, DatasetManifest)> {
    spec.validate()?;
    let mut rng = seeded_rng(spec.seed);

    let mut templates: Vec<DenseTensor> = Vec::with_capacity(spec.classes);
    for class in 0..spec.classes {
        let mut accepted = None;
        for _ in 0..MAX_TEMPLATE_ATTEMPTS {
            let Some(cand) = draw_template(&mut rng, spec) else {
                continue;
            };
            let cand_norm = frobenius_norm(&cand);
            let separated = templates.iter().all(|prev| {
                let dist = cand
                    .data()
                    .iter()
                    .zip(prev.data())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                dist / cand_norm.max(frobenius_norm(prev)) >= 0.1
            });
            if separated {
                accepted = Some(cand);
                break;
            }
        }
        templates.push(accepted.ok_or_else(|| {
            Error::domain(format!(
                "could not separate a template for class {class} after \
                 {MAX_TEMPLATE_ATTEMPTS} attempts"
            ))
        })?);
    }

    let noise = if spec.sigma > 0.0 {
        Some(Normal::new(0.0, spec.sigma).expect("sigma validated finite and positive"))
    } else {
        None
    };
    let test_count = ((spec.per_class as f64) * spec.test_fraction).ceil() as usize;
    let train_count = spec.per_class - test_count.min(spec.per_class);

    let mut items = Vec::with_capacity(spec.classes * spec.per_class);
    let mut records = Vec::with_capacity(items.capacity());
    for (class, template) in templates.iter().enumerate() {
        for i in 0..spec.per_class {
            let image = match &noise {
                Some(dist) => {
                    let data = template
                        .data()
                        .iter()
                        .map(|v| (v + dist.sample(&mut rng)).clamp(0.0, 1.0))
                        .collect();
                    DenseTensor::new(template.shape().to_vec(), data)?
                }
                None => template.clone(),
            };
            items.push(LabeledImage {
                image,
                label: class,
            });
            records.push(ManifestRecord {
                path: format!("class_{class:02}/img_{i:04}.ppm"),
                label: class,
                split: if i < train_count { "train" } else { "test" }.to_string(),
            });
        }
    }

    let data = LabeledDataset::new(items, spec.classes)?;
    let manifest = DatasetManifest::new(spec.width, spec.height, spec.classes, records)?;
    Ok((data, manifest))
}
