//! Self-contained attack lab: differentiable surrogate classifiers with
//! analytic gradients plus the FGSM, I-FGSM, and PGD perturbation attacks.
//!
//! Two surrogates are provided — a linear-softmax model and, behind the
//! same [`Classifier`] interface, a one-hidden-layer ReLU network — so
//! attack gradients stay exact and the end-to-end attack → defend →
//! classify loop needs no ML framework. The hidden layer matters for
//! defense experiments: a purely linear model inherits the smooth
//! low-rank structure of its training images, so its gradient-sign
//! perturbations survive low-rank reconstruction almost untouched,
//! while the nonlinear model's perturbations are high-rank and get
//! filtered the way the defense intends.

mod perturb;

pub use perturb::{fgsm, ifgsm, pgd, run_attack, AttackConfig, AttackKind};

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::stream_rng;
use crate::tensor::{DenseTensor, Matrix};

/// One `[height, width, 3]` image in `[0,1]` with its class label.
#[derive(Debug, Clone)]
pub struct LabeledImage {
    pub image: DenseTensor,
    pub label: usize,
}

/// Nonempty list of same-shape labeled images with a fixed class count.
#[derive(Debug, Clone)]
pub struct LabeledDataset {
    items: Vec<LabeledImage>,
    classes: usize,
}

impl LabeledDataset {
    pub fn new(items: Vec<LabeledImage>, classes: usize) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::domain("dataset must be nonempty"));
        }
        if classes < 1 {
            return Err(Error::domain("dataset needs at least one class"));
        }
        let shape = items[0].image.shape().to_vec();
        if shape.len() != 3 || shape[2] != 3 {
            return Err(Error::domain(format!(
                "images must be [height, width, 3], got {shape:?}"
            )));
        }
        for (i, item) in items.iter().enumerate() {
            if item.image.shape() != shape {
                return Err(Error::domain(format!(
                    "image {i} has shape {:?}, expected {shape:?}",
                    item.image.shape()
                )));
            }
            if item.label >= classes {
                return Err(Error::domain(format!(
                    "image {i} label {} out of range 0..{classes}",
                    item.label
                )));
            }
            if item.image.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::domain(format!("image {i} has pixels outside [0,1]")));
            }
        }
        Ok(Self { items, classes })
    }

    pub fn items(&self) -> &[LabeledImage] {
        &self.items
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Common `[height, width, 3]` image shape.
    pub fn image_shape(&self) -> &[usize] {
        self.items[0].image.shape()
    }

    /// Replaces every image through `f`, keeping labels (used to build the
    /// attacked and defended variants of an evaluation set).
    pub fn map_images(&self, mut f: impl FnMut(&DenseTensor) -> DenseTensor) -> Result<Self> {
        let items = self
            .items
            .iter()
            .map(|item| LabeledImage {
                image: f(&item.image),
                label: item.label,
            })
            .collect();
        Self::new(items, self.classes)
    }
}

/// A differentiable softmax classifier over flattened pixels.
///
/// Attacks and metrics are generic over this trait so the linear and
/// one-hidden-layer surrogates are interchangeable everywhere.
pub trait Classifier {
    fn classes(&self) -> usize;

    /// Flattened input dimension (`height * width * 3`).
    fn features(&self) -> usize;

    /// Raw (pre-softmax) class scores.
    fn logits(&self, x: &DenseTensor) -> Result<Vec<f64>>;

    /// Cross-entropy loss at label `y` and its analytic input gradient,
    /// shaped like `x`.
    fn loss_gradient(&self, x: &DenseTensor, y: usize) -> Result<(f64, DenseTensor)>;

    /// Argmax class, ties broken by the lowest class index.
    fn predict(&self, x: &DenseTensor) -> Result<usize> {
        let z = self.logits(x)?;
        let mut best = 0;
        for (c, v) in z.iter().enumerate() {
            if *v > z[best] {
                best = c;
            }
        }
        Ok(best)
    }
}

fn check_label<M: Classifier + ?Sized>(model: &M, y: usize) -> Result<()> {
    if y >= model.classes() {
        return Err(Error::domain(format!(
            "label {y} out of range 0..{}",
            model.classes()
        )));
    }
    Ok(())
}

/// Multinomial logistic-regression classifier over flattened pixels:
/// `C x D` weights plus a `C` bias, `D = height * width * 3`.
#[derive(Debug, Clone)]
pub struct LinearSoftmaxClassifier {
    weights: Matrix,
    bias: Vec<f64>,
}

impl LinearSoftmaxClassifier {
    pub fn new(weights: Matrix, bias: Vec<f64>) -> Result<Self> {
        if weights.rows() < 2 {
            return Err(Error::domain("classifier needs at least 2 classes"));
        }
        if bias.len() != weights.rows() {
            return Err(Error::domain(format!(
                "bias length {} does not match {} classes",
                bias.len(),
                weights.rows()
            )));
        }
        if weights.data().iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::domain("classifier parameters must be finite"));
        }
        Ok(Self { weights, bias })
    }

    /// Zero-initialized model (uniform predictions).
    pub fn zeros(classes: usize, features: usize) -> Result<Self> {
        Self::new(Matrix::zeros(classes, features), vec![0.0; classes])
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }
}

impl Classifier for LinearSoftmaxClassifier {
    fn classes(&self) -> usize {
        self.weights.rows()
    }

    fn features(&self) -> usize {
        self.weights.cols()
    }

    /// Raw logits `Wx + b` for a flattened image.
    fn logits(&self, x: &DenseTensor) -> Result<Vec<f64>> {
        if x.len() != self.features() {
            return Err(Error::domain(format!(
                "image has {} pixels, classifier expects {}",
                x.len(),
                self.features()
            )));
        }
        let data = x.data();
        Ok((0..self.classes())
            .map(|c| {
                let row = self.weights.row(c);
                let mut z = self.bias[c];
                for (w, v) in row.iter().zip(data) {
                    z += w * v;
                }
                z
            })
            .collect())
    }

    /// `J` and `W^T (softmax(Wx+b) - onehot(y))`, reshaped like the image.
    fn loss_gradient(&self, x: &DenseTensor, y: usize) -> Result<(f64, DenseTensor)> {
        check_label(self, y)?;
        let logits = self.logits(x)?;
        let (mut probs, loss) = softmax_loss(&logits, y);
        probs[y] -= 1.0;

        let mut grad = vec![0.0; x.len()];
        for (c, p) in probs.iter().enumerate() {
            let row = self.weights.row(c);
            for (g, w) in grad.iter_mut().zip(row) {
                *g += p * w;
            }
        }
        Ok((loss, DenseTensor::new(x.shape().to_vec(), grad)?))
    }
}

/// One-hidden-layer ReLU network: `softmax(W2 relu(W1 x + b1) + b2)`.
///
/// `W1` is `H x D`, `W2` is `C x H`. Gradients are exact backprop. Unlike
/// the linear surrogate, its input gradients carry the dense random
/// structure of `W1`, giving adversarial perturbations the high-rank
/// character that low-rank reconstruction defenses are built to remove.
#[derive(Debug, Clone)]
pub struct MlpClassifier {
    w1: Matrix,
    b1: Vec<f64>,
    w2: Matrix,
    b2: Vec<f64>,
}

impl MlpClassifier {
    pub fn new(w1: Matrix, b1: Vec<f64>, w2: Matrix, b2: Vec<f64>) -> Result<Self> {
        if w2.rows() < 2 {
            return Err(Error::domain("classifier needs at least 2 classes"));
        }
        if w1.rows() < 1 {
            return Err(Error::domain("hidden layer must have at least 1 unit"));
        }
        if w2.cols() != w1.rows() {
            return Err(Error::domain(format!(
                "output layer expects {} hidden units, hidden layer has {}",
                w2.cols(),
                w1.rows()
            )));
        }
        if b1.len() != w1.rows() || b2.len() != w2.rows() {
            return Err(Error::domain("bias lengths must match layer sizes"));
        }
        if w1
            .data()
            .iter()
            .chain(w2.data())
            .chain(&b1)
            .chain(&b2)
            .any(|v| !v.is_finite())
        {
            return Err(Error::domain("classifier parameters must be finite"));
        }
        Ok(Self { w1, b1, w2, b2 })
    }

    pub fn hidden(&self) -> usize {
        self.w1.rows()
    }

    pub fn w1(&self) -> &Matrix {
        &self.w1
    }

    pub fn b1(&self) -> &[f64] {
        &self.b1
    }

    pub fn w2(&self) -> &Matrix {
        &self.w2
    }

    pub fn b2(&self) -> &[f64] {
        &self.b2
    }

    /// Pre-activations and hidden activations for one flattened image.
    fn forward_hidden(&self, pix: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let hidden = self.hidden();
        let mut z1 = vec![0.0; hidden];
        for (j, z) in z1.iter_mut().enumerate() {
            let row = self.w1.row(j);
            let mut acc = self.b1[j];
            for (w, v) in row.iter().zip(pix) {
                acc += w * v;
            }
            *z = acc;
        }
        let h = z1.iter().map(|z| z.max(0.0)).collect();
        (z1, h)
    }

    fn output_logits(&self, h: &[f64]) -> Vec<f64> {
        (0..self.classes())
            .map(|c| {
                let row = self.w2.row(c);
                let mut z = self.b2[c];
                for (w, v) in row.iter().zip(h) {
                    z += w * v;
                }
                z
            })
            .collect()
    }
}

impl Classifier for MlpClassifier {
    fn classes(&self) -> usize {
        self.w2.rows()
    }

    fn features(&self) -> usize {
        self.w1.cols()
    }

    fn logits(&self, x: &DenseTensor) -> Result<Vec<f64>> {
        if x.len() != self.features() {
            return Err(Error::domain(format!(
                "image has {} pixels, classifier expects {}",
                x.len(),
                self.features()
            )));
        }
        let (_, h) = self.forward_hidden(x.data());
        Ok(self.output_logits(&h))
    }

    /// Backprop: `dJ/dx = W1^T (relu'(z1) ⊙ W2^T (p - onehot(y)))` with
    /// `relu'(0) := 0`.
    fn loss_gradient(&self, x: &DenseTensor, y: usize) -> Result<(f64, DenseTensor)> {
        check_label(self, y)?;
        if x.len() != self.features() {
            return Err(Error::domain(format!(
                "image has {} pixels, classifier expects {}",
                x.len(),
                self.features()
            )));
        }
        let (z1, h) = self.forward_hidden(x.data());
        let logits = self.output_logits(&h);
        let (mut probs, loss) = softmax_loss(&logits, y);
        probs[y] -= 1.0;

        // dz1 = relu'(z1) .* W2^T (p - e_y)
        let mut dz1 = vec![0.0; self.hidden()];
        for (c, p) in probs.iter().enumerate() {
            let row = self.w2.row(c);
            for (d, w) in dz1.iter_mut().zip(row) {
                *d += p * w;
            }
        }
        for (d, z) in dz1.iter_mut().zip(&z1) {
            if *z <= 0.0 {
                *d = 0.0;
            }
        }

        let mut grad = vec![0.0; x.len()];
        for (j, d) in dz1.iter().enumerate() {
            if *d == 0.0 {
                continue;
            }
            let row = self.w1.row(j);
            for (g, w) in grad.iter_mut().zip(row) {
                *g += d * w;
            }
        }
        Ok((loss, DenseTensor::new(x.shape().to_vec(), grad)?))
    }
}

/// Either surrogate behind one concrete type, for storage and CLI plumbing.
#[derive(Debug, Clone)]
pub enum AnyClassifier {
    Linear(LinearSoftmaxClassifier),
    Mlp(MlpClassifier),
}

impl Classifier for AnyClassifier {
    fn classes(&self) -> usize {
        match self {
            AnyClassifier::Linear(m) => m.classes(),
            AnyClassifier::Mlp(m) => m.classes(),
        }
    }

    fn features(&self) -> usize {
        match self {
            AnyClassifier::Linear(m) => m.features(),
            AnyClassifier::Mlp(m) => m.features(),
        }
    }

    fn logits(&self, x: &DenseTensor) -> Result<Vec<f64>> {
        match self {
            AnyClassifier::Linear(m) => m.logits(x),
            AnyClassifier::Mlp(m) => m.logits(x),
        }
    }

    fn loss_gradient(&self, x: &DenseTensor, y: usize) -> Result<(f64, DenseTensor)> {
        match self {
            AnyClassifier::Linear(m) => m.loss_gradient(x, y),
            AnyClassifier::Mlp(m) => m.loss_gradient(x, y),
        }
    }
}

impl From<LinearSoftmaxClassifier> for AnyClassifier {
    fn from(m: LinearSoftmaxClassifier) -> Self {
        AnyClassifier::Linear(m)
    }
}

impl From<MlpClassifier> for AnyClassifier {
    fn from(m: MlpClassifier) -> Self {
        AnyClassifier::Mlp(m)
    }
}

/// Numerically stable softmax probabilities and the cross-entropy at `y`.
fn softmax_loss(logits: &[f64], y: usize) -> (Vec<f64>, f64) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let probs: Vec<f64> = exps.iter().map(|e| e / sum).collect();
    let loss = sum.ln() + max - logits[y];
    (probs, loss)
}

/// Cross-entropy `J` at `y` and its analytic input gradient, reshaped to
/// the image shape (free-function form of [`Classifier::loss_gradient`]).
pub fn loss_gradient<M: Classifier + ?Sized>(
    model: &M,
    x: &DenseTensor,
    y: usize,
) -> Result<(f64, DenseTensor)> {
    model.loss_gradient(x, y)
}

/// Mean cross-entropy of the model over a dataset.
pub fn mean_loss<M: Classifier + ?Sized>(model: &M, data: &LabeledDataset) -> Result<f64> {
    let mut total = 0.0;
    for item in data.items() {
        let logits = model.logits(&item.image)?;
        total += softmax_loss(&logits, item.label).1;
    }
    Ok(total / data.len() as f64)
}

/// Fraction of items whose argmax prediction matches the label.
pub fn accuracy<M: Classifier + ?Sized>(model: &M, data: &LabeledDataset) -> Result<f64> {
    let mut correct = 0usize;
    for item in data.items() {
        if model.predict(&item.image)? == item.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.len() as f64)
}

const TRAIN_BATCH: usize = 32;

fn check_trainable(data: &LabeledDataset, lr: f64) -> Result<()> {
    let mut seen = vec![false; data.classes()];
    for item in data.items() {
        seen[item.label] = true;
    }
    if seen.iter().filter(|s| **s).count() < 2 {
        return Err(Error::domain(
            "training data must contain at least two classes",
        ));
    }
    if !lr.is_finite() || lr < 0.0 {
        return Err(Error::domain("learning rate must be finite and >= 0"));
    }
    Ok(())
}

/// Trains from zero initialization by seeded mini-batch gradient descent on
/// the mean cross-entropy (batch size 32, per-epoch reshuffle). Deterministic
/// for a fixed seed.
pub fn train_classifier(
    data: &LabeledDataset,
    epochs: usize,
    lr: f64,
    seed: u64,
) -> Result<LinearSoftmaxClassifier> {
    check_trainable(data, lr)?;

    let classes = data.classes();
    let features = data.items()[0].image.len();
    let mut weights = vec![0.0; classes * features];
    let mut bias = vec![0.0; classes];

    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 0..epochs {
        let mut rng = stream_rng(seed, epoch as u64);
        order.shuffle(&mut rng);
        for batch in order.chunks(TRAIN_BATCH) {
            // accumulate softmax residuals, then one descent step per batch
            let mut wgrad = vec![0.0; classes * features];
            let mut bgrad = vec![0.0; classes];
            for &i in batch {
                let item = &data.items()[i];
                let mut logits = vec![0.0; classes];
                let pix = item.image.data();
                for (c, z) in logits.iter_mut().enumerate() {
                    let row = &weights[c * features..(c + 1) * features];
                    let mut acc = bias[c];
                    for (w, v) in row.iter().zip(pix) {
                        acc += w * v;
                    }
                    *z = acc;
                }
                let (mut probs, _) = softmax_loss(&logits, item.label);
                probs[item.label] -= 1.0;
                for (c, p) in probs.iter().enumerate() {
                    bgrad[c] += p;
                    let row = &mut wgrad[c * features..(c + 1) * features];
                    for (g, v) in row.iter_mut().zip(pix) {
                        *g += p * v;
                    }
                }
            }
            let scale = lr / batch.len() as f64;
            for (w, g) in weights.iter_mut().zip(&wgrad) {
                *w -= scale * g;
            }
            for (b, g) in bias.iter_mut().zip(&bgrad) {
                *b -= scale * g;
            }
        }
    }

    LinearSoftmaxClassifier::new(Matrix::new(classes, features, weights)?, bias)
}

/// Trains the one-hidden-layer surrogate by the same seeded mini-batch
/// scheme as [`train_classifier`]. Layers start from a seeded uniform
/// He-style initialization (biases zero) drawn from a stream disjoint
/// from the per-epoch shuffle streams; deterministic for a fixed seed.
pub fn train_mlp(
    data: &LabeledDataset,
    hidden: usize,
    epochs: usize,
    lr: f64,
    seed: u64,
) -> Result<MlpClassifier> {
    check_trainable(data, lr)?;
    if hidden < 1 {
        return Err(Error::domain("hidden layer must have at least 1 unit"));
    }

    let classes = data.classes();
    let features = data.items()[0].image.len();
    let mut init = stream_rng(seed, u64::MAX);
    let lim1 = (6.0 / features as f64).sqrt();
    let lim2 = (6.0 / hidden as f64).sqrt();
    let mut w1: Vec<f64> = (0..hidden * features)
        .map(|_| init.random_range(-lim1..lim1))
        .collect();
    let mut w2: Vec<f64> = (0..classes * hidden)
        .map(|_| init.random_range(-lim2..lim2))
        .collect();
    let mut b1 = vec![0.0; hidden];
    let mut b2 = vec![0.0; classes];

    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 0..epochs {
        let mut rng = stream_rng(seed, epoch as u64);
        order.shuffle(&mut rng);
        for batch in order.chunks(TRAIN_BATCH) {
            let mut g_w1 = vec![0.0; hidden * features];
            let mut g_b1 = vec![0.0; hidden];
            let mut g_w2 = vec![0.0; classes * hidden];
            let mut g_b2 = vec![0.0; classes];
            for &i in batch {
                let item = &data.items()[i];
                let pix = item.image.data();

                let mut z1 = vec![0.0; hidden];
                for (j, z) in z1.iter_mut().enumerate() {
                    let row = &w1[j * features..(j + 1) * features];
                    let mut acc = b1[j];
                    for (w, v) in row.iter().zip(pix) {
                        acc += w * v;
                    }
                    *z = acc;
                }
                let h: Vec<f64> = z1.iter().map(|z| z.max(0.0)).collect();

                let mut logits = vec![0.0; classes];
                for (c, z) in logits.iter_mut().enumerate() {
                    let row = &w2[c * hidden..(c + 1) * hidden];
                    let mut acc = b2[c];
                    for (w, v) in row.iter().zip(&h) {
                        acc += w * v;
                    }
                    *z = acc;
                }
                let (mut probs, _) = softmax_loss(&logits, item.label);
                probs[item.label] -= 1.0;

                let mut dz1 = vec![0.0; hidden];
                for (c, p) in probs.iter().enumerate() {
                    g_b2[c] += p;
                    let row = &w2[c * hidden..(c + 1) * hidden];
                    let grow = &mut g_w2[c * hidden..(c + 1) * hidden];
                    for j in 0..hidden {
                        grow[j] += p * h[j];
                        dz1[j] += p * row[j];
                    }
                }
                for (d, z) in dz1.iter_mut().zip(&z1) {
                    if *z <= 0.0 {
                        *d = 0.0;
                    }
                }
                for (j, d) in dz1.iter().enumerate() {
                    if *d == 0.0 {
                        continue;
                    }
                    g_b1[j] += d;
                    let grow = &mut g_w1[j * features..(j + 1) * features];
                    for (g, v) in grow.iter_mut().zip(pix) {
                        *g += d * v;
                    }
                }
            }
            let scale = lr / batch.len() as f64;
            for (w, g) in w1.iter_mut().zip(&g_w1) {
                *w -= scale * g;
            }
            for (b, g) in b1.iter_mut().zip(&g_b1) {
                *b -= scale * g;
            }
            for (w, g) in w2.iter_mut().zip(&g_w2) {
                *w -= scale * g;
            }
            for (b, g) in b2.iter_mut().zip(&g_b2) {
                *b -= scale * g;
            }
        }
    }

    MlpClassifier::new(
        Matrix::new(hidden, features, w1)?,
        b1,
        Matrix::new(classes, hidden, w2)?,
        b2,
    )
}
