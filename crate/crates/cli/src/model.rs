//! Classifier persistence: a JSON file holding the trained weights plus the
//! image geometry they expect, so attack/defend runs can check shape
//! compatibility up front. The `kind` tag selects the surrogate flavor.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use lowrank_shield::attack::{AnyClassifier, Classifier, LinearSoftmaxClassifier, MlpClassifier};
use lowrank_shield::tensor::Matrix;
use lowrank_shield::{Error, Result};

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum ModelFile {
    Linear {
        classes: usize,
        features: usize,
        height: usize,
        width: usize,
        /// Row-major `classes x features` weight matrix.
        weights: Vec<f64>,
        bias: Vec<f64>,
    },
    Mlp {
        classes: usize,
        features: usize,
        hidden: usize,
        height: usize,
        width: usize,
        /// Row-major `hidden x features` first-layer weights.
        w1: Vec<f64>,
        b1: Vec<f64>,
        /// Row-major `classes x hidden` output-layer weights.
        w2: Vec<f64>,
        b2: Vec<f64>,
    },
}

/// A classifier together with the image dimensions it was trained on.
#[derive(Debug, Clone)]
pub struct SavedModel {
    pub classifier: AnyClassifier,
    pub height: usize,
    pub width: usize,
}

pub fn save_model(
    path: impl AsRef<Path>,
    classifier: &AnyClassifier,
    height: usize,
    width: usize,
) -> Result<()> {
    let file = match classifier {
        AnyClassifier::Linear(m) => ModelFile::Linear {
            classes: m.classes(),
            features: m.features(),
            height,
            width,
            weights: m.weights().data().to_vec(),
            bias: m.bias().to_vec(),
        },
        AnyClassifier::Mlp(m) => ModelFile::Mlp {
            classes: m.classes(),
            features: m.features(),
            hidden: m.hidden(),
            height,
            width,
            w1: m.w1().data().to_vec(),
            b1: m.b1().to_vec(),
            w2: m.w2().data().to_vec(),
            b2: m.b2().to_vec(),
        },
    };
    let json = serde_json::to_string(&file)
        .map_err(|e| Error::numerical(format!("model serialization failed: {e}")))?;
    fs::write(path, json)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<SavedModel> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let file: ModelFile = serde_json::from_str(&text).map_err(|e| {
        Error::parse(
            e.column().saturating_sub(1),
            format!("model file '{}': {e}", path.display()),
        )
    })?;
    let bad = |e: Error| Error::domain(format!("model file '{}': {e}", path.display()));
    let (classifier, features, height, width) = match file {
        ModelFile::Linear {
            classes,
            features,
            height,
            width,
            weights,
            bias,
        } => {
            let weights = Matrix::new(classes, features, weights).map_err(bad)?;
            let m = LinearSoftmaxClassifier::new(weights, bias).map_err(bad)?;
            (AnyClassifier::Linear(m), features, height, width)
        }
        ModelFile::Mlp {
            classes,
            features,
            hidden,
            height,
            width,
            w1,
            b1,
            w2,
            b2,
        } => {
            let w1 = Matrix::new(hidden, features, w1).map_err(bad)?;
            let w2 = Matrix::new(classes, hidden, w2).map_err(bad)?;
            let m = MlpClassifier::new(w1, b1, w2, b2).map_err(bad)?;
            (AnyClassifier::Mlp(m), features, height, width)
        }
    };
    if features != height * width * 3 {
        return Err(Error::domain(format!(
            "model file '{}': features {features} do not match {height}x{width}x3",
            path.display(),
        )));
    }
    Ok(SavedModel {
        classifier,
        height,
        width,
    })
}
