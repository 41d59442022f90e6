//! Logistic-regression reference classifier trained by full-batch gradient
//! descent on mean binary cross-entropy.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{QermExample, QualityClassifier};
use crate::cache::write_atomic;
use crate::embedding::dot;
use crate::error::{Error, Result};

/// Scale of the seeded initial weights.
const INIT_SCALE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub examples: usize,
    pub positives: usize,
    /// Mean cross-entropy before each step, then after the last one.
    pub loss_trace: Vec<f64>,
    /// Set when the training data had a single label; the model then always
    /// outputs this value.
    pub degenerate_prior: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QermModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub feature_dim: usize,
    pub metadata: Option<TrainingMetadata>,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

impl QermModel {
    pub fn zeros(feature_dim: usize) -> Self {
        Self {
            weights: vec![0.0; feature_dim],
            bias: 0.0,
            feature_dim,
            metadata: None,
        }
    }

    pub fn degenerate_prior(&self) -> Option<f64> {
        self.metadata.as_ref().and_then(|m| m.degenerate_prior)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let model: QermModel = serde_json::from_str(&text)?;
        if model.weights.len() != model.feature_dim {
            return Err(Error::Qerm(format!(
                "{}: {} weights for feature_dim {}",
                path.display(),
                model.weights.len(),
                model.feature_dim
            )));
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        write_atomic(path, text.as_bytes())
    }
}

impl QualityClassifier for QermModel {
    fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    fn logit(&self, features: &[f64]) -> Result<f64> {
        infer_logit(self, features)
    }
}

/// The model's output score `sigmoid(w . x + b)` in (0, 1). Following the
/// usage in the loop, this value is called the logit.
pub fn infer_logit(model: &QermModel, features: &[f64]) -> Result<f64> {
    if features.len() != model.feature_dim {
        return Err(Error::Dimension {
            expected: model.feature_dim,
            found: features.len(),
        });
    }
    if let Some(prior) = model.degenerate_prior() {
        return Ok(prior);
    }
    Ok(sigmoid(dot(&model.weights, features) + model.bias))
}

/// Mean cross-entropy and its gradient with respect to `(weights, bias)`.
pub fn loss_and_gradient(
    weights: &[f64],
    bias: f64,
    examples: &[QermExample],
) -> (f64, Vec<f64>, f64) {
    let n = examples.len() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; weights.len()];
    let mut grad_bias = 0.0;
    for ex in examples {
        let z = dot(weights, &ex.features) + bias;
        let y = f64::from(ex.label);
        loss += softplus(z) - y * z;
        let r = sigmoid(z) - y;
        for (g, x) in grad.iter_mut().zip(&ex.features) {
            *g += r * x;
        }
        grad_bias += r;
    }
    grad.iter_mut().for_each(|g| *g /= n);
    (loss / n, grad, grad_bias / n)
}

pub fn train(
    examples: &[QermExample],
    epochs: usize,
    learning_rate: f64,
    seed: u64,
) -> Result<QermModel> {
    let Some(first) = examples.first() else {
        return Err(Error::Qerm("no training examples".into()));
    };
    let dim = first.features.len();
    if let Some(bad) = examples.iter().find(|e| e.features.len() != dim) {
        return Err(Error::Qerm(format!(
            "example `{}` has {} features, expected {dim}",
            bad.qid,
            bad.features.len()
        )));
    }
    if !(learning_rate > 0.0 && learning_rate.is_finite()) {
        return Err(Error::Qerm(format!(
            "learning rate {learning_rate} must be positive"
        )));
    }
    let positives = examples.iter().filter(|e| e.label == 1).count();
    let mut metadata = TrainingMetadata {
        epochs,
        learning_rate,
        seed,
        examples: examples.len(),
        positives,
        loss_trace: Vec::with_capacity(epochs + 1),
        degenerate_prior: None,
    };
    if positives == 0 || positives == examples.len() {
        log::warn!("training data has a single label; the model will output the prior");
        metadata.degenerate_prior = Some(positives as f64 / examples.len() as f64);
        return Ok(QermModel {
            weights: vec![0.0; dim],
            bias: 0.0,
            feature_dim: dim,
            metadata: Some(metadata),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut weights: Vec<f64> = (0..dim)
        .map(|_| rng.random_range(-INIT_SCALE..INIT_SCALE))
        .collect();
    let mut bias = 0.0;
    for _ in 0..epochs {
        let (loss, grad, grad_bias) = loss_and_gradient(&weights, bias, examples);
        metadata.loss_trace.push(loss);
        for (w, g) in weights.iter_mut().zip(&grad) {
            *w -= learning_rate * g;
        }
        bias -= learning_rate * grad_bias;
    }
    metadata
        .loss_trace
        .push(loss_and_gradient(&weights, bias, examples).0);
    Ok(QermModel {
        weights,
        bias,
        feature_dim: dim,
        metadata: Some(metadata),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ex(features: &[f64], label: u8) -> QermExample {
        QermExample {
            qid: "q".into(),
            features: features.to_vec(),
            label,
            ndcg: f64::from(label),
        }
    }

    #[test]
    fn zero_model_is_one_half() {
        let m = QermModel::zeros(3);
        assert_eq!(infer_logit(&m, &[5.0, -2.0, 100.0]).unwrap(), 0.5);
        assert!(infer_logit(&m, &[1.0]).is_err());
    }

    #[test]
    fn sigmoid_is_stable_and_monotone() {
        assert_eq!(sigmoid(-1000.0), 0.0);
        assert_eq!(sigmoid(1000.0), 1.0);
        let mut prev = 0.0;
        for i in -40..=40 {
            let v = sigmoid(f64::from(i) * 0.5);
            assert!(v >= prev);
            prev = v;
        }
        assert!((softplus(800.0) - 800.0).abs() < 1e-9);
    }

    #[test]
    fn single_label_is_degenerate() {
        let data = [ex(&[1.0], 1), ex(&[2.0], 1)];
        let m = train(&data, 10, 0.1, 0).unwrap();
        assert_eq!(m.degenerate_prior(), Some(1.0));
        assert_eq!(infer_logit(&m, &[-50.0]).unwrap(), 1.0);
    }

    #[test]
    fn training_is_deterministic() {
        let data = [ex(&[1.0, 0.0], 1), ex(&[0.0, 1.0], 0), ex(&[0.5, 0.4], 1)];
        let a = train(&data, 50, 0.5, 9).unwrap();
        let b = train(&data, 50, 0.5, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.metadata.unwrap().loss_trace.len(), 51);
    }

    #[test]
    fn json_round_trip() {
        let data = [ex(&[1.0, 0.0], 1), ex(&[0.0, 1.0], 0)];
        let m = train(&data, 5, 0.5, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        m.save(&path).unwrap();
        assert_eq!(QermModel::load(&path).unwrap(), m);
    }
}
