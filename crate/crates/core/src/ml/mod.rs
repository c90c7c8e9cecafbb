//! Learned key generator: an MLP regressing `(r, x0)` from a preprocessed
//! segment, and encryption with its predictions.
//!
//! Targets are trained in unit coordinates `((r − 3.6)/0.4, (x0 − 0.1)/0.8)`.
//! Predicted keys are stored in the key store at encryption time and never
//! re-predicted for decryption.

mod format;
pub mod mlp;
pub mod preprocess;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::chaos::{derive_params, ChaoticParams, R_MIN, R_SPAN, X0_MIN, X0_SPAN};
use crate::cipher::{
    sample_stats, Cipher, EncryptedRecord, KeyMaterial, ModeTag, RecordMeta, SignalSegment,
};
use crate::error::{Error, Result};

pub use format::{MODEL_MAGIC, MODEL_VERSION};
pub use mlp::Mlp;
pub use preprocess::Preprocessor;

pub const MIN_DATASET: usize = 10;

/// Scaled features, their labels and the fitted preprocessing.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<ChaoticParams>,
    pub preprocessor: Preprocessor,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }
}

/// Labels come from the direct derivation on each (imputed) segment, without
/// salt. Missing samples are filled with the per-position median.
pub fn build_dataset(segments: &[SignalSegment]) -> Result<Dataset> {
    if segments.len() < MIN_DATASET {
        return Err(Error::Dataset(format!(
            "need at least {MIN_DATASET} segments, got {}",
            segments.len()
        )));
    }
    let len = segments[0].len();
    if let Some(s) = segments.iter().find(|s| s.len() != len) {
        return Err(Error::Dataset(format!(
            "segment of length {} among length {len}",
            s.len()
        )));
    }
    let raw: Vec<Vec<f64>> = segments.iter().map(|s| s.samples.clone()).collect();
    let preprocessor = Preprocessor::fit(&raw)?;
    let mut features = Vec::with_capacity(raw.len());
    let mut labels = Vec::with_capacity(raw.len());
    for row in &raw {
        let imputed = preprocessor.impute(row)?;
        labels.push(derive_params(sample_stats(&imputed))?);
        features.push(preprocessor.transform(row)?);
    }
    Ok(Dataset {
        features,
        labels,
        preprocessor,
    })
}

fn to_unit(p: ChaoticParams) -> [f64; 2] {
    [(p.r() - R_MIN) / R_SPAN, (p.x0() - X0_MIN) / X0_SPAN]
}

fn from_unit(y: &[f64]) -> (f64, f64) {
    (R_MIN + R_SPAN * y[0], X0_MIN + X0_SPAN * y[1])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Fraction held out for testing.
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden: vec![32, 16],
            learning_rate: 0.05,
            epochs: 500,
            batch_size: 16,
            test_fraction: 0.2,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    /// Mean over both coordinates of the squared `(r, x0)` error.
    pub train_mse: f64,
    pub test_mse: f64,
    pub epochs: usize,
    pub split_fraction: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub final_loss: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KeyPredictor {
    pub preprocessor: Preprocessor,
    pub network: Mlp,
}

impl KeyPredictor {
    pub fn new(preprocessor: Preprocessor, network: Mlp) -> Result<Self> {
        if network.n_inputs() != preprocessor.len() || network.n_outputs() != 2 {
            return Err(Error::Model(format!(
                "network {:?} does not fit {} features and 2 outputs",
                network.sizes(),
                preprocessor.len()
            )));
        }
        Ok(Self {
            preprocessor,
            network,
        })
    }

    pub fn segment_len(&self) -> usize {
        self.preprocessor.len()
    }

    /// Network output mapped back to `(r, x0)`, unclamped.
    pub fn predict_raw(&self, segment: &SignalSegment) -> Result<(f64, f64)> {
        if segment.len() != self.segment_len() {
            return Err(Error::Shape {
                expected: self.segment_len(),
                got: segment.len(),
            });
        }
        let x = self.preprocessor.transform(&segment.samples)?;
        Ok(from_unit(&self.network.forward(&x)?))
    }

    fn predict_scaled(&self, features: &[f64]) -> Result<ChaoticParams> {
        let (r, x0) = from_unit(&self.network.forward(features)?);
        Ok(ChaoticParams::clamped(r, x0))
    }
}

/// Clamped prediction; always a valid key.
pub fn predict_params(model: &KeyPredictor, segment: &SignalSegment) -> Result<ChaoticParams> {
    let (r, x0) = model.predict_raw(segment)?;
    Ok(ChaoticParams::clamped(r, x0))
}

fn param_mse(model: &KeyPredictor, data: &Dataset, idx: &[usize]) -> Result<f64> {
    if idx.is_empty() {
        return Ok(0.0);
    }
    let mut sq = 0.0;
    for &i in idx {
        let p = model.predict_scaled(&data.features[i])?;
        let l = data.labels[i];
        sq += (p.r() - l.r()).powi(2) + (p.x0() - l.x0()).powi(2);
    }
    Ok(sq / (2 * idx.len()) as f64)
}

/// Mini-batch gradient descent with a seeded split, init and batch order.
pub fn train(data: &Dataset, config: &TrainConfig) -> Result<(KeyPredictor, TrainingReport)> {
    if data.len() < MIN_DATASET {
        return Err(Error::Dataset(format!(
            "need at least {MIN_DATASET} rows, got {}",
            data.len()
        )));
    }
    if !(config.test_fraction > 0.0 && config.test_fraction < 1.0) {
        return Err(Error::Domain(format!(
            "test fraction {} outside (0, 1)",
            config.test_fraction
        )));
    }
    if !(config.learning_rate > 0.0) || config.batch_size == 0 || config.epochs == 0 {
        return Err(Error::Domain(
            "learning rate, batch size and epochs must be positive".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut rng);
    let n_test =
        ((data.len() as f64 * config.test_fraction).round() as usize).clamp(1, data.len() - 1);
    let (test_idx, train_idx) = order.split_at(n_test);
    let (test_idx, mut train_idx) = (test_idx.to_vec(), train_idx.to_vec());

    let mut sizes = vec![data.preprocessor.len()];
    sizes.extend(&config.hidden);
    sizes.push(2);
    let mut net = Mlp::new(&sizes, config.seed)?;
    let targets: Vec<[f64; 2]> = data.labels.iter().map(|&p| to_unit(p)).collect();

    let mut final_loss = f64::NAN;
    for epoch in 0..config.epochs {
        train_idx.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in train_idx.chunks(config.batch_size) {
            let xs: Vec<&[f64]> = batch.iter().map(|&i| data.features[i].as_slice()).collect();
            let ys: Vec<&[f64]> = batch.iter().map(|&i| targets[i].as_slice()).collect();
            let (loss, grad) = net.loss_and_grad(&xs, &ys)?;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::TrainingDiverged { epoch });
            }
            for (p, g) in net.params_mut().iter_mut().zip(&grad) {
                *p -= config.learning_rate * g;
            }
            epoch_loss += loss * batch.len() as f64;
        }
        final_loss = epoch_loss / train_idx.len() as f64;
        if !final_loss.is_finite() {
            return Err(Error::TrainingDiverged { epoch });
        }
    }
    let model = KeyPredictor::new(data.preprocessor.clone(), net)?;
    let report = TrainingReport {
        train_mse: param_mse(&model, data, &train_idx)?,
        test_mse: param_mse(&model, data, &test_idx)?,
        epochs: config.epochs,
        split_fraction: config.test_fraction,
        n_train: train_idx.len(),
        n_test: test_idx.len(),
        final_loss,
    };
    Ok((model, report))
}

/// Encrypts with the model's prediction; the record is tagged MlPredicted.
pub fn encrypt_ml(
    cipher: &Cipher,
    segment: &SignalSegment,
    model: &KeyPredictor,
    mut meta: RecordMeta,
) -> Result<(EncryptedRecord, KeyMaterial)> {
    let params = predict_params(model, segment)?;
    meta.mode = ModeTag::MlPredicted;
    cipher.encrypt(segment, params, meta)
}
