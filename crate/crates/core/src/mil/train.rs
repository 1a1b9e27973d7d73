//! Classifier training against a frozen codec. The encoder's latents are
//! computed once up front (its weights never receive gradients); standard
//! training is the degenerate no-attack case of the robust training loop, so
//! both share one code path.

use super::{classify, Bag, ClassifierHyperparams, ClassifierModel, Label, LatentBag, Split};
use crate::advtrain::{train_robust, RobustTrainConfig, TrainError, TrainMode};
use crate::codec::{self, AutoencoderModel, CodecError};
use serde::{Deserialize, Serialize};

/// A bag in latent form, paired with its supervision fields.
#[derive(Debug, Clone)]
pub struct EncodedBag {
    pub latent: LatentBag,
    pub label: Label,
    pub split: Split,
}

/// Encode every instance of every bag through the frozen codec. Strings are
/// flattened into one bucketed pass and split back per bag.
pub fn pre_encode_bags(codec_model: &AutoencoderModel, bags: &[Bag]) -> Result<Vec<EncodedBag>, CodecError> {
    let all: Vec<&[u8]> = bags.iter().flat_map(|b| b.paths.iter().map(|p| p.as_bytes())).collect();
    let latents = codec::encode_all(codec_model, &all)?;
    let d = codec_model.hp.latent_dim;
    let mut out = Vec::with_capacity(bags.len());
    let mut offset = 0;
    for bag in bags {
        let k = bag.paths.len();
        let mut data = Vec::with_capacity(k * d);
        for z in &latents[offset..offset + k] {
            data.extend_from_slice(&z.values);
        }
        offset += k;
        out.push(EncodedBag {
            latent: LatentBag { matrix: crate::tensor::Tensor::from_vec(k, d, data) },
            label: bag.label,
            split: bag.split,
        });
    }
    Ok(out)
}

/// Fraction of bags the model labels correctly.
pub fn accuracy_on(model: &ClassifierModel, bags: &[&EncodedBag]) -> f64 {
    assert!(!bags.is_empty(), "accuracy_on: empty evaluation set");
    let correct = bags
        .iter()
        .filter(|b| classify(model, &b.latent).map(|(_, y)| y == b.label).unwrap_or(false))
        .count();
    correct as f64 / bags.len() as f64
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierTrainConfig {
    #[serde(flatten)]
    pub hp: ClassifierHyperparams,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for ClassifierTrainConfig {
    fn default() -> Self {
        ClassifierTrainConfig {
            hp: ClassifierHyperparams::default(),
            epochs: 20,
            batch_size: 32,
            learning_rate: 0.5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassifierTrainReport {
    pub epoch_train_loss: Vec<f64>,
    pub epoch_train_accuracy: Vec<f64>,
    pub epoch_test_accuracy: Vec<f64>,
}

/// Plain supervised training on frozen-codec latents.
pub fn train_classifier(
    bags: &[Bag],
    codec_model: &AutoencoderModel,
    config: &ClassifierTrainConfig,
) -> Result<(ClassifierModel, ClassifierTrainReport), TrainError> {
    let robust = RobustTrainConfig {
        hp: config.hp.clone(),
        epochs: config.epochs,
        batch_size: config.batch_size,
        learning_rate: config.learning_rate,
        seed: config.seed,
    };
    let (model, report) = train_robust(bags, codec_model, &TrainMode::Standard, &robust)?;
    Ok((
        model,
        ClassifierTrainReport {
            epoch_train_loss: report.epochs.iter().map(|e| e.train_loss).collect(),
            epoch_train_accuracy: report.epochs.iter().map(|e| e.train_accuracy).collect(),
            epoch_test_accuracy: report.epochs.iter().map(|e| e.test_accuracy).collect(),
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Two Gaussian blobs as bags of one: linearly separable latents must be
    /// learned almost perfectly within a few epochs.
    #[test]
    fn separable_singleton_bags_reach_high_train_accuracy() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let dim = 8;
        let make = |label: Label, center: f64, rng: &mut ChaCha8Rng| -> EncodedBag {
            let data: Vec<f64> = (0..dim).map(|_| center + 0.3 * rng.random_range(-1.0..1.0)).collect();
            EncodedBag {
                latent: LatentBag { matrix: Tensor::from_vec(1, dim, data) },
                label,
                split: Split::Train,
            }
        };
        let mut encoded = Vec::new();
        for _ in 0..40 {
            encoded.push(make(Label::Benign, -1.0, &mut rng));
            encoded.push(make(Label::Malicious, 1.0, &mut rng));
        }

        let hp = ClassifierHyperparams {
            latent_dim: dim,
            heads: 2,
            hidden: 8,
            head_hidden: 16,
            ..Default::default()
        };
        let mut model = ClassifierModel::init(hp, &mut rng);
        let idx: Vec<usize> = (0..encoded.len()).collect();
        let dummy_bags: Vec<Bag> = encoded
            .iter()
            .map(|e| Bag {
                paths: vec!["x".into()],
                label: e.label,
                split: e.split,
                timestamp: 0,
            })
            .collect();
        let codec = {
            let hp = crate::codec::CodecHyperparams {
                embed_dim: 4,
                latent_dim: dim,
                conv_channels: 4,
                kernel_width: 5,
                max_len: 16,
            };
            crate::codec::AutoencoderModel::init(hp, &mut rng)
        };
        for _ in 0..20 {
            let batches: Vec<Vec<usize>> = idx.chunks(16).map(|c| c.to_vec()).collect();
            crate::advtrain::adversarial_epoch(
                &mut model,
                &dummy_bags,
                &encoded,
                &codec,
                &TrainMode::Standard,
                0.5,
                &batches,
            )
            .unwrap();
        }
        let refs: Vec<&EncodedBag> = encoded.iter().collect();
        let acc = accuracy_on(&model, &refs);
        assert!(acc >= 0.99, "train accuracy {acc}");
    }

    #[test]
    fn train_classifier_is_bit_identical_to_standard_robust_training() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let codec = {
            let hp = crate::codec::CodecHyperparams {
                embed_dim: 6,
                latent_dim: 10,
                conv_channels: 8,
                kernel_width: 5,
                max_len: 64,
            };
            crate::codec::AutoencoderModel::init(hp, &mut rng)
        };
        let bags: Vec<Bag> = (0..14)
            .map(|i| Bag {
                paths: vec![format!("C:\\p{i}\\f{i}.bin"), format!("C:\\q\\g{}.txt", i * 7 % 5)],
                label: if i % 2 == 0 { Label::Benign } else { Label::Malicious },
                split: Split::Train,
                timestamp: i,
            })
            .collect();
        let cfg = ClassifierTrainConfig {
            hp: ClassifierHyperparams {
                latent_dim: 10,
                heads: 2,
                hidden: 6,
                head_hidden: 12,
                ..Default::default()
            },
            epochs: 3,
            batch_size: 4,
            learning_rate: 0.4,
            seed: 21,
        };
        let (m1, _) = train_classifier(&bags, &codec, &cfg).unwrap();
        let robust = RobustTrainConfig {
            hp: cfg.hp.clone(),
            epochs: cfg.epochs,
            batch_size: cfg.batch_size,
            learning_rate: cfg.learning_rate,
            seed: cfg.seed,
        };
        let (m2, _) = train_robust(&bags, &codec, &TrainMode::Standard, &robust).unwrap();
        for (a, b) in m1.params().iter().zip(m2.params().iter()) {
            assert_eq!(a.data(), b.data());
        }
    }
}
