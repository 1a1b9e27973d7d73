//! Minimax robust training and cross-model robustness evaluation.
//!
//! The loop accumulates, per batch, a clean-loss gradient for every example
//! and — only for examples the live model currently classifies correctly —
//! an adversarial-loss gradient at the (approximate) inner maximum, then
//! applies exactly `theta -= (lr / |batch|) * accumulated`. In latent mode the
//! adversarial input is the perturbed latent bag itself; in full mode it is
//! the re-encoded bag of generated adversarial strings, and only verified
//! successes contribute (failed attacks add nothing beyond the clean term).

use crate::attack::{
    latent_pgd, reencode_dropping_empty, run_attack_from_state, AttackConfig, AttackError,
    AttackOutcome,
};
use crate::codec::{AutoencoderModel, CodecError};
use crate::mil::{
    accuracy_on, classify_forward, pre_encode_bags, register_classifier, Bag, ClassifierHyperparams,
    ClassifierModel, EncodedBag, Label, MilError, Split,
};
use crate::tensor::{Tensor, Trace};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Mil(#[from] MilError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Attack(#[from] AttackError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TrainMode {
    Standard,
    AdversarialLatent { attack: AttackConfig },
    AdversarialFull { attack: AttackConfig },
}

impl TrainMode {
    pub fn name(&self) -> &'static str {
        match self {
            TrainMode::Standard => "standard",
            TrainMode::AdversarialLatent { .. } => "adversarial-latent",
            TrainMode::AdversarialFull { .. } => "adversarial-full",
        }
    }

    pub fn attack(&self) -> Option<&AttackConfig> {
        match self {
            TrainMode::Standard => None,
            TrainMode::AdversarialLatent { attack } | TrainMode::AdversarialFull { attack } => {
                Some(attack)
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RobustTrainConfig {
    pub hp: ClassifierHyperparams,
    pub epochs: usize,
    pub batch_size: usize,
    /// Alg-3 step size: the update is theta -= (lr/|B|) * accumulated grads.
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for RobustTrainConfig {
    fn default() -> Self {
        RobustTrainConfig {
            hp: ClassifierHyperparams::default(),
            epochs: 20,
            batch_size: 32,
            learning_rate: 0.5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochReport {
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub attacks_invoked: usize,
    pub attack_successes: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RobustTrainReport {
    pub mode: String,
    pub epochs: Vec<EpochReport>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct EpochStats {
    pub mean_train_loss: f64,
    pub attacks_invoked: usize,
    pub attack_successes: usize,
}

/// Classifier loss gradient for one latent bag; also reports the prediction
/// made during the forward pass.
fn example_grad(
    model: &ClassifierModel,
    e: &Tensor,
    label: Label,
    grad_acc: &mut [Vec<f64>],
) -> (f64, Label) {
    let mut t = Trace::new();
    let vars = register_classifier(&mut t, model);
    let ev = t.input(e.rows(), e.cols(), e.data().to_vec(), false);
    let logits = classify_forward(&mut t, &vars, &model.hp, ev);
    let vals = t.value(logits);
    let predicted = if vals[1] > vals[0] { Label::Malicious } else { Label::Benign };
    let loss = t.cross_entropy_rows(logits, &[label.index()], &[1.0]);
    let loss_val = t.scalar(loss);
    t.backward(loss);
    for (acc, &v) in grad_acc.iter_mut().zip(vars.all().iter()) {
        if let Some(g) = t.grad(v) {
            for (a, gi) in acc.iter_mut().zip(g) {
                *a += gi;
            }
        }
    }
    (loss_val, predicted)
}


/// Classifier loss and parameter gradients (in `params()` order) for one
/// latent bag; the analytic side of finite-difference checks.
pub fn classifier_loss_and_grads(
    model: &ClassifierModel,
    e: &Tensor,
    label: Label,
) -> (f64, Vec<Vec<f64>>) {
    let sizes: Vec<usize> = model.params().iter().map(|p| p.numel()).collect();
    let mut grads: Vec<Vec<f64>> = sizes.iter().map(|&n| vec![0.0; n]).collect();
    let (loss, _) = example_grad(model, e, label, &mut grads);
    (loss, grads)
}

/// One pass over the given batches, updating the model in place.
pub fn adversarial_epoch(
    model: &mut ClassifierModel,
    bags: &[Bag],
    encoded: &[EncodedBag],
    codec: &AutoencoderModel,
    mode: &TrainMode,
    learning_rate: f64,
    batches: &[Vec<usize>],
) -> Result<EpochStats, TrainError> {
    let mut stats = EpochStats::default();
    let mut example_count = 0usize;
    let mut loss_sum = 0.0;
    for batch in batches {
        let sizes: Vec<usize> = model.params().iter().map(|p| p.numel()).collect();
        let mut grad_acc: Vec<Vec<f64>> = sizes.iter().map(|&n| vec![0.0; n]).collect();
        for &i in batch {
            let e = &encoded[i].latent.matrix;
            let label = encoded[i].label;
            let (loss, predicted) = example_grad(model, e, label, &mut grad_acc);
            loss_sum += loss;
            example_count += 1;
            if predicted != label {
                // Misclassified examples contribute the clean term only.
                continue;
            }
            match mode {
                TrainMode::Standard => {}
                TrainMode::AdversarialLatent { attack } => {
                    stats.attacks_invoked += 1;
                    let delta = latent_pgd(model, e, label, attack);
                    let adv = e.add(&delta);
                    let (_, adv_pred) = example_grad(model, &adv, label, &mut grad_acc);
                    if adv_pred != label {
                        stats.attack_successes += 1;
                    }
                }
                TrainMode::AdversarialFull { attack } => {
                    stats.attacks_invoked += 1;
                    let paths = bags[i].path_bytes();
                    let result = run_attack_from_state(model, codec, &paths, label, e, attack)?;
                    if result.outcome == AttackOutcome::Success {
                        stats.attack_successes += 1;
                        let adv_paths = result.adversarial_paths.expect("success carries paths");
                        let adv_state = reencode_dropping_empty(codec, &adv_paths)?
                            .expect("verified success re-encodes");
                        let _ = example_grad(model, &adv_state, label, &mut grad_acc);
                    }
                }
            }
        }
        let scale = learning_rate / batch.len() as f64;
        for (p, g) in model.params_mut().into_iter().zip(&grad_acc) {
            for (pv, gv) in p.data_mut().iter_mut().zip(g) {
                *pv -= scale * gv;
            }
        }
    }
    stats.mean_train_loss = loss_sum / example_count.max(1) as f64;
    Ok(stats)
}

/// Train a classifier under the given mode on frozen-codec latents.
/// Standard mode reduces to plain mini-batch training.
pub fn train_robust(
    bags: &[Bag],
    codec: &AutoencoderModel,
    mode: &TrainMode,
    config: &RobustTrainConfig,
) -> Result<(ClassifierModel, RobustTrainReport), TrainError> {
    if bags.is_empty() {
        return Err(MilError::EmptyDataset.into());
    }
    let encoded = pre_encode_bags(codec, bags)?;
    let train_idx: Vec<usize> =
        (0..bags.len()).filter(|&i| encoded[i].split == Split::Train).collect();
    let test_idx: Vec<usize> =
        (0..bags.len()).filter(|&i| encoded[i].split == Split::Test).collect();
    if train_idx.is_empty() {
        return Err(MilError::EmptyDataset.into());
    }
    let benign = train_idx.iter().filter(|&&i| encoded[i].label == Label::Benign).count();
    if benign == 0 || benign == train_idx.len() {
        return Err(MilError::SingleClass.into());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut hp = config.hp.clone();
    hp.latent_dim = codec.hp.latent_dim;
    let mut model = ClassifierModel::init(hp, &mut rng);

    let mut report = RobustTrainReport { mode: mode.name().to_string(), epochs: Vec::new() };
    for _epoch in 0..config.epochs {
        let mut order = train_idx.clone();
        order.shuffle(&mut rng);
        let batches: Vec<Vec<usize>> =
            order.chunks(config.batch_size).map(|c| c.to_vec()).collect();
        let stats =
            adversarial_epoch(&mut model, bags, &encoded, codec, mode, config.learning_rate, &batches)?;
        let train_refs: Vec<&EncodedBag> = train_idx.iter().map(|&i| &encoded[i]).collect();
        let test_refs: Vec<&EncodedBag> = test_idx.iter().map(|&i| &encoded[i]).collect();
        report.epochs.push(EpochReport {
            train_loss: stats.mean_train_loss,
            train_accuracy: accuracy_on(&model, &train_refs),
            test_accuracy: if test_refs.is_empty() { f64::NAN } else { accuracy_on(&model, &test_refs) },
            attacks_invoked: stats.attacks_invoked,
            attack_successes: stats.attack_successes,
        });
    }
    Ok((model, report))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CrossEval {
    /// 1 - (target misclassification rate on the attacker's successes).
    pub robustness: f64,
    /// Number of attacker-successful adversarial bags evaluated.
    pub support: usize,
    /// True when the attacker produced no successes (robustness reported 1.0).
    pub zero_support: bool,
}

/// Generate adversarial bags with `attacker` and measure how often `target`
/// still classifies them correctly.
pub fn cross_evaluate(
    attacker: &ClassifierModel,
    target: &ClassifierModel,
    eval_bags: &[Bag],
    codec: &AutoencoderModel,
    config: &AttackConfig,
) -> Result<CrossEval, TrainError> {
    let (results, _) = crate::attack::batch_attack(attacker, codec, eval_bags, config)?;
    evaluate_target_on_successes(target, codec, eval_bags, &results)
}

fn evaluate_target_on_successes(
    target: &ClassifierModel,
    codec: &AutoencoderModel,
    bags: &[Bag],
    results: &[crate::attack::AttackResult],
) -> Result<CrossEval, TrainError> {
    let mut support = 0usize;
    let mut fooled = 0usize;
    for (r, bag) in results.iter().zip(bags) {
        if r.outcome != AttackOutcome::Success {
            continue;
        }
        let adv_paths = r.adversarial_paths.as_ref().expect("success carries paths");
        let state = reencode_dropping_empty(codec, adv_paths)?.expect("verified success re-encodes");
        let lb = crate::mil::LatentBag { matrix: state };
        let (_, predicted) = crate::mil::classify(target, &lb)?;
        support += 1;
        if predicted != bag.label {
            fooled += 1;
        }
    }
    if support == 0 {
        return Ok(CrossEval { robustness: 1.0, support: 0, zero_support: true });
    }
    Ok(CrossEval {
        robustness: 1.0 - fooled as f64 / support as f64,
        support,
        zero_support: false,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CrossMatrix {
    pub model_names: Vec<String>,
    /// cells[row][col]: attacker = row model, target = col model.
    pub cells: Vec<Vec<CrossEval>>,
}

/// Full attacker x target robustness matrix. Each attacker's adversarial
/// bags are generated once and evaluated against every target.
pub fn cross_matrix(
    models: &[(String, &ClassifierModel)],
    eval_bags: &[Bag],
    codec: &AutoencoderModel,
    config: &AttackConfig,
) -> Result<CrossMatrix, TrainError> {
    let mut cells = Vec::with_capacity(models.len());
    for (_, attacker) in models {
        let (results, _) = crate::attack::batch_attack(attacker, codec, eval_bags, config)?;
        let mut row = Vec::with_capacity(models.len());
        for (_, target) in models {
            row.push(evaluate_target_on_successes(target, codec, eval_bags, &results)?);
        }
        cells.push(row);
    }
    Ok(CrossMatrix { model_names: models.iter().map(|(n, _)| n.clone()).collect(), cells })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::CodecHyperparams;

    fn tiny_codec(seed: u64) -> AutoencoderModel {
        let hp = CodecHyperparams {
            embed_dim: 6,
            latent_dim: 12,
            conv_channels: 8,
            kernel_width: 5,
            max_len: 64,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        AutoencoderModel::init(hp, &mut rng)
    }

    fn toy_bags(n: usize) -> Vec<Bag> {
        (0..n)
            .map(|i| Bag {
                paths: vec![
                    format!("C:\\dir{}\\app{}.exe", i % 3, i),
                    format!("C:\\data\\file{}.dat", i),
                ],
                label: if i % 2 == 0 { Label::Benign } else { Label::Malicious },
                split: if i % 5 == 4 { Split::Test } else { Split::Train },
                timestamp: i as i64,
            })
            .collect()
    }

    fn small_config(seed: u64) -> RobustTrainConfig {
        RobustTrainConfig {
            hp: ClassifierHyperparams {
                latent_dim: 12,
                heads: 2,
                hidden: 8,
                head_hidden: 16,
                ..Default::default()
            },
            epochs: 2,
            batch_size: 4,
            learning_rate: 0.3,
            seed,
        }
    }

    #[test]
    fn standard_mode_trains_and_reports() {
        let codec = tiny_codec(1);
        let bags = toy_bags(20);
        let (model, report) =
            train_robust(&bags, &codec, &TrainMode::Standard, &small_config(2)).unwrap();
        assert_eq!(report.epochs.len(), 2);
        assert_eq!(report.mode, "standard");
        assert!(report.epochs.iter().all(|e| e.attacks_invoked == 0));
        assert_eq!(model.hp.latent_dim, 12);
    }

    #[test]
    fn single_class_dataset_is_rejected() {
        let codec = tiny_codec(1);
        let mut bags = toy_bags(10);
        for b in &mut bags {
            b.label = Label::Benign;
        }
        let err = train_robust(&bags, &codec, &TrainMode::Standard, &small_config(2));
        assert!(matches!(err, Err(TrainError::Mil(MilError::SingleClass))));
    }

    #[test]
    fn update_equals_accumulated_gradient_over_batch_size() {
        // Two-example batch, standard mode: theta' must equal
        // theta - (lr/2) * (g1 + g2) exactly, with gradients taken at the
        // pre-update parameters.
        let codec = tiny_codec(3);
        let bags = toy_bags(2);
        let encoded = pre_encode_bags(&codec, &bags).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let hp = ClassifierHyperparams {
            latent_dim: 12,
            heads: 2,
            hidden: 8,
            head_hidden: 16,
            ..Default::default()
        };
        let mut model = ClassifierModel::init(hp, &mut rng);
        let before: Vec<Tensor> = model.params().into_iter().cloned().collect();

        let sizes: Vec<usize> = model.params().iter().map(|p| p.numel()).collect();
        let mut manual: Vec<Vec<f64>> = sizes.iter().map(|&n| vec![0.0; n]).collect();
        for enc in &encoded {
            example_grad(&model, &enc.latent.matrix, enc.label, &mut manual);
        }

        let lr = 0.25;
        adversarial_epoch(
            &mut model,
            &bags,
            &encoded,
            &codec,
            &TrainMode::Standard,
            lr,
            &[vec![0, 1]],
        )
        .unwrap();

        for ((after, before), g) in model.params().iter().zip(&before).zip(&manual) {
            for ((a, b), gv) in after.data().iter().zip(before.data()).zip(g) {
                assert_eq!(*a, b - (lr / 2.0) * gv, "update is not exactly (lr/|B|) * sum");
            }
        }
    }

    #[test]
    fn latent_mode_invokes_attacks_only_on_correct_examples() {
        let codec = tiny_codec(5);
        let bags = toy_bags(16);
        let attack = AttackConfig::pgd(0.1, 1.0, crate::attack::Projection::Linf);
        let mode = TrainMode::AdversarialLatent { attack: AttackConfig { max_iters: 3, ..attack } };
        let (_, report) = train_robust(&bags, &codec, &mode, &small_config(6)).unwrap();
        // The guard bounds invocations by the number of train examples seen.
        let train_n = bags.iter().filter(|b| b.split == Split::Train).count();
        for e in &report.epochs {
            assert!(e.attacks_invoked <= train_n);
        }
    }
}
