//! Autoencoder training: teacher-forced (later scheduled-sampled) decoding,
//! per-character cross-entropy on pad-masked targets, adaptive-moment updates.
//!
//! Every training string's target includes one terminator (pad byte) position
//! directly after its last character, so free-running decodes learn to stop;
//! pad positions past the first terminator are masked out of the loss.

use super::{
    argmax_byte, encode_all, encode_batch_ids, encoder_forward, gru_step, register_codec,
    AutoencoderModel, CodecError, CodecHyperparams, CodecVars, LatentVector, PAD, VOCAB_SIZE,
};
use crate::tensor::{Tensor, Trace, Var};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct CodecTrainConfig {
    #[serde(flatten)]
    pub hp: CodecHyperparams,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Fraction of the corpus held out for reconstruction accuracy.
    pub holdout_fraction: f64,
    /// Fraction of epochs trained with pure teacher forcing; after that,
    /// scheduled sampling replaces true feedback blocks at `sampling_rate`.
    pub teacher_forcing_fraction: f64,
    pub sampling_rate: f64,
    /// Holdout strings scored per epoch (full holdout scored once at the end).
    pub per_epoch_eval_cap: usize,
}

impl Default for CodecTrainConfig {
    fn default() -> Self {
        CodecTrainConfig {
            hp: CodecHyperparams::default(),
            epochs: 10,
            batch_size: 64,
            learning_rate: 1e-3,
            seed: 0,
            holdout_fraction: 0.05,
            teacher_forcing_fraction: 0.5,
            sampling_rate: 0.5,
            per_epoch_eval_cap: 300,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CodecTrainReport {
    /// Mean per-character train cross-entropy per epoch.
    pub epoch_loss: Vec<f64>,
    /// Reconstruction accuracy on (a cap of) the holdout per epoch.
    pub epoch_holdout_accuracy: Vec<f64>,
    /// Batch losses of the first epoch, for loss-decrease checks.
    pub first_epoch_batch_losses: Vec<f64>,
    pub final_holdout_accuracy: f64,
    pub holdout_size: usize,
    pub train_size: usize,
}

/// Adaptive-moment optimizer (decay 0.9/0.999, eps 1e-8) with bias correction.
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64, param_sizes: &[usize]) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: param_sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: param_sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn update(&mut self, params: Vec<&mut Tensor>, grads: &[Vec<f64>]) {
        assert_eq!(params.len(), grads.len(), "adam: {} params vs {} grads", params.len(), grads.len());
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for ((p, g), (m, v)) in params.into_iter().zip(grads).zip(self.m.iter_mut().zip(&mut self.v)) {
            for ((pv, &gv), (mv, vv)) in
                p.data_mut().iter_mut().zip(g).zip(m.iter_mut().zip(v.iter_mut()))
            {
                *mv = self.beta1 * *mv + (1.0 - self.beta1) * gv;
                *vv = self.beta2 * *vv + (1.0 - self.beta2) * gv * gv;
                let mhat = *mv / bc1;
                let vhat = *vv / bc2;
                *pv -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
    }
}

/// Decoder-side batch: targets padded to dec_steps * w with exactly one
/// terminator position inside the loss mask.
struct DecodeBatch {
    /// B * dec_steps * w target ids, sample-major.
    target_ids: Vec<usize>,
    /// Matching loss weights: 1.0 through the first terminator, 0.0 after.
    weights: Vec<f64>,
    batch: usize,
    dec_steps: usize,
}

fn dec_steps_for(len: usize, w: usize) -> usize {
    (len + 1).div_ceil(w)
}

fn decode_batch_targets(strings: &[&[u8]], w: usize) -> DecodeBatch {
    let d0 = dec_steps_for(strings[0].len(), w);
    let chars = d0 * w;
    let mut target_ids = Vec::with_capacity(strings.len() * chars);
    let mut weights = Vec::with_capacity(strings.len() * chars);
    for s in strings {
        assert_eq!(dec_steps_for(s.len(), w), d0, "decode_batch_targets: mixed step counts");
        for pos in 0..chars {
            if pos < s.len() {
                target_ids.push(s[pos] as usize);
                weights.push(1.0);
            } else {
                target_ids.push(PAD as usize);
                weights.push(if pos == s.len() { 1.0 } else { 0.0 });
            }
        }
    }
    DecodeBatch { target_ids, weights, batch: strings.len(), dec_steps: d0 }
}

/// Autoregressive decoder unroll with teacher forcing; returns the masked
/// per-character cross-entropy. When `sampling` is set, each (sample, step)
/// block independently feeds back the model's own argmax characters instead
/// of the true ones at the given rate.
fn decoder_train_forward(
    t: &mut Trace,
    vars: &CodecVars,
    hp: &CodecHyperparams,
    latents: Var,
    batch: &DecodeBatch,
    mut sampling: Option<(&mut ChaCha8Rng, f64)>,
) -> Var {
    let (l, w) = (hp.embed_dim, hp.kernel_width);
    let b = batch.batch;
    let d_steps = batch.dec_steps;
    let block = |i: usize, step: usize| -> &[usize] {
        &batch.target_ids[i * d_steps * w + step * w..i * d_steps * w + step * w + w]
    };

    let mut h = latents;
    let mut prev_ids = vec![PAD as usize; b * w];
    let mut step_logits = Vec::with_capacity(d_steps);
    for step in 0..d_steps {
        let prev_emb = t.gather_rows(vars.embedding, &prev_ids);
        let x = t.reshape(prev_emb, b, w * l);
        h = gru_step(t, &vars.dec, x, h);
        let logits_raw = t.matmul(h, vars.deconv_w);
        let logits = t.add_bias(logits_raw, vars.deconv_b);
        step_logits.push(logits);
        if step + 1 < d_steps {
            for i in 0..b {
                let use_model = match &mut sampling {
                    Some((rng, rate)) => rng.random::<f64>() < *rate,
                    None => false,
                };
                if use_model {
                    let vals = t.value(logits);
                    for j in 0..w {
                        let row = &vals[i * w * VOCAB_SIZE + j * VOCAB_SIZE
                            ..i * w * VOCAB_SIZE + (j + 1) * VOCAB_SIZE];
                        prev_ids[i * w + j] = argmax_byte(row) as usize;
                    }
                } else {
                    prev_ids[i * w..(i + 1) * w].copy_from_slice(block(i, step));
                }
            }
        }
    }
    // Rows end up step-major: (step, sample, position-in-block).
    let stacked = t.concat(&step_logits, 0);
    let rows = t.reshape(stacked, b * d_steps * w, VOCAB_SIZE);
    let mut targets = Vec::with_capacity(b * d_steps * w);
    let mut weights = Vec::with_capacity(b * d_steps * w);
    for step in 0..d_steps {
        for i in 0..b {
            for j in 0..w {
                let pos = step * w + j;
                targets.push(batch.target_ids[i * d_steps * w + pos]);
                weights.push(batch.weights[i * d_steps * w + pos]);
            }
        }
    }
    t.cross_entropy_rows(rows, &targets, &weights)
}

/// Full autoencoder loss for one equal-shape bucket of strings.
/// Returns the trace, the loss node, the loss weight mass, and the parameter
/// handles in `params()` order for gradient extraction.
fn batch_loss<'a>(
    model: &'a AutoencoderModel,
    strings: &[&[u8]],
    sampling: Option<(&mut ChaCha8Rng, f64)>,
) -> Result<(Trace<'a>, Var, f64, Vec<Var>), CodecError> {
    let mut t = Trace::new();
    let vars = register_codec(&mut t, model);
    let enc_batch = encode_batch_ids(model, strings)?;
    let latents = encoder_forward(&mut t, &vars, &model.hp, &enc_batch);
    let dec_batch = decode_batch_targets(strings, model.hp.kernel_width);
    let loss = decoder_train_forward(&mut t, &vars, &model.hp, latents, &dec_batch, sampling);
    let weight_sum: f64 = dec_batch.weights.iter().sum();
    let param_vars = vars.all();
    Ok((t, loss, weight_sum, param_vars))
}

/// Train an autoencoder on a string corpus. Deterministic given the config
/// seed; the held-out slice never contributes gradients.
pub fn train_autoencoder(
    corpus: &[Vec<u8>],
    config: &CodecTrainConfig,
) -> Result<(AutoencoderModel, CodecTrainReport), CodecError> {
    if corpus.is_empty() {
        return Err(CodecError::EmptyCorpus);
    }
    for s in corpus {
        if s.is_empty() {
            return Err(CodecError::EmptyString);
        }
        if s.len() > config.hp.max_len {
            return Err(CodecError::TooLong { len: s.len(), max: config.hp.max_len });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = AutoencoderModel::init(config.hp.clone(), &mut rng);
    let w = config.hp.kernel_width;

    let mut indices: Vec<usize> = (0..corpus.len()).collect();
    indices.shuffle(&mut rng);
    let holdout_n = ((corpus.len() as f64 * config.holdout_fraction) as usize).min(corpus.len() - 1);
    let holdout: Vec<usize> = indices[..holdout_n].to_vec();
    let train: Vec<usize> = indices[holdout_n..].to_vec();

    // Bucket once by (encoder steps, decoder steps); batches never mix shapes.
    let mut buckets: Vec<((usize, usize), Vec<usize>)> = Vec::new();
    for &i in &train {
        let len = corpus[i].len();
        let key = (model.padded_len(len) / w, dec_steps_for(len, w));
        match buckets.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(i),
            None => buckets.push((key, vec![i])),
        }
    }
    buckets.sort_by_key(|(k, _)| *k);

    let sizes: Vec<usize> = model.params().iter().map(|p| p.numel()).collect();
    let mut adam = Adam::new(config.learning_rate, &sizes);

    let tf_epochs = (config.epochs as f64 * config.teacher_forcing_fraction).ceil() as usize;
    let mut report = CodecTrainReport {
        epoch_loss: Vec::new(),
        epoch_holdout_accuracy: Vec::new(),
        first_epoch_batch_losses: Vec::new(),
        final_holdout_accuracy: 0.0,
        holdout_size: holdout.len(),
        train_size: train.len(),
    };
    let eval_slice: Vec<usize> = if holdout.is_empty() { train.clone() } else { holdout.clone() };

    for epoch in 0..config.epochs {
        let mut batches: Vec<Vec<usize>> = Vec::new();
        for (_, members) in buckets.iter_mut() {
            members.shuffle(&mut rng);
            for chunk in members.chunks(config.batch_size) {
                batches.push(chunk.to_vec());
            }
        }
        batches.shuffle(&mut rng);

        let sample = epoch >= tf_epochs;
        let mut loss_weighted = 0.0;
        let mut weight_total = 0.0;
        for batch_idx in batches {
            let strings: Vec<&[u8]> = batch_idx.iter().map(|&i| corpus[i].as_slice()).collect();
            let sampling = if sample { Some((&mut rng, config.sampling_rate)) } else { None };
            let (mut t, loss, wsum, param_vars) = batch_loss(&model, &strings, sampling)?;
            let loss_val = t.scalar(loss);
            t.backward(loss);
            let grads: Vec<Vec<f64>> = model
                .params()
                .iter()
                .zip(&param_vars)
                .map(|(p, &v)| t.grad(v).map(|g| g.to_vec()).unwrap_or_else(|| vec![0.0; p.numel()]))
                .collect();
            adam.update(model.params_mut(), &grads);
            loss_weighted += loss_val * wsum;
            weight_total += wsum;
            if epoch == 0 {
                report.first_epoch_batch_losses.push(loss_val);
            }
        }
        report.epoch_loss.push(loss_weighted / weight_total.max(1.0));

        let cap = config.per_epoch_eval_cap.min(eval_slice.len());
        let eval: Vec<Vec<u8>> = eval_slice[..cap].iter().map(|&i| corpus[i].clone()).collect();
        report.epoch_holdout_accuracy.push(reconstruction_accuracy(&model, &eval));
    }

    let full_eval: Vec<Vec<u8>> = eval_slice.iter().map(|&i| corpus[i].clone()).collect();
    report.final_holdout_accuracy = reconstruction_accuracy(&model, &full_eval);
    Ok((model, report))
}


/// Teacher-forced batch loss and the gradients of every parameter, in
/// `params()` order. Strings must share one (encoder, decoder) step shape.
/// Serves as the analytic side of finite-difference checks.
pub fn loss_and_param_grads(
    model: &AutoencoderModel,
    strings: &[&[u8]],
) -> Result<(f64, Vec<Vec<f64>>), CodecError> {
    let (mut t, loss, _wsum, param_vars) = batch_loss(model, strings, None)?;
    let loss_val = t.scalar(loss);
    t.backward(loss);
    let grads = model
        .params()
        .iter()
        .zip(&param_vars)
        .map(|(p, &v)| t.grad(v).map(|g| g.to_vec()).unwrap_or_else(|| vec![0.0; p.numel()]))
        .collect();
    Ok((loss_val, grads))
}

/// Mean per-string fraction of positions that survive a round trip:
/// characters compared at aligned positions, length mismatch counted wrong,
/// denominator max(len(original), len(decoded)).
pub fn reconstruction_accuracy(model: &AutoencoderModel, corpus: &[Vec<u8>]) -> f64 {
    assert!(!corpus.is_empty(), "reconstruction_accuracy: empty corpus");
    let refs: Vec<&[u8]> = corpus.iter().map(|s| s.as_slice()).collect();
    let latents = encode_all(model, &refs).expect("corpus strings satisfy encode preconditions");
    let mut total = 0.0;
    for (s, z) in refs.iter().zip(&latents) {
        let decoded = decode_for_eval(model, z, s.len());
        total += char_accuracy(s, &decoded);
    }
    total / corpus.len() as f64
}

pub(crate) fn decode_for_eval(model: &AutoencoderModel, z: &LatentVector, orig_len: usize) -> Vec<u8> {
    let cap = 2 * model.padded_len(orig_len);
    super::decode(model, z, cap).expect("finite latent")
}

pub(crate) fn char_accuracy(original: &[u8], decoded: &[u8]) -> f64 {
    let denom = original.len().max(decoded.len());
    if denom == 0 {
        return 1.0;
    }
    let correct = original.iter().zip(decoded).filter(|(a, b)| a == b).count();
    correct as f64 / denom as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn char_accuracy_counts_aligned_positions() {
        assert_eq!(char_accuracy(b"abcd", b"abcd"), 1.0);
        assert_eq!(char_accuracy(b"abcd", b"abce"), 0.75);
        assert_eq!(char_accuracy(b"abcd", b"wxyz"), 0.0);
        // Overhang counts as wrong in the denominator.
        assert_eq!(char_accuracy(b"ab", b"abxx"), 0.5);
        assert_eq!(char_accuracy(b"abcd", b"ab"), 0.5);
    }

    #[test]
    fn decoder_targets_always_contain_one_terminator() {
        // Exact multiple of w still gets a terminator slot in the next block.
        let b = decode_batch_targets(&[&[b'a'; 10]], 5);
        assert_eq!(b.dec_steps, 3);
        assert_eq!(b.weights.iter().filter(|&&w| w == 1.0).count(), 11);
        assert_eq!(b.target_ids[10], PAD as usize);
        // Non-multiple: terminator inside the last block, rest masked.
        let b2 = decode_batch_targets(&[b"abcdefg"], 5);
        assert_eq!(b2.dec_steps, 2);
        assert_eq!(b2.target_ids[7], PAD as usize);
        assert_eq!(&b2.weights[7..10], &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn training_rejects_empty_corpus_and_bad_strings() {
        let config = CodecTrainConfig { epochs: 1, ..Default::default() };
        assert!(matches!(train_autoencoder(&[], &config), Err(CodecError::EmptyCorpus)));
        let bad = vec![b"ok".to_vec(), vec![]];
        assert!(matches!(train_autoencoder(&bad, &config), Err(CodecError::EmptyString)));
    }

    #[test]
    fn single_string_memorization() {
        // One string, enough epochs: the model must reproduce it exactly,
        // including stopping at the right length.
        let s = b"C:\\WINDOWS\\Temp\\GUM896.tmp".to_vec();
        let config = CodecTrainConfig {
            hp: CodecHyperparams {
                embed_dim: 12,
                latent_dim: 32,
                conv_channels: 24,
                kernel_width: 5,
                max_len: 64,
            },
            epochs: 200,
            batch_size: 1,
            learning_rate: 3e-3,
            seed: 9,
            holdout_fraction: 0.0,
            teacher_forcing_fraction: 0.5,
            sampling_rate: 0.5,
            per_epoch_eval_cap: 1,
        };
        let (model, report) = train_autoencoder(std::slice::from_ref(&s), &config).unwrap();
        let z = super::super::encode(&model, &s).unwrap();
        let decoded = decode_for_eval(&model, &z, s.len());
        assert_eq!(decoded, s, "expected exact reconstruction, got {:?}", String::from_utf8_lossy(&decoded));
        assert_eq!(report.final_holdout_accuracy, 1.0);
    }

    #[test]
    fn loss_decreases_over_first_epoch() {
        let corpus: Vec<Vec<u8>> = (0..96)
            .map(|i| format!("C:\\dir{:02}\\file{:03}.txt", i % 7, i).into_bytes())
            .collect();
        let config = CodecTrainConfig {
            hp: CodecHyperparams {
                embed_dim: 8,
                latent_dim: 16,
                conv_channels: 12,
                kernel_width: 5,
                max_len: 64,
            },
            epochs: 2,
            batch_size: 16,
            learning_rate: 2e-3,
            seed: 3,
            holdout_fraction: 0.1,
            ..Default::default()
        };
        let (_, report) = train_autoencoder(&corpus, &config).unwrap();
        let first = report.first_epoch_batch_losses.first().unwrap();
        let last = report.first_epoch_batch_losses.last().unwrap();
        assert!(last < first, "first-epoch loss did not decrease: {first} -> {last}");
        assert!(report.epoch_loss[1] < report.epoch_loss[0]);
    }
}
